"""Completion backends: a chat-completions HTTP client and deterministic mocks.

A backend turns a prompt bundle into raw model text plus token usage.  The
remote implementation posts a chat-completions-style JSON body and reads the
first choice.  The mock implementations score each input item as a pure
function of (metric, canonical item bytes, rule), so entire pipeline runs are
reproducible byte-for-byte; they answer in the same score envelope the prompt
demands, which keeps the parsing path identical for real and mock runs.

Mock rules:

* ``uniform-7``        every unit scores 7.
* ``hash-spread``      1 + (first 8 bytes of SHA-256(metric || item)) mod 10.
* ``lexical-overlap``  token-overlap heuristics, hand-computable; see
                       ``_lexical_overlap_score``.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass
from enum import Enum

import requests

from .errors import AuthMissing, HttpStatus, Timeout, Transport
from .metrics import PromptBundle

DEFAULT_API_KEY_ENV = "LITE_API_KEY"


def estimate_tokens(text: str) -> int:
    """Crude size proxy: one token per 4 UTF-8 bytes, rounded up.  Used when
    the endpoint reports no usage, and by the mocks."""
    return math.ceil(len(text.encode("utf-8")) / 4)


class UsageSource(Enum):
    REPORTED = "reported"
    ESTIMATED = "estimated"


@dataclass(frozen=True)
class TokenUsage:
    input_tokens: int
    output_tokens: int
    source: UsageSource

    def __post_init__(self):
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be non-negative")


@dataclass(frozen=True)
class BackendConfig:
    endpoint_url: str = ""
    model_name: str = ""
    temperature: float = 0.1
    api_key_env: str = DEFAULT_API_KEY_ENV
    max_retries: int = 3
    parallelism: int = 1
    timeout_ms: int = 60_000
    backend: str = "mock:uniform-7"  # "remote" or "mock:<rule>"

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


def _estimated_usage(prompt: PromptBundle, output_text: str) -> TokenUsage:
    return TokenUsage(
        input_tokens=estimate_tokens(prompt.system_text)
        + estimate_tokens(prompt.user_text),
        output_tokens=estimate_tokens(output_text),
        source=UsageSource.ESTIMATED,
    )


class HttpBackend:
    """POSTs {model, temperature, messages} and extracts the first choice."""

    def complete(self, prompt: PromptBundle, cfg: BackendConfig) -> tuple[str, TokenUsage]:
        key = os.environ.get(cfg.api_key_env, "")
        if not key:
            raise AuthMissing(f"environment variable {cfg.api_key_env} is not set")
        body = {
            "model": cfg.model_name,
            "temperature": cfg.temperature,
            "messages": [
                {"role": "system", "content": prompt.system_text},
                {"role": "user", "content": prompt.user_text},
            ],
        }
        try:
            resp = requests.post(
                cfg.endpoint_url,
                json=body,
                headers={"Authorization": f"Bearer {key}"},
                timeout=cfg.timeout_ms / 1000.0,
            )
        except requests.Timeout as exc:
            raise Timeout(f"no response within {cfg.timeout_ms} ms") from exc
        except requests.RequestException as exc:
            raise Transport(str(exc)) from exc
        if resp.status_code != 200:
            raise HttpStatus(resp.status_code, resp.text[:200])
        try:
            data = resp.json()
            text = data["choices"][0]["message"]["content"]
        except (ValueError, LookupError, TypeError) as exc:
            raise Transport(f"unexpected response shape: {exc}") from exc
        usage = data.get("usage") or {}
        if "prompt_tokens" in usage and "completion_tokens" in usage:
            return text, TokenUsage(
                input_tokens=int(usage["prompt_tokens"]),
                output_tokens=int(usage["completion_tokens"]),
                source=UsageSource.REPORTED,
            )
        return text, _estimated_usage(prompt, text)


# ---------------------------------------------------------------------------
# deterministic mocks
# ---------------------------------------------------------------------------


def _canonical_item(item: dict) -> str:
    return json.dumps(item, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def _tokens(label: str) -> list[str]:
    return label.lower().split()


def _share_token(a: str, b: str) -> bool:
    return bool(set(_tokens(a)) & set(_tokens(b)))


def _hash_spread_score(metric: str, item: dict) -> int:
    payload = f"{metric}\0{_canonical_item(item)}".encode("utf-8")
    digest = hashlib.sha256(payload).digest()
    return 1 + int.from_bytes(digest[:8], "big") % 10


def _lexical_overlap_score(metric: str, item: dict) -> tuple[int, str]:
    """Hand-computable token-overlap rule.

    Relation: 9 when the labels share a token *and* the child label is the
    longer one (narrower terms tend to extend their hypernym's name); 4 for a
    plain shared token; 2 otherwise.  HRE: 2 plus 7 times the fraction of
    children meeting the 9-condition, rounded.  HRI: 9 when no two children
    share a token, else 3.  Concept: 8 for multiword labels, 5 otherwise.
    """
    if metric == "SCA":
        n = len(set(_tokens(item["concept"])))
        return (8, "multiword label") if n >= 2 else (5, "single token")
    if metric == "HRR":
        parent, child = item["parent"], item["child"]
        if _share_token(parent, child):
            if len(_tokens(child)) > len(_tokens(parent)):
                return 9, "child extends parent wording"
            return 4, "shared token, no extension"
        return 2, "no shared token"
    if metric == "HRE":
        parent = item["parent"]
        children = item["children"]
        hits = sum(
            1
            for c in children
            if _share_token(parent, c) and len(_tokens(c)) > len(_tokens(parent))
        )
        frac = hits / len(children) if children else 0.0
        return 2 + int(math.floor(7 * frac + 0.5)), f"{hits}/{len(children)} extend parent"
    if metric == "HRI":
        children = item["children"]
        for i in range(len(children)):
            for j in range(i + 1, len(children)):
                if _share_token(children[i], children[j]):
                    return 3, "siblings share a token"
        return 9, "no sibling overlap"
    raise ValueError(f"unknown metric {metric!r}")


class MockBackend:
    """Scores the INPUT block of the prompt with a fixed rule; pure and
    reentrant, so runs are reproducible and parallelizable."""

    RULES = ("uniform-7", "hash-spread", "lexical-overlap")

    def __init__(self, rule: str):
        if rule not in self.RULES:
            raise ValueError(f"unknown mock rule {rule!r}; pick from {self.RULES}")
        self.rule = rule

    def _score(self, metric: str, item: dict) -> tuple[int, str]:
        if self.rule == "uniform-7":
            return 7, "fixed rule"
        if self.rule == "hash-spread":
            return _hash_spread_score(metric, item), "hashed"
        return _lexical_overlap_score(metric, item)

    def complete(self, prompt: PromptBundle, cfg: BackendConfig) -> tuple[str, TokenUsage]:
        del cfg
        try:
            payload = prompt.user_text.rsplit("INPUT:\n", 1)[1]
            doc = json.loads(payload)
            metric = doc["metric"]
            items = doc["items"]
        except (IndexError, ValueError, KeyError) as exc:
            raise Transport(f"mock could not locate the input block: {exc}") from exc
        scores = []
        for item in items:
            score, reason = self._score(metric, item)
            scores.append({"id": item["id"], "score": score, "reason": reason})
        text = json.dumps(
            {"scores": scores}, sort_keys=True, ensure_ascii=False, separators=(",", ":")
        )
        return text, _estimated_usage(prompt, text)


class ScriptedBackend:
    """Replays a fixed list of responses (last one repeats); for exercising
    retry and failure paths in tests."""

    def __init__(self, texts: list[str]):
        if not texts:
            raise ValueError("need at least one scripted response")
        self.texts = list(texts)
        self.calls = 0

    def complete(self, prompt: PromptBundle, cfg: BackendConfig) -> tuple[str, TokenUsage]:
        text = self.texts[min(self.calls, len(self.texts) - 1)]
        self.calls += 1
        return text, _estimated_usage(prompt, text)


def make_backend(spec: str):
    """Backend from a config string: ``remote`` or ``mock:<rule>``."""
    spec = spec.strip()
    if spec == "remote":
        return HttpBackend()
    if spec.startswith("mock:"):
        return MockBackend(spec[len("mock:"):])
    raise ValueError(f"unknown backend spec {spec!r}")
