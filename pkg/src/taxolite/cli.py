"""Command-line pipeline driver.

Five subcommands cover the full workflow:

    taxolite stats      structural statistics of a taxonomy file
    taxolite eval       windowed LLM-judge evaluation -> run report JSON
    taxolite baseline   traditional detectors -> score JSON
    taxolite transform  rand / reverse / short variant construction
    taxolite correlate  run report vs human annotations -> correlations

Evaluation settings resolve with precedence: command-line flag, then
``LITE_<NAME>`` environment variable, then ``--config`` file (TOML or JSON),
then the built-in default.  Every run report echoes the fully resolved
configuration so results are reproducible from the artifact alone.

Exit codes: 0 success; 2 bad input or configuration; 3 evaluation produced
no usable scores; 4 backend transport failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .analysis import HumanAnnotationSet, correlate, render_report
from .backends import BackendConfig
from .detectors import (
    DETECTOR_NAMES,
    DetectorContext,
    LexiconKind,
    load_lexicon,
    normalize_detector_name,
    run_detector,
)
from .embeddings import HashEmbedding, load_word_vectors
from .errors import AuthMissing, BackendError, MalformedInput, TaxoliteError
from .metrics import MetricKind, PromptMode
from .scoring import PenaltyParams, run_evaluation
from .taxonomy import (
    TaxonomyFormat,
    TransformKind,
    TransformSpec,
    compute_stats,
    parse_taxonomy,
    serialize,
    transform,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NO_SCORES = 3
EXIT_TRANSPORT = 4

ENV_PREFIX = "LITE_"


# ------------------------------------------------------------------- helpers


def _canon(obj) -> bytes:
    text = json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return (text + "\n").encode("utf-8")


def _emit(payload: bytes, out: str | None) -> None:
    if out:
        Path(out).write_bytes(payload)
    else:
        sys.stdout.write(payload.decode("utf-8"))


def _detect_format(text: str) -> TaxonomyFormat:
    """Nested documents parse as one JSON value; edge lists are JSONL whose
    header object carries a "labels" key."""
    try:
        doc = json.loads(text)
    except ValueError:
        return TaxonomyFormat.EDGE_LIST
    if isinstance(doc, dict) and "labels" in doc:
        return TaxonomyFormat.EDGE_LIST
    return TaxonomyFormat.NESTED_JSON


_FORMATS = {"nested": TaxonomyFormat.NESTED_JSON, "edges": TaxonomyFormat.EDGE_LIST}


def _load_taxonomy(path: str, format_flag: str):
    text = Path(path).read_text("utf-8")
    fmt = _FORMATS.get(format_flag) or _detect_format(text)
    return parse_taxonomy(text, fmt), fmt


def parse_k(value) -> float | None:
    """Window ratio: a positive rational ("1", "0.5", "1/2") or "none"."""
    if value is None or isinstance(value, (int, float)):
        k = 1.0 if value is None else float(value)
    else:
        s = str(value).strip().lower()
        if s == "none":
            return None
        try:
            k = float(Fraction(s))
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"cannot parse k value {value!r}") from exc
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    return k


# ------------------------------------------------------------ eval settings


def _as_csv(value) -> str:
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    return str(value)


# (setting name, converter for env/file values, built-in default)
_EVAL_SETTINGS = [
    ("backend", str, "mock:uniform-7"),
    ("endpoint_url", str, ""),
    ("model_name", str, ""),
    ("temperature", float, 0.1),
    ("api_key_env", str, "LITE_API_KEY"),
    ("max_retries", int, 3),
    ("parallelism", int, 1),
    ("timeout_ms", int, 60000),
    ("metrics", _as_csv, "sca,hrr,hre,hri"),
    ("k", str, "1"),
    ("mode", str, "full"),
    ("rounds", int, 1),
    ("variants", int, 1),
    ("seed", int, 0),
    ("lambda", float, 0.5),
    ("mu", float, 0.5),
]


def _load_config_file(path: str) -> dict:
    raw = Path(path).read_text("utf-8")
    if path.endswith(".toml"):
        try:
            doc = tomllib.loads(raw)
        except tomllib.TOMLDecodeError as exc:
            raise MalformedInput(f"config {path}: {exc}") from exc
    else:
        try:
            doc = json.loads(raw)
        except ValueError as exc:
            raise MalformedInput(f"config {path}: not valid JSON") from exc
    if not isinstance(doc, dict):
        raise MalformedInput(f"config {path}: expected a table/object at top level")
    known = {name for name, _, _ in _EVAL_SETTINGS}
    unknown = set(doc) - known
    if unknown:
        raise MalformedInput(f"config {path}: unknown keys {sorted(unknown)}")
    return doc


def resolve_settings(args) -> dict:
    """Merge flags > environment > config file > defaults for eval."""
    file_cfg = _load_config_file(args.config) if args.config else {}
    resolved = {}
    for name, conv, default in _EVAL_SETTINGS:
        attr = "lambda_" if name == "lambda" else name
        flag = getattr(args, attr, None)
        env = os.environ.get(ENV_PREFIX + name.upper())
        try:
            if flag is not None:
                resolved[name] = flag
            elif env is not None:
                resolved[name] = conv(env)
            elif name in file_cfg:
                resolved[name] = conv(file_cfg[name])
            else:
                resolved[name] = default
        except (TypeError, ValueError) as exc:
            raise MalformedInput(f"bad value for setting {name!r}: {exc}") from exc
    return resolved


# ----------------------------------------------------------------- commands


def cmd_stats(args) -> int:
    t, _fmt = _load_taxonomy(args.taxonomy, args.format)
    _emit(_canon(compute_stats(t).to_dict()), None)
    return EXIT_OK


def cmd_eval(args) -> int:
    settings = resolve_settings(args)
    t, _fmt = _load_taxonomy(args.taxonomy, args.format)
    metric_names = [s for s in settings["metrics"].split(",") if s.strip()]
    if not metric_names:
        raise MalformedInput("no metrics requested")
    metrics = [MetricKind.from_string(s) for s in metric_names]
    k = parse_k(settings["k"])
    mode = PromptMode.from_string(settings["mode"])
    cfg = BackendConfig(
        endpoint_url=settings["endpoint_url"],
        model_name=settings["model_name"],
        temperature=settings["temperature"],
        api_key_env=settings["api_key_env"],
        max_retries=settings["max_retries"],
        parallelism=settings["parallelism"],
        timeout_ms=settings["timeout_ms"],
        backend=settings["backend"],
    )
    penalty = PenaltyParams(lambda_=settings["lambda"], mu=settings["mu"])
    report = run_evaluation(
        t,
        metrics,
        k=k,
        mode=mode,
        cfg=cfg,
        penalty=penalty,
        variants=settings["variants"],
        rounds=settings["rounds"],
        seed=settings["seed"],
    )
    _emit(report.to_canonical_json(), args.out)
    return EXIT_NO_SCORES if report.overall_success_rate == 0 else EXIT_OK


def cmd_baseline(args) -> int:
    t, _fmt = _load_taxonomy(args.taxonomy, args.format)
    if args.detectors.strip().lower() == "all":
        names = list(DETECTOR_NAMES)
    else:
        names = [normalize_detector_name(s) for s in args.detectors.split(",")]

    fuzzy = None
    if args.fuzzy_lexicon:
        fuzzy = load_lexicon(
            Path(args.fuzzy_lexicon).read_text("utf-8"), LexiconKind.FUZZY_WORDS
        )
    ontology = None
    if args.ontology:
        ontology = load_lexicon(
            Path(args.ontology).read_text("utf-8"), LexiconKind.DOMAIN_ONTOLOGY
        )
    if args.vectors:
        emb = load_word_vectors(Path(args.vectors).read_text("utf-8"))
    else:
        emb = HashEmbedding(dimension=16, seed=args.seed)
    baseline_freqs = None
    if args.baseline_freqs:
        try:
            baseline_freqs = json.loads(args.baseline_freqs)
        except ValueError as exc:
            raise MalformedInput("--baseline-freqs is not valid JSON") from exc
        if not isinstance(baseline_freqs, dict) or not all(
            isinstance(v, (int, float)) for v in baseline_freqs.values()
        ):
            raise MalformedInput("--baseline-freqs must map relation -> number")

    ctx = DetectorContext(
        fuzzy=fuzzy,
        ontology=ontology,
        emb=emb,
        threshold=args.threshold,
        baseline_freqs=baseline_freqs,
        seed=args.seed,
    )
    results = {}
    for name in names:
        try:
            results[name] = run_detector(name, t, ctx).to_dict()
        except (TaxoliteError, ValueError) as exc:
            results[name] = {"error": f"{type(exc).__name__}: {exc}"}
    _emit(_canon({"results": results}), args.out)
    return EXIT_OK


def cmd_transform(args) -> int:
    t, fmt = _load_taxonomy(args.taxonomy, args.format)
    spec = TransformSpec(kind=TransformKind(args.op), seed=args.seed)
    result = transform(t, spec)
    # reversal can leave Dag-mode structures that the nested format cannot hold
    out_fmt = TaxonomyFormat.EDGE_LIST if args.op == "reverse" else fmt
    _emit(serialize(result, out_fmt), args.out)
    return EXIT_OK


def cmd_correlate(args) -> int:
    try:
        run_doc = json.loads(Path(args.run).read_text("utf-8"))
    except ValueError as exc:
        raise MalformedInput(f"run report {args.run}: not valid JSON") from exc
    if not isinstance(run_doc, dict) or "per_metric" not in run_doc:
        raise MalformedInput(f"run report {args.run}: missing per_metric")
    human = HumanAnnotationSet.from_jsonl(Path(args.human).read_text("utf-8"))
    corr = correlate(run_doc, human)
    if args.render == "markdown":
        payload = render_report(run_doc, corr, format="markdown")
    else:
        payload = _canon(corr.to_dict())
    _emit(payload, args.out)
    return EXIT_OK


# ------------------------------------------------------------------- parser


def _add_format_flag(sp) -> None:
    sp.add_argument(
        "--format",
        choices=["auto", "nested", "edges"],
        default="auto",
        help="taxonomy file format (default: auto-detect)",
    )


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="taxolite",
        description="Taxonomy quality evaluation: windowed LLM judging, "
        "traditional detectors, transforms, and human-agreement statistics.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("stats", help="print structural statistics as JSON")
    sp.add_argument("taxonomy", help="taxonomy file (nested JSON or edge list)")
    _add_format_flag(sp)
    sp.set_defaults(func=cmd_stats)

    ep = sub.add_parser("eval", help="run the windowed judge evaluation")
    ep.add_argument("--taxonomy", required=True, help="taxonomy file to evaluate")
    _add_format_flag(ep)
    ep.add_argument("--config", help="TOML or JSON file with eval settings")
    ep.add_argument("--metrics", help="comma list from: sca,hrr,hre,hri (default all)")
    ep.add_argument(
        "--k",
        help='window ratio: positive rational ("1", "0.5", "1/2") or "none" '
        "for atomic per-unit mode",
    )
    ep.add_argument(
        "--mode",
        help="prompt composition: full | llm-only | no-icl | zero-shot",
    )
    ep.add_argument(
        "--backend",
        help='"remote" for the HTTP backend or "mock:RULE" '
        "(uniform-7, hash-spread, lexical-overlap)",
    )
    ep.add_argument("--rounds", type=int, help="scoring rounds per variant")
    ep.add_argument("--variants", type=int, help="sibling-permutation variants")
    ep.add_argument("--seed", type=int, help="seed for variant permutations")
    ep.add_argument(
        "--lambda",
        dest="lambda_",
        type=float,
        help="oversize penalty coefficient (default 0.5)",
    )
    ep.add_argument("--mu", type=float, help="undersize penalty coefficient (default 0.5)")
    ep.add_argument("--endpoint-url", help="chat-completions endpoint for remote")
    ep.add_argument("--model-name", help="model identifier sent to the endpoint")
    ep.add_argument("--temperature", type=float, help="sampling temperature (default 0.1)")
    ep.add_argument(
        "--api-key-env",
        help="environment variable holding the API key (default LITE_API_KEY)",
    )
    ep.add_argument("--max-retries", type=int, help="retries per failed call")
    ep.add_argument("--parallelism", type=int, help="concurrent backend calls")
    ep.add_argument("--timeout-ms", type=int, help="per-call timeout")
    ep.add_argument("--out", help="report path (stdout when omitted)")
    ep.set_defaults(func=cmd_eval)

    bp = sub.add_parser("baseline", help="run traditional structure detectors")
    bp.add_argument("--taxonomy", required=True, help="taxonomy file to score")
    _add_format_flag(bp)
    bp.add_argument(
        "--detectors",
        default="all",
        help='comma list of detector names, or "all": ' + ", ".join(DETECTOR_NAMES),
    )
    bp.add_argument("--fuzzy-lexicon", help="hedge-word file (default: packaged list)")
    bp.add_argument("--ontology", help="domain term file for detect-semantic")
    bp.add_argument("--vectors", help="word-vector file (default: hash embedding)")
    bp.add_argument(
        "--threshold",
        type=float,
        default=0.7,
        help="cosine threshold for detect-semantic (default 0.7)",
    )
    bp.add_argument(
        "--baseline-freqs",
        help="JSON object relation->weight for detect-anomaly (default: uniform)",
    )
    bp.add_argument("--seed", type=int, default=0, help="seed for detect-modular")
    bp.add_argument("--out", help="result path (stdout when omitted)")
    bp.set_defaults(func=cmd_baseline)

    tp = sub.add_parser("transform", help="build rand/reverse/short variants")
    tp.add_argument("--taxonomy", required=True, help="taxonomy file to transform")
    _add_format_flag(tp)
    tp.add_argument(
        "--op", required=True, choices=["rand", "reverse", "short"], help="variant kind"
    )
    tp.add_argument("--seed", type=int, default=0, help="seed for --op rand")
    tp.add_argument("--out", help="output path (stdout when omitted)")
    tp.set_defaults(func=cmd_transform)

    cp = sub.add_parser("correlate", help="compare a run report with human scores")
    cp.add_argument("--run", required=True, help="run report JSON from eval")
    cp.add_argument("--human", required=True, help="annotations JSONL "
                    '({"unit_id","annotator","score"} per line)')
    cp.add_argument(
        "--render",
        choices=["json", "markdown"],
        default="json",
        help="output format (default json)",
    )
    cp.add_argument("--out", help="output path (stdout when omitted)")
    cp.set_defaults(func=cmd_correlate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AuthMissing as exc:
        print(f"taxolite: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BackendError as exc:
        print(f"taxolite: backend failure: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (TaxoliteError, ValueError, OSError) as exc:
        print(f"taxolite: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
