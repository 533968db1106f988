"""Word-vector tables and deterministic hash embeddings for concept labels.

Real deployments load a trained word-vector file; tests and offline runs use
``HashEmbedding``, which maps any token to a unit vector derived from a
SHA-256 digest so that identical tokens always land on identical vectors
without any external data.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import DimensionMismatch


def tokenize(label: str) -> list[str]:
    """Lowercased whitespace tokens."""
    return label.lower().split()


class VectorTable:
    """In-memory token -> vector store with a fixed dimension."""

    def __init__(self, dimension: int):
        if dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {dimension}")
        self.dimension = dimension
        self._vectors: dict[str, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self._vectors)

    def __contains__(self, token: str) -> bool:
        return token in self._vectors

    def add(self, token: str, vector) -> None:
        arr = np.asarray(vector, dtype=float)
        if arr.shape != (self.dimension,):
            raise DimensionMismatch(
                f"vector for {token!r} has shape {arr.shape}, expected ({self.dimension},)"
            )
        self._vectors[token] = arr

    def lookup(self, token: str) -> np.ndarray | None:
        return self._vectors.get(token.lower())


def load_word_vectors(text: str) -> VectorTable:
    """Parse a word-vector file: one ``token v1 v2 ... vd`` per line.

    Blank lines are skipped.  The first data line fixes the dimension;
    any later line with a different width raises DimensionMismatch.
    """
    table: VectorTable | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 2:
            raise DimensionMismatch(f"line {lineno}: no vector components")
        token, comps = parts[0], parts[1:]
        try:
            values = [float(c) for c in comps]
        except ValueError as exc:
            raise DimensionMismatch(f"line {lineno}: non-numeric component") from exc
        if table is None:
            table = VectorTable(len(values))
        elif len(values) != table.dimension:
            raise DimensionMismatch(
                f"line {lineno}: got {len(values)} components, expected {table.dimension}"
            )
        table.add(token.lower(), values)
    if table is None:
        table = VectorTable(1)
    return table


class HashEmbedding:
    """Deterministic pseudo-embedding: token -> unit vector via SHA-256.

    Every token is in-vocabulary.  The digest seeds a Gaussian draw so the
    vectors are spread roughly uniformly over the sphere, which makes cosine
    similarities between unrelated tokens cluster near zero at moderate
    dimensions.
    """

    def __init__(self, dimension: int = 16, seed: int = 0):
        if dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {dimension}")
        self.dimension = dimension
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def lookup(self, token: str) -> np.ndarray:
        token = token.lower()
        cached = self._cache.get(token)
        if cached is not None:
            return cached
        digest = hashlib.sha256(f"{self.seed}\0{token}".encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
        vec = rng.standard_normal(self.dimension)
        norm = np.linalg.norm(vec)
        if norm == 0.0:  # pragma: no cover - probability zero draw
            vec = np.zeros(self.dimension)
            vec[0] = 1.0
        else:
            vec = vec / norm
        self._cache[token] = vec
        return vec


def label_vector(label: str, table) -> np.ndarray | None:
    """Mean of the token vectors of ``label``; None when every token is OOV."""
    found = []
    for token in tokenize(label):
        vec = table.lookup(token)
        if vec is not None:
            found.append(vec)
    if not found:
        return None
    return np.mean(found, axis=0)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; 0.0 when either vector has zero norm."""
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))
