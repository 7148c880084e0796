"""Embedding storage (texts and topic definitions) with exact cosine top-k."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .corpus import SchemaError


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine undefined for zero vector")
    return float(np.dot(u, v) / (nu * nv))


@dataclass(frozen=True)
class TopicMatch:
    key: str
    similarity: float


class EmbeddingStore:
    """Immutable keyed vector store; brute-force retrieval over unit vectors.

    Keys keep insertion order, which doubles as the tie-break order for
    equal similarities.
    """

    def __init__(self, keys, vectors):
        self.keys = list(keys)
        matrix = np.asarray(vectors, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != len(self.keys):
            raise ValueError("vectors must be one row per key")
        if len(set(self.keys)) != len(self.keys):
            raise ValueError("duplicate keys in store")
        norms = np.linalg.norm(matrix, axis=1)
        if np.any(norms == 0.0):
            bad = self.keys[int(np.argmin(norms))]
            raise SchemaError(f"zero vector for key {bad!r}")
        self.dim = matrix.shape[1]
        self._vectors = matrix
        self._units = matrix / norms[:, None]
        self._index = {k: i for i, k in enumerate(self.keys)}

    def __len__(self):
        return len(self.keys)

    def __contains__(self, key):
        return key in self._index

    def vector(self, key):
        return self._vectors[self._index[key]].copy()

    def top_k(self, query, k: int):
        """min(k, size) matches, descending similarity; ties break by
        ascending store index."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if len(self.keys) == 0:
            raise ValueError("empty store")
        query = np.asarray(query, dtype=np.float64)
        if query.shape != (self.dim,):
            raise ValueError(f"query dim {query.shape} vs store dim {self.dim}")
        norm = np.linalg.norm(query)
        if norm == 0.0:
            raise ValueError("cosine undefined for zero query")
        sims = self._units @ (query / norm)
        k = min(k, len(self.keys))
        # stable sort on ascending index after descending similarity
        order = np.lexsort((np.arange(len(sims)), -sims))[:k]
        return [TopicMatch(self.keys[i], float(sims[i])) for i in order]


def top_k(query, store: EmbeddingStore, k: int):
    return store.top_k(query, k)


def load_store(path) -> EmbeddingStore:
    """Read an embeddings JSONL file: one {"dim": d} header line, then one
    {"key", "vector"} record per line."""
    keys, vectors = [], []
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path} line {lineno}: "
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{where}invalid JSON ({exc.msg})") from None
            if dim is None:
                if not isinstance(obj, dict) or "dim" not in obj:
                    raise SchemaError(f"{where}first line must declare dim")
                dim = int(obj["dim"])
                if dim < 1:
                    raise SchemaError(f"{where}dim must be >= 1")
                continue
            if "key" not in obj or "vector" not in obj:
                raise SchemaError(f"{where}missing key or vector")
            vec = obj["vector"]
            if not isinstance(vec, list) or len(vec) != dim:
                raise SchemaError(
                    f"{where}vector length {len(vec) if isinstance(vec, list) else '?'}"
                    f", want {dim}"
                )
            keys.append(str(obj["key"]))
            vectors.append([float(v) for v in vec])
    if dim is None:
        raise SchemaError(f"{path}: empty embeddings file, missing dim header")
    return EmbeddingStore(keys, np.array(vectors, dtype=np.float64).reshape(len(keys), dim))


def save_store(path, keys, vectors):
    vectors = np.asarray(vectors, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"dim": int(vectors.shape[1])}) + "\n")
        for key, vec in zip(keys, vectors):
            fh.write(json.dumps({"key": str(key), "vector": [float(v) for v in vec]}) + "\n")
