"""Embedding index over library declarations: exact cosine top-k search.

File format (`LFIDX1`): a header line ``LFIDX1 <dimension> <commit_pin>``
followed by one record per line —
``name<TAB>kind<TAB>statement-base64<TAB>float32-vector-base64`` with the
vector serialized as little-endian float32. Round-trips must be bit-exact.
"""

from __future__ import annotations

import base64
import hashlib
import re
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmbedderUnavailable, FormatError

MAGIC = "LFIDX1"
NORM_TOLERANCE = 1e-6
DECL_KINDS = ("theorem", "lemma", "def")


@dataclass(frozen=True)
class Declaration:
    name: str
    kind: str  # theorem | lemma | def
    statement: str
    vector: np.ndarray

    def __post_init__(self):
        if self.kind not in DECL_KINDS:
            raise FormatError(f"unknown declaration kind {self.kind!r}")


@dataclass
class SearchIndex:
    commit_pin: str
    dimension: int
    entries: list[Declaration]

    def matrix(self) -> np.ndarray:
        if not self.entries:
            return np.zeros((0, self.dimension), dtype=np.float32)
        return np.stack([e.vector for e in self.entries])


def write_index(index: SearchIndex, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{MAGIC} {index.dimension} {index.commit_pin}\n")
        for entry in index.entries:
            stmt = base64.b64encode(entry.statement.encode("utf-8")).decode("ascii")
            vec = base64.b64encode(
                np.asarray(entry.vector, dtype="<f4").tobytes()
            ).decode("ascii")
            fh.write(f"{entry.name}\t{entry.kind}\t{stmt}\t{vec}\n")


def load_index(path: str, expected_pin: str | None = None) -> SearchIndex:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        parts = header.split(" ", 2)
        if len(parts) != 3 or parts[0] != MAGIC:
            raise FormatError(f"bad index header {header!r}")
        try:
            dimension = int(parts[1])
        except ValueError as exc:
            raise FormatError(f"bad dimension in header {header!r}") from exc
        commit_pin = parts[2]
        if not commit_pin:
            raise FormatError("empty commit pin")
        if expected_pin is not None and commit_pin != expected_pin:
            raise FormatError(f"index pinned to {commit_pin!r}, expected {expected_pin!r}")
        entries = []
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 4:
                raise FormatError(f"line {lineno}: expected 4 fields, got {len(fields)}")
            name, kind, stmt_b64, vec_b64 = fields
            statement = base64.b64decode(stmt_b64).decode("utf-8")
            vector = np.frombuffer(base64.b64decode(vec_b64), dtype="<f4")
            if vector.shape[0] != dimension:
                raise DimensionMismatch(
                    f"line {lineno}: vector has dimension {vector.shape[0]}, index is {dimension}"
                )
            norm = float(np.linalg.norm(vector))
            if abs(norm - 1.0) > NORM_TOLERANCE and norm > 0:
                vector = (vector / norm).astype("<f4")
            entries.append(Declaration(name, kind, statement, vector))
    return SearchIndex(commit_pin=commit_pin, dimension=dimension, entries=entries)


def search(
    index: SearchIndex, query_vector: np.ndarray, k: int = 5
) -> list[tuple[Declaration, float]]:
    """Top-k entries by cosine similarity, ties broken by ascending name."""
    if k < 1:
        raise ValueError("k must be >= 1")
    query = np.asarray(query_vector, dtype=np.float32)
    if query.shape != (index.dimension,):
        raise DimensionMismatch(
            f"query dimension {query.shape} does not match index dimension {index.dimension}"
        )
    if not index.entries:
        return []
    scores = index.matrix() @ query
    order = sorted(range(len(index.entries)), key=lambda i: (-scores[i], index.entries[i].name))
    return [(index.entries[i], float(scores[i])) for i in order[:k]]


class HashEmbedder:
    """Deterministic hashed bag-of-tokens embedder for offline tests.

    Token order does not matter; the empty text maps to the uniform unit
    vector so search stays total.
    """

    def __init__(self, dimension: int = 64):
        self.dimension = dimension

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension, dtype=np.float64)
        for token in re.findall(r"[A-Za-z0-9_']+", text.lower()):
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            slot = int.from_bytes(digest[:4], "little") % self.dimension
            sign = 1.0 if digest[4] % 2 == 0 else -1.0
            vec[slot] += sign
        norm = np.linalg.norm(vec)
        if norm == 0:
            vec[:] = 1.0 / np.sqrt(self.dimension)
            return vec.astype(np.float32)
        return (vec / norm).astype(np.float32)


class HttpEmbedder:
    """Client for a JSON-over-HTTP embedding endpoint.

    Request: ``{"input": [text], "model": name}``;
    response: ``{"data": [{"embedding": [float]}]}``.
    """

    def __init__(self, endpoint: str | None, model: str = "", timeout: float = 30.0):
        self.endpoint = endpoint
        self.model = model
        self.timeout = timeout

    def embed(self, text: str) -> np.ndarray:
        vectors = self.embed_batch([text])
        return vectors[0]

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        if not self.endpoint:
            raise EmbedderUnavailable("no embedding endpoint configured")
        import requests

        try:
            response = requests.post(
                self.endpoint,
                json={"input": texts, "model": self.model},
                timeout=self.timeout,
            )
            response.raise_for_status()
            payload = response.json()
        except Exception as exc:
            raise EmbedderUnavailable(str(exc)) from exc
        vectors = []
        for item in payload["data"]:
            vec = np.asarray(item["embedding"], dtype=np.float32)
            norm = float(np.linalg.norm(vec))
            if norm > 0:
                vec = vec / norm
            vectors.append(vec.astype(np.float32))
        return vectors
