"""Deterministic hashing embedder standing in for model-backed embeddings."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

import numpy as np

from ragbench.errors import EmptyInput

_TOKEN_RE = re.compile(r"[A-Za-z0-9]+")


@dataclass(frozen=True)
class HashEmbedderConfig:
    dim: int = 64
    seed: int = 0
    lowercase: bool = True

    def validate(self) -> None:
        if self.dim < 8:
            raise ValueError(f"embedding dim must be >= 8, got {self.dim}")


class HashEmbedder:
    """Signed token-count embedding.

    Tokens are split on non-alphanumerics, hashed with a seeded 64-bit hash to
    (coordinate = hash mod dim, sign = hash bit 63), accumulated, then
    L2-normalized. Identical texts map to identical vectors; the whole thing
    is pure arithmetic, so it doubles as the determinism oracle for the
    remote-embedding conformance tests.
    """

    def __init__(self, config: HashEmbedderConfig | None = None, **kwargs):
        self.config = config or HashEmbedderConfig(**kwargs)
        self.config.validate()
        self._key = str(self.config.seed).encode("utf-8")

    @property
    def dim(self) -> int:
        return self.config.dim

    def _token_hash(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=self._key).digest()
        return int.from_bytes(digest, "little")

    def embed_one(self, text: str) -> np.ndarray:
        if not text:
            raise EmptyInput("cannot embed empty text")
        if self.config.lowercase:
            text = text.lower()
        vec = np.zeros(self.config.dim, dtype=np.float64)
        for token in _TOKEN_RE.findall(text):
            h = self._token_hash(token)
            coord = h % self.config.dim
            sign = 1.0 if (h >> 63) & 1 else -1.0
            vec[coord] += sign
        norm = float(np.sqrt((vec * vec).sum()))
        if norm > 0.0:
            vec /= norm
        return vec

    def embed(self, texts: list[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.config.dim), dtype=np.float64)
        return np.stack([self.embed_one(t) for t in texts])


def hash_embed(texts: list[str], config: HashEmbedderConfig) -> np.ndarray:
    return HashEmbedder(config).embed(texts)
