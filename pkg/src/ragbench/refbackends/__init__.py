"""Deterministic reference implementations of every pipeline interface.

These are the correctness oracles: exact flat search, a seeded-k-means IVF
index, the hybrid store with a temporary flat update buffer, a hashing
embedder, a lexical reranker, and a frame-matching extractive generator.
"""

from ragbench.refbackends.embedder import HashEmbedder, HashEmbedderConfig, hash_embed
from ragbench.refbackends.generator import GenerationResult, TemplateGenerator, template_generate
from ragbench.refbackends.rerank import LexicalReranker, lexical_rerank
from ragbench.refbackends.stores import (
    FlatStore,
    HybridStore,
    InsertOutcome,
    IvfIndex,
    RetrievalCandidate,
    flat_search,
    hybrid_insert,
    hybrid_search,
    ivf_build,
    ivf_search,
    make_store,
)

__all__ = [
    "FlatStore",
    "GenerationResult",
    "HashEmbedder",
    "HashEmbedderConfig",
    "HybridStore",
    "InsertOutcome",
    "IvfIndex",
    "LexicalReranker",
    "RetrievalCandidate",
    "TemplateGenerator",
    "flat_search",
    "hash_embed",
    "hybrid_insert",
    "hybrid_search",
    "ivf_build",
    "ivf_search",
    "lexical_rerank",
    "make_store",
    "template_generate",
]
