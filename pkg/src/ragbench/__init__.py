"""End-to-end RAG benchmarking harness with deterministic reference backends."""

__version__ = "0.1.0"
