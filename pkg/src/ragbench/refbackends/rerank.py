"""Lexical-overlap reranker standing in for cross-encoder models."""

from __future__ import annotations

from ragbench.textutil import normalize_tokens


def lexical_rerank(question: str, candidates: list[tuple[str, str]], out_depth: int) -> list[str]:
    """Reorder candidates by question-token overlap.

    score = |question tokens ∩ candidate tokens| / |question tokens|. The sort
    is stable, so equal scores keep retrieval order. Returns at most
    `out_depth` chunk ids.
    """
    if out_depth < 1:
        raise ValueError("out_depth must be >= 1")
    q_tokens = set(normalize_tokens(question))
    if not q_tokens:
        return [cid for cid, _ in candidates[:out_depth]]
    scored = []
    for pos, (cid, text) in enumerate(candidates):
        overlap = len(q_tokens & set(normalize_tokens(text)))
        scored.append((-(overlap / len(q_tokens)), pos, cid))
    scored.sort()
    return [cid for _, _, cid in scored[:out_depth]]


class LexicalReranker:
    backend_name = "reference"

    def rerank(self, question: str, candidates: list[tuple[str, str]], out_depth: int) -> list[str]:
        return lexical_rerank(question, candidates, out_depth)
