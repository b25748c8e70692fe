"""Quality judges: context recall, answer accuracy, factual consistency.

The reference judges are deterministic lexical procedures; a remote LLM judge
can be passed in as a callable wherever `judge` is accepted.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Callable

from ragbench.errors import EmptyDenominator
from ragbench.refbackends.generator import NO_CONTEXT
from ragbench.textutil import content_tokens, normalize_tokens, split_sentences

SUPPORT_THRESHOLD = 0.75


def context_recall(retrieved_ids, relevant_ids, mode: str = "recall") -> float:
    """Overlap ratio between retrieved and ground-truth-relevant chunk ids.

    'recall' divides by |relevant|; 'paper_literal' divides by |retrieved|
    (a precision ratio; both are reported because the metric's prose
    definition and its name disagree).
    """
    retrieved = set(retrieved_ids)
    relevant = set(relevant_ids)
    if mode == "recall":
        if not relevant:
            raise EmptyDenominator("relevant id set is empty")
        return len(retrieved & relevant) / len(relevant)
    if mode == "paper_literal":
        if not retrieved:
            raise EmptyDenominator("retrieved id set is empty")
        return len(retrieved & relevant) / len(retrieved)
    raise ValueError(f"unknown context_recall mode {mode!r}")


def query_accuracy(answer_text: str, expected_answer: str,
                   judge: Callable[[str, str], float] | None = None) -> float:
    """Token-level F1 after normalization; single-token expected answers
    reduce to containment (1.0 if the token appears in the answer)."""
    if not expected_answer:
        raise ValueError("expected_answer must be nonempty")
    if judge is not None:
        return judge(answer_text, expected_answer)
    expected = normalize_tokens(expected_answer)
    got = normalize_tokens(answer_text)
    if len(expected) == 1:
        return 1.0 if expected[0] in got else 0.0
    if not got:
        return 0.0
    overlap = sum((Counter(expected) & Counter(got)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(got)
    recall = overlap / len(expected)
    return 2.0 * precision * recall / (precision + recall)


def factual_consistency(answer_text: str, context_texts: list[str],
                        judge: Callable[[str, list[str]], float] | None = None) -> float:
    """Fraction of answer sentences supported by the contexts.

    A claim is supported when >= 75% of its content tokens (stopwords
    removed) appear in the concatenated contexts; claims with no content
    tokens count as supported.
    """
    if judge is not None:
        return judge(answer_text, context_texts)
    claims = split_sentences(answer_text)
    if not claims:
        return 0.0
    context_set = set(content_tokens(" ".join(context_texts)))
    supported = 0
    for claim in claims:
        tokens = content_tokens(claim)
        if not tokens:
            supported += 1
            continue
        hits = sum(1 for t in tokens if t in context_set)
        if hits / len(tokens) >= SUPPORT_THRESHOLD:
            supported += 1
    return supported / len(claims)


@dataclass(frozen=True)
class QualityScores:
    context_recall: float
    context_recall_paper_literal: float
    query_accuracy: float
    factual_consistency: float | None  # None when the sentinel excluded it
    excluded: bool


def score_query(
    retrieved_ids,
    relevant_ids,
    answer_text: str,
    expected_answer: str,
    context_texts: list[str],
) -> QualityScores:
    """All reference-judge scores for one evaluated query."""
    recall = context_recall(retrieved_ids, relevant_ids, "recall")
    literal = (
        context_recall(retrieved_ids, relevant_ids, "paper_literal")
        if retrieved_ids
        else 0.0
    )
    accuracy = query_accuracy(answer_text, expected_answer)
    excluded = answer_text == NO_CONTEXT and not context_texts
    consistency = None if excluded else factual_consistency(answer_text, context_texts)
    return QualityScores(
        context_recall=recall,
        context_recall_paper_literal=literal,
        query_accuracy=accuracy,
        factual_consistency=consistency,
        excluded=excluded,
    )
