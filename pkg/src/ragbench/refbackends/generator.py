"""Extractive reference generator.

Answers fill-in-the-blank prompts by aligning the question's sentence frame
against context sentences and reading off the token under the blank. Fully
deterministic, which closes the loop for exact-match quality oracles.
"""

from __future__ import annotations

from dataclasses import dataclass

from ragbench.textutil import BLANK, split_sentences, tokenize

NO_CONTEXT = "NO-CONTEXT"
CONTEXT_DELIMITER = "---"

# Synthetic latency model: proportional to prompt / answer sizes.
TTFT_MS_PER_PROMPT_BYTE = 0.005
TPOT_MS_PER_ANSWER_BYTE = 0.05


@dataclass(frozen=True)
class GenerationResult:
    text: str
    ttft_ms: float | None = None
    tpot_ms: float | None = None


def _best_frame_alignment(q_tokens: list[str], sentences: list[str]) -> tuple[int, str | None]:
    """Slide the question frame over each sentence; return (match count,
    token under the blank) for the best alignment.

    Ties keep the earliest sentence and smallest offset, so results are
    stable for identical prompts.
    """
    try:
        blank_at = next(i for i, t in enumerate(q_tokens) if t == BLANK)
    except StopIteration:
        return (0, None)
    q_lower = [t.lower() for t in q_tokens]
    best_matches = 0
    best_token: str | None = None
    for sentence in sentences:
        c_tokens = tokenize(sentence)
        c_lower = [t.lower() for t in c_tokens]
        for offset in range(-blank_at, len(c_tokens)):
            matches = 0
            for i, qt in enumerate(q_lower):
                if i == blank_at:
                    continue
                j = offset + i
                if 0 <= j < len(c_lower) and c_lower[j] == qt:
                    matches += 1
            fill = offset + blank_at
            if matches > best_matches and 0 <= fill < len(c_tokens):
                best_matches = matches
                best_token = c_tokens[fill]
    return (best_matches, best_token)


def _overlap(a_tokens: set[str], text: str) -> int:
    return len(a_tokens & {t.lower() for t in tokenize(text)})


def template_generate(prompt: str, max_tokens: int | None = None) -> GenerationResult:
    """Answer a prompt assembled by the pipeline (question line + contexts).

    The question is the first line containing the blank marker (else the last
    nonempty line); every other sentence is a context candidate. If frame
    alignment fails, the highest-overlap sentence is returned verbatim; with
    no contexts at all the NO-CONTEXT sentinel is returned.
    """
    lines = [ln for ln in prompt.splitlines() if ln.strip()]
    question = ""
    for ln in lines:
        if BLANK in ln:
            question = ln
            break
    if not question and lines:
        question = lines[0]  # assembled prompts put the question first
    context_lines = [ln for ln in lines if ln is not question and ln.strip() != CONTEXT_DELIMITER]
    sentences: list[str] = []
    for ln in context_lines:
        sentences.extend(split_sentences(ln))

    if not sentences:
        answer = NO_CONTEXT
    else:
        q_tokens = tokenize(question)
        matches, token = _best_frame_alignment(q_tokens, sentences)
        if matches >= 1 and token is not None:
            answer = token
        else:
            q_set = {t.lower() for t in q_tokens if t != BLANK}
            best = max(range(len(sentences)), key=lambda i: (_overlap(q_set, sentences[i]), -i))
            answer = sentences[best]
    if max_tokens is not None and max_tokens > 0:
        answer = " ".join(answer.split()[:max_tokens])

    return GenerationResult(
        text=answer,
        ttft_ms=TTFT_MS_PER_PROMPT_BYTE * len(prompt.encode("utf-8")),
        tpot_ms=TPOT_MS_PER_ANSWER_BYTE * len(answer.encode("utf-8")),
    )


class TemplateGenerator:
    backend_name = "reference"

    def __init__(self, max_tokens: int | None = None):
        self.max_tokens = max_tokens

    def generate(self, prompt: str, max_tokens: int | None = None) -> GenerationResult:
        return template_generate(prompt, max_tokens or self.max_tokens)
