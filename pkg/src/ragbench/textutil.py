"""Shared text helpers: tokenization, sentence splitting, normalization.

All quality judges, the reference mutator, and the reference generator use
these same rules so that scores are comparable across modules.
"""

from __future__ import annotations

import re

_TOKEN_RE = re.compile(r"[A-Za-z0-9_]+")
# Sentence boundary: ., ! or ? followed by whitespace (or end of text).
_SENTENCE_END_RE = re.compile(r"[.!?](?=\s)|[.!?]$")

STOPWORDS = frozenset(
    """a an and are as at be but by for from had has have in is it its not of on
    or that the this to was were will with""".split()
)

BLANK = "____"


def tokenize(text: str) -> list[str]:
    """Alphanumeric tokens in order of appearance."""
    return _TOKEN_RE.findall(text)


def normalize_tokens(text: str) -> list[str]:
    """Lowercased tokens with punctuation stripped."""
    return [t.lower() for t in _TOKEN_RE.findall(text)]


def content_tokens(text: str) -> list[str]:
    """Normalized tokens with stopwords removed."""
    return [t for t in normalize_tokens(text) if t not in STOPWORDS]


def sentence_spans(text: str) -> list[tuple[int, int]]:
    """[start, end) spans of sentences; the terminator stays with its sentence.

    Text after the last terminator forms a final sentence. Offsets are str
    indices; callers working in bytes must encode consistently.
    """
    spans: list[tuple[int, int]] = []
    start = 0
    for m in _SENTENCE_END_RE.finditer(text):
        end = m.end()
        if text[start:end].strip():
            spans.append((start, end))
        start = end
    if text[start:].strip():
        spans.append((start, len(text)))
    return spans


def split_sentences(text: str) -> list[str]:
    return [text[s:e].strip() for s, e in sentence_spans(text)]
