"""Keyword tokenizer shared by memory retrieval and lore chunk scoring.

Tokens are lowercased alphanumeric runs with a fixed 50-word English
stopword list removed, so extraction is reproducible across runs and
platforms. The same tokenizer scores both memory fragments and lore
chunks; swapping in an embedding backend later must keep this module as
the oracle for the keyword path.
"""

from __future__ import annotations

import re

# Exactly 50 entries. Editing this list changes retrieval scores and
# therefore golden logs; treat as frozen.
STOPWORDS: frozenset[str] = frozenset({
    "a", "an", "the", "and", "or", "but", "if", "then", "else", "when",
    "at", "by", "for", "with", "about", "into", "through", "during",
    "before", "after", "above", "below", "to", "from", "up", "down",
    "in", "out", "on", "off", "over", "under", "again", "once", "here",
    "there", "all", "any", "both", "each", "few", "more", "most",
    "some", "such", "is", "are", "was", "of", "it",
})

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """All non-stopword tokens in order of appearance (duplicates kept)."""
    return [t for t in _TOKEN_RE.findall(text.lower()) if t not in STOPWORDS]


def keyword_set(text: str) -> frozenset[str]:
    return frozenset(tokenize(text))


def overlap_relevance(query_keywords: frozenset[str], doc_keywords: frozenset[str]) -> float:
    """|query ∩ doc| / max(1, |query|)."""
    return len(query_keywords & doc_keywords) / max(1, len(query_keywords))
