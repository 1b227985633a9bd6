"""Canonical tokenizer used by every text-consuming component.

The rule is fixed so that vocabularies, counts, and truncation agree
bit-for-bit everywhere: lowercase the text, then take maximal runs of
Unicode alphanumerics (underscore excluded) of length >= 2. Anything
else, including single characters, is ignored.
"""

from __future__ import annotations

import re

# [^\W_] == \w minus underscore == Unicode alphanumerics.
_TOKEN_RE = re.compile(r"[^\W_]{2,}")


def tokenize(text: str) -> list[str]:
    """Return the canonical token list for `text`."""
    return _TOKEN_RE.findall(text.lower())


def count_tokens(text: str) -> int:
    return len(_TOKEN_RE.findall(text.lower()))


def token_spans(text: str) -> list[tuple[int, int]]:
    """(start, end) character spans of tokens in the original (uncased) text.

    Alphanumeric membership is case-invariant, so runs found in the original
    text line up with tokens of the lowercased text; spans are what prefix
    truncation needs.
    """
    return [m.span() for m in _TOKEN_RE.finditer(text)]
