"""Text normalization shared by lookups, hashing and similarity."""

import re

_WORD = re.compile(r"\w+", re.UNICODE)


def normalize(text: str) -> str:
    """Lowercase, collapse internal whitespace, strip."""
    return " ".join(text.lower().split())


def word_tokens(text: str) -> list[str]:
    return _WORD.findall(normalize(text))
