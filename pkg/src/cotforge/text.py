"""Canonical tokenizer shared by the metrics and the toy vocabulary."""
from __future__ import annotations

import re
import unicodedata

_TOKEN = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase; every punctuation character becomes its own token."""
    return _TOKEN.findall(unicodedata.normalize("NFC", text).lower())
