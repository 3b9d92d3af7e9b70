"""Text folding helpers shared by the probe, extractor, classifier and joins."""

from __future__ import annotations

import re
import unicodedata

_WS_RUN = re.compile(r"\s+")


def decode_bytes(raw: bytes) -> str:
    """Decode UTF-8, falling back to Latin-1 when the byte stream is invalid."""
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError:
        return raw.decode("latin-1")


def strip_diacritics(text: str) -> str:
    decomposed = unicodedata.normalize("NFD", text)
    return "".join(ch for ch in decomposed if unicodedata.category(ch) != "Mn")


def fold_text(text: str) -> str:
    """Lowercase + diacritic-free comparison form (á->a, ñ->n, É->e)."""
    return strip_diacritics(text.casefold())


def collapse_whitespace(text: str) -> str:
    return _WS_RUN.sub(" ", text).strip()
