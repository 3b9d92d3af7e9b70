"""Cue-phrase lexicon and the discarding classifier for site evolution levels.

A site is assigned the highest evolution level for which any cue phrase occurs
in its stored HTML source; sites with no cue above the informational tier are
classified as information-level by default.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import IntEnum
from html import unescape
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .textnorm import collapse_whitespace, decode_bytes, fold_text

log = logging.getLogger(__name__)

MATCH_MODES = ("substring", "word")

#: extensions treated as HTML-like when a resource carries no media type
HTMLISH_EXTENSIONS = frozenset({"html", "htm", "php", "jsp", "asp", "aspx", ""})


class LexiconError(ValueError):
    """Raised for malformed lexicon files; the message names the line."""


class EvolutionLevel(IntEnum):
    INFORMATION = 1
    INTERACTION = 2
    TRANSACTION = 3
    PARTICIPATION = 4

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, label: str) -> "EvolutionLevel":
        try:
            return cls[label.strip().upper()]
        except KeyError:
            raise LexiconError(f"unknown evolution level {label!r}") from None


@dataclass(frozen=True)
class LexiconEntry:
    level: EvolutionLevel
    phrase: str  # stored pre-normalized: lowercase, diacritics folded
    match_mode: str  # "substring" or "word"


@dataclass(frozen=True)
class CueLexicon:
    entries: tuple[LexiconEntry, ...]

    def __post_init__(self) -> None:
        seen: set[tuple[EvolutionLevel, str]] = set()
        for entry in self.entries:
            key = (entry.level, entry.phrase)
            if key in seen:
                raise LexiconError(f"duplicate lexicon entry {entry.phrase!r} at level {int(entry.level)}")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class CueHit:
    phrase: str
    level: EvolutionLevel
    resource: str  # replica-relative path of the scanned resource
    offset: int  # character offset into the normalized source


@dataclass(frozen=True)
class Classification:
    level: EvolutionLevel
    hits: tuple[CueHit, ...]
    scanned_resources: int

    def __post_init__(self) -> None:
        if self.level != _decide(self.hits):
            raise ValueError("classification level inconsistent with hits")


def _parse_lexicon_lines(lines: Iterable[str], origin: str) -> CueLexicon:
    entries: list[LexiconEntry] = []
    seen: set[tuple[int, str]] = set()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise LexiconError(f"{origin}:{lineno}: expected level<TAB>phrase<TAB>match_mode")
        level_tag, phrase, mode = (p.strip() for p in parts)
        if level_tag not in ("1", "2", "3", "4"):
            raise LexiconError(f"{origin}:{lineno}: unknown level tag {level_tag!r}")
        folded = fold_text(collapse_whitespace(phrase))
        if not folded:
            raise LexiconError(f"{origin}:{lineno}: empty phrase")
        if mode not in MATCH_MODES:
            raise LexiconError(f"{origin}:{lineno}: unknown match mode {mode!r}")
        key = (int(level_tag), folded)
        if key in seen:
            raise LexiconError(f"{origin}:{lineno}: duplicate phrase {folded!r} at level {level_tag}")
        seen.add(key)
        entries.append(LexiconEntry(EvolutionLevel(int(level_tag)), folded, mode))
    return CueLexicon(tuple(entries))


def load_lexicon(source: str | Path) -> CueLexicon:
    """Load a UTF-8 TSV lexicon (level<TAB>phrase<TAB>match_mode, # comments)."""
    path = Path(source)
    text = path.read_text(encoding="utf-8")
    return _parse_lexicon_lines(text.splitlines(), origin=str(path))


def default_lexicon() -> CueLexicon:
    """The Spanish lexicon shipped with the package."""
    text = resources.files("munidex.data").joinpath("lexicon_es.tsv").read_text("utf-8")
    return _parse_lexicon_lines(text.splitlines(), origin="lexicon_es.tsv")


def english_overlay_lexicon() -> CueLexicon:
    """Optional English translations of the default cue phrases."""
    text = resources.files("munidex.data").joinpath("lexicon_en.tsv").read_text("utf-8")
    return _parse_lexicon_lines(text.splitlines(), origin="lexicon_en.tsv")


def normalize_source(source: str | bytes) -> str:
    """Fold case, diacritics and entities but keep markup (raw-source scanning)."""
    if isinstance(source, bytes):
        source = decode_bytes(source)
    return fold_text(unescape(source))


def _word_bounded(text: str, start: int, length: int) -> bool:
    before = text[start - 1] if start > 0 else ""
    after = text[start + length] if start + length < len(text) else ""
    return not (before.isalpha() or after.isalpha())


def scan_source(source: str | bytes, lexicon: CueLexicon, resource: str = "") -> list[CueHit]:
    """All cue occurrences in one resource's raw source, in document order."""
    text = normalize_source(source)
    hits: list[CueHit] = []
    for entry in lexicon.entries:
        pos = 0
        while True:
            idx = text.find(entry.phrase, pos)
            if idx < 0:
                break
            if entry.match_mode == "word" and not _word_bounded(text, idx, len(entry.phrase)):
                pos = idx + 1
                continue
            hits.append(CueHit(entry.phrase, entry.level, resource, idx))
            pos = idx + len(entry.phrase)
    hits.sort(key=lambda h: (h.offset, -int(h.level), h.phrase))
    return hits


def looks_htmlish(media_type: str | None, local_path: str) -> bool:
    """HTML-likeness test for stored resources (media type, then extension)."""
    if media_type:
        return "html" in media_type
    ext = local_path.rsplit("/", 1)[-1]
    ext = ext.rsplit(".", 1)[-1].lower() if "." in ext else ""
    return ext in HTMLISH_EXTENSIONS


def scan_cues(manifest, files_root: str | Path, lexicon: CueLexicon) -> tuple[list[CueHit], int]:
    """Scan every HTML-like resource of a replica; returns (hits, scanned count).

    Unreadable resources are skipped with a log note, never an error.
    """
    root = Path(files_root)
    hits: list[CueHit] = []
    scanned = 0
    for res in manifest.resources:
        if not looks_htmlish(res.media_type, res.local_path):
            continue
        try:
            raw = (root / res.local_path).read_bytes()
        except OSError as exc:
            log.warning("skipping unreadable resource %s: %s", res.local_path, exc)
            continue
        scanned += 1
        hits.extend(scan_source(raw, lexicon, resource=res.local_path))
    return hits, scanned


def _decide(hits: Sequence[CueHit]) -> EvolutionLevel:
    levels = {h.level for h in hits}
    for level in (EvolutionLevel.PARTICIPATION, EvolutionLevel.TRANSACTION, EvolutionLevel.INTERACTION):
        if level in levels:
            return level
    return EvolutionLevel.INFORMATION


def classify_site(hits: Sequence[CueHit], scanned_resources: int = 0) -> Classification:
    """Assign the level by discarding from the top: participation, then
    transaction, then interaction; informational cues never decide the outcome."""
    return Classification(_decide(hits), tuple(hits), scanned_resources)
