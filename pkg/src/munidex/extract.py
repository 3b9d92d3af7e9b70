"""Turn stored HTML into structured facts: normalized text, main-menu section
titles and government periods."""

from __future__ import annotations

import csv
import datetime as dt
import io
import re
from dataclasses import dataclass
from html import unescape
from html.parser import HTMLParser
from pathlib import Path
from typing import Iterable

from .directory import GovernmentPeriod
from .textnorm import collapse_whitespace, decode_bytes, fold_text

SECTION_COLUMNS = ("inegi_id", "domain", "position", "title", "heuristic")

_TAGGISH = re.compile(r"<\s*[a-zA-Z!/]")
_MAX_TITLE_CHARS = 120

# year pairs joined by a hyphen/dash or the Spanish "a"/"al"
_PERIOD_RE = re.compile(r"(?<!\d)((?:19|20)\d{2})\s*(?:[-–—]|\bal\b|\ba\b)\s*((?:19|20)\d{2})(?!\d)")
_MAX_TERM_YEARS = 6  # municipal administrations never span more


class _TextGrabber(HTMLParser):
    """Collects visible text; script/style contents are dropped."""

    _SKIP = {"script", "style"}

    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.parts: list[str] = []
        self._skip_depth = 0

    def handle_starttag(self, tag, attrs):
        if tag in self._SKIP:
            self._skip_depth += 1
        self.parts.append(" ")

    def handle_endtag(self, tag):
        if tag in self._SKIP and self._skip_depth:
            self._skip_depth -= 1
        self.parts.append(" ")

    def handle_data(self, data):
        if not self._skip_depth:
            self.parts.append(data)


def html_to_text(html: str) -> str:
    parser = _TextGrabber()
    parser.feed(html)
    parser.close()
    return "".join(parser.parts)


def normalize_text(html_or_text: str | bytes) -> str:
    """Tag-stripped, entity-decoded, case/diacritic-folded, space-collapsed text.

    Plain text passes through the same folding. Folding can mint new
    tag-like runs ("<Ù" becomes "<u"), so the pass repeats until stable;
    the result is a fixpoint and re-normalization is the identity.
    """
    if isinstance(html_or_text, bytes):
        html_or_text = decode_bytes(html_or_text)
    text = html_or_text
    for _ in range(50):
        stripped = html_to_text(text) if _TAGGISH.search(text) else unescape(text)
        folded = collapse_whitespace(fold_text(stripped))
        if folded == text:
            return folded
        text = folded
    return text


@dataclass(frozen=True)
class SectionTitleSet:
    titles: tuple[str, ...]  # raw spellings, document order, case-folded dedup
    source: str  # "nav" | "largest-list" | "fallback"


def _line_starts(text: str) -> list[int]:
    starts = [0]
    for idx, ch in enumerate(text):
        if ch == "\n":
            starts.append(idx + 1)
    return starts


class _MenuScanner(HTMLParser):
    """Tracks anchors globally plus per-nav and per-list anchor groups."""

    _LIST_TAGS = {"ul", "ol"}

    def __init__(self, line_starts: list[int]) -> None:
        super().__init__(convert_charrefs=True)
        self._line_starts = line_starts
        self._open: list[dict] = []
        self._anchor: list[str] | None = None
        self.anchors: list[str] = []
        self.navs: list[dict] = []
        self.lists: list[dict] = []

    def _offset(self) -> int:
        lineno, col = self.getpos()
        return self._line_starts[lineno - 1] + col

    def handle_starttag(self, tag, attrs):
        attr_map = dict(attrs)
        role = (attr_map.get("role") or "").lower()
        if tag == "nav" or role == "navigation":
            group = {"tag": tag, "offset": self._offset(), "anchors": []}
            self._open.append(group)
            self.navs.append(group)
        elif tag in self._LIST_TAGS:
            group = {"tag": tag, "offset": self._offset(), "anchors": []}
            self._open.append(group)
            self.lists.append(group)
        elif tag == "a":
            self._anchor = []

    def handle_endtag(self, tag):
        if tag == "a":
            if self._anchor is not None:
                text = collapse_whitespace("".join(self._anchor))
                self._anchor = None
                if text:
                    self.anchors.append(text)
                    for group in self._open:
                        group["anchors"].append(text)
            return
        for idx in range(len(self._open) - 1, -1, -1):
            if self._open[idx]["tag"] == tag:
                del self._open[idx:]
                break

    def handle_data(self, data):
        if self._anchor is not None:
            self._anchor.append(data)


def _clean_titles(anchors: Iterable[str]) -> tuple[str, ...]:
    titles: list[str] = []
    seen: set[str] = set()
    for anchor in anchors:
        title = collapse_whitespace(anchor)
        if not title or len(title) > _MAX_TITLE_CHARS:
            continue
        key = title.casefold()
        if key in seen:
            continue
        seen.add(key)
        titles.append(title)
    return tuple(titles)


def extract_main_menu_titles(homepage_html: str | bytes) -> SectionTitleSet:
    """Section titles from the homepage's highest-hierarchy menu.

    Heuristics fire in priority order and the winner is recorded:
      1. first <nav> (or role="navigation") container holding >= 2 anchors;
      2. otherwise the <ul>/<ol> with the most anchors that starts in the
         top 40% of the document (>= 2 anchors, first wins ties);
      3. otherwise every anchor whose text is at most four words.
    Titles keep their original spelling; duplicates are removed
    case-insensitively and document order is preserved.
    """
    if isinstance(homepage_html, bytes):
        homepage_html = decode_bytes(homepage_html)
    scanner = _MenuScanner(_line_starts(homepage_html))
    scanner.feed(homepage_html)
    scanner.close()

    for nav in scanner.navs:
        if len(nav["anchors"]) >= 2:
            titles = _clean_titles(nav["anchors"])
            if titles:
                return SectionTitleSet(titles, "nav")

    cutoff = 0.4 * len(homepage_html)
    best: dict | None = None
    for group in scanner.lists:
        if group["offset"] > cutoff or len(group["anchors"]) < 2:
            continue
        if best is None or len(group["anchors"]) > len(best["anchors"]):
            best = group
    if best is not None:
        titles = _clean_titles(best["anchors"])
        if titles:
            return SectionTitleSet(titles, "largest-list")

    short = [a for a in scanner.anchors if len(a.split()) <= 4]
    return SectionTitleSet(_clean_titles(short), "fallback")


@dataclass(frozen=True)
class PeriodCandidate:
    start_year: int
    end_year: int
    offset: int
    context: str  # surrounding 40 characters of the source text


def find_period_candidates(
    text: str, *, reference_year: int | None = None
) -> list[PeriodCandidate]:
    """Every plausible YYYY-YYYY pair in already-normalized text.

    Plausibility window: years in [1990, reference_year + 3] with a span of
    at most six years, which filters historical dates like 1810-1821.
    """
    horizon = (reference_year if reference_year is not None else dt.date.today().year) + 3
    candidates: list[PeriodCandidate] = []
    for match in _PERIOD_RE.finditer(text):
        start, end = int(match.group(1)), int(match.group(2))
        if not 1990 <= start <= end <= horizon:
            continue
        if end - start > _MAX_TERM_YEARS:
            continue
        context = text[max(0, match.start() - 20) : match.end() + 20]
        candidates.append(PeriodCandidate(start, end, match.start(), context))
    return candidates


def extract_government_period(
    replica_text: str, *, reference_year: int | None = None
) -> GovernmentPeriod:
    """The most recent plausible administration period in the replica text.

    Among surviving candidates the latest end year wins (the point is to
    tell the current government from previous ones); no candidate means
    the period stays unspecified.
    """
    candidates = find_period_candidates(replica_text, reference_year=reference_year)
    if not candidates:
        return GovernmentPeriod()
    best = max(candidates, key=lambda c: (c.end_year, c.start_year))
    return GovernmentPeriod(best.start_year, best.end_year)


@dataclass(frozen=True)
class SectionRow:
    inegi_id: str
    domain: str
    position: int  # 1-based index within the site's menu
    title: str
    heuristic: str


def write_sections_csv(rows: Iterable[SectionRow], sink) -> int:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SECTION_COLUMNS)
    for row in rows:
        writer.writerow([row.inegi_id, row.domain, str(row.position), row.title, row.heuristic])
    data = buffer.getvalue().encode("utf-8")
    if hasattr(sink, "write"):
        sink.write(data)
    else:
        Path(sink).write_bytes(data)
    return len(data)


def read_sections_csv(source) -> list[SectionRow]:
    if hasattr(source, "read"):
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")
    else:
        text = Path(source).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != SECTION_COLUMNS:
        raise ValueError(f"unexpected sections CSV header: {header}")
    return [
        SectionRow(row[0], row[1], int(row[2]), row[3], row[4]) for row in reader if row
    ]
