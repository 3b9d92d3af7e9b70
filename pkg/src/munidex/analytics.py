"""Pareto frequency tables over directory fields and section titles.

Percentages are kept as exact rationals and rounded only when rendered, so
golden comparisons never drift.
"""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .directory import NOT_SPECIFIED
from .textnorm import collapse_whitespace, fold_text

SINGLETON_BUCKET_LABEL = "Other titles (one case of each one)"


@dataclass(frozen=True)
class ParetoRow:
    category: str
    count: int
    percent: Fraction  # exact count/total, in [0, 1]

    def percent_str(self) -> str:
        return render_percent(self.percent)


@dataclass(frozen=True)
class ParetoTable:
    dimension_name: str
    rows: tuple[ParetoRow, ...]
    total: int


def render_percent(value: Fraction) -> str:
    """One-decimal percentage, half-up (53/391 -> \"13.6\")."""
    scaled = Decimal(value.numerator * 100) / Decimal(value.denominator)
    return str(scaled.quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


def pareto(items: Iterable[str | None], dimension_name: str) -> ParetoTable:
    """Frequency table sorted by count descending, ties broken by category.

    Absent values land in the "Not specified" category.
    """
    counts = Counter(NOT_SPECIFIED if item is None else item for item in items)
    total = sum(counts.values())
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    rows = tuple(
        ParetoRow(category, count, Fraction(count, total) if total else Fraction(0))
        for category, count in ordered
    )
    return ParetoTable(dimension_name, rows, total)


def sections_per_site_histogram(section_counts: Iterable[int]) -> ParetoTable:
    """Websites per number of sections; one count per working site."""
    return pareto([str(n) for n in section_counts], "sections_per_site")


def title_frequency(section_sets: Iterable[Sequence[str]]) -> ParetoTable:
    """Occurrence counts of section titles across sites.

    Titles are compared case/diacritic-folded; a title repeating within one
    site counts every time. Each category displays its most frequent raw
    spelling (ties go to the lexicographically smallest).
    """
    folded_counts: Counter[str] = Counter()
    spellings: dict[str, Counter[str]] = {}
    for titles in section_sets:
        for title in titles:
            raw = collapse_whitespace(title)
            key = fold_text(raw)
            if not key:
                continue
            folded_counts[key] += 1
            spellings.setdefault(key, Counter())[raw] += 1
    total = sum(folded_counts.values())
    display: list[tuple[str, int]] = []
    for key, count in folded_counts.items():
        best = min(spellings[key].items(), key=lambda kv: (-kv[1], kv[0]))[0]
        display.append((best, count))
    display.sort(key=lambda kv: (-kv[1], kv[0]))
    rows = tuple(
        ParetoRow(category, count, Fraction(count, total) if total else Fraction(0))
        for category, count in display
    )
    return ParetoTable("section_titles", rows, total)


def collapse_singletons(
    table: ParetoTable, threshold: int = 1, label: str = SINGLETON_BUCKET_LABEL
) -> ParetoTable:
    """Merge categories with count <= threshold into one trailing bucket row."""
    kept = [row for row in table.rows if row.count > threshold]
    merged = [row for row in table.rows if row.count <= threshold]
    if not merged:
        return table
    bucket_count = sum(row.count for row in merged)
    bucket = ParetoRow(
        label, bucket_count, Fraction(bucket_count, table.total) if table.total else Fraction(0)
    )
    return ParetoTable(table.dimension_name, tuple(kept) + (bucket,), table.total)


def write_pareto_csv(table: ParetoTable, sink) -> int:
    """CSV with a `# dimension: <name>, total: <n>` comment line on top."""
    buffer = io.StringIO()
    buffer.write(f"# dimension: {table.dimension_name}, total: {table.total}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["category", "count", "percent"])
    for row in table.rows:
        writer.writerow([row.category, str(row.count), row.percent_str()])
    data = buffer.getvalue().encode("utf-8")
    if hasattr(sink, "write"):
        sink.write(data)
    else:
        Path(sink).write_bytes(data)
    return len(data)


def read_pareto_csv(source) -> ParetoTable:
    if hasattr(source, "read"):
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")
    else:
        text = Path(source).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# dimension: "):
        raise ValueError("missing pareto header comment")
    head = lines[0][len("# dimension: ") :]
    name, _, total_part = head.rpartition(", total: ")
    total = int(total_part)
    reader = csv.reader(io.StringIO("\n".join(lines[1:])))
    header = next(reader, None)
    if header != ["category", "count", "percent"]:
        raise ValueError(f"unexpected pareto CSV header: {header}")
    rows = tuple(
        ParetoRow(row[0], int(row[1]), Fraction(int(row[1]), total) if total else Fraction(0))
        for row in reader
        if row
    )
    return ParetoTable(name, rows, total)


def format_text_table(table: ParetoTable) -> str:
    """Aligned plain-text rendering for CLI consultation."""
    header = f"# dimension: {table.dimension_name}, total: {table.total}"
    if not table.rows:
        return header + "\n(no data)\n"
    cat_width = max(len("category"), max(len(r.category) for r in table.rows))
    count_width = max(len("count"), max(len(str(r.count)) for r in table.rows))
    lines = [header, f"{'category'.ljust(cat_width)}  {'count'.rjust(count_width)}  percent"]
    for row in table.rows:
        lines.append(
            f"{row.category.ljust(cat_width)}  {str(row.count).rjust(count_width)}  {row.percent_str()}%"
        )
    return "\n".join(lines) + "\n"


def render_bar_chart(table: ParetoTable, *, bar_area: int = 420, row_height: int = 18) -> str:
    """Deterministic horizontal-bar SVG for one pareto table."""
    label_area = 200
    width = label_area + bar_area + 80
    height = row_height * (len(table.rows) + 2)
    max_count = max((row.count for row in table.rows), default=0)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}">',
        f'<text x="4" y="{row_height - 4}" font-family="sans-serif" font-size="12" font-weight="bold">'
        f"{_svg_escape(table.dimension_name)} (total {table.total})</text>",
    ]
    for idx, row in enumerate(table.rows):
        y = row_height * (idx + 1)
        bar = 0 if max_count == 0 else round(bar_area * row.count / max_count, 2)
        label = _svg_escape(row.category if len(row.category) <= 28 else row.category[:27] + "…")
        parts.append(
            f'<text x="4" y="{y + row_height - 6}" font-family="sans-serif" font-size="11">{label}</text>'
        )
        parts.append(
            f'<rect x="{label_area}" y="{y + 3}" width="{bar}" height="{row_height - 6}" fill="#555555"/>'
        )
        parts.append(
            f'<text x="{label_area + bar + 4}" y="{y + row_height - 6}" font-family="sans-serif" '
            f'font-size="11">{row.count} ({row.percent_str()}%)</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _svg_escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
