"""Municipality directory: data model, official-domain validation, catalog
joins, completeness checks and the canonical directory CSV.

The directory CSV is the pipeline's central artifact; its export is
byte-stable so downstream stages and golden tests can diff it.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import re
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .classify import EvolutionLevel
from .textnorm import collapse_whitespace, fold_text

#: exact column order of the directory CSV
DIRECTORY_COLUMNS = (
    "inegi_id",
    "municipality",
    "domain",
    "access_date",
    "status",
    "government_period",
    "hosting_provider",
    "hosting_country",
    "evolution_level",
    "section_count",
)

NOT_SPECIFIED = "Not specified"

_OFFICIAL_SUFFIX = ("gob", "mx")
_MX_SECOND_LEVEL = {"com", "org", "net", "edu", "gob"}
_LABEL_RE = re.compile(r"^[a-z0-9]([a-z0-9-]*[a-z0-9])?$")


class DirectoryError(ValueError):
    """Invalid directory data: bad catalog, malformed CSV, broken invariant."""


class DomainValidationError(DirectoryError):
    """Candidate is not even a parseable hostname (distinct from unofficial)."""


class OperatingStatus(Enum):
    WORKING = "working"
    NOT_WORKING = "not_working"
    SUSPENDED = "suspended"
    NOT_FOUND = "not_found"

    @classmethod
    def parse(cls, label: str) -> "OperatingStatus":
        for status in cls:
            if status.value == label:
                return status
        raise DirectoryError(f"unknown operating status {label!r}")


@dataclass(frozen=True)
class MunicipalityRecord:
    inegi_id: str
    name: str
    state_name: str = ""

    def __post_init__(self) -> None:
        if not self.name.strip():
            raise DirectoryError("municipality name must be non-empty")
        if self.inegi_id and not self.inegi_id.isdigit():
            raise DirectoryError(f"inegi_id must be digits, got {self.inegi_id!r}")


@dataclass(frozen=True)
class GovernmentPeriod:
    start_year: int | None = None
    end_year: int | None = None

    def __post_init__(self) -> None:
        if (self.start_year is None) != (self.end_year is None):
            raise DirectoryError("government period years come in pairs")
        if self.start_year is not None:
            horizon = dt.date.today().year + 3
            if not 1990 <= self.start_year <= self.end_year <= horizon:
                raise DirectoryError(
                    f"implausible government period {self.start_year}-{self.end_year}"
                )

    @property
    def specified(self) -> bool:
        return self.start_year is not None

    def render(self) -> str:
        if not self.specified:
            return NOT_SPECIFIED
        return f"{self.start_year}-{self.end_year}"

    @classmethod
    def parse(cls, text: str) -> "GovernmentPeriod":
        text = text.strip()
        if not text or text == NOT_SPECIFIED:
            return cls()
        match = re.fullmatch(r"(\d{4})-(\d{4})", text)
        if not match:
            raise DirectoryError(f"unparseable government period {text!r}")
        return cls(int(match.group(1)), int(match.group(2)))


@dataclass(frozen=True)
class HostingInfo:
    provider_name: str | None = None
    country: str | None = None

    def __post_init__(self) -> None:
        if self.provider_name is None and self.country is not None:
            raise DirectoryError("hosting country given without a provider")


@dataclass(frozen=True)
class DirectoryEntry:
    municipality: MunicipalityRecord
    status: OperatingStatus
    domain: str | None = None
    access_date: dt.date | None = None
    period: GovernmentPeriod = GovernmentPeriod()
    hosting: HostingInfo = HostingInfo()
    level: EvolutionLevel | None = None
    section_count: int | None = None

    def __post_init__(self) -> None:
        if (self.domain is None) != (self.status is OperatingStatus.NOT_FOUND):
            raise DirectoryError("domain is absent exactly when status is not_found")
        if self.status is not OperatingStatus.WORKING:
            if self.period.specified or self.level is not None or self.section_count is not None:
                raise DirectoryError("period/level/section_count only allowed on working sites")
        if self.section_count is not None and self.section_count < 0:
            raise DirectoryError("section_count must be non-negative")


@dataclass(frozen=True)
class DomainCheck:
    """Outcome of official-domain validation; `original` keeps provenance."""

    official: bool
    original: str
    domain: str | None = None  # canonical form, set when official
    reason: str | None = None  # offending suffix or note, set when unofficial


def validate_official_domain(candidate: str) -> DomainCheck:
    """Accept hostnames whose registrable name sits under gob.mx.

    Normalization lowercases, strips scheme/path/port and leading "www."
    labels (repeatedly, so the canonical form is a fixpoint). Matching is
    label-wise: "x.gob.mx" is official, "xgob.mx" is not, and the bare
    suffix "gob.mx" carries no municipal label. Raises
    DomainValidationError for input that is not a hostname at all.
    """
    original = candidate
    host = candidate.strip()
    if not host:
        raise DomainValidationError("empty domain candidate")
    if any(ch.isspace() for ch in host):
        raise DomainValidationError(f"whitespace inside domain candidate {candidate!r}")
    if "://" in host:
        host = host.split("://", 1)[1]
    host = host.split("/", 1)[0].split("?", 1)[0].split("#", 1)[0]
    host = host.rsplit("@", 1)[-1]
    host = host.split(":", 1)[0]
    host = host.lower().rstrip(".")
    if not host:
        raise DomainValidationError(f"no hostname in {candidate!r}")
    labels = host.split(".")
    for label in labels:
        if not _LABEL_RE.match(label):
            raise DomainValidationError(f"malformed hostname {host!r}")
    while labels and labels[0] == "www":
        labels = labels[1:]
    if tuple(labels[-2:]) == _OFFICIAL_SUFFIX:
        if len(labels) > 2:
            return DomainCheck(official=True, original=original, domain=".".join(labels))
        return DomainCheck(
            official=False, original=original, reason="bare gob.mx suffix with no municipal label"
        )
    if not labels:
        raise DomainValidationError(f"no hostname in {candidate!r}")
    if labels[-1] == "mx" and len(labels) >= 2 and labels[-2] in _MX_SECOND_LEVEL:
        return DomainCheck(official=False, original=original, reason="." + ".".join(labels[-2:]))
    return DomainCheck(official=False, original=original, reason="." + labels[-1])


def fold_municipality_name(name: str) -> str:
    return fold_text(collapse_whitespace(name))


@dataclass(frozen=True)
class UnresolvedJoin:
    name: str
    reason: str  # "no_match" or "ambiguous"
    candidates: tuple[str, ...] = ()


@dataclass(frozen=True)
class JoinReport:
    unresolved: tuple[UnresolvedJoin, ...]


def catalog_by_name(catalog: Sequence[MunicipalityRecord]) -> dict[str, list[MunicipalityRecord]]:
    ids = [m.inegi_id for m in catalog]
    if any(not i for i in ids):
        raise DirectoryError("catalog record without inegi_id")
    dupes = {i for i in ids if ids.count(i) > 1}
    if dupes:
        raise DirectoryError(f"duplicate inegi_id in catalog: {', '.join(sorted(dupes))}")
    by_name: dict[str, list[MunicipalityRecord]] = {}
    for record in catalog:
        by_name.setdefault(fold_municipality_name(record.name), []).append(record)
    return by_name


def match_catalog_name(
    name: str, by_name: dict[str, list[MunicipalityRecord]]
) -> MunicipalityRecord | UnresolvedJoin:
    """Fold-and-compare name lookup; ties are reported, never auto-resolved."""
    matches = by_name.get(fold_municipality_name(name), [])
    if len(matches) == 1:
        return matches[0]
    if not matches:
        return UnresolvedJoin(name, "no_match")
    return UnresolvedJoin(name, "ambiguous", tuple(m.inegi_id for m in matches))


def join_inegi_id(
    entries: Sequence[DirectoryEntry], catalog: Sequence[MunicipalityRecord]
) -> tuple[list[DirectoryEntry], JoinReport]:
    """Attach catalog inegi_ids to entries by folded-name equality."""
    by_name = catalog_by_name(catalog)
    joined: list[DirectoryEntry] = []
    unresolved: list[UnresolvedJoin] = []
    for entry in entries:
        outcome = match_catalog_name(entry.municipality.name, by_name)
        if isinstance(outcome, MunicipalityRecord):
            municipality = replace(
                entry.municipality,
                inegi_id=outcome.inegi_id,
                state_name=outcome.state_name or entry.municipality.state_name,
            )
            joined.append(replace(entry, municipality=municipality))
        else:
            unresolved.append(outcome)
            joined.append(entry)
    return joined, JoinReport(tuple(unresolved))


@dataclass(frozen=True)
class CompletenessReport:
    missing: tuple[MunicipalityRecord, ...]  # catalog rows with no entry at all
    invalid: tuple[DirectoryEntry, ...]  # suspended or not-working entries
    stop_condition: tuple[DirectoryEntry, ...]  # not-found entries


def check_completeness(
    entries: Sequence[DirectoryEntry], catalog: Sequence[MunicipalityRecord]
) -> CompletenessReport:
    covered = {e.municipality.inegi_id for e in entries if e.municipality.inegi_id}
    missing = tuple(m for m in catalog if m.inegi_id not in covered)
    invalid = tuple(
        e for e in entries if e.status in (OperatingStatus.SUSPENDED, OperatingStatus.NOT_WORKING)
    )
    stop = tuple(e for e in entries if e.status is OperatingStatus.NOT_FOUND)
    return CompletenessReport(missing, invalid, stop)


def _entry_sort_key(entry: DirectoryEntry) -> tuple[str, str]:
    return (entry.municipality.inegi_id, entry.municipality.name)


def _render_row(entry: DirectoryEntry) -> list[str]:
    return [
        entry.municipality.inegi_id,
        entry.municipality.name,
        entry.domain or "",
        entry.access_date.isoformat() if entry.access_date else "",
        entry.status.value,
        entry.period.render(),
        entry.hosting.provider_name or "",
        entry.hosting.country or "",
        entry.level.label if entry.level is not None else "",
        "" if entry.section_count is None else str(entry.section_count),
    ]


def export_directory_csv(entries: Iterable[DirectoryEntry], sink) -> int:
    """Write the directory CSV (UTF-8, LF, RFC-4180 quoting) and return the
    byte count. Rows are sorted ascending by inegi_id."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(DIRECTORY_COLUMNS)
    for entry in sorted(entries, key=_entry_sort_key):
        writer.writerow(_render_row(entry))
    data = buffer.getvalue().encode("utf-8")
    if hasattr(sink, "write"):
        sink.write(data)
    else:
        Path(sink).write_bytes(data)
    return len(data)


def import_directory_csv(source) -> list[DirectoryEntry]:
    """Inverse of export_directory_csv; export(import(x)) is byte-identical."""
    if hasattr(source, "read"):
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")
    else:
        text = Path(source).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DirectoryError("empty directory CSV") from None
    if tuple(header) != DIRECTORY_COLUMNS:
        raise DirectoryError(f"unexpected directory CSV header: {header}")
    entries: list[DirectoryEntry] = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(DIRECTORY_COLUMNS):
            raise DirectoryError(f"directory CSV row {lineno} has {len(row)} fields")
        (inegi_id, name, domain, access, status, period, provider, country, level, sections) = row
        try:
            entries.append(
                DirectoryEntry(
                    municipality=MunicipalityRecord(inegi_id=inegi_id, name=name),
                    status=OperatingStatus.parse(status),
                    domain=domain or None,
                    access_date=dt.date.fromisoformat(access) if access else None,
                    period=GovernmentPeriod.parse(period),
                    hosting=HostingInfo(provider or None, country or None),
                    level=EvolutionLevel.parse(level) if level else None,
                    section_count=int(sections) if sections else None,
                )
            )
        except (DirectoryError, ValueError) as exc:
            raise DirectoryError(f"directory CSV row {lineno}: {exc}") from None
    return entries


@dataclass(frozen=True)
class SeedCandidate:
    row_number: int  # line in the source file (the header is line 1)
    name: str
    domain: str | None


def import_seed_list(
    source, name_column: str = "municipality", domain_column: str = "domain"
) -> list[SeedCandidate]:
    """Read raw (name, domain) candidates from a seed CSV without validating.

    Accepts a BOM and CRLF line endings; rows keep their file line numbers
    for diagnostics.
    """
    if hasattr(source, "read"):
        raw = source.read()
        text = raw.decode("utf-8-sig") if isinstance(raw, bytes) else raw.lstrip("﻿")
    else:
        text = Path(source).read_text(encoding="utf-8-sig")
    try:
        reader = csv.DictReader(io.StringIO(text))
        fieldnames = reader.fieldnames or []
        missing = [c for c in (name_column, domain_column) if c not in fieldnames]
        if missing:
            raise DirectoryError(f"seed CSV is missing column(s): {', '.join(missing)}")
        candidates: list[SeedCandidate] = []
        for row_number, row in enumerate(reader, start=2):
            name = (row.get(name_column) or "").strip()
            domain = (row.get(domain_column) or "").strip() or None
            candidates.append(SeedCandidate(row_number, name, domain))
        return candidates
    except csv.Error as exc:
        raise DirectoryError(f"malformed seed CSV: {exc}") from None


def load_municipality_catalog(
    source, id_column: str = "inegi_id", name_column: str = "name", state_column: str = "state_name"
) -> list[MunicipalityRecord]:
    """Read the INEGI municipality catalog (CSV: inegi_id,name[,state_name])."""
    if hasattr(source, "read"):
        raw = source.read()
        text = raw.decode("utf-8-sig") if isinstance(raw, bytes) else raw.lstrip("﻿")
    else:
        text = Path(source).read_text(encoding="utf-8-sig")
    reader = csv.DictReader(io.StringIO(text))
    fieldnames = reader.fieldnames or []
    missing = [c for c in (id_column, name_column) if c not in fieldnames]
    if missing:
        raise DirectoryError(f"catalog CSV is missing column(s): {', '.join(missing)}")
    records: list[MunicipalityRecord] = []
    for row_number, row in enumerate(reader, start=2):
        inegi_id = (row.get(id_column) or "").strip()
        name = (row.get(name_column) or "").strip()
        state = (row.get(state_column) or "").strip()
        if not inegi_id or not inegi_id.isdigit():
            raise DirectoryError(f"catalog row {row_number}: bad inegi_id {inegi_id!r}")
        if not name:
            raise DirectoryError(f"catalog row {row_number}: empty municipality name")
        records.append(MunicipalityRecord(inegi_id=inegi_id, name=name, state_name=state))
    catalog_by_name(records)  # enforces unique ids
    return records
