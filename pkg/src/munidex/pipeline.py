"""Stage orchestration: ingest, validate, probe, crawl, extract, classify,
analyze, map. Every stage reads the previous stage's on-disk artifacts and
rewrites its own deterministically, so stages are independently re-runnable
and `run` equals the stage sequence."""

from __future__ import annotations

import csv
import datetime as dt
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from . import analytics, classify, crawler, extract, geomap, probe
from .config import PipelineConfig
from .directory import (
    DIRECTORY_COLUMNS,
    DirectoryEntry,
    DomainValidationError,
    HostingInfo,
    MunicipalityRecord,
    OperatingStatus,
    check_completeness,
    export_directory_csv,
    import_directory_csv,
    import_seed_list,
    load_municipality_catalog,
    match_catalog_name,
    validate_official_domain,
    catalog_by_name,
    fold_municipality_name,
)

log = logging.getLogger(__name__)

VALIDATED_CSV = "validated.csv"
DIRECTORY_CSV = "directory.csv"
PROBES_CSV = "probes.csv"
SECTIONS_CSV = "sections.csv"
REPLICAS_DIR = "replicas"
PARETO_DIR = "pareto"
MAPS_DIR = "maps"
COVERAGE_TXT = "coverage.txt"
REPORT_TXT = "report.txt"

VALIDATED_COLUMNS = (
    "seed_row",
    "municipality",
    "inegi_id",
    "join",
    "raw_domain",
    "domain",
    "result",
    "detail",
)
PROBE_COLUMNS = ("inegi_id", "domain", "status", "scheme", "http_status", "final_url", "probed_at")


class MissingArtifactError(RuntimeError):
    """A stage prerequisite file is absent; the message names it."""


class PipelineError(RuntimeError):
    """Total pipeline failure."""


def _fixed_clock(config: PipelineConfig):
    if config.run_date is None:
        return None
    instant = dt.datetime.combine(config.run_date, dt.time(0, 0), tzinfo=dt.timezone.utc)
    return lambda: instant


def _require(path: Path, label: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(f"missing {label}: {path} (run the earlier stages first)")
    return path


def _read_entries(config: PipelineConfig) -> list[DirectoryEntry]:
    return import_directory_csv(_require(config.output_dir / DIRECTORY_CSV, DIRECTORY_CSV))


def _load_base_url_map(path: Path | None) -> dict[str, str]:
    if path is None:
        return {}
    reader = csv.DictReader(io.StringIO(path.read_text(encoding="utf-8-sig")))
    fields = reader.fieldnames or []
    if "domain" not in fields or "base_url" not in fields:
        raise PipelineError(f"base_url_map {path} needs columns domain,base_url")
    return {
        (row.get("domain") or "").strip(): (row.get("base_url") or "").strip()
        for row in reader
        if (row.get("domain") or "").strip()
    }


def _resolver_for(config: PipelineConfig) -> probe.HostingResolver:
    if config.resolver == "none":
        return probe.NullHostingResolver()
    mode, _, path = config.resolver.partition(":")
    if mode == "fixture":
        return probe.FixtureHostingResolver.load(path)
    # online+cache: answers come from the recorded-response cache; there is
    # no live resolver in this build, so cold domains resolve to absent.
    return probe.CachedHostingResolver(probe.NullHostingResolver(), path)


def _patterns_for(config: PipelineConfig) -> probe.SuspensionPatternSet:
    if config.suspension_patterns is not None:
        return probe.SuspensionPatternSet.load(config.suspension_patterns)
    return probe.SuspensionPatternSet.default()


def _lexicon_for(config: PipelineConfig) -> classify.CueLexicon:
    if config.lexicon is not None:
        return classify.load_lexicon(config.lexicon)
    return classify.default_lexicon()


# ---------------------------------------------------------------- validate

@dataclass(frozen=True)
class _ValidatedRow:
    seed_row: int
    municipality: str
    inegi_id: str
    join: str  # "ok" | "no_match" | "ambiguous:<ids>"
    raw_domain: str
    domain: str  # canonical form when official, else ""
    result: str  # "official" | "unofficial" | "malformed" | "missing"
    detail: str


def stage_validate(config: PipelineConfig) -> str:
    """Seed ingestion + official-domain validation + catalog join."""
    seeds = import_seed_list(config.seed_csv)
    catalog = load_municipality_catalog(config.inegi_catalog)
    by_name = catalog_by_name(catalog)

    rows: list[_ValidatedRow] = []
    chosen: set[str] = set()  # municipality keys that already have a selected domain
    for seed in seeds:
        outcome = match_catalog_name(seed.name, by_name)
        if isinstance(outcome, MunicipalityRecord):
            inegi_id, join = outcome.inegi_id, "ok"
        else:
            inegi_id = ""
            join = outcome.reason
            if outcome.candidates:
                join += ":" + ",".join(outcome.candidates)
        key = fold_municipality_name(seed.name)
        if seed.domain is None:
            rows.append(_ValidatedRow(seed.row_number, seed.name, inegi_id, join, "", "", "missing", ""))
            continue
        try:
            check = validate_official_domain(seed.domain)
        except DomainValidationError as exc:
            rows.append(
                _ValidatedRow(seed.row_number, seed.name, inegi_id, join, seed.domain, "", "malformed", str(exc))
            )
            continue
        if not check.official:
            rows.append(
                _ValidatedRow(
                    seed.row_number, seed.name, inegi_id, join, seed.domain, "", "unofficial", check.reason or ""
                )
            )
            continue
        detail = ""
        if key in chosen:
            detail = "not selected (municipality already has a domain)"
        else:
            chosen.add(key)
        rows.append(
            _ValidatedRow(seed.row_number, seed.name, inegi_id, join, seed.domain, check.domain or "", "official", detail)
        )

    config.output_dir.mkdir(parents=True, exist_ok=True)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(VALIDATED_COLUMNS)
    for row in rows:
        writer.writerow(
            [str(row.seed_row), row.municipality, row.inegi_id, row.join, row.raw_domain, row.domain, row.result, row.detail]
        )
    (config.output_dir / VALIDATED_CSV).write_text(buffer.getvalue(), encoding="utf-8")
    build_report(config)
    official = sum(1 for r in rows if r.result == "official")
    return f"validated {len(rows)} seed rows ({official} official candidates) -> {VALIDATED_CSV}"


def _read_validated(config: PipelineConfig) -> list[_ValidatedRow]:
    path = _require(config.output_dir / VALIDATED_CSV, VALIDATED_CSV)
    reader = csv.reader(io.StringIO(path.read_text(encoding="utf-8")))
    header = next(reader, None)
    if header is None or tuple(header) != VALIDATED_COLUMNS:
        raise PipelineError(f"unexpected {VALIDATED_CSV} header: {header}")
    return [
        _ValidatedRow(int(r[0]), r[1], r[2], r[3], r[4], r[5], r[6], r[7]) for r in reader if r
    ]


# ------------------------------------------------------------------- probe

@dataclass(frozen=True)
class _SiteCandidate:
    name: str  # catalog spelling when joined, else the seed spelling
    inegi_id: str
    domain: str | None  # selected canonical domain


def _site_candidates(config: PipelineConfig) -> list[_SiteCandidate]:
    """One candidate per municipality, in first-seen seed order."""
    rows = _read_validated(config)
    catalog = {m.inegi_id: m for m in load_municipality_catalog(config.inegi_catalog)}
    sites: dict[str, _SiteCandidate] = {}
    for row in rows:
        key = fold_municipality_name(row.municipality)
        name = catalog[row.inegi_id].name if row.inegi_id in catalog else row.municipality
        existing = sites.get(key)
        if row.result == "official" and not row.detail and (existing is None or existing.domain is None):
            sites[key] = _SiteCandidate(name, row.inegi_id, row.domain)
        elif existing is None:
            sites[key] = _SiteCandidate(name, row.inegi_id, None)
    return list(sites.values())


def stage_probe(config: PipelineConfig) -> str:
    """Probe operating status, resolve hosting, and write the directory."""
    sites = _site_candidates(config)
    catalog = load_municipality_catalog(config.inegi_catalog)
    clock = _fixed_clock(config)
    access_date = config.run_date or dt.date.today()
    patterns = _patterns_for(config)
    resolver = _resolver_for(config)
    base_urls = _load_base_url_map(config.base_url_map)
    policy = probe.ProbePolicy(
        connect_timeout=min(config.request_timeout, 5.0), read_timeout=config.request_timeout
    )

    def probe_one(site: _SiteCandidate) -> probe.ProbeResult | None:
        if site.domain is None:
            return None
        mapped = base_urls.get(site.domain)
        return probe.probe_domain(
            site.domain,
            policy,
            patterns=patterns,
            base_urls=(mapped,) if mapped else None,
            clock=clock,
        )

    with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
        results = list(pool.map(probe_one, sites))

    entries: list[DirectoryEntry] = []
    probe_rows: list[list[str]] = []
    for site, result in zip(sites, results):
        municipality = MunicipalityRecord(inegi_id=site.inegi_id, name=site.name)
        if result is None:
            entries.append(DirectoryEntry(municipality=municipality, status=OperatingStatus.NOT_FOUND))
            continue
        hosting = HostingInfo()
        if result.status is OperatingStatus.WORKING:
            hosting = probe.resolve_hosting(site.domain, resolver)
        entries.append(
            DirectoryEntry(
                municipality=municipality,
                status=result.status,
                domain=site.domain,
                access_date=access_date,
                hosting=hosting,
            )
        )
        probe_rows.append(
            [
                site.inegi_id,
                site.domain or "",
                result.status.value,
                result.scheme or "",
                "" if result.http_status is None else str(result.http_status),
                result.final_url or "",
                result.probed_at.isoformat() if result.probed_at else "",
            ]
        )

    probe_rows.sort(key=lambda r: (r[0], r[1]))
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(PROBE_COLUMNS)
    writer.writerows(probe_rows)
    (config.output_dir / PROBES_CSV).write_text(buffer.getvalue(), encoding="utf-8")

    export_directory_csv(entries, config.output_dir / DIRECTORY_CSV)
    build_report(config)
    working = sum(1 for e in entries if e.status is OperatingStatus.WORKING)
    return f"probed {len(probe_rows)} domains ({working} working) -> {DIRECTORY_CSV}, {PROBES_CSV}"


def _read_probe_map(config: PipelineConfig) -> dict[str, dict[str, str]]:
    path = config.output_dir / PROBES_CSV
    if not path.exists():
        return {}
    reader = csv.DictReader(io.StringIO(path.read_text(encoding="utf-8")))
    return {row["domain"]: row for row in reader if row.get("domain")}


# ------------------------------------------------------------------- crawl

def stage_crawl(config: PipelineConfig) -> str:
    """Download bounded replicas of every working site."""
    entries = _read_entries(config)
    probes = _read_probe_map(config)
    base_urls = _load_base_url_map(config.base_url_map)
    store = crawler.ReplicaStore(config.output_dir / REPLICAS_DIR)
    run_date = config.run_date_string()
    clock = _fixed_clock(config)
    policy = config.crawl_policy()

    targets = [e for e in entries if e.status is OperatingStatus.WORKING and e.domain]

    def crawl_one(entry: DirectoryEntry) -> crawler.ReplicaManifest | None:
        domain = entry.domain or ""
        probed = probes.get(domain, {})
        base = probed.get("final_url") or base_urls.get(domain) or f"https://{domain}/"
        writer = store.open_site(entry.municipality.inegi_id or domain, run_date)
        writer.reset()
        try:
            return crawler.crawl_site(
                domain,
                policy,
                writer,
                base_url=base,
                inegi_id=entry.municipality.inegi_id,
                clock=clock,
            )
        except Exception as exc:  # a site must never abort the run
            log.error("crawl of %s failed: %s", domain, exc)
            return None

    with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
        manifests = [m for m in pool.map(crawl_one, targets) if m is not None]

    build_report(config)
    stored = sum(len(m.resources) for m in manifests)
    return f"crawled {len(manifests)} sites ({stored} resources) -> {REPLICAS_DIR}/"


def _manifest_for(config: PipelineConfig, entry: DirectoryEntry) -> tuple[crawler.ReplicaManifest, Path] | None:
    store = crawler.ReplicaStore(config.output_dir / REPLICAS_DIR)
    run_dir = store.latest_run(entry.municipality.inegi_id or (entry.domain or ""))
    if run_dir is None:
        return None
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        return None
    return crawler.load_manifest(manifest_path), run_dir / "files"


# ----------------------------------------------------------------- extract

def _depth_text(manifest: crawler.ReplicaManifest, files_dir: Path, depth: int) -> str:
    chunks: list[str] = []
    for res in manifest.resources:
        if res.depth != depth or not classify.looks_htmlish(res.media_type, res.local_path):
            continue
        try:
            chunks.append((files_dir / res.local_path).read_bytes().decode("utf-8", "replace"))
        except OSError:
            continue
    return extract.normalize_text(" ".join(chunks)) if chunks else ""


def stage_extract(config: PipelineConfig) -> str:
    """Menu section titles and government periods from the stored replicas."""
    entries = _read_entries(config)
    reference_year = (config.run_date or dt.date.today()).year
    section_rows: list[extract.SectionRow] = []
    updated: list[DirectoryEntry] = []
    extracted = 0
    for entry in entries:
        if entry.status is not OperatingStatus.WORKING:
            updated.append(entry)
            continue
        located = _manifest_for(config, entry)
        if located is None:
            updated.append(entry)
            continue
        manifest, files_dir = located
        homepage = next((r for r in manifest.resources if r.depth == 0), None)
        if homepage is None:
            updated.append(entry)
            continue
        try:
            homepage_html = (files_dir / homepage.local_path).read_bytes()
        except OSError:
            updated.append(entry)
            continue
        titles = extract.extract_main_menu_titles(homepage_html)
        for position, title in enumerate(titles.titles, start=1):
            section_rows.append(
                extract.SectionRow(
                    entry.municipality.inegi_id, entry.domain or "", position, title, titles.source
                )
            )
        period = extract.extract_government_period(
            _depth_text(manifest, files_dir, 0), reference_year=reference_year
        )
        if not period.specified:
            period = extract.extract_government_period(
                _depth_text(manifest, files_dir, 1), reference_year=reference_year
            )
        updated.append(replace(entry, period=period, section_count=len(titles.titles)))
        extracted += 1

    section_rows.sort(key=lambda r: (r.inegi_id, r.position))
    extract.write_sections_csv(section_rows, config.output_dir / SECTIONS_CSV)
    export_directory_csv(updated, config.output_dir / DIRECTORY_CSV)
    build_report(config)
    return f"extracted {len(section_rows)} section titles from {extracted} sites -> {SECTIONS_CSV}"


# ---------------------------------------------------------------- classify

def stage_classify(config: PipelineConfig) -> str:
    """Assign evolution development levels from cue hits in replica sources."""
    entries = _read_entries(config)
    lexicon = _lexicon_for(config)
    updated: list[DirectoryEntry] = []
    classified = 0
    for entry in entries:
        if entry.status is not OperatingStatus.WORKING:
            updated.append(entry)
            continue
        located = _manifest_for(config, entry)
        if located is None:
            updated.append(entry)
            continue
        manifest, files_dir = located
        hits, scanned = classify.scan_cues(manifest, files_dir, lexicon)
        if scanned == 0:  # nothing stored to judge; leave the level absent
            updated.append(entry)
            continue
        classification = classify.classify_site(hits, scanned)
        updated.append(replace(entry, level=classification.level))
        classified += 1
    export_directory_csv(updated, config.output_dir / DIRECTORY_CSV)
    build_report(config)
    return f"classified {classified} working sites -> {DIRECTORY_CSV}"


# ----------------------------------------------------------------- analyze

def stage_analyze(config: PipelineConfig) -> str:
    """Pareto tables (CSV + SVG bar charts) over the directory and sections."""
    entries = _read_entries(config)
    sections = extract.read_sections_csv(_require(config.output_dir / SECTIONS_CSV, SECTIONS_CSV))

    per_site: dict[str, list[str]] = {}
    for row in sections:
        per_site.setdefault(row.inegi_id or row.domain, []).append(row.title)

    tables = {
        "status": analytics.pareto([e.status.value for e in entries], "status"),
        "government_period": analytics.pareto([e.period.render() for e in entries], "government_period"),
        "hosting_provider": analytics.pareto([e.hosting.provider_name for e in entries], "hosting_provider"),
        "hosting_country": analytics.pareto([e.hosting.country for e in entries], "hosting_country"),
        "section_titles": analytics.title_frequency(per_site.values()),
        "sections_per_site": analytics.sections_per_site_histogram(
            e.section_count for e in entries if e.section_count is not None
        ),
    }
    pareto_dir = config.output_dir / PARETO_DIR
    pareto_dir.mkdir(parents=True, exist_ok=True)
    for name, table in tables.items():
        analytics.write_pareto_csv(table, pareto_dir / f"{name}.csv")
        (pareto_dir / f"{name}.svg").write_text(analytics.render_bar_chart(table), encoding="utf-8")
    build_report(config)
    return f"wrote {len(tables)} pareto tables -> {PARETO_DIR}/"


# --------------------------------------------------------------------- map

def stage_map(config: PipelineConfig) -> str:
    """Choropleth SVGs for the status, period and level dimensions."""
    if config.geo_catalog is None:
        raise MissingArtifactError("missing geo_catalog: configure one to render maps")
    entries = _read_entries(config)
    catalog = geomap.load_geo_catalog(
        config.geo_catalog, id_property=config.geo_id_property, projection=config.geo_projection
    )
    maps_dir = config.output_dir / MAPS_DIR
    maps_dir.mkdir(parents=True, exist_ok=True)
    warnings: set[str] = set()
    for dimension in geomap.DIMENSIONS:
        style = geomap.style_for(dimension, entries)
        rendered = geomap.render_choropleth(catalog, entries, style, maps_dir / f"{dimension}.svg")
        warnings.update(rendered.missing_geometry)
    lines = [f"entry {inegi_id} has no geometry in the geo catalog" for inegi_id in sorted(warnings)]
    (maps_dir / COVERAGE_TXT).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    build_report(config)
    return f"rendered {len(geomap.DIMENSIONS)} choropleth maps -> {MAPS_DIR}/"


# ------------------------------------------------------------------ export

def export_fields(config: PipelineConfig, fields: list[str], sink) -> int:
    """Column-projected directory CSV, columns kept in schema order."""
    unknown = [f for f in fields if f not in DIRECTORY_COLUMNS]
    if unknown:
        raise PipelineError(f"unknown directory field(s): {', '.join(unknown)}")
    wanted = [c for c in DIRECTORY_COLUMNS if c in set(fields)]
    entries = _read_entries(config)
    full = io.StringIO()
    export_directory_csv(entries, _BytesOverStr(full))
    reader = csv.reader(io.StringIO(full.getvalue()))
    header = next(reader)
    indexes = [header.index(c) for c in wanted]
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(wanted)
    for row in reader:
        writer.writerow([row[i] for i in indexes])
    data = out.getvalue().encode("utf-8")
    if hasattr(sink, "write"):
        sink.write(data)
    else:
        Path(sink).write_bytes(data)
    return len(data)


class _BytesOverStr:
    """Adapts a text buffer to the byte-sink interface of the exporters."""

    def __init__(self, buffer: io.StringIO):
        self._buffer = buffer

    def write(self, data: bytes) -> None:
        self._buffer.write(data.decode("utf-8"))


# ------------------------------------------------------------------ report

def build_report(config: PipelineConfig) -> None:
    """Regenerate report.txt from whatever artifacts exist right now."""
    lines: list[str] = ["munidex pipeline report", "=======================", ""]
    catalog: list[MunicipalityRecord] = []
    try:
        catalog = load_municipality_catalog(config.inegi_catalog)
    except Exception:
        lines.append("catalog unreadable")

    directory_path = config.output_dir / DIRECTORY_CSV
    if directory_path.exists():
        entries = import_directory_csv(directory_path)
        report = check_completeness(entries, catalog)
        counts = {status: 0 for status in OperatingStatus}
        for entry in entries:
            counts[entry.status] += 1
        lines.append(f"Catalog municipalities : {len(catalog)}")
        lines.append(f"Directory entries      : {len(entries)}")
        for status in OperatingStatus:
            lines.append(f"  {status.value:<12}: {counts[status]}")
        lines.append("")
        lines.append(f"Municipalities with no directory entry ({len(report.missing)}):")
        for record in report.missing:
            lines.append(f"  - {record.inegi_id}  {record.name}")
        lines.append("")
        lines.append(f"Validity violations, suspended or not working ({len(report.invalid)}):")
        for entry in report.invalid:
            lines.append(
                f"  - {entry.municipality.inegi_id}  {entry.domain or ''}  {entry.status.value}"
            )
        lines.append("")
        lines.append(f"Stop condition, no domain discovered ({len(report.stop_condition)}):")
        for entry in report.stop_condition:
            lines.append(f"  - {entry.municipality.inegi_id}  {entry.municipality.name}")
        lines.append("")
    else:
        lines.append("directory.csv not yet produced")
        lines.append("")

    validated_path = config.output_dir / VALIDATED_CSV
    if validated_path.exists():
        rows = _read_validated(config)
        unresolved = [r for r in rows if r.join != "ok"]
        lines.append(f"Unresolved catalog joins ({len(unresolved)}):")
        for row in unresolved:
            lines.append(f"  - {row.municipality}  [{row.join}]")
        lines.append("")

    coverage_path = config.output_dir / MAPS_DIR / COVERAGE_TXT
    if coverage_path.exists():
        coverage = [l for l in coverage_path.read_text(encoding="utf-8").splitlines() if l]
        lines.append(f"Choropleth coverage warnings ({len(coverage)}):")
        lines.extend(f"  - {line}" for line in coverage)
        lines.append("")

    config.output_dir.mkdir(parents=True, exist_ok=True)
    (config.output_dir / REPORT_TXT).write_text("\n".join(lines) + "\n", encoding="utf-8")


# --------------------------------------------------------------------- run

STAGES = (
    ("validate", stage_validate),
    ("probe", stage_probe),
    ("crawl", stage_crawl),
    ("extract", stage_extract),
    ("classify", stage_classify),
    ("analyze", stage_analyze),
    ("map", stage_map),
)


def run_pipeline(config: PipelineConfig) -> list[str]:
    """Execute every stage in order; maps are skipped without a geo catalog.

    Per-site failures never abort the run; unexpected stage-level errors
    surface as PipelineError (exit code 2 at the CLI).
    """
    summaries: list[str] = []
    for name, stage in STAGES:
        if name == "map" and config.geo_catalog is None:
            summaries.append("map skipped (no geo_catalog configured)")
            continue
        try:
            summaries.append(stage(config))
        except (MissingArtifactError, PipelineError):
            raise
        except Exception as exc:
            raise PipelineError(f"stage {name} failed: {exc}") from exc
    return summaries
