"""Command-line entry point: stage subcommands plus the full `run` pipeline.

Exit codes: 0 ok, 1 configuration error (including missing prerequisite
artifacts), 2 total pipeline failure.
"""

from __future__ import annotations

import io
import logging
import sys
from pathlib import Path

import click

from .config import ConfigError, load_config
from .directory import DirectoryError
from .pipeline import (
    MissingArtifactError,
    PipelineError,
    export_fields,
    run_pipeline,
    stage_analyze,
    stage_classify,
    stage_crawl,
    stage_extract,
    stage_map,
    stage_probe,
    stage_validate,
)

_CONFIG_OPTIONS = [
    click.option("--config", "-c", "config_path", type=click.Path(), help="key=value config file"),
    click.option("--seed", "seed_csv", type=click.Path(), help="seed CSV (municipality,domain)"),
    click.option("--catalog", "inegi_catalog", type=click.Path(), help="INEGI municipality catalog CSV"),
    click.option("--output", "-o", "output_dir", type=click.Path(), help="output directory ($MUNIDEX_OUTPUT fallback)"),
    click.option("--lexicon", type=click.Path(), help="cue lexicon TSV (default: packaged Spanish lexicon)"),
    click.option("--patterns", "suspension_patterns", type=click.Path(), help="suspension phrase file"),
    click.option("--geojson", "geo_catalog", type=click.Path(), help="GeoJSON municipal geometry"),
    click.option("--geo-id-property", help="feature property holding the INEGI id"),
    click.option("--geo-projection", type=click.Choice(["planar", "lonlat"]), help="geometry projection"),
    click.option("--resolver", help="hosting resolver: none, fixture:<csv> or online+cache:<csv>"),
    click.option("--base-url-map", type=click.Path(), help="CSV domain,base_url overriding probe/crawl URLs"),
    click.option("--max-depth", type=int, help="crawl depth limit"),
    click.option("--max-files", type=int, help="crawl file-count limit per site"),
    click.option("--max-file-bytes", type=int, help="per-file size limit"),
    click.option("--extensions", "allowed_extensions", help='comma list of extensions, or "all"'),
    click.option("--request-interval", "min_request_interval", type=float, help="seconds between requests to one site"),
    click.option("--request-timeout", type=float, help="HTTP timeout in seconds"),
    click.option("--ignore-robots", "honor_robots", flag_value=False, default=None, help="ignore robots.txt Disallow rules"),
    click.option("--concurrency", type=int, help="parallel site workers"),
    click.option("--run-date", help="YYYY-MM-DD; pins all timestamps for reproducible runs"),
]


def _with_config_options(command):
    for option in reversed(_CONFIG_OPTIONS):
        command = option(command)
    return command


def _build_config(config_path, **overrides):
    cleaned = {}
    for key, value in overrides.items():
        if value is None:
            continue
        if key in ("seed_csv", "inegi_catalog", "output_dir", "lexicon", "suspension_patterns",
                   "geo_catalog", "base_url_map"):
            cleaned[key] = Path(value)
        else:
            cleaned[key] = value
    try:
        return load_config(config_path, cleaned)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(1)


def _run_stage(stage, config):
    try:
        message = stage(config)
    except (ConfigError, MissingArtifactError, DirectoryError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    except PipelineError as exc:
        click.echo(f"pipeline failure: {exc}", err=True)
        sys.exit(2)
    click.echo(message)


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="log progress details")
def main(verbose: bool) -> None:
    """Index, archive and analyze municipal e-government websites."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def _stage_command(name: str, stage, help_text: str):
    @main.command(name=name, help=help_text)
    @_with_config_options
    def command(config_path, **overrides):
        config = _build_config(config_path, **overrides)
        _run_stage(stage, config)

    return command


_stage_command("validate", stage_validate, "Validate seed domains and join the INEGI catalog.")
_stage_command("probe", stage_probe, "Probe operating status and hosting; writes directory.csv.")
_stage_command("crawl", stage_crawl, "Download bounded replicas of working sites.")
_stage_command("extract", stage_extract, "Extract menu section titles and government periods.")
_stage_command("classify", stage_classify, "Classify evolution development levels from cue phrases.")
_stage_command("map", stage_map, "Render choropleth maps (needs a geo catalog).")


@main.command(name="analyze", help="Produce Pareto tables and bar charts.")
@_with_config_options
def analyze_command(config_path, **overrides):
    config = _build_config(config_path, **overrides)
    _run_stage(stage_analyze, config)
    from .analytics import format_text_table, read_pareto_csv

    for path in sorted((config.output_dir / "pareto").glob("*.csv")):
        click.echo("")
        click.echo(format_text_table(read_pareto_csv(path)), nl=False)


@main.command(name="run", help="Run the whole pipeline end to end.")
@_with_config_options
def run_command(config_path, **overrides):
    config = _build_config(config_path, **overrides)
    try:
        for message in run_pipeline(config):
            click.echo(message)
    except (ConfigError, MissingArtifactError, DirectoryError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    except PipelineError as exc:
        click.echo(f"pipeline failure: {exc}", err=True)
        sys.exit(2)


@main.command(name="export", help="Export selected directory columns as CSV.")
@click.option("--fields", required=True, help="comma-separated directory columns")
@click.option("--out", type=click.Path(), help="write to a file instead of stdout")
@_with_config_options
def export_command(fields, out, config_path, **overrides):
    config = _build_config(config_path, **overrides)
    field_list = [f.strip() for f in fields.split(",") if f.strip()]
    try:
        if out:
            export_fields(config, field_list, out)
            click.echo(f"wrote {out}")
        else:
            buffer = io.BytesIO()
            export_fields(config, field_list, buffer)
            click.echo(buffer.getvalue().decode("utf-8"), nl=False)
    except (MissingArtifactError, DirectoryError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    except PipelineError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
