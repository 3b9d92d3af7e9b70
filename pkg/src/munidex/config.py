"""Pipeline configuration: UTF-8 key=value file plus flag overrides (flags win)."""

from __future__ import annotations

import datetime as dt
import os
from dataclasses import dataclass
from pathlib import Path

from .crawler import CrawlPolicy

ENV_OUTPUT = "MUNIDEX_OUTPUT"

DEFAULT_EXTENSIONS = frozenset({"html", "htm", "php", "jsp", "asp", "aspx"})

_PATH_KEYS = (
    "seed_csv",
    "inegi_catalog",
    "lexicon",
    "suspension_patterns",
    "geo_catalog",
    "base_url_map",
)
_KNOWN_KEYS = set(_PATH_KEYS) | {
    "output_dir",
    "geo_id_property",
    "geo_projection",
    "resolver",
    "max_depth",
    "max_files",
    "max_file_bytes",
    "allowed_extensions",
    "min_request_interval",
    "request_timeout",
    "honor_robots",
    "concurrency",
    "run_date",
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    seed_csv: Path
    inegi_catalog: Path
    output_dir: Path
    lexicon: Path | None = None  # None -> packaged Spanish lexicon
    suspension_patterns: Path | None = None  # None -> packaged patterns
    geo_catalog: Path | None = None
    geo_id_property: str = "inegi_id"
    geo_projection: str = "planar"
    resolver: str = "none"  # "none" | "fixture:<path>" | "online+cache:<path>"
    base_url_map: Path | None = None  # CSV domain,base_url (fixture serving)
    max_depth: int = 1
    max_files: int = 50
    max_file_bytes: int = 5 * 1024 * 1024
    allowed_extensions: frozenset[str] | None = DEFAULT_EXTENSIONS
    min_request_interval: float = 0.5
    request_timeout: float = 10.0
    honor_robots: bool = True
    concurrency: int = 4
    run_date: dt.date | None = None  # pins every timestamp for reproducible runs

    def crawl_policy(self) -> CrawlPolicy:
        return CrawlPolicy(
            max_depth=self.max_depth,
            max_files=self.max_files,
            max_file_bytes=self.max_file_bytes,
            allowed_extensions=self.allowed_extensions,
            min_request_interval=self.min_request_interval,
            request_timeout=self.request_timeout,
            honor_robots=self.honor_robots,
        )

    def run_date_string(self) -> str:
        return (self.run_date or dt.date.today()).isoformat()


def load_config_file(path: str | Path) -> dict[str, str]:
    """Parse key=value lines; `#` starts a comment, blank lines are ignored."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = value.strip()
    return values


def _parse_int(raw: str, key: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {raw!r}") from None


def _parse_float(raw: str, key: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {raw!r}") from None


def _parse_bool(raw: str, key: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key} must be a boolean, got {raw!r}")


def _parse_extensions(raw: str) -> frozenset[str] | None:
    if raw.strip().lower() == "all":
        return None
    parts = [p.strip().lstrip(".").lower() for p in raw.split(",")]
    return frozenset(p for p in parts if p)


def build_config(
    values: dict[str, str],
    *,
    base_dir: Path | None = None,
    overrides: dict[str, object] | None = None,
) -> PipelineConfig:
    """Merge file values with flag overrides and validate everything.

    Relative paths from the file resolve against base_dir (the config
    file's directory); override paths are used as given. The output
    directory falls back to $MUNIDEX_OUTPUT.
    """
    base = base_dir or Path.cwd()
    merged: dict[str, object] = {}
    for key, raw in values.items():
        if key in _PATH_KEYS:
            merged[key] = (base / raw) if not Path(raw).is_absolute() else Path(raw)
        elif key == "output_dir":
            merged[key] = (base / raw) if not Path(raw).is_absolute() else Path(raw)
        else:
            merged[key] = raw
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value

    def take_path(key: str, required: bool) -> Path | None:
        value = merged.get(key)
        if value is None:
            if required:
                raise ConfigError(f"missing required config key {key!r}")
            return None
        path = Path(value)
        if not path.exists():
            raise ConfigError(f"{key} path does not exist: {path}")
        return path

    output = merged.get("output_dir") or os.environ.get(ENV_OUTPUT)
    if not output:
        raise ConfigError("no output directory (set output_dir or $MUNIDEX_OUTPUT)")

    raw_run_date = merged.get("run_date")
    run_date: dt.date | None
    if raw_run_date in (None, ""):
        run_date = None
    elif isinstance(raw_run_date, dt.date):
        run_date = raw_run_date
    else:
        try:
            run_date = dt.date.fromisoformat(str(raw_run_date))
        except ValueError:
            raise ConfigError(f"run_date must be YYYY-MM-DD, got {raw_run_date!r}") from None

    resolver = str(merged.get("resolver", "none"))
    if resolver != "none":
        mode, _, path = resolver.partition(":")
        if mode not in ("fixture", "online+cache") or not path:
            raise ConfigError(
                f"resolver must be none, fixture:<path> or online+cache:<path>, got {resolver!r}"
            )
        if mode == "fixture" and not Path(path).exists():
            raise ConfigError(f"resolver path does not exist: {path}")

    def as_int(key: str, default: int) -> int:
        value = merged.get(key)
        if value is None:
            return default
        return value if isinstance(value, int) else _parse_int(str(value), key)

    def as_float(key: str, default: float) -> float:
        value = merged.get(key)
        if value is None:
            return default
        return value if isinstance(value, float) else _parse_float(str(value), key)

    extensions = merged.get("allowed_extensions", DEFAULT_EXTENSIONS)
    if isinstance(extensions, str):
        extensions = _parse_extensions(extensions)

    honor_robots = merged.get("honor_robots", True)
    if isinstance(honor_robots, str):
        honor_robots = _parse_bool(honor_robots, "honor_robots")

    concurrency = as_int("concurrency", 4)
    if concurrency < 1:
        raise ConfigError("concurrency must be >= 1")

    config = PipelineConfig(
        seed_csv=take_path("seed_csv", required=True),
        inegi_catalog=take_path("inegi_catalog", required=True),
        output_dir=Path(output),
        lexicon=take_path("lexicon", required=False),
        suspension_patterns=take_path("suspension_patterns", required=False),
        geo_catalog=take_path("geo_catalog", required=False),
        geo_id_property=str(merged.get("geo_id_property", "inegi_id")),
        geo_projection=str(merged.get("geo_projection", "planar")),
        resolver=resolver,
        base_url_map=take_path("base_url_map", required=False),
        max_depth=as_int("max_depth", 1),
        max_files=as_int("max_files", 50),
        max_file_bytes=as_int("max_file_bytes", 5 * 1024 * 1024),
        allowed_extensions=extensions,
        min_request_interval=as_float("min_request_interval", 0.5),
        request_timeout=as_float("request_timeout", 10.0),
        honor_robots=bool(honor_robots),
        concurrency=concurrency,
        run_date=run_date,
    )
    return config


def load_config(path: str | Path | None, overrides: dict[str, object] | None = None) -> PipelineConfig:
    if path is not None:
        values = load_config_file(path)
        return build_config(values, base_dir=Path(path).resolve().parent, overrides=overrides)
    return build_config({}, overrides=overrides)
