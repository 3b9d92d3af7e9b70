"""HTTP liveness probing, suspension-page detection and hosting resolution."""

from __future__ import annotations

import csv
import datetime as dt
import io
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence
from urllib.parse import urlsplit

import requests

from .directory import HostingInfo, OperatingStatus
from .extract import normalize_text
from .textnorm import decode_bytes

log = logging.getLogger(__name__)

Clock = Callable[[], dt.datetime]


def _utcnow() -> dt.datetime:
    return dt.datetime.now(dt.timezone.utc)


@dataclass(frozen=True)
class ProbePolicy:
    connect_timeout: float = 5.0
    read_timeout: float = 15.0
    max_redirects: int = 10
    body_sample_bytes: int = 65536
    user_agent: str = "munidex/0.1 (municipal website indexer)"


@dataclass(frozen=True)
class ProbeResult:
    domain: str
    status: OperatingStatus
    http_status: int | None = None
    final_url: str | None = None
    scheme: str | None = None  # which scheme answered (https preferred)
    body_sample: str | None = None
    probed_at: dt.datetime | None = None


class SuspensionPatternSet:
    """Case/diacritic-insensitive suspension phrases (pre-folded at load)."""

    def __init__(self, patterns: Iterable[str]):
        folded = tuple(sorted({normalize_text(p) for p in patterns if p.strip()}))
        if not folded or any(not p for p in folded):
            raise ValueError("suspension pattern set must hold non-empty phrases")
        self.patterns: tuple[str, ...] = folded

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "SuspensionPatternSet":
        phrases = []
        for line in lines:
            stripped = line.strip()
            if stripped and not stripped.startswith("#"):
                phrases.append(stripped)
        return cls(phrases)

    @classmethod
    def load(cls, path: str | Path) -> "SuspensionPatternSet":
        """One phrase per line, `#` comments, UTF-8."""
        return cls.from_lines(Path(path).read_text(encoding="utf-8").splitlines())

    @classmethod
    def default(cls) -> "SuspensionPatternSet":
        text = resources.files("munidex.data").joinpath("suspension_patterns.txt").read_text("utf-8")
        return cls.from_lines(text.splitlines())


def detect_suspension(body_sample: str, patterns: SuspensionPatternSet) -> bool:
    """True iff any pattern occurs in the folded page text.

    The sample is normalized first, so phrases split by inline markup
    ("dominio <b>suspendido</b>") still match.
    """
    folded = normalize_text(body_sample)
    return any(pattern in folded for pattern in patterns.patterns)


def build_session(policy: ProbePolicy) -> requests.Session:
    session = requests.Session()
    session.max_redirects = policy.max_redirects
    session.headers["User-Agent"] = policy.user_agent
    return session


def _read_body_sample(response: requests.Response, limit: int) -> bytes:
    chunks: list[bytes] = []
    total = 0
    for chunk in response.iter_content(8192):
        if not chunk:
            continue
        chunks.append(chunk)
        total += len(chunk)
        if total >= limit:
            break
    return b"".join(chunks)[:limit]


def probe_domain(
    domain: str,
    policy: ProbePolicy = ProbePolicy(),
    *,
    patterns: SuspensionPatternSet | None = None,
    session: requests.Session | None = None,
    base_urls: Sequence[str] | None = None,
    clock: Clock | None = None,
) -> ProbeResult:
    """Classify one domain as working / not working / suspended.

    Tries HTTPS first and falls back to HTTP only on transport failures
    (DNS, connect, TLS, timeout); an HTTP-level answer on HTTPS is final.
    A 2xx body matching a suspension phrase is suspended; 4xx/5xx and all
    transport failures are not working. Never raises.
    """
    patterns = patterns or SuspensionPatternSet.default()
    now = clock or _utcnow
    probed_at = now()
    candidates = tuple(base_urls) if base_urls else (f"https://{domain}/", f"http://{domain}/")
    sess = session or build_session(policy)
    for url in candidates:
        try:
            response = sess.get(
                url,
                timeout=(policy.connect_timeout, policy.read_timeout),
                stream=True,
                allow_redirects=True,
            )
        except requests.RequestException as exc:
            log.info("probe %s via %s failed: %s", domain, url, exc)
            continue
        try:
            raw_sample = _read_body_sample(response, policy.body_sample_bytes)
        except requests.RequestException:
            raw_sample = b""
        finally:
            response.close()
        sample = decode_bytes(raw_sample) if raw_sample else ""
        scheme = urlsplit(url).scheme
        code = response.status_code
        if 200 <= code < 300 and sample and detect_suspension(sample, patterns):
            status = OperatingStatus.SUSPENDED
        elif 200 <= code < 400:
            status = OperatingStatus.WORKING
        else:
            status = OperatingStatus.NOT_WORKING
        return ProbeResult(
            domain=domain,
            status=status,
            http_status=code,
            final_url=response.url,
            scheme=scheme,
            body_sample=sample or None,
            probed_at=probed_at,
        )
    return ProbeResult(domain=domain, status=OperatingStatus.NOT_WORKING, probed_at=probed_at)


class HostingResolver(Protocol):
    def resolve(self, domain: str) -> HostingInfo: ...


class FixtureHostingResolver:
    """Offline domain -> (provider, country) map; the default resolver, so
    tests and air-gapped runs never touch external services."""

    def __init__(self, mapping: dict[str, HostingInfo] | None = None):
        self._map = dict(mapping or {})

    @classmethod
    def load(cls, path: str | Path) -> "FixtureHostingResolver":
        """CSV with header domain,provider,country."""
        text = Path(path).read_text(encoding="utf-8-sig")
        reader = csv.DictReader(io.StringIO(text))
        fields = reader.fieldnames or []
        missing = [c for c in ("domain", "provider", "country") if c not in fields]
        if missing:
            raise ValueError(f"resolver map is missing column(s): {', '.join(missing)}")
        mapping: dict[str, HostingInfo] = {}
        for row in reader:
            domain = (row.get("domain") or "").strip()
            provider = (row.get("provider") or "").strip() or None
            country = (row.get("country") or "").strip() or None
            if domain:
                mapping[domain] = HostingInfo(provider, country if provider else None)
        return cls(mapping)

    def resolve(self, domain: str) -> HostingInfo:
        return self._map.get(domain, HostingInfo())


class NullHostingResolver:
    """Resolves nothing; stands in when no hosting source is configured."""

    def resolve(self, domain: str) -> HostingInfo:
        return HostingInfo()


class CachedHostingResolver:
    """Recorded-response cache in front of any resolver.

    Hits are answered from the CSV cache; misses are delegated and the
    answer appended, so an online resolver is consulted at most once per
    domain across runs.
    """

    def __init__(self, inner: HostingResolver, cache_path: str | Path):
        self._inner = inner
        self._path = Path(cache_path)
        self._cache: dict[str, HostingInfo] = {}
        if self._path.exists():
            self._cache = dict(FixtureHostingResolver.load(self._path)._map)

    def resolve(self, domain: str) -> HostingInfo:
        if domain in self._cache:
            return self._cache[domain]
        info = self._inner.resolve(domain)
        self._cache[domain] = info
        self._append(domain, info)
        return info

    def _append(self, domain: str, info: HostingInfo) -> None:
        new_file = not self._path.exists()
        with self._path.open("a", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            if new_file:
                writer.writerow(["domain", "provider", "country"])
            writer.writerow([domain, info.provider_name or "", info.country or ""])


def resolve_hosting(domain: str, resolver: HostingResolver) -> HostingInfo:
    """Resolver misses and failures yield absent fields, never an error."""
    try:
        return resolver.resolve(domain)
    except Exception as exc:  # resolver internals must not break the pipeline
        log.warning("hosting resolution for %s failed: %s", domain, exc)
        return HostingInfo()
