"""Bounded site replication: polite breadth-first crawling under user limits
on depth, file count, file size and file types, into a replica repository."""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import logging
import re
import shutil
import time
import urllib.robotparser
from collections import deque
from dataclasses import dataclass, field
from html.parser import HTMLParser
from pathlib import Path
from typing import Callable, Iterable
from urllib.parse import quote, urljoin, urlsplit, urlunsplit

import requests

from .textnorm import decode_bytes

log = logging.getLogger(__name__)

Clock = Callable[[], dt.datetime]

#: extensionless and page-like URLs are parsed for further links
PAGE_EXTENSIONS = frozenset({"html", "htm", "php", "jsp", "asp", "aspx"})

_MULTI_LABEL_SUFFIXES = {("gob", "mx"), ("com", "mx"), ("org", "mx"), ("net", "mx"), ("edu", "mx")}
_SKIP_SCHEMES = ("mailto:", "javascript:", "tel:", "data:")
_HEX = "0123456789abcdefABCDEF"
# RFC 3986 pchar plus "/" for paths
_PATH_SAFE = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-._~!$&'()*+,;=:@/")
_SEGMENT_SAFE = re.compile(r"[A-Za-z0-9._%~=@,;&$'()+\[\]-]")


def _utcnow() -> dt.datetime:
    return dt.datetime.now(dt.timezone.utc)


class CrawlError(RuntimeError):
    pass


@dataclass(frozen=True)
class CrawlPolicy:
    max_depth: int = 1
    max_files: int = 50
    max_file_bytes: int = 5 * 1024 * 1024
    allowed_extensions: frozenset[str] | None = None  # None means every file type
    min_request_interval: float = 0.5
    request_timeout: float = 10.0
    honor_robots: bool = True
    user_agent: str = "munidex/0.1 (municipal website indexer)"

    def __post_init__(self) -> None:
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.max_files < 1:
            raise ValueError("max_files must be positive")
        if self.max_file_bytes < 1:
            raise ValueError("max_file_bytes must be positive")


@dataclass(frozen=True)
class StoredResource:
    source_url: str
    depth: int
    local_path: str
    byte_length: int
    content_digest: str  # "sha256:<hex>" over the stored bytes
    media_type: str | None
    fetched_at: dt.datetime
    clipped: bool = False  # body was cut at max_file_bytes


@dataclass
class ReplicaManifest:
    domain: str
    inegi_id: str
    started_at: dt.datetime
    policy: CrawlPolicy
    resources: list[StoredResource] = field(default_factory=list)
    truncated: bool = False  # a depth or file-count limit skipped a link
    failure: str | None = None  # set when the homepage itself was unreachable


@dataclass(frozen=True)
class Skip:
    reason: str


def registrable_domain(host: str) -> str:
    """The owner-registered name: sub.muni.gob.mx -> muni.gob.mx. IP literals
    are their own registrable domain."""
    labels = host.lower().split(".")
    if all(label.isdigit() for label in labels):
        return host.lower()
    if len(labels) >= 3 and tuple(labels[-2:]) in _MULTI_LABEL_SUFFIXES:
        return ".".join(labels[-3:])
    if len(labels) >= 2:
        return ".".join(labels[-2:])
    return host.lower()


def _normalize_path(path: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(path):
        ch = path[i]
        if ch == "%" and i + 3 <= len(path) and path[i + 1] in _HEX and path[i + 2] in _HEX:
            out.append(path[i : i + 3].upper())
            i += 3
        elif ch in _PATH_SAFE:
            out.append(ch)
            i += 1
        else:
            out.append(quote(ch, safe=""))
            i += 1
    return "".join(out)


def normalize_url(base: str, href: str) -> str | Skip:
    """Resolve an href against the fetched page's final URL.

    Drops fragments, lowercases the host and normalizes percent escapes.
    Returns Skip for mailto:/javascript:/tel:/data:, fragment-only refs,
    unparseable hrefs and targets outside the base's registrable domain.
    """
    href = href.strip()
    if not href:
        return Skip("empty")
    lowered = href.lower()
    for prefix in _SKIP_SCHEMES:
        if lowered.startswith(prefix):
            return Skip(prefix.rstrip(":"))
    if href.startswith("#"):
        return Skip("fragment-only")
    try:
        absolute = urljoin(base, href)
        parts = urlsplit(absolute)
        host = parts.hostname
        port = parts.port
    except ValueError:
        return Skip("malformed")
    if parts.scheme not in ("http", "https"):
        return Skip(f"scheme:{parts.scheme or 'none'}")
    if not host:
        return Skip("malformed")
    try:
        base_host = urlsplit(base).hostname or ""
    except ValueError:
        return Skip("malformed")
    if registrable_domain(host) != registrable_domain(base_host):
        return Skip("cross-domain")
    default_port = 443 if parts.scheme == "https" else 80
    netloc = host.lower() if port in (None, default_port) else f"{host.lower()}:{port}"
    path = _normalize_path(parts.path) or "/"
    return urlunsplit((parts.scheme, netloc, path, parts.query, ""))


def extension_of(url: str) -> str:
    """Lowercased extension of the URL's last path segment, or ""."""
    path = urlsplit(url).path
    segment = path.rsplit("/", 1)[-1]
    if "." not in segment:
        return ""
    return segment.rsplit(".", 1)[-1].lower()


def extension_allowed(url: str, policy: CrawlPolicy) -> bool:
    if policy.allowed_extensions is None:
        return True
    ext = extension_of(url)
    if not ext:
        return True  # extensionless URLs are pages
    return ext in policy.allowed_extensions


def should_fetch(url: str, depth: int, policy: CrawlPolicy, already_stored: Iterable[str]) -> bool:
    """The crawl admission rule for one normalized URL."""
    stored = set(already_stored)
    if depth > policy.max_depth:
        return False
    if len(stored) >= policy.max_files:
        return False
    if url in stored:
        return False
    return extension_allowed(url, policy)


class _LinkCollector(HTMLParser):
    _TAG_ATTRS = {"a": "href", "img": "src", "link": "href", "script": "src"}

    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.links: list[str] = []

    def handle_starttag(self, tag, attrs):
        wanted = self._TAG_ATTRS.get(tag)
        if not wanted:
            return
        for name, value in attrs:
            if name == wanted and value:
                self.links.append(value)
                break


def extract_links(html: str) -> list[str]:
    """href/src values of a, img, link and script elements, document order."""
    collector = _LinkCollector()
    collector.feed(html)
    collector.close()
    return collector.links


def _sanitize_segment(segment: str) -> str:
    if segment == "..":
        return "%2E%2E"
    out = []
    for ch in segment:
        out.append(ch if _SEGMENT_SAFE.fullmatch(ch) else quote(ch, safe=""))
    return "".join(out) or "_"


def local_path_for(url: str) -> str:
    """Repository-relative path for a URL; directory URLs become index.html
    and the query string, when present, is folded into the file name."""
    parts = urlsplit(url)
    raw_path = parts.path or "/"
    segments = [seg for seg in raw_path.split("/") if seg and seg != "."]
    if raw_path.endswith("/") or not segments:
        segments.append("index.html")
    safe = [_sanitize_segment(seg) for seg in segments]
    if parts.query:
        safe[-1] = safe[-1] + "%3F" + quote(parts.query, safe="")
    return "/".join(safe)


class SiteReplicaWriter:
    """Write-once file store for one site crawl: <dir>/files/ + manifest.json."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.files_dir = self.directory / "files"
        self._used: set[str] = set()

    def reset(self) -> None:
        if self.directory.exists():
            shutil.rmtree(self.directory)
        self._used.clear()

    def reserve_path(self, url: str) -> str:
        candidate = local_path_for(url)
        if candidate in self._used:
            stem, dot, ext = candidate.rpartition(".")
            n = 2
            while candidate in self._used:
                candidate = f"{stem}-{n}{dot}{ext}" if dot else f"{candidate}-{n}"
                n += 1
        self._used.add(candidate)
        return candidate

    def write(self, local_path: str, data: bytes) -> None:
        target = self.files_dir / local_path
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(data)

    def write_manifest(self, manifest: ReplicaManifest) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        (self.directory / "manifest.json").write_text(manifest_to_json(manifest), encoding="utf-8")


class ReplicaStore:
    """Replica repository root: replicas/<inegi_id>/<run-date>/."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def open_site(self, inegi_id: str, run_date: str) -> SiteReplicaWriter:
        return SiteReplicaWriter(self.root / inegi_id / run_date)

    def latest_run(self, inegi_id: str) -> Path | None:
        site_dir = self.root / inegi_id
        if not site_dir.is_dir():
            return None
        runs = sorted(p for p in site_dir.iterdir() if p.is_dir())
        return runs[-1] if runs else None


def _policy_to_dict(policy: CrawlPolicy) -> dict:
    return {
        "max_depth": policy.max_depth,
        "max_files": policy.max_files,
        "max_file_bytes": policy.max_file_bytes,
        "allowed_extensions": (
            "all" if policy.allowed_extensions is None else sorted(policy.allowed_extensions)
        ),
        "min_request_interval": policy.min_request_interval,
        "request_timeout": policy.request_timeout,
        "honor_robots": policy.honor_robots,
        "user_agent": policy.user_agent,
    }


def _policy_from_dict(data: dict) -> CrawlPolicy:
    extensions = data.get("allowed_extensions", "all")
    return CrawlPolicy(
        max_depth=data["max_depth"],
        max_files=data["max_files"],
        max_file_bytes=data["max_file_bytes"],
        allowed_extensions=None if extensions == "all" else frozenset(extensions),
        min_request_interval=data.get("min_request_interval", 0.5),
        request_timeout=data.get("request_timeout", 10.0),
        honor_robots=data.get("honor_robots", True),
        user_agent=data.get("user_agent", CrawlPolicy().user_agent),
    )


def manifest_to_json(manifest: ReplicaManifest) -> str:
    payload = {
        "domain": manifest.domain,
        "inegi_id": manifest.inegi_id,
        "started_at": manifest.started_at.isoformat(),
        "policy": _policy_to_dict(manifest.policy),
        "truncated": manifest.truncated,
        "failure": manifest.failure,
        "resources": [
            {
                "source_url": res.source_url,
                "depth": res.depth,
                "local_path": res.local_path,
                "byte_length": res.byte_length,
                "content_digest": res.content_digest,
                "media_type": res.media_type,
                "fetched_at": res.fetched_at.isoformat(),
                "clipped": res.clipped,
            }
            for res in manifest.resources
        ],
    }
    return json.dumps(payload, ensure_ascii=False, indent=2) + "\n"


def manifest_from_json(text: str) -> ReplicaManifest:
    data = json.loads(text)
    manifest = ReplicaManifest(
        domain=data["domain"],
        inegi_id=data["inegi_id"],
        started_at=dt.datetime.fromisoformat(data["started_at"]),
        policy=_policy_from_dict(data["policy"]),
        truncated=data.get("truncated", False),
        failure=data.get("failure"),
    )
    for res in data.get("resources", []):
        manifest.resources.append(
            StoredResource(
                source_url=res["source_url"],
                depth=res["depth"],
                local_path=res["local_path"],
                byte_length=res["byte_length"],
                content_digest=res["content_digest"],
                media_type=res.get("media_type"),
                fetched_at=dt.datetime.fromisoformat(res["fetched_at"]),
                clipped=res.get("clipped", False),
            )
        )
    return manifest


def load_manifest(path: str | Path) -> ReplicaManifest:
    return manifest_from_json(Path(path).read_text(encoding="utf-8"))


@dataclass
class _Fetched:
    final_url: str
    data: bytes
    media_type: str | None
    clipped: bool


def build_session(policy: CrawlPolicy) -> requests.Session:
    session = requests.Session()
    session.headers["User-Agent"] = policy.user_agent
    return session


def _fetch(session: requests.Session, url: str, policy: CrawlPolicy) -> _Fetched:
    try:
        response = session.get(url, timeout=policy.request_timeout, stream=True, allow_redirects=True)
    except requests.RequestException as exc:
        raise CrawlError(str(exc)) from exc
    try:
        if response.status_code >= 400:
            raise CrawlError(f"HTTP {response.status_code}")
        limit = policy.max_file_bytes
        data = b""
        for chunk in response.iter_content(65536):
            data += chunk
            if len(data) > limit:
                break
        clipped = len(data) > limit
        media_type = (response.headers.get("Content-Type") or "").split(";")[0].strip() or None
        return _Fetched(response.url, data[:limit], media_type, clipped)
    finally:
        response.close()


def _is_html(fetched: _Fetched) -> bool:
    if fetched.media_type:
        return "html" in fetched.media_type
    return extension_of(fetched.final_url) in PAGE_EXTENSIONS | {""}


def _load_robots(session: requests.Session, start_url: str, policy: CrawlPolicy):
    parts = urlsplit(start_url)
    robots_url = f"{parts.scheme}://{parts.netloc}/robots.txt"
    parser = urllib.robotparser.RobotFileParser()
    try:
        response = session.get(robots_url, timeout=policy.request_timeout)
        if response.status_code < 400:
            parser.parse(response.text.splitlines())
        else:
            parser.parse([])
    except requests.RequestException:
        parser.parse([])
    return parser


def crawl_site(
    domain: str,
    policy: CrawlPolicy,
    store: SiteReplicaWriter,
    *,
    base_url: str | None = None,
    inegi_id: str = "",
    session: requests.Session | None = None,
    clock: Clock | None = None,
) -> ReplicaManifest:
    """Breadth-first bounded crawl of one site into the replica store.

    Only links within the start URL's registrable domain are followed, in
    document order, which makes truncation deterministic. `truncated` is
    set exactly when an otherwise-eligible link was dropped because of
    max_depth or max_files; extension and robots skips do not count.
    Homepage failure yields an empty manifest carrying a failure note;
    other per-resource failures are logged and skipped.
    """
    now = clock or _utcnow
    manifest = ReplicaManifest(domain=domain, inegi_id=inegi_id, started_at=now(), policy=policy)
    sess = session or build_session(policy)
    start_url = base_url or f"https://{domain}/"

    robots = _load_robots(sess, start_url, policy) if policy.honor_robots else None
    if robots is not None and not robots.can_fetch(policy.user_agent, start_url):
        manifest.failure = "robots.txt disallows the homepage"
        store.write_manifest(manifest)
        return manifest

    normalized_start = normalize_url(start_url, start_url)
    if isinstance(normalized_start, Skip):
        manifest.failure = f"unusable start URL: {normalized_start.reason}"
        store.write_manifest(manifest)
        return manifest

    queue: deque[tuple[str, int]] = deque([(normalized_start, 0)])
    discovered: set[str] = {normalized_start}
    last_request = 0.0

    while queue:
        url, depth = queue.popleft()
        if policy.min_request_interval > 0:
            wait = policy.min_request_interval - (time.monotonic() - last_request)
            if wait > 0:
                time.sleep(wait)
        try:
            fetched = _fetch(sess, url, policy)
        except CrawlError as exc:
            if depth == 0 and not manifest.resources:
                manifest.failure = f"homepage fetch failed: {exc}"
                break
            log.info("skipping %s: %s", url, exc)
            continue
        finally:
            last_request = time.monotonic()

        local_path = store.reserve_path(url)
        store.write(local_path, fetched.data)
        manifest.resources.append(
            StoredResource(
                source_url=url,
                depth=depth,
                local_path=local_path,
                byte_length=len(fetched.data),
                content_digest="sha256:" + hashlib.sha256(fetched.data).hexdigest(),
                media_type=fetched.media_type,
                fetched_at=now(),
                clipped=fetched.clipped,
            )
        )

        if not _is_html(fetched):
            continue
        for href in extract_links(decode_bytes(fetched.data)):
            target = normalize_url(fetched.final_url, href)
            if isinstance(target, Skip):
                continue
            if target in discovered:
                continue
            if not extension_allowed(target, policy):
                continue
            if robots is not None and not robots.can_fetch(policy.user_agent, target):
                continue
            if depth + 1 > policy.max_depth:
                manifest.truncated = True
                continue
            if len(manifest.resources) + len(queue) >= policy.max_files:
                manifest.truncated = True
                continue
            discovered.add(target)
            queue.append((target, depth + 1))

    store.write_manifest(manifest)
    return manifest
