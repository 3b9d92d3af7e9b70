from __future__ import annotations

import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".htm": "text/html; charset=utf-8",
    ".css": "text/css",
    ".png": "image/png",
    ".pdf": "application/pdf",
    ".txt": "text/plain; charset=utf-8",
}

CORPUS_SITES = ("participacion", "transaccion", "interaccion", "informacion", "suspendido")
CORPUS_DOMAINS = {
    "participacion": "participacion.gob.mx",
    "transaccion": "transaccion.gob.mx",
    "interaccion": "interaccion.gob.mx",
    "informacion": "informacion.gob.mx",
    "suspendido": "suspendido.gob.mx",
}


class FixtureHTTPServer:
    """In-memory HTTP server: exact-path routes, redirects, error overrides."""

    def __init__(self) -> None:
        self.routes: dict[str, tuple[str, bytes]] = {}
        self.redirects: dict[str, str] = {}
        self.errors: dict[str, int] = {}
        server = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):  # noqa: N802 (http.server API)
                if self.path in server.errors:
                    self.send_response(server.errors[self.path])
                    self.end_headers()
                    return
                if self.path in server.redirects:
                    self.send_response(302)
                    self.send_header("Location", server.redirects[self.path])
                    self.end_headers()
                    return
                route = server.routes.get(self.path)
                if route is None:
                    self.send_response(404)
                    self.end_headers()
                    return
                content_type, body = route
                self.send_response(200)
                self.send_header("Content-Type", content_type)
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.port = self._httpd.server_address[1]
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    @property
    def base_url(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def url(self, path: str) -> str:
        return self.base_url + path

    def add(self, path: str, body: str | bytes, content_type: str = "text/html; charset=utf-8"):
        if isinstance(body, str):
            body = body.encode("utf-8")
        self.routes[path] = (content_type, body)

    def add_directory(self, prefix: str, directory: Path) -> None:
        """Mount every file under /<prefix>/<name>; index.html also at /<prefix>/."""
        for file in sorted(directory.iterdir()):
            if not file.is_file():
                continue
            content_type = _CONTENT_TYPES.get(file.suffix, "application/octet-stream")
            body = file.read_bytes()
            self.routes[f"/{prefix}/{file.name}"] = (content_type, body)
            if file.name == "index.html":
                self.routes[f"/{prefix}/"] = (content_type, body)

    def close(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()


@pytest.fixture(scope="session")
def http_server():
    server = FixtureHTTPServer()
    for site in CORPUS_SITES:
        server.add_directory(site, FIXTURES / "sites" / site)
    yield server
    server.close()


@pytest.fixture(scope="session")
def corpus_base_urls(http_server) -> dict[str, str]:
    return {
        domain: http_server.url(f"/{site}/") for site, domain in CORPUS_DOMAINS.items()
    }


def write_corpus_config(
    workdir: Path,
    http_server,
    *,
    output_dir: Path | None = None,
    extra: dict[str, str] | None = None,
) -> Path:
    """Write a base_url_map and a config file for the five-site corpus."""
    base_map = workdir / "base_urls.csv"
    lines = ["domain,base_url"]
    for site, domain in CORPUS_DOMAINS.items():
        lines.append(f"{domain},{http_server.url(f'/{site}/')}")
    base_map.write_text("\n".join(lines) + "\n", encoding="utf-8")

    out = output_dir or (workdir / "out")
    values = {
        "seed_csv": str(FIXTURES / "seed.csv"),
        "inegi_catalog": str(FIXTURES / "catalog.csv"),
        "geo_catalog": str(FIXTURES / "municipios.geojson"),
        "resolver": f"fixture:{FIXTURES / 'hosting_map.csv'}",
        "base_url_map": str(base_map),
        "output_dir": str(out),
        "run_date": "2017-05-24",
        "min_request_interval": "0",
        "request_timeout": "5",
        "concurrency": "4",
    }
    values.update(extra or {})
    config_path = workdir / "munidex.conf"
    config_path.write_text(
        "\n".join(f"{key}={value}" for key, value in values.items()) + "\n", encoding="utf-8"
    )
    return config_path


@pytest.fixture
def corpus_config(tmp_path, http_server) -> Path:
    return write_corpus_config(tmp_path, http_server)


# ---- shared crawl-oracle helpers (used by crawler tests and acceptance) ----

def bounded_bfs_oracle(
    graph: dict[int, list[int]], max_depth: int, max_files: int
) -> tuple[list[tuple[int, int]], bool]:
    """Independent bounded-BFS enumeration over an abstract link graph.

    Returns ([(node, depth)...] in fetch order, truncated). Node 0 is the
    homepage; links are followed in list order, duplicates are ignored, and
    a link is dropped (setting truncated) when it would exceed max_depth or
    when stored+queued already reaches max_files.
    """
    from collections import deque

    queue = deque([(0, 0)])
    discovered = {0}
    fetched: list[tuple[int, int]] = []
    truncated = False
    while queue:
        node, depth = queue.popleft()
        fetched.append((node, depth))
        for neighbor in graph[node]:
            if neighbor in discovered:
                continue
            if depth + 1 > max_depth:
                truncated = True
                continue
            if len(fetched) + len(queue) >= max_files:
                truncated = True
                continue
            discovered.add(neighbor)
            queue.append((neighbor, depth + 1))
    return fetched, truncated


def mount_graph_site(server: FixtureHTTPServer, prefix: str, graph: dict[int, list[int]]) -> str:
    """Serve one HTML page per graph node; returns the node-0 URL."""
    for node, neighbors in graph.items():
        anchors = "".join(f'<li><a href="node{n}.html">node {n}</a></li>' for n in neighbors)
        body = f"<html><body><h1>node {node}</h1><ul>{anchors}</ul></body></html>"
        server.add(f"/{prefix}/node{node}.html", body)
    return server.url(f"/{prefix}/node0.html")


def random_graph(rng, max_nodes: int = 50) -> dict[int, list[int]]:
    n = rng.randint(1, max_nodes)
    graph: dict[int, list[int]] = {}
    for i in range(n):
        others = [j for j in range(n) if j != i]
        k = rng.randint(0, min(6, len(others)))
        graph[i] = rng.sample(others, k)
    return graph
