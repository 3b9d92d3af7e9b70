from __future__ import annotations

import datetime as dt
import unicodedata

import pytest
from hypothesis import given
from hypothesis import strategies as st

from munidex.directory import HostingInfo, OperatingStatus
from munidex.probe import (
    CachedHostingResolver,
    FixtureHostingResolver,
    NullHostingResolver,
    ProbePolicy,
    SuspensionPatternSet,
    detect_suspension,
    probe_domain,
    resolve_hosting,
)

from conftest import FIXTURES

FAST = ProbePolicy(connect_timeout=2.0, read_timeout=2.0)


def _fold_scan_oracle(body: str, phrases: list[str]) -> bool:
    # independent reference: lowercase, strip marks, collapse spaces, substring
    def fold(s: str) -> str:
        s = unicodedata.normalize("NFD", s.lower())
        s = "".join(ch for ch in s if not unicodedata.combining(ch))
        return " ".join(s.split())

    folded = fold(body)
    return any(fold(p) in folded for p in phrases)


# ------------------------------------------------------------ probe_domain


def test_working_homepage(http_server):
    http_server.add("/probe-ok/", "<html><body>Bienvenidos al municipio</body></html>")
    result = probe_domain("ok.gob.mx", FAST, base_urls=(http_server.url("/probe-ok/"),))
    assert result.status is OperatingStatus.WORKING
    assert result.http_status == 200
    assert result.scheme == "http"
    assert result.final_url == http_server.url("/probe-ok/")
    assert result.probed_at is not None


def test_http_error_is_not_working(http_server):
    http_server.errors["/probe-404/"] = 404
    result = probe_domain("err.gob.mx", FAST, base_urls=(http_server.url("/probe-404/"),))
    assert result.status is OperatingStatus.NOT_WORKING
    assert result.http_status == 404


def test_redirect_is_followed_and_final_url_recorded(http_server):
    http_server.add("/probe-target/", "<html><body>portal municipal</body></html>")
    http_server.redirects["/probe-r/"] = "/probe-target/"
    result = probe_domain("redir.gob.mx", FAST, base_urls=(http_server.url("/probe-r/"),))
    assert result.status is OperatingStatus.WORKING
    assert result.final_url == http_server.url("/probe-target/")


def test_suspension_page_detected(http_server):
    body = "<html><body><p>Dominio suspendido por falta de pago.</p></body></html>"
    http_server.add("/probe-susp/", body)
    result = probe_domain("susp.gob.mx", FAST, base_urls=(http_server.url("/probe-susp/"),))
    assert result.status is OperatingStatus.SUSPENDED
    # the fixture body agrees with the independent fold-and-scan oracle
    assert _fold_scan_oracle(body, ["dominio suspendido"])


def test_unresolvable_hostname_is_not_working():
    result = probe_domain("nonexistent-municipality-zz.invalid", FAST)
    assert result.status is OperatingStatus.NOT_WORKING
    assert result.http_status is None
    assert result.final_url is None


def test_connection_refused_is_not_working():
    result = probe_domain("refused.gob.mx", FAST, base_urls=("http://127.0.0.1:9/",))
    assert result.status is OperatingStatus.NOT_WORKING


def test_probe_clock_injection(http_server):
    http_server.add("/probe-clock/", "<html><body>hola</body></html>")
    instant = dt.datetime(2017, 5, 24, tzinfo=dt.timezone.utc)
    result = probe_domain(
        "clock.gob.mx", FAST, base_urls=(http_server.url("/probe-clock/"),), clock=lambda: instant
    )
    assert result.probed_at == instant


# ------------------------------------------------------- detect_suspension


def test_detect_suspension_matches_fold_and_scan_oracle():
    patterns = SuspensionPatternSet(["dominio ha sido suspendido", "dominio suspendido"])
    cases = [
        "Este dominio ha sido suspendido",
        "DOMINIO SUSPENDIDO",
        "El sitio del ayuntamiento abre pronto",
        "",
    ]
    for body in cases:
        assert detect_suspension(body, patterns) == _fold_scan_oracle(
            body, ["dominio ha sido suspendido", "dominio suspendido"]
        )


def test_detect_suspension_folds_diacritics_and_markup():
    patterns = SuspensionPatternSet(["página suspendida"])
    assert detect_suspension("La <b>PAGINA</b> suspendida del municipio", patterns)


def test_detect_suspension_empty_and_plain_bodies():
    patterns = SuspensionPatternSet(["dominio suspendido"])
    assert not detect_suspension("", patterns)
    assert not detect_suspension("Bienvenidos al portal del municipio", patterns)


_texts = st.text(alphabet="abcdef áé ", max_size=60)
_pattern_lists = st.lists(st.sampled_from(["dominio", "suspendido", "pago", "fghij"]), min_size=1, max_size=3)


@given(_texts, _pattern_lists, _pattern_lists)
def test_detect_suspension_distributes_over_union(body, phrases_a, phrases_b):
    set_a = SuspensionPatternSet(phrases_a)
    set_b = SuspensionPatternSet(phrases_b)
    union = SuspensionPatternSet(phrases_a + phrases_b)
    assert detect_suspension(body, union) == (
        detect_suspension(body, set_a) or detect_suspension(body, set_b)
    )


def test_pattern_file_loading(tmp_path):
    path = tmp_path / "patterns.txt"
    path.write_text("# comment\ndominio suspendido\n\nsitio suspendido\n", encoding="utf-8")
    patterns = SuspensionPatternSet.load(path)
    assert "dominio suspendido" in patterns.patterns
    assert "sitio suspendido" in patterns.patterns
    empty = tmp_path / "empty.txt"
    empty.write_text("# only comments\n", encoding="utf-8")
    with pytest.raises(ValueError):
        SuspensionPatternSet.load(empty)


def test_default_patterns_ship_nonempty():
    assert len(SuspensionPatternSet.default().patterns) >= 5


# --------------------------------------------------------- hosting lookup


def test_fixture_resolver_answers_known_domains():
    resolver = FixtureHostingResolver.load(FIXTURES / "hosting_map.csv")
    assert resolve_hosting("ayotzintepec.gob.mx", resolver) == HostingInfo("Hosting Mexico", "Mexico")
    assert resolve_hosting("municipiomatiasromero.gob.mx", resolver) == HostingInfo("HostGator", "USA")


def test_fixture_resolver_miss_yields_absent_fields():
    resolver = FixtureHostingResolver.load(FIXTURES / "hosting_map.csv")
    assert resolve_hosting("desconocido.gob.mx", resolver) == HostingInfo()


def test_resolver_failures_never_propagate():
    class Exploding:
        def resolve(self, domain):
            raise RuntimeError("boom")

    assert resolve_hosting("x.gob.mx", Exploding()) == HostingInfo()


class _CountingResolver:
    def __init__(self):
        self.calls = 0

    def resolve(self, domain):
        self.calls += 1
        return HostingInfo("Proveedor", "Mexico")


def test_cached_resolver_records_and_replays(tmp_path):
    cache = tmp_path / "cache.csv"
    inner = _CountingResolver()
    resolver = CachedHostingResolver(inner, cache)
    assert resolver.resolve("a.gob.mx") == HostingInfo("Proveedor", "Mexico")
    assert resolver.resolve("a.gob.mx") == HostingInfo("Proveedor", "Mexico")
    assert inner.calls == 1
    # a fresh instance replays from the recorded file without the inner resolver
    replay = CachedHostingResolver(NullHostingResolver(), cache)
    assert replay.resolve("a.gob.mx") == HostingInfo("Proveedor", "Mexico")
