from __future__ import annotations

from collections import Counter
from fractions import Fraction

from hypothesis import given
from hypothesis import strategies as st

from munidex.analytics import (
    collapse_singletons,
    format_text_table,
    pareto,
    read_pareto_csv,
    render_bar_chart,
    render_percent,
    sections_per_site_histogram,
    title_frequency,
    write_pareto_csv,
)

# The published frequency table of section titles: 40 named categories
# totalling 310 occurrences, plus 81 distinct single-occurrence titles.
TABLE5_NAMED = [
    ("Inicio", 53), ("Transparencia", 52), ("Contacto", 30), ("Gobierno", 19),
    ("Municipio", 17), ("Noticias", 16), ("Trámites y servicios", 8), ("Prensa", 7),
    ("Ayuntamiento", 6), ("Obras", 6), ("Transparencia 2014", 6), ("Transparencia 2015", 6),
    ("Transparencia 2016", 6), ("Galería", 5), ("H. Ayuntamiento", 5), ("Obras públicas", 5),
    ("Tu municipio", 5), ("History", 4), ("Ubicación", 4), ("Actividades", 3),
    ("Contratos", 3), ("DIF municipal", 3), ("Directorío", 3), ("El municipio", 3),
    ("Regidurías", 3), ("Servicios", 3), ("Videos", 3), ("Actividades familiares", 2),
    ("Cabildo", 2), ("Correo", 2), ("Dependencias", 2), ("Enlace ciudadano", 2),
    ("Eventos", 2), ("Home", 2), ("Informes de transparencia", 2), ("Obra pública", 2),
    ("Plan municipal de desarrollo", 2), ("Tesorería", 2), ("Trámites", 2), ("Turismo", 2),
]


def table5_items() -> list[str]:
    items: list[str] = []
    for title, count in TABLE5_NAMED:
        items.extend([title] * count)
    items.extend(f"Título único {i:03d}" for i in range(81))
    return items


def test_table5_total_is_391():
    items = table5_items()
    assert sum(c for _, c in TABLE5_NAMED) == 310
    assert len(items) == 391


def test_table5_head_percentages():
    table = title_frequency([table5_items()])
    assert table.total == 391
    head = table.rows[:6]
    assert [(r.category, r.count, r.percent_str()) for r in head] == [
        ("Inicio", 53, "13.6"),
        ("Transparencia", 52, "13.3"),
        ("Contacto", 30, "7.7"),
        ("Gobierno", 19, "4.9"),
        ("Municipio", 17, "4.3"),
        ("Noticias", 16, "4.1"),
    ]


def test_table5_singleton_bucket():
    table = title_frequency([table5_items()])
    collapsed = collapse_singletons(table, threshold=1)
    bucket = collapsed.rows[-1]
    assert bucket.category == "Other titles (one case of each one)"
    assert bucket.count == 81  # recount of the singleton fixtures
    assert len(collapsed.rows) == 40 + 1


# ------------------------------------------------------------------ pareto


def test_pareto_counts_and_order():
    table = pareto(["b", "a", "a", None, "c", "c", "c"], "dim")
    assert table.total == 7
    assert [(r.category, r.count) for r in table.rows] == [
        ("c", 3), ("a", 2), ("Not specified", 1), ("b", 1),
    ]


def test_pareto_empty_input():
    table = pareto([], "dim")
    assert table.rows == ()
    assert table.total == 0


@given(st.lists(st.sampled_from(["a", "b", "c", "d", None]), max_size=40))
def test_pareto_matches_counter_oracle(items):
    table = pareto(items, "dim")
    oracle = Counter("Not specified" if i is None else i for i in items)
    assert {r.category: r.count for r in table.rows} == dict(oracle)
    counts = [r.count for r in table.rows]
    assert counts == sorted(counts, reverse=True)
    for left, right in zip(table.rows, table.rows[1:]):
        if left.count == right.count:
            assert left.category < right.category


@given(st.lists(st.sampled_from(["a", "b", "c", None]), min_size=1, max_size=40))
def test_pareto_is_permutation_invariant(items):
    table = pareto(items, "dim")
    assert pareto(list(reversed(items)), "dim") == table


@given(st.lists(st.sampled_from(["a", "b", "c", "d", "e", "f", "g"]), min_size=1, max_size=60))
def test_rendered_percents_sum_within_rounding_bound(items):
    table = pareto(items, "dim")
    total = sum(float(r.percent_str()) for r in table.rows)
    assert 99.5 <= total <= 100.5


def test_render_percent_half_up():
    assert render_percent(Fraction(53, 391)) == "13.6"
    assert render_percent(Fraction(1, 8)) == "12.5"
    assert render_percent(Fraction(1, 1)) == "100.0"
    assert render_percent(Fraction(1, 800)) == "0.1"  # 0.125% rounds half-up


# --------------------------------------------------------------- histogram


def test_sections_histogram_counts_sites():
    table = sections_per_site_histogram([4, 4, 7])
    assert [(r.category, r.count) for r in table.rows] == [("4", 2), ("7", 1)]


def test_oaxaca_shape_regression():
    # modal mass between 4 and 7 sections, extremes at 2 and 14
    sizes = [2] + [4] * 20 + [5] * 25 + [6] * 18 + [7] * 12 + [9] * 4 + [14]
    table = sections_per_site_histogram(sizes)
    counts = {r.category: r.count for r in table.rows}
    modal = sum(counts.get(str(n), 0) for n in (4, 5, 6, 7))
    assert modal > sum(counts.values()) / 2
    assert counts["2"] == 1 and counts["14"] == 1


@given(st.lists(st.integers(min_value=0, max_value=20), max_size=50))
def test_histogram_matches_tally_oracle(sizes):
    table = sections_per_site_histogram(sizes)
    oracle = Counter(str(n) for n in sizes)
    assert {r.category: r.count for r in table.rows} == dict(oracle)


# --------------------------------------------------------- title frequency


def test_title_frequency_folds_and_counts_per_occurrence():
    table = title_frequency([["Inicio", "Transparencia"], ["inicio"]])
    top = table.rows[0]
    assert top.count == 2
    assert top.category == "Inicio"  # most frequent spelling, ties lexicographic
    assert table.total == 3


def test_title_frequency_counts_repeats_within_one_site():
    table = title_frequency([["Transparencia", "Transparencia"]])
    assert table.rows[0].count == 2


def test_title_frequency_display_prefers_majority_spelling():
    table = title_frequency([["INICIO", "INICIO", "Inicio"]])
    assert table.rows[0].category == "INICIO"
    assert table.rows[0].count == 3


def test_diacritics_fold_together():
    table = title_frequency([["Galería", "Galeria"]])
    assert len(table.rows) == 1
    assert table.rows[0].count == 2


# ------------------------------------------------------------ serialization


def test_pareto_csv_round_trip(tmp_path):
    table = pareto(["a", "a", "b", None], "estado")
    path = tmp_path / "estado.csv"
    write_pareto_csv(table, path)
    text = path.read_text(encoding="utf-8")
    assert text.startswith("# dimension: estado, total: 4\n")
    assert "category,count,percent" in text
    loaded = read_pareto_csv(path)
    assert loaded == table


def test_directory_round_trip_keeps_tables_stable(tmp_path):
    import datetime as dt

    from munidex.directory import (
        DirectoryEntry, HostingInfo, MunicipalityRecord, OperatingStatus,
        export_directory_csv, import_directory_csv,
    )

    entries = [
        DirectoryEntry(
            municipality=MunicipalityRecord("001", "Uno"), status=OperatingStatus.WORKING,
            domain="uno.gob.mx", access_date=dt.date(2017, 5, 24),
            hosting=HostingInfo("GoDaddy", "USA"),
        ),
        DirectoryEntry(
            municipality=MunicipalityRecord("002", "Dos"), status=OperatingStatus.NOT_WORKING,
            domain="dos.gob.mx", access_date=dt.date(2017, 5, 24),
        ),
    ]
    before = pareto([e.status.value for e in entries], "status")
    path = tmp_path / "directory.csv"
    export_directory_csv(entries, path)
    reloaded = import_directory_csv(path)
    after = pareto([e.status.value for e in reloaded], "status")
    assert before == after


def test_text_table_and_bar_chart_render():
    table = pareto(["working", "working", "suspended"], "status")
    text = format_text_table(table)
    assert "working" in text and "66.7%" in text
    svg = render_bar_chart(table)
    assert svg.startswith("<svg")
    assert svg.count("<rect") == 2
    assert render_bar_chart(table) == svg  # deterministic
