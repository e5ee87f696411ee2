import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gdplatent.panel import (Dimension, ItemSpec, PanelError, build_panel, default_items,
                             item_counts, to_triples)


def test_singleton_panel():
    p = build_panel([("GHA", 1950, 1, 9.1)], default_items())
    assert p.countries == ("GHA",)
    assert list(p.years) == [1950]
    assert p.shape == (1, 1, 16)
    assert p.mask.sum() == 1 and p.mask[0, 0, 0]
    assert p.values[0, 0, 0] == 9.1


def test_year_range_padded_to_contiguous():
    p = build_panel([("GHA", 1950, 1, 9.1), ("GHA", 1953, 1, 9.3)], default_items())
    assert list(p.years) == [1950, 1951, 1952, 1953]
    assert not p.mask[0, 1:3].any()
    assert p.active.all()


def test_duplicate_triple_rejected():
    with pytest.raises(PanelError, match="GHA.*1950.*1"):
        build_panel([("GHA", 1950, 1, 9.1), ("GHA", 1950, 1, 9.2)], default_items())


@pytest.mark.parametrize("bad", [float("nan"), float("inf")])
def test_non_finite_rejected(bad):
    with pytest.raises(PanelError, match="non-finite"):
        build_panel([("GHA", 1950, 1, bad)], default_items())


def test_unknown_item_rejected():
    with pytest.raises(PanelError, match="99"):
        build_panel([("GHA", 1950, 99, 1.0)], default_items())


def test_countries_sorted_and_ranges_per_country():
    p = build_panel([("ZAF", 1960, 1, 1.0), ("ARG", 1950, 6, 2.0), ("ARG", 1952, 6, 2.1)],
                    default_items())
    assert p.countries == ("ARG", "ZAF")
    assert list(p.years) == [1950, 1951, 1952, 1953, 1954, 1955, 1956, 1957, 1958, 1959, 1960]
    assert (p.start, p.end) == (pytest.approx([0, 10]), pytest.approx([2, 10]))
    assert p.active[0].sum() == 3 and p.active[1].sum() == 1


def test_last_year_extends_every_country():
    p = build_panel([("A", 2000, 1, 1.0), ("B", 2010, 1, 1.0)], default_items(), last_year=2015)
    assert p.end.tolist() == [15, 15]
    assert p.start.tolist() == [0, 10]


def test_panel_arrays_read_only():
    p = build_panel([("GHA", 1950, 1, 9.1)], default_items())
    with pytest.raises(ValueError):
        p.values[0, 0, 0] = 1.0


def test_default_item_partition():
    items = default_items()
    dims = {it.item_id: it.dimension for it in items}
    assert all(dims[i] is Dimension.GDP for i in range(1, 6))
    assert all(dims[i] is Dimension.POP for i in range(6, 11))
    assert all(dims[i] is Dimension.GDPPC for i in range(11, 17))
    assert [it.item_id for it in items if it.anchor] == [1, 6]


def test_item_counts_empty_panel():
    p = build_panel([], default_items(), first_year=2000, last_year=2002,
                    country_ranges={"A": (2000, 2002)})
    assert item_counts(p).shape == (1, 3)
    assert not item_counts(p).any()


def test_item_counts_single_observation():
    p = build_panel([("A", 2000, 1, 1.0), ("A", 2002, 2, 1.0)], default_items())
    counts = item_counts(p)
    assert counts.tolist() == [[1, 0, 1]]


def test_item_counts_additive_over_gdp_and_pop():
    obs = [("A", 2000, j, 1.0) for j in range(1, 11)]
    assert item_counts(build_panel(obs, default_items()))[0, 0] == 10


def test_item_lookup():
    p = build_panel([("A", 2000, 3, 1.0)], default_items())
    assert p.item_index(3) == 2
    assert p.items_in("GDP").tolist() == [0, 1, 2, 3, 4]
    with pytest.raises(PanelError):
        p.item_index(42)


def test_add_items_keeps_ranges():
    items = default_items()[:2]
    p = build_panel([("A", 2000, 1, 1.0), ("A", 2003, 1, 1.0)], items)
    q = p.add_items([ItemSpec(17, "growth", Dimension.GROWTH)], [("A", 2001, 17, 0.02)])
    assert q.item_ids == (1, 2, 17)
    assert q.mask[0, 1, 2] and q.values[0, 1, 2] == 0.02
    assert list(q.years) == list(p.years)


triples = st.lists(
    st.tuples(st.sampled_from(["A", "B", "C"]), st.integers(1990, 1996), st.integers(1, 16),
              st.floats(-50, 50, allow_nan=False)),
    max_size=40, unique_by=lambda x: x[:3])


@settings(max_examples=200, deadline=None)
@given(triples)
def test_roundtrip_to_triples(obs):
    p = build_panel(obs, default_items())
    assert to_triples(p) == sorted((c, y, j, float(v)) for c, y, j, v in obs)


@settings(max_examples=200, deadline=None)
@given(triples)
def test_item_counts_total_matches_input(obs):
    p = build_panel(obs, default_items())
    assert int(item_counts(p).sum()) == len(obs)
    assert np.all(p.values[~p.mask] == 0.0)
