import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gdplatent.extend import growth_item
from gdplatent.ingest import (FilterPolicy, GenerativeConfig, IngestError, SourceRecord, TrueParams,
                              apply_filters, compute_anchors, ingest_files, load_records,
                              log_transform, panel_to_records, simulate_panel, write_records)
from gdplatent.panel import build_panel, default_items, item_counts
from gdplatent.sampler import PriorConfig, SamplerPlan, run_chains

HEADER = "country_id,year,item_id,value,origin_code\n"


def write(tmp_path, text, name="obs.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


# --- load_records ---------------------------------------------------------

def test_load_two_rows(tmp_path):
    p = write(tmp_path, HEADER + "GHA,1950,1,1000,\nGHA,1951,2,1100,-1\n")
    recs = load_records(p)
    assert recs == [SourceRecord("GHA", 1950, 1, 1000.0, None), SourceRecord("GHA", 1951, 2, 1100.0, "-1")]


def test_bad_year_reports_line(tmp_path):
    p = write(tmp_path, HEADER + "GHA,1950,1,1000,\nGHA,150O,1,1000,\n")
    with pytest.raises(IngestError, match=r"obs\.csv:3"):
        load_records(p)


def test_unparseable_number(tmp_path):
    p = write(tmp_path, HEADER + "GHA,1950,1,abc,\n")
    with pytest.raises(IngestError, match=":2"):
        load_records(p)


def test_header_only_is_empty(tmp_path):
    assert load_records(write(tmp_path, HEADER)) == []


def test_missing_header_column(tmp_path):
    with pytest.raises(IngestError, match="header"):
        load_records(write(tmp_path, "country,year,item_id,value\nA,1,1,1\n"))


def test_column_order_free_and_codes_normalized(tmp_path):
    p = write(tmp_path, "value,origin_code,item_id,year,country_id\n5,-1.0,2,1990,X\n")
    assert load_records(p) == [SourceRecord("X", 1990, 2, 5.0, "-1")]


def test_write_then_load_roundtrip(tmp_path):
    recs = [SourceRecord("A", 1990, 1, 123.456, None), SourceRecord("B", 1991, 7, 2.5, "3")]
    write_records(tmp_path / "r.csv", recs)
    assert load_records(tmp_path / "r.csv") == recs


# --- filters --------------------------------------------------------------

def test_gleditsch_interpolated_code_excluded():
    policy = FilterPolicy.standard()
    for code in ("2", "1", "-2"):
        assert apply_filters([SourceRecord("A", 1990, 2, 1.0, code)], policy) == []
    for code in ("0", "-1", "3"):
        assert len(apply_filters([SourceRecord("A", 1990, 2, 1.0, code)], policy)) == 1


def test_cow_quality_code():
    policy = FilterPolicy.standard()
    assert len(apply_filters([SourceRecord("A", 1900, 10, 1.0, "A")], policy)) == 1
    assert apply_filters([SourceRecord("A", 1900, 10, 1.0, "B")], policy) == []
    assert apply_filters([SourceRecord("A", 1900, 10, 1.0, None)], policy) == []


def test_year_before_minimum_dropped():
    policy = FilterPolicy.standard()
    assert apply_filters([SourceRecord("A", 1490, 1, 1.0)], policy) == []
    assert len(apply_filters([SourceRecord("A", 1500, 1, 1.0)], policy)) == 1


def test_maddison_has_no_code_filter():
    policy = FilterPolicy.standard()
    assert len(apply_filters([SourceRecord("A", 1800, 1, 1.0, "anything")], policy)) == 1


def test_filter_stable_order():
    policy = FilterPolicy.standard()
    recs = [SourceRecord("B", 1990, 1, 1.0), SourceRecord("A", 1990, 2, 1.0, "2"),
            SourceRecord("A", 1980, 1, 2.0)]
    assert apply_filters(recs, policy) == [recs[0], recs[2]]


records = st.lists(st.builds(
    SourceRecord, st.sampled_from(["A", "B"]), st.integers(1480, 2030), st.integers(1, 16),
    st.floats(0.1, 1e6), st.one_of(st.none(), st.sampled_from(["0", "-1", "1", "2", "3", "A", "B", "I", "M"]))),
    max_size=30)


@settings(max_examples=300, deadline=None)
@given(records)
def test_filters_idempotent(recs):
    policy = FilterPolicy.standard()
    once = apply_filters(recs, policy)
    assert apply_filters(once, policy) == once


# --- log transform --------------------------------------------------------

def test_log_values():
    out = log_transform([SourceRecord("A", 1, 1, 1000.0), SourceRecord("A", 2, 1, 1.0)])
    assert out[0].value == pytest.approx(6.907755, abs=1e-6)
    assert out[1].value == 0.0
    assert all(r.log_units for r in out)


@pytest.mark.parametrize("bad", [0.0, -3.0])
def test_log_domain_error(bad):
    with pytest.raises(IngestError, match="A, 1990, item 4"):
        log_transform([SourceRecord("A", 1990, 4, bad)])


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(1e-300, 1e300), min_size=2, max_size=20))
def test_log_monotone(values):
    out = [r.value for r in log_transform([SourceRecord("A", 1, 1, v) for v in values])]
    for (a, b), (la, lb) in zip(zip(values, values[1:]), zip(out, out[1:])):
        if a < b:
            assert la <= lb
        elif a > b:
            assert la >= lb


# --- anchors ----------------------------------------------------------------

def test_anchor_is_mean():
    items = default_items()[:1]
    p = build_panel([("A", 1, 1, 2.0), ("A", 2, 1, 4.0)], items)
    assert compute_anchors(p)[0].intercept_anchor == 3.0


def test_anchor_single_observation():
    p = build_panel([("A", 1, 1, 7.5)], default_items()[:1])
    assert compute_anchors(p)[0].intercept_anchor == 7.5


def test_growth_anchor_explicit_zero():
    items = default_items()[:1] + [growth_item(17, "growth")]
    p = build_panel([("A", 1, 1, 7.5)], items)
    anchors = compute_anchors(p, {17: 0.0})
    assert anchors[1].intercept_anchor == 0.0
    assert compute_anchors(p)[1].intercept_anchor == 0.0


def test_anchor_missing_item_error():
    p = build_panel([("A", 1, 1, 7.5)], default_items()[:2])
    with pytest.raises(IngestError, match="item 2"):
        compute_anchors(p)
    assert compute_anchors(p, {2: 1.5})[1].intercept_anchor == 1.5


def test_ingest_files_pipeline(tmp_path):
    p = write(tmp_path, HEADER + "A,1990,1,100,\nA,1992,1,200,\nA,1991,2,50,2\nA,1991,17,-0.05,\n")
    items = default_items()[:2] + [growth_item(17, "growth")]
    panel = ingest_files([p], items, explicit_anchors={2: 0.0})
    assert panel.mask.sum() == 3                      # Gleditsch code 2 dropped
    assert panel.values[0, 0, 0] == pytest.approx(math.log(100))
    assert panel.values[0, 1, 2] == -0.05             # growth rates are not logged
    assert panel.items[0].intercept_anchor == pytest.approx((math.log(100) + math.log(200)) / 2)


# --- simulation -------------------------------------------------------------

def test_simulate_degenerate_noise():
    items = default_items()[:1]
    cfg = GenerativeConfig(n_countries=1, n_years=1, items=tuple(items), alpha=(0.0,),
                           tau=(1e14, 1.0, 1.0), missing_rate=0.0)
    panel, truth = simulate_panel(cfg, 3)
    assert abs(panel.values[0, 0, 0] - truth.theta_gdp[0, 0]) < 1e-6


def test_simulate_all_missing():
    panel, _ = simulate_panel(GenerativeConfig(missing_rate=1.0), 0)
    assert not panel.mask.any()


def test_simulate_deterministic():
    cfg = GenerativeConfig(n_countries=3, n_years=50)
    a, ta = simulate_panel(cfg, 7)
    b, tb = simulate_panel(cfg, 7)
    assert np.array_equal(a.values, b.values) and np.array_equal(a.mask, b.mask)
    assert ta.to_json() == tb.to_json()
    c, _ = simulate_panel(cfg, 8)
    assert not np.array_equal(a.values, c.values)


@pytest.mark.parametrize("kwargs", [dict(sigma=(-1.0, 0.1)), dict(tau=(0.0, 1.0, 1.0)), dict(n_years=0),
                                    dict(missing_rate=1.5), dict(alpha_prior_var=-1.0),
                                    dict(alpha=(1.0, 2.0))])
def test_invalid_generative_config(kwargs):
    with pytest.raises(ValueError):
        GenerativeConfig(**kwargs)


def test_true_params_json_roundtrip():
    _, truth = simulate_panel(GenerativeConfig(n_countries=2, n_years=3), 1)
    back = TrueParams.from_json(truth.to_json())
    assert np.array_equal(back.theta_gdp, truth.theta_gdp) and np.array_equal(back.y_complete, truth.y_complete)


def test_simulated_panel_roundtrips_through_files(tmp_path):
    panel, _ = simulate_panel(GenerativeConfig(n_countries=2, n_years=10), 4)
    write_records(tmp_path / "p.csv", panel_to_records(panel))
    back = ingest_files([tmp_path / "p.csv"], default_items())
    assert np.array_equal(back.mask, panel.mask)
    assert np.allclose(back.values[back.mask], panel.values[panel.mask], rtol=0, atol=1e-12)


def test_latent_error_falls_with_items_per_cell(tmp_path):
    """With true walk variances, precisions and intercepts fixed, latent
    means of country-years informed by more items are more accurate.

    The walks are rougher than the defaults so that per-cell information,
    not the country-level offset, dominates the error.
    """
    cfg = GenerativeConfig(n_countries=16, n_years=40, missing_rate=0.6, cell_missing_rate=0.15,
                           sigma=(0.05, 0.02))
    panel, truth = simulate_panel(cfg, 21)
    fix_alpha = {it.item_id: a for it, a in zip(panel.items, truth.alpha)}
    plan = SamplerPlan(n_chains=1, n_iterations=600, n_burnin=100, seed=2, store_predictive=False,
                       fix_sigma={"gdp": cfg.sigma[0], "pop": cfg.sigma[1]},
                       fix_tau=dict(zip(("gdp", "pop", "gdppc"), cfg.tau)), fix_alpha=fix_alpha)
    store = run_chains(panel, PriorConfig(), plan, tmp_path / "d")
    n = item_counts(panel)
    for name, true in (("theta_gdp", truth.theta_gdp), ("theta_pop", truth.theta_pop)):
        sq = (store.draws(name).mean(axis=0) - true) ** 2
        rmse = [np.sqrt(sq[(n >= a) & (n < b)].mean()) for a, b in ((0, 1), (1, 5), (5, 9), (9, 17))]
        assert all(x > y for x, y in zip(rmse, rmse[1:])), (name, rmse)
