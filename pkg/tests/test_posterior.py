import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import small_items, synthetic_store
from gdplatent.panel import build_panel
from gdplatent.posterior import (ESTIMATE_COLUMNS, QUANTILES, ConvergenceReport, SummaryError, diagnose,
                                 ess, export_estimates, psr, summarize, summarize_draws, write_estimates)


def chains(values):
    return np.asarray(values, dtype=float).reshape(1, -1)


# --- summarize --------------------------------------------------------------

def test_three_draws():
    s = summarize_draws(chains([1, 2, 3]))
    assert s.mean == 2 and s.q(0.5) == 2 and s.n_draws == 3


def test_constant_draws():
    s = summarize_draws(chains([5, 5, 5, 5]))
    assert s.sd == 0 and np.all(s.quantiles == 5)


def test_standard_normal_draws(rng):
    s = summarize_draws(rng.standard_normal((4, 10000)))
    assert abs(s.mean) < 0.02 and abs(s.sd - 1) < 0.02
    assert s.q(0.025) == pytest.approx(-1.96, abs=0.05) and s.q(0.84) == pytest.approx(0.994, abs=0.04)


def test_quantiles_interpolate_linearly(rng):
    x = rng.standard_normal((3, 37, 2))
    s = summarize_draws(x)
    assert np.allclose(s.quantiles, np.quantile(x.reshape(-1, 2), QUANTILES, axis=0, method="linear"))
    assert np.allclose(s.sd, x.reshape(-1, 2).std(axis=0, ddof=1))
    assert np.allclose(s.chain_means, x.mean(axis=1))


def test_chunking_does_not_change_results(rng):
    x = rng.standard_normal((2, 50, 7))
    a, b = summarize_draws(x), summarize_draws(x, chunk=3)
    assert np.allclose(a.mean, b.mean, rtol=1e-14, atol=0) and np.allclose(a.sd, b.sd, rtol=1e-14, atol=0)
    assert np.array_equal(a.quantiles, b.quantiles)


def test_nan_cells_stay_nan():
    x = np.array([[[1.0, np.nan], [2.0, np.nan]]])
    s = summarize_draws(x)
    assert s.mean[0] == 1.5 and np.isnan(s.mean[1]) and np.isnan(s.quantiles[:, 1]).all()


draw_arrays = arrays(np.float64, st.tuples(st.integers(1, 3), st.integers(1, 12)),
                     elements=st.floats(-1e6, 1e6, allow_nan=False))


@settings(max_examples=300, deadline=None)
@given(draw_arrays, st.randoms(use_true_random=False))
def test_summary_permutation_invariant(x, random):
    flat = x.ravel().tolist()
    random.shuffle(flat)
    y = np.array(flat).reshape(x.shape[::-1]).T.copy()   # also regroups draws into different chains
    a, b = summarize_draws(x), summarize_draws(y.reshape(x.shape))
    assert a.mean == b.mean and a.sd == b.sd and np.array_equal(a.quantiles, b.quantiles)


@settings(max_examples=300, deadline=None)
@given(draw_arrays)
def test_summary_invariants(x):
    s = summarize_draws(x)
    assert s.n_draws == x.size and s.sd >= 0
    assert np.all(np.diff(s.quantiles) >= 0)
    assert x.min() <= s.q(0.025) and s.q(0.975) <= x.max()


def test_huge_draws_summarise_quietly(recwarn):
    s = summarize_draws(chains([1e200, -1e200, 3e200]))
    assert np.isinf(s.sd) and np.isfinite(s.q(0.5)) and not recwarn.list


def test_empty_draws_error():
    with pytest.raises(SummaryError):
        summarize_draws(np.empty((2, 0, 3)))


def tiny_panel():
    return build_panel([("A", 2000, 1, 1.5), ("A", 2001, 6, 0.5), ("B", 2000, 11, 1.0)],
                       small_items({1, 6, 11}), country_ranges={"A": (2000, 2001), "B": (2000, 2001)})


def store_arrays(rng, n_chains=2, n_draws=20, panel=None):
    panel = panel or tiny_panel()
    C, T, J = panel.shape
    g = rng.normal(1.0, 0.1, (n_chains, n_draws, C, T))
    p = rng.normal(0.5, 0.1, (n_chains, n_draws, C, T))
    return {
        "alpha": rng.normal(size=(n_chains, n_draws, J)),
        "tau": rng.gamma(5.0, size=(n_chains, n_draws, 3)),
        "sigma": rng.uniform(size=(n_chains, n_draws, 2)),
        "theta_gdp": g, "theta_pop": p, "theta_gdppc": g - p,
        "ypred": rng.normal(size=(n_chains, n_draws, C, T, J)),
    }


def test_summarize_store(tmp_path, rng):
    panel = tiny_panel()
    arrs = store_arrays(rng)
    summary = summarize(synthetic_store(tmp_path / "s", panel, arrs))
    assert summary.n_draws == 40 and summary.n_chains == 2
    assert set(summary.params) == set(arrs)
    assert np.allclose(summary["alpha"].mean, arrs["alpha"].reshape(40, -1).mean(axis=0))
    assert summary.observed[0, 0, 0] == 1.5 and np.isnan(summary.observed[0, 0, 1])


def test_summarize_empty_store(tmp_path, rng):
    arrs = {k: v[:, :0] for k, v in store_arrays(rng).items()}
    with pytest.raises(SummaryError, match="no draws"):
        summarize(synthetic_store(tmp_path / "s", tiny_panel(), arrs))


# --- diagnostics ------------------------------------------------------------

def test_psr_null_chains(rng):
    m, n = 4, 1000
    r = psr(rng.standard_normal((m, n, 200)))
    # the (m + 1) / (m n) form is bounded below by sqrt((n - 1) / n), not by 1
    assert np.all(r >= math.sqrt((n - 1) / n) - 1e-12) and np.all(r <= 1.05)
    assert abs(np.median(r) - 1.0) < 0.002


def test_psr_diverged_chains(rng):
    x = rng.standard_normal((2, 100, 1))
    x[1] += 100
    assert psr(x)[0] > 10


def test_psr_constant_parameter_is_nan():
    assert np.isnan(psr(np.ones((3, 20, 1))))[0]


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 4), st.integers(2, 30), st.just(1)),
              elements=st.floats(-100, 100, allow_nan=False)))
def test_psr_lower_bound(x):
    n = x.shape[1]
    r = psr(x)[0]
    assert np.isnan(r) or r >= math.sqrt((n - 1) / n) - 1e-9


def test_ess_independent_draws(rng):
    n = 4000
    e = ess(rng.standard_normal((1, n, 50)))
    assert np.all(np.abs(e - n) < 0.2 * n)


def test_ess_autocorrelated_draws(rng):
    phi, n = 0.9, 20000
    x = np.empty((2, n, 4))
    x[:, 0] = rng.standard_normal((2, 4))
    noise = rng.standard_normal((2, n, 4)) * math.sqrt(1 - phi ** 2)
    for t in range(1, n):
        x[:, t] = phi * x[:, t - 1] + noise[:, t]
    e = ess(x)
    assert np.allclose(e, 2 * n * (1 - phi) / (1 + phi), rtol=0.25)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 3), st.integers(4, 40), st.just(2)),
              elements=st.floats(-100, 100, allow_nan=False)))
def test_ess_bounded_by_total_draws(x):
    e = ess(x)
    assert np.all((e[np.isfinite(e)] > 0) & (e[np.isfinite(e)] <= x.shape[0] * x.shape[1] + 1e-9))


def test_diagnose_store(tmp_path, rng):
    store = synthetic_store(tmp_path / "s", tiny_panel(), store_arrays(rng, n_chains=3, n_draws=200))
    report = diagnose(store)
    assert report.psr_available and report.converged
    assert report.labels["alpha"] == ["alpha[1]", "alpha[6]", "alpha[11]"]
    assert report.labels["theta_gdp"][0] == "theta_gdp[A,2000]"
    text = dict(line.split(" = ") for line in report.to_text().splitlines())
    assert text["n_chains"] == "3" and text["converged"] == "true"
    assert float(text["max_psr"]) < 1.1 and "ess.sigma[pop]" in text


def test_diagnose_flags_divergence(tmp_path, rng):
    arrs = store_arrays(rng, n_chains=2, n_draws=50)
    arrs["tau"][1] += 100.0
    report = diagnose(synthetic_store(tmp_path / "s", tiny_panel(), arrs))
    assert report.converged is False and report.max_psr[1].startswith("tau[")


def test_single_chain_psr_unavailable(tmp_path, rng):
    report = diagnose(synthetic_store(tmp_path / "s", tiny_panel(), store_arrays(rng, n_chains=1)))
    assert not report.psr_available and report.converged is None and report.max_psr is None
    assert "psr_available = false" in report.to_text()


def test_diagnose_needs_ten_draws(tmp_path, rng):
    with pytest.raises(SummaryError, match="10 draws"):
        diagnose(synthetic_store(tmp_path / "s", tiny_panel(), store_arrays(rng, n_draws=9)))


def test_empty_report():
    assert ConvergenceReport().min_ess is None


# --- estimate table ---------------------------------------------------------

def exported(tmp_path, rng, panel=None):
    panel = panel or tiny_panel()
    summary = summarize(synthetic_store(tmp_path / "s", panel, store_arrays(rng, panel=panel)))
    return panel, summary, export_estimates(summary, panel)


def test_estimate_row_count_rectangular(tmp_path, rng):
    panel, _, rows = exported(tmp_path, rng)
    C, T, J = panel.shape
    assert len(rows) == C * T * (J + 3)
    assert all(len(r) == len(ESTIMATE_COLUMNS) for r in rows)


def test_observed_and_missing_rows(tmp_path, rng):
    _, summary, rows = exported(tmp_path, rng)
    col = {c: i for i, c in enumerate(ESTIMATE_COLUMNS)}
    obs = next(r for r in rows if r[0] == "A" and r[1] == 2000 and r[4] == 1)
    assert obs[col["observed"]] == 1 and obs[col["observed_value"]] == 1.5
    assert obs[col["mean"]] == summary["ypred"].mean[0, 0, 0]
    assert obs[col["lower_1sd"]] == pytest.approx(obs[col["mean"]] - obs[col["sd"]])
    assert obs[col["q2.5"]] <= obs[col["q50"]] <= obs[col["q97.5"]]
    miss = next(r for r in rows if r[0] == "A" and r[1] == 2000 and r[4] == 6)
    assert miss[col["observed"]] == 0 and np.isnan(miss[col["observed_value"]])
    assert np.isfinite(miss[col["mean"]])
    latent = [r[col["variable"]] for r in rows if r[col["kind"]] == "latent" and r[0] == "B" and r[1] == 2001]
    assert latent == ["theta_gdp", "theta_pop", "theta_gdppc"]


def test_inactive_years_skipped(tmp_path, rng):
    panel = build_panel([("A", 2000, 1, 1.0), ("B", 2002, 1, 1.0)], small_items({1, 6, 11}))
    _, _, rows = exported(tmp_path, rng, panel)
    assert len(rows) == 2 * (3 + 3)
    assert {(r[0], r[1]) for r in rows} == {("A", 2000), ("B", 2002)}


def test_mismatched_panel_rejected(tmp_path, rng):
    _, summary, _ = exported(tmp_path, rng)
    other = build_panel([("A", 2000, 1, 1.0)], small_items({1, 6, 11}))
    with pytest.raises(SummaryError):
        export_estimates(summary, other)


def test_write_estimates(tmp_path, rng):
    _, _, rows = exported(tmp_path, rng)
    write_estimates(tmp_path / "e.csv", rows)
    with open(tmp_path / "e.csv", newline="") as fh:
        table = list(csv.reader(fh))
    assert tuple(table[0]) == ESTIMATE_COLUMNS and len(table) == len(rows) + 1
    assert table[2][-1] == "NA"
