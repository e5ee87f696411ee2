"""Attach annual growth observations to one country's latent GDP.

    python3 demos/growth_extension.py

A single country has one GDP level observation in 1960 and then only growth
rates.  The growth item loads on the change in latent GDP through the
log-growth link.

With nothing but growth rates the data cannot separate walk noise from
measurement noise in the growth series, so the first fit leaves part of the
reported growth unexplained.  The second fit holds the growth measurement
error at a known sd of 0.005 and the latent path then follows the reports.
"""
import tempfile
from pathlib import Path

import numpy as np

from gdplatent.extend import growth_item, register_extension
from gdplatent.panel import build_panel, default_items
from gdplatent.sampler import PriorConfig, SamplerPlan, run_chains

YEARS = range(1961, 1991)


def implied_growth(model, out: Path, fix_tau: dict) -> np.ndarray:
    plan = SamplerPlan(n_chains=2, n_iterations=1500, n_burnin=500, seed=2, store_predictive=False,
                       fix_tau=fix_tau)
    store = run_chains(model, PriorConfig(), plan, out)
    theta = store.draws("theta_gdp")[:, 0, :]
    return np.expm1(np.diff(theta, axis=1)).mean(axis=0)


def main(out: Path) -> None:
    items = [it for it in default_items() if it.item_id in (1, 6)]
    panel = build_panel([("GHA", 1960, 1, 0.0)], items, last_year=1990)
    rates = [0.04 if year < 1975 else -0.01 for year in YEARS]
    obs = [("GHA", year, 17, r) for year, r in zip(YEARS, rates)]
    model = register_extension(panel, "gdp-log-growth", [growth_item(17, "reported growth")], obs)

    free = implied_growth(model, out / "free", {})
    known = implied_growth(model, out / "known", {"gdp-log-growth": 1 / 0.005 ** 2})
    print("year  reported  implied (precision estimated)  implied (sd 0.005 known)")
    for year, r, a, b in zip(YEARS, rates, free, known):
        print(f"{year}  {r:+.3f}    {a:+.4f}                         {b:+.4f}")


if __name__ == "__main__":
    with tempfile.TemporaryDirectory() as tmp:
        main(Path(tmp))
