"""Simulate a panel from the model, fit it and check the predictive intervals.

    python3 demos/simulate_fit_validate.py [output-dir]

Takes about half a minute.  Prints convergence, intercept recovery and the
coverage table of the observed cells.
"""
import sys
import tempfile
from pathlib import Path

import numpy as np

from gdplatent.ingest import GenerativeConfig, compute_anchors, simulate_panel
from gdplatent.posterior import diagnose, summarize
from gdplatent.sampler import PriorConfig, SamplerPlan, run_chains
from gdplatent.validate import coverage, zscores


def main(out: Path) -> None:
    panel, truth = simulate_panel(GenerativeConfig(n_countries=8, n_years=40), seed=7)
    panel = panel.with_items(compute_anchors(panel))
    print(f"panel: {len(panel.countries)} countries x {len(panel.years)} years x {len(panel.items)} items, "
          f"{int(panel.mask.sum())} observed cells")

    plan = SamplerPlan(n_chains=3, n_iterations=2000, n_burnin=500, thinning=5, seed=1)
    store = run_chains(panel, PriorConfig(), plan, out / "draws")
    report = diagnose(store)
    print(f"max PSR {report.max_psr[0]:.3f} ({report.max_psr[1]}), min ESS {report.min_ess[0]:.0f}")

    summary = summarize(store)
    alpha = summary["alpha"]
    print("\nitem                         true alpha   posterior mean   95% interval")
    for j, item in enumerate(panel.items):
        lo, hi = alpha.q(0.025)[j], alpha.q(0.975)[j]
        print(f"{item.name:<28} {truth.alpha[j]:>10.3f} {alpha.mean[j]:>16.3f}   [{lo:.3f}, {hi:.3f}]")
    print(f"tau: true {np.round(truth.tau, 1)}  posterior mean {np.round(summary['tau'].mean, 1)}")

    table = coverage(zscores(panel, summary))
    print("\nshare of observed cells within 1/2/3 predictive sds")
    for label, *within, n in table.table_rows():
        print(f"{label:<28} {within[0]:.3f} {within[1]:.3f} {within[2]:.3f}  n={n}")


if __name__ == "__main__":
    if len(sys.argv) > 1:
        main(Path(sys.argv[1]))
    else:
        with tempfile.TemporaryDirectory() as tmp:
            main(Path(tmp))
