"""
Posterior summaries, convergence diagnostics and the estimate table.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .panel import Panel
from .sampler.store import DrawStore

QUANTILES = (0.025, 0.16, 0.5, 0.84, 0.975)
PSR_THRESHOLD = 1.1


class SummaryError(ValueError):
    pass


@dataclass
class ParamSummary:
    mean: np.ndarray
    sd: np.ndarray
    quantiles: np.ndarray      # (len(QUANTILES), ...)
    chain_means: np.ndarray    # (n_chains, ...)
    n_draws: int

    def q(self, p: float) -> np.ndarray:
        return self.quantiles[QUANTILES.index(p)]


@dataclass
class PosteriorSummary:
    params: dict
    n_chains: int
    n_draws: int               # pooled over chains
    countries: list
    years: np.ndarray
    items: list
    active: np.ndarray
    observed: np.ndarray       # (C, T, J), NaN where unobserved

    def __getitem__(self, name: str) -> ParamSummary:
        return self.params[name]


def _sorted_stats(sorted_draws: np.ndarray):
    """Mean, sd and quantiles along axis 0 of already-sorted draws.

    Quantiles interpolate linearly between order statistics (positions
    ``(n - 1) * p``).
    """
    n = sorted_draws.shape[0]
    with np.errstate(invalid="ignore"):
        mean = sorted_draws.mean(axis=0)
        sd = sorted_draws.std(axis=0, ddof=1) if n > 1 else np.zeros_like(mean)
    qs = []
    for p in QUANTILES:
        h = (n - 1) * p
        lo = int(np.floor(h))
        hi = min(lo + 1, n - 1)
        frac = h - lo
        lo_v, hi_v = sorted_draws[lo], sorted_draws[hi]
        qs.append(lo_v if frac == 0 else lo_v + frac * (hi_v - lo_v))
    return mean, sd, np.stack(qs)


def summarize_draws(draws: np.ndarray, chunk: int = 4096) -> ParamSummary:
    """Summary of one array of draws shaped (n_chains, n_draws, ...).

    Draws of parameters with no data behind them (say, predictive values
    of an unobserved item whose precision comes from a vague prior) can be
    large enough that the sd overflows; it is then reported as inf.
    """
    draws = np.asarray(draws)
    m, n = draws.shape[:2]
    if m * n == 0:
        raise SummaryError("no draws to summarise")
    tail = draws.shape[2:]
    flat = draws.reshape(m, n, -1)
    P = flat.shape[2]
    mean = np.empty(P)
    sd = np.empty(P)
    quant = np.empty((len(QUANTILES), P))
    with np.errstate(invalid="ignore", over="ignore"):
        chain_means = np.asarray(flat.mean(axis=1))
        for lo in range(0, P, chunk):
            block = np.sort(np.asarray(flat[:, :, lo:lo + chunk]).reshape(m * n, -1), axis=0)
            mean[lo:lo + chunk], sd[lo:lo + chunk], quant[:, lo:lo + chunk] = _sorted_stats(block)
    return ParamSummary(mean.reshape(tail), sd.reshape(tail), quant.reshape((len(QUANTILES),) + tail),
                        chain_means.reshape((m,) + tail), m * n)


def summarize(store: DrawStore, names=None) -> PosteriorSummary:
    """Exact sample statistics of every per-draw array in ``store``."""
    if store.n_draws * store.n_chains == 0:
        raise SummaryError(f"{store.path}: store holds no draws")
    names = store.per_draw_names if names is None else list(names)
    params = {name: summarize_draws(store.array(name)) for name in names}
    return PosteriorSummary(params, store.n_chains, store.n_chains * store.n_draws, store.countries,
                            store.years, store.items, store.active, np.asarray(store.array("observed")))


# ---------------------------------------------------------------------------
# convergence

def psr(chains: np.ndarray) -> np.ndarray:
    """Potential scale reduction of draws shaped (m chains, n draws, P).

    Uses ``V = (n-1)/n W + (m+1)/(m n) B``; ``sqrt(V/W)`` is bounded
    below by ``sqrt((n-1)/n)``.  Parameters with zero within-chain
    variance get NaN.
    """
    m, n = chains.shape[:2]
    chain_means = chains.mean(axis=1)
    W = chains.var(axis=1, ddof=1).mean(axis=0)
    B = n * chain_means.var(axis=0, ddof=1)
    V = (n - 1) / n * W + (m + 1) / (m * n) * B
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(W > 0, np.sqrt(V / W), np.nan)


def _autocovariance(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance along axis 1 of (m, n, P) draws."""
    n = x.shape[1]
    x = x - x.mean(axis=1, keepdims=True)
    size = 2 ** int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, n=size, axis=1)
    return np.fft.irfft(f * np.conj(f), n=size, axis=1)[:, :n] / n


def ess(chains: np.ndarray) -> np.ndarray:
    """Effective sample size of draws shaped (m, n, P).

    Autocorrelations combine within- and between-chain variance; the sum
    is truncated at the first negative sum of adjacent-lag pairs (Geyer's
    initial positive sequence).  The autocorrelation time is floored at
    ``1 / log10(m n)`` and the result capped at ``m * n``.
    """
    m, n, P = chains.shape
    acov = _autocovariance(chains).mean(axis=0)           # (n, P)
    W = chains.var(axis=1, ddof=1).mean(axis=0)
    var_plus = (n - 1) / n * W
    if m > 1:
        var_plus = var_plus + chains.mean(axis=1).var(axis=0, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = 1.0 - (W[None, :] * (n - 1) / n - acov) / var_plus[None, :]
    rho[0] = 1.0
    K = n // 2
    pairs = rho[:2 * K:2] + rho[1:2 * K:2]                  # (K, P)
    negative = pairs < 0
    cut = np.where(negative.any(axis=0), negative.argmax(axis=0), K)
    keep = np.arange(K)[:, None] < cut[None, :]
    tau = -1.0 + 2.0 * np.sum(np.where(keep, pairs, 0.0), axis=0)
    # strongly antithetic chains can drive the sum below zero
    tau = np.maximum(tau, 1.0 / np.log10(max(m * n, 10)))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(var_plus > 0, m * n / tau, np.nan)
    return np.minimum(out, m * n)


@dataclass
class ConvergenceReport:
    psr: dict = field(default_factory=dict)        # name -> array over active elements
    ess: dict = field(default_factory=dict)
    labels: dict = field(default_factory=dict)     # name -> list of element labels
    n_chains: int = 0
    n_draws: int = 0

    @property
    def psr_available(self) -> bool:
        return self.n_chains >= 2

    def _extreme(self, table, pick):
        best = None
        for name, values in table.items():
            finite = np.isfinite(values)
            if not finite.any():
                continue
            i = int(pick(np.where(finite, values, np.nan)))
            v = float(values[i])
            if best is None or (v > best[0] if pick is np.nanargmax else v < best[0]):
                best = (v, self.labels[name][i])
        return best

    @property
    def max_psr(self):
        return self._extreme(self.psr, np.nanargmax) if self.psr_available else None

    @property
    def min_ess(self):
        return self._extreme(self.ess, np.nanargmin)

    @property
    def converged(self) -> bool | None:
        worst = self.max_psr
        return None if worst is None else worst[0] < PSR_THRESHOLD

    def to_text(self) -> str:
        lines = [f"n_chains = {self.n_chains}", f"n_draws_per_chain = {self.n_draws}",
                 f"psr_available = {str(self.psr_available).lower()}"]
        worst, low = self.max_psr, self.min_ess
        if worst is not None:
            lines += [f"max_psr = {worst[0]:.6g}", f"max_psr_param = {worst[1]}",
                      f"converged = {str(self.converged).lower()}"]
        if low is not None:
            lines += [f"min_ess = {low[0]:.6g}", f"min_ess_param = {low[1]}"]
        for name in self.ess:
            for label, e, r in zip(self.labels[name], self.ess[name],
                                   self.psr.get(name, np.full(len(self.ess[name]), np.nan))):
                if len(self.labels[name]) <= 64:
                    lines.append(f"psr.{label} = {r:.6g}")
                    lines.append(f"ess.{label} = {e:.6g}")
        return "\n".join(lines) + "\n"


def _element_labels(store: DrawStore, name: str, shape):
    if name == "alpha":
        return [f"alpha[{it.item_id}]" for it in store.items]
    if name == "tau":
        return [f"tau[{t}]" for t in store.tau_names]
    if name == "sigma":
        return ["sigma[gdp]", "sigma[pop]"]
    if len(shape) == 2:
        years = store.years
        return [f"{name}[{c},{int(y)}]" for c in store.countries for y in years]
    return [f"{name}[{i}]" for i in range(int(np.prod(shape)))]


def diagnose(store: DrawStore, names=("alpha", "tau", "sigma", "theta_gdp", "theta_pop")) -> ConvergenceReport:
    """PSR and ESS for every scalar element of the named arrays.

    Latent arrays are restricted to active country-years.  With a single
    chain PSR is unavailable (reported as NaN).
    """
    if store.n_draws < 10:
        raise SummaryError(f"need at least 10 draws per chain, store has {store.n_draws}")
    report = ConvergenceReport(n_chains=store.n_chains, n_draws=store.n_draws)
    active = store.active.ravel()
    for name in names:
        if name not in store.names:
            continue
        a = np.asarray(store.array(name))
        tail = a.shape[2:]
        flat = a.reshape(a.shape[0], a.shape[1], -1)
        labels = _element_labels(store, name, tail)
        if len(tail) == 2:
            flat = flat[:, :, active]
            labels = [l for l, keep in zip(labels, active) if keep]
        report.labels[name] = labels
        report.ess[name] = ess(flat)
        report.psr[name] = psr(flat) if store.n_chains >= 2 else np.full(flat.shape[2], np.nan)
    return report


# ---------------------------------------------------------------------------
# estimate table

ESTIMATE_COLUMNS = ("country", "year", "kind", "variable", "item_id", "mean", "sd",
                    "q2.5", "q16", "q50", "q84", "q97.5", "lower_1sd", "upper_1sd",
                    "observed", "observed_value")
LATENTS = ("theta_gdp", "theta_pop", "theta_gdppc")


def export_estimates(summary: PosteriorSummary, panel: Panel) -> list[tuple]:
    """One row per active country-year-item plus one per latent dimension.

    Item rows carry the posterior predictive summary and, when observed,
    the observed value.
    """
    if list(panel.countries) != list(summary.countries) or list(panel.years) != list(summary.years):
        raise SummaryError("summary and panel cover different countries or years")
    if "ypred" not in summary.params:
        raise SummaryError("summary has no predictive draws (ypred)")
    if [it.item_id for it in panel.items] != [it.item_id for it in summary.items]:
        raise SummaryError("summary and panel have different items")
    pred = summary["ypred"]
    rows = []
    for i, country in enumerate(panel.countries):
        for t in range(panel.start[i], panel.end[i] + 1):
            year = int(panel.years[t])
            for j, it in enumerate(panel.items):
                obs = bool(panel.mask[i, t, j])
                m, s = pred.mean[i, t, j], pred.sd[i, t, j]
                rows.append((country, year, "item", it.name, it.item_id, m, s,
                             *pred.quantiles[:, i, t, j], m - s, m + s, int(obs),
                             float(panel.values[i, t, j]) if obs else np.nan))
            for name in LATENTS:
                ps = summary[name]
                m, s = ps.mean[i, t], ps.sd[i, t]
                rows.append((country, year, "latent", name, "", m, s, *ps.quantiles[:, i, t],
                             m - s, m + s, 0, np.nan))
    return rows


def fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return "NA" if not np.isfinite(x) else format(float(x), ".10g")
    return str(x)


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) for x in row])


def write_estimates(path, rows) -> None:
    write_table(path, ESTIMATE_COLUMNS, rows)
