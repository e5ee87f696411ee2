"""
Model validity checks computed from a panel and its posterior.

Z-scores compare each observed value with its posterior predictive
distribution; coverage counts how many fall within 1, 2 and 3 predictive
standard deviations; ``rmse_compare`` scores two fitted models against the
same observed cells draw by draw.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .panel import Panel, PanelError, item_counts
from .posterior import LATENTS, PosteriorSummary, write_table
from .sampler.store import DrawStore


class ValidationError(ValueError):
    pass


class StoreMismatch(ValidationError):
    """Two draw stores (or a store and a panel) cannot be compared."""


def _check_coords(panel: Panel, summary: PosteriorSummary, need_predictive: bool = True) -> None:
    if list(panel.countries) != list(summary.countries) or list(panel.years) != list(summary.years):
        raise ValidationError("panel and posterior cover different countries or years")
    if [it.item_id for it in panel.items] != [it.item_id for it in summary.items]:
        raise ValidationError("panel and posterior have different items")
    if need_predictive and "ypred" not in summary.params:
        raise ValidationError("posterior has no predictive draws (ypred)")


# ---------------------------------------------------------------------------
# z-scores and coverage

@dataclass
class ZScoreTable:
    """One entry per observed cell.

    ``z`` is NaN and ``flagged`` is True where the predictive sd is 0;
    flagged cells are left out of every aggregate.  ``co_observed`` counts
    the other items of the same dimension observed in that country-year.
    """

    country: np.ndarray
    year: np.ndarray
    item_id: np.ndarray
    y: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    z: np.ndarray
    flagged: np.ndarray
    co_observed: np.ndarray
    countries: list
    item_names: dict

    COLUMNS = ("country", "year", "item_id", "item", "observed", "pred_mean", "pred_sd", "z",
               "flagged", "co_observed")

    def __len__(self) -> int:
        return len(self.z)

    @property
    def valid(self) -> np.ndarray:
        return ~self.flagged

    def by_item(self) -> dict[int, np.ndarray]:
        ok = self.valid
        return {int(i): self.z[ok & (self.item_id == i)] for i in np.unique(self.item_id)}

    def by_co_observed(self) -> dict[int, np.ndarray]:
        ok = self.valid
        return {int(k): self.z[ok & (self.co_observed == k)] for k in np.unique(self.co_observed)}

    def rows(self):
        for k in range(len(self)):
            yield (self.countries[self.country[k]], int(self.year[k]), int(self.item_id[k]),
                   self.item_names[int(self.item_id[k])], self.y[k], self.mean[k], self.sd[k],
                   self.z[k], int(self.flagged[k]), int(self.co_observed[k]))


def zscores_from_arrays(y, mean, sd) -> tuple[np.ndarray, np.ndarray]:
    """``(y - mean) / sd`` elementwise, NaN and flagged where sd is 0."""
    y, mean, sd = (np.asarray(a, dtype=float) for a in (y, mean, sd))
    flagged = ~(sd > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(flagged, np.nan, (y - mean) / np.where(flagged, 1.0, sd))
    return z, flagged


def _co_observed(panel: Panel) -> np.ndarray:
    """Per (C, T, J): number of other same-dimension items observed."""
    out = np.zeros(panel.mask.shape, dtype=int)
    for dim in {it.dimension for it in panel.items}:
        cols = [j for j, it in enumerate(panel.items) if it.dimension is dim]
        n = panel.mask[:, :, cols].sum(axis=2)
        out[:, :, cols] = n[:, :, None] - panel.mask[:, :, cols]
    return out


def zscores(panel: Panel, summary: PosteriorSummary) -> ZScoreTable:
    _check_coords(panel, summary)
    c, t, j = np.nonzero(panel.mask)
    pred = summary["ypred"]
    y = panel.values[c, t, j]
    mean = pred.mean[c, t, j]
    sd = pred.sd[c, t, j]
    z, flagged = zscores_from_arrays(y, mean, sd)
    ids = np.array([it.item_id for it in panel.items])
    return ZScoreTable(country=c, year=np.asarray(panel.years)[t], item_id=ids[j], y=y, mean=mean, sd=sd,
                       z=z, flagged=flagged, co_observed=_co_observed(panel)[c, t, j],
                       countries=list(panel.countries),
                       item_names={it.item_id: it.name for it in panel.items})


THRESHOLDS = (1.0, 2.0, 3.0)


@dataclass
class CoverageRow:
    label: str
    n: int
    within: tuple     # proportions for THRESHOLDS


@dataclass
class CoverageTable:
    rows: list
    weighted: CoverageRow

    COLUMNS = ("item", "within_1sd", "within_2sd", "within_3sd", "n")

    def table_rows(self):
        for r in [*self.rows, self.weighted]:
            yield (r.label, *r.within, r.n)


def coverage_of(z) -> tuple:
    """Proportions of |z| within each of THRESHOLDS."""
    a = np.abs(np.asarray(z, dtype=float))
    return tuple(float(np.mean(a <= k)) for k in THRESHOLDS)


def coverage(zt: ZScoreTable) -> CoverageTable:
    """Per-item and observation-weighted coverage of the predictive intervals."""
    z_all = zt.z[zt.valid]
    if z_all.size == 0:
        raise ValidationError("no usable z-scores to compute coverage from")
    rows = [CoverageRow(zt.item_names[i], len(z), coverage_of(z))
            for i, z in zt.by_item().items() if len(z)]
    return CoverageTable(rows, CoverageRow("Weighted Proportion", len(z_all), coverage_of(z_all)))


# ---------------------------------------------------------------------------
# RMSE comparison

@dataclass
class RmseRow:
    item_id: int
    item: str
    n_cells: int
    diff_mean: float
    lower: float
    upper: float
    pr_a_better: float
    n_draws: int

    COLUMNS = ("item_id", "item", "n_cells", "diff", "lower_95", "upper_95", "pr_diff", "n_draws")

    def as_tuple(self):
        return (self.item_id, self.item, self.n_cells, self.diff_mean, self.lower, self.upper,
                self.pr_a_better, self.n_draws)


def _coord_mismatch(a: DrawStore, b: DrawStore) -> list[str]:
    problems = []
    for key in ("countries", "years", "start", "end"):
        if a.manifest[key] != b.manifest[key]:
            only_a = sorted(set(map(str, a.manifest[key])) - set(map(str, b.manifest[key])))
            only_b = sorted(set(map(str, b.manifest[key])) - set(map(str, a.manifest[key])))
            problems.append(f"{key} differ (only in A: {only_a[:10]}, only in B: {only_b[:10]})")
    ia = [d["item_id"] for d in a.manifest["items"]]
    ib = [d["item_id"] for d in b.manifest["items"]]
    if ia != ib:
        problems.append(f"items differ: A={ia} B={ib}")
    return problems


def draw_rmse(pred: np.ndarray, y: np.ndarray) -> np.ndarray:
    """RMSE of each row of ``pred`` (draws x cells) against ``y``."""
    return np.sqrt(np.mean((pred - y[None, :]) ** 2, axis=1))


def summarize_difference(diff: np.ndarray) -> tuple[float, float, float, float]:
    """Mean, equal-tailed 95% interval and Pr(diff < 0) (ties count half)."""
    lo, hi = np.quantile(diff, [0.025, 0.975])
    pr = float(np.mean(diff < 0) + 0.5 * np.mean(diff == 0))
    return float(np.mean(diff)), float(lo), float(hi), pr


def rmse_compare(store_a: DrawStore, store_b: DrawStore, panel: Panel, target_items) -> list[RmseRow]:
    """Draw-paired RMSE difference ``RMSE_A - RMSE_B`` per target item.

    Cells are those observed in ``panel`` and in both stores' input data.
    Draws are paired by their pooled index; both stores must hold the same
    number of draws.  ``pr_a_better`` is the posterior probability that
    model A has the lower RMSE.
    """
    problems = _coord_mismatch(store_a, store_b)
    if list(panel.countries) != store_a.countries or [int(y) for y in panel.years] != list(store_a.years):
        problems.append("panel does not match the stores' countries/years")
    if store_a.n_chains * store_a.n_draws != store_b.n_chains * store_b.n_draws:
        problems.append(f"draw counts differ: A={store_a.n_chains}x{store_a.n_draws} "
                        f"B={store_b.n_chains}x{store_b.n_draws}")
    if "ypred" not in store_a.names or "ypred" not in store_b.names:
        problems.append("both stores need predictive draws (ypred)")
    if problems:
        raise StoreMismatch("; ".join(problems))

    obs_a = np.isfinite(np.asarray(store_a.array("observed")))
    obs_b = np.isfinite(np.asarray(store_b.array("observed")))
    pa = store_a.draws("ypred")
    pb = store_b.draws("ypred")
    rows = []
    for item_id in target_items:
        try:
            j = panel.item_index(item_id)
        except PanelError:
            raise StoreMismatch(f"target item {item_id} is not in the panel") from None
        cells = panel.mask[:, :, j] & obs_a[:, :, j] & obs_b[:, :, j]
        if not cells.any():
            raise StoreMismatch(f"item {item_id}: no cells observed in the panel and both runs")
        c, t = np.nonzero(cells)
        y = panel.values[c, t, j]
        diff = draw_rmse(np.asarray(pa[:, c, t, j]), y) - draw_rmse(np.asarray(pb[:, c, t, j]), y)
        m, lo, hi, pr = summarize_difference(diff)
        rows.append(RmseRow(int(item_id), panel.items[j].name, len(y), m, lo, hi, pr, len(diff)))
    return rows


# ---------------------------------------------------------------------------
# correlations

@dataclass
class CorrelationMatrix:
    """Pairwise correlations; NaN marks pairs with fewer than two shared units."""

    labels: list
    corr: np.ndarray
    n_overlap: np.ndarray

    def long_rows(self):
        for a, la in enumerate(self.labels):
            for b, lb in enumerate(self.labels):
                yield (la, lb, self.corr[a, b], int(self.n_overlap[a, b]))


def pairwise_correlation(columns: np.ndarray):
    """Correlation of every column pair over rows where both are finite."""
    V = columns.shape[1]
    ok = np.isfinite(columns)
    corr = np.full((V, V), np.nan)
    n = ok.T.astype(int) @ ok.astype(int)
    for a in range(V):
        for b in range(a, V):
            both = ok[:, a] & ok[:, b]
            if both.sum() < 2:
                continue
            x, y = columns[both, a], columns[both, b]
            dx, dy = x - x.mean(), y - y.mean()
            den = np.sqrt(np.dot(dx, dx) * np.dot(dy, dy))
            if den > 0:
                corr[a, b] = corr[b, a] = min(1.0, max(-1.0, np.dot(dx, dy) / den))
    return corr, n


def correlation_matrix(panel: Panel, summary: PosteriorSummary) -> CorrelationMatrix:
    """Correlations among observed items, predictive means and latent means.

    Labels are ``obs:<item_id>``, ``pred:<item_id>`` and the latent names;
    rows are active country-years.
    """
    _check_coords(panel, summary)
    act = panel.active
    cols, labels = [], []
    for j, it in enumerate(panel.items):
        cols.append(np.where(panel.mask[:, :, j], panel.values[:, :, j], np.nan)[act])
        labels.append(f"obs:{it.item_id}")
    for j, it in enumerate(panel.items):
        cols.append(summary["ypred"].mean[:, :, j][act])
        labels.append(f"pred:{it.item_id}")
    for name in LATENTS:
        cols.append(summary[name].mean[act])
        labels.append(name)
    corr, n = pairwise_correlation(np.column_stack(cols))
    return CorrelationMatrix(labels, corr, n)


# ---------------------------------------------------------------------------
# uncertainty and bias profiles

PROFILE_COLUMNS = ("group", "bucket", "n", "min", "q25", "median", "q75", "max")


def _five(values: np.ndarray) -> tuple:
    if values.size == 0:
        return (np.nan,) * 5
    return (float(values.min()), *map(float, np.quantile(values, [0.25, 0.5, 0.75])), float(values.max()))


def uncertainty_profile(panel: Panel, summary: PosteriorSummary) -> list[tuple]:
    """Latent posterior sd by the number of items observed in the country-year.

    Returns rows ``(latent, item_count, n, min, q25, median, q75, max)``.
    """
    _check_coords(panel, summary, need_predictive=False)
    counts = item_counts(panel)
    act = panel.active
    rows = []
    for name in LATENTS:
        sd = summary[name].sd
        for k in np.unique(counts[act]):
            v = sd[act & (counts == k)]
            v = v[np.isfinite(v)]
            rows.append((name, int(k), int(v.size), *_five(v)))
    return rows


def item_bias_profile(zt: ZScoreTable, panel: Panel | None = None) -> list[tuple]:
    """z distribution per item and number of co-observed same-dimension items.

    Returns rows ``(item, "+k", n, min, q25, median, q75, max)``.
    """
    rows = []
    ok = zt.valid
    for item_id in np.unique(zt.item_id):
        sel = ok & (zt.item_id == item_id)
        for k in np.unique(zt.co_observed[sel]):
            z = zt.z[sel & (zt.co_observed == k)]
            rows.append((zt.item_names[int(item_id)], f"+{int(k)}", int(z.size), *_five(z)))
    return rows


# ---------------------------------------------------------------------------
# writers

def write_zscores(path, zt: ZScoreTable) -> None:
    write_table(path, ZScoreTable.COLUMNS, zt.rows())


def write_coverage(path, table: CoverageTable) -> None:
    write_table(path, CoverageTable.COLUMNS, table.table_rows())


def write_rmse(path, rows) -> None:
    write_table(path, RmseRow.COLUMNS, (r.as_tuple() for r in rows))


def write_correlations(path_wide, path_long, cm: CorrelationMatrix) -> None:
    write_table(path_wide, ("variable", *cm.labels),
                ((la, *cm.corr[a]) for a, la in enumerate(cm.labels)))
    write_table(path_long, ("var1", "var2", "correlation", "n_overlap"), cm.long_rows())


def write_profile(path, rows) -> None:
    write_table(path, PROFILE_COLUMNS, rows)


__all__ = [
    "ValidationError", "StoreMismatch", "ZScoreTable", "zscores", "zscores_from_arrays",
    "CoverageRow", "CoverageTable", "coverage", "coverage_of", "THRESHOLDS", "RmseRow", "rmse_compare",
    "draw_rmse", "summarize_difference", "CorrelationMatrix", "correlation_matrix",
    "pairwise_correlation", "uncertainty_profile", "item_bias_profile", "write_zscores",
    "write_coverage", "write_rmse", "write_correlations", "write_profile",
]
