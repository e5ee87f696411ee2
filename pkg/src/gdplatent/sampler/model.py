"""
Flat arrays the conditional updates work on, compiled once per run.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..extend import DerivedLink, ExtendedModel, Transform, apply_transform
from ..panel import Dimension, Panel
from .types import PriorConfig, SamplerPlan

GDP, POP, PC, GROWTH = 0, 1, 2, 3
CORE_TAU = ("gdp", "pop", "gdppc")
_KIND = {Dimension.GDP: GDP, Dimension.POP: POP, Dimension.GDPPC: PC, Dimension.GROWTH: GROWTH}


class CoupledTerm(NamedTuple):
    """One observation whose mean involves a latent site non-locally or
    non-linearly (growth items, GDPPC items under the ratio link)."""

    item: int
    cell: int          # year index of the observation
    y: float
    link: int          # index into Model.links, or -1 for a GDPPC ratio term


@dataclass
class Model:
    panel: Panel
    links: tuple
    priors: PriorConfig
    kind: np.ndarray            # (J,) GDP/POP/PC/GROWTH
    tau_index: np.ndarray       # (J,) emission-precision category
    tau_names: tuple
    item_link: np.ndarray       # (J,) link index, -1 for core items
    anchors: np.ndarray         # (J,)
    fixed_alpha: np.ndarray     # (J,) bool
    fixed_alpha_value: np.ndarray
    groups: tuple               # index arrays of GDP, POP, PC items
    counts: tuple               # (C, T) observed counts per group
    ysums: tuple                # (C, T) masked sums of y per group
    gmask: tuple                # (C, T, J_g) float masks per group
    coupled: tuple              # per free dim: dict country -> dict site -> [CoupledTerm]
    complex_rows: tuple         # per free dim: (C,) bool, countries updated site by site
    shift_ok: tuple             # per free dim: level shift is likelihood-invariant

    @property
    def shape(self):
        return self.panel.shape

    @property
    def ratio(self) -> bool:
        return self.priors.gdppc_link == "ratio"

    @property
    def n_tau(self) -> int:
        return len(self.tau_names)

    def link_values(self, theta_gdp: np.ndarray, theta_pop: np.ndarray) -> np.ndarray:
        """Latent mean of every item in every cell, shape (C, T, J).

        Growth cells without the lagged latent are NaN.
        """
        C, T, J = self.shape
        out = np.empty((C, T, J))
        g, p, c = self.groups
        out[:, :, g] = theta_gdp[:, :, None]
        out[:, :, p] = theta_pop[:, :, None]
        out[:, :, c] = gdppc_latent(theta_gdp, theta_pop, self.ratio)[:, :, None]
        for l, link in enumerate(self.links):
            cols = np.nonzero(self.item_link == l)[0]
            if cols.size:
                out[:, :, cols] = link_latent(link, theta_gdp, theta_pop, self.panel.start)[:, :, None]
        return out


def gdppc_latent(theta_gdp, theta_pop, ratio: bool = False):
    if ratio:
        with np.errstate(divide="ignore", invalid="ignore"):
            return theta_gdp / theta_pop
    return theta_gdp - theta_pop


def link_latent(link: DerivedLink, theta_gdp, theta_pop, start) -> np.ndarray:
    """Derived latent of ``link`` on the (C, T) grid; NaN where lags are missing."""
    theta = theta_gdp if link.dimension is Dimension.GDP else theta_pop
    C, T = theta.shape
    la, lb = link.lags
    out = np.full((C, T), np.nan)
    m = link.max_lag
    if T > m:
        a = theta[:, m - la:T - la]
        b = theta[:, m - lb:T - lb]
        out[:, m:] = apply_transform(link.transform, a, b)
    t = np.arange(T)
    out[t[None, :] < (np.asarray(start)[:, None] + m)] = np.nan
    return out


def compile_model(model, priors: PriorConfig, plan: SamplerPlan | None = None) -> Model:
    plan = plan or SamplerPlan(n_iterations=2, n_burnin=1)
    if isinstance(model, Panel):
        model = ExtendedModel(model)
    panel, links = model.panel, tuple(model.links)
    C, T, J = panel.shape
    kind = np.array([_KIND[it.dimension] for it in panel.items], dtype=int)

    item_link = np.full(J, -1, dtype=int)
    for l, link in enumerate(links):
        for item_id in link.items:
            item_link[panel.item_index(item_id)] = l
    orphans = [panel.items[j].item_id for j in range(J) if kind[j] == GROWTH and item_link[j] < 0]
    if orphans:
        raise ValueError(f"growth items {orphans} are not attached to any registered link")
    tau_names = CORE_TAU + tuple(link.name for link in links)
    tau_index = np.where(kind == GROWTH, 3 + item_link, kind)

    anchors = np.array([it.intercept_anchor for it in panel.items], dtype=float)
    fixed = kind == GROWTH
    if priors.hold_anchors_fixed:
        fixed |= np.array([it.anchor for it in panel.items])
    fixed_value = anchors.copy()
    for item_id, value in plan.fix_alpha.items():
        j = panel.item_index(item_id)
        fixed[j] = True
        fixed_value[j] = float(value)

    y = panel.values
    groups, counts, ysums, gmask = [], [], [], []
    for k in (GDP, POP, PC):
        idx = np.nonzero(kind == k)[0]
        m = panel.mask[:, :, idx]
        groups.append(idx)
        counts.append(m.sum(axis=2).astype(float))
        ysums.append(np.where(m, y[:, :, idx], 0.0).sum(axis=2))
        gmask.append(m.astype(float))

    ratio = priors.gdppc_link == "ratio"
    coupled = ({}, {})
    shift_ok = [True, True]

    def add(dim, country, site, term):
        coupled[dim].setdefault(country, {}).setdefault(site, []).append(term)

    if ratio:
        for j in groups[PC]:
            for i, t in zip(*np.nonzero(panel.mask[:, :, j])):
                term = CoupledTerm(int(j), int(t), float(y[i, t, j]), -1)
                add(GDP, int(i), int(t), term)
                add(POP, int(i), int(t), term)
                shift_ok = [False, False]
    for l, link in enumerate(links):
        dim = GDP if link.dimension is Dimension.GDP else POP
        for j in np.nonzero(item_link == l)[0]:
            for i, t in zip(*np.nonzero(panel.mask[:, :, j])):
                term = CoupledTerm(int(j), int(t), float(y[i, t, j]), l)
                for lag in link.lags:
                    add(dim, int(i), int(t - lag), term)
                if link.transform is Transform.RATIO_MINUS_ONE:
                    shift_ok[dim] = False

    complex_rows = tuple(np.isin(np.arange(C), list(coupled[d])) for d in (GDP, POP))
    return Model(panel, links, priors, kind, tau_index, tau_names, item_link, anchors, fixed,
                 fixed_value, tuple(groups), tuple(counts), tuple(ysums), tuple(gmask),
                 coupled, complex_rows, tuple(shift_ok))
