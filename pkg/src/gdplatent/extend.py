"""
Deterministic growth links.

A :class:`DerivedLink` turns two lags of one free latent into a derived
latent (e.g. a growth rate) that new observed items can load on.  Each
link gets its own emission precision category; its items have fixed
intercepts (normally 0).
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .panel import Dimension, ItemSpec, Panel, PanelError


class Transform(str, enum.Enum):
    DIFFERENCE = "difference"
    RATIO_MINUS_ONE = "ratio-minus-one"
    LOG_GROWTH = "log-growth"


def derived_growth(theta_t, theta_prev, transform: Transform | str = Transform.RATIO_MINUS_ONE):
    """Growth implied by latent levels in years t and t-1.

    ``ratio-minus-one`` is ``theta_t / theta_prev - 1``; ``log-growth`` reads
    the latents as log levels, ``exp(theta_t - theta_prev) - 1``;
    ``difference`` is ``theta_t - theta_prev``.

    Raises
    ------
    ZeroDivisionError
        ``ratio-minus-one`` with a zero ``theta_prev``.
    """
    transform = Transform(transform)
    if transform is Transform.RATIO_MINUS_ONE:
        if np.any(np.asarray(theta_prev) == 0):
            raise ZeroDivisionError("ratio-minus-one growth with a zero previous-year latent")
    return apply_transform(transform, theta_t, theta_prev)


def apply_transform(transform: Transform, a, b):
    """Unchecked elementwise transform (ratio at zero gives inf/nan)."""
    if transform is Transform.DIFFERENCE:
        return a - b
    if transform is Transform.LOG_GROWTH:
        return np.expm1(np.subtract(a, b)) if isinstance(a, np.ndarray) else math.expm1(a - b)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.divide(a, b) - 1.0


@dataclass(frozen=True)
class DerivedLink:
    """``inputs`` are ``(dimension, lag)`` pairs, numerator/current first."""

    name: str
    transform: Transform = Transform.RATIO_MINUS_ONE
    inputs: tuple = ((Dimension.GDP, 0), (Dimension.GDP, 1))
    items: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "transform", Transform(self.transform))
        inputs = tuple((Dimension(d), int(lag)) for d, lag in self.inputs)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "items", tuple(int(i) for i in self.items))
        if len(inputs) != 2:
            raise ValueError("a growth link takes exactly two inputs")
        if inputs[0][0] != inputs[1][0] or inputs[0][0] not in (Dimension.GDP, Dimension.POP):
            raise ValueError("growth inputs must be two lags of the GDP or the population latent")
        if any(lag < 0 for _, lag in inputs):
            raise ValueError("lags must be non-negative")
        if inputs[0][1] == inputs[1][1]:
            raise ValueError("growth inputs need two distinct lags")

    @property
    def dimension(self) -> Dimension:
        return self.inputs[0][0]

    @property
    def lags(self) -> tuple[int, int]:
        return self.inputs[0][1], self.inputs[1][1]

    @property
    def max_lag(self) -> int:
        return max(self.lags)


LINK_REGISTRY = {
    "gdp-growth": DerivedLink("gdp-growth", Transform.RATIO_MINUS_ONE),
    "gdp-log-growth": DerivedLink("gdp-log-growth", Transform.LOG_GROWTH),
    "gdp-difference": DerivedLink("gdp-difference", Transform.DIFFERENCE),
    "pop-log-growth": DerivedLink("pop-log-growth", Transform.LOG_GROWTH,
                                  ((Dimension.POP, 0), (Dimension.POP, 1))),
}


@dataclass(frozen=True)
class ExtendedModel:
    """A panel plus the derived links its GROWTH items load on."""

    panel: Panel
    links: tuple = field(default_factory=tuple)

    def link_of(self, item_id: int) -> DerivedLink:
        for link in self.links:
            if item_id in link.items:
                return link
        raise KeyError(item_id)


def growth_item(item_id: int, name: str, unit_note: str = "annual growth rate") -> ItemSpec:
    """An item spec for observed growth rates; intercept fixed at 0."""
    return ItemSpec(item_id, name, Dimension.GROWTH, 0.0, unit_note, anchor=True)


def register_extension(base, link, new_items: Sequence[ItemSpec],
                       observations: Iterable[tuple] = ()) -> ExtendedModel:
    """Add growth items that load on ``link``.

    Parameters
    ----------
    base : Panel or ExtendedModel
    link : DerivedLink or str
        A link, or the name of one in :data:`LINK_REGISTRY`.
    new_items : sequence of ItemSpec
        GROWTH items; may already be present in the panel.
    observations : iterable of (country, year, item_id, value)
        Growth observations (already in the model's units) for the new items.

    Observations in years where a country lacks the lagged latent are
    dropped with a warning.
    """
    if isinstance(link, str):
        try:
            link = LINK_REGISTRY[link]
        except KeyError:
            raise KeyError(f"unknown link {link!r}; known: {sorted(LINK_REGISTRY)}") from None
    model = base if isinstance(base, ExtendedModel) else ExtendedModel(base)
    panel = model.panel
    new_items = list(new_items)
    if any(it.dimension is not Dimension.GROWTH for it in new_items):
        raise PanelError("extension items must have the GROWTH dimension")
    if any(l.name == link.name for l in model.links):
        raise PanelError(f"link {link.name!r} already registered")

    known = set(panel.item_ids)
    to_add = [it for it in new_items if it.item_id not in known]
    observations = list(observations)
    if to_add or observations:
        panel = panel.add_items(to_add, observations)

    ids = tuple(it.item_id for it in new_items)
    link = DerivedLink(link.name, link.transform, link.inputs, ids)

    mask = panel.mask.copy()
    dropped = 0
    for item_id in ids:
        j = panel.item_index(item_id)
        for i in range(len(panel.countries)):
            lo = panel.start[i] + link.max_lag
            bad = mask[i, :lo, j]
            dropped += int(bad.sum())
            mask[i, :lo, j] = False
    if dropped:
        warnings.warn(f"{dropped} growth observation(s) without a lagged latent were skipped",
                      stacklevel=2)
        panel = Panel(panel.countries, panel.years, panel.start, panel.end, panel.items,
                      np.where(mask, panel.values, 0.0), mask)
    return ExtendedModel(panel, model.links + (link,))
