"""
Country-year-item panels.

A :class:`Panel` holds every observed component series on a common
country x year x item grid, in natural-log units, together with the
observation mask.  Each country owns a contiguous block of years on a
shared global year axis; cells outside that block are *inactive* and carry
no latent variables.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np


class PanelError(ValueError):
    """Invalid observations or item specifications."""


class Dimension(str, enum.Enum):
    GDP = "GDP"
    POP = "POP"
    GDPPC = "GDPPC"
    GROWTH = "GROWTH"


@dataclass(frozen=True)
class ItemSpec:
    """Metadata for one component series.

    ``intercept_anchor`` is the prior centre of the item intercept (the
    empirical mean of its observed log values unless set explicitly).
    ``anchor`` marks the identification items whose intercepts may be held
    fixed at their anchor during sampling.
    """

    item_id: int
    name: str
    dimension: Dimension
    intercept_anchor: float = 0.0
    unit_note: str = ""
    anchor: bool = False

    def __post_init__(self):
        object.__setattr__(self, "dimension", Dimension(self.dimension))


def default_items() -> list[ItemSpec]:
    """The sixteen component series of the default configuration.

    Items 1-5 measure GDP, 6-10 population and 11-16 GDP per capita.
    Anchors are placeholders until :func:`gdplatent.ingest.compute_anchors`
    fills them from data.
    """
    G, P, C = Dimension.GDP, Dimension.POP, Dimension.GDPPC
    rows = [
        (1, "Maddison GDP", G, "1990 international dollars", True),
        (2, "Gleditsch GDP", G, "real GDP, 2005 prices", False),
        (3, "World Bank GDP", G, "constant 2010 USD", False),
        (4, "Broadberry & Klein GDP", G, "millions of 1990 international dollars", False),
        (5, "Bairoch GNP", G, "GNP, constant 1960 USD", False),
        (6, "Maddison pop", P, "thousands, mid-year", True),
        (7, "Gleditsch pop", P, "thousands", False),
        (8, "World Bank pop", P, "persons", False),
        (9, "Broadberry & Klein pop", P, "millions", False),
        (10, "Singer (CINC) pop", P, "thousands", False),
        (11, "Maddison GDPPC", C, "1990 international dollars", False),
        (12, "Gleditsch GDPPC", C, "real GDP per capita, 2005 prices", False),
        (13, "World Bank GDPPC", C, "constant 2010 USD", False),
        (14, "Bairoch GDPPC", C, "GNP per capita, constant 1960 USD", False),
        (15, "Broadberry GDPPC", C, "1990 international dollars", False),
        (16, "Broadberry & Klein GDPPC", C, "1990 international dollars", False),
    ]
    return [ItemSpec(i, n, d, 0.0, u, a) for i, n, d, u, a in rows]


@dataclass(frozen=True, eq=False)
class Panel:
    """Rectangularised observation tensor.

    Attributes
    ----------
    countries : tuple of str
        Sorted country identifiers.
    years : ndarray of int, shape (T,)
        Global contiguous year axis.
    start, end : ndarray of int, shape (C,)
        First and last active year index (inclusive) of each country.
    items : tuple of ItemSpec
    values : ndarray, shape (C, T, J)
        Log-unit observations; 0.0 wherever ``mask`` is false.
    mask : ndarray of bool, shape (C, T, J)
    """

    countries: tuple[str, ...]
    years: np.ndarray
    start: np.ndarray
    end: np.ndarray
    items: tuple[ItemSpec, ...]
    values: np.ndarray
    mask: np.ndarray
    active: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        t = np.arange(len(self.years))
        active = (t[None, :] >= self.start[:, None]) & (t[None, :] <= self.end[:, None])
        object.__setattr__(self, "active", active)
        for arr in (self.years, self.start, self.end, self.values, self.mask, active):
            arr.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def item_ids(self) -> tuple[int, ...]:
        return tuple(it.item_id for it in self.items)

    def item_index(self, item_id: int) -> int:
        try:
            return self.item_ids.index(item_id)
        except ValueError:
            raise PanelError(f"unknown item_id {item_id}") from None

    def items_in(self, dimension: Dimension | str) -> np.ndarray:
        dimension = Dimension(dimension)
        return np.array([j for j, it in enumerate(self.items) if it.dimension is dimension], dtype=int)

    def with_items(self, items: Sequence[ItemSpec]) -> "Panel":
        """Same observations, replacement item metadata (ids must match)."""
        if tuple(it.item_id for it in items) != self.item_ids:
            raise PanelError("replacement items must keep ids and order")
        return replace(self, items=tuple(items))

    def add_items(self, items: Sequence[ItemSpec], observations=()) -> "Panel":
        """Append items, optionally with observations on existing cells."""
        specs = list(self.items) + list(items)
        triples = to_triples(self) + list(observations)
        return build_panel(triples, specs, first_year=int(self.years[0]), last_year=int(self.years[-1]),
                           country_ranges=self.country_ranges())

    def country_ranges(self) -> dict[str, tuple[int, int]]:
        return {c: (int(self.years[s]), int(self.years[e]))
                for c, s, e in zip(self.countries, self.start, self.end)}


def build_panel(observations: Iterable[tuple], item_specs: Sequence[ItemSpec], *,
                first_year: int | None = None, last_year: int | None = None,
                country_ranges: dict[str, tuple[int, int]] | None = None) -> Panel:
    """Assemble a :class:`Panel` from ``(country, year, item_id, value)`` triples.

    Each country's active range runs from its first to its last observed
    year.  ``last_year`` extends every country's range forward (e.g. to
    2015); ``first_year`` only widens the global axis.  ``country_ranges``
    pins explicit per-country ranges, which must cover the observations.
    """
    specs = list(item_specs)
    ids = [it.item_id for it in specs]
    if len(set(ids)) != len(ids):
        raise PanelError("duplicate item_id in item specs")
    col = {item_id: j for j, item_id in enumerate(ids)}

    seen = {}
    for obs in observations:
        country, year, item_id, value = obs[:4]
        country, year, item_id, value = str(country), int(year), int(item_id), float(value)
        key = (country, year, item_id)
        if key in seen:
            raise PanelError(f"duplicate observation {key}")
        if not math.isfinite(value):
            raise PanelError(f"non-finite value {value!r} at {key}")
        if item_id not in col:
            raise PanelError(f"item_id {item_id} at {key} is not in the item specs")
        seen[key] = value

    ranges: dict[str, list[int]] = {}
    for country, year, _ in seen:
        lo_hi = ranges.setdefault(country, [year, year])
        lo_hi[0] = min(lo_hi[0], year)
        lo_hi[1] = max(lo_hi[1], year)
    if last_year is not None:
        for lo_hi in ranges.values():
            lo_hi[1] = max(lo_hi[1], last_year)
    for country, (lo, hi) in (country_ranges or {}).items():
        have = ranges.get(country)
        if have is not None and (have[0] < lo or have[1] > hi):
            raise PanelError(f"explicit year range {lo}-{hi} for {country} excludes observations")
        ranges[country] = [lo, hi]

    countries = tuple(sorted(ranges))
    if countries:
        y0 = min(r[0] for r in ranges.values())
        y1 = max(r[1] for r in ranges.values())
    else:
        y0 = y1 = first_year if first_year is not None else 0
        y1 = last_year if last_year is not None else y1
    if first_year is not None:
        y0 = min(y0, first_year)
    if last_year is not None:
        y1 = max(y1, last_year)
    years = np.arange(y0, y1 + 1) if countries or first_year is not None else np.zeros(0, dtype=int)

    C, T, J = len(countries), len(years), len(specs)
    row = {c: i for i, c in enumerate(countries)}
    values = np.zeros((C, T, J))
    mask = np.zeros((C, T, J), dtype=bool)
    for (country, year, item_id), value in seen.items():
        i, t, j = row[country], year - y0, col[item_id]
        values[i, t, j] = value
        mask[i, t, j] = True
    start = np.array([ranges[c][0] - y0 for c in countries], dtype=int)
    end = np.array([ranges[c][1] - y0 for c in countries], dtype=int)
    return Panel(countries, years, start, end, tuple(specs), values, mask)


def to_triples(panel: Panel) -> list[tuple[str, int, int, float]]:
    """Flatten the observed cells back to sorted ``(country, year, item_id, value)``."""
    out = []
    for i, t, j in zip(*np.nonzero(panel.mask)):
        out.append((panel.countries[i], int(panel.years[t]), panel.items[j].item_id,
                    float(panel.values[i, t, j])))
    return sorted(out)


def item_counts(panel: Panel) -> np.ndarray:
    """Number of observed items per country-year, shape (C, T)."""
    return panel.mask.sum(axis=2)
