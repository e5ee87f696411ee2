"""
Reading component series, applying the source-specific inclusion rules,
and simulating synthetic panels from the generative model.

Input files are delimited text with a mandatory header::

    country_id,year,item_id,value,origin_code
    GHA,1950,1,4120.5,
    GHA,1950,2,3870.0,0

``value`` is in the source's original (positive) units; ``origin_code`` is
optional source metadata used by :class:`FilterPolicy`.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .panel import Dimension, ItemSpec, Panel, build_panel, default_items

COLUMNS = ("country_id", "year", "item_id", "value", "origin_code")


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class SourceRecord:
    country: str
    year: int
    item_id: int
    value: float
    origin_code: str | None = None
    log_units: bool = False


def normalize_code(code) -> str | None:
    """Canonical text for an origin/quality code (``"-1.0"`` -> ``"-1"``)."""
    if code is None:
        return None
    code = str(code).strip()
    if not code:
        return None
    try:
        x = float(code)
    except ValueError:
        return code
    return str(int(x)) if x.is_integer() else code


def load_records(path, delimiter: str = ",") -> list[SourceRecord]:
    """Parse one observation file, in file order, without filtering."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestError(f"{path}: missing header row") from None
        missing = [c for c in COLUMNS[:4] if c not in header]
        if missing:
            raise IngestError(f"{path}:1: header lacks column(s) {', '.join(missing)}")
        pos = {c: header.index(c) for c in COLUMNS if c in header}
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < len(header):
                row = row + [""] * (len(header) - len(row))
            if len(row) != len(header):
                raise IngestError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                country = row[pos["country_id"]].strip()
                year = int(row[pos["year"]].strip())
                item_id = int(row[pos["item_id"]].strip())
                value = float(row[pos["value"]].strip())
            except ValueError as err:
                raise IngestError(f"{path}:{lineno}: {err}") from None
            if not country:
                raise IngestError(f"{path}:{lineno}: empty country_id")
            code = normalize_code(row[pos["origin_code"]]) if "origin_code" in pos else None
            records.append(SourceRecord(country, year, item_id, value, code))
    return records


def write_records(path, records: Iterable[SourceRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in records:
            w.writerow([r.country, r.year, r.item_id, repr(float(r.value)), r.origin_code or ""])


@dataclass(frozen=True)
class FilterPolicy:
    """Which records survive ingestion.

    ``retain_codes[item]`` keeps only records whose origin code is listed
    (records without a code fail it); ``exclude_codes[item]`` drops records
    whose code is listed.  Years outside ``[min_year, max_year]`` are
    dropped for every item.
    """

    retain_codes: Mapping[int, frozenset] = field(default_factory=dict)
    exclude_codes: Mapping[int, frozenset] = field(default_factory=dict)
    min_year: int = 1500
    max_year: int = 2015

    @classmethod
    def standard(cls) -> "FilterPolicy":
        # Gleditsch items keep only PWT-derived values; COW population keeps
        # quality code A; World Bank GDPPC/pop drop flagged interpolated,
        # extrapolated or preliminary values; Broadberry & Klein drop values
        # copied from Maddison.  World Bank GDP (3) is used unfiltered.
        pwt = frozenset({"0", "-1", "3"})
        flagged = frozenset({"I", "E", "P"})
        return cls(
            retain_codes={2: pwt, 7: pwt, 12: pwt, 10: frozenset({"A"})},
            exclude_codes={8: flagged, 13: flagged, 4: frozenset({"M"}),
                           9: frozenset({"M"}), 16: frozenset({"M"})},
        )

    def passes(self, rec: SourceRecord) -> bool:
        if not self.min_year <= rec.year <= self.max_year:
            return False
        code = normalize_code(rec.origin_code)
        keep = self.retain_codes.get(rec.item_id)
        if keep is not None and code not in keep:
            return False
        drop = self.exclude_codes.get(rec.item_id)
        if drop is not None and code in drop:
            return False
        return True

    def passing_code(self, item_id: int) -> str | None:
        """An origin code that survives this policy for ``item_id``."""
        keep = self.retain_codes.get(item_id)
        return sorted(keep)[0] if keep else None


def apply_filters(records: Iterable[SourceRecord], policy: FilterPolicy) -> list[SourceRecord]:
    return [r for r in records if policy.passes(r)]


def log_transform(records: Iterable[SourceRecord]) -> list[SourceRecord]:
    out = []
    for r in records:
        if r.log_units:
            out.append(r)
            continue
        if not r.value > 0 or not math.isfinite(r.value):
            raise IngestError(
                f"cannot take log of {r.value!r} ({r.country}, {r.year}, item {r.item_id})")
        out.append(replace(r, value=math.log(r.value), log_units=True))
    return out


def records_to_panel(records: Sequence[SourceRecord], items: Sequence[ItemSpec],
                     last_year: int | None = None) -> Panel:
    if any(not r.log_units for r in records):
        raise IngestError("records must be log-transformed before building a panel")
    triples = sorted((r.country, r.year, r.item_id, r.value) for r in records)
    return build_panel(triples, items, last_year=last_year)


def compute_anchors(panel: Panel, explicit: Mapping[int, float] | None = None) -> list[ItemSpec]:
    """Intercept anchors: each item's mean observed log value.

    ``explicit`` maps item ids to fixed anchors and wins over the data.
    Growth items keep their own anchor (0 by construction).
    """
    explicit = dict(explicit or {})
    out = []
    for j, it in enumerate(panel.items):
        if it.item_id in explicit:
            anchor = float(explicit[it.item_id])
        elif it.dimension is Dimension.GROWTH:
            anchor = it.intercept_anchor
        else:
            obs = panel.values[:, :, j][panel.mask[:, :, j]]
            if obs.size == 0:
                raise IngestError(f"item {it.item_id} ({it.name}) has no observations and no explicit anchor")
            anchor = float(obs.mean())
        out.append(replace(it, intercept_anchor=anchor))
    return out


def ingest_files(paths: Sequence, items: Sequence[ItemSpec] | None = None,
                 policy: FilterPolicy | None = None, last_year: int | None = None,
                 explicit_anchors: Mapping[int, float] | None = None, delimiter: str = ",") -> Panel:
    """load -> filter -> log -> panel -> anchors, for one or more files.

    Records of GROWTH items are rates, not levels, and are not logged.
    """
    items = list(items) if items is not None else default_items()
    policy = policy if policy is not None else FilterPolicy.standard()
    records = []
    for p in paths:
        records.extend(load_records(p, delimiter))
    growth = {it.item_id for it in items if it.dimension is Dimension.GROWTH}
    records = [replace(r, log_units=True) if r.item_id in growth else r
               for r in apply_filters(records, policy)]
    records = log_transform(records)
    records.sort(key=lambda r: (r.country, r.year, r.item_id))
    panel = records_to_panel(records, items, last_year=last_year)
    return panel.with_items(compute_anchors(panel, explicit_anchors))


def panel_to_records(panel: Panel, policy: FilterPolicy | None = None) -> list[SourceRecord]:
    """Observed cells in original units, tagged with codes that pass ``policy``."""
    policy = policy if policy is not None else FilterPolicy.standard()
    out = []
    for i, t, j in zip(*np.nonzero(panel.mask)):
        item_id = panel.items[j].item_id
        out.append(SourceRecord(panel.countries[i], int(panel.years[t]), item_id,
                                math.exp(panel.values[i, t, j]), policy.passing_code(item_id)))
    return sorted(out, key=lambda r: (r.country, r.year, r.item_id))


# ---------------------------------------------------------------------------
# synthetic data

# Mean log values of the sixteen default series; used as true intercepts.
DEFAULT_SIM_ALPHA = (9.760, 9.947, 23.616, 11.068, 8.698,
                     8.872, 8.455, 15.101, 2.541, 8.713,
                     7.762, 8.399, 8.151, 8.446, 6.347, 6.991)


@dataclass(frozen=True)
class GenerativeConfig:
    """Truth for :func:`simulate_panel`.

    ``sigma`` are the innovation variances of the GDP and population walks
    (defaults: roughly 3% and 1.4% annual shocks); ``tau`` the emission
    precisions for GDP, population and GDP-per-capita items.  When
    ``alpha_prior_var`` is positive the true intercepts are drawn from
    ``N(alpha, alpha_prior_var)`` instead of being set to ``alpha``.
    ``missing_rate`` blanks individual cells, ``cell_missing_rate`` whole
    country-years.
    """

    n_countries: int = 10
    n_years: int = 50
    first_year: int = 1950
    items: tuple = field(default_factory=lambda: tuple(default_items()))
    alpha: tuple | None = None
    alpha_prior_var: float = 0.0
    sigma: tuple = (0.001, 0.0002)
    tau: tuple = (25.0, 100.0, 25.0)
    missing_rate: float = 0.2
    cell_missing_rate: float = 0.0
    initial_mean: float = 0.0
    initial_var: float = 1.0

    def __post_init__(self):
        if self.n_countries < 1 or self.n_years < 1:
            raise ValueError("need at least one country and one year")
        if len(self.sigma) != 2 or any(not s > 0 for s in self.sigma):
            raise ValueError(f"sigma must be two positive variances, got {self.sigma}")
        if len(self.tau) != 3 or any(not t > 0 for t in self.tau):
            raise ValueError(f"tau must be three positive precisions, got {self.tau}")
        if self.alpha_prior_var < 0 or not self.initial_var > 0:
            raise ValueError("variances must be positive")
        for rate in (self.missing_rate, self.cell_missing_rate):
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"missingness rate {rate} outside [0, 1]")
        if any(Dimension(it.dimension) is Dimension.GROWTH for it in self.items):
            raise ValueError("growth items are added through gdplatent.extend")
        if self.alpha is not None and len(self.alpha) != len(self.items):
            raise ValueError("alpha needs one value per item")

    def alpha_centers(self) -> np.ndarray:
        if self.alpha is not None:
            return np.asarray(self.alpha, dtype=float)
        if len(self.items) == len(DEFAULT_SIM_ALPHA):
            return np.asarray(DEFAULT_SIM_ALPHA)
        return np.zeros(len(self.items))


@dataclass
class TrueParams:
    theta_gdp: np.ndarray
    theta_pop: np.ndarray
    alpha: np.ndarray
    tau: np.ndarray
    sigma: np.ndarray
    y_complete: np.ndarray

    def to_json(self) -> str:
        return json.dumps({k: np.asarray(v).tolist() for k, v in vars(self).items()},
                          sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrueParams":
        return cls(**{k: np.asarray(v, dtype=float) for k, v in json.loads(text).items()})


def simulate_panel(config: GenerativeConfig, seed: int) -> tuple[Panel, TrueParams]:
    rng = np.random.default_rng(seed)
    C, T = config.n_countries, config.n_years
    items = list(config.items)
    J = len(items)
    dims = [Dimension(it.dimension) for it in items]

    centers = config.alpha_centers()
    if config.alpha_prior_var > 0:
        alpha = centers + math.sqrt(config.alpha_prior_var) * rng.standard_normal(J)
    else:
        alpha = centers.copy()

    def walk(var):
        steps = math.sqrt(var) * rng.standard_normal((C, T))
        steps[:, 0] = config.initial_mean + math.sqrt(config.initial_var) * rng.standard_normal(C)
        return np.cumsum(steps, axis=1)

    theta_gdp = walk(config.sigma[0])
    theta_pop = walk(config.sigma[1])

    link = np.empty((C, T, J))
    noise_sd = np.empty(J)
    for j, d in enumerate(dims):
        if d is Dimension.GDP:
            link[:, :, j], k = theta_gdp, 0
        elif d is Dimension.POP:
            link[:, :, j], k = theta_pop, 1
        else:
            link[:, :, j], k = theta_gdp - theta_pop, 2
        noise_sd[j] = 1.0 / math.sqrt(config.tau[k])
    y = alpha + link + noise_sd * rng.standard_normal((C, T, J))

    mask = rng.random((C, T, J)) >= config.missing_rate
    mask &= (rng.random((C, T)) >= config.cell_missing_rate)[:, :, None]

    width = max(2, len(str(C)))
    countries = tuple(f"C{i + 1:0{width}d}" for i in range(C))
    years = np.arange(config.first_year, config.first_year + T)
    panel = Panel(countries, years, np.zeros(C, dtype=int), np.full(C, T - 1, dtype=int),
                  tuple(items), np.where(mask, y, 0.0), mask)
    truth = TrueParams(theta_gdp, theta_pop, alpha, np.asarray(config.tau, dtype=float),
                       np.asarray(config.sigma, dtype=float), y)
    return panel, truth
