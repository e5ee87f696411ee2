"""
Flat ``key = value`` run configuration.

Blank lines and lines starting with ``#`` are ignored.  Relative paths are
resolved against the directory holding the configuration file.  Every key
is listed in :data:`KEYS` with its default; families of keys such as
``anchor.<item_id>`` are listed in :data:`KEY_PATTERNS`.
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path

from .extend import LINK_REGISTRY, DerivedLink, Transform, growth_item
from .ingest import GenerativeConfig, FilterPolicy
from .panel import Dimension, ItemSpec, default_items
from .sampler.types import GDPPC_LINKS, SCHEDULES, PriorConfig, SamplerPlan


class ConfigError(ValueError):
    pass


# key -> (default, description)
KEYS = {
    "iterations": ("100000", "Gibbs iterations per chain, burn-in included"),
    "burnin": ("50000", "iterations discarded at the start of each chain"),
    "chains": ("5", "number of chains"),
    "thinning": ("1", "keep every n-th post-burn-in iteration"),
    "seed": ("0", "master seed; chain i uses streams derived from (seed, i)"),
    "schedule": ("blocked-ffbs", "latent update schedule: blocked-ffbs or single-site"),
    "level_shift": ("true", "joint latent/intercept shift move for faster intercept mixing"),
    "store_predictive": ("true", "store posterior predictive draws for every cell"),
    "workers": ("1", "processes used to run chains in parallel"),
    "inputs": ("", "comma-separated observation files (country_id,year,item_id,value,origin_code)"),
    "delimiter": (",", "field delimiter of the input files"),
    "last_year": ("", "extend every country's range to this year (empty: last observed year)"),
    "filters": ("standard", "origin-code filters: standard or none"),
    "filter.min_year": ("1500", "drop records before this year"),
    "filter.max_year": ("2015", "drop records after this year"),
    "items": ("default", "item set: default (the sixteen standard series) or none"),
    "prior.initial_mean": ("0", "mean of a walk's first latent value"),
    "prior.initial_var": ("1", "variance of a walk's first latent value"),
    "prior.innovation_upper": ("1", "upper bound of the uniform prior on walk variances"),
    "prior.tau_shape": ("0.001", "gamma shape of the emission precision prior"),
    "prior.tau_rate": ("0.001", "gamma rate of the emission precision prior"),
    "prior.intercept_var": ("0.25", "prior variance of intercepts around their anchors (4 for the wide reading)"),
    "prior.gdppc_link": ("difference", "per-capita link: difference (log scale) or ratio"),
    "prior.hold_anchors_fixed": ("false", "hold anchor items' intercepts at their anchors"),
    "rmse_items": ("8,9,10,12,13", "items scored by rmse_compare in validate"),
    "sim.countries": ("10", "simulated countries"),
    "sim.years": ("50", "simulated years per country"),
    "sim.first_year": ("1950", "first simulated year"),
    "sim.missing_rate": ("0.2", "probability a simulated cell is unobserved"),
    "sim.cell_missing_rate": ("0", "probability a whole simulated country-year is unobserved"),
    "sim.sigma_gdp": ("0.001", "true GDP walk variance"),
    "sim.sigma_pop": ("0.0002", "true population walk variance"),
    "sim.tau_gdp": ("25", "true GDP emission precision"),
    "sim.tau_pop": ("100", "true population emission precision"),
    "sim.tau_gdppc": ("25", "true per-capita emission precision"),
    "sim.alpha": ("", "comma-separated true intercepts (empty: standard series means)"),
    "sim.alpha_prior_var": ("0", "if positive, true intercepts are drawn around sim.alpha with this variance"),
}

KEY_PATTERNS = {
    r"item\.(\d+)": "declare or replace an item: <dimension>:<name> (dimension gdp, pop, gdppc or growth)",
    r"anchor\.(\d+)": "explicit intercept anchor for an item (otherwise its mean observed log value)",
    r"filter\.retain\.(\d+)": "comma-separated origin codes an item must carry",
    r"filter\.exclude\.(\d+)": "comma-separated origin codes that drop an item's records",
    r"extension\.([a-z0-9-]+)": "growth items (comma-separated ids) loading on a registered link",
    r"extension\.([a-z0-9-]+)\.transform": "override the link's transform: difference, ratio-minus-one or log-growth",
    r"fix\.sigma\.(gdp|pop)": "hold a walk variance fixed",
    r"fix\.tau\.([a-z0-9-]+)": "hold an emission precision fixed (gdp, pop, gdppc or a link name)",
    r"fix\.alpha\.(\d+)": "hold an item intercept fixed",
}


def parse_text(text: str, source: str = "<config>") -> dict[str, str]:
    values: dict[str, str] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{n}: expected key = value, got {raw!r}")
        if key in values:
            raise ConfigError(f"{source}:{n}: duplicate key {key!r}")
        if key not in KEYS and not any(re.fullmatch(p, key) for p in KEY_PATTERNS):
            raise ConfigError(f"{source}:{n}: unknown key {key!r}")
        values[key] = value
    return values


def _int(values, key) -> int:
    raw = values.get(key, KEYS[key][0])
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None


def _float(raw: str, key: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from None


def _bool(values, key) -> bool:
    raw = values.get(key, KEYS[key][0]).lower()
    if raw in ("true", "yes", "1", "on"):
        return True
    if raw in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"{key}: expected true or false, got {raw!r}")


def _list(raw: str) -> list[str]:
    return [p.strip() for p in raw.split(",") if p.strip()]


def _ints(raw: str, key: str) -> list[int]:
    try:
        return [int(p) for p in _list(raw)]
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated integers, got {raw!r}") from None


def _get(values, key) -> str:
    return values.get(key, KEYS[key][0])


@dataclass
class RunConfig:
    values: dict
    base_dir: Path
    text: str = ""
    plan: SamplerPlan = field(default_factory=SamplerPlan)
    priors: PriorConfig = field(default_factory=PriorConfig)
    inputs: list = field(default_factory=list)
    delimiter: str = ","
    last_year: int | None = None
    policy: FilterPolicy = field(default_factory=FilterPolicy.standard)
    items: list = field(default_factory=default_items)
    anchors: dict = field(default_factory=dict)
    extensions: list = field(default_factory=list)      # DerivedLink with items filled in
    generative: GenerativeConfig = field(default_factory=GenerativeConfig)
    rmse_items: list = field(default_factory=list)

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()


def _items(values) -> list[ItemSpec]:
    mode = _get(values, "items")
    if mode not in ("default", "none"):
        raise ConfigError(f"items: expected default or none, got {mode!r}")
    items = {it.item_id: it for it in (default_items() if mode == "default" else [])}
    for key, raw in values.items():
        m = re.fullmatch(r"item\.(\d+)", key)
        if not m:
            continue
        dim, sep, name = raw.partition(":")
        try:
            dimension = Dimension(dim.strip().upper())
        except ValueError:
            raise ConfigError(f"{key}: unknown dimension {dim!r}") from None
        if not sep or not name.strip():
            raise ConfigError(f"{key}: expected <dimension>:<name>")
        item_id = int(m.group(1))
        if dimension is Dimension.GROWTH:
            items[item_id] = growth_item(item_id, name.strip())
        else:
            items[item_id] = ItemSpec(item_id, name.strip(), dimension)
    if not items:
        raise ConfigError("no items configured")
    return [items[k] for k in sorted(items)]


def _policy(values) -> FilterPolicy:
    mode = _get(values, "filters")
    if mode not in ("standard", "none"):
        raise ConfigError(f"filters: expected standard or none, got {mode!r}")
    base = FilterPolicy.standard() if mode == "standard" else FilterPolicy()
    retain, exclude = dict(base.retain_codes), dict(base.exclude_codes)
    for key, raw in values.items():
        m = re.fullmatch(r"filter\.(retain|exclude)\.(\d+)", key)
        if m:
            target = retain if m.group(1) == "retain" else exclude
            target[int(m.group(2))] = frozenset(_list(raw))
    return FilterPolicy(retain, exclude, _int(values, "filter.min_year"), _int(values, "filter.max_year"))


def _extensions(values, items) -> list[DerivedLink]:
    by_id = {it.item_id: it for it in items}
    out = []
    for key, raw in sorted(values.items()):
        m = re.fullmatch(r"extension\.([a-z0-9-]+)", key)
        if not m:
            continue
        name = m.group(1)
        if name not in LINK_REGISTRY:
            raise ConfigError(f"{key}: unknown link {name!r}; known: {', '.join(sorted(LINK_REGISTRY))}")
        base = LINK_REGISTRY[name]
        transform = base.transform
        if f"{key}.transform" in values:
            try:
                transform = Transform(values[f"{key}.transform"])
            except ValueError:
                raise ConfigError(f"{key}.transform: unknown transform {values[f'{key}.transform']!r}") from None
        ids = _ints(raw, key)
        for i in ids:
            if i not in by_id or by_id[i].dimension is not Dimension.GROWTH:
                raise ConfigError(f"{key}: item {i} must be declared as item.{i} = growth:<name>")
        out.append(DerivedLink(name, transform, base.inputs, tuple(ids)))
    for key in values:
        m = re.fullmatch(r"extension\.([a-z0-9-]+)\.transform", key)
        if m and f"extension.{m.group(1)}" not in values:
            raise ConfigError(f"{key} given without extension.{m.group(1)}")
    return out


def _generative(values, items) -> GenerativeConfig:
    core = tuple(it for it in items if it.dimension is not Dimension.GROWTH)
    alpha = _get(values, "sim.alpha")
    try:
        return GenerativeConfig(
            n_countries=_int(values, "sim.countries"),
            n_years=_int(values, "sim.years"),
            first_year=_int(values, "sim.first_year"),
            items=core,
            alpha=tuple(_float(a, "sim.alpha") for a in _list(alpha)) or None,
            alpha_prior_var=_float(_get(values, "sim.alpha_prior_var"), "sim.alpha_prior_var"),
            sigma=(_float(_get(values, "sim.sigma_gdp"), "sim.sigma_gdp"),
                   _float(_get(values, "sim.sigma_pop"), "sim.sigma_pop")),
            tau=tuple(_float(_get(values, f"sim.tau_{k}"), f"sim.tau_{k}") for k in ("gdp", "pop", "gdppc")),
            missing_rate=_float(_get(values, "sim.missing_rate"), "sim.missing_rate"),
            cell_missing_rate=_float(_get(values, "sim.cell_missing_rate"), "sim.cell_missing_rate"),
            initial_mean=_float(_get(values, "prior.initial_mean"), "prior.initial_mean"),
            initial_var=_float(_get(values, "prior.initial_var"), "prior.initial_var"),
        )
    except ValueError as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(f"simulation settings: {err}") from None


def build_config(values: dict, base_dir=".", text: str = "") -> RunConfig:
    base_dir = Path(base_dir)
    fixed = {"sigma": {}, "tau": {}, "alpha": {}}
    for key, raw in values.items():
        m = re.fullmatch(r"fix\.(sigma|tau|alpha)\.([a-z0-9-]+)", key)
        if m:
            target = int(m.group(2)) if m.group(1) == "alpha" else m.group(2)
            fixed[m.group(1)][target] = _float(raw, key)
    schedule = _get(values, "schedule")
    if schedule not in SCHEDULES:
        raise ConfigError(f"schedule: expected one of {SCHEDULES}, got {schedule!r}")
    gdppc = _get(values, "prior.gdppc_link")
    if gdppc not in GDPPC_LINKS:
        raise ConfigError(f"prior.gdppc_link: expected one of {GDPPC_LINKS}, got {gdppc!r}")
    try:
        plan = SamplerPlan(n_chains=_int(values, "chains"), n_iterations=_int(values, "iterations"),
                           n_burnin=_int(values, "burnin"), thinning=_int(values, "thinning"),
                           seed=_int(values, "seed"), update_schedule=schedule,
                           level_shift=_bool(values, "level_shift"),
                           store_predictive=_bool(values, "store_predictive"),
                           n_workers=_int(values, "workers"), fix_sigma=fixed["sigma"],
                           fix_tau=fixed["tau"], fix_alpha=fixed["alpha"])
        priors = PriorConfig(
            **{name: _float(_get(values, f"prior.{name}"), f"prior.{name}")
               for name in ("initial_mean", "initial_var", "innovation_upper", "tau_shape", "tau_rate")},
            intercept_prior_var=_float(_get(values, "prior.intercept_var"), "prior.intercept_var"),
            gdppc_link=gdppc, hold_anchors_fixed=_bool(values, "prior.hold_anchors_fixed"))
    except ValueError as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(str(err)) from None

    items = _items(values)
    anchors = {int(k.split(".")[1]): _float(v, k) for k, v in values.items() if re.fullmatch(r"anchor\.\d+", k)}
    last_year = _get(values, "last_year")
    delimiter = _get(values, "delimiter")
    if len(delimiter) != 1:
        raise ConfigError(f"delimiter: expected a single character, got {delimiter!r}")
    return RunConfig(
        values=dict(values), base_dir=base_dir, text=text, plan=plan, priors=priors,
        inputs=[base_dir / p for p in _list(_get(values, "inputs"))], delimiter=delimiter,
        last_year=int(last_year) if last_year else None, policy=_policy(values), items=items,
        anchors=anchors, extensions=_extensions(values, items), generative=_generative(values, items),
        rmse_items=_ints(_get(values, "rmse_items"), "rmse_items"),
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read configuration {path}: {err.strerror or err}") from None
    return build_config(parse_text(text, str(path)), path.parent, text)


def documented_keys() -> str:
    """Every key with its default, in ``key = default  # description`` form."""
    lines = [f"{k} = {d}  # {desc}" for k, (d, desc) in KEYS.items()]
    lines += [f"{p}  # {desc}" for p, desc in KEY_PATTERNS.items()]
    return "\n".join(lines) + "\n"
