from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from ..extend import ExtendedModel
from ..panel import Panel
from .model import Model, compile_model, gdppc_latent, link_latent
from .store import DrawStore, StoreError, create_store, open_writable, panel_coords
from .types import PriorConfig, SamplerError, SamplerPlan
from .updates import draw_predictive, gibbs_iteration, init_state

log = logging.getLogger(__name__)


def store_layout(model: Model, plan: SamplerPlan) -> dict[str, tuple]:
    C, T, J = model.shape
    layout = {
        "alpha": (J,),
        "tau": (model.n_tau,),
        "sigma": (2,),
        "theta_gdp": (C, T),
        "theta_pop": (C, T),
        "theta_gdppc": (C, T),
    }
    for link in model.links:
        layout[f"growth.{link.name}"] = (C, T)
    if plan.store_predictive:
        layout["ypred"] = (C, T, J)
    return layout


def _jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return {k: _jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "value"):
        return obj.value
    return obj


def run_chains(model, priors: PriorConfig, plan: SamplerPlan, path) -> DrawStore:
    """Run ``plan.n_chains`` Gibbs chains and write retained draws to ``path``.

    Parameters
    ----------
    model : Panel or ExtendedModel
    priors : PriorConfig
    plan : SamplerPlan
    path : path-like
        Store directory; existing array files are replaced.

    Chain ``i`` is seeded from ``(plan.seed, i)`` only, so its draws do not
    depend on how many chains run or on ``plan.n_workers``.
    """
    if isinstance(model, Panel):
        model = ExtendedModel(model)
    compiled = compile_model(model, priors, plan)
    panel = compiled.panel
    layout = store_layout(compiled, plan)
    static = {
        "observed": np.where(panel.mask, panel.values, np.nan),
        "active": panel.active.astype(float),
    }
    extra = {
        "tau_names": list(compiled.tau_names),
        "links": [{"name": l.name, "transform": l.transform.value,
                   "inputs": [[d.value, lag] for d, lag in l.inputs], "items": list(l.items)}
                  for l in compiled.links],
        "priors": _jsonable(priors),
        "plan": _jsonable(dataclasses.replace(plan, n_workers=1)),
    }
    store = create_store(path, panel_coords(panel), layout, static, plan.n_chains, plan.n_retained, extra)
    args = [(model, priors, plan, str(store.path), i) for i in range(plan.n_chains)]
    if plan.n_workers > 1 and plan.n_chains > 1:
        with ProcessPoolExecutor(max_workers=plan.n_workers) as pool:
            list(pool.map(_run_one, args))
    else:
        for a in args:
            _run_one(a)
    return DrawStore(store.path)


def _run_one(args):
    model, priors, plan, path, chain = args
    compiled = compile_model(model, priors, plan)
    store = DrawStore(path)
    try:
        out = {name: open_writable(store, name) for name in store_layout(compiled, plan)
               if int(np.prod(store.shape(name)))}
    except OSError as err:
        raise StoreError(f"cannot open {path} for writing: {err}") from err
    run_chain(compiled, plan, chain, out)
    for mm in out.values():
        mm.flush()


def run_chain(model: Model, plan: SamplerPlan, chain: int, out: dict | None = None, callback=None):
    """Run one chain; write retained draws into ``out[name][chain, k]``.

    ``callback(iteration, state)`` is called after every iteration.
    """
    state = init_state(model, plan, chain)
    active = model.panel.active
    start = model.panel.start
    k = 0
    for it in range(1, plan.n_iterations + 1):
        gibbs_iteration(state, model, plan)
        if not (np.all(np.isfinite(state.theta_gdp)) and np.all(np.isfinite(state.theta_pop))
                and np.all(np.isfinite(state.alpha)) and np.all(state.tau > 0)
                and np.all(np.isfinite(state.tau)) and np.all((state.sigma > 0) & (state.sigma < model.priors.innovation_upper))):
            raise SamplerError(f"chain {chain}, iteration {it}: non-finite or out-of-range state")
        keep = plan.retained(it)
        ypred = draw_predictive(state, model) if (keep and plan.store_predictive) else None
        if keep and out is not None:
            gdp = np.where(active, state.theta_gdp, np.nan)
            pop = np.where(active, state.theta_pop, np.nan)
            row = {
                "alpha": state.alpha,
                "tau": state.tau,
                "sigma": state.sigma,
                "theta_gdp": gdp,
                "theta_pop": pop,
                "theta_gdppc": gdppc_latent(gdp, pop, model.ratio),
            }
            for link in model.links:
                row[f"growth.{link.name}"] = link_latent(link, gdp, pop, start)
            if ypred is not None:
                row["ypred"] = ypred
            for name, mm in out.items():
                mm[chain, k] = row[name]
            k += 1
        if callback is not None:
            callback(it, state)
        if it % 10000 == 0:
            log.info("chain %d: iteration %d/%d", chain, it, plan.n_iterations)
    return state

