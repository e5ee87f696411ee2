"""
Full-conditional updates of the Gibbs sampler.

Every item j loads on a latent mean ``link_j(theta)`` with slope 1:
GDP items on theta_gdp, population items on theta_pop, GDP-per-capita
items on theta_gdp - theta_pop, growth items on a derived link.  Given
the other blocks, the free latents, intercepts and precisions all have
closed-form conditionals; walk variances are truncated inverse gammas.
"""
from __future__ import annotations

import math

import numpy as np

from ..extend import Transform, apply_transform
from ..panel import Dimension
from .kernels import TINY_PRECISION, ffbs_random_walk, sample_truncated_innovation, slice_sample
from .model import GDP, POP, PC, Model, gdppc_latent
from .types import ChainState, SamplerAssertion, SamplerPlan, chain_rngs


def derived_gdppc(theta_gdp, theta_pop):
    """GDP-per-capita latent: the log of the GDP/population ratio."""
    return theta_gdp - theta_pop


def init_state(model: Model, plan: SamplerPlan, chain: int) -> ChainState:
    rng, ext_rng = chain_rngs(plan.seed, chain)
    C, T, J = model.shape
    p = model.priors
    core = model.tau_index < 3
    alpha = model.fixed_alpha_value.copy()
    free_core = ~model.fixed_alpha & core
    alpha[free_core] = model.anchors[free_core] + math.sqrt(p.intercept_prior_var) * rng.standard_normal(
        int(free_core.sum()))
    tau = np.ones(model.n_tau)
    sigma = rng.uniform(0.01, 0.5, size=2) * p.innovation_upper
    for k, name in enumerate(model.tau_names):
        if name in plan.fix_tau:
            tau[k] = plan.fix_tau[name]
    for k, name in enumerate(("gdp", "pop")):
        if name in plan.fix_sigma:
            sigma[k] = plan.fix_sigma[name]
    # Observed ratio-type terms divide by a latent, so start away from zero
    # when any exist.  Unobserved links leave the start (and the core draws) alone.
    coupled = bool(model.coupled[GDP] or model.coupled[POP])
    start = np.full((C, T), 1.0 if coupled else 0.0)
    return ChainState(start.copy(), start.copy(), alpha, tau, sigma, rng, ext_rng)


# ---------------------------------------------------------------------------
# latents

def local_evidence(state: ChainState, model: Model, dim: int):
    """Gaussian pseudo-observations for one free latent from items whose
    mean is linear in that latent at the same country-year.

    Returns ``(prec, h)``, each (C, T): the log-likelihood contribution is
    ``-0.5 * prec * theta**2 + h * theta``.
    """
    tau, alpha = state.tau, state.alpha
    g, p, c = model.groups
    if dim == GDP:
        prec = tau[0] * model.counts[GDP]
        h = tau[0] * (model.ysums[GDP] - model.gmask[GDP] @ alpha[g])
        if not model.ratio:
            prec = prec + tau[2] * model.counts[PC]
            h = h + tau[2] * (model.ysums[PC] - model.gmask[PC] @ alpha[c]
                              + model.counts[PC] * state.theta_pop)
    else:
        prec = tau[1] * model.counts[POP]
        h = tau[1] * (model.ysums[POP] - model.gmask[POP] @ alpha[p])
        if not model.ratio:
            prec = prec + tau[2] * model.counts[PC]
            h = h + tau[2] * (model.counts[PC] * state.theta_gdp + model.gmask[PC] @ alpha[c]
                              - model.ysums[PC])
    return prec, h


def _walk_terms(theta, sigma, model: Model):
    """Prior precision and h contributed by the walk neighbours of each site."""
    C, T = theta.shape
    p = model.priors
    start, end = model.panel.start, model.panel.end
    t = np.arange(T)[None, :]
    first = t == start[:, None]
    prev = np.zeros_like(theta)
    prev[:, 1:] = theta[:, :-1]
    nxt = np.zeros_like(theta)
    nxt[:, :-1] = theta[:, 1:]
    has_next = t < end[:, None]
    prec = np.where(first, 1.0 / p.initial_var, 1.0 / sigma) + np.where(has_next, 1.0 / sigma, 0.0)
    h = np.where(first, p.initial_mean / p.initial_var, prev / sigma) + np.where(has_next, nxt / sigma, 0.0)
    return prec, h


def latent_site_conditional(state: ChainState, model: Model, dim: int):
    """Mean and variance of every free-latent site given its walk neighbours
    and local evidence (coupled growth/ratio terms excluded).

    Returns arrays of shape (C, T); inactive cells are NaN.
    """
    theta = state.theta(dim)
    obs_prec, obs_h = local_evidence(state, model, dim)
    w_prec, w_h = _walk_terms(theta, state.sigma[dim], model)
    prec = obs_prec + w_prec
    active = model.panel.active
    mean = np.where(active, (obs_h + w_h) / prec, np.nan)
    var = np.where(active, 1.0 / prec, np.nan)
    return mean, var


def _sweep_single_site(state: ChainState, model: Model, dim: int, rows: np.ndarray):
    """Checkerboard update: even years, then odd years, all countries at once."""
    theta = state.theta(dim)
    obs_prec, obs_h = local_evidence(state, model, dim)
    active = model.panel.active & rows[:, None]
    T = theta.shape[1]
    for parity in (0, 1):
        w_prec, w_h = _walk_terms(theta, state.sigma[dim], model)
        prec = obs_prec + w_prec
        sel = active & ((np.arange(T) % 2) == parity)[None, :]
        if np.any(prec[sel] < TINY_PRECISION):
            raise SamplerAssertion("degenerate latent conditional precision")
        z = state.rng.standard_normal(theta.shape)
        draw = (obs_h + w_h) / prec + z / np.sqrt(prec)
        theta[sel] = draw[sel]


def _sweep_ffbs(state: ChainState, model: Model, dim: int, rows: np.ndarray):
    theta = state.theta(dim)
    obs_prec, obs_h = local_evidence(state, model, dim)
    p = model.priors
    start = model.panel.start
    draw = ffbs_random_walk(obs_prec, obs_h, state.sigma[dim], start, state.rng,
                            p.initial_mean, p.initial_var)
    keep = model.panel.active & rows[:, None]
    theta[keep] = draw[keep]


def _term_mean(term, model: Model, state: ChainState, country: int):
    """Latent mean of a coupled observation under the current state."""
    if term.link < 0:
        return gdppc_latent(state.theta_gdp[country, term.cell], state.theta_pop[country, term.cell], True)
    link = model.links[term.link]
    theta = state.theta_gdp if link.dimension is Dimension.GDP else state.theta_pop
    la, lb = link.lags
    return apply_transform(link.transform, theta[country, term.cell - la], theta[country, term.cell - lb])


def _term_is_linear(term, model: Model, dim: int, site: int) -> bool:
    if term.link < 0:
        return dim == GDP                       # theta_gdp / theta_pop is linear in theta_gdp
    link = model.links[term.link]
    if link.transform is Transform.DIFFERENCE:
        return True
    if link.transform is Transform.RATIO_MINUS_ONE:
        return site == term.cell - link.lags[0]  # numerator
    return False


def _sweep_coupled(state: ChainState, model: Model, dim: int):
    """Sequential site-by-site update of countries with coupled observations."""
    theta = state.theta(dim)
    obs_prec, obs_h = local_evidence(state, model, dim)
    p = model.priors
    sigma = state.sigma[dim]
    start, end = model.panel.start, model.panel.end
    tau, alpha = state.tau, state.alpha
    for c, sites in sorted(model.coupled[dim].items()):
        for t in range(start[c], end[c] + 1):
            prec = obs_prec[c, t]
            h = obs_h[c, t]
            if t == start[c]:
                prec += 1.0 / p.initial_var
                h += p.initial_mean / p.initial_var
            else:
                prec += 1.0 / sigma
                h += theta[c, t - 1] / sigma
            if t < end[c]:
                prec += 1.0 / sigma
                h += theta[c, t + 1] / sigma
            nonlinear = []
            for term in sites.get(t, ()):
                tk = tau[model.tau_index[term.item]]
                if _term_is_linear(term, model, dim, t):
                    saved = theta[c, t]
                    theta[c, t] = 0.0
                    r0 = term.y - alpha[term.item] - _term_mean(term, model, state, c)
                    theta[c, t] = 1.0
                    r1 = term.y - alpha[term.item] - _term_mean(term, model, state, c) - r0
                    theta[c, t] = saved
                    prec += tk * r1 * r1
                    h -= tk * r0 * r1
                else:
                    nonlinear.append((term, tk))
            if prec < TINY_PRECISION:
                raise SamplerAssertion(f"degenerate latent conditional at country {c}, year index {t}")
            if not nonlinear:
                theta[c, t] = h / prec + state.rng.standard_normal() / math.sqrt(prec)
                continue

            def logp(x, c=c, t=t, prec=prec, h=h, nonlinear=nonlinear):
                theta[c, t] = x
                out = -0.5 * prec * x * x + h * x
                for term, tk in nonlinear:
                    r = term.y - alpha[term.item] - _term_mean(term, model, state, c)
                    out -= 0.5 * tk * r * r
                return out if np.isfinite(out) else -np.inf

            x0 = theta[c, t]
            width = 2.0 / math.sqrt(prec + sum(tk for _, tk in nonlinear))
            theta[c, t] = slice_sample(logp, x0, state.rng, width=max(width, 1e-6))


def update_latents(state: ChainState, model: Model, plan: SamplerPlan) -> ChainState:
    """Redraw theta_gdp then theta_pop, each conditional on everything else.

    Countries with coupled observations (growth items, ratio-linked GDPPC)
    are always updated site by site; the rest follow
    ``plan.update_schedule``.
    """
    for dim in (GDP, POP):
        simple = ~model.complex_rows[dim]
        if simple.any():
            if plan.update_schedule == "blocked-ffbs":
                _sweep_ffbs(state, model, dim, simple)
            else:
                _sweep_single_site(state, model, dim, simple)
        if model.coupled[dim]:
            _sweep_coupled(state, model, dim)
    return state


def shift_loadings(model: Model, dim: int) -> np.ndarray:
    """d link_j / d theta_dim under a common shift of that latent, per item."""
    a = np.zeros(len(model.kind))
    g, p, c = model.groups
    if dim == GDP:
        a[g] = 1.0
        a[c] = 1.0
    else:
        a[p] = 1.0
        a[c] = -1.0
    return a


def update_level_shift(state: ChainState, model: Model, plan: SamplerPlan) -> ChainState:
    """Exact Gibbs move along the ridge theta_dim + s, alpha_j - s.

    The move adds ``s`` to every active latent of one dimension and
    subtracts ``a_j s`` from every free intercept that loads on it, which
    leaves walk increments and free items' likelihood unchanged; ``s`` has
    a Gaussian conditional from the first-year priors, the intercept priors
    and the likelihood of fixed-intercept items.  Skipped for a dimension
    with observed non-shift-invariant links (ratio forms).
    """
    p = model.priors
    active = model.panel.active
    start = model.panel.start
    rows = np.arange(len(start))
    mask = model.panel.mask
    for dim in (GDP, POP):
        if not model.shift_ok[dim]:
            continue
        a = shift_loadings(model, dim)
        theta = state.theta(dim)
        first = theta[rows, start]
        prec = len(start) / p.initial_var
        h = float(np.sum(p.initial_mean - first)) / p.initial_var
        free = (~model.fixed_alpha) & (a != 0)
        p0 = 1.0 / p.intercept_prior_var
        prec += p0 * float(np.sum(a[free] ** 2))
        h += p0 * float(np.sum(a[free] * (state.alpha[free] - model.anchors[free])))
        fixed = model.fixed_alpha & (a != 0)
        if fixed.any():
            L = model.link_values(state.theta_gdp, state.theta_pop)
            cols = np.nonzero(fixed)[0]
            r = np.where(mask[:, :, cols], model.panel.values[:, :, cols] - state.alpha[cols] - L[:, :, cols], 0.0)
            n = mask[:, :, cols].sum(axis=(0, 1))
            tk = state.tau[model.tau_index[cols]]
            prec += float(np.sum(tk * n * a[cols] ** 2))
            h += float(np.sum(tk * a[cols] * r.sum(axis=(0, 1))))
        if prec <= 0:
            continue
        s = h / prec + state.rng.standard_normal() / math.sqrt(prec)
        theta[active] += s
        state.alpha[free] -= a[free] * s
    return state


# ---------------------------------------------------------------------------
# intercepts, precisions, walk variances

def _residuals(state: ChainState, model: Model):
    L = model.link_values(state.theta_gdp, state.theta_pop)
    mask = model.panel.mask
    r = np.where(mask, model.panel.values - state.alpha - np.where(mask, L, 0.0), 0.0)
    return r, L


def intercept_conditional(state: ChainState, model: Model):
    """Mean and variance of each intercept's Gaussian conditional, shape (J,)."""
    L = model.link_values(state.theta_gdp, state.theta_pop)
    mask = model.panel.mask
    n = mask.sum(axis=(0, 1))
    resid_sum = np.where(mask, model.panel.values - np.where(mask, L, 0.0), 0.0).sum(axis=(0, 1))
    p0 = 1.0 / model.priors.intercept_prior_var
    tk = state.tau[model.tau_index]
    prec = p0 + tk * n
    mean = (p0 * model.anchors + tk * resid_sum) / prec
    return mean, 1.0 / prec


def update_intercepts(state: ChainState, model: Model) -> ChainState:
    mean, var = intercept_conditional(state, model)
    core = model.tau_index < 3
    for sel, rng in ((core, state.rng), (~core, state.ext_rng)):
        free = sel & ~model.fixed_alpha
        if free.any():
            state.alpha[free] = mean[free] + np.sqrt(var[free]) * rng.standard_normal(int(free.sum()))
    state.alpha[model.fixed_alpha] = model.fixed_alpha_value[model.fixed_alpha]
    return state


def precision_conditional(state: ChainState, model: Model):
    """Gamma shape and rate of each emission precision's conditional."""
    r, _ = _residuals(state, model)
    n = np.bincount(model.tau_index, weights=model.panel.mask.sum(axis=(0, 1)), minlength=model.n_tau)
    ssr = np.bincount(model.tau_index, weights=(r * r).sum(axis=(0, 1)), minlength=model.n_tau)
    p = model.priors
    return p.tau_shape + 0.5 * n, p.tau_rate + 0.5 * ssr


def update_precisions(state: ChainState, model: Model, plan: SamplerPlan) -> ChainState:
    shape, rate = precision_conditional(state, model)
    for cats, rng in ((range(3), state.rng), (range(3, model.n_tau), state.ext_rng)):
        draw = [k for k in cats if model.tau_names[k] not in plan.fix_tau]
        if draw:
            state.tau[draw] = rng.gamma(shape[draw], 1.0 / rate[draw])
    # Gamma(0.001, ...) draws can underflow to exactly 0 when a category is
    # (nearly) unobserved; keep the state strictly positive.
    np.maximum(state.tau, np.finfo(float).tiny, out=state.tau)
    return state


def innovation_stats(state: ChainState, model: Model):
    """Number of walk increments and their sum of squares, per free dimension."""
    active = model.panel.active
    pair = active[:, 1:] & active[:, :-1]
    m = np.zeros(2, dtype=int)
    S = np.zeros(2)
    for dim in (GDP, POP):
        d = np.diff(state.theta(dim), axis=1)[pair]
        m[dim] = d.size
        S[dim] = float(np.dot(d, d))
    return m, S


def update_innovations(state: ChainState, model: Model, plan: SamplerPlan) -> ChainState:
    m, S = innovation_stats(state, model)
    for dim, name in ((GDP, "gdp"), (POP, "pop")):
        if name in plan.fix_sigma:
            continue
        state.sigma[dim] = sample_truncated_innovation(int(m[dim]), S[dim], state.rng,
                                                       model.priors.innovation_upper, state.sigma[dim])
    return state


def draw_predictive(state: ChainState, model: Model, L: np.ndarray | None = None) -> np.ndarray:
    """Posterior predictive draw for every cell, shape (C, T, J).

    Inactive cells and growth cells without a lagged latent are NaN.
    """
    if L is None:
        L = model.link_values(state.theta_gdp, state.theta_pop)
    C, T, J = model.shape
    sd = 1.0 / np.sqrt(state.tau[model.tau_index])
    core = np.nonzero(model.tau_index < 3)[0]
    ext = np.nonzero(model.tau_index >= 3)[0]
    out = np.empty((C, T, J))
    out[:, :, core] = state.alpha[core] + L[:, :, core] + sd[core] * state.rng.standard_normal((C, T, core.size))
    if ext.size:
        out[:, :, ext] = state.alpha[ext] + L[:, :, ext] + sd[ext] * state.ext_rng.standard_normal((C, T, ext.size))
    out[~model.panel.active] = np.nan
    return out


def gibbs_iteration(state: ChainState, model: Model, plan: SamplerPlan) -> ChainState:
    update_latents(state, model, plan)
    if plan.level_shift:
        update_level_shift(state, model, plan)
    update_intercepts(state, model)
    update_precisions(state, model, plan)
    update_innovations(state, model, plan)
    return state
