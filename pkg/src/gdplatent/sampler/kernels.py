"""
Low-level draws: random-walk FFBS, univariate slice sampling, and the
truncated inverse-gamma walk variance.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import special

TINY_PRECISION = 1e-12


def ffbs_random_walk(obs_prec, obs_h, sigma, start, rng, initial_mean=0.0, initial_var=1.0):
    """Joint draw of random-walk trajectories given Gaussian pseudo-observations.

    Each row ``c`` is an independent walk starting at year index
    ``start[c]`` with ``theta_start ~ N(initial_mean, initial_var)`` and
    increments of variance ``sigma``.  Year ``t`` contributes the
    log-likelihood ``-0.5 * obs_prec * theta**2 + obs_h * theta``.
    Cells before ``start`` are returned as 0.

    Parameters
    ----------
    obs_prec, obs_h : ndarray, shape (C, T)
    sigma : float
    start : ndarray of int, shape (C,)
    rng : numpy.random.Generator

    Returns
    -------
    theta : ndarray, shape (C, T)
    """
    C, T = obs_prec.shape
    P = np.ascontiguousarray(obs_prec.T)
    t_idx = np.arange(T)[:, None]
    walking = t_idx > start[None, :]                    # (T, C)
    smax = int(start.max()) if C else 0

    # filtered variances do not depend on the data values
    vp = np.empty((T, C))
    v = np.empty((T, C))
    prev = np.full(C, float(initial_var))
    for t in range(T):
        if t <= smax:
            pred = np.where(walking[t], prev + sigma, initial_var)
        else:
            pred = prev + sigma
        vp[t] = pred
        prev = v[t] = 1.0 / (1.0 / pred + P[t])
    ratio = v / vp
    k = v * obs_h.T + np.where(walking, 0.0, ratio * initial_mean)
    ratio[~walking] = 0.0
    m = np.empty((T, C))
    prev = np.zeros(C)
    for t in range(T):
        prev = m[t] = ratio[t] * prev + k[t]

    z = rng.standard_normal((C, T)).T
    gain = v / (v + sigma)
    base = m * (1.0 - gain) + np.sqrt(v * sigma / (v + sigma)) * z
    theta = np.empty((T, C))
    theta[-1] = m[-1] + np.sqrt(v[-1]) * z[-1]
    for t in range(T - 2, -1, -1):
        theta[t] = base[t] + gain[t] * theta[t + 1]
    theta = theta.T.copy()
    theta[np.arange(T)[None, :] < start[:, None]] = 0.0
    return theta


def slice_sample(logp, x0, rng, width=1.0, lower=-np.inf, upper=np.inf, max_steps=64):
    """One univariate slice-sampling update (stepping out, then shrinkage).

    ``logp`` must be finite at ``x0``.  Returns the new point.
    """
    f0 = logp(x0)
    if not np.isfinite(f0):
        raise ValueError(f"slice sampler started at a point with log density {f0}")
    level = f0 + math.log(rng.uniform())
    left = x0 - width * rng.uniform()
    right = left + width
    left, right = max(left, lower), min(right, upper)
    j = int(max_steps * rng.uniform())
    k = max_steps - 1 - j
    while j > 0 and left > lower and logp(left) > level:
        left = max(left - width, lower)
        j -= 1
    while k > 0 and right < upper and logp(right) > level:
        right = min(right + width, upper)
        k -= 1
    while True:
        x = left + (right - left) * rng.uniform()
        if x <= lower or x >= upper:
            continue
        if logp(x) > level:
            return x
        if x < x0:
            left = x
        else:
            right = x
        if right - left < 1e-14 * max(1.0, abs(x0)):
            return x0


def innovation_log_density(s, m, S):
    """Unnormalised log density of a walk variance: s**(-m/2) exp(-S / (2 s))."""
    if s <= 0:
        return -np.inf
    return -0.5 * m * math.log(s) - 0.5 * S / s


def sample_truncated_innovation(m, S, rng, upper=1.0, current=None):
    """Draw a walk variance from its conditional under a U(0, upper) prior.

    The target is proportional to ``s**(-m/2) * exp(-S / (2 s))`` on
    ``(0, upper)``: an inverse gamma with shape ``m/2 - 1`` and scale
    ``S/2``, truncated.  With ``w = 1/s`` this is a gamma(shape ``m/2 - 1``,
    rate ``S/2``) truncated to ``w > 1/upper``, drawn by inverting its
    upper tail.  When that inversion is unavailable (shape <= 0) or
    ill-conditioned (tail mass underflows) a slice step from ``current``
    is used instead.

    Parameters
    ----------
    m : int
        Number of walk increments.
    S : float
        Sum of squared increments.
    """
    if m == 0 or S <= 0:
        return upper * rng.uniform()
    a = 0.5 * m - 1.0
    b = 0.5 * S
    if a > 0:
        tail = special.gammaincc(a, b / upper)
        if tail > 1e-280:
            u = 1.0 - rng.uniform()          # (0, 1]
            w = special.gammainccinv(a, u * tail) / b
            s = 1.0 / w if w > 0 else np.nan
            if np.isfinite(s) and 0 < s <= upper:
                return min(s, upper * (1 - 1e-15))
    if current is None or not 0 < current < upper:
        current = 0.5 * upper
    return slice_sample(lambda s: innovation_log_density(s, m, S), current, rng,
                        width=0.25 * upper, lower=0.0, upper=upper)

