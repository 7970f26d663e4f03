"""Closed-form steady-state and limit analysis of the filtering learning rate.

The AdaBayes variance recursion under a stationary mean-square gradient
g2 has a steady state given by the positive root of

    sigma2 * (1/s)^2 - (1/s) - g2 * sigma2 / eta^2 = 0

namely

    1/s = 1/(2 sigma2) + sqrt(1/(4 sigma2^2) + g2 / eta^2).

Two regimes bracket it: when eta/sqrt(g2) >> sigma2 (weak data) the
learning rate pins at the prior variance sigma2, recovering SGD with
eta_sgd = B * sigma2; when eta/sqrt(g2) << sigma2 (strong data) it
approaches eta/sqrt(g2), recovering Adam-style normalization.  The
steady state never exceeds either asymptote.

Everything here is a pure function; the same expressions serve as the
AdaBayes-SS step rule's per-step variance and as oracles in the test
suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SteadyStateQuery:
    """Inputs of the steady-state problem: prior variance, learning rate, g2.

    g2 is the stationary mean-square (summed-loss) gradient.  The same
    contraction condition as the optimizer applies:
    eta^2 / (2 sigma2) < 1.
    """

    sigma2: float
    eta: float
    g2: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma2) and self.sigma2 > 0.0):
            raise ValueError(f"sigma2 must be a positive finite real, got {self.sigma2}")
        if not (np.isfinite(self.eta) and self.eta > 0.0):
            raise ValueError(f"eta must be a positive finite real, got {self.eta}")
        if not self.g2 >= 0.0:
            raise ValueError(f"g2 must be >= 0, got {self.g2}")
        if not self.eta * self.eta / (2.0 * self.sigma2) < 1.0:
            raise ValueError(
                f"eta^2/(2 sigma2) must be < 1, got eta={self.eta}, sigma2={self.sigma2}"
            )


@dataclass(frozen=True)
class SweepRow:
    """One point of the steady-state sweep.

    x is the abscissa eta/sqrt(g2); s_low and s_high are the weak-data
    (sigma2) and strong-data (eta/sqrt(g2)) asymptotes.  The steady
    state s_ss sits at or below both, within 1e-12 absolute slack.
    """

    x: float
    s_ss: float
    s_low: float
    s_high: float


def steady_state_precision(sigma2, eta, g2):
    """1/s_post at steady state; element-wise over array g2.

    Strictly positive for all g2 >= 0 (at g2 = 0 it equals 1/sigma2).
    This is the exact expression the AdaBayes-SS step evaluates each
    step, so solver and optimizer cannot drift apart.
    """
    half = 1.0 / (2.0 * sigma2)
    return half + np.sqrt(half * half + g2 / (eta * eta))


def steady_state_s_post(q: SteadyStateQuery) -> float:
    """Steady-state posterior variance; monotone non-increasing in q.g2."""
    return float(1.0 / steady_state_precision(q.sigma2, q.eta, q.g2))


def quadratic_residual(s_post: float, q: SteadyStateQuery) -> float:
    """Residual of the steady-state quadratic at precision 1/s_post.

    Returns sigma2 * (1/s)^2 - (1/s) - g2 * sigma2 / eta^2; zero (up to
    float64 rounding scaled by the largest term) exactly at the steady
    state.  As a function of 1/s this is an upward parabola whose other
    root is non-positive, so the residual is negative for s above the
    root and positive for s below it.
    """
    if not s_post > 0.0:
        raise ValueError(f"s_post must be > 0, got {s_post}")
    prec = 1.0 / s_post
    return q.sigma2 * prec * prec - prec - q.g2 * q.sigma2 / (q.eta * q.eta)


def low_data_limit(q: SteadyStateQuery) -> float:
    """Weak-data asymptote: the learning rate pins at the prior variance."""
    return q.sigma2


def high_data_limit(q: SteadyStateQuery) -> float:
    """Strong-data asymptote eta/sqrt(g2); undefined at g2 = 0."""
    if q.g2 == 0.0:
        raise ValueError("high_data_limit requires g2 > 0")
    return q.eta / math.sqrt(q.g2)


def no_dynamics_s_post(sigma2: float, g2_partial_sums) -> np.ndarray:
    """Variance sequence of the eta=0 recursion: 1/(1/sigma2 + sum g^2).

    ``g2_partial_sums`` holds the running sums of squared gradients
    (non-negative, non-decreasing).  The output has one extra leading
    element, the t=0 value sigma2.  With constant g^2 the tail decays
    like 1/t, which is the reason the full recursion adds diffusion.
    """
    sums = np.asarray(g2_partial_sums, dtype=np.float64)
    if sums.size:
        if not (sums >= 0.0).all():
            raise ValueError("g2 partial sums must be non-negative")
        if np.any(np.diff(sums) < 0.0):
            raise ValueError("g2 partial sums must be non-decreasing")
    out = np.empty(sums.size + 1, dtype=np.float64)
    out[0] = sigma2
    out[1:] = 1.0 / (1.0 / sigma2 + sums)
    return out


def sigma2_from_sgd(eta_sgd: float, batch_size: int) -> float:
    """Prior-variance calibration sigma2 = eta_sgd / B.

    Matches the SGD step scale in the weak-data regime: there the
    filtering update is sigma2 * gbar, and with sigma2 = eta_sgd / B
    that is exactly the SGD rule on summed-loss gradients.
    """
    if not eta_sgd > 0.0:
        raise ValueError(f"eta_sgd must be > 0, got {eta_sgd}")
    if not batch_size >= 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    return eta_sgd / batch_size


def default_sweep_grid(sigma2: float, count: int = 200) -> np.ndarray:
    """Log-spaced abscissa grid spanning [sigma2/1e3, sigma2*1e3]."""
    return np.geomspace(sigma2 * 1e-3, sigma2 * 1e3, count)


def steady_state_sweep(q_template: SteadyStateQuery, x_grid) -> list[SweepRow]:
    """Evaluate the steady state along an abscissa grid x = eta/sqrt(g2).

    g2 is derived per point as (eta/x)^2; sigma2 and eta come from the
    template query (its g2 is ignored).  The grid must be strictly
    positive and strictly increasing.  Each row carries both asymptotes;
    the steady state never exceeds either (1e-12 absolute slack).
    """
    x_grid = np.asarray(x_grid, dtype=np.float64)
    if x_grid.size == 0:
        return []
    if not (x_grid > 0.0).all():
        raise ValueError("sweep grid must be strictly positive")
    if np.any(np.diff(x_grid) <= 0.0):
        raise ValueError("sweep grid must be strictly increasing")

    rows = []
    for x in x_grid:
        g2 = (q_template.eta / x) ** 2
        q = SteadyStateQuery(sigma2=q_template.sigma2, eta=q_template.eta, g2=g2)
        s_ss = steady_state_s_post(q)
        row = SweepRow(
            x=float(x),
            s_ss=s_ss,
            s_low=low_data_limit(q),
            s_high=high_data_limit(q),
        )
        if not (row.s_ss <= row.s_low + 1e-12 and row.s_ss <= row.s_high + 1e-12):
            raise FloatingPointError(f"steady state exceeded an asymptote at x={x!r}")
        rows.append(row)
    return rows
