"""Closed-form Gaussian DP curves, inversion, and composition arithmetic.

A mechanism is ``mu``-GDP when its outputs on neighbouring datasets are no
more distinguishable than ``N(mu, 1)`` and ``N(0, 1)``.  The trade-off curve
has the closed form

    delta(eps) = Phi(-eps/mu + mu/2) - exp(eps) * Phi(-eps/mu - mu/2)

and budgets compose by root-sum-of-squares.  ``delta`` is evaluated through
``log_ndtr`` so values down to 1e-300 keep full relative accuracy.
"""

from __future__ import annotations

import dataclasses
from typing import Iterable, Sequence, Union

import numpy as np
from scipy.special import log_ndtr, ndtri

from .errors import ConfigError, NoSolution

__all__ = [
    "EpsDeltaCurve",
    "gdp_delta",
    "gdp_log_delta",
    "gdp_eps",
    "gdp_compose",
    "gd_step_mu",
    "gdp_curve",
]

ArrayLike = Union[float, np.ndarray]

_EPS_BISECT_TOL = 1e-12  # absolute tolerance on delta at the returned epsilon


def _check_mu(mu: float) -> float:
    if not (mu >= 0.0 and np.isfinite(mu)):
        raise ConfigError(f"GDP parameter must be finite and >= 0, got {mu}")
    return float(mu)


@dataclasses.dataclass(frozen=True)
class EpsDeltaCurve:
    """Sampled ``(eps, delta(eps))`` curve with a direction tag.

    ``delta`` must be nonincreasing in ``eps`` and stay inside ``[0, 1]``.
    """

    eps: np.ndarray
    delta: np.ndarray
    direction: str = "max"

    def __post_init__(self):
        eps = np.asarray(self.eps, dtype=float)
        delta = np.asarray(self.delta, dtype=float)
        if eps.shape != delta.shape or eps.ndim != 1:
            raise ConfigError("curve needs matching 1-d eps and delta arrays")
        if np.any(np.diff(eps) <= 0.0):
            raise ConfigError("eps values must be strictly increasing")
        if np.any(delta < -1e-12) or np.any(delta > 1.0 + 1e-12):
            raise ConfigError("delta values must lie in [0, 1]")
        if np.any(np.diff(delta) > 1e-12):
            raise ConfigError("delta must be nonincreasing in eps")
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "delta", np.clip(delta, 0.0, 1.0))


def gdp_log_delta(mu: float, eps: ArrayLike) -> ArrayLike:
    """``log delta(eps)`` for a ``mu``-GDP mechanism, accurate deep in the tail.

    Returns ``-inf`` where delta underflows to exactly zero.
    """
    mu = _check_mu(mu)
    eps_arr = np.asarray(eps, dtype=float)
    scalar = eps_arr.ndim == 0
    eps_arr = np.atleast_1d(eps_arr).astype(float)
    if mu == 0.0:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(eps_arr >= 0.0, -np.inf, np.log(-np.expm1(eps_arr)))
        return float(out[0]) if scalar else out
    la = log_ndtr(-eps_arr / mu + mu / 2.0)
    lb = eps_arr + log_ndtr(-eps_arr / mu - mu / 2.0)
    # delta = exp(la) - exp(lb) with la >= lb; keep it in the log domain.
    diff = lb - la
    with np.errstate(divide="ignore", invalid="ignore"):
        out = la + np.log(-np.expm1(np.minimum(diff, 0.0)))
    out = np.where(np.isnan(out), -np.inf, out)
    return float(out[0]) if scalar else out


def gdp_delta(mu: float, eps: ArrayLike) -> ArrayLike:
    """Tight ``delta(eps)`` for a ``mu``-GDP mechanism, clipped to ``[0, 1]``.

    ``mu = 0`` yields the total-variation limit ``max(0, 1 - exp(eps))``.
    """
    out = np.exp(gdp_log_delta(mu, eps))
    out = np.clip(out, 0.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


def gdp_eps(mu: float, delta: float) -> float:
    """Smallest ``eps >= 0`` with ``gdp_delta(mu, eps) <= delta``.

    Bisection on the monotone curve; the returned point satisfies
    ``|gdp_delta(mu, eps) - delta| <= 1e-12`` or is exactly 0 when the curve
    already starts below ``delta``.  ``mu = 0`` is a degenerate budget and
    returns 0.
    """
    mu = _check_mu(mu)
    if not (0.0 < delta < 1.0):
        raise NoSolution(f"delta must be in (0, 1), got {delta}")
    if mu == 0.0:
        return 0.0
    log_target = np.log(delta)
    if gdp_log_delta(mu, 0.0) <= log_target:
        return 0.0
    # Geometric bracket expansion from the spec's starting guess.
    hi = max(1.0, mu**2 / 2.0 + mu * abs(float(ndtri(delta))))
    while gdp_log_delta(mu, hi) > log_target:
        hi *= 2.0
        if hi > 1e8:
            raise NoSolution("no epsilon below 1e8 reaches the requested delta")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if gdp_log_delta(mu, mid) > log_target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
        if abs(gdp_delta(mu, hi) - delta) <= _EPS_BISECT_TOL and hi - lo <= 1e-9:
            break
    return hi


def gdp_compose(mus: Iterable[float]) -> float:
    """Root-sum-of-squares composition of GDP budgets."""
    total = 0.0
    for m in mus:
        total += _check_mu(m) ** 2
    return float(np.sqrt(total))


def gd_step_mu(gradient_norm: float, sigma: float) -> float:
    """Per-step GDP parameter of a noisy-sum step: ``gradient_norm / sigma``."""
    if not (gradient_norm >= 0.0 and np.isfinite(gradient_norm)):
        raise ConfigError(f"gradient norm must be finite and >= 0, got {gradient_norm}")
    if not (sigma > 0.0 and np.isfinite(sigma)):
        raise ConfigError(f"noise scale must be finite and > 0, got {sigma}")
    return gradient_norm / sigma


def gdp_curve(mu: float, eps: Sequence[float], direction: str = "max") -> EpsDeltaCurve:
    """Sample the analytic curve on the given epsilon grid."""
    eps_arr = np.asarray(list(eps), dtype=float)
    return EpsDeltaCurve(eps=eps_arr, delta=np.atleast_1d(gdp_delta(mu, eps_arr)), direction=direction)
