"""Renyi-DP baseline: Gaussian curves, composition, and conversion to (eps, delta).

The Gaussian mechanism with effective parameter ``mu`` satisfies
``rho(alpha) = alpha * mu^2 / 2`` at every order.  Curves over a shared order
grid compose by pointwise addition.

Two conversion variants are provided.  The default, ``classic``, is

    eps(alpha) = rho(alpha) + log(1/delta) / (alpha - 1)

minimized over the grid; this is the variant behind the reference epsilon
values the library reproduces.  The ``tight`` variant

    eps(alpha) = rho(alpha) + log((alpha-1)/alpha) - (log delta + log alpha) / (alpha - 1)

is sharper and is available for comparison work.
"""

from __future__ import annotations

import dataclasses
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import ConfigError, GridMismatch, NoFiniteBound, OrderOverflow
from .pairs import SubsampledGaussianPair

__all__ = [
    "RdpCurve",
    "RdpEpsilon",
    "DEFAULT_ORDERS",
    "DEFAULT_INT_ORDERS",
    "gaussian_rdp",
    "rdp_compose",
    "rdp_to_eps",
    "subsampled_rdp",
]

# Integers 2..256 plus a dense fractional band below 2.
DEFAULT_ORDERS = np.unique(
    np.concatenate((np.round(np.arange(1.05, 2.0, 0.05), 2), np.arange(2, 257, dtype=float)))
)
DEFAULT_INT_ORDERS = np.arange(2, 257)


@dataclasses.dataclass(frozen=True)
class RdpCurve:
    """Map from Renyi order ``alpha > 1`` to a divergence bound ``rho(alpha)``."""

    orders: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        orders = np.asarray(self.orders, dtype=float)
        rho = np.asarray(self.rho, dtype=float)
        if orders.shape != rho.shape or orders.ndim != 1 or orders.size == 0:
            raise ConfigError("curve needs matching nonempty 1-d order and rho arrays")
        if np.any(orders <= 1.0):
            raise ConfigError("all orders must exceed 1")
        if np.any(rho < 0.0):
            raise ConfigError("rho values must be nonnegative")
        object.__setattr__(self, "orders", orders)
        object.__setattr__(self, "rho", rho)


class RdpEpsilon(NamedTuple):
    epsilon: float
    order: float


def gaussian_rdp(mu: float, orders: Sequence[float] | np.ndarray = DEFAULT_ORDERS) -> RdpCurve:
    """Gaussian RDP curve ``rho(alpha) = alpha * mu^2 / 2``."""
    if not (mu >= 0.0 and np.isfinite(mu)):
        raise ConfigError(f"GDP parameter must be finite and >= 0, got {mu}")
    orders = np.asarray(orders, dtype=float)
    return RdpCurve(orders=orders, rho=orders * mu**2 / 2.0)


def rdp_compose(curves: Iterable[RdpCurve], orders: np.ndarray = DEFAULT_ORDERS) -> RdpCurve:
    """Pointwise sum over a shared order grid; empty input is the zero curve."""
    curves = list(curves)
    if not curves:
        return RdpCurve(orders=np.asarray(orders, dtype=float), rho=np.zeros(len(orders)))
    base = curves[0].orders
    total = np.zeros_like(base)
    for c in curves:
        if c.orders.shape != base.shape or not np.array_equal(c.orders, base):
            raise GridMismatch("curves use different order grids")
        total = total + c.rho
    return RdpCurve(orders=base, rho=total)


def rdp_to_eps(curve: RdpCurve, delta: float, variant: str = "classic") -> RdpEpsilon:
    """Convert an RDP curve to the best (eps, delta) bound over the order grid.

    Returns the minimizing epsilon (clamped at zero) together with the order
    that attains it.  Raises :class:`NoFiniteBound` when every order gives an
    infinite epsilon.
    """
    if not (0.0 < delta < 1.0):
        raise ConfigError(f"delta must be in (0, 1), got {delta}")
    a = curve.orders
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if variant == "classic":
            eps = curve.rho + np.log(1.0 / delta) / (a - 1.0)
        elif variant == "tight":
            eps = curve.rho + np.log1p(-1.0 / a) - (np.log(delta) + np.log(a)) / (a - 1.0)
        else:
            raise ConfigError(f"unknown conversion variant {variant!r}")
    eps = np.where(np.isnan(eps), np.inf, eps)
    idx = int(np.argmin(eps))
    if not np.isfinite(eps[idx]):
        raise NoFiniteBound("every order yields an infinite epsilon")
    return RdpEpsilon(epsilon=float(max(0.0, eps[idx])), order=float(a[idx]))


def _log_binom_moments(q: float, sigma: float, orders: np.ndarray) -> np.ndarray:
    """log E_{t ~ N(0, s^2)} [(q e^{(2t-1)/(2 s^2)} + 1 - q)^alpha], exact for integer alpha.

    Vectorized over the order grid: one masked (n_orders, alpha_max + 1)
    log-domain matrix, reduced by logsumexp.
    """
    alpha_max = int(orders.max())
    i = np.arange(alpha_max + 1)
    a = orders[:, None].astype(float)
    mask = i[None, :] <= a
    with np.errstate(invalid="ignore", divide="ignore"):
        terms = (
            gammaln(a + 1)
            - gammaln(i + 1)[None, :]
            - gammaln(np.maximum(a - i, 0.0) + 1)
            + i * np.log(q)
            + (a - i) * np.log1p(-q)
            + (i * i - i) / (2.0 * sigma**2)
        )
    terms = np.where(mask, terms, -np.inf)
    return logsumexp(terms, axis=1)


def subsampled_rdp(
    pair: SubsampledGaussianPair, orders: Sequence[int] | np.ndarray = DEFAULT_INT_ORDERS
) -> RdpCurve:
    """Upper-bound RDP curve of the Poisson-subsampled Gaussian at integer orders.

    Uses the exact binomial expansion of the mixture-numerator Renyi integral,
    evaluated entirely in the log domain; this is the standard accountant
    bound and covers both neighbour directions.  Reduces to the Gaussian
    closed form at ``q = 1``.
    """
    orders = np.asarray(orders)
    if orders.size == 0:
        raise ConfigError("order grid must be nonempty")
    if np.any(orders != np.floor(orders)) or np.any(orders < 2):
        raise ConfigError("subsampled RDP needs integer orders >= 2")
    orders = orders.astype(int)
    q, sigma = pair.q, pair.sigma
    if q == 0.0:
        rho = np.zeros(orders.shape)
    elif q == 1.0:
        rho = orders / (2.0 * sigma**2)
    else:
        rho = _log_binom_moments(q, sigma, orders) / (orders - 1.0)
        if not np.all(np.isfinite(rho)):
            raise OrderOverflow("intermediate terms left the representable log-domain range")
    return RdpCurve(orders=orders.astype(float), rho=np.maximum(rho, 0.0))
