"""Parametric dominating pairs and their privacy loss functions.

Two families are supported: a pair of equal-variance Gaussians separated by a
sensitivity ``delta``, and the Poisson-subsampled Gaussian pair built from a
sampling rate ``q`` and a noise ratio ``sigma`` (noise scale divided by the
clipping constant).  Each pair induces a privacy loss random variable (PRV):
the log density ratio of the pair evaluated at a sample from the first
distribution.  Everything here is closed form; the loss functions are monotone
nondecreasing in their argument, which lets the PRV CDF be computed by
inverting the loss to a threshold.

Direction semantics for the subsampled pair
-------------------------------------------
``ADD``    numerator is the mixture ``q*N(1, s^2) + (1-q)*N(0, s^2)``,
           denominator the base ``N(0, s^2)``; the loss is
           ``log(q*exp((2t-1)/(2 s^2)) + 1 - q)``.
``REMOVE`` the neighbour relation seen from the other side.  It is
           represented by the reflected pair
           ``(N(1, s^2), q*N(0, s^2) + (1-q)*N(1, s^2))`` whose divergence
           curve equals that of the swapped ADD pair at every threshold
           (reflection is a bijective post-processing), while keeping the
           loss monotone increasing.

At ``q = 1`` both directions reduce exactly to the Gaussian pair with
``delta/sigma = 1/s``; at ``q = 0`` both are the identity pair.
"""

from __future__ import annotations

import dataclasses
from typing import Union

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from .errors import ConfigError

__all__ = [
    "Direction",
    "GaussianPair",
    "SubsampledGaussianPair",
    "PrvGaussianStats",
    "PrivacyLossFunction",
    "gaussian_prv_stats",
    "subsampled_loss_at",
    "prv_cdf",
    "prv_moments",
]

ArrayLike = Union[float, np.ndarray]


class Direction:
    """Neighbour direction of a subsampled pair."""

    ADD = "add"
    REMOVE = "remove"

    _VALID = (ADD, REMOVE)

    @classmethod
    def validate(cls, value: str) -> str:
        if value not in cls._VALID:
            raise ConfigError(f"direction must be one of {cls._VALID}, got {value!r}")
        return value


@dataclasses.dataclass(frozen=True)
class GaussianPair:
    """Pair ``(N(delta, sigma^2), N(0, sigma^2))`` with sensitivity ``delta``.

    The induced PRV is ``N(delta^2/(2 sigma^2), delta^2/sigma^2)``.
    """

    delta: float
    sigma: float

    def __post_init__(self):
        if not (self.delta >= 0.0 and np.isfinite(self.delta)):
            raise ConfigError(f"sensitivity must be finite and >= 0, got {self.delta}")
        if not (self.sigma > 0.0 and np.isfinite(self.sigma)):
            raise ConfigError(f"noise scale must be finite and > 0, got {self.sigma}")

    @property
    def mu(self) -> float:
        """Effective Gaussian-DP parameter ``delta / sigma``."""
        return self.delta / self.sigma


@dataclasses.dataclass(frozen=True)
class SubsampledGaussianPair:
    """Poisson-subsampled Gaussian pair with rate ``q`` and noise ratio ``sigma``.

    ``sigma`` is the noise scale after clipping normalisation (noise scale
    divided by the per-step sensitivity).
    """

    q: float
    sigma: float
    direction: str = Direction.ADD

    def __post_init__(self):
        if not (0.0 <= self.q <= 1.0):
            raise ConfigError(f"sampling rate must be in [0, 1], got {self.q}")
        if not (self.sigma > 0.0 and np.isfinite(self.sigma)):
            raise ConfigError(f"noise ratio must be finite and > 0, got {self.sigma}")
        Direction.validate(self.direction)


Pair = Union[GaussianPair, SubsampledGaussianPair]


@dataclasses.dataclass(frozen=True)
class PrvGaussianStats:
    """Moments of the Gaussian-pair PRV; the variance is exactly twice the mean."""

    mean: float
    variance: float


def gaussian_prv_stats(pair: GaussianPair) -> PrvGaussianStats:
    """Exact PRV moments for a Gaussian pair."""
    m = pair.delta**2 / (2.0 * pair.sigma**2)
    return PrvGaussianStats(mean=m, variance=2.0 * m)


def _gaussian_loss(pair: GaussianPair, t: ArrayLike) -> ArrayLike:
    # log N(delta, sigma^2)(t) / N(0, sigma^2)(t) = (2 t delta - delta^2) / (2 sigma^2)
    return (2.0 * np.asarray(t, dtype=float) * pair.delta - pair.delta**2) / (
        2.0 * pair.sigma**2
    )


def subsampled_loss_at(pair: SubsampledGaussianPair, t: ArrayLike) -> ArrayLike:
    """Closed-form privacy loss of a subsampled pair, stable for large ``|t|``."""
    t = np.asarray(t, dtype=float)
    q, s2 = pair.q, pair.sigma**2
    if q == 0.0:
        out = np.zeros_like(t)
        return float(out) if out.ndim == 0 else out
    if pair.direction == Direction.ADD:
        x = (2.0 * t - 1.0) / (2.0 * s2)
    else:
        x = (1.0 - 2.0 * t) / (2.0 * s2)
    if q == 1.0:
        loss = x
    else:
        loss = np.logaddexp(np.log(q) + x, np.log1p(-q))
    if pair.direction == Direction.REMOVE:
        loss = -loss
    return float(loss) if np.ndim(loss) == 0 else loss


def loss_at(pair: Pair, t: ArrayLike) -> ArrayLike:
    """Privacy loss of either pair family at ``t``."""
    if isinstance(pair, GaussianPair):
        out = _gaussian_loss(pair, t)
        return float(out) if np.ndim(out) == 0 else out
    return subsampled_loss_at(pair, t)


@dataclasses.dataclass(frozen=True)
class PrivacyLossFunction:
    """Callable wrapper around a pair's loss map, defined on the full real line."""

    pair: Pair
    domain: tuple = (-np.inf, np.inf)

    def __call__(self, t: ArrayLike) -> ArrayLike:
        return loss_at(self.pair, t)


def _subsampled_cdf(pair: SubsampledGaussianPair, s: np.ndarray) -> np.ndarray:
    """CDF of the subsampled PRV by inverting the monotone loss."""
    q, sig = pair.q, pair.sigma
    s2 = sig**2
    if q == 0.0:
        return np.where(s >= 0.0, 1.0, 0.0)

    if pair.direction == Direction.ADD:
        # loss(t) = log(q e^{(2t-1)/(2 s^2)} + 1-q), t ~ q N(1,s^2) + (1-q) N(0,s^2).
        # Solvable iff s > log(1-q); below that the CDF is 0.
        if q == 1.0:
            t_star = 0.5 + s2 * s
            solvable = np.ones_like(s, dtype=bool)
        else:
            lo = np.log1p(-q)
            solvable = s > lo
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                inner = np.log1p(-(1.0 - q) * np.exp(-s)) - np.log(q)
                t_star = 0.5 + s2 * (s + inner)
        cdf = q * ndtr((t_star - 1.0) / sig) + (1.0 - q) * ndtr(t_star / sig)
        return np.where(solvable, cdf, 0.0)

    # REMOVE: loss(t) = -log(q e^{(1-2t)/(2 s^2)} + 1-q), t ~ N(1, s^2).
    # Bounded above by -log(1-q); at or beyond that the CDF is 1.
    if q == 1.0:
        t_star = 0.5 + s2 * s
        return np.asarray(ndtr((t_star - 1.0) / sig))
    hi = -np.log1p(-q)
    solvable = s < hi
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        inner = np.log1p(-(1.0 - q) * np.exp(s)) - np.log(q)
        t_star = 0.5 + s2 * (s - inner)
    cdf = ndtr((t_star - 1.0) / sig)
    return np.where(solvable, cdf, 1.0)


def prv_cdf(pair: Pair, s: ArrayLike) -> ArrayLike:
    """Exact CDF of the pair's PRV at threshold(s) ``s``."""
    s_arr = np.asarray(s, dtype=float)
    scalar = s_arr.ndim == 0
    s_arr = np.atleast_1d(s_arr)
    if isinstance(pair, GaussianPair):
        if pair.delta == 0.0:
            out = np.where(s_arr >= 0.0, 1.0, 0.0)
        else:
            stats = gaussian_prv_stats(pair)
            out = ndtr((s_arr - stats.mean) / np.sqrt(stats.variance))
    else:
        out = _subsampled_cdf(pair, s_arr)
    out = np.asarray(out, dtype=float)
    return float(out[0]) if scalar else out


def _phi(z: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)


def is_point_mass(pair: Pair) -> bool:
    """True when the pair's PRV is a point mass at zero loss."""
    if isinstance(pair, GaussianPair):
        return pair.delta == 0.0
    return pair.q == 0.0


def prv_pdf(pair: Pair, s: ArrayLike) -> ArrayLike:
    """Exact density of the pair's PRV (undefined for point masses).

    Subsampled densities follow from the change of variables through the
    monotone loss: ``pdf(s) = pdf_P(t*(s)) * dt*/ds``.
    """
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    scalar = np.ndim(s) == 0
    if is_point_mass(pair):
        raise ConfigError("point-mass PRV has no density")
    if isinstance(pair, GaussianPair):
        stats = gaussian_prv_stats(pair)
        sd = np.sqrt(stats.variance)
        out = _phi((s_arr - stats.mean) / sd) / sd
        return float(out[0]) if scalar else out

    q, sig = pair.q, pair.sigma
    s2 = sig**2
    if pair.direction == Direction.ADD:
        if q == 1.0:
            t_star = 0.5 + s2 * s_arr
            slope = np.full_like(s_arr, s2)
            support = np.ones_like(s_arr, dtype=bool)
        else:
            support = s_arr > np.log1p(-q)
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                denom = -np.expm1(np.log1p(-q) - s_arr)  # 1 - (1-q) e^{-s}
                t_star = 0.5 + s2 * (s_arr + np.log(denom) - np.log(q))
                slope = s2 / denom
        mix = q * _phi((t_star - 1.0) / sig) + (1.0 - q) * _phi(t_star / sig)
        with np.errstate(invalid="ignore"):
            out = np.where(support, mix / sig * slope, 0.0)
    else:
        if q == 1.0:
            t_star = 0.5 + s2 * s_arr
            slope = np.full_like(s_arr, s2)
            support = np.ones_like(s_arr, dtype=bool)
        else:
            support = s_arr < -np.log1p(-q)
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                denom = -np.expm1(np.log1p(-q) + s_arr)  # 1 - (1-q) e^{s}
                t_star = 0.5 + s2 * (s_arr - np.log(denom) + np.log(q))
                slope = s2 / denom
        with np.errstate(invalid="ignore"):
            out = np.where(support, _phi((t_star - 1.0) / sig) / sig * slope, 0.0)
    out = np.nan_to_num(out, nan=0.0, posinf=0.0)
    return float(out[0]) if scalar else out


def prv_moments(pair: Pair) -> tuple[float, float]:
    """Mean and standard deviation of the PRV (closed form or quadrature)."""
    if isinstance(pair, GaussianPair):
        stats = gaussian_prv_stats(pair)
        return stats.mean, float(np.sqrt(stats.variance))
    if pair.q == 0.0:
        return 0.0, 0.0

    def component_moment(shift: float, power: int) -> float:
        # E[loss(shift + sigma u)^power] under u ~ N(0, 1)
        def integrand(u):
            val = subsampled_loss_at(pair, shift + pair.sigma * u)
            return val**power * np.exp(-0.5 * u * u) / np.sqrt(2.0 * np.pi)

        out, _ = integrate.quad(integrand, -12.0, 12.0, limit=200)
        return out

    if pair.direction == Direction.ADD:
        weights = ((pair.q, 1.0), (1.0 - pair.q, 0.0))
    else:
        weights = ((1.0, 1.0),)
    mean = sum(w * component_moment(c, 1) for w, c in weights if w > 0.0)
    second = sum(w * component_moment(c, 2) for w, c in weights if w > 0.0)
    var = max(second - mean**2, 0.0)
    return mean, float(np.sqrt(var))
