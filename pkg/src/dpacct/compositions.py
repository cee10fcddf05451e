"""Convenience layer over the FFT engine for homogeneous compositions.

These helpers answer the common question "k repetitions of one subsampled
Gaussian mechanism" without the caller touching grids or transforms, and are
exactly what the command-line front end invokes.  Reported deltas default to
the maximum over the two neighbour directions; the guarantee then holds
whichever side of the neighbour relation the adversary picks.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .bucketing import default_eps_table
from .errors import OutOfRange
from .filters import approx_filter_mu, default_eps_grid
from .pairs import Direction, SubsampledGaussianPair
from .pld import DEFAULT_GRID, DiscretePLD, GridSpec, Rounding, compose_fft, delta_from_pld, discretize

__all__ = ["composed_pld", "pld_delta", "pld_epsilon", "fit_mu"]

DIRECTION_CHOICES = (Direction.ADD, Direction.REMOVE, "max")


def composed_pld(
    q: float,
    sigma: float,
    steps: int,
    grid: GridSpec = DEFAULT_GRID,
    rounding: str = Rounding.CENTER,
    direction: str = Direction.ADD,
) -> DiscretePLD:
    """k-fold self-composition of one subsampled Gaussian pair."""
    pair = SubsampledGaussianPair(q, sigma, direction)
    return compose_fft([(discretize(pair, grid, rounding), steps)])


def pld_delta(
    q: float,
    sigma: float,
    steps: int,
    eps: float,
    grid: GridSpec = DEFAULT_GRID,
    rounding: str = Rounding.CENTER,
    direction: str = "max",
) -> float:
    """Delta of the k-fold composition at ``eps``.

    ``direction="max"`` evaluates both neighbour directions and returns the
    larger delta.
    """
    dirs = (Direction.ADD, Direction.REMOVE) if direction == "max" else (direction,)
    return max(
        float(delta_from_pld(composed_pld(q, sigma, steps, grid, rounding, d), eps))
        for d in dirs
    )


def pld_epsilon(
    q: float,
    sigma: float,
    steps: int,
    delta: float,
    grid: GridSpec = DEFAULT_GRID,
    rounding: str = Rounding.CENTER,
    direction: str = "max",
    eps_table: Optional[np.ndarray] = None,
) -> float:
    """Smallest tabulated epsilon whose (direction-max) delta meets the target."""
    if eps_table is None:
        eps_table = default_eps_table(hi=grid.L)
    eps_table = np.sort(np.asarray(eps_table, dtype=float))
    dirs = (Direction.ADD, Direction.REMOVE) if direction == "max" else (direction,)
    plds = [composed_pld(q, sigma, steps, grid, rounding, d) for d in dirs]
    deltas = np.max([np.asarray(delta_from_pld(p, eps_table)) for p in plds], axis=0)
    ok = np.nonzero(deltas <= delta)[0]
    if ok.size == 0:
        raise OutOfRange(f"delta at the largest tabulated epsilon still exceeds {delta}")
    return float(eps_table[ok[0]])


def fit_mu(
    q: float,
    sigma: float,
    steps: int,
    grid: GridSpec = DEFAULT_GRID,
    rounding: str = Rounding.UP,
    direction: str = Direction.ADD,
    eps_grid: Optional[np.ndarray] = None,
) -> float:
    """Gaussian envelope parameter dominating the k-fold composition."""
    pair = SubsampledGaussianPair(q, sigma, direction)
    pld = discretize(pair, grid, rounding)
    if eps_grid is None:
        eps_grid = default_eps_grid(grid.L)
    return approx_filter_mu([(pld, steps)], eps_grid)
