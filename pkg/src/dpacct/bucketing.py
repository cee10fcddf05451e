"""Per-example accounting via a noise-ratio grid and precomputed transforms.

Each example's run is a heterogeneous composition of subsampled Gaussian
mechanisms whose noise ratios vary step to step.  Quantizing the ratios onto
a fixed grid (always rounding *down*, the conservative direction) turns every
composition into a product of precomputed Fourier coefficient arrays, so a
delta query is a single inner product with a precomputed weight transform:
O(n) with no FFT at query time.  Examples whose ratio exceeds the grid top
are counted in the top bucket, which still rounds down and stays sound;
ratios below the grid bottom raise, since rounding them down is impossible
and a below-grid value usually means a misconfigured clipping constant.

Cache file layout (version 1, all little-endian)
------------------------------------------------
magic ``b"DPFC"`` | u32 version | f64 q | f64 sigma_min | f64 sigma_max |
u32 n_sigma | f64 L | u64 n | u8 rounding | u8 direction | u32 n_eps |
f64[n_eps] eps table | f64[n_sigma+1] bucket tails |
c128[(n_sigma+1) * n] bucket coefficients.
Weight transforms are rebuilt at load time from the stored epsilon table.
"""

from __future__ import annotations

import dataclasses
import struct
from pathlib import Path
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from .errors import BelowGridError, CacheFormatError, ConfigError, OutOfRange
from .pairs import Direction, SubsampledGaussianPair
from .pld import (
    DiscretePLD,
    FourierPLD,
    FourierWeight,
    GridSpec,
    Rounding,
    _halfswap,
    _ifft,
    compose_fourier,
    delta_plancherel,
    discretize,
    make_weight,
    to_fourier,
)

__all__ = [
    "SigmaGrid",
    "BucketCounts",
    "encode",
    "FftCache",
    "DeltaResult",
    "individual_delta",
    "individual_eps",
    "fit_mu_upper",
    "default_eps_table",
]

_MAGIC = b"DPFC"
_VERSION = 1
_ROUNDING_CODE = {Rounding.UP: 0, Rounding.DOWN: 1, Rounding.CENTER: 2}
_DIRECTION_CODE = {Direction.ADD: 0, Direction.REMOVE: 1}
_ROUNDING_FROM = {v: k for k, v in _ROUNDING_CODE.items()}
_DIRECTION_FROM = {v: k for k, v in _DIRECTION_CODE.items()}

DEFAULT_CACHE_GRID = GridSpec(L=20.0, n=2**14)


def default_eps_table(size: int = 256, lo: float = 1e-3, hi: float = 20.0) -> np.ndarray:
    return np.geomspace(lo, hi, size)


@dataclasses.dataclass(frozen=True)
class SigmaGrid:
    """Uniform noise-ratio grid ``sigma_i = sigma_min + i * span / n_sigma``."""

    sigma_min: float
    sigma_max: float
    n_sigma: int
    q: float
    pld_grid: GridSpec = DEFAULT_CACHE_GRID

    def __post_init__(self):
        if not (0.0 < self.sigma_min < self.sigma_max):
            raise ConfigError(
                f"need 0 < sigma_min < sigma_max, got [{self.sigma_min}, {self.sigma_max}]"
            )
        if self.n_sigma < 1:
            raise ConfigError(f"need at least one grid interval, got {self.n_sigma}")
        if not (0.0 <= self.q <= 1.0):
            raise ConfigError(f"sampling rate must be in [0, 1], got {self.q}")

    @property
    def spacing(self) -> float:
        return (self.sigma_max - self.sigma_min) / self.n_sigma

    def points(self) -> np.ndarray:
        return self.sigma_min + self.spacing * np.arange(self.n_sigma + 1)


@dataclasses.dataclass(frozen=True)
class BucketCounts:
    """Integer occupancy of each grid bucket; the total is the step count."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1 or np.any(counts < 0) or np.any(counts != np.floor(counts)):
            raise ConfigError("counts must be a 1-d array of nonnegative integers")
        object.__setattr__(self, "counts", counts.astype(np.int64))

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def encode(sigmas: Union[Sequence[float], np.ndarray], grid: SigmaGrid) -> BucketCounts:
    """Bucket a sequence of noise ratios, rounding each down to a grid point.

    ``sigma in [sigma_i, sigma_{i+1})`` lands in bucket ``i``; anything at or
    above the top point lands in the top bucket.  Values below ``sigma_min``
    raise :class:`BelowGridError`.
    """
    sigmas = np.asarray(sigmas, dtype=float)
    counts = np.zeros(grid.n_sigma + 1, dtype=np.int64)
    if sigmas.size == 0:
        return BucketCounts(counts=counts)
    if np.any(np.isnan(sigmas)) or np.any(sigmas < grid.sigma_min):
        bad = sigmas[np.isnan(sigmas) | (sigmas < grid.sigma_min)][0]
        raise BelowGridError(f"noise ratio {bad} below grid minimum {grid.sigma_min}")
    with np.errstate(invalid="ignore"):
        idx = np.floor((sigmas - grid.sigma_min) / grid.spacing)
    idx = np.clip(np.nan_to_num(idx, posinf=grid.n_sigma), 0, grid.n_sigma).astype(np.int64)
    # Guard against float fuzz pushing an exact grid point into the next bin.
    pts = grid.points()
    above = idx < grid.n_sigma
    idx = np.where(above & (sigmas < pts[np.minimum(idx, grid.n_sigma)]), idx - 1, idx)
    np.add.at(counts, idx, 1)
    return BucketCounts(counts=counts)


class DeltaResult(NamedTuple):
    """Delta value plus whether the weight transform came from the table."""

    delta: float
    weight_cached: bool


class FftCache:
    """Precomputed per-bucket transforms and a per-epsilon weight table."""

    def __init__(
        self,
        grid: SigmaGrid,
        rounding: str = Rounding.UP,
        direction: str = Direction.ADD,
        eps_table: Optional[np.ndarray] = None,
        _defer_build: bool = False,
    ):
        Rounding.validate(rounding)
        Direction.validate(direction)
        self.grid = grid
        self.rounding = rounding
        self.direction = direction
        if eps_table is None:
            # Cap the table at the grid width: beyond L the hinge weight is
            # identically zero and a tabulated delta would be meaningless.
            eps_table = default_eps_table(hi=min(20.0, grid.pld_grid.L))
        self.eps_table = np.sort(np.asarray(eps_table, dtype=float))
        if self.eps_table.size == 0:
            raise ConfigError("epsilon table must be nonempty")
        self.bucket_coeffs: np.ndarray
        self.bucket_tails: np.ndarray
        self.weight_coeffs: np.ndarray
        self._plds: Optional[list[DiscretePLD]] = None
        if not _defer_build:
            self._build()

    def _build(self) -> None:
        plds = [
            discretize(
                SubsampledGaussianPair(self.grid.q, float(s), self.direction),
                self.grid.pld_grid,
                self.rounding,
            )
            for s in self.grid.points()
        ]
        self._plds = plds
        self.bucket_coeffs = np.stack([to_fourier(p).coefficients for p in plds])
        self.bucket_tails = np.array([p.truncated_tail for p in plds])
        self._build_weights()

    def _build_weights(self) -> None:
        self.weight_coeffs = np.stack(
            [make_weight(self.grid.pld_grid, float(e)).coefficients for e in self.eps_table]
        )

    # -- queries ----------------------------------------------------------

    def bucket_fourier(self, i: int) -> FourierPLD:
        return FourierPLD(
            grid=self.grid.pld_grid,
            coefficients=self.bucket_coeffs[i],
            truncated_tail=float(self.bucket_tails[i]),
            rounding=self.rounding,
        )

    def bucket_plds(self) -> list[DiscretePLD]:
        """Mass-domain bucket PLDs, inverse-transformed lazily after a load."""
        if self._plds is None:
            plds = []
            for i in range(self.bucket_coeffs.shape[0]):
                mass = np.maximum(_halfswap(_ifft(self.bucket_coeffs[i]).real), 0.0)
                plds.append(
                    DiscretePLD(
                        grid=self.grid.pld_grid,
                        mass=mass,
                        truncated_tail=float(self.bucket_tails[i]),
                        rounding=self.rounding,
                    )
                )
            self._plds = plds
        return self._plds

    def weight_for(self, eps: float) -> tuple[FourierWeight, bool]:
        """Table lookup; a miss computes one transform and flags it."""
        hit = np.nonzero(self.eps_table == eps)[0]
        if hit.size:
            return (
                FourierWeight(
                    grid=self.grid.pld_grid,
                    eps=float(eps),
                    coefficients=self.weight_coeffs[int(hit[0])],
                ),
                True,
            )
        return make_weight(self.grid.pld_grid, eps), False

    # -- persistence -------------------------------------------------------

    def save(self, path: Union[str, Path]) -> None:
        path = Path(path)
        n = self.grid.pld_grid.n
        header = _MAGIC + struct.pack(
            "<IdddIdQBBI",
            _VERSION,
            self.grid.q,
            self.grid.sigma_min,
            self.grid.sigma_max,
            self.grid.n_sigma,
            self.grid.pld_grid.L,
            n,
            _ROUNDING_CODE[self.rounding],
            _DIRECTION_CODE[self.direction],
            self.eps_table.size,
        )
        with path.open("wb") as fh:
            fh.write(header)
            fh.write(self.eps_table.astype("<f8").tobytes())
            fh.write(self.bucket_tails.astype("<f8").tobytes())
            fh.write(self.bucket_coeffs.astype("<c16").tobytes())

    @classmethod
    def load(cls, path: Union[str, Path]) -> "FftCache":
        path = Path(path)
        try:
            raw = path.read_bytes()
        except OSError as exc:
            raise CacheFormatError(f"cannot read cache file: {exc}") from exc
        if raw[:4] != _MAGIC:
            raise CacheFormatError("not a cache file (bad magic)")
        body = struct.Struct("<IdddIdQBBI")
        try:
            version, q, s_min, s_max, n_sigma, L, n, r_code, d_code, n_eps = body.unpack_from(raw, 4)
        except struct.error as exc:
            raise CacheFormatError(f"truncated cache header: {exc}") from exc
        if version != _VERSION:
            raise CacheFormatError(f"unsupported cache version {version}")
        offset = 4 + body.size
        try:
            grid = SigmaGrid(
                sigma_min=s_min,
                sigma_max=s_max,
                n_sigma=int(n_sigma),
                q=q,
                pld_grid=GridSpec(L=L, n=int(n)),
            )
            eps_table = np.frombuffer(raw, dtype="<f8", count=n_eps, offset=offset).copy()
            offset += 8 * n_eps
            n_buckets = int(n_sigma) + 1
            tails = np.frombuffer(raw, dtype="<f8", count=n_buckets, offset=offset).copy()
            offset += 8 * n_buckets
            coeffs = (
                np.frombuffer(raw, dtype="<c16", count=n_buckets * int(n), offset=offset)
                .reshape(n_buckets, int(n))
                .copy()
            )
        except (ValueError, ConfigError) as exc:
            raise CacheFormatError(f"corrupt cache payload: {exc}") from exc
        cache = cls(
            grid,
            rounding=_ROUNDING_FROM[r_code],
            direction=_DIRECTION_FROM[d_code],
            eps_table=eps_table,
            _defer_build=True,
        )
        cache.bucket_coeffs = coeffs
        cache.bucket_tails = tails
        cache._plds = None
        cache._build_weights()
        return cache


def _compose_counts(counts: BucketCounts, cache: FftCache) -> FourierPLD:
    if counts.counts.shape[0] != cache.bucket_coeffs.shape[0]:
        raise ConfigError("counts length does not match the cache bucket count")
    factors = [
        (cache.bucket_fourier(i), int(k)) for i, k in enumerate(counts.counts) if k > 0
    ]
    if not factors:
        factors = [(cache.bucket_fourier(0), 0)]
    return compose_fourier(factors)


def individual_delta(counts: BucketCounts, cache: FftCache, eps: float) -> DeltaResult:
    """Delta of the bucketed composition at ``eps`` via the Plancherel path.

    With a warm cache and a tabulated ``eps`` this computes no transforms;
    an untabulated ``eps`` falls back to one weight transform and the result
    is flagged accordingly.
    """
    composed = _compose_counts(counts, cache)
    weight, cached = cache.weight_for(eps)
    delta = delta_plancherel([(composed, 1)], weight)
    return DeltaResult(delta=delta, weight_cached=cached)


def individual_eps(counts: BucketCounts, cache: FftCache, delta_target: float) -> float:
    """Smallest tabulated epsilon whose delta is at most ``delta_target``.

    Bisection over the monotone table; raises :class:`OutOfRange` when even
    the largest tabulated epsilon cannot reach the target.
    """
    if not (0.0 < delta_target < 1.0):
        raise ConfigError(f"delta target must be in (0, 1), got {delta_target}")
    composed = _compose_counts(counts, cache)

    def delta_at(idx: int) -> float:
        weight, _ = cache.weight_for(float(cache.eps_table[idx]))
        return delta_plancherel([(composed, 1)], weight)

    lo, hi = 0, cache.eps_table.size - 1
    if delta_at(hi) > delta_target:
        raise OutOfRange(
            f"delta at the largest tabulated epsilon still exceeds {delta_target}"
        )
    if delta_at(lo) <= delta_target:
        return float(cache.eps_table[lo])
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if delta_at(mid) <= delta_target:
            hi = mid
        else:
            lo = mid
    return float(cache.eps_table[hi])


def fit_mu_upper(
    counts: BucketCounts, cache: FftCache, eps_grid: Optional[np.ndarray] = None
) -> float:
    """Gaussian envelope parameter for the bucketed composition.

    Defaults to fitting over the cache's own epsilon table (plus zero), so
    the returned envelope dominates the tabulated curve everywhere above the
    numerical floor.
    """
    from .filters import approx_filter_mu

    plds = cache.bucket_plds()
    factors = [(plds[i], int(k)) for i, k in enumerate(counts.counts) if k > 0]
    if not factors:
        return 0.0
    if eps_grid is None:
        eps_grid = np.concatenate(([0.0], cache.eps_table))
    return approx_filter_mu(factors, eps_grid)
