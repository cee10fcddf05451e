"""Differential privacy accounting for fully adaptive compositions.

The library covers four layers:

* analytic Gaussian-DP curves and budget arithmetic (:mod:`dpacct.gdp`),
* numerically composed privacy loss distributions with an FFT engine and a
  Plancherel fast path (:mod:`dpacct.pld`),
* adaptive privacy filters and odometers, global and per-individual
  (:mod:`dpacct.filters`), plus a Renyi-DP baseline (:mod:`dpacct.rdp`),
* O(n)-per-query individual accounting via a precomputed noise-ratio grid
  (:mod:`dpacct.bucketing`) and a synthetic private-GD harness
  (:mod:`dpacct.harness`).
"""

from .errors import (
    BelowGridError,
    CacheFormatError,
    CacheMiss,
    ConfigError,
    DpacctError,
    EnvelopeFailure,
    GridMismatch,
    GridTooNarrow,
    NoFiniteBound,
    NonFiniteLoss,
    NoSolution,
    OrderOverflow,
    OutOfRange,
    ProviderViolation,
    RoundingMismatch,
    UnsupportedCombination,
)
from .pairs import (
    Direction,
    GaussianPair,
    PrivacyLossFunction,
    PrvGaussianStats,
    SubsampledGaussianPair,
    gaussian_prv_stats,
    prv_cdf,
    subsampled_loss_at,
)
from .gdp import EpsDeltaCurve, gd_step_mu, gdp_compose, gdp_curve, gdp_delta, gdp_eps
from .pld import (
    DEFAULT_GRID,
    DiscretePLD,
    FourierPLD,
    FourierWeight,
    GridSpec,
    Rounding,
    compose_fft,
    compose_fourier,
    delta_from_pld,
    delta_plancherel,
    discretize,
    identity_pld,
    make_weight,
    to_fourier,
)
from .rdp import RdpCurve, RdpEpsilon, gaussian_rdp, rdp_compose, rdp_to_eps, subsampled_rdp
from .filters import (
    Checkpoint,
    FilterDecision,
    FilterTranscript,
    GdpBudget,
    GdpOdometer,
    IndividualGdpFilter,
    PldBudgetFilter,
    approx_filter_eps,
    approx_filter_mu,
    filter_step,
    individual_filter_run,
    odometer_advance,
)
from .bucketing import (
    BucketCounts,
    DeltaResult,
    FftCache,
    SigmaGrid,
    encode,
    fit_mu_upper,
    individual_delta,
    individual_eps,
)
from .compositions import composed_pld, fit_mu, pld_delta, pld_epsilon
from .harness import (
    Accountant,
    EpsilonSummary,
    FilterMode,
    RunConfig,
    RunReport,
    SyntheticTask,
    epsilon_histogram,
    make_task,
    run,
    save_report,
    write_epsilon_csv,
)

__version__ = "0.1.0"
