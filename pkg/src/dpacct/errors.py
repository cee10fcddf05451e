"""Exception types raised across the library.

All domain errors derive from :class:`DpacctError` so callers (notably the
CLI) can distinguish numeric-domain failures from programming errors.
"""


class DpacctError(Exception):
    """Base class for all library-specific errors."""


class NoSolution(DpacctError):
    """An (epsilon, delta) inversion has no solution in the valid domain."""


class GridTooNarrow(DpacctError):
    """The loss grid cannot soundly hold the distribution being discretized."""


class GridMismatch(DpacctError):
    """Operands were built on different grids and cannot be combined."""


class RoundingMismatch(DpacctError):
    """Operands carry different rounding directions and cannot be combined."""


class NoFiniteBound(DpacctError):
    """No order in the RDP curve yields a finite epsilon."""


class OrderOverflow(DpacctError):
    """An RDP computation left the representable log-domain range."""


class EnvelopeFailure(DpacctError):
    """No Gaussian curve up to the allowed maximum dominates the target."""


class ProviderViolation(DpacctError):
    """A filter callback returned an invalid (negative or non-finite) value."""


class BelowGridError(DpacctError):
    """A noise ratio fell below the grid minimum; rounding down is unsound."""


class CacheMiss(DpacctError):
    """A requested epsilon is not in the precomputed weight table."""


class OutOfRange(DpacctError):
    """The requested target is outside the tabulated range."""


class CacheFormatError(DpacctError):
    """A persisted cache file is corrupt or has an unsupported version."""


class ConfigError(DpacctError):
    """A run configuration violates its parameter domain."""


class NonFiniteLoss(DpacctError):
    """Training diverged; the run was aborted with a partial report."""


class UnsupportedCombination(DpacctError):
    """The requested accountant does not apply to the recorded traces."""
