"""Fully adaptive privacy filters and odometers over Gaussian-DP budgets.

A budget ``B`` admits an adaptively chosen step of size ``mu`` exactly when
the running sum of squares stays within ``B^2``; the accepted transcript is
then ``B``-GDP.  The individual filter runs one such budget per data element
and drops an element permanently the first time a proposed step would
overrun it, so the element's zeroed continuation never spends anything.

The approximate filter fits the smallest Gaussian curve that dominates a
composed discrete PLD on an epsilon grid.  The fitted parameter certifies a
Renyi-divergence bound for the composition, so its (eps, delta) read-out goes
through the RDP conversion rather than the exact Gaussian curve.

Transcript wire format (line-delimited JSON)
--------------------------------------------
First line:   {"record": "header", "version": 1, "n": N, "budget": B,
               "max_steps": k}
Per step:     {"record": "step", "step": j, "mu": [N floats],
               "active": "<N chars of 0/1>", "spent_sq": [N floats]}
``mu`` holds the charged values (zero for inactive elements), ``active`` is
the post-decision active-set bitmap, and ``spent_sq`` the cumulative
per-element squared budget after the step.
"""

from __future__ import annotations

import dataclasses
import enum
import json
from typing import Callable, IO, Optional, Sequence

import numpy as np

from .errors import ConfigError, EnvelopeFailure, ProviderViolation
from .gdp import gdp_delta
from .pld import DiscretePLD, compose_fft, delta_from_pld
from .rdp import DEFAULT_ORDERS, gaussian_rdp, rdp_to_eps

__all__ = [
    "FilterDecision",
    "GdpBudget",
    "filter_step",
    "IndividualGdpFilter",
    "StepRecord",
    "FilterTranscript",
    "individual_filter_run",
    "Checkpoint",
    "GdpOdometer",
    "odometer_advance",
    "default_eps_grid",
    "approx_filter_mu",
    "approx_filter_eps",
    "PldBudgetFilter",
]

TRANSCRIPT_VERSION = 1


class FilterDecision(enum.Enum):
    CONT = "CONT"
    HALT = "HALT"


@dataclasses.dataclass
class GdpBudget:
    """Running ``sum mu^2`` bookkeeping against a fixed budget ``B``.

    Once a step is refused the budget halts for good; an exactly exhausted
    budget still admits zero-size steps until the first refusal.
    """

    budget: float
    spent_sq: float = 0.0
    halted: bool = False

    def __post_init__(self):
        if not (self.budget > 0.0 and np.isfinite(self.budget)):
            raise ConfigError(f"budget must be finite and > 0, got {self.budget}")
        if self.spent_sq < 0.0:
            raise ConfigError("spent budget cannot be negative")

    @property
    def remaining_sq(self) -> float:
        return self.budget**2 - self.spent_sq


def filter_step(budget: GdpBudget, mu_next: float) -> FilterDecision:
    """Admit ``mu_next`` iff the squared budget still covers it.

    CONT commits the spend; HALT leaves the state untouched and is absorbing.
    """
    if not (mu_next >= 0.0 and np.isfinite(mu_next)):
        raise ProviderViolation(f"step parameter must be finite and >= 0, got {mu_next}")
    if budget.halted:
        return FilterDecision.HALT
    if budget.spent_sq + mu_next**2 <= budget.budget**2:
        budget.spent_sq += mu_next**2
        return FilterDecision.CONT
    budget.halted = True
    return FilterDecision.HALT


@dataclasses.dataclass(frozen=True)
class StepRecord:
    step: int
    mu: np.ndarray
    active: np.ndarray
    spent_sq: np.ndarray

    def to_json(self) -> str:
        return json.dumps(
            {
                "record": "step",
                "step": self.step,
                "mu": [float(v) for v in self.mu],
                "active": "".join("1" if a else "0" for a in self.active),
                "spent_sq": [float(v) for v in self.spent_sq],
            }
        )


@dataclasses.dataclass
class FilterTranscript:
    n: int
    budget: float
    max_steps: int
    steps: list[StepRecord] = dataclasses.field(default_factory=list)

    @property
    def final_spent_sq(self) -> np.ndarray:
        if not self.steps:
            return np.zeros(self.n)
        return self.steps[-1].spent_sq.copy()

    @property
    def active_counts(self) -> np.ndarray:
        return np.array([int(rec.active.sum()) for rec in self.steps])

    def active_steps(self, individual: int) -> int:
        return int(sum(int(rec.active[individual]) for rec in self.steps))

    def to_jsonl(self, stream: IO[str]) -> None:
        header = {
            "record": "header",
            "version": TRANSCRIPT_VERSION,
            "n": self.n,
            "budget": self.budget,
            "max_steps": self.max_steps,
        }
        stream.write(json.dumps(header) + "\n")
        for rec in self.steps:
            stream.write(rec.to_json() + "\n")

    @classmethod
    def from_jsonl(cls, stream: IO[str]) -> "FilterTranscript":
        header = json.loads(stream.readline())
        if header.get("record") != "header" or header.get("version") != TRANSCRIPT_VERSION:
            raise ConfigError("unrecognised transcript header")
        out = cls(n=int(header["n"]), budget=float(header["budget"]), max_steps=int(header["max_steps"]))
        for line in stream:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out.steps.append(
                StepRecord(
                    step=int(obj["step"]),
                    mu=np.asarray(obj["mu"], dtype=float),
                    active=np.array([c == "1" for c in obj["active"]]),
                    spent_sq=np.asarray(obj["spent_sq"], dtype=float),
                )
            )
        return out


class IndividualGdpFilter:
    """Per-element budgets with permanent drop on the first refused step."""

    def __init__(self, n: int, budget: float):
        if n < 1:
            raise ConfigError(f"need at least one individual, got {n}")
        if not (budget > 0.0 and np.isfinite(budget)):
            raise ConfigError(f"budget must be finite and > 0, got {budget}")
        self.n = n
        self.budget = budget
        self.spent_sq = np.zeros(n)
        self.active = np.ones(n, dtype=bool)
        self._step = 0

    def step(self, proposed_mu: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Decide one round; returns (charged mu, post-decision active mask).

        Proposed values at inactive indices are ignored.  An active element
        whose proposal would overrun its budget is dropped before the step
        and charged nothing.
        """
        proposed_mu = np.asarray(proposed_mu, dtype=float)
        if proposed_mu.shape != (self.n,):
            raise ProviderViolation(f"expected {self.n} proposals, got shape {proposed_mu.shape}")
        live = proposed_mu[self.active]
        if live.size and (np.any(~np.isfinite(live)) or np.any(live < 0.0)):
            raise ProviderViolation("proposals must be finite and nonnegative")
        self._step += 1
        charged = np.zeros(self.n)
        fits = np.zeros(self.n, dtype=bool)
        fits[self.active] = self.spent_sq[self.active] + live**2 <= self.budget**2
        self.active &= fits
        charged[self.active] = proposed_mu[self.active]
        self.spent_sq[self.active] += charged[self.active] ** 2
        return charged, self.active.copy()


MuProvider = Callable[[int, np.ndarray], np.ndarray]


def individual_filter_run(
    data_size: int, max_steps: int, budget: float, mu_provider: MuProvider
) -> FilterTranscript:
    """Run the per-individual filter for ``max_steps`` adaptive rounds.

    ``mu_provider(step, active_mask)`` is called once per round, in order,
    with the current active mask; it returns nonnegative proposals for the
    active individuals (entries at inactive indices are ignored).  The
    transcript records, per round, the charged values, the post-decision
    active set, and each individual's cumulative squared spend; every
    individual ends with ``sum mu^2 <= budget^2``.
    """
    filt = IndividualGdpFilter(data_size, budget)
    transcript = FilterTranscript(n=data_size, budget=budget, max_steps=max_steps)
    for j in range(1, max_steps + 1):
        proposals = np.asarray(mu_provider(j, filt.active.copy()), dtype=float)
        charged, active = filt.step(proposals)
        transcript.steps.append(
            StepRecord(step=j, mu=charged, active=active, spent_sq=filt.spent_sq.copy())
        )
    return transcript


@dataclasses.dataclass(frozen=True)
class Checkpoint:
    """A released odometer state: the m-th window closed at ``step``."""

    index: int
    cumulative_budget: float
    step: int
    spent_sq: float


class GdpOdometer:
    """Release checkpoints each time a scheduled amount of budget is spent.

    The schedule ``delta_1, delta_2, ...`` is fixed up front; checkpoint ``m``
    fires when the cumulative ``sum mu^2`` crosses
    ``delta_1^2 + ... + delta_m^2`` and certifies the release as
    ``sqrt(delta_1^2 + ... + delta_m^2)``-GDP.  A single large step may close
    several windows at once.
    """

    def __init__(self, schedule: Sequence[float]):
        schedule = [float(d) for d in schedule]
        if any(not (d > 0.0 and np.isfinite(d)) for d in schedule):
            raise ConfigError("window budgets must be finite and > 0")
        self.schedule = schedule
        self._thresholds = np.cumsum(np.square(schedule))
        self.spent_sq = 0.0
        self.released = 0
        self._step = 0

    def advance(self, mu_next: float) -> list[Checkpoint]:
        """Account one step; returns the checkpoints it released (often none)."""
        if not (mu_next >= 0.0 and np.isfinite(mu_next)):
            raise ProviderViolation(f"step parameter must be finite and >= 0, got {mu_next}")
        self._step += 1
        self.spent_sq += mu_next**2
        released: list[Checkpoint] = []
        while self.released < len(self.schedule) and self.spent_sq >= self._thresholds[self.released] - 1e-12:
            self.released += 1
            released.append(
                Checkpoint(
                    index=self.released,
                    cumulative_budget=float(np.sqrt(self._thresholds[self.released - 1])),
                    step=self._step,
                    spent_sq=self.spent_sq,
                )
            )
        return released


def odometer_advance(state: GdpOdometer, mu_next: float) -> list[Checkpoint]:
    """Functional alias for :meth:`GdpOdometer.advance`."""
    return state.advance(mu_next)


def default_eps_grid(L: float = 20.0, size: int = 512) -> np.ndarray:
    """Geometric epsilon grid on [1e-3, L/2] with zero prepended."""
    return np.concatenate(([0.0], np.geomspace(1e-3, L / 2.0, size)))


def approx_filter_mu(
    plds: Sequence[tuple[DiscretePLD, int]],
    eps_grid: Optional[np.ndarray] = None,
    *,
    mu_max: float = 50.0,
    tol: float = 1e-6,
    delta_floor: float = 1e-12,
) -> float:
    """Least Gaussian parameter whose curve dominates the composed PLD.

    The composition is evaluated once on the epsilon grid; bisection then
    finds the smallest ``mu`` (within ``tol``) with
    ``gdp_delta(mu, eps) >= delta(eps)`` at every grid point, and the
    dominating endpoint of the final bracket is returned so the envelope
    property holds exactly at the result.  Use UP-rounded inputs when the
    result must certify an upper bound.

    Grid points whose composed delta falls below ``delta_floor`` are skipped:
    double-precision FFT round-off sits near 1e-16 in delta, so values below
    the floor carry no information and would force the envelope to chase
    noise deep in the tail.
    """
    if eps_grid is None:
        eps_grid = default_eps_grid(plds[0][0].grid.L if plds else 20.0)
    eps_grid = np.asarray(eps_grid, dtype=float)
    composed = compose_fft(plds)
    target = np.asarray(delta_from_pld(composed, eps_grid))
    keep = target >= delta_floor
    if not np.any(keep):
        return 0.0
    eps_grid, target = eps_grid[keep], target[keep]

    def dominates(mu: float) -> bool:
        return bool(np.all(np.asarray(gdp_delta(mu, eps_grid)) >= target))

    if dominates(0.0):
        return 0.0
    lo, hi = 0.0, 1.0
    while not dominates(hi):
        lo, hi = hi, hi * 2.0
        if hi > mu_max:
            if dominates(mu_max):
                hi = mu_max
                break
            raise EnvelopeFailure(f"no Gaussian curve with mu <= {mu_max} dominates the composition")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if dominates(mid):
            hi = mid
        else:
            lo = mid
    return hi


def approx_filter_eps(mu: float, delta: float) -> float:
    """(eps, delta) read-out of a fitted envelope via the RDP conversion.

    The fit only certifies Renyi domination by the Gaussian curve, not full
    Gaussian DP, so this deliberately does not use the exact Gaussian
    inversion.
    """
    return rdp_to_eps(gaussian_rdp(mu, DEFAULT_ORDERS), delta).epsilon


class PldBudgetFilter:
    """Adaptive filter over arbitrary dominating pairs via envelope fitting.

    Offers PLD factors one at a time against a budget ``mu_budget``.  With
    ``check="prefix"`` the envelope is refitted after every offer and an
    offer that pushes the fit past the budget is refused (absorbing halt);
    with ``check="final"`` offers are only recorded and :meth:`fitted_mu`
    evaluates the envelope once at the end.
    """

    def __init__(
        self,
        mu_budget: float,
        eps_grid: Optional[np.ndarray] = None,
        check: str = "prefix",
    ):
        if check not in ("prefix", "final"):
            raise ConfigError(f"check mode must be 'prefix' or 'final', got {check!r}")
        if not (mu_budget > 0.0 and np.isfinite(mu_budget)):
            raise ConfigError(f"budget must be finite and > 0, got {mu_budget}")
        self.mu_budget = mu_budget
        self.eps_grid = eps_grid
        self.check = check
        self.factors: list[tuple[DiscretePLD, int]] = []
        self.halted = False

    def offer(self, pld: DiscretePLD, multiplicity: int = 1) -> FilterDecision:
        if self.halted:
            return FilterDecision.HALT
        candidate = self.factors + [(pld, multiplicity)]
        if self.check == "prefix":
            mu = approx_filter_mu(candidate, self.eps_grid, mu_max=max(50.0, 2 * self.mu_budget))
            if mu > self.mu_budget:
                self.halted = True
                return FilterDecision.HALT
        self.factors = candidate
        return FilterDecision.CONT

    def fitted_mu(self) -> float:
        if not self.factors:
            return 0.0
        return approx_filter_mu(self.factors, self.eps_grid, mu_max=max(50.0, 2 * self.mu_budget))

    def epsilon(self, delta: float) -> float:
        return approx_filter_eps(self.fitted_mu(), delta)
