"""Synthetic private gradient descent with per-example accounting.

A seeded logistic-regression task with grouped feature scales stands in for
the large experiments: groups with bigger features produce bigger per-example
gradients, spend their budgets faster, and get dropped earlier by the
individual filter, which is the qualitative behaviour the harness exists to
exhibit.  Each step releases a clipped-gradient sum plus spherical Gaussian
noise; the per-example privacy charge of a step is the clipped gradient norm
divided by the noise scale (a loose but valid bound when Poisson subsampling
is on, since subsampling only helps).

Reports are fully determined by the task seed and the run seed.  Per-step
noise and (when ``q < 1``) inclusion draws happen in a fixed order that does
not depend on the filter mode, so runs with different modes agree exactly
until the first filtering event.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .bucketing import BucketCounts, FftCache, SigmaGrid, individual_eps
from .errors import ConfigError, NonFiniteLoss, UnsupportedCombination
from .gdp import gdp_compose, gdp_eps
from .pld import GridSpec
from .rdp import DEFAULT_INT_ORDERS, RdpCurve, gaussian_rdp, rdp_to_eps, subsampled_rdp
from .pairs import SubsampledGaussianPair

__all__ = [
    "FilterMode",
    "Accountant",
    "SyntheticTask",
    "RunConfig",
    "RunReport",
    "EpsilonSummary",
    "make_task",
    "run",
    "epsilon_histogram",
    "save_report",
    "write_epsilon_csv",
]


class FilterMode:
    NONE = "none"
    GLOBAL = "global"
    INDIVIDUAL = "individual"

    _VALID = (NONE, GLOBAL, INDIVIDUAL)


class Accountant:
    RDP = "rdp"
    PLD = "pld"
    GDP = "gdp"

    _VALID = (RDP, PLD, GDP)


@dataclasses.dataclass(frozen=True)
class SyntheticTask:
    """Grouped logistic task; everything derives from the generation seed."""

    features: np.ndarray
    labels: np.ndarray
    groups: np.ndarray
    test_features: np.ndarray
    test_labels: np.ndarray
    test_groups: np.ndarray
    group_scales: np.ndarray
    true_weights: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_groups(self) -> int:
        return len(self.group_scales)


def make_task(
    seed: int,
    n_per_group: int = 60,
    n_test_per_group: int = 60,
    dim: int = 12,
    group_scales: tuple = (0.5, 0.8, 1.2, 1.8, 2.6),
    signal: float = 4.0,
) -> SyntheticTask:
    """Generate the grouped task: group g draws features at scale ``group_scales[g]``."""
    rng = np.random.default_rng(seed)
    scales = np.asarray(group_scales, dtype=float)
    true_w = rng.standard_normal(dim)
    true_w *= signal / np.linalg.norm(true_w)

    def draw(count_per_group):
        feats, labels, groups = [], [], []
        for g, scale in enumerate(scales):
            x = rng.standard_normal((count_per_group, dim)) * (scale / np.sqrt(dim))
            p = 1.0 / (1.0 + np.exp(-(x @ true_w)))
            y = (rng.random(count_per_group) < p).astype(float)
            feats.append(x)
            labels.append(y)
            groups.append(np.full(count_per_group, g))
        return np.concatenate(feats), np.concatenate(labels), np.concatenate(groups)

    x_tr, y_tr, g_tr = draw(n_per_group)
    x_te, y_te, g_te = draw(n_test_per_group)
    return SyntheticTask(
        features=x_tr,
        labels=y_tr,
        groups=g_tr,
        test_features=x_te,
        test_labels=y_te,
        test_groups=g_te,
        group_scales=scales,
        true_weights=true_w,
        seed=seed,
    )


@dataclasses.dataclass(frozen=True)
class RunConfig:
    sigma: float
    clip: float
    lr: float
    steps: int
    budget: float
    filter_mode: str = FilterMode.NONE
    q: float = 1.0

    def __post_init__(self):
        if not (self.sigma > 0 and self.clip > 0 and self.lr >= 0 and self.budget > 0):
            raise ConfigError("sigma, clip, budget must be > 0 and lr >= 0")
        if self.steps < 1:
            raise ConfigError(f"need at least one step, got {self.steps}")
        if self.filter_mode not in FilterMode._VALID:
            raise ConfigError(f"filter mode must be one of {FilterMode._VALID}")
        if not (0.0 < self.q <= 1.0):
            raise ConfigError(f"sampling rate must be in (0, 1], got {self.q}")


@dataclasses.dataclass
class RunReport:
    config: RunConfig
    run_seed: int
    task_seed: int
    groups: np.ndarray
    group_scales: np.ndarray
    mu: np.ndarray            # (steps, n) charged per-step budget spends
    clipped_norms: np.ndarray  # (steps, n) min(clip, grad norm), all examples
    active: np.ndarray         # (steps, n) post-decision active mask
    train_loss: np.ndarray     # (steps, n_groups) group-mean train loss
    test_loss: np.ndarray      # (steps, n_groups) group-mean test loss
    weights: np.ndarray
    aborted: bool = False

    @property
    def n(self) -> int:
        return self.mu.shape[1]

    @property
    def steps_completed(self) -> int:
        return self.mu.shape[0]

    @property
    def spent_sq(self) -> np.ndarray:
        return (self.mu**2).sum(axis=0)

    @property
    def active_counts(self) -> np.ndarray:
        return self.active.sum(axis=1)

    def first_filter_step(self) -> Optional[int]:
        """1-based step of the first drop, or None if nothing was filtered."""
        full = self.active.all(axis=1)
        if full.all():
            return None
        return int(np.argmin(full)) + 1


def _logistic_loss(z: np.ndarray, y: np.ndarray) -> np.ndarray:
    # softplus(z) - y z, elementwise stable
    return np.logaddexp(0.0, z) - y * z


def _group_means(values: np.ndarray, groups: np.ndarray, n_groups: int) -> np.ndarray:
    return np.array([values[groups == g].mean() for g in range(n_groups)])


def run(task: SyntheticTask, config: RunConfig, seed: int) -> RunReport:
    """Run noisy clipped-gradient descent with the configured filtering.

    Raises :class:`NonFiniteLoss` if training diverges; the partial report is
    attached to the exception as ``partial_report``.
    """
    rng = np.random.default_rng(seed)
    n, d = task.n, task.dim
    n_groups = task.n_groups
    w = np.zeros(d)

    active = np.ones(n, dtype=bool)
    spent_sq = np.zeros(n)
    global_spent_sq = 0.0

    mu_rows, norm_rows, active_rows = [], [], []
    train_rows, test_rows = [], []
    aborted = False

    for _ in range(config.steps):
        # Fixed draw order: inclusion first, then noise, independent of mode.
        if config.q < 1.0:
            included = rng.random(n) < config.q
        else:
            included = np.ones(n, dtype=bool)
        noise = rng.standard_normal(d) * config.sigma

        z = task.features @ w
        p = 1.0 / (1.0 + np.exp(-z))
        grads = (p - task.labels)[:, None] * task.features
        norms = np.linalg.norm(grads, axis=1)
        clipped_norms = np.minimum(norms, config.clip)
        scale = np.where(norms > 0.0, clipped_norms / np.maximum(norms, 1e-300), 0.0)
        clipped = grads * scale[:, None]

        proposals = clipped_norms / config.sigma
        if config.filter_mode == FilterMode.INDIVIDUAL:
            fits = np.zeros(n, dtype=bool)
            fits[active] = spent_sq[active] + proposals[active] ** 2 <= config.budget**2
            active = active & fits
        elif config.filter_mode == FilterMode.GLOBAL:
            step_mu = proposals.max(initial=0.0)
            if global_spent_sq + step_mu**2 > config.budget**2:
                break
            global_spent_sq += step_mu**2

        charged = np.where(active, proposals, 0.0)
        spent_sq += charged**2

        contributors = active & included
        total = clipped[contributors].sum(axis=0) + noise
        w = w - config.lr * total / n

        train_losses = _logistic_loss(task.features @ w, task.labels)
        test_losses = _logistic_loss(task.test_features @ w, task.test_labels)

        mu_rows.append(charged)
        norm_rows.append(clipped_norms)
        active_rows.append(active.copy())
        train_rows.append(_group_means(train_losses, task.groups, n_groups))
        test_rows.append(_group_means(test_losses, task.test_groups, n_groups))

        if not (np.all(np.isfinite(train_losses)) and np.all(np.isfinite(w))):
            aborted = True
            break

    def stack(rows, width):
        return np.asarray(rows) if rows else np.zeros((0, width))

    report = RunReport(
        config=config,
        run_seed=seed,
        task_seed=task.seed,
        groups=task.groups,
        group_scales=task.group_scales,
        mu=stack(mu_rows, n),
        clipped_norms=stack(norm_rows, n),
        active=stack(active_rows, n).astype(bool),
        train_loss=stack(train_rows, n_groups),
        test_loss=stack(test_rows, n_groups),
        weights=w,
        aborted=aborted,
    )
    if aborted:
        err = NonFiniteLoss("training diverged; partial report attached")
        err.partial_report = report
        raise err
    return report


@dataclasses.dataclass(frozen=True)
class EpsilonSummary:
    accountant: str
    delta: float
    eps: np.ndarray
    group_mean: np.ndarray


def _sigma_grid_for(report: RunReport, n_sigma: int, pld_grid: GridSpec, spread_cap: float) -> SigmaGrid:
    config = report.config
    sigma_min = config.sigma / config.clip
    charged = report.mu > 0.0
    finite = report.clipped_norms[charged]
    if finite.size:
        sigma_max = min(float(config.sigma / finite.min()), sigma_min * spread_cap)
    else:
        sigma_max = sigma_min * 2.0
    sigma_max = max(sigma_max, sigma_min * 1.0001)
    return SigmaGrid(
        sigma_min=sigma_min, sigma_max=sigma_max, n_sigma=n_sigma, q=config.q, pld_grid=pld_grid
    )


def _per_example_counts(report: RunReport, grid: SigmaGrid) -> list[BucketCounts]:
    from .bucketing import encode

    config = report.config
    out = []
    for i in range(report.n):
        charged = report.mu[:, i] > 0.0
        sigmas = config.sigma / report.clipped_norms[charged, i]
        out.append(encode(sigmas, grid))
    return out


def epsilon_histogram(
    report: RunReport,
    delta: float,
    accountant: str,
    *,
    n_sigma: int = 400,
    pld_grid: GridSpec = GridSpec(L=4.0, n=2**14),
    sigma_spread_cap: float = 16.0,
    cache: Optional[FftCache] = None,
) -> EpsilonSummary:
    """Deterministic per-example epsilon under the selected accountant.

    ``pld`` and (for ``q < 1``) ``rdp`` bucket the per-step noise ratios on a
    shared grid, rounding down, so both sides of a comparison see the same
    conservative inputs.  ``gdp`` applies only to full-batch runs.
    """
    if accountant not in Accountant._VALID:
        raise ConfigError(f"accountant must be one of {Accountant._VALID}")
    config = report.config
    n_groups = len(report.group_scales)

    if accountant == Accountant.GDP:
        if config.q < 1.0:
            raise UnsupportedCombination("the analytic Gaussian path needs q = 1")
        eps = np.array(
            [gdp_eps(gdp_compose(report.mu[:, i]), delta) for i in range(report.n)]
        )
    elif accountant == Accountant.RDP:
        if config.q == 1.0:
            eps = np.array(
                [
                    rdp_to_eps(gaussian_rdp(gdp_compose(report.mu[:, i])), delta).epsilon
                    for i in range(report.n)
                ]
            )
        else:
            grid = cache.grid if cache is not None else _sigma_grid_for(
                report, n_sigma, pld_grid, sigma_spread_cap
            )
            curves = [
                subsampled_rdp(
                    SubsampledGaussianPair(config.q, float(s)), DEFAULT_INT_ORDERS
                ).rho
                for s in grid.points()
            ]
            curve_matrix = np.stack(curves)
            eps_list = []
            for counts in _per_example_counts(report, grid):
                rho = counts.counts @ curve_matrix
                curve = RdpCurve(orders=DEFAULT_INT_ORDERS.astype(float), rho=rho)
                eps_list.append(rdp_to_eps(curve, delta).epsilon)
            eps = np.array(eps_list)
    else:
        if cache is None:
            grid = _sigma_grid_for(report, n_sigma, pld_grid, sigma_spread_cap)
            cache = FftCache(grid)
        eps = np.array(
            [individual_eps(c, cache, delta) for c in _per_example_counts(report, cache.grid)]
        )

    return EpsilonSummary(
        accountant=accountant,
        delta=delta,
        eps=eps,
        group_mean=np.array([eps[report.groups == g].mean() for g in range(n_groups)]),
    )


def save_report(report: RunReport, outdir: Union[str, Path]) -> dict:
    """Write the JSON config echo plus plot-ready CSV matrices; returns the summary."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    summary = {
        "config": dataclasses.asdict(report.config),
        "task_seed": report.task_seed,
        "run_seed": report.run_seed,
        "n": report.n,
        "steps_completed": report.steps_completed,
        "aborted": report.aborted,
        "first_filter_step": report.first_filter_step(),
        "max_spent_sq": float(report.spent_sq.max()) if report.n else 0.0,
        "active_counts": [int(c) for c in report.active_counts],
    }
    (outdir / "report.json").write_text(json.dumps(summary, indent=2) + "\n")

    k, n_groups = report.train_loss.shape
    with (outdir / "losses.csv").open("w") as fh:
        fh.write("step,group,train_loss,test_loss,active_count\n")
        for step in range(k):
            for g in range(n_groups):
                fh.write(
                    f"{step + 1},{g},{report.train_loss[step, g]!r},"
                    f"{report.test_loss[step, g]!r},{int(report.active_counts[step])}\n"
                )

    with (outdir / "mu_traces.csv").open("w") as fh:
        fh.write("example,group," + ",".join(f"step_{j + 1}" for j in range(k)) + "\n")
        for i in range(report.n):
            row = ",".join(repr(float(v)) for v in report.mu[:, i])
            fh.write(f"{i},{int(report.groups[i])},{row}\n")
    return summary


def write_epsilon_csv(report: RunReport, summary: EpsilonSummary, path: Union[str, Path]) -> None:
    """Histogram-ready per-example epsilon table."""
    with Path(path).open("w") as fh:
        fh.write("example,group,eps\n")
        for i in range(report.n):
            fh.write(f"{i},{int(report.groups[i])},{summary.eps[i]!r}\n")
