"""Command-line front end.

Every subcommand is a thin shell around one library call and prints the
result as JSON (default) or CSV on stdout.  Errors go to stderr with exit
code 2 for usage problems, 3 for numeric-domain errors, and 4 for cache I/O
problems.  ``ACCT_CACHE_DIR`` sets the default location for persisted FFT
caches.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import compositions, harness
from .bucketing import FftCache, SigmaGrid, default_eps_table, encode, individual_eps
from .errors import CacheFormatError, DpacctError
from .filters import approx_filter_eps, individual_filter_run
from .gdp import gdp_compose, gdp_delta, gdp_eps
from .pairs import Direction
from .pld import GridSpec, Rounding

EXIT_USAGE = 2
EXIT_DOMAIN = 3
EXIT_CACHE = 4


def _emit(result: dict, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(result))
    else:
        keys = list(result)
        print(",".join(keys))
        print(",".join(_csv_cell(result[k]) for k in keys))


def _csv_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return '"' + json.dumps(value).replace('"', '""') + '"'
    return str(value)


def _grid_args(parser: argparse.ArgumentParser, bits_default: int = 17) -> None:
    parser.add_argument("--grid-bits", type=int, default=bits_default, help="log2 of the grid size")
    parser.add_argument("--grid-width", type=float, default=20.0, help="half-width L of the loss grid")


def _grid_from(args) -> GridSpec:
    return GridSpec(L=args.grid_width, n=2**args.grid_bits)


def _cache_dir() -> Path:
    return Path(os.environ.get("ACCT_CACHE_DIR", "."))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpacct", description="Differential privacy accounting toolkit")
    parser.add_argument("--format", choices=("json", "csv"), default="json")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gdp-delta", help="analytic Gaussian-DP delta(eps)")
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--eps", type=float, required=True)

    p = sub.add_parser("gdp-eps", help="analytic Gaussian-DP eps(delta)")
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)

    p = sub.add_parser("compose", help="root-sum-of-squares GDP composition")
    p.add_argument("--mu", type=float, action="append", required=True)

    p = sub.add_parser("pld-delta", help="delta of a k-fold subsampled Gaussian composition")
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--direction", choices=compositions.DIRECTION_CHOICES, default="max")
    p.add_argument("--rounding", choices=Rounding._VALID, default=Rounding.CENTER)
    _grid_args(p)

    p = sub.add_parser("pld-eps", help="eps of a k-fold subsampled Gaussian composition")
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--direction", choices=compositions.DIRECTION_CHOICES, default="max")
    p.add_argument("--rounding", choices=Rounding._VALID, default=Rounding.CENTER)
    p.add_argument("--cache", type=str, default=None, help="reuse a persisted FFT cache (quantizes sigma)")
    _grid_args(p)

    p = sub.add_parser("fit-mu", help="Gaussian envelope dominating a composition")
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--delta", type=float, default=None, help="also convert the fit to epsilon")
    p.add_argument("--direction", choices=(Direction.ADD, Direction.REMOVE), default=Direction.ADD)
    p.add_argument("--rounding", choices=Rounding._VALID, default=Rounding.UP)
    _grid_args(p)

    p = sub.add_parser("filter-sim", help="simulate the per-individual budget filter")
    p.add_argument("--budget", type=float, required=True)
    p.add_argument("--mu", type=float, default=None, help="constant proposal for every individual")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--mu-file", type=str, default=None, help="JSON file with a steps x n matrix under key 'mu'")
    p.add_argument("--transcript", type=str, default=None, help="write the JSONL transcript here")

    p = sub.add_parser("harness", help="run the synthetic private-GD harness")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--task-seed", type=int, default=None, help="defaults to --seed")
    p.add_argument("--outdir", type=str, required=True)
    p.add_argument("--sigma", type=float, default=8.0)
    p.add_argument("--clip", type=float, default=1.0)
    p.add_argument("--lr", type=float, default=4.0)
    p.add_argument("--steps", type=int, default=150)
    p.add_argument("--budget", type=float, required=True)
    p.add_argument("--filter", choices=harness.FilterMode._VALID, default=harness.FilterMode.NONE)
    p.add_argument("--q", type=float, default=1.0)
    p.add_argument("--n-per-group", type=int, default=60)
    p.add_argument("--dim", type=int, default=12)
    p.add_argument("--delta", type=float, default=1e-5)
    p.add_argument("--accountant", choices=harness.Accountant._VALID, default=None,
                   help="also write per-example epsilons under this accountant")

    p = sub.add_parser("build-cache", help="precompute and persist an FFT cache")
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--sigma-min", type=float, required=True)
    p.add_argument("--sigma-max", type=float, required=True)
    p.add_argument("--buckets", type=int, default=50)
    p.add_argument("--rounding", choices=Rounding._VALID, default=Rounding.UP)
    p.add_argument("--direction", choices=(Direction.ADD, Direction.REMOVE), default=Direction.ADD)
    p.add_argument("--eps-size", type=int, default=256)
    p.add_argument("--out", type=str, default=None, help="defaults under ACCT_CACHE_DIR")
    _grid_args(p, bits_default=14)

    return parser


def _run_filter_sim(args) -> dict:
    if args.mu_file is not None:
        payload = json.loads(Path(args.mu_file).read_text())
        matrix = np.asarray(payload["mu"], dtype=float)
        if matrix.ndim != 2:
            raise DpacctError("mu matrix must be two-dimensional (steps x n)")
    else:
        if args.mu is None or args.steps is None:
            raise DpacctError("need either --mu-file or both --mu and --steps")
        matrix = np.full((args.steps, args.n), args.mu, dtype=float)
    steps, n = matrix.shape
    transcript = individual_filter_run(n, steps, args.budget, lambda j, active: matrix[j - 1])
    if args.transcript:
        with Path(args.transcript).open("w") as fh:
            transcript.to_jsonl(fh)
    return {
        "n": n,
        "budget": args.budget,
        "steps": steps,
        "active_steps": [transcript.active_steps(i) for i in range(n)],
        "final_spent_sq": [float(v) for v in transcript.final_spent_sq],
    }


def _run_harness(args) -> dict:
    task_seed = args.seed if args.task_seed is None else args.task_seed
    task = harness.make_task(task_seed, n_per_group=args.n_per_group, dim=args.dim)
    config = harness.RunConfig(
        sigma=args.sigma,
        clip=args.clip,
        lr=args.lr,
        steps=args.steps,
        budget=args.budget,
        filter_mode=args.filter,
        q=args.q,
    )
    report = harness.run(task, config, args.seed)
    summary = harness.save_report(report, args.outdir)
    if args.accountant is not None:
        eps_summary = harness.epsilon_histogram(report, args.delta, args.accountant)
        harness.write_epsilon_csv(report, eps_summary, Path(args.outdir) / "epsilons.csv")
        summary["epsilon_group_mean"] = [float(v) for v in eps_summary.group_mean]
        summary["accountant"] = args.accountant
        summary["delta"] = args.delta
    return summary


def _run_build_cache(args) -> dict:
    grid = SigmaGrid(
        sigma_min=args.sigma_min,
        sigma_max=args.sigma_max,
        n_sigma=args.buckets,
        q=args.q,
        pld_grid=_grid_from(args),
    )
    cache = FftCache(
        grid,
        rounding=args.rounding,
        direction=args.direction,
        eps_table=default_eps_table(size=args.eps_size, hi=args.grid_width),
    )
    if args.out is not None:
        out = Path(args.out)
    else:
        name = f"cache_q{args.q}_s{args.sigma_min}-{args.sigma_max}_b{args.buckets}_n{grid.pld_grid.n}.dpfc"
        out = _cache_dir() / name
    out.parent.mkdir(parents=True, exist_ok=True)
    cache.save(out)
    return {
        "path": str(out),
        "q": args.q,
        "sigma_min": args.sigma_min,
        "sigma_max": args.sigma_max,
        "buckets": args.buckets,
        "grid_n": grid.pld_grid.n,
        "grid_width": grid.pld_grid.L,
        "eps_table_size": args.eps_size,
        "bytes": out.stat().st_size,
    }


def _dispatch(args) -> dict:
    cmd = args.command
    if cmd == "gdp-delta":
        return {"delta": float(gdp_delta(args.mu, args.eps))}
    if cmd == "gdp-eps":
        return {"epsilon": gdp_eps(args.mu, args.delta)}
    if cmd == "compose":
        return {"mu": gdp_compose(args.mu)}
    if cmd == "pld-delta":
        return {
            "delta": compositions.pld_delta(
                args.q, args.sigma, args.steps, args.eps,
                grid=_grid_from(args), rounding=args.rounding, direction=args.direction,
            )
        }
    if cmd == "pld-eps":
        if args.cache is not None:
            cache = FftCache.load(args.cache)
            counts = encode(np.full(args.steps, args.sigma), cache.grid)
            return {"epsilon": individual_eps(counts, cache, args.delta)}
        return {
            "epsilon": compositions.pld_epsilon(
                args.q, args.sigma, args.steps, args.delta,
                grid=_grid_from(args), rounding=args.rounding, direction=args.direction,
            )
        }
    if cmd == "fit-mu":
        mu = compositions.fit_mu(
            args.q, args.sigma, args.steps,
            grid=_grid_from(args), rounding=args.rounding, direction=args.direction,
        )
        result = {"mu": mu}
        if args.delta is not None:
            result["epsilon"] = approx_filter_eps(mu, args.delta)
        return result
    if cmd == "filter-sim":
        return _run_filter_sim(args)
    if cmd == "harness":
        return _run_harness(args)
    if cmd == "build-cache":
        return _run_build_cache(args)
    raise DpacctError(f"unknown command {cmd!r}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        result = _dispatch(args)
    except CacheFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CACHE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CACHE if args.command in ("build-cache", "pld-eps") else EXIT_DOMAIN
    except DpacctError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    _emit(result, args.format)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
