"""Command-line entry point: ``avgspde <subcommand> [--config PATH] ...``.

Exit codes: 0 success, 1 simulation failure, 2 invalid configuration or
violated model hypotheses, 3 inconclusive result.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .averaging import estimate_fbar_ergodic, fit_exponential_decay, mixing_gap_curve
from .errors import (
    ConfigError,
    EstimationError,
    HypothesisViolation,
    InconclusiveResultError,
    InvalidArgumentError,
    SimulationError,
    UnsupportedOperationError,
)
from .experiments import (
    benchmark_config,
    load_config,
    resolve_threads,
    run_weak_order,
    write_csv,
)
from .integrators import simulate_pair
from .models import fbar_linear_coefficients, validate_hypotheses
from .noise import NoiseStream, ProcessTag
from .oracle import expansion_residual_study

EXIT_OK, EXIT_SIM, EXIT_INVALID, EXIT_INCONCLUSIVE = 0, 1, 2, 3


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON experiment config (default: built-in benchmark)")
    common.add_argument("--seed", type=_u64, default=argparse.SUPPRESS, help="master seed, overrides sim.seed")
    common.add_argument("--out", default=argparse.SUPPRESS, help="CSV output path (default: stdout)")
    common.add_argument("--mode", choices=("mc", "gaussian"), default=argparse.SUPPRESS)
    common.add_argument("--threads", type=_positive, default=argparse.SUPPRESS, help="worker threads (env AVGSPDE_THREADS)")

    parser = argparse.ArgumentParser(prog="avgspde", parents=[common], description="Slow-fast SPDE averaging experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sim = sub.add_parser("simulate", parents=[common], help="terminal coupled and averaged fields of one sample")
    sim.add_argument("--sample", type=int, default=0, help="sample index (default 0)")
    sub.add_parser("fbar", parents=[common], help="ergodic averaged drift vs closed form at x0")
    sub.add_parser("mixing", parents=[common], help="mixing gap curve of the frozen process and its decay rate")
    sub.add_parser("weak-order", parents=[common], help="weak error against eps and fitted order")
    sub.add_parser("expansion", parents=[common], help="(u^eps - ubar)/eps table from the Gaussian oracle")
    return parser


def _emit(text: str, out: str | None, summary: list[str]) -> None:
    # metadata never goes into the CSV, so the file is comparable byte for byte
    if out is None:
        sys.stdout.write(text)
        for line in summary:
            print(line, file=sys.stderr)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)
        for line in summary:
            print(line)


def _cmd_simulate(cfg, args, threads):
    params = cfg.sim
    validate_hypotheses(cfg.model, params.n).require()
    res = simulate_pair(cfg.model, params, [args.sample], cfg.x0_array, cfg.y0_array)
    rows = [(k + 1, res.x[0, k], res.y[0, k], res.xbar[0, k]) for k in range(params.n)]
    text = write_csv(("mode", "x", "y", "xbar"), [(str(r[0]),) + r[1:] for r in rows])
    return text, [f"eps={params.epsilon:g} steps={res.steps} h={res.h:.6g} sample={args.sample}"]


def _cmd_fbar(cfg, args, threads):
    n = cfg.sim.n
    validate_hypotheses(cfg.model, n).require()
    stream = NoiseStream(cfg.sim.seed, np.arange(cfg.ergodic.replicas), ProcessTag.AUX)
    est, se = estimate_fbar_ergodic(cfg.model, cfg.x0_array, cfg.ergodic, stream)
    closed = None
    if cfg.model.is_linear:
        slope, offset = fbar_linear_coefficients(cfg.model, n)
        closed = slope * cfg.x0_array + offset
    rows = []
    for k in range(n):
        rows.append((str(k + 1), est[k], se[k], None if closed is None else closed[k]))
    text = write_csv(("mode", "ergodic", "stderr", "closed_form"), rows)
    summary = []
    if closed is not None:
        summary.append(f"max_abs_diff={float(np.max(np.abs(est - closed))):.3g}")
    return text, summary


def _cmd_mixing(cfg, args, threads):
    mc = cfg.mixing
    report = validate_hypotheses(cfg.model, cfg.sim.n).require()
    fbar = None
    if not cfg.model.is_linear:
        stream = NoiseStream(cfg.sim.seed, np.arange(cfg.ergodic.replicas), ProcessTag.AUX)
        fbar = estimate_fbar_ergodic(cfg.model, cfg.x0_array, cfg.ergodic, stream)[0]
    stream = NoiseStream(cfg.sim.seed, np.arange(mc.M), ProcessTag.W2)
    curve = mixing_gap_curve(cfg.model, cfg.x0_array, cfg.y0_array, mc.t_grid, mc.M, mc.h, stream, fbar)
    text = write_csv(("t", "gap", "stderr"), curve.rows())
    fit = fit_exponential_decay(curve)
    return text, [f"rate={fit.rate:.3f} beta={report.beta:.3f} points={fit.points}"]


def _cmd_weak_order(cfg, args, threads):
    report = run_weak_order(cfg, threads=threads)
    meta = " ".join(f"{k}={v}" for k, v in report.metadata.items())
    return report.csv(), [report.summary(), meta], report


def _cmd_expansion(cfg, args, threads):
    validate_hypotheses(cfg.model, cfg.sim.n).require()
    rows = expansion_residual_study(cfg.model, cfg.eps_grid, cfg.sim.T, cfg.x0_array, cfg.y0_array, cfg.phi)
    text = write_csv(("eps", "diff", "scaled_diff"), [(r.eps, r.diff, r.scaled) for r in rows])
    return text, []


COMMANDS = {
    "simulate": _cmd_simulate,
    "fbar": _cmd_fbar,
    "mixing": _cmd_mixing,
    "weak-order": _cmd_weak_order,
    "expansion": _cmd_expansion,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = getattr(args, "out", None)
    try:
        path = getattr(args, "config", None)
        cfg = load_config(path) if path is not None else benchmark_config()
        cfg = cfg.with_overrides(seed=getattr(args, "seed", None), mode=getattr(args, "mode", None))
        out = out or cfg.output
        threads = resolve_threads(getattr(args, "threads", None))
        result = COMMANDS[args.command](cfg, args, threads)
        text, summary = result[0], result[1]
        _emit(text, out, summary)
        if len(result) > 2 and not result[2].conclusive:
            print("error: no order could be fitted (rows at or below the noise floor)", file=sys.stderr)
            return EXIT_INCONCLUSIVE
        return EXIT_OK
    except HypothesisViolation as exc:
        print(f"error: {exc}\n{exc.report.summary()}", file=sys.stderr)
        return EXIT_INVALID
    except (ConfigError, InvalidArgumentError, UnsupportedOperationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (InconclusiveResultError, EstimationError) as exc:
        print(f"inconclusive: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    except SimulationError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
