"""Command-line entry point: ``nbsgd simulate|analyze|validate|compare``."""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import runtime, validation
from .config import ConfigError, load_config
from .experiment import (
    OUT_DIR_ENV,
    fmt,
    out_dir,
    run_experiment,
    time_to_target,
    write_outputs,
)
from .optim import ConvergenceConstants, convergence_bound
from .sim import DivergenceError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_VALIDATION = 4
EXIT_TARGET = 5

ANALYZE_COLUMNS = ("P", "lambda", "E_min", "E_max", "iter_ratio", "epoch_nb", "epoch_blocking",
                   "convergence_bound")


def _err(msg: str) -> None:
    print(f"nbsgd: {msg}", file=sys.stderr)


def _simulate_one(path: str) -> tuple[int, str]:
    try:
        cfg = load_config(path)
    except ConfigError as exc:
        return EXIT_CONFIG, f"config error: {exc}"
    base = Path(path).parent
    try:
        result = run_experiment(cfg, base)
    except DivergenceError as exc:
        write_outputs(exc.result, cfg, base)
        return EXIT_DIVERGED, f"{path}: {exc}"
    except (ValueError, OSError) as exc:
        return EXIT_CONFIG, f"{path}: {exc}"
    trace, summary = write_outputs(result, cfg, base)
    return EXIT_OK, f"{path}: {len(result.records)} iterations -> {trace}, {summary}"


def cmd_simulate(args) -> int:
    if args.parallel and len(args.configs) > 1:
        with ProcessPoolExecutor() as pool:
            outcomes = list(pool.map(_simulate_one, args.configs))
    else:
        outcomes = [_simulate_one(p) for p in args.configs]
    for code, msg in outcomes:
        (print if code == EXIT_OK else _err)(msg)
    return max(code for code, _ in outcomes)


def _out_path(name: str) -> Path:
    env = os.environ.get(OUT_DIR_ENV)
    p = Path(name)
    if env and not p.is_absolute():
        p = Path(env) / p
    return p


def cmd_analyze(args) -> int:
    consts = ConvergenceConstants(lipschitz_L=args.L, grad_variance_sigma=args.sigma)
    rows = []
    try:
        for P in args.P:
            for lam in args.lam:
                rows.append([
                    P, lam,
                    runtime.expected_min_exp(lam, P),
                    runtime.expected_max_exp(lam, P),
                    runtime.iteration_time_ratio(lam, P),
                    runtime.epoch_time(lam, P, args.D, args.B, "nonblocking"),
                    runtime.epoch_time(lam, P, args.D, args.B, "blocking"),
                    convergence_bound(consts, args.f0_gap, args.K, P),
                ])
    except runtime.RangeError as exc:
        _err(f"{exc} (double-precision cap on the alternating sum)")
        return EXIT_CONFIG
    except ValueError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    if args.out:
        path = _out_path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        fh = open(path, "w", newline="")
    else:
        fh = sys.stdout
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ANALYZE_COLUMNS)
        for row in rows:
            writer.writerow([fmt(float(v)) if isinstance(v, float) else v for v in row])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        checks = validation.run_checks(args.trials, args.seed)
    except ValueError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    for c in checks:
        print(c.line())
    failed = [c for c in checks if not c.passed]
    if failed:
        _err(f"{len(failed)} check(s) failed: " + "; ".join(c.name for c in failed))
        return EXIT_VALIDATION
    print(f"all {len(checks)} checks passed")
    return EXIT_OK


def _run_for_compare(path: str):
    cfg = load_config(path)
    return cfg, run_experiment(cfg, Path(path).parent, raise_on_divergence=False)


def cmd_compare(args) -> int:
    try:
        cfg_a, cfg_b = load_config(args.a), load_config(args.b)
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    if cfg_a.problem != cfg_b.problem or cfg_a.seeds != cfg_b.seeds:
        _err("compare needs configs with identical problem and seeds")
        return EXIT_CONFIG
    try:
        if args.parallel:
            with ProcessPoolExecutor(max_workers=2) as pool:
                (_, res_a), (_, res_b) = pool.map(_run_for_compare, [args.a, args.b])
        else:
            (_, res_a), (_, res_b) = _run_for_compare(args.a), _run_for_compare(args.b)
    except (ValueError, OSError) as exc:
        _err(str(exc))
        return EXIT_CONFIG

    target = args.target_loss
    if target is None:
        fstar = res_a.cluster.problem.optimum_value
        target = fstar + args.target_gap * (res_a.initial_loss - fstar)

    times = {}
    directory = out_dir(cfg_a, Path(args.a).parent)
    directory.mkdir(parents=True, exist_ok=True)
    for label, cfg, res in (("a", cfg_a, res_a), ("b", cfg_b, res_b)):
        path = directory / f"{cfg.output.name}_time_loss.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["sim_time", "loss"])
            writer.writerow([fmt(0.0), fmt(res.initial_loss)])
            for r in res.records:
                writer.writerow([fmt(r.sim_time), fmt(r.loss_global)])
        times[label] = time_to_target([r.sim_time for r in res.records],
                                      [r.loss_global for r in res.records],
                                      target, start=(0.0, res.initial_loss))
        reached = "never" if times[label] is None else fmt(times[label])
        print(f"{label}: {cfg.output.name} time_to_target={reached} -> {path}")
    print(f"target_loss={fmt(target)}")
    missing = [k for k, v in times.items() if v is None]
    if missing:
        for label, res in (("a", res_a), ("b", res_b)):
            if label in missing:
                best = min([r.loss_global for r in res.records], default=res.initial_loss)
                _err(f"run {label} never reached target {fmt(target)}; best loss {fmt(best)}")
        return EXIT_TARGET
    ratio = times["a"] / times["b"] if times["b"] > 0 else float("inf")
    print(f"ratio (a/b)={fmt(ratio)}")
    return EXIT_OK


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.replace(",", " ").split()]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nbsgd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run experiment config(s), write CSV trace + JSON summary")
    p.add_argument("configs", nargs="+", metavar="config.json")
    p.add_argument("--parallel", action="store_true", help="run several configs concurrently")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="closed-form runtime table over a (P, lambda) grid")
    p.add_argument("--P", type=int, nargs="+", required=True)
    p.add_argument("--lambda", dest="lam", type=float, nargs="+", required=True)
    p.add_argument("--D", type=int, required=True)
    p.add_argument("--B", type=int, required=True)
    p.add_argument("--K", type=int, default=100, help="iterations for the convergence bound")
    p.add_argument("--L", type=float, default=1.0, help="Lipschitz constant for the bound")
    p.add_argument("--sigma", type=float, default=1.0, help="gradient noise for the bound")
    p.add_argument("--f0-gap", dest="f0_gap", type=float, default=1.0, help="f(x0) - f*")
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("validate", help="Monte Carlo checks of the closed forms")
    p.add_argument("--trials", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("compare", help="time-to-target-loss of two runs")
    p.add_argument("a", metavar="a.json")
    p.add_argument("b", metavar="b.json")
    target = p.add_mutually_exclusive_group(required=True)
    target.add_argument("--target-loss", type=float)
    target.add_argument("--target-gap", type=float,
                        help="target = f* + gap * (f(x0) - f*) instead of an absolute loss")
    p.add_argument("--parallel", action="store_true")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
