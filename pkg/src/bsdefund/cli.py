"""Batch command line: ``bsdefund <command> --config run.toml [--out DIR] [--seed N]``.

Exit codes: 0 success, 1 domain or invariant failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .bsde import BsdeProblem, compare_solutions, ordering_violations, solve_backward
from .config import RunConfig, load_config
from .errors import BsdeFundError, InvalidConfigError
from .market import fmt, simulate_paths, validate
from .pricing import (discounted_driver, fair_interval, plain_mc_price, price_counterparty,
                      price_hedger, replay_wealth, replicating_strategy)

COMMANDS = ("validate", "price", "bounds", "strategy", "compare", "selftest")


class DomainFailure(Exception):
    """Raised by a command to exit with status 1."""


def _write(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _require_valid(cfg: RunConfig):
    report = validate(cfg.model)
    if not report.ok:
        names = ", ".join(c.name for c in report.failures())
        raise DomainFailure(f"market validation failed: {names}")


def _check_diagnostics(label, result):
    failed = result.solution.diagnostics.failed_steps
    if failed:
        raise DomainFailure(f"{label} regression ill-conditioned at step {failed[0]}")


def cmd_validate(cfg: RunConfig, out: Path) -> int:
    report = validate(cfg.model)
    for line in report.lines():
        print(line)
    if not report.ok:
        for c in report.failures():
            print(f"violated: {c.name}")
        return 1
    return 0


def cmd_price(cfg: RunConfig, out: Path) -> int:
    _require_valid(cfg)
    paths = simulate_paths(cfg.model, cfg.grid, cfg.n_paths, cfg.seed)
    args = (cfg.model, cfg.contract)
    rest = (cfg.grid, cfg.n_paths, cfg.seed, cfg.basis, cfg.picard_iters, paths)
    hedger = price_hedger(*args, cfg.x1, *rest)
    counter = price_counterparty(*args, cfg.x2, *rest)
    _check_diagnostics("hedger", hedger)
    _check_diagnostics("counterparty", counter)
    oracle, oracle_se = plain_mc_price(cfg.model, cfg.contract, paths)

    rows = []
    for k, t in enumerate(cfg.grid.times):
        ph, pc = hedger.price_paths[:, k], counter.price_paths[:, k]
        if k == 0:
            se = np.hypot(hedger.stderr, counter.stderr)
        else:
            se = np.hypot(ph.std(ddof=1), pc.std(ddof=1)) / np.sqrt(paths.n_paths)
        rows.append([fmt(t), fmt(ph.mean()), fmt(pc.mean()), fmt(se)])
    _write(out / "prices.csv", ["t", "P_h", "P_c", "stderr"], rows)

    print(f"hedger       P^h_0 = {hedger.p0:.6f} +/- {hedger.stderr:.6f}  (x1 = {cfg.x1})")
    print(f"counterparty P^c_0 = {counter.p0:.6f} +/- {counter.stderr:.6f}  (x2 = {cfg.x2})")
    print(f"plain MC (lending rate) = {oracle:.6f} +/- {oracle_se:.6f}")
    print(f"interval ordered: {str(counter.p0 <= hedger.p0 + 3 * np.hypot(hedger.stderr, counter.stderr)).lower()}")
    print(f"wrote {out / 'prices.csv'}")
    return 0


def cmd_bounds(cfg: RunConfig, out: Path) -> int:
    _require_valid(cfg)
    fi = fair_interval(cfg.model, cfg.contract, cfg.x1, cfg.x2, cfg.grid, cfg.n_paths, cfg.seed,
                       cfg.basis, cfg.picard_iters)
    _write(out / "bounds.csv",
           ["x1", "x2", "p_counterparty", "p_hedger", "mc_stderr", "nonempty", "min_pathwise_gap"],
           [[fmt(cfg.x1), fmt(cfg.x2), fmt(fi.p_counterparty), fmt(fi.p_hedger), fmt(fi.mc_stderr),
             str(fi.nonempty).lower(), fmt(fi.min_pathwise_gap)]])
    print(f"fair interval: [{fi.p_counterparty:.6f}, {fi.p_hedger:.6f}] +/- {fi.mc_stderr:.6f}")
    print(f"nonempty: {str(fi.nonempty).lower()}")
    print(f"min pathwise P^h - P^c: {fi.min_pathwise_gap:.6f}")
    return 0 if fi.nonempty else 1


def cmd_strategy(cfg: RunConfig, out: Path) -> int:
    _require_valid(cfg)
    paths = simulate_paths(cfg.model, cfg.grid, cfg.n_paths, cfg.seed)
    hedger = price_hedger(cfg.model, cfg.contract, cfg.x1, cfg.grid, cfg.n_paths, cfg.seed,
                          cfg.basis, cfg.picard_iters, paths)
    strat = replicating_strategy(hedger.solution, cfg.model, cfg.contract, cfg.x1, paths, cfg.basis)
    bad = strat.violations()
    if not np.array_equal(strat.xi, hedger.solution.z):
        bad.append("xi != Z")
    replay = replay_wealth(strat, cfg.model, cfg.contract, paths, cfg.basis)

    d = cfg.model.d
    header = (["t", "path"] + [f"xi_{i + 1}" for i in range(d)] + ["psi_l", "psi_b"]
              + [f"psi_{i + 1}_b" for i in range(d)] + ["eta_b", "eta_l"])
    rows = []
    for p in range(min(cfg.export_paths, paths.n_paths)):
        for k in range(cfg.grid.n_steps):
            rows.append([fmt(cfg.grid.times[k]), p] + [fmt(v) for v in strat.xi[p, k]]
                        + [fmt(strat.psi_l[p, k]), fmt(strat.psi_b[p, k])]
                        + [fmt(v) for v in strat.psi_ib[p, k]]
                        + [fmt(strat.eta_b[p, k]), fmt(strat.eta_l[p, k])])
    _write(out / "strategy.csv", header, rows)
    print(f"hedger P^h_0 = {hedger.p0:.6f}; strategy exported for {min(cfg.export_paths, paths.n_paths)} paths")
    print(f"replay: mean terminal wealth {replay.terminal_wealth.mean():.6f} vs target "
          f"{replay.target_terminal.mean():.6f}; terminal RMS drift {replay.rms_by_step[-1]:.6f}")
    if bad:
        print("strategy invariant violations: " + ", ".join(bad))
        return 1
    print("strategy invariants: ok")
    return 0


def cmd_compare(cfg: RunConfig, out: Path) -> int:
    _require_valid(cfg)
    paths = simulate_paths(cfg.model, cfg.grid, cfg.n_paths, cfg.seed)
    opts = cfg.compare
    gen2 = cfg.build_generator()
    gen1 = gen2.plus(opts.generator_offset)
    u2 = discounted_driver(cfg.contract, paths, cfg.basis)
    u1 = u2 - opts.driver_drift * cfg.grid.dt
    low = BsdeProblem.build(gen2, paths, 0.0, u2)
    high = BsdeProblem.build(gen1, paths, opts.terminal_gap, u1)
    sol1 = solve_backward(high, cfg.basis, cfg.picard_iters)
    sol2 = solve_backward(low, cfg.basis, cfg.picard_iters)
    unordered = ordering_violations(high, low, sol2)
    if unordered:
        raise DomainFailure("comparison hypotheses fail: " + "; ".join(unordered))
    tol = opts.tol_stderrs * max(sol1.y0_stderr, sol2.y0_stderr)
    report = compare_solutions(sol1, sol2, tol)
    gap = sol1.y - sol2.y
    _write(out / "compare.csv", ["t", "mean_y1", "mean_y2", "min_gap"],
           [[fmt(t), fmt(sol1.y[:, k].mean()), fmt(sol2.y[:, k].mean()), fmt(gap[:, k].min())]
            for k, t in enumerate(cfg.grid.times)])
    print(f"y1_0 = {sol1.y0:.6f} +/- {sol1.y0_stderr:.6f}; y2_0 = {sol2.y0:.6f} +/- {sol2.y0_stderr:.6f}")
    print(f"min gap {report.min_gap:.6g} at (path, step) {report.worst}; tolerance {tol:.6g}")
    print(f"violations: {report.violations} of {report.n_points}")
    return 0 if report.violations == 0 else 1


def cmd_selftest(cfg, out: Path) -> int:
    from .selftest import run_selftest
    results = run_selftest()
    for r in results:
        print(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: {r.detail}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print("failures: " + ", ".join(failed))
        return 1
    print(f"all {len(results)} checks passed")
    return 0


HANDLERS = {
    "validate": cmd_validate, "price": cmd_price, "bounds": cmd_bounds,
    "strategy": cmd_strategy, "compare": cmd_compare, "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bsdefund", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, help="TOML run configuration")
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory for CSV files")
    parser.add_argument("--seed", type=int, default=None, help="override the configured seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = None
        if args.command != "selftest":
            if args.config is None:
                raise InvalidConfigError(f"{args.command} requires --config")
            cfg = load_config(args.config, args.seed)
        args.out.mkdir(parents=True, exist_ok=True)
    except (InvalidConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return HANDLERS[args.command](cfg, args.out)
    except DomainFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BsdeFundError as exc:
        step = getattr(exc, "step", None)
        where = f" (step {step})" if step is not None else ""
        print(f"error{where}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
