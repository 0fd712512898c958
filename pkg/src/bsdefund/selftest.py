"""Reduced-scale oracle checks behind ``bsdefund selftest``."""

from __future__ import annotations

import time
from typing import Callable, NamedTuple

import numpy as np

from .bsde import (BasisConfig, BsdeProblem, compare_solutions, solve_backward, solve_linear_density,
                   stability_probe)
from .errors import BsdeFundError
from .generators import (Generator, certify_uniform_m_lipschitz, certify_uniform_X_lipschitz, delta_lemma,
                         f_l, f_tilde_l)
from .linalg import ellipticity_constant, mat_inv_sqrt, mat_sqrt, sym_eig
from .market import MarketModel, TimeGrid, m_times_m_star, market_price_of_risk, simulate_paths, validate
from .pricing import (CashFlow, Contract, discounted_driver, fair_interval, plain_mc_price, price_hedger,
                      replay_wealth, replicating_strategy)


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str


_CHECKS: list[tuple[str, Callable]] = []


def check(name):
    def register(fn):
        _CHECKS.append((name, fn))
        return fn
    return register


def one_asset(rates=(0.01, 0.01, 0.01), sigma=0.2, kappa=0.0, mu=0.05) -> MarketModel:
    r_l, r_b, r_ib = rates
    return MarketModel(1, 1.0, [100.0], [mu], [[sigma]], [kappa], r_l, r_b, [r_ib])


def _close(a, b, tol):
    return bool(np.max(np.abs(np.asarray(a, float) - np.asarray(b, float))) <= tol)


@check("sym_eig examples")
def _eig():
    w, v = sym_eig([[2.0, 1.0], [1.0, 2.0]])
    w2, _ = sym_eig(np.diag([4.0, 9.0]))
    ok = _close(w, [3, 1], 1e-12) and _close(w2, [9, 4], 1e-12) and _close(v @ v.T, np.eye(2), 1e-12)
    return ok, f"eigenvalues {w}"


@check("mat_sqrt / mat_inv_sqrt examples")
def _sqrt():
    a = np.array([[2.0, 1.0], [1.0, 2.0]])
    r = mat_sqrt(a).entries
    ri = mat_inv_sqrt(a).entries
    ok = (_close(r @ r, a, 1e-10) and _close(mat_sqrt(np.diag([4.0, 9.0])).entries, np.diag([2, 3]), 1e-12)
          and _close(ri @ r, np.eye(2), 1e-8))
    return ok, f"sqrt entries {r[0, 0]:.12f}, {r[0, 1]:.12f}"


@check("ellipticity constant")
def _ell():
    v = ellipticity_constant(np.diag([0.2, 0.4]))
    sing = ellipticity_constant([[0.2, 0.2], [0.2, 0.2]])
    return abs(v - 0.04) < 1e-14 and sing == 0.0, f"{v}, singular {sing}"


@check("market validation and price of risk")
def _market():
    m = MarketModel(1, 1.0, [100.0], [0.07], [[0.2]], [0.02], 0.01, 0.03, [0.02])
    rep = validate(m)
    bad = validate(one_asset((0.05, 0.03, 0.05)))
    a = market_price_of_risk(m)
    ok = rep.ok and abs(rep["ellipticity"].value - 0.04) < 1e-14 and not bad.ok and _close(a, [0.4], 1e-12)
    return ok, f"a = {a}"


@check("m m* scaling")
def _mm():
    m = one_asset()
    base = m_times_m_star(m, 1.0, [100.0])[0, 0]
    ok = abs(base - 400.0) < 1e-9 and m_times_m_star(m, 1.0, [200.0])[0, 0] == 4 * base
    ok = ok and m_times_m_star(m, 2.0, [100.0])[0, 0] == base / 4
    return ok, f"{base}"


@check("deterministic limit of the path simulation")
def _paths_det():
    m = one_asset(sigma=0.0)
    p = simulate_paths(m, TimeGrid(10, 1.0), 3, 1)
    ok = _close(p.s[:, :, 0], 100 * np.exp(0.01 * p.grid.times), 1e-10) and np.all(p.dm == 0)
    return ok, "S = s0 exp(r t)"


@check("martingale property of discounted cumulative prices")
def _paths_mart():
    m = one_asset(kappa=0.02)
    p = simulate_paths(m, TimeGrid(5, 1.0), 20000, 2)
    x = p.disc_l[-1] * p.s[:, -1, 0] * np.exp(0.02)
    z = (x.mean() - 100.0) / (x.std() / np.sqrt(x.size))
    return abs(z) < 3, f"z-score {z:.2f}"


@check("funding driver examples")
def _fl():
    m = MarketModel(1, 1.0, [100.0], [0.05], [[0.2]], [0.0], 0.01, 0.03, [0.02])
    v = f_l(0.0, -5.0, [0.1], [100.0], m)
    vt = f_tilde_l(0.0, -5.0, [0.1], [100.0], 1.0, m)
    dl = delta_lemma(0.0, 7.0, [0.0], 0.0, 0.0, [100.0], 1.0, m)
    return _close([v, vt, dl], [-0.25, -0.20, -0.14], 1e-12), f"{v}, {vt}, {dl}"


@check("lemma: delta <= 0 on random samples")
def _lemma():
    rng = np.random.default_rng(5)
    m = MarketModel(2, 1.0, [100.0, 50.0], [0.05, 0.05], np.diag([0.2, 0.3]), [0, 0], 0.01, 0.03, [0.02, 0.025])
    n = 20000
    y = 50 * rng.standard_normal(n)
    z = rng.standard_normal((n, 2))
    s = m.s0 * np.exp(0.3 * rng.standard_normal((n, 2)))
    bank = rng.uniform(1.0, np.exp(0.01), n)
    x1, x2 = rng.exponential(10, n), rng.exponential(10, n)
    v = delta_lemma(0.0, y, z, x1, x2, s, bank, m)
    scale = np.abs(y) + x1 + x2 + np.abs(z * s).sum(axis=1)
    return bool(np.all(v <= 1e-12 * scale)), f"max {v.max():.3e}"


@check("Lipschitz certificates")
def _lip():
    m = MarketModel(1, 1.0, [100.0], [0.05], [[0.2]], [0.0], 0.01, 0.03, [0.02])
    gx = certify_uniform_X_lipschitz(Generator.funding(m), 20000, 1)
    gm = certify_uniform_m_lipschitz(Generator.funding(m), m, 20000, 2)
    g0 = certify_uniform_X_lipschitz(Generator.zero(), 100, 3)
    single = certify_uniform_X_lipschitz(Generator.funding(one_asset()), 5000, 4)
    ok = gx.passed and gm.passed and g0.passed and g0.empirical_constant == 0 and single.empirical_constant <= 0.01
    return ok, f"X {gx.empirical_constant:.4f}, m {gm.empirical_constant:.4f}"


@check("solver: constant terminal, zero generator")
def _const():
    m = one_asset()
    p = simulate_paths(m, TimeGrid(10, 1.0), 4000, 3)
    sol = solve_backward(BsdeProblem.build(Generator.zero(), p, 3.0))
    return bool(np.all(np.abs(sol.y - 3.0) < 1e-12) and np.abs(sol.z).max() < 1e-10), f"y0 {sol.y0}"


@check("solver: linear ODE closed form")
def _ode():
    m = one_asset()
    exact = 1.2 * np.exp(0.5) - 0.2
    errs = []
    for n in (25, 50):
        p = simulate_paths(m, TimeGrid(n, 1.0), 2000, 4)
        sol = solve_backward(BsdeProblem.build(Generator.linear(0.5, [0.0], 0.1, m), p, 1.0))
        errs.append(abs(sol.y0 - exact) / exact)
    return errs[1] < errs[0] and errs[1] < 5e-3, f"relative errors {errs}"


@check("density oracle agrees with the backward solver")
def _density():
    m = one_asset()
    p = simulate_paths(m, TimeGrid(20, 1.0), 10000, 5)
    prob = BsdeProblem.build(Generator.linear(0.2, [0.3], 0.05, m), p, lambda s: np.maximum(s[:, 0] - 100, 0))
    a = solve_backward(prob, BasisConfig(3))
    b = solve_linear_density(prob, BasisConfig(3))
    z = (a.y0 - b.y0) / np.hypot(a.y0_stderr, b.y0_stderr)
    return abs(z) < 3, f"{a.y0:.4f} vs {b.y0:.4f} (z {z:.2f})"


@check("comparison of ordered problems")
def _compare():
    m = one_asset((0.01, 0.03, 0.02))
    p = simulate_paths(m, TimeGrid(20, 1.0), 8000, 6)
    gen = Generator.funding(m).negated()
    low = BsdeProblem.build(gen, p, lambda s: -np.maximum(s[:, 0] - 100, 0))
    high = BsdeProblem.build(gen.plus(0.01), p, lambda s: -np.maximum(s[:, 0] - 100, 0) + 1.0)
    s1, s2 = solve_backward(high), solve_backward(low)
    rep = compare_solutions(s1, s2, 3 * max(s1.y0_stderr, s2.y0_stderr))
    return rep.violations == 0, f"min gap {rep.min_gap:.4f}"


@check("stability probe scales linearly for a linear problem")
def _stab():
    m = one_asset()
    p = simulate_paths(m, TimeGrid(10, 1.0), 4000, 7)
    prob = BsdeProblem.build(Generator.linear(0.3, [0.0], 0.1, m), p, lambda s: s[:, 0] / 100)
    pts = stability_probe(prob, [0.1, 0.01, 0.0])
    ratio = pts[0].sup_diff / pts[1].sup_diff
    return abs(ratio - 10) < 1e-6 and pts[2].sup_diff == 0.0, f"ratio {ratio:.6f}"


@check("discounted driver examples")
def _driver():
    m = one_asset((0.01, 0.01, 0.01))
    p = simulate_paths(m, TimeGrid(4, 1.0), 5, 8)
    dd = discounted_driver(Contract((CashFlow(1.0),)), p)
    empty = discounted_driver(Contract(), p)
    return abs(dd[0, -1] - np.exp(-0.01)) < 1e-15 and not empty.any(), f"{dd[0, -1]}"


@check("single-rate hedger price equals plain Monte Carlo")
def _single():
    m = one_asset()
    grid = TimeGrid(20, 1.0)
    p = simulate_paths(m, grid, 10000, 9)
    call = Contract((CashFlow(1.0, "call", -1.0, 100.0),))
    r = price_hedger(m, call, 2.0, grid, 0, 0, BasisConfig(3), paths=p)
    mc, se = plain_mc_price(m, call, p)
    return abs(r.p0 - mc) < 3 * np.hypot(se, r.stderr), f"{r.p0:.4f} vs {mc:.4f}"


@check("fair interval under two rates")
def _interval():
    m = one_asset((0.01, 0.03, 0.02))
    call = Contract((CashFlow(1.0, "call", -1.0, 100.0),))
    fi = fair_interval(m, call, 0.0, 0.0, TimeGrid(20, 1.0), 10000, 10, BasisConfig(3))
    return fi.nonempty and fi.p_hedger - fi.p_counterparty > 3 * fi.mc_stderr, \
        f"[{fi.p_counterparty:.4f}, {fi.p_hedger:.4f}]"


@check("strategy invariants and cash replay")
def _strategy():
    m = one_asset((0.01, 0.03, 0.02))
    grid = TimeGrid(20, 1.0)
    p = simulate_paths(m, grid, 5000, 11)
    call = Contract((CashFlow(1.0, "call", -1.0, 100.0),))
    r = price_hedger(m, call, 0.0, grid, 0, 0, BasisConfig(3), paths=p)
    st = replicating_strategy(r.solution, m, call, 0.0, p)
    single = one_asset()
    r0 = price_hedger(single, Contract(), 1.5, grid, 0, 0, paths=p)
    st0 = replicating_strategy(r0.solution, single, Contract(), 1.5, p)
    rep = replay_wealth(st0, single, Contract(), p)
    ok = not st.violations() and np.array_equal(st.xi, r.solution.z)
    ok = ok and _close(rep.terminal_wealth, 1.5 * np.exp(0.01), 1e-9)
    return ok, f"violations {st.violations()}"


def run_selftest(checks=None) -> list[CheckResult]:
    out = []
    for name, fn in (checks or _CHECKS):
        start = time.perf_counter()
        try:
            passed, detail = fn()
        except (BsdeFundError, ArithmeticError, ValueError) as exc:
            passed, detail = False, f"raised {type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(passed), f"{detail} [{time.perf_counter() - start:.2f}s]"))
    return out
