"""Unilateral prices, replicating strategies and the fair bilateral interval.

Contract cash flows ``A`` are amounts *received by the hedger*; a call sold
by the hedger is a ``call`` flow with ``amount = -1``. The hedger's
ex-dividend price is ``B^l (Y - x) - C`` where ``Y`` solves

    dY = Z' dM + f~_l(t, Y, Z) dt + dA^{C,l},   Y_T = x,

i.e. the solver generator is ``-f~_l`` and the solver driver is ``A^{C,l}``.
The counterparty solves the same equation driven by ``-A^{C,l}``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .bsde import BasisConfig, BsdeProblem, BsdeSolution, solve_backward
from .errors import InvalidInputError
from .generators import Generator
from .market import MarketModel, PathBundle, TimeGrid, simulate_paths

logger = logging.getLogger(__name__)

FLOW_KINDS = ("fixed", "call", "put", "forward")
COLLATERAL_KINDS = ("none", "proportional")


@dataclass(frozen=True)
class CashFlow:
    """``amount`` times a payoff of asset ``asset`` (0-based) at ``time``."""

    time: float
    kind: str = "fixed"
    amount: float = 1.0
    strike: float = 0.0
    asset: int = 0

    def __post_init__(self):
        if self.kind not in FLOW_KINDS:
            raise InvalidInputError(f"unknown cash-flow kind {self.kind!r}")
        if not np.isfinite([self.time, self.amount, self.strike]).all():
            raise InvalidInputError("cash-flow fields must be finite")

    def value(self, s: np.ndarray) -> np.ndarray:
        """Amount paid given prices ``s`` of shape ``(n_paths, d)``."""
        if self.kind == "fixed":
            return np.full(s.shape[0], self.amount)
        x = s[:, self.asset]
        if self.kind == "call":
            return self.amount * np.maximum(x - self.strike, 0.0)
        if self.kind == "put":
            return self.amount * np.maximum(self.strike - x, 0.0)
        return self.amount * (x - self.strike)


@dataclass(frozen=True)
class Contract:
    """Cash-flow schedule plus a collateral rule.

    ``collateral = "proportional"`` posts ``C_t = collateral_ratio * mark_t``
    where the mark is the single-curve (lending-rate) value of the remaining
    flows; interest accrues as ``dF^C = (r^{C,b} C^+ - r^{C,l} C^-) dt``. The
    default ``"none"`` gives ``C = F^C = 0``.
    """

    cash_flows: tuple = ()
    collateral: str = "none"
    collateral_ratio: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "cash_flows", tuple(self.cash_flows))
        if self.collateral not in COLLATERAL_KINDS:
            raise InvalidInputError(f"unknown collateral kind {self.collateral!r}")

    def negated(self) -> "Contract":
        from dataclasses import replace
        flows = tuple(replace(f, amount=-f.amount) for f in self.cash_flows)
        return replace(self, cash_flows=flows, collateral_ratio=-self.collateral_ratio)

    def snapped(self, grid: TimeGrid) -> list[tuple[CashFlow, int]]:
        """Each flow with its grid index; raises outside ``[0, T]``."""
        out = []
        tol = 1e-9 * grid.horizon
        for f in self.cash_flows:
            if f.time < -tol or f.time > grid.horizon + tol:
                raise InvalidInputError(f"cash flow at t={f.time} lies outside [0, {grid.horizon}]")
            j = grid.index_of(f.time)
            if abs(grid.times[j] - f.time) > tol:
                logger.info("cash flow at t=%s snapped to grid time %s", f.time, grid.times[j])
            out.append((f, j))
        return out

    def validate_assets(self, d: int) -> None:
        for f in self.cash_flows:
            if f.kind != "fixed" and not 0 <= f.asset < d:
                raise InvalidInputError(f"cash flow refers to asset {f.asset + 1} of {d}")


def raw_flows(contract: Contract, paths: PathBundle) -> np.ndarray:
    """Undiscounted ``dA_k`` over ``(t_k, t_{k+1}]``, shape ``(n_paths, n_steps)``.

    A flow snapped to ``t_0`` is already paid at the valuation date and does
    not enter the ex-dividend price.
    """
    contract.validate_assets(paths.d)
    out = np.zeros((paths.n_paths, paths.grid.n_steps))
    for f, j in contract.snapped(paths.grid):
        if j == 0:
            logger.warning("cash flow at t=0 is excluded from the ex-dividend price")
            continue
        out[:, j - 1] += f.value(paths.s[:, j, :])
    return out


def collateral_path(contract: Contract, paths: PathBundle, basis: BasisConfig = BasisConfig()) -> np.ndarray:
    """``C_k`` on the grid, shape ``(n_paths, n_steps + 1)``; zero at maturity."""
    p, n = paths.n_paths, paths.grid.n_steps
    if contract.collateral == "none" or contract.collateral_ratio == 0.0:
        return np.zeros((p, n + 1))
    flows = raw_flows(contract, paths) * paths.disc_l[1:]
    mark = solve_backward(BsdeProblem.build(Generator.zero(paths.d), paths, 0.0, flows), basis, 0)
    # value to the hedger's liability side: B^l (Y - 0)
    return contract.collateral_ratio * mark.y * paths.bank_l


def _collateral_flows(model: MarketModel, c: np.ndarray, dt: float) -> np.ndarray:
    dc = np.diff(c, axis=1)
    accrual = (model.collateral_rate_b * np.maximum(c[:, :-1], 0.0)
               - model.collateral_rate_l * np.maximum(-c[:, :-1], 0.0)) * dt
    return dc + accrual


def discounted_driver(contract: Contract, paths: PathBundle, basis: BasisConfig = BasisConfig()) -> np.ndarray:
    """Increments of ``A^{C,l}``: each flow discounted at its payment time."""
    total = raw_flows(contract, paths)
    if contract.collateral != "none" and contract.collateral_ratio != 0.0:
        c = collateral_path(contract, paths, basis)
        total = total + _collateral_flows(paths.model, c, paths.grid.dt)
    return total * paths.disc_l[1:]


class PriceResult(NamedTuple):
    p0: float
    solution: BsdeSolution
    price_paths: np.ndarray
    stderr: float


def _paths(model, grid, n_paths, seed, paths):
    return paths if paths is not None else simulate_paths(model, grid, n_paths, seed)


def price_hedger(model: MarketModel, contract: Contract, x: float, grid: TimeGrid, n_paths: int,
                 seed: int, basis: BasisConfig = BasisConfig(), picard_iters: int = 2,
                 paths: PathBundle | None = None) -> PriceResult:
    """Hedger's ex-dividend price ``P^h(x, A, C)`` along every path.

    Solved for ``Y - x`` (terminal 0); the returned solution is shifted back
    so that ``solution.y`` is ``Y`` itself.
    """
    if x < 0:
        raise InvalidInputError("hedger endowment must be non-negative")
    paths = _paths(model, grid, n_paths, seed, paths)
    driver = discounted_driver(contract, paths, basis)
    gen = Generator.funding(model).negated().shifted(x)
    bar = solve_backward(BsdeProblem.build(gen, paths, 0.0, driver), basis, picard_iters)
    c = collateral_path(contract, paths, basis)
    price = paths.bank_l * bar.y - c
    return PriceResult(float(price[0, 0]), bar.shifted(x), price, bar.y0_stderr)


def price_counterparty(model: MarketModel, contract: Contract, x2: float, grid: TimeGrid, n_paths: int,
                       seed: int, basis: BasisConfig = BasisConfig(), picard_iters: int = 2,
                       paths: PathBundle | None = None) -> PriceResult:
    """Counterparty's price ``P^c(x2, -A, -C) = -(B^l (Y^c - x2) + C)``."""
    if x2 < 0:
        raise InvalidInputError("counterparty endowment must be non-negative")
    paths = _paths(model, grid, n_paths, seed, paths)
    driver = -discounted_driver(contract, paths, basis)
    gen = Generator.funding(model).negated().shifted(x2)
    bar = solve_backward(BsdeProblem.build(gen, paths, 0.0, driver), basis, picard_iters)
    c = collateral_path(contract, paths, basis)
    price = -(paths.bank_l * bar.y + c)
    return PriceResult(float(price[0, 0]), bar.shifted(x2), price, bar.y0_stderr)


def plain_mc_price(model: MarketModel, contract: Contract, paths: PathBundle) -> tuple[float, float]:
    """Risk-neutral value ``-E[sum e^{-r_l t} dA]`` with its standard error.

    Computed straight from the simulated prices, independently of the
    solver; only meaningful for uncollateralised contracts.
    """
    total = np.zeros(paths.n_paths)
    for f, j in contract.snapped(paths.grid):
        if j == 0:
            continue
        total -= np.exp(-model.rate_l * paths.grid.times[j]) * f.value(paths.s[:, j, :])
    se = float(total.std(ddof=1) / np.sqrt(paths.n_paths)) if paths.n_paths > 1 else 0.0
    return float(total.mean()), se


@dataclass(frozen=True, eq=False)
class Strategy:
    """Replicating positions at each path and step ``0..n_steps-1``.

    ``wealth`` holds the target portfolio value ``B^l Y`` at every grid
    time including maturity.
    """

    xi: np.ndarray
    psi_l: np.ndarray
    psi_b: np.ndarray
    psi_ib: np.ndarray
    eta_b: np.ndarray
    eta_l: np.ndarray
    wealth: np.ndarray = field(repr=False)

    def violations(self) -> list[str]:
        out = []
        if np.any(self.psi_l < 0):
            out.append("psi_l < 0")
        if np.any(self.psi_b > 0):
            out.append("psi_b > 0")
        if np.any(self.psi_ib > 0):
            out.append("psi_ib > 0")
        if np.any(self.eta_b > 0):
            out.append("eta_b > 0")
        if np.any(self.eta_l < 0):
            out.append("eta_l < 0")
        if np.any(self.psi_l * self.psi_b != 0):
            out.append("psi_l * psi_b != 0")
        return out


def replicating_strategy(solution: BsdeSolution, model: MarketModel, contract: Contract, x: float,
                         paths: PathBundle, basis: BasisConfig = BasisConfig()) -> Strategy:
    """Positions from the hedger's ``(Y, Z)``: ``xi = Z`` and the cash legs."""
    if solution.z is None or not solution.paths.same_grid(paths):
        raise InvalidInputError("solution must come from price_hedger on the same paths")
    n = paths.grid.n_steps
    t = paths.grid.times[:n]
    s = paths.s[:, :n, :]
    bank_l = paths.bank_l[:n]
    xi = solution.z
    pos = xi * s
    cash = bank_l * solution.y[:, :n] + np.maximum(-pos, 0.0).sum(axis=2)
    c = collateral_path(contract, paths, basis)[:, :n]
    return Strategy(
        xi=xi,
        psi_l=np.maximum(cash, 0.0) / bank_l,
        psi_b=-np.maximum(-cash, 0.0) / np.exp(model.rate_b * t),
        psi_ib=-np.maximum(pos, 0.0) / np.exp(np.multiply.outer(t, model.rate_ib)),
        eta_b=-np.maximum(c, 0.0) / np.exp(model.collateral_rate_b * t),
        eta_l=np.maximum(-c, 0.0) / np.exp(model.collateral_rate_l * t),
        wealth=paths.bank_l * solution.y,
    )


class ReplayReport(NamedTuple):
    terminal_wealth: np.ndarray
    target_terminal: np.ndarray
    max_drift: float
    rms_by_step: np.ndarray


def replay_wealth(strategy: Strategy, model: MarketModel, contract: Contract, paths: PathBundle,
                  basis: BasisConfig = BasisConfig()) -> ReplayReport:
    """Run the strategy forward with each account's accrual and the contract flows.

    Starts from ``B^l_0 Y_0`` and reports the drift ``V_k - B^l_k Y_k``.
    """
    n = paths.grid.n_steps
    times = paths.grid.times
    s = paths.s
    accounts = {
        "l": np.exp(model.rate_l * times),
        "b": np.exp(model.rate_b * times),
        "cl": np.exp(model.collateral_rate_l * times),
        "cb": np.exp(model.collateral_rate_b * times),
    }
    b_ib = np.exp(np.multiply.outer(times, model.rate_ib))
    flows = raw_flows(contract, paths)
    c = collateral_path(contract, paths, basis)
    if np.any(c != 0.0):
        flows = flows + _collateral_flows(model, c, paths.grid.dt)
    dt = paths.grid.dt

    v = np.empty((paths.n_paths, n + 1))
    v[:, 0] = strategy.wealth[:, 0]
    for k in range(n):
        gain = (strategy.xi[:, k] * (s[:, k + 1] - s[:, k] + model.kappa * s[:, k] * dt)).sum(axis=1)
        gain += strategy.psi_l[:, k] * (accounts["l"][k + 1] - accounts["l"][k])
        gain += strategy.psi_b[:, k] * (accounts["b"][k + 1] - accounts["b"][k])
        gain += (strategy.psi_ib[:, k] * (b_ib[k + 1] - b_ib[k])).sum(axis=1)
        gain += strategy.eta_b[:, k] * (accounts["cb"][k + 1] - accounts["cb"][k])
        gain += strategy.eta_l[:, k] * (accounts["cl"][k + 1] - accounts["cl"][k])
        v[:, k + 1] = v[:, k] + gain + flows[:, k]
    drift = v - strategy.wealth
    return ReplayReport(v[:, -1], strategy.wealth[:, -1], float(np.abs(drift).max()),
                        np.sqrt(np.mean(drift**2, axis=0)))


@dataclass(frozen=True)
class FairInterval:
    p_counterparty: float
    p_hedger: float
    mc_stderr: float
    nonempty: bool
    min_pathwise_gap: float

    @property
    def width(self) -> float:
        return self.p_hedger - self.p_counterparty


def fair_interval(model: MarketModel, contract: Contract, x1: float, x2: float, grid: TimeGrid,
                  n_paths: int, seed: int, basis: BasisConfig = BasisConfig(), picard_iters: int = 2,
                  paths: PathBundle | None = None) -> FairInterval:
    """Both unilateral prices on common random numbers."""
    paths = _paths(model, grid, n_paths, seed, paths)
    hedger = price_hedger(model, contract, x1, grid, n_paths, seed, basis, picard_iters, paths)
    counter = price_counterparty(model, contract, x2, grid, n_paths, seed, basis, picard_iters, paths)
    se = float(np.hypot(hedger.stderr, counter.stderr))
    gap = hedger.price_paths - counter.price_paths
    return FairInterval(counter.p0, hedger.p0, se, bool(counter.p0 <= hedger.p0 + 3 * se), float(gap.min()))
