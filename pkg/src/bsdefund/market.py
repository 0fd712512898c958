"""Funding-cost market: model, time grid, and path simulation.

Prices follow a geometric Brownian motion under the lending martingale
measure, ``dS = S ((r_l - kappa) dt + sigma dW)``. The driving martingale of
every BSDE in the package is the discounted cumulative price, whose
increments ``dM = disc_l * S * (sigma dW)`` are produced from the same
Gaussian draws as the prices.
"""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidConfigError, InvalidInputError, SingularMatrixError
from .linalg import ellipticity_constant
from .rng import standard_normals

logger = logging.getLogger(__name__)

CHUNK_PATHS = 4096
THREADS_ENV = "BSDEFUND_THREADS"


def _vector(name, value, d):
    arr = np.array(value, dtype=np.float64).reshape(-1)
    if arr.shape != (d,):
        raise InvalidInputError(f"{name} must have length {d}, got {arr.shape[0]}")
    return arr


@dataclass(frozen=True)
class MarketModel:
    """Constant-coefficient market with ``d`` risky assets.

    Rates are continuously compounded per year. Rate ordering and
    ellipticity are *not* enforced here; :func:`validate` reports them.
    """

    d: int
    horizon: float
    s0: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    kappa: np.ndarray
    rate_l: float
    rate_b: float
    rate_ib: np.ndarray
    collateral_rate_l: float = 0.0
    collateral_rate_b: float = 0.0

    def __post_init__(self):
        d = int(self.d)
        if d < 1:
            raise InvalidInputError("d must be a positive integer")
        object.__setattr__(self, "d", d)
        for name in ("s0", "mu", "kappa", "rate_ib"):
            arr = _vector(name, getattr(self, name), d)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        sigma = np.array(self.sigma, dtype=np.float64).reshape(d, d)
        sigma.flags.writeable = False
        object.__setattr__(self, "sigma", sigma)
        for name in ("horizon", "rate_l", "rate_b", "collateral_rate_l", "collateral_rate_b"):
            object.__setattr__(self, name, float(getattr(self, name)))
        numbers = np.concatenate([
            self.s0, self.mu, self.kappa, self.rate_ib, sigma.ravel(),
            [self.horizon, self.rate_l, self.rate_b, self.collateral_rate_l, self.collateral_rate_b],
        ])
        if not np.all(np.isfinite(numbers)):
            raise InvalidInputError("market parameters must be finite")
        if np.any(self.s0 <= 0.0):
            raise InvalidInputError("initial prices s0 must be positive")
        if self.horizon <= 0.0:
            raise InvalidInputError("horizon must be positive")

    @property
    def max_rate(self) -> float:
        return float(max(self.rate_l, self.rate_b, self.rate_ib.max()))

    def with_rates(self, rate_l=None, rate_b=None, rate_ib=None) -> "MarketModel":
        """Copy with some funding rates replaced (common-path comparisons)."""
        from dataclasses import replace
        return replace(
            self,
            rate_l=self.rate_l if rate_l is None else rate_l,
            rate_b=self.rate_b if rate_b is None else rate_b,
            rate_ib=self.rate_ib if rate_ib is None else np.broadcast_to(rate_ib, (self.d,)),
        )

    def single_rate(self, r: float) -> "MarketModel":
        return self.with_rates(r, r, np.full(self.d, r))


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``0 = t_0 < ... < t_n = T``."""

    n_steps: int
    horizon: float
    times: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if int(self.n_steps) <= 0:
            raise InvalidConfigError("n_steps must be positive")
        if not np.isfinite(self.horizon) or self.horizon <= 0.0:
            raise InvalidConfigError("horizon must be positive")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "horizon", float(self.horizon))
        times = np.linspace(0.0, self.horizon, self.n_steps + 1)
        times[-1] = self.horizon
        times.flags.writeable = False
        object.__setattr__(self, "times", times)

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    def index_of(self, t: float) -> int:
        """Nearest grid index to ``t``."""
        return int(np.clip(round(t / self.dt), 0, self.n_steps))


@dataclass(frozen=True, eq=False)
class PathBundle:
    """Simulated prices and driving-martingale increments.

    Shapes: ``s`` is ``(n_paths, n_steps + 1, d)``; ``dm`` and ``dw`` are
    ``(n_paths, n_steps, d)``; ``disc_l`` is ``(n_steps + 1,)``.
    """

    grid: TimeGrid
    n_paths: int
    seed: int
    s: np.ndarray
    dm: np.ndarray
    disc_l: np.ndarray
    dw: np.ndarray
    model: MarketModel

    @property
    def d(self) -> int:
        return self.s.shape[2]

    @property
    def bank_l(self) -> np.ndarray:
        return 1.0 / self.disc_l

    def same_grid(self, other: "PathBundle") -> bool:
        return (
            self is other
            or (self.s.shape == other.s.shape
                and np.array_equal(self.grid.times, other.grid.times)
                and self.seed == other.seed
                and np.array_equal(self.s, other.s))
        )

    def to_csv(self, path) -> None:
        """One row per path-step: ``path, t, S_1..S_d``."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["path", "t"] + [f"S_{i + 1}" for i in range(self.d)])
            for p in range(self.n_paths):
                for k, t in enumerate(self.grid.times):
                    writer.writerow([p, fmt(t)] + [fmt(x) for x in self.s[p, k]])


def fmt(x) -> str:
    """17 significant digits, round-trip exact."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: object
    hard: bool = True


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks if c.hard)

    def failures(self):
        return [c for c in self.checks if c.hard and not c.passed]

    def __getitem__(self, name) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def lines(self):
        for c in self.checks:
            tag = "PASS" if c.passed else ("FAIL" if c.hard else "INFO")
            yield f"[{tag}] {c.name}: {c.value}"


def validate(model: MarketModel) -> ValidationReport:
    """Check rate ordering, ellipticity and which market assumption holds."""
    lam = ellipticity_constant(model.sigma)
    bounded = bool(np.all(model.sigma == 0.0))
    checks = [
        Check("rate_l >= 0", model.rate_l >= 0.0, model.rate_l),
        Check("rate_l <= rate_b", model.rate_l <= model.rate_b, (model.rate_l, model.rate_b)),
    ]
    for i, rib in enumerate(model.rate_ib):
        checks.append(Check(f"rate_l <= rate_ib[{i + 1}]", model.rate_l <= rib, (model.rate_l, float(rib))))
    checks += [
        Check("ellipticity", lam > 0.0, lam),
        Check("assumption: elliptic lognormal market", lam > 0.0, lam > 0.0),
        Check("assumption: bounded prices", bounded, bounded, hard=False),
    ]
    return ValidationReport(tuple(checks))


def market_price_of_risk(model: MarketModel) -> np.ndarray:
    """``sigma^{-1} (mu + kappa - r_l)``."""
    if ellipticity_constant(model.sigma) <= 0.0:
        raise SingularMatrixError("volatility matrix is singular")
    return np.linalg.solve(model.sigma, model.mu + model.kappa - model.rate_l)


def _thread_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise InvalidConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


def simulate_paths(model: MarketModel, grid: TimeGrid, n_paths: int, seed: int) -> PathBundle:
    """Exact log-Euler paths under the lending martingale measure.

    Paths are generated in fixed-size chunks; the chunks may run on
    ``BSDEFUND_THREADS`` threads without changing a single bit of output.
    """
    if int(n_paths) <= 0:
        raise InvalidConfigError("n_paths must be positive")
    n_paths = int(n_paths)
    n, d, dt = grid.n_steps, model.d, grid.dt
    if abs(grid.horizon - model.horizon) > 1e-12 * model.horizon:
        raise InvalidConfigError("grid horizon differs from model horizon")
    sigma = model.sigma
    drift = (model.rate_l - model.kappa - 0.5 * (sigma**2).sum(axis=1)) * dt
    disc_l = np.exp(-model.rate_l * grid.times)
    log_s0 = np.log(model.s0)

    s = np.empty((n_paths, n + 1, d))
    dm = np.empty((n_paths, n, d))
    dw = np.empty((n_paths, n, d))

    def fill(start):
        stop = min(start + CHUNK_PATHS, n_paths)
        z = standard_normals(seed, start, stop, n * d).reshape(stop - start, n, d)
        inc = z * np.sqrt(dt)
        shock = inc @ sigma.T
        log_s = np.cumsum(drift + shock, axis=1)
        s[start:stop, 0, :] = model.s0
        s[start:stop, 1:, :] = np.exp(log_s0 + log_s)
        dw[start:stop] = inc
        dm[start:stop] = disc_l[:n, None] * s[start:stop, :n, :] * shock

    starts = range(0, n_paths, CHUNK_PATHS)
    threads = _thread_count()
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(fill, starts))
    else:
        for start in starts:
            fill(start)
    for arr in (s, dm, dw, disc_l):
        arr.flags.writeable = False
    return PathBundle(grid, n_paths, int(seed), s, dm, disc_l, dw, model)


def m_times_m_star(model: MarketModel, bank_l, s) -> np.ndarray:
    """``diag(s) (sigma / bank_l)(sigma / bank_l)' diag(s)``.

    Works for a single state (``s`` of shape ``(d,)``) or a batch
    (``s`` of shape ``(n, d)`` with scalar or ``(n,)`` ``bank_l``).
    """
    s = np.asarray(s, dtype=np.float64)
    if np.any(s <= 0.0):
        raise InvalidInputError("prices must be positive")
    bank = np.asarray(bank_l, dtype=np.float64)
    if np.any(bank <= 0.0):
        raise InvalidInputError("bank account must be positive")
    gg = model.sigma @ model.sigma.T
    out = s[..., :, None] * gg * s[..., None, :]
    return out / (bank[..., None, None] ** 2)
