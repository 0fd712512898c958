"""Backward regression solver for BSDEs driven by the discounted prices.

The equation is ``dY = Z' dM - h(t, Y, Z) dt + dU`` with ``Y_T = eta``. On
the grid it integrates to

    Y_k = E[Y_{k+1} - dU_k | S_k] + h(t_k, Y_k, Z_k) dt,
    Z_k = (m m* dt)^{-1} E[(Y_{k+1} - dU_k) dM_k | S_k],

where conditional expectations are least-squares fits on polynomials of the
prices at ``t_k``. ``dU_k`` is the driver increment over ``(t_k, t_{k+1}]``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from itertools import combinations_with_replacement
from math import comb
from typing import NamedTuple

import numpy as np

from .errors import InvalidConfigError, InvalidInputError, SolverError
from .generators import Generator
from .linalg import mat_inv_sqrt_batch
from .market import PathBundle, m_times_m_star

COND_LIMIT = 1e12


@dataclass(frozen=True)
class BasisConfig:
    """Total-degree polynomial basis in the prices, with optional ridge."""

    degree: int = 2
    ridge: float = 0.0

    def __post_init__(self):
        if int(self.degree) < 0:
            raise InvalidConfigError("basis degree must be >= 0")
        if not np.isfinite(self.ridge) or self.ridge < 0.0:
            raise InvalidConfigError("ridge must be >= 0")

    def n_basis(self, d: int) -> int:
        return comb(d + self.degree, self.degree)


def _exponents(n_vars: int, degree: int):
    out = [()]
    for deg in range(1, degree + 1):
        out.extend(combinations_with_replacement(range(n_vars), deg))
    return out


def basis_matrix(s: np.ndarray, degree: int) -> np.ndarray:
    """Monomials of the standardised prices; constant columns are dropped."""
    mean = s.mean(axis=0)
    std = s.std(axis=0)
    live = std > 1e-12 * np.maximum(1.0, np.abs(mean))
    x = (s[:, live] - mean[live]) / std[live]
    cols = [np.ones(s.shape[0])]
    for combo in _exponents(x.shape[1], degree)[1:]:
        col = x[:, combo[0]].copy()
        for j in combo[1:]:
            col *= x[:, j]
        cols.append(col)
    return np.column_stack(cols)


class _Fit(NamedTuple):
    fitted: np.ndarray
    condition: float


def _regress(x: np.ndarray, targets: np.ndarray, ridge: float) -> _Fit:
    if x.shape[1] == 1:
        mean = targets.mean(axis=0)
        return _Fit(np.broadcast_to(mean, targets.shape).copy(), 1.0)
    if ridge > 0.0:
        gram = x.T @ x
        pen = ridge * x.shape[0] * np.eye(x.shape[1])
        pen[0, 0] = 0.0  # never shrink the intercept
        ev = np.linalg.eigvalsh(gram + pen)
        beta = np.linalg.solve(gram + pen, x.T @ targets)
        cond = float(ev[-1] / ev[0]) if ev[0] > 0 else np.inf
    else:
        beta, _, _, sv = np.linalg.lstsq(x, targets, rcond=None)
        cond = float((sv[0] / sv[-1]) ** 2) if sv[-1] > 0 else np.inf
    return _Fit(x @ beta, cond)


@dataclass(frozen=True, eq=False)
class BsdeProblem:
    """Generator, terminal values, driver increments, and the paths they live on.

    ``terminal`` has shape ``(n_paths,)``; ``driver_increments`` has shape
    ``(n_paths, n_steps)`` with entry ``k`` the increment of ``U`` over
    ``(t_k, t_{k+1}]``.
    """

    gen: Generator
    terminal: np.ndarray
    driver_increments: np.ndarray
    paths: PathBundle

    def __post_init__(self):
        p, n = self.paths.n_paths, self.paths.grid.n_steps
        eta = self.terminal
        if callable(eta):
            eta = eta(self.paths.s[:, -1, :])
        eta = np.array(np.broadcast_to(np.asarray(eta, dtype=np.float64), (p,)))
        du = self.driver_increments
        du = np.zeros((p, n)) if du is None else np.array(np.broadcast_to(np.asarray(du, dtype=np.float64), (p, n)))
        if not np.all(np.isfinite(eta)):
            raise InvalidInputError("terminal values must be finite")
        if not np.all(np.isfinite(du)):
            raise InvalidInputError("driver increments must be finite")
        if self.gen.dim != self.paths.d:
            raise InvalidInputError("generator dimension differs from the path dimension")
        eta.flags.writeable = False
        du.flags.writeable = False
        object.__setattr__(self, "terminal", eta)
        object.__setattr__(self, "driver_increments", du)

    @classmethod
    def build(cls, gen, paths, terminal=0.0, driver_increments=None) -> "BsdeProblem":
        return cls(gen, terminal, driver_increments, paths)

    def scaled(self, factor: float) -> "BsdeProblem":
        """Terminal values and driver increments multiplied by ``factor``."""
        return replace(self, terminal=self.terminal * factor,
                       driver_increments=self.driver_increments * factor)


@dataclass(frozen=True)
class Diagnostics:
    """Per-step regression condition numbers and residual RMS."""

    condition: np.ndarray
    residual_rms: np.ndarray

    @property
    def failed_steps(self) -> list[int]:
        return [int(k) for k in np.flatnonzero(~(self.condition <= COND_LIMIT))]

    @property
    def ok(self) -> bool:
        return not self.failed_steps


@dataclass(frozen=True, eq=False)
class BsdeSolution:
    """``y`` is ``(n_paths, n_steps + 1)``; ``z`` is ``(n_paths, n_steps, d)`` or None."""

    y: np.ndarray
    z: np.ndarray | None
    y0: float
    y0_stderr: float
    diagnostics: Diagnostics
    paths: PathBundle

    @property
    def grid(self):
        return self.paths.grid

    def shifted(self, x: float) -> "BsdeSolution":
        """Same solution with ``x`` added to every ``Y`` value."""
        return replace(self, y=self.y + x, y0=self.y0 + x)

    def to_csv(self, path) -> None:
        """Rows ``path, t, Y, Z_1..Z_d``; ``Z`` is blank at the terminal time."""
        import csv
        from .market import fmt

        times = self.grid.times
        n = self.grid.n_steps
        d = self.paths.d
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["path", "t", "Y"] + [f"Z_{i + 1}" for i in range(d)])
            for p in range(self.y.shape[0]):
                for k in range(n + 1):
                    if self.z is not None and k < n:
                        zs = [fmt(v) for v in self.z[p, k]]
                    else:
                        zs = [""] * d
                    w.writerow([p, fmt(times[k]), fmt(self.y[p, k])] + zs)


def _check_basis(basis: BasisConfig, paths: PathBundle) -> None:
    nb = basis.n_basis(paths.d)
    if nb > paths.n_paths / 10:
        raise InvalidConfigError(
            f"{nb} basis functions need at least {10 * nb} paths, got {paths.n_paths}")


def _z_from_covariance(paths: PathBundle, k: int, s_k: np.ndarray, cov: np.ndarray) -> np.ndarray:
    # (m m* dt)^{-1} = diag(1/s) (gamma gamma')^+ diag(1/s) / dt, gamma = sigma / B
    gamma = paths.model.sigma * paths.disc_l[k]
    ginv = np.linalg.pinv(gamma @ gamma.T)
    return ((cov / s_k) @ ginv) / s_k / paths.grid.dt


def _finite_or_raise(arr, what, k):
    if not np.all(np.isfinite(arr)):
        raise SolverError(f"non-finite {what} at step {k}", step=k)


def solve_backward(problem: BsdeProblem, basis: BasisConfig = BasisConfig(), picard_iters: int = 2) -> BsdeSolution:
    """Regression Monte Carlo solution of the BSDE, implicit in ``Y``.

    ``picard_iters = 0`` gives the explicit scheme (generator evaluated at
    the conditional expectation); each extra iteration re-evaluates the
    generator at the current ``Y_k`` iterate.
    """
    if picard_iters < 0:
        raise InvalidConfigError("picard_iters must be >= 0")
    paths = problem.paths
    _check_basis(basis, paths)
    gen = problem.gen
    p, n, d = paths.n_paths, paths.grid.n_steps, paths.d
    dt = paths.grid.dt
    times = paths.grid.times
    bank = paths.bank_l
    du = problem.driver_increments

    y = np.empty((p, n + 1))
    z = np.empty((p, n, d))
    h_used = np.empty((p, n))
    cond = np.ones(n)
    resid = np.zeros(n)
    y[:, n] = problem.terminal

    for k in range(n - 1, -1, -1):
        s_k = paths.s[:, k, :]
        target = y[:, k + 1] - du[:, k]
        x = basis_matrix(s_k, basis.degree) if k > 0 else np.ones((p, 1))
        fit = _regress(x, target[:, None], basis.ridge)
        ce = fit.fitted[:, 0]
        res = target - ce
        cov = _regress(x, res[:, None] * paths.dm[:, k, :], basis.ridge)
        cond[k] = max(fit.condition, cov.condition)
        resid[k] = float(np.sqrt(np.mean(res * res)))
        z_k = _z_from_covariance(paths, k, s_k, cov.fitted)
        if k == 0:
            # trivial initial sigma-field: one value shared by every path
            ce, z_k, s_eval = ce[:1], z_k[:1], s_k[:1]
        else:
            s_eval = s_k
        h = gen(times[k], ce, z_k, s_eval, bank[k])
        y_k = ce + h * dt
        for _ in range(picard_iters):
            h = gen(times[k], y_k, z_k, s_eval, bank[k])
            y_k = ce + h * dt
        _finite_or_raise(y_k, "Y", k)
        _finite_or_raise(z_k, "Z", k)
        y[:, k] = y_k
        z[:, k, :] = z_k
        h_used[:, k] = h

    pathwise = problem.terminal - du.sum(axis=1) + h_used.sum(axis=1) * dt
    stderr = float(pathwise.std(ddof=1) / np.sqrt(p)) if p > 1 else 0.0
    return BsdeSolution(y, z, float(y[0, 0]), stderr, Diagnostics(cond, resid), paths)


def solve_linear_density(problem: BsdeProblem, basis: BasisConfig = BasisConfig()) -> BsdeSolution:
    """Linear BSDE through its density-process representation.

    For ``h = a y + b . (m* z) + c`` the solution is
    ``Y_t = E[q_T eta + int q c dt - int q dU | S_t] / q_t`` with
    ``q = exp(a t + int b (m m*)^{-1/2} dM - |b|^2 t / 2)``. Only ``Y`` is
    returned.
    """
    paths = problem.paths
    _check_basis(basis, paths)
    a, b, c = problem.gen.linear_coefficients()
    p, n = paths.n_paths, paths.grid.n_steps
    dt = paths.grid.dt
    bank = paths.bank_l
    du = problem.driver_increments

    log_q = np.zeros((p, n + 1))
    drift = (a - 0.5 * float(b @ b)) * dt
    model = paths.model
    for k in range(n):
        inc = np.full(p, drift)
        if np.any(b != 0.0):
            root_inv = mat_inv_sqrt_batch(m_times_m_star(model, np.full(p, bank[k]), paths.s[:, k, :]))
            inc = inc + np.einsum("nij,nj->ni", root_inv, paths.dm[:, k, :]) @ b
        log_q[:, k + 1] = log_q[:, k] + inc
    q = np.exp(log_q)
    _finite_or_raise(q, "density process", n)

    y = np.empty((p, n + 1))
    y[:, n] = problem.terminal
    acc = q[:, n] * problem.terminal
    cond = np.ones(n)
    resid = np.zeros(n)
    for k in range(n - 1, -1, -1):
        acc = acc + q[:, k] * c * dt - q[:, k + 1] * du[:, k]
        target = acc / q[:, k]
        x = basis_matrix(paths.s[:, k, :], basis.degree) if k > 0 else np.ones((p, 1))
        fit = _regress(x, target[:, None], basis.ridge)
        y[:, k] = fit.fitted[:, 0]
        cond[k] = fit.condition
        resid[k] = float(np.sqrt(np.mean((target - y[:, k]) ** 2)))
        _finite_or_raise(y[:, k], "Y", k)
    pathwise = acc / q[:, 0]
    stderr = float(pathwise.std(ddof=1) / np.sqrt(p)) if p > 1 else 0.0
    return BsdeSolution(y, None, float(y[0, 0]), stderr, Diagnostics(cond, resid), paths)


class ComparisonReport(NamedTuple):
    min_gap: float
    violations: int
    n_points: int
    worst: tuple


def compare_solutions(sol1: BsdeSolution, sol2: BsdeSolution, tol: float) -> ComparisonReport:
    """Pointwise ``y1 - y2`` over every path and grid time."""
    if sol1.y.shape != sol2.y.shape or not sol1.paths.same_grid(sol2.paths):
        raise InvalidInputError("solutions live on different grids or path sets")
    gap = sol1.y - sol2.y
    worst = np.unravel_index(int(np.argmin(gap)), gap.shape)
    return ComparisonReport(float(gap.min()), int(np.count_nonzero(gap < -tol)), gap.size,
                            (int(worst[0]), int(worst[1])))


def ordering_violations(problem1: BsdeProblem, problem2: BsdeProblem, sol2: BsdeSolution | None = None) -> list[str]:
    """Hypotheses of the comparison theorem that fail on the discrete inputs.

    Checks ``eta1 >= eta2`` pathwise and that ``U1 - U2`` has non-positive
    increments. With ``sol2`` given, also checks ``h1 >= h2`` along the
    second solution, which is where the theorem needs the ordering.
    Monotonicity between grid points cannot be observed.
    """
    if not problem1.paths.same_grid(problem2.paths):
        raise InvalidInputError("problems live on different grids or path sets")
    out = []
    if np.any(problem1.terminal < problem2.terminal):
        out.append("terminal values not ordered")
    if np.any(problem1.driver_increments - problem2.driver_increments > 0):
        out.append("U1 - U2 not decreasing")
    if sol2 is not None:
        paths = problem2.paths
        n = paths.grid.n_steps
        for k in range(n):
            args = (paths.grid.times[k], sol2.y[:, k], sol2.z[:, k], paths.s[:, k, :], paths.bank_l[k])
            if np.any(problem1.gen(*args) < problem2.gen(*args)):
                out.append(f"generators not ordered at step {k}")
                break
    return out


class StabilityPoint(NamedTuple):
    scale: float
    sup_diff: float
    l2_diff: float


def stability_probe(base: BsdeProblem, perturbation_scales, basis: BasisConfig = BasisConfig(),
                    picard_iters: int = 2) -> list[StabilityPoint]:
    """Solve with terminal and driver scaled by ``1 + s`` and measure the change."""
    scales = [float(s) for s in perturbation_scales]
    if any(s < 0 for s in scales) or any(b > a for a, b in zip(scales, scales[1:])):
        raise InvalidInputError("perturbation scales must be non-negative and decreasing")
    ref = solve_backward(base, basis, picard_iters)
    dt = base.paths.grid.dt
    out = []
    for s in scales:
        sol = ref if s == 0.0 else solve_backward(base.scaled(1.0 + s), basis, picard_iters)
        diff = sol.y - ref.y
        out.append(StabilityPoint(s, float(np.abs(diff).max()),
                                  float(np.sqrt(np.mean((diff[:, :-1] ** 2).sum(axis=1) * dt)))))
    return out
