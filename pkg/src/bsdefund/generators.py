"""BSDE drivers and sampling-based Lipschitz certification.

A driver is evaluated as ``h(t, y, z, s, bank_l)`` where ``z`` is in raw
position units (one entry per asset) and ``s`` is the prevailing price
vector. All evaluators broadcast over a leading batch axis: ``y`` has shape
``(n,)``, ``z`` and ``s`` shape ``(n, d)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import InvalidInputError
from .linalg import ellipticity_constant, mat_sqrt_batch
from .market import MarketModel, m_times_m_star

KINDS = ("zero", "linear", "funding")


def _flat(y, z, s):
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    d = z.shape[-1] if z.ndim else 1
    shape = np.broadcast_shapes(y.shape, z.shape[:-1] if z.ndim else (), s.shape[:-1] if s.ndim else ())
    y = np.broadcast_to(y, shape).reshape(-1)
    z = np.broadcast_to(z, shape + (d,)).reshape(-1, d)
    s = np.broadcast_to(s, shape + (d,)).reshape(-1, d)
    return y, z, s, shape


def f_l(t, y, z, s, model: MarketModel):
    """Funding driver in undiscounted units.

    ``sum r_l w_i - sum r_ib_i w_i^+ + r_l (y + sum w_i^-)^+ - r_b (y + sum w_i^-)^-``
    with ``w_i = z_i s_i``.
    """
    y, z, s, shape = _flat(y, z, s)
    if np.any(s <= 0.0):
        raise InvalidInputError("prices must be positive")
    out = kernels.funding_fl(y, z * s, model.rate_l, model.rate_b, model.rate_ib)
    return out.reshape(shape) if shape else float(out[0])


def f_tilde_l(t, y, z, s, bank_l, model: MarketModel):
    """Lending-discounted funding driver ``f_l(t, B y, z) / B - r_l y``."""
    bank = np.asarray(bank_l, dtype=np.float64)
    if np.any(bank < 1.0):
        raise InvalidInputError("lending account value must be >= 1")
    return f_l(t, bank * np.asarray(y, dtype=np.float64), z, s, model) / bank - model.rate_l * np.asarray(y)


def delta_lemma(t, y, z, x1, x2, s, bank_l, model: MarketModel):
    """``f~(y + x1, z) + f~(-y + x2, -z)``; non-positive for ``x1, x2 >= 0``."""
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    return (f_tilde_l(t, y + x1, z, s, bank_l, model)
            + f_tilde_l(t, -y + x2, -z, s, bank_l, model))


@dataclass(frozen=True)
class Generator:
    """An evaluatable driver with affine output/argument wrappers.

    The value is ``scale * base(t, y + y_shift, z) + offset`` where ``base``
    is 0, ``a y + b . (m* z) + c`` (with ``m* = (m m*)^{1/2}``), or
    :func:`f_tilde_l`. Linear and funding kinds carry the market model.
    """

    kind: str
    model: MarketModel | None = None
    a: float = 0.0
    b: np.ndarray = field(default_factory=lambda: np.zeros(0))
    c: float = 0.0
    scale: float = 1.0
    y_shift: float = 0.0
    offset: float = 0.0
    dim: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown generator kind {self.kind!r}")
        if self.kind != "zero" and self.model is None:
            raise InvalidInputError(f"{self.kind} generator needs a market model")
        d = self.model.d if self.model is not None else int(self.dim)
        object.__setattr__(self, "dim", d)
        b = np.array(self.b, dtype=np.float64).reshape(-1)
        if b.size == 0:
            b = np.zeros(d)
        if b.shape != (d,):
            raise InvalidInputError(f"b must have length {d}")
        b.flags.writeable = False
        object.__setattr__(self, "b", b)

    @classmethod
    def zero(cls, dim: int = 1) -> "Generator":
        return cls("zero", dim=dim)

    @classmethod
    def linear(cls, a, b, c, model: MarketModel) -> "Generator":
        return cls("linear", model, a=float(a), b=b, c=float(c))

    @classmethod
    def funding(cls, model: MarketModel) -> "Generator":
        return cls("funding", model)

    def negated(self) -> "Generator":
        return replace(self, scale=-self.scale, offset=-self.offset)

    def shifted(self, y_shift: float) -> "Generator":
        return replace(self, y_shift=self.y_shift + y_shift)

    def plus(self, offset: float) -> "Generator":
        return replace(self, offset=self.offset + offset)

    def linear_coefficients(self) -> tuple[float, np.ndarray, float]:
        """Effective ``(a, b, c)`` after the wrappers; linear and zero kinds only."""
        if self.kind == "zero":
            return 0.0, np.zeros(self.dim), self.offset
        if self.kind != "linear":
            raise InvalidInputError("funding generator is not linear")
        a = self.scale * self.a
        return a, self.scale * self.b, self.scale * self.c + a * self.y_shift + self.offset

    def m_star_z(self, z, s, bank_l):
        """``(m m*)^{1/2} z`` per batch row."""
        z = np.asarray(z, dtype=np.float64)
        s = np.asarray(s, dtype=np.float64)
        if self.dim == 1:
            vol = abs(self.model.sigma[0, 0])
            return z * s * vol / np.asarray(bank_l)[..., None]
        root = mat_sqrt_batch(m_times_m_star(self.model, np.broadcast_to(bank_l, s.shape[:-1]), s))
        return np.einsum("nij,nj->ni", root, z)

    def __call__(self, t, y, z, s, bank_l):
        y = np.asarray(y, dtype=np.float64)
        if self.kind == "zero":
            base = np.zeros_like(y)
        elif self.kind == "linear":
            yy = y + self.y_shift
            base = self.a * yy + self.c
            if np.any(self.b != 0.0):
                y2, z2, s2, shape = _flat(yy, z, s)
                bank2 = np.broadcast_to(np.asarray(bank_l, dtype=np.float64), shape).reshape(-1)
                base = base + (self.m_star_z(z2, s2, bank2) @ self.b).reshape(shape)
        else:
            base = f_tilde_l(t, y + self.y_shift, z, s, bank_l, self.model)
        return self.scale * base + self.offset

    def eval(self, t, y, z, s, bank_l):
        return self(t, y, z, s, bank_l)


class Certificate(NamedTuple):
    passed: bool
    empirical_constant: float


def x_lipschitz_bound(gen: Generator) -> float:
    """Analytic constant for ``|dh| <= L (|dy| + sum |s_i dz_i|)``."""
    if gen.kind == "zero":
        return 0.0
    if gen.kind == "funding":
        return abs(gen.scale) * gen.model.max_rate * (2 + gen.dim)
    # |b . m* dz| <= |b| sqrt(lambda_max(sigma sigma')) |S dz| since bank_l >= 1
    vol = float(np.sqrt(np.linalg.eigvalsh(gen.model.sigma @ gen.model.sigma.T).max()))
    return abs(gen.scale) * max(abs(gen.a), float(np.linalg.norm(gen.b)) * vol)


def _max_bank(gen: Generator) -> float:
    return float(np.exp(gen.model.rate_l * gen.model.horizon)) if gen.model is not None else 1.0


def m_lipschitz_bound(gen: Generator) -> float:
    """Constant for ``|dh| <= L (|dy| + |m* dz|)`` implied by ellipticity.

    The sum-form bound is converted to the Euclidean one with a ``sqrt(d)``
    factor, then multiplied by ``max(1, Lambda^{-1/2})`` where ``Lambda`` is
    the ellipticity constant of ``sigma / B^l`` at the largest ``B^l``.
    """
    if gen.kind == "zero":
        return 0.0
    if gen.kind == "linear":
        return abs(gen.scale) * max(abs(gen.a), float(np.linalg.norm(gen.b)))
    lam = ellipticity_constant(gen.model.sigma / _max_bank(gen))
    if lam <= 0.0:
        raise InvalidInputError("volatility fails the ellipticity condition")
    return x_lipschitz_bound(gen) * np.sqrt(gen.dim) * max(1.0, lam**-0.5)


def _sample_states(gen: Generator, n: int, rng: np.random.Generator):
    d = gen.dim
    s0 = gen.model.s0 if gen.model is not None else np.ones(d)
    horizon = gen.model.horizon if gen.model is not None else 1.0
    s = s0 * np.exp(0.5 * rng.standard_normal((n, d)))
    t = rng.uniform(0.0, horizon, n)
    bank = rng.uniform(1.0, _max_bank(gen), n)
    # heavy tails in y and in the positions z_i s_i probe the kinks
    y1 = 10.0 * rng.standard_normal(n) ** 3
    w1 = 10.0 * rng.standard_normal((n, d)) ** 3
    near = rng.random(n) < 0.5
    step = np.where(near, 1e-3, 10.0)
    y2 = y1 + step * rng.standard_normal(n) * rng.integers(0, 2, n)
    w2 = w1 + step[:, None] * rng.standard_normal((n, d)) * rng.integers(0, 2, (n, 1))
    # straddle the kink of (y + sum w^-) on a quarter of the samples
    kink = rng.random(n) < 0.25
    y1 = np.where(kink, -np.maximum(-w1, 0.0).sum(axis=1) + 1e-2 * rng.standard_normal(n), y1)
    return t, s, bank, y1, w1 / s, y2, w2 / s


def _ratio(num, den):
    keep = den > 0.0
    if not keep.any():
        return 0.0
    return float((num[keep] / den[keep]).max())


def _within(h1, h2, den, den_scale, bound):
    # differences on both sides are allowed 64 ulps of their operands
    num = np.abs(h1 - h2)
    slack = 64 * np.finfo(float).eps * (np.abs(h1) + np.abs(h2) + bound * den_scale)
    keep = den > 0.0
    return bool(np.all(np.isfinite(num)) and np.all(num[keep] <= bound * den[keep] * (1 + 1e-12) + slack[keep]))


def certify_uniform_X_lipschitz(gen: Generator, sample_count: int, seed: int) -> Certificate:
    """Empirical X-Lipschitz constant over random pairs, checked against the analytic bound."""
    if sample_count < 1:
        raise InvalidInputError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    t, s, bank, y1, z1, y2, z2 = _sample_states(gen, sample_count, rng)
    h1, h2 = gen(t, y1, z1, s, bank), gen(t, y2, z2, s, bank)
    den = np.abs(y1 - y2) + np.abs(s * (z1 - z2)).sum(axis=1)
    den_scale = np.abs(y1) + np.abs(y2) + (np.abs(s * z1) + np.abs(s * z2)).sum(axis=1)
    const = _ratio(np.abs(h1 - h2), den)
    return Certificate(_within(h1, h2, den, den_scale, x_lipschitz_bound(gen)), const)


def certify_uniform_m_lipschitz(gen: Generator, model: MarketModel, sample_count: int, seed: int) -> Certificate:
    """Empirical m-Lipschitz constant, with ``|m* dz|`` in the denominator."""
    if sample_count < 1:
        raise InvalidInputError("sample_count must be >= 1")
    if ellipticity_constant(model.sigma) <= 0.0:
        raise InvalidInputError("volatility fails the ellipticity condition")
    gen = gen if gen.model is not None else replace(gen, model=model)
    rng = np.random.default_rng(seed)
    t, s, bank, y1, z1, y2, z2 = _sample_states(gen, sample_count, rng)
    h1, h2 = gen(t, y1, z1, s, bank), gen(t, y2, z2, s, bank)
    root = mat_sqrt_batch(m_times_m_star(model, bank, s))
    def norm(z):
        return np.linalg.norm(np.einsum("nij,nj->ni", root, z), axis=1)

    den = np.abs(y1 - y2) + norm(z1 - z2)
    den_scale = np.abs(y1) + np.abs(y2) + norm(z1) + norm(z2)
    const = _ratio(np.abs(h1 - h2), den)
    return Certificate(_within(h1, h2, den, den_scale, m_lipschitz_bound(gen)), const)
