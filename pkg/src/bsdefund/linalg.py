"""Small dense symmetric-matrix utilities.

Everything here works on tiny matrices (d <= ~20). The batched variants take
stacks of shape ``(n, d, d)`` and are what the solvers call once per time
step; the scalar variants accept a single matrix or a :class:`SymMatrix`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidInputError, NotPSDError, SingularMatrixError

PSD_CLAMP = 1e-12
PD_FLOOR = 1e-12


@dataclass(frozen=True)
class SymMatrix:
    """A symmetric matrix, stored exactly symmetric."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise InvalidInputError(f"expected a non-empty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InvalidInputError("matrix has non-finite entries")
        if not np.array_equal(a, a.T):
            raise InvalidInputError("matrix is not symmetric")
        a.flags.writeable = False
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def symmetrized(cls, a) -> "SymMatrix":
        a = np.asarray(a, dtype=np.float64)
        return cls(0.5 * (a + a.T))

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


def _as_stack(a) -> tuple[np.ndarray, bool]:
    if isinstance(a, SymMatrix):
        a = a.entries
    arr = np.asarray(a, dtype=np.float64)
    single = arr.ndim == 2
    if single:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
        raise InvalidInputError(f"expected (d, d) or (n, d, d), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("matrix has non-finite entries")
    return arr, single


def sym_eig_batch(a) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and eigenvector columns for a stack.

    ``a[m] == v[m] @ diag(w[m]) @ v[m].T``. The first component of each
    eigenvector larger than 1e-12 in magnitude is positive.
    """
    arr, _ = _as_stack(a)
    return kernels.jacobi_eigh(arr)


def sym_eig(a) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of one symmetric matrix via cyclic Jacobi.

    Returns ``(w, v)`` with ``w`` descending and the eigenvectors as the
    columns of the orthogonal matrix ``v``, so ``a = v diag(w) v.T``.
    """
    arr, _ = _as_stack(a)
    if arr.shape[0] != 1:
        raise InvalidInputError("sym_eig takes a single matrix; use sym_eig_batch")
    w, v = kernels.jacobi_eigh(arr)
    return w[0], v[0]


def _clamped(w: np.ndarray) -> np.ndarray:
    scale = np.maximum(1.0, np.abs(w).max(axis=1, initial=0.0))
    if np.any(w[:, -1] < -PSD_CLAMP * scale):
        bad = int(np.argmax(w[:, -1] < -PSD_CLAMP * scale))
        raise NotPSDError(f"matrix {bad} has eigenvalue {w[bad, -1]:.3e} below the PSD tolerance")
    return np.maximum(w, 0.0)


def _recompose(v: np.ndarray, f: np.ndarray) -> np.ndarray:
    out = np.einsum("nij,nj,nkj->nik", v, f, v)
    return 0.5 * (out + out.transpose(0, 2, 1))


def mat_sqrt_batch(a) -> np.ndarray:
    """Symmetric PSD square root of every matrix in a stack."""
    w, v = sym_eig_batch(a)
    return _recompose(v, np.sqrt(_clamped(w)))


def mat_inv_sqrt_batch(a) -> np.ndarray:
    """Inverse of the symmetric square root of every matrix in a stack."""
    w, v = sym_eig_batch(a)
    if np.any(w[:, -1] <= PD_FLOOR):
        bad = int(np.argmax(w[:, -1] <= PD_FLOOR))
        raise SingularMatrixError(f"matrix {bad} has min eigenvalue {w[bad, -1]:.3e}")
    return _recompose(v, 1.0 / np.sqrt(w))


def mat_sqrt(a) -> SymMatrix:
    """The unique symmetric PSD root ``r`` with ``r @ r == a``.

    Eigenvalues in ``[-1e-12 * max(1, |lambda_max|), 0)`` are clamped to 0;
    anything more negative raises :class:`NotPSDError`.
    """
    return SymMatrix(mat_sqrt_batch(_single(a))[0])


def mat_inv_sqrt(a) -> SymMatrix:
    """Inverse of :func:`mat_sqrt`; requires min eigenvalue > 1e-12."""
    return SymMatrix(mat_inv_sqrt_batch(_single(a))[0])


def _single(a) -> np.ndarray:
    arr, single = _as_stack(a)
    if not single and arr.shape[0] != 1:
        raise InvalidInputError("expected a single matrix")
    return arr


def ellipticity_constant(gamma) -> float:
    """Smallest eigenvalue of ``gamma @ gamma.T``.

    This is the largest ``L`` with ``a' gamma gamma' a >= L |a|^2`` for all ``a``.
    Values below ``1e-14 * lambda_max`` are rounding noise and reported as 0.
    """
    g = np.asarray(gamma, dtype=np.float64)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise InvalidInputError("matrix has non-finite entries")
    gg = g @ g.T
    w, _ = sym_eig(0.5 * (gg + gg.T))
    if w[-1] <= 1e-14 * w[0]:
        return 0.0
    return float(w[-1])
