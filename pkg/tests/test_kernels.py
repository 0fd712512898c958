import os
import subprocess
import sys

import numpy as np
import pytest

from bsdefund import BasisConfig, BsdeProblem, Generator, TimeGrid, kernels, simulate_paths, solve_backward
from bsdefund.kernels import compiled_kernels, python_kernels

from conftest import make_model

needs_compiled = pytest.mark.skipif(compiled_kernels is None, reason="compiled kernels not built")


def _backend_in_subprocess(env_value):
    env = dict(os.environ)
    env.pop(kernels.PURE_PYTHON_ENV, None)
    if env_value:
        env[kernels.PURE_PYTHON_ENV] = env_value
    out = subprocess.run([sys.executable, "-c", "import bsdefund; print(bsdefund.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    return out.stdout.strip()


def test_fallback_can_be_forced():
    assert _backend_in_subprocess("1") == "python"


@needs_compiled
def test_compiled_is_default():
    assert _backend_in_subprocess(None) == "compiled"


@needs_compiled
@pytest.mark.parametrize("d", [1, 2, 3, 6])
def test_jacobi_parity(d):
    rng = np.random.default_rng(d)
    g = rng.standard_normal((300, d, d))
    a = g @ g.transpose(0, 2, 1)
    a[::7] = np.diag(rng.uniform(0, 2, d))  # already diagonal
    w1, v1 = compiled_kernels.jacobi_eigh(a)
    w2, v2 = python_kernels.jacobi_eigh(a)
    assert np.allclose(w1, w2, rtol=0, atol=1e-12 * np.abs(w1).max())
    for v in (v1, v2):
        recon = np.einsum("nij,nj,nkj->nik", v, w1, v)
        assert np.abs(recon - a).max() < 1e-10 * np.abs(a).max()


@needs_compiled
def test_jacobi_sign_convention_matches():
    a = np.array([[[2.0, 1.0], [1.0, 2.0]], [[1.0, 0.0], [0.0, 3.0]]])
    for mod in (compiled_kernels, python_kernels):
        w, v = mod.jacobi_eigh(a)
        assert np.allclose(w, [[3, 1], [3, 1]])
        assert np.allclose(v[1], [[0, 1], [1, 0]])
        assert v[0, 0, 0] > 0 and v[0, 0, 1] > 0


@needs_compiled
def test_full_solve_parity(monkeypatch):
    m = make_model(d=2, sigma=[[0.2, 0.0], [0.1, 0.3]])
    p = simulate_paths(m, TimeGrid(10, 1.0), 5000, 2)
    prob = BsdeProblem.build(Generator.funding(m).negated(), p, lambda s: -np.maximum(s[:, 0] - s[:, 1], 0.0))
    lin = BsdeProblem.build(Generator.linear(0.1, [0.2, 0.1], 0.0, m), p, 1.0)
    ref = [solve_backward(prob, BasisConfig(2)), solve_backward(lin, BasisConfig(2))]
    monkeypatch.setattr(kernels, "funding_fl", python_kernels.funding_fl)
    monkeypatch.setattr(kernels, "jacobi_eigh", python_kernels.jacobi_eigh)
    alt = [solve_backward(prob, BasisConfig(2)), solve_backward(lin, BasisConfig(2))]
    for a, b in zip(ref, alt):
        assert np.allclose(a.y, b.y, rtol=0, atol=1e-10)
