import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bsdefund import (Generator, InvalidInputError, certify_uniform_m_lipschitz, certify_uniform_X_lipschitz,
                      delta_lemma, f_l, f_tilde_l)
from bsdefund.generators import m_lipschitz_bound, x_lipschitz_bound
from bsdefund.kernels import compiled_kernels, python_kernels

from conftest import make_model


def test_f_l_vanishes_at_origin(two_rate):
    assert f_l(0.0, 0.0, [0.0], [100.0], two_rate) == 0.0


def test_f_l_hand_example(two_rate):
    # 0.01*10 - 0.02*10 + 0 - 0.03*5
    assert f_l(0.0, -5.0, [0.1], [100.0], two_rate) == pytest.approx(-0.25, abs=1e-15)


def test_f_l_single_rate_is_linear():
    m = make_model(d=3, rates=(0.02, 0.02, 0.02))
    rng = np.random.default_rng(0)
    y = 100 * rng.standard_normal(1000)
    z = rng.standard_normal((1000, 3))
    s = 100 * np.exp(rng.standard_normal((1000, 3)))
    assert np.allclose(f_l(0.0, y, z, s, m), 0.02 * y, atol=1e-12 * (np.abs(y) + np.abs(z * s).sum(1)).max())


def test_f_tilde_examples(two_rate):
    assert f_tilde_l(0.0, -5.0, [0.1], [100.0], 1.0, two_rate) == pytest.approx(-0.20, abs=1e-15)
    assert f_tilde_l(0.0, 0.0, [0.0], [100.0], 1.3, two_rate) == 0.0
    with pytest.raises(InvalidInputError):
        f_tilde_l(0.0, 1.0, [0.0], [100.0], 0.99, two_rate)


def test_f_tilde_single_rate_vanishes():
    m = make_model(d=2, rates=(0.015, 0.015, 0.015))
    rng = np.random.default_rng(2)
    n = 100_000
    y = 50 * rng.standard_normal(n) ** 3
    z = rng.standard_normal((n, 2)) ** 3
    s = m.s0 * np.exp(0.4 * rng.standard_normal((n, 2)))
    bank = rng.uniform(1.0, np.exp(0.015), n)
    scale = np.abs(y) * bank + np.abs(z * s).sum(axis=1)
    assert np.all(np.abs(f_tilde_l(0.0, y, z, s, bank, m)) <= 1e-14 * scale)


def test_delta_examples(two_rate):
    assert delta_lemma(0.0, 0.0, [0.0], 0.0, 0.0, [100.0], 1.0, two_rate) == 0.0
    assert delta_lemma(0.0, 7.0, [0.0], 0.0, 0.0, [100.0], 1.0, two_rate) == pytest.approx(-0.14, abs=1e-15)
    assert delta_lemma(0.0, -7.0, [0.0], 0.0, 0.0, [100.0], 1.0, two_rate) == pytest.approx(-0.14, abs=1e-15)


def _delta_samples(model, n, seed):
    rng = np.random.default_rng(seed)
    d = model.d
    y = 20 * rng.standard_normal(n) ** 3
    z = rng.standard_normal((n, d)) ** 3
    s = model.s0 * np.exp(0.5 * rng.standard_normal((n, d)))
    bank = rng.uniform(1.0, np.exp(model.rate_l * model.horizon), n)
    x1 = rng.exponential(20, n) * rng.integers(0, 2, n)
    x2 = rng.exponential(20, n) * rng.integers(0, 2, n)
    v = delta_lemma(0.0, y, z, x1, x2, s, bank, model)
    scale = bank * (np.abs(y) + x1 + x2) + np.abs(z * s).sum(axis=1)
    return v, scale


@pytest.mark.parametrize("d", [1, 2, 3])
def test_delta_nonpositive(d):
    m = make_model(d=d, rates=(0.01, 0.04, [0.02, 0.03, 0.015][:d]))
    v, scale = _delta_samples(m, 100_000, d)
    assert np.all(v <= 1e-12 * scale)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 0.05), st.floats(0.0, 0.05), st.floats(0.0, 0.05), st.integers(0, 2**32 - 1))
def test_delta_nonpositive_any_ordered_rates(r_l, extra_b, extra_ib, seed):
    m = make_model(rates=(r_l, r_l + extra_b, r_l + extra_ib))
    v, scale = _delta_samples(m, 200, seed)
    assert np.all(v <= 1e-12 * scale)


def test_f_l_nonincreasing_in_borrowing_rates():
    rng = np.random.default_rng(4)
    n = 20_000
    y = 30 * rng.standard_normal(n)
    z = rng.standard_normal((n, 2))
    s = 100 * np.exp(0.3 * rng.standard_normal((n, 2)))
    base = make_model(d=2, rates=(0.01, 0.02, [0.02, 0.02]))
    v0 = f_l(0.0, y, z, s, base)
    assert np.all(f_l(0.0, y, z, s, base.with_rates(rate_b=0.05)) <= v0)
    assert np.all(f_l(0.0, y, z, s, base.with_rates(rate_ib=[0.04, 0.02])) <= v0)
    assert np.all(f_l(0.0, y, z, s, base.with_rates(rate_ib=[0.02, 0.06])) <= v0)


def test_generator_kinds(two_rate):
    z = [0.3]
    s = [100.0]
    assert Generator.zero()(0.0, 5.0, z, s, 1.0) == 0.0
    lin = Generator.linear(0.5, [0.0], 0.1, two_rate)
    assert lin(0.0, 2.0, z, s, 1.0) == pytest.approx(1.1)
    lin_b = Generator.linear(0.0, [0.25], 0.0, two_rate)
    # m* z = sigma s z / B for one asset
    assert lin_b(0.0, 0.0, z, s, 1.0) == pytest.approx(0.25 * 0.2 * 100 * 0.3)
    fund = Generator.funding(two_rate)
    assert fund(0.0, -5.0, [0.1], s, 1.0) == pytest.approx(-0.20)
    assert fund.negated().shifted(1.0).plus(0.5)(0.0, -6.0, [0.1], s, 1.0) == pytest.approx(0.70)
    with pytest.raises(InvalidInputError):
        Generator("quadratic")
    with pytest.raises(InvalidInputError):
        Generator.linear(0.1, [0.0, 0.0], 0.0, two_rate)


def test_linear_m_star_matches_matrix_root():
    m = make_model(d=2, sigma=[[0.2, 0.0], [0.1, 0.3]])
    g = Generator.linear(0.0, [1.0, -0.5], 0.0, m)
    rng = np.random.default_rng(1)
    z = rng.standard_normal((5, 2))
    s = 100 * np.exp(0.2 * rng.standard_normal((5, 2)))
    from bsdefund.linalg import mat_sqrt
    from bsdefund.market import m_times_m_star
    for i in range(5):
        root = mat_sqrt(m_times_m_star(m, 1.1, s[i])).entries
        assert g(0.0, 0.0, z[i], s[i], 1.1) == pytest.approx((root @ z[i]) @ [1.0, -0.5], rel=1e-12)


def test_linear_coefficients_follow_wrappers(two_rate):
    g = Generator.linear(0.5, [0.2], 0.1, two_rate).negated().shifted(2.0).plus(0.3)
    a, b, c = g.linear_coefficients()
    assert a == -0.5 and b[0] == -0.2 and c == pytest.approx(-0.1 - 1.0 + 0.3)
    with pytest.raises(InvalidInputError):
        Generator.funding(two_rate).linear_coefficients()


def test_x_certificate_examples(two_rate):
    zero = certify_uniform_X_lipschitz(Generator.zero(), 1000, 0)
    assert zero.passed and zero.empirical_constant == 0.0
    single = certify_uniform_X_lipschitz(Generator.funding(make_model(rates=(0.02, 0.02, 0.02))), 20_000, 1)
    assert single.passed and single.empirical_constant <= 0.02 * (1 + 1e-6)
    fund = certify_uniform_X_lipschitz(Generator.funding(two_rate), 20_000, 2)
    assert fund.passed and np.isfinite(fund.empirical_constant)
    assert fund.empirical_constant <= x_lipschitz_bound(Generator.funding(two_rate))
    with pytest.raises(InvalidInputError):
        certify_uniform_X_lipschitz(Generator.zero(), 0, 0)


@pytest.mark.parametrize("seed", range(5))
def test_x_certificate_bounded_every_run(seed):
    m = make_model(d=1 + seed % 3, rates=(0.01, 0.05, 0.03))
    cert = certify_uniform_X_lipschitz(Generator.funding(m), 10_000, seed)
    assert cert.passed


def test_m_certificate_examples(two_rate):
    zero = certify_uniform_m_lipschitz(Generator.zero(), two_rate, 1000, 0)
    assert zero.passed and zero.empirical_constant == 0.0
    lin = Generator.linear(0.3, [0.4], 0.1, two_rate)
    cert = certify_uniform_m_lipschitz(lin, two_rate, 20_000, 1)
    # near-coincident pairs leave a few ulps of relative rounding in the raw ratio
    assert cert.passed and cert.empirical_constant <= 0.4 * (1 + 1e-6)
    fund = Generator.funding(two_rate)
    cert = certify_uniform_m_lipschitz(fund, two_rate, 20_000, 2)
    x_const = certify_uniform_X_lipschitz(fund, 20_000, 2).empirical_constant
    lam = 0.04 * np.exp(-0.02)
    assert cert.passed and cert.empirical_constant <= m_lipschitz_bound(fund)
    assert m_lipschitz_bound(fund) == pytest.approx(x_lipschitz_bound(fund) * max(1, lam**-0.5), rel=1e-12)
    assert x_const > 0


def test_m_certificate_requires_ellipticity():
    m = make_model(d=2, sigma=[[0.2, 0.2], [0.2, 0.2]])
    with pytest.raises(InvalidInputError):
        certify_uniform_m_lipschitz(Generator.funding(m), m, 10, 0)


@pytest.mark.skipif(compiled_kernels is None, reason="compiled kernels not built")
def test_funding_backends_agree():
    rng = np.random.default_rng(3)
    y = 10 * rng.standard_normal(5000)
    w = 10 * rng.standard_normal((5000, 3))
    r_ib = np.array([0.02, 0.03, 0.025])
    a = compiled_kernels.funding_fl(y, w, 0.01, 0.04, r_ib)
    b = python_kernels.funding_fl(y, w, 0.01, 0.04, r_ib)
    assert np.allclose(a, b, rtol=0, atol=1e-13)
