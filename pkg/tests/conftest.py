import numpy as np
import pytest

from bsdefund import MarketModel


def make_model(d=1, rates=(0.01, 0.03, 0.02), sigma=None, kappa=None, mu=None, s0=None, horizon=1.0, **kw):
    r_l, r_b, r_ib = rates
    sigma = np.diag(0.2 + 0.05 * np.arange(d)) if sigma is None else sigma
    return MarketModel(
        d, horizon,
        s0=[100.0] * d if s0 is None else s0,
        mu=[0.05] * d if mu is None else mu,
        sigma=sigma,
        kappa=[0.0] * d if kappa is None else kappa,
        rate_l=r_l, rate_b=r_b, rate_ib=np.broadcast_to(r_ib, (d,)),
        **kw,
    )


@pytest.fixture
def two_rate():
    return make_model()


@pytest.fixture
def single_rate():
    return make_model(rates=(0.01, 0.01, 0.01))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
