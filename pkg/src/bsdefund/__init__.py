"""Monte Carlo solvers for BSDEs driven by asset-price martingales, with
funding-rate asymmetric pricing of collateralized contracts."""

from .bsde import (BasisConfig, BsdeProblem, BsdeSolution, ComparisonReport, Diagnostics, compare_solutions, ordering_violations,
                   solve_backward, solve_linear_density, stability_probe)
from .errors import (BsdeFundError, InvalidConfigError, InvalidInputError, NotPSDError, SingularMatrixError,
                     SolverError)
from .generators import (Certificate, Generator, certify_uniform_m_lipschitz, certify_uniform_X_lipschitz,
                         delta_lemma, f_l, f_tilde_l)
from .kernels import BACKEND
from .linalg import SymMatrix, ellipticity_constant, mat_inv_sqrt, mat_sqrt, sym_eig
from .market import MarketModel, PathBundle, TimeGrid, ValidationReport, simulate_paths, validate
from .pricing import (CashFlow, Contract, FairInterval, PriceResult, ReplayReport, Strategy, fair_interval,
                      plain_mc_price, price_counterparty, price_hedger, replay_wealth, replicating_strategy)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BasisConfig", "BsdeFundError", "BsdeProblem", "BsdeSolution", "CashFlow", "Certificate",
    "ComparisonReport", "Contract", "Diagnostics", "FairInterval", "Generator", "InvalidConfigError",
    "InvalidInputError", "MarketModel", "NotPSDError", "PathBundle", "PriceResult", "ReplayReport",
    "SingularMatrixError", "SolverError", "Strategy", "SymMatrix", "TimeGrid", "ValidationReport",
    "certify_uniform_X_lipschitz", "certify_uniform_m_lipschitz", "compare_solutions", "delta_lemma",
    "ellipticity_constant", "f_l", "ordering_violations", "f_tilde_l", "fair_interval", "mat_inv_sqrt", "mat_sqrt",
    "plain_mc_price", "price_counterparty", "price_hedger", "replay_wealth", "replicating_strategy",
    "simulate_paths", "solve_backward", "solve_linear_density", "stability_probe", "sym_eig", "validate",
]
