"""TOML run configuration with flat model/solver keys.

Example::

    d = 1
    horizon = 1.0
    s0 = [100.0]
    mu = [0.05]
    sigma = [[0.2]]
    rate_l = 0.01
    rate_b = 0.03
    rate_ib = [0.02]
    n_steps = 50
    n_paths = 20000
    seed = 1

    [[cash_flows]]
    time = 1.0
    kind = "call"
    strike = 100.0
    amount = -1.0
    asset = 1
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .bsde import BasisConfig
from .errors import BsdeFundError, InvalidConfigError
from .generators import KINDS, Generator
from .market import MarketModel, TimeGrid
from .pricing import CashFlow, Contract

MODEL_KEYS = {"d", "horizon", "s0", "mu", "sigma", "kappa", "rate_l", "rate_b", "rate_ib",
              "collateral_rate_l", "collateral_rate_b"}
TOP_KEYS = MODEL_KEYS | {
    "n_steps", "n_paths", "seed", "basis_degree", "ridge", "picard_iters", "x1", "x2",
    "collateral", "collateral_ratio", "cash_flows", "generator", "generator_params",
    "compare", "export_paths",
}
REQUIRED = {"d", "horizon", "s0", "mu", "sigma", "rate_l", "rate_b", "rate_ib"}
FLOW_KEYS = {"time", "kind", "amount", "strike", "asset"}
GENERATOR_KEYS = {"a", "b", "c"}
COMPARE_KEYS = {"generator_offset", "terminal_gap", "driver_drift", "tol_stderrs"}


@dataclass(frozen=True)
class CompareOptions:
    """Second problem for ``compare``: ``h1 = h2 + offset``, ``eta1 = eta2 + gap``,
    ``U1 = U2 - drift * t``."""

    generator_offset: float = 0.01
    terminal_gap: float = 0.0
    driver_drift: float = 0.0
    tol_stderrs: float = 3.0


@dataclass(frozen=True)
class RunConfig:
    model: MarketModel
    grid: TimeGrid
    n_paths: int
    seed: int
    basis: BasisConfig
    picard_iters: int
    contract: Contract
    x1: float = 0.0
    x2: float = 0.0
    generator: str = "funding"
    generator_params: dict = field(default_factory=dict)
    compare: CompareOptions = CompareOptions()
    export_paths: int = 100

    def build_generator(self) -> Generator:
        """Generator in the solver's sign convention."""
        if self.generator == "zero":
            return Generator.zero(self.model.d)
        if self.generator == "linear":
            p = self.generator_params
            return Generator.linear(p.get("a", 0.0), p.get("b", np.zeros(self.model.d)), p.get("c", 0.0), self.model)
        return Generator.funding(self.model).negated()


def _number(key, value, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidConfigError(f"key {key!r}: expected a number, got {value!r}")
    if integer and not isinstance(value, int):
        raise InvalidConfigError(f"key {key!r}: expected an integer, got {value!r}")
    if not np.isfinite(value):
        raise InvalidConfigError(f"key {key!r}: value must be finite")
    return value


def _numbers(key, value, depth):
    if depth == 0:
        return _number(key, value)
    if not isinstance(value, list):
        raise InvalidConfigError(f"key {key!r}: expected a list, got {value!r}")
    return [_numbers(key, v, depth - 1) for v in value]


def _unknown(keys, allowed, where):
    extra = sorted(set(keys) - allowed)
    if extra:
        raise InvalidConfigError(f"unknown key {extra[0]!r} in {where}")


def parse_config(data: dict, seed: int | None = None) -> RunConfig:
    _unknown(data, TOP_KEYS, "configuration")
    missing = sorted(REQUIRED - set(data))
    if missing:
        raise InvalidConfigError(f"missing required key {missing[0]!r}")
    d = _number("d", data["d"], integer=True)
    vec = {k: _numbers(k, data[k], 1) for k in ("s0", "mu", "rate_ib") }
    vec["kappa"] = _numbers("kappa", data.get("kappa", [0.0] * d), 1)
    try:
        model = MarketModel(
            d=d, horizon=_number("horizon", data["horizon"]), s0=vec["s0"], mu=vec["mu"],
            sigma=np.array(_numbers("sigma", data["sigma"], 2), dtype=float).reshape(d, d),
            kappa=vec["kappa"], rate_l=_number("rate_l", data["rate_l"]),
            rate_b=_number("rate_b", data["rate_b"]), rate_ib=vec["rate_ib"],
            collateral_rate_l=_number("collateral_rate_l", data.get("collateral_rate_l", 0.0)),
            collateral_rate_b=_number("collateral_rate_b", data.get("collateral_rate_b", 0.0)),
        )
        grid = TimeGrid(_number("n_steps", data.get("n_steps", 50), integer=True), model.horizon)
        basis = BasisConfig(_number("basis_degree", data.get("basis_degree", 2), integer=True),
                            float(_number("ridge", data.get("ridge", 0.0))))
        flows = []
        for i, raw in enumerate(data.get("cash_flows", [])):
            if not isinstance(raw, dict):
                raise InvalidConfigError(f"cash_flows[{i}] must be a table")
            _unknown(raw, FLOW_KEYS, f"cash_flows[{i}]")
            if "time" not in raw:
                raise InvalidConfigError(f"cash_flows[{i}]: missing key 'time'")
            asset = _number(f"cash_flows[{i}].asset", raw.get("asset", 1), integer=True)
            if not 1 <= asset <= d:
                raise InvalidConfigError(f"cash_flows[{i}].asset must lie in 1..{d}")
            flows.append(CashFlow(
                time=float(_number(f"cash_flows[{i}].time", raw["time"])),
                kind=str(raw.get("kind", "fixed")),
                amount=float(_number(f"cash_flows[{i}].amount", raw.get("amount", 1.0))),
                strike=float(_number(f"cash_flows[{i}].strike", raw.get("strike", 0.0))),
                asset=asset - 1,
            ))
        contract = Contract(tuple(flows), str(data.get("collateral", "none")),
                            float(_number("collateral_ratio", data.get("collateral_ratio", 0.0))))
    except InvalidConfigError:
        raise
    except BsdeFundError as exc:
        raise InvalidConfigError(str(exc)) from exc

    gen = str(data.get("generator", "funding"))
    if gen not in KINDS:
        raise InvalidConfigError(f"key 'generator': expected one of {KINDS}, got {gen!r}")
    params = data.get("generator_params", {})
    _unknown(params, GENERATOR_KEYS, "generator_params")
    params = {k: (_numbers(k, v, 1) if k == "b" else _number(k, v)) for k, v in params.items()}
    cmp_raw = data.get("compare", {})
    _unknown(cmp_raw, COMPARE_KEYS, "compare")
    compare = CompareOptions(**{k: float(_number(k, v)) for k, v in cmp_raw.items()})
    if compare.generator_offset < 0 or compare.terminal_gap < 0 or compare.driver_drift < 0:
        raise InvalidConfigError("compare offsets must be non-negative to order the two problems")

    n_paths = _number("n_paths", data.get("n_paths", 10000), integer=True)
    picard = _number("picard_iters", data.get("picard_iters", 2), integer=True)
    if n_paths <= 0:
        raise InvalidConfigError("key 'n_paths' must be positive")
    if picard < 0:
        raise InvalidConfigError("key 'picard_iters' must be >= 0")
    x1 = float(_number("x1", data.get("x1", 0.0)))
    x2 = float(_number("x2", data.get("x2", 0.0)))
    if x1 < 0 or x2 < 0:
        raise InvalidConfigError("endowments x1, x2 must be non-negative")
    return RunConfig(
        model=model, grid=grid, n_paths=n_paths,
        seed=int(seed if seed is not None else _number("seed", data.get("seed", 0), integer=True)),
        basis=basis, picard_iters=picard, contract=contract, x1=x1, x2=x2,
        generator=gen, generator_params=params, compare=compare,
        export_paths=_number("export_paths", data.get("export_paths", 100), integer=True),
    )


def load_config(path, seed: int | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InvalidConfigError(f"cannot read {path}: {exc}") from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise InvalidConfigError(f"{path}: {exc}") from exc
    return parse_config(data, seed)
