"""Job configuration: one YAML (or JSON) document per pricing job.

Top-level sections, addressed below by flat key paths::

    model.s0                          initial spot, domestic per foreign
    model.variance.{y0,kappa,theta,xi}
    model.domestic.{y0,kappa,theta,xi}
    model.foreign.{y0,kappa,theta,xi}
    model.shift_d.{knots,values,h_max}   piecewise-constant shift (optional)
    model.shift_f.{knots,values,h_max}
    model.correlation.{sv,sd,sf,vd,vf,df}
    model.leverage.file | model.leverage.constant
    grid.{maturity,steps_per_year}
    payoff.type                       european_call | european_put | asian |
                                      barrier | double_knock_out_call | abdc
    simulation.{n_paths,seed,batch_size}
    convergence.steps                 list of steps per year
    probe.{process,kind,p,lambda,steps}

Relative file paths resolve against the config file's directory.
"""
from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .drivers import SimGrid
from .engine import DEFAULT_BATCH, ProbeSelector
from .errors import ValidationError
from .leverage import LeverageSurface
from .params import CirParams, CorrelationMatrix, ModelParams, ShiftFunction
from . import payoffs as po


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CirConfig(_Strict):
    y0: float
    kappa: float
    theta: float
    xi: float

    def build(self) -> CirParams:
        return CirParams(self.y0, self.kappa, self.theta, self.xi)


class ShiftConfig(_Strict):
    knots: list[float] = [0.0]
    values: list[float] = [0.0]
    h_max: Optional[float] = None

    def build(self) -> ShiftFunction:
        return ShiftFunction(tuple(self.knots), tuple(self.values), self.h_max)


class CorrelationConfig(_Strict):
    sv: float = 0.0
    sd: float = 0.0
    sf: float = 0.0
    vd: float = 0.0
    vf: float = 0.0
    df: float = 0.0


class LeverageConfig(_Strict):
    file: Optional[str] = None
    constant: Optional[float] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.file is None) == (self.constant is None):
            raise ValueError("leverage needs exactly one of 'file' or 'constant'")
        return self


class ModelConfig(_Strict):
    s0: float
    variance: CirConfig
    domestic: CirConfig
    foreign: CirConfig
    shift_d: ShiftConfig = ShiftConfig()
    shift_f: ShiftConfig = ShiftConfig()
    correlation: CorrelationConfig = CorrelationConfig()
    leverage: LeverageConfig = LeverageConfig(constant=1.0)


class GridConfig(_Strict):
    maturity: float
    steps_per_year: int


class PayoffConfig(_Strict):
    type: Literal["european_call", "european_put", "asian", "barrier",
                  "double_knock_out_call", "abdc"]
    strike: Optional[float] = None
    # asian
    psi: int = 1
    averaging: Literal["discrete", "continuous"] = "discrete"
    fixing_dates: Optional[list[float]] = None
    # barrier / double knock-out
    kind: Optional[Literal["UO", "UI", "DO", "DI"]] = None
    option: Literal["call", "put"] = "call"
    barrier: Optional[float] = None
    lower: Optional[float] = None
    upper: Optional[float] = None
    monitoring_dates: Optional[list[float]] = None
    # abdc, levels in % of s0 and coupons in % of nominal
    nominal: float = 100_000.0
    strike_pct: float = 105.0
    b_uo_pct: float = 100.0
    b_di_pct: float = 95.0
    coupon_pct: float = 2.5
    coupon_er_pct: float = 1.5
    fixing_months: int = 1
    coupon_months: int = 3


class SimulationConfig(_Strict):
    n_paths: int = 100_000
    seed: int = 0
    batch_size: int = DEFAULT_BATCH


class ConvergenceConfig(_Strict):
    steps: list[int] = [12, 24, 48, 96, 192]


class ProbeConfig(_Strict):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    process: Literal["variance", "gd", "gf"] = "variance"
    kind: Literal["sup_power", "exp_integral", "terminal_mean"] = "exp_integral"
    p: Optional[float] = None
    lam: Optional[float] = Field(default=None, alias="lambda")
    steps: list[int] = [16, 32, 64, 128]


class JobConfig(_Strict):
    model: ModelConfig
    grid: GridConfig
    payoff: Optional[PayoffConfig] = None
    simulation: SimulationConfig = SimulationConfig()
    convergence: ConvergenceConfig = ConvergenceConfig()
    probe: Optional[ProbeConfig] = None

    def dump(self) -> str:
        data = self.model_dump(mode="json", by_alias=True)
        return yaml.safe_dump(data, sort_keys=True, default_flow_style=False)


def load_config(path: str | Path, seed_override: int | None = None) -> tuple[JobConfig, Path]:
    """Parse a job file; returns the job and the directory relative paths resolve against.

    Seed precedence: ``seed_override`` (the --seed flag), then the ``SEED``
    environment variable, then ``simulation.seed``.
    """
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: expected a mapping at top level")
    job = parse_job(data)
    seed = seed_override
    if seed is None and os.environ.get("SEED"):
        try:
            seed = int(os.environ["SEED"])
        except ValueError as exc:
            raise ValidationError("SEED must be an integer") from exc
    if seed is not None:
        job = job.model_copy(update={"simulation": job.simulation.model_copy(update={"seed": seed})})
    return job, path.parent


def parse_job(data: dict) -> JobConfig:
    from pydantic import ValidationError as PydanticError

    try:
        return JobConfig.model_validate(data)
    except PydanticError as exc:
        raise ValidationError(f"invalid config: {exc}") from exc


def build_params(job: JobConfig, base_dir: Path = Path(".")) -> ModelParams:
    m = job.model
    if m.leverage.file is not None:
        surface_path = Path(m.leverage.file)
        if not surface_path.is_absolute():
            surface_path = base_dir / surface_path
        if not surface_path.is_file():
            raise ValidationError(f"leverage surface file not found: {surface_path}")
        surface = LeverageSurface.load(surface_path)
    else:
        surface = LeverageSurface.constant(m.leverage.constant)
    c = m.correlation
    corr = CorrelationMatrix.from_rhos(c.sv, c.sd, c.sf, c.vd, c.vf, c.df)
    return ModelParams(m.s0, m.variance.build(), m.domestic.build(), m.foreign.build(),
                       m.shift_d.build(), m.shift_f.build(), corr, surface)


def build_grid(job: JobConfig, steps_per_year: int | None = None) -> SimGrid:
    return SimGrid(job.grid.maturity, steps_per_year or job.grid.steps_per_year)


def _need(cfg: PayoffConfig, *names: str) -> None:
    missing = [n for n in names if getattr(cfg, n) is None]
    if missing:
        raise ValidationError(f"payoff '{cfg.type}' needs: {', '.join(missing)}")


def build_payoff(job: JobConfig, s0: float) -> po.PayoffSpec:
    cfg = job.payoff
    if cfg is None:
        raise ValidationError("config has no payoff section")
    T = job.grid.maturity
    if cfg.type == "european_call":
        _need(cfg, "strike")
        return po.EuropeanCall(cfg.strike)
    if cfg.type == "european_put":
        _need(cfg, "strike")
        return po.EuropeanPut(cfg.strike)
    if cfg.type == "asian":
        _need(cfg, "strike")
        dates = cfg.fixing_dates if cfg.fixing_dates is not None else [T]
        return po.AsianFixed(cfg.strike, tuple(dates), cfg.psi, cfg.averaging)
    dates = tuple(cfg.monitoring_dates) if cfg.monitoring_dates is not None else None
    if cfg.type == "barrier":
        _need(cfg, "strike", "kind", "barrier", "monitoring_dates")
        return po.Barrier(cfg.kind, cfg.option, cfg.strike, cfg.barrier, dates)
    if cfg.type == "double_knock_out_call":
        _need(cfg, "strike", "lower", "upper", "monitoring_dates")
        return po.DoubleKnockOutCall(cfg.strike, cfg.lower, cfg.upper, dates)
    contract = po.AbdcContract.from_market_terms(
        s0, T, cfg.nominal, cfg.strike_pct, cfg.b_uo_pct, cfg.b_di_pct, cfg.coupon_pct,
        cfg.coupon_er_pct, cfg.fixing_months, cfg.coupon_months)
    return po.Abdc(contract)


def build_probe(job: JobConfig) -> ProbeSelector:
    cfg = job.probe or ProbeConfig()
    return ProbeSelector(cfg.process, cfg.kind, cfg.p, cfg.lam)


def read_columns(path: str | Path) -> dict[str, np.ndarray]:
    """Read a headed numeric CSV into named columns."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"file not found: {path}")
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if len(lines) < 2:
        raise ValidationError(f"{path}: need a header row and data")
    header = [h.strip() for h in lines[0].split(",")]
    try:
        rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    if rows.shape[1] != len(header):
        raise ValidationError(f"{path}: ragged rows")
    return {h: rows[:, i] for i, h in enumerate(header)}
