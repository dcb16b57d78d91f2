"""Discounted pathwise payoffs evaluated on recorded grid values.

Knock conventions: an up barrier is hit when S >= B, a down barrier when
S <= B, both only at the listed monitoring dates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .drivers import SimGrid
from .errors import ValidationError
from .simulator import PathRecord

BARRIER_KINDS = ("UO", "UI", "DO", "DI")


def _dates(dates) -> tuple[float, ...]:
    out = tuple(float(t) for t in dates)
    if not out:
        raise ValidationError("at least one date is required")
    if any(t < 0 or not math.isfinite(t) for t in out):
        raise ValidationError("dates must be finite and non-negative")
    return tuple(sorted(set(out)))


def _positive(name: str, value: float) -> None:
    if not (math.isfinite(value) and value > 0):
        raise ValidationError(f"{name} must be positive")


@dataclass(frozen=True)
class EuropeanCall:
    strike: float

    def __post_init__(self):
        _positive("strike", self.strike)


@dataclass(frozen=True)
class EuropeanPut:
    strike: float

    def __post_init__(self):
        _positive("strike", self.strike)


@dataclass(frozen=True)
class AsianFixed:
    """Fixed-strike Asian: [psi (A - K)]^+ with A the average spot.

    ``averaging="discrete"`` averages over ``fixing_dates``;
    ``"continuous"`` uses the trapezoid rule over every grid point of [0, T].
    """

    strike: float
    fixing_dates: tuple[float, ...] = ()
    psi: int = 1
    averaging: str = "discrete"

    def __post_init__(self):
        _positive("strike", self.strike)
        if self.psi not in (1, -1):
            raise ValidationError("psi must be +1 (call) or -1 (put)")
        if self.averaging not in ("discrete", "continuous"):
            raise ValidationError("averaging must be 'discrete' or 'continuous'")
        if self.averaging == "discrete":
            object.__setattr__(self, "fixing_dates", _dates(self.fixing_dates))


@dataclass(frozen=True)
class Barrier:
    kind: str
    option: str
    strike: float
    barrier: float
    monitoring_dates: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in BARRIER_KINDS:
            raise ValidationError(f"barrier kind must be one of {BARRIER_KINDS}")
        if self.option not in ("call", "put"):
            raise ValidationError("option must be 'call' or 'put'")
        _positive("strike", self.strike)
        _positive("barrier", self.barrier)
        object.__setattr__(self, "monitoring_dates", _dates(self.monitoring_dates))


@dataclass(frozen=True)
class DoubleKnockOutCall:
    strike: float
    lower: float
    upper: float
    monitoring_dates: tuple[float, ...]

    def __post_init__(self):
        _positive("strike", self.strike)
        _positive("lower", self.lower)
        _positive("upper", self.upper)
        object.__setattr__(self, "monitoring_dates", _dates(self.monitoring_dates))


@dataclass(frozen=True)
class AbdcContract:
    """Autocallable barrier dual currency note.

    Levels are absolute spot values and coupons are fractions of the nominal;
    values are reported in percent of the nominal.
    """

    nominal: float
    strike: float
    b_uo: float
    b_di: float
    coupon: float
    coupon_er: float
    fixing_dates: tuple[float, ...]
    coupon_dates: tuple[float, ...]
    expiry: float

    def __post_init__(self):
        _positive("strike", self.strike)
        _positive("expiry", self.expiry)
        if not self.b_uo > 0 or math.isnan(self.b_uo):
            raise ValidationError("b_uo must be positive (may be inf)")
        if self.b_di < 0 or not math.isfinite(self.b_di):
            raise ValidationError("b_di must be finite and non-negative")
        object.__setattr__(self, "fixing_dates", _dates(self.fixing_dates))
        object.__setattr__(self, "coupon_dates", _dates(self.coupon_dates))
        horizon = self.expiry * (1 + 1e-12)
        if max(self.fixing_dates) > horizon or max(self.coupon_dates) > horizon:
            raise ValidationError("fixing and coupon dates must not exceed expiry")

    @classmethod
    def from_market_terms(cls, s0: float, expiry: float, nominal: float = 100_000.0,
                          strike_pct: float = 105.0, b_uo_pct: float = 100.0,
                          b_di_pct: float = 95.0, coupon_pct: float = 2.5,
                          coupon_er_pct: float = 1.5, fixing_months: int = 1,
                          coupon_months: int = 3) -> "AbdcContract":
        """Build from levels in % of S0, coupons in % of N, and month-count schedules."""
        n_fix = int(round(expiry * 12 / fixing_months))
        n_cpn = int(round(expiry * 12 / coupon_months))
        if abs(n_fix * fixing_months - expiry * 12) > 1e-9 or abs(n_cpn * coupon_months - expiry * 12) > 1e-9:
            raise ValidationError("expiry must be a whole number of fixing and coupon periods")
        fixings = tuple(i * fixing_months / 12.0 for i in range(1, n_fix + 1))
        coupons = tuple(i * coupon_months / 12.0 for i in range(1, n_cpn + 1))
        return cls(nominal, s0 * strike_pct / 100.0, s0 * b_uo_pct / 100.0,
                   s0 * b_di_pct / 100.0, coupon_pct / 100.0, coupon_er_pct / 100.0,
                   fixings, coupons, expiry)

    def warnings(self, s0: float) -> list[str]:
        if not (self.b_di < s0 < self.b_uo):
            return [f"barriers do not bracket the spot: B_DI={self.b_di}, S0={s0}, B_UO={self.b_uo}"]
        return []


@dataclass(frozen=True)
class Abdc:
    contract: AbdcContract


PayoffSpec = Union[EuropeanCall, EuropeanPut, AsianFixed, Barrier, DoubleKnockOutCall, Abdc]


def required_dates(spec: PayoffSpec) -> tuple[float, ...] | None:
    """Dates the payoff reads besides maturity; ``None`` means every grid point."""
    if isinstance(spec, (EuropeanCall, EuropeanPut)):
        return ()
    if isinstance(spec, AsianFixed):
        return None if spec.averaging == "continuous" else spec.fixing_dates
    if isinstance(spec, (Barrier, DoubleKnockOutCall)):
        return spec.monitoring_dates
    if isinstance(spec, Abdc):
        return tuple(sorted(set(spec.contract.fixing_dates + spec.contract.coupon_dates)))
    raise ValidationError(f"unknown payoff spec {spec!r}")


def required_indices(spec: PayoffSpec, grid: SimGrid) -> tuple[int, ...] | None:
    dates = required_dates(spec)
    if dates is None:
        return None
    if isinstance(spec, Abdc) and abs(spec.contract.expiry - grid.maturity) > 1e-12 * grid.maturity:
        raise ValidationError("contract expiry does not match the grid maturity")
    return tuple(grid.index_of(t) for t in dates)


def _spots(path: PathRecord, dates) -> np.ndarray:
    idx = [path.grid.index_of(t) for t in dates]
    return path.spot[:, [path.column(n) for n in idx]]


def _vanilla(option: str, s: np.ndarray, k: float) -> np.ndarray:
    return np.maximum(s - k, 0.0) if option == "call" else np.maximum(k - s, 0.0)


def barrier_alive(kind: str, barrier: float, monitored: np.ndarray) -> np.ndarray:
    """Indicator that a single-barrier option pays, per path."""
    if kind == "UO":
        return monitored.max(axis=1) < barrier
    if kind == "UI":
        return monitored.max(axis=1) >= barrier
    if kind == "DO":
        return monitored.min(axis=1) > barrier
    return monitored.min(axis=1) <= barrier


def payoff_value(spec: PayoffSpec, path: PathRecord) -> np.ndarray:
    """Discounted payoff per path, in domestic units (percent of N for ABDC)."""
    if isinstance(spec, Abdc):
        return abdc_value(spec.contract, path)
    s_T = path.terminal_spot
    d_T = path.terminal_discount
    if isinstance(spec, EuropeanCall):
        f = np.maximum(s_T - spec.strike, 0.0)
    elif isinstance(spec, EuropeanPut):
        f = np.maximum(spec.strike - s_T, 0.0)
    elif isinstance(spec, AsianFixed):
        if spec.averaging == "continuous":
            if len(path.indices) != path.grid.n_steps + 1:
                raise ValidationError("continuous averaging needs every grid point recorded")
            s = path.spot
            avg = (0.5 * (s[:, 0] + s[:, -1]) + s[:, 1:-1].sum(axis=1)) / path.grid.n_steps
        else:
            avg = _spots(path, spec.fixing_dates).mean(axis=1)
        f = np.maximum(spec.psi * (avg - spec.strike), 0.0)
    elif isinstance(spec, Barrier):
        alive = barrier_alive(spec.kind, spec.barrier, _spots(path, spec.monitoring_dates))
        f = _vanilla(spec.option, s_T, spec.strike) * alive
    elif isinstance(spec, DoubleKnockOutCall):
        mon = _spots(path, spec.monitoring_dates)
        alive = (mon.min(axis=1) > spec.lower) & (mon.max(axis=1) < spec.upper)
        f = np.maximum(s_T - spec.strike, 0.0) * alive
    else:
        raise ValidationError(f"unknown payoff spec {spec!r}")
    return d_T * f


def abdc_value(contract: AbdcContract, path: PathRecord) -> np.ndarray:
    """Discounted PnL of the note per path, in percent of the nominal."""
    grid = path.grid
    fix_idx = np.array([grid.index_of(t) for t in contract.fixing_dates])
    fix_cols = [path.column(n) for n in fix_idx]
    s_fix = path.spot[:, fix_cols]
    d_fix = path.discount_d[:, fix_cols]
    n_paths = path.n_paths

    er_hit = s_fix >= contract.b_uo
    redeemed = er_hit.any(axis=1)
    first_er = np.argmax(er_hit, axis=1)
    tau_er_idx = np.where(redeemed, fix_idx[first_er], np.iinfo(np.int64).max)
    knocked_in = (s_fix <= contract.b_di).any(axis=1)

    value = np.zeros(n_paths)
    for t in contract.coupon_dates:
        n = grid.index_of(t)
        col = path.column(n)
        paid = (n < tau_er_idx) & (path.spot[:, col] > contract.b_di)
        value += path.discount_d[:, col] * contract.coupon * paid
    d_er = d_fix[np.arange(n_paths), first_er]
    value += np.where(redeemed, d_er * contract.coupon_er, 0.0)
    s_T = path.terminal_spot
    put = path.terminal_discount / contract.strike * np.maximum(contract.strike - s_T, 0.0)
    value -= put * (knocked_in & ~redeemed)
    return 100.0 * value
