"""Leverage function sigma(t, x) and particle estimators of it.

The surface is bilinear on a (t, x) grid and flat outside it, so
``eval(t, x) == eval(min(t, t_last), clamp(x, x_min, x_max))``.  That makes it
bounded by the largest grid value and globally Lipschitz in both arguments.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EstimationError, ValidationError

DEFAULT_MIN_BIN = 50


@dataclass(frozen=True)
class LeverageSurface:
    t_knots: np.ndarray
    x_knots: np.ndarray
    values: np.ndarray  # shape (len(t_knots), len(x_knots))
    sigma_max: float = field(init=False)
    lipschitz_B: float = field(init=False)
    holder_A: float = field(init=False)

    def __post_init__(self):
        t = np.array(self.t_knots, dtype=float).ravel()
        x = np.array(self.x_knots, dtype=float).ravel()
        vals = np.array(self.values, dtype=float).reshape(len(t), len(x))
        if len(t) == 0 or len(x) == 0:
            raise ValidationError("empty leverage surface")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(x)) and np.all(np.isfinite(vals))):
            raise ValidationError("non-finite parameter")
        if np.any(np.diff(t) <= 0) or np.any(np.diff(x) <= 0):
            raise ValidationError("leverage knots must be strictly increasing")
        if np.any(vals < 0):
            raise ValidationError("leverage values must be non-negative")
        for arr in (t, x, vals):
            arr.setflags(write=False)
        object.__setattr__(self, "t_knots", t)
        object.__setattr__(self, "x_knots", x)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "sigma_max", float(vals.max()))
        slope_x = np.abs(np.diff(vals, axis=1)) / np.diff(x) if len(x) > 1 else np.zeros(1)
        slope_t = np.abs(np.diff(vals, axis=0)) / np.diff(t)[:, None] if len(t) > 1 else np.zeros(1)
        object.__setattr__(self, "lipschitz_B", float(np.max(slope_x, initial=0.0)))
        object.__setattr__(self, "holder_A", float(np.max(slope_t, initial=0.0)))

    @classmethod
    def constant(cls, value: float) -> "LeverageSurface":
        return cls(np.array([0.0]), np.array([1.0]), np.array([[value]]))

    @property
    def x_min(self) -> float:
        return float(self.x_knots[0])

    @property
    def x_max(self) -> float:
        return float(self.x_knots[-1])

    @property
    def is_constant(self) -> bool:
        return bool(np.all(self.values == self.values.flat[0]))

    def eval(self, t: float, x):
        """Evaluate at a scalar time and scalar or array spot."""
        vals = self.values
        if vals.shape == (1, 1):
            return np.full(np.shape(x), vals[0, 0]) if np.ndim(x) else float(vals[0, 0])
        tk = self.t_knots
        if len(tk) == 1 or t <= tk[0]:
            i, w = 0, 0.0
        elif t >= tk[-1]:
            i, w = len(tk) - 1, 0.0
        else:
            i = int(np.searchsorted(tk, t, side="right")) - 1
            w = (t - tk[i]) / (tk[i + 1] - tk[i])
        # np.interp holds the end values flat outside [x_min, x_max]
        out = np.interp(x, self.x_knots, vals[i])
        if w > 0.0:
            out = (1.0 - w) * out + w * np.interp(x, self.x_knots, vals[i + 1])
        return out

    def to_text(self) -> str:
        buf = io.StringIO()
        buf.write("t\\x," + ",".join(_fmt(v) for v in self.x_knots) + "\n")
        for t, row in zip(self.t_knots, self.values):
            buf.write(_fmt(t) + "," + ",".join(_fmt(v) for v in row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "LeverageSurface":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        if len(lines) < 2:
            raise ValidationError("leverage table needs a header row and at least one data row")
        x = [float(v) for v in lines[0].split(",")[1:]]
        t, rows = [], []
        for ln in lines[1:]:
            parts = ln.split(",")
            if len(parts) != len(x) + 1:
                raise ValidationError("ragged leverage table")
            t.append(float(parts[0]))
            rows.append([float(v) for v in parts[1:]])
        return cls(np.array(t), np.array(x), np.array(rows))

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8", newline="\n")

    @classmethod
    def load(cls, path) -> "LeverageSurface":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def sigma_max(surface: LeverageSurface) -> float:
    return surface.sigma_max


@dataclass(frozen=True)
class ParticleCloud:
    """Particles at a fixed maturity: spot, variance, domestic discount, short rates."""

    spot: np.ndarray
    variance: np.ndarray
    discount_d: np.ndarray | None = None
    rate_d: np.ndarray | None = None
    rate_f: np.ndarray | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        n = len(np.ravel(self.spot))
        for name in ("spot", "variance", "discount_d", "rate_d", "rate_f", "weights"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.asarray(arr, dtype=float).ravel()
            if len(arr) != n:
                raise ValidationError(f"particle field {name!r} has {len(arr)} entries, expected {n}")
            object.__setattr__(self, name, arr)
        if n == 0:
            raise ValidationError("empty particle cloud")
        if np.any(self.spot <= 0):
            raise ValidationError("particle spots must be positive")
        if self.discount_d is not None and np.any(self.discount_d <= 0):
            raise ValidationError("particle discounts must be positive")
        if self.weights is not None and (np.any(self.weights < 0) or self.weights.sum() <= 0):
            raise ValidationError("particle weights must be non-negative with positive total")

    def __len__(self) -> int:
        return len(self.spot)

    def _w(self) -> np.ndarray:
        return np.ones(len(self)) if self.weights is None else self.weights

    def mean(self, values: np.ndarray) -> float:
        w = self._w()
        return float(np.sum(w * values) / np.sum(w))


def _bin_members(cloud: ParticleCloud, strike: float, min_bin: int) -> np.ndarray:
    """Indices of the equal-population spot bin that contains ``strike``."""
    n = len(cloud)
    if n < min_bin:
        raise EstimationError("insufficient particles in bin")
    size = max(min_bin, n // 100)
    order = np.lexsort(_tiebreak_keys(cloud) + [cloud.spot])
    sorted_spot = cloud.spot[order]
    n_bins = max(1, n // size)
    pos = int(np.searchsorted(sorted_spot, strike, side="left"))
    b = min(pos // size, n_bins - 1)
    lo = b * size
    hi = n if b == n_bins - 1 else lo + size
    if hi - lo < min_bin:
        raise EstimationError("insufficient particles in bin")
    return order[lo:hi]


def _tiebreak_keys(cloud: ParticleCloud) -> list:
    # lexsort sorts by the last key first; secondary keys make ties order-free
    keys = []
    for name in ("weights", "rate_f", "rate_d", "discount_d", "variance"):
        arr = getattr(cloud, name)
        if arr is not None:
            keys.append(arr)
    return keys


def _cond_mean(cloud: ParticleCloud, members: np.ndarray, values: np.ndarray) -> float:
    w = cloud._w()[members]
    return float(np.sum(w * values[members]) / np.sum(w))


def estimate_leverage_det_rates(cloud: ParticleCloud, sigma_lv: float, strike: float,
                                min_bin: int = DEFAULT_MIN_BIN) -> float:
    """sigma_LV / sqrt(E[v_T | S_T = K]) with a quantile-bin regression."""
    members = _bin_members(cloud, strike, min_bin)
    if sigma_lv == 0.0:
        return 0.0
    ev = _cond_mean(cloud, members, cloud.variance)
    if ev <= 0.0:
        raise EstimationError("non-positive conditional variance")
    return sigma_lv / math.sqrt(ev)


@dataclass(frozen=True)
class MarketTerms:
    """Market inputs at (T, K): instantaneous forwards and the LV call convexity."""

    fwd_d: float
    fwd_f: float
    d2c_dk2: float


def estimate_leverage_full(cloud: ParticleCloud, sigma_lv: float, strike: float,
                           market: MarketTerms, min_bin: int = DEFAULT_MIN_BIN) -> float:
    """Squared leverage at (T, K) with stochastic domestic and foreign rates.

    Conditional expectations use the spot bin containing ``strike``; the
    correction expectations are plain (weighted) means over the whole cloud.
    """
    if cloud.discount_d is None or cloud.rate_d is None or cloud.rate_f is None:
        raise ValidationError("cloud needs discount_d, rate_d and rate_f for the full estimator")
    if not market.d2c_dk2 > 0.0:
        raise ValidationError("non-positive density input")
    members = _bin_members(cloud, strike, min_bin)
    d = cloud.discount_d
    num = _cond_mean(cloud, members, d)
    den = _cond_mean(cloud, members, d * cloud.variance)
    if den <= 0.0:
        raise EstimationError("non-positive conditional variance")
    s, k = cloud.spot, strike
    itm = (s >= k).astype(float)
    corr = (cloud.mean(d * (cloud.rate_f - market.fwd_f) * np.maximum(s - k, 0.0))
            - k * cloud.mean(d * (cloud.rate_d - market.fwd_d) * itm)
            + k * cloud.mean(d * (cloud.rate_f - market.fwd_f) * itm))
    return num / den * (sigma_lv ** 2 + 2.0 / (k * k * market.d2c_dk2) * corr)
