"""Model parameters for the Heston-2CIR++ stochastic-local volatility FX model.

Drivers are ordered (s, v, d, f): spot, variance, domestic rate factor,
foreign rate factor.  Short rates are ``r_i(t) = g_i(t) + h_i(t)`` with
``g_i`` a CIR process and ``h_i`` a piecewise-constant shift.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NotPSDError, ValidationError
from .leverage import LeverageSurface
from .linalg import cholesky_psd

FACTORS = ("s", "v", "d", "f")


def _check_finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ValidationError("non-finite parameter")


@dataclass(frozen=True)
class CirParams:
    """Square-root process dy = kappa (theta - y) dt + xi sqrt(y) dW, y(0) = y0.

    Construction only requires finite values so that degenerate cases
    (xi = 0, kappa = 0) stay expressible; :func:`validate` reports any
    departure from strict positivity.
    """

    y0: float
    kappa: float
    theta: float
    xi: float

    def __post_init__(self):
        _check_finite(self.y0, self.kappa, self.theta, self.xi)

    @property
    def feller_ratio(self) -> float:
        if self.xi == 0.0:
            return math.inf
        return 2.0 * self.kappa * self.theta / self.xi ** 2

    @property
    def feller_satisfied(self) -> bool:
        return 2.0 * self.kappa * self.theta > self.xi ** 2


@dataclass(frozen=True)
class ShiftFunction:
    """Piecewise-constant deterministic shift h(t), right-open intervals.

    ``values[i]`` applies on ``[knots[i], knots[i+1])``; the last value
    extends to infinity.
    """

    knots: tuple[float, ...] = (0.0,)
    values: tuple[float, ...] = (0.0,)
    h_max: float | None = None

    def __post_init__(self):
        knots = tuple(float(k) for k in self.knots)
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)
        _check_finite(*knots, *values)
        if len(knots) != len(values) or not knots:
            raise ValidationError("shift knots and values must have the same non-zero length")
        if knots[0] != 0.0:
            raise ValidationError("first shift knot must be 0")
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise ValidationError("shift knots must be strictly increasing")
        bound = max(abs(v) for v in values)
        if self.h_max is None:
            object.__setattr__(self, "h_max", bound)
        else:
            _check_finite(self.h_max)
            if bound > self.h_max:
                raise ValidationError(f"shift value {bound} exceeds h_max={self.h_max}")

    @classmethod
    def constant(cls, value: float = 0.0) -> "ShiftFunction":
        return cls((0.0,), (value,))

    @property
    def is_zero(self) -> bool:
        return all(v == 0.0 for v in self.values)

    def __call__(self, t: float) -> float:
        i = int(np.searchsorted(self.knots, t, side="right")) - 1
        return self.values[max(i, 0)]

    def integral(self, a: float, b: float) -> float:
        """Exact integral of h over [a, b], a <= b."""
        if self.is_zero or b <= a:
            return 0.0
        total = 0.0
        edges = self.knots[1:] + (math.inf,)
        for lo, hi, v in zip(self.knots, edges, self.values):
            left, right = max(a, lo), min(b, hi)
            if right > left:
                total += v * (right - left)
        return total


@dataclass(frozen=True)
class CorrelationMatrix:
    """Constant 4x4 correlation of (W^s, W^v, W^d, W^f).

    Symmetry, unit diagonal and entry range are enforced here; positive
    semi-definiteness is checked by :meth:`is_psd` / :func:`validate` and by
    the Cholesky factorisation used when simulating.
    """

    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.shape != (4, 4):
            raise ValidationError("correlation matrix must be 4x4")
        if not np.all(np.isfinite(a)):
            raise ValidationError("non-finite parameter")
        if not np.array_equal(a, a.T):
            raise ValidationError("correlation matrix must be symmetric")
        if not np.all(np.diag(a) == 1.0):
            raise ValidationError("correlation matrix diagonal must be 1")
        if np.any(np.abs(a) > 1.0):
            raise ValidationError("correlations must lie in [-1, 1]")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @classmethod
    def from_rhos(cls, sv=0.0, sd=0.0, sf=0.0, vd=0.0, vf=0.0, df=0.0) -> "CorrelationMatrix":
        return cls(np.array([
            [1.0, sv, sd, sf],
            [sv, 1.0, vd, vf],
            [sd, vd, 1.0, df],
            [sf, vf, df, 1.0],
        ]))

    @classmethod
    def identity(cls) -> "CorrelationMatrix":
        return cls(np.eye(4))

    def rho(self, a: str, b: str) -> float:
        return float(self.entries[FACTORS.index(a), FACTORS.index(b)])

    @property
    def rho_sf(self) -> float:
        return self.rho("s", "f")

    def as_rhos(self) -> dict[str, float]:
        e = self.entries
        return {"sv": e[0, 1], "sd": e[0, 2], "sf": e[0, 3],
                "vd": e[1, 2], "vf": e[1, 3], "df": e[2, 3]}

    def is_psd(self) -> bool:
        try:
            cholesky_psd(self.entries)
        except NotPSDError:
            return False
        return True

    def __eq__(self, other):
        return isinstance(other, CorrelationMatrix) and np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash(self.entries.tobytes())


@dataclass(frozen=True)
class ModelParams:
    s0: float
    variance: CirParams
    domestic: CirParams
    foreign: CirParams
    shift_d: ShiftFunction = field(default_factory=ShiftFunction)
    shift_f: ShiftFunction = field(default_factory=ShiftFunction)
    corr: CorrelationMatrix = field(default_factory=CorrelationMatrix.identity)
    leverage: LeverageSurface = field(default_factory=lambda: LeverageSurface.constant(1.0))

    def __post_init__(self):
        _check_finite(self.s0)
        if self.s0 <= 0:
            raise ValidationError("s0 must be positive")


@dataclass(frozen=True)
class FellerStatus:
    satisfied: bool
    ratio: float


@dataclass(frozen=True)
class ValidationReport:
    psd: bool
    feller: dict[str, FellerStatus]
    positivity_violations: tuple[str, ...]
    warnings: tuple[str, ...]

    @property
    def ok(self) -> bool:
        """No hard failures: PSD correlation and strictly positive CIR inputs."""
        return self.psd and not self.positivity_violations

    def errors(self) -> list[str]:
        out = [] if self.psd else ["matrix not PSD"]
        return out + list(self.positivity_violations)

    def to_dict(self) -> dict:
        return {
            "psd": self.psd,
            "feller": {k: {"satisfied": s.satisfied, "ratio": _json_float(s.ratio)}
                       for k, s in self.feller.items()},
            "positivity_violations": list(self.positivity_violations),
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _json_float(x: float):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def validate(params: ModelParams) -> ValidationReport:
    """Structured check of a parameter set; raises only on non-finite input."""
    cirs = {"variance": params.variance, "domestic": params.domestic, "foreign": params.foreign}
    for c in cirs.values():
        _check_finite(c.y0, c.kappa, c.theta, c.xi)
    _check_finite(params.s0)

    feller = {name: FellerStatus(c.feller_satisfied, c.feller_ratio) for name, c in cirs.items()}
    violations = []
    warnings = []
    for name, c in cirs.items():
        for attr in ("y0", "kappa", "theta", "xi"):
            value = getattr(c, attr)
            if value < 0.0 or (value == 0.0 and attr in ("y0", "theta")):
                violations.append(f"{name}.{attr} must be > 0")
            elif value == 0.0:
                warnings.append(f"{name}.{attr} = 0: degenerate factor")
    if not feller["foreign"].satisfied:
        warnings.append("foreign Feller condition 2*kappa*theta > xi^2 fails; "
                        "convergence guarantees need it when rho_sf != 0")
    if not feller["domestic"].satisfied:
        warnings.append("domestic Feller condition fails")
    if not feller["variance"].satisfied:
        warnings.append("variance Feller condition fails")
    return ValidationReport(params.corr.is_psd(), feller, tuple(violations), tuple(warnings))


def zeta(params: ModelParams) -> float:
    """Volatility-of-variance scaled by the leverage bound, xi * sigma_max."""
    return params.variance.xi * params.leverage.sigma_max

