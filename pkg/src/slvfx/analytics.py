"""Critical maturities and exponential-moment bounds in closed form.

``k`` is the variance mean-reversion speed and ``zeta = xi * sigma_max``.  A
critical maturity of ``math.inf`` means the corresponding bound holds for
every horizon; :class:`CriticalMaturity` keeps that explicit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import CriticalMaturityError, ValidationError
from .params import CirParams

PHI_CALIBRATION = 2.0 + math.sqrt(2.0)


@dataclass(frozen=True)
class CriticalMaturity:
    value: float
    branch: str
    inputs: dict = field(default_factory=dict, compare=False)

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.value)

    def __float__(self) -> float:
        return self.value

    def __str__(self) -> str:
        return "inf" if self.is_infinite else repr(self.value)


def phi(alpha: float) -> float:
    """Moment-order factor alpha + sqrt((alpha - 1) alpha); phi(2) = 2 + sqrt(2)."""
    if alpha < 1.0:
        raise ValidationError("moment order alpha must be >= 1")
    return alpha + math.sqrt((alpha - 1.0) * alpha)


def _check(k: float, zeta: float) -> None:
    if not (math.isfinite(k) and math.isfinite(zeta)):
        raise ValidationError("non-finite parameter")
    if k < 0.0 or zeta < 0.0:
        raise ValidationError("k and zeta must be non-negative")


def _arctan_form(k: float, c: float, inputs: dict) -> CriticalMaturity:
    # finite iff k < c; diverges to +inf as k -> c from below
    if k >= c:
        return CriticalMaturity(math.inf, "k>=c", inputs)
    root = math.sqrt(c * c - k * k)
    return CriticalMaturity(2.0 / root * (math.pi / 2.0 + math.atan(k / root)), "k<c", inputs)


def t_star_L1(k: float, zeta: float) -> CriticalMaturity:
    """Horizon for L1 strong convergence of the discounted spot approximation."""
    _check(k, zeta)
    inputs = {"k": k, "zeta": zeta}
    if zeta == 0.0:
        return CriticalMaturity(math.inf, "zeta=0", inputs)
    if zeta < 2.0 * k:
        return CriticalMaturity(4.0 * k / zeta ** 2, "zeta<2k", inputs)
    return CriticalMaturity(1.0 / (zeta - k), "zeta>=2k", inputs)


def t_star_calibration(k: float, zeta: float) -> CriticalMaturity:
    """Horizon of the second moment of the discounted spot (phi = 2 + sqrt 2)."""
    _check(k, zeta)
    return _arctan_form(k, PHI_CALIBRATION * zeta, {"k": k, "zeta": zeta})


def t_star_moments_exact(alpha: float, k: float, zeta: float) -> CriticalMaturity:
    _check(k, zeta)
    return _arctan_form(k, phi(alpha) * zeta, {"alpha": alpha, "k": k, "zeta": zeta})


def t_star_moments_fte(alpha: float, k: float, zeta: float) -> CriticalMaturity:
    _check(k, zeta)
    inputs = {"alpha": alpha, "k": k, "zeta": zeta}
    c = phi(alpha) * zeta
    if c == 0.0:
        return CriticalMaturity(math.inf, "zeta=0", inputs)
    if k <= 0.5 * c:
        return CriticalMaturity(1.0 / (c - k), "k<=phi*zeta/2", inputs)
    return CriticalMaturity(4.0 * k / c ** 2, "k>phi*zeta/2", inputs)


def explosion_time_exact_cir(cir: CirParams, lam: float) -> CriticalMaturity:
    """Explosion time of E[exp(lam * int_0^T y)] for the exact CIR process."""
    if not lam > 0.0:
        raise ValidationError("lambda must be positive")
    _check(cir.kappa, cir.xi)
    c = math.sqrt(2.0 * lam) * cir.xi
    return _arctan_form(cir.kappa, c, {"kappa": cir.kappa, "xi": cir.xi, "lambda": lam})


def explosion_time_fte_cir(cir: CirParams, lam: float) -> CriticalMaturity:
    """Horizon up to which E[exp(lam * int_0^T y_bar)] is bounded uniformly in dt."""
    if not lam > 0.0:
        raise ValidationError("lambda must be positive")
    _check(cir.kappa, cir.xi)
    k, xi = cir.kappa, cir.xi
    inputs = {"kappa": k, "xi": xi, "lambda": lam}
    if xi == 0.0:
        return CriticalMaturity(math.inf, "xi=0", inputs)
    if k <= math.sqrt(0.5 * lam) * xi:
        return CriticalMaturity(1.0 / (math.sqrt(2.0 * lam) * xi - k), "k<=sqrt(lam/2)xi", inputs)
    return CriticalMaturity(2.0 * k / (lam * xi ** 2), "k>sqrt(lam/2)xi", inputs)


def lambda_for_moment_order(alpha: float, zeta: float, xi: float) -> float:
    """lambda = phi(alpha)^2 zeta^2 / (2 xi^2).

    With this choice the CIR explosion times coincide with the spot-moment
    horizons: ``explosion_time_exact_cir == t_star_moments_exact`` and
    ``explosion_time_fte_cir == t_star_moments_fte`` for the same (k, zeta).
    """
    if xi <= 0.0:
        return 0.0
    return phi(alpha) ** 2 * zeta ** 2 / (2.0 * xi ** 2)


def nu_y(cir: CirParams, delta_T: float) -> float:
    k, theta, xi = cir.kappa, cir.theta, cir.xi
    if k * delta_T >= 1.0:
        raise ValidationError("delta_T too large: need delta_T < 1/kappa")
    q = 1.0 - k * delta_T
    inner = math.sqrt(xi ** 4 / (4.0 * q ** 4) + k * k * theta * theta / (q * q))
    return math.sqrt(xi * xi / (4.0 * math.pi * q * q) + inner / (2.0 * math.pi))


def eta_root(cir: CirParams, lam: float, T: float) -> float:
    """Smallest eta >= 1 with lam xi^2 T^2 eta^2 - 2 (1 + kT) eta + 2 <= 0."""
    a = lam * cir.xi ** 2 * T * T
    b = 1.0 + cir.kappa * T
    disc = b * b - 2.0 * a
    if -1e-12 * b * b < disc < 0.0:
        disc = 0.0  # T on the horizon, up to rounding
    if disc < 0.0:
        raise CriticalMaturityError("beyond critical maturity")
    root = math.sqrt(disc)
    eta_minus = 2.0 / (b + root)
    eta_plus = (b + root) / a if a > 0.0 else math.inf
    if eta_plus < 1.0 - 1e-12:
        raise CriticalMaturityError("beyond critical maturity")
    return max(1.0, eta_minus)


def fte_exp_moment_bound(cir: CirParams, lam: float, T: float, delta_T: float) -> float:
    """Upper bound on E[exp(lam * int_0^T y_bar)] valid for all dt < delta_T."""
    if not lam > 0.0 or not T >= 0.0:
        raise ValidationError("need lambda > 0 and T >= 0")
    eta = eta_root(cir, lam, T)
    nu = nu_y(cir, delta_T)
    k, theta, xi = cir.kappa, cir.theta, cir.xi
    return math.exp(0.5 * eta * lam * T * T * (k * theta + nu * xi) + eta * lam * T * cir.y0)


def all_critical_maturities(alpha: float, k: float, xi: float, sigma_max: float,
                            lam: float | None = None) -> dict[str, CriticalMaturity]:
    """The six horizons for one parameter set, in a fixed order.

    Without ``lam`` the CIR explosion times use :func:`lambda_for_moment_order`.
    """
    z = xi * sigma_max
    if lam is None:
        lam = lambda_for_moment_order(alpha, z, xi)
    cir = CirParams(1.0, k, 1.0, xi)
    if lam > 0.0:
        exact, fte = explosion_time_exact_cir(cir, lam), explosion_time_fte_cir(cir, lam)
    else:
        exact = fte = CriticalMaturity(math.inf, "lambda=0", {"lambda": lam})
    return {
        "t_star_L1": t_star_L1(k, z),
        "t_star_calibration": t_star_calibration(k, z),
        "t_star_moments_exact": t_star_moments_exact(alpha, k, z),
        "t_star_moments_fte": t_star_moments_fte(alpha, k, z),
        "explosion_time_exact_cir": exact,
        "explosion_time_fte_cir": fte,
    }
