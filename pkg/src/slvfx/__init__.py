"""Monte Carlo engine for the Heston-2CIR++ stochastic-local volatility FX model."""
from .analytics import (
    CriticalMaturity,
    explosion_time_exact_cir,
    explosion_time_fte_cir,
    fte_exp_moment_bound,
    nu_y,
    t_star_calibration,
    t_star_L1,
    t_star_moments_exact,
    t_star_moments_fte,
)
from .drivers import IncrementBlock, SimGrid, cholesky, sample_block
from .engine import PricingResult, convergence_study, moment_probe, price
from .errors import SlvError, ValidationError
from .leverage import LeverageSurface, ParticleCloud
from .params import CirParams, CorrelationMatrix, ModelParams, ShiftFunction, validate, zeta
from .payoffs import (
    Abdc,
    AbdcContract,
    AsianFixed,
    Barrier,
    DoubleKnockOutCall,
    EuropeanCall,
    EuropeanPut,
    payoff_value,
)
from .simulator import PathRecord, simulate_path

__version__ = "0.1.0"
