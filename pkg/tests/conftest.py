from __future__ import annotations

import numpy as np
import pytest

from slvfx.leverage import LeverageSurface
from slvfx.params import CirParams, CorrelationMatrix, ModelParams, ShiftFunction


def flat_cir(level: float) -> CirParams:
    """Degenerate CIR factor frozen at ``level``."""
    return CirParams(level, 1.0, level, 0.0)


def make_params(s0=1.0, variance=None, domestic=None, foreign=None, corr=None,
                shift_d=None, shift_f=None, leverage=None) -> ModelParams:
    return ModelParams(
        s0,
        variance or CirParams(0.04, 1.5, 0.04, 0.3),
        domestic or flat_cir(0.02),
        foreign or flat_cir(0.01),
        shift_d or ShiftFunction(),
        shift_f or ShiftFunction(),
        corr or CorrelationMatrix.identity(),
        leverage or LeverageSurface.constant(1.0),
    )


def zero_rate_params(variance=None, corr=None, s0=1.0) -> ModelParams:
    """Rates identically zero: g frozen at theta, shift cancelling it."""
    g = flat_cir(0.01)
    minus = ShiftFunction.constant(-0.01)
    return make_params(s0, variance, g, g, corr, minus, minus)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
