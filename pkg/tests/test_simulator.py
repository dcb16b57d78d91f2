from __future__ import annotations

import math

import numpy as np
import pytest

from slvfx.drivers import IncrementBlock, SimGrid, sample_block
from slvfx.errors import ValidationError
from slvfx.leverage import LeverageSurface
from slvfx.params import CirParams, CorrelationMatrix, ShiftFunction
from slvfx.simulator import (RecordSpec, fte_foreign_step, fte_step, log_euler_step, simulate_cir,
                             simulate_coupled, simulate_path, write_paths_csv)
from slvfx.testing.oracles import cir_exact_moments

from conftest import flat_cir, make_params

CIR = CirParams(0.04, 1.0, 0.04, 0.5)


def test_fte_step_examples():
    assert fte_step(0.04, CIR, 0.0, 0.01) == 0.04
    assert fte_step(-0.1, CIR, 0.3, 0.01) == pytest.approx(-0.0996, abs=1e-15)


def test_foreign_step_examples():
    f = CirParams(0.03, 0.5, 0.03, 0.1)
    dw = np.array([0.05, -0.02, 0.0])
    g = np.array([0.03, 0.01, -0.01])
    assert np.array_equal(fte_foreign_step(g, f, 0.04, 1.2, 0.0, dw, 0.01), fte_step(g, f, dw, 0.01))
    assert np.array_equal(fte_foreign_step(g, f, 0.0, 1.2, 0.7, dw, 0.01), fte_step(g, f, dw, 0.01))
    got = fte_foreign_step(0.03, f, 0.05, 1.2, -0.4, 0.0, 0.01)
    assert got == pytest.approx(0.03 + 0.4 * 0.1 * 1.2 * math.sqrt(0.05 * 0.03) * 0.01, abs=1e-16)


def test_log_euler_examples():
    v, sig, gd = 0.04, 1.5, 0.05
    gf = gd - 0.5 * sig * sig * v
    assert log_euler_step(0.3, gd, gf, 0.0, sig, v, 0.0, 0.01) == pytest.approx(0.3, abs=1e-16)
    assert log_euler_step(0.3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.7, 0.01) == 0.3


def test_degenerate_model_is_deterministic_bs_path():
    p = make_params(variance=flat_cir(0.04), domestic=flat_cir(0.03), foreign=flat_cir(0.01))
    g = SimGrid(1.0, 16)
    block = IncrementBlock(np.zeros((16, 3, 4)), 0, 0)
    rec = simulate_path(p, g, block)
    t = g.times
    expect = np.exp((0.03 - 0.01 - 0.02) * t)
    assert np.allclose(rec.spot, expect[None, :], rtol=1e-14)
    assert np.allclose(rec.discount_d, np.exp(-0.03 * t)[None, :], rtol=1e-14)


def test_log_euler_exact_pathwise():
    v, r_d, r_f, sig = 0.04, 0.03, 0.01, 1.3
    p = make_params(s0=1.2, variance=flat_cir(v), domestic=flat_cir(r_d), foreign=flat_cir(r_f),
                    leverage=LeverageSurface.constant(sig),
                    corr=CorrelationMatrix.from_rhos(sv=-0.5, sf=0.3))
    g = SimGrid(2.0, 50)
    block = sample_block(3, 0, g, p.corr, 200)
    rec = simulate_path(p, g, block)
    w = block.values[:, :, 0].sum(axis=0)
    s = 1.2 * np.exp((r_d - r_f - 0.5 * sig * sig * v) * 2.0 + sig * math.sqrt(v) * w)
    assert np.max(np.abs(rec.terminal_spot / s - 1)) < 1e-12


def test_positivity_feller_violating():
    bad = CirParams(0.02, 0.5, 0.02, 1.0)
    p = make_params(variance=bad, domestic=CirParams(0.01, 0.3, 0.01, 0.4),
                    foreign=CirParams(0.01, 0.3, 0.01, 0.4),
                    corr=CorrelationMatrix.from_rhos(sv=-0.7, sf=0.5, vf=0.2))
    g = SimGrid(1.0, 64)
    (lvl,) = simulate_coupled(p, [g], 5000, 1, 0, [RecordSpec()])
    rec = lvl.result()
    for col in (rec.variance, rec.gd, rec.gf):
        assert col.min() >= 0.0
        assert (col == 0.0).any()
    assert rec.spot.min() > 0


def test_shift_enters_discount_exactly():
    hd = ShiftFunction((0.0, 0.3), (0.01, 0.02))
    p = make_params(variance=flat_cir(0.04), domestic=flat_cir(0.02), foreign=flat_cir(0.0001),
                    shift_d=hd)
    g = SimGrid(1.0, 7)
    rec = simulate_path(p, g, IncrementBlock(np.zeros((7, 1, 4)), 0, 0))
    expect = math.exp(-(0.02 + hd.integral(0.0, 1.0)))
    assert rec.terminal_discount[0] == pytest.approx(expect, rel=1e-14)


def test_fte_mean_bias_small():
    cir = CirParams(0.09, 2.0, 0.04, 0.4)
    g = SimGrid(1.0, 64)
    ((y_T, _, _),) = simulate_cir(cir, [g], 200_000, 5, 0)
    mean, var = cir_exact_moments(cir, 1.0)
    se = math.sqrt(var / len(y_T))
    assert abs(y_T.mean() - mean) < 3 * se + 0.05 * g.dt


def test_coupled_levels_match_summed_increments():
    p = make_params(corr=CorrelationMatrix.from_rhos(sv=-0.4, df=0.2),
                    domestic=CirParams(0.02, 0.5, 0.02, 0.05),
                    foreign=CirParams(0.01, 0.5, 0.01, 0.05))
    fine, coarse = SimGrid(1.0, 16), SimGrid(1.0, 4)
    levels = simulate_coupled(p, [coarse, fine], 50, 9, 2, [RecordSpec(), RecordSpec()])
    block = sample_block(9, 2, fine, p.corr, 50)
    assert np.array_equal(simulate_path(p, fine, block).spot, levels[1].result().spot)
    summed = block.values.reshape(4, 4, 50, 4).sum(axis=1)
    rec = simulate_path(p, coarse, IncrementBlock(summed, 9, 2))
    assert np.allclose(rec.spot, levels[0].result().spot, rtol=1e-13)


def test_unalignable_levels():
    with pytest.raises(ValidationError, match="dates not alignable"):
        simulate_coupled(make_params(), [SimGrid(1.0, 12), SimGrid(1.0, 16)], 4, 0, 0,
                         [RecordSpec(), RecordSpec()])


def test_path_dump(tmp_path):
    g = SimGrid(1.0, 2)
    rec = simulate_path(make_params(), g, sample_block(0, 0, g, CorrelationMatrix.identity(), 2))
    out = tmp_path / "p.csv"
    write_paths_csv(rec, out)
    lines = out.read_bytes().split(b"\n")
    assert lines[0] == b"path,t,S,v,gd,gf"
    assert len([ln for ln in lines if ln]) == 1 + 2 * 3
    assert b"\r" not in out.read_bytes()
