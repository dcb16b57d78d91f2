"""Full-truncation Euler for (v, g_d, g_f) and log-Euler for the FX spot.

Within a step the leverage is read at the pre-step spot, then v, g_d, g_f and
log S are advanced from their pre-step values.  Bars are positive parts of the
auxiliary (possibly negative) tilde processes and are held constant over a
step, so the discount integrals  sum (g_bar(t_n) dt + int h)  are exact for the
scheme.  Only grid values are produced.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .drivers import IncrementBlock, IncrementStream, NormalStream, SimGrid, cholesky
from .errors import ValidationError
from .params import CirParams, ModelParams

COLUMNS = ("spot", "variance", "gd", "gf")


def fte_step(y_tilde, cir: CirParams, dW, dt: float):
    """One full-truncation Euler step of the auxiliary CIR process."""
    yp = np.maximum(y_tilde, 0.0)
    return y_tilde + cir.kappa * (cir.theta - yp) * dt + cir.xi * np.sqrt(yp) * dW


def fte_foreign_step(gf_tilde, foreign: CirParams, v_bar, sigma, rho_sf: float, dW_f, dt: float):
    """FTE step for the foreign rate factor including the quanto drift."""
    gp = np.maximum(gf_tilde, 0.0)
    quanto = rho_sf * foreign.xi * sigma * np.sqrt(v_bar * gp)
    drift = foreign.kappa * foreign.theta - foreign.kappa * gp - quanto
    return gf_tilde + drift * dt + foreign.xi * np.sqrt(gp) * dW_f


def log_euler_step(x_bar, gd_bar, gf_bar, h_integral: float, sigma, v_bar, dW_s, dt: float):
    """Euler step of log S with the shift difference integrated exactly."""
    sv = sigma * np.sqrt(v_bar)
    return x_bar + h_integral + (gd_bar - gf_bar - 0.5 * sv * sv) * dt + sv * dW_s


@dataclass
class PathRecord:
    """Simulated values at selected grid indices, arrays shaped (n_paths, n_dates).

    ``discount_d``/``discount_f`` are exp(-int_0^t r_bar) at the same dates.
    Unrequested factor columns are ``None``.
    """

    grid: SimGrid
    indices: np.ndarray
    spot: np.ndarray
    discount_d: np.ndarray
    discount_f: np.ndarray
    variance: np.ndarray | None = None
    gd: np.ndarray | None = None
    gf: np.ndarray | None = None

    @property
    def times(self) -> np.ndarray:
        return self.indices * self.grid.dt

    @property
    def n_paths(self) -> int:
        return self.spot.shape[0]

    def column(self, n: int) -> int:
        """Position of grid index ``n`` among the recorded dates."""
        pos = int(np.searchsorted(self.indices, n))
        if pos >= len(self.indices) or self.indices[pos] != n:
            raise ValidationError(f"grid index {n} was not recorded")
        return pos

    def spot_at(self, n: int) -> np.ndarray:
        return self.spot[:, self.column(n)]

    def discount_at(self, n: int) -> np.ndarray:
        return self.discount_d[:, self.column(n)]

    @property
    def terminal_spot(self) -> np.ndarray:
        return self.spot_at(self.grid.n_steps)

    @property
    def terminal_discount(self) -> np.ndarray:
        return self.discount_at(self.grid.n_steps)


@dataclass(frozen=True)
class RecordSpec:
    """Which grid indices and factor columns to keep; ``indices=None`` keeps all."""

    indices: tuple[int, ...] | None = None
    factors: bool = True

    def resolve(self, grid: SimGrid) -> np.ndarray:
        if self.indices is None:
            return np.arange(grid.n_steps + 1)
        idx = np.unique(np.asarray(self.indices + (grid.n_steps,), dtype=int))
        if idx[0] < 0 or idx[-1] > grid.n_steps:
            raise ValidationError("record index outside the grid")
        return idx


class _Level:
    """State of one discretisation level advanced with (possibly summed) increments."""

    def __init__(self, params: ModelParams, grid: SimGrid, n_paths: int, record: RecordSpec,
                 probe: "ProbeSpec | None" = None):
        self.p = params
        self.grid = grid
        self.n = 0
        self.v = np.full(n_paths, params.variance.y0)
        self.gd = np.full(n_paths, params.domestic.y0)
        self.gf = np.full(n_paths, params.foreign.y0)
        self.x = np.full(n_paths, math.log(params.s0))
        self.int_rd = np.zeros(n_paths)
        self.int_rf = np.zeros(n_paths)
        self.rho_sf = params.corr.rho_sf
        dt = grid.dt
        self.h_d = [params.shift_d.integral(k * dt, (k + 1) * dt) for k in range(grid.n_steps)]
        self.h_f = [params.shift_f.integral(k * dt, (k + 1) * dt) for k in range(grid.n_steps)]
        self.lev_const = params.leverage.values.flat[0] if params.leverage.is_constant else None

        self.indices = record.resolve(grid)
        self.keep_factors = record.factors
        k = len(self.indices)
        self.out_s = np.empty((n_paths, k))
        self.out_dd = np.empty((n_paths, k))
        self.out_df = np.empty((n_paths, k))
        if self.keep_factors:
            self.out_v = np.empty((n_paths, k))
            self.out_gd = np.empty((n_paths, k))
            self.out_gf = np.empty((n_paths, k))
        self._next_rec = 0
        self.probe = probe
        if probe is not None:
            self.probe_sup = np.zeros(n_paths)
            self.probe_int = np.zeros(n_paths)
        self._record()

    def _factor(self, name: str) -> np.ndarray:
        return {"variance": self.v, "gd": self.gd, "gf": self.gf}[name]

    def _record(self):
        if self.probe is not None:
            yp = np.maximum(self._factor(self.probe.process), 0.0)
            np.maximum(self.probe_sup, yp, out=self.probe_sup)
        if self._next_rec < len(self.indices) and self.indices[self._next_rec] == self.n:
            j = self._next_rec
            self.out_s[:, j] = np.exp(self.x)
            self.out_dd[:, j] = np.exp(-self.int_rd)
            self.out_df[:, j] = np.exp(-self.int_rf)
            if self.keep_factors:
                self.out_v[:, j] = np.maximum(self.v, 0.0)
                self.out_gd[:, j] = np.maximum(self.gd, 0.0)
                self.out_gf[:, j] = np.maximum(self.gf, 0.0)
            self._next_rec += 1

    def advance(self, dw: np.ndarray):
        p, dt, n = self.p, self.grid.dt, self.n
        t_n = n * dt
        v_bar = np.maximum(self.v, 0.0)
        gd_bar = np.maximum(self.gd, 0.0)
        gf_bar = np.maximum(self.gf, 0.0)
        if self.lev_const is not None:
            sigma = self.lev_const
        else:
            sigma = p.leverage.eval(t_n, np.exp(self.x))
        if self.probe is not None:
            self.probe_int += np.maximum(self._factor(self.probe.process), 0.0) * dt

        self.v = fte_step(self.v, p.variance, dw[:, 1], dt)
        self.gd = fte_step(self.gd, p.domestic, dw[:, 2], dt)
        self.gf = fte_foreign_step(self.gf, p.foreign, v_bar, sigma, self.rho_sf, dw[:, 3], dt)
        hd, hf = self.h_d[n], self.h_f[n]
        self.x = log_euler_step(self.x, gd_bar, gf_bar, hd - hf, sigma, v_bar, dw[:, 0], dt)
        self.int_rd += gd_bar * dt + hd
        self.int_rf += gf_bar * dt + hf
        self.n = n + 1
        self._record()

    def result(self) -> PathRecord:
        kw = {}
        if self.keep_factors:
            kw = {"variance": self.out_v, "gd": self.out_gd, "gf": self.out_gf}
        return PathRecord(self.grid, self.indices, self.out_s, self.out_dd, self.out_df, **kw)


@dataclass(frozen=True)
class ProbeSpec:
    """Pathwise functional of one CIR factor: sup of y_bar over the grid and its time integral."""

    process: str = "variance"

    def __post_init__(self):
        if self.process not in ("variance", "gd", "gf"):
            raise ValidationError(f"unknown process {self.process!r}")


def simulate_path(params: ModelParams, grid: SimGrid, block: IncrementBlock,
                  record_spec: RecordSpec = RecordSpec()) -> PathRecord:
    """Advance all factors through the increments of ``block``."""
    if block.n_steps != grid.n_steps:
        raise ValidationError("increment block does not match the grid")
    level = _Level(params, grid, block.n_paths, record_spec)
    for n in range(grid.n_steps):
        level.advance(block.values[n])
    return level.result()


def level_ratios(grids: Sequence[SimGrid]) -> list[int]:
    fine = max(g.n_steps for g in grids)
    ratios = []
    for g in grids:
        if fine % g.n_steps:
            raise ValidationError(
                f"dates not alignable: {g.n_steps} steps do not divide the finest {fine}")
        ratios.append(fine // g.n_steps)
    return ratios


def simulate_coupled(params: ModelParams, grids: Sequence[SimGrid], n_paths: int, seed: int,
                     batch_index: int, records: Sequence[RecordSpec],
                     probe: ProbeSpec | None = None,
                     chol: np.ndarray | None = None) -> list[_Level]:
    """Simulate several step sizes on one Brownian path set.

    Increments are drawn on the finest grid and summed for coarser ones; a
    single-grid call is the ordinary simulation of one batch.
    """
    ratios = level_ratios(grids)
    fine = grids[ratios.index(1)] if 1 in ratios else None
    if fine is None:
        raise ValidationError("finest level missing")
    if chol is None:
        chol = cholesky(params.corr)
    stream = IncrementStream(chol, fine.dt, seed, batch_index, n_paths)
    levels = [_Level(params, g, n_paths, r, probe) for g, r in zip(grids, records)]
    acc = [np.zeros((n_paths, 4)) if r > 1 else None for r in ratios]
    for k in range(fine.n_steps):
        dw = stream.next()
        for lvl, r, a in zip(levels, ratios, acc):
            if r == 1:
                lvl.advance(dw)
            else:
                a += dw
                if (k + 1) % r == 0:
                    lvl.advance(a)
                    a[...] = 0.0
    return levels


def simulate_cir(cir: CirParams, grids: Sequence[SimGrid], n_paths: int, seed: int,
                 batch_index: int) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Standalone FTE paths of one CIR process on coupled grids.

    Returns per level ``(y_bar_T, sup_n y_bar_n, sum_n y_bar_n dt)``.
    """
    ratios = level_ratios(grids)
    fine = grids[ratios.index(1)]
    normals = NormalStream(seed, batch_index)
    sq = math.sqrt(fine.dt)
    y = [np.full(n_paths, float(cir.y0)) for _ in grids]
    sup = [np.maximum(yy, 0.0) for yy in y]
    integ = [np.zeros(n_paths) for _ in grids]
    acc = [np.zeros(n_paths) for _ in grids]
    for k in range(fine.n_steps):
        dw = normals.normals(n_paths) * sq
        for i, (g, r) in enumerate(zip(grids, ratios)):
            acc[i] += dw
            if (k + 1) % r == 0:
                yp = np.maximum(y[i], 0.0)
                integ[i] += yp * g.dt
                y[i] = fte_step(y[i], cir, acc[i], g.dt)
                np.maximum(sup[i], y[i], out=sup[i])
                acc[i][...] = 0.0
    return [(np.maximum(yy, 0.0), s, it) for yy, s, it in zip(y, sup, integ)]


def write_paths_csv(record: PathRecord, path) -> None:
    """Debug dump: one row per (path, recorded date) with columns path,t,S,v,gd,gf."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "t", "S", "v", "gd", "gf"])
        times = record.times
        for i in range(record.n_paths):
            for j, t in enumerate(times):
                row = [i, repr(float(t)), repr(float(record.spot[i, j]))]
                for col in (record.variance, record.gd, record.gf):
                    row.append("" if col is None else repr(float(col[i, j])))
                w.writerow(row)
