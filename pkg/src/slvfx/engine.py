"""Monte Carlo pricing, convergence studies and moment probes.

Paths are simulated in fixed-size batches; batch ``i`` always uses substream
``(seed, i)``.  Per-batch statistics are merged in batch order, so a result
depends only on (inputs, seed, batch_size) and not on the worker count.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .drivers import SimGrid, cholesky
from .errors import ValidationError
from .params import ModelParams
from .payoffs import Abdc, PayoffSpec, payoff_value, required_indices
from .simulator import ProbeSpec, RecordSpec, simulate_cir, simulate_coupled, write_paths_csv

Z95 = 1.96
DEFAULT_BATCH = 50_000


@dataclass
class RunningStats:
    """Count, mean and centred sum of squares; merged with Chan's update."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def of(cls, x: np.ndarray) -> "RunningStats":
        x = np.asarray(x, dtype=float)
        if x.size == 0:
            return cls()
        if np.all(x == x.flat[0]):
            return cls(int(x.size), float(x.flat[0]), 0.0)
        mu = float(np.mean(x))
        return cls(int(x.size), mu, float(np.sum((x - mu) ** 2)))

    def merge(self, other: "RunningStats") -> "RunningStats":
        if other.n == 0:
            return self
        if self.n == 0:
            return RunningStats(other.n, other.mean, other.m2)
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return RunningStats(n, mean, m2)

    @property
    def std_error(self) -> float:
        if self.n < 2:
            return 0.0
        return math.sqrt(max(self.m2, 0.0) / (self.n - 1) / self.n)


def _batches(n_paths: int, batch_size: int) -> list[int]:
    if n_paths < 2:
        raise ValidationError("n_paths too small: need at least 2")
    if batch_size < 1:
        raise ValidationError("batch_size must be positive")
    full, rest = divmod(n_paths, batch_size)
    return [batch_size] * full + ([rest] if rest else [])


def _run_batches(fn: Callable[[int, int], list], sizes: list[int], threads: int) -> list:
    """Apply ``fn(batch_index, size)`` to every batch; results in batch order."""
    jobs = list(enumerate(sizes))
    if threads <= 1 or len(jobs) == 1:
        return [fn(i, m) for i, m in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


@dataclass
class PricingResult:
    estimate: float
    std_error: float
    ci95: tuple[float, float]
    n_paths: int
    steps_per_year: int
    seed: int
    wall_time: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @classmethod
    def from_stats(cls, stats: RunningStats, steps_per_year: int, seed: int,
                   wall_time: float = 0.0, diagnostics: dict | None = None) -> "PricingResult":
        se = stats.std_error
        return cls(stats.mean, se, (stats.mean - Z95 * se, stats.mean + Z95 * se), stats.n,
                   steps_per_year, seed, wall_time, diagnostics or {})

    def to_dict(self, include_timing: bool = True) -> dict:
        out = {
            "estimate": self.estimate,
            "std_error": self.std_error,
            "ci95": [self.ci95[0], self.ci95[1]],
            "n_paths": self.n_paths,
            "steps_per_year": self.steps_per_year,
            "seed": self.seed,
        }
        if include_timing:
            out["wall_time"] = self.wall_time
        if self.diagnostics:
            out["diagnostics"] = dict(sorted(self.diagnostics.items()))
        return out

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2) + "\n"


def _abdc_events(spec: Abdc, path) -> tuple[np.ndarray, np.ndarray]:
    c = spec.contract
    cols = [path.column(path.grid.index_of(t)) for t in c.fixing_dates]
    s = path.spot[:, cols]
    return (s >= c.b_uo).any(axis=1), (s <= c.b_di).any(axis=1)


def price(params: ModelParams, grid: SimGrid, spec: PayoffSpec, n_paths: int, seed: int,
          batch_size: int = DEFAULT_BATCH, threads: int = 1,
          dump_dir: str | Path | None = None) -> PricingResult:
    """Monte Carlo estimate of E[exp(-int r_bar_d) f(S_bar)] with a 95% CI."""
    start = time.perf_counter()
    sizes = _batches(n_paths, batch_size)
    record = RecordSpec(required_indices(spec, grid), factors=dump_dir is not None)
    chol = cholesky(params.corr)

    def run(i: int, m: int):
        (level,) = simulate_coupled(params, [grid], m, seed, i, [record], chol=chol)
        path = level.result()
        if dump_dir is not None:
            write_paths_csv(path, Path(dump_dir) / f"batch_{i:05d}.csv")
        extra = None
        if isinstance(spec, Abdc):
            er, ki = _abdc_events(spec, path)
            extra = (RunningStats.of(er.astype(float)), RunningStats.of(ki.astype(float)))
        return RunningStats.of(payoff_value(spec, path)), extra

    total, er_tot, ki_tot = RunningStats(), RunningStats(), RunningStats()
    for stats, extra in _run_batches(run, sizes, threads):
        total = total.merge(stats)
        if extra is not None:
            er_tot, ki_tot = er_tot.merge(extra[0]), ki_tot.merge(extra[1])
    diag = {}
    if isinstance(spec, Abdc):
        diag = {"er_probability": er_tot.mean, "ki_probability": ki_tot.mean}
    return PricingResult.from_stats(total, grid.steps_per_year, seed,
                                    time.perf_counter() - start, diag)


def csv_text(header: Sequence[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, float) else v) for v in row])
    return buf.getvalue()


@dataclass
class ConvergenceRow:
    steps_per_year: int
    estimate: float
    std_error: float
    difference: float | None
    diff_std_error: float | None
    order: float | None


@dataclass
class ConvergenceTable:
    rows: list[ConvergenceRow]
    n_paths: int
    seed: int

    HEADER = ("steps_per_year", "estimate", "std_error", "difference", "diff_std_error", "order")

    def to_csv(self) -> str:
        return csv_text(self.HEADER, [[r.steps_per_year, r.estimate, r.std_error, r.difference,
                                   r.diff_std_error, r.order] for r in self.rows])

    @property
    def orders(self) -> list[float | None]:
        return [r.order for r in self.rows]


def empirical_orders(estimates: Sequence[float]) -> tuple[list[float | None], list[float | None]]:
    """Differences ``e[i-1] - e[i]`` and orders ``log2(|d[i-1]| / |d[i]|)``.

    Differences start at the second row and orders at the third; a zero
    difference leaves the order undefined (``None``).
    """
    diffs: list[float | None] = [None]
    for a, b in zip(estimates, estimates[1:]):
        diffs.append(a - b)
    orders: list[float | None] = [None, None]
    for d0, d1 in zip(diffs[1:], diffs[2:]):
        orders.append(math.log2(abs(d0) / abs(d1)) if d0 and d1 else None)
    return diffs, orders[: len(estimates)]


def convergence_study(params: ModelParams, spec: PayoffSpec, steps_list: Sequence[int],
                      n_paths: int, seed: int, maturity: float | None = None,
                      batch_size: int = DEFAULT_BATCH, threads: int = 1) -> ConvergenceTable:
    """Price on several step sizes sharing one fine Brownian path set per batch."""
    steps = [int(s) for s in steps_list]
    if len(steps) < 2 or any(b <= a for a, b in zip(steps, steps[1:])):
        raise ValidationError("steps_list must be strictly increasing with at least two entries")
    if maturity is None:
        if not isinstance(spec, Abdc):
            raise ValidationError("maturity is required for this payoff")
        maturity = spec.contract.expiry
    grids = [SimGrid(maturity, s) for s in steps]
    try:
        records = [RecordSpec(required_indices(spec, g), factors=False) for g in grids]
    except ValidationError as exc:
        raise ValidationError(f"dates not alignable: {exc}") from exc
    sizes = _batches(n_paths, batch_size)
    chol = cholesky(params.corr)

    def run(i: int, m: int):
        levels = simulate_coupled(params, grids, m, seed, i, records, chol=chol)
        vals = [payoff_value(spec, lvl.result()) for lvl in levels]
        diffs = [RunningStats.of(a - b) for a, b in zip(vals, vals[1:])]
        return [RunningStats.of(v) for v in vals], diffs

    level_stats = [RunningStats() for _ in grids]
    diff_stats = [RunningStats() for _ in grids[1:]]
    for lv, df in _run_batches(run, sizes, threads):
        level_stats = [a.merge(b) for a, b in zip(level_stats, lv)]
        diff_stats = [a.merge(b) for a, b in zip(diff_stats, df)]

    estimates = [s.mean for s in level_stats]
    diffs, orders = empirical_orders(estimates)
    rows = []
    for i, (s, st) in enumerate(zip(steps, level_stats)):
        dse = diff_stats[i - 1].std_error if i else None
        rows.append(ConvergenceRow(s, st.mean, st.std_error, diffs[i], dse, orders[i]))
    return ConvergenceTable(rows, n_paths, seed)


@dataclass
class StrongErrorTable:
    """E|S_T(dt_i) - S_T(dt_{i+1})| for successive coupled levels."""

    steps_per_year: list[int]
    mean_abs_diff: list[float]
    std_errors: list[float]
    n_paths: int
    seed: int

    def to_csv(self) -> str:
        rows = [[f"{a}-{b}", m, se] for a, b, m, se in
                zip(self.steps_per_year, self.steps_per_year[1:], self.mean_abs_diff, self.std_errors)]
        return csv_text(("steps_pair", "mean_abs_diff", "std_error"), rows)


def strong_error_study(params: ModelParams, maturity: float, steps_list: Sequence[int],
                       n_paths: int, seed: int, discounted: bool = False,
                       batch_size: int = DEFAULT_BATCH, threads: int = 1) -> StrongErrorTable:
    """Coupled pathwise differences of the terminal (optionally discounted) spot."""
    steps = [int(s) for s in steps_list]
    if len(steps) < 2 or any(b <= a for a, b in zip(steps, steps[1:])):
        raise ValidationError("steps_list must be strictly increasing with at least two entries")
    grids = [SimGrid(maturity, s) for s in steps]
    records = [RecordSpec((), factors=False) for _ in grids]
    sizes = _batches(n_paths, batch_size)
    chol = cholesky(params.corr)

    def run(i: int, m: int):
        levels = simulate_coupled(params, grids, m, seed, i, records, chol=chol)
        ends = []
        for lvl in levels:
            r = lvl.result()
            ends.append(r.terminal_spot * (r.terminal_discount if discounted else 1.0))
        return [RunningStats.of(np.abs(a - b)) for a, b in zip(ends, ends[1:])]

    stats = [RunningStats() for _ in grids[1:]]
    for res in _run_batches(run, sizes, threads):
        stats = [a.merge(b) for a, b in zip(stats, res)]
    return StrongErrorTable(steps, [s.mean for s in stats], [s.std_error for s in stats],
                            n_paths, seed)


@dataclass(frozen=True)
class ProbeSelector:
    """What to estimate per step size.

    ``kind``: ``"sup_power"`` for E[sup_n y_bar_n^p], ``"exp_integral"`` for
    E[exp(lam int_0^T y_bar)], ``"terminal_mean"`` for E[y_bar_T].
    """

    process: str = "variance"
    kind: str = "exp_integral"
    p: float | None = None
    lam: float | None = None

    def __post_init__(self):
        ProbeSpec(self.process)
        if self.kind == "sup_power":
            if self.p is None or not self.p >= 1.0:
                raise ValidationError("sup_power probe needs p >= 1")
        elif self.kind == "exp_integral":
            if self.lam is None or not self.lam > 0.0:
                raise ValidationError("exp_integral probe needs lambda > 0")
        elif self.kind != "terminal_mean":
            raise ValidationError(f"unknown probe kind {self.kind!r}")

    def functional(self, terminal, sup, integral) -> np.ndarray:
        if self.kind == "sup_power":
            return sup ** self.p
        if self.kind == "exp_integral":
            return np.exp(self.lam * integral)
        return terminal


@dataclass
class MomentProbeTable:
    selector: ProbeSelector
    steps_per_year: list[int]
    estimates: list[float]
    std_errors: list[float]
    n_paths: int
    seed: int

    def to_csv(self) -> str:
        return csv_text(("steps_per_year", "estimate", "std_error"),
                    [[s, e, se] for s, e, se in zip(self.steps_per_year, self.estimates, self.std_errors)])


def moment_probe(params: ModelParams, maturity: float, steps_list: Sequence[int],
                 selector: ProbeSelector, n_paths: int, seed: int,
                 batch_size: int = DEFAULT_BATCH, threads: int = 1) -> MomentProbeTable:
    """Estimate a moment functional of one CIR factor across a step-size ladder.

    The variance and domestic factors evolve autonomously and are simulated
    alone; the foreign factor carries the quanto drift and needs the full model.
    """
    steps = [int(s) for s in steps_list]
    grids = [SimGrid(maturity, s) for s in steps]
    sizes = _batches(n_paths, batch_size)
    cir = {"variance": params.variance, "gd": params.domestic, "gf": params.foreign}[selector.process]
    chol = cholesky(params.corr) if selector.process == "gf" else None

    def run(i: int, m: int):
        if selector.process == "gf":
            rec = [RecordSpec((), factors=True) for _ in grids]
            levels = simulate_coupled(params, grids, m, seed, i, rec, ProbeSpec("gf"), chol=chol)
            outs = [(lvl.result().gf[:, -1], lvl.probe_sup, lvl.probe_int) for lvl in levels]
        else:
            outs = simulate_cir(cir, grids, m, seed, i)
        return [RunningStats.of(selector.functional(*o)) for o in outs]

    stats = [RunningStats() for _ in grids]
    for res in _run_batches(run, sizes, threads):
        stats = [a.merge(b) for a, b in zip(stats, res)]
    return MomentProbeTable(selector, steps, [s.mean for s in stats],
                            [s.std_error for s in stats], n_paths, seed)
