"""Threshold and energy optimization for certified min-entropy.

All searches run over the symmetric partition family: the positive levels
``L_1 < ... < L_k`` parametrize the interval boundaries, mirrored around
the origin (plus 0 itself for an even number of outcomes).  The level
vector is optimized by multi-start Nelder-Mead simplex in a reparametrized
space ``L_j = L_{j-1} + exp(t_j)`` that keeps the ordering intact; an
optional outer stage searches the energy bound.

Every value reported here is the certified dual value of an actual solve
at the candidate point, so optimizer shortcomings can only under-report
the available randomness.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from . import conic
from .certify import CertificationInput, CertificationResult, guessing_probability
from .detection import (
    SymmetricPartitionSpec,
    effective_efficiency,
    expand_symmetric,
    heterodyne_probs,
    homodyne_probs,
    strip_partition,
)
from .states import EnergyBound

__all__ = [
    "OptimizerSettings",
    "OptimizationSpec",
    "Optimum",
    "SweepRow",
    "SweepResult",
    "certified_result",
    "optimize_levels",
    "optimize_mu_and_levels",
    "sweep",
    "write_sweep_csv",
    "read_sweep_csv",
]

DEFAULT_MU_INTERVAL = (1e-4, 0.5)


@dataclass(frozen=True)
class OptimizerSettings:
    """Budget of the derivative-free level search."""

    multi_starts: int = 5
    max_evaluations: int = 250   # per simplex start
    convergence_tol: float = 1e-7


@dataclass(frozen=True)
class OptimizationSpec:
    """What to optimize: detector family, outcome count and search ranges.

    ``mu`` is either a fixed energy bound (float), an interval to search
    (2-tuple), or None for the default search interval.  ``initial_levels``
    adds caller-supplied level vectors to the multi-start list, which is
    how sweeps chain warm starts from neighbouring configurations.
    """

    kind: str
    outcomes: int
    eta: float = 1.0
    phase_error: float = 0.0
    mu: float | tuple[float, float] | None = None
    level_box: tuple[float, float] = (0.1, 3.2)
    settings: OptimizerSettings = field(default_factory=OptimizerSettings)
    initial_levels: tuple[tuple[float, ...], ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in ("homodyne", "heterodyne"):
            raise ValueError(f"unknown detector kind {self.kind!r}")
        if self.outcomes < 2:
            raise ValueError("need at least two outcomes")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"efficiency must lie in (0, 1], got {self.eta}")
        if isinstance(self.mu, tuple):
            lo, hi = self.mu
            if not 0.0 <= lo < hi:
                raise ValueError(f"empty energy search interval {self.mu}")
        if not 0.0 < self.level_box[0] < self.level_box[1]:
            raise ValueError(f"invalid level search box {self.level_box}")

    @property
    def n_levels(self) -> int:
        return (self.outcomes - 1) // 2

    def fixed_mu(self) -> float:
        if not isinstance(self.mu, (int, float)) or isinstance(self.mu, bool):
            raise ValueError("this operation needs a fixed energy bound in the spec")
        return float(self.mu)

    def mu_interval(self) -> tuple[float, float]:
        if self.mu is None:
            return DEFAULT_MU_INTERVAL
        if isinstance(self.mu, tuple):
            return self.mu
        raise ValueError("this operation needs an energy search interval in the spec")


@dataclass
class Optimum:
    """Best configuration found, with its certified value."""

    mu: float
    levels: tuple[float, ...]
    hmin: float
    pg: float
    status: str
    evaluations: int


@dataclass
class SweepRow:
    param: float
    hmin: float
    pg: float
    mu: float
    levels: tuple[float, ...]
    status: str


@dataclass
class SweepResult:
    axis: str
    rows: list[SweepRow]


def certified_result(spec: OptimizationSpec, mu: float, levels: tuple[float, ...],
                     tolerances: conic.Tolerances | None = None) -> CertificationResult:
    """Certified solve of one concrete configuration.

    A homodyne phase error attenuates the displaced amplitude by
    ``|cos(phase_error)|``, so the equivalent ideal-phase efficiency is
    ``eta * cos^2(phase_error)``.  The heterodyne family uses the strip
    configuration (phase error assumed compensated in post-processing).
    """
    partition = expand_symmetric(SymmetricPartitionSpec(spec.outcomes, levels))
    if spec.kind == "homodyne":
        eta = (effective_efficiency(spec.eta, spec.phase_error)
               * abs(math.cos(spec.phase_error)))
        table = homodyne_probs(mu, eta, partition)
    else:
        table = heterodyne_probs(mu, spec.eta, strip_partition(partition.thresholds))
    inp = CertificationInput(EnergyBound(mu), table)
    return guessing_probability(inp, form="dual", tolerances=tolerances)


def _levels_to_t(levels: np.ndarray) -> np.ndarray:
    gaps = np.diff(np.concatenate(([0.0], levels)))
    return np.log(np.maximum(gaps, 1e-12))


def _t_to_levels(t: np.ndarray) -> np.ndarray:
    return np.cumsum(np.exp(np.clip(t, -30.0, 6.0)))


def _default_starts(spec: OptimizationSpec) -> list[np.ndarray]:
    """Evenly spaced level ladders at a few overall scales."""
    k = spec.n_levels
    lo, hi = spec.level_box
    scales = np.geomspace(max(lo, 0.2), hi, spec.settings.multi_starts)
    starts = [scale * (np.arange(1, k + 1) / k) for scale in scales]
    for extra in spec.initial_levels:
        arr = np.asarray(extra, dtype=float)
        if arr.shape == (k,) and np.all(np.diff(arr) > 0) and arr[0] > 0:
            starts.insert(0, arr)
    return starts


def optimize_levels(spec: OptimizationSpec, mu: float | None = None) -> Optimum:
    """Maximize certified min-entropy over the level vector at fixed mu.

    Runs Nelder-Mead from ``multi_starts`` ladder-shaped starting points
    (plus any supplied warm starts) in the order-preserving gap
    parametrization, then re-certifies the best point.  With no free
    levels (two outcomes) this is a single solve at threshold zero.
    """
    mu_val = float(mu) if mu is not None else spec.fixed_mu()
    k = spec.n_levels
    evaluations = 0

    if k == 0:
        res = certified_result(spec, mu_val, ())
        return Optimum(mu_val, (), res.min_entropy, res.pg, res.status, 1)

    best: dict = {"hmin": -np.inf, "levels": None, "result": None}
    failures = [0]

    def objective(t: np.ndarray) -> float:
        nonlocal evaluations
        evaluations += 1
        levels = _t_to_levels(t)
        res = certified_result(spec, mu_val, tuple(levels))
        if res.status != conic.OPTIMAL:
            failures[0] += 1
            return np.inf
        if res.min_entropy > best["hmin"]:
            best.update(hmin=res.min_entropy, levels=tuple(levels), result=res)
        return -res.min_entropy

    options = {
        "maxfev": spec.settings.max_evaluations,
        "fatol": spec.settings.convergence_tol,
        "xatol": 1e-4,
    }
    for start in _default_starts(spec):
        minimize(objective, _levels_to_t(start), method="Nelder-Mead", options=options)

    if best["result"] is None:
        raise RuntimeError(
            f"every level-search solve failed ({failures[0]} of {evaluations} evaluations)"
        )
    res = best["result"]
    return Optimum(mu_val, best["levels"], res.min_entropy, res.pg, res.status, evaluations)


def optimize_mu_and_levels(spec: OptimizationSpec) -> Optimum:
    """Maximize certified min-entropy over both the energy bound and levels.

    A coarse geometric grid over the search interval locates the basin
    (warm-starting each point's level search from its neighbour), then a
    bounded scalar search refines the energy bound.
    """
    lo, hi = spec.mu_interval()
    # The certified value flattens towards small energy, so the grid must
    # reach well below the percent scale to bracket interior optima.
    grid_lo = max(lo, min(1e-4, 0.25 * hi))
    grid = np.geomspace(grid_lo, hi, 10)
    settings_warm = replace(spec.settings, multi_starts=1)
    total_evals = 0

    best: Optimum | None = None
    warm: tuple[float, ...] | None = None
    grid_results: list[Optimum] = []
    for i, mu_val in enumerate(grid):
        sub = spec if i == 0 else replace(
            spec, settings=settings_warm,
            initial_levels=((warm,) if warm else ()) + spec.initial_levels,
        )
        opt = optimize_levels(sub, mu=mu_val)
        total_evals += opt.evaluations
        grid_results.append(opt)
        warm = opt.levels if opt.levels else None
        if best is None or opt.hmin > best.hmin:
            best = opt

    # Refine around the best grid point with warm-started inner searches.
    idx = int(np.argmax([o.hmin for o in grid_results]))
    bracket_lo = grid[max(idx - 1, 0)] if idx > 0 else max(lo, 0.5 * grid[0])
    bracket_hi = grid[min(idx + 1, len(grid) - 1)] if idx < len(grid) - 1 else hi
    warm_best = best.levels

    def scalar_objective(mu_val: float) -> float:
        nonlocal best, total_evals
        sub = replace(spec, settings=settings_warm,
                      initial_levels=((warm_best,) if warm_best else ())
                      + spec.initial_levels)
        opt = optimize_levels(sub, mu=mu_val)
        total_evals += opt.evaluations
        if opt.hmin > best.hmin:
            best = opt
        return -opt.hmin

    if bracket_hi > bracket_lo:
        minimize_scalar(scalar_objective, bounds=(bracket_lo, bracket_hi),
                        method="bounded", options={"xatol": 2e-4, "maxiter": 18})

    return Optimum(best.mu, best.levels, best.hmin, best.pg, best.status, total_evals)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


def _embed_levels(levels: tuple[float, ...], k: int) -> tuple[float, ...]:
    """Grow a level vector to length ``k`` by splitting the outer tail.

    The grown partition coarse-grains back to the original one, so its
    certified value can only improve on the donor configuration.
    """
    lv = list(levels)
    while len(lv) < k:
        lv.append((lv[-1] if lv else 0.4) + 0.8)
    return tuple(lv[:k])


def _optimize_chained(spec: OptimizationSpec, prev: Optimum) -> Optimum:
    """Energy-and-level search warm-started from a coarser configuration.

    Evaluates the embedded previous optimum at its own energy bound first
    (a refinement, so that value already dominates the donor), then
    refines the energy bound in a bracket around it.  Much cheaper than
    the cold grid search and monotone by construction.
    """
    lo, hi = DEFAULT_MU_INTERVAL if not isinstance(spec.mu, tuple) else spec.mu
    warm = _embed_levels(prev.levels, spec.n_levels) if spec.n_levels else ()
    sub = replace(spec, settings=replace(spec.settings, multi_starts=1),
                  initial_levels=((warm,) if warm else ()) + spec.initial_levels)

    best = optimize_levels(sub, mu=prev.mu)
    total_evals = best.evaluations

    def scalar_objective(mu_val: float) -> float:
        nonlocal best, total_evals
        inner = replace(sub, initial_levels=((best.levels,) if best.levels else ())
                        + sub.initial_levels)
        opt = optimize_levels(inner, mu=mu_val)
        total_evals += opt.evaluations
        if opt.hmin > best.hmin:
            best = opt
        return -opt.hmin

    # Optimal energy bounds shrink roughly fourfold per outcome doubling,
    # so the refinement bracket reaches well below the donor's optimum.
    minimize_scalar(scalar_objective,
                    bounds=(max(lo, 0.15 * prev.mu), min(hi, 2.2 * prev.mu)),
                    method="bounded", options={"xatol": 2e-4, "maxiter": 12})
    return Optimum(best.mu, best.levels, best.hmin, best.pg, best.status, total_evals)


def _sweep_point(args) -> SweepRow:
    axis, param, spec = args
    try:
        if axis == "mu":
            opt = optimize_levels(spec, mu=param)
        else:
            opt = (optimize_mu_and_levels(spec)
                   if not isinstance(spec.mu, (int, float))
                   else optimize_levels(spec))
        return SweepRow(param, opt.hmin, opt.pg, opt.mu, opt.levels, opt.status)
    except Exception as exc:  # per-point failures must not kill the sweep
        return SweepRow(param, math.nan, math.nan, math.nan, (), f"error: {exc}")


def _spec_for_point(axis: str, param: float, spec: OptimizationSpec) -> OptimizationSpec:
    if axis == "mu":
        return spec
    if axis == "eta":
        return replace(spec, eta=float(param))
    if axis == "phase_error":
        if spec.kind != "homodyne":
            raise ValueError("phase-error sweeps apply to homodyne detection")
        return replace(spec, phase_error=float(param))
    if axis == "outcomes":
        d = int(param)
        if d != param or d < 2:
            raise ValueError(f"outcome counts must be integers >= 2, got {param}")
        return replace(spec, outcomes=d)
    raise ValueError(f"unknown sweep axis {axis!r}")


def sweep(axis: str, grid, spec: OptimizationSpec, jobs: int = 1,
          progress=None) -> SweepResult:
    """Optimize every grid point along one axis and collect the rows.

    Points fail independently: a failed solve is recorded in the row
    status and the sweep continues.  The ``outcomes`` axis always runs
    sequentially in increasing order, chaining each optimum into the next
    configuration's starting set (a refinement, so the certified values
    inherit monotonicity); other axes run in ``jobs`` parallel processes.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("sweep grid is empty")

    if axis == "outcomes":
        order = np.argsort(grid)
        rows: list[SweepRow] = [None] * len(grid)  # type: ignore[list-item]
        prev: Optimum | None = None
        search_mu = not isinstance(spec.mu, (int, float))
        for pos in order:
            sub = _spec_for_point(axis, grid[pos], spec)
            try:
                if prev is None:
                    opt = (optimize_mu_and_levels(sub) if search_mu
                           else optimize_levels(sub))
                elif search_mu:
                    opt = _optimize_chained(sub, prev)
                else:
                    embedded = _embed_levels(prev.levels, sub.n_levels)
                    warmed = replace(sub, initial_levels=(embedded,)
                                     + sub.initial_levels)
                    opt = optimize_levels(warmed)
                row = SweepRow(grid[pos], opt.hmin, opt.pg, opt.mu,
                               opt.levels, opt.status)
                prev = opt
            except Exception as exc:
                row = SweepRow(grid[pos], math.nan, math.nan, math.nan, (),
                               f"error: {exc}")
            if progress is not None:
                progress(grid[pos], row)
            rows[pos] = row
        return SweepResult(axis, rows)

    tasks = [(axis, param, _spec_for_point(axis, param, spec)) for param in grid]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_point, tasks))
        if progress is not None:
            for param, row in zip(grid, rows):
                progress(param, row)
    else:
        rows = []
        for task in tasks:
            row = _sweep_point(task)
            if progress is not None:
                progress(task[1], row)
            rows.append(row)
    return SweepResult(axis, rows)


# ---------------------------------------------------------------------------
# Sweep file format
# ---------------------------------------------------------------------------


def write_sweep_csv(path: str, result: SweepResult) -> None:
    """Write sweep rows as ``param,hmin,pg,mu,levels,status``."""
    with open(path, "w", newline="") as fh:
        fh.write("param,hmin,pg,mu,levels,status\n")
        for row in result.rows:
            levels = ";".join(format(l, ".15g") for l in row.levels)
            fh.write(
                f"{format(row.param, '.15g')},{format(row.hmin, '.15g')},"
                f"{format(row.pg, '.15g')},{format(row.mu, '.15g')},"
                f"{levels},{row.status}\n"
            )


def read_sweep_csv(path: str) -> SweepResult:
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "param,hmin,pg,mu,levels,status":
            raise ValueError(f"{path}: unexpected header {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            param, hmin, pg, mu, levels, status = line.split(",", 5)
            lv = tuple(float(v) for v in levels.split(";")) if levels else ()
            rows.append(SweepRow(float(param), float(hmin), float(pg),
                                 float(mu), lv, status))
    return SweepResult("unknown", rows)
