"""Conditional outcome distributions for d-outcome quadrature receivers.

Homodyne receivers sample one quadrature; their outcomes are grouped into
intervals of the real line.  Heterodyne receivers sample both quadratures;
their outcomes are grouped into regions of the phase plane built from a
small family of primitives (vertical strips, angular sectors, annuli and
sector-annulus products).  Either way the result is a 2 x d table p(b|x),
the only object the certification layer ever sees.

Quadrature units follow the convention in which the displaced outcome
density for input ``x`` is ``exp(-(X - (-1)^x sqrt(2*eta*mu))^2)/sqrt(pi)``
for homodyne and
``exp(-(X - (-1)^x sqrt(eta*mu))^2 - Y^2)/pi`` for heterodyne.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np
from scipy.integrate import quad
from scipy.special import erf

__all__ = [
    "HomodynePartition",
    "SymmetricPartitionSpec",
    "Strip",
    "Sector",
    "Annulus",
    "SectorAnnulus",
    "PhaseSpacePartition",
    "DetectorScenario",
    "ConditionalDistribution",
    "RawSampleSet",
    "homodyne_probs",
    "heterodyne_probs",
    "effective_efficiency",
    "expand_symmetric",
    "empirical_probs",
    "scenario_probs",
    "strip_partition",
    "sector_partition",
    "annulus_partition",
    "sector_annulus_partition",
    "merge_outcomes",
    "write_probs_csv",
    "read_probs_csv",
    "write_samples_csv",
    "read_samples_csv",
]

_SQRT_PI = math.sqrt(math.pi)
_TWO_PI = 2.0 * math.pi

# Sample count for the Monte-Carlo tiling check of phase-space partitions.
_TILING_SAMPLES = 4096
_TILING_SEED = 20260810


@dataclass(frozen=True)
class HomodynePartition:
    """Interval partition of the real axis into ``d`` outcomes.

    ``thresholds`` holds the ``d - 1`` finite interior boundaries in
    strictly increasing order; the outer boundaries at minus/plus infinity
    are implicit.  Outcome ``b`` is the half-open interval
    ``[X_b, X_{b+1})``.
    """

    thresholds: tuple[float, ...]

    def __init__(self, thresholds: Iterable[float]):
        ts = tuple(float(t) for t in thresholds)
        if len(ts) == 0:
            raise ValueError("a partition needs at least one threshold (d >= 2)")
        if not all(math.isfinite(t) for t in ts):
            raise ValueError("thresholds must be finite")
        if any(a >= b for a, b in zip(ts, ts[1:])):
            raise ValueError("thresholds must be strictly increasing")
        object.__setattr__(self, "thresholds", ts)

    @property
    def outcomes(self) -> int:
        return len(self.thresholds) + 1

    def edges(self) -> np.ndarray:
        """All ``d + 1`` interval edges including the infinite ones."""
        return np.concatenate(([-np.inf], self.thresholds, [np.inf]))

    def bin_samples(self, x_values: np.ndarray) -> np.ndarray:
        """Outcome index for each sample, using the [X_b, X_{b+1}) rule."""
        return np.searchsorted(self.thresholds, np.asarray(x_values, dtype=float), side="right")


@dataclass(frozen=True)
class SymmetricPartitionSpec:
    """Symmetric interval partition described by its positive levels.

    A ``d``-outcome symmetric partition uses thresholds mirrored around the
    origin; even ``d`` additionally includes 0.  Only the
    ``floor((d - 1)/2)`` positive levels ``L_1 < L_2 < ...`` are free.
    """

    outcomes: int
    levels: tuple[float, ...] = ()

    def __init__(self, outcomes: int, levels: Iterable[float] = ()):
        d = int(outcomes)
        lv = tuple(float(l) for l in levels)
        if d < 2:
            raise ValueError("need at least two outcomes")
        if len(lv) != (d - 1) // 2:
            raise ValueError(
                f"{d} outcomes require {(d - 1) // 2} levels, got {len(lv)}"
            )
        if any(l <= 0 or not math.isfinite(l) for l in lv):
            raise ValueError("levels must be positive and finite")
        if any(a >= b for a, b in zip(lv, lv[1:])):
            raise ValueError("levels must be strictly increasing")
        object.__setattr__(self, "outcomes", d)
        object.__setattr__(self, "levels", lv)


def expand_symmetric(spec: SymmetricPartitionSpec) -> HomodynePartition:
    """Expand a symmetric level spec into explicit thresholds.

    ``d = 2`` gives {0}; odd ``d`` gives {-L_k ... -L_1, L_1 ... L_k};
    even ``d`` additionally inserts 0 in the middle.
    """
    negatives = [-l for l in reversed(spec.levels)]
    positives = list(spec.levels)
    if spec.outcomes % 2 == 0:
        return HomodynePartition(negatives + [0.0] + positives)
    return HomodynePartition(negatives + positives)


# ---------------------------------------------------------------------------
# Phase-space region primitives
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Strip:
    """Vertical band ``x_min <= X < x_max`` covering all Y."""

    x_min: float
    x_max: float

    def __post_init__(self) -> None:
        if not self.x_min < self.x_max:
            raise ValueError("strip needs x_min < x_max")

    def contains(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        return (X >= self.x_min) & (X < self.x_max)

    def gaussian_mass(self, mx: float, my: float) -> float:
        lo = -1.0 if math.isinf(self.x_min) else erf(self.x_min - mx)
        hi = 1.0 if math.isinf(self.x_max) else erf(self.x_max - mx)
        return 0.5 * (hi - lo)


def _radial_integral(r_lo: float, r_hi: float, a: np.ndarray) -> np.ndarray:
    """``int_{r_lo}^{r_hi} r exp(-r^2 + 2 a r) dr`` for an array of ``a``.

    Completing the square gives an exact expression in erf and exp; the
    result is written so the ``exp(a^2)`` factor never overflows for the
    sub-unit displacements that occur here (a^2 <= eta*mu <= 1).
    """
    a = np.asarray(a, dtype=float)
    ea2 = np.exp(a * a)
    u_lo = r_lo - a
    if math.isinf(r_hi):
        gauss = np.exp(-u_lo * u_lo)
        erfs = 1.0 - erf(u_lo)
    else:
        u_hi = r_hi - a
        gauss = np.exp(-u_lo * u_lo) - np.exp(-u_hi * u_hi)
        erfs = erf(u_hi) - erf(u_lo)
    return 0.5 * ea2 * gauss + 0.5 * _SQRT_PI * a * ea2 * erfs


def _polar_mass(theta_lo: float, theta_hi: float, r_lo: float, r_hi: float,
                mx: float, my: float) -> float:
    """Gaussian mass of a sector-annulus region by angular quadrature.

    The radial part of the phase-space integral is exact; only the angular
    direction is integrated adaptively.
    """
    m2 = mx * mx + my * my

    def integrand(theta: float) -> float:
        a = mx * math.cos(theta) + my * math.sin(theta)
        return float(_radial_integral(r_lo, r_hi, a))

    val, _ = quad(integrand, theta_lo, theta_hi, epsabs=1e-12, epsrel=1e-11, limit=400)
    return math.exp(-m2) / math.pi * val


@dataclass(frozen=True)
class Sector:
    """Angular wedge ``theta_lo <= theta < theta_hi`` (full radial extent)."""

    theta_lo: float
    theta_hi: float

    def __post_init__(self) -> None:
        span = self.theta_hi - self.theta_lo
        if not 0.0 < span <= _TWO_PI:
            raise ValueError("sector span must lie in (0, 2*pi]")

    def contains(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        theta = np.arctan2(Y, X)
        delta = np.mod(theta - self.theta_lo, _TWO_PI)
        return delta < (self.theta_hi - self.theta_lo)

    def gaussian_mass(self, mx: float, my: float) -> float:
        return _polar_mass(self.theta_lo, self.theta_hi, 0.0, math.inf, mx, my)


@dataclass(frozen=True)
class Annulus:
    """Ring ``r_lo <= r < r_hi`` (full angular extent)."""

    r_lo: float
    r_hi: float

    def __post_init__(self) -> None:
        if self.r_lo < 0.0 or not self.r_lo < self.r_hi:
            raise ValueError("annulus needs 0 <= r_lo < r_hi")

    def contains(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        r = np.hypot(X, Y)
        return (r >= self.r_lo) & (r < self.r_hi)

    def gaussian_mass(self, mx: float, my: float) -> float:
        return _polar_mass(0.0, _TWO_PI, self.r_lo, self.r_hi, mx, my)


@dataclass(frozen=True)
class SectorAnnulus:
    """Intersection of a sector and an annulus."""

    theta_lo: float
    theta_hi: float
    r_lo: float
    r_hi: float

    def __post_init__(self) -> None:
        span = self.theta_hi - self.theta_lo
        if not 0.0 < span <= _TWO_PI:
            raise ValueError("sector span must lie in (0, 2*pi]")
        if self.r_lo < 0.0 or not self.r_lo < self.r_hi:
            raise ValueError("needs 0 <= r_lo < r_hi")

    def contains(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        r = np.hypot(X, Y)
        theta = np.arctan2(Y, X)
        delta = np.mod(theta - self.theta_lo, _TWO_PI)
        return (delta < (self.theta_hi - self.theta_lo)) & (r >= self.r_lo) & (r < self.r_hi)

    def gaussian_mass(self, mx: float, my: float) -> float:
        return _polar_mass(self.theta_lo, self.theta_hi, self.r_lo, self.r_hi, mx, my)


RegionPiece = Union[Strip, Sector, Annulus, SectorAnnulus]
Region = tuple[RegionPiece, ...]


@dataclass(frozen=True)
class PhaseSpacePartition:
    """Partition of the phase plane into ``d`` regions.

    Each region is a finite union of primitives.  Construction runs a
    Monte-Carlo membership check: sampled points must land in exactly one
    primitive across the whole partition, which verifies both the tiling
    of the plane and the mutual disjointness of all pieces.
    """

    regions: tuple[Region, ...]

    def __init__(self, regions: Sequence[Sequence[RegionPiece] | RegionPiece]):
        normalized: list[Region] = []
        for region in regions:
            if isinstance(region, (Strip, Sector, Annulus, SectorAnnulus)):
                normalized.append((region,))
            else:
                pieces = tuple(region)
                if not pieces:
                    raise ValueError("regions must contain at least one piece")
                normalized.append(pieces)
        if len(normalized) < 2:
            raise ValueError("need at least two regions")
        object.__setattr__(self, "regions", tuple(normalized))
        self._check_tiling()

    @property
    def outcomes(self) -> int:
        return len(self.regions)

    def _check_tiling(self) -> None:
        rng = np.random.default_rng(_TILING_SEED)
        pts = rng.normal(scale=2.0, size=(_TILING_SAMPLES, 2))
        X, Y = pts[:, 0], pts[:, 1]
        counts = np.zeros(_TILING_SAMPLES, dtype=int)
        for region in self.regions:
            for piece in region:
                counts += piece.contains(X, Y)
        if np.any(counts == 0):
            raise ValueError("regions do not cover the phase plane")
        if np.any(counts > 1):
            raise ValueError("regions overlap on a set of positive measure")

    def is_strips(self) -> bool:
        return all(len(r) == 1 and isinstance(r[0], Strip) for r in self.regions)

    def strip_thresholds(self) -> HomodynePartition:
        """Interior strip boundaries, for strip-only partitions."""
        if not self.is_strips():
            raise ValueError("partition is not made of single strips")
        strips = sorted((r[0] for r in self.regions), key=lambda s: s.x_min)
        return HomodynePartition([s.x_max for s in strips[:-1]])

    def bin_samples(self, points: np.ndarray) -> np.ndarray:
        """Region index per (X, Y) sample; lowest-index region wins on boundaries."""
        points = np.asarray(points, dtype=float)
        X, Y = points[:, 0], points[:, 1]
        out = np.full(len(points), -1, dtype=int)
        for idx, region in enumerate(self.regions):
            member = np.zeros(len(points), dtype=bool)
            for piece in region:
                member |= piece.contains(X, Y)
            out = np.where((out < 0) & member, idx, out)
        if np.any(out < 0):
            raise ValueError("a sample fell outside every region")
        return out


def strip_partition(thresholds: Iterable[float]) -> PhaseSpacePartition:
    """Vertical-strip partition with the given interior boundaries."""
    edges = HomodynePartition(thresholds).edges()
    return PhaseSpacePartition(
        [Strip(float(lo), float(hi)) for lo, hi in zip(edges[:-1], edges[1:])]
    )


def sector_partition(n: int, offset: float = 0.0) -> PhaseSpacePartition:
    """``n`` equal angular sectors starting at ``offset``."""
    if n < 2:
        raise ValueError("need at least two sectors")
    width = _TWO_PI / n
    return PhaseSpacePartition(
        [Sector(offset + k * width, offset + (k + 1) * width) for k in range(n)]
    )


def annulus_partition(radii: Iterable[float]) -> PhaseSpacePartition:
    """Concentric rings split at the given increasing radii."""
    rs = [0.0] + [float(r) for r in radii] + [math.inf]
    if any(a >= b for a, b in zip(rs, rs[1:])):
        raise ValueError("radii must be positive and strictly increasing")
    return PhaseSpacePartition([Annulus(lo, hi) for lo, hi in zip(rs[:-1], rs[1:])])


def sector_annulus_partition(n: int, radii: Iterable[float],
                             offset: float = 0.0) -> PhaseSpacePartition:
    """Polar grid of ``n`` sectors crossed with rings at ``radii``."""
    if n < 1:
        raise ValueError("need at least one sector")
    rs = [0.0] + [float(r) for r in radii] + [math.inf]
    if any(a >= b for a, b in zip(rs, rs[1:])):
        raise ValueError("radii must be positive and strictly increasing")
    width = _TWO_PI / n
    regions: list[SectorAnnulus] = []
    for r_lo, r_hi in zip(rs[:-1], rs[1:]):
        for k in range(n):
            regions.append(
                SectorAnnulus(offset + k * width, offset + (k + 1) * width, r_lo, r_hi)
            )
    return PhaseSpacePartition(regions)


# ---------------------------------------------------------------------------
# Distributions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionalDistribution:
    """The 2 x d table p(b|x) for binary input and d outcomes."""

    table: np.ndarray

    def __init__(self, table: np.ndarray):
        arr = np.array(table, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != 2 or arr.shape[1] < 2:
            raise ValueError(f"table must be 2 x d with d >= 2, got shape {arr.shape}")
        if np.any(arr < -1e-12) or np.any(arr > 1.0 + 1e-12):
            raise ValueError("probabilities must lie in [0, 1]")
        sums = arr.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-9):
            raise ValueError(f"rows must sum to 1, got sums {sums}")
        arr.setflags(write=False)
        object.__setattr__(self, "table", arr)

    @property
    def outcomes(self) -> int:
        return self.table.shape[1]

    def prob(self, b: int, x: int) -> float:
        return float(self.table[x, b])


def merge_outcomes(dist: ConditionalDistribution, b: int) -> ConditionalDistribution:
    """Merge outcome columns ``b`` and ``b + 1`` by summing them."""
    d = dist.outcomes
    if not 0 <= b < d - 1:
        raise ValueError(f"cannot merge column {b} of a {d}-outcome table")
    t = dist.table
    merged = np.concatenate(
        [t[:, :b], (t[:, b] + t[:, b + 1])[:, None], t[:, b + 2:]], axis=1
    )
    return ConditionalDistribution(merged)


def effective_efficiency(eta: float, delta_phi: float) -> float:
    """Efficiency of the equivalent phase-error-free homodyne receiver.

    A homodyne measurement with phase error ``delta_phi`` behaves exactly
    like an ideal-phase one with efficiency ``eta * |cos(delta_phi)|``.
    """
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"efficiency must lie in (0, 1], got {eta}")
    return eta * abs(math.cos(delta_phi))


def homodyne_probs(mu: float, eta: float, partition: HomodynePartition) -> ConditionalDistribution:
    """Analytic outcome table of a homodyne receiver.

    ``p(b|x) = (erf(X_{b+1} - m_x) - erf(X_b - m_x)) / 2`` with the
    displaced mean ``m_x = (-1)^x sqrt(2*eta*mu)``.
    """
    if mu < 0.0:
        raise ValueError(f"mean photon number must be non-negative, got {mu}")
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"efficiency must lie in (0, 1], got {eta}")
    edges = partition.edges()
    shift = math.sqrt(2.0 * eta * mu)
    rows = []
    for sign in (1.0, -1.0):
        e = erf(edges - sign * shift)
        e[0], e[-1] = -1.0, 1.0
        rows.append(0.5 * np.diff(e))
    return ConditionalDistribution(np.vstack(rows))


def heterodyne_probs(mu: float, eta: float, partition: PhaseSpacePartition,
                     phase_offset: float = 0.0) -> ConditionalDistribution:
    """Outcome table of a heterodyne receiver over a phase-space partition.

    The displaced mean sits at radius ``sqrt(eta*mu)`` and angle
    ``phase_offset`` (input 0) or ``phase_offset + pi`` (input 1).  Strip
    regions reduce to the analytic one-dimensional expression; everything
    else integrates the polar form of the outcome density with an exact
    radial part and adaptive angular quadrature.
    """
    if mu < 0.0:
        raise ValueError(f"mean photon number must be non-negative, got {mu}")
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"efficiency must lie in (0, 1], got {eta}")
    amp = math.sqrt(eta * mu)
    rows = []
    for sign in (1.0, -1.0):
        mx = sign * amp * math.cos(phase_offset)
        my = sign * amp * math.sin(phase_offset)
        row = [sum(piece.gaussian_mass(mx, my) for piece in region)
               for region in partition.regions]
        rows.append(row)
    return ConditionalDistribution(np.array(rows))


@dataclass(frozen=True)
class DetectorScenario:
    """Receiver description: kind, efficiency, phase error and partition."""

    kind: str
    eta: float
    phase_error: float
    partition: HomodynePartition | PhaseSpacePartition

    def __post_init__(self) -> None:
        if self.kind not in ("homodyne", "heterodyne"):
            raise ValueError(f"unknown detector kind {self.kind!r}")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"efficiency must lie in (0, 1], got {self.eta}")
        if self.kind == "homodyne" and not isinstance(self.partition, HomodynePartition):
            raise ValueError("homodyne detection requires a HomodynePartition")
        if self.kind == "heterodyne" and not isinstance(self.partition, PhaseSpacePartition):
            raise ValueError("heterodyne detection requires a PhaseSpacePartition")

    @property
    def outcomes(self) -> int:
        return self.partition.outcomes


def scenario_probs(scenario: DetectorScenario, mu: float) -> ConditionalDistribution:
    """Analytic outcome table for a full detector scenario.

    A homodyne phase error shrinks the displaced amplitude by
    ``|cos(phase_error)|``; since efficiency enters the displacement under
    a square root, the equivalent ideal-phase table uses
    ``eta * cos^2(phase_error)``.  An uncompensated heterodyne phase error
    rotates the displacement instead.
    """
    if scenario.kind == "homodyne":
        eta = (effective_efficiency(scenario.eta, scenario.phase_error)
               * abs(math.cos(scenario.phase_error)))
        return homodyne_probs(mu, eta, scenario.partition)
    return heterodyne_probs(mu, scenario.eta, scenario.partition,
                            phase_offset=scenario.phase_error)


# ---------------------------------------------------------------------------
# Raw samples
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RawSampleSet:
    """Per-input quadrature samples: scalars (homodyne) or pairs (heterodyne)."""

    by_input: tuple[np.ndarray, np.ndarray]
    timestamps: tuple[np.ndarray, np.ndarray] | None = None

    def __init__(self, samples0: np.ndarray, samples1: np.ndarray,
                 timestamps: tuple[np.ndarray, np.ndarray] | None = None):
        arrs = []
        for name, s in (("x=0", samples0), ("x=1", samples1)):
            a = np.asarray(s, dtype=float)
            if a.size == 0:
                raise ValueError(f"no samples for input {name}")
            if a.ndim not in (1, 2) or (a.ndim == 2 and a.shape[1] != 2):
                raise ValueError(f"samples for {name} must be scalars or (X, Y) pairs")
            arrs.append(a)
        if arrs[0].ndim != arrs[1].ndim:
            raise ValueError("both inputs must use the same sample format")
        object.__setattr__(self, "by_input", (arrs[0], arrs[1]))
        object.__setattr__(self, "timestamps", timestamps)

    @property
    def is_pairs(self) -> bool:
        return self.by_input[0].ndim == 2


def _estimate_drift_angle(points: np.ndarray) -> float:
    """Mean resultant angle of the x=0 cloud, majority-disambiguated."""
    mean = points.mean(axis=0)
    theta = math.atan2(mean[1], mean[0])
    c, s = math.cos(-theta), math.sin(-theta)
    rotated_x = c * points[:, 0] - s * points[:, 1]
    if np.count_nonzero(rotated_x >= 0.0) * 2 < len(points):
        theta += math.pi
    return theta


def empirical_probs(samples: RawSampleSet, scenario: DetectorScenario,
                    phase_compensate: bool = False) -> ConditionalDistribution:
    """Bin raw samples into the scenario's partition and normalize counts.

    Homodyne samples at a threshold follow the half-open ``[X_b, X_{b+1})``
    rule; a heterodyne sample on a region boundary goes to the lower-index
    region.  With ``phase_compensate`` the heterodyne cloud is first
    rotated by the negated drift angle estimated from the x=0 samples.
    """
    if phase_compensate and scenario.kind != "heterodyne":
        raise ValueError("phase compensation applies to heterodyne data only")
    if samples.is_pairs != (scenario.kind == "heterodyne"):
        raise ValueError("sample format does not match the detector kind")

    data = samples.by_input
    if phase_compensate:
        theta = _estimate_drift_angle(data[0])
        c, s = math.cos(-theta), math.sin(-theta)
        rot = np.array([[c, -s], [s, c]])
        data = tuple(pts @ rot.T for pts in data)

    d = scenario.outcomes
    rows = []
    for pts in data:
        idx = scenario.partition.bin_samples(pts)
        rows.append(np.bincount(idx, minlength=d) / len(pts))
    return ConditionalDistribution(np.vstack(rows))


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def write_probs_csv(path: str, dist: ConditionalDistribution) -> None:
    """Write a probability table as ``x,b,p`` rows with full precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "b", "p"])
        for x in range(2):
            for b in range(dist.outcomes):
                writer.writerow([x, b, format(dist.table[x, b], ".17g")])


def read_probs_csv(path: str) -> ConditionalDistribution:
    """Read a ``x,b,p`` probability table written by :func:`write_probs_csv`."""
    entries: dict[tuple[int, int], float] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["x", "b", "p"]:
            raise ValueError(f"{path}: expected header 'x,b,p'")
        for row in reader:
            if not row:
                continue
            x, b, p = int(row[0]), int(row[1]), float(row[2])
            if x not in (0, 1):
                raise ValueError(f"{path}: input labels must be 0 or 1, got {x}")
            entries[(x, b)] = p
    if not entries:
        raise ValueError(f"{path}: no data rows")
    d = max(b for _, b in entries) + 1
    table = np.zeros((2, d))
    for x in range(2):
        for b in range(d):
            if (x, b) not in entries:
                raise ValueError(f"{path}: missing entry for x={x}, b={b}")
            table[x, b] = entries[(x, b)]
    return ConditionalDistribution(table)


def write_samples_csv(path: str, samples: RawSampleSet) -> None:
    """Write raw samples as ``x,X[,Y]`` rows."""
    pairs = samples.is_pairs
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "X", "Y"] if pairs else ["x", "X"])
        for x, arr in enumerate(samples.by_input):
            if pairs:
                for px, py in arr:
                    writer.writerow([x, format(px, ".17g"), format(py, ".17g")])
            else:
                for px in arr:
                    writer.writerow([x, format(px, ".17g")])


def read_samples_csv(path: str) -> RawSampleSet:
    """Read raw samples written as ``x,X[,Y]`` rows."""
    per_x: dict[int, list] = {0: [], 1: []}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        cols = [h.strip() for h in header]
        if cols not in (["x", "X"], ["x", "X", "Y"]):
            raise ValueError(f"{path}: expected header 'x,X' or 'x,X,Y'")
        pairs = len(cols) == 3
        for row in reader:
            if not row:
                continue
            x = int(row[0])
            if x not in (0, 1):
                raise ValueError(f"{path}: input labels must be 0 or 1, got {x}")
            if pairs:
                per_x[x].append((float(row[1]), float(row[2])))
            else:
                per_x[x].append(float(row[1]))
    for x in (0, 1):
        if not per_x[x]:
            raise ValueError(f"{path}: no samples for input x={x}")
    return RawSampleSet(np.array(per_x[0]), np.array(per_x[1]))
