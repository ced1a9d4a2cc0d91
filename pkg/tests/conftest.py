"""Shared oracles and generators for the test suite.

The quadrature oracles integrate the raw outcome densities numerically
and never touch the analytic erf expressions they are used to check.
The conic oracle solves the same block problems with cvxpy/CLARABEL.
"""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import dblquad, quad

from qrandcert import conic


def homodyne_oracle(mu: float, eta: float, thresholds) -> np.ndarray:
    """Outcome table by adaptive 1-D quadrature of the homodyne density."""
    edges = np.concatenate(([-np.inf], np.asarray(thresholds, float), [np.inf]))
    rows = []
    for sign in (1.0, -1.0):
        mean = sign * math.sqrt(2.0 * eta * mu)
        row = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            val, _ = quad(lambda X: math.exp(-((X - mean) ** 2)) / math.sqrt(math.pi),
                          lo, hi, epsabs=1e-13, epsrel=1e-13)
            row.append(val)
        rows.append(row)
    return np.array(rows)


def heterodyne_oracle_rect(mu: float, eta: float, sign: float,
                           xlo: float, xhi: float, ylo: float, yhi: float) -> float:
    """Gaussian mass of an axis-aligned rectangle by 2-D quadrature."""
    mean = sign * math.sqrt(eta * mu)
    cut = 9.0
    xlo = max(xlo, mean - cut)
    xhi = min(xhi, mean + cut)
    ylo = max(ylo, -cut)
    yhi = min(yhi, cut)
    if xlo >= xhi or ylo >= yhi:
        return 0.0
    val, _ = dblquad(lambda Y, X: math.exp(-((X - mean) ** 2) - Y * Y) / math.pi,
                     xlo, xhi, ylo, yhi, epsabs=1e-11, epsrel=1e-11)
    return val


def heterodyne_oracle_polar(mu: float, eta: float, sign: float,
                            theta_lo: float, theta_hi: float,
                            r_lo: float, r_hi: float) -> float:
    """Gaussian mass of a sector-annulus region by adaptive 2-D quadrature.

    Integrates the raw Cartesian density in polar coordinates and is
    independent of the semi-analytic radial reduction used by the library.
    """
    mean = sign * math.sqrt(eta * mu)
    r_hi = min(r_hi, abs(mean) + 9.0)

    def integrand(r, theta):
        x = r * math.cos(theta)
        y = r * math.sin(theta)
        return r * math.exp(-((x - mean) ** 2) - y * y) / math.pi

    val, _ = dblquad(integrand, theta_lo, theta_hi, r_lo, r_hi,
                     epsabs=1e-11, epsrel=1e-11)
    return val


def random_bounded_problem(rng: np.random.Generator, nb: int, n_free: int,
                           m: int, sense: str):
    """Random conic problem that is guaranteed feasible and bounded.

    Feasibility comes from choosing the rhs at a strictly interior point;
    boundedness from building the objective as ``A'y0 + s0`` with ``s0``
    blockwise positive definite (a strictly feasible dual point).
    """
    builder = conic.ProblemBuilder()
    psd = [builder.psd_block() for _ in range(nb)]
    free = [builder.free_scalar() for _ in range(n_free)]
    n = 3 * nb + n_free

    x0 = np.zeros(n)
    for base in psd:
        L = rng.normal(size=(2, 2))
        M = L @ L.T + 0.3 * np.eye(2)
        x0[base], x0[base + 1], x0[base + 2] = M[0, 0], M[0, 1], M[1, 1]
    for idx in free:
        x0[idx] = rng.normal()

    A = rng.normal(size=(m, n)) * (rng.random((m, n)) < 0.5)
    rhs = A @ x0

    y0 = rng.normal(size=m)
    sign = 1.0 if sense == "minimize" else -1.0
    c = np.zeros(n)
    # c = sign * (A'y0 + s0*): the slack pairs with blocks through the
    # trace product, so its m12 functional coefficient is doubled.
    aty = A.T @ y0
    for base in psd:
        L = rng.normal(size=(2, 2))
        S = L @ L.T + 0.2 * np.eye(2)
        c[base] = aty[base] + S[0, 0]
        c[base + 1] = aty[base + 1] + 2.0 * S[0, 1]
        c[base + 2] = aty[base + 2] + S[1, 1]
    for idx in free:
        c[idx] = aty[idx]
    c *= sign
    # Keep optimal values O(1) so absolute-tolerance comparisons are fair.
    c /= max(1.0, np.abs(c).max())

    for r in range(m):
        coeffs = {j: A[r, j] for j in range(n) if A[r, j] != 0.0}
        builder.add_equality(coeffs, rhs[r])
    for j in range(n):
        if c[j] != 0.0:
            builder.add_objective(j, c[j])
    return builder.build(sense), psd, free


def cvxpy_reference(problem: conic.ConicProblem):
    """Independent solve of a ConicProblem; returns (status, value)."""
    cp = pytest.importorskip("cvxpy")
    offsets = problem.block_offsets()
    mats = []
    scalars = {}
    for kind, off in zip(problem.blocks, offsets):
        if kind == "psd":
            M = cp.Variable((2, 2), symmetric=True)
            mats.append(M)
            scalars[off] = M[0, 0]
            scalars[off + 1] = M[0, 1]
            scalars[off + 2] = M[1, 1]
        else:
            f = cp.Variable()
            scalars[off] = f
    x = cp.hstack([scalars[i] for i in range(problem.n_scalars)])
    constraints = [M >> 0 for M in mats]
    if problem.n_rows:
        constraints.append(problem.a_matrix.toarray() @ x == problem.rhs)
    objective = problem.objective @ x
    prob = cp.Problem(
        cp.Maximize(objective) if problem.sense == "maximize" else cp.Minimize(objective),
        constraints,
    )
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-11, tol_gap_rel=1e-11,
               tol_feas=1e-11)
    return prob.status, prob.value
