"""Guessing-probability programs and dual certificates.

Given the energy bound and a measured table p(b|x), the adversary's best
guessing probability is the value of a semidefinite program over d^3
two-by-two blocks, one per (guess pair, outcome).  This module assembles
that program and its Lagrangian dual, runs the conic solver, converts
optimal primal blocks into explicit attacker strategies, and turns dual
multipliers into reusable certificates: affine functionals of the
probability table that upper-bound the guessing probability of *any*
table at the same energy bound without re-solving.

The certified quantity reported everywhere is the dual value.  A solver
that stops early can only make the dual value larger, so certified
min-entropy is never over-reported.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import conic
from .detection import ConditionalDistribution
from .states import EnergyBound, ReducedStatePair, reduced_states

__all__ = [
    "CertificationInput",
    "CertificationResult",
    "StrategyEntry",
    "AttackerStrategy",
    "DualCertificate",
    "build_primal",
    "build_dual",
    "guessing_probability",
    "min_entropy",
    "extract_strategy",
    "issue_certificate",
    "certificate_bound",
    "save_certificate",
    "load_certificate",
    "dual_feasibility_violation",
]

MAX_MIN_ENTROPY = math.log2(3.0)

# Gap required between primal and dual values when both are requested.
CROSS_FORM_GAP = 1e-6
# Largest eigenvalue a certificate's constraint matrices may have.
CERTIFICATE_RESIDUAL = 1e-9


@dataclass(frozen=True)
class CertificationInput:
    """Energy bound plus measured table: everything certification needs."""

    bound: EnergyBound
    probs: ConditionalDistribution

    @property
    def outcomes(self) -> int:
        return self.probs.outcomes

    def states(self) -> ReducedStatePair:
        return reduced_states(self.bound)


def _state_weights(states: ReducedStatePair) -> np.ndarray:
    """Row x: coefficients of <psi_x|M|psi_x> on (m11, m12, m22)."""
    out = np.empty((2, 3))
    for x, psi in enumerate((states.psi0, states.psi1)):
        out[x] = (psi[0] * psi[0], 2.0 * psi[0] * psi[1], psi[1] * psi[1])
    return out


@dataclass
class _PrimalLayout:
    problem: conic.ConicProblem
    block_base: np.ndarray      # (d, d, d) scalar base index of M_b^{l0,l1}
    prob_rows: np.ndarray       # (d, 2) row index of the p(b|x) constraint


@lru_cache(maxsize=64)
def _primal_template(mu: float, d: int) -> _PrimalLayout:
    """Constraint structure for fixed (mu, d); the table enters only the rhs."""
    states = reduced_states(EnergyBound(mu))
    w = _state_weights(states)
    p = np.zeros((2, d))

    builder = conic.ProblemBuilder()
    base = np.empty((d, d, d), dtype=int)
    for l0 in range(d):
        for l1 in range(d):
            for b in range(d):
                base[l0, l1, b] = builder.psd_block()

    # Objective: the attacker scores when the outcome matches the guess
    # lambda_x for the actual input x, each input with weight 1/2.
    for l0 in range(d):
        for l1 in range(d):
            for k in range(3):
                builder.add_objective(base[l0, l1, l0] + k, 0.5 * w[0, k])
                builder.add_objective(base[l0, l1, l1] + k, 0.5 * w[1, k])

    # (a) For each guess pair the block sum must be proportional to the
    # identity: equal diagonal, zero off-diagonal.
    for l0 in range(d):
        for l1 in range(d):
            diag = {}
            offd = {}
            for b in range(d):
                diag[base[l0, l1, b] + 0] = 1.0
                diag[base[l0, l1, b] + 2] = -1.0
                offd[base[l0, l1, b] + 1] = 1.0
            builder.add_equality(diag, 0.0)
            builder.add_equality(offd, 0.0)

    # (b) The mixture must reproduce the measured table.
    prob_rows = np.empty((d, 2), dtype=int)
    row = 2 * d * d
    for b in range(d):
        for x in range(2):
            coeffs = {}
            for l0 in range(d):
                for l1 in range(d):
                    for k in range(3):
                        idx = base[l0, l1, b] + k
                        coeffs[idx] = coeffs.get(idx, 0.0) + w[x, k]
            builder.add_equality(coeffs, p[x, b])
            prob_rows[b, x] = row
            row += 1

    return _PrimalLayout(builder.build("maximize"), base, prob_rows)


def _build_primal_layout(inp: CertificationInput) -> _PrimalLayout:
    tmpl = _primal_template(inp.bound.mu, inp.outcomes)
    rhs = tmpl.problem.rhs.copy()
    rhs[tmpl.prob_rows] = inp.probs.table.T  # prob_rows is (d, 2) = table transposed
    problem = conic.ConicProblem(
        blocks=tmpl.problem.blocks,
        objective=tmpl.problem.objective,
        a_matrix=tmpl.problem.a_matrix,
        rhs=rhs,
        sense="maximize",
    )
    return _PrimalLayout(problem, tmpl.block_base, tmpl.prob_rows)


def build_primal(inp: CertificationInput) -> conic.ConicProblem:
    """Maximization program whose value is the guessing probability."""
    return _build_primal_layout(inp).problem


@dataclass
class _DualLayout:
    problem: conic.ConicProblem
    nu_idx: np.ndarray          # (2, d) scalar index of nu_bx
    h_idx: np.ndarray           # (d, d, 3) scalar indices of H^{l0,l1}


@lru_cache(maxsize=64)
def _dual_template(mu: float, d: int) -> _DualLayout:
    """Dual constraint structure for fixed (mu, d); the table enters only
    the objective coefficients of the nu scalars."""
    states = reduced_states(EnergyBound(mu))
    rho = [states.density(0), states.density(1)]
    p = np.zeros((2, d))

    builder = conic.ProblemBuilder()
    nu_idx = np.empty((2, d), dtype=int)
    for b in range(d):
        for x in range(2):
            nu_idx[x, b] = builder.free_scalar()
    h_idx = np.empty((d, d, 3), dtype=int)
    for l0 in range(d):
        for l1 in range(d):
            for k in range(3):
                h_idx[l0, l1, k] = builder.free_scalar()

    for x in range(2):
        for b in range(d):
            builder.add_objective(nu_idx[x, b], -p[x, b])

    # One negative-semidefinite constraint per (b, guess pair), written as
    # slack + affine part = constant with the slack block PSD.
    zero = np.zeros((2, 2))
    for l0 in range(d):
        for l1 in range(d):
            for b in range(d):
                slack = builder.psd_block()
                rhs = -0.5 * ((rho[0] if l0 == b else zero)
                              + (rho[1] if l1 == b else zero))
                h11, h12, h22 = h_idx[l0, l1]
                # entry (1,1)
                builder.add_equality(
                    {slack + 0: 1.0, nu_idx[0, b]: rho[0][0, 0],
                     nu_idx[1, b]: rho[1][0, 0], h11: 0.5, h22: -0.5},
                    rhs[0, 0],
                )
                # entry (1,2)
                builder.add_equality(
                    {slack + 1: 1.0, nu_idx[0, b]: rho[0][0, 1],
                     nu_idx[1, b]: rho[1][0, 1], h12: 1.0},
                    rhs[0, 1],
                )
                # entry (2,2)
                builder.add_equality(
                    {slack + 2: 1.0, nu_idx[0, b]: rho[0][1, 1],
                     nu_idx[1, b]: rho[1][1, 1], h11: -0.5, h22: 0.5},
                    rhs[1, 1],
                )

    return _DualLayout(builder.build("minimize"), nu_idx, h_idx)


def _build_dual_layout(inp: CertificationInput) -> _DualLayout:
    tmpl = _dual_template(inp.bound.mu, inp.outcomes)
    objective = tmpl.problem.objective.copy()
    objective[tmpl.nu_idx] = -inp.probs.table
    problem = conic.ConicProblem(
        blocks=tmpl.problem.blocks,
        objective=objective,
        a_matrix=tmpl.problem.a_matrix,
        rhs=tmpl.problem.rhs,
        sense="minimize",
    )
    return _DualLayout(problem, tmpl.nu_idx, tmpl.h_idx)


def build_dual(inp: CertificationInput) -> conic.ConicProblem:
    """Minimization program upper-bounding the guessing probability."""
    return _build_dual_layout(inp).problem


# ---------------------------------------------------------------------------
# Dual feasibility
# ---------------------------------------------------------------------------


def dual_feasibility_violation(mu: float, nu: np.ndarray, h_mats: np.ndarray) -> float:
    """Largest eigenvalue over all dual constraint matrices.

    ``nu`` is (2, d) indexed [x, b]; ``h_mats`` is (d, d, 2, 2) indexed by
    the guess pair.  A feasible dual point has value <= 0.
    """
    states = reduced_states(EnergyBound(mu))
    rho = np.stack([states.density(0), states.density(1)])
    d = nu.shape[1]
    # Sum_x rho_x nu_bx, one 2x2 matrix per outcome.
    base = np.einsum("xij,xb->bij", rho, nu)
    h_traceless = h_mats - 0.5 * np.trace(h_mats, axis1=-2, axis2=-1)[..., None, None] * np.eye(2)
    worst = -np.inf
    for l0 in range(d):
        for l1 in range(d):
            g = base + h_traceless[l0, l1]
            g = g + 0.5 * rho[0] * (np.arange(d) == l0)[:, None, None]
            g = g + 0.5 * rho[1] * (np.arange(d) == l1)[:, None, None]
            half_tr = 0.5 * (g[:, 0, 0] + g[:, 1, 1])
            rad = np.sqrt(np.maximum(0.25 * (g[:, 0, 0] - g[:, 1, 1]) ** 2
                                     + g[:, 0, 1] ** 2, 0.0))
            worst = max(worst, float((half_tr + rad).max()))
    return worst


def _dual_candidate_from_primal(layout: _PrimalLayout, solution: conic.ConicSolution,
                                d: int) -> tuple[np.ndarray, np.ndarray]:
    """Map equality multipliers of the primal solve to (nu, H) variables.

    Row order in the primal: per guess pair one diagonal-balance row and
    one off-diagonal row, then the probability rows.  The multiplier of a
    probability row is ``-nu_bx``; the two structure multipliers form the
    traceless part of ``-H``.
    """
    y = solution.y
    nu = np.empty((2, d))
    for b in range(d):
        for x in range(2):
            nu[x, b] = -y[layout.prob_rows[b, x]]
    h_mats = np.empty((d, d, 2, 2))
    for l0 in range(d):
        for l1 in range(d):
            row = 2 * (l0 * d + l1)
            y_diag, y_offd = y[row], y[row + 1]
            h_mats[l0, l1] = -np.array([[y_diag, 0.5 * y_offd],
                                        [0.5 * y_offd, -y_diag]])
    return nu, h_mats


def _polish_dual(mu: float, nu: np.ndarray, h_mats: np.ndarray,
                 probs: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Shift nu uniformly until the dual point is exactly feasible.

    Subtracting ``eps`` from every nu_bx moves each constraint matrix by
    ``-eps (rho_0 + rho_1)``, whose smallest eigenvalue is
    ``2 min(mu, 1 - mu)``; the certified value grows by ``2 eps``.
    Returns (nu, residual after polish, certified value).
    """
    violation = dual_feasibility_violation(mu, nu, h_mats)
    margin = 1e-12
    floor = 2.0 * min(mu, 1.0 - mu)
    if violation > 0.0 and floor > 0.0:
        eps = (violation + margin) / floor
        nu = nu - eps
        violation = dual_feasibility_violation(mu, nu, h_mats)
        if violation > 0.0:
            # One conservative retry; rounding in the eigenvalue bound is
            # far below this extra slack.
            eps2 = (violation + 10 * margin) / floor
            nu = nu - eps2
            violation = dual_feasibility_violation(mu, nu, h_mats)
    value = -float(np.sum(nu * probs))
    return nu, violation, value


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


@dataclass
class CertificationResult:
    """Certified guessing probability and min-entropy for one table.

    ``pg`` is the value selected by ``form`` ("primal" reports the
    lower-bounding primal optimum, otherwise the certified dual value);
    ``min_entropy`` is ``-log2(pg)`` in bits per measurement run.
    """

    pg: float
    min_entropy: float
    form: str
    status: str
    primal_value: float
    dual_value: float
    gap: float
    iterations: int
    feasibility_residual: float
    nu: np.ndarray | None = field(repr=False, default=None)
    h_mats: np.ndarray | None = field(repr=False, default=None)
    primal_solution: conic.ConicSolution | None = field(repr=False, default=None)
    primal_problem: conic.ConicProblem | None = field(repr=False, default=None)
    dual_solution: conic.ConicSolution | None = field(repr=False, default=None)


def min_entropy(pg: float) -> float:
    """Certified bits per run: ``-log2(pg)``."""
    if not 0.0 < pg <= 1.0:
        raise ValueError(f"guessing probability must lie in (0, 1], got {pg}")
    return -math.log2(pg)


def guessing_probability(inp: CertificationInput, form: str = "dual",
                         tolerances: conic.Tolerances | None = None) -> CertificationResult:
    """Solve the guessing-probability program for one table.

    All forms solve the primal program with the primal-dual interior-point
    method, which yields the dual variables as multipliers at no extra
    cost.  ``form="primal"`` reports the primal optimum (a lower bound on
    the true guessing probability), ``"dual"`` reports the certified value
    of the exactly-feasible polished dual point (an upper bound), and
    ``"both"`` reports the dual value while requiring the two to agree
    within 1e-6.
    """
    if form not in ("primal", "dual", "both"):
        raise ValueError(f"form must be 'primal', 'dual' or 'both', got {form!r}")
    tol = tolerances or conic.Tolerances()
    layout = _build_primal_layout(inp)
    solution = conic.solve(layout.problem, tol)
    d = inp.outcomes

    if solution.status != conic.OPTIMAL:
        return CertificationResult(
            pg=np.nan, min_entropy=np.nan, form=form, status=solution.status,
            primal_value=solution.primal_objective, dual_value=solution.dual_objective,
            gap=solution.gap, iterations=solution.iterations,
            feasibility_residual=np.nan,
            primal_solution=solution, primal_problem=layout.problem,
        )

    nu, h_mats = _dual_candidate_from_primal(layout, solution, d)
    nu, residual, dual_value = _polish_dual(inp.bound.mu, nu, h_mats, inp.probs.table)
    primal_value = solution.primal_objective

    status = solution.status
    gap = abs(dual_value - primal_value)
    if form == "both" and gap > CROSS_FORM_GAP:
        status = conic.NUMERICAL_FAILURE

    pg_raw = primal_value if form == "primal" else dual_value
    pg = min(max(pg_raw, 1e-300), 1.0)
    return CertificationResult(
        pg=pg,
        min_entropy=-math.log2(pg),
        form=form,
        status=status,
        primal_value=primal_value,
        dual_value=dual_value,
        gap=gap,
        iterations=solution.iterations,
        feasibility_residual=residual,
        nu=nu,
        h_mats=h_mats,
        primal_solution=solution,
        primal_problem=layout.problem,
    )


def solve_dual_direct(inp: CertificationInput,
                      tolerances: conic.Tolerances | None = None) -> CertificationResult:
    """Solve the dual program as its own conic problem.

    Slower than :func:`guessing_probability` (the dual has d^3 constraint
    blocks) but exercises the dual assembly independently; used as a
    cross-check of the multiplier route.
    """
    tol = tolerances or conic.Tolerances()
    layout = _build_dual_layout(inp)
    solution = conic.solve(layout.problem, tol)
    if solution.status != conic.OPTIMAL:
        return CertificationResult(
            pg=np.nan, min_entropy=np.nan, form="dual", status=solution.status,
            primal_value=np.nan, dual_value=solution.primal_objective,
            gap=solution.gap, iterations=solution.iterations,
            feasibility_residual=np.nan, dual_solution=solution,
        )
    d = inp.outcomes
    nu = solution.x[layout.nu_idx]
    h_flat = solution.x[layout.h_idx]          # (d, d, 3) of (h11, h12, h22)
    h_mats = np.empty((d, d, 2, 2))
    h_mats[..., 0, 0] = h_flat[..., 0]
    h_mats[..., 0, 1] = h_flat[..., 1]
    h_mats[..., 1, 0] = h_flat[..., 1]
    h_mats[..., 1, 1] = h_flat[..., 2]
    nu, residual, value = _polish_dual(inp.bound.mu, nu, h_mats, inp.probs.table)
    pg = min(max(value, 1e-300), 1.0)
    return CertificationResult(
        pg=pg, min_entropy=-math.log2(pg), form="dual", status=solution.status,
        primal_value=solution.dual_objective, dual_value=value,
        gap=solution.gap, iterations=solution.iterations,
        feasibility_residual=residual, nu=nu, h_mats=h_mats,
        dual_solution=solution,
    )


# ---------------------------------------------------------------------------
# Attacker strategies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StrategyEntry:
    """One adversarial branch: guesses, its weight and the implemented POVM."""

    lambda0: int
    lambda1: int
    weight: float
    povm: np.ndarray  # (d, 2, 2)


@dataclass(frozen=True)
class AttackerStrategy:
    """Mixture of measurement devices reproducing the observed table."""

    entries: tuple[StrategyEntry, ...]
    states: ReducedStatePair

    @property
    def total_weight(self) -> float:
        return float(sum(e.weight for e in self.entries))

    def reproduced_table(self) -> np.ndarray:
        """2 x d table generated by the mixture."""
        d = self.entries[0].povm.shape[0]
        table = np.zeros((2, d))
        for e in self.entries:
            for x, psi in enumerate((self.states.psi0, self.states.psi1)):
                table[x] += e.weight * np.einsum("i,bij,j->b", psi, e.povm, psi)
        return table

    def success_probability(self) -> float:
        """Average probability that the recorded guesses hit the outcome."""
        total = 0.0
        for e in self.entries:
            for x, (psi, guess) in enumerate(
                zip((self.states.psi0, self.states.psi1), (e.lambda0, e.lambda1))
            ):
                total += 0.5 * e.weight * float(psi @ e.povm[guess] @ psi)
        return total


def extract_strategy(result: CertificationResult, inp: CertificationInput,
                     weight_cutoff: float = 1e-9) -> AttackerStrategy:
    """Read the optimal attacker decomposition out of a primal solve.

    Each guess pair with non-negligible weight ``q = tr(sum_b M_b)/2``
    contributes a POVM ``M_b / q``.
    """
    if result.primal_solution is None or result.status != conic.OPTIMAL:
        raise ValueError("strategy extraction requires an optimal primal solve")
    d = inp.outcomes
    x = result.primal_solution.x
    entries = []
    for l0 in range(d):
        for l1 in range(d):
            mats = np.empty((d, 2, 2))
            for b in range(d):
                base = 3 * ((l0 * d + l1) * d + b)
                m11, m12, m22 = x[base], x[base + 1], x[base + 2]
                mats[b] = [[m11, m12], [m12, m22]]
            q = 0.5 * float(np.trace(mats.sum(axis=0)))
            if q >= weight_cutoff:
                entries.append(StrategyEntry(l0, l1, q, mats / q))
    return AttackerStrategy(tuple(entries), inp.states())


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DualCertificate:
    """Reusable affine upper bound on the guessing probability.

    The coefficients ``nu`` evaluate any table measured at the issuance
    energy bound; feasibility of (nu, H) does not involve the table, so
    re-evaluation needs no optimization.  Certificates are pinned to their
    issuance ``mu``: the constraint matrices depend on the states, and no
    transfer across energy bounds is claimed.
    """

    mu: float
    outcomes: int
    nu: np.ndarray                # (2, d), indexed [x, b]
    h_mats: np.ndarray            # (d, d, 2, 2)
    value: float                  # certified value at issuance
    feasibility_residual: float
    solver_tolerances: dict

    def verify(self) -> float:
        """Recompute the feasibility residual from the stored data."""
        return dual_feasibility_violation(self.mu, self.nu, self.h_mats)


def issue_certificate(result: CertificationResult,
                      inp: CertificationInput) -> DualCertificate:
    """Turn an optimal solve into a stored certificate.

    Refuses issuance when the (polished) dual point still violates
    feasibility by more than 1e-9.
    """
    if result.status != conic.OPTIMAL or result.nu is None:
        raise ValueError("certificate issuance requires an optimal solve")
    residual = dual_feasibility_violation(inp.bound.mu, result.nu, result.h_mats)
    if residual > CERTIFICATE_RESIDUAL:
        raise ValueError(
            f"dual point violates feasibility by {residual:.3e} (> 1e-9); refusing issuance"
        )
    return DualCertificate(
        mu=inp.bound.mu,
        outcomes=inp.outcomes,
        nu=result.nu.copy(),
        h_mats=result.h_mats.copy(),
        value=result.dual_value,
        feasibility_residual=residual,
        solver_tolerances={"gap": conic.Tolerances().gap,
                           "feasibility": conic.Tolerances().feasibility},
    )


def certificate_bound(cert: DualCertificate, probs: ConditionalDistribution) -> float:
    """Evaluate a stored certificate on a new table.

    Valid for data taken under the certificate's own energy bound; the
    result upper-bounds the true guessing probability of that table (it
    may exceed 1 for tables far from the issuance point).
    """
    if probs.outcomes != cert.outcomes:
        raise ValueError(
            f"certificate is for {cert.outcomes} outcomes, table has {probs.outcomes}"
        )
    return -float(np.sum(cert.nu * probs.table))


def save_certificate(cert: DualCertificate, path: str) -> None:
    """Write a certificate as JSON; floats round-trip exactly."""
    d = cert.outcomes
    payload = {
        "mu": cert.mu,
        "d": d,
        "nu": [[cert.nu[x, b] for b in range(d)] for x in range(2)],
        "H": [[[cert.h_mats[l0, l1, 0, 0], cert.h_mats[l0, l1, 0, 1],
                cert.h_mats[l0, l1, 1, 1]] for l1 in range(d)] for l0 in range(d)],
        "value": cert.value,
        "feasibility_residual": cert.feasibility_residual,
        "solver_tolerances": cert.solver_tolerances,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_certificate(path: str, verify: bool = True) -> DualCertificate:
    """Load a certificate; by default re-verifies dual feasibility."""
    with open(path) as fh:
        payload = json.load(fh)
    d = int(payload["d"])
    nu = np.array(payload["nu"], dtype=float)
    if nu.shape != (2, d):
        raise ValueError(f"{path}: nu has shape {nu.shape}, expected (2, {d})")
    h_flat = np.array(payload["H"], dtype=float)
    if h_flat.shape != (d, d, 3):
        raise ValueError(f"{path}: H has shape {h_flat.shape}, expected ({d}, {d}, 3)")
    h_mats = np.empty((d, d, 2, 2))
    h_mats[..., 0, 0] = h_flat[..., 0]
    h_mats[..., 0, 1] = h_flat[..., 1]
    h_mats[..., 1, 0] = h_flat[..., 1]
    h_mats[..., 1, 1] = h_flat[..., 2]
    cert = DualCertificate(
        mu=float(payload["mu"]),
        outcomes=d,
        nu=nu,
        h_mats=h_mats,
        value=float(payload["value"]),
        feasibility_residual=float(payload["feasibility_residual"]),
        solver_tolerances=dict(payload["solver_tolerances"]),
    )
    if verify:
        residual = cert.verify()
        if residual > CERTIFICATE_RESIDUAL:
            raise ValueError(
                f"{path}: certificate violates dual feasibility by {residual:.3e}"
            )
    return cert
