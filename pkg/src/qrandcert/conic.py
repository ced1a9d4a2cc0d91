"""Interior-point solver for block SDPs with 2x2 PSD cones.

The guessing-probability programs have one fixed shape: a linear objective
over many independent 2x2 real-symmetric PSD blocks (plus a few free
scalars in the dual form), tied together by linear equality constraints.
This module implements a primal-dual Mehrotra predictor-corrector method
with Nesterov-Todd scaling inside a homogeneous self-dual embedding, so
infeasible and unbounded instances are detected rather than diverging.

Block variables use the public parametrization ``(m11, m12, m22)``;
internally vectors are mapped to svec coordinates ``(m11, sqrt(2)*m12,
m22)`` so Euclidean inner products equal trace inner products.  Free
scalars are eliminated by QR before the interior-point iteration and
restored afterwards, which also quotients out gauge directions (null
columns) of the free-variable coefficient matrix.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve, lapack, qr, solve_triangular

__all__ = [
    "Tolerances",
    "ConicProblem",
    "ProblemBuilder",
    "ConicSolution",
    "solve",
    "extract_duals",
    "dump_problem",
    "load_problem",
    "problem_to_dict",
    "problem_from_dict",
    "OPTIMAL",
    "INFEASIBLE",
    "UNBOUNDED",
    "MAX_ITERATIONS",
    "NUMERICAL_FAILURE",
]

_SQRT2 = math.sqrt(2.0)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITERATIONS = "max_iterations"
NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class Tolerances:
    """Termination thresholds for :func:`solve`."""

    gap: float = 1e-8
    feasibility: float = 1e-8
    max_iterations: int = 200


@dataclass(frozen=True)
class ConicProblem:
    """Block-structured conic program with linear equality constraints.

    ``blocks`` lists the variable layout in order; each ``"psd"`` entry
    owns three consecutive scalars ``(m11, m12, m22)`` of a 2x2 symmetric
    PSD matrix and each ``"free"`` entry owns one unconstrained scalar.
    ``objective`` is the dense coefficient vector of the linear objective
    over all scalars; ``a_matrix`` and ``rhs`` define the equalities.
    """

    blocks: tuple[str, ...]
    objective: np.ndarray
    a_matrix: sp.csr_matrix
    rhs: np.ndarray
    sense: str

    def __post_init__(self) -> None:
        if self.sense not in ("maximize", "minimize"):
            raise ValueError(f"sense must be 'maximize' or 'minimize', got {self.sense!r}")
        if any(kind not in ("psd", "free") for kind in self.blocks):
            raise ValueError("blocks must be 'psd' or 'free'")
        n = self.n_scalars
        if self.objective.shape != (n,):
            raise ValueError("objective length does not match the variable layout")
        if self.a_matrix.shape[1] != n:
            raise ValueError("equality matrix width does not match the variable layout")
        if self.a_matrix.shape[0] != self.rhs.shape[0]:
            raise ValueError("equality matrix and right-hand side disagree")

    @property
    def n_scalars(self) -> int:
        return sum(3 if kind == "psd" else 1 for kind in self.blocks)

    @property
    def n_rows(self) -> int:
        return self.a_matrix.shape[0]

    def block_offsets(self) -> np.ndarray:
        """First scalar index of each block."""
        sizes = np.fromiter((3 if k == "psd" else 1 for k in self.blocks), dtype=int,
                            count=len(self.blocks))
        return np.concatenate(([0], np.cumsum(sizes)[:-1])) if len(self.blocks) else np.array([], dtype=int)

    def psd_scalar_indices(self) -> np.ndarray:
        """Scalar indices owned by PSD blocks, grouped as (n_psd, 3)."""
        offs = self.block_offsets()
        rows = [np.arange(o, o + 3) for o, k in zip(offs, self.blocks) if k == "psd"]
        if not rows:
            return np.zeros((0, 3), dtype=int)
        return np.vstack(rows)

    def free_scalar_indices(self) -> np.ndarray:
        offs = self.block_offsets()
        return np.array([o for o, k in zip(offs, self.blocks) if k == "free"], dtype=int)


class ProblemBuilder:
    """Incremental construction of a :class:`ConicProblem`."""

    def __init__(self) -> None:
        self._blocks: list[str] = []
        self._n = 0
        self._obj: dict[int, float] = {}
        self._rows: list[dict[int, float]] = []
        self._rhs: list[float] = []

    def psd_block(self) -> int:
        """Add a 2x2 PSD block; returns the index of its ``m11`` scalar."""
        self._blocks.append("psd")
        base = self._n
        self._n += 3
        return base

    def free_scalar(self) -> int:
        """Add a free scalar; returns its index."""
        self._blocks.append("free")
        idx = self._n
        self._n += 1
        return idx

    def add_objective(self, index: int, coeff: float) -> None:
        self._obj[index] = self._obj.get(index, 0.0) + float(coeff)

    def add_equality(self, coeffs: dict[int, float], rhs: float) -> None:
        self._rows.append(dict(coeffs))
        self._rhs.append(float(rhs))

    def build(self, sense: str) -> ConicProblem:
        objective = np.zeros(self._n)
        for idx, coeff in self._obj.items():
            objective[idx] = coeff
        data: list[float] = []
        rows: list[int] = []
        cols: list[int] = []
        for r, coeffs in enumerate(self._rows):
            for idx, coeff in coeffs.items():
                if coeff != 0.0:
                    rows.append(r)
                    cols.append(idx)
                    data.append(float(coeff))
        a_matrix = sp.csr_matrix((data, (rows, cols)), shape=(len(self._rows), self._n))
        return ConicProblem(
            blocks=tuple(self._blocks),
            objective=objective,
            a_matrix=a_matrix,
            rhs=np.array(self._rhs, dtype=float),
            sense=sense,
        )


@dataclass
class ConicSolution:
    """Result of a conic solve.

    ``x`` holds all primal scalars in the public parametrization, ``y``
    one multiplier per original equality row, and ``s`` the dual slack
    matrices of the PSD blocks (zero at free-scalar positions).  Objective
    values are reported in the problem's own sense; for ``optimal`` status
    they agree within the gap tolerance.
    """

    status: str
    primal_objective: float
    dual_objective: float
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    iterations: int
    gap: float
    history: list[tuple[float, float, float, float]] = field(default_factory=list)

    def block_matrix(self, problem: ConicProblem, block: int) -> np.ndarray:
        """Primal 2x2 matrix of block number ``block`` (PSD blocks only)."""
        if problem.blocks[block] != "psd":
            raise ValueError(f"block {block} is not a PSD block")
        off = problem.block_offsets()[block]
        m11, m12, m22 = self.x[off:off + 3]
        return np.array([[m11, m12], [m12, m22]])

    def dual_block_matrix(self, problem: ConicProblem, block: int) -> np.ndarray:
        """Dual slack 2x2 matrix of block number ``block``."""
        if problem.blocks[block] != "psd":
            raise ValueError(f"block {block} is not a PSD block")
        off = problem.block_offsets()[block]
        s11, s12, s22 = self.s[off:off + 3]
        return np.array([[s11, s12], [s12, s22]])


# ---------------------------------------------------------------------------
# svec helpers (batched over blocks)
# ---------------------------------------------------------------------------


def _svec_to_mat(v: np.ndarray) -> np.ndarray:
    """(..., 3) svec stack -> (..., 2, 2) symmetric matrices."""
    out = np.empty(v.shape[:-1] + (2, 2))
    out[..., 0, 0] = v[..., 0]
    out[..., 0, 1] = v[..., 1] / _SQRT2
    out[..., 1, 0] = v[..., 1] / _SQRT2
    out[..., 1, 1] = v[..., 2]
    return out


def _mat_to_svec(m: np.ndarray) -> np.ndarray:
    out = np.empty(m.shape[:-2] + (3,))
    out[..., 0] = m[..., 0, 0]
    out[..., 1] = _SQRT2 * m[..., 0, 1]
    out[..., 2] = m[..., 1, 1]
    return out


def _symkron(p: np.ndarray) -> np.ndarray:
    """svec matrix of the congruence M -> P' M P, batched over blocks."""
    p11, p12 = p[..., 0, 0], p[..., 0, 1]
    p21, p22 = p[..., 1, 0], p[..., 1, 1]
    k = np.empty(p.shape[:-2] + (3, 3))
    k[..., 0, 0] = p11 * p11
    k[..., 0, 1] = _SQRT2 * p11 * p21
    k[..., 0, 2] = p21 * p21
    k[..., 1, 0] = _SQRT2 * p11 * p12
    k[..., 1, 1] = p11 * p22 + p12 * p21
    k[..., 1, 2] = _SQRT2 * p21 * p22
    k[..., 2, 0] = p12 * p12
    k[..., 2, 1] = _SQRT2 * p12 * p22
    k[..., 2, 2] = p22 * p22
    return k


def _chol2(m: np.ndarray) -> np.ndarray:
    """Closed-form Cholesky of a (nb, 2, 2) SPD stack.

    Raises ``numpy.linalg.LinAlgError`` when any block is not positive
    definite, mirroring ``numpy.linalg.cholesky``.
    """
    l11_sq = m[..., 0, 0]
    with np.errstate(invalid="ignore", divide="ignore"):
        l11 = np.sqrt(l11_sq)
        l21 = m[..., 1, 0] / l11
        l22 = np.sqrt(m[..., 1, 1] - l21 * l21)
    if not (np.all(np.isfinite(l11)) and np.all(np.isfinite(l21))
            and np.all(np.isfinite(l22)) and np.all(l11 > 0.0) and np.all(l22 > 0.0)):
        raise np.linalg.LinAlgError("block not positive definite")
    out = np.zeros(m.shape)
    out[..., 0, 0] = l11
    out[..., 1, 0] = l21
    out[..., 1, 1] = l22
    return out


def _eig2_sym(g11: np.ndarray, g12: np.ndarray, g22: np.ndarray):
    """Eigen-decomposition of symmetric 2x2 stacks, closed form.

    Returns (lam1, lam2, v) with lam1 >= lam2 and v the unit eigenvector
    of lam1; the second eigenvector is its quarter turn.
    """
    half = 0.5 * (g11 + g22)
    rad = np.sqrt(np.maximum(0.25 * (g11 - g22) ** 2 + g12 * g12, 0.0))
    lam1 = half + rad
    lam2 = half - rad
    # Pick the numerically larger of the two row-wise eigenvector formulas.
    upper = g11 >= g22
    vx = np.where(upper, lam1 - g22, g12)
    vy = np.where(upper, g12, lam1 - g11)
    norm = np.hypot(vx, vy)
    degenerate = norm <= 1e-300
    vx = np.where(degenerate, 1.0, vx)
    vy = np.where(degenerate, 0.0, vy)
    norm = np.where(degenerate, 1.0, norm)
    return lam1, lam2, vx / norm, vy / norm


def _min_eig_ratio(lv: np.ndarray, dv: np.ndarray) -> np.ndarray:
    """Per block: smallest eigenvalue of L^-1 dV L^-T given L = chol(V).

    The largest feasible step for ``V + alpha dV >= 0`` is
    ``-1/lambda_min`` when ``lambda_min < 0``.
    """
    d11 = dv[..., 0]
    d12 = dv[..., 1] / _SQRT2
    d22 = dv[..., 2]
    i11 = 1.0 / lv[..., 0, 0]
    i22 = 1.0 / lv[..., 1, 1]
    i21 = -lv[..., 1, 0] * i11 * i22
    t11 = i11 * i11 * d11
    t12 = i11 * (i21 * d11 + i22 * d12)
    t22 = i21 * i21 * d11 + 2.0 * i21 * i22 * d12 + i22 * i22 * d22
    half_tr = 0.5 * (t11 + t22)
    rad = np.sqrt(np.maximum(0.25 * (t11 - t22) ** 2 + t12 * t12, 0.0))
    return half_tr - rad


def _max_step(lv: np.ndarray, dv: np.ndarray) -> float:
    lam = _min_eig_ratio(lv, dv)
    worst = lam.min() if lam.size else 0.0
    if worst >= 0.0:
        return np.inf
    return -1.0 / worst


# ---------------------------------------------------------------------------
# Presolve
# ---------------------------------------------------------------------------


class _PresolveInfeasible(Exception):
    pass


class _PresolveUnbounded(Exception):
    pass


@dataclass
class _Reduction:
    """Bookkeeping to map the reduced solve back to the original problem."""

    kept_dupes: np.ndarray
    # Free-variable elimination (identity when the problem has none).
    q1: np.ndarray | None = None
    q2: np.ndarray | None = None
    r11: np.ndarray | None = None
    kept_free: np.ndarray | None = None
    c_free_kept: np.ndarray | None = None
    # Row normalization and rank reduction.
    kept_nonzero: np.ndarray | None = None
    row_scale: np.ndarray | None = None
    n_scaled_rows: int = 0
    kept_rank: np.ndarray | None = None
    offset: float = 0.0


def _drop_duplicate_rows(a: sp.csr_matrix, b: np.ndarray) -> np.ndarray:
    """Indices of rows to keep after removing exact duplicates."""
    seen: set[bytes] = set()
    keep: list[int] = []
    for i in range(a.shape[0]):
        lo, hi = a.indptr[i], a.indptr[i + 1]
        key = (a.indices[lo:hi].tobytes() + a.data[lo:hi].tobytes()
               + np.float64(b[i]).tobytes())
        if key not in seen:
            seen.add(key)
            keep.append(i)
    return np.array(keep, dtype=int)


def _eliminate_free(a: sp.csr_matrix, b: np.ndarray, c: np.ndarray,
                    free_cols: np.ndarray, cone_cols: np.ndarray,
                    red: _Reduction):
    """QR-eliminate free scalars; returns dense reduced (A, b, c)."""
    F = np.asarray(a[:, free_cols].todense())
    c_free = c[free_cols]
    m, k = F.shape
    Q, R, perm = qr(F, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R)) if min(R.shape) else np.array([])
    rank = 0
    if diag.size and diag[0] > 0.0:
        thresh = max(m, k) * np.finfo(float).eps * diag[0]
        rank = int(np.count_nonzero(diag > thresh))

    # An objective component along a null direction of F means that scalar
    # can drift freely without touching any constraint: unbounded.
    if rank < k:
        cp = c_free[perm]
        if rank:
            r11 = R[:rank, :rank]
            r12 = R[:rank, rank:]
            resid = cp[rank:] - r12.T @ solve_triangular(r11, cp[:rank], trans="T")
        else:
            resid = cp
        if np.max(np.abs(resid), initial=0.0) > 1e-9 * (1.0 + np.abs(c_free).max(initial=0.0)):
            raise _PresolveUnbounded

    kept_free = perm[:rank]
    q1 = Q[:, :rank]
    r11 = R[:rank, :rank]
    c_kept = c_free[kept_free]

    a_cone = np.asarray(a[:, cone_cols].todense())
    if rank:
        qfull, _ = qr(q1, mode="full")
        q2 = qfull[:, rank:]
    else:
        q2 = np.eye(m)
    a_red = q2.T @ a_cone
    b_red = q2.T @ b

    if rank:
        red.offset += float(c_kept @ solve_triangular(r11, q1.T @ b))
        c_red = c[cone_cols] - a_cone.T @ (q1 @ solve_triangular(r11, c_kept, trans="T"))
    else:
        c_red = c[cone_cols]

    red.q1, red.q2, red.r11 = q1, q2, r11
    red.kept_free, red.c_free_kept = kept_free, c_kept
    return a_red, b_red, c_red


def _rank_reduce(a, b: np.ndarray, feas_tol: float):
    """Drop linearly dependent rows; checks the dropped rhs for consistency."""
    m = a.shape[0]
    if m == 0:
        return a, b, np.array([], dtype=int)
    gram = a @ a.T
    gram = np.asarray(gram.todense()) if sp.issparse(gram) else np.asarray(gram)
    gram = 0.5 * (gram + gram.T)
    L, piv, rank, info = lapack.dpstrf(gram, lower=1)
    if info < 0:
        raise RuntimeError("pivoted Cholesky failed during presolve")
    piv = piv - 1
    basis = piv[:rank]
    dropped = piv[rank:]
    if dropped.size:
        cross = gram[np.ix_(basis, dropped)]
        lr = np.tril(L[:rank, :rank])
        z = cho_solve((lr, True), cross)
        implied = z.T @ b[basis]
        scale = 1.0 + np.abs(b).max(initial=0.0)
        if np.max(np.abs(b[dropped] - implied), initial=0.0) > 1e3 * feas_tol * scale:
            raise _PresolveInfeasible
    kept = np.sort(basis)
    return a[kept], b[kept], kept


# ---------------------------------------------------------------------------
# Interior-point core (pure 2x2 PSD cone problems, minimization)
# ---------------------------------------------------------------------------


def _block_diag_csr(w2: np.ndarray, pattern: tuple[np.ndarray, np.ndarray]) -> sp.csr_matrix:
    """CSR view of the block-diagonal scaling without format conversions."""
    nb = w2.shape[0]
    indices, indptr = pattern
    return sp.csr_matrix((w2.reshape(-1), indices, indptr), shape=(3 * nb, 3 * nb))


def _factor_normal(a, w2: np.ndarray, sparse_a: bool, csr_pattern):
    """Cholesky factor of A W2 A'."""
    m = a.shape[0]
    nb = w2.shape[0]
    if sparse_a:
        aw2 = a @ _block_diag_csr(w2, csr_pattern)
        mmat = np.asarray((aw2 @ a.T).todense())
    else:
        a3 = a.reshape(m, nb, 3)
        aw2 = np.einsum("mbi,bij->mbj", a3, w2).reshape(m, 3 * nb)
        mmat = aw2 @ a.T
    mmat = 0.5 * (mmat + mmat.T)
    jitter = 0.0
    base = 1e-13 * max(1.0, float(np.trace(mmat)) / max(m, 1))
    for attempt in range(4):
        c, info = lapack.dpotrf(mmat if jitter == 0.0 else mmat + jitter * np.eye(m),
                                lower=1)
        if info == 0:
            return c
        jitter = base * (10.0 ** (3 * attempt))
    raise np.linalg.LinAlgError("normal equations are numerically singular")


def _ipm(a, b: np.ndarray, c: np.ndarray, nb: int, tol: Tolerances) -> dict:
    """Homogeneous self-dual Mehrotra predictor-corrector loop.

    ``a`` is (m, 3*nb), sparse or dense, in svec coordinates; the sense is
    minimization.  Returns the final (or best) iterate and a status.
    """
    sparse_a = sp.issparse(a)
    at = a.T.tocsr() if sparse_a else np.ascontiguousarray(a.T)
    m = a.shape[0]
    csr_pattern = None
    if sparse_a:
        indices = np.repeat(3 * np.arange(nb), 9) + np.tile(np.arange(3), 3 * nb)
        csr_pattern = (indices, 3 * np.arange(3 * nb + 1))

    x = np.tile(np.array([1.0, 0.0, 1.0]), nb)
    s = x.copy()
    y = np.zeros(m)
    tau, kappa = 1.0, 1.0
    degree = 2 * nb + 1

    bnorm = 1.0 + np.abs(b).max(initial=0.0)
    cnorm = 1.0 + np.abs(c).max(initial=0.0)

    history: list[tuple[float, float, float, float]] = []
    best: tuple | None = None
    best_score = np.inf
    status = MAX_ITERATIONS
    iters_done = 0

    for iteration in range(tol.max_iterations + 1):
        ax = a @ x
        aty = at @ y
        cx = float(c @ x)
        by = float(b @ y)

        pobj = cx / tau
        dobj = by / tau
        pres = np.abs(ax / tau - b).max(initial=0.0) / bnorm
        dres = np.abs((aty + s) / tau - c).max(initial=0.0) / cnorm
        absgap = abs(pobj - dobj)
        mu = (float(x @ s) + tau * kappa) / degree
        history.append((pobj, dobj, pres, dres))

        score = max(pres, dres, absgap)
        if score < best_score:
            best_score = score
            best = (x / tau, y / tau, s / tau, pobj, dobj, absgap)

        if pres <= tol.feasibility and dres <= tol.feasibility and absgap <= tol.gap:
            status = OPTIMAL
            best = (x / tau, y / tau, s / tau, pobj, dobj, absgap)
            break

        # tau collapsing while kappa stays alive signals an infeasibility
        # certificate; which one depends on the sign of b'y versus c'x.
        if tau <= 1e-10 * max(1.0, kappa) or (mu <= 1e-14 and tau <= 1e-6 * kappa):
            if by > 1e-10:
                status = INFEASIBLE
            elif cx < -1e-10:
                status = UNBOUNDED
            else:
                status = NUMERICAL_FAILURE
            break

        if iteration == tol.max_iterations:
            status = MAX_ITERATIONS
            break

        rp = ax - b * tau
        rd = -aty - s + c * tau
        rg = cx - by + kappa

        xb = x.reshape(nb, 3)
        sb = s.reshape(nb, 3)
        try:
            lx = _chol2(_svec_to_mat(xb))
            ls = _chol2(_svec_to_mat(sb))
        except np.linalg.LinAlgError:
            status = NUMERICAL_FAILURE
            break
        # Nesterov-Todd scaling from the eigensystem of L_x' S L_x, whose
        # eigenvalues are the squared scaled-point spectrum.
        g_mat = lx.transpose(0, 2, 1) @ _svec_to_mat(sb) @ lx
        sig1, sig2, vx, vy = _eig2_sym(g_mat[:, 0, 0], g_mat[:, 0, 1], g_mat[:, 1, 1])
        if np.any(sig2 <= 0.0) or not np.all(np.isfinite(sig1)):
            status = NUMERICAL_FAILURE
            break
        lam = np.sqrt(np.stack([sig1, sig2], axis=1))
        v_rot = np.empty((nb, 2, 2))
        v_rot[:, 0, 0] = vx
        v_rot[:, 1, 0] = vy
        v_rot[:, 0, 1] = -vy
        v_rot[:, 1, 1] = vx
        r_mat = (lx @ v_rot) / np.sqrt(lam)[:, None, :]
        kr = _symkron(r_mat)
        krt = _symkron(r_mat.transpose(0, 2, 1))
        w2 = krt @ kr

        try:
            factor = _factor_normal(a, w2, sparse_a, csr_pattern)
        except np.linalg.LinAlgError:
            status = NUMERICAL_FAILURE
            break

        def apply_w2(v: np.ndarray) -> np.ndarray:
            return np.einsum("bij,bj->bi", w2, v.reshape(nb, 3)).ravel()

        def apply_kr(v: np.ndarray) -> np.ndarray:
            return np.einsum("bij,bj->bi", kr, v.reshape(nb, 3)).ravel()

        def apply_krt(v: np.ndarray) -> np.ndarray:
            return np.einsum("bij,bj->bi", krt, v.reshape(nb, 3)).ravel()

        w2c = apply_w2(c)
        v_sol = lapack.dpotrs(factor, a @ w2c + b, lower=1)[0]
        qdir = -w2c + apply_w2(at @ v_sol)
        cq = float(c @ qdir)
        bv = float(b @ v_sol)

        def solve_direction(eta: float, d_svec: np.ndarray, d_kappa: float):
            g = np.empty((nb, 3))
            g[:, 0] = d_svec[:, 0] / lam[:, 0]
            g[:, 1] = 2.0 * d_svec[:, 1] / (lam[:, 0] + lam[:, 1])
            g[:, 2] = d_svec[:, 2] / lam[:, 1]
            h = apply_krt(g.ravel())

            w2rd = apply_w2(eta * rd)
            u_sol = lapack.dpotrs(factor, -eta * rp - a @ (h - w2rd), lower=1)[0]
            pdir = h - w2rd + apply_w2(at @ u_sol)

            cp = float(c @ pdir)
            bu = float(b @ u_sol)
            denom = kappa + tau * (bv - cq)
            dtau = (d_kappa - tau * (-eta * rg - cp + bu)) / denom

            dy = u_sol + dtau * v_sol
            dx = pdir + dtau * qdir
            ds = eta * rd + c * dtau - (at @ dy)
            dkappa = -eta * rg - float(c @ dx) + float(b @ dy)
            return dx, dy, ds, dtau, dkappa, g

        d_aff = np.zeros((nb, 3))
        d_aff[:, 0] = -lam[:, 0] * lam[:, 0]
        d_aff[:, 2] = -lam[:, 1] * lam[:, 1]
        dx_a, dy_a, ds_a, dtau_a, dkap_a, g_aff = solve_direction(1.0, d_aff, -tau * kappa)

        alpha = _step_length(lx, ls, dx_a, ds_a, tau, kappa, dtau_a, dkap_a)
        alpha = min(1.0, alpha)
        mu_aff = ((x + alpha * dx_a) @ (s + alpha * ds_a)
                  + (tau + alpha * dtau_a) * (kappa + alpha * dkap_a)) / degree
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3

        dshat = apply_kr(ds_a).reshape(nb, 3)
        dxhat = g_aff - dshat
        a1, a2, a3 = dxhat[:, 0], dxhat[:, 1], dxhat[:, 2]
        b1, b2, b3 = dshat[:, 0], dshat[:, 1], dshat[:, 2]
        d_comb = np.empty((nb, 3))
        d_comb[:, 0] = sigma * mu - lam[:, 0] * lam[:, 0] - (a1 * b1 + 0.5 * a2 * b2)
        d_comb[:, 2] = sigma * mu - lam[:, 1] * lam[:, 1] - (a3 * b3 + 0.5 * a2 * b2)
        d_comb[:, 1] = -0.5 * (a1 * b2 + a2 * b1 + a2 * b3 + a3 * b2)
        d_kappa = sigma * mu - tau * kappa - dtau_a * dkap_a

        dx, dy, ds, dtau, dkappa, _ = solve_direction(1.0 - sigma, d_comb, d_kappa)

        alpha = _step_length(lx, ls, dx, ds, tau, kappa, dtau, dkappa)
        step = min(1.0, 0.99 * alpha)
        if not math.isfinite(step) or step <= 0.0:
            status = NUMERICAL_FAILURE
            break

        x = x + step * dx
        y = y + step * dy
        s = s + step * ds
        tau += step * dtau
        kappa += step * dkappa
        iters_done = iteration + 1

    xf, yf, sf, pobj, dobj, absgap = best
    return {
        "status": status,
        "x": xf,
        "y": yf,
        "s": sf,
        "pobj": pobj,
        "dobj": dobj,
        "gap": absgap,
        "iterations": iters_done,
        "history": history,
    }


def _step_length(lx, ls, dx, ds, tau, kappa, dtau, dkappa) -> float:
    nb = lx.shape[0]
    alpha = min(_max_step(lx, dx.reshape(nb, 3)),
                _max_step(ls, ds.reshape(nb, 3)))
    if dtau < 0.0:
        alpha = min(alpha, -tau / dtau)
    if dkappa < 0.0:
        alpha = min(alpha, -kappa / dkappa)
    return alpha


# ---------------------------------------------------------------------------
# Public entry points
# ---------------------------------------------------------------------------


def solve(problem: ConicProblem, tolerances: Tolerances | None = None) -> ConicSolution:
    """Solve a block conic program.

    Presolve removes exactly duplicated equality rows, eliminates free
    scalars by QR, normalizes row scales and drops linearly dependent rows
    (checking that their right-hand sides stay consistent).  The
    interior-point core then runs on the pure PSD-cone remainder.
    """
    tol = tolerances or Tolerances()
    psd_idx = problem.psd_scalar_indices()
    free_idx = problem.free_scalar_indices()
    nb = psd_idx.shape[0]
    if nb == 0:
        raise ValueError("problem has no PSD blocks")
    cone_cols = psd_idx.ravel()

    sense_flip = -1.0 if problem.sense == "maximize" else 1.0

    # Move to svec coordinates: scale every m12 column (and coefficient).
    col_scale = np.ones(problem.n_scalars)
    col_scale[psd_idx[:, 1]] = 1.0 / _SQRT2
    c_full = sense_flip * problem.objective * col_scale
    a_svec = (problem.a_matrix.tocsr().astype(float) @ sp.diags(col_scale)).tocsr()
    b_full = problem.rhs.astype(float)

    red = _Reduction(kept_dupes=np.arange(problem.n_rows))

    def empty_solution(status: str) -> ConicSolution:
        n = problem.n_scalars
        return ConicSolution(
            status=status, primal_objective=np.nan, dual_objective=np.nan,
            x=np.zeros(n), y=np.zeros(problem.n_rows), s=np.zeros(n),
            iterations=0, gap=np.nan,
        )

    try:
        red.kept_dupes = _drop_duplicate_rows(a_svec, b_full)
        a1 = a_svec[red.kept_dupes]
        b1 = b_full[red.kept_dupes]

        if free_idx.size:
            a2, b2, c2 = _eliminate_free(a1, b1, c_full, free_idx, cone_cols, red)
        else:
            a2 = a1[:, cone_cols]
            b2, c2 = b1, c_full[cone_cols]

        if sp.issparse(a2):
            row_norm = np.sqrt(np.asarray(a2.multiply(a2).sum(axis=1)).ravel())
        else:
            row_norm = np.linalg.norm(a2, axis=1)
        zero_rows = row_norm <= 1e-300
        if np.any(np.abs(b2[zero_rows]) > tol.feasibility):
            raise _PresolveInfeasible
        keep_nz = np.flatnonzero(~zero_rows)
        red.kept_nonzero = keep_nz
        red.n_scaled_rows = a2.shape[0]
        row_scale = 1.0 / row_norm[keep_nz]
        red.row_scale = row_scale
        a3 = (sp.diags(row_scale) @ a2[keep_nz]).tocsr() if sp.issparse(a2) \
            else row_scale[:, None] * a2[keep_nz]
        b3 = row_scale * b2[keep_nz]

        a4, b4, kept_rank = _rank_reduce(a3, b3, tol.feasibility)
        red.kept_rank = kept_rank
    except _PresolveInfeasible:
        return empty_solution(INFEASIBLE)
    except _PresolveUnbounded:
        return empty_solution(UNBOUNDED)

    if a4.shape[0] == 0:
        return _solve_unconstrained(problem, c2, red, sense_flip, psd_idx)

    res = _ipm(a4, b4, c2, nb, tol)

    # --- postsolve -----------------------------------------------------
    n = problem.n_scalars
    x_pub = np.zeros(n)
    s_pub = np.zeros(n)
    x_svec = res["x"]
    s_svec = res["s"]
    xc = x_svec.reshape(nb, 3)
    sc = s_svec.reshape(nb, 3)
    x_pub[psd_idx[:, 0]] = xc[:, 0]
    x_pub[psd_idx[:, 1]] = xc[:, 1] / _SQRT2
    x_pub[psd_idx[:, 2]] = xc[:, 2]
    s_pub[psd_idx[:, 0]] = sc[:, 0]
    s_pub[psd_idx[:, 1]] = sc[:, 1] / _SQRT2
    s_pub[psd_idx[:, 2]] = sc[:, 2]

    # Multipliers flow backwards through rank reduction, row scaling and
    # free elimination; rows dropped as redundant keep multiplier zero.
    y3 = np.zeros(len(red.row_scale))
    y3[red.kept_rank] = res["y"]
    y2 = np.zeros(red.n_scaled_rows)
    y2[red.kept_nonzero] = red.row_scale * y3
    if red.q2 is not None:
        y1 = red.q2 @ y2
        if red.kept_free.size:
            y1 = y1 + red.q1 @ solve_triangular(red.r11, red.c_free_kept, trans="T")
            resid = b1 - (a1[:, cone_cols] @ x_svec)
            f1 = solve_triangular(red.r11, red.q1.T @ resid)
            x_pub[free_idx[red.kept_free]] = f1
    else:
        y1 = y2
    y_orig = np.zeros(problem.n_rows)
    y_orig[red.kept_dupes] = y1

    pobj = sense_flip * (res["pobj"] + red.offset)
    dobj = sense_flip * (res["dobj"] + red.offset)
    hist = [(sense_flip * p, sense_flip * d, pr, dr) for p, d, pr, dr in res["history"]]

    return ConicSolution(
        status=res["status"],
        primal_objective=pobj,
        dual_objective=dobj,
        x=x_pub,
        y=sense_flip * y_orig,
        s=s_pub,
        iterations=res["iterations"],
        gap=res["gap"],
        history=hist,
    )


def _solve_unconstrained(problem, c2, red, sense_flip, psd_idx) -> ConicSolution:
    """No equality rows remain: minimum is 0 at x = 0 iff c is blockwise PSD."""
    cb = c2.reshape(-1, 3)
    mats = _svec_to_mat(cb)
    half_tr = 0.5 * (mats[:, 0, 0] + mats[:, 1, 1])
    rad = np.sqrt(np.maximum(0.25 * (mats[:, 0, 0] - mats[:, 1, 1]) ** 2
                             + mats[:, 0, 1] ** 2, 0.0))
    n = problem.n_scalars
    if np.any(half_tr - rad < -1e-12):
        return ConicSolution(
            status=UNBOUNDED, primal_objective=np.nan, dual_objective=np.nan,
            x=np.zeros(n), y=np.zeros(problem.n_rows), s=np.zeros(n),
            iterations=0, gap=np.nan,
        )
    value = sense_flip * red.offset
    s_pub = np.zeros(n)
    s_pub[psd_idx[:, 0]] = cb[:, 0]
    s_pub[psd_idx[:, 1]] = cb[:, 1] / _SQRT2
    s_pub[psd_idx[:, 2]] = cb[:, 2]
    return ConicSolution(
        status=OPTIMAL, primal_objective=value, dual_objective=value,
        x=np.zeros(n), y=np.zeros(problem.n_rows), s=s_pub,
        iterations=0, gap=0.0,
    )


def extract_duals(solution: ConicSolution, problem: ConicProblem) -> np.ndarray:
    """Equality multipliers of an optimal solve, validated for stationarity.

    For a minimization the multipliers satisfy ``A' y + s* = c`` where
    ``s*`` is the slack functional (its m12 coefficient is doubled because
    the slack pairs with blocks through the trace product); a maximization
    satisfies ``A' y - s* = c``.  Raises on non-optimal input or a
    stationarity residual above 1e-6.
    """
    if solution.status != OPTIMAL:
        raise ValueError(f"dual extraction requires an optimal solve, got {solution.status}")
    sign = 1.0 if problem.sense == "minimize" else -1.0
    resid = (problem.a_matrix.T @ solution.y
             + sign * _slack_functional(problem, solution.s)
             - problem.objective)
    if np.max(np.abs(resid), initial=0.0) > 1e-6:
        raise ValueError("stationarity residual exceeds 1e-6")
    return solution.y


def _slack_functional(problem: ConicProblem, s_pub: np.ndarray) -> np.ndarray:
    out = s_pub.copy()
    psd_idx = problem.psd_scalar_indices()
    out[psd_idx[:, 1]] *= 2.0
    return out


# ---------------------------------------------------------------------------
# JSON dump/load
# ---------------------------------------------------------------------------


def problem_to_dict(problem: ConicProblem) -> dict:
    """Portable dict form: blocks, objective pairs and equality triplets."""
    coo = problem.a_matrix.tocoo()
    return {
        "sense": problem.sense,
        "blocks": list(problem.blocks),
        "objective": [[int(i), float(v)] for i, v in enumerate(problem.objective)
                      if v != 0.0],
        "equalities": {
            "rows": int(problem.n_rows),
            "rhs": [float(v) for v in problem.rhs],
            "triplets": [[int(r), int(c), float(v)]
                         for r, c, v in zip(coo.row, coo.col, coo.data)],
        },
    }


def problem_from_dict(data: dict) -> ConicProblem:
    blocks = tuple(data["blocks"])
    n = sum(3 if k == "psd" else 1 for k in blocks)
    objective = np.zeros(n)
    for i, v in data["objective"]:
        objective[int(i)] = float(v)
    eq = data["equalities"]
    rows = [int(t[0]) for t in eq["triplets"]]
    cols = [int(t[1]) for t in eq["triplets"]]
    vals = [float(t[2]) for t in eq["triplets"]]
    a = sp.csr_matrix((vals, (rows, cols)), shape=(int(eq["rows"]), n))
    return ConicProblem(
        blocks=blocks,
        objective=objective,
        a_matrix=a,
        rhs=np.array(eq["rhs"], dtype=float),
        sense=data["sense"],
    )


def dump_problem(problem: ConicProblem, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(problem_to_dict(problem), fh)


def load_problem(path: str) -> ConicProblem:
    with open(path) as fh:
        return problem_from_dict(json.load(fh))
