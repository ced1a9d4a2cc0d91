import itertools
import math

import numpy as np
import pytest
from scipy.optimize import minimize

from conftest import cvxpy_reference
from qrandcert import certify, conic, detection
from qrandcert.certify import (
    CertificationInput,
    build_dual,
    build_primal,
    certificate_bound,
    dual_feasibility_violation,
    extract_strategy,
    guessing_probability,
    issue_certificate,
    load_certificate,
    min_entropy,
    save_certificate,
    solve_dual_direct,
)
from qrandcert.detection import ConditionalDistribution, HomodynePartition, homodyne_probs
from qrandcert.states import EnergyBound, reduced_states


def make_input(mu, thresholds=(0.0,), eta=1.0):
    dist = homodyne_probs(mu, eta, HomodynePartition(thresholds))
    return CertificationInput(EnergyBound(mu), dist)


def brute_force_pg_d2(mu: float, table: np.ndarray) -> float:
    """Direct optimization over extremal binary qubit strategies.

    Any adversarial decomposition reduces to mixtures of trivial devices
    (fixed output) and rank-one projective measurements, each used with its
    best guess pair.  Two projective atoms plus the two trivial devices
    exhaust the extreme points of the constraint polytope, so a grid plus
    simplex polish over the two projector angles is exhaustive.
    """
    states = reduced_states(EnergyBound(mu))
    psi = np.stack([states.psi0, states.psi1])

    def weights(theta):
        u = np.array([math.cos(theta), math.sin(theta)])
        return (psi @ u) ** 2  # (w for x=0, w for x=1)

    rhs = np.array([1.0, table[0, 0], table[1, 0]])

    def best_lp(thetas):
        w1 = weights(thetas[0])
        w2 = weights(thetas[1])
        a = np.array([
            [1.0, 1.0, 1.0, 1.0],
            [1.0, 0.0, w1[0], w2[0]],
            [1.0, 0.0, w1[1], w2[1]],
        ])
        score = np.array([
            1.0, 1.0,
            0.5 * (max(w1[0], 1 - w1[0]) + max(w1[1], 1 - w1[1])),
            0.5 * (max(w2[0], 1 - w2[0]) + max(w2[1], 1 - w2[1])),
        ])
        best = -np.inf
        for cols in itertools.combinations(range(4), 3):
            sub = a[:, cols]
            try:
                q = np.linalg.solve(sub, rhs)
            except np.linalg.LinAlgError:
                continue
            if np.all(q >= -1e-11):
                best = max(best, float(score[list(cols)] @ np.maximum(q, 0.0)))
        return best

    grid = np.linspace(0.0, math.pi, 61)
    best_val, best_pair = -np.inf, (0.0, 0.0)
    for t1 in grid:
        for t2 in grid:
            val = best_lp((t1, t2))
            if val > best_val:
                best_val, best_pair = val, (t1, t2)
    polish = minimize(lambda t: -best_lp(t), np.array(best_pair),
                      method="Nelder-Mead",
                      options={"xatol": 1e-10, "fatol": 1e-12, "maxfev": 2000})
    return max(best_val, -polish.fun)


class TestProgramStructure:
    def test_primal_counts_d2(self):
        prob = build_primal(make_input(0.2))
        assert prob.blocks == ("psd",) * 8
        assert prob.n_rows == 8 + 4

    def test_dual_counts_d2(self):
        prob = build_dual(make_input(0.2))
        assert sum(1 for k in prob.blocks if k == "psd") == 8
        assert sum(1 for k in prob.blocks if k == "free") == 4 + 12
        assert prob.n_rows == 24


class TestGuessingProbability:
    def test_zero_energy_gives_unit_pg(self):
        res = guessing_probability(make_input(0.0), form="both")
        assert res.status == conic.OPTIMAL
        assert res.pg == pytest.approx(1.0, abs=1e-8)
        assert res.min_entropy <= 1e-6

    def test_x_independent_table_gives_unit_pg(self):
        table = np.array([[0.3, 0.7], [0.3, 0.7]])
        inp = CertificationInput(EnergyBound(0.2), ConditionalDistribution(table))
        res = guessing_probability(inp, form="both")
        assert res.pg == pytest.approx(1.0, abs=1e-8)

    def test_primal_dual_cross_oracle(self):
        inp = make_input(0.2)
        primal = guessing_probability(inp, form="primal")
        direct = solve_dual_direct(inp)
        assert primal.status == direct.status == conic.OPTIMAL
        assert primal.pg == pytest.approx(direct.pg, abs=1e-6)

    def test_matches_cvxpy_on_primal_program(self):
        inp = make_input(0.25, thresholds=(-0.6, 0.0, 0.6))
        status, ref = cvxpy_reference(build_primal(inp))
        res = guessing_probability(inp, form="both")
        assert status == "optimal"
        assert res.pg == pytest.approx(ref, abs=1e-6)

    def test_forms_and_sandwich(self):
        for mu in (0.05, 0.2, 0.4):
            for thresholds in ((0.0,), (-0.8, 0.0, 0.8)):
                inp = make_input(mu, thresholds)
                res = guessing_probability(inp, form="both")
                assert res.status == conic.OPTIMAL
                # The primal iterate carries ~1e-8 equality residual, which
                # can inflate its objective past the exact dual bound.
                assert res.primal_value <= res.dual_value + 1e-7
                assert res.gap <= 1e-6
                assert res.pg == pytest.approx(res.dual_value, abs=1e-12)
                assert 0.5 <= res.pg <= 1.0
                assert 0.0 <= res.min_entropy <= math.log2(3.0)

    def test_infeasible_table_at_zero_energy(self):
        table = np.array([[0.9, 0.1], [0.1, 0.9]])
        inp = CertificationInput(EnergyBound(0.0), ConditionalDistribution(table))
        res = guessing_probability(inp)
        assert res.status == conic.INFEASIBLE

    def test_coarse_graining_never_decreases_pg(self):
        rng = np.random.default_rng(31)
        for _ in range(6):
            mu = float(rng.uniform(0.02, 0.45))
            levels = np.sort(rng.uniform(0.2, 1.8, size=1))
            part = detection.expand_symmetric(
                detection.SymmetricPartitionSpec(4, levels.tolist()))
            dist = homodyne_probs(mu, 1.0, part)
            inp = CertificationInput(EnergyBound(mu), dist)
            fine = guessing_probability(inp)
            b = int(rng.integers(0, 3))
            merged = detection.merge_outcomes(dist, b)
            coarse = guessing_probability(
                CertificationInput(EnergyBound(mu), merged))
            assert coarse.pg >= fine.pg - 1e-7

    def test_brute_force_equivalence_d2(self):
        for mu in (0.1, 0.25, 0.4):
            for threshold in (-0.4, 0.0, 0.5):
                inp = make_input(mu, (threshold,))
                res = guessing_probability(inp, form="dual")
                ref = brute_force_pg_d2(mu, inp.probs.table)
                assert res.pg == pytest.approx(ref, abs=1e-5)

    def test_invalid_form_rejected(self):
        with pytest.raises(ValueError):
            guessing_probability(make_input(0.2), form="fastest")


class TestMinEntropy:
    def test_values(self):
        assert min_entropy(1.0) == 0.0
        assert min_entropy(0.5) == 1.0
        assert min_entropy(1.0 / 3.0) == pytest.approx(math.log2(3.0), abs=1e-12)

    def test_domain(self):
        with pytest.raises(ValueError):
            min_entropy(0.0)
        with pytest.raises(ValueError):
            min_entropy(1.2)


class TestStrategies:
    def test_strategy_reproduces_table_and_objective(self):
        inp = make_input(0.2)
        res = guessing_probability(inp, form="primal")
        strat = extract_strategy(res, inp)
        assert strat.total_weight == pytest.approx(1.0, abs=1e-6)
        for entry in strat.entries:
            sums = entry.povm.sum(axis=0)
            assert np.allclose(sums, np.eye(2), atol=1e-6)
            eigs = np.linalg.eigvalsh(entry.povm)
            assert eigs.min() >= -1e-8
        assert np.allclose(strat.reproduced_table(), inp.probs.table, atol=1e-6)
        assert strat.success_probability() == pytest.approx(res.primal_value, abs=1e-6)

    def test_uniform_table_strategy_is_deterministic_mixture(self):
        inp = make_input(0.0)
        res = guessing_probability(inp, form="primal")
        strat = extract_strategy(res, inp)
        assert strat.total_weight == pytest.approx(1.0, abs=1e-6)
        assert strat.success_probability() == pytest.approx(1.0, abs=1e-6)

    def test_requires_optimal(self):
        inp = make_input(0.2)
        res = guessing_probability(inp, tolerances=conic.Tolerances(max_iterations=1))
        with pytest.raises(ValueError):
            extract_strategy(res, inp)


class TestCertificates:
    def test_issue_and_self_apply(self):
        inp = make_input(0.2, thresholds=(-0.8, 0.0, 0.8))
        res = guessing_probability(inp)
        cert = issue_certificate(res, inp)
        assert cert.value == pytest.approx(res.dual_value, abs=1e-9)
        assert cert.verify() <= 1e-9
        assert certificate_bound(cert, inp.probs) == pytest.approx(res.pg, abs=1e-6)

    def test_bound_on_x_independent_table(self):
        inp = make_input(0.2)
        cert = issue_certificate(guessing_probability(inp), inp)
        table = ConditionalDistribution(np.array([[0.4, 0.6], [0.4, 0.6]]))
        assert certificate_bound(cert, table) >= 1.0 - 1e-9

    def test_bound_dominates_fresh_solves(self):
        rng = np.random.default_rng(47)
        inp = make_input(0.15, thresholds=(-0.7, 0.0, 0.7))
        cert = issue_certificate(guessing_probability(inp), inp)
        for _ in range(10):
            noise = rng.uniform(-0.02, 0.02, size=(2, 4))
            table = np.clip(inp.probs.table + noise, 1e-6, 1.0)
            table /= table.sum(axis=1, keepdims=True)
            dist = ConditionalDistribution(table)
            fresh = guessing_probability(
                CertificationInput(EnergyBound(0.15), dist))
            assert certificate_bound(cert, dist) >= fresh.dual_value - 1e-9

    def test_dimension_mismatch_rejected(self):
        inp = make_input(0.2)
        cert = issue_certificate(guessing_probability(inp), inp)
        other = homodyne_probs(0.2, 1.0, HomodynePartition([-0.5, 0.0, 0.5]))
        with pytest.raises(ValueError):
            certificate_bound(cert, other)

    def test_round_trip_is_bit_exact(self, tmp_path):
        inp = make_input(0.3)
        cert = issue_certificate(guessing_probability(inp), inp)
        path = tmp_path / "cert.json"
        save_certificate(cert, str(path))
        back = load_certificate(str(path))
        assert back.mu == cert.mu
        assert back.value == cert.value
        assert np.array_equal(back.nu, cert.nu)
        assert np.array_equal(back.h_mats, cert.h_mats)

    def test_tampered_certificate_rejected_on_load(self, tmp_path):
        import json

        inp = make_input(0.3)
        cert = issue_certificate(guessing_probability(inp), inp)
        path = tmp_path / "cert.json"
        save_certificate(cert, str(path))
        payload = json.loads(path.read_text())
        payload["nu"][0][0] += 0.5
        path.write_text(json.dumps(payload))
        with pytest.raises(ValueError, match="feasibility"):
            load_certificate(str(path))

    def test_feasibility_violation_detects_bad_points(self):
        inp = make_input(0.2)
        res = guessing_probability(inp)
        good = dual_feasibility_violation(0.2, res.nu, res.h_mats)
        assert good <= 1e-9
        bad = dual_feasibility_violation(0.2, res.nu + 0.3, res.h_mats)
        assert bad > 1e-3
