import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import heterodyne_oracle_polar, heterodyne_oracle_rect, homodyne_oracle
from qrandcert import detection
from qrandcert.detection import (
    Annulus,
    ConditionalDistribution,
    DetectorScenario,
    HomodynePartition,
    PhaseSpacePartition,
    RawSampleSet,
    Sector,
    SectorAnnulus,
    Strip,
    SymmetricPartitionSpec,
    annulus_partition,
    effective_efficiency,
    empirical_probs,
    expand_symmetric,
    heterodyne_probs,
    homodyne_probs,
    merge_outcomes,
    read_probs_csv,
    read_samples_csv,
    sector_annulus_partition,
    sector_partition,
    strip_partition,
    write_probs_csv,
    write_samples_csv,
)

# Frozen from the quadrature oracle (tests/conftest.py) before the analytic
# expressions were written; mu=0.2, eta=1.
HOM_D2_MU02 = np.array([
    [0.18554668476134881, 0.81445331523865128],
    [0.81445331523865128, 0.18554668476134881],
])
HOM_D4_MU02_L1 = np.array([
    [0.01048176225928784, 0.17506492250206096, 0.51284707558004317, 0.30160623965860811],
    [0.30160623965860811, 0.51284707558004317, 0.17506492250206096, 0.01048176225928784],
])


class TestHomodyne:
    def test_zero_energy_is_uniform(self):
        dist = homodyne_probs(0.0, 1.0, HomodynePartition([0.0]))
        assert np.allclose(dist.table, 0.5)

    def test_binary_table_matches_quadrature_oracle(self):
        dist = homodyne_probs(0.2, 1.0, HomodynePartition([0.0]))
        assert np.allclose(dist.table, HOM_D2_MU02, atol=1e-12)
        assert dist.prob(1, 0) == pytest.approx(0.8144, abs=1e-4)

    def test_four_outcome_table_matches_quadrature_oracle(self):
        part = expand_symmetric(SymmetricPartitionSpec(4, [1.0]))
        dist = homodyne_probs(0.2, 1.0, part)
        assert np.allclose(dist.table, HOM_D4_MU02_L1, atol=1e-12)

    def test_unsorted_thresholds_rejected(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            HomodynePartition([1.0, 0.0])

    def test_domain_checks(self):
        part = HomodynePartition([0.0])
        with pytest.raises(ValueError):
            homodyne_probs(-0.1, 1.0, part)
        with pytest.raises(ValueError):
            homodyne_probs(0.1, 0.0, part)
        with pytest.raises(ValueError):
            homodyne_probs(0.1, 1.1, part)

    @given(
        mu=st.floats(min_value=0.0, max_value=1.0),
        eta=st.floats(min_value=0.05, max_value=1.0),
        thresholds=st.lists(st.floats(min_value=-3, max_value=3), min_size=1,
                            max_size=6, unique=True),
    )
    @settings(max_examples=60, deadline=None)
    def test_rows_normalized_and_mirror(self, mu, eta, thresholds):
        part = HomodynePartition(sorted(thresholds))
        dist = homodyne_probs(mu, eta, part)
        assert np.all(np.abs(dist.table.sum(axis=1) - 1.0) < 1e-9)

    @pytest.mark.parametrize("d,levels", [(2, []), (3, [0.7]), (4, [0.9]), (6, [0.5, 1.3])])
    def test_mirror_symmetry_exact(self, d, levels):
        part = expand_symmetric(SymmetricPartitionSpec(d, levels))
        dist = homodyne_probs(0.23, 0.8, part)
        assert np.array_equal(dist.table[0], dist.table[1][::-1])

    def test_merging_adjacent_intervals_sums_exactly(self):
        part = expand_symmetric(SymmetricPartitionSpec(4, [0.8]))
        dist = homodyne_probs(0.17, 0.9, part)
        merged = merge_outcomes(dist, 1)
        expected = dist.table[:, 1] + dist.table[:, 2]
        assert np.array_equal(merged.table[:, 1], expected)
        coarse = homodyne_probs(0.17, 0.9, HomodynePartition([-0.8, 0.8]))
        assert np.allclose(merged.table, coarse.table, atol=1e-15)


class TestSymmetricSpec:
    @pytest.mark.parametrize("d,levels,expected", [
        (2, [], (0.0,)),
        (3, [0.6], (-0.6, 0.6)),
        (4, [0.8], (-0.8, 0.0, 0.8)),
        (6, [0.5, 1.2], (-1.2, -0.5, 0.0, 0.5, 1.2)),
        (5, [0.4, 1.1], (-1.1, -0.4, 0.4, 1.1)),
    ])
    def test_expansion(self, d, levels, expected):
        part = expand_symmetric(SymmetricPartitionSpec(d, levels))
        assert part.thresholds == expected

    def test_level_validation(self):
        with pytest.raises(ValueError):
            SymmetricPartitionSpec(4, [])
        with pytest.raises(ValueError):
            SymmetricPartitionSpec(6, [1.2, 0.5])
        with pytest.raises(ValueError):
            SymmetricPartitionSpec(3, [-0.4])


class TestEffectiveEfficiency:
    def test_values(self):
        assert effective_efficiency(1.0, 0.0) == 1.0
        assert effective_efficiency(1.0, math.pi / 2) == pytest.approx(0.0, abs=1e-15)
        assert effective_efficiency(1.0, math.radians(15)) == pytest.approx(0.9659, abs=1e-4)
        assert effective_efficiency(0.5, math.radians(60)) == pytest.approx(0.25)

    def test_rejects_bad_eta(self):
        with pytest.raises(ValueError):
            effective_efficiency(0.0, 0.1)


class TestHeterodyne:
    def test_strip_equivalence_with_half_efficiency_homodyne(self):
        for mu in (0.05, 0.2, 0.45):
            for eta in (0.3, 1.0):
                part = strip_partition([-0.7, 0.0, 0.7])
                het = heterodyne_probs(mu, eta, part)
                hom = homodyne_probs(mu, eta / 2.0, HomodynePartition([-0.7, 0.0, 0.7]))
                assert np.allclose(het.table, hom.table, atol=1e-8)

    def test_binary_strip_value(self):
        het = heterodyne_probs(0.2, 1.0, strip_partition([0.0]))
        assert het.prob(1, 0) == pytest.approx(0.7364, abs=1e-4)
        assert het.prob(1, 0) == pytest.approx(0.736455371567231, abs=1e-10)

    def test_zero_energy_state_independent(self):
        part = sector_partition(4)
        dist = heterodyne_probs(0.0, 1.0, part)
        assert np.allclose(dist.table[0], dist.table[1], atol=1e-12)
        assert np.allclose(dist.table[0], 0.25, atol=1e-9)

    def test_quadrants_match_2d_quadrature_oracle(self):
        part = sector_partition(4)
        dist = heterodyne_probs(0.2, 1.0, part)
        for x, sign in ((0, 1.0), (1, -1.0)):
            for b, (qx, qy) in enumerate([(1, 1), (-1, 1), (-1, -1), (1, -1)]):
                ref = heterodyne_oracle_rect(
                    0.2, 1.0, sign,
                    0.0 if qx > 0 else -np.inf, np.inf if qx > 0 else 0.0,
                    0.0 if qy > 0 else -np.inf, np.inf if qy > 0 else 0.0,
                )
                assert dist.table[x, b] == pytest.approx(ref, abs=1e-9)

    def test_quadrants_mirror_between_inputs(self):
        dist = heterodyne_probs(0.2, 1.0, sector_partition(4))
        # Negating X swaps the two displaced states and maps quadrant
        # b -> 1, 0, 3, 2.
        mirror = [1, 0, 3, 2]
        for b in range(4):
            assert dist.table[0, b] == pytest.approx(dist.table[1, mirror[b]], abs=1e-10)

    def test_strip_quadrature_agrees_with_analytic(self):
        # The half planes evaluated through the polar-quadrature path must
        # match the analytic strip expression.
        right = (Sector(-math.pi / 2, math.pi / 2),)
        left = (Sector(math.pi / 2, 3 * math.pi / 2),)
        part = PhaseSpacePartition([right, left])
        analytic = heterodyne_probs(0.2, 1.0, strip_partition([0.0]))
        polar = heterodyne_probs(0.2, 1.0, part)
        assert np.allclose(polar.table, analytic.table[:, ::-1], atol=1e-8)

    def test_annuli_mass_against_polar_oracle(self):
        part = annulus_partition([1.1])
        dist = heterodyne_probs(0.3, 0.9, part)
        ref = heterodyne_oracle_polar(0.3, 0.9, 1.0, 0.0, 2 * math.pi, 0.0, 1.1)
        assert dist.table[0, 0] == pytest.approx(ref, abs=1e-9)

    def test_sector_annulus_mass_against_polar_oracle(self):
        part = sector_annulus_partition(4, [0.9])
        dist = heterodyne_probs(0.25, 1.0, part)
        # Region 1: second quadrant sector of the inner disc.
        ref = heterodyne_oracle_polar(0.25, 1.0, 1.0, math.pi / 2, math.pi, 0.0, 0.9)
        assert dist.table[0, 1] == pytest.approx(ref, abs=1e-9)

    def test_sector_annulus_grid_rows_normalized(self):
        part = sector_annulus_partition(4, [0.9])
        dist = heterodyne_probs(0.25, 1.0, part)
        assert np.all(np.abs(dist.table.sum(axis=1) - 1.0) < 1e-9)

    def test_phase_offset_rotates_mass(self):
        part = sector_partition(4)
        quarter = heterodyne_probs(0.2, 1.0, part, phase_offset=math.pi / 2)
        plain = heterodyne_probs(0.2, 1.0, part)
        # Rotating the displacement by 90 degrees advances the sector index.
        assert quarter.table[0, 1] == pytest.approx(plain.table[0, 0], abs=1e-9)

    def test_tiling_violations_rejected(self):
        with pytest.raises(ValueError, match="cover"):
            PhaseSpacePartition([Strip(-math.inf, 0.0), Strip(1.0, math.inf)])
        with pytest.raises(ValueError, match="overlap"):
            PhaseSpacePartition([Strip(-math.inf, 1.0), Strip(0.0, math.inf)])


class TestScenario:
    def test_partition_kind_must_match(self):
        with pytest.raises(ValueError):
            DetectorScenario("homodyne", 1.0, 0.0, strip_partition([0.0]))
        with pytest.raises(ValueError):
            DetectorScenario("heterodyne", 1.0, 0.0, HomodynePartition([0.0]))
        with pytest.raises(ValueError):
            DetectorScenario("intensity", 1.0, 0.0, HomodynePartition([0.0]))

    def test_scenario_probs_phase_error_squares_cosine(self):
        part = HomodynePartition([0.0])
        scen = DetectorScenario("homodyne", 1.0, math.radians(30.0), part)
        expected = homodyne_probs(0.2, math.cos(math.radians(30.0)) ** 2, part)
        got = detection.scenario_probs(scen, 0.2)
        assert np.allclose(got.table, expected.table, atol=1e-15)


class TestDistributionValidation:
    def test_row_sum_enforced(self):
        with pytest.raises(ValueError, match="sum"):
            ConditionalDistribution(np.array([[0.5, 0.4], [0.5, 0.5]]))

    def test_entry_range_enforced(self):
        with pytest.raises(ValueError):
            ConditionalDistribution(np.array([[1.2, -0.2], [0.5, 0.5]]))

    def test_shape_enforced(self):
        with pytest.raises(ValueError):
            ConditionalDistribution(np.array([[1.0], [1.0]]))


class TestEmpirical:
    def _scenario(self, thresholds=(0.0,)):
        return DetectorScenario("homodyne", 1.0, 0.0, HomodynePartition(thresholds))

    def test_counting(self):
        samples = RawSampleSet(np.array([-1.0, -1.0, 1.0, 1.0]),
                               np.array([-2.0, 2.0]))
        dist = empirical_probs(samples, self._scenario())
        assert dist.table[0].tolist() == [0.5, 0.5]

    def test_boundary_sample_follows_half_open_rule(self):
        samples = RawSampleSet(np.array([0.0]), np.array([-1.0]))
        dist = empirical_probs(samples, self._scenario())
        assert dist.table[0].tolist() == [0.0, 1.0]

    def test_heterodyne_boundary_goes_to_lower_region(self):
        scen = DetectorScenario("heterodyne", 1.0, 0.0, sector_partition(4))
        # A point on the positive X axis borders sectors 0 and 3.
        samples = RawSampleSet(np.array([[1.0, 0.0]]), np.array([[-1.0, 0.5]]))
        dist = empirical_probs(samples, scen)
        assert dist.table[0, 0] == 1.0

    def test_monte_carlo_agrees_with_analytic(self):
        rng = np.random.default_rng(7)
        mu, eta, n = 0.2, 1.0, 1_000_000
        shift = math.sqrt(2 * eta * mu)
        xs0 = rng.normal(loc=shift, scale=math.sqrt(0.5), size=n)
        xs1 = rng.normal(loc=-shift, scale=math.sqrt(0.5), size=n)
        dist = empirical_probs(RawSampleSet(xs0, xs1), self._scenario())
        analytic = homodyne_probs(mu, eta, HomodynePartition([0.0]))
        for x in range(2):
            for b in range(2):
                p = analytic.table[x, b]
                sigma = math.sqrt(p * (1 - p) / n)
                assert abs(dist.table[x, b] - p) < 3.5 * sigma

    def test_phase_compensation_round_trip(self):
        rng = np.random.default_rng(11)
        mu, n = 0.2, 200_000
        amp = math.sqrt(mu)
        pts0 = rng.normal(scale=math.sqrt(0.5), size=(n, 2)) + [amp, 0.0]
        pts1 = rng.normal(scale=math.sqrt(0.5), size=(n, 2)) + [-amp, 0.0]
        theta = math.radians(20.0)
        rot = np.array([[math.cos(theta), -math.sin(theta)],
                        [math.sin(theta), math.cos(theta)]])
        scen = DetectorScenario("heterodyne", 1.0, 0.0, strip_partition([0.0]))
        reference = empirical_probs(RawSampleSet(pts0, pts1), scen)
        rotated = RawSampleSet(pts0 @ rot.T, pts1 @ rot.T)
        recovered = empirical_probs(rotated, scen, phase_compensate=True)
        assert np.allclose(recovered.table, reference.table, atol=4.0 / math.sqrt(n))

    def test_phase_compensation_requires_heterodyne(self):
        samples = RawSampleSet(np.array([1.0]), np.array([-1.0]))
        with pytest.raises(ValueError):
            empirical_probs(samples, self._scenario(), phase_compensate=True)

    def test_sample_format_must_match_detector(self):
        pairs = RawSampleSet(np.array([[1.0, 0.0]]), np.array([[-1.0, 0.0]]))
        with pytest.raises(ValueError):
            empirical_probs(pairs, self._scenario())

    def test_empty_class_rejected(self):
        with pytest.raises(ValueError):
            RawSampleSet(np.array([]), np.array([1.0]))


class TestFileFormats:
    def test_probs_round_trip(self, tmp_path):
        dist = homodyne_probs(0.2, 1.0, HomodynePartition([-0.5, 0.5]))
        path = tmp_path / "probs.csv"
        write_probs_csv(str(path), dist)
        back = read_probs_csv(str(path))
        assert np.array_equal(back.table, dist.table)

    def test_samples_round_trip(self, tmp_path):
        samples = RawSampleSet(np.array([[0.1, -0.2], [0.3, 0.4]]),
                               np.array([[-0.5, 0.6]]))
        path = tmp_path / "samples.csv"
        write_samples_csv(str(path), samples)
        back = read_samples_csv(str(path))
        assert np.array_equal(back.by_input[0], samples.by_input[0])
        assert np.array_equal(back.by_input[1], samples.by_input[1])

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError):
            read_probs_csv(str(path))
