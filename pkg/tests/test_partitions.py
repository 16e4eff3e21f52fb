import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qtorus.classical import KickHamiltonian, MapSpec, SymplecticMatrix, TorusPoint, find_periodic_orbit, sample_invariant_measure
from qtorus.partitions import (
    ClassicalSymbolicMeasure,
    PartitionSpec,
    ResolutionWarning,
    classical_entropy,
    classical_pressure,
    cylinder_measures,
    decode_word,
    encode_words,
    ks_entropy_rate,
    shannon_entropy,
    smooth_partition,
    word_of_point,
)

CAT = MapSpec(SymplecticMatrix(2, 1, 3, 2))
LAMBDA = math.log(2 + math.sqrt(3))


@pytest.fixture(scope="module")
def lebesgue():
    return sample_invariant_measure("lebesgue", CAT, 200_000, seed=11)


class TestPartitionSpec:
    def test_area_checked(self):
        with pytest.raises(ValueError):
            PartitionSpec((((0, 0.5, 0, 1),),))

    def test_overlap_checked(self):
        with pytest.raises(ValueError):
            PartitionSpec((((0, 0.6, 0, 1),), ((0.5, 1, 0, 0.9),)))

    def test_half_open_membership(self):
        part = PartitionSpec.halves()
        assert part.cell_index(np.array([0.5, 0.0])) == 1
        assert part.cell_index(np.array([0.0, 0.0])) == 0
        assert part.cell_index(np.array([1.0, 0.3])) == 0

    def test_union_cells(self):
        part = PartitionSpec((((0, 0.25, 0, 1), (0.75, 1, 0, 1)), ((0.25, 0.75, 0, 1),)))
        assert part.cell_index(np.array([[0.1, 0.1], [0.8, 0.5], [0.5, 0.5]])).tolist() == [0, 0, 1]
        assert part.is_position_strips

    def test_grid_index_matches_masks(self):
        grid = PartitionSpec.grid(4, 4)
        generic = PartitionSpec(grid.cells)
        pts = np.random.default_rng(0).random((2000, 2))
        np.testing.assert_array_equal(grid.cell_index(pts), generic.cell_index(pts))


class TestWords:
    def test_fixed_point(self):
        part = PartitionSpec.grid(2, 2)
        assert word_of_point(part, CAT, TorusPoint(0, 0), 5) == (0,) * 5

    def test_single_symbol(self):
        part = PartitionSpec.grid(2, 2)
        assert word_of_point(part, CAT, TorusPoint(0.7, 0.2), 1) == (2,)

    def test_period_two_alternates(self):
        part = PartitionSpec.grid(4, 4)
        p = find_periodic_orbit(CAT, 2)
        w = word_of_point(part, CAT, p, 6)
        assert w[0::2] == (w[0],) * 3 and w[1::2] == (w[1],) * 3

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(0, 3), min_size=1, max_size=10))
    def test_encode_roundtrip(self, word):
        code = encode_words(np.array([word]), 4)[0]
        assert decode_word(code, 4, len(word)) == tuple(word)


class TestCylinderMeasures:
    def test_sample_minimum(self):
        with pytest.raises(ValueError):
            cylinder_measures(np.zeros((100, 2)), PartitionSpec.halves(), CAT, 1)

    def test_single_cell(self, lebesgue):
        part = PartitionSpec(((((0, 1, 0, 1)),),))
        m = cylinder_measures(lebesgue, part, CAT, 3)
        assert m.weights == {(0, 0, 0): 1.0}

    def test_halves(self, lebesgue):
        m = cylinder_measures(lebesgue, PartitionSpec.halves(), CAT, 1)
        for w in [(0,), (1,)]:
            assert abs(m.weights[w] - 0.5) < 3 * m.standard_error(w)

    def test_quadrants_compatibility(self, lebesgue):
        m = cylinder_measures(lebesgue, PartitionSpec.grid(2, 2), CAT, 2)
        assert m.total() == pytest.approx(1.0, abs=1e-12)
        m1 = cylinder_measures(lebesgue, PartitionSpec.grid(2, 2), CAT, 1)
        for w, p in m1.weights.items():
            children = sum(m.weights.get(w + (k,), 0.0) for k in range(4))
            assert abs(children - p) <= 3 * m1.standard_error(w) + 1e-12

    def test_resolution_flag(self, lebesgue):
        with pytest.warns(ResolutionWarning):
            m = cylinder_measures(lebesgue[:10_000], PartitionSpec.grid(4, 4), CAT, 4)
        assert m.flagged


class TestEntropy:
    def test_values(self):
        assert shannon_entropy([1.0]) == 0.0
        assert shannon_entropy([0.5, 0.5]) == pytest.approx(0.693147, abs=1e-6)
        assert shannon_entropy([0.25] * 4) == pytest.approx(1.386294, abs=1e-6)

    def test_negative(self):
        with pytest.raises(ValueError):
            shannon_entropy([1.2, -0.2])

    def test_depth_zero(self):
        assert classical_entropy(ClassicalSymbolicMeasure(0, 2, {(): 1.0}, 10_000)) == 0.0

    def test_halves_log2(self, lebesgue):
        m = cylinder_measures(lebesgue, PartitionSpec.halves(), CAT, 1)
        assert classical_entropy(m) == pytest.approx(math.log(2), abs=1e-4)

    def test_periodic_rate_vanishes(self):
        p = find_periodic_orbit(CAT, 2)
        pts = sample_invariant_measure("periodic", CAT, 20_000, 0, p, 2)
        rates = ks_entropy_rate(CAT, PartitionSpec.grid(4, 4), pts, [1, 2, 4, 8]).rates
        for r in rates:
            assert r.block_rate <= math.log(2) / r.n + 1e-12
        assert rates[-1].conditional_rate < 1e-12

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(st.floats(0, 1), min_size=2, max_size=8),
        st.lists(st.floats(0, 1), min_size=2, max_size=8),
        st.floats(0, 1),
    )
    def test_property_concavity(self, a, b, t):
        k = min(len(a), len(b))
        a, b = np.array(a[:k]), np.array(b[:k])
        if a.sum() == 0 or b.sum() == 0:
            return
        a, b = a / a.sum(), b / b.sum()
        mix = shannon_entropy(np.clip(t * a + (1 - t) * b, 0, None))
        assert mix >= t * shannon_entropy(a) + (1 - t) * shannon_entropy(b) - 1e-12


class TestPressure:
    def test_unit_weights(self, lebesgue):
        m = cylinder_measures(lebesgue, PartitionSpec.grid(2, 2), CAT, 3)
        assert classical_pressure(m, [1.0] * 4) == classical_entropy(m)

    def test_single_word(self):
        m = ClassicalSymbolicMeasure(5, 2, {(0,) * 5: 1.0}, 10_000)
        assert classical_pressure(m, [math.e, math.e]) == pytest.approx(-10.0)

    def test_nonpositive_weight(self):
        m = ClassicalSymbolicMeasure(1, 2, {(0,): 1.0}, 10_000)
        with pytest.raises(ValueError):
            classical_pressure(m, [1.0, 0.0])

    @pytest.mark.filterwarnings("ignore::qtorus.partitions.ResolutionWarning")
    def test_pesin_pressure_rate(self):
        pts = sample_invariant_measure("lebesgue", CAT, 1_000_000, seed=2)
        part = PartitionSpec.grid(4, 4)
        w = [math.sqrt(2 + math.sqrt(3))] * 16
        p6 = classical_pressure(cylinder_measures(pts, part, CAT, 6), w)
        p5 = classical_pressure(cylinder_measures(pts, part, CAT, 5), w)
        assert abs(p6 - p5) < 0.1 * LAMBDA  # pressure rate -> H_KS - lambda = 0


class TestRates:
    def test_increasing_n_list(self, lebesgue):
        with pytest.raises(ValueError):
            ks_entropy_rate(CAT, PartitionSpec.halves(), lebesgue, [3, 2])

    def test_subadditivity(self, lebesgue):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            report = ks_entropy_rate(CAT, PartitionSpec.grid(2, 2), lebesgue, [1, 2, 3, 4, 5, 6])
        assert report.subadditivity
        assert all(c.ok for c in report.subadditivity)

    def test_truncation_flag(self):
        pts = sample_invariant_measure("lebesgue", CAT, 10_000, seed=0)
        report = ks_entropy_rate(CAT, PartitionSpec.grid(4, 4), pts, [1, 2, 3, 4, 5])
        assert report.truncated


class TestSmoothPartition:
    def test_sum_to_one(self):
        sp = smooth_partition(PartitionSpec.grid(2, 2), 0.05, size=128)
        np.testing.assert_allclose(sp.values.sum(axis=0), 1.0, atol=1e-10)
        assert sp.values.min() >= 0 and sp.values.max() <= 1 + 1e-8

    def test_width_limit(self):
        with pytest.raises(ValueError):
            smooth_partition(PartitionSpec.halves(), 0.2)

    def test_zero_width_is_indicator(self):
        part = PartitionSpec.halves()
        sp = smooth_partition(part, 0.0, size=64)
        np.testing.assert_array_equal(sp.values, part.indicator_grid(64))

    def test_support(self):
        part = PartitionSpec.grid(4, 1)
        width = 0.05
        sp = smooth_partition(part, width, size=256)
        x = np.arange(256) / 256
        # distance from the strip [0, 1/4) on the circle
        dist = np.where(x < 0.25, 0.0, np.minimum(x - 0.25, 1.0 - x))
        outside = dist > width + 1.0 / 256
        assert np.all(sp.values[0][outside, :] == 0)

    def test_coefficients_reproduce_grid(self):
        sp = smooth_partition(PartitionSpec.halves(), 0.05, size=64)
        c = np.fft.ifftshift(sp.coefficients(0))
        np.testing.assert_allclose(np.real(np.fft.ifft2(c) * c.size), sp.values[0], atol=1e-12)


def test_kicked_lebesgue_compatibility():
    spec = MapSpec(SymplecticMatrix(2, 1, 3, 2), KickHamiltonian.cosine(0.05))
    pts = sample_invariant_measure("lebesgue", spec, 100_000, seed=1)
    m = cylinder_measures(pts, PartitionSpec.grid(2, 2), spec, 3)
    assert m.total() == pytest.approx(1.0)
    assert abs(m.shifted(1, 2).total() - 1.0) < 1e-12
