import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from ngp.metrics import accuracy, fnsr, fpsr, mse, nme_db, phase_indicator

sets = st.sets(st.integers(0, 20), max_size=12)


class TestSelectionRates:
    def test_fpsr_examples(self):
        assert fpsr({1, 2, 7}, {1, 2}) == pytest.approx(1 / 3)
        assert fpsr({1, 2}, {1, 2}) == 0.0
        assert fpsr({3, 4}, {1, 2}) == 1.0

    def test_fpsr_undefined(self):
        assert fpsr(set(), {1}) is None

    def test_fnsr_examples(self):
        assert fnsr({1}, {1, 2}) == 0.5
        assert fnsr({1, 2, 3}, {1, 2}) == 0.0
        assert fnsr(set(), {1, 2}) == 1.0

    def test_fnsr_undefined(self):
        assert fnsr({1}, set()) is None

    @given(sets, sets)
    def test_precision_recall_complements(self, sel, tru):
        assume(sel and tru)
        tp = len(sel & tru)
        assert fpsr(sel, tru) + tp / len(sel) == pytest.approx(1.0)
        assert fnsr(sel, tru) + tp / len(tru) == pytest.approx(1.0)


class TestNme:
    def test_mean_predictor_zero_db(self):
        t = np.array([1.0, 3.0, 8.0])
        assert nme_db(np.full(3, t.mean()), t) == pytest.approx(0.0, abs=1e-12)

    def test_exact_clamped(self):
        assert nme_db([1.0, 2.0], [1.0, 2.0]) == -300.0

    def test_direct_arithmetic(self):
        assert nme_db([0.0, 0.0], [0.0, 2.0]) == pytest.approx(10 * math.log10(2))
        assert nme_db([0.0, 0.0], [0.0, 2.0]) == pytest.approx(3.0103, abs=1e-4)

    def test_energy_normalization(self):
        assert nme_db([0.0, 0.0], [0.0, 2.0], "energy") == pytest.approx(0.0)

    def test_zero_variance(self):
        with pytest.raises(ValueError, match="variance"):
            nme_db([1.0, 2.0], [3.0, 3.0])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            nme_db(np.zeros((3, 2)), np.ones((3, 1)))

    @given(st.integers(0, 10_000), st.floats(-100, 100), st.floats(1.5, 50))
    def test_shift_and_scale(self, seed, c, factor):
        g = np.random.default_rng(seed)
        t = g.standard_normal(20)
        r = g.standard_normal(20)
        y = t + r
        base = nme_db(y, t)
        assert nme_db(y + c, t + c) == pytest.approx(base, abs=1e-6)
        assert nme_db(t + r / factor, t) == pytest.approx(base - 20 * math.log10(factor), abs=1e-9)

    def test_mse(self):
        assert mse([[0, 0], [1, 1]], [[1, 1], [1, 1]]) == 1.0


class TestAccuracy:
    def test_all_correct(self):
        assert accuracy([[0.9, 0.1], [0.2, 0.8]], [0, 1]) == 1.0

    def test_half(self):
        assert accuracy([[0.9, 0.1], [0.7, 0.3]], [0, 1]) == 0.5

    def test_tie_lowest_class(self):
        assert accuracy([[0.5, 0.5]], [0]) == 1.0

    def test_one_hot_labels(self):
        assert accuracy([[0.2, 0.8]], [[0, 1]]) == 1.0


class TestPhase:
    @pytest.mark.parametrize("avg,expected", [(0.004, 1), (0.006, 0), (0.005, 1), (0.0, 1)])
    def test_examples(self, avg, expected):
        assert phase_indicator(avg) == expected

    @given(st.floats(0, 1), st.floats(0, 1))
    def test_monotone(self, a, b):
        lo, hi = sorted((a, b))
        assert phase_indicator(lo) >= phase_indicator(hi)

    def test_range(self):
        with pytest.raises(ValueError):
            phase_indicator(1.5)
