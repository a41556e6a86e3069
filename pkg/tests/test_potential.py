"""Tests for the elliptical potential checker and the tight schedule."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vclbandit.errors import DimensionError
from vclbandit.potential import elliptical_report, tightness_report


class TestEllipticalReport:
    def test_single_unit_vector(self):
        rep = elliptical_report([[0.0, 1.0, 0.0]])
        assert rep.sum_quadratic == pytest.approx(1.0, abs=1e-15)
        assert rep.two_logdet == pytest.approx(2 * math.log(2), rel=1e-14)
        assert rep.bound_holds

    def test_zero_vectors(self):
        rep = elliptical_report(np.zeros((5, 3)))
        assert rep.sum_quadratic == 0.0 and rep.two_logdet == 0.0

    def test_random_unit_vectors_d8(self):
        rng = np.random.default_rng(8)
        Y = rng.standard_normal((1000, 8))
        Y /= np.linalg.norm(Y, axis=1, keepdims=True)
        rep = elliptical_report(Y)
        assert rep.sum_quadratic <= rep.two_logdet <= 2 * 8 * math.log(1001)

    def test_per_term_oracle(self):
        """Each term equals yᵀU⁻¹y from a direct solve."""
        rng = np.random.default_rng(1)
        Y = rng.uniform(-0.5, 0.5, size=(40, 3))
        rep = elliptical_report(Y)
        U = np.eye(3)
        for t, y in enumerate(Y):
            assert rep.per_term[t] == pytest.approx(y @ np.linalg.solve(U, y), rel=1e-12)
            U += np.outer(y, y)
        assert rep.two_logdet == pytest.approx(2 * np.linalg.slogdet(U)[1], rel=1e-12)

    def test_rejects_long_vectors(self):
        with pytest.raises(DimensionError):
            elliptical_report([[0.5, 0.5], [1.0, 0.2]])

    def test_rejects_empty(self):
        with pytest.raises(DimensionError):
            elliptical_report(np.zeros((0, 2)))

    @settings(max_examples=80, deadline=None)
    @given(d=st.integers(1, 8), m=st.integers(1, 200), seed=st.integers(0, 2**32 - 1),
           scale=st.floats(0.0, 1.0))
    def test_bound_property(self, d, m, seed, scale):
        rng = np.random.default_rng(seed)
        Y = rng.standard_normal((m, d))
        Y *= scale / np.maximum(np.linalg.norm(Y, axis=1, keepdims=True), 1e-300)
        assert elliptical_report(Y).bound_holds


class TestTightness:
    def test_unit_horizon(self):
        rep = tightness_report(1)
        assert rep.sum_sqrt == 0.0 == rep.tight_target
        assert rep.tight_ok()

    @pytest.mark.parametrize("T", [10, 100, 1000, 100_000])
    def test_tight(self, T):
        rep = tightness_report(T)
        assert rep.tight_ok()
        assert rep.sum_sqrt == pytest.approx(math.sqrt(T * math.log(T) / 2), rel=1e-9)
        np.testing.assert_allclose(rep.per_term, math.log(T) / (2 * T), rtol=1e-9)

    def test_t1000_value(self):
        assert tightness_report(1000).sum_sqrt == pytest.approx(58.7697, abs=1e-4)

    def test_cauchy_schwarz(self):
        for T in (10, 1000, 20_000):
            rep = tightness_report(T)
            assert rep.sum_sqrt <= math.sqrt(T * rep.sum_quadratic) * (1 + 1e-12)
            assert math.sqrt(T * rep.sum_quadratic) <= math.sqrt(T * math.log(T))

    def test_general_eps(self):
        rep = tightness_report(5000, eps=1.0)
        assert rep.sum_sqrt == pytest.approx(math.sqrt(5000 * math.log(5000) / 4), rel=1e-9)
        assert rep.bound_holds

    def test_text_and_csv(self):
        rep = tightness_report(4)
        assert "sum_sqrt" in rep.to_text()
        lines = rep.to_csv().split("\n")
        assert lines[0] == "t,z_t,S_t,per_term"
        assert len([ln for ln in lines if ln]) == 5
        t, z, S, per = lines[1].split(",")
        assert t == "1" and float(S) == pytest.approx(1 + float(z) ** 2)
