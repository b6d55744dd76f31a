"""Constellation construction, shaping, moments, and symbol drawing."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlpnlab.constellation import (Constellation, build_qam, draw_symbols,
                                   entropy, indices_to_bits, kurtosis,
                                   nearest_point_indices, shape_mb)
from oracles import moment_kurtosis


class TestBuildQam:
    @pytest.mark.parametrize("order", [4, 16, 64, 256])
    def test_unit_power_and_uniform_probs(self, order):
        c = build_qam(order)
        assert len(c.points) == order
        assert np.allclose(np.sum(c.probs * np.abs(c.points) ** 2), 1.0)
        assert np.allclose(c.probs, 1.0 / order)
        assert len(np.unique(c.points)) == order

    @pytest.mark.parametrize("order", [4, 16, 64, 256])
    def test_bit_labels_shape(self, order):
        c = build_qam(order)
        assert c.bits.shape == (order, int(np.log2(order)))
        # all labels distinct
        packed = c.bits @ (1 << np.arange(c.bits.shape[1] - 1, -1, -1))
        assert len(np.unique(packed)) == order

    @pytest.mark.parametrize("order", [16, 64, 256])
    def test_gray_adjacency(self, order):
        """Nearest-neighbour points differ in exactly one bit."""
        c = build_qam(order)
        d = np.abs(c.points[:, None] - c.points[None, :])
        dmin = np.min(d[d > 0])
        ii, jj = np.nonzero(np.isclose(d, dmin))
        for i, j in zip(ii, jj):
            assert np.sum(c.bits[i] != c.bits[j]) == 1

    def test_invalid_order(self):
        with pytest.raises(ValueError):
            build_qam(32)

    def test_unit_power_enforced(self):
        with pytest.raises(ValueError):
            Constellation(points=np.array([2.0 + 0j, -2.0 + 0j]),
                          probs=np.array([0.5, 0.5]))

    def test_prob_simplex_enforced(self):
        with pytest.raises(ValueError):
            Constellation(points=np.array([1.0 + 0j, -1.0 + 0j]),
                          probs=np.array([0.6, 0.6]))


class TestMoments:
    @pytest.mark.parametrize("order", [4, 16, 64, 256])
    def test_kurtosis_matches_moment_oracle(self, order):
        c = build_qam(order)
        assert kurtosis(c) == pytest.approx(
            moment_kurtosis(c.points, c.probs), rel=1e-12)

    def test_qpsk_kurtosis_is_one(self):
        assert kurtosis(build_qam(4)) == pytest.approx(1.0, abs=1e-12)

    def test_64qam_kurtosis_exact_fraction(self):
        # E|b|^4 / (E|b|^2)^2 for uniform 64-QAM equals 2436/1764
        assert kurtosis(build_qam(64)) == pytest.approx(2436 / 1764, abs=1e-12)

    def test_uniform_entropy(self):
        assert entropy(build_qam(64)) == pytest.approx(6.0, abs=1e-12)


class TestShaping:
    @pytest.mark.parametrize("target", [3.5, 4.0, 5.0, 5.5])
    def test_entropy_hits_target(self, target):
        c = shape_mb(build_qam(64), target)
        assert entropy(c) == pytest.approx(target, abs=1e-6)
        assert np.sum(c.probs * np.abs(c.points) ** 2) == pytest.approx(1.0)

    def test_probs_are_maxwell_boltzmann(self):
        c = shape_mb(build_qam(64), 5.0)
        # log p must be affine in |x|^2 (single lambda)
        r2 = np.abs(c.points) ** 2
        logp = np.log(c.probs)
        coeff = np.polyfit(r2, logp, 1)
        assert np.max(np.abs(np.polyval(coeff, r2) - logp)) < 1e-9

    def test_kurtosis_increases_with_shaping(self):
        base = build_qam(64)
        ks = [kurtosis(shape_mb(base, h)) for h in (5.8, 5.0, 4.2)]
        assert ks[0] < ks[1] < ks[2]
        assert ks[0] > kurtosis(base)

    def test_full_entropy_is_identity(self):
        base = build_qam(64)
        c = shape_mb(base, 6.0)
        assert np.allclose(c.probs, base.probs)

    def test_out_of_range_entropy(self):
        with pytest.raises(ValueError):
            shape_mb(build_qam(64), 6.5)
        with pytest.raises(ValueError):
            shape_mb(build_qam(64), 0.0)

    def test_nonuniform_base_rejected(self):
        shaped = shape_mb(build_qam(64), 5.0)
        with pytest.raises(ValueError):
            shape_mb(shaped, 4.0)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(min_value=2.5, max_value=5.9))
    def test_entropy_target_property(self, target):
        c = shape_mb(build_qam(64), target)
        assert abs(entropy(c) - target) < 1e-6


class TestDrawSymbols:
    def test_shape_and_membership(self):
        c = build_qam(16)
        f = draw_symbols(c, 3, 500, seed=1)
        assert f.symbols.shape == (3, 2, 500)
        assert np.all(np.isin(f.symbols, c.points))
        assert np.array_equal(c.points[f.point_indices], f.symbols)

    def test_determinism_and_substreams(self):
        c = build_qam(64)
        a = draw_symbols(c, 2, 1000, seed=7)
        b = draw_symbols(c, 2, 1000, seed=7)
        assert np.array_equal(a.symbols, b.symbols)
        assert not np.array_equal(a.symbols[0, 0], a.symbols[0, 1])
        assert not np.array_equal(a.symbols[0, 0], a.symbols[1, 0])
        other = draw_symbols(c, 2, 1000, seed=8)
        assert not np.array_equal(a.symbols, other.symbols)

    def test_shaped_frequencies(self):
        c = shape_mb(build_qam(64), 5.0)
        f = draw_symbols(c, 1, 200_000, seed=2)
        counts = np.bincount(f.point_indices.reshape(-1), minlength=64)
        freq = counts / counts.sum()
        assert np.max(np.abs(freq - c.probs)) < 5e-3

    def test_nearest_point_round_trip(self):
        c = build_qam(64)
        f = draw_symbols(c, 1, 2000, seed=3)
        noisy = f.symbols + 0.01 * (1 + 1j)
        assert np.array_equal(nearest_point_indices(c, noisy), f.point_indices)

    def test_indices_to_bits(self):
        c = build_qam(16)
        idx = np.array([0, 5, 15])
        assert np.array_equal(indices_to_bits(c, idx), c.bits[idx])
        plain = Constellation(points=np.array([1.0 + 0j, -1.0 + 0j]),
                              probs=np.array([0.5, 0.5]))
        with pytest.raises(ValueError):
            indices_to_bits(plain, idx)
