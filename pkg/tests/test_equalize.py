"""Decision-directed RLS phase equalization and the joint combiner."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlpnlab.constellation import build_qam, draw_symbols
from nlpnlab.equalize import (MODE_INDIVIDUAL, MODE_JOINT, MODE_NONE,
                              RlsPhaseState, WARMUP_SYMBOLS, equalize_frame,
                              frame_q, joint_combine, rls_phase_step,
                              sweep_forgetting)
from nlpnlab.rxdsp import RxSymbols
from oracles import batch_ls_phase


class TestRlsStep:
    def test_recursion_matches_batch_ls(self):
        rng = np.random.default_rng(0)
        n = 60
        ref = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        s = ref * np.exp(1j * 0.4) + 0.05 * (rng.standard_normal(n)
                                             + 1j * rng.standard_normal(n))
        lam = 0.95
        state = RlsPhaseState(lam=lam)
        for t in range(n):
            phi, state = rls_phase_step(state, s[t], ref[t])
        assert phi == pytest.approx(batch_ls_phase(s, ref, lam, n), abs=1e-10)

    def test_constant_rotation_identified(self):
        state = RlsPhaseState(lam=0.99)
        ref = 1.0 + 1.0j
        for _ in range(200):
            phi, state = rls_phase_step(state, ref * np.exp(1j * 0.3), ref)
        assert phi == pytest.approx(0.3, abs=1e-12)
        assert abs(state.w) == pytest.approx(1.0, abs=1e-12)

    def test_cold_start_reports_zero(self):
        assert RlsPhaseState(lam=0.9).phi_hat == 0.0

    def test_zero_reference_rejected(self):
        with pytest.raises(ValueError):
            rls_phase_step(RlsPhaseState(lam=0.9), 1.0 + 0j, 0.0 + 0j)


class TestJointCombine:
    def test_plain_mean_small_angles(self):
        phis = np.array([0.1, 0.2, 0.3])
        assert joint_combine(phis) == pytest.approx(0.2, abs=1e-12)

    def test_wraparound_mean(self):
        phis = np.array([np.pi - 0.05, -np.pi + 0.05])
        assert abs(abs(joint_combine(phis)) - np.pi) < 1e-9

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(min_value=-0.5, max_value=0.5), min_size=1,
                    max_size=8),
           st.floats(min_value=-3.0, max_value=3.0))
    def test_rotation_equivariance(self, phis, delta):
        base = joint_combine(np.array(phis))
        shifted = joint_combine(np.array(phis) + delta)
        diff = np.angle(np.exp(1j * (shifted - base - delta)))
        assert abs(diff) < 1e-9

    def test_vanishing_resultant_falls_back(self):
        phis = np.array([0.0, np.pi])
        assert joint_combine(phis, previous=0.7) == 0.7

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            joint_combine(np.array([]))


def _synthetic_rx(n_sc, n, phase, noise_scale, seed=0, c=None):
    c = c or build_qam(64)
    frame = draw_symbols(c, n_sc, n, seed=seed)
    a = frame.symbols
    rng = np.random.default_rng(seed + 1000)
    noise = (rng.standard_normal(a.shape)
             + 1j * rng.standard_normal(a.shape)) * noise_scale / np.sqrt(2)
    return RxSymbols(s=a * np.exp(1j * phase) + noise, a=a), c


class TestEqualizeFrame:
    def test_none_is_passthrough(self):
        rx, c = _synthetic_rx(2, 2000, 0.2, 0.05)
        out, phi = equalize_frame(rx, c, 0.99, MODE_NONE)
        assert out is rx
        assert np.all(phi == 0)

    def test_unknown_mode_rejected(self):
        rx, c = _synthetic_rx(1, 2000, 0.0, 0.01)
        with pytest.raises(ValueError):
            equalize_frame(rx, c, 0.99, "both")

    def test_static_phase_removed(self):
        rx, c = _synthetic_rx(2, 4000, 0.4, 0.05)
        out, phi = equalize_frame(rx, c, 0.99, MODE_INDIVIDUAL)
        assert np.median(phi[..., WARMUP_SYMBOLS:]) == pytest.approx(0.4, abs=0.01)
        assert frame_q(out, c).q_db > frame_q(rx, c).q_db + 10

    def test_common_walk_joint_beats_individual(self):
        c = build_qam(64)
        n_sc, n = 4, 20_000
        frame = draw_symbols(c, n_sc, n, seed=5)
        a = frame.symbols
        rng = np.random.default_rng(9)
        walk = np.cumsum(rng.normal(scale=0.01, size=n))
        noise = 0.05 / np.sqrt(2) * (rng.standard_normal(a.shape)
                                     + 1j * rng.standard_normal(a.shape))
        rx = RxSymbols(s=a * np.exp(1j * walk)[None, None, :] + noise, a=a)
        qi = frame_q(equalize_frame(rx, c, 0.9, MODE_INDIVIDUAL)[0], c)
        qj = frame_q(equalize_frame(rx, c, 0.9, MODE_JOINT)[0], c)
        q0 = frame_q(rx, c)
        assert qi.q_db > q0.q_db
        assert qj.q_db >= qi.q_db

    def test_independent_walks_penalize_joint(self):
        c = build_qam(64)
        n_sc, n = 4, 20_000
        frame = draw_symbols(c, n_sc, n, seed=6)
        a = frame.symbols
        rng = np.random.default_rng(10)
        walks = np.cumsum(rng.normal(scale=0.01, size=(n_sc, 1, n)), axis=-1)
        noise = 0.05 / np.sqrt(2) * (rng.standard_normal(a.shape)
                                     + 1j * rng.standard_normal(a.shape))
        rx = RxSymbols(s=a * np.exp(1j * walks) + noise, a=a)
        qi = frame_q(equalize_frame(rx, c, 0.9, MODE_INDIVIDUAL)[0], c)
        qj = frame_q(equalize_frame(rx, c, 0.9, MODE_JOINT)[0], c)
        assert qj.q_db <= qi.q_db

    def test_joint_phase_shared_across_subcarriers(self):
        rx, c = _synthetic_rx(3, 3000, 0.2, 0.03)
        _, phi = equalize_frame(rx, c, 0.99, MODE_JOINT)
        assert np.all(phi[0] == phi[1])
        assert np.all(phi[0] == phi[2])


class TestSweep:
    def test_tie_breaks_toward_larger_lambda(self):
        rx, c = _synthetic_rx(2, 3000, 0.0, 1e-4)
        best, curve = sweep_forgetting(rx, c, [0.9, 0.99], MODE_INDIVIDUAL)
        qs = [rep.q_db for _, rep in curve]
        if qs[0] == qs[1]:
            assert best == 0.99
        else:
            assert best == [0.9, 0.99][int(np.argmax(qs))]

    def test_empty_grid_rejected(self):
        rx, c = _synthetic_rx(1, 2000, 0.0, 0.01)
        with pytest.raises(ValueError):
            sweep_forgetting(rx, c, [], MODE_INDIVIDUAL)
