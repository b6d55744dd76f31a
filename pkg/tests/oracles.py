"""Independent reference implementations used only by the test suite.

Everything here is deliberately slow and direct: uniform trapezoid
quadrature, dense gather/matmul evaluation, explicit moment sums.  None of
it shares algorithmic structure with the fast paths under test.
"""

from __future__ import annotations

import numpy as np
import scipy.fft as sfft

from nlpnlab.channel import MANAKOV, LinkSpec
from nlpnlab.waveform import ScmPlan, rrc_taps


def moment_kurtosis(points: np.ndarray, probs: np.ndarray) -> float:
    """E|b|^4 / (E|b|^2)^2 by explicit moment sums."""
    m2 = float(np.sum(probs * np.abs(points) ** 2))
    m4 = float(np.sum(probs * np.abs(points) ** 4))
    return m4 / m2**2


def spm_phase(samples: np.ndarray, gamma_w_m: float, length_m: float) -> np.ndarray:
    """Closed-form lossless dispersionless Manakov solution: pure phase
    rotation by (8/9) * gamma * (|Ax|^2 + |Ay|^2) * L."""
    power = np.sum(np.abs(samples) ** 2, axis=0)
    return samples * np.exp(1j * MANAKOV * gamma_w_m * power * length_m)


def batch_ls_phase(s: np.ndarray, ref: np.ndarray, lam: float, n: int) -> float:
    """Exponentially-weighted least-squares phase after n symbols, solved as
    one batch problem: w = argmin sum lam^(n-1-t) |ref_t - w s_t|^2."""
    t = np.arange(n)
    wts = lam ** (n - 1 - t)
    num = np.sum(wts * ref[:n] * np.conj(s[:n]))
    den = np.sum(wts * np.abs(s[:n]) ** 2)
    return float(-np.angle(num / den))


def gaussian_dispersed(t: np.ndarray, t0: float, beta2: float,
                       z: float) -> np.ndarray:
    """Closed-form dispersion of exp(-t^2 / (2 t0^2))."""
    q = t0**2 - 1j * beta2 * z
    return t0 / np.sqrt(q / t0**2) / t0 * np.exp(-(t**2) / (2 * q))


def brute_force_tensor(plan: ScmPlan, link: LinkSpec, coi_subcarrier: int,
                       interferer: tuple[int, int], K: int,
                       z_per_span: int = 240, sps: int = 80) -> np.ndarray:
    """Direct quadrature of the interaction integral.

    Uniform trapezoid rule in z with an explicit e^{-alpha z} loss factor,
    dense time grid, and naive gather/matmul evaluation of

        X[k,m] = 2 (8/9) gamma / T * sum_spans int_0^L dz e^{-alpha z}
                 int dt |p_j(Z,t)|^2 conj(p(Z, t-kT-d)) p(Z, t-mT-d)

    with Z the cumulative distance, d = beta2 * Omega * Z the walk-off
    delay, and p the RRC pulse dispersed over Z (energy int |p|^2 dt = T).
    """
    fiber = link.fiber
    t_sym = 1.0 / plan.subcarrier_baud
    dt = t_sym / sps
    omega = 2 * np.pi * (plan.center_freq(*interferer)
                         - plan.center_freq(plan.coi_index, coi_subcarrier))
    # long linear (non-circular in effect) time grid holding every shift
    half_span = K + plan.tap_span_symbols + 8
    n_t = 2 * half_span * sps
    t_axis = (np.arange(n_t) - n_t // 2) * dt

    taps = rrc_taps(plan.rolloff, plan.tap_span_symbols, sps)
    pulse = np.zeros(n_t, dtype=np.complex128)
    c0 = n_t // 2
    h = len(taps) // 2
    pulse[c0 - h:c0 - h + len(taps)] = taps * np.sqrt(sps)  # int |p|^2 dt = T

    om = 2 * np.pi * sfft.fftfreq(n_t, d=dt)
    spec0 = sfft.fft(pulse)

    ks = np.arange(-K, K + 1)
    shifts = ks * sps
    idx = np.arange(n_t)
    gather = np.clip(idx[None, :] - shifts[:, None], 0, n_t - 1)
    oob = (idx[None, :] - shifts[:, None] != gather)

    x = np.zeros((2 * K + 1, 2 * K + 1), dtype=np.complex128)
    for span in range(link.n_spans):
        z_loc = np.linspace(0.0, fiber.span_m, z_per_span + 1)
        wz = np.full(z_per_span + 1, fiber.span_m / z_per_span)
        wz[0] *= 0.5
        wz[-1] *= 0.5
        for z, w in zip(z_loc, wz):
            z_cum = span * fiber.span_m + z
            disp = np.exp(1j * (fiber.beta2_s2_m / 2) * om**2 * z_cum)
            pj = sfft.ifft(spec0 * disp)
            d_s = fiber.beta2_s2_m * omega * z_cum
            pd = sfft.ifft(spec0 * disp * np.exp(-1j * om * d_s))
            q = np.abs(pj) ** 2
            p_shift = pd[gather]
            p_shift[oob] = 0.0
            rows = q[None, :] * np.conj(p_shift)
            weight = (2 * MANAKOV * fiber.gamma_w_m / t_sym
                      * np.exp(-fiber.alpha_np_m * z) * w * dt)
            x += weight * (rows @ p_shift.T)
    return x
