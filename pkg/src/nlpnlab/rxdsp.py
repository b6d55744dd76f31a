"""Receiver chain and measurement: chromatic dispersion compensation,
subcarrier demultiplexing with matched filtering, gain normalization,
phase-noise extraction, empirical covariance, and BER/Q metrics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy.special import erfc, erfcinv

from .analytic import CovarianceMatrix
from .channel import LinkSpec
from .constellation import Constellation, indices_to_bits, nearest_point_indices
from .waveform import ScmPlan, Waveform, matched_filter, rrc_taps, shift_and_resample

MIN_COV_SYMBOLS = 10_000
BOOTSTRAP_BLOCK = 1024


@dataclass(frozen=True)
class RxSymbols:
    """Received symbol streams aligned with the transmitted ones."""

    s: np.ndarray  # (n_subcarriers, 2, n_symbols) complex
    a: np.ndarray  # same shape, transmitted reference
    gain_applied: np.ndarray | None = None  # (n_subcarriers, 2) complex

    def __post_init__(self):
        if self.s.shape != self.a.shape:
            raise ValueError("received and transmitted shapes differ")


@dataclass(frozen=True)
class PhaseTrace:
    """Per-subcarrier, per-polarization phase-noise sequences (rad)."""

    phi: np.ndarray  # (n_subcarriers, 2, n_symbols)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.isfinite(self.phi)):
            raise ValueError("phase trace contains non-finite values")


def cd_compensate(w: Waveform, link: LinkSpec) -> Waveform:
    """Frequency-domain all-pass inverse of the accumulated dispersion."""
    length = link.total_length_m
    if length == 0:
        return w
    om = 2 * np.pi * sfft.fftfreq(w.n_samples, d=1 / w.sample_rate)
    h = np.exp(-1j * (link.fiber.beta2_s2_m / 2) * om**2 * length)
    return Waveform(samples=sfft.ifft(sfft.fft(w.samples, axis=-1) * h, axis=-1),
                    sample_rate=w.sample_rate,
                    center_freq_offset=w.center_freq_offset,
                    launch_power_per_subcarrier=w.launch_power_per_subcarrier)


def demux(w: Waveform, plan: ScmPlan, subcarrier: int,
          channel: int | None = None) -> np.ndarray:
    """Extract one subcarrier to symbol rate: shift to baseband, matched
    RRC filter, decimate at the shared frame clock.  Returns (2, n_symbols).
    """
    if not (0 <= subcarrier < plan.n_subcarriers):
        raise ValueError("subcarrier index out of range")
    ch = plan.coi_index if channel is None else channel
    f = plan.center_freq(ch, subcarrier)
    sub_rate = plan.subcarrier_baud * plan.samples_per_symbol
    base = shift_and_resample(w, -f, sub_rate, alias_tol=1.0)
    taps = rrc_taps(plan.rolloff, plan.tap_span_symbols, plan.samples_per_symbol)
    return matched_filter(base.samples, taps, plan.samples_per_symbol)


def normalize_gain(s: np.ndarray, a: np.ndarray) -> RxSymbols:
    """Least-squares complex scalar per (subcarrier, polarization):
    g = argmin sum |g*s - a|^2 removes bulk gain and bulk phase."""
    if s.shape != a.shape:
        raise ValueError("shape mismatch")
    energy = np.sum(np.abs(s) ** 2, axis=-1)
    if np.any(energy == 0):
        raise ValueError("zero-energy stream cannot be gain-normalized")
    g = np.sum(np.conj(s) * a, axis=-1) / energy
    return RxSymbols(s=s * g[..., None], a=a, gain_applied=g)


def extract_nlpn(rx: RxSymbols) -> PhaseTrace:
    """Phase-noise estimate Im[(s - a) / a] per symbol; entries with a = 0
    are flagged as zero contribution."""
    if not np.any(rx.a):
        raise ValueError("all-zero transmitted reference")
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.imag((rx.s - rx.a) / rx.a)
    skipped = ~np.isfinite(phi)
    phi = np.where(skipped, 0.0, phi)
    return PhaseTrace(phi=phi, meta={"n_skipped": int(skipped.sum())})


def _block_bootstrap_corr_stderr(phi: np.ndarray, block: int, n_boot: int,
                                 seed: int) -> np.ndarray:
    """Standard error of pol-averaged correlation entries via block bootstrap."""
    n_sc, n_pol, n = phi.shape
    n_blocks = n // block
    trimmed = phi[:, :, :n_blocks * block].reshape(n_sc, n_pol, n_blocks, block)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    corrs = np.empty((n_boot, n_sc, n_sc))
    for b in range(n_boot):
        pick = rng.integers(0, n_blocks, size=n_blocks)
        sample = trimmed[:, :, pick, :].reshape(n_sc, n_pol, -1)
        acc = np.zeros((n_sc, n_sc))
        for pol in range(n_pol):
            c = np.cov(sample[:, pol, :])
            d = np.sqrt(np.diag(c))
            acc += c / np.outer(d, d)
        corrs[b] = acc / n_pol
    return corrs.std(axis=0, ddof=1)


def empirical_cov(trace: PhaseTrace, n_boot: int = 200,
                  bootstrap_seed: int = 7) -> CovarianceMatrix:
    """Sample covariance across the symbol index, per polarization, averaged
    over polarizations; correlation standard errors by block bootstrap."""
    phi = trace.phi
    n_sc, n_pol, n = phi.shape
    if n < MIN_COV_SYMBOLS:
        raise ValueError(f"need >= {MIN_COV_SYMBOLS} symbols, got {n}")
    cov = np.zeros((n_sc, n_sc))
    mean = np.zeros(n_sc)
    for pol in range(n_pol):
        c = np.cov(phi[:, pol, :]) if n_sc > 1 else np.array(
            [[np.var(phi[0, pol], ddof=1)]])
        cov += np.atleast_2d(c)
        mean += phi[:, pol, :].mean(axis=-1)
    cov /= n_pol
    mean /= n_pol
    stderr = _block_bootstrap_corr_stderr(phi, BOOTSTRAP_BLOCK, n_boot,
                                          bootstrap_seed)
    return CovarianceMatrix(cov=cov, mean=mean, stderr=stderr,
                            meta={"kind": "empirical", "n_symbols": n,
                                  **trace.meta})


@dataclass(frozen=True)
class QReport:
    """BER with its Gaussian-equivalent Q-factor; EVM as auxiliary."""

    ber: float
    q_db: float
    evm_db: float
    n_bits: int
    n_errors: int
    q_source: str  # "ber", or "evm" when no errors were counted


def q_from_ber(ber: float) -> float:
    """Q_dB = 20 log10(sqrt(2) erfc^-1(2 BER)); -inf at the coin-flip limit."""
    if ber >= 0.5:
        return float("-inf")
    q_lin = np.sqrt(2) * erfcinv(2 * ber)
    return float(20 * np.log10(q_lin))


def _ber_from_snr(snr_lin: float, order: int) -> float:
    m = order
    if snr_lin <= 0:
        return 0.5
    arg = np.sqrt(3 * snr_lin / (m - 1) / 2)
    return float((4 / np.log2(m)) * (1 - 1 / np.sqrt(m)) * 0.5 * erfc(arg))


def ber_q(s: np.ndarray, a_indices: np.ndarray, c: Constellation) -> QReport:
    """Hard-decision BER by direct count against Gray labels, plus Q and EVM.

    With zero counted errors the Q is reported from the EVM-derived SNR
    instead (lower-bound flag in ``q_source``).
    """
    decided = nearest_point_indices(c, s)
    tx_bits = indices_to_bits(c, a_indices)
    rx_bits = indices_to_bits(c, decided)
    n_errors = int(np.sum(tx_bits != rx_bits))
    n_bits = tx_bits.size
    ber = n_errors / n_bits

    a = c.points[a_indices]
    evm2 = float(np.mean(np.abs(s - a) ** 2) / np.mean(np.abs(a) ** 2))
    evm_db = float(10 * np.log10(evm2)) if evm2 > 0 else float("-inf")

    if n_errors == 0:
        snr = 1 / evm2 if evm2 > 0 else np.inf
        ber_evm = _ber_from_snr(snr, len(c.points))
        if ber_evm > 0:
            q_db = q_from_ber(ber_evm)
        else:
            # erfc underflow: erfcinv(c*erfc(x)) ~ x for large x
            arg = np.sqrt(3 * snr / (len(c.points) - 1) / 2)
            q_db = float(20 * np.log10(np.sqrt(2) * arg))
        return QReport(ber=0.0, q_db=q_db, evm_db=evm_db,
                       n_bits=n_bits, n_errors=0, q_source="evm")
    return QReport(ber=ber, q_db=q_from_ber(ber), evm_db=evm_db,
                   n_bits=n_bits, n_errors=n_errors, q_source="ber")
