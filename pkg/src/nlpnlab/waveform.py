"""Physical waveform construction and manipulation: root-raised-cosine
pulse shaping, per-subcarrier modulation, WDM/SCM aggregation onto the
frequency grid, and exact spectral shifting/resampling.

Frames are cyclic: all filtering and frequency translation is circular,
which removes boundary artifacts from propagation and matched filtering.
Statistics downstream still exclude the first/last symbols as a guard.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.fft as sfft

EDGE_GUARD_SYMBOLS = 512  # excluded from all statistics downstream


@dataclass(frozen=True)
class ScmPlan:
    """Frequency-grid layout of a multi-subcarrier WDM transmission."""

    n_channels: int
    channel_spacing: float
    n_subcarriers: int
    subcarrier_baud: float
    subcarrier_spacing: float
    rolloff: float = 0.1
    samples_per_symbol: int = 2
    tap_span_symbols: int = 64
    coi_index: int = 0

    def __post_init__(self):
        if self.n_subcarriers * self.subcarrier_spacing != self.channel_spacing:
            raise ValueError("n_subcarriers * subcarrier_spacing must equal channel_spacing")
        if self.subcarrier_baud * (1 + self.rolloff) > self.subcarrier_spacing:
            raise ValueError("subcarrier spectra overlap: baud*(1+rolloff) > spacing")
        if not (0 <= self.coi_index < self.n_channels):
            raise ValueError("coi_index out of range")

    @classmethod
    def grid_50ghz(cls, n_channels: int, n_subcarriers: int, **kw) -> "ScmPlan":
        """32-GBd channel split into N_s subcarriers on the 50-GHz grid."""
        return cls(
            n_channels=n_channels,
            channel_spacing=50e9,
            n_subcarriers=n_subcarriers,
            subcarrier_baud=32e9 / n_subcarriers,
            subcarrier_spacing=50e9 / n_subcarriers,
            coi_index=(n_channels - 1) // 2,
            **kw,
        )

    def channel_offset(self, channel: int) -> float:
        return (channel - (self.n_channels - 1) / 2) * self.channel_spacing

    def subcarrier_offset(self, j: int) -> float:
        """Frequency of subcarrier j relative to its channel center."""
        return (j - (self.n_subcarriers - 1) / 2) * self.subcarrier_spacing

    def center_freq(self, channel: int, j: int) -> float:
        return self.channel_offset(channel) + self.subcarrier_offset(j)

    def occupied_bandwidth(self) -> float:
        edge = abs(self.center_freq(0, 0)) + self.subcarrier_baud * (1 + self.rolloff) / 2
        return 2 * edge

    def simulation_rate(self, margin: float = 1.25) -> float:
        """Global sample rate: integer samples/symbol covering the comb with margin."""
        target = margin * self.n_channels * self.channel_spacing
        r = int(np.ceil(target / self.subcarrier_baud))
        if r % 2:
            r += 1
        return r * self.subcarrier_baud


@dataclass(frozen=True)
class Waveform:
    """Dual-polarization complex sample grid."""

    samples: np.ndarray  # shape (2, n)
    sample_rate: float
    center_freq_offset: float = 0.0
    launch_power_per_subcarrier: float = 0.0

    def __post_init__(self):
        if self.samples.ndim != 2 or self.samples.shape[0] != 2:
            raise ValueError("samples must have shape (2, n)")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    def mean_power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2) * 2)  # total over both pols


def rrc_taps(rolloff: float, span_symbols: int, sps: int) -> np.ndarray:
    """Unit-energy root-raised-cosine taps.

    The matched-filter cascade (RRC * RRC) sampled at symbol instants is
    ISI-free up to truncation error.
    """
    if not (0 <= rolloff <= 1):
        raise ValueError(f"rolloff {rolloff} outside [0, 1]")
    if span_symbols % 2 or span_symbols < 2:
        raise ValueError("span_symbols must be even and >= 2")
    if sps < 2:
        raise ValueError("sps must be >= 2")
    n = span_symbols * sps
    t = (np.arange(n + 1) - n / 2) / sps  # in symbol periods
    h = np.empty_like(t)
    if rolloff == 0:
        h = np.sinc(t)
    else:
        sing = np.isclose(np.abs(t), 1 / (4 * rolloff))
        zero = np.isclose(t, 0.0)
        ok = ~(sing | zero)
        tt = t[ok]
        h[ok] = (np.sin(np.pi * tt * (1 - rolloff))
                 + 4 * rolloff * tt * np.cos(np.pi * tt * (1 + rolloff))) / (
                     np.pi * tt * (1 - (4 * rolloff * tt) ** 2))
        h[zero] = 1 + rolloff * (4 / np.pi - 1)
        h[sing] = (rolloff / np.sqrt(2)) * (
            (1 + 2 / np.pi) * np.sin(np.pi / (4 * rolloff))
            + (1 - 2 / np.pi) * np.cos(np.pi / (4 * rolloff)))
    return h / np.sqrt(np.sum(h**2))


def _circular_kernel(taps: np.ndarray, n: int) -> np.ndarray:
    """Taps centered on index 0 of a length-n circular frame."""
    if len(taps) > n:
        raise ValueError("frame shorter than filter")
    k = np.zeros(n)
    half = len(taps) // 2
    idx = (np.arange(len(taps)) - half) % n
    k[idx] += taps
    return k


def modulate(symbols: np.ndarray, taps: np.ndarray, sps: int,
             power: float = 1.0) -> np.ndarray:
    """Upsample and pulse-shape one symbol stream (circular convolution).

    ``symbols`` may have leading axes (e.g. polarization); filtering acts on
    the last axis.  Output mean power equals ``power`` for unit-power symbols.
    """
    n = symbols.shape[-1] * sps
    up = np.zeros(symbols.shape[:-1] + (n,), dtype=np.complex128)
    up[..., ::sps] = symbols
    kern = sfft.fft(_circular_kernel(taps, n))
    out = sfft.ifft(sfft.fft(up, axis=-1) * kern, axis=-1)
    return out * np.sqrt(power * sps)


def matched_filter(samples: np.ndarray, taps: np.ndarray, sps: int) -> np.ndarray:
    """Matched RRC filter + symbol-rate decimation (phase 0) of a cyclic frame."""
    n = samples.shape[-1]
    kern = np.conj(sfft.fft(_circular_kernel(taps, n)))
    filtered = sfft.ifft(sfft.fft(samples, axis=-1) * kern, axis=-1)
    return filtered[..., ::sps] / np.sqrt(sps)


def _fft_resample(x: np.ndarray, n_new: int) -> np.ndarray:
    """Band-limited rate change of a cyclic frame by spectrum padding/truncation."""
    n = x.shape[-1]
    if n_new == n:
        return x.copy()
    X = sfft.fft(x, axis=-1)
    Y = np.zeros(x.shape[:-1] + (n_new,), dtype=np.complex128)
    m = min(n, n_new)
    h = m // 2
    Y[..., :h] = X[..., :h]
    Y[..., -h:] = X[..., -h:]
    if m % 2:
        Y[..., h] = X[..., h]
    return sfft.ifft(Y, axis=-1) * (n_new / n)


def shift_and_resample(w: Waveform, df: float, new_rate: float,
                       alias_tol: float = 1e-9) -> Waveform:
    """Exact spectral translation by df followed by band-limited rate change.

    Refuses when resampling would discard more than ``alias_tol`` of the
    frame energy (aliasing guard).
    """
    x = w.samples
    upsampling = new_rate > w.sample_rate

    def _shift(sig: np.ndarray, rate: float) -> np.ndarray:
        t = np.arange(sig.shape[-1]) / rate
        return sig * np.exp(2j * np.pi * df * t)

    # Shift at whichever rate keeps the signal inside the Nyquist band:
    # after upsampling, before downsampling.
    if df != 0.0 and not upsampling:
        x = _shift(x, w.sample_rate)
    if new_rate != w.sample_rate:
        n = x.shape[-1]
        n_new_f = n * new_rate / w.sample_rate
        n_new = int(round(n_new_f))
        if abs(n_new_f - n_new) > 1e-6:
            raise ValueError("rate change must map the frame to an integer sample count")
        if n_new < n:
            X = sfft.fft(x, axis=-1)
            h = n_new // 2
            kept = np.sum(np.abs(X[..., :h]) ** 2) + np.sum(np.abs(X[..., -h:]) ** 2)
            total = np.sum(np.abs(X) ** 2)
            if total > 0 and (total - kept) / total > alias_tol:
                raise ValueError("resampling would alias out-of-band energy")
        x = _fft_resample(x, n_new)
    if df != 0.0 and upsampling:
        x = _shift(x, new_rate)
    return Waveform(
        samples=x,
        sample_rate=new_rate,
        center_freq_offset=w.center_freq_offset + df,
        launch_power_per_subcarrier=w.launch_power_per_subcarrier,
    )


def assemble(plan: ScmPlan, subcarrier_waveforms: dict[tuple[int, int], Waveform],
             sample_rate: float | None = None) -> Waveform:
    """Shift every (channel, subcarrier) baseband waveform to its grid slot
    and sum.  All inputs must share one sample rate and length after
    resampling; aliasing margin of 5% is enforced.
    """
    if not subcarrier_waveforms:
        raise ValueError("no subcarrier waveforms given")
    fs = sample_rate if sample_rate is not None else plan.simulation_rate()
    if fs < 1.05 * plan.occupied_bandwidth():
        raise ValueError(
            f"sample rate {fs:g} violates the 5% Nyquist margin over "
            f"{plan.occupied_bandwidth():g} Hz occupied bandwidth")
    total = None
    power = 0.0
    for (ch, j), w in sorted(subcarrier_waveforms.items()):
        shifted = shift_and_resample(w, plan.center_freq(ch, j), fs)
        if total is None:
            total = shifted.samples
        else:
            if shifted.n_samples != total.shape[-1]:
                raise ValueError("subcarrier frames have inconsistent durations")
            total = total + shifted.samples
        power = w.launch_power_per_subcarrier
    return Waveform(samples=total, sample_rate=fs,
                    launch_power_per_subcarrier=power)
