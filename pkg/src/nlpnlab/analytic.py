"""Analytic model of inter-subcarrier nonlinear phase noise.

Computes the deterministic interaction tensor mapping interferer symbol
pairs to phase noise on a channel-of-interest subcarrier, the pair sums
over tensors, the resulting N_s x N_s covariance matrix, and a Monte-Carlo
oracle that realizes the phase-noise double sum directly on drawn symbol
sequences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .channel import MANAKOV, LinkSpec
from .constellation import Constellation, kurtosis
from .waveform import ScmPlan, rrc_taps, _circular_kernel

DEFAULT_Z_NODES = 64
DEFAULT_SPS = 16
BOUNDARY_DECAY = 1e-3


@dataclass(frozen=True)
class InteractionTensor:
    """Interaction coefficients X[k, m] for one (COI subcarrier, interferer)
    pair, on the truncated index window k, m in [-K, K].

    Hermitian (x[m, k] = conj(x[k, m])), which makes the resulting phase
    noise real.  Units: rad/W for unit-power symbols scaled by sqrt(P).
    """

    x: np.ndarray
    K: int
    coi_subcarrier: int
    interferer: tuple[int, int]
    omega: float

    def __post_init__(self):
        d = 2 * self.K + 1
        if self.x.shape != (d, d):
            raise ValueError("tensor shape inconsistent with K")

    def hermitian_error(self) -> float:
        scale = np.max(np.abs(self.x)) or 1.0
        return float(np.max(np.abs(self.x - self.x.conj().T)) / scale)

    def boundary_decay_ratio(self) -> float:
        """max |x| on the outermost index ring over max |x| overall."""
        peak = np.max(np.abs(self.x))
        if peak == 0:
            return 0.0
        ring = max(np.max(np.abs(self.x[0])), np.max(np.abs(self.x[-1])),
                   np.max(np.abs(self.x[:, 0])), np.max(np.abs(self.x[:, -1])))
        return float(ring / peak)

    def trace(self) -> complex:
        return complex(np.trace(self.x))


@dataclass(frozen=True)
class CovarianceMatrix:
    """N_s x N_s real symmetric NLPN covariance (rad^2) with the mean phase
    vector and provenance metadata.  ``stderr`` holds bootstrap standard
    errors of the correlation entries when the matrix is empirical."""

    cov: np.ndarray
    mean: np.ndarray
    meta: dict = field(default_factory=dict)
    stderr: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.cov, dtype=np.float64)
        object.__setattr__(self, "cov", 0.5 * (c + c.T))

    @property
    def n_subcarriers(self) -> int:
        return self.cov.shape[0]

    def correlation(self) -> np.ndarray:
        d = np.sqrt(np.diag(self.cov))
        d[d == 0] = 1.0
        corr = self.cov / np.outer(d, d)
        np.fill_diagonal(corr, 1.0)
        return corr

    def min_eigenvalue_ratio(self) -> float:
        ev = np.linalg.eigvalsh(self.cov)
        top = ev[-1] if ev[-1] > 0 else 1.0
        return float(ev[0] / top)

    def to_csv(self, path, what: str = "cov") -> None:
        mat = self.cov if what == "cov" else self.correlation()
        with open(path, "w") as f:
            for key, val in sorted(self.meta.items()):
                f.write(f"# {key}: {val}\n")
            f.write(f"# matrix: {what}\n")
            for row in mat:
                f.write(",".join(f"{v:.10e}" for v in row) + "\n")


def dispersed_pulse(pulse: np.ndarray, dt: float, z_m: float,
                    beta2_s2_m: float, delay_s: float = 0.0) -> np.ndarray:
    """All-pass chromatic dispersion of a sampled pulse over distance z,
    with an optional group delay.  Unitary: sample energy is preserved."""
    if z_m < 0:
        raise ValueError("z must be >= 0")
    om = 2 * np.pi * sfft.fftfreq(len(pulse), d=dt)
    phase = (beta2_s2_m / 2) * om**2 * z_m - om * delay_s
    return sfft.ifft(sfft.fft(pulse) * np.exp(1j * phase))


def interferer_omega(plan: ScmPlan, coi_subcarrier: int,
                     interferer: tuple[int, int]) -> float:
    """Angular frequency offset between interferer and COI subcarrier."""
    ch, j = interferer
    return 2 * np.pi * (plan.center_freq(ch, j)
                        - plan.center_freq(plan.coi_index, coi_subcarrier))


def default_truncation(plan: ScmPlan, link: LinkSpec, omega_max: float) -> int:
    """Index radius covering total walk-off plus pulse memory."""
    t_sym = 1.0 / plan.subcarrier_baud
    walkoff = abs(link.fiber.beta2_s2_m * omega_max) * link.total_length_m / t_sym
    return int(np.ceil(walkoff)) + 2 * plan.tap_span_symbols


def _warped_z_nodes(alpha_np_m: float, span_m: float, n: int):
    """Gauss-Legendre nodes/weights absorbing the e^{-alpha z} loss factor:
    sum_i w_i f(z_i) ~ integral_0^L f(z) e^{-alpha z} dz."""
    s, ws = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (s + 1)  # [0, 1]
    ws = 0.5 * ws
    if alpha_np_m == 0:
        return s * span_m, ws * span_m
    a = 1 - np.exp(-alpha_np_m * span_m)
    z = -np.log(1 - s * a) / alpha_np_m
    return z, ws * a / alpha_np_m


class _TensorBuilder:
    """Shared machinery to accumulate interaction tensors span by span for
    every COI subcarrier against one interferer."""

    def __init__(self, plan: ScmPlan, link: LinkSpec, interferer: tuple[int, int],
                 coi_subcarriers, K: int | None = None,
                 z_nodes: int = DEFAULT_Z_NODES, sps: int = DEFAULT_SPS):
        self.plan = plan
        self.link = link
        self.interferer = interferer
        self.subcarriers = [j for j in coi_subcarriers
                            if (plan.coi_index, j) != interferer]
        if not self.subcarriers:
            raise ValueError("no COI subcarriers distinct from the interferer")
        self.omegas = {j: interferer_omega(plan, j, interferer)
                       for j in self.subcarriers}
        if any(om == 0 for om in self.omegas.values()):
            raise ValueError("interferer coincides with a COI subcarrier (omega = 0)")
        omega_max = max(abs(om) for om in self.omegas.values())
        self.K = K if K is not None else default_truncation(plan, link, omega_max)
        self.required_K = self._required_k(omega_max)
        if self.K < self.required_K:
            raise ValueError(
                f"truncation K={self.K} too small; required K >= {self.required_K}")

        self.t_sym = 1.0 / plan.subcarrier_baud
        self.sps = sps
        self.dt = self.t_sym / sps
        fiber = link.fiber
        # pulse broadening at full link length, in symbols
        om_half = np.pi * plan.subcarrier_baud * (1 + plan.rolloff)
        spread = abs(fiber.beta2_s2_m) * link.total_length_m * om_half / self.t_sym
        self.W = plan.tap_span_symbols + int(np.ceil(spread)) + 2
        n_min = 2 * (self.W + plan.tap_span_symbols // 2
                     + int(np.ceil(spread)) + 4) * sps
        self.n_t = sfft.next_fast_len(n_min)

        taps = rrc_taps(plan.rolloff, plan.tap_span_symbols, sps) * np.sqrt(sps)
        self.pulse_spec = sfft.fft(_circular_kernel(taps, self.n_t))
        self.om_grid = 2 * np.pi * sfft.fftfreq(self.n_t, d=self.dt)
        self.z_nodes = z_nodes
        self.prefactor = 2 * MANAKOV * fiber.gamma_w_m / self.t_sym

    def _required_k(self, omega_max: float) -> int:
        fiber = self.link.fiber
        walkoff = abs(fiber.beta2_s2_m * omega_max) * self.link.total_length_m
        return int(np.ceil(walkoff / (1.0 / self.plan.subcarrier_baud))) \
            + self.plan.tap_span_symbols + 2

    def zero(self) -> dict[int, np.ndarray]:
        d = 2 * self.K + 1
        return {j: np.zeros((d, d), dtype=np.complex128) for j in self.subcarriers}

    def add_span(self, acc: dict[int, np.ndarray], span_index: int) -> None:
        """Accumulate the contribution of one span (0-based) into ``acc``."""
        fiber = self.link.fiber
        b2 = fiber.beta2_s2_m
        z_loc, wz = _warped_z_nodes(fiber.alpha_np_m, fiber.span_m, self.z_nodes)
        sps, n_t, K, W = self.sps, self.n_t, self.K, self.W
        idx_t = np.arange(n_t)
        for z, w in zip(z_loc, wz):
            z_cum = span_index * fiber.span_m + z
            disp = np.exp(1j * (b2 / 2) * self.om_grid**2 * z_cum)
            pj = sfft.ifft(self.pulse_spec * disp)
            q = np.abs(pj) ** 2
            weight = self.prefactor * w * self.dt
            for j in self.subcarriers:
                d_s = b2 * self.omegas[j] * z_cum  # walk-off delay, seconds
                pd = sfft.ifft(self.pulse_spec * disp
                               * np.exp(-1j * self.om_grid * d_s))
                k0 = int(round(-d_s / self.t_sym))
                ks = np.arange(max(-K, k0 - W), min(K, k0 + W) + 1)
                shifts = ks * sps
                gather = (idx_t[None, :] - shifts[:, None]) % n_t
                rows = q[None, :] * np.conj(pd[gather])
                pdr = np.roll(pd[::-1], 1)  # pd[(-t) mod n]
                corr = sfft.ifft(sfft.fft(rows, axis=1) * sfft.fft(pdr), axis=1)
                block = corr[:, shifts % n_t]
                sl = slice(ks[0] + K, ks[-1] + K + 1)
                acc[j][sl, sl] += weight * block

    def finish(self, acc: dict[int, np.ndarray]) -> dict[int, InteractionTensor]:
        out = {}
        for j, x in acc.items():
            t = InteractionTensor(x=x, K=self.K, coi_subcarrier=j,
                                  interferer=self.interferer, omega=self.omegas[j])
            ratio = t.boundary_decay_ratio()
            if ratio > BOUNDARY_DECAY:
                raise ValueError(
                    f"boundary decay {ratio:.2e} exceeds {BOUNDARY_DECAY}; "
                    f"required K >= {self.required_K}")
            out[j] = t
        return out


def interaction_coeffs(plan: ScmPlan, link: LinkSpec, coi_subcarrier: int,
                       interferer: tuple[int, int], K: int | None = None,
                       z_nodes: int = DEFAULT_Z_NODES,
                       sps: int = DEFAULT_SPS) -> InteractionTensor:
    """First-order-perturbation interaction coefficients for one
    (COI subcarrier, interferer) pair, integrated over the whole link."""
    omega = interferer_omega(plan, coi_subcarrier, interferer)
    if omega == 0:
        raise ValueError("interferer coincides with the COI subcarrier (self term excluded)")
    if link.fiber.gamma_w_km == 0:
        kk = K if K is not None else default_truncation(plan, link, abs(omega))
        d = 2 * kk + 1
        return InteractionTensor(
            x=np.zeros((d, d), dtype=np.complex128), K=kk,
            coi_subcarrier=coi_subcarrier, interferer=interferer, omega=omega)
    builder = _TensorBuilder(plan, link, interferer, [coi_subcarrier],
                             K=K, z_nodes=z_nodes, sps=sps)
    acc = builder.zero()
    for s in range(link.n_spans):
        builder.add_span(acc, s)
    return builder.finish(acc)[coi_subcarrier]


def s1_s2(xi: InteractionTensor, xj: InteractionTensor) -> tuple[complex, complex]:
    """Pair sums S1 = sum_{k,m} Xi[k,m] conj(Xj[k,m]) and
    S2 = sum_k Xi[k,k] conj(Xj[k,k])."""
    if xi.K != xj.K or xi.interferer != xj.interferer:
        raise ValueError("tensors must share truncation window and interferer")
    s1 = complex(np.sum(xi.x * np.conj(xj.x)))
    s2 = complex(np.sum(np.diag(xi.x) * np.conj(np.diag(xj.x))))
    return s1, s2


def default_interferer_set(plan: ScmPlan,
                           include_intra: bool = True) -> list[tuple[int, int]]:
    """All subcarriers of all non-COI channels, optionally plus the COI's
    own subcarriers (each excluded pairwise from its own covariance row)."""
    out = []
    for ch in range(plan.n_channels):
        if ch == plan.coi_index and not include_intra:
            continue
        for j in range(plan.n_subcarriers):
            out.append((ch, j))
    return out


def nlpn_covariance(plan: ScmPlan, link: LinkSpec, constellation: Constellation,
                    power_per_subcarrier: float,
                    interferer_set: list[tuple[int, int]] | None = None,
                    K: int | None = None, z_nodes: int = DEFAULT_Z_NODES,
                    sps: int = DEFAULT_SPS,
                    span_counts: list[int] | None = None):
    """Closed-form NLPN covariance over COI subcarriers (dual polarization).

    Per interferer and polarization stream, cov[i,j] accumulates
    P^2 * Re[S1 + (M-2) S2]; the two interfering polarizations contribute
    two independent copies (overall factor 2).  With ``span_counts`` given,
    returns {n_spans: CovarianceMatrix} sharing one tensor accumulation
    pass (partial sums over spans); otherwise a single CovarianceMatrix.
    """
    if interferer_set is None:
        interferer_set = default_interferer_set(plan)
    if not interferer_set:
        raise ValueError("interferer set is empty")
    single = span_counts is None
    counts = sorted(span_counts or [link.n_spans])
    if counts[-1] > link.n_spans or counts[0] < 1:
        raise ValueError("span_counts outside [1, link.n_spans]")

    n_s = plan.n_subcarriers
    m_kurt = kurtosis(constellation)
    p = power_per_subcarrier
    cov = {n: np.zeros((n_s, n_s)) for n in counts}
    mean = {n: np.zeros(n_s) for n in counts}

    for interferer in interferer_set:
        subs = [j for j in range(n_s) if (plan.coi_index, j) != interferer]
        builder = _TensorBuilder(plan, link, interferer, subs,
                                 K=K, z_nodes=z_nodes, sps=sps)
        acc = builder.zero()
        for s in range(counts[-1]):
            builder.add_span(acc, s)
            n = s + 1
            if n not in cov:
                continue
            stack = np.stack([acc[j].reshape(-1) for j in subs])
            diag = np.stack([np.diagonal(acc[j]) for j in subs])
            s1 = stack @ stack.conj().T
            s2 = diag @ diag.conj().T
            contrib = p**2 * np.real(s1 + (m_kurt - 2) * s2)
            ii = np.array(subs)
            cov[n][np.ix_(ii, ii)] += 2 * contrib
            mean[n][ii] += 2 * p * np.array(
                [np.real(np.trace(acc[j])) for j in subs])

    meta = {
        "kind": "analytic",
        "n_subcarriers": n_s,
        "kurtosis": round(m_kurt, 6),
        "power_per_subcarrier_w": power_per_subcarrier,
        "n_interferers": len(interferer_set),
        "z_nodes": z_nodes,
    }
    results = {n: CovarianceMatrix(cov=cov[n], mean=mean[n],
                                   meta={**meta, "n_spans": n})
               for n in counts}
    return results[counts[-1]] if single else results


def mc_oracle_cov(tensors: list[InteractionTensor], constellation: Constellation,
                  power: float, n_symbols: int, seed: int,
                  row_chunk: int = 16,
                  eig_tol: float = 1e-9) -> CovarianceMatrix:
    """Monte-Carlo realization of the phase-noise double sum.

    One shared i.i.d. interferer symbol stream (circular frame) drives all
    tensors; that sharing is the source of inter-subcarrier correlation.
    The Hermitian quadratic form is evaluated through its eigendecomposition
    X = sum_r lam_r u_r u_r^H, so phi_n = sum_r lam_r |(u_r (*) b)_n|^2 is
    exactly real; modes below ``eig_tol`` of the spectral radius are dropped
    (relative truncation error of the same order).  Returns the empirical
    covariance/mean over the symbol index (single-polarization scalar model).
    """
    if not tensors:
        raise ValueError("need at least one tensor")
    if any(2 * t.K + 1 > n_symbols for t in tensors):
        raise ValueError("frame shorter than the tensor index window")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    idx = rng.choice(len(constellation.points), size=n_symbols,
                     p=constellation.probs)
    b = constellation.points[idx] * np.sqrt(power)
    b_spec = sfft.fft(b)

    phis = np.empty((len(tensors), n_symbols))
    dropped = 0.0
    for ti, tensor in enumerate(tensors):
        herm = 0.5 * (tensor.x + tensor.x.conj().T)
        vals, vecs = np.linalg.eigh(herm)
        radius = np.max(np.abs(vals)) if vals.size else 0.0
        keep = np.abs(vals) > eig_tol * radius
        if radius > 0:
            dropped = max(dropped, float(np.sum(np.abs(vals[~keep])) / radius))
        vals, vecs = vals[keep], vecs[:, keep]
        ks = np.arange(-tensor.K, tensor.K + 1) % n_symbols
        phi = np.zeros(n_symbols)
        for start in range(0, vals.size, row_chunk):
            u = vecs[:, start:start + row_chunk]
            kern = np.zeros((u.shape[1], n_symbols), dtype=np.complex128)
            kern[:, ks] = np.conj(u.T)
            c = sfft.ifft(sfft.fft(kern, axis=1) * b_spec[None, :], axis=1)
            phi += vals[start:start + row_chunk] @ (np.abs(c) ** 2)
        phis[ti] = phi

    cov = np.cov(phis, bias=False) if len(tensors) > 1 else np.array(
        [[np.var(phis[0], ddof=1)]])
    return CovarianceMatrix(
        cov=np.atleast_2d(cov),
        mean=phis.mean(axis=1),
        meta={"kind": "mc_oracle", "n_symbols": n_symbols, "seed": seed,
              "power_w": power, "dropped_eig_mass": dropped},
    )
