"""Decision-directed RLS phase estimation per subcarrier, with optional
joint cross-subcarrier averaging of the phase estimates (one-tap
exponentially-weighted least squares; only the phase is shared).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .constellation import Constellation
from .rxdsp import QReport, RxSymbols, ber_q

WARMUP_SYMBOLS = 500

MODE_NONE = "none"
MODE_INDIVIDUAL = "individual"
MODE_JOINT = "joint"


@dataclass
class RlsPhaseState:
    """One-tap exponentially-weighted LS accumulator."""

    lam: float
    num: complex = 0.0 + 0.0j
    den: float = 0.0

    @property
    def w(self) -> complex:
        return self.num / self.den if self.den > 0 else 0.0 + 0.0j

    @property
    def phi_hat(self) -> float:
        return -np.angle(self.w) if self.den > 0 else 0.0


def rls_phase_step(state: RlsPhaseState, s_n: complex,
                   ref_n: complex) -> tuple[float, RlsPhaseState]:
    """One RLS update: returns the phase estimate from the updated state.

    num <- lam*num + ref*conj(s); den <- lam*den + |s|^2; w = num/den;
    phi_hat = -arg(w).  Cold start (den = 0) reports zero phase.
    """
    if ref_n == 0:
        raise ValueError("reference symbol must be nonzero")
    new = RlsPhaseState(
        lam=state.lam,
        num=state.lam * state.num + ref_n * np.conj(s_n),
        den=state.lam * state.den + abs(s_n) ** 2,
    )
    return new.phi_hat, new


def joint_combine(phi_hats: np.ndarray, previous: float = 0.0) -> float:
    """Circular mean of the per-subcarrier phase estimates; falls back to
    ``previous`` when the resultant vector vanishes."""
    phi_hats = np.asarray(phi_hats, dtype=np.float64)
    if phi_hats.size == 0:
        raise ValueError("need at least one phase estimate")
    r = np.sum(np.exp(1j * phi_hats))
    if abs(r) < 1e-12 * phi_hats.size:
        return previous
    return float(np.angle(r))


@njit(cache=True)
def _equalize_pol(s, ref_idx, points, lam, joint, warmup, y_out, phi_out):
    n_sc, n = s.shape
    num = np.zeros(n_sc, dtype=np.complex128)
    den = np.zeros(n_sc)
    prev_joint = 0.0
    for t in range(n):
        # phase/amplitude estimates from symbols < t (one-symbol delay)
        res = 0.0 + 0.0j
        for j in range(n_sc):
            if den[j] > 0:
                w = num[j] / den[j]
                phi = -np.angle(w)
                amp = abs(w)
            else:
                phi = 0.0
                amp = 1.0
            phi_out[j, t] = phi
            y_out[j, t] = s[j, t] * amp * np.exp(-1j * phi)  # provisional
            res += np.exp(1j * phi)
        if joint:
            if abs(res) < 1e-12 * n_sc:
                phi_c = prev_joint
            else:
                phi_c = np.angle(res)
            prev_joint = phi_c
            for j in range(n_sc):
                if den[j] > 0:
                    amp = abs(num[j] / den[j])
                else:
                    amp = 1.0
                y_out[j, t] = s[j, t] * amp * np.exp(-1j * phi_c)
                phi_out[j, t] = phi_c
        for j in range(n_sc):
            if t < warmup:
                ref = points[ref_idx[j, t]]
            else:
                best = 0
                bd = 1e300
                for p in range(points.shape[0]):
                    dre = y_out[j, t].real - points[p].real
                    dim = y_out[j, t].imag - points[p].imag
                    d = dre * dre + dim * dim
                    if d < bd:
                        bd = d
                        best = p
                ref = points[best]
            num[j] = lam * num[j] + ref * np.conj(s[j, t])
            den[j] = lam * den[j] + abs(s[j, t]) ** 2


def equalize_frame(rx: RxSymbols, c: Constellation, lam: float,
                   mode: str) -> tuple[RxSymbols, np.ndarray]:
    """Run the per-subcarrier decision-directed RLS loop over a frame.

    mode 'individual' corrects each subcarrier with its own estimate;
    'joint' corrects every subcarrier with the circular mean of all
    estimates and re-decides from the jointly corrected stream; 'none'
    passes the input through.  Polarizations are processed independently.
    Returns the corrected symbols and the applied phase per symbol.
    """
    if mode not in (MODE_NONE, MODE_INDIVIDUAL, MODE_JOINT):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == MODE_NONE:
        return rx, np.zeros_like(rx.s, dtype=np.float64)
    from .constellation import nearest_point_indices
    ref_idx = nearest_point_indices(c, rx.a)
    n_sc, n_pol, n = rx.s.shape
    y = np.empty_like(rx.s)
    phi = np.empty(rx.s.shape, dtype=np.float64)
    for pol in range(n_pol):
        _equalize_pol(rx.s[:, pol, :], ref_idx[:, pol, :], c.points, lam,
                      mode == MODE_JOINT, WARMUP_SYMBOLS,
                      y[:, pol, :], phi[:, pol, :])
    return RxSymbols(s=y, a=rx.a, gain_applied=rx.gain_applied), phi


def frame_q(rx: RxSymbols, c: Constellation,
            skip: int = WARMUP_SYMBOLS) -> QReport:
    """Q-factor over all subcarriers/polarizations, excluding warmup."""
    from .constellation import nearest_point_indices
    a_idx = nearest_point_indices(c, rx.a[..., skip:])
    return ber_q(rx.s[..., skip:], a_idx, c)


@dataclass(frozen=True)
class EqReport:
    """Q-vs-power record for one equalizer configuration."""

    mode: str
    lam: float
    power_dbm: tuple = ()
    q_db: tuple = ()

    @property
    def peak_q_db(self) -> float:
        return max(self.q_db)

    @property
    def peak_power_dbm(self) -> float:
        return self.power_dbm[int(np.argmax(self.q_db))]


def sweep_forgetting(rx: RxSymbols, c: Constellation, lambda_grid,
                     mode: str) -> tuple[float, list[tuple[float, QReport]]]:
    """Evaluate Q per forgetting factor; ties break toward larger lambda."""
    if len(lambda_grid) == 0:
        raise ValueError("lambda grid is empty")
    curve = []
    best_lam, best_q = None, -np.inf
    for lam in sorted(lambda_grid):
        out, _ = equalize_frame(rx, c, lam, mode)
        rep = frame_q(out, c)
        curve.append((lam, rep))
        if rep.q_db >= best_q:
            best_q, best_lam = rep.q_db, lam
    return best_lam, curve
