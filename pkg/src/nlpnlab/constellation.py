"""QAM constellations, Maxwell-Boltzmann probabilistic shaping, and the
statistical moments (power, entropy, normalized kurtosis) used by the
analytic phase-noise model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_PROB_TOL = 1e-12
_POWER_TOL = 1e-12


@dataclass(frozen=True)
class Constellation:
    """Complex constellation with per-point probabilities.

    Points are normalized to unit average power under ``probs``; launch
    power is applied downstream as a separate scalar.  ``bits`` carries the
    Gray bit label of each point (empty for non-QAM constructions).
    """

    points: np.ndarray
    probs: np.ndarray
    label: str = ""
    bits: np.ndarray = field(default_factory=lambda: np.empty((0, 0), dtype=np.uint8))

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.complex128)
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "probs", probs)
        if points.ndim != 1 or probs.shape != points.shape:
            raise ValueError("points and probs must be 1-D arrays of equal length")
        if np.any(probs < 0):
            raise ValueError("probabilities must be non-negative")
        if abs(probs.sum() - 1.0) > _PROB_TOL:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, expected 1")
        power = float(np.sum(probs * np.abs(points) ** 2))
        if abs(power - 1.0) > 1e-9:
            raise ValueError(f"average power {power!r}, expected 1 (unit-power convention)")
        if len(np.unique(points)) != len(points):
            raise ValueError("constellation points must be distinct")

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(len(self.points)))


@dataclass(frozen=True)
class SymbolFrame:
    """Symbol sequences indexed [subcarrier][polarization][time].

    Every symbol is an element of the generating constellation's point set
    scaled by ``amplitude``.  ``point_indices`` records which point was
    drawn (same shape as ``symbols``), for bit-error counting.
    """

    symbols: np.ndarray
    baud: float
    seed: int
    amplitude: float = 1.0
    point_indices: np.ndarray | None = None

    def __post_init__(self):
        if self.symbols.ndim != 3 or self.symbols.shape[1] != 2:
            raise ValueError("symbols must have shape (n_subcarriers, 2, n_symbols)")

    @property
    def n_subcarriers(self) -> int:
        return self.symbols.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.symbols.shape[2]


def _gray_code(n_bits: int) -> np.ndarray:
    codes = np.arange(2**n_bits)
    return codes ^ (codes >> 1)


def _pam_levels(m: int) -> np.ndarray:
    return np.arange(-(m - 1), m, 2, dtype=np.float64)


def build_qam(order: int) -> Constellation:
    """Square QAM with Gray labeling per I/Q rail and unit average power."""
    if order not in (4, 16, 64, 256):
        raise ValueError(f"unsupported QAM order {order} (need square QAM in 4..256)")
    m = int(round(np.sqrt(order)))
    n_rail_bits = int(np.log2(m))
    levels = _pam_levels(m)
    # Reflected Gray code per rail: gray[i] is the label of the i-th level.
    gray = _gray_code(n_rail_bits)
    i_idx, q_idx = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    i_idx, q_idx = i_idx.ravel(), q_idx.ravel()
    points = levels[i_idx] + 1j * levels[q_idx]
    scale = np.sqrt(np.mean(np.abs(points) ** 2))
    labels = (gray[i_idx] << n_rail_bits) | gray[q_idx]
    bits = ((labels[:, None] >> np.arange(2 * n_rail_bits - 1, -1, -1)) & 1).astype(np.uint8)
    return Constellation(
        points=points / scale,
        probs=np.full(order, 1.0 / order),
        label=f"{order}QAM",
        bits=bits,
    )


def kurtosis(c: Constellation) -> float:
    """Normalized kurtosis E|b|^4 / (E|b|^2)^2 under the point probabilities."""
    p2 = np.sum(c.probs * np.abs(c.points) ** 2)
    p4 = np.sum(c.probs * np.abs(c.points) ** 4)
    return float(p4 / p2**2)


def entropy(c: Constellation) -> float:
    """Shannon entropy of the point probabilities in bits/symbol."""
    p = c.probs[c.probs > 0]
    return float(-np.sum(p * np.log2(p)))


def _mb_probs(points: np.ndarray, lam: float) -> np.ndarray:
    w = np.exp(-lam * np.abs(points) ** 2)
    return w / w.sum()


def _mb_entropy(points: np.ndarray, lam: float) -> float:
    p = _mb_probs(points, lam)
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def shape_mb(base: Constellation, target_entropy_bits: float,
             max_iter: int = 200) -> Constellation:
    """Maxwell-Boltzmann shaping of a uniform constellation to a target entropy.

    Solves probs ~ exp(-lambda*|x|^2) by bisection on lambda, then rescales
    the points to restore unit average power.
    """
    n = len(base.points)
    max_h = np.log2(n)
    if not (0 < target_entropy_bits <= max_h):
        raise ValueError(
            f"target entropy {target_entropy_bits} outside (0, {max_h}] bits")
    if not np.allclose(base.probs, 1.0 / n, atol=1e-12):
        raise ValueError("base constellation must have uniform probabilities")
    pts = base.points
    if abs(target_entropy_bits - max_h) < 1e-12:
        return Constellation(pts, base.probs, label=base.label + "-MB", bits=base.bits)

    # Grow the bracket until entropy drops below target, then bisect.
    lo, hi = 0.0, 1.0
    grow = 0
    while _mb_entropy(pts, hi) > target_entropy_bits:
        hi *= 2.0
        grow += 1
        if grow > 100:
            raise RuntimeError("failed to bracket shaping parameter")
    lam = hi
    for _ in range(max_iter):
        lam = 0.5 * (lo + hi)
        h = _mb_entropy(pts, lam)
        if abs(h - target_entropy_bits) < 1e-9:
            break
        if h > target_entropy_bits:
            lo = lam
        else:
            hi = lam
    else:
        if abs(_mb_entropy(pts, lam) - target_entropy_bits) > 1e-6:
            raise RuntimeError("shaping bisection did not converge to 1e-6 bits")

    probs = _mb_probs(pts, lam)
    power = np.sum(probs * np.abs(pts) ** 2)
    return Constellation(
        points=pts / np.sqrt(power),
        probs=probs,
        label=base.label + f"-MB{target_entropy_bits:g}",
        bits=base.bits,
    )


def draw_symbols(c: Constellation, n_subcarriers: int, n_symbols: int,
                 seed: int, baud: float = 0.0) -> SymbolFrame:
    """Seeded i.i.d. symbol draws, independent across subcarriers and
    polarizations.  Identical seed gives bit-identical output; each
    (subcarrier, polarization) uses a distinct deterministic substream.
    """
    if n_symbols < 1:
        raise ValueError("n_symbols must be >= 1")
    idx = np.empty((n_subcarriers, 2, n_symbols), dtype=np.int64)
    for sc in range(n_subcarriers):
        for pol in range(2):
            rng = np.random.default_rng(np.random.SeedSequence((seed, sc, pol)))
            idx[sc, pol] = rng.choice(len(c.points), size=n_symbols, p=c.probs)
    return SymbolFrame(
        symbols=c.points[idx],
        baud=baud,
        seed=seed,
        amplitude=1.0,
        point_indices=idx,
    )


def nearest_point_indices(c: Constellation, symbols: np.ndarray) -> np.ndarray:
    """Minimum-distance hard decision; returns point indices."""
    flat = symbols.reshape(-1)
    d = np.abs(flat[:, None] - c.points[None, :])
    return np.argmin(d, axis=1).reshape(symbols.shape)


def indices_to_bits(c: Constellation, idx: np.ndarray) -> np.ndarray:
    """Expand point indices to their Gray bit labels (last axis = bits)."""
    if c.bits.size == 0:
        raise ValueError("constellation carries no bit labels")
    return c.bits[idx]
