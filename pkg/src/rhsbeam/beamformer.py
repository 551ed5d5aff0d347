"""Post-training hybrid beamformer (holographic + digital ZF) and metrics.

The holographic stage averages the per-user optimal patterns into one
amplitude vector m and forms M = diag(m) F.  The digital stage zero-forces
the effective channel Q = H M and allocates stream powers by water-filling
on the ZF gain coefficients g_k = ||M v~_k||^2: the allocation solves
max sum log2(1 + p_k / sigma^2) subject to the budget equation
sum_k max(1/xi - g_k sigma^2, 0) = sum_k g_k p_k = P.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import ArrayModel

COND_LIMIT = 1e12  # condition number of Q Q^H beyond which geometry is degenerate
WATER_FILL_TOL = 1e-12  # relative tolerance on the budget equation


class DegenerateGeometryError(RuntimeError):
    """Effective channels are (numerically) rank deficient, e.g. two users in
    the same resolved cell; re-run training or drop a user."""


@dataclass(frozen=True)
class HolographicBeamformer:
    """Deployed RHS amplitudes and the resulting N x L response matrix."""

    amplitudes: np.ndarray           # (N,) in [0, 1]
    matrix: np.ndarray               # M = diag(m) F, (N, L)


@dataclass(frozen=True)
class DigitalBeamformer:
    """ZF precoder: V = V~ diag(sqrt(p)) with Q V~ = I on the effective channel."""

    v_tilde: np.ndarray              # (L, K), unnormalized ZF columns
    gains: np.ndarray                # (K,) g_k = ||M v~_k||^2
    power_allocation: np.ndarray     # (K,) p_k >= 0

    @property
    def matrix(self) -> np.ndarray:
        """(L, K) precoder including the power allocation."""
        return self.v_tilde * np.sqrt(self.power_allocation)[None, :]


@dataclass
class MetricsRecord:
    """Per-user rates plus the derived link metrics of one evaluation."""

    per_user_rate: list
    sum_rate: float
    training_error: list = field(default_factory=list)
    slots: int | None = None
    frame_slots: int | None = None
    throughput: float | None = None


def assemble_holographic(patterns, array: ArrayModel) -> HolographicBeamformer:
    """Average the per-user optimal patterns: m = (1/K) sum_k m_k, M = diag(m) F."""
    amps = [np.asarray(getattr(p, "amplitudes", p), dtype=float) for p in patterns]
    if not amps:
        raise ValueError("need at least one pattern")
    m = np.mean(amps, axis=0)
    matrix = m[:, None] * array.feed_response
    m.flags.writeable = False
    matrix.flags.writeable = False
    return HolographicBeamformer(amplitudes=m, matrix=matrix)


def zf_beamformer(channels: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Unnormalized ZF columns V~ = Q^H (Q Q^H)^-1 for Q = H M (rows h_k M).

    Raises DegenerateGeometryError when cond(Q Q^H) exceeds COND_LIMIT.
    """
    q = np.asarray(channels) @ matrix                 # (K, L)
    gram = q @ q.conj().T
    if not np.all(np.isfinite(gram)) or np.linalg.cond(gram) > COND_LIMIT:
        raise DegenerateGeometryError(
            "effective user channels are rank deficient (users in the same "
            "resolved cell?); re-run training or drop a user")
    return np.linalg.solve(gram, q).conj().T          # Q^H gram^-1


def water_fill(gains: np.ndarray, power: float, noise_variance: float) -> np.ndarray:
    """Water-filling allocation p_k = (1/g_k) max(1/xi - g_k sigma^2, 0).

    The water level 1/xi is found by bisection so that
    sum_k max(1/xi - g_k sigma^2, 0) = P to WATER_FILL_TOL relative.
    """
    g = np.asarray(gains, dtype=float)
    if g.size == 0 or np.any(g <= 0):
        raise ValueError("all gains must be positive")
    if power <= 0:
        raise ValueError("power budget must be positive")
    floors = g * noise_variance

    def budget(level: float) -> float:
        return float(np.maximum(level - floors, 0.0).sum())

    lo = float(floors.min())          # budget(lo) = 0
    hi = float(floors.max()) + power  # budget(hi) >= P
    for _ in range(500):
        mid = 0.5 * (lo + hi)
        if budget(mid) >= power:
            hi = mid
        else:
            lo = mid
        if abs(budget(hi) - power) <= WATER_FILL_TOL * power:
            break
    level = hi
    return np.maximum(level - floors, 0.0) / g


def design_digital_beamformer(channels: np.ndarray, hb: HolographicBeamformer,
                              power: float, noise_variance: float) -> DigitalBeamformer:
    """ZF + water-filling on the assembled holographic beamformer."""
    v_tilde = zf_beamformer(channels, hb.matrix)
    mv = hb.matrix @ v_tilde                          # (N, K)
    gains = np.sum(np.abs(mv) ** 2, axis=0).real
    p = water_fill(gains, power, noise_variance)
    return DigitalBeamformer(v_tilde=v_tilde, gains=gains, power_allocation=p)


def sum_rate(channels: np.ndarray, matrix: np.ndarray, precoder: np.ndarray,
             noise_variance: float) -> MetricsRecord:
    """Per-user rates log2(1 + signal / (noise + interference)) and their sum."""
    a = np.asarray(channels) @ matrix @ precoder      # a[k, k'] = h_k M v_k'
    sig = np.abs(np.diag(a)) ** 2
    total = np.sum(np.abs(a) ** 2, axis=1)
    interference = total - sig
    rates = np.log2(1.0 + sig / (noise_variance + interference))
    return MetricsRecord(per_user_rate=[float(r) for r in rates],
                         sum_rate=float(rates.sum()))


def training_error(true_pos, estimate) -> float:
    """Squared psi-mu distance (psi - psi_hat)^2 + (mu - mu_hat)^2."""
    tp, tm = (true_pos.psi, true_pos.mu) if hasattr(true_pos, "psi") else true_pos
    ep, em = (estimate.psi, estimate.mu) if hasattr(estimate, "psi") else estimate
    return (tp - ep) ** 2 + (tm - em) ** 2


def throughput(rate: float, slots: int, frame_slots: int = 500) -> float:
    """Overhead-discounted rate (1 - t/T) * R; defaults to a 500-slot frame.

    Overheads beyond the frame yield a negative value (training does not fit).
    """
    if slots < 0 or frame_slots <= 0:
        raise ValueError("slots must be >= 0 and frame_slots > 0")
    return (1.0 - slots / frame_slots) * rate


def leaky_power(hb: HolographicBeamformer, precoder: np.ndarray,
                eta: float) -> float:
    """Radiated-power proxy eta * ||M V||_F^2 for the post-hoc leaky check."""
    return float(eta * np.sum(np.abs(hb.matrix @ precoder) ** 2))


def water_level(gains: np.ndarray, allocation: np.ndarray,
                noise_variance: float) -> np.ndarray:
    """Per-user p_k g_k + g_k sigma^2; constant (= 1/xi) across active users."""
    g = np.asarray(gains, dtype=float)
    p = np.asarray(allocation, dtype=float)
    return p * g + g * noise_variance
