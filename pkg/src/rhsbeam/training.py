"""Two-phase simultaneous multi-user beam training and the baseline schemes.

Protocol time is a sequence of slots; in each slot the BS configures the RHS
with one codeword and broadcasts a unit pilot through the constant digital
weight v = sqrt(P / (L K)) * ones(L).  Users measure received power and feed
back indices; no inter-user interference arises because a single pilot stream
is transmitted.

Overhead is recorded in two conventions: ``slots_raw`` counts every
transmitted codeword (two per hierarchical layer), while ``slots_paper``
counts one slot per layer, which is the convention of the published overhead
table.  Both are independent of the number of users for the broadcast phases.

Noise is drawn per user per slot from substreams keyed by
(master_seed, 1, trial_index, user_index), so transcripts are reproducible
regardless of execution order; slot i of any scheme sees the same noise
sample, which keeps baselines comparable under matched seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .codebooks import AngularCodebook, SingleBeamCodebook, assemble_distance_adaptive
from .model import ArrayModel, User, channel
from .optimizer import Codeword

SCHEMES = ("proposed", "exhaustive", "far_field", "two_stage", "dft_distance")


@dataclass(frozen=True)
class MeasurementModel:
    """Pilot, digital weight, noise level, and noise stream keying for training."""

    k_users: int
    noise_variance: float = 0.0      # W
    pilot_symbol: complex = 1.0 + 0.0j
    master_seed: int = 0
    trial_index: int = 0

    def __post_init__(self):
        if self.k_users < 1:
            raise ValueError("k_users must be >= 1")
        if self.noise_variance < 0:
            raise ValueError("noise variance must be >= 0")
        if abs(self.pilot_symbol) != 1.0:
            raise ValueError("pilot symbol must have unit magnitude")

    def digital_weight(self, array: ArrayModel) -> np.ndarray:
        """Constant training beamformer v = sqrt(P / (L K)) * ones(L)."""
        cfg = array.config
        scale = math.sqrt(cfg.power / (cfg.n_feeds * self.k_users))
        return np.full(cfg.n_feeds, scale, dtype=complex)

    def noise_block(self, user_index: int, n_slots: int) -> np.ndarray:
        """Complex noise samples for one user across ``n_slots`` slots."""
        if self.noise_variance == 0.0:
            return np.zeros(n_slots, dtype=complex)
        seq = np.random.SeedSequence((self.master_seed, 1, self.trial_index,
                                      user_index))
        z = np.random.default_rng(seq).standard_normal((n_slots, 2))
        return (z[:, 0] + 1j * z[:, 1]) * math.sqrt(self.noise_variance / 2.0)


@dataclass(frozen=True)
class BaselineConfig:
    """Per-scheme knobs; only the DFT-distance baseline uses Q."""

    scheme: str
    q_candidates: int = 3

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.q_candidates < 1:
            raise ValueError("q_candidates must be >= 1")


@dataclass
class TrainingTranscript:
    """Everything one training run produced, JSON-exportable via to_dict()."""

    scheme: str
    k_users: int
    slots_raw: int
    slots_paper: int
    angle_index: list          # per user, bottom-layer psi column (1-based)
    distance_index: list       # per user, mu row (1-based); None entries if unused
    psi_hat: list
    mu_hat: list
    tau: list | None = None    # per user, per layer, in {1, 2}
    nu: list | None = None     # per user, decoded index per layer
    powers: list = field(default_factory=list)  # per user, in measurement order
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "k_users": self.k_users,
            "slots_raw": self.slots_raw,
            "slots_paper": self.slots_paper,
            "angle_index": self.angle_index,
            "distance_index": self.distance_index,
            "psi_hat": self.psi_hat,
            "mu_hat": self.mu_hat,
            "tau": self.tau,
            "nu": self.nu,
            "powers": self.powers,
            "details": self.details,
        }


def measure_power(user: User, codeword: Codeword, array: ArrayModel,
                  mm: MeasurementModel, rng: np.random.Generator | None = None) -> float:
    """Received power |h . diag(m) . F . v . s + n|^2 for one slot.

    With zero noise variance no random draw is made; otherwise a single
    complex Gaussian sample of variance sigma^2 is taken from ``rng``.
    """
    h = channel(user, array)
    eff = codeword.amplitudes * array.gamma(mm.k_users)
    amp = (h @ eff) * mm.pilot_symbol
    if mm.noise_variance > 0.0:
        if rng is None:
            raise ValueError("rng required when noise variance > 0")
        z = rng.standard_normal(2)
        amp = amp + (z[0] + 1j * z[1]) * math.sqrt(mm.noise_variance / 2.0)
    return float(abs(amp) ** 2)


def feedback_to_index(taus) -> list:
    """Per-layer beam indices from the feedback sequence: nu_s = 2(nu_{s-1}-1) + tau_s."""
    nu = 1
    out = []
    for t in taus:
        if t not in (1, 2):
            raise ValueError(f"feedback values must be 1 or 2, got {t!r}")
        nu = 2 * (nu - 1) + t
        out.append(nu)
    return out


def estimate_psi(nu: int, s_layers: int, bounds: tuple[float, float]) -> float:
    """Angle estimate: center of bottom-layer cell nu among 2^S cells."""
    if not 1 <= nu <= (1 << s_layers):
        raise ValueError(f"nu {nu} outside [1, {1 << s_layers}]")
    lo, hi = bounds
    return lo + (hi - lo) * (2 * nu - 1) / (2 ** (s_layers + 1))


def estimate_mu(zeta: int, n_mu: int, bounds: tuple[float, float]) -> float:
    """Distance estimate: center of mu cell zeta among J cells."""
    if not 1 <= zeta <= n_mu:
        raise ValueError(f"zeta {zeta} outside [1, {n_mu}]")
    lo, hi = bounds
    return lo + (hi - lo) * (2 * zeta - 1) / (2 * n_mu)


def _channel_matrix(users, array) -> np.ndarray:
    return np.vstack([channel(u, array) for u in users])


def _effective(codeword: Codeword, gamma: np.ndarray) -> np.ndarray:
    return codeword.amplitudes * gamma


def _slot_powers(h_matrix: np.ndarray, eff: np.ndarray, pilot: complex,
                 noise_col: np.ndarray) -> np.ndarray:
    """Per-user received powers for one broadcast slot."""
    return np.abs(h_matrix @ eff * pilot + noise_col) ** 2


def _hierarchical_angle_phase(users, book: AngularCodebook, array: ArrayModel,
                              mm: MeasurementModel, noise: np.ndarray,
                              powers_out: list, slot0: int = 0):
    """Shared broadcast angle search: 2 slots per layer, argmax feedback.

    Returns (tau, nu, next_slot): tau and nu are K x S lists, noise is the
    (K, total_slots) matrix indexed by absolute slot.
    """
    h = _channel_matrix(users, array)
    gamma = array.gamma(mm.k_users)
    k = len(users)
    slot = slot0
    tau = [[] for _ in range(k)]
    for s in range(1, book.n_layers + 1):
        p1 = _slot_powers(h, _effective(book.codeword(s, 1), gamma),
                          mm.pilot_symbol, noise[:, slot])
        p2 = _slot_powers(h, _effective(book.codeword(s, 2), gamma),
                          mm.pilot_symbol, noise[:, slot + 1])
        slot += 2
        for u in range(k):
            powers_out[u].extend([float(p1[u]), float(p2[u])])
            tau[u].append(1 if p1[u] >= p2[u] else 2)  # tie -> lower index
    nu = [feedback_to_index(t) for t in tau]
    return tau, nu, slot


def run_two_phase(users, angular: AngularCodebook, sbc: SingleBeamCodebook,
                  array: ArrayModel, mm: MeasurementModel) -> TrainingTranscript:
    """One-shot two-phase training: hierarchical angle search for all users at
    once, then a J-slot distance sweep with adaptive superposed codewords."""
    if len(users) < 1:
        raise ValueError("need at least one user")
    k = len(users)
    s_layers = angular.n_layers
    j_count = sbc.grid.n_mu
    n_slots = 2 * s_layers + j_count
    noise = np.vstack([mm.noise_block(u, n_slots) for u in range(k)])
    powers = [[] for _ in range(k)]

    tau, nu, slot = _hierarchical_angle_phase(users, angular, array, mm,
                                              noise, powers)
    angle_cols = [nu[u][-1] for u in range(k)]

    h = _channel_matrix(users, array)
    gamma = array.gamma(mm.k_users)
    phase2 = np.empty((k, j_count))
    for j in range(1, j_count + 1):
        cw = assemble_distance_adaptive(angle_cols, j, sbc)
        p = _slot_powers(h, _effective(cw, gamma), mm.pilot_symbol, noise[:, slot])
        slot += 1
        phase2[:, j - 1] = p
        for u in range(k):
            powers[u].append(float(p[u]))
    zeta = [int(np.argmax(phase2[u])) + 1 for u in range(k)]  # tie -> lower j

    psi_bounds = (angular.grid.psi_min, angular.grid.psi_max)
    mu_bounds = (sbc.grid.mu_min, sbc.grid.mu_max)
    return TrainingTranscript(
        scheme="proposed", k_users=k,
        slots_raw=n_slots, slots_paper=s_layers + j_count,
        angle_index=angle_cols, distance_index=zeta,
        psi_hat=[estimate_psi(c, s_layers, psi_bounds) for c in angle_cols],
        mu_hat=[estimate_mu(z, j_count, mu_bounds) for z in zeta],
        tau=tau, nu=nu, powers=powers)


def run_exhaustive(users, sbc: SingleBeamCodebook, array: ArrayModel,
                   mm: MeasurementModel) -> TrainingTranscript:
    """Scan every single-beam pattern; per-user argmax cell (scan order ties)."""
    k = len(users)
    grid = sbc.grid
    n_slots = grid.n_psi * grid.n_mu
    noise = np.vstack([mm.noise_block(u, n_slots) for u in range(k)])
    h = _channel_matrix(users, array)
    gamma = array.gamma(mm.k_users)

    powers = np.empty((k, n_slots))
    for slot in range(n_slots):
        i, j = divmod(slot, grid.n_mu)
        eff = _effective(sbc.pattern(i + 1, j + 1), gamma)
        powers[:, slot] = _slot_powers(h, eff, mm.pilot_symbol, noise[:, slot])

    best = np.argmax(powers, axis=1)  # first max wins: lowest (i, j)
    angle_idx = [int(b) // grid.n_mu + 1 for b in best]
    dist_idx = [int(b) % grid.n_mu + 1 for b in best]
    return TrainingTranscript(
        scheme="exhaustive", k_users=k, slots_raw=n_slots, slots_paper=n_slots,
        angle_index=angle_idx, distance_index=dist_idx,
        psi_hat=[grid.psi_center(i) for i in angle_idx],
        mu_hat=[grid.mu_center(j) for j in dist_idx],
        powers=[[float(x) for x in row] for row in powers])


def run_far_field(users, far_codebook: AngularCodebook, array: ArrayModel,
                  mm: MeasurementModel) -> TrainingTranscript:
    """Angle-only hierarchical baseline; distance is not searched (mu_hat = 0)."""
    k = len(users)
    s_layers = far_codebook.n_layers
    n_slots = 2 * s_layers
    noise = np.vstack([mm.noise_block(u, n_slots) for u in range(k)])
    powers = [[] for _ in range(k)]
    tau, nu, _ = _hierarchical_angle_phase(users, far_codebook, array, mm,
                                           noise, powers)
    angle_cols = [nu[u][-1] for u in range(k)]
    psi_bounds = (far_codebook.grid.psi_min, far_codebook.grid.psi_max)
    return TrainingTranscript(
        scheme="far_field", k_users=k, slots_raw=n_slots, slots_paper=s_layers,
        angle_index=angle_cols, distance_index=[None] * k,
        psi_hat=[estimate_psi(c, s_layers, psi_bounds) for c in angle_cols],
        mu_hat=[0.0] * k, tau=tau, nu=nu, powers=powers)


def run_two_stage(users, angular: AngularCodebook, sbc: SingleBeamCodebook,
                  array: ArrayModel, mm: MeasurementModel) -> TrainingTranscript:
    """Shared hierarchical angle search, then a per-user exhaustive distance
    scan with single-lobe beams at the decoded column (J slots per user)."""
    k = len(users)
    s_layers = angular.n_layers
    j_count = sbc.grid.n_mu
    n_slots = 2 * s_layers + j_count * k
    noise = np.vstack([mm.noise_block(u, n_slots) for u in range(k)])
    powers = [[] for _ in range(k)]
    tau, nu, slot = _hierarchical_angle_phase(users, angular, array, mm,
                                              noise, powers)
    angle_cols = [nu[u][-1] for u in range(k)]

    h = _channel_matrix(users, array)
    gamma = array.gamma(mm.k_users)
    zeta = []
    for u in range(k):
        per_j = np.empty(j_count)
        for j in range(1, j_count + 1):
            eff = _effective(sbc.pattern(angle_cols[u], j), gamma)
            amp = (h[u] @ eff) * mm.pilot_symbol + noise[u, slot]
            slot += 1
            per_j[j - 1] = abs(amp) ** 2
            powers[u].append(float(per_j[j - 1]))
        zeta.append(int(np.argmax(per_j)) + 1)

    psi_bounds = (angular.grid.psi_min, angular.grid.psi_max)
    mu_bounds = (sbc.grid.mu_min, sbc.grid.mu_max)
    return TrainingTranscript(
        scheme="two_stage", k_users=k, slots_raw=n_slots,
        slots_paper=s_layers + j_count * k,
        angle_index=angle_cols, distance_index=zeta,
        psi_hat=[estimate_psi(c, s_layers, psi_bounds) for c in angle_cols],
        mu_hat=[estimate_mu(z, j_count, mu_bounds) for z in zeta],
        tau=tau, nu=nu, powers=powers)


def run_dft_distance(users, far_beams: SingleBeamCodebook,
                     sbc: SingleBeamCodebook, array: ArrayModel,
                     mm: MeasurementModel, q_candidates: int = 3) -> TrainingTranscript:
    """Flat angle sweep with mu = 0 single-column beams, then a per-user
    exhaustive distance scan restricted to the Q strongest candidate angles."""
    if q_candidates < 1:
        raise ValueError("q_candidates must be >= 1")
    k = len(users)
    grid = sbc.grid
    n_angles = far_beams.grid.n_psi
    if n_angles != grid.n_psi:
        raise ValueError("angle sweep beams must match the grid column count")
    q = min(q_candidates, n_angles)
    j_count = grid.n_mu
    n_slots = n_angles + q * j_count * k
    noise = np.vstack([mm.noise_block(u, n_slots) for u in range(k)])
    h = _channel_matrix(users, array)
    gamma = array.gamma(mm.k_users)

    sweep = np.empty((k, n_angles))
    for slot in range(n_angles):
        eff = _effective(far_beams.pattern(slot + 1, 1), gamma)
        sweep[:, slot] = _slot_powers(h, eff, mm.pilot_symbol, noise[:, slot])
    powers = [[float(x) for x in sweep[u]] for u in range(k)]

    # Q strongest angles per user, ties to the lower column; candidates are
    # then scanned in ascending column order.
    candidates = []
    for u in range(k):
        order = np.lexsort((np.arange(n_angles), -sweep[u]))
        candidates.append(sorted(int(c) + 1 for c in order[:q]))

    slot = n_angles
    angle_idx, dist_idx = [], []
    for u in range(k):
        per_cell = np.empty((q, j_count))
        for qi, col in enumerate(candidates[u]):
            for j in range(1, j_count + 1):
                eff = _effective(sbc.pattern(col, j), gamma)
                amp = (h[u] @ eff) * mm.pilot_symbol + noise[u, slot]
                slot += 1
                per_cell[qi, j - 1] = abs(amp) ** 2
                powers[u].append(float(per_cell[qi, j - 1]))
        flat = int(np.argmax(per_cell))
        angle_idx.append(candidates[u][flat // j_count])
        dist_idx.append(flat % j_count + 1)

    return TrainingTranscript(
        scheme="dft_distance", k_users=k, slots_raw=n_slots, slots_paper=n_slots,
        angle_index=angle_idx, distance_index=dist_idx,
        psi_hat=[grid.psi_center(i) for i in angle_idx],
        mu_hat=[grid.mu_center(j) for j in dist_idx],
        powers=powers, details={"candidates": candidates})


def overhead(scheme: str, n_psi: int, n_mu: int, k_users: int,
             q_candidates: int = 3) -> int:
    """Training overhead in slots, published-table convention (log2 I per layer)."""
    if n_psi < 2 or (n_psi & (n_psi - 1)) != 0:
        raise ValueError("n_psi must be a power of two >= 2")
    s = n_psi.bit_length() - 1
    if scheme == "proposed":
        return s + n_mu
    if scheme == "two_stage":
        return s + n_mu * k_users
    if scheme == "dft_distance":
        return n_psi + q_candidates * n_mu * k_users
    if scheme == "exhaustive":
        return n_psi * n_mu
    if scheme == "far_field":
        return s
    raise ValueError(f"unknown scheme {scheme!r}")
