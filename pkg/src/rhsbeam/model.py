"""RHS array geometry, feed response, psi-mu coordinates, steering vectors, channels.

Conventions used throughout the package:
- The array is linear along one axis; element n (1-based in the math,
  0-based in arrays) sits at coordinate delta_n * d with
  delta_n = (2n - N - 1) / 2, so offsets are symmetric half-integers.
- Angle/distance are carried in the (psi, mu) domain: psi = cos(theta),
  mu = (1 - cos^2(theta)) / r.  Far-field users have mu -> 0.
- Steering vectors drop the common-distance phase term (a global phase);
  all downstream quantities use magnitudes or relative phases.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 3.0e8  # m/s, engineering convention (lambda = 1 cm at 30 GHz)


class ConfigError(ValueError):
    """Raised for invalid or unparsable system/experiment configuration."""


@dataclass(frozen=True)
class SystemConfig:
    """Physical parameters of the RHS transmitter.

    Units: SI throughout (Hz, m, rad/m, 1/m, W).
    """

    carrier_frequency: float = 30e9   # Hz
    n_elements: int = 256             # N
    n_feeds: int = 10                 # L, equals number of RF chains
    element_spacing: float | None = None  # m; None -> lambda/4
    k_s: float | None = None          # rad/m; None -> 2*sqrt(3)*pi/lambda
    alpha: float = 2.0                # 1/m, on-surface propagation loss
    eta: float = 1.0                  # element radiation efficiency, (0, 1]
    power: float = 16.0               # W, BS power budget
    noise_variance: float = 0.0       # W

    def __post_init__(self):
        if self.carrier_frequency <= 0:
            raise ConfigError("carrier_frequency must be > 0")
        if self.n_elements < 2:
            raise ConfigError("n_elements must be >= 2")
        if self.n_feeds < 1:
            raise ConfigError("n_feeds must be >= 1")
        if self.element_spacing is None:
            object.__setattr__(self, "element_spacing", self.wavelength / 4.0)
        if self.element_spacing <= 0:
            raise ConfigError("element_spacing must be > 0")
        if self.k_s is None:
            object.__setattr__(self, "k_s", 2.0 * math.sqrt(3.0) * math.pi / self.wavelength)
        if not (0.0 < self.eta <= 1.0):
            raise ConfigError("eta must lie in (0, 1]")
        if self.alpha < 0:
            raise ConfigError("alpha must be >= 0")
        if self.noise_variance < 0:
            raise ConfigError("noise_variance must be >= 0")
        if self.power <= 0:
            raise ConfigError("power must be > 0")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    def config_hash(self) -> bytes:
        """8-byte digest identifying the array geometry; embedded in codebook files."""
        parts = [
            f"frequency_hz={self.carrier_frequency!r}",
            f"n_elements={self.n_elements!r}",
            f"n_feeds={self.n_feeds!r}",
            f"element_spacing_m={self.element_spacing!r}",
            f"k_s_rad_per_m={self.k_s!r}",
            f"alpha_per_m={self.alpha!r}",
            f"eta={self.eta!r}",
            f"power_w={self.power!r}",
        ]
        return hashlib.sha256("\n".join(parts).encode()).digest()[:8]

    @classmethod
    def from_mapping(cls, kv: dict) -> "SystemConfig":
        """Build from the declarative key/value names used in config files."""
        names = {
            "frequency_hz": "carrier_frequency",
            "n_elements": "n_elements",
            "element_spacing_m": "element_spacing",
            "n_feeds": "n_feeds",
            "k_s_rad_per_m": "k_s",
            "alpha_per_m": "alpha",
            "eta": "eta",
            "power_w": "power",
            "noise_var_w": "noise_variance",
        }
        kwargs = {}
        for key, attr in names.items():
            if key in kv:
                raw = kv[key]
                kwargs[attr] = int(raw) if attr in ("n_elements", "n_feeds") else float(raw)
        return cls(**kwargs)


@dataclass(frozen=True)
class PolarPosition:
    """User location as (range, azimuth): r in m, theta in rad, theta in (0, pi)."""

    r: float
    theta: float

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError("r must be > 0")
        if not (0.0 < self.theta < math.pi):
            raise ValueError("theta must lie in (0, pi)")


@dataclass(frozen=True)
class PsiMuPosition:
    """Location in the psi-mu domain: psi = cos(theta) in [-1, 1], mu >= 0 in 1/m."""

    psi: float
    mu: float

    def __post_init__(self):
        if not (-1.0 <= self.psi <= 1.0):
            raise ValueError("psi must lie in [-1, 1]")
        if self.mu < 0:
            raise ValueError("mu must be >= 0")


@dataclass(frozen=True)
class User:
    """Single-antenna user with known psi-mu position and complex path gain."""

    id: int
    position: PsiMuPosition
    path_gain: complex = 1.0 + 0.0j

    def __post_init__(self):
        if abs(self.path_gain) == 0:
            raise ValueError("path gain must be nonzero")


def psi_mu_from_polar(p: PolarPosition) -> PsiMuPosition:
    """Coordinate transform psi = cos(theta), mu = (1 - cos^2(theta)) / r."""
    if p.r <= 0:
        raise ValueError("r must be > 0")
    psi = math.cos(p.theta)
    mu = (1.0 - psi * psi) / p.r
    return PsiMuPosition(psi=psi, mu=mu)


@dataclass(frozen=True)
class ArrayModel:
    """RHS geometry plus the precomputed N x L feed response matrix.

    feed_response[n, l] = sqrt(eta) * exp(-alpha * d_nl) * exp(-1j * k_s * d_nl)
    with d_nl the on-surface distance from feed l to element n.  Feeds are
    placed evenly along the array axis (the paper leaves feed geometry open).
    """

    config: SystemConfig
    element_offsets: np.ndarray = field(repr=False)   # (N,) half-integer multipliers
    feed_positions: np.ndarray = field(repr=False)    # (L,) m
    feed_response: np.ndarray = field(repr=False)     # (N, L) complex

    @classmethod
    def from_config(cls, config: SystemConfig, feed_positions: np.ndarray | None = None) -> "ArrayModel":
        n = config.n_elements
        offsets = (2.0 * np.arange(1, n + 1) - n - 1) / 2.0
        if feed_positions is None:
            feed_positions = default_feed_positions(config)
        else:
            feed_positions = np.asarray(feed_positions, dtype=float)
            if feed_positions.shape != (config.n_feeds,):
                raise ConfigError("feed_positions must have length n_feeds")
        f = feed_response_matrix(config, feed_positions, offsets)
        for arr in (offsets, feed_positions, f):
            arr.flags.writeable = False
        return cls(config=config, element_offsets=offsets,
                   feed_positions=feed_positions, feed_response=f)

    @property
    def element_positions(self) -> np.ndarray:
        """(N,) element coordinates delta_n * d along the array axis, in m."""
        return self.element_offsets * self.config.element_spacing

    def gamma(self, k_users: int) -> np.ndarray:
        """Per-element aggregate feed excitation with the constant digital weight folded in.

        gamma_n = sum_l sqrt(P / (L K)) * F[n, l]; the effective training-time
        codeword vector is gamma * m, so |b . (gamma * m)| is the pattern gain.
        """
        if k_users < 1:
            raise ValueError("k_users must be >= 1")
        cfg = self.config
        scale = math.sqrt(cfg.power / (cfg.n_feeds * k_users))
        return scale * self.feed_response.sum(axis=1)


def default_feed_positions(config: SystemConfig) -> np.ndarray:
    """L feeds centered on the array, spaced one guided wavelength apart.

    Taps one guided wavelength 2 pi / k_s apart launch in phase, so the
    per-element feed sum forms a clean traveling reference wave instead of an
    interference pattern with deep nulls across the aperture.
    """
    l = config.n_feeds
    guide = 2.0 * math.pi / config.k_s
    return (np.arange(1, l + 1) - (l + 1) / 2.0) * guide


def feed_response_matrix(config: SystemConfig, feed_positions: np.ndarray,
                         element_offsets: np.ndarray | None = None) -> np.ndarray:
    """N x L matrix F[n, l] = sqrt(eta) * exp(-(alpha + 1j*k_s) * |x_l - delta_n d|)."""
    if element_offsets is None:
        n = config.n_elements
        element_offsets = (2.0 * np.arange(1, n + 1) - n - 1) / 2.0
    elem = element_offsets * config.element_spacing
    dist = np.abs(np.asarray(feed_positions, dtype=float)[None, :] - elem[:, None])
    return math.sqrt(config.eta) * np.exp(-(config.alpha + 1j * config.k_s) * dist)


def steering_matrix(psis: np.ndarray, mus: np.ndarray, array: ArrayModel) -> np.ndarray:
    """Steering vectors for many (psi, mu) points at once; rows are unit-norm.

    Row s is b(psi_s, mu_s) with entries
    (1/sqrt(N)) * exp(-1j * 2 pi / lambda * (-delta_n d psi + delta_n^2 d^2 mu / 2)).
    The common-distance phase of the underlying range expansion is dropped.
    """
    psis = np.atleast_1d(np.asarray(psis, dtype=float))
    mus = np.atleast_1d(np.asarray(mus, dtype=float))
    cfg = array.config
    dd = array.element_offsets * cfg.element_spacing          # (N,)
    phase = (-dd[None, :] * psis[:, None]
             + 0.5 * dd[None, :] ** 2 * mus[:, None])          # (S, N)
    b = np.exp(-2j * math.pi / cfg.wavelength * phase)
    return b / math.sqrt(cfg.n_elements)


def steering_vector(pos: PsiMuPosition, array: ArrayModel) -> np.ndarray:
    """Unit-norm steering vector b(psi, mu) under the quadratic range expansion."""
    return steering_matrix(pos.psi, pos.mu, array)[0]


def channel(user: User, array: ArrayModel) -> np.ndarray:
    """Row channel vector h = beta * sqrt(N) * b(psi, mu)."""
    b = steering_vector(user.position, array)
    return user.path_gain * math.sqrt(array.config.n_elements) * b


def rayleigh_distance(config: SystemConfig) -> float:
    """Near/far-field boundary 2 D^2 / lambda with aperture D = (N - 1) d."""
    aperture = (config.n_elements - 1) * config.element_spacing
    return 2.0 * aperture * aperture / config.wavelength
