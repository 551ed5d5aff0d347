"""Codebook construction and file I/O.

Three codeword collections are built here:

- the hierarchical multi-user angular codebook (S layers, 2 codewords per
  layer, coverage sets of each layer partitioning the psi columns),
- the single-beam codebook (one binary pattern per grid cell),
- distance-adaptive multi-beam codewords assembled in real time by averaging
  single-beam patterns at the decoded user angles (holographic superposition,
  plain arithmetic, no optimizer calls).
"""

from __future__ import annotations

import dataclasses
import logging
import math
import struct
from dataclasses import dataclass

import numpy as np

from .model import ArrayModel
from .optimizer import (Codeword, GainTarget, SampleGrid, optimize_codeword,
                        optimize_single_beam)

log = logging.getLogger(__name__)


class CodebookFormatError(ValueError):
    """Raised for unreadable, truncated, or mismatched codebook files."""


class CodebookConfigMismatch(CodebookFormatError):
    """Codebook file was generated under a different system configuration."""


def coverage_membership(i: int, s: int, p: int, n_psi: int) -> bool:
    """Whether psi column i belongs to codeword (layer s, index p).

    Membership: ceil(i * 2^s / I) mod 2 == p mod 2, so the two codewords of a
    layer split the columns into interleaved blocks of I / 2^s and together
    cover every column.  Membership does not depend on mu: angular codewords
    span the full distance range at their covered angles.
    """
    if not 1 <= i <= n_psi:
        raise ValueError(f"column index {i} outside [1, {n_psi}]")
    if p not in (1, 2):
        raise ValueError("codeword index p must be 1 or 2")
    if s < 1:
        raise ValueError("layer s must be >= 1")
    ceil_term = -((-i * (1 << s)) // n_psi)
    return ceil_term % 2 == p % 2


def num_layers(psi_range: float, n_elements: int, spacing: float,
               wavelength: float) -> int:
    """Deepest hierarchical layer count the array aperture supports.

    Largest S with (psi_max - psi_min) / 2^S >= lambda / (N d), i.e. the
    bottom-layer beam width is no narrower than the finest beam the aperture
    can form: S = floor(log2(range * N * d / lambda)).
    """
    if psi_range <= 0 or n_elements < 1 or spacing <= 0 or wavelength <= 0:
        raise ValueError("arguments must be positive")
    arg = psi_range * n_elements * spacing / wavelength
    s = int(math.floor(math.log2(arg) + 1e-12))
    if s < 1:
        raise ValueError(
            f"psi range {psi_range} too small for a hierarchical codebook "
            f"(aperture resolves {wavelength / (n_elements * spacing):.4g})")
    return s


@dataclass(frozen=True, eq=False)
class AngularCodebook:
    """Hierarchical angular codebook: layers[s-1][p-1] is codeword (s, p)."""

    grid: SampleGrid
    layers: tuple  # S entries, each a (Codeword, Codeword) pair

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def codeword(self, s: int, p: int) -> Codeword:
        """Codeword at layer s, position p (both 1-based)."""
        return self.layers[s - 1][p - 1]

    def __eq__(self, other):
        if not isinstance(other, AngularCodebook):
            return NotImplemented
        return self.grid == other.grid and self.layers == other.layers


@dataclass(frozen=True, eq=False)
class SingleBeamCodebook:
    """All I*J binary single-beam patterns, one per grid cell."""

    grid: SampleGrid
    patterns: tuple  # row-major over (i, j), length I*J

    def pattern(self, i: int, j: int) -> Codeword:
        """Pattern optimized for grid cell (i, j), 1-based."""
        if not (1 <= i <= self.grid.n_psi and 1 <= j <= self.grid.n_mu):
            raise ValueError(f"cell ({i}, {j}) outside grid")
        return self.patterns[(i - 1) * self.grid.n_mu + (j - 1)]

    def __eq__(self, other):
        if not isinstance(other, SingleBeamCodebook):
            return NotImplemented
        return self.grid == other.grid and self.patterns == other.patterns


@dataclass(frozen=True)
class DistanceAdaptiveCodebook:
    """J multi-beam codewords covering the decoded user angles, one per mu row."""

    angle_columns: tuple  # column indices the codewords cover (with multiplicity)
    codewords: tuple      # J entries, index j-1 covers mu row j


def build_angular_codebook(grid: SampleGrid, array: ArrayModel, s_layers: int,
                           desired_gain: float = 1.0, sweeps: int = 20,
                           k_design: int = 1,
                           design_oversample: int = 2) -> AngularCodebook:
    """Generate the 2*S hierarchical codewords (coverage rule + amplitude designer).

    Requires I = 2^S so the bottom layer resolves single psi columns and the
    feedback recursion addresses columns exactly.  ``design_oversample``
    refines the synthesis grid in psi (each decode column becomes that many
    design columns with the same coverage), constraining the pattern between
    column centers; the codebook's grid stays the decode grid.
    """
    if grid.n_psi != 1 << s_layers:
        raise ValueError(f"n_psi={grid.n_psi} must equal 2^S = {1 << s_layers}")
    if design_oversample < 1:
        raise ValueError("design_oversample must be >= 1")
    design = grid
    if design_oversample > 1:
        design = SampleGrid(psi_min=grid.psi_min, psi_max=grid.psi_max,
                            mu_min=grid.mu_min, mu_max=grid.mu_max,
                            n_psi=grid.n_psi * design_oversample, n_mu=grid.n_mu)
    layers = []
    for s in range(1, s_layers + 1):
        pair = []
        for p in (1, 2):
            mask = np.zeros((design.n_psi, design.n_mu), dtype=bool)
            for i in range(1, design.n_psi + 1):
                parent = (i - 1) // design_oversample + 1
                mask[i - 1, :] = coverage_membership(parent, s, p, grid.n_psi)
            target = GainTarget.from_coverage(desired_gain, mask)
            cw, trace = optimize_codeword(design, target, array, sweeps=sweeps,
                                          k_design=k_design, return_trace=True)
            log.debug("angular codeword (s=%d, p=%d): %d sweeps, %d reverts, "
                      "objective %.4g -> %.4g", s, p, trace.sweeps_run,
                      trace.reverts, trace.objectives[0], trace.objectives[-1])
            pair.append(dataclasses.replace(cw, layer=s, index=p))
        layers.append(tuple(pair))
    return AngularCodebook(grid=grid, layers=tuple(layers))


def build_single_beam_codebook(grid: SampleGrid, array: ArrayModel,
                               sweeps: int = 20) -> SingleBeamCodebook:
    """Generate the I*J binary single-beam patterns at every grid cell."""
    patterns = []
    for i in range(1, grid.n_psi + 1):
        for j in range(1, grid.n_mu + 1):
            cw = optimize_single_beam((grid.psi_center(i), grid.mu_center(j)),
                                      array, sweeps=sweeps)
            patterns.append(dataclasses.replace(cw, grid_point=(i, j)))
    return SingleBeamCodebook(grid=grid, patterns=tuple(patterns))


def far_field_grid(grid: SampleGrid) -> SampleGrid:
    """Single-row subgrid at mu = 0: the planar-wave limit."""
    return SampleGrid(psi_min=grid.psi_min, psi_max=grid.psi_max,
                      mu_min=0.0, mu_max=0.0, n_psi=grid.n_psi, n_mu=1)


def build_far_field_codebook(grid: SampleGrid, array: ArrayModel, s_layers: int,
                             desired_gain: float = 1.0, sweeps: int = 20,
                             k_design: int = 1,
                             design_oversample: int = 8) -> AngularCodebook:
    """Planar-wave specialization of the angular codebook for the far-field baseline.

    Same psi sampling, but the gain targets collapse the distance dimension to
    mu = 0 (the baseline models planar waves and knows nothing about distance).
    With a single mu row the synthesis grid would carry only I constraints, so
    it is oversampled in psi by default to keep inter-column ripple down.
    """
    return build_angular_codebook(far_field_grid(grid), array, s_layers,
                                  desired_gain=desired_gain, sweeps=sweeps,
                                  k_design=k_design,
                                  design_oversample=design_oversample)


def build_far_field_single_beams(grid: SampleGrid, array: ArrayModel,
                                 sweeps: int = 20) -> SingleBeamCodebook:
    """I binary single-column beams at mu = 0, for the DFT-style angle sweep."""
    flat = SampleGrid(psi_min=grid.psi_min, psi_max=grid.psi_max,
                      mu_min=0.0, mu_max=0.0, n_psi=grid.n_psi, n_mu=1)
    patterns = []
    for i in range(1, flat.n_psi + 1):
        cw = optimize_single_beam((flat.psi_center(i), 0.0), array, sweeps=sweeps)
        patterns.append(dataclasses.replace(cw, grid_point=(i, 1)))
    return SingleBeamCodebook(grid=flat, patterns=tuple(patterns))


def assemble_distance_adaptive(angle_columns, j: int,
                               sbc: SingleBeamCodebook) -> Codeword:
    """Multi-beam codeword for mu row j: mean of the single-beam patterns at
    the given psi columns (with multiplicity).  Pure O(K*N) arithmetic."""
    columns = list(angle_columns)
    if not columns:
        raise ValueError("angle column set must be non-empty")
    acc = np.zeros_like(sbc.pattern(columns[0], j).amplitudes)
    for i in columns:
        acc = acc + sbc.pattern(i, j).amplitudes
    return Codeword(amplitudes=acc / len(columns), index=j)


def build_distance_adaptive_codebook(angle_columns,
                                     sbc: SingleBeamCodebook) -> DistanceAdaptiveCodebook:
    """All J distance-adaptive codewords for one decoded angle set."""
    codewords = tuple(assemble_distance_adaptive(angle_columns, j, sbc)
                      for j in range(1, sbc.grid.n_mu + 1))
    return DistanceAdaptiveCodebook(angle_columns=tuple(angle_columns),
                                    codewords=codewords)


# --------------------------------------------------------------------------
# File format: fixed little-endian header followed by raw float64 amplitudes.
#   magic "RHSCB1" | config hash (8 bytes) | kind (u8) | N (u32) | S (u32) |
#   I (u32) | J (u32) | psi_min, psi_max, mu_min, mu_max (4 x f64) |
#   codeword count (u32)
# Angular files store 2*S codewords ordered (s=1,p=1), (s=1,p=2), (s=2,p=1)...
# Single-beam files store I*J patterns row-major over (i, j).

MAGIC = b"RHSCB1"
KIND_ANGULAR = 1
KIND_SINGLE_BEAM = 2
_HEADER_FMT = "<6s8sBIIIIddddI"
HEADER_SIZE = struct.calcsize(_HEADER_FMT)


def save_codebook(book, path, config_hash: bytes) -> None:
    """Write an AngularCodebook or SingleBeamCodebook to ``path``."""
    if len(config_hash) != 8:
        raise ValueError("config hash must be 8 bytes")
    if isinstance(book, AngularCodebook):
        kind = KIND_ANGULAR
        s_layers = book.n_layers
        codewords = [cw for pair in book.layers for cw in pair]
    elif isinstance(book, SingleBeamCodebook):
        kind = KIND_SINGLE_BEAM
        s_layers = 0
        codewords = list(book.patterns)
    else:
        raise TypeError(f"cannot serialize {type(book).__name__}")
    grid = book.grid
    n = len(codewords[0].amplitudes)
    header = struct.pack(_HEADER_FMT, MAGIC, config_hash, kind, n, s_layers,
                         grid.n_psi, grid.n_mu, grid.psi_min, grid.psi_max,
                         grid.mu_min, grid.mu_max, len(codewords))
    with open(path, "wb") as fh:
        fh.write(header)
        for cw in codewords:
            fh.write(np.asarray(cw.amplitudes, dtype="<f8").tobytes())


def load_codebook(path, expected_hash: bytes | None = None):
    """Read a codebook file back; verifies magic, sizes, and the config hash."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER_SIZE:
        raise CodebookFormatError(f"{path}: truncated header "
                                  f"({len(raw)} < {HEADER_SIZE} bytes)")
    (magic, config_hash, kind, n, s_layers, n_psi, n_mu,
     psi_min, psi_max, mu_min, mu_max, count) = struct.unpack_from(_HEADER_FMT, raw)
    if magic != MAGIC:
        raise CodebookFormatError(f"{path}: bad magic {magic!r} (not a codebook file)")
    if expected_hash is not None and config_hash != expected_hash:
        raise CodebookConfigMismatch(
            f"{path}: codebook was generated under a different system config "
            f"(hash {config_hash.hex()} != {expected_hash.hex()}); re-run gen-codebook")
    expected_bytes = HEADER_SIZE + count * n * 8
    if len(raw) != expected_bytes:
        raise CodebookFormatError(f"{path}: corrupt payload, expected "
                                  f"{expected_bytes} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f8", offset=HEADER_SIZE).reshape(count, n)
    grid = SampleGrid(psi_min=psi_min, psi_max=psi_max, mu_min=mu_min,
                      mu_max=mu_max, n_psi=n_psi, n_mu=n_mu)
    if np.any(data < 0) or np.any(data > 1):
        raise CodebookFormatError(f"{path}: amplitudes outside [0, 1]")
    if kind == KIND_ANGULAR:
        if count != 2 * s_layers:
            raise CodebookFormatError(f"{path}: angular codebook with {count} "
                                      f"codewords, expected {2 * s_layers}")
        layers = []
        for s in range(1, s_layers + 1):
            pair = tuple(Codeword(amplitudes=data[2 * (s - 1) + (p - 1)].copy(),
                                  layer=s, index=p) for p in (1, 2))
            layers.append(pair)
        return AngularCodebook(grid=grid, layers=tuple(layers))
    if kind == KIND_SINGLE_BEAM:
        if count != n_psi * n_mu:
            raise CodebookFormatError(f"{path}: single-beam codebook with {count} "
                                      f"patterns, expected {n_psi * n_mu}")
        patterns = []
        for i in range(1, n_psi + 1):
            for j in range(1, n_mu + 1):
                amps = data[(i - 1) * n_mu + (j - 1)].copy()
                binary = bool(np.all((amps == 0) | (amps == 1)))
                patterns.append(Codeword(amplitudes=amps, grid_point=(i, j),
                                         binary=binary))
        return SingleBeamCodebook(grid=grid, patterns=tuple(patterns))
    raise CodebookFormatError(f"{path}: unknown codebook kind {kind}")
