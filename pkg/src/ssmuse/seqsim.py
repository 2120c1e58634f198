"""Inversion-recovery signal simulation and the PCA temporal basis.

The Bloch model is longitudinal-only: each excitation scales M_z by
cos(alpha), M_z relaxes toward equilibrium between echoes, and the
inversion pulse maps M_z -> -eta * M_z.  Gradient-echo readout with
perfect spoiling is assumed, so no transverse history is kept.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def default_flip_schedule(n_echoes=385, first_angle_deg=4.0, second_angle_deg=8.0,
                          switch_after=304):
    """Two-segment variable flip angle train (low angle first, higher tail)."""
    switch_after = min(switch_after, n_echoes)
    schedule = [(1, switch_after, np.deg2rad(first_angle_deg))]
    if switch_after < n_echoes:
        schedule.append((switch_after + 1, n_echoes, np.deg2rad(second_angle_deg)))
    return tuple(schedule)


@dataclass(frozen=True)
class SequenceParams:
    """Timing and flip-angle description of one inversion block.

    ``flip_schedule`` is a tuple of (first_echo, last_echo, angle_rad)
    segments, 1-based inclusive, that must partition [1, n_echoes_per_block].
    """

    n_echoes_per_block: int = 385
    tr: float = 4.88e-3
    flip_schedule: tuple = field(default_factory=default_flip_schedule)
    recovery_delay: float = 503.5e-3
    inversion_efficiency: float = 1.0
    n_blocks_to_steady_state: int = 5

    def __post_init__(self):
        if self.n_echoes_per_block < 1:
            raise ValueError("n_echoes_per_block must be >= 1")
        if self.tr <= 0:
            raise ValueError("tr must be positive")
        if self.recovery_delay < 0:
            raise ValueError("recovery_delay must be non-negative")
        if not 0.0 <= self.inversion_efficiency <= 1.0:
            raise ValueError("inversion_efficiency must lie in [0, 1]")
        if self.n_blocks_to_steady_state < 0:
            raise ValueError("n_blocks_to_steady_state must be >= 0")
        expected_start = 1
        for first, last, angle in self.flip_schedule:
            if first != expected_start or last < first:
                raise ValueError("flip_schedule segments must partition the echo train")
            if not 0.0 <= angle <= np.pi / 2:
                raise ValueError("flip angles must lie in [0, pi/2]")
            expected_start = last + 1
        if expected_start != self.n_echoes_per_block + 1:
            raise ValueError("flip_schedule does not cover every echo exactly once")

    def flip_angles(self) -> np.ndarray:
        """Per-echo flip angles in radians, length n_echoes_per_block."""
        angles = np.empty(self.n_echoes_per_block)
        for first, last, angle in self.flip_schedule:
            angles[first - 1:last] = angle
        return angles


@dataclass(frozen=True)
class SignalDictionary:
    """Simulated signal evolutions, one row per T1 value."""

    t1_grid: np.ndarray
    signals: np.ndarray

    def __post_init__(self):
        t1 = np.asarray(self.t1_grid, dtype=np.float64)
        sig = np.asarray(self.signals, dtype=np.float64)
        if t1.ndim != 1 or t1.size == 0:
            raise ValueError("t1_grid must be a non-empty 1D array")
        if np.any(t1 <= 0) or np.any(np.diff(t1) <= 0):
            raise ValueError("t1_grid must be strictly increasing and positive")
        if sig.shape != (t1.size, sig.shape[1]) or sig.ndim != 2:
            raise ValueError("signals must be an N x T matrix matching t1_grid")
        object.__setattr__(self, "t1_grid", t1)
        object.__setattr__(self, "signals", sig)

    @property
    def n_echoes(self) -> int:
        return self.signals.shape[1]


@dataclass(frozen=True)
class TemporalBasis:
    """Orthonormal temporal basis (rows of ``v``) plus SVD diagnostics."""

    v: np.ndarray
    rank: int
    singular_values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=np.float64)
        if v.shape != (self.rank, v.shape[1]):
            raise ValueError("v must be rank x T")
        if self.rank > v.shape[1] // 4:
            raise ValueError("rank must satisfy R <= T/4")
        gram = v @ v.T
        if not np.allclose(gram, np.eye(self.rank), atol=1e-10):
            raise ValueError("basis rows are not orthonormal")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "singular_values",
                           np.asarray(self.singular_values, dtype=np.float64))

    @property
    def n_echoes(self) -> int:
        return self.v.shape[1]

    def captured_energy_fraction(self) -> float:
        s2 = self.singular_values ** 2
        return float(np.sum(s2[: self.rank]) / np.sum(s2))


def _simulate_batch(t1s: np.ndarray, params: SequenceParams) -> np.ndarray:
    if np.any(t1s <= 0) or not np.all(np.isfinite(t1s)):
        raise ValueError("t1 must be positive and finite")
    angles = params.flip_angles()
    sin_a = np.sin(angles)
    cos_a = np.cos(angles)
    e_tr = np.exp(-params.tr / t1s)
    e_rec = np.exp(-params.recovery_delay / t1s)
    eta = params.inversion_efficiency
    n_echoes = params.n_echoes_per_block
    mz = np.ones_like(t1s)
    signal = np.empty((t1s.size, n_echoes))
    for block in range(params.n_blocks_to_steady_state + 1):
        record = block == params.n_blocks_to_steady_state
        mz = -eta * mz
        for k in range(n_echoes):
            if record:
                signal[:, k] = mz * sin_a[k]
            mz = 1.0 + (mz * cos_a[k] - 1.0) * e_tr
        mz = 1.0 + (mz - 1.0) * e_rec
    return signal


def simulate_ir_signal(t1: float, params: SequenceParams) -> np.ndarray:
    """Steady-state-block signal of length n_echoes_per_block for one T1."""
    return _simulate_batch(np.asarray([float(t1)]), params)[0]


def simulate_ir_signals(t1s, params: SequenceParams) -> np.ndarray:
    """Vectorized variant: one row per T1 value."""
    return _simulate_batch(np.asarray(t1s, dtype=np.float64), params)


def build_dictionary(t1_grid, params: SequenceParams) -> SignalDictionary:
    t1_grid = np.asarray(t1_grid, dtype=np.float64)
    if t1_grid.ndim != 1 or t1_grid.size == 0:
        raise ValueError("t1_grid must be a non-empty 1D array")
    if np.any(np.diff(t1_grid) <= 0):
        raise ValueError("t1_grid must be strictly increasing")
    return SignalDictionary(t1_grid=t1_grid, signals=_simulate_batch(t1_grid, params))


def default_t1_grid(n_points: int = 100, t1_min: float = 0.1, t1_max: float = 5.0) -> np.ndarray:
    """Log-spaced grid covering brain-tissue T1 at 3T."""
    return np.geomspace(t1_min, t1_max, n_points)


def compute_temporal_basis(dictionary: SignalDictionary, rank: int) -> TemporalBasis:
    """Top-``rank`` right singular vectors (PCA without mean-centering)."""
    signals = dictionary.signals
    if not 1 <= rank <= min(signals.shape):
        raise ValueError("rank must lie in [1, min(N, T)]")
    _, s, vh = np.linalg.svd(signals, full_matrices=False)
    v = vh[:rank].copy()
    # Fix each row's sign so the first non-negligible entry is positive.
    for row in v:
        nz = np.flatnonzero(np.abs(row) > 1e-12)
        if nz.size and row[nz[0]] < 0:
            row *= -1.0
    return TemporalBasis(v=v, rank=rank, singular_values=s)


def project_to_subspace(signal: np.ndarray, basis: TemporalBasis) -> np.ndarray:
    """Least-squares coefficients of ``signal`` in the row span of the basis."""
    signal = np.asarray(signal)
    if signal.shape != (basis.n_echoes,):
        raise ValueError("signal length does not match the basis")
    return basis.v @ signal
