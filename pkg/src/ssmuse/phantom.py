"""Synthetic phantoms, k-space synthesis, and training-slice extraction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .forward import CoilMaps, KSpaceData, Trajectory, nudft_forward
from .seqsim import SequenceParams, TemporalBasis, simulate_ir_signals


@dataclass(frozen=True)
class Tissue:
    """One ellipsoidal compartment in normalized [-1, 1) coordinates."""

    t1: float
    proton_density: float
    center: tuple = (0.0, 0.0, 0.0)
    semiaxes: tuple = (0.85, 0.85, 0.85)

    def __post_init__(self):
        if self.t1 <= 0:
            raise ValueError("tissue T1 must be positive")
        if self.proton_density < 0:
            raise ValueError("proton density must be non-negative")
        if any(a <= 0 for a in self.semiaxes):
            raise ValueError("degenerate ellipsoid: semiaxes must be positive")


DEFAULT_TISSUES = (
    Tissue(t1=0.8, proton_density=0.8),
    Tissue(t1=1.4, proton_density=1.0, center=(-0.25, 0.2, 0.0),
           semiaxes=(0.35, 0.3, 0.4)),
    Tissue(t1=4.0, proton_density=1.0, center=(0.3, -0.2, 0.1),
           semiaxes=(0.25, 0.3, 0.25)),
)


@dataclass
class Phantom:
    t1_map: np.ndarray
    proton_density: np.ndarray
    support_mask: np.ndarray
    label_map: np.ndarray
    tissues: tuple

    @property
    def shape(self):
        return self.t1_map.shape


def make_phantom(size, tissues=DEFAULT_TISSUES) -> Phantom:
    """Nested-ellipsoid phantom; later tissues overwrite earlier ones."""
    if np.isscalar(size):
        size = (int(size),) * 3
    size = tuple(int(n) for n in size)
    if any(n < 8 for n in size):
        raise ValueError("phantom must be at least 8 voxels per axis")
    if not tissues:
        raise ValueError("at least one tissue is required")
    grids = np.meshgrid(*[2.0 * (np.arange(n) - n // 2) / n for n in size],
                        indexing="ij")
    t1 = np.zeros(size)
    pd = np.zeros(size)
    label = np.zeros(size, dtype=np.int64)      # 0 = background
    for idx, tissue in enumerate(tissues, start=1):
        inside = sum(((g - c) / a) ** 2 for g, c, a in
                     zip(grids, tissue.center, tissue.semiaxes)) <= 1.0
        t1[inside] = tissue.t1
        pd[inside] = tissue.proton_density
        label[inside] = idx
    mask = label > 0
    return Phantom(t1_map=t1, proton_density=pd, support_mask=mask,
                   label_map=label, tissues=tuple(tissues))


@dataclass
class GroundTruth:
    """Materializable reference series for a synthetic acquisition."""

    phantom: Phantom
    signal_table: np.ndarray      # (n_tissues + 1, T); row 0 is background

    def contrast(self, tau: int) -> np.ndarray:
        return self.phantom.proton_density * self.signal_table[
            self.phantom.label_map, tau]

    def spatial_factor(self, basis: TemporalBasis) -> np.ndarray:
        """Per-voxel least-squares subspace coefficients of the true series."""
        coeff_table = self.signal_table @ basis.v.T
        return (self.phantom.proton_density[..., None]
                * coeff_table[self.phantom.label_map]).astype(np.complex128)

    @property
    def n_frames(self) -> int:
        return self.signal_table.shape[1]


@dataclass
class AcquisitionDataset:
    """Everything a reconstruction needs about one synthetic scan."""

    trajectory: Trajectory
    coils: CoilMaps
    kspace: KSpaceData
    sequence: SequenceParams


def synthesize_kspace(phantom: Phantom, seq: SequenceParams, traj: Trajectory,
                      coils: CoilMaps, noise_sigma: float, seed: int):
    """Noisy multichannel measurements plus the retained ground truth.

    Noise is i.i.d. complex Gaussian with standard deviation
    ``noise_sigma`` per real and imaginary component.
    """
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    if phantom.shape != coils.shape:
        raise ValueError("phantom and coil maps disagree on the grid")
    t1_values = np.array([t.t1 for t in phantom.tissues])
    table = np.zeros((len(phantom.tissues) + 1, traj.n_frames))
    signals = simulate_ir_signals(t1_values, seq)
    if signals.shape[1] != traj.n_frames:
        raise ValueError("sequence echo count does not match trajectory frames")
    table[1:] = signals
    truth = GroundTruth(phantom=phantom, signal_table=table)
    n_samples = traj.frames[0].shape[0]
    samples = np.empty((traj.n_frames, n_samples, coils.n_coils),
                       dtype=np.complex128)
    for tau, frame in enumerate(traj.frames):
        samples[tau] = nudft_forward(truth.contrast(tau), frame, coils)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        samples = samples + noise_sigma * (
            rng.standard_normal(samples.shape)
            + 1j * rng.standard_normal(samples.shape))
    return KSpaceData(samples=samples, noise_sigma=noise_sigma), truth


def extract_training_slices(factors, snr_floor: float):
    """Prior-training slices from all three axes of each spatial factor.

    Slices whose L2 norm falls below ``snr_floor`` times the largest slice
    norm of their source volume are discarded; survivors are normalized to
    unit peak magnitude.  Returns ``(slices, scales)`` with one recorded
    normalization scale per retained slice.
    """
    if not factors:
        raise ValueError("no spatial factors supplied")
    slices = []
    for u in factors:
        u = np.asarray(u, dtype=np.complex128)
        if u.ndim != 4:
            raise ValueError("spatial factors must have shape (Mx, My, Mz, R)")
        candidates = []
        for r in range(u.shape[3]):
            vol = u[..., r]
            candidates.extend(vol[i] for i in range(u.shape[0]))
            candidates.extend(vol[:, j] for j in range(u.shape[1]))
            candidates.extend(vol[:, :, k] for k in range(u.shape[2]))
        norms = np.array([np.linalg.norm(s) for s in candidates])
        cutoff = snr_floor * norms.max()
        slices.extend(s for s, n in zip(candidates, norms) if n >= cutoff and n > 0)
    if not slices:
        raise ValueError("SNR filtering removed every slice")
    scales = [float(np.max(np.abs(s))) for s in slices]
    normalized = [s / scale for s, scale in zip(slices, scales)]
    return normalized, scales


def random_training_tissues(rng: np.random.Generator, t1_range=(0.3, 4.5)):
    """Randomized nested ellipsoids for prior-training phantoms."""
    tissues = [Tissue(t1=float(rng.uniform(*t1_range)),
                      proton_density=float(rng.uniform(0.6, 1.0)))]
    for _ in range(int(rng.integers(2, 5))):
        center = rng.uniform(-0.4, 0.4, size=3)
        semiaxes = rng.uniform(0.12, 0.45, size=3)
        tissues.append(Tissue(t1=float(rng.uniform(*t1_range)),
                              proton_density=float(rng.uniform(0.5, 1.2)),
                              center=tuple(center), semiaxes=tuple(semiaxes)))
    return tuple(tissues)


def make_training_slices(n_phantoms: int, size, seq: SequenceParams,
                         basis: TemporalBasis, snr_floor: float, seed: int,
                         max_slices=None):
    """Ground-truth subspace factors of random phantoms, sliced for training."""
    rng = np.random.default_rng(seed)
    factors = []
    for _ in range(n_phantoms):
        ph = make_phantom(size, random_training_tissues(rng))
        t1_values = np.array([t.t1 for t in ph.tissues])
        table = np.zeros((len(ph.tissues) + 1, basis.n_echoes))
        table[1:] = simulate_ir_signals(t1_values, seq)
        truth = GroundTruth(phantom=ph, signal_table=table)
        factors.append(truth.spatial_factor(basis))
    slices, _ = extract_training_slices(factors, snr_floor)
    if max_slices is not None and len(slices) > max_slices:
        keep = rng.permutation(len(slices))[:max_slices]
        slices = [slices[i] for i in sorted(keep)]
    return slices
