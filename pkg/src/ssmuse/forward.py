"""Non-Cartesian Fourier forward model and subspace-projected operators.

All operators evaluate the exact non-uniform DFT

    (A x)_{k,c} = sum_m s_c(m) x(m) exp(-2 pi i k . r_m)

with voxel positions r_m normalized to [-1/2, 1/2) per axis and k-space
coordinates in cycles/FOV.  Evaluation is separable per axis; when every
sample's kz lies on the integer grid (stack-of-stars acquisitions) the z
axis collapses to an FFT, which is the same operator to machine
precision, not an approximation.

Gradients of real-valued losses of complex arrays follow the convention
grad = dL/dRe + i dL/dIm throughout the package, so finite differences
over real and imaginary components match the returned arrays directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .seqsim import TemporalBasis

GOLDEN_ANGLE = np.pi * (np.sqrt(5.0) - 1.0) / 2.0


@dataclass
class Trajectory:
    """Per-frame k-space sample coordinates, grouped as fixed-length spokes."""

    frames: list
    spokes_per_frame: int
    readout_len: int
    grid_size: int

    def __post_init__(self):
        if not self.frames:
            raise ValueError("trajectory must contain at least one frame")
        half = self.grid_size / 2.0
        expected = self.spokes_per_frame * self.readout_len
        frames = []
        for i, frame in enumerate(self.frames):
            frame = np.asarray(frame, dtype=np.float64)
            if frame.ndim != 2 or frame.shape[1] != 3:
                raise ValueError(f"frame {i} must be an (S, 3) coordinate array")
            if frame.shape[0] != expected:
                raise ValueError(
                    f"frame {i} has {frame.shape[0]} samples, expected "
                    f"spokes_per_frame * readout_len = {expected}")
            if np.any(frame < -half) or np.any(frame >= half):
                raise ValueError(f"frame {i} has coordinates outside [-K/2, K/2)")
            frames.append(frame)
        self.frames = frames

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    def subset(self, spokes_per_frame: int) -> "Trajectory":
        """Keep the first ``spokes_per_frame`` spokes of every frame.

        The retained sample set is a strict subset of this trajectory's,
        which is what retrospective undersampling requires.
        """
        if not 1 <= spokes_per_frame <= self.spokes_per_frame:
            raise ValueError("spokes_per_frame out of range")
        keep = spokes_per_frame * self.readout_len
        return Trajectory(frames=[f[:keep] for f in self.frames],
                          spokes_per_frame=spokes_per_frame,
                          readout_len=self.readout_len,
                          grid_size=self.grid_size)

    def stack(self) -> np.ndarray:
        """(n_frames, S, 3) array for serialization."""
        return np.stack(self.frames)


@dataclass
class CoilMaps:
    """Complex receive sensitivities, shape (Mx, My, Mz, C)."""

    maps: np.ndarray

    def __post_init__(self):
        maps = np.asarray(self.maps, dtype=np.complex128)
        if maps.ndim != 4:
            raise ValueError("coil maps must have shape (Mx, My, Mz, C)")
        self.maps = maps

    @property
    def shape(self):
        return self.maps.shape[:3]

    @property
    def n_coils(self) -> int:
        return self.maps.shape[3]

    def rss(self) -> np.ndarray:
        return np.sqrt(np.sum(np.abs(self.maps) ** 2, axis=-1))


@dataclass
class KSpaceData:
    """Measured samples, shape (n_frames, samples_per_frame, C)."""

    samples: np.ndarray
    noise_sigma: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.complex128)
        if samples.ndim != 3:
            raise ValueError("k-space samples must have shape (frames, samples, coils)")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        self.samples = samples


def make_radial_trajectory(n_frames: int, spokes_per_frame: int, readout_len: int,
                           grid_size: int, ordering_seed: int,
                           n_kz: int = 1) -> Trajectory:
    """Golden-angle radial spokes distributed across frames in acquisition order.

    Spoke ``j`` overall receives in-plane angle ``j * golden_angle mod pi``;
    spokes are dealt to frames one full pass at a time, so a trajectory with
    fewer spokes per frame (same seed) is a prefix subset of a denser one.
    With ``n_kz > 1`` each spoke is assigned a kz plane from a seeded stream
    of shuffled plane permutations (stack-of-stars with pseudo-random plane
    ordering); plane coverage stays balanced by construction.
    """
    if min(n_frames, spokes_per_frame, readout_len, grid_size, n_kz) < 1:
        raise ValueError("all trajectory counts must be >= 1")
    if n_kz > grid_size:
        raise ValueError("n_kz may not exceed grid_size")
    n_spokes = n_frames * spokes_per_frame
    radii = (np.arange(readout_len) - readout_len // 2) / readout_len * grid_size
    rng = np.random.default_rng(ordering_seed)
    if n_kz > 1:
        blocks = [rng.permutation(n_kz) for _ in range(-(-n_spokes // n_kz))]
        planes = np.concatenate(blocks)[:n_spokes] - n_kz // 2
    else:
        planes = np.zeros(n_spokes, dtype=np.int64)
    frames = []
    for tau in range(n_frames):
        spokes = []
        for pass_idx in range(spokes_per_frame):
            j = pass_idx * n_frames + tau
            angle = (j * GOLDEN_ANGLE) % np.pi
            spoke = np.empty((readout_len, 3))
            spoke[:, 0] = radii * np.cos(angle)
            spoke[:, 1] = radii * np.sin(angle)
            spoke[:, 2] = planes[j]
            spokes.append(spoke)
        frames.append(np.concatenate(spokes, axis=0))
    return Trajectory(frames=frames, spokes_per_frame=spokes_per_frame,
                      readout_len=readout_len, grid_size=grid_size)


def make_coil_maps(shape, n_coils: int = 4) -> CoilMaps:
    """Smooth synthetic sensitivities: offset Gaussians times phase ramps.

    The Gaussian magnitudes are strictly positive everywhere, so the
    root-sum-of-squares never vanishes and coil-combined normal operators
    stay invertible on any support.
    """
    if n_coils < 1:
        raise ValueError("n_coils must be >= 1")
    grids = np.meshgrid(*[_axis_coords(n) * 2.0 for n in shape], indexing="ij")
    maps = np.empty(tuple(shape) + (n_coils,), dtype=np.complex128)
    for c in range(n_coils):
        phi = 2.0 * np.pi * c / n_coils
        center = np.array([0.55 * np.cos(phi), 0.55 * np.sin(phi), 0.0])
        dist2 = sum((g - mu) ** 2 for g, mu in zip(grids, center))
        mag = 0.25 + np.exp(-dist2 / (2 * 0.55 ** 2))
        ramp = np.pi * (np.cos(phi) * grids[0] + np.sin(phi) * grids[1]) + phi
        maps[..., c] = mag * np.exp(1j * ramp)
    return CoilMaps(maps=maps)


def _axis_coords(n: int) -> np.ndarray:
    # Voxel positions in [-1/2, 1/2); the origin voxel sits at index n // 2.
    return (np.arange(n) - n // 2) / n


def _integer_kz(k: np.ndarray, mz: int) -> bool:
    kz = k[:, 2]
    return bool(np.all(np.abs(kz - np.round(kz)) < 1e-12)
                and np.all(np.abs(kz) <= mz / 2))


def _fft_z(volume: np.ndarray) -> np.ndarray:
    return np.fft.fft(volume, axis=2)


def _plane_phases(k: np.ndarray, axes) -> tuple:
    """exp(-2 pi i k . r) factors for the in-plane axes."""
    ex = np.exp(-2j * np.pi * np.outer(k[:, 0], axes[0]))
    ey = np.exp(-2j * np.pi * np.outer(k[:, 1], axes[1]))
    return ex, ey


def _nudft3(volume: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Exact single-channel type-2 NUDFT of a 3D volume at coordinates ``k``."""
    shape = volume.shape
    axes = [_axis_coords(n) for n in shape]
    if _integer_kz(k, shape[2]):
        q = np.round(k[:, 2]).astype(np.int64)
        volz = _fft_z(volume)
        out = np.empty(k.shape[0], dtype=np.complex128)
        for qv in np.unique(q):
            sel = np.flatnonzero(q == qv)
            ex, ey = _plane_phases(k[sel], axes)
            t = ex @ volz[:, :, qv % shape[2]]
            out[sel] = np.einsum("sy,sy->s", ey, t)
        out *= np.exp(2j * np.pi * np.round(k[:, 2]) * (shape[2] // 2) / shape[2])
        return out
    ex, ey = _plane_phases(k, axes)
    ez = np.exp(-2j * np.pi * np.outer(k[:, 2], axes[2]))
    t = np.tensordot(ex, volume, axes=(1, 0))
    t = np.einsum("sy,syz->sz", ey, t)
    return np.einsum("sz,sz->s", ez, t)


def _nudft3_adjoint(samples: np.ndarray, k: np.ndarray, shape) -> np.ndarray:
    """Exact conjugate transpose of :func:`_nudft3`."""
    axes = [_axis_coords(n) for n in shape]
    if _integer_kz(k, shape[2]):
        q = np.round(k[:, 2]).astype(np.int64)
        bins = np.zeros(shape, dtype=np.complex128)
        for qv in np.unique(q):
            sel = np.flatnonzero(q == qv)
            ex, ey = _plane_phases(k[sel], axes)
            w = samples[sel] * np.exp(-2j * np.pi * qv * (shape[2] // 2) / shape[2])
            bins[:, :, qv % shape[2]] += ex.conj().T @ (w[:, None] * ey.conj())
        return np.fft.ifft(bins, axis=2) * shape[2]
    ex, ey = _plane_phases(k, axes)
    ez = np.exp(-2j * np.pi * np.outer(k[:, 2], axes[2]))
    t = ez.conj() * samples[:, None]
    t = np.einsum("sy,sz->syz", ey.conj(), t)
    return np.tensordot(ex.conj(), t, axes=(0, 0))


def _check_frame(frame) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 2 or frame.shape[1] != 3:
        raise ValueError("a trajectory frame must be an (S, 3) array")
    return frame


def nudft_forward(image: np.ndarray, frame, coils: CoilMaps) -> np.ndarray:
    """Multichannel forward NUDFT of one frame: returns (S, C) samples."""
    image = np.asarray(image, dtype=np.complex128)
    frame = _check_frame(frame)
    if image.shape != coils.shape:
        raise ValueError("image shape does not match coil maps")
    out = np.empty((frame.shape[0], coils.n_coils), dtype=np.complex128)
    for c in range(coils.n_coils):
        out[:, c] = _nudft3(coils.maps[..., c] * image, frame)
    return out


def nudft_adjoint(samples: np.ndarray, frame, coils: CoilMaps, shape) -> np.ndarray:
    """Adjoint of :func:`nudft_forward`: coil-combined 3D image."""
    samples = np.asarray(samples, dtype=np.complex128)
    frame = _check_frame(frame)
    shape = tuple(shape)
    if samples.shape != (frame.shape[0], coils.n_coils):
        raise ValueError("samples shape does not match frame/coils")
    if shape != coils.shape:
        raise ValueError("requested shape does not match coil maps")
    out = np.zeros(shape, dtype=np.complex128)
    for c in range(coils.n_coils):
        out += np.conj(coils.maps[..., c]) * _nudft3_adjoint(samples[:, c], frame, shape)
    return out


def _check_subspace_args(u, v: TemporalBasis, traj: Trajectory, coils: CoilMaps):
    u = np.asarray(u, dtype=np.complex128)
    if u.ndim != 4:
        raise ValueError("spatial factor must have shape (Mx, My, Mz, R)")
    if u.shape[:3] != coils.shape:
        raise ValueError("spatial factor shape does not match coil maps")
    if u.shape[3] != v.rank:
        raise ValueError("spatial factor rank does not match the temporal basis")
    if v.n_echoes != traj.n_frames:
        raise ValueError("temporal basis length does not match trajectory frames")
    return u


def _all_frames_integer_kz(traj: Trajectory, mz: int) -> bool:
    return all(_integer_kz(frame, mz) for frame in traj.frames)


def _frame_plan(traj: Trajectory, shape):
    """Cached per-frame phase factors for the Cartesian-kz fast path.

    Returns one list per frame of (kz index, sample selector, ex, ey,
    center phase) tuples, or None when any frame has non-integer kz.  The
    phases depend only on the trajectory and grid, so they are computed
    once and reused across every operator application (CG runs apply the
    same operator hundreds of times).
    """
    cache = getattr(traj, "_plan_cache", None)
    if cache is None:
        cache = {}
        traj._plan_cache = cache
    key = tuple(shape)
    if key in cache:
        return cache[key]
    if not _all_frames_integer_kz(traj, shape[2]):
        cache[key] = None
        return None
    axes = [_axis_coords(n) for n in shape]
    plan = []
    for frame in traj.frames:
        q = np.round(frame[:, 2]).astype(np.int64)
        groups = []
        for qv in np.unique(q):
            sel = np.flatnonzero(q == qv)
            ex, ey = _plane_phases(frame[sel], axes)
            phase = np.exp(2j * np.pi * qv * (shape[2] // 2) / shape[2])
            groups.append((int(qv), sel, ex, ey, phase))
        plan.append(groups)
    cache[key] = plan
    return plan


def subspace_forward(u, v: TemporalBasis, traj: Trajectory, coils: CoilMaps) -> np.ndarray:
    """Frame-wise forward model of the factorized series: (T, S, C) samples."""
    u = _check_subspace_args(u, v, traj, coils)
    shape = coils.shape
    mx, my, mz = shape
    n_c = coils.n_coils
    n_samples = traj.frames[0].shape[0]
    out = np.empty((traj.n_frames, n_samples, n_c), dtype=np.complex128)
    plan = _frame_plan(traj, shape)
    if plan is not None:
        # z is Cartesian: FFT the coil-weighted basis volumes once; each
        # spoke then only touches a single kz plane of the mixed image.
        basis_z = np.fft.fft(coils.maps[..., :, None] * u[..., None, :], axis=2)
        for tau, groups in enumerate(plan):
            vt = v.v[:, tau]
            for qv, sel, ex, ey, phase in groups:
                plane = basis_z[:, :, qv % mz] @ vt          # (Mx, My, C)
                t = (ex @ plane.reshape(mx, my * n_c)).reshape(-1, my, n_c)
                out[tau, sel] = np.einsum("sy,syc->sc", ey, t) * phase
        return out
    for tau, frame in enumerate(traj.frames):
        image = np.tensordot(u, v.v[:, tau], axes=(3, 0))
        out[tau] = nudft_forward(image, frame, coils)
    return out


def _series_adjoint_times_vh(samples: np.ndarray, v: TemporalBasis, traj: Trajectory,
                             coils: CoilMaps) -> np.ndarray:
    """sum_tau v[r, tau] * A_tau^H(samples_tau), arranged as a spatial factor."""
    shape = coils.shape
    mx, my, mz = shape
    n_c = coils.n_coils
    plan = _frame_plan(traj, shape)
    if plan is not None:
        bins = np.zeros(shape + (n_c, v.rank), dtype=np.complex128)
        for tau, groups in enumerate(plan):
            vt = v.v[:, tau]
            for qv, sel, ex, ey, phase in groups:
                w = samples[tau, sel, :] * np.conj(phase)    # (S, C)
                t = ey.conj()[:, :, None] * w[:, None, :]    # (S, My, C)
                plane = (ex.conj().T @ t.reshape(-1, my * n_c)).reshape(mx, my, n_c)
                bins[:, :, qv % mz] += plane[..., None] * vt
        vol = np.fft.ifft(bins, axis=2) * mz
        return np.einsum("xyzc,xyzcr->xyzr", np.conj(coils.maps), vol)
    out = np.zeros(shape + (v.rank,), dtype=np.complex128)
    for tau, frame in enumerate(traj.frames):
        image = nudft_adjoint(samples[tau], frame, coils, shape)
        out += image[..., None] * v.v[:, tau]
    return out


def subspace_gradient(u, v: TemporalBasis, traj: Trajectory, coils: CoilMaps,
                      b) -> np.ndarray:
    """Gradient of 0.5 * ||A(UV) - b||^2 with respect to the spatial factor.

    ``b`` may be a :class:`KSpaceData`, a raw (T, S, C) array, or None/0 for
    the pure normal operator.
    """
    u = _check_subspace_args(u, v, traj, coils)
    residual = subspace_forward(u, v, traj, coils)
    if b is not None and not np.isscalar(b):
        data = b.samples if isinstance(b, KSpaceData) else np.asarray(b, dtype=np.complex128)
        if data.shape != residual.shape:
            raise ValueError("measurement shape does not match the forward model")
        residual = residual - data
    return _series_adjoint_times_vh(residual, v, traj, coils)


def normal_operator(u, v: TemporalBasis, traj: Trajectory, coils: CoilMaps) -> np.ndarray:
    """Hermitian PSD map u -> A^H A (UV) V^H."""
    return subspace_gradient(u, v, traj, coils, None)


def adjoint_times_vh(b, v: TemporalBasis, traj: Trajectory, coils: CoilMaps) -> np.ndarray:
    """A^H(b) V^H, the right-hand side of the normal equations."""
    data = b.samples if isinstance(b, KSpaceData) else np.asarray(b, dtype=np.complex128)
    return _series_adjoint_times_vh(data, v, traj, coils)


def estimate_normal_operator_norm(v: TemporalBasis, traj: Trajectory, coils: CoilMaps,
                                  n_iters: int = 20, seed: int = 0) -> float:
    """Spectral norm of the normal operator via power iteration."""
    rng = np.random.default_rng(seed)
    shape = coils.shape + (v.rank,)
    x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(n_iters):
        y = normal_operator(x, v, traj, coils)
        lam = float(np.real(np.vdot(x, y)))
        norm = np.linalg.norm(y)
        if not np.isfinite(norm) or norm == 0.0:
            raise ValueError("power iteration failed on a degenerate operator")
        x = y / norm
    return lam
