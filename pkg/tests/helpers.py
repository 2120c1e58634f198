"""Shared constructions for the test suite."""

import numpy as np

from ssmuse.config import desk_sequence_params
from ssmuse.forward import Trajectory, make_coil_maps, subspace_forward
from ssmuse.phantom import GroundTruth, Tissue, make_phantom
from ssmuse.seqsim import (build_dictionary, compute_temporal_basis,
                           simulate_ir_signals)


def full_cartesian_trajectory(size, n_frames):
    """Every frame samples the complete integer k-space grid.

    The per-frame normal operator is then size^3 times the coil Gram
    matrix, which is strictly positive definite everywhere, so subspace
    reconstructions on this trajectory are exactly invertible.
    """
    ax = np.arange(size, dtype=np.float64) - size // 2
    kx, ky, kz = np.meshgrid(ax, ax, ax, indexing="ij")
    frame = np.stack([kx.ravel(), ky.ravel(), kz.ravel()], axis=1)
    return Trajectory(frames=[frame.copy() for _ in range(n_frames)],
                      spokes_per_frame=size * size, readout_len=size,
                      grid_size=size)


def grid_aligned_setup(size=8, n_frames=16, rank=2, n_t1=24):
    """Phantom whose tissue T1 values sit exactly on the fitting grid."""
    seq = desk_sequence_params(n_frames)
    t1_grid = np.geomspace(0.1, 5.0, n_t1)
    dictionary = build_dictionary(t1_grid, seq)
    basis = compute_temporal_basis(dictionary, rank)
    i0, i1, i2 = n_t1 // 3, 2 * n_t1 // 3, n_t1 - 3
    tissues = (Tissue(t1=float(t1_grid[i0]), proton_density=0.9),
               Tissue(t1=float(t1_grid[i1]), proton_density=1.0,
                      center=(-0.25, 0.2, 0.0), semiaxes=(0.35, 0.3, 0.4)),
               Tissue(t1=float(t1_grid[i2]), proton_density=1.0,
                      center=(0.3, -0.2, 0.1), semiaxes=(0.25, 0.3, 0.25)))
    phantom = make_phantom(size, tissues)
    table = np.zeros((len(tissues) + 1, n_frames))
    table[1:] = simulate_ir_signals([t.t1 for t in tissues], seq)
    truth = GroundTruth(phantom=phantom, signal_table=table)
    return seq, dictionary, basis, phantom, truth


def invertible_instance(size=8, n_frames=16, rank=2, n_coils=2):
    """Fully sampled Cartesian subspace problem with a known ground truth."""
    seq, dictionary, basis, phantom, truth = grid_aligned_setup(
        size, n_frames, rank)
    traj = full_cartesian_trajectory(size, n_frames)
    coils = make_coil_maps((size,) * 3, n_coils)
    u_true = truth.spatial_factor(basis)
    b = subspace_forward(u_true, basis, traj, coils)
    return dictionary, basis, phantom, traj, coils, u_true, b


def random_complex(rng, shape, scale=1.0):
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def disc_slices(rng, count, n=16):
    """Piecewise-constant unit-peak complex slices for prior training."""
    g = np.linspace(-1.0, 1.0, n)
    xg, yg = np.meshgrid(g, g, indexing="ij")
    slices = []
    for _ in range(count):
        img = np.zeros((n, n), dtype=np.complex128)
        for _ in range(3):
            cx, cy = rng.uniform(-0.5, 0.5, size=2)
            radius = rng.uniform(0.2, 0.6)
            img[(xg - cx) ** 2 + (yg - cy) ** 2 < radius ** 2] += rng.uniform(0.2, 0.5)
        peak = np.max(np.abs(img))
        slices.append(img / peak if peak > 0 else img + 0.5)
    return slices
