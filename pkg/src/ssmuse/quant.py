"""Contrast synthesis, dictionary-matching T1 fitting, and image metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .seqsim import SignalDictionary, TemporalBasis

PSNR_CAP_DB = 300.0


@dataclass
class T1Map:
    """Per-voxel grid match: T1 (s), complex amplitude, relative residual."""

    t1: np.ndarray
    amplitude: np.ndarray
    match_residual: np.ndarray


def synthesize_contrast(u, v: TemporalBasis, tau: int) -> np.ndarray:
    """Image at frame ``tau``: sum_r u_r * v[r, tau]."""
    u = np.asarray(u, dtype=np.complex128)
    if not 0 <= tau < v.n_echoes:
        raise ValueError("frame index out of range")
    if u.shape[3] != v.rank:
        raise ValueError("spatial factor rank does not match basis")
    return np.tensordot(u, v.v[:, tau], axes=(3, 0))


def fit_t1_dictionary(u, v: TemporalBasis, dictionary: SignalDictionary,
                      mask) -> T1Map:
    """One-pass T1 fit by matched filtering in the subspace domain.

    Each dictionary atom is projected onto the basis once; every masked
    voxel picks the atom with the largest normalized complex correlation.
    Matching on the R coefficients is equivalent to matching the
    synthesized signals up to the subspace approximation error, and a
    T/R-fold cheaper.  Voxels with zero amplitude are reported at the grid
    minimum with amplitude 0 by convention.
    """
    u = np.asarray(u, dtype=np.complex128)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != u.shape[:3]:
        raise ValueError("mask shape does not match the spatial factor")
    if not mask.any():
        raise ValueError("mask is empty")
    if dictionary.n_echoes != v.n_echoes:
        raise ValueError("dictionary echo count does not match the basis")
    atoms = dictionary.signals @ v.v.T                     # (N, R)
    atom_norms = np.linalg.norm(atoms, axis=1)
    if np.any(atom_norms == 0):
        raise ValueError("dictionary contains an atom orthogonal to the basis")
    voxels = u[mask]                                       # (P, R)
    inner = voxels @ atoms.T                               # complex (P, N)
    voxel_norms = np.linalg.norm(voxels, axis=1)
    corr = np.abs(inner) / np.maximum(np.outer(voxel_norms, atom_norms),
                                      np.finfo(np.float64).tiny)
    best = np.argmax(corr, axis=1)                         # argmax ties -> smaller index
    rows = np.arange(voxels.shape[0])
    amplitude = inner[rows, best] / atom_norms[best] ** 2
    residual_vec = voxels - amplitude[:, None] * atoms[best]
    with np.errstate(invalid="ignore", divide="ignore"):
        residual = np.where(voxel_norms > 0,
                            np.linalg.norm(residual_vec, axis=1)
                            / np.maximum(voxel_norms, np.finfo(np.float64).tiny),
                            0.0)
    t1_fit = dictionary.t1_grid[best]
    zero = voxel_norms == 0
    t1_fit = np.where(zero, dictionary.t1_grid[0], t1_fit)
    amplitude = np.where(zero, 0.0 + 0.0j, amplitude)

    t1_map = np.zeros(mask.shape)
    amp_map = np.zeros(mask.shape, dtype=np.complex128)
    res_map = np.zeros(mask.shape)
    t1_map[mask] = t1_fit
    amp_map[mask] = amplitude
    res_map[mask] = residual
    return T1Map(t1=t1_map, amplitude=amp_map, match_residual=res_map)


def psnr(estimate, reference, mask) -> float:
    """Peak signal-to-noise ratio in dB over the masked voxels."""
    estimate = np.asarray(estimate, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if estimate.shape != reference.shape or mask.shape != reference.shape:
        raise ValueError("shape mismatch")
    if not mask.any():
        raise ValueError("mask is empty")
    ref = reference[mask]
    peak = float(np.max(np.abs(ref)))
    if peak == 0:
        raise ValueError("reference is identically zero on the mask")
    rmse = float(np.sqrt(np.mean((estimate[mask] - ref) ** 2)))
    if rmse == 0:
        return PSNR_CAP_DB
    return min(20.0 * np.log10(peak / rmse), PSNR_CAP_DB)


def error_map(estimate, reference, mask) -> np.ndarray:
    """Voxelwise absolute difference, zero outside the mask."""
    estimate = np.asarray(estimate, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if estimate.shape != reference.shape:
        raise ValueError("shape mismatch")
    out = np.abs(estimate - reference)
    out[~np.asarray(mask, dtype=bool)] = 0.0
    return out
