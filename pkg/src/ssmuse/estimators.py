"""Scikit-learn style estimator wrappers around the functional core.

The wrappers give the prior and the reconstructors a uniform
``get_params`` / ``set_params`` / ``fit`` surface so they compose with
sklearn tooling (cloning, grid search over hyperparameters).  X in
``fit(X)`` is an :class:`~ssmuse.phantom.AcquisitionDataset` for the
reconstructors and a list of complex 2D slices for the prior.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .energy import (EnergyModel, NetworkArch, TrainConfig, init_network,
                     train_score_matching)
from .phantom import AcquisitionDataset
from .quant import synthesize_contrast
from .seqsim import TemporalBasis
from .solver import (ReconConfig, baseline_quadratic, baseline_wavelet,
                     map_reconstruct)


def _check_fitted(estimator, attribute):
    if not hasattr(estimator, attribute):
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call fit first")


def _check_dataset(X) -> AcquisitionDataset:
    if not isinstance(X, AcquisitionDataset):
        raise TypeError("X must be an AcquisitionDataset")
    return X


class EnergyModelEstimator(BaseEstimator):
    """Denoising-score-matching prior with a transform that denoises."""

    def __init__(self, arch=None, sigma_min=1e-3, sigma_max=0.2, epochs=80,
                 learning_rate=1e-4, batch_size=32, weighting="inv_sigma",
                 init_seed=0, train_seed=0):
        self.arch = arch
        self.sigma_min = sigma_min
        self.sigma_max = sigma_max
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.weighting = weighting
        self.init_seed = init_seed
        self.train_seed = train_seed

    def _train_config(self) -> TrainConfig:
        return TrainConfig(sigma_min=self.sigma_min, sigma_max=self.sigma_max,
                           epochs=self.epochs, learning_rate=self.learning_rate,
                           batch_size=self.batch_size, weighting=self.weighting)

    def fit(self, X, y=None):
        """X is a sequence of complex 2D arrays with unit peak magnitude."""
        arch = self.arch if self.arch is not None else NetworkArch()
        params = init_network(arch, self.init_seed)
        self.params_, self.history_ = train_score_matching(
            params, X, self._train_config(), seed=self.train_seed)
        self.model_ = EnergyModel(self.params_)
        return self

    def transform(self, X):
        """One score step toward the learned manifold for each slice."""
        _check_fitted(self, "model_")
        return self.model_.denoise(X)

    def score_samples(self, X):
        """Negative prior energy per slice (higher means more plausible)."""
        _check_fitted(self, "model_")
        return -self.model_.energies(X)


class _SubspaceReconstructorBase(BaseEstimator):
    """Shared fit/predict plumbing; subclasses implement _solve."""

    def fit(self, X, y=None, basis: TemporalBasis = None):
        data = _check_dataset(X)
        if basis is None:
            raise ValueError("a TemporalBasis must be supplied via basis=")
        self.basis_ = basis
        self.u_ = self._solve(data, basis)
        return self

    def predict(self, tau):
        """Synthesized contrast image(s) at the requested frame index(es)."""
        _check_fitted(self, "u_")
        if np.isscalar(tau):
            return synthesize_contrast(self.u_, self.basis_, int(tau))
        return np.stack([synthesize_contrast(self.u_, self.basis_, int(t))
                         for t in tau])


class SSMuSEReconstructor(_SubspaceReconstructorBase):
    """Variable-splitting reconstruction with a trained energy prior."""

    def __init__(self, energy_params=None, lam=2e-4, outer_iters=30,
                 prox_steps=2, prox_step_size=0.1, cg_max_iters=30,
                 cg_residual_tol=0.05):
        self.energy_params = energy_params
        self.lam = lam
        self.outer_iters = outer_iters
        self.prox_steps = prox_steps
        self.prox_step_size = prox_step_size
        self.cg_max_iters = cg_max_iters
        self.cg_residual_tol = cg_residual_tol

    def _solve(self, data: AcquisitionDataset, basis: TemporalBasis):
        if self.energy_params is None:
            raise ValueError("energy_params must hold trained prior weights")
        cfg = ReconConfig(lam=self.lam, outer_iters=self.outer_iters,
                          prox_steps=self.prox_steps,
                          prox_step_size=self.prox_step_size,
                          cg_max_iters=self.cg_max_iters,
                          cg_residual_tol=self.cg_residual_tol)
        u, self.trace_ = map_reconstruct(data.kspace, basis, data.trajectory,
                                         data.coils, self.energy_params, cfg)
        return u


class QuadraticSubspaceReconstructor(_SubspaceReconstructorBase):
    """Ridge-penalized least-squares baseline."""

    def __init__(self, mu=1e-3, cg_max_iters=100, cg_residual_tol=1e-6,
                 normalize=True):
        self.mu = mu
        self.cg_max_iters = cg_max_iters
        self.cg_residual_tol = cg_residual_tol
        self.normalize = normalize

    def _solve(self, data: AcquisitionDataset, basis: TemporalBasis):
        from .forward import estimate_normal_operator_norm
        mu = self.mu
        if self.normalize:
            mu *= estimate_normal_operator_norm(basis, data.trajectory,
                                                data.coils)
        return baseline_quadratic(data.kspace, basis, data.trajectory,
                                  data.coils, mu,
                                  cg_max_iters=self.cg_max_iters,
                                  cg_residual_tol=self.cg_residual_tol)


class WaveletSubspaceReconstructor(_SubspaceReconstructorBase):
    """Orthonormal-wavelet L1 baseline solved by proximal gradient."""

    def __init__(self, gamma_w=2e-4, iters=40, momentum=False, normalize=True):
        self.gamma_w = gamma_w
        self.iters = iters
        self.momentum = momentum
        self.normalize = normalize

    def _solve(self, data: AcquisitionDataset, basis: TemporalBasis):
        from .forward import estimate_normal_operator_norm
        gamma = self.gamma_w
        if self.normalize:
            gamma *= estimate_normal_operator_norm(basis, data.trajectory,
                                                   data.coils)
        return baseline_wavelet(data.kspace, basis, data.trajectory,
                                data.coils, gamma, self.iters,
                                momentum=self.momentum)
