"""Subspace-constrained multi-contrast MRI reconstruction with a learned
multi-scale energy prior, plus classical baselines and a synthetic
evaluation harness."""

from .config import ExperimentConfig, desk_sequence_params, load_config
from .energy import (EnergyModel, EnergyModelParams, NetworkArch, TrainConfig,
                     init_network, load_checkpoint, save_checkpoint,
                     train_score_matching)
from .errors import ConfigError, SolverError, TrainingError
from .estimators import (EnergyModelEstimator, QuadraticSubspaceReconstructor,
                         SSMuSEReconstructor, WaveletSubspaceReconstructor)
from .experiment import build_assets, run_experiment
from .forward import (CoilMaps, KSpaceData, Trajectory, make_coil_maps,
                      make_radial_trajectory, nudft_adjoint, nudft_forward,
                      subspace_forward, subspace_gradient)
from .io import load_array, save_array
from .phantom import (AcquisitionDataset, Phantom, Tissue, make_phantom,
                      synthesize_kspace)
from .quant import T1Map, fit_t1_dictionary, psnr, synthesize_contrast
from .seqsim import (SequenceParams, SignalDictionary, TemporalBasis,
                     build_dictionary, compute_temporal_basis,
                     simulate_ir_signal, simulate_ir_signals)
from .solver import (ReconConfig, SolverTrace, baseline_quadratic,
                     baseline_wavelet, map_reconstruct)

__version__ = "0.1.0"

__all__ = [
    "AcquisitionDataset", "CoilMaps", "ConfigError", "EnergyModel",
    "EnergyModelEstimator", "EnergyModelParams", "ExperimentConfig",
    "KSpaceData", "NetworkArch", "Phantom", "QuadraticSubspaceReconstructor",
    "ReconConfig", "SSMuSEReconstructor", "SequenceParams", "SignalDictionary",
    "SolverError", "SolverTrace", "T1Map", "TemporalBasis", "Tissue",
    "TrainConfig", "TrainingError", "Trajectory",
    "WaveletSubspaceReconstructor", "baseline_quadratic", "baseline_wavelet",
    "build_assets", "build_dictionary", "compute_temporal_basis",
    "desk_sequence_params", "fit_t1_dictionary", "init_network", "load_array",
    "load_checkpoint", "load_config", "make_coil_maps", "make_phantom",
    "make_radial_trajectory", "map_reconstruct", "nudft_adjoint",
    "nudft_forward", "psnr", "run_experiment", "save_array", "save_checkpoint",
    "simulate_ir_signal", "simulate_ir_signals", "subspace_forward",
    "subspace_gradient", "synthesize_contrast", "synthesize_kspace",
    "train_score_matching",
]
