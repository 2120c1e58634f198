"""Experiment configuration: defaults plus a plain-text INI loader.

The config file uses bracketed section headers, ``key = value`` lines and
``#`` comments.  Every key has a default, so an empty (or absent) file
describes a complete desk-scale experiment.  Unknown sections or keys are
rejected so typos fail loudly.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace

import numpy as np

from .energy import DEFAULT_LAYERS, NetworkArch, TrainConfig
from .errors import ConfigError
from .phantom import DEFAULT_TISSUES, Tissue
from .seqsim import SequenceParams, default_flip_schedule
from .solver import ReconConfig

METHODS = ("ssmuse", "quadratic", "wavelet")


def desk_sequence_params(n_echoes: int = 96) -> SequenceParams:
    """Scaled-down echo train keeping the 4/8 degree two-segment structure."""
    switch = int(round(n_echoes * 304 / 385))
    return SequenceParams(
        n_echoes_per_block=n_echoes,
        flip_schedule=default_flip_schedule(n_echoes, switch_after=switch))


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to run one end-to-end synthetic experiment."""

    # phantom
    phantom_size: int = 32
    tissues: tuple = DEFAULT_TISSUES
    # dictionary / basis
    t1_grid_min: float = 0.1
    t1_grid_max: float = 5.0
    t1_grid_points: int = 100
    rank: int = 4
    # sequence and sampling
    sequence: SequenceParams = field(default_factory=desk_sequence_params)
    spokes_per_frame: int = 4
    accel_spokes_per_frame: int = 2
    readout_len: int = 64
    trajectory_seed: int = 7
    n_coils: int = 4
    noise_sigma: float = 0.01
    noise_seed: int = 11
    # reconstruction
    method: str = "ssmuse"
    recon: ReconConfig = field(default_factory=ReconConfig)
    mu_quadratic: float = 1e-3
    gamma_wavelet: float = 2e-4
    wavelet_iters: int = 40
    # energy-model training
    # The desk-scale training set is tiny, so a higher learning rate and
    # more epochs are needed to reach a useful score field quickly.
    train: TrainConfig = field(default_factory=lambda: TrainConfig(
        epochs=30, learning_rate=3e-3))
    arch: NetworkArch = field(default_factory=NetworkArch)
    init_seed: int = 5
    train_seed: int = 3
    n_train_phantoms: int = 6
    max_train_slices: int = 384
    snr_floor: float = 0.05
    # evaluation
    eval_frames: tuple = (1, 48, 95)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        if self.sequence.n_echoes_per_block < max(self.eval_frames) + 1:
            raise ConfigError("eval_frames exceed the echo train length")
        if not 1 <= self.accel_spokes_per_frame <= self.spokes_per_frame:
            raise ConfigError("accel_spokes_per_frame must not exceed spokes_per_frame")
        if self.rank > self.sequence.n_echoes_per_block // 4:
            raise ConfigError("rank must satisfy R <= T/4")

    def t1_grid(self) -> np.ndarray:
        return np.geomspace(self.t1_grid_min, self.t1_grid_max, self.t1_grid_points)

    def with_seed_offset(self, offset: int) -> "ExperimentConfig":
        """Shift every named seed; used by the CLI's global --seed flag."""
        return replace(self,
                       trajectory_seed=self.trajectory_seed + offset,
                       noise_seed=self.noise_seed + offset,
                       train_seed=self.train_seed + offset,
                       init_seed=self.init_seed + offset)


def _parse_tissues(text: str) -> tuple:
    tissues = []
    for i, chunk in enumerate(text.split(";")):
        values = [float(x) for x in chunk.replace(",", " ").split()]
        if len(values) == 2:
            base = DEFAULT_TISSUES[i % len(DEFAULT_TISSUES)]
            tissues.append(Tissue(t1=values[0], proton_density=values[1],
                                  center=base.center, semiaxes=base.semiaxes))
        elif len(values) == 8:
            tissues.append(Tissue(t1=values[0], proton_density=values[1],
                                  center=tuple(values[2:5]),
                                  semiaxes=tuple(values[5:8])))
        else:
            raise ConfigError("each tissue needs 't1 pd' or 't1 pd cx cy cz ax ay az'")
    return tuple(tissues)


def _parse_flip_schedule(text: str) -> tuple:
    segments = []
    for chunk in text.split(","):
        span, _, degrees = chunk.partition(":")
        first, _, last = span.partition("-")
        segments.append((int(first), int(last), np.deg2rad(float(degrees))))
    return tuple(segments)


def _parse_beta_schedule(text: str) -> tuple:
    return tuple((int(idx), float(beta))
                 for idx, _, beta in (chunk.partition(":") for chunk in text.split(",")))


def _parse_int_tuple(text: str) -> tuple:
    return tuple(int(x) for x in text.replace(",", " ").split())


_SCHEMA = {
    "phantom": {"size": int, "tissues": _parse_tissues},
    "sequence": {"n_echoes": int, "tr": float, "flip_schedule": _parse_flip_schedule,
                 "recovery_delay": float, "inversion_efficiency": float,
                 "n_blocks_to_steady_state": int},
    "basis": {"t1_min": float, "t1_max": float, "n_t1": int, "rank": int},
    "trajectory": {"spokes_per_frame": int, "accel_spokes_per_frame": int,
                   "readout_len": int, "seed": int},
    "acquisition": {"noise_sigma": float, "noise_seed": int, "n_coils": int},
    "recon": {"method": str, "lam": float, "beta_schedule": _parse_beta_schedule,
              "outer_iters": int, "prox_steps": int, "prox_step_size": float,
              "cg_max_iters": int, "cg_residual_tol": float,
              "mu_quadratic": float, "gamma_wavelet": float, "wavelet_iters": int},
    "train": {"sigma_min": float, "sigma_max": float, "epochs": int,
              "learning_rate": float, "batch_size": int, "weighting": str,
              "seed": int, "init_seed": int, "n_phantoms": int,
              "max_slices": int, "snr_floor": float,
              "channels": _parse_int_tuple, "kernel_size": int, "activation": str},
    "eval": {"frames": _parse_int_tuple},
}


def _build_arch(values: dict, base: NetworkArch) -> NetworkArch:
    channels = values.get("channels")
    kernel = values.get("kernel_size", 3)
    activation = values.get("activation", base.activation)
    if channels is None:
        layers = base.layers if kernel == 3 else tuple(
            (cin, cout, kernel) for cin, cout, _ in DEFAULT_LAYERS)
    else:
        layers = tuple((channels[i], channels[i + 1], kernel)
                       for i in range(len(channels) - 1))
    return NetworkArch(layers=layers, activation=activation)


def load_config(path=None) -> ExperimentConfig:
    """Parse an INI config file; ``None`` yields pure defaults."""
    if path is None:
        return ExperimentConfig()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file: {exc}") from exc

    values = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        values[section] = {}
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key '{key}' in section [{section}]")
            try:
                values[section][key] = _SCHEMA[section][key](raw)
            except (ValueError, ConfigError) as exc:
                raise ConfigError(f"bad value for [{section}] {key}: {exc}") from exc

    defaults = ExperimentConfig()
    try:
        seq_vals = values.get("sequence", {})
        n_echoes = seq_vals.get("n_echoes", defaults.sequence.n_echoes_per_block)
        base_seq = desk_sequence_params(n_echoes)
        sequence = SequenceParams(
            n_echoes_per_block=n_echoes,
            tr=seq_vals.get("tr", base_seq.tr),
            flip_schedule=seq_vals.get("flip_schedule", base_seq.flip_schedule),
            recovery_delay=seq_vals.get("recovery_delay", base_seq.recovery_delay),
            inversion_efficiency=seq_vals.get("inversion_efficiency",
                                              base_seq.inversion_efficiency),
            n_blocks_to_steady_state=seq_vals.get("n_blocks_to_steady_state",
                                                  base_seq.n_blocks_to_steady_state))
        rec = values.get("recon", {})
        recon = ReconConfig(
            lam=rec.get("lam", defaults.recon.lam),
            beta_schedule=rec.get("beta_schedule", defaults.recon.beta_schedule),
            outer_iters=rec.get("outer_iters", defaults.recon.outer_iters),
            prox_steps=rec.get("prox_steps", defaults.recon.prox_steps),
            prox_step_size=rec.get("prox_step_size", defaults.recon.prox_step_size),
            cg_max_iters=rec.get("cg_max_iters", defaults.recon.cg_max_iters),
            cg_residual_tol=rec.get("cg_residual_tol", defaults.recon.cg_residual_tol))
        tr_vals = values.get("train", {})
        train = TrainConfig(
            sigma_min=tr_vals.get("sigma_min", defaults.train.sigma_min),
            sigma_max=tr_vals.get("sigma_max", defaults.train.sigma_max),
            epochs=tr_vals.get("epochs", defaults.train.epochs),
            learning_rate=tr_vals.get("learning_rate", defaults.train.learning_rate),
            batch_size=tr_vals.get("batch_size", defaults.train.batch_size),
            weighting=tr_vals.get("weighting", defaults.train.weighting))
        arch = _build_arch(tr_vals, defaults.arch)
        ph = values.get("phantom", {})
        basis = values.get("basis", {})
        traj = values.get("trajectory", {})
        acq = values.get("acquisition", {})
        ev = values.get("eval", {})
        default_frames = defaults.eval_frames
        if n_echoes != defaults.sequence.n_echoes_per_block:
            default_frames = (1, n_echoes // 2, n_echoes - 1)
        return ExperimentConfig(
            phantom_size=ph.get("size", defaults.phantom_size),
            tissues=ph.get("tissues", defaults.tissues),
            t1_grid_min=basis.get("t1_min", defaults.t1_grid_min),
            t1_grid_max=basis.get("t1_max", defaults.t1_grid_max),
            t1_grid_points=basis.get("n_t1", defaults.t1_grid_points),
            rank=basis.get("rank", defaults.rank),
            sequence=sequence,
            spokes_per_frame=traj.get("spokes_per_frame", defaults.spokes_per_frame),
            accel_spokes_per_frame=traj.get("accel_spokes_per_frame",
                                            defaults.accel_spokes_per_frame),
            readout_len=traj.get("readout_len", defaults.readout_len),
            trajectory_seed=traj.get("seed", defaults.trajectory_seed),
            n_coils=acq.get("n_coils", defaults.n_coils),
            noise_sigma=acq.get("noise_sigma", defaults.noise_sigma),
            noise_seed=acq.get("noise_seed", defaults.noise_seed),
            method=rec.get("method", defaults.method),
            recon=recon,
            mu_quadratic=rec.get("mu_quadratic", defaults.mu_quadratic),
            gamma_wavelet=rec.get("gamma_wavelet", defaults.gamma_wavelet),
            wavelet_iters=rec.get("wavelet_iters", defaults.wavelet_iters),
            train=train,
            arch=arch,
            init_seed=tr_vals.get("init_seed", defaults.init_seed),
            train_seed=tr_vals.get("seed", defaults.train_seed),
            n_train_phantoms=tr_vals.get("n_phantoms", defaults.n_train_phantoms),
            max_train_slices=tr_vals.get("max_slices", defaults.max_train_slices),
            snr_floor=tr_vals.get("snr_floor", defaults.snr_floor),
            eval_frames=ev.get("frames", default_frames))
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
