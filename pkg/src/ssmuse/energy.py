"""Learned image prior: a small convolutional energy and its score.

A complex 2D slice u is handled as a two-channel real image and passed
through a shape-preserving CNN psi.  The slice energy is
0.5 * ||u - psi(u)||^2; its gradient with respect to the slice (the
score) is obtained by reverse-mode differentiation through psi.  The 4D
energy of a spatial factor stacks the 2D energies of all basis slices in
two orientations and averages the orientations; because slice extraction
partitions the factor, the 4D score is the average of the two stacks of
slice scores.

Training uses multi-scale denoising score matching: the score of a
noised slice is regressed onto the injected noise across a range of
noise levels.  The training loss differentiates the score with respect
to the network parameters, so activations must be smooth (twice
continuously differentiable); piecewise-linear choices are rejected.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import TrainingError
from . import io as ssio

_ACTIVATIONS = {
    "silu": torch.nn.SiLU,
    "softplus": torch.nn.Softplus,
}

DEFAULT_LAYERS = ((2, 16, 3), (16, 32, 3), (32, 32, 3), (32, 16, 3), (16, 2, 3))


@dataclass(frozen=True)
class NetworkArch:
    """Convolutional stack description: (in_channels, out_channels, kernel)."""

    layers: tuple = DEFAULT_LAYERS
    activation: str = "silu"
    input_channels: int = 2

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}; "
                             f"smooth options: {sorted(_ACTIVATIONS)}")
        if not self.layers:
            raise ValueError("at least one layer is required")
        if self.layers[0][0] != self.input_channels:
            raise ValueError("first layer must accept the real/imag channel pair")
        if self.layers[-1][1] != self.input_channels:
            raise ValueError("last layer must emit the real/imag channel pair")
        prev_out = None
        for cin, cout, k in self.layers:
            if k < 1 or k % 2 == 0:
                raise ValueError("kernel sizes must be odd so shapes are preserved")
            if prev_out is not None and cin != prev_out:
                raise ValueError("layer channel counts must chain")
            prev_out = cout

    def n_weights(self) -> int:
        return sum(cout * cin * k * k + cout for cin, cout, k in self.layers)


@dataclass(frozen=True)
class EnergyModelParams:
    """Architecture plus a flat real parameter vector."""

    arch: NetworkArch
    weights: np.ndarray
    seed: int = 0

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64).ravel()
        if weights.size != self.arch.n_weights():
            raise ValueError("weight count does not match the architecture")
        if not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite")
        object.__setattr__(self, "weights", weights)


@dataclass(frozen=True)
class TrainConfig:
    """Denoising score-matching settings."""

    sigma_min: float = 1e-3
    sigma_max: float = 0.2
    epochs: int = 80
    learning_rate: float = 1e-4
    batch_size: int = 32
    weighting: str = "inv_sigma"

    def __post_init__(self):
        if not 0.0 <= self.sigma_min < self.sigma_max:
            raise ValueError("need 0 <= sigma_min < sigma_max")
        if self.weighting not in ("inv_sigma", "constant"):
            raise ValueError("weighting must be 'inv_sigma' or 'constant'")
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("invalid training hyperparameters")

    def weight_of(self, sigma):
        if self.weighting == "inv_sigma":
            return 1.0 / sigma
        return torch.ones_like(sigma) if torch.is_tensor(sigma) else np.ones_like(sigma)


def _build_module(arch: NetworkArch) -> torch.nn.Sequential:
    act = _ACTIVATIONS[arch.activation]
    pieces = []
    for i, (cin, cout, k) in enumerate(arch.layers):
        pieces.append(torch.nn.Conv2d(cin, cout, k, padding=k // 2, dtype=torch.float64))
        if i < len(arch.layers) - 1:
            pieces.append(act())
    return torch.nn.Sequential(*pieces)


def _set_flat_weights(module: torch.nn.Module, weights: np.ndarray) -> None:
    offset = 0
    with torch.no_grad():
        for p in module.parameters():
            n = p.numel()
            p.copy_(torch.from_numpy(weights[offset:offset + n].reshape(p.shape)))
            offset += n


def _get_flat_weights(module: torch.nn.Module) -> np.ndarray:
    return np.concatenate([p.detach().numpy().ravel() for p in module.parameters()])


def init_network(arch: NetworkArch, seed: int) -> EnergyModelParams:
    """Deterministic small-gain initialization with zero biases.

    Zero biases make psi(0) = 0 exactly; the small weight gain keeps psi a
    contraction toward zero at init, which stabilizes early training.
    """
    gen = torch.Generator().manual_seed(int(seed))
    module = _build_module(arch)
    with torch.no_grad():
        for layer in module:
            if isinstance(layer, torch.nn.Conv2d):
                fan_in = layer.in_channels * layer.kernel_size[0] * layer.kernel_size[1]
                std = 0.5 / np.sqrt(fan_in)
                layer.weight.copy_(torch.randn(layer.weight.shape, generator=gen,
                                               dtype=torch.float64) * std)
                layer.bias.zero_()
    return EnergyModelParams(arch=arch, weights=_get_flat_weights(module), seed=int(seed))


def _complex_to_channels(slices) -> torch.Tensor:
    """(B, 2, H, W) float64 tensor from a complex array or list of arrays."""
    arr = np.asarray(slices, dtype=np.complex128)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError("expected one or a batch of 2D complex slices")
    stacked = np.stack([arr.real, arr.imag], axis=1)
    return torch.from_numpy(stacked)


def _channels_to_complex(t: torch.Tensor) -> np.ndarray:
    arr = t.detach().numpy()
    return arr[:, 0] + 1j * arr[:, 1]


class EnergyModel:
    """Inference wrapper binding parameters to a torch module."""

    def __init__(self, params: EnergyModelParams):
        self.params = params
        self.module = _build_module(params.arch)
        _set_flat_weights(self.module, params.weights)
        for p in self.module.parameters():
            p.requires_grad_(False)

    def _check(self, x: torch.Tensor):
        if not torch.isfinite(x).all():
            raise ValueError("non-finite values in energy-model input")

    def psi(self, slices) -> np.ndarray:
        x = _complex_to_channels(slices)
        self._check(x)
        with torch.no_grad():
            y = self.module(x)
        out = _channels_to_complex(y)
        return out if np.asarray(slices).ndim == 3 else out[0]

    def _batch_energies(self, x: torch.Tensor) -> torch.Tensor:
        return 0.5 * ((x - self.module(x)) ** 2).sum(dim=(1, 2, 3))

    def energies(self, slices) -> np.ndarray:
        x = _complex_to_channels(slices)
        self._check(x)
        with torch.no_grad():
            e = self._batch_energies(x)
        return e.numpy()

    def energy_2d(self, slice_2d) -> float:
        return float(self.energies(np.asarray(slice_2d)[None])[0])

    def _batch_scores(self, x: torch.Tensor) -> torch.Tensor:
        x = x.detach().requires_grad_(True)
        e = self._batch_energies(x).sum()
        (g,) = torch.autograd.grad(e, x)
        return g

    def scores(self, slices) -> np.ndarray:
        x = _complex_to_channels(slices)
        self._check(x)
        return _channels_to_complex(self._batch_scores(x))

    def score_2d(self, slice_2d) -> np.ndarray:
        return self.scores(np.asarray(slice_2d)[None])[0]

    @staticmethod
    def _slice_batch(u: np.ndarray, axis: int) -> np.ndarray:
        # axis 0: y-z plane slices; axis 1: x-z plane slices.  The basis
        # index always rides along as part of the batch dimension.
        if axis == 0:
            return np.transpose(u, (0, 3, 1, 2)).reshape(-1, u.shape[1], u.shape[2])
        if axis == 1:
            return np.transpose(u, (1, 3, 0, 2)).reshape(-1, u.shape[0], u.shape[2])
        raise ValueError("orientation axis must be 0 or 1")

    @staticmethod
    def _unslice(batch: np.ndarray, shape, axis: int) -> np.ndarray:
        mx, my, mz, r = shape
        if axis == 0:
            return np.transpose(batch.reshape(mx, r, my, mz), (0, 2, 3, 1))
        return np.transpose(batch.reshape(my, r, mx, mz), (2, 0, 3, 1))

    def orientation_energy(self, u, axis: int) -> float:
        """Sum of 2D slice energies along one orientation."""
        u = np.asarray(u, dtype=np.complex128)
        return float(self.energies(self._slice_batch(u, axis)).sum())

    def orientation_score(self, u, axis: int) -> np.ndarray:
        u = np.asarray(u, dtype=np.complex128)
        g = self.scores(self._slice_batch(u, axis))
        return self._unslice(g, u.shape, axis)

    def energy_4d(self, u) -> float:
        return 0.5 * (self.orientation_energy(u, 0) + self.orientation_energy(u, 1))

    def score_4d(self, u) -> np.ndarray:
        return 0.5 * (self.orientation_score(u, 0) + self.orientation_score(u, 1))

    def denoise(self, slices) -> np.ndarray:
        """One score step: the operational denoiser u_hat = u - score(u)."""
        arr = np.asarray(slices)
        return arr - self.scores(arr) if arr.ndim == 3 else arr - self.score_2d(arr)


def psi_apply(params: EnergyModelParams, slice_2d) -> np.ndarray:
    return EnergyModel(params).psi(slice_2d)


def energy_2d(params: EnergyModelParams, slice_2d) -> float:
    return EnergyModel(params).energy_2d(slice_2d)


def score_2d(params: EnergyModelParams, slice_2d) -> np.ndarray:
    return EnergyModel(params).score_2d(slice_2d)


def energy_4d(params: EnergyModelParams, u) -> float:
    return EnergyModel(params).energy_4d(u)


def score_4d(params: EnergyModelParams, u) -> np.ndarray:
    return EnergyModel(params).score_4d(u)


def _validate_training_set(slices):
    if not len(slices):
        raise ValueError("training set is empty")
    validated = []
    for i, s in enumerate(slices):
        s = np.asarray(s, dtype=np.complex128)
        if s.ndim != 2:
            raise ValueError(f"training slice {i} is not 2D")
        if np.max(np.abs(s)) > 1.0 + 1e-9:
            raise ValueError(f"training slice {i} is not normalized to magnitude <= 1")
        validated.append(s)
    return validated


def _dsm_batch_loss(module, batch: torch.Tensor, sigma: torch.Tensor,
                    noise: torch.Tensor, cfg: TrainConfig) -> torch.Tensor:
    noisy = (batch + sigma[:, None, None, None] * noise).requires_grad_(True)
    energy = 0.5 * ((noisy - module(noisy)) ** 2).sum(dim=(1, 2, 3)).sum()
    (score,) = torch.autograd.grad(energy, noisy, create_graph=True)
    target = sigma[:, None, None, None] * noise
    per_example = ((score - target) ** 2).sum(dim=(1, 2, 3))
    return (cfg.weight_of(sigma) * per_example).mean()


def train_score_matching(params: EnergyModelParams, slices, cfg: TrainConfig,
                         seed: int = 0):
    """Multi-scale denoising score-matching training.

    Returns ``(trained_params, history)`` where ``history`` is one dict per
    epoch with keys ``epoch``, ``mean_loss`` and ``wall_seconds``.
    """
    slices = _validate_training_set(slices)
    module = _build_module(params.arch)
    _set_flat_weights(module, params.weights)
    optimizer = torch.optim.Adam(module.parameters(), lr=cfg.learning_rate,
                                 betas=(0.9, 0.999), eps=1e-8)
    rng = np.random.default_rng(seed)
    # Same-shape slices are batched together; shapes may differ across the set.
    by_shape = {}
    for i, s in enumerate(slices):
        by_shape.setdefault(s.shape, []).append(i)
    history = []
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        batches = []
        for shape in sorted(by_shape):
            idx = np.array(by_shape[shape])
            rng.shuffle(idx)
            for start in range(0, idx.size, cfg.batch_size):
                batches.append(idx[start:start + cfg.batch_size])
        total, count = 0.0, 0
        for step, batch_idx in enumerate(batches):
            batch = _complex_to_channels([slices[i] for i in batch_idx])
            n = batch.shape[0]
            # sigma in (sigma_min, sigma_max]: the weighting 1/sigma forbids 0.
            sigma = cfg.sigma_max - (cfg.sigma_max - cfg.sigma_min) * rng.random(n)
            noise = rng.standard_normal((n, 2) + slices[batch_idx[0]].shape)
            loss = _dsm_batch_loss(module, batch, torch.from_numpy(sigma),
                                   torch.from_numpy(noise), cfg)
            if not torch.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, step {step}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += float(loss.detach()) * n
            count += n
        history.append({"epoch": epoch,
                        "mean_loss": total / max(count, 1),
                        "wall_seconds": time.perf_counter() - t0})
    trained = EnergyModelParams(arch=params.arch, weights=_get_flat_weights(module),
                                seed=params.seed)
    return trained, history


def score_matching_loss(params: EnergyModelParams, slices, sigmas, noises,
                        cfg: TrainConfig):
    """Deterministic training loss for fixed noise draws.

    Returns ``(loss, grad)`` with ``grad`` the gradient with respect to the
    flat weight vector; used to cross-check the optimizer's gradients.
    """
    slices = _validate_training_set(slices)
    module = _build_module(params.arch)
    _set_flat_weights(module, params.weights)
    batch = _complex_to_channels(slices)
    sigma = torch.as_tensor(np.asarray(sigmas, dtype=np.float64))
    noise = torch.as_tensor(np.asarray(noises, dtype=np.float64))
    loss = _dsm_batch_loss(module, batch, sigma, noise, cfg)
    loss.backward()
    grad = np.concatenate([p.grad.numpy().ravel() for p in module.parameters()])
    return float(loss.detach()), grad


ARCH_FORMAT_VERSION = 1


def save_checkpoint(params: EnergyModelParams, weights_path, arch_path) -> None:
    """Weight vector in the binary array format plus a text descriptor."""
    ssio.save_array(weights_path, params.weights)
    lines = [f"ssmuse-energy-arch {ARCH_FORMAT_VERSION}",
             f"activation {params.arch.activation}",
             f"seed {params.seed}"]
    lines += [f"layer {cin} {cout} {k}" for cin, cout, k in params.arch.layers]
    with open(arch_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(weights_path, arch_path) -> EnergyModelParams:
    weights = ssio.load_array(weights_path)
    activation, seed, layers = None, 0, []
    with open(arch_path) as fh:
        header = fh.readline().split()
        if header[:1] != ["ssmuse-energy-arch"] or int(header[1]) != ARCH_FORMAT_VERSION:
            raise ValueError(f"{arch_path}: not a supported architecture descriptor")
        for line in fh:
            fields = line.split()
            if not fields:
                continue
            if fields[0] == "activation":
                activation = fields[1]
            elif fields[0] == "seed":
                seed = int(fields[1])
            elif fields[0] == "layer":
                layers.append(tuple(int(x) for x in fields[1:4]))
            else:
                raise ValueError(f"{arch_path}: unknown field {fields[0]!r}")
    arch = NetworkArch(layers=tuple(layers), activation=activation)
    return EnergyModelParams(arch=arch, weights=weights, seed=seed)
