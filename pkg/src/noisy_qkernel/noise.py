"""Global depolarization of fidelity kernels and finite-shot estimation.

A depolarizing channel of rate ``p`` turns every kernel value into
``(1 - p) * K + p / D``.  Layerwise noise of rate ``p_layer`` on each of the
``2L`` layers of the kernel circuit (``U_E`` followed by ``U_E^dagger``)
composes into a single channel with ``p = 1 - (1 - p_layer)**(2L)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError
from .kernel_matrix import KernelKind, KernelMatrix

__all__ = [
    "KernelKind",
    "KernelMatrix",
    "NoiseModel",
    "ShotConfig",
    "compose_depolarization",
    "apply_depolarization",
    "depolarize_values",
    "worst_kernel",
    "sample_estimated_kernel",
    "sample_estimated_values",
]

TRAIN_STREAM = 0
QUERY_STREAM = 1


def _survival(layer_rate: float, noisy_layers_L: int) -> float:
    """``(1 - layer_rate)**(2L)`` without underflow trouble for large L."""
    if layer_rate == 1.0:
        return 0.0
    return math.exp(2 * noisy_layers_L * math.log1p(-layer_rate))


@dataclass(frozen=True)
class NoiseModel:
    layer_rate: float
    noisy_layers_L: int
    composed_rate: float = field(init=False)

    def __post_init__(self):
        rate = float(self.layer_rate)
        if not 0.0 <= rate <= 1.0:
            raise ConfigError(f"layer rate must lie in [0, 1], got {self.layer_rate!r}")
        if int(self.noisy_layers_L) != self.noisy_layers_L or self.noisy_layers_L < 1:
            raise ConfigError(f"noisy layer count must be an integer >= 1, got {self.noisy_layers_L!r}")
        object.__setattr__(self, "layer_rate", rate)
        object.__setattr__(self, "noisy_layers_L", int(self.noisy_layers_L))
        object.__setattr__(self, "composed_rate", 1.0 - _survival(rate, int(self.noisy_layers_L)))

    @property
    def survival(self) -> float:
        """Weight ``1 - p`` left on the ideal kernel."""
        return _survival(self.layer_rate, self.noisy_layers_L)


def compose_depolarization(layer_rate: float, noisy_layers_L: int) -> NoiseModel:
    return NoiseModel(layer_rate, noisy_layers_L)


@dataclass(frozen=True)
class ShotConfig:
    shots_m: int
    master_seed: int = 0

    def __post_init__(self):
        if int(self.shots_m) != self.shots_m or self.shots_m < 1:
            raise ConfigError(f"shots_m must be an integer >= 1, got {self.shots_m!r}")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ConfigError("master_seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "shots_m", int(self.shots_m))
        object.__setattr__(self, "master_seed", int(self.master_seed))


def depolarize_values(values, nm: NoiseModel, dim_D: int) -> np.ndarray:
    """Entrywise ``(1 - p) K + p / D`` on any array of ideal kernel values."""
    survival = nm.survival
    return survival * np.asarray(values, dtype=float) + (1.0 - survival) / dim_D


def apply_depolarization(K: KernelMatrix, nm: NoiseModel) -> KernelMatrix:
    if K.kind is not KernelKind.IDEAL:
        raise ConfigError(f"depolarization expects an ideal kernel, got {K.kind.value}")
    noisy = np.clip(depolarize_values(K.entries, nm, K.dim_D), 0.0, 1.0)
    return KernelMatrix(noisy, KernelKind.NOISY, K.dim_D, noise=nm)


def worst_kernel(n: int, D: int) -> KernelMatrix:
    if n < 1:
        raise ConfigError("worst kernel needs n >= 1")
    if D < 2:
        raise ConfigError("worst kernel needs D >= 2")
    return KernelMatrix(np.full((n, n), 1.0 / D), KernelKind.WORST, D)


def pair_generator(master_seed: int, stream: int, i: int, j: int) -> np.random.Generator:
    """Counter-based Philox stream owned by one kernel entry."""
    seq = np.random.SeedSequence([master_seed, stream, i, j])
    return np.random.Generator(np.random.Philox(seq))


def _bernoulli_mean(prob: float, shots: int, rng: np.random.Generator) -> float:
    # The count of successes in m Bernoulli(prob) trials is Binomial(m, prob).
    return rng.binomial(shots, prob) / shots


def _check_probabilities(values: np.ndarray) -> None:
    if values.size and (np.any(~np.isfinite(values)) or values.min() < 0.0 or values.max() > 1.0):
        raise NumericalError("kernel entries to be sampled must lie in [0, 1]")


def sample_estimated_kernel(K_noisy: KernelMatrix, sc: ShotConfig, threads: int = 1) -> KernelMatrix:
    """Shot-estimate every unordered pair (diagonal included) once and mirror it."""
    if K_noisy.kind is not KernelKind.NOISY:
        raise ConfigError(f"shot sampling expects a noisy kernel, got {K_noisy.kind.value}")
    probs = K_noisy.entries
    _check_probabilities(probs)
    n = K_noisy.n
    out = np.empty((n, n))

    def row(i: int) -> np.ndarray:
        return np.array([
            _bernoulli_mean(probs[i, j], sc.shots_m, pair_generator(sc.master_seed, TRAIN_STREAM, i, j))
            for j in range(i, n)
        ])

    if threads <= 1:
        rows = [row(i) for i in range(n)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(row, range(n)))
    for i, r in enumerate(rows):
        out[i, i:] = r
        out[i:, i] = r
    return KernelMatrix(out, KernelKind.ESTIMATED, K_noisy.dim_D, noise=K_noisy.noise, shots=sc)


def sample_estimated_values(values, sc: ShotConfig, stream: int = QUERY_STREAM) -> np.ndarray:
    """Shot-estimate a rectangular block of noisy kernel values.

    Entry ``(t, i)`` uses its own stream keyed by ``(master_seed, stream, t, i)``,
    so query rows never reuse the training Gram matrix streams.
    """
    probs = np.atleast_2d(np.asarray(values, dtype=float))
    _check_probabilities(probs)
    out = np.empty_like(probs)
    for t in range(probs.shape[0]):
        for i in range(probs.shape[1]):
            out[t, i] = _bernoulli_mean(
                probs[t, i], sc.shots_m, pair_generator(sc.master_seed, stream, t, i)
            )
    return out.reshape(np.shape(values))
