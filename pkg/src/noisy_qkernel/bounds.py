"""Closed-form concentration bounds and the fail/uninformative region map.

Every bound controls ``E|h_noisy(x) - h_worst(x)|`` where ``h_worst`` is the
constant hypothesis of the fully depolarized kernel.  The common ingredient is

    f(z) = (z + 8 sqrt(z / lam)) / (1 - z),   z = (n / lam) (1 - p) (1 + 1/D),

which has a pole at ``z = 1``; bounds with ``z >= 1`` are reported as
uninformative (``bound_value is None``).  All logarithms are natural.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConfigError, DimensionError
from .kernel_matrix import KernelMatrix
from .noise import NoiseModel, worst_kernel

EIGH_MAX_N = 2000
POWER_TOL = 1e-10
POWER_MAX_ITER = 10_000
INFORMATIVE_CEILING = 2.0


@dataclass(frozen=True)
class BoundInputs:
    n: int
    lam: float
    noise: NoiseModel
    D: int
    delta: float
    shots_m: int | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if not self.lam > 0:
            raise ConfigError("lambda must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("delta must lie in (0, 1)")
        if self.D < 2:
            raise ConfigError("D must be >= 2")
        if self.shots_m is not None and self.shots_m < 1:
            raise ConfigError("shots_m must be >= 1")

    @property
    def z(self) -> float:
        return (self.n / self.lam) * self.noise.survival * (1.0 + 1.0 / self.D)


@dataclass(frozen=True)
class BoundReport:
    name: str
    bound_value: float | None
    f_argument_z: float
    informative: bool
    term_breakdown: dict[str, float | None] = field(default_factory=dict)
    exact_m: bool = False

    @property
    def is_uninformative(self) -> bool:
        return self.bound_value is None


class Verdict(str, enum.Enum):
    FAIL_RED = "fail_red"
    UNINFORMATIVE_YELLOW = "uninformative_yellow"


@dataclass(frozen=True)
class RegionVerdict:
    threshold_layers: float
    verdict: Verdict
    regime_label: str
    # A threshold below one layer means any noisy circuit lands in the fail region.
    threshold_below_one: bool


def f_of_z(z: float, lam: float) -> float | None:
    if z < 0:
        raise ConfigError(f"f(z) needs z >= 0, got {z!r}")
    if z >= 1.0:
        return None
    return (z + 8.0 * math.sqrt(z / lam)) / (1.0 - z)


def _d_term(inp: BoundInputs) -> float:
    return 8.0 * math.sqrt(inp.D * inp.n) / (inp.D * inp.lam + inp.n)


def _delta_term(inp: BoundInputs, numerator: float) -> float:
    return 6.0 * math.sqrt(math.log(numerator / inp.delta) / (2.0 * inp.n))


def _assemble(name: str, z: float, f_term: float | None, tail: dict[str, float],
              extra: dict | None = None) -> BoundReport:
    terms: dict = {"f_term": f_term, **tail, **(extra or {})}
    if f_term is None:
        return BoundReport(name, None, z, False, terms)
    value = f_term + sum(tail.values())
    return BoundReport(name, value, z, value <= INFORMATIVE_CEILING, terms)


def theorem1_bound(inp: BoundInputs) -> BoundReport:
    z = inp.z
    return _assemble(
        "theorem1", z, f_of_z(z, inp.lam),
        {"D_term": _d_term(inp), "delta_term": _delta_term(inp, 4.0)},
    )


def corollary1_bound(inp: BoundInputs) -> BoundReport:
    """Balanced-label variant with a smaller dimension term."""
    z = inp.z
    d_term = 8.0 * math.sqrt(2.0 * inp.D * math.log(4.0 / inp.delta)) / (inp.D * inp.lam + inp.n)
    return _assemble(
        "corollary1", z, f_of_z(z, inp.lam),
        {"D_term": d_term, "delta_term": _delta_term(inp, 8.0)},
    )


def shot_term(n: int, lam: float, delta: float, shots_m: float) -> float:
    return (n / lam) * math.sqrt(math.log(4.0 * n * n / delta) / (2.0 * shots_m))


def theorem2_bound(inp: BoundInputs) -> BoundReport:
    """Finite-shot bound; holds with probability ``1 - delta - n exp(-lam^2 m / 4n)``."""
    if inp.shots_m is None:
        raise ConfigError("theorem2_bound needs shots_m")
    m = inp.shots_m
    shots = shot_term(inp.n, inp.lam, inp.delta, m)
    z = inp.z + shots
    deficit = inp.n * math.exp(-(inp.lam ** 2) * m / (4.0 * inp.n))
    success = 1.0 - inp.delta - deficit
    return _assemble(
        "theorem2", z, f_of_z(z, inp.lam),
        {"D_term": _d_term(inp), "delta_term": _delta_term(inp, 8.0)},
        {
            "shot_term": shots,
            "probability_deficit": deficit,
            "success_probability": success,
            "vacuous_probability": success <= 0.0,
        },
    )


def spectral_norm(sym: np.ndarray) -> float:
    """Largest absolute eigenvalue of a symmetric matrix."""
    sym = np.asarray(sym, dtype=float)
    n = sym.shape[0]
    if n == 0:
        return 0.0
    if n <= EIGH_MAX_N:
        return float(np.max(np.abs(np.linalg.eigvalsh(sym))))
    return power_iteration_norm(sym)


def power_iteration_norm(sym: np.ndarray, tol: float = POWER_TOL,
                         max_iter: int = POWER_MAX_ITER, seed: int = 0) -> float:
    x = np.random.default_rng(seed).standard_normal(sym.shape[0])
    x /= np.linalg.norm(x)
    estimate = 0.0
    for _ in range(max_iter):
        y = sym @ x
        norm = float(np.linalg.norm(y))
        if norm == 0.0:
            return 0.0
        x = y / norm
        if abs(norm - estimate) <= tol * max(norm, 1.0):
            return norm
        estimate = norm
    return estimate


def _resolvent_solve(K: np.ndarray, lam: float, rhs: np.ndarray) -> np.ndarray:
    A = K + lam * np.eye(K.shape[0])
    try:
        return scipy.linalg.cho_solve(scipy.linalg.cho_factor(A, lower=True), rhs)
    except np.linalg.LinAlgError:
        return scipy.linalg.solve(A, rhs, assume_a="sym")


def geometric_difference_matrix(K_a, K_b, lam: float) -> np.ndarray:
    """``(K_a + lam I)^-1 - (K_b + lam I)^-1`` via ``A^-1 (K_b - K_a) B^-1``.

    The product form avoids cancelling two nearly equal inverses when the
    kernels are close.
    """
    a = np.asarray(K_a, dtype=float)
    b = np.asarray(K_b, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"kernel shapes differ or are not square: {a.shape} vs {b.shape}")
    if not lam > 0:
        raise ConfigError("lambda must be positive")
    right = _resolvent_solve(b, lam, np.eye(b.shape[0]))
    m = _resolvent_solve(a, lam, (b - a) @ right)
    return 0.5 * (m + m.T)


def geometric_difference_exact(K_noisy, K_worst, lam: float) -> float:
    return spectral_norm(geometric_difference_matrix(K_noisy, K_worst, lam))


def geometric_difference_bound(inp: BoundInputs) -> float | None:
    z = inp.z
    if 1.0 - z <= 0.0:
        return None
    return (z / inp.lam) / (1.0 - z)


def lemma2_bound(K_noisy, inp: BoundInputs) -> BoundReport:
    """Bound from the exact geometric difference; finite for every input.

    ``f_argument_z`` is ``lam M / (1 + lam M)``, the point at which ``f``
    reproduces the first two terms, so it is always below one.
    """
    n = K_noisy.n if isinstance(K_noisy, KernelMatrix) else np.shape(K_noisy)[0]
    if n != inp.n:
        raise DimensionError(f"kernel side {n} does not match n={inp.n}")
    K_bar = worst_kernel(inp.n, inp.D)
    m_norm = geometric_difference_exact(K_noisy, K_bar, inp.lam)
    lam_m = inp.lam * m_norm
    tail = {
        "lambda_M": lam_m,
        "sqrt_term": 8.0 * math.sqrt((1.0 + lam_m) * m_norm),
        "D_term": _d_term(inp),
        "delta_term": _delta_term(inp, 4.0),
    }
    value = sum(tail.values())
    return BoundReport(
        "lemma2", value, lam_m / (1.0 + lam_m), value <= INFORMATIVE_CEILING,
        {**tail, "M_norm": m_norm}, exact_m=True,
    )


def demarcation_layers(n: float, layer_rate: float) -> float:
    """Noisy-layer count ``log n / log (1 - p_layer)^-2`` beyond which predictions collapse."""
    if n < 2:
        raise ConfigError("demarcation needs n >= 2")
    if not 0.0 < layer_rate < 1.0:
        raise ConfigError(f"demarcation undefined for layer rate {layer_rate!r}; need 0 < rate < 1")
    return math.log(n) / (-2.0 * math.log1p(-layer_rate))


def sample_regime(n: float, num_qubits: int, c: float = 2.0) -> str:
    if num_qubits > 1 and n <= c * math.log2(num_qubits):
        return "logarithmic"
    if math.log2(n) >= c * num_qubits:
        return "exponential"
    return "polynomial"


def classify_region(n: float, num_qubits: int, layer_rate: float, L: float,
                    c: float = 2.0) -> RegionVerdict:
    threshold = demarcation_layers(n, layer_rate)
    verdict = Verdict.FAIL_RED if L > threshold else Verdict.UNINFORMATIVE_YELLOW
    return RegionVerdict(threshold, verdict, sample_regime(n, num_qubits, c), threshold < 1.0)
