"""IQP-embedded statevectors and ideal fidelity kernels.

The embedding is ``U_Z(x) H^N U_Z(x) H^N |0...0>`` where ``U_Z(x)`` is the
diagonal unitary ``exp(i * theta(b))`` with

    theta(b) = sum_i x_i s_i(b) + sum_{i,j} x_i x_j s_i(b) s_j(b),
    s_i(b) = (-1)**b_i.

The double sum runs over the full ``N x N`` grid, so it equals ``u(b)**2``
with ``u(b) = sum_i x_i s_i(b)``.  Qubit 0 is the most significant bit of the
basis index.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ConfigError, DimensionError, NumericalError
from .kernel_matrix import KernelKind, KernelMatrix

DEFAULT_MAX_QUBITS = 20
DENSE_ORACLE_MAX_QUBITS = 6
CLAMP_TOL = 1e-12


@dataclass(frozen=True)
class CircuitConfig:
    num_qubits: int
    depth_L: int = 1
    max_qubits: int = DEFAULT_MAX_QUBITS

    def __post_init__(self):
        if int(self.num_qubits) != self.num_qubits or self.num_qubits < 1:
            raise ConfigError(f"num_qubits must be a positive integer, got {self.num_qubits!r}")
        if self.num_qubits > self.max_qubits:
            raise ConfigError(
                f"num_qubits={self.num_qubits} exceeds the hard cap of {self.max_qubits}"
            )
        if int(self.depth_L) != self.depth_L or self.depth_L < 1:
            raise ConfigError(f"depth_L must be an integer >= 1, got {self.depth_L!r}")

    @property
    def dim(self) -> int:
        return 1 << self.num_qubits


@dataclass(frozen=True, eq=False)
class EncodedState:
    amplitudes: np.ndarray
    source_point: np.ndarray

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]


@lru_cache(maxsize=None)
def pauli_z_signs(num_qubits: int) -> np.ndarray:
    """Matrix ``S[b, i] = (-1)**b_i`` with qubit 0 as the most significant bit."""
    idx = np.arange(1 << num_qubits)
    shifts = num_qubits - 1 - np.arange(num_qubits)
    bits = (idx[:, None] >> shifts) & 1
    signs = (1 - 2 * bits).astype(float)
    signs.setflags(write=False)
    return signs


def fwht(amplitudes: np.ndarray) -> np.ndarray:
    """Normalized fast Walsh-Hadamard transform, i.e. ``H^{(x)N}`` applied to a vector.

    Works along the last axis, so a batch of states of shape ``(k, 2**N)``
    is transformed row by row.
    """
    a = np.array(amplitudes, dtype=complex)
    dim = a.shape[-1]
    if dim & (dim - 1):
        raise DimensionError(f"length {dim} is not a power of two")
    lead = a.shape[:-1]
    h = 1
    while h < dim:
        a = a.reshape(*lead, -1, 2, h)
        top = a[..., 0, :] + a[..., 1, :]
        bottom = a[..., 0, :] - a[..., 1, :]
        a = np.stack([top, bottom], axis=-2)
        h *= 2
    return a.reshape(*lead, dim) / np.sqrt(dim)


def _check_point(x, cfg: CircuitConfig) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != cfg.num_qubits:
        raise DimensionError(
            f"feature vector of shape {x.shape} does not match {cfg.num_qubits} qubits"
        )
    if not np.all(np.isfinite(x)):
        raise ConfigError("feature vector contains non-finite values")
    return x


def iqp_phase(x: np.ndarray, num_qubits: int) -> np.ndarray:
    """Diagonal of ``U_Z(x)`` as a complex vector."""
    u = pauli_z_signs(num_qubits) @ x
    return np.exp(1j * (u + u * u))


def embed_iqp(x, cfg: CircuitConfig) -> EncodedState:
    x = _check_point(x, cfg)
    dim = cfg.dim
    phase = iqp_phase(x, cfg.num_qubits)
    # H^N |0...0> is the uniform superposition.
    psi = np.full(dim, 1.0 / np.sqrt(dim), dtype=complex) * phase
    psi = fwht(psi) * phase
    return EncodedState(psi, x.copy())


def embed_many(points, cfg: CircuitConfig, threads: int = 1) -> np.ndarray:
    """Embed every point once; returns a ``(len(points), 2**N)`` complex array."""
    pts = [_check_point(p, cfg) for p in points]
    if threads <= 1 or len(pts) < 2:
        rows = [embed_iqp(p, cfg).amplitudes for p in pts]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda p: embed_iqp(p, cfg).amplitudes, pts))
    if not rows:
        return np.zeros((0, cfg.dim), dtype=complex)
    return np.vstack(rows)


def _hadamard_wall(num_qubits: int) -> np.ndarray:
    h = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)
    out = np.array([[1.0]])
    for _ in range(num_qubits):
        out = np.kron(out, h)
    return out


def _z_on(qubit: int, num_qubits: int) -> np.ndarray:
    z = np.diag([1.0, -1.0])
    out = np.array([[1.0]])
    for q in range(num_qubits):
        out = np.kron(out, z if q == qubit else np.eye(2))
    return out


def dense_oracle_embed(x, cfg: CircuitConfig) -> EncodedState:
    """Slow reference embedding built from explicit ``2**N x 2**N`` matrices."""
    if cfg.num_qubits > DENSE_ORACLE_MAX_QUBITS:
        raise ConfigError(
            f"dense oracle refuses N={cfg.num_qubits} (> {DENSE_ORACLE_MAX_QUBITS})"
        )
    x = _check_point(x, cfg)
    n = cfg.num_qubits
    zs = [_z_on(i, n) for i in range(n)]
    generator = sum(x[i] * zs[i] for i in range(n))
    generator = generator + sum(
        x[i] * x[j] * (zs[i] @ zs[j]) for i in range(n) for j in range(n)
    )
    # The generator is diagonal, so exponentiating it is elementwise.
    u_z = np.diag(np.exp(1j * np.diag(generator)))
    hw = _hadamard_wall(n)
    zero = np.zeros(cfg.dim, dtype=complex)
    zero[0] = 1.0
    psi = u_z @ hw @ u_z @ hw @ zero
    return EncodedState(psi, x.copy())


def _clamp_unit(value: float) -> float:
    if value < 0.0:
        if value < -CLAMP_TOL:
            raise NumericalError(f"kernel value {value!r} below 0 beyond rounding")
        return 0.0
    if value > 1.0:
        if value > 1.0 + CLAMP_TOL:
            raise NumericalError(f"kernel value {value!r} above 1 beyond rounding")
        return 1.0
    return value


def _overlap_sq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Real/imaginary split keeps K(a, b) == K(b, a) bit for bit.
    re = a.real @ b.real.T + a.imag @ b.imag.T
    im = a.real @ b.imag.T - a.imag @ b.real.T
    return re * re + im * im


def ideal_kernel(a: EncodedState, b: EncodedState) -> float:
    if a.dim != b.dim:
        raise DimensionError(f"state dimensions differ: {a.dim} vs {b.dim}")
    return _clamp_unit(float(_overlap_sq(a.amplitudes, b.amplitudes)))


def _clamp_array(values: np.ndarray) -> np.ndarray:
    if values.size:
        lo, hi = values.min(), values.max()
        if lo < -CLAMP_TOL or hi > 1.0 + CLAMP_TOL:
            raise NumericalError(f"kernel values outside [0, 1] beyond rounding: [{lo!r}, {hi!r}]")
    return np.clip(values, 0.0, 1.0)


def gram_from_states(states: np.ndarray) -> np.ndarray:
    """Symmetric ideal Gram matrix of row states with an exact unit diagonal."""
    k = _clamp_array(_overlap_sq(states, states))
    upper = np.triu(k, 1)
    k = upper + upper.T
    np.fill_diagonal(k, 1.0)
    return k


def cross_kernel_from_states(query: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Rectangular ideal kernel block ``K[t, i] = |<q_t|r_i>|**2``."""
    if query.shape[-1] != reference.shape[-1]:
        raise DimensionError("state dimensions differ")
    return _clamp_array(_overlap_sq(query, reference))


def gram_matrix(points: Sequence, cfg: CircuitConfig, threads: int = 1) -> KernelMatrix:
    if len(points) == 0:
        raise ConfigError("gram_matrix needs at least one point")
    states = embed_many(points, cfg, threads=threads)
    return KernelMatrix(gram_from_states(states), KernelKind.IDEAL, cfg.dim)


def cross_kernel(query_points: Sequence, train_points: Sequence, cfg: CircuitConfig,
                 threads: int = 1) -> np.ndarray:
    """Ideal kernel rows ``k(x_t, x_i)`` for each query point against the training points."""
    return cross_kernel_from_states(
        embed_many(query_points, cfg, threads=threads),
        embed_many(train_points, cfg, threads=threads),
    )


# Gate helpers used by the labelling circuit.

def apply_single_qubit(psi: np.ndarray, gate: np.ndarray, qubit: int, num_qubits: int) -> np.ndarray:
    t = psi.reshape((2,) * num_qubits)
    t = np.tensordot(gate, t, axes=([1], [qubit]))
    return np.moveaxis(t, 0, qubit).reshape(-1)


def apply_cz(psi: np.ndarray, q1: int, q2: int, num_qubits: int) -> np.ndarray:
    signs = pauli_z_signs(num_qubits)
    both = (signs[:, q1] < 0) & (signs[:, q2] < 0)
    out = psi.copy()
    out[both] *= -1
    return out


def z_expectation(psi: np.ndarray, qubit: int, num_qubits: int) -> float:
    probs = np.abs(psi) ** 2
    return float(probs @ pauli_z_signs(num_qubits)[:, qubit])
