"""Kernel ridge regression in dual form with clipped hypotheses.

For a training kernel ``K`` and labels ``Y`` the regularized least-squares
minimizer has dual coefficients ``alpha = (K + lam I)^{-1} Y`` and the
hypothesis is ``h(x) = clip(sum_i k(x, x_i) alpha_i, -1, 1)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
import numpy as np
import scipy.linalg

from .errors import ConfigError, DimensionError, SingularSystemError
from .kernel_matrix import KernelKind, KernelMatrix
from .noise import NoiseModel, ShotConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LabeledSample:
    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        labels = np.asarray(self.labels, dtype=float).reshape(-1)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        if points.shape[0] != labels.shape[0]:
            raise DimensionError(f"{points.shape[0]} points but {labels.shape[0]} labels")
        if labels.shape[0] < 1:
            raise ConfigError("a labeled sample needs at least one point")
        if np.any(np.abs(labels) > 1.0):
            raise ConfigError("labels must lie in [-1, 1]")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.labels.shape[0]


@dataclass(frozen=True, eq=False)
class RidgeModel:
    dual_coefficients: np.ndarray
    lam: float
    train_kernel_kind: KernelKind
    train_points: np.ndarray | None = None
    noise: NoiseModel | None = None
    shots: ShotConfig | None = None
    # True when K + lam I was not numerically positive definite (estimated kernels only).
    spd_fallback: bool = False
    warnings: tuple[str, ...] = field(default_factory=tuple)

    @property
    def n(self) -> int:
        return self.dual_coefficients.shape[0]


@dataclass(frozen=True)
class WorstHypothesis:
    constant_value: float


def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if not lam > 0.0:
        raise ConfigError(f"lambda must be positive, got {lam!r}")
    return lam


def _kernel_entries(K) -> tuple[np.ndarray, KernelKind | None]:
    if isinstance(K, KernelMatrix):
        return K.entries, K.kind
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise DimensionError(f"kernel must be square, got shape {K.shape}")
    return K, None


def _regularized_solve(K: np.ndarray, rhs: np.ndarray, lam: float,
                       allow_fallback: bool) -> tuple[np.ndarray, bool]:
    A = K + lam * np.eye(K.shape[0])
    try:
        factor = scipy.linalg.cho_factor(A, lower=True, check_finite=True)
        pivots = np.diag(factor[0]) ** 2
        # a rounding-level pivot means the system is singular, not SPD
        if pivots.min() <= A.shape[0] * np.finfo(float).eps * pivots.max():
            raise np.linalg.LinAlgError("vanishing Cholesky pivot")
        return scipy.linalg.cho_solve(factor, rhs), False
    except np.linalg.LinAlgError:
        eig = np.linalg.eigvalsh(A)
        min_eig = float(eig[0])
        if not allow_fallback:
            raise SingularSystemError(
                min_eig,
                f"K + lambda I is not positive definite (minimum eigenvalue {min_eig:.3e}) "
                "although the kernel should be PSD",
            )
        smallest = float(np.min(np.abs(eig)))
        if smallest <= A.shape[0] * np.finfo(float).eps * float(np.max(np.abs(eig))):
            raise SingularSystemError(min_eig)
        return scipy.linalg.solve(A, rhs, assume_a="sym"), True


def fit(K_train, sample: LabeledSample, lam: float, train_points=None) -> RidgeModel:
    lam = _check_lambda(lam)
    K, kind = _kernel_entries(K_train)
    if K.shape[0] != sample.n:
        raise DimensionError(f"kernel side {K.shape[0]} does not match {sample.n} labels")
    estimated = kind is None or kind is KernelKind.ESTIMATED
    alpha, fallback = _regularized_solve(K, sample.labels, lam, allow_fallback=estimated)
    warnings: tuple[str, ...] = ()
    if fallback:
        warnings = ("non_spd_system",)
        log.warning("K + lambda I indefinite; used symmetric indefinite solve")
    return RidgeModel(
        dual_coefficients=alpha,
        lam=lam,
        train_kernel_kind=kind if kind is not None else KernelKind.ESTIMATED,
        train_points=sample.points if train_points is None else np.asarray(train_points),
        noise=getattr(K_train, "noise", None),
        shots=getattr(K_train, "shots", None),
        spd_fallback=fallback,
        warnings=warnings,
    )


def predict_many(model: RidgeModel, k_rows, kind: KernelKind | None = None) -> np.ndarray:
    """Clipped hypothesis values for a block of kernel rows, one row per query."""
    if kind is not None and KernelKind(kind) is not model.train_kernel_kind:
        raise ConfigError(
            f"kernel rows of kind {KernelKind(kind).value} cannot feed a model "
            f"trained on {model.train_kernel_kind.value}"
        )
    rows = np.asarray(k_rows, dtype=float)
    if rows.ndim == 1:
        rows = rows.reshape(1, -1)
    if rows.shape[-1] != model.n:
        raise DimensionError(f"kernel row length {rows.shape[-1]} != {model.n} training points")
    return np.clip(rows @ model.dual_coefficients, -1.0, 1.0)


def predict(model: RidgeModel, k_row, kind: KernelKind | None = None) -> float:
    k_row = np.asarray(k_row, dtype=float)
    if k_row.ndim != 1:
        raise DimensionError("predict takes a single kernel row; use predict_many for blocks")
    return float(predict_many(model, k_row, kind)[0])


def worst_hypothesis(sample: LabeledSample, lam: float, D: int) -> WorstHypothesis:
    lam = _check_lambda(lam)
    return WorstHypothesis(float(np.sum(sample.labels)) / (D * lam + sample.n))


def empirical_difference(hA_values, hB_values) -> float:
    """Mean absolute difference; ``hB_values`` may be a scalar such as the worst hypothesis."""
    a = np.asarray(hA_values, dtype=float).reshape(-1)
    b = np.asarray(hB_values, dtype=float)
    b = np.full_like(a, float(b)) if b.ndim == 0 else b.reshape(-1)
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(np.mean(np.abs(a - b)))


def sign_labels(values) -> np.ndarray:
    """``sign`` with ``sign(0) = +1``."""
    return np.where(np.asarray(values, dtype=float) >= 0.0, 1.0, -1.0)


def misclassification_rate(hyp_values, labels) -> float:
    h = np.asarray(hyp_values, dtype=float).reshape(-1)
    y = np.asarray(labels, dtype=float).reshape(-1)
    if h.shape != y.shape:
        raise DimensionError(f"length mismatch: {h.shape[0]} vs {y.shape[0]}")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ConfigError("classification labels must be -1 or +1")
    return float(np.mean(sign_labels(h) != y))


def ridge_objective(K, labels, alpha, lam: float) -> float:
    """Training objective ``sum (h(x_i) - y_i)^2 + lam <w, w>`` for ``w = sum alpha_i phi(x_i)``.

    Uses the unclipped linear hypothesis, where ``h(x_i) = (K alpha)_i`` and
    ``<w, w> = alpha^T K alpha``.
    """
    K, _ = _kernel_entries(K)
    alpha = np.asarray(alpha, dtype=float)
    resid = K @ alpha - np.asarray(labels, dtype=float)
    return float(resid @ resid + lam * alpha @ K @ alpha)


def omega_star_norm(K, sample: LabeledSample, lam: float) -> float:
    """Feature-space norm of the optimal weight, ``sqrt(Y^T (K+lam I)^-1 K (K+lam I)^-1 Y)``."""
    lam = _check_lambda(lam)
    entries, kind = _kernel_entries(K)
    if entries.shape[0] != sample.n:
        raise DimensionError("kernel and sample sizes differ")
    estimated = kind is None or kind is KernelKind.ESTIMATED
    alpha, _ = _regularized_solve(entries, sample.labels, lam, allow_fallback=estimated)
    value = float(alpha @ entries @ alpha)
    return float(np.sqrt(max(value, 0.0)))


def training_values(model: RidgeModel, K_train) -> np.ndarray:
    K, _ = _kernel_entries(K_train)
    return predict_many(model, K)
