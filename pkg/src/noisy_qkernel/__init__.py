"""Quantum fidelity kernels under global depolarizing noise and finite shots."""

from .bounds import (
    BoundInputs,
    BoundReport,
    RegionVerdict,
    classify_region,
    corollary1_bound,
    demarcation_layers,
    f_of_z,
    geometric_difference_bound,
    geometric_difference_exact,
    lemma2_bound,
    theorem1_bound,
    theorem2_bound,
)
from .kernel_matrix import KernelKind, KernelMatrix
from .krr import (
    LabeledSample,
    RidgeModel,
    WorstHypothesis,
    empirical_difference,
    fit,
    misclassification_rate,
    omega_star_norm,
    predict,
    predict_many,
    worst_hypothesis,
)
from .noise import (
    NoiseModel,
    ShotConfig,
    apply_depolarization,
    compose_depolarization,
    sample_estimated_kernel,
    worst_kernel,
)
from .statevector import (
    CircuitConfig,
    EncodedState,
    dense_oracle_embed,
    embed_iqp,
    gram_matrix,
    ideal_kernel,
)

__all__ = [
    "BoundInputs",
    "BoundReport",
    "CircuitConfig",
    "EncodedState",
    "KernelKind",
    "KernelMatrix",
    "LabeledSample",
    "NoiseModel",
    "RegionVerdict",
    "RidgeModel",
    "ShotConfig",
    "WorstHypothesis",
    "apply_depolarization",
    "classify_region",
    "compose_depolarization",
    "corollary1_bound",
    "demarcation_layers",
    "dense_oracle_embed",
    "embed_iqp",
    "empirical_difference",
    "f_of_z",
    "fit",
    "geometric_difference_bound",
    "geometric_difference_exact",
    "gram_matrix",
    "ideal_kernel",
    "lemma2_bound",
    "misclassification_rate",
    "omega_star_norm",
    "predict",
    "predict_many",
    "sample_estimated_kernel",
    "theorem1_bound",
    "theorem2_bound",
    "worst_hypothesis",
    "worst_kernel",
]

__version__ = "0.1.0"
