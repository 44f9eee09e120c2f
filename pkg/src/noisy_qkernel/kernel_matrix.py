"""Symmetric kernel matrices tagged with how they were produced."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import DimensionError, NumericalError

if TYPE_CHECKING:
    from .noise import NoiseModel, ShotConfig


class KernelKind(str, enum.Enum):
    IDEAL = "ideal"
    NOISY = "noisy"
    ESTIMATED = "estimated"
    WORST = "worst"


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """An ``n x n`` kernel matrix plus its provenance.

    ``dim_D`` is the Hilbert-space dimension ``2**N`` of the circuit that
    produced the entries; the worst kernel is ``J / dim_D``.
    """

    entries: np.ndarray
    kind: KernelKind
    dim_D: int
    noise: NoiseModel | None = None
    shots: ShotConfig | None = None

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise DimensionError(f"kernel matrix must be square, got shape {entries.shape}")
        if not np.array_equal(entries, entries.T):
            raise NumericalError("kernel matrix is not exactly symmetric")
        if entries.size and (entries.min() < 0.0 or entries.max() > 1.0):
            raise NumericalError(
                f"{self.kind.value} kernel entries outside [0, 1]: "
                f"[{entries.min()!r}, {entries.max()!r}]"
            )
        if self.dim_D < 2:
            raise DimensionError("dim_D must be at least 2")
        if KernelKind(self.kind) is KernelKind.WORST and np.any(entries != 1.0 / self.dim_D):
            raise NumericalError("worst kernel entries must all equal 1/D")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "kind", KernelKind(self.kind))

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.entries
        return self.entries.astype(dtype)
