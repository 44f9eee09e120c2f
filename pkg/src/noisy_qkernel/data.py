"""Dataset ingestion: IDX archives, PCA features, concept labels and splits."""

from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    ConfigError,
    CountMismatchError,
    DataError,
    DimensionError,
    RankError,
    TruncatedFileError,
)
from .krr import LabeledSample
from .statevector import (
    CircuitConfig,
    apply_cz,
    apply_single_qubit,
    embed_many,
    z_expectation,
)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
GZIP_MAGIC = b"\x1f\x8b"

# Fashion-MNIST label table.
FASHION_CLASSES = {
    0: "t-shirt/top", 1: "trouser", 2: "pullover", 3: "dress", 4: "coat",
    5: "sandal", 6: "shirt", 7: "sneaker", 8: "bag", 9: "ankle boot",
}
DRESS, SHIRT = 3, 6


@dataclass(frozen=True, eq=False)
class RawImageSet:
    images: np.ndarray  # (count, rows, cols) uint8
    labels: np.ndarray  # (count,) uint8

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise CountMismatchError(
                f"{self.images.shape[0]} images but {self.labels.shape[0]} labels"
            )

    def __len__(self) -> int:
        return self.labels.shape[0]


def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == GZIP_MAGIC:
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise TruncatedFileError(f"{path}: corrupt gzip stream ({exc})") from exc
    return raw


def read_idx(path, expected_magic: int) -> np.ndarray:
    """Parse one big-endian unsigned-byte IDX file (optionally gzip-wrapped)."""
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise TruncatedFileError(f"{path}: file too short for an IDX header ({len(raw)} bytes)")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise BadMagicError(f"{path}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise TruncatedFileError(f"{path}: header truncated at offset {len(raw)} (need {header})")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = int(np.prod(dims))
    if len(raw) < header + size:
        raise TruncatedFileError(
            f"{path}: payload truncated at offset {len(raw)}, expected {header + size} bytes"
        )
    if len(raw) > header + size:
        raise DataError(f"{path}: {len(raw) - header - size} trailing bytes after payload")
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=header).reshape(dims).copy()


def write_idx(path, array: np.ndarray, compress: bool = False) -> None:
    array = np.asarray(array, dtype=np.uint8)
    magic = 0x00000800 | array.ndim
    payload = struct.pack(">I", magic) + struct.pack(f">{array.ndim}I", *array.shape) + array.tobytes()
    Path(path).write_bytes(gzip.compress(payload, mtime=0) if compress else payload)


def load_idx(images_path, labels_path) -> RawImageSet:
    images = read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = read_idx(labels_path, IDX_LABELS_MAGIC)
    return RawImageSet(images, labels)


@dataclass(frozen=True, eq=False)
class BinarySet:
    images: np.ndarray
    labels: np.ndarray  # +1 / -1
    source_index: np.ndarray


def filter_binary(raw: RawImageSet, class_a: int, class_b: int) -> BinarySet:
    """Keep two classes; ``class_a`` becomes +1 and ``class_b`` becomes -1."""
    if class_a == class_b:
        raise ConfigError("filter_binary needs two distinct classes")
    keep = np.flatnonzero((raw.labels == class_a) | (raw.labels == class_b))
    if keep.size == 0:
        raise DataError(f"no images of class {class_a} or {class_b}")
    labels = np.where(raw.labels[keep] == class_a, 1.0, -1.0)
    return BinarySet(raw.images[keep], labels, keep)


@dataclass(frozen=True, eq=False)
class PcaProjector:
    mean: np.ndarray
    components: np.ndarray  # (k, d), orthonormal rows
    explained_variance: np.ndarray
    scale: np.ndarray = field(default=None)

    @property
    def n_components(self) -> int:
        return self.components.shape[0]


def _flatten(images) -> np.ndarray:
    arr = np.asarray(images, dtype=float)
    return arr.reshape(arr.shape[0], -1)


def fit_pca(train_images, n_components: int = 10) -> PcaProjector:
    """Top principal directions of the centered training matrix.

    Outputs are rescaled per component by the largest absolute training
    projection, so training features land in [-1, 1].
    """
    X = _flatten(train_images)
    if X.shape[0] < n_components:
        raise RankError(f"need at least {n_components} training images, got {X.shape[0]}")
    mean = X.mean(axis=0)
    centered = X - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    tol = s.max(initial=0.0) * max(centered.shape) * np.finfo(float).eps
    rank = int(np.sum(s > tol))
    if rank < n_components:
        raise RankError(f"training matrix has rank {rank} < {n_components}")
    comps = vt[:n_components]
    # Fix the sign ambiguity: largest-magnitude loading is positive.
    pivots = np.argmax(np.abs(comps), axis=1)
    comps = comps * np.sign(comps[np.arange(n_components), pivots])[:, None]
    variance = s[:n_components] ** 2 / max(X.shape[0] - 1, 1)
    raw_proj = centered @ comps.T
    scale = np.max(np.abs(raw_proj), axis=0)
    return PcaProjector(mean, comps, variance, scale)


def project(proj: PcaProjector, images, rescale: bool = True) -> np.ndarray:
    X = _flatten(images)
    if X.shape[1] != proj.mean.shape[0]:
        raise DimensionError(f"image size {X.shape[1]} != projector input {proj.mean.shape[0]}")
    out = (X - proj.mean) @ proj.components.T
    return out / proj.scale if rescale else out


@dataclass(frozen=True, eq=False)
class ConceptCircuit:
    """Seeded labelling circuit: layers of RY/RZ rotations and a CZ ring, measured with Z.

    ``angles[l, q] = (ry, rz)``.  The observable is Pauli Z on
    ``observable_qubit`` so its spectral norm is exactly one.
    """

    num_qubits: int
    layers: int = 3
    seed: int = 0
    observable_qubit: int = 0
    angles: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.layers < 0:
            raise ConfigError("layers must be >= 0")
        if not 0 <= self.observable_qubit < self.num_qubits:
            raise ConfigError("observable qubit out of range")
        if self.angles is None:
            rng = np.random.default_rng(self.seed)
            angles = rng.uniform(0.0, 2.0 * np.pi, size=(self.layers, self.num_qubits, 2))
            object.__setattr__(self, "angles", angles)

    @classmethod
    def identity(cls, num_qubits: int, observable_qubit: int = 0) -> "ConceptCircuit":
        return cls(num_qubits, layers=0, observable_qubit=observable_qubit)

    def ring(self) -> list[tuple[int, int]]:
        n = self.num_qubits
        if n < 2:
            return []
        if n == 2:
            return [(0, 1)]
        return [(q, (q + 1) % n) for q in range(n)]


def ry(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz(theta: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def apply_concept(concept: ConceptCircuit, psi: np.ndarray) -> np.ndarray:
    n = concept.num_qubits
    for layer in concept.angles:
        for q, (a_y, a_z) in enumerate(layer):
            psi = apply_single_qubit(psi, rz(a_z) @ ry(a_y), q, n)
        for q1, q2 in concept.ring():
            psi = apply_cz(psi, q1, q2, n)
    return psi


def synthesize_concept_labels(points, concept: ConceptCircuit, cfg: CircuitConfig) -> np.ndarray:
    """``y_i = <phi(x_i)| U^dagger Z U |phi(x_i)>`` for the concept circuit ``U``."""
    if concept.num_qubits != cfg.num_qubits:
        raise DimensionError("concept circuit and embedding use different qubit counts")
    states = embed_many(points, cfg)
    labels = np.array([
        z_expectation(apply_concept(concept, psi), concept.observable_qubit, cfg.num_qubits)
        for psi in states
    ])
    return np.clip(labels, -1.0, 1.0)


def make_synthetic(num_points: int, cfg: CircuitConfig, seed: int,
                   concept: ConceptCircuit | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Uniform features on ``[-1, 1]^N`` with +-1 labels from the sign of a concept circuit."""
    if num_points < 1:
        raise ConfigError("num_points must be >= 1")
    concept = concept or ConceptCircuit(cfg.num_qubits, seed=seed)
    rng = np.random.default_rng(seed)
    points = rng.uniform(-1.0, 1.0, size=(num_points, cfg.num_qubits))
    values = synthesize_concept_labels(points, concept, cfg)
    return points, np.where(values >= 0.0, 1.0, -1.0)


def split_indices(labels, n_train: int, n_test: int, seed: int,
                  balance: bool = False) -> tuple[np.ndarray, np.ndarray]:
    labels = np.asarray(labels)
    total = labels.shape[0]
    if n_train < 1 or n_test < 0:
        raise ConfigError("split sizes must be n_train >= 1, n_test >= 0")
    if n_train + n_test > total:
        raise DataError(f"requested {n_train}+{n_test} items but only {total} available")
    rng = np.random.default_rng(seed)
    if not balance:
        order = rng.permutation(total)
        return order[:n_train], order[n_train:n_train + n_test]
    if n_train % 2 or n_test % 2:
        raise ConfigError(
            f"balanced split needs even sizes, got n_train={n_train}, n_test={n_test}"
        )
    train, test = [], []
    for cls in (1.0, -1.0):
        members = rng.permutation(np.flatnonzero(labels == cls))
        need = (n_train + n_test) // 2
        if members.size < need:
            raise DataError(f"class {cls:+.0f} has {members.size} items, balanced split needs {need}")
        train.append(members[:n_train // 2])
        test.append(members[n_train // 2:need])
    return rng.permutation(np.concatenate(train)), rng.permutation(np.concatenate(test))


def split(sample: LabeledSample, n_train: int, n_test: int, seed: int,
          balance: bool = False) -> tuple[LabeledSample, LabeledSample]:
    tr, te = split_indices(sample.labels, n_train, n_test, seed, balance)
    return (LabeledSample(sample.points[tr], sample.labels[tr]),
            LabeledSample(sample.points[te], sample.labels[te]))


def format_float(value: float) -> str:
    return format(float(value), ".17g")


def write_feature_csv(path, ids, labels, features) -> None:
    features = np.asarray(features, dtype=float)
    header = ["id", "y"] + [f"x{k + 1}" for k in range(features.shape[1])]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for ident, y, row in zip(ids, labels, features):
            writer.writerow([int(ident), format_float(y)] + [format_float(v) for v in row])


def read_feature_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["id", "y"]:
            raise DataError(f"{path}: feature cache header must start with id,y")
        width = len(header) - 2
        if header[2:] != [f"x{k + 1}" for k in range(width)]:
            raise DataError(f"{path}: unexpected feature columns {header[2:]}")
        ids, labels, rows = [], [], []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != width + 2:
                raise DataError(f"{path}:{lineno}: expected {width + 2} fields, got {len(rec)}")
            ids.append(int(rec[0]))
            labels.append(float(rec[1]))
            rows.append([float(v) for v in rec[2:]])
    return (np.array(ids, dtype=int), np.array(labels),
            np.array(rows, dtype=float).reshape(len(rows), width))
