import gzip
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisy_qkernel.data import (
    IDX_IMAGES_MAGIC,
    IDX_LABELS_MAGIC,
    ConceptCircuit,
    RawImageSet,
    filter_binary,
    fit_pca,
    load_idx,
    make_synthetic,
    project,
    read_feature_csv,
    read_idx,
    ry,
    rz,
    split,
    split_indices,
    synthesize_concept_labels,
    write_feature_csv,
    write_idx,
)
from noisy_qkernel.errors import (
    BadMagicError,
    ConfigError,
    CountMismatchError,
    DataError,
    DimensionError,
    RankError,
    TruncatedFileError,
)
from noisy_qkernel.krr import LabeledSample
from noisy_qkernel.statevector import CircuitConfig, dense_oracle_embed


def idx_bytes(magic, dims, payload):
    return struct.pack(">I", magic) + struct.pack(f">{len(dims)}I", *dims) + bytes(payload)


@pytest.fixture
def tiny_idx(tmp_path):
    """Two 2x3 images with labels 3 and 6, written by hand."""
    img = tmp_path / "img.idx"
    lab = tmp_path / "lab.idx"
    pixels = list(range(6)) + list(range(100, 106))
    img.write_bytes(idx_bytes(IDX_IMAGES_MAGIC, (2, 2, 3), pixels))
    lab.write_bytes(idx_bytes(IDX_LABELS_MAGIC, (2,), [3, 6]))
    return img, lab


class TestIdx:
    def test_reads_hand_written_fixture(self, tiny_idx):
        raw = load_idx(*tiny_idx)
        assert raw.images.shape == (2, 2, 3)
        assert raw.images.dtype == np.uint8
        assert raw.images[1, 1, 2] == 105
        assert raw.labels.tolist() == [3, 6]

    @pytest.mark.parametrize("compress", [False, True])
    def test_round_trip(self, tmp_path, rng, compress):
        arr = rng.integers(0, 256, size=(5, 4, 3), dtype=np.uint8)
        path = tmp_path / "a.idx"
        write_idx(path, arr, compress=compress)
        assert (path.read_bytes()[:2] == b"\x1f\x8b") == compress
        np.testing.assert_array_equal(read_idx(path, IDX_IMAGES_MAGIC), arr)

    def test_gzip_detected_regardless_of_name(self, tmp_path, tiny_idx):
        path = tmp_path / "plain-name.idx"
        path.write_bytes(gzip.compress(tiny_idx[1].read_bytes()))
        assert read_idx(path, IDX_LABELS_MAGIC).tolist() == [3, 6]

    def test_bad_magic(self, tiny_idx):
        with pytest.raises(BadMagicError):
            read_idx(tiny_idx[0], IDX_LABELS_MAGIC)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "t.idx"
        path.write_bytes(idx_bytes(IDX_IMAGES_MAGIC, (2, 2, 3), range(11)))
        with pytest.raises(TruncatedFileError, match="offset 27"):
            read_idx(path, IDX_IMAGES_MAGIC)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "h.idx"
        path.write_bytes(struct.pack(">I", IDX_IMAGES_MAGIC) + b"\x00\x00")
        with pytest.raises(TruncatedFileError):
            read_idx(path, IDX_IMAGES_MAGIC)

    def test_trailing_bytes(self, tmp_path):
        path = tmp_path / "x.idx"
        path.write_bytes(idx_bytes(IDX_LABELS_MAGIC, (2,), [1, 2, 3]))
        with pytest.raises(DataError):
            read_idx(path, IDX_LABELS_MAGIC)

    def test_count_mismatch(self, tmp_path, tiny_idx):
        lab = tmp_path / "lab3.idx"
        lab.write_bytes(idx_bytes(IDX_LABELS_MAGIC, (3,), [3, 6, 6]))
        with pytest.raises(CountMismatchError):
            load_idx(tiny_idx[0], lab)


class TestFilterBinary:
    def test_mapping_and_indices(self):
        raw = RawImageSet(np.zeros((5, 1, 1), np.uint8), np.array([3, 1, 6, 6, 3], np.uint8))
        b = filter_binary(raw, 3, 6)
        assert b.labels.tolist() == [1.0, -1.0, -1.0, 1.0]
        assert b.source_index.tolist() == [0, 2, 3, 4]

    def test_same_class(self):
        raw = RawImageSet(np.zeros((1, 1, 1), np.uint8), np.array([3], np.uint8))
        with pytest.raises(ConfigError):
            filter_binary(raw, 3, 3)

    def test_no_matches(self):
        raw = RawImageSet(np.zeros((1, 1, 1), np.uint8), np.array([0], np.uint8))
        with pytest.raises(DataError):
            filter_binary(raw, 3, 6)


class TestPca:
    def test_rank_deficient(self, rng):
        X = np.outer(rng.normal(size=30), rng.normal(size=16))
        with pytest.raises(RankError):
            fit_pca(X, 3)

    def test_too_few_rows(self, rng):
        with pytest.raises(RankError):
            fit_pca(rng.normal(size=(4, 16)), 10)

    def test_training_projection_centered_and_bounded(self, rng):
        X = rng.normal(size=(200, 5, 5))
        proj = fit_pca(X, 4)
        Z = project(proj, X)
        np.testing.assert_allclose(Z.mean(axis=0), 0.0, atol=1e-12)
        assert np.abs(Z).max() == pytest.approx(1.0)
        np.testing.assert_allclose(proj.components @ proj.components.T, np.eye(4), atol=1e-12)

    def test_variance_matches_covariance_eigh(self, rng):
        X = rng.normal(size=(300, 12)) * np.linspace(0.2, 3, 12)
        proj = fit_pca(X, 10)
        cov = np.cov(X, rowvar=False)
        eig = np.sort(np.linalg.eigvalsh(cov))[::-1]
        ratio = proj.explained_variance.sum() / eig.sum()
        assert ratio == pytest.approx(eig[:10].sum() / eig.sum(), abs=1e-6)

    def test_fit_uses_training_data_only(self, rng):
        train = rng.normal(size=(100, 8))
        test = rng.normal(size=(50, 8)) + 5.0
        proj = fit_pca(train, 3)
        again = fit_pca(train, 3)
        np.testing.assert_array_equal(project(proj, test), project(again, test))
        np.testing.assert_allclose(proj.mean, train.mean(axis=0))

    def test_wrong_image_size(self, rng):
        proj = fit_pca(rng.normal(size=(20, 6)), 2)
        with pytest.raises(DimensionError):
            project(proj, rng.normal(size=(3, 7)))


class TestConceptLabels:
    def test_identity_at_origin(self):
        for N in (1, 2, 3):
            cfg = CircuitConfig(N)
            y = synthesize_concept_labels(np.zeros((1, N)), ConceptCircuit.identity(N), cfg)
            assert y[0] == pytest.approx(1.0, abs=1e-12)

    def test_bounded(self, rng):
        cfg = CircuitConfig(4)
        y = synthesize_concept_labels(rng.uniform(-1, 1, (40, 4)), ConceptCircuit(4, seed=3), cfg)
        assert np.all(np.abs(y) <= 1.0)

    def test_two_qubit_dense_oracle(self, rng):
        cfg = CircuitConfig(2)
        concept = ConceptCircuit(2, layers=2, seed=11)
        cz = np.diag([1, 1, 1, -1]).astype(complex)
        z0 = np.kron(np.diag([1.0, -1.0]), np.eye(2))
        U = np.eye(4, dtype=complex)
        for layer in concept.angles:
            rot = [rz(a_z) @ ry(a_y) for a_y, a_z in layer]
            U = cz @ np.kron(rot[0], rot[1]) @ U
        points = rng.uniform(-1, 1, (6, 2))
        got = synthesize_concept_labels(points, concept, cfg)
        for x, value in zip(points, got):
            psi = U @ dense_oracle_embed(x, cfg).amplitudes
            assert value == pytest.approx(float(np.real(psi.conj() @ z0 @ psi)), abs=1e-12)

    def test_global_phase_invariance(self, rng):
        cfg = CircuitConfig(3)
        concept = ConceptCircuit(3, seed=5)
        shifted = ConceptCircuit(3, seed=5, angles=concept.angles.copy())
        # RZ(a + 2 pi) = -RZ(a), a pure global sign
        shifted.angles[0, 1, 1] += 2 * np.pi
        pts = rng.uniform(-1, 1, (5, 3))
        np.testing.assert_allclose(synthesize_concept_labels(pts, concept, cfg),
                                   synthesize_concept_labels(pts, shifted, cfg), atol=1e-12)

    def test_qubit_count_mismatch(self):
        with pytest.raises(DimensionError):
            synthesize_concept_labels(np.zeros((1, 2)), ConceptCircuit(3), CircuitConfig(2))

    def test_synthetic_is_deterministic(self):
        a = make_synthetic(30, CircuitConfig(3), seed=9)
        b = make_synthetic(30, CircuitConfig(3), seed=9)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])
        assert set(np.unique(a[1])) <= {-1.0, 1.0}
        assert np.all(np.abs(a[0]) <= 1)


class TestSplit:
    def test_deterministic_and_disjoint(self, rng):
        labels = np.sign(rng.uniform(-1, 1, 100))
        tr, te = split_indices(labels, 60, 30, seed=4)
        tr2, te2 = split_indices(labels, 60, 30, seed=4)
        np.testing.assert_array_equal(tr, tr2)
        np.testing.assert_array_equal(te, te2)
        assert not set(tr) & set(te)

    def test_balanced(self, rng):
        labels = np.array([1.0] * 700 + [-1.0] * 600)
        tr, te = split_indices(labels, 500, 500, seed=0, balance=True)
        assert (labels[tr] == 1).sum() == 250 and (labels[te] == -1).sum() == 250

    def test_balanced_odd(self):
        with pytest.raises(ConfigError, match="even"):
            split_indices(np.ones(10), 3, 2, seed=0, balance=True)

    def test_too_many(self):
        with pytest.raises(DataError):
            split_indices(np.ones(10), 8, 3, seed=0)

    def test_sample_split(self, rng):
        s = LabeledSample(rng.uniform(-1, 1, (20, 2)), np.ones(20))
        tr, te = split(s, 12, 8, seed=1)
        assert tr.n == 12 and te.n == 8


class TestFeatureCsv:
    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=3, max_size=30))
    def test_round_trip_bit_exact(self, tmp_path_factory, values):
        feats = np.array(values[: len(values) // 3 * 3]).reshape(-1, 3)
        path = tmp_path_factory.mktemp("csv") / "f.csv"
        labels = np.where(np.arange(len(feats)) % 2, 1.0, -1.0)
        write_feature_csv(path, np.arange(len(feats)), labels, feats)
        ids, y, x = read_feature_csv(path)
        np.testing.assert_array_equal(x, feats)
        np.testing.assert_array_equal(y, labels)
        np.testing.assert_array_equal(ids, np.arange(len(feats)))

    def test_header(self, tmp_path):
        path = tmp_path / "f.csv"
        write_feature_csv(path, [0], [1.0], [[0.5, 0.25]])
        assert path.read_text().splitlines()[0] == "id,y,x1,x2"

    def test_bad_header(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("y,id,x1\n")
        with pytest.raises(DataError):
            read_feature_csv(path)

    def test_ragged_row(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("id,y,x1\n0,1,0.5,0.7\n")
        with pytest.raises(DataError, match=":2:"):
            read_feature_csv(path)
