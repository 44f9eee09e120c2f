"""Pipeline stages behind the CLI subcommands.

Every stage writes into ``cfg.output_dir``.  CSV floats use 17 significant
digits and JSON documents are written with sorted keys, so reruns with the
same configuration are byte-identical.  Wall-clock timings go to their own
file for that reason.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bounds as bnd
from .config import SCHEMA_VERSION, ExperimentConfig
from .data import (
    FASHION_CLASSES,
    ConceptCircuit,
    filter_binary,
    fit_pca,
    format_float,
    load_idx,
    make_synthetic,
    project,
    read_feature_csv,
    split_indices,
    write_feature_csv,
)
from .errors import ConfigError, DataError
from .kernel_matrix import KernelKind, KernelMatrix
from .krr import (
    LabeledSample,
    empirical_difference,
    fit,
    misclassification_rate,
    predict_many,
    worst_hypothesis,
)
from .noise import (
    QUERY_STREAM,
    ShotConfig,
    apply_depolarization,
    compose_depolarization,
    depolarize_values,
    sample_estimated_kernel,
    sample_estimated_values,
)
from .statevector import CircuitConfig, cross_kernel_from_states, embed_many, gram_from_states

log = logging.getLogger(__name__)

TRAIN_CSV = "features_train.csv"
TEST_CSV = "features_test.csv"
DATA_MANIFEST = "data_manifest.json"
SWEEP_CSV = "sweep.csv"
SWEEP_HIST_CSV = "sweep_hist.csv"
SWEEP_TIMING_CSV = "sweep_timing.csv"
SWEEP_SUMMARY = "sweep_summary.json"
BOUNDS_CSV = "bounds.csv"
REGIONS_CSV = "regions.csv"
HIST_BINS = 20
UNINFORMATIVE = "uninformative"

SWEEP_COLUMNS = (
    "L", "p", "train_error", "test_error", "h_mean", "h_max", "h_min",
    "hbar", "hbar_train_error", "hbar_test_error",
    "empirical_difference", "test_mean_abs_diff", "test_max_abs_diff",
    "M_norm", "lambda_M", "lemma2_bound", "theorem1_bound", "theorem1_informative",
    "corollary1_bound", "theorem2_bound",
    "est_train_error", "est_test_error", "est_h_mean", "est_h_max", "est_h_min",
    "est_empirical_difference", "est_spd_fallback",
)
BOUNDS_COLUMNS = (
    "L", "layer_rate", "p", "m", "z",
    "theorem1_bound", "theorem1_informative", "theorem1_D_term", "theorem1_delta_term",
    "corollary1_bound", "corollary1_informative", "corollary1_D_term", "corollary1_delta_term",
    "theorem2_bound", "theorem2_informative", "theorem2_shot_term", "theorem2_success_probability",
    "geometric_bound",
)
REGIONS_COLUMNS = ("n", "L", "L_star", "verdict", "regime", "threshold_below_one")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return format_float(value)


def _bound_cell(report: bnd.BoundReport | None):
    if report is None:
        return None
    return UNINFORMATIVE if report.bound_value is None else report.bound_value


def write_rows(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])


def write_json(path: Path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_matrix_csv(path: Path, matrix: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in np.asarray(matrix):
            writer.writerow([format_float(v) for v in row])


def read_matrix_csv(path: Path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(v) for v in rec] for rec in csv.reader(fh)]
    return np.array(rows, dtype=float)


def _out(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _shot_seed(seed: int, L: int) -> int:
    return int(np.random.SeedSequence([seed, L]).generate_state(1, np.uint64)[0])


# data

def build_features(cfg: ExperimentConfig) -> dict:
    """Produce train/test feature tables in memory plus manifest metadata."""
    ds = cfg.dataset
    circuit = CircuitConfig(cfg.num_qubits)
    manifest: dict = {"dataset": ds.kind, "seed": cfg.seed, "num_qubits": cfg.num_qubits,
                      "balance": cfg.balance, "schema_version": SCHEMA_VERSION}
    if ds.kind == "synthetic":
        total = ds.num_points or cfg.n_train + cfg.n_test
        concept_seed = cfg.seed if ds.concept_seed is None else ds.concept_seed
        concept = ConceptCircuit(cfg.num_qubits, layers=ds.concept_layers, seed=concept_seed)
        points, labels = make_synthetic(total, circuit, cfg.seed, concept)
        tr, te = split_indices(labels, cfg.n_train, cfg.n_test, cfg.seed, cfg.balance)
        train_x, test_x = points[tr], points[te]
        manifest.update(concept_seed=concept_seed, concept_layers=ds.concept_layers,
                        observable="Z on qubit 0 (most significant bit)", feature_range=[-1.0, 1.0],
                        label_rule="sign of concept expectation, sign(0)=+1")
    else:
        raw = load_idx(ds.train_images, ds.train_labels)
        binary = filter_binary(raw, ds.class_a, ds.class_b)
        labels = binary.labels
        tr, te = split_indices(labels, cfg.n_train, cfg.n_test, cfg.seed, cfg.balance)
        proj = fit_pca(binary.images[tr], n_components=cfg.num_qubits)
        train_x = project(proj, binary.images[tr])
        test_x = project(proj, binary.images[te])
        tr_ids, te_ids = binary.source_index[tr], binary.source_index[te]
        manifest.update(
            class_mapping={"+1": [ds.class_a, FASHION_CLASSES.get(ds.class_a)],
                           "-1": [ds.class_b, FASHION_CLASSES.get(ds.class_b)]},
            scaling_factors=[float(s) for s in proj.scale],
            explained_variance=[float(v) for v in proj.explained_variance],
        )
        return {"train": (tr_ids, labels[tr], train_x), "test": (te_ids, labels[te], test_x),
                "manifest": manifest}
    return {"train": (tr, labels[tr], train_x), "test": (te, labels[te], test_x),
            "manifest": manifest}


def cmd_data(cfg: ExperimentConfig) -> Path:
    out = _out(cfg)
    feats = build_features(cfg)
    write_feature_csv(out / TRAIN_CSV, *feats["train"])
    write_feature_csv(out / TEST_CSV, *feats["test"])
    write_json(out / DATA_MANIFEST, feats["manifest"])
    return out / TRAIN_CSV


def load_features(cfg: ExperimentConfig):
    out = Path(cfg.output_dir)
    paths = (out / TRAIN_CSV, out / TEST_CSV)
    for p in paths:
        if not p.exists():
            raise DataError(f"feature cache {p} missing; run the data subcommand first")
    train = read_feature_csv(paths[0])
    test = read_feature_csv(paths[1])
    for name, (_, _, x) in (("train", train), ("test", test)):
        if x.shape[1] != cfg.num_qubits:
            raise DataError(f"{name} cache has {x.shape[1]} features, config says {cfg.num_qubits}")
    return train, test


def _ensure_features(cfg: ExperimentConfig):
    out = Path(cfg.output_dir)
    if not (out / TRAIN_CSV).exists() or not (out / TEST_CSV).exists():
        cmd_data(cfg)
    return load_features(cfg)


# kernel

def _kernel_header(kind: str, cfg: ExperimentConfig, n: int, p=None, L=None, m=None, seed=None):
    return {"kind": kind, "n": n, "D": cfg.dim, "num_qubits": cfg.num_qubits, "p": p,
            "L": L, "layer_rate": cfg.layer_rate if L is not None else None,
            "m": m, "seed": seed, "schema_version": SCHEMA_VERSION}


def cmd_kernel(cfg: ExperimentConfig) -> list[Path]:
    out = _out(cfg)
    (_, _, train_x), _ = load_features(cfg)
    circuit = CircuitConfig(cfg.num_qubits)
    ideal = KernelMatrix(gram_from_states(embed_many(train_x, circuit, cfg.threads)),
                         KernelKind.IDEAL, cfg.dim)
    n = ideal.n
    written = [out / "kernel_ideal.csv"]
    write_matrix_csv(written[0], ideal.entries)
    write_json(out / "kernel_ideal.json", _kernel_header("ideal", cfg, n))
    for L in cfg.L_values:
        nm = compose_depolarization(cfg.layer_rate, L)
        noisy = apply_depolarization(ideal, nm)
        path = out / f"kernel_noisy_L{L}.csv"
        write_matrix_csv(path, noisy.entries)
        write_json(out / f"kernel_noisy_L{L}.json",
                   _kernel_header("noisy", cfg, n, p=nm.composed_rate, L=L))
        written.append(path)
        if cfg.shots_m is not None:
            sc = ShotConfig(cfg.shots_m, _shot_seed(cfg.seed, L))
            est = sample_estimated_kernel(noisy, sc, threads=cfg.threads)
            path = out / f"kernel_estimated_L{L}.csv"
            write_matrix_csv(path, est.entries)
            write_json(out / f"kernel_estimated_L{L}.json",
                       _kernel_header("estimated", cfg, n, p=nm.composed_rate, L=L,
                                      m=cfg.shots_m, seed=sc.master_seed))
            written.append(path)
    return written


# sweep

@dataclass
class SweepRecord:
    values: dict
    histogram: np.ndarray
    wall_time: float


def _sweep_one(L: int, cfg: ExperimentConfig, ideal: KernelMatrix, cross: np.ndarray,
               train: LabeledSample, test_y: np.ndarray) -> SweepRecord:
    start = time.perf_counter()
    nm = compose_depolarization(cfg.layer_rate, L)
    noisy = apply_depolarization(ideal, nm)
    model = fit(noisy, train, cfg.lam)
    h_train = predict_many(model, noisy.entries, KernelKind.NOISY)
    h_test = predict_many(model, depolarize_values(cross, nm, cfg.dim), KernelKind.NOISY)
    hbar = worst_hypothesis(train, cfg.lam, cfg.dim).constant_value
    inputs = bnd.BoundInputs(train.n, cfg.lam, nm, cfg.dim, cfg.delta, cfg.shots_m)
    lemma2 = bnd.lemma2_bound(noisy, inputs)
    thm1 = bnd.theorem1_bound(inputs)
    cor1 = bnd.corollary1_bound(inputs)
    thm2 = bnd.theorem2_bound(inputs) if cfg.shots_m is not None else None
    abs_diff = np.abs(h_test - hbar)
    row = {
        "L": L, "p": nm.composed_rate,
        "train_error": misclassification_rate(h_train, train.labels),
        "test_error": misclassification_rate(h_test, test_y),
        "h_mean": float(h_test.mean()), "h_max": float(h_test.max()), "h_min": float(h_test.min()),
        "hbar": hbar,
        "hbar_train_error": misclassification_rate(np.full(train.n, hbar), train.labels),
        "hbar_test_error": misclassification_rate(np.full(test_y.shape[0], hbar), test_y),
        "empirical_difference": empirical_difference(h_train, hbar),
        "test_mean_abs_diff": float(abs_diff.mean()),
        "test_max_abs_diff": float(abs_diff.max()),
        "M_norm": lemma2.term_breakdown["M_norm"],
        "lambda_M": lemma2.term_breakdown["lambda_M"],
        "lemma2_bound": lemma2.bound_value,
        "theorem1_bound": _bound_cell(thm1),
        "theorem1_informative": thm1.informative,
        "corollary1_bound": _bound_cell(cor1),
        "theorem2_bound": _bound_cell(thm2),
    }
    if cfg.shots_m is not None:
        sc = ShotConfig(cfg.shots_m, _shot_seed(cfg.seed, L))
        est = sample_estimated_kernel(noisy, sc)
        est_model = fit(est, train, cfg.lam)
        est_rows = sample_estimated_values(depolarize_values(cross, nm, cfg.dim), sc, QUERY_STREAM)
        e_train = predict_many(est_model, est.entries, KernelKind.ESTIMATED)
        e_test = predict_many(est_model, est_rows, KernelKind.ESTIMATED)
        row.update({
            "est_train_error": misclassification_rate(e_train, train.labels),
            "est_test_error": misclassification_rate(e_test, test_y),
            "est_h_mean": float(e_test.mean()), "est_h_max": float(e_test.max()),
            "est_h_min": float(e_test.min()),
            "est_empirical_difference": empirical_difference(e_train, hbar),
            "est_spd_fallback": est_model.spd_fallback,
        })
    hist, _ = np.histogram(h_test, bins=HIST_BINS, range=(-1.0, 1.0))
    return SweepRecord(row, hist, time.perf_counter() - start)


def detect_phase_transition(L_values, train_errors, hbar_train_error: float) -> int | None:
    """First L whose training error exceeds the midpoint between the lowest-L error and h_bar's."""
    order = np.argsort(L_values)
    Ls = np.asarray(L_values)[order]
    errs = np.asarray(train_errors, dtype=float)[order]
    base = errs[0]
    if hbar_train_error <= base:
        return None
    midpoint = 0.5 * (base + hbar_train_error)
    for L, err in zip(Ls, errs):
        if err > midpoint:
            return int(L)
    return None


def run_sweep(cfg: ExperimentConfig) -> list[SweepRecord]:
    (_, ytr, xtr), (_, yte, xte) = _ensure_features(cfg)
    circuit = CircuitConfig(cfg.num_qubits)
    s_train = embed_many(xtr, circuit, cfg.threads)
    s_test = embed_many(xte, circuit, cfg.threads)
    ideal = KernelMatrix(gram_from_states(s_train), KernelKind.IDEAL, cfg.dim)
    cross = cross_kernel_from_states(s_test, s_train)
    train = LabeledSample(xtr, ytr)
    Ls = sorted(cfg.L_values)

    def work(L):
        try:
            return _sweep_one(L, cfg, ideal, cross, train, yte)
        except Exception as exc:
            exc.sweep_L = L
            log.error("sweep aborted at L=%s: %s", L, exc)
            raise

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            return list(pool.map(work, Ls))
    return [work(L) for L in Ls]


def cmd_sweep(cfg: ExperimentConfig) -> dict:
    out = _out(cfg)
    records = run_sweep(cfg)
    rows = [r.values for r in records]
    write_rows(out / SWEEP_CSV, SWEEP_COLUMNS, rows)
    edges = np.linspace(-1.0, 1.0, HIST_BINS + 1)
    hist_rows = [
        {"L": r.values["L"], "bin_lo": edges[k], "bin_hi": edges[k + 1], "count": int(c)}
        for r in records for k, c in enumerate(r.histogram)
    ]
    write_rows(out / SWEEP_HIST_CSV, ("L", "bin_lo", "bin_hi", "count"), hist_rows)
    write_rows(out / SWEEP_TIMING_CSV, ("L", "wall_time"),
               [{"L": r.values["L"], "wall_time": r.wall_time} for r in records])
    hbar_err = rows[0]["hbar_train_error"]
    transition = detect_phase_transition([r["L"] for r in rows],
                                         [r["train_error"] for r in rows], hbar_err)
    try:
        l_star = bnd.demarcation_layers(cfg.n_train, cfg.layer_rate)
    except ConfigError:
        l_star = None
    summary = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.to_json(),
        "hbar": rows[0]["hbar"],
        "hbar_train_error": hbar_err,
        "hbar_test_error": rows[0]["hbar_test_error"],
        "phase_transition_layer": transition,
        "demarcation_L_star": l_star,
        "columns": list(SWEEP_COLUMNS),
    }
    write_json(out / SWEEP_SUMMARY, summary)
    return summary


# bounds

def cmd_bounds(cfg: ExperimentConfig) -> Path:
    out = _out(cfg)
    n, D = cfg.n_train, cfg.dim
    grid = [(L, cfg.layer_rate) for L in sorted(cfg.L_values)]
    # Fully depolarized endpoint (p = 1).
    grid.append(("inf", 1.0))
    m_values = list(cfg.bounds_m_values) or [None]
    rows = []
    for L, rate in grid:
        nm = compose_depolarization(rate, 1 if L == "inf" else L)
        for m in m_values:
            inputs = bnd.BoundInputs(n, cfg.lam, nm, D, cfg.delta, None if m is None else int(m))
            t1 = bnd.theorem1_bound(inputs)
            c1 = bnd.corollary1_bound(inputs)
            t2 = bnd.theorem2_bound(inputs) if m is not None else None
            geo = bnd.geometric_difference_bound(inputs)
            rows.append({
                "L": L, "layer_rate": rate, "p": nm.composed_rate,
                "m": None if m is None else int(m), "z": inputs.z,
                "theorem1_bound": _bound_cell(t1), "theorem1_informative": t1.informative,
                "theorem1_D_term": t1.term_breakdown["D_term"],
                "theorem1_delta_term": t1.term_breakdown["delta_term"],
                "corollary1_bound": _bound_cell(c1), "corollary1_informative": c1.informative,
                "corollary1_D_term": c1.term_breakdown["D_term"],
                "corollary1_delta_term": c1.term_breakdown["delta_term"],
                "theorem2_bound": _bound_cell(t2),
                "theorem2_informative": None if t2 is None else t2.informative,
                "theorem2_shot_term": None if t2 is None else t2.term_breakdown["shot_term"],
                "theorem2_success_probability":
                    None if t2 is None else t2.term_breakdown["success_probability"],
                "geometric_bound": UNINFORMATIVE if geo is None else geo,
            })
    write_rows(out / BOUNDS_CSV, BOUNDS_COLUMNS, rows)
    return out / BOUNDS_CSV


# regions

def cmd_regions(cfg: ExperimentConfig) -> Path:
    out = _out(cfg)
    rows = []
    for n in cfg.regions_n_values:
        for L in cfg.regions_L_values:
            v = bnd.classify_region(n, cfg.num_qubits, cfg.layer_rate, L)
            rows.append({"n": int(n) if float(n).is_integer() else float(n), "L": L,
                         "L_star": v.threshold_layers, "verdict": v.verdict.value,
                         "regime": v.regime_label, "threshold_below_one": v.threshold_below_one})
    write_rows(out / REGIONS_CSV, REGIONS_COLUMNS, rows)
    return out / REGIONS_CSV
