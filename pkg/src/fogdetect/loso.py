"""Leave-one-subject-out evaluation: window datasets, classifier adapters,
per-fold scoring and the cohort report."""
from __future__ import annotations

import csv
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from . import seeding
from .dsp import preprocess_recording
from .errors import ContractError, ParseError, UndefinedMetricError
from .fogformer import FogTransformer, build_fog_transformer
from .forest import ForestModel, fit_forest, predict_proba as forest_proba
from .metrics import confusion, eer, metrics_bundle, roc_auc
from .neural.training import TrainConfig, TrainedModel, fit, predict_proba
from .synthcohort import Recording
from .windows import Standardizer, fit_standardizer, mazilu_features, segment, spectral_sequences

log = logging.getLogger(__name__)


@dataclass
class WindowDataset:
    """Every scored window of a cohort, in recording order.

    Both representations are computed for the same windows: those with a full
    spectral history. ``provenance`` tags are ``subject/state/start_index``.
    """

    subject_ids: np.ndarray
    med_states: np.ndarray
    start_indices: np.ndarray
    labels: np.ndarray  # bool
    sequences: np.ndarray  # (n, T, 64, 3) float32
    features: np.ndarray  # (n, 21)
    hop_seconds: float
    n_prev: int
    overlap: int

    def __len__(self):
        return len(self.labels)

    @property
    def subjects(self) -> list[str]:
        return sorted(set(self.subject_ids.tolist()))

    @property
    def provenance(self) -> np.ndarray:
        return np.array([f"{s}/{m}/{i}" for s, m, i in
                         zip(self.subject_ids, self.med_states, self.start_indices)])


def build_dataset(recordings, overlap: int = 75, n_prev: int = 3,
                  zero_phase: bool = False) -> WindowDataset:
    parts: dict[str, list] = {k: [] for k in ("sid", "state", "start", "lab", "seq", "feat")}
    hop_s = None
    for rec in recordings:
        if not isinstance(rec, Recording):
            raise ContractError("build_dataset expects Recording objects")
        ws = segment(preprocess_recording(rec, zero_phase=zero_phase), overlap)
        hop_s = ws.hop_seconds
        if len(ws) == 0:
            continue
        seq, idx = spectral_sequences(ws, n_prev)
        if len(idx) == 0:
            continue
        parts["sid"].append(np.full(len(idx), rec.subject_id))
        parts["state"].append(np.full(len(idx), rec.med_state))
        parts["start"].append(ws.start_indices[idx])
        parts["lab"].append(ws.labels[idx])
        parts["seq"].append(seq.astype(np.float32))
        parts["feat"].append(mazilu_features(ws.windows[idx]))
    if not parts["sid"]:
        raise ContractError("no windows retained from any recording")
    return WindowDataset(
        np.concatenate(parts["sid"]), np.concatenate(parts["state"]),
        np.concatenate(parts["start"]).astype(np.int64), np.concatenate(parts["lab"]).astype(bool),
        np.concatenate(parts["seq"]), np.concatenate(parts["feat"]),
        float(hop_s), n_prev, overlap)


# ---------------------------------------------------------------- classifiers

class Classifier(Protocol):
    name: str
    representation: str

    def fit(self, ds: WindowDataset, rows: np.ndarray, seed: int): ...

    def score(self, fitted, ds: WindowDataset, rows: np.ndarray) -> np.ndarray: ...


@dataclass
class FittedTransformer:
    model: FogTransformer
    standardizer: Standardizer
    trained: TrainedModel


@dataclass
class TransformerClassifier:
    train: TrainConfig = field(default_factory=TrainConfig)
    arch: dict = field(default_factory=dict)
    name: str = "fog_transformer"
    representation: str = "spectral_sequence"

    def fit(self, ds: WindowDataset, rows: np.ndarray, seed: int) -> FittedTransformer:
        x = ds.sequences[rows]
        st = fit_standardizer(x)
        xs = st.apply(x).astype(self.train.dtype)
        model = build_fog_transformer(ds.n_prev, seed=seeding.derive_seed(seed, "init"), **self.arch)
        cfg = replace(self.train, seed=seeding.derive_seed(seed, "train"))
        trained = fit(model, xs, ds.labels[rows].astype(int), cfg)
        return FittedTransformer(model, st, trained)

    def score(self, fitted: FittedTransformer, ds: WindowDataset, rows: np.ndarray) -> np.ndarray:
        xs = fitted.standardizer.apply(ds.sequences[rows])
        return predict_proba(fitted.model, xs, dtype=self.train.dtype)

    def training_rows(self, fitted: FittedTransformer, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return rows[fitted.trained.train_index], rows[fitted.trained.val_index]


@dataclass
class ForestClassifier:
    n_trees: int = 100
    name: str = "random_forest"
    representation: str = "mazilu"

    def fit(self, ds: WindowDataset, rows: np.ndarray, seed: int) -> ForestModel:
        return fit_forest(ds.features[rows], ds.labels[rows].astype(int),
                          seed=seeding.derive_seed(seed, "forest"), n_trees=self.n_trees)

    def score(self, fitted: ForestModel, ds: WindowDataset, rows: np.ndarray) -> np.ndarray:
        return forest_proba(fitted, ds.features[rows])

    def training_rows(self, fitted, rows):
        return rows, rows[:0]


# -------------------------------------------------------------------- traces

TRACE_HEADER = ["subject_id", "repeat", "med_state", "start_index", "label", "score", "hop_seconds"]


@dataclass
class PredictionTrace:
    """Window scores of one test subject in one repeat, in window order."""

    subject_id: str
    repeat: int
    scores: np.ndarray
    labels: np.ndarray  # bool
    hop_seconds: float
    start_indices: np.ndarray
    med_states: np.ndarray

    def __post_init__(self):
        n = len(self.scores)
        if not (len(self.labels) == len(self.start_indices) == len(self.med_states) == n):
            raise ContractError("trace arrays must have equal length")
        if not self.hop_seconds > 0:
            raise ContractError("hop_seconds must be positive")

    def __len__(self):
        return len(self.scores)

    def recordings(self) -> list["PredictionTrace"]:
        """Split into one trace per recording, keeping window order."""
        out = []
        for state in dict.fromkeys(self.med_states.tolist()):
            m = self.med_states == state
            out.append(PredictionTrace(self.subject_id, self.repeat, self.scores[m], self.labels[m],
                                       self.hop_seconds, self.start_indices[m], self.med_states[m]))
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_HEADER)
            for st, i, lab, s in zip(self.med_states, self.start_indices, self.labels, self.scores):
                w.writerow([self.subject_id, self.repeat, st, int(i), int(lab), repr(float(s)),
                            repr(self.hop_seconds)])

    @classmethod
    def read_csv(cls, path) -> "PredictionTrace":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != TRACE_HEADER:
            raise ParseError(f"{path}: missing or unexpected trace header")
        body = rows[1:]
        if not body:
            raise ParseError(f"{path}: trace has no windows")
        try:
            sid, rep, hop = body[0][0], int(body[0][1]), float(body[0][6])
            states = np.array([r[2] for r in body])
            starts = np.array([int(r[3]) for r in body], dtype=np.int64)
            labels = np.array([int(r[4]) for r in body])
            scores = np.array([float(r[5]) for r in body])
        except (ValueError, IndexError) as exc:
            raise ParseError(f"{path}: malformed trace row ({exc})") from exc
        if not np.isin(labels, (0, 1)).all():
            raise ParseError(f"{path}: labels must be 0/1")
        return cls(sid, rep, scores, labels.astype(bool), hop, starts, states)


def concatenate_traces(traces) -> PredictionTrace:
    traces = list(traces)
    if not traces:
        raise ContractError("no traces to concatenate")
    return PredictionTrace(
        "pooled", -1,
        np.concatenate([t.scores for t in traces]),
        np.concatenate([t.labels for t in traces]),
        traces[0].hop_seconds,
        np.concatenate([t.start_indices for t in traces]),
        np.concatenate([[f"{t.subject_id}/{s}" for s in t.med_states] for t in traces]))


# -------------------------------------------------------------------- report

@dataclass
class FoldResult:
    subject_id: str
    repeat: int
    seed: int
    sensitivity: float
    specificity: float
    auc: float
    eer: float
    threshold: float
    n_pos: int
    n_neg: int
    auc_defined: bool
    train_provenance: np.ndarray  # rows used for gradient steps / tree fitting
    val_provenance: np.ndarray
    test_provenance: np.ndarray
    meta: dict = field(default_factory=dict)


@dataclass
class LosoReport:
    model: str
    folds: list[FoldResult]
    traces: list[PredictionTrace]
    skipped: list[str] = field(default_factory=list)

    def subject_rows(self) -> list[dict]:
        rows = []
        for sid in sorted({f.subject_id for f in self.folds}):
            fs = [f for f in self.folds if f.subject_id == sid and f.auc_defined]
            if not fs:
                rows.append({"patient": sid, "sensitivity": np.nan, "specificity": np.nan,
                             "auc": np.nan, "eer_percent": np.nan, "repeats": 0})
                continue
            rows.append({
                "patient": sid,
                "sensitivity": float(np.mean([f.sensitivity for f in fs])),
                "specificity": float(np.mean([f.specificity for f in fs])),
                "auc": float(np.mean([f.auc for f in fs])),
                "eer_percent": float(np.mean([100.0 * f.eer for f in fs])),
                "repeats": len(fs),
            })
        return rows

    def average(self) -> dict:
        rows = [r for r in self.subject_rows() if r["repeats"] > 0]
        if not rows:
            raise UndefinedMetricError("no fold produced a defined AUC")
        return {k: float(np.mean([r[k] for r in rows]))
                for k in ("sensitivity", "specificity", "auc", "eer_percent")}

    @property
    def mean_auc(self) -> float:
        return self.average()["auc"]

    def to_csv(self) -> str:
        lines = ["patient,sensitivity,specificity,auc,eer_percent,repeats"]
        for r in self.subject_rows():
            lines.append(f"{r['patient']},{r['sensitivity']:.6f},{r['specificity']:.6f},"
                         f"{r['auc']:.6f},{r['eer_percent']:.4f},{r['repeats']}")
        a = self.average()
        lines.append(f"Average,{a['sensitivity']:.6f},{a['specificity']:.6f},"
                     f"{a['auc']:.6f},{a['eer_percent']:.4f},")
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())


def fold_seed(root: int, repeat: int, subject: str) -> int:
    return seeding.derive_seed(root, "loso", "repeat", repeat, "subject", subject)


def _score_fold(ds: WindowDataset, clf, subject: str, repeat: int, root_seed: int):
    test = np.flatnonzero(ds.subject_ids == subject)
    train = np.flatnonzero(ds.subject_ids != subject)
    seed = fold_seed(root_seed, repeat, subject)
    fitted = clf.fit(ds, train, seed)
    scores = clf.score(fitted, ds, test)
    tr_rows, va_rows = clf.training_rows(fitted, train)
    labels = ds.labels[test]
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    prov = ds.provenance
    try:
        roc = roc_auc(labels, scores)
        e = eer(labels, scores)
        b = metrics_bundle(confusion(labels, scores, e.threshold))
        res = (b.sensitivity, b.specificity, roc.auc, e.eer, e.threshold, True)
    except UndefinedMetricError:
        warnings.warn(f"fold {subject} repeat {repeat}: single-class test set, AUC undefined",
                      RuntimeWarning)
        res = (np.nan, np.nan, np.nan, np.nan, np.nan, False)
    meta = {}
    if isinstance(fitted, FittedTransformer):
        meta = {"best_epoch": fitted.trained.best_epoch, "epochs_run": fitted.trained.epochs_run}
    fold = FoldResult(subject, repeat, seed, *res[:5], n_pos, n_neg, res[5],
                      prov[tr_rows], prov[va_rows], prov[test], meta)
    trace = PredictionTrace(subject, repeat, scores, labels, ds.hop_seconds,
                            ds.start_indices[test], ds.med_states[test])
    return fold, trace, fitted


def loso_cv(ds: WindowDataset, clf, repeats: int = 6, seed: int = 0, jobs: int = 1,
            on_fold: Callable | None = None, subjects=None) -> LosoReport:
    """Leave-one-subject-out evaluation, ``repeats`` times with distinct seeds.

    ``on_fold(fold, trace, fitted)`` is called for every finished fold in
    (repeat, subject) order, e.g. to persist weights.
    """
    present = ds.subjects
    requested = present if subjects is None else list(subjects)
    skipped = [s for s in requested if s not in present]
    for s in skipped:
        warnings.warn(f"subject {s} has no retained windows; fold skipped", RuntimeWarning)
    subjects = [s for s in requested if s in present]
    if len(present) < 2 or not subjects:
        raise ContractError("LOSO needs at least two subjects")
    if repeats < 1:
        raise ContractError("repeats must be at least 1")
    tasks = [(r, s) for r in range(repeats) for s in subjects]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            futures = [ex.submit(_score_fold, ds, clf, s, r, seed) for r, s in tasks]
            results = [f.result() for f in futures]
    else:
        results = []
        for r, s in tasks:
            log.info("fold %s repeat %d", s, r)
            results.append(_score_fold(ds, clf, s, r, seed))
    folds, traces = [], []
    for fold, trace, fitted in results:
        folds.append(fold)
        traces.append(trace)
        if on_fold is not None:
            on_fold(fold, trace, fitted)
    return LosoReport(clf.name, folds, traces, skipped)
