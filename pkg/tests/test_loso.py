import numpy as np
import pytest

from fogdetect.errors import ContractError, ParseError
from fogdetect.loso import (ForestClassifier, PredictionTrace, TransformerClassifier, WindowDataset,
                            build_dataset, concatenate_traces, fold_seed, loso_cv)
from fogdetect.neural.training import TrainConfig
from fogdetect.synthcohort import CohortSpec, generate_subject


def _fake_dataset(n_subjects, per_subject=60, seed=0):
    rng = np.random.default_rng(seed)
    n = n_subjects * per_subject
    sids = np.repeat([f"S{i + 1:02d}" for i in range(n_subjects)], per_subject)
    labels = rng.random(n) < 0.3
    labels[::per_subject] = True
    labels[1::per_subject] = False
    feats = rng.standard_normal((n, 21))
    feats[:, 0] += 2.0 * labels
    return WindowDataset(sids, np.tile(np.repeat(["ON", "OFF"], per_subject // 2), n_subjects),
                         np.tile(np.arange(per_subject) * 32, n_subjects), labels,
                         np.zeros((n, 1, 1, 1), np.float32), feats, 0.8, 3, 75)


class ThresholdOnFeature:
    """Scores by the first feature; records the rows it was fitted on."""

    name = "stub"
    representation = "mazilu"

    def __init__(self):
        self.calls = []

    def fit(self, ds, rows, seed):
        self.calls.append((set(ds.subject_ids[rows].tolist()), seed))
        return None

    def score(self, fitted, ds, rows):
        return 1.0 / (1.0 + np.exp(-ds.features[rows, 0]))

    def training_rows(self, fitted, rows):
        return rows, rows[:0]


@pytest.fixture(scope="module")
def real_dataset():
    spec = CohortSpec(n_subjects=3, minutes_per_state=3.0)
    recs = [generate_subject(spec, i, s) for i in range(3) for s in ("ON", "OFF")]
    return build_dataset(recs)


def test_fold_trains_on_exactly_the_other_subjects():
    clf = ThresholdOnFeature()
    loso_cv(_fake_dataset(3), clf, repeats=1)
    assert [c[0] for c in clf.calls] == [{"S02", "S03"}, {"S01", "S03"}, {"S01", "S02"}]


def test_bookkeeping_eight_subjects_six_repeats():
    report = loso_cv(_fake_dataset(8), ThresholdOnFeature(), repeats=6, seed=3)
    assert len(report.folds) == 48 and len(report.traces) == 48
    rows = report.subject_rows()
    assert len(rows) == 8 and all(r["repeats"] == 6 for r in rows)
    lines = report.to_csv().splitlines()
    assert lines[0] == "patient,sensitivity,specificity,auc,eer_percent,repeats"
    assert len(lines) == 10 and lines[-1].startswith("Average,")
    assert report.mean_auc == pytest.approx(np.mean([r["auc"] for r in rows]))


def test_fold_seeds_are_distinct_and_reproducible():
    seeds = {fold_seed(0, r, f"S{s:02d}") for r in range(6) for s in range(1, 9)}
    assert len(seeds) == 48
    assert fold_seed(0, 2, "S03") == fold_seed(0, 2, "S03") != fold_seed(1, 2, "S03")
    clf = ThresholdOnFeature()
    loso_cv(_fake_dataset(3), clf, repeats=2, seed=5)
    assert [c[1] for c in clf.calls] == [fold_seed(5, r, s) for r in range(2) for s in ("S01", "S02", "S03")]


def test_single_class_test_subject_is_flagged():
    ds = _fake_dataset(3)
    ds.labels[ds.subject_ids == "S02"] = False
    with pytest.warns(RuntimeWarning, match="single-class"):
        report = loso_cv(ds, ThresholdOnFeature(), repeats=1)
    row = next(r for r in report.subject_rows() if r["patient"] == "S02")
    assert row["repeats"] == 0 and np.isnan(row["auc"])
    assert np.isfinite(report.mean_auc)


def test_requested_subject_without_windows_is_skipped():
    with pytest.warns(RuntimeWarning, match="no retained windows"):
        report = loso_cv(_fake_dataset(3), ThresholdOnFeature(), repeats=1, subjects=["S01", "S09"])
    assert report.skipped == ["S09"] and len(report.folds) == 1


def test_loso_needs_two_subjects():
    with pytest.raises(ContractError):
        loso_cv(_fake_dataset(1), ThresholdOnFeature(), repeats=1)
    with pytest.raises(ContractError):
        loso_cv(_fake_dataset(2), ThresholdOnFeature(), repeats=0)


def test_dataset_representations_share_windows(real_dataset):
    ds = real_dataset
    assert ds.sequences.shape == (len(ds), 4, 64, 3) and ds.features.shape == (len(ds), 21)
    assert ds.sequences.dtype == np.float32
    assert ds.subjects == ["S01", "S02", "S03"]
    assert len(set(ds.provenance.tolist())) == len(ds)


def test_transformer_folds_do_not_leak(real_dataset):
    clf = TransformerClassifier(train=TrainConfig(max_epochs=1, batch_size=256))
    report = loso_cv(real_dataset, clf, repeats=1, subjects=["S02"])
    fold = report.folds[0]
    test = set(fold.test_provenance.tolist())
    assert all(p.startswith("S02/") for p in test)
    assert not test & set(fold.train_provenance.tolist())
    assert not test & set(fold.val_provenance.tolist())
    assert not set(fold.train_provenance.tolist()) & set(fold.val_provenance.tolist())
    n_train = int((real_dataset.subject_ids != "S02").sum())
    assert len(fold.train_provenance) + len(fold.val_provenance) == n_train
    assert np.all((report.traces[0].scores >= 0) & (report.traces[0].scores <= 1))


def test_forest_folds_do_not_leak(real_dataset):
    report = loso_cv(real_dataset, ForestClassifier(n_trees=5), repeats=1)
    for f in report.folds:
        assert not set(f.test_provenance.tolist()) & set(f.train_provenance.tolist())


# ------------------------------------------------------------ traces

def _trace():
    rng = np.random.default_rng(0)
    return PredictionTrace("S03", 1, rng.random(10), rng.random(10) < 0.4, 0.8,
                           np.arange(10) * 32, np.array(["ON"] * 4 + ["OFF"] * 6))


def test_trace_csv_round_trip(tmp_path):
    t = _trace()
    t.write_csv(tmp_path / "t.csv")
    back = PredictionTrace.read_csv(tmp_path / "t.csv")
    assert back.subject_id == "S03" and back.repeat == 1 and back.hop_seconds == 0.8
    np.testing.assert_array_equal(back.scores, t.scores)
    np.testing.assert_array_equal(back.labels, t.labels)
    np.testing.assert_array_equal(back.med_states, t.med_states)


def test_trace_split_and_concatenate():
    t = _trace()
    parts = t.recordings()
    assert [len(p) for p in parts] == [4, 6] and parts[1].med_states[0] == "OFF"
    pooled = concatenate_traces([t, t])
    assert len(pooled) == 20 and pooled.med_states[0] == "S03/ON"


@pytest.mark.parametrize("body", ["", "subject_id,repeat\n", None])
def test_trace_parse_errors(tmp_path, body):
    path = tmp_path / "bad.csv"
    if body is None:
        body = ("subject_id,repeat,med_state,start_index,label,score,hop_seconds\n"
                "S01,0,ON,0,2,0.5,0.8\n")
    path.write_text(body)
    with pytest.raises(ParseError):
        PredictionTrace.read_csv(path)


def test_trace_length_contract():
    with pytest.raises(ContractError):
        PredictionTrace("S01", 0, np.zeros(3), np.zeros(2, bool), 0.8, np.zeros(3), np.zeros(3))
