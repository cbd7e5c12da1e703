"""End-to-end orchestration behind the command-line interface."""
from __future__ import annotations

import datetime as _dt
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .episodes import (SCHEMA_VERSION, cluster_analysis, envelope_csv, episode_detection_report,
                       ffe_report, remove_short_episodes, threshold_sweep)
from .errors import ContractError, UndefinedMetricError
from .fogformer import save_weights
from .forest import save_forest
from .loso import (ForestClassifier, LosoReport, PredictionTrace, TransformerClassifier,
                   build_dataset, loso_cv)
from .metrics import confusion_from_binary, metrics_bundle
from .synthcohort import CohortSpec, generate_cohort, read_recording, write_recording

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"


class MissingCohortError(FileNotFoundError):
    pass


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_cohort(spec: CohortSpec, out_dir) -> Path:
    """Recording CSV + sidecar per recording and a manifest listing them."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for rec in generate_cohort(spec):
        path = out / f"{rec.stem}.csv"
        write_recording(rec, path)
        entries.append({"file": path.name, "subject_id": rec.subject_id, "med_state": rec.med_state,
                        "n_samples": len(rec), "sha256": _sha256(path)})
    manifest = {"schema_version": SCHEMA_VERSION, "created": _now(), "cohort": spec.to_dict(),
                "recordings": entries}
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")
    return out / MANIFEST


def read_cohort(cohort_dir) -> list:
    d = Path(cohort_dir)
    m = d / MANIFEST
    if not m.exists():
        raise MissingCohortError(
            f"no cohort found at {d} (missing {MANIFEST}); run `fogdetect generate` first")
    manifest = json.loads(m.read_text())
    return [read_recording(d / e["file"]) for e in manifest["recordings"]]


def classifier_for(cfg: PipelineConfig):
    if cfg.model == "fog_transformer":
        return TransformerClassifier(train=cfg.training)
    return ForestClassifier()


def run_loso(cfg: PipelineConfig, cohort_dir, out_dir, jobs: int = 1) -> LosoReport:
    """Train and score every fold; write the report, traces and model archives."""
    cfg.validate()
    recordings = read_cohort(cohort_dir)
    pre = cfg.preprocessing
    ds = build_dataset(recordings, overlap=pre.overlap, n_prev=pre.n_prev, zero_phase=pre.zero_phase)
    out = Path(out_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    (out / "archives").mkdir(parents=True, exist_ok=True)

    def persist(fold, trace, fitted):
        stem = f"{fold.subject_id}_r{fold.repeat}"
        trace.write_csv(out / "traces" / f"trace_{stem}.csv")
        if cfg.model == "fog_transformer":
            save_weights(fitted.model, out / "archives" / f"{stem}.fogw",
                         extra={"subject_id": fold.subject_id, "repeat": fold.repeat, "seed": fold.seed})
        else:
            save_forest(fitted, out / "archives" / f"{stem}.npz")

    report = loso_cv(ds, classifier_for(cfg), repeats=cfg.evaluation.repeats, seed=cfg.seed,
                     jobs=jobs, on_fold=persist)
    report.write_csv(out / "report.csv")
    folds = [{"subject_id": f.subject_id, "repeat": f.repeat, "seed": f.seed,
              "sensitivity": f.sensitivity, "specificity": f.specificity, "auc": f.auc,
              "eer": f.eer, "threshold": f.threshold, "n_pos": f.n_pos, "n_neg": f.n_neg,
              "auc_defined": f.auc_defined, **f.meta} for f in report.folds]
    (out / "folds.json").write_text(json.dumps({"schema_version": SCHEMA_VERSION, "folds": folds},
                                               indent=2) + "\n")
    (out / "run_manifest.json").write_text(json.dumps(
        {"schema_version": SCHEMA_VERSION, "created": _now(), "config": cfg.to_dict(),
         "n_windows": len(ds), "skipped": report.skipped}, indent=2) + "\n")
    return report


# ------------------------------------------------------------- postprocess

@dataclass
class TraceAnalysis:
    name: str
    threshold: float | None
    sweep: object | None
    segments: list
    hop_seconds: float
    flags: list


def analyse_trace(trace: PredictionTrace, cfg: PipelineConfig, name: str | None = None) -> TraceAnalysis:
    """Pick the operating threshold and binarise the trace per recording."""
    pp = cfg.postprocessing
    flags = []
    sweep = None
    try:
        sweep = threshold_sweep(trace.labels, trace.scores, pp.sweep_lo, pp.sweep_hi, pp.sweep_step)
        threshold = sweep.eer_threshold if pp.threshold_strategy == "eer" else sweep.fmax_threshold
    except UndefinedMetricError:
        flags.append("single_class_trace")
        threshold = None
    segments = []
    for rec in trace.recordings():
        pred = np.zeros(len(rec), dtype=bool) if threshold is None else rec.scores >= threshold
        segments.append((rec.labels, pred))
    return TraceAnalysis(name or f"{trace.subject_id}_r{trace.repeat}", threshold, sweep, segments,
                         trace.hop_seconds, flags)


def segment_reports(segments, hop_seconds: float, max_len: int) -> dict:
    y = np.concatenate([s[0] for s in segments])
    p = np.concatenate([s[1] for s in segments])
    short = [remove_short_episodes(pp, max_len, yy) for yy, pp in segments]
    after = np.concatenate([s.predicted for s in short])
    before_m = metrics_bundle(confusion_from_binary(y, p))
    after_m = metrics_bundle(confusion_from_binary(y, after))
    return {
        "schema_version": SCHEMA_VERSION,
        "metrics": before_m.as_dict(),
        "episodes": episode_detection_report(segments, hop_seconds).to_dict(),
        "false_episodes": ffe_report(segments, hop_seconds).to_dict(),
        "clusters": cluster_analysis(segments, hop_seconds).to_dict(),
        "short_episode_removal": {
            "max_len": max_len,
            "n_removed": int(sum(s.n_removed for s in short)),
            "metrics_after": after_m.as_dict(),
            "delta_f_score": after_m.f_score - before_m.f_score,
            "delta_sensitivity": after_m.sensitivity - before_m.sensitivity,
        },
    }


def write_analysis(a: TraceAnalysis, cfg: PipelineConfig, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = segment_reports(a.segments, a.hop_seconds, cfg.postprocessing.max_len)
    reports["threshold"] = a.threshold
    reports["threshold_strategy"] = cfg.postprocessing.threshold_strategy
    reports["flags"] = a.flags
    if a.sweep is not None:
        reports["sweep_selected"] = {"fmax_threshold": a.sweep.fmax_threshold,
                                     "eer_threshold": a.sweep.eer_threshold}
        (out / "sweep.csv").write_text(a.sweep.to_csv())
    (out / "reports.json").write_text(json.dumps(reports, indent=2, default=_json_default) + "\n")
    y = np.concatenate([s[0] for s in a.segments])
    p = np.concatenate([s[1] for s in a.segments])
    (out / "envelope.csv").write_text(envelope_csv(y, p))
    return reports


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o)}")


def run_postprocess(trace_paths, cfg: PipelineConfig, out_dir) -> dict:
    """One report set per trace plus a pooled set over all recordings."""
    paths = sorted(Path(p) for p in trace_paths)
    if not paths:
        raise ContractError("no trace files given")
    out = Path(out_dir)
    analyses = []
    results = {}
    for path in paths:
        a = analyse_trace(PredictionTrace.read_csv(path), cfg, name=path.stem)
        analyses.append(a)
        results[a.name] = write_analysis(a, cfg, out / a.name)
    pooled = TraceAnalysis("pooled", None, None, [s for a in analyses for s in a.segments],
                           analyses[0].hop_seconds, sorted({f for a in analyses for f in a.flags}))
    results["pooled"] = write_analysis(pooled, cfg, out / "pooled")
    return results
