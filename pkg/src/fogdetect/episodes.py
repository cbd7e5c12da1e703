"""Window-level post-processing: threshold sweeps, episode and false-episode
analysis, short-episode removal and envelope clustering.

Reports take a list of segments, one ``(labels, predicted)`` pair of aligned
binary vectors per recording, so runs never join across recordings.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ContractError, DomainError, UndefinedMetricError
from .metrics import confusion, confusion_from_binary, eer, metrics_bundle
from .stats import mann_whitney_u, pearson

SCHEMA_VERSION = 1
ENVELOPE_WINDOW = 110
CLUSTER_THRESHOLD = 0.1
BUCKETS = ("<5", "5-10", ">10")


def _binary(v, name="vector") -> np.ndarray:
    a = np.asarray(v)
    if a.ndim != 1:
        raise ContractError(f"{name} must be one-dimensional")
    if a.dtype != bool and not np.isin(a, (0, 1)).all():
        raise ContractError(f"{name} must be binary")
    return a.astype(bool)


def _aligned(labels, predicted) -> tuple[np.ndarray, np.ndarray]:
    y = _binary(labels, "labels")
    p = _binary(predicted, "predicted")
    if len(y) != len(p):
        raise ContractError("label and prediction vectors must be aligned")
    return y, p


def _segments(segments) -> list[tuple[np.ndarray, np.ndarray]]:
    return [_aligned(y, p) for y, p in segments]


# ------------------------------------------------------------------ episodes

@dataclass(frozen=True)
class Episode:
    start: int
    n_windows: int
    duration_s: float

    @property
    def stop(self) -> int:
        return self.start + self.n_windows


def runs(mask) -> list[tuple[int, int]]:
    """Maximal runs of True as (start, stop) half-open pairs."""
    m = np.concatenate([[0], _binary(mask).astype(np.int8), [0]])
    d = np.diff(m)
    return list(zip(np.flatnonzero(d == 1).tolist(), np.flatnonzero(d == -1).tolist()))


def find_episodes(binary, hop_seconds: float) -> list[Episode]:
    if not hop_seconds > 0:
        raise ContractError("hop_seconds must be positive")
    return [Episode(s, e - s, (e - s) * hop_seconds) for s, e in runs(binary)]


def duration_bucket(duration_s: float) -> str:
    """[0, 5) -> "<5", [5, 10] -> "5-10", (10, inf) -> ">10"."""
    if duration_s < 5.0:
        return "<5"
    if duration_s <= 10.0:
        return "5-10"
    return ">10"


def _percent(num: float, den: float) -> float | None:
    return None if den == 0 else 100.0 * num / den


def _mean(values) -> float | None:
    return float(np.mean(values)) if len(values) else None


@dataclass
class EpisodeReport:
    n_episodes: int
    detected_percent: float | None
    mean_fog_detected_percent: float | None
    buckets: dict
    empty: bool
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return asdict(self)


def _episode_records(y, p, hop_seconds):
    out = []
    for ep in find_episodes(y, hop_seconds):
        hits = int(p[ep.start:ep.stop].sum())
        out.append((ep.duration_s, hits > 0, 100.0 * hits / ep.n_windows))
    return out


def episode_detection_report(segments, hop_seconds: float) -> EpisodeReport:
    """Share of labeled episodes with at least one predicted-FOG window and the
    mean share of each episode's windows predicted as FOG, overall and per
    duration bucket."""
    recs = []
    for y, p in _segments(segments):
        recs.extend(_episode_records(y, p, hop_seconds))
    buckets = {}
    for b in BUCKETS:
        sel = [r for r in recs if duration_bucket(r[0]) == b]
        buckets[b] = {
            "n_episodes": len(sel),
            "detected_percent": _percent(sum(r[1] for r in sel), len(sel)),
            "mean_fog_detected_percent": _mean([r[2] for r in sel]),
        }
    return EpisodeReport(len(recs), _percent(sum(r[1] for r in recs), len(recs)),
                         _mean([r[2] for r in recs]), buckets, not recs)


@dataclass
class FfeReport:
    n_predicted_episodes: int
    n_ffe: int
    ffe_percent: float | None
    duration_mean_s: float | None
    duration_std_s: float | None
    within_5s_percent: float | None
    within_10s_percent: float | None
    distances_s: list
    empty: bool
    distances_undefined: bool
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return asdict(self)


def ffe_distance(labels, start: int, stop: int) -> int | None:
    """Windows between a predicted run [start, stop) and the nearest labeled
    episode: start minus the last window of the previous episode, or first
    window of the next episode minus the run's last window. None without
    labeled FOG on either side."""
    y = _binary(labels)
    before = np.flatnonzero(y[:start])
    after = np.flatnonzero(y[stop:])
    cands = []
    if len(before):
        cands.append(start - int(before[-1]))
    if len(after):
        cands.append(stop + int(after[0]) - (stop - 1))
    return min(cands) if cands else None


def _ffe_records(y, p):
    n_pred, out = 0, []
    for s, e in runs(p):
        n_pred += 1
        if not y[s:e].any():
            out.append((e - s, ffe_distance(y, s, e)))
    return n_pred, out


def ffe_report(segments, hop_seconds: float) -> FfeReport:
    n_pred, recs = 0, []
    for y, p in _segments(segments):
        k, r = _ffe_records(y, p)
        n_pred += k
        recs.extend(r)
    durations = [n * hop_seconds for n, _ in recs]
    dist = [d * hop_seconds for _, d in recs if d is not None]
    undefined = any(d is None for _, d in recs)
    return FfeReport(
        n_pred, len(recs), _percent(len(recs), n_pred),
        _mean(durations), float(np.std(durations)) if durations else None,
        _percent(sum(d < 5.0 for d in dist), len(dist)),
        _percent(sum(d < 10.0 for d in dist), len(dist)),
        dist, n_pred == 0, undefined)


@dataclass
class ShortRemoval:
    predicted: np.ndarray
    max_len: int
    n_removed: int
    delta_f_score: float | None = None
    delta_sensitivity: float | None = None


def remove_short_episodes(predicted, max_len: int, labels=None) -> ShortRemoval:
    """Clear predicted runs of at most ``max_len`` windows."""
    if max_len not in (1, 2, 3):
        raise DomainError("max_len must be 1, 2 or 3")
    p = _binary(predicted, "predicted")
    out = p.copy()
    removed = 0
    for s, e in runs(p):
        if e - s <= max_len:
            out[s:e] = False
            removed += 1
    res = ShortRemoval(out, max_len, removed)
    if labels is not None:
        y, _ = _aligned(labels, p)
        before = metrics_bundle(confusion_from_binary(y, p))
        after = metrics_bundle(confusion_from_binary(y, out))
        res.delta_f_score = after.f_score - before.f_score
        res.delta_sensitivity = after.sensitivity - before.sensitivity
    return res


# ------------------------------------------------------------ threshold sweep

@dataclass
class SweepResult:
    thresholds: np.ndarray
    rows: list  # MetricsBundle per threshold
    fmax_threshold: float
    eer_threshold: float
    schema_version: int = SCHEMA_VERSION

    def to_csv(self) -> str:
        lines = ["threshold,sensitivity,specificity,accuracy,precision,f_score,geometric_mean"]
        for t, b in zip(self.thresholds, self.rows):
            lines.append(f"{t:.4f},{b.sensitivity:.6f},{b.specificity:.6f},{b.accuracy:.6f},"
                         f"{b.precision:.6f},{b.f_score:.6f},{b.geometric_mean:.6f}")
        return "\n".join(lines) + "\n"


def sweep_thresholds(lo: float = 0.2, hi: float = 0.8, step: float = 0.01) -> np.ndarray:
    if not lo < hi:
        raise DomainError("threshold sweep needs lo < hi")
    if not step > 0:
        raise DomainError("step must be positive")
    n = int(math.floor((hi - lo) / step + 1e-9))
    t = np.round(lo + step * np.arange(n + 1), 10)
    if t[-1] < hi - 1e-12:
        t = np.append(t, hi)
    return t


def threshold_sweep(labels, scores, lo: float = 0.2, hi: float = 0.8,
                    step: float = 0.01) -> SweepResult:
    thresholds = sweep_thresholds(lo, hi, step)
    y = _binary(labels, "labels")
    if y.all() or not y.any():
        raise UndefinedMetricError("threshold sweep needs both classes")
    rows = [metrics_bundle(confusion(y, scores, float(t))) for t in thresholds]
    f = np.array([r.f_score for r in rows])
    best = float(thresholds[int(np.argmax(f))])  # lowest threshold among ties
    return SweepResult(thresholds, rows, best, eer(y, scores).threshold)


# ------------------------------------------------------------------ clusters

def moving_rms_envelope(x, win: int = ENVELOPE_WINDOW) -> np.ndarray:
    """Centered moving RMS over ``win`` samples, shrinking at the edges.

    Sample i averages over [i - win//2, i + win - win//2 - 1] clipped to the
    signal.
    """
    if win < 1:
        raise DomainError("win must be >= 1")
    v = np.asarray(x, dtype=float).reshape(-1)
    n = len(v)
    if n == 0:
        return np.empty(0)
    c = np.concatenate([[0.0], np.cumsum(v * v)])
    i = np.arange(n)
    lo = np.maximum(i - win // 2, 0)
    hi = np.minimum(i + win - win // 2, n)
    return np.sqrt(np.maximum(c[hi] - c[lo], 0.0) / (hi - lo))


@dataclass
class ClusterReport:
    pearson_r: float | None
    pearson_p: float | None
    n_labeled_clusters: int
    n_predicted_clusters: int
    detected_percent: float | None
    fog_detected_per_cluster_percent: float | None
    false_percent: float | None
    true_durations_min: list
    false_durations_min: list
    true_fog_content_percent: list
    false_fog_content_percent: list
    duration_mwu_p: float | None
    content_mwu_p: float | None
    undefined: list = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class _ClusterItems:
    labeled: list  # (detected, fog_detected_fraction)
    true_pred: list  # (duration_min, content_percent)
    false_pred: list


def _cluster_items(y, p, hop_seconds, win, threshold) -> tuple[_ClusterItems, np.ndarray, np.ndarray]:
    env_y = moving_rms_envelope(y, win)
    env_p = moving_rms_envelope(p, win)
    pred_clusters = runs(env_p > threshold)
    in_pred = np.zeros(len(p), dtype=bool)
    for s, e in pred_clusters:
        in_pred[s:e] = True
    labeled = []
    for s, e in runs(env_y > 0.0):
        fog = y[s:e]
        labeled.append((bool(p[s:e].any()), float((fog & in_pred[s:e]).sum() / fog.sum())))
    true_pred, false_pred = [], []
    for s, e in pred_clusters:
        item = ((e - s) * hop_seconds / 60.0, 100.0 * float(p[s:e].mean()))
        (true_pred if y[s:e].any() else false_pred).append(item)
    return _ClusterItems(labeled, true_pred, false_pred), env_y, env_p


def cluster_analysis(segments, hop_seconds: float, win: int = ENVELOPE_WINDOW,
                     threshold: float = CLUSTER_THRESHOLD) -> ClusterReport:
    """Labeled clusters: envelope of the labels > 0. Predicted clusters:
    envelope of the predictions > ``threshold``. A labeled cluster is detected
    when any window inside it is predicted FOG; a predicted cluster is false
    when it holds no labeled FOG window."""
    labeled, true_pred, false_pred = [], [], []
    env_y, env_p = [], []
    for y, p in _segments(segments):
        items, ey, ep = _cluster_items(y, p, hop_seconds, win, threshold)
        labeled += items.labeled
        true_pred += items.true_pred
        false_pred += items.false_pred
        env_y.append(ey)
        env_p.append(ep)
    undefined = []
    r = pv = None
    try:
        pr = pearson(np.concatenate(env_y), np.concatenate(env_p))
        r, pv = pr.r, pr.p
    except (UndefinedMetricError, ContractError):
        undefined.append("pearson")
    n_pred = len(true_pred) + len(false_pred)
    dur_p = cont_p = None
    if true_pred and false_pred:
        dur_p = mann_whitney_u([d for d, _ in true_pred], [d for d, _ in false_pred]).p
        cont_p = mann_whitney_u([c for _, c in true_pred], [c for _, c in false_pred]).p
    else:
        undefined.append("mann_whitney")
    if not labeled:
        undefined.append("labeled_clusters")
    if not false_pred:
        undefined.append("false_clusters")
    return ClusterReport(
        r, pv, len(labeled), n_pred,
        _percent(sum(d for d, _ in labeled), len(labeled)),
        None if not labeled else 100.0 * float(np.mean([f for _, f in labeled])),
        _percent(len(false_pred), n_pred),
        [d for d, _ in true_pred], [d for d, _ in false_pred],
        [c for _, c in true_pred], [c for _, c in false_pred],
        dur_p, cont_p, undefined)


def envelope_csv(labels, predicted, win: int = ENVELOPE_WINDOW) -> str:
    y, p = _aligned(labels, predicted)
    ey = moving_rms_envelope(y, win)
    ep = moving_rms_envelope(p, win)
    lines = ["window_index,labeled_envelope,predicted_envelope"]
    lines += [f"{i},{a:.9g},{b:.9g}" for i, (a, b) in enumerate(zip(ey, ep))]
    return "\n".join(lines) + "\n"
