"""Synthetic multi-subject accelerometer cohort and the recording file format.

The generator stands in for home recordings of a waist-worn triaxial
accelerometer (200 Hz, +-6 g). Walking is a sum of three gait harmonics at a
subject-specific cadence, freezing is attenuated gait plus a band-limited
trembling burst in the upper freeze band, and standing is the sensor noise
floor. Some standing bouts are "tremulous standing": non-FOG motion with the
same gait residual and tremor amplitude as freezing, but centred lower in
the band, so amplitude alone does not separate the classes. Everything is a
pure function of :class:`CohortSpec`.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import seeding
from .errors import ConfigurationError, ParseError, ValidationError

MED_STATES = ("ON", "OFF")
FULL_SCALE_G = 6.0
SOURCE_FS = 200.0
QUANTUM_G = 1e-6
NOISE_FLOOR_G = 0.01


@dataclass
class Recording:
    subject_id: str
    med_state: str
    fs_hz: float
    samples: np.ndarray  # (n, 3) in g
    labels: np.ndarray  # (n,) bool, True = FOG
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        self.labels = np.asarray(self.labels, dtype=bool)
        if self.med_state not in MED_STATES:
            raise ValidationError(f"med_state must be ON or OFF, got {self.med_state!r}")
        if self.samples.ndim != 2 or self.samples.shape[1] != 3:
            raise ValidationError(f"samples must be n x 3, got {self.samples.shape}")
        if len(self.samples) != len(self.labels) or len(self.labels) < 1:
            raise ValidationError("samples and labels must have the same non-zero length")
        if not np.all(np.isfinite(self.samples)):
            raise ValidationError("samples contain non-finite values")
        if np.max(np.abs(self.samples)) > FULL_SCALE_G:
            raise ValidationError("samples exceed the +-6 g sensor range")

    def __len__(self):
        return len(self.labels)

    def __eq__(self, other):
        if not isinstance(other, Recording):
            return NotImplemented
        return (self.subject_id == other.subject_id and self.med_state == other.med_state
                and self.fs_hz == other.fs_hz and self.metadata == other.metadata
                and np.array_equal(self.samples, other.samples)
                and np.array_equal(self.labels, other.labels))

    @property
    def fog_fraction(self) -> float:
        return float(self.labels.mean())

    @property
    def stem(self) -> str:
        return f"{self.subject_id}_{self.med_state}"


@dataclass
class CohortSpec:
    n_subjects: int = 8
    minutes_per_state: float = 20.0
    target_fog_fraction: float = 0.105
    difficulty: float = 0.0
    # log-normal episode durations: median 5 s, sigma 0.85 puts ~80% below 10 s
    episode_median_s: float = 5.0
    episode_sigma: float = 0.85
    seed: int = 20220514
    # per-subject FOG burden (log-normal spread around the cohort target)
    burden_spread: float = 0.35
    off_fog_share: float = 0.75
    on_fog_probability: float = 0.67
    # share of standing bouts (halved when ON) replaced by non-FOG "tremulous
    # standing": FOG-like motion with tremor lower in the 3-8 Hz band
    lookalike_share: float = 0.35

    def validate(self) -> None:
        if not isinstance(self.n_subjects, (int, np.integer)) or self.n_subjects < 2:
            raise ConfigurationError("n_subjects must be an integer >= 2")
        if not self.minutes_per_state > 0:
            raise ConfigurationError("minutes_per_state must be positive")
        if not 0.0 < self.target_fog_fraction < 1.0:
            raise ConfigurationError("target_fog_fraction must lie in (0, 1)")
        if not 0.0 <= self.difficulty <= 1.0:
            raise ConfigurationError("difficulty must lie in [0, 1]")
        if not (self.episode_median_s > 0 and self.episode_sigma > 0):
            raise ConfigurationError("episode duration parameters must be positive")
        if self.burden_spread < 0 or not 0.0 <= self.off_fog_share <= 1.0:
            raise ConfigurationError("invalid FOG burden parameters")
        if not 0.0 <= self.on_fog_probability <= 1.0:
            raise ConfigurationError("on_fog_probability must lie in [0, 1]")
        if not 0.0 <= self.lookalike_share <= 1.0:
            raise ConfigurationError("lookalike_share must lie in [0, 1]")
        if not (0 <= int(self.seed) < 2**64):
            raise ConfigurationError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CohortSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown cohort fields: {sorted(unknown)}")
        return cls(**d)


def subject_id(index: int) -> str:
    return f"S{index + 1:02d}"


@dataclass(frozen=True)
class _SubjectProfile:
    cadence_hz: float
    harmonics: tuple  # relative amplitudes of gait harmonics 1..3
    gait_scale: float
    tremor_center_hz: float
    tremor_g: float
    fog_gait_residual: float
    lookalike_center_hz: float
    off_fraction: float
    on_fraction: float


def _recording_fractions(spec: CohortSpec) -> list[tuple[float, float]]:
    """(OFF, ON) FOG fraction per subject; averages to the cohort target."""
    r = seeding.rng(spec.seed, "burden")
    w = np.exp(spec.burden_spread * r.standard_normal(spec.n_subjects))
    w = w / w.mean()
    on_has_fog = r.random(spec.n_subjects) < spec.on_fog_probability
    out = []
    for i in range(spec.n_subjects):
        total = 2.0 * spec.target_fog_fraction * w[i]
        if on_has_fog[i]:
            off, on = total * spec.off_fog_share, total * (1.0 - spec.off_fog_share)
        else:
            off, on = total, 0.0
        out.append((min(off, 0.45), min(on, 0.45)))
    return out


def _profile(spec: CohortSpec, index: int) -> _SubjectProfile:
    r = seeding.rng(spec.seed, "subject", index)
    off, on = _recording_fractions(spec)[index]
    return _SubjectProfile(
        cadence_hz=r.uniform(1.5, 2.5),
        harmonics=(1.0, r.uniform(0.25, 0.6), r.uniform(0.1, 0.35)),
        gait_scale=r.uniform(0.7, 1.3),
        tremor_center_hz=r.uniform(6.0, 6.5),
        tremor_g=r.uniform(0.10, 0.25),
        fog_gait_residual=r.uniform(0.1, 0.3),
        lookalike_center_hz=r.uniform(4.25, 4.5),
        off_fraction=off,
        on_fraction=on,
    )


def _episode_durations(spec: CohortSpec, r: np.random.Generator, fog_total_s: float,
                       require_one: bool) -> list[float]:
    out: list[float] = []
    remaining = fog_total_s
    while remaining >= 1.0:
        d = float(np.clip(spec.episode_median_s * math.exp(spec.episode_sigma * r.standard_normal()),
                          1.0, 60.0))
        if d > remaining:
            d = remaining
        out.append(d)
        remaining -= d
    if remaining > 0 and out:
        out[-1] += remaining
    if not out and require_one:
        out.append(float(np.clip(spec.episode_median_s * math.exp(spec.episode_sigma
                                                                   * r.standard_normal()), 1.0, 60.0)))
    return out


# activity codes in the generated timeline
STAND, WALK, FOG = 0, 1, 2


def _timeline(spec: CohortSpec, r: np.random.Generator, n: int, fs: float,
              fog_fraction: float, require_fog: bool) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample activity codes and a festination (pre-freeze) ramp in [0, 1]."""
    durations = _episode_durations(spec, r, fog_fraction * n / fs, require_fog)
    fog_lens = [max(1, int(round(d * fs))) for d in durations]
    k = len(fog_lens)
    free = n - sum(fog_lens)
    min_gap = int(4 * fs)
    if k and free < (k + 1) * min_gap:
        raise ConfigurationError("recording too short for the requested FOG burden")
    activity = np.empty(n, dtype=np.int8)
    ramp = np.zeros(n)

    inner = max(free - (k - 1) * min_gap, 0) if k > 1 else free
    split = r.dirichlet(np.full(k + 1, 0.6)) * inner if k else np.array([float(free)])
    gaps = np.floor(split).astype(int)
    if k > 1:
        gaps[1:-1] += min_gap
    gaps[-1] += free - gaps.sum()

    pos = 0
    for j, gap in enumerate(gaps):
        _fill_free(r, activity, pos, gap, fs,
                   walk_before=j < k, walk_after=j > 0)
        pos += gap
        if j < k:
            activity[pos:pos + fog_lens[j]] = FOG
            pre = int(min(3 * fs, gap))
            ramp[pos - pre:pos] = np.linspace(0.0, 1.0, pre, endpoint=False)
            pos += fog_lens[j]
    return activity, ramp


def _fill_free(r, activity, start, length, fs, walk_before, walk_after):
    """Alternate walking and standing bouts; freezes are flanked by walking."""
    if length <= 0:
        return
    seg = activity[start:start + length]
    pos = 0
    state = WALK if walk_after or r.random() < 0.5 else STAND
    while pos < length:
        median = 25.0 if state == WALK else 12.0
        bout = int(fs * median * math.exp(0.6 * r.standard_normal()))
        bout = max(bout, int(2 * fs))
        seg[pos:pos + bout] = state
        pos += bout
        state = STAND if state == WALK else WALK
    if walk_after:
        seg[:int(min(2 * fs, length))] = WALK
    if walk_before:
        seg[length - int(min(4 * fs, length)):] = WALK


def _smooth(x: np.ndarray, width: int) -> np.ndarray:
    if width <= 1:
        return x
    kernel = np.ones(width) / width
    return np.convolve(np.pad(x, (width // 2, width - 1 - width // 2), mode="edge"), kernel, "valid")


def _band_noise(r: np.random.Generator, n: int, fs: float, lo: float, hi: float) -> np.ndarray:
    spec = np.fft.rfft(r.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / fs)
    spec[(f < lo) | (f >= hi)] = 0.0
    x = np.fft.irfft(spec, n)
    return x / (np.std(x) + 1e-12)


def generate_subject(spec: CohortSpec, subject_index: int, state: str) -> Recording:
    """One 200 Hz recording for ``subject_index`` in medication ``state``."""
    spec.validate()
    if not 0 <= subject_index < spec.n_subjects:
        raise ConfigurationError(f"subject_index {subject_index} outside 0..{spec.n_subjects - 1}")
    if state not in MED_STATES:
        raise ConfigurationError(f"state must be ON or OFF, got {state!r}")
    prof = _profile(spec, subject_index)
    r = seeding.rng(spec.seed, "recording", subject_index, state)
    fs = SOURCE_FS
    n = int(round(spec.minutes_per_state * 60.0 * fs))
    d = spec.difficulty
    fog_fraction = prof.off_fraction if state == "OFF" else prof.on_fraction

    activity, ramp = _timeline(spec, r, n, fs, fog_fraction, require_fog=state == "OFF")
    labels = activity == FOG

    akinetic = np.zeros(n, dtype=bool)
    if d > 0:
        starts = np.flatnonzero(np.diff(np.concatenate([[0], labels.astype(np.int8)])) == 1)
        ends = np.flatnonzero(np.diff(np.concatenate([labels.astype(np.int8), [0]])) == -1) + 1
        for s, e in zip(starts, ends):
            if r.random() < 0.3 * d:
                akinetic[s:e] = True

    residual = prof.fog_gait_residual + 0.4 * d
    gait_target = np.where(activity == WALK, 1.0, np.where(activity == FOG, residual, 0.0))
    gait_target[akinetic] = 0.0
    look = _lookalike_bouts(spec, subject_index, state, activity)
    gait_target[look] = prof.fog_gait_residual
    gait_env = _smooth(gait_target, int(0.4 * fs))
    tremor_env = _smooth(((activity == FOG) & ~akinetic).astype(float), int(0.2 * fs))
    look_env = _smooth(look.astype(float), int(0.2 * fs))
    look_rng = seeding.rng(spec.seed, "lookalike-signal", subject_index, state)

    cadence_scale = 1.05 if state == "ON" else 1.0
    drift = _smooth(r.standard_normal(n), int(5 * fs)) * math.sqrt(5 * fs)
    cadence = prof.cadence_hz * cadence_scale * (1.0 + 0.03 * drift + 0.15 * ramp)
    phase = 2.0 * np.pi * np.cumsum(cadence) / fs

    gait_scale = prof.gait_scale * (1.1 if state == "ON" else 1.0)
    axis_amp = np.array([0.12, 0.20, 0.30]) * gait_scale
    trem_g = (1.0 - d) * prof.tremor_g + d * NOISE_FLOOR_G
    lo = max(prof.tremor_center_hz - 1.25 - 2.5 * d, 0.5)
    hi = prof.tremor_center_hz + 1.25

    x = np.zeros((n, 3))
    for c in range(3):
        offsets = r.uniform(0, 2 * np.pi, 3)
        if c == 0:
            # mediolateral sway at stride frequency (half the step cadence)
            gait = sum(h * np.sin((i + 1) * phase / 2.0 + offsets[i])
                       for i, h in enumerate(prof.harmonics))
        else:
            gait = sum(h * np.sin((i + 1) * phase + offsets[i])
                       for i, h in enumerate(prof.harmonics))
        tremor = _band_noise(r, n, fs, lo, hi)
        if look.any():
            x[:, c] += prof.tremor_g * look_env * _band_noise(
                look_rng, n, fs, prof.lookalike_center_hz - 1.25, prof.lookalike_center_hz + 1.25)
        x[:, c] += (axis_amp[c] * gait * gait_env + trem_g * tremor * tremor_env
                   + NOISE_FLOOR_G * r.standard_normal(n))

    tilt = _smooth(r.standard_normal(n), int(20 * fs)) * 0.5
    x[:, 0] += 0.05 * tilt
    x[:, 2] += 1.0  # gravity on the vertical axis
    x = np.clip(np.round(x / QUANTUM_G) * QUANTUM_G, -FULL_SCALE_G, FULL_SCALE_G)
    return Recording(subject_id(subject_index), state, fs, x, labels)


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    m = np.concatenate([[0], mask.astype(np.int8), [0]])
    d = np.diff(m)
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)))


def _lookalike_bouts(spec: CohortSpec, subject_index: int, state: str,
                     activity: np.ndarray) -> np.ndarray:
    r = seeding.rng(spec.seed, "lookalike", subject_index, state)
    share = spec.lookalike_share * (1.0 if state == "OFF" else 0.5)
    out = np.zeros(len(activity), dtype=bool)
    for s, e in _runs(activity == STAND):
        if r.random() < share:
            out[s:e] = True
    return out


def generate_cohort(spec: CohortSpec) -> list[Recording]:
    """OFF and ON recordings for every subject, in subject order."""
    spec.validate()
    return [generate_subject(spec, i, state)
            for i in range(spec.n_subjects) for state in ("OFF", "ON")]


def cohort_fog_fraction(recordings) -> float:
    total = sum(len(r) for r in recordings)
    return sum(int(r.labels.sum()) for r in recordings) / total


# --- file format ---------------------------------------------------------

CSV_HEADER = ["sample_index", "ax_g", "ay_g", "az_g", "fog_label"]


def _format_column(values: np.ndarray) -> np.ndarray:
    """At least 9 significant digits, widened to 17 where 9 do not round-trip."""
    text = np.char.mod("%.9g", values)
    bad = text.astype(float) != values
    if bad.any():
        text = text.astype(object)
        text[bad] = np.char.mod("%.17g", values[bad])
    return text


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def write_recording(rec: Recording, path) -> None:
    path = Path(path)
    cols = [_format_column(rec.samples[:, c]) for c in range(3)]
    lab = rec.labels.astype(np.int8)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        fh.writelines(f"{i},{a},{b},{c},{l}\n" for i, a, b, c, l in zip(range(len(lab)), *cols, lab))
    meta = {"subject_id": rec.subject_id, "med_state": rec.med_state, "fs_hz": rec.fs_hz}
    if rec.metadata:
        meta["metadata"] = rec.metadata
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_recording(path) -> Recording:
    path = Path(path)
    try:
        meta = json.loads(sidecar_path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{sidecar_path(path)}: malformed JSON sidecar ({exc})") from exc
    for key in ("subject_id", "med_state", "fs_hz"):
        if key not in meta:
            raise ParseError(f"{sidecar_path(path)}: missing field {key!r}")

    samples, labels = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise ParseError(f"{path}: line 1: expected header {CSV_HEADER}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 5:
                raise ParseError(f"{path}: line {lineno}: expected 5 fields, got {len(row)}")
            try:
                idx = int(row[0])
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: field 'sample_index' is not an integer: {row[0]!r}")
            if idx != lineno - 2:
                raise ParseError(f"{path}: line {lineno}: sample_index {idx} out of sequence")
            vals = []
            for name, cell in zip(CSV_HEADER[1:4], row[1:4]):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ParseError(f"{path}: line {lineno}: field {name!r} is not numeric: {cell!r}")
            samples.append(vals)
            try:
                lab = int(row[4])
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: field 'fog_label' is not an integer: {row[4]!r}")
            if lab not in (0, 1):
                raise ValidationError(f"{path}: line {lineno}: fog_label must be 0 or 1, got {lab}")
            labels.append(lab)
    if not labels:
        raise ParseError(f"{path}: no samples")
    return Recording(meta["subject_id"], meta["med_state"], meta["fs_hz"],
                     np.asarray(samples), np.asarray(labels, dtype=bool), meta.get("metadata", {}))
