"""Windowing of 40 Hz recordings and the feature representations.

Windows are 128 samples (3.2 s). A window is FOG when more than half of its
samples are FOG, non-FOG only when none are, and discarded otherwise.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .dsp import BIN_HZ, FFT_SIZE, N_BINS, band_power, rfft128
from .errors import ContractError
from .synthcohort import Recording

WINDOW = FFT_SIZE
HOPS = {50: 64, 75: 32}
FREEZE_BAND = (3.0, 8.0)
LOCOMOTION_BAND = (0.5, 3.0)
FI_EPS = 1e-12
MAZILU_NAMES = ("mean", "std", "var", "spectral_entropy", "spectral_energy",
                "freeze_index", "band_power_0.5_8")


@dataclass
class WindowSet:
    """Retained windows of one recording.

    Windows sit on a grid of step ``hop_samples`` starting at sample 0;
    discarded windows leave holes in ``start_indices`` but keep their place
    on the grid, so previous-window context is always taken at the set's hop.
    """

    subject_id: str
    med_state: str
    hop_samples: int
    signal: np.ndarray  # (n, 3) filtered 40 Hz signal the windows view into
    start_indices: np.ndarray
    labels: np.ndarray  # bool, True = FOG
    fog_fractions: np.ndarray
    n_discarded: int = 0
    too_short: bool = False
    _grid_spectra: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __len__(self):
        return len(self.start_indices)

    @property
    def hop_seconds(self) -> float:
        return self.hop_samples / 40.0

    @property
    def grid_index(self) -> np.ndarray:
        return self.start_indices // self.hop_samples

    @property
    def windows(self) -> np.ndarray:
        """(n_windows, 128, 3) views into ``signal``."""
        if len(self) == 0:
            return np.empty((0, WINDOW, 3))
        return np.stack([self.signal[s:s + WINDOW] for s in self.start_indices])

    def grid_spectra(self) -> np.ndarray:
        """Spectrum64 of every grid window (retained or not): (n_grid, 64, 3)."""
        if self._grid_spectra is None:
            n_grid = (len(self.signal) - WINDOW) // self.hop_samples + 1
            if n_grid <= 0:
                self._grid_spectra = np.empty((0, N_BINS, 3))
            else:
                view = sliding_window_view(self.signal, WINDOW, axis=0)[::self.hop_samples][:n_grid]
                # view: (n_grid, 3, 128)
                self._grid_spectra = rfft128(np.swapaxes(view, 1, 2))
        return self._grid_spectra


def segment(rec: Recording, overlap: int = 75) -> WindowSet:
    if rec.fs_hz != 40:
        raise ContractError(f"segment expects a 40 Hz recording, got {rec.fs_hz} Hz")
    if overlap not in HOPS:
        raise ContractError(f"overlap must be 50 or 75 (%), got {overlap!r}")
    hop = HOPS[overlap]
    n = len(rec)
    if n < WINDOW:
        warnings.warn(f"{rec.stem}: recording shorter than one window", RuntimeWarning)
        return WindowSet(rec.subject_id, rec.med_state, hop, rec.samples,
                         np.empty(0, int), np.empty(0, bool), np.empty(0), 0, True)
    starts = np.arange(0, n - WINDOW + 1, hop)
    csum = np.concatenate([[0], np.cumsum(rec.labels, dtype=np.int64)])
    n_fog = csum[starts + WINDOW] - csum[starts]
    fog = 2 * n_fog > WINDOW
    clean = n_fog == 0
    keep = fog | clean
    return WindowSet(rec.subject_id, rec.med_state, hop, rec.samples, starts[keep],
                     fog[keep], n_fog[keep] / WINDOW, int((~keep).sum()))


def _per_axis_features(w: np.ndarray) -> np.ndarray:
    """(..., 128, 3) -> (..., 3, 7)."""
    spec = rfft128(w)  # (..., 64, 3)
    power = spec ** 2
    energy = power.sum(axis=-2)
    p = power / np.where(energy > 0, energy, 1.0)[..., None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = -np.sum(np.where(p > 0, p * np.log(p), 0.0), axis=-2)
    fb = band_power(spec, *FREEZE_BAND)
    lb = band_power(spec, *LOCOMOTION_BAND)
    fi = fb / np.maximum(lb, FI_EPS)
    both = band_power(spec, 0.5, 8.0)
    mean = w.mean(axis=-2)
    var = w.var(axis=-2)
    return np.stack([mean, np.sqrt(var), var, ent, energy, fi, both], axis=-1)


def mazilu_features(w) -> np.ndarray:
    """21 features, 7 per axis in ``MAZILU_NAMES`` order, axes x, y, z.

    Accepts one (128, 3) window or a batch (n, 128, 3).
    """
    w = np.asarray(w, dtype=float)
    if w.shape[-2:] != (WINDOW, 3):
        raise ContractError(f"expected (..., 128, 3) windows, got {w.shape}")
    f = _per_axis_features(w)
    return f.reshape(f.shape[:-2] + (21,))


def raw_normalized(w) -> np.ndarray:
    """Scale every channel by its own max-abs into [-1, 1]."""
    w = np.asarray(w, dtype=float)
    peak = np.max(np.abs(w), axis=-2, keepdims=True)
    return np.divide(w, peak, out=np.zeros_like(w), where=peak > 0)


def fft_stacked_pair(w_prev, w_curr, prev_start: int, curr_start: int) -> np.ndarray:
    """64 x 6 block: spectra of two adjacent non-overlapping windows,
    channels [prev_x, prev_y, prev_z, curr_x, curr_y, curr_z]."""
    if curr_start - prev_start != WINDOW:
        raise ContractError("stacked windows must be adjacent and non-overlapping (hop 128)")
    return np.concatenate([rfft128(w_prev), rfft128(w_curr)], axis=-1)


@dataclass
class SpectralSequence:
    data: np.ndarray  # (T, 64, 3), oldest first
    n_prev: int
    standardizer: "Standardizer | None" = None


def spectral_sequence(ws: WindowSet, index: int, n_prev: int) -> SpectralSequence | None:
    """Current window ``index`` plus ``n_prev`` previous grid windows.

    Returns None when the window has no full history on the grid.
    """
    if n_prev not in (1, 2, 3):
        raise ContractError(f"n_prev must be 1, 2 or 3, got {n_prev}")
    g = int(ws.grid_index[index])
    if g < n_prev:
        return None
    return SpectralSequence(ws.grid_spectra()[g - n_prev:g + 1].copy(), n_prev)


def spectral_sequences(ws: WindowSet, n_prev: int) -> tuple[np.ndarray, np.ndarray]:
    """Batched form: (sequences (m, T, 64, 3), indices of included windows)."""
    if n_prev not in (1, 2, 3):
        raise ContractError(f"n_prev must be 1, 2 or 3, got {n_prev}")
    g = ws.grid_index
    ok = np.flatnonzero(g >= n_prev)
    spectra = ws.grid_spectra()
    idx = g[ok][:, None] + np.arange(-n_prev, 1)[None, :]
    return spectra[idx], ok


@dataclass
class Standardizer:
    mean: np.ndarray  # (64, 3)
    std: np.ndarray  # (64, 3), floored

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x) - self.mean) / self.std


STD_FLOOR = 1e-8


def fit_standardizer(sequences) -> Standardizer:
    """Per (bin, channel) z-score statistics, pooled over sequences and steps."""
    x = np.asarray(sequences, dtype=float)
    if x.ndim != 4 or x.shape[0] < 2:
        raise ContractError("fit_standardizer needs at least 2 training sequences of shape (T, 64, 3)")
    flat = x.reshape(-1, x.shape[-2], x.shape[-1])
    # shifting by one sample keeps a constant bin's mean exact, so it maps to 0
    dev = flat - flat[0]
    return Standardizer(flat[0] + dev.mean(axis=0), np.maximum(dev.std(axis=0), STD_FLOOR))


def apply_standardizer(st: Standardizer, seq) -> np.ndarray:
    return st.apply(seq)


def write_feature_csv(path, ws: WindowSet, features: np.ndarray, names=None) -> None:
    """One row per window: subject, start_index, label, features..."""
    features = np.asarray(features).reshape(len(ws), -1)
    if names is None:
        names = [f"f{i}" for i in range(features.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subject_id", "med_state", "start_index", "label", *names])
        for s, lab, row in zip(ws.start_indices, ws.labels, features):
            w.writerow([ws.subject_id, ws.med_state, int(s), int(lab), *(f"{v:.9g}" for v in row)])


def mazilu_feature_names() -> list[str]:
    return [f"{ax}_{name}" for ax in "xyz" for name in MAZILU_NAMES]


__all__ = ["WindowSet", "segment", "mazilu_features", "raw_normalized", "fft_stacked_pair",
           "SpectralSequence", "spectral_sequence", "spectral_sequences", "Standardizer",
           "fit_standardizer", "apply_standardizer", "write_feature_csv", "BIN_HZ"]
