"""Signal kernels: Butterworth design, cascaded biquad filtering, decimation
to 40 Hz and the 128-point radix-2 FFT."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal as _sps

from .errors import ContractError, DataError, DomainError
from .synthcohort import Recording

FFT_SIZE = 128
N_BINS = 64
FS_TARGET = 40.0
BIN_HZ = FS_TARGET / FFT_SIZE  # 0.3125


@dataclass(frozen=True)
class SosFilter:
    """Cascade of biquads.

    ``sections`` has one row ``(b0, b1, b2, a1, a2)`` per section, with
    ``a0 == 1`` implied; the cascade is scaled by ``overall_gain``.
    """

    sections: np.ndarray
    overall_gain: float

    def as_scipy_sos(self) -> np.ndarray:
        sos = np.zeros((len(self.sections), 6))
        sos[:, :3] = self.sections[:, :3]
        sos[:, 3] = 1.0
        sos[:, 4:] = self.sections[:, 3:]
        sos[0, :3] *= self.overall_gain
        return sos

    def response(self, f_hz, fs_hz: float) -> np.ndarray:
        """Complex frequency response at ``f_hz``."""
        z = np.exp(1j * 2.0 * np.pi * np.asarray(f_hz, dtype=float) / fs_hz)
        zi = 1.0 / z
        h = np.full(z.shape, self.overall_gain, dtype=complex)
        for b0, b1, b2, a1, a2 in self.sections:
            h *= (b0 + b1 * zi + b2 * zi * zi) / (1.0 + a1 * zi + a2 * zi * zi)
        return h

    def poles(self) -> np.ndarray:
        out = []
        for _, _, _, a1, a2 in self.sections:
            out.extend(np.roots([1.0, a1, a2]) if a2 != 0 else [-a1])
        return np.asarray(out, dtype=complex)


def design_butterworth(kind: str, order: int, fc_hz: float, fs_hz: float) -> SosFilter:
    """Digital Butterworth filter via the bilinear transform with pre-warping.

    The cutoff lands exactly on the -3.0103 dB point of the digital response.
    """
    if kind not in ("lowpass", "highpass"):
        raise DomainError(f"unknown filter kind {kind!r}")
    if not (isinstance(order, (int, np.integer)) and 1 <= order <= 8):
        raise DomainError(f"order must be an integer in 1..8, got {order!r}")
    if not (0.0 < fc_hz < fs_hz / 2.0):
        raise DomainError(f"cutoff {fc_hz} Hz must lie in (0, {fs_hz / 2.0}) Hz")

    k = 2.0 * fs_hz
    warped = k * math.tan(math.pi * fc_hz / fs_hz)
    # left-half-plane poles of the normalised analog prototype
    proto = [np.exp(1j * math.pi * (2 * i + order + 1) / (2 * order)) for i in range(order)]
    analog = [warped * p if kind == "lowpass" else warped / p for p in proto]
    zpoles = [(k + s) / (k - s) for s in analog]
    zero_sign = 1.0 if kind == "lowpass" else -1.0  # zeros at z=-1 (LP) or z=+1 (HP)

    sections = []
    upper = sorted((p for p in zpoles if p.imag > 1e-12), key=lambda p: p.imag)
    for p in upper:
        sections.append((1.0, 2.0 * zero_sign, 1.0, -2.0 * p.real, abs(p) ** 2))
    for p in (p for p in zpoles if abs(p.imag) <= 1e-12):
        sections.append((1.0, zero_sign, 0.0, -p.real, 0.0))
    sections = np.asarray(sections, dtype=float)

    unscaled = SosFilter(sections, 1.0)
    ref_hz = 0.0 if kind == "lowpass" else fs_hz / 2.0
    gain = 1.0 / abs(unscaled.response(ref_hz, fs_hz))
    return SosFilter(sections, float(gain))


def filter_apply(f: SosFilter, x, zero_phase: bool = False) -> np.ndarray:
    """Run ``x`` (n, or n x channels) through the cascade along axis 0.

    Causal transposed direct form II with zero initial state. ``zero_phase``
    runs the cascade forward and backward instead.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DataError("filter input contains non-finite samples")
    sos = f.as_scipy_sos()
    if zero_phase:
        return _sps.sosfiltfilt(sos, x, axis=0)
    return _sps.sosfilt(sos, x, axis=0)


_ANTI_ALIAS = None


def anti_alias_filter() -> SosFilter:
    global _ANTI_ALIAS
    if _ANTI_ALIAS is None:
        _ANTI_ALIAS = design_butterworth("lowpass", 8, 16.0, 200.0)
    return _ANTI_ALIAS


def resample_to_40hz(rec: Recording, zero_phase: bool = False) -> Recording:
    """Anti-alias filter then keep every fifth sample (200 Hz -> 40 Hz)."""
    if rec.fs_hz != 200:
        raise ContractError(f"resample_to_40hz expects a 200 Hz recording, got {rec.fs_hz} Hz")
    y = filter_apply(anti_alias_filter(), rec.samples, zero_phase=zero_phase)
    return Recording(rec.subject_id, rec.med_state, 40.0, y[::5].copy(),
                     rec.labels[::5].copy(), dict(rec.metadata))


def preprocess_recording(rec: Recording, zero_phase: bool = False) -> Recording:
    """Resample to 40 Hz, then 15 Hz low-pass (order 2) and 0.2 Hz high-pass
    (order 3) to drop high-frequency noise and gravity."""
    r40 = resample_to_40hz(rec, zero_phase=zero_phase)
    lp = design_butterworth("lowpass", 2, 15.0, FS_TARGET)
    hp = design_butterworth("highpass", 3, 0.2, FS_TARGET)
    y = filter_apply(hp, filter_apply(lp, r40.samples, zero_phase), zero_phase)
    return Recording(r40.subject_id, r40.med_state, 40.0, y, r40.labels, r40.metadata)


_BITREV = np.array([int(format(i, "07b")[::-1], 2) for i in range(FFT_SIZE)])
_TWIDDLES = {m: np.exp(-2j * np.pi * np.arange(m // 2) / m) for m in (2, 4, 8, 16, 32, 64, 128)}


def fft128(x) -> np.ndarray:
    """Complex 128-point DFT along the last axis (iterative radix-2 DIT)."""
    x = np.asarray(x)
    if x.shape[-1] != FFT_SIZE:
        raise ContractError(f"fft128 needs 128 samples on the last axis, got {x.shape[-1]}")
    a = x[..., _BITREV].astype(complex)
    lead = a.shape[:-1]
    m = 2
    while m <= FFT_SIZE:
        half = m // 2
        blocks = a.reshape(lead + (FFT_SIZE // m, m))
        even = blocks[..., :half]
        odd = blocks[..., half:] * _TWIDDLES[m]
        a = np.concatenate([even + odd, even - odd], axis=-1).reshape(lead + (FFT_SIZE,))
        m *= 2
    return a


def rfft128(window) -> np.ndarray:
    """Magnitudes of bins 0..63 for each channel.

    ``window`` is (128,), (128, C) or batched (..., 128, C); the result has
    64 in place of 128 on the time axis.
    """
    w = np.asarray(window, dtype=float)
    if w.ndim == 1:
        if w.shape[0] != FFT_SIZE:
            raise ContractError(f"rfft128 needs exactly 128 samples, got {w.shape[0]}")
        return np.abs(fft128(w)[:N_BINS])
    if w.shape[-2] != FFT_SIZE:
        raise ContractError(f"rfft128 needs exactly 128 samples per channel, got {w.shape[-2]}")
    spec = fft128(np.swapaxes(w, -1, -2))[..., :N_BINS]
    return np.swapaxes(np.abs(spec), -1, -2)


def bin_frequencies() -> np.ndarray:
    return np.arange(N_BINS) * BIN_HZ


def band_power(spectrum, f_lo: float, f_hi: float) -> np.ndarray | float:
    """Sum of squared magnitudes over bins with centre frequency in [f_lo, f_hi).

    ``spectrum`` is (64,) or (..., 64, C); returns a scalar or per-channel values.
    """
    if not (0.0 <= f_lo < f_hi <= 20.0):
        raise DomainError(f"band [{f_lo}, {f_hi}) must satisfy 0 <= lo < hi <= 20 Hz")
    s = np.asarray(spectrum, dtype=float)
    freqs = bin_frequencies()
    mask = (freqs >= f_lo) & (freqs < f_hi)
    if s.ndim == 1:
        return float(np.sum(s[mask] ** 2))
    return np.sum(s[..., mask, :] ** 2, axis=-2)
