"""Slow, obviously-correct reference implementations used as test oracles.

Nothing here imports the package under test, so a shared bug cannot make an
oracle agree with the code it checks.
"""
from __future__ import annotations

import cmath
import itertools
import math

import numpy as np


def naive_dft(x) -> np.ndarray:
    """O(n^2) DFT along the last axis, one complex exponential at a time."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    out = np.zeros(x.shape, dtype=complex)
    for k in range(n):
        for t in range(n):
            out[..., k] += x[..., t] * cmath.exp(-2j * math.pi * k * t / n)
    return out


def df2t_filter(sections, gain: float, x) -> list[float]:
    """Cascade of direct-form-II-transposed biquads in plain Python floats.

    Each section is (b0, b1, b2, a1, a2) with a0 = 1; ``gain`` scales the input.
    """
    y = [gain * float(v) for v in x]
    for b0, b1, b2, a1, a2 in sections:
        z1 = z2 = 0.0
        out = []
        for v in y:
            o = b0 * v + z1
            z1 = b1 * v - a1 * o + z2
            z2 = b2 * v - a2 * o
            out.append(o)
        y = out
    return y


def butterworth_magnitude(kind: str, order: int, fc: float, fs: float, f) -> np.ndarray:
    """|H| of the bilinear-transformed analog prototype with pre-warping.

    The prewarped analog cutoff maps exactly to ``fc``, so the digital gain at
    frequency f equals the analog gain at tan(pi f / fs) / tan(pi fc / fs).
    """
    w = np.tan(np.pi * np.asarray(f, dtype=float) / fs) / np.tan(np.pi * fc / fs)
    if kind == "lowpass":
        return 1.0 / np.sqrt(1.0 + w ** (2 * order))
    with np.errstate(divide="ignore"):
        return 1.0 / np.sqrt(1.0 + w ** (-2.0 * order))


def pair_count_auc(labels, scores) -> float:
    """Probability a positive outscores a negative, ties counting one half."""
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    total = 0.0
    for a in pos:
        for b in neg:
            total += 1.0 if a > b else 0.5 if a == b else 0.0
    return total / (len(pos) * len(neg))


def exhaustive_eer(labels, scores) -> float:
    """Enumerate every "score >= t" operating point and interpolate FPR = FNR."""
    y = np.asarray(labels, dtype=bool)
    s = np.asarray(scores, dtype=float)
    pts = []
    for t in sorted(set(s.tolist()) | {math.inf}, reverse=True):
        pred = s >= t
        fpr = (pred & ~y).sum() / (~y).sum()
        fnr = (~pred & y).sum() / y.sum()
        pts.append((fpr, fnr))
    for (f0, n0), (f1, n1) in zip(pts, pts[1:]):
        d0, d1 = f0 - n0, f1 - n1
        if d0 == 0:
            return float(f0)
        if d0 < 0 <= d1:
            lam = -d0 / (d1 - d0)
            return float(f0 + lam * (f1 - f0))
    return float(pts[-1][0])


def exact_mann_whitney_p(a, b) -> float:
    """Two-sided permutation p-value of U over all relabelings of the pool."""
    pool = list(a) + list(b)
    n, na = len(pool), len(a)

    def u_stat(idx):
        xs = [pool[i] for i in idx]
        ys = [pool[i] for i in range(n) if i not in idx]
        return sum(1.0 if x > y else 0.5 if x == y else 0.0 for x in xs for y in ys)

    observed = u_stat(set(range(na)))
    centre = na * (n - na) / 2.0
    dev = abs(observed - centre)
    combos = list(itertools.combinations(range(n), na))
    hits = sum(1 for c in combos if abs(u_stat(set(c)) - centre) >= dev - 1e-12)
    return hits / len(combos)


def runs_brute(mask) -> list[tuple[int, int]]:
    """Maximal runs of True as half-open (start, stop) pairs, by scanning."""
    out, start = [], None
    for i, v in enumerate(list(mask) + [False]):
        if v and start is None:
            start = i
        elif not v and start is not None:
            out.append((start, i))
            start = None
    return out


def envelope_brute(x, win: int) -> list[float]:
    """Centered moving RMS with edge shrinkage, one window at a time."""
    n = len(x)
    out = []
    for i in range(n):
        lo = max(i - win // 2, 0)
        hi = min(i - win // 2 + win, n)
        seg = [float(v) ** 2 for v in x[lo:hi]]
        out.append(math.sqrt(sum(seg) / len(seg)))
    return out


def random_trace(rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Bursty labels and noisy predictions that roughly follow them."""
    y = np.zeros(n, dtype=bool)
    i = int(rng.integers(0, 40))
    while i < n:
        length = int(rng.integers(1, 30))
        y[i:i + length] = True
        i += length + int(rng.integers(5, 200))
    flip = rng.random(n) < rng.uniform(0.02, 0.2)
    p = y ^ flip
    return y, p


def gini_best_split(x, w, y, features):
    """Exhaustive weighted-Gini split search in plain Python.

    Returns (feature, threshold) minimising the weighted child impurity;
    ties go to the lowest feature, then the lowest threshold.
    """
    def gini(idx):
        tot = sum(w[i] for i in idx)
        pos = sum(w[i] for i in idx if y[i])
        q = pos / tot
        return tot, 1.0 - q * q - (1.0 - q) ** 2

    best = None
    rows = range(len(y))
    for f in sorted(features):
        vals = sorted(set(float(x[i][f]) for i in rows))
        for a, b in zip(vals, vals[1:]):
            thr = 0.5 * (a + b)
            left = [i for i in rows if x[i][f] <= thr]
            right = [i for i in rows if x[i][f] > thr]
            wl, gl = gini(left)
            wr, gr = gini(right)
            imp = (wl * gl + wr * gr) / (wl + wr)
            if best is None or imp < best[0] - 1e-12:
                best = (imp, f, thr)
    return None if best is None else (best[1], best[2])
