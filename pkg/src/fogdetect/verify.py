"""Built-in oracle checks run by ``fogdetect verify``."""
from __future__ import annotations

import itertools
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import dsp
from .errors import FogError
from .fogformer import (REFERENCE_PARAMETER_TARGET, build_fog_transformer, count_trainable_parameters,
                        load_weights, parameter_report, read_archive, save_weights)
from .metrics import eer, roc_auc
from .neural.gradcheck import grad_check, kink_margin
from .neural.layers import Conv1D, Dense, LayerNorm, MultiHeadSelfAttention


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}" + (f": {self.detail}" if self.detail else "")


def _check_gradients() -> CheckResult:
    rng = np.random.default_rng(7)
    cases = [
        (Conv1D(3, 4, 3, rng=rng), (2, 9, 3)),
        (Dense(5, 4, rng=rng), (3, 5)),
        (LayerNorm(6), (2, 3, 6)),
        (MultiHeadSelfAttention(6, heads=2, head_dim=3, rng=rng), (2, 4, 6)),
    ]
    worst = 0.0
    for layer, shape in cases:
        for _, lay, key in layer.named_parameters():
            lay.params[key] = lay.params[key] + 0.1 * rng.standard_normal(lay.params[key].shape)
        worst = max(worst, grad_check(layer, rng.standard_normal(shape)).max_rel_error)
    for _ in range(20):
        model = build_fog_transformer(1, seed=int(rng.integers(1 << 30)), conv_filters=[6, 5, 4],
                                      heads=2, head_dim=3, ff_dim=3, mlp_units=[5, 3], n_blocks=1,
                                      n_bins=32)
        for _, lay, key in model.named_parameters():
            lay.params[key] = lay.params[key] + 0.1 * rng.standard_normal(lay.params[key].shape)
        x = rng.standard_normal((2, 2, 32, 3))
        if kink_margin(model, x) > 1e-3:
            break
    worst = max(worst, grad_check(model, x).max_rel_error)
    return CheckResult("gradients vs finite differences", worst < 1e-5, f"max rel error {worst:.2e}")


def _check_dft() -> CheckResult:
    rng = np.random.default_rng(11)
    x = rng.standard_normal((10, 128))
    k = np.arange(128)
    naive = x @ np.exp(-2j * np.pi * np.outer(k, k) / 128)
    got = dsp.fft128(x)
    err = float(np.max(np.abs(got - naive)) / np.max(np.abs(naive)))
    return CheckResult("radix-2 FFT vs naive DFT", err < 1e-9, f"rel error {err:.1e}")


def _check_filters() -> CheckResult:
    worst = 0.0
    for kind, order, fc in (("lowpass", 2, 15.0), ("highpass", 3, 0.2), ("lowpass", 8, 16.0)):
        fs = 200.0 if order == 8 else 40.0
        f = dsp.design_butterworth(kind, order, fc, fs)
        db = 20 * np.log10(abs(f.response(np.array([fc]), fs)[0]))
        worst = max(worst, abs(db + 3.0103))
    return CheckResult("Butterworth -3.01 dB at cutoff", worst < 0.05, f"max deviation {worst:.4f} dB")


def _check_metrics() -> CheckResult:
    rng = np.random.default_rng(3)
    ok = True
    for _ in range(20):
        y = rng.random(60) < 0.4
        s = np.round(rng.random(60), 1)
        if y.all() or not y.any():
            continue
        pos, neg = s[y], s[~y]
        pairs = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a, b in itertools.product(pos, neg))
        ok &= abs(roc_auc(y, s).auc - pairs / (len(pos) * len(neg))) < 1e-12
        e = eer(y, s)
        ok &= 0.0 <= e.eer <= 1.0
    return CheckResult("AUC vs pair counting", bool(ok))


def _check_parameters() -> CheckResult:
    model = build_fog_transformer(3, seed=0)
    total, breakdown = count_trainable_parameters(model)
    rel = abs(total - REFERENCE_PARAMETER_TARGET) / REFERENCE_PARAMETER_TARGET
    ok = rel <= 0.05 and breakdown["conv1"] == 1664 and breakdown["dense1"] == 2640
    return CheckResult("parameter count", ok, "\n" + parameter_report(model))


def _check_archive_roundtrip() -> CheckResult:
    model = build_fog_transformer(1, seed=5)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "m.fogw"
        save_weights(model, path)
        back = load_weights(path)
    same = all(np.array_equal(a.params[k], b.params[k]) for (_, a, k), (_, b, _) in
               zip(model.named_parameters(), back.named_parameters()))
    return CheckResult("weight archive round-trip", same)


CHECKS: list[Callable[[], CheckResult]] = [
    _check_dft, _check_filters, _check_metrics, _check_parameters, _check_archive_roundtrip,
    _check_gradients,
]


def check_archive(path) -> CheckResult:
    try:
        manifest, _ = read_archive(path)
    except (FogError, OSError) as exc:
        return CheckResult(f"archive {path}", False, str(exc))
    return CheckResult(f"archive {path}", True, f"{len(manifest['arrays'])} arrays, checksum ok")


def run_checks(archives=()) -> list[CheckResult]:
    results = []
    for check in CHECKS:
        try:
            results.append(check())
        except Exception as exc:  # a crashing check is a failing check
            results.append(CheckResult(check.__name__.lstrip("_"), False, repr(exc)))
    results.extend(check_archive(a) for a in archives)
    return results
