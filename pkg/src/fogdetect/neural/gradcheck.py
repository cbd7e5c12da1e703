"""Central finite-difference check of hand-written gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import Layer

DEFAULT_STEP = 1e-5
# entries whose analytic and numeric gradients are both below this are
# compared in absolute terms, so round-off on near-zero entries (about
# 1e-11 here) is not reported as a relative blow-up
ABS_FLOOR = 1e-4


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_array: dict = field(default_factory=dict)
    tolerance: float = 1e-5

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def relative_error(a, n, floor=ABS_FLOOR) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    n = np.asarray(n, dtype=float)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def grad_check(fragment, x, tolerance: float = 1e-5, step: float = DEFAULT_STEP,
               seed: int = 0, check_input: bool = True, backward_scale: float = 1.0,
               loss=None, max_entries: int | None = None) -> GradCheckReport:
    """Compare analytic and numeric gradients for every parameter and the input.

    ``fragment`` is a :class:`Layer`, run in inference mode (dropout off). The
    scalar objective is ``sum(out * R)`` for a fixed random ``R`` unless a
    ``loss(out) -> (value, dvalue/dout)`` callable is given.
    ``backward_scale`` multiplies the analytic gradients (negative controls).
    ``max_entries`` checks a random subset of each array's entries. The input
    check is skipped when the fragment returns no input gradient.
    """
    x = np.array(x, dtype=np.float64)
    rng = np.random.default_rng(seed)
    out = fragment.forward(x, training=False)
    if loss is None:
        r = rng.standard_normal(out.shape)

        def objective(o):
            return float(np.sum(o * r)), r
    else:
        objective = loss

    _, dout = objective(out)
    dx = fragment.backward(dout)
    if dx is None:
        check_input = False
    else:
        dx = dx * backward_scale
    analytic = {name: layer.grads[key] * backward_scale
                for name, layer, key in fragment.named_parameters()}

    def f():
        return objective(fragment.forward(x, training=False, record=False))[0]

    def entries(arr):
        idx = list(np.ndindex(arr.shape))
        if max_entries is not None and len(idx) > max_entries:
            pick = rng.choice(len(idx), size=max_entries, replace=False)
            idx = [idx[k] for k in np.sort(pick)]
        return idx

    def numeric(arr, idx):
        num = np.zeros(len(idx))
        for j, i in enumerate(idx):
            old = arr[i]
            arr[i] = old + step
            fp = f()
            arr[i] = old - step
            fm = f()
            arr[i] = old
            num[j] = (fp - fm) / (2 * step)
        return num

    per_array = {}
    for name, layer, key in fragment.named_parameters():
        p = layer.params[key]
        idx = entries(p)
        ana = np.array([analytic[name][i] for i in idx])
        per_array[name] = float(relative_error(ana, numeric(p, idx)).max()) if idx else 0.0
    if check_input:
        idx = entries(x)
        ana = np.array([dx[i] for i in idx])
        per_array["input"] = float(relative_error(ana, numeric(x, idx)).max()) if idx else 0.0
    worst = max(per_array.values()) if per_array else 0.0
    return GradCheckReport(worst, per_array, tolerance)


def kink_margin(fragment, x) -> float:
    """Smallest distance of any ReLU input from 0 or any max-pool pair from a
    tie during one forward pass. Finite differences are only meaningful when
    this exceeds the perturbation's effect."""
    from unittest import mock

    from .layers import MaxPool1D, ReLU

    margins = [np.inf]
    relu_fwd, pool_fwd = ReLU.forward, MaxPool1D.forward

    def relu(self, v, *a, **k):
        margins.append(float(np.abs(v).min()) if v.size else np.inf)
        return relu_fwd(self, v, *a, **k)

    def pool(self, v, *a, **k):
        half = v.shape[1] // 2
        pairs = v[:, :2 * half].reshape(v.shape[0], half, 2, *v.shape[2:])
        margins.append(float(np.abs(pairs[:, :, 0] - pairs[:, :, 1]).min()))
        return pool_fwd(self, v, *a, **k)

    with mock.patch.object(ReLU, "forward", relu), mock.patch.object(MaxPool1D, "forward", pool):
        fragment.forward(np.asarray(x, dtype=np.float64), training=False, record=False)
    return min(margins)
