import numpy as np

P_CLAMP = 1e-7


def bce_loss(p, y):
    """Mean binary cross-entropy and its gradient w.r.t. ``p``.

    ``p`` is clamped to [1e-7, 1 - 1e-7]; the gradient is zero where the clamp
    is active.
    """
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    pc = np.clip(p, P_CLAMP, 1.0 - P_CLAMP)
    loss = -np.mean(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))
    inside = (p > P_CLAMP) & (p < 1.0 - P_CLAMP)
    grad = np.where(inside, (pc - y) / (pc * (1.0 - pc)), 0.0) / p.size
    return float(loss), grad


def bce_sigmoid_logit_grad(p, y):
    """Gradient of mean BCE w.r.t. the logit feeding a sigmoid, ``(p - y) / n``.

    Equal to ``bce_loss``'s gradient pushed through the sigmoid wherever the
    clamp is inactive, and keeps saturated units trainable.
    """
    p = np.asarray(p)
    return (p - np.asarray(y, dtype=p.dtype)) / p.size
