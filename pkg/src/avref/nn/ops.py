"""Elementwise activations and the softmax / cross-entropy pair.

Everything is float64; callers rely on the gradient formulas here being
exact so finite-difference checks can be pushed to 1e-5 relative error.
"""

from __future__ import annotations

import numpy as np

from ..errors import DomainError

LEAKY_SLOPE = 0.1


def sigmoid(x):
    # Split by sign to stay overflow-free for large |x|.
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def leaky_relu(x, alpha: float = LEAKY_SLOPE):
    return np.where(x >= 0, x, alpha * x)


def leaky_relu_grad(x, alpha: float = LEAKY_SLOPE):
    return np.where(x >= 0, 1.0, alpha)


def softmax(logits, axis: int = -1):
    """Stable softmax; positive entries summing to 1 along ``axis``.

    Invariant under adding a constant to all logits.  Raises DomainError for
    an empty vector.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.size == 0:
        raise DomainError("softmax of an empty vector")
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def softmax_grad_from_output(p, dp, axis: int = -1):
    """Backprop through softmax given its output ``p`` and upstream ``dp``."""
    inner = np.sum(dp * p, axis=axis, keepdims=True)
    return p * (dp - inner)


def cross_entropy_grad(probs, target_mass):
    """Loss and d(loss)/d(logits) for -log of the probability mass on a set.

    ``target_mass`` is a 0/1 (or weighted) indicator over classes; the loss is
    -log(sum_j probs_j * target_mass_j), which reduces to plain cross-entropy
    for a one-hot target and to the set objective used by grounding when the
    ground truth is a set of equally-valid candidates.
    """
    probs = np.asarray(probs, dtype=np.float64)
    mass = float(np.dot(probs, target_mass))
    mass = max(mass, 1e-300)
    loss = -np.log(mass)
    # d(-log sum_S p_j)/d(logit_k) = p_k - p_k * 1[k in S] / mass
    dlogits = probs - probs * target_mass / mass
    return loss, dlogits
