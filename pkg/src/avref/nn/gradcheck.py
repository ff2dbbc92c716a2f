"""Finite-difference verification of hand-derived gradients."""

from __future__ import annotations

import math

import numpy as np

from ..errors import CheckError

EPSILON = 1e-5


def grad_check(loss_and_grads, params: dict, rng: np.random.Generator,
               num_coords: int = 200, epsilon: float = EPSILON) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_and_grads()`` evaluates the model at the current parameter values
    and returns (loss, grads-dict).  A subset of at least ``num_coords``
    coordinates is sampled uniformly across all parameters (all coordinates
    when the model is smaller than that).  Relative error per coordinate is
    |g_a - g_fd| / max(1, |g_a|, |g_fd|).
    """
    loss0, analytic = loss_and_grads()
    if not math.isfinite(loss0):
        raise CheckError(f"non-finite loss {loss0}")

    coords = []
    for name, p in params.items():
        for flat in range(p.size):
            coords.append((name, flat))
    if len(coords) > num_coords:
        idx = rng.choice(len(coords), size=num_coords, replace=False)
        coords = [coords[i] for i in sorted(idx)]

    worst = 0.0
    for name, flat in coords:
        p = params[name]
        orig = p.flat[flat]
        p.flat[flat] = orig + epsilon
        loss_plus, _ = loss_and_grads()
        p.flat[flat] = orig - epsilon
        loss_minus, _ = loss_and_grads()
        p.flat[flat] = orig
        if not (math.isfinite(loss_plus) and math.isfinite(loss_minus)):
            raise CheckError(f"non-finite loss while perturbing '{name}'")
        g_fd = (loss_plus - loss_minus) / (2.0 * epsilon)
        g_a = analytic[name].flat[flat]
        err = abs(g_a - g_fd) / max(1.0, abs(g_a), abs(g_fd))
        worst = max(worst, err)
    return worst
