"""Central-difference gradient verification.

Run models in float64 for meaningful results: in float32 the finite
differences are dominated by rounding noise.
"""

from __future__ import annotations

import numpy as np

# Relative-error floor: keeps cancellation noise on near-zero coordinates
# (|analytic| ~ 0, numeric diff ~ 1e-11) from registering as error.
_DENOM_FLOOR = 1e-4


def grad_check(model, inputs, lengths, labels, epsilon: float = 1e-5,
               samples: int = 200, seed: int = 0) -> float:
    """Max relative error between analytic and numeric gradients.

    Samples up to `samples` coordinates per parameter tensor (all of them
    for smaller tensors). Dropout is disabled (train=False), so the loss is
    a deterministic function of the parameters.
    """
    rng = np.random.default_rng(seed)
    model.compute_loss(inputs, lengths, labels, train=False, want_grads=True)
    analytic = [p.grad.copy() for _, p in model.params()]

    worst = 0.0
    for (_, p), grads in zip(model.params(), analytic):
        flat = p.data.reshape(-1)
        a_flat = grads.reshape(-1)
        count = min(samples, flat.size)
        coords = rng.choice(flat.size, size=count, replace=False)
        for j in coords:
            original = flat[j]
            flat[j] = original + epsilon
            loss_plus = model.compute_loss(inputs, lengths, labels,
                                           train=False, want_grads=False)
            flat[j] = original - epsilon
            loss_minus = model.compute_loss(inputs, lengths, labels,
                                            train=False, want_grads=False)
            flat[j] = original
            numeric = (loss_plus - loss_minus) / (2.0 * epsilon)
            denom = max(abs(a_flat[j]), abs(numeric), _DENOM_FLOOR)
            rel = abs(a_flat[j] - numeric) / denom
            if rel > worst:
                worst = rel
    return worst
