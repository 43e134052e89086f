"""SGD with Nesterov momentum and the L2 weight penalty."""

import numpy as np


class NonFiniteGradientError(FloatingPointError):
    pass


def sgd_nesterov_step(params, grads, velocity, lr, momentum):
    """One in-place Nesterov update.

    Uses the lookahead-free reformulation::

        v <- momentum * v - lr * g
        theta <- theta + momentum * v - lr * g      (v is the updated velocity)

    which equals evaluating the gradient at the lookahead point when
    parameters are tracked at their lookahead position. ``params`` and
    ``velocity`` are lists of arrays and are modified in place.
    """
    if lr <= 0:
        raise ValueError(f"lr must be positive, got {lr}")
    if not 0 <= momentum < 1:
        raise ValueError(f"momentum must be in [0, 1), got {momentum}")
    if len(params) != len(grads) or len(params) != len(velocity):
        raise ValueError("params, grads and velocity must have equal length")
    for i, g in enumerate(grads):
        if g.shape != params[i].shape:
            raise ValueError(f"gradient {i} has shape {g.shape}, parameter {params[i].shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient in parameter tensor {i}")
    for theta, g, v in zip(params, grads, velocity):
        g = g.astype(theta.dtype, copy=False)
        v *= momentum
        v -= lr * g
        theta += momentum * v - lr * g
    return params, velocity


def l2_regularization(params, lam, is_bias=None):
    """Penalty ``lam * sum(w**2)`` over non-bias tensors and its gradients.

    ``params`` is either a :class:`~viewdesc.nn.Parameters` or a list of
    arrays together with ``is_bias`` flags. Bias gradients are zero.
    """
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    if is_bias is None:
        tensors, is_bias = params.tensors, params.is_bias
    else:
        tensors = params
    penalty = 0.0
    grads = []
    for t, bias in zip(tensors, is_bias):
        if bias or lam == 0:
            grads.append(np.zeros_like(t))
            continue
        penalty += lam * float(np.sum(np.square(t, dtype=np.float64)))
        grads.append((2.0 * lam) * t)
    return penalty, grads
