"""Triplet and pair costs over descriptor vectors, with analytic gradients.

The triplet cost is the bounded ratio form

    c = max(0, 1 - d(i, k) / (d(i, j) + m))

where ``d`` is the Euclidean distance with a small constant added under the
square root so it stays differentiable at zero. The squared-hinge variant
``max(0, m + d(i,j)^2 - d(i,k)^2)`` is kept for comparison only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .optim import l2_regularization

RATIO = "ratio"
SQUARED_HINGE = "squaredHinge"


@dataclass
class LossConfig:
    margin: float = 0.01
    reg: float = 1e-6
    eps: float = 1e-8
    formulation: str = RATIO

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.eps < 0:
            raise ValueError("eps must be non-negative")
        if self.reg < 0:
            raise ValueError("reg must be non-negative")
        if self.formulation not in (RATIO, SQUARED_HINGE):
            raise ValueError(f"unknown formulation {self.formulation!r}")


def _check_same_length(*vectors):
    n = len(vectors[0])
    for v in vectors[1:]:
        if len(v) != n:
            raise ValueError(f"descriptor length mismatch: {n} vs {len(v)}")


def stabilized_distance(a, b, eps=1e-8):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    _check_same_length(a, b)
    return float(np.sqrt(np.sum((a - b) ** 2) + eps))


def stabilized_distance_grad(a, b, eps=1e-8):
    """Gradient of :func:`stabilized_distance` w.r.t. ``a`` (the ``b`` gradient is its negative)."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    d = stabilized_distance(a, b, eps)
    if d == 0:
        return np.zeros_like(a)
    return (a - b) / d


def triplet_cost(fi, fj, fk, margin=0.01, eps=1e-8):
    _check_same_length(fi, fj, fk)
    dij = stabilized_distance(fi, fj, eps)
    dik = stabilized_distance(fi, fk, eps)
    return max(0.0, 1.0 - dik / (dij + margin))


def triplet_cost_grad(fi, fj, fk, margin=0.01, eps=1e-8):
    """Gradients ``(g_i, g_j, g_k)``; all zero on the flat side of the hinge and at the kink."""
    fi, fj, fk = (np.asarray(v, dtype=float) for v in (fi, fj, fk))
    dij = stabilized_distance(fi, fj, eps)
    dik = stabilized_distance(fi, fk, eps)
    denom = dij + margin
    if 1.0 - dik / denom <= 0:
        z = np.zeros_like(fi)
        return z, z.copy(), z.copy()
    dc_ddij = dik / denom**2
    dc_ddik = -1.0 / denom
    uij = (fi - fj) / dij if dij > 0 else np.zeros_like(fi)
    uik = (fi - fk) / dik if dik > 0 else np.zeros_like(fi)
    gi = dc_ddij * uij + dc_ddik * uik
    return gi, -dc_ddij * uij, -dc_ddik * uik


def triplet_cost_distance_partials(dij, dik, margin=0.01):
    """(dc/d d_ij, dc/d d_ik) of the ratio cost as a function of the two distances."""
    denom = dij + margin
    if 1.0 - dik / denom <= 0:
        return 0.0, 0.0
    return dik / denom**2, -1.0 / denom


def squared_hinge_triplet_cost(fi, fj, fk, margin=1.0):
    _check_same_length(fi, fj, fk)
    fi, fj, fk = (np.asarray(v, dtype=float) for v in (fi, fj, fk))
    return max(0.0, margin + np.sum((fi - fj) ** 2) - np.sum((fi - fk) ** 2))


def squared_hinge_triplet_cost_grad(fi, fj, fk, margin=1.0):
    fi, fj, fk = (np.asarray(v, dtype=float) for v in (fi, fj, fk))
    if squared_hinge_triplet_cost(fi, fj, fk, margin) <= 0:
        z = np.zeros_like(fi)
        return z, z.copy(), z.copy()
    gj = -2.0 * (fi - fj)
    gk = 2.0 * (fi - fk)
    return -gj - gk, gj, gk


def squared_hinge_distance_partials(dij, dik, margin=1.0):
    """(dc/d d_ij, dc/d d_ik) of the squared-hinge cost."""
    if margin + dij**2 - dik**2 <= 0:
        return 0.0, 0.0
    return 2.0 * dij, -2.0 * dik


def pair_cost(fi, fj):
    _check_same_length(fi, fj)
    return float(np.sum((np.asarray(fi, dtype=float) - np.asarray(fj, dtype=float)) ** 2))


def pair_cost_grad(fi, fj):
    g = 2.0 * (np.asarray(fi, dtype=float) - np.asarray(fj, dtype=float))
    return g, -g


@dataclass
class LossTerms:
    total: float
    triplet: float
    pair: float
    reg: float
    descriptor_grad: np.ndarray
    param_grads: list | None


def _as_index_array(refs, width):
    arr = np.asarray(refs, dtype=np.intp)
    if arr.size == 0:
        return np.zeros((0, width), dtype=np.intp)
    return arr.reshape(-1, width)


def total_loss(descriptors, pairs, triplets, params=None, cfg=None):
    """Sum of all triplet costs, all pair costs and the weight penalty.

    ``descriptors`` is (B, D); ``pairs`` is a sequence of (i, j) and
    ``triplets`` of (i, j, k) row indices. Gradients with respect to each
    descriptor row accumulate over every pair and triplet the row occurs in.
    """
    cfg = cfg or LossConfig()
    f = np.asarray(descriptors)
    n = f.shape[0]
    P = _as_index_array(pairs, 2)
    T = _as_index_array(triplets, 3)
    for name, idx in (("pair", P), ("triplet", T)):
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise IndexError(f"{name} index out of range for batch of {n}")

    work = f.astype(np.float64)
    grad = np.zeros_like(work)

    # triplets
    triplet_sum = 0.0
    if len(T):
        fi, fj, fk = work[T[:, 0]], work[T[:, 1]], work[T[:, 2]]
        dj = fi - fj
        dk = fi - fk
        if cfg.formulation == RATIO:
            dij = np.sqrt(np.sum(dj**2, axis=1) + cfg.eps)
            dik = np.sqrt(np.sum(dk**2, axis=1) + cfg.eps)
            denom = dij + cfg.margin
            cost = 1.0 - dik / denom
            active = cost > 0
            triplet_sum = float(np.sum(cost[active]))
            with np.errstate(divide="ignore", invalid="ignore"):
                a_ij = np.where(active & (dij > 0), dik / denom**2 / dij, 0.0)
                a_ik = np.where(active & (dik > 0), -1.0 / denom / dik, 0.0)
        else:
            sq_ij = np.sum(dj**2, axis=1)
            sq_ik = np.sum(dk**2, axis=1)
            cost = cfg.margin + sq_ij - sq_ik
            active = cost > 0
            triplet_sum = float(np.sum(cost[active]))
            a_ij = np.where(active, 2.0, 0.0)
            a_ik = np.where(active, -2.0, 0.0)
        gj = -a_ij[:, None] * dj
        gk = -a_ik[:, None] * dk
        np.add.at(grad, T[:, 0], -gj - gk)
        np.add.at(grad, T[:, 1], gj)
        np.add.at(grad, T[:, 2], gk)

    # pairs
    pair_sum = 0.0
    if len(P):
        diff = work[P[:, 0]] - work[P[:, 1]]
        pair_sum = float(np.sum(diff**2))
        np.add.at(grad, P[:, 0], 2.0 * diff)
        np.add.at(grad, P[:, 1], -2.0 * diff)

    reg_value, reg_grads = 0.0, None
    if params is not None:
        reg_value, reg_grads = l2_regularization(params, cfg.reg)

    total = triplet_sum + pair_sum + reg_value
    return LossTerms(total, triplet_sum, pair_sum, reg_value, grad.astype(f.dtype, copy=False), reg_grads)
