"""Independent checks of mini-batch structure shared by the trainer and acceptance tests."""

import numpy as np

from viewdesc.trainer import BatchPool
from viewdesc.scene.geometry import Symmetry, hemisphere_poses, poses_to_array


def synthetic_pool(n_classes=5, template_level=1, train_level=2, symmetries=None):
    """Pool over real hemisphere viewpoints; no images needed for structural checks."""
    symmetries = symmetries or ([Symmetry.ROTATION_INVARIANT, Symmetry.SYMMETRIC180]
                                + [Symmetry.NONE] * (n_classes - 2))[:n_classes]
    tp = poses_to_array(hemisphere_poses(template_level))
    rp = poses_to_array(hemisphere_poses(train_level))
    return BatchPool(np.repeat(np.arange(n_classes), len(rp)), np.tile(rp, (n_classes, 1)),
                     np.repeat(np.arange(n_classes), len(tp)), np.tile(tp, (n_classes, 1)), symmetries)


def batch_problems(batch, pool, batch_size):
    """List of violated batch invariants (empty when the batch is valid)."""
    bad = []
    if batch.size > batch_size:
        bad.append(f"size {batch.size} > {batch_size}")
    if len(set(batch.train)) != len(batch.train) or len(set(batch.templates)) != len(batch.templates):
        bad.append("duplicate sample")
    for i in batch.train:
        if pool.closest[i] not in batch.templates:
            bad.append(f"closest template of training sample {i} missing")
    classes = {int(pool.train_classes[i]) for i in batch.train} | {int(pool.template_classes[t])
                                                                    for t in batch.templates}
    for c in classes:
        if sum(int(pool.template_classes[t]) == c for t in batch.templates) < 2:
            bad.append(f"object {c} has fewer than two templates")
    return bad


def _row_class(batch, pool, row):
    nt = len(batch.train)
    if row < nt:
        return int(pool.train_classes[batch.train[row]])
    return int(pool.template_classes[batch.templates[row - nt]])


def _angle(batch, pool, r, row):
    return pool.angles[batch.train[r], batch.templates[row - len(batch.train)]]


def pair_problems(batch, pool, pairs):
    bad = []
    nt = len(batch.train)
    if len(pairs) != nt:
        bad.append(f"{len(pairs)} pairs for {nt} training samples")
    for r, j in pairs:
        if not (0 <= r < nt <= j < batch.size):
            bad.append(f"pair ({r}, {j}) outside the batch layout")
            continue
        if _row_class(batch, pool, r) != _row_class(batch, pool, j):
            bad.append(f"pair ({r}, {j}) mixes classes")
        # exhaustive scan over the in-batch same-class templates
        best = min(_angle(batch, pool, r, row) for row in range(nt, batch.size)
                   if _row_class(batch, pool, row) == _row_class(batch, pool, r))
        if _angle(batch, pool, r, j) != best:
            bad.append(f"pair ({r}, {j}) is not the closest pose")
    return bad


def triplet_problems(batch, pool, triplets, per_sample, pairs):
    bad = []
    nt = len(batch.train)
    partner = dict(pairs)
    counts = {}
    for r, j, k in triplets:
        counts[r] = counts.get(r, 0) + 1
        if not (0 <= r < nt and nt <= j < batch.size and nt <= k < batch.size):
            bad.append(f"triplet ({r}, {j}, {k}) outside the batch")
            continue
        if j != partner[r]:
            bad.append(f"triplet ({r}, {j}, {k}) similar template is not the closest")
        if j == k:
            bad.append(f"triplet ({r}, {j}, {k}) repeats the similar template")
        if _row_class(batch, pool, k) == _row_class(batch, pool, r):
            if not _angle(batch, pool, r, j) < _angle(batch, pool, r, k):
                bad.append(f"same-class triplet ({r}, {j}, {k}) not strictly farther in pose")
    for r in range(nt):
        if counts.get(r, 0) != per_sample:
            bad.append(f"sample row {r}: {counts.get(r, 0)} triplets, expected {per_sample}")
    return bad


def eligible_negatives(batch, pool, r, j):
    nt = len(batch.train)
    c = _row_class(batch, pool, r)
    same = [row for row in range(nt, batch.size)
            if _row_class(batch, pool, row) == c and _angle(batch, pool, r, row) > _angle(batch, pool, r, j)]
    other = [row for row in range(nt, batch.size) if _row_class(batch, pool, row) != c]
    return same, other


def initial_mix_problems(batch, pool, triplets):
    """At least one same-object and one other-object negative per sample whenever available."""
    bad = []
    for r in range(len(batch.train)):
        mine = [t for t in triplets if t[0] == r]
        same, other = eligible_negatives(batch, pool, r, mine[0][1])
        ks = {t[2] for t in mine}
        if same and not ks & set(same):
            bad.append(f"row {r}: no same-object negative")
        if other and not ks & set(other):
            bad.append(f"row {r}: no other-object negative")
    return bad


def bootstrap_problems(batch, pool, triplets, descriptors):
    """Extra triplets must use the nearest eligible negatives (exhaustive scan)."""
    bad = []
    f = np.asarray(descriptors, dtype=np.float64)
    for r in range(len(batch.train)):
        mine = [t for t in triplets if t[0] == r]
        if len(mine) != 2:
            bad.append(f"row {r}: {len(mine)} bootstrap triplets")
            continue
        same, other = eligible_negatives(batch, pool, r, mine[0][1])
        expect = []
        for cand in (same, other):
            if cand:
                d = [float(np.sum((f[k] - f[r]) ** 2)) for k in cand]
                expect.append(cand[int(np.argmin(d))])
        if len(expect) == 1:
            cand = same or other
            d = [float(np.sum((f[k] - f[r]) ** 2)) for k in cand]
            expect.append(cand[int(np.argsort(d, kind="stable")[1])])
        if sorted(t[2] for t in mine) != sorted(expect):
            bad.append(f"row {r}: negatives {[t[2] for t in mine]} != nearest {expect}")
    return bad
