"""Mini-batch assembly, pair/triplet construction, hard-negative mining and the training schedule.

Inside a :class:`MiniBatch` the training samples come first and the templates
after them; pairs and triplets hold these batch-local row indices, so every
descriptor is computed exactly once per step.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import seeding
from .nn import Network
from .objective import LossConfig, total_loss
from .optim import NonFiniteGradientError, sgd_nesterov_step
from .scene.geometry import Symmetry, pose_angles

log = logging.getLogger(__name__)


@dataclass
class Schedule:
    initial_epochs: int = 400
    initial_lr: float = 0.01
    momentum: float = 0.9
    lr_decay: float = 0.9
    decay_every: int = 100
    bootstrap_rounds: int = 2
    epochs_per_bootstrap: int = 200
    final_epochs: int = 300
    final_lr_factor: float = 0.1
    batch_size: int = 64
    seed: int = 0
    # divide the pair/triplet gradient by the number of training samples in the batch
    per_sample_mean: bool = True

    def __post_init__(self):
        for name in ("initial_epochs", "bootstrap_rounds", "epochs_per_bootstrap", "final_epochs"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.initial_lr <= 0 or self.decay_every <= 0 or self.batch_size <= 0:
            raise ValueError("initial_lr, decay_every and batch_size must be positive")
        if not 0 < self.lr_decay <= 1 or not 0 <= self.momentum < 1:
            raise ValueError("lr_decay must be in (0, 1] and momentum in [0, 1)")

    @property
    def total_epochs(self):
        return self.initial_epochs + self.bootstrap_rounds * self.epochs_per_bootstrap + self.final_epochs

    def lr_at(self, epoch):
        """Learning rate at a global epoch index (0-based)."""
        lr = self.initial_lr * self.lr_decay ** (epoch // self.decay_every)
        if epoch >= self.initial_epochs + self.bootstrap_rounds * self.epochs_per_bootstrap:
            lr *= self.final_lr_factor
        return lr

    def phases(self):
        """List of (name, first_epoch, n_epochs, bootstrap_round or None)."""
        out = [("initial", 0, self.initial_epochs, None)]
        e = self.initial_epochs
        for r in range(self.bootstrap_rounds):
            out.append((f"bootstrap{r + 1}", e, self.epochs_per_bootstrap, r))
            e += self.epochs_per_bootstrap
        out.append(("final", e, self.final_epochs, self.bootstrap_rounds - 1 if self.bootstrap_rounds else None))
        return [p for p in out if p[2] > 0]

    def min_batch_size(self, n_objects):
        return 3 * n_objects


class BatchSizeError(ValueError):
    pass


class TrainingDivergedError(RuntimeError):
    def __init__(self, message, network):
        super().__init__(message)
        self.network = network


@dataclass
class BatchPool:
    """Class/pose bookkeeping for the training samples and templates."""

    train_classes: np.ndarray
    train_poses: np.ndarray
    template_classes: np.ndarray
    template_poses: np.ndarray
    symmetries: list
    angles: np.ndarray = field(init=False)       # (n_train, n_templates); inf across classes
    closest: np.ndarray = field(init=False)      # closest same-class template per training sample

    def __post_init__(self):
        self.train_classes = np.asarray(self.train_classes, dtype=np.int64)
        self.template_classes = np.asarray(self.template_classes, dtype=np.int64)
        self.train_poses = np.asarray(self.train_poses, dtype=float).reshape(-1, 2)
        self.template_poses = np.asarray(self.template_poses, dtype=float).reshape(-1, 2)
        self.symmetries = [Symmetry(s) for s in self.symmetries]
        nt, nm = len(self.train_classes), len(self.template_classes)
        self.angles = np.full((nt, nm), np.inf)
        self.templates_of = {}
        for c in np.unique(np.concatenate([self.train_classes, self.template_classes])):
            ti = np.flatnonzero(self.train_classes == c)
            mi = np.flatnonzero(self.template_classes == c)
            self.templates_of[int(c)] = mi
            if len(ti) and len(mi):
                a = pose_angles(self.train_poses[ti, 0, None], self.train_poses[ti, 1, None],
                                self.template_poses[None, mi, 0], self.template_poses[None, mi, 1],
                                self.symmetries[c])
                self.angles[np.ix_(ti, mi)] = a
        for c in np.unique(self.train_classes):
            if len(self.templates_of.get(int(c), ())) < 2:
                raise ValueError(f"class {c} has fewer than two templates")
        self.closest = np.argmin(self.angles, axis=1) if nt else np.zeros(0, dtype=np.int64)

    @property
    def classes(self):
        return sorted(int(c) for c in np.unique(self.train_classes))


@dataclass
class MiniBatch:
    train: list              # training-pool indices, batch rows 0..len(train)-1
    templates: list          # template-pool indices, rows after the training samples
    pairs: list = field(default_factory=list)
    triplets: list = field(default_factory=list)

    @property
    def size(self):
        return len(self.train) + len(self.templates)

    @property
    def template_flags(self):
        return [False] * len(self.train) + [True] * len(self.templates)

    def template_row(self, template_index):
        return len(self.train) + self.templates.index(template_index)


def epoch_queues(pool, rng):
    """Per-class shuffled queues of training indices, consumed by :func:`assemble_minibatch`."""
    return {c: list(rng.permutation(np.flatnonzero(pool.train_classes == c))) for c in pool.classes}


def assemble_minibatch(pool, batch_size, rng, queues=None, extra_templates=None):
    """Fill a batch round-robin: one training sample per object plus its closest template.

    ``queues`` (from :func:`epoch_queues`) are consumed in place; without them
    samples are drawn at random. ``extra_templates`` maps a training index to
    further templates that must join the batch with it (mined negatives).
    Every object present ends with at least two templates.
    """
    classes = pool.classes
    if batch_size < 3:
        raise BatchSizeError("batch size must be at least 3 (one sample, two templates)")
    if queues is None:
        queues = {c: list(rng.permutation(np.flatnonzero(pool.train_classes == c))) for c in classes}
    train, templates, tmpl_set = [], [], set()
    count = {c: 0 for c in classes}

    present = set()
    full = False
    while not full and any(queues[c] for c in classes):
        for c in classes:
            if not queues[c]:
                continue
            i = int(queues[c][0])
            need = [int(pool.closest[i])]
            if extra_templates is not None and i in extra_templates:
                need += [int(t) for t in extra_templates[i]]
            need = list(dict.fromkeys(t for t in need if t not in tmpl_set))
            new_count = dict(count)
            for t in need:
                new_count[int(pool.template_classes[t])] += 1
            new_present = present | {c} | {int(pool.template_classes[t]) for t in need}
            d = sum(max(0, 2 - new_count[k]) for k in new_present)
            if len(train) + len(templates) + 1 + len(need) + d > batch_size:
                full = True
                break
            queues[c].pop(0)
            train.append(i)
            templates += need
            tmpl_set.update(need)
            count, present = new_count, new_present
    if not train:
        if any(queues[c] for c in classes):
            raise BatchSizeError(f"batch size {batch_size} too small for one sample and its templates")
        return None
    for c in sorted(present):
        while count[c] < 2:
            candidates = [int(t) for t in pool.templates_of[c] if int(t) not in tmpl_set]
            t = candidates[int(rng.integers(len(candidates)))]
            templates.append(t)
            tmpl_set.add(t)
            count[c] += 1
    return MiniBatch(train, templates)


def _batch_templates(batch, pool):
    tm = np.asarray(batch.templates, dtype=np.int64)
    return tm, pool.template_classes[tm]


def build_pairs(batch, pool):
    """One (training row, closest in-batch same-class template row) pair per training sample."""
    tm, tc = _batch_templates(batch, pool)
    nt = len(batch.train)
    pairs = []
    for r, i in enumerate(batch.train):
        ang = np.where(tc == pool.train_classes[i], pool.angles[i, tm], np.inf)
        pairs.append((r, nt + int(np.argmin(ang))))
    return pairs


def _negatives(batch, pool, r, i):
    tm, tc = _batch_templates(batch, pool)
    nt = len(batch.train)
    c = pool.train_classes[i]
    ang = np.where(tc == c, pool.angles[i, tm], np.inf)
    j = int(np.argmin(ang))
    same = np.flatnonzero((tc == c) & (ang > ang[j]))
    other = np.flatnonzero(tc != c)
    return nt + j, nt + same, nt + other


def build_initial_triplets(batch, pool, rng):
    """Three triplets per training sample with the closest-pose template as the similar one.

    The first negative is a same-object template with a strictly larger pose
    angle, the second a template of another object, the third either kind;
    whichever kind is unavailable is replaced by the other.
    """
    triplets = []
    for r, i in enumerate(batch.train):
        j, same, other = _negatives(batch, pool, r, i)
        both = np.concatenate([same, other])
        if not len(both):
            continue
        first = same if len(same) else other
        second = other if len(other) else same
        for choices in (first, second, both):
            triplets.append((r, j, int(choices[int(rng.integers(len(choices)))])))
    return triplets


def bootstrap_triplets(batch, pool, descriptors):
    """Two extra triplets per training sample using the currently hardest in-batch negatives.

    One negative is the nearest same-object template (in descriptor space)
    whose pose is farther than the similar template's, the other the nearest
    template of any other object.
    """
    f = np.asarray(descriptors, dtype=np.float64)
    triplets = []
    for r, i in enumerate(batch.train):
        j, same, other = _negatives(batch, pool, r, i)
        picks = []
        for cand in (same, other):
            if len(cand):
                d = np.sum((f[cand] - f[r]) ** 2, axis=1)
                picks.append(int(cand[int(np.argmin(d))]))
        if len(picks) == 1:
            # fall back to the second-nearest of the only available kind
            cand = same if len(same) else other
            if len(cand) > 1:
                d = np.sum((f[cand] - f[r]) ** 2, axis=1)
                picks.append(int(cand[np.argsort(d, kind="stable")[1]]))
        triplets += [(r, j, k) for k in picks]
    return triplets


def mine_hard_negatives(pool, train_descriptors, template_descriptors):
    """For every training sample, the globally hardest same-object and other-object templates."""
    ft = np.asarray(train_descriptors, dtype=np.float64)
    fm = np.asarray(template_descriptors, dtype=np.float64)
    d = np.sum(ft**2, axis=1)[:, None] - 2.0 * ft @ fm.T + np.sum(fm**2, axis=1)[None, :]
    out = {}
    for i in range(len(ft)):
        c = pool.train_classes[i]
        j = pool.closest[i]
        same = (pool.template_classes == c) & (pool.angles[i] > pool.angles[i, j])
        other = pool.template_classes != c
        picks = []
        for mask in (same, other):
            if mask.any():
                picks.append(int(np.flatnonzero(mask)[np.argmin(d[i, mask])]))
        out[i] = picks
    return out


@dataclass
class EpochRecord:
    """Loss terms averaged over the mini-batches of one epoch."""

    epoch: int
    lr: float
    triplet: float
    pair: float
    reg: float
    seconds: float
    phase: str = ""

    @property
    def total(self):
        return self.triplet + self.pair + self.reg


def embed(network, X, batch_size=256):
    out = []
    for s in range(0, len(X), batch_size):
        out.append(network(X[s:s + batch_size]))
    if not out:
        return np.zeros((0, network.spec.descriptor_dim), dtype=network.dtype)
    return np.concatenate(out)


def train_step(network, X_train, X_templates, batch, pool, loss_cfg, lr, momentum, rng, bootstrap,
               per_sample_mean=True):
    """One forward/backward pass over the whole batch and one optimizer step.

    The returned terms are the plain sums of the objective. With
    ``per_sample_mean`` the data-term gradient is divided by the number of
    training samples in the batch before the update (the weight penalty is not).
    """
    images = np.concatenate([X_train[batch.train], X_templates[batch.templates]])
    desc, cache = network.forward(images)
    batch.pairs = build_pairs(batch, pool)
    batch.triplets = build_initial_triplets(batch, pool, rng)
    if bootstrap:
        batch.triplets += bootstrap_triplets(batch, pool, desc)
    terms = total_loss(desc, batch.pairs, batch.triplets, network.params, loss_cfg)
    if not math.isfinite(terms.total):
        raise FloatingPointError("non-finite loss")
    g = terms.descriptor_grad
    if per_sample_mean:
        g = g / max(1, len(batch.train))
    grads, _ = network.backward(cache, g)
    grads = [g + rg for g, rg in zip(grads, terms.param_grads)]
    sgd_nesterov_step(network.params.tensors, grads, network.params.velocity, lr, momentum)
    network.mark_updated()
    return terms


def train(X_train, y_train, poses_train, X_templates, y_templates, poses_templates, symmetries,
          spec, loss_cfg=None, schedule=None, on_epoch=None, network=None):
    """Run the full schedule and return ``(network, history)``.

    ``symmetries`` lists the :class:`Symmetry` of every class id. On a
    non-finite loss a :class:`TrainingDivergedError` carrying the network
    from the end of the last good epoch is raised.
    """
    loss_cfg = loss_cfg or LossConfig()
    schedule = schedule or Schedule()
    pool = BatchPool(y_train, poses_train, y_templates, poses_templates, symmetries)
    if schedule.batch_size < schedule.min_batch_size(len(pool.classes)):
        raise BatchSizeError(f"batch_size {schedule.batch_size} below {schedule.min_batch_size(len(pool.classes))}")
    if network is None:
        network = Network.initialize(spec, seed=int(seeding.stream(schedule.seed, "init").integers(2**31)))
    rng = seeding.stream(schedule.seed, "batching")
    X_train = np.asarray(X_train, dtype=network.dtype)
    X_templates = np.asarray(X_templates, dtype=network.dtype)
    history = []
    extra = None
    for name, first, n_epochs, round_ in schedule.phases():
        bootstrap = round_ is not None
        if name.startswith("bootstrap"):
            extra = mine_hard_negatives(pool, embed(network, X_train), embed(network, X_templates))
        for epoch in range(first, first + n_epochs):
            good = network.params.copy()
            lr = schedule.lr_at(epoch)
            t0 = time.perf_counter()
            queues = epoch_queues(pool, rng)
            sums = np.zeros(3)
            n_batches = 0
            while True:
                batch = assemble_minibatch(pool, schedule.batch_size, rng, queues, extra)
                if batch is None:
                    break
                try:
                    terms = train_step(network, X_train, X_templates, batch, pool, loss_cfg, lr,
                                       schedule.momentum, rng, bootstrap, schedule.per_sample_mean)
                except (FloatingPointError, NonFiniteGradientError) as exc:
                    raise TrainingDivergedError(f"epoch {epoch}: {exc}", Network(network.spec, good)) from exc
                sums += (terms.triplet, terms.pair, terms.reg)
                n_batches += 1
            rec = EpochRecord(epoch, lr, *(sums / max(1, n_batches)), time.perf_counter() - t0, name)
            history.append(rec)
            log.info("epoch %d %s lr=%.5g triplet=%.4f pair=%.4f reg=%.4g (%.1fs)", epoch, name, lr,
                     rec.triplet, rec.pair, rec.reg, rec.seconds)
            if on_epoch is not None:
                on_epoch(rec, network)
    return network, history


def write_log(path, history):
    lines = ["epoch\tlr\ttripletLoss\tpairLoss\tregTerm\twallTimeSec"]
    for r in history:
        lines.append(f"{r.epoch}\t{r.lr:.9g}\t{r.triplet:.9g}\t{r.pair:.9g}\t{r.reg:.9g}\t{r.seconds:.3f}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
