"""Template descriptor database, exhaustive k-NN and the evaluation metrics.

Learned descriptors are ranked by ascending Euclidean distance (no epsilon).
HOG descriptors are ranked by descending dot product; for those, the
``distance`` reported in a :class:`Match` is ``1 - dot`` so that it stays
non-negative for unit vectors and orders the same way.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .scene.geometry import Symmetry, pose_angles

ASCENDING_DISTANCE = "ascending-distance"
DESCENDING_DOT = "descending-dot"
DIRECTIONS = (ASCENDING_DISTANCE, DESCENDING_DOT)

# best_angle_error_at_k result when no retrieved template has the true class;
# compares as a failure against every threshold
WRONG_OBJECT = float("inf")


@dataclass
class DescriptorDB:
    descriptors: np.ndarray
    classes: np.ndarray
    poses: np.ndarray                   # (N, 2) azimuth, elevation in degrees
    network_digest: str = ""
    direction: str = ASCENDING_DISTANCE
    symmetries: list = field(default_factory=list)   # Symmetry per class id

    def __post_init__(self):
        self.descriptors = np.atleast_2d(np.asarray(self.descriptors))
        n = self.descriptors.shape[0]
        self.classes = np.asarray(self.classes, dtype=np.int64).reshape(-1)
        self.poses = np.asarray(self.poses, dtype=float).reshape(-1, 2)
        if len(self.classes) != n or len(self.poses) != n:
            raise ValueError(f"{n} descriptor rows but {len(self.classes)} classes and {len(self.poses)} poses")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        self.symmetries = [Symmetry(s) for s in self.symmetries]

    def __len__(self):
        return self.descriptors.shape[0]

    @property
    def dim(self):
        return self.descriptors.shape[1]

    def symmetry(self, class_id):
        if class_id < len(self.symmetries):
            return self.symmetries[class_id]
        return Symmetry.NONE

    def subset(self, rows):
        rows = np.asarray(rows, dtype=np.int64)
        return DescriptorDB(self.descriptors[rows], self.classes[rows], self.poses[rows],
                            self.network_digest, self.direction, self.symmetries)

    def digest(self):
        h = hashlib.sha256()
        h.update(self.direction.encode())
        h.update(self.network_digest.encode())
        h.update(np.ascontiguousarray(self.descriptors, dtype="<f4").tobytes())
        h.update(self.classes.astype("<i8").tobytes())
        h.update(self.poses.astype("<f8").tobytes())
        return h.hexdigest()[:16]

    def save(self, path):
        """Tab-separated text: one header comment, a column header, one row per template."""
        syms = ",".join(s.value for s in self.symmetries) or "-"
        lines = [f"# viewdesc-db v1 direction={self.direction} network_digest={self.network_digest or '-'} "
                 f"dim={self.dim} rows={len(self)} symmetries={syms}",
                 "\t".join(["class", "azimuth", "elevation"] + [f"d{i}" for i in range(self.dim)])]
        desc = np.asarray(self.descriptors, dtype=np.float32)
        for c, (az, el), row in zip(self.classes, self.poses, desc):
            lines.append("\t".join([str(int(c)), repr(float(az)), repr(float(el))]
                                   + [f"{v:.9g}" for v in row]))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"descriptor database not found: {path}")
        lines = path.read_text().splitlines()
        if not lines or not lines[0].startswith("# viewdesc-db"):
            raise ValueError(f"{path}: not a viewdesc descriptor database")
        tags = dict(tok.split("=", 1) for tok in lines[0].split()[3:])
        dim = int(tags["dim"])
        rows = [ln.split("\t") for ln in lines[2:] if ln.strip()]
        classes = [int(r[0]) for r in rows]
        poses = [(float(r[1]), float(r[2])) for r in rows]
        desc = np.array([[float(v) for v in r[3:]] for r in rows], dtype=np.float32).reshape(-1, dim)
        syms = [] if tags.get("symmetries", "-") == "-" else tags["symmetries"].split(",")
        digest = "" if tags.get("network_digest") == "-" else tags.get("network_digest", "")
        return cls(desc, classes, poses, digest, tags["direction"], syms)


@dataclass
class Match:
    row: int
    distance: float
    class_id: int
    pose: tuple


def embed_all(network, X, classes, poses, network_digest="", symmetries=(), batch_size=256):
    """Run every image through ``network`` and wrap the result as a :class:`DescriptorDB`."""
    X = np.asarray(X)
    if X.ndim != 4 or X.shape[1:] != network.spec.input_shape:
        raise ValueError(f"images of shape {X.shape[1:]} do not match network input {network.spec.input_shape}")
    chunks = [network(X[s:s + batch_size]) for s in range(0, len(X), batch_size)]
    desc = np.concatenate(chunks) if chunks else np.zeros((0, network.spec.descriptor_dim), np.float32)
    return DescriptorDB(desc, classes, poses, network_digest, ASCENDING_DISTANCE, list(symmetries))


def score_matrix(db, queries):
    """(M, N) ranking keys, lower is better: Euclidean distance or ``1 - dot``."""
    q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    t = np.asarray(db.descriptors, dtype=np.float64)
    if q.shape[1] != t.shape[1]:
        raise ValueError(f"query length {q.shape[1]} != database dimension {t.shape[1]}")
    if db.direction == DESCENDING_DOT:
        return 1.0 - q @ t.T
    # exact differences rather than the expanded quadratic form, so that an
    # identical row gives exactly 0
    d = np.empty((len(q), len(t)))
    for s in range(0, len(q), 64):
        diff = q[s:s + 64, None, :] - t[None, :, :]
        d[s:s + 64] = np.sqrt(np.einsum("mnd,mnd->mn", diff, diff))
    return d


def knn_rows(db, queries, k):
    """Indices (M, k) of the k best rows per query; ties keep the lower row first."""
    if k < 1 or k > len(db):
        raise ValueError(f"k={k} must be between 1 and the database size {len(db)}")
    scores = score_matrix(db, queries)
    order = np.argsort(scores, axis=1, kind="stable")[:, :k]
    return order, np.take_along_axis(scores, order, axis=1)


def knn(db, query, k):
    """Exact k nearest templates for one query, best first."""
    rows, scores = knn_rows(db, np.asarray(query)[None], k)
    return [Match(int(r), float(s), int(db.classes[r]), tuple(db.poses[r])) for r, s in zip(rows[0], scores[0])]


def best_angle_errors(db, queries, query_classes, query_poses, k):
    """Vectorised :func:`best_angle_error_at_k` for many queries."""
    query_classes = np.asarray(query_classes, dtype=np.int64).reshape(-1)
    query_poses = np.asarray(query_poses, dtype=float).reshape(-1, 2)
    rows, _ = knn_rows(db, queries, k)
    out = np.full(len(query_classes), WRONG_OBJECT)
    for q, (c, (az, el)) in enumerate(zip(query_classes, query_poses)):
        hit = rows[q][db.classes[rows[q]] == c]
        if len(hit):
            ang = pose_angles(az, el, db.poses[hit, 0], db.poses[hit, 1], db.symmetry(int(c)))
            out[q] = float(np.min(ang))
    return out


def best_angle_error_at_k(db, query, query_class, query_pose, k):
    """Smallest pose error among the k retrieved templates of the true class, or WRONG_OBJECT."""
    return float(best_angle_errors(db, np.asarray(query)[None], [query_class], [query_pose], k)[0])


def accuracy_from_errors(errors, thresholds):
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        raise ValueError("empty test set")
    return np.array([float(np.mean(errors < t)) for t in thresholds])


def accuracy_curve(db, queries, query_classes, query_poses, k, thresholds):
    """Fraction of queries whose best angle error is strictly below each threshold."""
    if len(np.atleast_1d(query_classes)) == 0:
        raise ValueError("empty test set")
    return accuracy_from_errors(best_angle_errors(db, queries, query_classes, query_poses, k), thresholds)


def class_separation_ratios(db, queries, query_classes):
    """Distance to the closest wrong-class template over distance to the closest correct one.

    Returned unclipped; a zero correct-class distance gives ``inf``.
    """
    query_classes = np.asarray(query_classes, dtype=np.int64).reshape(-1)
    if len(np.unique(db.classes)) < 2:
        raise ValueError("class separation needs at least two classes in the database")
    scores = score_matrix(db, queries)
    same = db.classes[None, :] == query_classes[:, None]
    d_correct = np.where(same, scores, np.inf).min(axis=1)
    d_other = np.where(~same, scores, np.inf).min(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = d_other / d_correct
    ratios[d_correct == 0] = np.inf
    return ratios


def ratio_histogram(ratios, n_bins=40, clip=4.0):
    """Histogram of ratios clipped at ``clip``; returns (counts, edges)."""
    r = np.minimum(np.asarray(ratios, dtype=float), clip)
    return np.histogram(r, bins=n_bins, range=(0.0, clip))


def angle_distance_histogram(db, queries, query_classes, query_poses, class_id, angle_bins, dist_bins):
    """2-D counts over (pose angle, descriptor distance) for every test x template pair of one class.

    ``angle_bins`` and ``dist_bins`` are bin edge arrays; values beyond the
    last edge go to the last bin. Returns (counts, angle_edges, dist_edges)
    with counts of shape (len(angle_edges) - 1, len(dist_edges) - 1).
    """
    query_classes = np.asarray(query_classes).reshape(-1)
    query_poses = np.asarray(query_poses, dtype=float).reshape(-1, 2)
    qi = np.flatnonzero(query_classes == class_id)
    ti = np.flatnonzero(db.classes == class_id)
    a_edges = np.asarray(angle_bins, dtype=float)
    d_edges = np.asarray(dist_bins, dtype=float)
    counts = np.zeros((len(a_edges) - 1, len(d_edges) - 1), dtype=np.int64)
    if not len(qi) or not len(ti):
        return counts, a_edges, d_edges
    dist = score_matrix(db.subset(ti), np.asarray(queries)[qi])
    ang = pose_angles(query_poses[qi, 0, None], query_poses[qi, 1, None], db.poses[None, ti, 0],
                      db.poses[None, ti, 1], db.symmetry(int(class_id)))
    ai = np.clip(np.searchsorted(a_edges, ang.ravel(), side="right") - 1, 0, len(a_edges) - 2)
    di = np.clip(np.searchsorted(d_edges, dist.ravel(), side="right") - 1, 0, len(d_edges) - 2)
    np.add.at(counts, (ai, di), 1)
    return counts, a_edges, d_edges


# ---------------------------------------------------------------------------
# Metric files (tab-separated text, fixed float formatting)
# ---------------------------------------------------------------------------

def write_accuracy(path, rows):
    """``rows`` of (threshold, k, accuracy)."""
    lines = ["threshold\tk\taccuracy"]
    lines += [f"{float(t):g}\t{int(k)}\t{float(a):.6f}" for t, k, a in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def read_accuracy(path):
    rows = []
    for line in Path(path).read_text().splitlines()[1:]:
        if line.strip():
            t, k, a = line.split("\t")
            rows.append((float(t), int(k), float(a)))
    return rows


def write_ratios(path, ratios):
    lines = ["ratio"] + [f"{float(r):.9g}" for r in ratios]
    Path(path).write_text("\n".join(lines) + "\n")


def write_histogram(path, counts, row_edges, col_edges, row_name="angle", col_name="distance"):
    counts = np.asarray(counts)
    lines = [f"# {row_name}_edges " + " ".join(f"{e:.9g}" for e in row_edges),
             f"# {col_name}_edges " + " ".join(f"{e:.9g}" for e in col_edges),
             f"# shape {counts.shape[0]} {counts.shape[1]} row-major"]
    lines += ["\t".join(str(int(v)) for v in row) for row in counts]
    Path(path).write_text("\n".join(lines) + "\n")


def leave_one_out_eval(manifest_path, held_out, settings, seed=0, out="loo", modality="depth"):
    """Train on every class except ``held_out``, then evaluate all classes (see :mod:`viewdesc.pipeline`)."""
    from .pipeline import leave_one_out
    return leave_one_out(settings, manifest_path, held_out, seed, out, modality)
