"""scikit-learn style wrappers around the trainer and the template search."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import checkpoint
from .nn import default_network_spec
from .objective import LossConfig
from .retrieval import ASCENDING_DISTANCE, DescriptorDB, best_angle_errors, knn_rows
from .scene.geometry import Symmetry
from .trainer import Schedule, embed, train
from .validation import check_images, check_labels, check_mask, check_poses


class DescriptorNet(TransformerMixin, BaseEstimator):
    """Learns a view descriptor from training views and templates.

    ``fit(X, y, poses=..., is_template=...)`` takes all samples in one array;
    rows flagged in ``is_template`` are the clean templates, the others the
    training views. ``transform`` returns descriptors of shape (N, descriptor_dim).
    """

    def __init__(self, descriptor_dim=16, conv1=(16, 9, 9), conv2=(7, 5, 5), hidden=256,
                 initial_epochs=400, initial_lr=0.01, momentum=0.9, lr_decay=0.9, decay_every=100,
                 bootstrap_rounds=2, epochs_per_bootstrap=200, final_epochs=300, final_lr_factor=0.1,
                 batch_size=64, per_sample_mean=True, margin=0.01, reg=1e-6, eps=1e-8,
                 formulation="ratio", random_state=0):
        self.descriptor_dim = descriptor_dim
        self.conv1 = conv1
        self.conv2 = conv2
        self.hidden = hidden
        self.initial_epochs = initial_epochs
        self.initial_lr = initial_lr
        self.momentum = momentum
        self.lr_decay = lr_decay
        self.decay_every = decay_every
        self.bootstrap_rounds = bootstrap_rounds
        self.epochs_per_bootstrap = epochs_per_bootstrap
        self.final_epochs = final_epochs
        self.final_lr_factor = final_lr_factor
        self.batch_size = batch_size
        self.per_sample_mean = per_sample_mean
        self.margin = margin
        self.reg = reg
        self.eps = eps
        self.formulation = formulation
        self.random_state = random_state

    def _schedule(self):
        return Schedule(self.initial_epochs, self.initial_lr, self.momentum, self.lr_decay, self.decay_every,
                        self.bootstrap_rounds, self.epochs_per_bootstrap, self.final_epochs,
                        self.final_lr_factor, self.batch_size, int(self.random_state or 0), self.per_sample_mean)

    def fit(self, X, y, poses=None, is_template=None, symmetries=None):
        X = check_images(X)
        y = check_labels(y, len(X))
        if poses is None or is_template is None:
            raise ValueError("fit needs poses and is_template for every sample")
        poses = check_poses(poses, len(X))
        tmpl = check_mask(is_template, len(X))
        n_classes = int(y.max()) + 1
        if symmetries is None:
            symmetries = [Symmetry.NONE] * n_classes
        if len(symmetries) < n_classes:
            raise ValueError(f"need a symmetry for each of {n_classes} classes")
        spec = default_network_spec(X.shape[1], X.shape[2], self.descriptor_dim, tuple(self.conv1),
                                    tuple(self.conv2), self.hidden)
        if X.shape[2] != X.shape[3]:
            raise ValueError("square images expected")
        loss = LossConfig(self.margin, self.reg, self.eps, self.formulation)
        self.network_, self.history_ = train(X[~tmpl], y[~tmpl], poses[~tmpl], X[tmpl], y[tmpl], poses[tmpl],
                                             list(symmetries), spec, loss, self._schedule())
        self.symmetries_ = [Symmetry(s) for s in symmetries]
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    def transform(self, X):
        check_is_fitted(self, "network_")
        X = check_images(X, n_channels=self.network_.spec.input_shape[0],
                         spatial=self.network_.spec.input_shape[1:])
        return embed(self.network_, X)

    def checkpoint_digest(self):
        check_is_fitted(self, "network_")
        return checkpoint.digest(self.network_)

    def save(self, path):
        check_is_fitted(self, "network_")
        return checkpoint.save(self.network_, path)


class TemplateMatcher(ClassifierMixin, BaseEstimator):
    """Exhaustive nearest-template search over descriptors.

    ``fit(descriptors, y, poses=...)`` stores the template database;
    ``predict`` returns the class of the best template, ``predict_pose``
    its pose, and ``kneighbors`` the k best rows.
    """

    def __init__(self, k=1, direction=ASCENDING_DISTANCE):
        self.k = k
        self.direction = direction

    def fit(self, X, y, poses=None, symmetries=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("descriptors must be a 2-D array")
        y = check_labels(y, len(X))
        poses = np.zeros((len(X), 2)) if poses is None else check_poses(poses, len(X))
        self.db_ = DescriptorDB(X, y, poses, direction=self.direction, symmetries=list(symmetries or []))
        self.classes_ = np.unique(y)
        self.n_features_in_ = X.shape[1]
        return self

    def _queries(self, X):
        check_is_fitted(self, "db_")
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return X

    def kneighbors(self, X, k=None):
        """(scores, rows) of the k best templates per query, best first."""
        rows, scores = knn_rows(self.db_, self._queries(X), k or self.k)
        return scores, rows

    def predict(self, X):
        _, rows = self.kneighbors(X, 1)
        return self.db_.classes[rows[:, 0]]

    def predict_pose(self, X):
        _, rows = self.kneighbors(X, 1)
        return self.db_.poses[rows[:, 0]]

    def angle_errors(self, X, y, poses):
        """Best pose error among the k retrieved templates of the true class (inf if none)."""
        return best_angle_errors(self.db_, self._queries(X), y, poses, self.k)
