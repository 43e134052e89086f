"""Input checks shared by the estimators and the command line."""

from __future__ import annotations

import numpy as np
from sklearn.utils import check_array


def check_images(X, n_channels=None, spatial=None, dtype=np.float32):
    """Return a finite (N, C, H, W) array; a single (C, H, W) image becomes a batch of one."""
    X = np.asarray(X)
    if X.ndim == 3:
        X = X[None]
    if X.ndim != 4:
        raise ValueError(f"expected images shaped (N, C, H, W), got {X.ndim}-d input")
    X = check_array(X, allow_nd=True, dtype=dtype, ensure_min_samples=1)
    if n_channels is not None and X.shape[1] != n_channels:
        raise ValueError(f"expected {n_channels} channel(s), got {X.shape[1]}")
    if spatial is not None and tuple(X.shape[2:]) != tuple(spatial):
        raise ValueError(f"expected {tuple(spatial)} pixels, got {X.shape[2:]}")
    return X


def check_poses(poses, n=None):
    """(N, 2) azimuth/elevation array in degrees with elevation in [0, 90]."""
    poses = check_array(np.asarray(poses, dtype=float).reshape(-1, 2), ensure_min_samples=0)
    if n is not None and len(poses) != n:
        raise ValueError(f"expected {n} poses, got {len(poses)}")
    if len(poses) and (poses[:, 1].min() < -1e-9 or poses[:, 1].max() > 90 + 1e-9):
        raise ValueError("elevations must lie in [0, 90] degrees")
    return poses


def check_labels(y, n=None):
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError("labels must be one-dimensional")
    if y.size and (not np.issubdtype(y.dtype, np.integer) and not np.all(np.mod(y, 1) == 0)):
        raise ValueError("class labels must be integers")
    y = y.astype(np.int64)
    if y.size and y.min() < 0:
        raise ValueError("class labels must be non-negative")
    if n is not None and len(y) != n:
        raise ValueError(f"expected {n} labels, got {len(y)}")
    return y


def check_mask(mask, n):
    mask = np.asarray(mask, dtype=bool).reshape(-1)
    if len(mask) != n:
        raise ValueError(f"expected {n} flags, got {len(mask)}")
    return mask
