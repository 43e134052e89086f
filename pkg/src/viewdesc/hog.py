"""Histogram of oriented gradients baseline.

Layout of one channel's descriptor: blocks in row-major order (block row,
block column), inside a block its cells in row-major order, inside a cell
the orientation bins. Bin ``b`` is centred at ``b * 180 / bins`` degrees and
each pixel votes into its two nearest bins with linear weights (wrapping
from the last bin back to bin 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .validation import check_images


@dataclass(frozen=True)
class HogConfig:
    window: int = 64
    cell: int = 8
    block: int = 2           # cells per block side
    block_stride: int = 8    # pixels
    bins: int = 9

    def __post_init__(self):
        if min(self.window, self.cell, self.block, self.block_stride, self.bins) < 1:
            raise ValueError("HOG parameters must be positive")
        if self.window % self.cell or self.block_stride % self.cell:
            raise ValueError("window and block stride must be multiples of the cell size")
        if self.block * self.cell > self.window:
            raise ValueError("block larger than window")

    @property
    def cells_per_side(self):
        return self.window // self.cell

    @property
    def blocks_per_side(self):
        return (self.window - self.block * self.cell) // self.block_stride + 1

    @property
    def length(self):
        return self.blocks_per_side**2 * self.block**2 * self.bins


def _gradients(images):
    # replicate-edge central differences, [-1, 0, 1] without scaling
    p = np.pad(images, ((0, 0), (1, 1), (1, 1)), mode="edge")
    gx = p[:, 1:-1, 2:] - p[:, 1:-1, :-2]
    gy = p[:, 2:, 1:-1] - p[:, :-2, 1:-1]
    return gx, gy


def cell_histograms(images, cfg=HogConfig()):
    """Orientation histograms (N, cells, cells, bins) for a stack of single-channel images."""
    images = np.asarray(images, dtype=np.float64)
    gx, gy = _gradients(images)
    mag = np.hypot(gx, gy)
    ang = np.degrees(np.arctan2(gy, gx)) % 180.0
    pos = ang / (180.0 / cfg.bins)
    lo = np.floor(pos)
    frac = pos - lo
    b0 = lo.astype(np.int64) % cfg.bins
    b1 = (b0 + 1) % cfg.bins
    n = images.shape[0]
    c = cfg.cells_per_side
    hist = np.zeros((n, c, c, cfg.bins))
    for b in range(cfg.bins):
        vote = mag * ((1.0 - frac) * (b0 == b) + frac * (b1 == b))
        hist[..., b] = vote.reshape(n, c, cfg.cell, c, cfg.cell).sum(axis=(2, 4))
    return hist


def _l2(v, axis):
    norm = np.sqrt(np.sum(v * v, axis=axis, keepdims=True))
    out = np.zeros_like(v)
    np.divide(v, norm, out=out, where=norm > 0)
    return out


def hog_batch(images, cfg=HogConfig()):
    """HOG descriptors (N, length) for single-channel images (N, window, window)."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 3 or images.shape[1:] != (cfg.window, cfg.window):
        raise ValueError(f"HOG expects images of {cfg.window}x{cfg.window}, got {images.shape[1:]}")
    hist = cell_histograms(images, cfg)
    step = cfg.block_stride // cfg.cell
    nb = cfg.blocks_per_side
    blocks = np.empty((images.shape[0], nb, nb, cfg.block, cfg.block, cfg.bins))
    for by in range(nb):
        for bx in range(nb):
            blocks[:, by, bx] = hist[:, by * step:by * step + cfg.block, bx * step:bx * step + cfg.block]
    blocks = blocks.reshape(images.shape[0], nb, nb, -1)
    return _l2(blocks, axis=-1).reshape(images.shape[0], -1)


def hog_descriptor(image, cfg=HogConfig()):
    """Descriptor of one single-channel window; a constant image gives all zeros."""
    return hog_batch(np.asarray(image)[None], cfg)[0]


def stacked_hog(channels, cfg=HogConfig()):
    """Per-channel descriptors concatenated, then scaled to unit length (zero stays zero)."""
    channels = np.asarray(channels, dtype=np.float64)
    if channels.ndim == 2:
        channels = channels[None]
    return stacked_hog_batch(channels[None], cfg)[0]


def stacked_hog_batch(X, cfg=HogConfig()):
    X = np.asarray(X, dtype=np.float64)
    n, c = X.shape[:2]
    per = hog_batch(X.reshape(n * c, *X.shape[2:]), cfg).reshape(n, c * cfg.length)
    return _l2(per, axis=1)


def hog_similarity(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"descriptor lengths differ: {a.shape} vs {b.shape}")
    return float(a @ b)


class HogTransformer(TransformerMixin, BaseEstimator):
    """Stacked, unit-length HOG descriptors for image batches (N, C, H, W)."""

    def __init__(self, window=64, cell=8, block=2, block_stride=8, bins=9):
        self.window = window
        self.cell = cell
        self.block = block
        self.block_stride = block_stride
        self.bins = bins

    def _cfg(self):
        return HogConfig(self.window, self.cell, self.block, self.block_stride, self.bins)

    def fit(self, X, y=None):
        X = check_images(X)
        self.config_ = self._cfg()
        self.n_channels_ = X.shape[1]
        self.n_features_out_ = self.n_channels_ * self.config_.length
        return self

    def transform(self, X):
        X = check_images(X, n_channels=getattr(self, "n_channels_", None))
        return stacked_hog_batch(X, self._cfg())
