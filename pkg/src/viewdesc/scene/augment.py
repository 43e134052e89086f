"""Noise augmentation, input normalisation and depth-gap inpainting."""

from __future__ import annotations

import numpy as np

DEPTH_HALF_RANGE = 0.2  # metres mapped to [-1, 1] around the object centre


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def add_gaussian_noise(image, sigma, seed=None):
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    image = np.asarray(image, dtype=float)
    if sigma == 0:
        return image.copy()
    return image + _rng(seed).normal(0.0, sigma, size=image.shape)


def value_noise(shape, octaves=4, persistence=0.5, base_cells=4, seed=None):
    """Multi-octave value noise in roughly [-1, 1] (bilinear lattice interpolation)."""
    rng = _rng(seed)
    h, w = shape
    out = np.zeros(shape)
    total = 0.0
    amp = 1.0
    for o in range(octaves):
        cells = base_cells * 2**o
        lattice = rng.uniform(-1.0, 1.0, size=(cells + 1, cells + 1))
        ys = np.linspace(0, cells, h, endpoint=False) + cells / (2 * h)
        xs = np.linspace(0, cells, w, endpoint=False) + cells / (2 * w)
        y0 = np.floor(ys).astype(int)
        x0 = np.floor(xs).astype(int)
        ty = ys - y0
        tx = xs - x0
        ty = ty * ty * (3 - 2 * ty)
        tx = tx * tx * (3 - 2 * tx)
        a = lattice[y0][:, x0]
        b = lattice[y0][:, x0 + 1]
        c = lattice[y0 + 1][:, x0]
        d = lattice[y0 + 1][:, x0 + 1]
        top = a + (b - a) * tx[None, :]
        bot = c + (d - c) * tx[None, :]
        out += amp * (top + (bot - top) * ty[:, None])
        total += amp
        amp *= persistence
    return out / total


def add_fractal_background(image, valid_mask, amplitude, octaves=4, seed=None):
    """Add fractal noise scaled by ``amplitude`` on pixels where ``valid_mask`` is False."""
    image = np.asarray(image, dtype=float)
    valid_mask = np.asarray(valid_mask, dtype=bool)
    if valid_mask.shape != image.shape:
        raise ValueError(f"mask shape {valid_mask.shape} != image shape {image.shape}")
    out = image.copy()
    bg = ~valid_mask
    if not bg.any() or amplitude == 0:
        return out
    noise = value_noise(image.shape, octaves=octaves, seed=seed)
    out[bg] += amplitude * noise[bg]
    return out


def normalize_depth(patch, center_depth, half_range=DEPTH_HALF_RANGE):
    """Centre on the object depth, scale so +-``half_range`` maps to +-1, and clip."""
    if center_depth <= 0:
        raise ValueError("center depth must be positive")
    return np.clip((np.asarray(patch, dtype=float) - center_depth) / half_range, -1.0, 1.0)


def normalize_intensity(patch):
    """Zero mean, unit variance over the patch; a constant patch maps to zeros."""
    patch = np.asarray(patch, dtype=float)
    centred = patch - patch.mean()
    std = centred.std()
    if std <= 1e-12 * max(1.0, float(np.abs(patch).max())):
        return np.zeros_like(patch)
    return centred / std


def median_inpaint(depth, valid_mask, max_iter=10_000):
    """Fill invalid pixels with the median of their valid 3x3 neighbours, repeating until no gaps remain.

    Each sweep reads only the state from the previous sweep. Valid pixels are never modified.
    Returns ``(filled, iterations)``.
    """
    depth = np.asarray(depth, dtype=float)
    valid = np.asarray(valid_mask, dtype=bool).copy()
    if valid.shape != depth.shape:
        raise ValueError("mask shape does not match depth")
    if not valid.any():
        raise ValueError("cannot inpaint: no valid pixel")
    out = np.where(valid, depth, np.nan)
    h, w = out.shape
    it = 0
    while not valid.all():
        if it >= max_iter:
            raise RuntimeError("inpainting did not converge")
        padded = np.pad(out, 1, constant_values=np.nan)
        neigh = np.stack([padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
                          for dy in (-1, 0, 1) for dx in (-1, 0, 1) if dy or dx])
        count = np.sum(~np.isnan(neigh), axis=0)
        todo = ~valid & (count > 0)
        vals = neigh[:, todo]
        out[todo] = np.nanmedian(vals, axis=0)
        valid = valid | todo
        it += 1
    return out, it


def simulate_depth_dropout(object_mask, grazing_deg, max_grazing=80.0, speckle=0.05, seed=None):
    """Validity mask after dropping grazing-angle object pixels and random speckles."""
    rng = _rng(seed)
    drop = np.asarray(object_mask, dtype=bool) & (np.asarray(grazing_deg) > max_grazing)
    drop |= rng.random(drop.shape) < speckle
    return ~drop
