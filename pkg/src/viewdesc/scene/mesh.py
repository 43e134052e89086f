"""Procedural triangle meshes used as a stand-in object zoo."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import icosphere

MAX_EXTENT = 0.15


@dataclass
class Mesh:
    vertices: np.ndarray   # (V, 3) metres
    triangles: np.ndarray  # (T, 3) int
    normals: np.ndarray    # (V, 3) unit, per vertex

    def face_normals(self):
        v = self.vertices[self.triangles]
        n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def bounding_radius(self):
        return float(np.max(np.linalg.norm(self.vertices, axis=1)))

    def extent(self):
        return self.vertices.max(axis=0) - self.vertices.min(axis=0)


def _orient_outward(verts, tris):
    """Flip triangles of a convex piece so their normals point away from its centroid."""
    c = verts.mean(axis=0)
    v = verts[tris]
    n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    outward = np.sum(n * (v.mean(axis=1) - c), axis=1) >= 0
    tris = tris.copy()
    tris[~outward] = tris[~outward][:, ::-1]
    return tris


def _vertex_normals(verts, tris):
    v = verts[tris]
    n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])  # area weighted
    acc = np.zeros_like(verts)
    for corner in range(3):
        np.add.at(acc, tris[:, corner], n)
    return acc / np.linalg.norm(acc, axis=1, keepdims=True)


def _convex_piece(verts, tris):
    verts = np.asarray(verts, dtype=float)
    tris = _orient_outward(verts, np.asarray(tris, dtype=np.int64))
    return verts, tris


def _box(sx, sy, sz):
    x, y, z = sx / 2, sy / 2, sz / 2
    verts = [(sx_, sy_, sz_) for sx_ in (-x, x) for sy_ in (-y, y) for sz_ in (-z, z)]
    # vertex index = 4*ix + 2*iy + iz
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    tris = []
    for a, b, c, d in quads:
        tris += [(a, b, c), (a, c, d)]
    return _convex_piece(verts, tris)


def _ring(radius, z, segments, phase=0.0):
    a = np.linspace(0, 2 * np.pi, segments, endpoint=False) + phase
    return np.stack([radius * np.cos(a), radius * np.sin(a), np.full(segments, z)], axis=1)


def _cylinder(radius, height, segments=24):
    n = segments
    verts = np.vstack([_ring(radius, -height / 2, n), _ring(radius, height / 2, n),
                       [(0, 0, -height / 2), (0, 0, height / 2)]])
    bc, tc = 2 * n, 2 * n + 1
    tris = []
    for i in range(n):
        j = (i + 1) % n
        tris += [(i, j, n + j), (i, n + j, n + i), (bc, j, i), (tc, n + i, n + j)]
    return _convex_piece(verts, tris)


def _cone(radius, height, segments=24):
    n = segments
    verts = np.vstack([_ring(radius, -height / 2, n), [(0, 0, -height / 2), (0, 0, height / 2)]])
    bc, apex = n, n + 1
    tris = []
    for i in range(n):
        j = (i + 1) % n
        tris += [(bc, j, i), (i, j, apex)]
    return _convex_piece(verts, tris)


def _wedge(sx, sy, sz):
    # right-triangle cross section in x-z, vertical face at -x, extruded along y
    x, y, z = sx / 2, sy / 2, sz / 2
    prof = [(-x, -z), (x, -z), (-x, z)]
    verts = [(px, -y, pz) for px, pz in prof] + [(px, y, pz) for px, pz in prof]
    tris = [(0, 1, 2), (3, 5, 4),
            (0, 3, 4), (0, 4, 1),
            (1, 4, 5), (1, 5, 2),
            (2, 5, 3), (2, 3, 0)]
    return _convex_piece(verts, tris)


def _capsule(radius, length):
    # lying along x: sphere split in two halves pushed apart by length
    verts, tris = icosphere(2)
    verts = verts * radius
    verts[:, 0] += np.sign(verts[:, 0]) * length / 2
    return _convex_piece(verts, tris)


def _sphere(radius, level=3):
    verts, tris = icosphere(level)
    return _convex_piece(verts * radius, tris)


_BUILDERS = {
    "box": (_box, {"sx": 1.0, "sy": 1.0, "sz": 1.0}),
    "cylinder": (_cylinder, {"radius": 0.5, "height": 1.0, "segments": 24}),
    "cone": (_cone, {"radius": 0.5, "height": 1.0, "segments": 24}),
    "wedge": (_wedge, {"sx": 1.0, "sy": 0.6, "sz": 0.8}),
    "capsule": (_capsule, {"radius": 0.3, "length": 0.8}),
    "sphere": (_sphere, {"radius": 0.5, "level": 3}),
}

PRIMITIVE_KINDS = tuple(_BUILDERS) + ("composite",)


def _piece(kind, params):
    builder, defaults = _BUILDERS[kind]
    merged = dict(defaults)
    merged.update(params or {})
    for k, v in merged.items():
        if k not in defaults:
            raise ValueError(f"{kind}: unknown parameter {k!r}")
        if k in ("segments", "level"):
            if int(v) < (3 if k == "segments" else 0):
                raise ValueError(f"{kind}: degenerate {k}={v}")
        elif v <= 0:
            raise ValueError(f"{kind}: dimension {k} must be positive, got {v}")
    return builder(**{k: (int(v) if k in ("segments", "level") else float(v)) for k, v in merged.items()})


def _random_parts(rng):
    """Two or three axis-aligned pieces glued into an asymmetric shape."""
    parts = [("box", {"sx": rng.uniform(0.6, 1.0), "sy": rng.uniform(0.4, 0.8),
                      "sz": rng.uniform(0.3, 0.6)}, (0.0, 0.0, 0.0))]
    n_extra = int(rng.integers(1, 3))
    for _ in range(n_extra):
        kind = ["box", "cylinder", "cone"][int(rng.integers(0, 3))]
        if kind == "box":
            p = {"sx": rng.uniform(0.2, 0.4), "sy": rng.uniform(0.2, 0.4), "sz": rng.uniform(0.4, 0.9)}
        else:
            p = {"radius": rng.uniform(0.1, 0.2), "height": rng.uniform(0.4, 0.9), "segments": 16}
        off = (rng.uniform(-0.4, 0.4), rng.uniform(-0.25, 0.25), rng.uniform(0.0, 0.3))
        parts.append((kind, p, off))
    return parts


def make_primitive(kind, params=None, seed=0, extent=MAX_EXTENT):
    """Build a closed mesh centred on its bounding box and scaled to ``extent`` metres.

    ``composite`` takes ``params={"parts": [(kind, params, (dx, dy, dz)), ...]}``;
    without parts it draws a random arrangement from ``seed``.
    """
    if extent <= 0 or extent > MAX_EXTENT:
        raise ValueError(f"extent must be in (0, {MAX_EXTENT}]")
    if kind == "composite":
        parts = (params or {}).get("parts")
        if parts is None:
            parts = _random_parts(np.random.default_rng(seed))
        if not parts:
            raise ValueError("composite: no parts")
        verts, tris, norms = [], [], []
        base = 0
        for sub_kind, sub_params, offset in parts:
            if sub_kind == "composite":
                raise ValueError("composite parts cannot nest")
            v, t = _piece(sub_kind, sub_params)
            norms.append(_vertex_normals(v, t))
            verts.append(v + np.asarray(offset, dtype=float))
            tris.append(t + base)
            base += len(v)
        verts, tris, normals = np.vstack(verts), np.vstack(tris), np.vstack(norms)
    elif kind in _BUILDERS:
        verts, tris = _piece(kind, params)
        normals = _vertex_normals(verts, tris)
    else:
        raise ValueError(f"unknown primitive kind {kind!r}")

    lo, hi = verts.min(axis=0), verts.max(axis=0)
    if np.any(hi - lo <= 0):
        raise ValueError(f"{kind}: degenerate mesh")
    verts = (verts - (lo + hi) / 2) * (extent / np.max(hi - lo))
    return Mesh(verts, tris.astype(np.int64), normals)
