"""Viewpoint sampling on the upper hemisphere and symmetry-aware pose distance."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class Symmetry(str, Enum):
    NONE = "none"
    SYMMETRIC180 = "symmetric180"
    ROTATION_INVARIANT = "rotationInvariant"


@dataclass(frozen=True)
class Pose:
    azimuth: float
    elevation: float
    distance: float = 1.0

    def __post_init__(self):
        if not 0 <= self.azimuth < 360:
            raise ValueError(f"azimuth {self.azimuth} outside [0, 360)")
        if not 0 <= self.elevation <= 90:
            raise ValueError(f"elevation {self.elevation} outside [0, 90]")
        if self.distance <= 0:
            raise ValueError("distance must be positive")

    def view_vector(self):
        return view_vectors(self.azimuth, self.elevation)

    def position(self):
        return self.distance * self.view_vector()


def _icosahedron():
    # one vertex on each pole, two staggered rings of five
    z = 1.0 / np.sqrt(5.0)
    r = 2.0 / np.sqrt(5.0)
    verts = [(0.0, 0.0, 1.0)]
    for k in range(5):
        a = np.radians(72.0 * k)
        verts.append((r * np.cos(a), r * np.sin(a), z))
    for k in range(5):
        a = np.radians(36.0 + 72.0 * k)
        verts.append((r * np.cos(a), r * np.sin(a), -z))
    verts.append((0.0, 0.0, -1.0))
    faces = []
    for k in range(5):
        u0, u1 = 1 + k, 1 + (k + 1) % 5
        l0, l1 = 6 + k, 6 + (k + 1) % 5
        faces.append((0, u0, u1))
        faces.append((u0, l0, u1))
        faces.append((u1, l0, l1))
        faces.append((11, l1, l0))
    return np.array(verts), np.array(faces)


def icosphere(level):
    """Vertices and faces of a ``level``-times subdivided icosahedron on the unit sphere."""
    if level < 0:
        raise ValueError("level must be >= 0")
    verts, faces = _icosahedron()
    verts = list(map(tuple, verts))
    for _ in range(level):
        cache = {}
        new_faces = []

        def midpoint(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = np.add(verts[a], verts[b])
                verts.append(tuple(m / np.linalg.norm(m)))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    v = np.array(verts)
    return v / np.linalg.norm(v, axis=1, keepdims=True), np.array(faces)


def icosphere_vertices(level):
    return icosphere(level)[0]


def view_vectors(azimuth, elevation):
    az, el = np.broadcast_arrays(np.radians(azimuth), np.radians(elevation))
    return np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=-1)


def vector_to_angles(v):
    """(azimuth, elevation) in degrees for unit vectors; azimuth 0 at the poles."""
    v = np.atleast_2d(v)
    el = np.degrees(np.arcsin(np.clip(v[:, 2], -1.0, 1.0)))
    horiz = np.hypot(v[:, 0], v[:, 1])
    az = np.where(horiz < 1e-12, 0.0, np.degrees(np.arctan2(v[:, 1], v[:, 0])) % 360.0)
    az = np.where(az >= 360.0 - 1e-9, 0.0, az)
    return az, el


def hemisphere_poses(level, distance=1.0):
    """Icosphere vertices with z >= 0 as poses, sorted by elevation then azimuth."""
    v = icosphere_vertices(level)
    v = v[v[:, 2] >= -1e-9]
    v[:, 2] = np.maximum(v[:, 2], 0.0)
    az, el = vector_to_angles(v)
    el = np.clip(el, 0.0, 90.0)
    order = np.lexsort((np.round(az, 9), np.round(el, 9)))
    return [Pose(float(az[i]), float(el[i]), distance) for i in order]


def poses_to_array(poses):
    """(N, 2) array of [azimuth, elevation] degrees."""
    return np.array([(p.azimuth, p.elevation) for p in poses], dtype=float).reshape(-1, 2)


def pose_angles(az1, el1, az2, el2, symmetry=Symmetry.NONE):
    """Vectorised pose distance in degrees; arguments broadcast."""
    symmetry = Symmetry(symmetry)
    az1, el1, az2, el2 = (np.asarray(a, dtype=float) for a in (az1, el1, az2, el2))
    if symmetry is Symmetry.ROTATION_INVARIANT:
        return np.abs(el1 - el2)

    def angle(a2):
        u = view_vectors(az1, el1)
        w = view_vectors(a2, el2)
        u, w = np.broadcast_arrays(u, w)
        cross = np.linalg.norm(np.cross(u, w), axis=-1)
        dot = np.sum(u * w, axis=-1)
        ang = np.degrees(np.arctan2(cross, dot))
        # identical poses are exactly 0 regardless of trig rounding
        return np.where((np.mod(az1 - a2, 360.0) == 0) & (el1 == el2), 0.0, ang)

    ang = angle(az2)
    if symmetry is Symmetry.SYMMETRIC180:
        ang = np.minimum(ang, angle(az2 + 180.0))
    return ang


def pose_angle(p1, p2, symmetry=Symmetry.NONE):
    return float(pose_angles(p1.azimuth, p1.elevation, p2.azimuth, p2.elevation, symmetry))


def random_hemisphere_poses(n, distance, rng):
    """Area-uniform random poses on the upper hemisphere."""
    z = rng.uniform(0.0, 1.0, size=n)
    az = rng.uniform(0.0, 360.0, size=n)
    el = np.degrees(np.arcsin(z))
    return [Pose(float(a) % 360.0, float(e), distance) for a, e in zip(az, el)]
