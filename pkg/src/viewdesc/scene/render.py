"""Z-buffer software rasterizer producing depth, validity and Lambertian shading."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

WINDOW_M = 0.4


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    @classmethod
    def for_window(cls, resolution, distance, window=WINDOW_M):
        """Pinhole intrinsics mapping a ``window``-metre square at ``distance`` onto the image."""
        f = resolution * distance / window
        return cls(f, f, resolution / 2.0, resolution / 2.0)


@dataclass
class Raster:
    depth: np.ndarray     # (H, W) metres along the optical axis, 0 where invalid
    mask: np.ndarray      # (H, W) bool, True where the object covers the pixel
    face: np.ndarray      # (H, W) triangle index or -1
    rays: np.ndarray      # (H, W, 3) unit viewing rays in world coordinates


def camera_frame(pose):
    """Camera position and rotation (rows: right, down, forward) looking at the origin."""
    pos = pose.position()
    fwd = -pos / np.linalg.norm(pos)
    az = np.radians(pose.azimuth)
    right = np.array([-np.sin(az), np.cos(az), 0.0])
    down = np.cross(fwd, right)
    return pos, np.stack([right, down, fwd])


def rasterize(mesh, pose, resolution=64, intrinsics=None, chunk=64):
    if len(mesh.triangles) == 0:
        raise ValueError("mesh is empty")
    if pose.distance <= mesh.bounding_radius():
        raise ValueError("camera is inside the mesh bounding sphere")
    K = intrinsics or Intrinsics.for_window(resolution, pose.distance)
    pos, R = camera_frame(pose)
    cam = (mesh.vertices - pos) @ R.T
    z = cam[:, 2]
    if np.any(z <= 1e-6):
        raise ValueError("mesh crosses the camera plane")
    u = K.fx * cam[:, 0] / z + K.cx
    v = K.fy * cam[:, 1] / z + K.cy

    h = w = resolution
    py, px = np.mgrid[0:h, 0:w]
    pu_all = (px + 0.5).ravel()
    pv_all = (py + 0.5).ravel()

    inv_depth = np.zeros(h * w)
    face = np.full(h * w, -1, dtype=np.int64)
    tri = mesh.triangles
    for start in range(0, len(tri), chunk):
        t = tri[start:start + chunk]
        u0, u1, u2 = u[t[:, 0]], u[t[:, 1]], u[t[:, 2]]
        v0, v1, v2 = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
        area = (u1 - u0) * (v2 - v0) - (u2 - u0) * (v1 - v0)
        ok = np.abs(area) > 1e-12
        if not np.any(ok):
            continue
        area = np.where(ok, area, 1.0)
        # restrict to pixels inside the chunk's screen bounding box
        c0 = max(int(np.floor(min(u0.min(), u1.min(), u2.min()))), 0)
        c1 = min(int(np.ceil(max(u0.max(), u1.max(), u2.max()))), w)
        r0 = max(int(np.floor(min(v0.min(), v1.min(), v2.min()))), 0)
        r1 = min(int(np.ceil(max(v0.max(), v1.max(), v2.max()))), h)
        if c0 >= c1 or r0 >= r1:
            continue
        sel = ((py[r0:r1, c0:c1]) * w + px[r0:r1, c0:c1]).ravel()
        pu, pv = pu_all[sel], pv_all[sel]
        # barycentric weights for every (triangle, pixel)
        w0 = ((u1[:, None] - pu) * (v2[:, None] - pv) - (u2[:, None] - pu) * (v1[:, None] - pv)) / area[:, None]
        w1 = ((u2[:, None] - pu) * (v0[:, None] - pv) - (u0[:, None] - pu) * (v2[:, None] - pv)) / area[:, None]
        w2 = 1.0 - w0 - w1
        inside = (w0 >= -1e-9) & (w1 >= -1e-9) & (w2 >= -1e-9) & ok[:, None]
        # perspective-correct: 1/z is affine in screen space
        iz = (w0 / z[t[:, 0], None] + w1 / z[t[:, 1], None] + w2 / z[t[:, 2], None])
        iz = np.where(inside, iz, 0.0)
        best = np.argmax(iz, axis=0)
        best_iz = iz[best, np.arange(iz.shape[1])]
        closer = best_iz > inv_depth[sel]
        inv_depth[sel[closer]] = best_iz[closer]
        face[sel[closer]] = start + best[closer]

    mask = face >= 0
    depth = np.zeros(h * w)
    depth[mask] = 1.0 / inv_depth[mask]
    dirs = np.stack([(pu_all - K.cx) / K.fx, (pv_all - K.cy) / K.fy, np.ones_like(pu_all)], axis=1)
    rays = dirs @ R
    rays /= np.linalg.norm(rays, axis=1, keepdims=True)
    return Raster(depth.reshape(h, w), mask.reshape(h, w), face.reshape(h, w), rays.reshape(h, w, 3))


def render_depth(mesh, pose, resolution=64, intrinsics=None):
    """Z-depth in metres and the validity mask (False on background)."""
    r = rasterize(mesh, pose, resolution, intrinsics)
    return r.depth, r.mask


def shade(raster, mesh, light_dir):
    normals = mesh.face_normals()
    out = np.zeros(raster.mask.shape)
    n = normals[raster.face[raster.mask]]
    out[raster.mask] = np.maximum(0.0, n @ light_dir)
    return np.clip(out, 0.0, 1.0)


def render_shaded(mesh, pose, resolution=64, intrinsics=None, light_dir=None):
    """Lambertian intensity ``max(0, n.l)`` on covered pixels, 0 on background.

    ``light_dir`` points from the surface towards the light; by default it is
    the direction from the object to the camera.
    """
    r = rasterize(mesh, pose, resolution, intrinsics)
    if light_dir is None:
        light_dir = pose.view_vector()
    light_dir = np.asarray(light_dir, dtype=float)
    return shade(r, mesh, light_dir / np.linalg.norm(light_dir))


def grazing_angles(raster, mesh):
    """Angle in degrees between the surface normal and the reversed viewing ray per pixel."""
    normals = mesh.face_normals()
    ang = np.full(raster.mask.shape, 90.0)
    n = normals[raster.face[raster.mask]]
    cos = np.abs(np.sum(n * raster.rays[raster.mask], axis=1))
    ang[raster.mask] = np.degrees(np.arccos(np.clip(cos, 0.0, 1.0)))
    return ang
