"""Viewpoints, procedural objects, rendering, augmentation and dataset files."""

from .augment import (add_fractal_background, add_gaussian_noise, median_inpaint, normalize_depth,
                      normalize_intensity)
from .dataset import DatasetConfig, build_dataset, load_arrays, read_manifest
from .geometry import (Pose, Symmetry, hemisphere_poses, icosphere_vertices, pose_angle,
                       pose_angles)
from .mesh import Mesh, make_primitive
from .render import Intrinsics, render_depth, render_shaded

__all__ = [
    "DatasetConfig", "Intrinsics", "Mesh", "Pose", "Symmetry",
    "add_fractal_background", "add_gaussian_noise", "build_dataset", "hemisphere_poses",
    "icosphere_vertices", "load_arrays", "make_primitive", "median_inpaint", "normalize_depth",
    "normalize_intensity", "pose_angle", "pose_angles", "read_manifest", "render_depth",
    "render_shaded",
]
