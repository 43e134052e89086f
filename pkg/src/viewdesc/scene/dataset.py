"""On-disk dataset of template, training and test views.

Layout under the output directory::

    dataset.json                 config, object zoo entries, digest
    manifest.tsv                 one line per sample (see below)
    samples/o<class>/<kind>_<n>.depth.pfm   z-depth in metres (float32)
    samples/o<class>/<kind>_<n>.shade.pgm   Lambertian intensity (8-bit)
    samples/o<class>/<kind>_<n>.mask.pgm    object silhouette (0/255)

``manifest.tsv`` starts with a comment line carrying the config digest and
the seed, then a tab-separated header ``path class azimuth elevation kind``.
``path`` is the sample stem relative to the manifest directory.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .. import seeding
from .augment import (DEPTH_HALF_RANGE, add_fractal_background, add_gaussian_noise, median_inpaint,
                      normalize_depth, normalize_intensity, simulate_depth_dropout)
from .geometry import Pose, Symmetry, hemisphere_poses, random_hemisphere_poses
from .imageio import read_pfm, read_pgm, to_u8, write_pfm, write_pgm
from .mesh import make_primitive
from .render import Intrinsics, grazing_angles, rasterize, shade

TEMPLATE, TRAINING, TEST = "template", "training", "test"
KINDS = (TEMPLATE, TRAINING, TEST)

# name -> (primitive kind, params, symmetry)
ZOO = {
    "crate": ("box", {"sx": 1.0, "sy": 0.6, "sz": 0.7}, Symmetry.SYMMETRIC180),
    "cone": ("cone", {"radius": 0.5, "height": 0.9}, Symmetry.ROTATION_INVARIANT),
    "wedge": ("wedge", {"sx": 1.0, "sy": 0.55, "sz": 0.8}, Symmetry.NONE),
    "mug": ("composite", {"parts": [
        ("cylinder", {"radius": 0.32, "height": 0.9}, (0.0, 0.0, 0.0)),
        ("box", {"sx": 0.3, "sy": 0.14, "sz": 0.55}, (0.42, 0.0, 0.0)),
    ]}, Symmetry.NONE),
    "step": ("composite", {"parts": [
        ("box", {"sx": 1.0, "sy": 0.6, "sz": 0.35}, (0.0, 0.0, 0.0)),
        ("box", {"sx": 0.35, "sy": 0.6, "sz": 0.5}, (-0.32, 0.0, 0.4)),
    ]}, Symmetry.NONE),
    "cylinder": ("cylinder", {"radius": 0.4, "height": 1.0}, Symmetry.ROTATION_INVARIANT),
    "capsule": ("capsule", {"radius": 0.3, "length": 0.8}, Symmetry.SYMMETRIC180),
    "tower": ("composite", {"parts": [
        ("box", {"sx": 0.7, "sy": 0.7, "sz": 0.3}, (0.0, 0.0, 0.0)),
        ("cylinder", {"radius": 0.15, "height": 0.9}, (0.15, 0.15, 0.45)),
    ]}, Symmetry.NONE),
}


@dataclass
class DatasetConfig:
    objects: tuple = ("crate", "cone", "wedge", "mug", "step")
    template_level: int = 2
    train_level: int = 3
    n_copies: int = 1
    n_test: int = 60
    resolution: int = 64
    distance: float = 0.6
    window: float = 0.4
    depth_sigma: float = 0.003
    intensity_sigma: float = 0.02
    fractal_amplitude: float = 0.5
    fractal_octaves: int = 4
    max_grazing: float = 80.0
    speckle: float = 0.05

    def __post_init__(self):
        if isinstance(self.objects, str):
            self.objects = tuple(s.strip() for s in self.objects.split(",") if s.strip())
        self.objects = tuple(self.objects)
        for name in self.objects:
            if name not in ZOO:
                raise ValueError(f"unknown object {name!r}; choose from {sorted(ZOO)}")
        if self.n_copies < 1 or self.n_test < 0:
            raise ValueError("n_copies must be >= 1 and n_test >= 0")

    def symmetries(self):
        return [ZOO[name][2] for name in self.objects]

    def to_dict(self):
        d = asdict(self)
        d["objects"] = list(self.objects)
        return d

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass
class SampleRecord:
    path: str
    class_id: int
    azimuth: float
    elevation: float
    kind: str

    @property
    def pose(self):
        return (self.azimuth, self.elevation)


@dataclass
class Manifest:
    root: Path
    records: list
    config: DatasetConfig
    digest: str
    seed: int = 0
    symmetries: list = field(default_factory=list)

    def select(self, kinds=None, classes=None):
        out = []
        for i, r in enumerate(self.records):
            if kinds is not None and r.kind not in kinds:
                continue
            if classes is not None and r.class_id not in classes:
                continue
            out.append(i)
        return out


def object_mesh(name, seed=0):
    kind, params, _ = ZOO[name]
    return make_primitive(kind, params, seed=seed)


def render_sample(mesh, pose, kind, cfg, rng=None):
    """Depth (metres, float32), shading in [0, 1] and the object mask for one view.

    Background depth is a plane 20 cm behind the object centre, which
    normalises to +1. Non-template views get fractal background clutter and
    Gaussian noise; test views additionally lose grazing and speckle pixels
    that are then refilled by median inpainting.
    """
    K = Intrinsics.for_window(cfg.resolution, pose.distance, cfg.window)
    raster = rasterize(mesh, pose, cfg.resolution, K)
    mask = raster.mask
    far = pose.distance + DEPTH_HALF_RANGE
    depth = np.where(mask, raster.depth, far)
    shaded = shade(raster, mesh, pose.view_vector())
    if kind != TEMPLATE:
        depth = add_fractal_background(depth, mask, cfg.fractal_amplitude * DEPTH_HALF_RANGE,
                                       cfg.fractal_octaves, rng)
        shaded = add_fractal_background(shaded, mask, cfg.fractal_amplitude, cfg.fractal_octaves, rng)
        depth = add_gaussian_noise(depth, cfg.depth_sigma, rng)
        shaded = np.clip(add_gaussian_noise(shaded, cfg.intensity_sigma, rng), 0.0, 1.0)
    if kind == TEST:
        valid = simulate_depth_dropout(mask, grazing_angles(raster, mesh), cfg.max_grazing,
                                       cfg.speckle, rng)
        depth, _ = median_inpaint(depth, valid)
    return depth.astype(np.float32), shaded, mask


def plan_samples(cfg, seed):
    """Ordered list of (class_id, kind, Pose) for the whole dataset."""
    templates = hemisphere_poses(cfg.template_level, cfg.distance)
    train = hemisphere_poses(cfg.train_level, cfg.distance)
    plan = []
    for c in range(len(cfg.objects)):
        plan += [(c, TEMPLATE, p) for p in templates]
        for _ in range(cfg.n_copies):
            plan += [(c, TRAINING, p) for p in train]
        test_rng = seeding.stream(seed, "dataset", 1_000_000 + c)
        plan += [(c, TEST, p) for p in random_hemisphere_poses(cfg.n_test, cfg.distance, test_rng)]
    return plan


def build_dataset(cfg, out_dir, seed):
    """Render every sample, write images and the manifest; returns the manifest path."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "samples").mkdir(exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create dataset directory {out}: {exc}") from exc
    meshes = [object_mesh(name, seed) for name in cfg.objects]
    counters = {}
    records = []
    for index, (c, kind, pose) in enumerate(plan_samples(cfg, seed)):
        n = counters.get((c, kind), 0)
        counters[(c, kind)] = n + 1
        rel = f"samples/o{c}/{kind}_{n:05d}"
        (out / rel).parent.mkdir(parents=True, exist_ok=True)
        rng = seeding.stream(seed, "dataset", index)
        depth, shaded, mask = render_sample(meshes[c], pose, kind, cfg, rng)
        write_pfm(out / f"{rel}.depth.pfm", depth)
        write_pgm(out / f"{rel}.shade.pgm", to_u8(shaded))
        write_pgm(out / f"{rel}.mask.pgm", mask.astype(np.uint8) * 255)
        records.append(SampleRecord(rel, c, pose.azimuth, pose.elevation, kind))

    digest = cfg.digest()
    meta = {"config": cfg.to_dict(), "digest": digest, "seed": int(seed),
            "symmetries": [s.value for s in cfg.symmetries()]}
    (out / "dataset.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    path = out / "manifest.tsv"
    write_manifest(path, records, digest, seed)
    return path


def write_manifest(path, records, digest, seed):
    lines = [f"# viewdesc-manifest v1 config_digest={digest} seed={int(seed)}",
             "path\tclass\tazimuth\televation\tkind"]
    for r in records:
        lines.append(f"{r.path}\t{r.class_id}\t{r.azimuth!r}\t{r.elevation!r}\t{r.kind}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    meta = json.loads((path.parent / "dataset.json").read_text())
    cfg = DatasetConfig(**{k: v for k, v in meta["config"].items()})
    lines = path.read_text().splitlines()
    header = lines[0]
    if not header.startswith("# viewdesc-manifest"):
        raise ValueError(f"{path}: not a viewdesc manifest")
    tags = dict(tok.split("=", 1) for tok in header.split()[3:])
    records = []
    for line in lines[2:]:
        if not line.strip():
            continue
        p, c, az, el, kind = line.split("\t")
        if kind not in KINDS:
            raise ValueError(f"{path}: unknown sample kind {kind!r}")
        records.append(SampleRecord(p, int(c), float(az), float(el), kind))
    return Manifest(path.parent, records, cfg, tags.get("config_digest", ""), int(tags.get("seed", 0)),
                    [Symmetry(s) for s in meta["symmetries"]])


CHANNELS = ("depth", "shaded")


def load_channels(manifest, index, channels=("depth",)):
    """Normalised network input (C, H, W) for one manifest record."""
    r = manifest.records[index]
    base = manifest.root / r.path
    planes = []
    for ch in channels:
        if ch == "depth":
            planes.append(normalize_depth(read_pfm(f"{base}.depth.pfm"), manifest.config.distance))
        elif ch == "shaded":
            planes.append(normalize_intensity(read_pgm(f"{base}.shade.pgm") / 255.0))
        else:
            raise ValueError(f"unknown channel {ch!r}")
    return np.stack(planes).astype(np.float32)


def load_raw_channels(manifest, index, channels=("depth",)):
    """Un-normalised planes (depth in metres, intensity in [0, 1])."""
    r = manifest.records[index]
    base = manifest.root / r.path
    planes = []
    for ch in channels:
        if ch == "depth":
            planes.append(read_pfm(f"{base}.depth.pfm").astype(float))
        else:
            planes.append(read_pgm(f"{base}.shade.pgm") / 255.0)
    return np.stack(planes)


def load_arrays(manifest, indices, channels=("depth",)):
    """(X, classes, poses, kinds) for the selected records."""
    X = np.stack([load_channels(manifest, i, channels) for i in indices]) if indices else \
        np.zeros((0, len(channels), manifest.config.resolution, manifest.config.resolution), np.float32)
    recs = [manifest.records[i] for i in indices]
    y = np.array([r.class_id for r in recs], dtype=np.int64)
    poses = np.array([r.pose for r in recs], dtype=float).reshape(-1, 2)
    kinds = np.array([r.kind for r in recs])
    return X, y, poses, kinds


def pose_of(record, distance):
    return Pose(record.azimuth, record.elevation, distance)
