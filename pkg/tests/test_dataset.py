import hashlib

import numpy as np
import pytest

from viewdesc.scene.dataset import (TEMPLATE, TEST, TRAINING, DatasetConfig, build_dataset, load_arrays,
                                    load_raw_channels, object_mesh, plan_samples, read_manifest, render_sample)
from viewdesc.scene.geometry import Pose, hemisphere_poses
from viewdesc.scene.render import Intrinsics, render_depth


def test_counts(tiny_manifest):
    cfg = tiny_manifest.config
    n_t, n_tr = len(hemisphere_poses(1)), len(hemisphere_poses(2))
    assert len(tiny_manifest.records) == 3 * (n_t + cfg.n_copies * n_tr + cfg.n_test)
    for c in range(3):
        assert len(tiny_manifest.select([TEMPLATE], [c])) == n_t
        assert len(tiny_manifest.select([TEST], [c])) == cfg.n_test


def test_every_training_pose_appears_n_copies(tmp_path):
    cfg = DatasetConfig(objects=("cone",), template_level=0, train_level=1, n_copies=2, n_test=1)
    m = read_manifest(build_dataset(cfg, tmp_path, seed=1))
    poses = [r.pose for r in m.records if r.kind == TRAINING]
    assert len(poses) == 2 * 26
    assert all(poses.count(p) == 2 for p in poses)


def test_templates_are_clean_renders(tiny_manifest):
    cfg = tiny_manifest.config
    mesh = object_mesh(cfg.objects[1], tiny_manifest.seed)
    for i in tiny_manifest.select([TEMPLATE], [1])[:5]:
        r = tiny_manifest.records[i]
        pose = Pose(r.azimuth, r.elevation, cfg.distance)
        depth, mask = render_depth(mesh, pose, cfg.resolution, Intrinsics.for_window(cfg.resolution, cfg.distance,
                                                                                      cfg.window))
        expected = np.where(mask, depth, cfg.distance + 0.2).astype(np.float32)
        stored = load_raw_channels(tiny_manifest, i)[0].astype(np.float32)
        assert np.array_equal(stored, expected)


def test_noisy_views_differ(tiny_manifest):
    i = tiny_manifest.select([TRAINING], [0])[0]
    X, y, poses, kinds = load_arrays(tiny_manifest, [i], ("depth", "shaded"))
    assert X.shape == (1, 2, 64, 64) and X.dtype == np.float32
    assert X[0, 0].min() >= -1 and X[0, 0].max() <= 1
    cfg = tiny_manifest.config
    mesh = object_mesh(cfg.objects[0], tiny_manifest.seed)
    clean, _, _ = render_sample(mesh, Pose(*poses[0], cfg.distance), TEMPLATE, cfg)
    assert not np.array_equal(load_raw_channels(tiny_manifest, i)[0].astype(np.float32), clean)


def test_deterministic_build(tmp_path):
    cfg = DatasetConfig(objects=("wedge", "mug"), template_level=0, train_level=0, n_test=3)
    digests = []
    for name in ("a", "b"):
        root = tmp_path / name
        build_dataset(cfg, root, seed=9)
        h = hashlib.sha256()
        for f in sorted(root.rglob("*")):
            if f.is_file():
                h.update(str(f.relative_to(root)).encode())
                h.update(f.read_bytes())
        digests.append(h.hexdigest())
    assert digests[0] == digests[1]


def test_test_poses_depend_on_seed():
    cfg = DatasetConfig(objects=("cone",), n_test=5)
    a = [p for _, k, p in plan_samples(cfg, 1) if k == TEST]
    b = [p for _, k, p in plan_samples(cfg, 2) if k == TEST]
    assert a != b


def test_config_errors(tmp_path):
    with pytest.raises(ValueError):
        DatasetConfig(objects=("teapot",))
    with pytest.raises(FileNotFoundError):
        read_manifest(tmp_path / "missing.tsv")
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        build_dataset(DatasetConfig(objects=("cone",), n_test=0), blocker / "sub", seed=0)


def test_symmetries_recorded(tiny_manifest):
    assert [s.value for s in tiny_manifest.symmetries] == ["symmetric180", "rotationInvariant", "none"]
