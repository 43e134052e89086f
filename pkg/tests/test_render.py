import numpy as np
import pytest

from viewdesc.scene.geometry import Pose, hemisphere_poses
from viewdesc.scene.mesh import MAX_EXTENT, PRIMITIVE_KINDS, make_primitive
from viewdesc.scene.render import Intrinsics, camera_frame, rasterize, render_depth, render_shaded


def test_unit_box_counts():
    m = make_primitive("box", {"sx": 1, "sy": 1, "sz": 1})
    assert m.vertices.shape == (8, 3) and m.triangles.shape == (12, 3)


@pytest.mark.parametrize("kind", PRIMITIVE_KINDS)
def test_primitive_properties(kind):
    m = make_primitive(kind, seed=3)
    np.testing.assert_allclose(np.linalg.norm(m.normals, axis=1), 1.0)
    assert np.max(m.extent()) == pytest.approx(MAX_EXTENT)
    assert m.triangles.min() >= 0 and m.triangles.max() < len(m.vertices)
    lo, hi = m.vertices.min(axis=0), m.vertices.max(axis=0)
    np.testing.assert_allclose((lo + hi) / 2, 0, atol=1e-12)
    m2 = make_primitive(kind, seed=3)
    assert np.array_equal(m.vertices, m2.vertices) and np.array_equal(m.triangles, m2.triangles)


@pytest.mark.parametrize("kind", ["box", "cylinder", "cone", "wedge", "capsule", "sphere"])
def test_normals_outward(kind):
    m = make_primitive(kind)
    centroid = m.vertices.mean(axis=0)
    assert np.all(np.sum(m.normals * (m.vertices - centroid), axis=1) > 0)
    tri_c = m.vertices[m.triangles].mean(axis=1)
    assert np.all(np.sum(m.face_normals() * (tri_c - centroid), axis=1) > 0)


def test_primitive_errors():
    with pytest.raises(ValueError):
        make_primitive("box", {"sx": 0.0})
    with pytest.raises(ValueError):
        make_primitive("torus")
    with pytest.raises(ValueError):
        make_primitive("box", {"radius": 1.0})


def test_box_face_on_depth():
    m = make_primitive("box", {"sx": 1, "sy": 1, "sz": 1})
    depth, mask = render_depth(m, Pose(0.0, 0.0, 0.6))
    assert mask[32, 32]
    assert depth[32, 32] == pytest.approx(0.6 - MAX_EXTENT / 2, abs=1e-9)
    # the 0.15 m face covers 0.15/0.4 of the 64 pixel window
    assert abs(mask.sum() - (64 * 0.15 / 0.4 * 0.6 / 0.525) ** 2) < 2 * 64


def test_mask_empty_off_object():
    m = make_primitive("box")
    depth, mask = render_depth(m, Pose(0.0, 0.0, 0.6))
    assert not mask[0, 0] and not mask[63, 63]
    assert np.all(depth[~mask] == 0)


def test_camera_inside_bounding_sphere():
    with pytest.raises(ValueError):
        render_depth(make_primitive("box"), Pose(0.0, 0.0, 0.05))


def test_sphere_matches_ray_cast():
    scipy_ndimage = pytest.importorskip("scipy.ndimage")
    m = make_primitive("sphere")
    radius = MAX_EXTENT / 2
    for pose in (Pose(0.0, 0.0, 0.6), Pose(37.0, 50.0, 0.5), Pose(0.0, 90.0, 0.6)):
        r = rasterize(m, pose, 64)
        pos, R = camera_frame(pose)
        d = r.rays.reshape(-1, 3)
        b = d @ pos
        disc = b**2 - (pos @ pos - radius**2)
        hit = disc >= 0
        t = -b - np.sqrt(np.where(hit, disc, 0))
        zdepth = (t * (d @ R[2])).reshape(64, 64)
        # silhouette pixels straddle the polygonal outline; compare the interior
        inner = scipy_ndimage.binary_erosion(r.mask) & hit.reshape(64, 64)
        assert inner.sum() > 300
        assert np.max(np.abs(r.depth[inner] - zdepth[inner])) < 2e-3


def test_shading_examples():
    m = make_primitive("box")
    pose = Pose(0.0, 0.0, 0.6)
    face = render_depth(m, pose)[1]
    img = render_shaded(m, pose)
    # face-on with the light along the view axis
    np.testing.assert_allclose(img[face], 1.0)
    assert np.all(img[~face] == 0)
    dark = render_shaded(m, pose, light_dir=[0.0, 0.0, 1.0])
    assert np.all(dark[face] == 0)
    for p in hemisphere_poses(1, 0.6)[::5]:
        s = render_shaded(make_primitive("composite", seed=2), p)
        assert s.min() >= 0 and s.max() <= 1


@pytest.mark.parametrize("kind", ["box", "cone", "wedge", "composite"])
def test_every_template_pose_sees_the_object(kind):
    m = make_primitive(kind, seed=1)
    for p in hemisphere_poses(2, 0.6):
        assert render_depth(m, p, 32)[1].any()


def test_intrinsics_window():
    k = Intrinsics.for_window(64, 0.6, 0.4)
    assert k.fx == pytest.approx(96.0) and k.cx == 32.0
