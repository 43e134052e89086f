import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from viewdesc.estimator import DescriptorNet, TemplateMatcher
from viewdesc.scene.dataset import TEMPLATE, TEST, TRAINING, load_arrays
from viewdesc.validation import check_images, check_labels, check_poses


@pytest.fixture(scope="module")
def fitted(tiny_manifest):
    idx = tiny_manifest.select([TRAINING, TEMPLATE])
    X, y, poses, kinds = load_arrays(tiny_manifest, idx)
    net = DescriptorNet(descriptor_dim=8, initial_epochs=3, bootstrap_rounds=1, epochs_per_bootstrap=1,
                        final_epochs=1, batch_size=32, random_state=2)
    net.fit(X, y, poses=poses, is_template=kinds == TEMPLATE, symmetries=tiny_manifest.symmetries)
    return net, X, y, poses, kinds


def test_params_and_clone():
    net = DescriptorNet(descriptor_dim=4, margin=0.02)
    p = net.get_params()
    assert p["descriptor_dim"] == 4 and p["margin"] == 0.02
    assert clone(net).get_params() == p
    with pytest.raises(NotFittedError):
        net.transform(np.zeros((1, 1, 64, 64)))


def test_fit_transform_match(fitted, tiny_manifest):
    net, X, y, poses, kinds = fitted
    tm = kinds == TEMPLATE
    assert len(net.history_) == 5
    D = net.transform(X[tm])
    assert D.shape == (tm.sum(), 8)
    matcher = TemplateMatcher(k=1).fit(D, y[tm], poses[tm], tiny_manifest.symmetries)
    # a template queried against itself returns itself (or a symmetric twin with identical render)
    np.testing.assert_array_equal(matcher.predict(D), y[tm])
    np.testing.assert_allclose(matcher.predict_pose(D[:3]), poses[tm][:3])
    np.testing.assert_allclose(matcher.angle_errors(D, y[tm], poses[tm]), 0.0, atol=1e-9)
    Xq, yq, pq, _ = load_arrays(tiny_manifest, tiny_manifest.select([TEST]))
    assert 0.0 <= matcher.score(net.transform(Xq), yq) <= 1.0
    scores, rows = matcher.kneighbors(D[:2], 3)
    assert rows.shape == (2, 3) and np.all(np.diff(scores, axis=1) >= 0)


def test_determinism_and_save(fitted, tmp_path):
    net, X, y, poses, kinds = fitted
    again = clone(net).fit(X, y, poses=poses, is_template=kinds == TEMPLATE, symmetries=net.symmetries_)
    assert again.checkpoint_digest() == net.checkpoint_digest()
    assert net.save(tmp_path / "n.pdsc") == net.checkpoint_digest()


def test_fit_errors(fitted):
    net, X, y, poses, kinds = fitted
    with pytest.raises(ValueError):
        clone(net).fit(X, y)
    with pytest.raises(ValueError):
        net.transform(X[:, :, :32, :32])
    with pytest.raises(ValueError):
        TemplateMatcher().fit(np.zeros((3, 2)), [0, 1, 2]).predict(np.zeros((1, 5)))


def test_validation_helpers():
    assert check_images(np.zeros((1, 8, 8))).shape == (1, 1, 8, 8)
    with pytest.raises(ValueError):
        check_images(np.zeros((8, 8)))
    with pytest.raises(ValueError):
        check_images(np.full((1, 1, 4, 4), np.nan))
    with pytest.raises(ValueError):
        check_poses([[0, 95]])
    with pytest.raises(ValueError):
        check_labels([0.5, 1])
    with pytest.raises(ValueError):
        check_labels([-1])
