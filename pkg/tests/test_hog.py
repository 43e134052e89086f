import numpy as np
import pytest

from viewdesc.hog import (HogConfig, HogTransformer, cell_histograms, hog_batch, hog_descriptor, hog_similarity,
                          stacked_hog)


def test_default_length():
    assert HogConfig().length == 1764
    assert hog_descriptor(np.random.default_rng(0).random((64, 64))).shape == (1764,)


@pytest.mark.parametrize("cfg", [HogConfig(), HogConfig(window=32, cell=4, block=2, block_stride=4, bins=6),
                                 HogConfig(window=48, cell=8, block=3, block_stride=16, bins=12)])
def test_length_law(cfg):
    img = np.random.default_rng(1).random((cfg.window, cfg.window))
    nb = (cfg.window // cfg.cell - cfg.block) // (cfg.block_stride // cfg.cell) + 1
    assert hog_descriptor(img, cfg).shape == (nb**2 * cfg.block**2 * cfg.bins,) == (cfg.length,)


def test_constant_image_zero():
    assert np.all(hog_descriptor(np.full((64, 64), 0.3)) == 0)
    assert np.all(stacked_hog(np.zeros((2, 64, 64))) == 0)


def test_vertical_step_uses_bin_zero():
    img = np.zeros((64, 64))
    img[:, 30:] = 1.0
    hist = cell_histograms(img[None])[0]
    assert hist.sum(axis=(0, 1)).argmax() == 0
    assert np.count_nonzero(hist.sum(axis=(0, 1))) == 1
    horiz = cell_histograms(img.T[None])[0].sum(axis=(0, 1))
    assert horiz.argmax() == 4 or horiz.argmax() == 5  # 90 degrees sits between bins 4 and 5
    assert horiz[4] == pytest.approx(horiz[5])


def test_wrong_size():
    with pytest.raises(ValueError):
        hog_descriptor(np.zeros((32, 64)))


def test_stacked_lengths_and_norm(rng):
    one = stacked_hog(rng.random((1, 64, 64)))
    two = stacked_hog(rng.random((2, 64, 64)))
    assert one.shape == (1764,) and two.shape == (3528,)
    assert np.linalg.norm(one) == pytest.approx(1.0) and np.linalg.norm(two) == pytest.approx(1.0)


def test_scale_cancels(rng):
    img = rng.random((2, 64, 64))
    np.testing.assert_allclose(stacked_hog(2 * img), stacked_hog(img), atol=1e-12)


def test_shift_permutes_cells():
    img = np.zeros((64, 64))
    for y, x in ((12, 13), (20, 27), (27, 18)):
        img[y - 1:y + 2, x - 1:x + 2] = 1.0
    shifted = np.roll(img, (8, 8), axis=(0, 1))
    a = cell_histograms(img[None])[0]
    b = cell_histograms(shifted[None])[0]
    np.testing.assert_allclose(b[1:, 1:], a[:-1, :-1])


def test_similarity(rng):
    a = stacked_hog(rng.random((1, 64, 64)))
    b = stacked_hog(rng.random((1, 64, 64)))
    assert hog_similarity(a, a) == pytest.approx(1.0)
    assert hog_similarity(a, b) == hog_similarity(b, a)
    assert -1 <= hog_similarity(a, b) <= 1
    assert hog_similarity([1.0, 0.0], [0.0, 1.0]) == 0.0
    with pytest.raises(ValueError):
        hog_similarity(a, b[:10])


def test_batch_equals_single(rng):
    imgs = rng.random((3, 64, 64))
    batch = hog_batch(imgs)
    for i in range(3):
        np.testing.assert_array_equal(batch[i], hog_descriptor(imgs[i]))


def test_transformer(rng):
    X = rng.random((4, 2, 64, 64))
    t = HogTransformer().fit(X)
    out = t.transform(X)
    assert out.shape == (4, 3528) and t.n_features_out_ == 3528
    assert t.get_params()["bins"] == 9
    with pytest.raises(ValueError):
        t.transform(X[:, :1])
