import numpy as np
import pytest

import pidcount


def test_synth_and_counting():
    samples = pidcount.synth_blobs(n=4, size=32, min_count=3, max_count=6, seed=5)
    assert len(samples) == 4
    for s in samples:
        assert s.image.shape == (32, 32)
        assert s.image.dtype == np.float32
        assert s.mask.dtype == np.uint8
        count, labels = pidcount.label_components_8(s.mask)
        assert count == s.true_count
        assert labels.max() == count


def test_label_components_diagonal():
    mask = np.eye(5, dtype=np.uint8)
    mask[0, 4] = 1
    count, labels = pidcount.label_components_8(mask)
    assert count == 2
    assert labels[0, 0] == 1 and labels[0, 4] == 2


def test_metrics():
    a = np.zeros((4, 4), np.uint8)
    b = np.zeros((4, 4), np.uint8)
    a[0, 0] = 1
    b[3, 3] = 1
    d, one_empty = pidcount.hausdorff(a, b)
    assert d == pytest.approx(np.hypot(3, 3))
    assert not one_empty
    s = pidcount.segmentation_metrics(a, a)
    assert s["dice"] == 1.0 and s["jaccard"] == 1.0
    assert pidcount.counting_accuracy(97, 100) == 0.97
    with pytest.raises(pidcount.UndefinedMetricError):
        pidcount.counting_accuracy(1, 0)


def test_pid_round_trip():
    x = np.random.default_rng(0).normal(size=(2, 3, 8, 6)).astype(np.float32)
    y = pidcount.pid_downsample(x)
    assert y.shape == (2, 12, 4, 3)
    assert np.array_equal(y[:, 3:6], x[:, :, 0::2, 1::2])
    assert np.array_equal(pidcount.pid_reassemble(y), x)


def test_model_forward_train_and_checkpoint(tmp_path):
    model = pidcount.Model.build("pid", width=4, seed=3)
    data = pidcount.synth_blobs(n=8, size=16, min_count=1, max_count=3, seed=2)
    batch = np.stack([s.image[None] for s in data[:2]])
    probs = model.forward(batch)
    assert probs.shape == (2, 2, 16, 16)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)
    assert "bottleneck input 32->32 @1x1" in model.topology(16, 16)

    best, curves = model.train(data[:6], data[6:], epochs=2, batch_size=4, seed=1)
    assert len(curves["train_loss"]) == 2
    path = tmp_path / "m.ckpt"
    best.save(path)
    again = pidcount.Model.load(path)
    assert np.array_equal(again.forward(batch), best.forward(batch))
    assert len(pidcount.count_objects(again.forward(batch), min_area=0)) == 2


def test_baselines():
    img = np.full((24, 24), 0.1, np.float32)
    yy, xx = np.mgrid[:24, :24]
    img[np.hypot(yy - 6, xx - 6) <= 3] = 0.8
    img[np.hypot(yy - 17, xx - 17) <= 4] = 0.8
    for method in ("otsu", "watershed"):
        count, mask = pidcount.run_baseline(method, img)
        assert count == 2
        assert mask.shape == img.shape
    assert 0.1 < pidcount.otsu_threshold(img) < 0.8
    with pytest.raises(pidcount.ConfigError):
        pidcount.run_baseline("canny", img)


def test_cli(tmp_path):
    assert pidcount.run_cli(["synth", "--n", "6", "--size", "16", "--flat", "--out", str(tmp_path / "ds")]) == 0
    assert len(pidcount.load_dataset(tmp_path / "ds")) == 6
    assert pidcount.run_cli(["train", "--set", "lr=banana"]) == 1
