import math

import numpy as np
import pytest
from dnres_forge.losses import (
    BINARY_WEIGHT,
    SOBEL_WEIGHT,
    EdgeMapSpec,
    EdgeMode,
    LossKind,
    compute_loss,
    edge_aware_loss,
    loss_spec,
    mse_loss,
    psnr,
    sobel_edge_map,
    sobel_magnitude,
    ssim,
)
from skimage.metrics import structural_similarity

SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)


def sobel_oracle(plane):
    padded = np.pad(plane, 1, mode="edge")
    h, w = plane.shape
    out = np.empty_like(plane)
    for i in range(h):
        for j in range(w):
            window = padded[i : i + 3, j : j + 3]
            gx = float(np.sum(window * SOBEL_X))
            gy = float(np.sum(window * SOBEL_X.T))
            out[i, j] = math.hypot(gx, gy)
    return out


@pytest.fixture
def images(rng):
    target = rng.uniform(size=(2, 1, 12, 13))
    pred = target + rng.normal(0, 0.1, size=target.shape)
    return pred, target


def test_mse(images):
    pred, target = images
    value, grad = mse_loss(pred, target)
    assert value == pytest.approx(np.mean((pred - target) ** 2))
    np.testing.assert_allclose(grad, 2 * (pred - target) / pred.size)

    value, grad = mse_loss(target, target)
    assert value == 0.0
    assert not grad.any()


def test_sobel_matches_oracle(rng):
    plane = rng.uniform(size=(9, 7))
    np.testing.assert_allclose(sobel_magnitude(plane), sobel_oracle(plane), atol=1e-12)


def test_edge_maps_of_a_step():
    plane = np.zeros((1, 1, 8, 8))
    plane[..., 4:] = 1.0

    soft = sobel_edge_map(plane, EdgeMapSpec(EdgeMode.SOBEL_MAGNITUDE))
    hard = sobel_edge_map(plane, EdgeMapSpec(EdgeMode.BINARY_MASK))
    for edge_map in (soft, hard):
        assert edge_map[0, 0, :, 3:5].min() == 1.0
        assert not edge_map[0, 0, :, :3].any()
        assert not edge_map[0, 0, :, 5:].any()


def test_binary_threshold():
    # A ramp of 0.1 per pixel has Sobel magnitude 0.8, 204 on the 0-255 scale.
    plane = np.tile(np.arange(6) * 0.1, (6, 1))[np.newaxis, np.newaxis]
    assert sobel_edge_map(plane, EdgeMapSpec(EdgeMode.BINARY_MASK, threshold=200))[0, 0, 2, 2] == 1
    assert sobel_edge_map(plane, EdgeMapSpec(EdgeMode.BINARY_MASK, threshold=210))[0, 0, 2, 2] == 0


def test_edge_loss_reduces_to_mse(images):
    pred, target = images
    mse, mse_grad = mse_loss(pred, target)

    report, grad = edge_aware_loss(pred, target, EdgeMapSpec(w=0.0))
    assert report.total == mse
    assert np.array_equal(grad, mse_grad)

    # Threshold 0 marks every pixel as an edge.
    everywhere = EdgeMapSpec(EdgeMode.BINARY_MASK, w=2.0, threshold=0.0)
    report, grad = edge_aware_loss(pred, target, everywhere)
    assert report.edge_term == pytest.approx(mse)
    assert report.total == pytest.approx(3 * mse)
    np.testing.assert_allclose(grad, 3 * mse_grad)


@pytest.mark.parametrize(
    "spec",
    [
        EdgeMapSpec(EdgeMode.SOBEL_MAGNITUDE),
        EdgeMapSpec(EdgeMode.SOBEL_MAGNITUDE, w=1.0),
        EdgeMapSpec(EdgeMode.BINARY_MASK, threshold=100),
    ],
)
def test_edge_loss_gradient(images, spec):
    pred, target = images
    _, grad = edge_aware_loss(pred, target, spec)

    h = 1e-6
    for index in [(0, 0, 0, 0), (1, 0, 5, 7), (0, 0, 11, 12), (1, 0, 6, 0)]:
        up, down = pred.copy(), pred.copy()
        up[index] += h
        down[index] -= h
        numeric = (
            edge_aware_loss(up, target, spec)[0].total
            - edge_aware_loss(down, target, spec)[0].total
        ) / (2 * h)
        assert grad[index] == pytest.approx(numeric, rel=1e-6, abs=1e-12)


def test_perfect_prediction_has_zero_loss(images):
    _, target = images
    value, grad = compute_loss(target, target, EdgeMapSpec(EdgeMode.BINARY_MASK))
    assert value == 0.0
    assert not grad.any()


def test_loss_spec_defaults():
    assert loss_spec(LossKind.MSE) is None
    assert loss_spec(LossKind.EDGE_A).w == SOBEL_WEIGHT
    assert loss_spec(LossKind.EDGE_B).w == BINARY_WEIGHT
    assert loss_spec(LossKind.EDGE_B, 1.5, 90).label == "edge-b(w=1.5, threshold=90)"
    with pytest.raises(ValueError):
        EdgeMapSpec(w=-1.0)


def test_grad_keeps_dtype(images):
    pred, target = (x.astype(np.float32) for x in images)
    _, grad = compute_loss(pred, target, EdgeMapSpec())
    assert grad.dtype == np.float32


def test_psnr():
    a = np.zeros((1, 1, 4, 4))
    b = np.full((1, 1, 4, 4), 1 / 255)
    assert psnr(a, b) == pytest.approx(48.1308, abs=1e-4)
    assert psnr(a * 255, b * 255, max_val=255) == pytest.approx(48.1308, abs=1e-4)
    assert psnr(a, a) == math.inf
    with pytest.raises(ValueError):
        psnr(a, np.zeros((1, 1, 4, 5)))


def test_ssim_matches_skimage(rng):
    a = rng.uniform(size=(40, 37))
    b = np.clip(a + rng.normal(0, 0.1, size=a.shape), 0, 1)
    expected = structural_similarity(
        a,
        b,
        data_range=1.0,
        gaussian_weights=True,
        sigma=1.5,
        use_sample_covariance=False,
    )
    assert ssim(a, b) == pytest.approx(expected, rel=1e-7)
    assert ssim(a[np.newaxis, np.newaxis], b[np.newaxis, np.newaxis]) == ssim(a, b)


def test_ssim_identity_and_errors(rng):
    a = rng.uniform(size=(16, 16))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)
    assert ssim(a, 1 - a) < 0.5
    with pytest.raises(ValueError):
        ssim(a[:10], a[:10])
    with pytest.raises(ValueError):
        ssim(a, a[:, :15])


@pytest.mark.parametrize("window", [-1, 0, 1, 2, 4])
def test_ssim_rejects_degenerate_windows(rng, window):
    a = rng.uniform(size=(16, 16))
    with pytest.raises(ValueError, match="window"):
        ssim(a, a, window=window)
    assert ssim(a, a, window=3) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("mode", list(EdgeMode))
def test_edge_loss_is_at_least_mse(rng, mode):
    for _ in range(5):
        target = rng.uniform(size=(1, 1, 10, 10))
        pred = target + rng.normal(0, 0.2, size=target.shape)
        report, _ = edge_aware_loss(pred, target, EdgeMapSpec(mode, threshold=50))
        assert report.total >= mse_loss(pred, target)[0]


def test_psnr_falls_as_noise_grows(rng):
    clean = rng.uniform(size=(32, 32))
    means = [
        np.mean([psnr(clean + rng.normal(0, sigma, clean.shape), clean) for _ in range(20)])
        for sigma in (0.01, 0.05, 0.1, 0.2)
    ]
    assert means == sorted(means, reverse=True)


def test_ssim_is_symmetric(rng):
    a = rng.uniform(size=(24, 24))
    b = np.clip(a + rng.normal(0, 0.2, size=a.shape), 0, 1)
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)
