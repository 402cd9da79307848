"""Smoke tests for the python bindings (the heavy checks live in the C++ suites)."""
import math

import numpy as np
import pytest

import sckn


def textured(h, w, seed):
    rng = np.random.default_rng(seed)
    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    img = 0.5 + 0.4 * np.sin(0.5 * rr + 0.3 * cc + rng.uniform(0, 6))
    return img[None, :, :].astype(float)


def test_kappa_matches_closed_form():
    t = np.linspace(-1, 1, 7).reshape(1, -1)
    got = sckn.kappa(4.0, t)
    np.testing.assert_allclose(got, np.exp(4.0 * (t - 1)), rtol=1e-12)
    np.testing.assert_allclose(sckn.kappa_prime(4.0, t), 4.0 * np.exp(4.0 * (t - 1)), rtol=1e-12)


def test_inv_sqrt_psd_inverts():
    rng = np.random.default_rng(0)
    B = rng.standard_normal((5, 5))
    M = B @ B.T
    A, Ah, A32 = sckn.inv_sqrt_psd(M, 0.001)
    resid = A @ (M + 0.001 * np.eye(5)) @ A - np.eye(5)
    assert np.abs(resid).max() < 1e-8
    np.testing.assert_allclose(Ah @ Ah, A, atol=1e-8)
    np.testing.assert_allclose(A @ Ah, A32, atol=1e-8)


def test_patch_and_pool_shapes():
    img = textured(8, 8, 1)
    patches = sckn.extract_patches(img, 3)
    assert patches.shape == (9, 64)
    pooled = sckn.pool_forward(img, math.sqrt(2.0))
    assert pooled.shape == (1, 6, 6)


def test_kmeans_is_deterministic():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((6, 100))
    X /= np.linalg.norm(X, axis=0)
    a = sckn.spherical_kmeans(X, 4, 20, seed=7)
    b = sckn.spherical_kmeans(X, 4, 20, seed=7)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_allclose(np.linalg.norm(a, axis=0), 1.0, atol=1e-9)


def test_network_forward_and_kernel():
    images = [textured(12, 12, s) for s in range(6)]
    net = sckn.Network.unsupervised(
        [dict(filters=6, patch_size=3, subsampling=2.0, alpha=4.0)],
        1, images, patches_per_layer=800, seed=0, kmeans_iters=10)
    out = net.forward(images[0])
    assert out.shape == (6, 6, 6)
    k_self = net.kernel(images[0], images[0])
    assert k_self == pytest.approx(float(np.sum(out * out)))
    assert net.kernel(images[0], images[1]) == pytest.approx(net.kernel(images[1], images[0]))


def test_gradcheck_passes():
    report = sckn.gradcheck(seed=0)
    assert report["passed"]
    assert report["max_rel_z"] < 1e-3
    assert report["max_rel_alpha"] < 1e-3


def test_metrics():
    a = 255.0 * np.abs(textured(24, 24, 9))
    assert sckn.psnr(a, a) == math.inf
    b = a + 1.0
    assert sckn.psnr(a, b) == pytest.approx(20 * math.log10(255), rel=1e-9)
    assert sckn.ssim(a, a) == pytest.approx(1.0)

    flat = np.full((1, 8, 8), 3.25)
    up = sckn.bicubic_resize(flat, 2.0)
    assert up.shape == (1, 16, 16)
    np.testing.assert_allclose(up, 3.25, atol=1e-12)

    white = np.full((3, 2, 2), 255.0)
    ycc = sckn.rgb_to_ycbcr(white)
    assert ycc[0, 0, 0] == pytest.approx(235.0, abs=1e-6)
    np.testing.assert_allclose(sckn.ycbcr_to_rgb(ycc), white, atol=1e-6)


def test_image_roundtrip(tmp_path):
    rng = np.random.default_rng(11)
    img = rng.integers(0, 256, size=(3, 9, 7)).astype(float)
    path = str(tmp_path / "x.png")
    sckn.write_image(path, img)
    np.testing.assert_array_equal(sckn.read_image(path), img)
