import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from msae.multispace import (
    glcm_energy,
    glcm_window_statistic,
    gradient_channel,
    lbp_channel,
    multispace_reconstruct,
    quantize_levels,
)

unit_floats = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


# ---------------------------------------------------------------------------
# independent per-pixel oracles (direct definition, no shared code paths)


def sobel_oracle(img):
    h, w = img.shape
    out = np.zeros((h, w))
    kx = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]]
    ky = [[-1, -2, -1], [0, 0, 0], [1, 2, 1]]
    for y in range(h):
        for x in range(w):
            gx = gy = 0.0
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    yy = min(max(y + dy, 0), h - 1)
                    xx = min(max(x + dx, 0), w - 1)
                    gx += kx[dy + 1][dx + 1] * img[yy, xx]
                    gy += ky[dy + 1][dx + 1] * img[yy, xx]
            out[y, x] = np.sqrt(gx * gx + gy * gy) / (4.0 * np.sqrt(2.0))
    return out


def lbp_oracle(img):
    h, w = img.shape
    offsets = [(-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1)]
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            code = 0
            for n, (dy, dx) in enumerate(offsets):
                yy = min(max(y + dy, 0), h - 1)
                xx = min(max(x + dx, 0), w - 1)
                if img[yy, xx] >= img[y, x]:
                    code +=  2 ** (7 - n)
            out[y, x] = code / 255.0
    return out


def glcm_oracle(img, window, levels, offset):
    h, w = img.shape
    half = window // 2
    dy, dx = offset
    q = np.minimum(np.floor(img * levels), levels - 1).astype(int)
    qp = np.pad(q, half, mode="edge")
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            counts = {}
            # window rows y..y+window-1 in padded coords; pairs whose
            # partner stays inside the window
            for wy in range(window - abs(dy)):
                for wx in range(window - abs(dx)):
                    sy = y + wy + max(0, -dy)
                    sx = x + wx + max(0, -dx)
                    pair = (qp[sy, sx], qp[sy + dy, sx + dx])
                    counts[pair] = counts.get(pair, 0) + 1
            total = sum(counts.values())
            out[y, x] = sum((c / total) ** 2 for c in counts.values())
    return out


# ---------------------------------------------------------------------------


class TestGradientChannel:
    def test_constant_image_is_zero(self):
        np.testing.assert_array_equal(gradient_channel(np.full((1, 6, 6), 0.4)), 0.0)

    def test_vertical_step_edge_value(self):
        img = np.zeros((1, 5, 6))
        img[:, :, 3:] = 1.0
        out = gradient_channel(img)
        # columns adjacent to the step see the full Sobel response 4/(4*sqrt(2))
        np.testing.assert_allclose(out[0, :, 2], 1.0 / np.sqrt(2.0), atol=1e-15)
        np.testing.assert_allclose(out[0, :, 3], 1.0 / np.sqrt(2.0), atol=1e-15)
        np.testing.assert_allclose(out[0, :, 0], 0.0)

    def test_center_impulse_has_zero_center_response(self):
        img = np.zeros((1, 3, 3))
        img[0, 1, 1] = 1.0
        assert gradient_channel(img)[0, 1, 1] == 0.0  # symmetric kernels cancel

    def test_too_small_raises(self):
        with pytest.raises(ValueError, match="3x3"):
            gradient_channel(np.zeros((1, 2, 5)))

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            img = rng.uniform(0, 1, (7, 9))
            np.testing.assert_allclose(gradient_channel(img[None])[0],
                                       sobel_oracle(img), atol=1e-12)

    def test_translation_equivariance_interior(self):
        rng = np.random.default_rng(1)
        img = rng.uniform(0, 1, (10, 10))
        shifted = np.roll(img, 1, axis=1)
        a = gradient_channel(img[None])[0]
        b = gradient_channel(shifted[None])[0]
        np.testing.assert_allclose(b[1:-1, 2:-1], a[1:-1, 1:-2], atol=1e-15)

    @given(arrays(np.float64, (1, 5, 5), elements=unit_floats))
    def test_range(self, img):
        out = gradient_channel(img)
        assert out.min() >= 0.0 and out.max() <= 1.0
        assert out.shape == img.shape


class TestGLCM:
    def test_constant_image_energy_one(self):
        out = glcm_window_statistic(np.full((1, 6, 6), 0.3))
        np.testing.assert_allclose(out, 1.0)

    def test_two_by_two_whole_block(self):
        # [[0,0],[1,1]] at 2 levels, offset (0,1): pairs (0,0) and (1,1),
        # normalized matrix diag(0.5, 0.5), energy 0.5
        q = quantize_levels(np.array([[0.0, 0.0], [0.9, 0.9]]), 2)
        assert glcm_energy(q, 2, (0, 1)) == 0.5

    def test_checkerboard_interior_energy_half(self):
        yy, xx = np.mgrid[0:8, 0:8]
        img = ((yy + xx) % 2).astype(np.float64)
        out = glcm_window_statistic(img[None], window=5, levels=2, offset=(0, 1))
        # interior windows pair (0,1)/(1,0) in equal number
        np.testing.assert_allclose(out[0, 2:-2, 2:-2], 0.5)

    def test_even_window_rejected(self):
        with pytest.raises(ValueError, match="odd"):
            glcm_window_statistic(np.zeros((1, 4, 4)), window=4)

    def test_too_few_levels_rejected(self):
        with pytest.raises(ValueError, match="levels"):
            glcm_window_statistic(np.zeros((1, 4, 4)), levels=1)

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(2)
        for offset in ((0, 1), (1, 0), (1, 1), (0, -1), (-1, 1)):
            img = rng.uniform(0, 1, (8, 8))
            got = glcm_window_statistic(img[None], window=5, levels=4, offset=offset)[0]
            np.testing.assert_allclose(got, glcm_oracle(img, 5, 4, offset), atol=1e-12)

    def test_energy_one_iff_uniform_window(self):
        img = np.full((6, 6), 0.2)
        img[4, 4] = 0.9  # one deviant pixel
        out = glcm_window_statistic(img[None], window=3, levels=4)[0]
        assert out[0, 0] == 1.0  # far corner window untouched
        assert out[4, 4] < 1.0
        assert (out <= 1.0).all() and (out > 0.0).all()

    def test_quantization_clamps(self):
        q = quantize_levels(np.array([[0.0, 0.999, 1.0]]), 8)
        np.testing.assert_array_equal(q, [[0, 7, 7]])


class TestLBP:
    def test_constant_image_all_bits_set(self):
        np.testing.assert_allclose(lbp_channel(np.full((1, 4, 4), 0.6)), 1.0)

    def test_center_peak_gets_code_zero(self):
        img = np.zeros((1, 3, 3))
        img[0, 1, 1] = 1.0
        assert lbp_channel(img)[0, 1, 1] == 0.0

    def test_too_small_raises(self):
        with pytest.raises(ValueError, match="3x3"):
            lbp_channel(np.zeros((1, 3, 2)))

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            img = rng.uniform(0, 1, (8, 8))
            np.testing.assert_allclose(lbp_channel(img[None])[0], lbp_oracle(img),
                                       atol=1e-12)

    def test_monotone_remap_invariance(self):
        rng = np.random.default_rng(4)
        img = rng.uniform(0.05, 0.95, (9, 9))
        base = lbp_channel(img[None])
        for remap in (lambda g: g ** 2, lambda g: 0.2 + 0.6 * g, np.sqrt):
            np.testing.assert_array_equal(lbp_channel(remap(img)[None]), base)


class TestMultispace:
    def test_constant_image_channels(self):
        ms = multispace_reconstruct(np.full((1, 8, 8), 0.5))
        np.testing.assert_allclose(ms.gradient, 0.0)
        np.testing.assert_allclose(ms.glcm, 1.0)
        np.testing.assert_allclose(ms.lbp, 1.0)

    def test_shapes_preserved(self):
        for h, w in ((5, 5), (7, 12), (32, 32)):
            ms = multispace_reconstruct(np.random.default_rng(5).uniform(0, 1, (1, h, w)))
            assert ms.stacked.shape == (3, h, w)

    def test_idempotent_wrt_inputs(self):
        img = np.random.default_rng(6).uniform(0, 1, (1, 8, 8))
        a = multispace_reconstruct(img).stacked
        b = multispace_reconstruct(img).stacked
        np.testing.assert_array_equal(a, b)

    @given(arrays(np.float64, (1, 6, 6), elements=unit_floats))
    def test_channels_in_unit_range(self, img):
        ms = multispace_reconstruct(img)
        assert ms.stacked.min() >= 0.0 and ms.stacked.max() <= 1.0
