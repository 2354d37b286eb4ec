import io

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from faceveil.errors import DecodeError, InvalidKernel, InvalidQuality
from faceveil.imaging import (
    ImageTensor,
    SmoothingKernel,
    clip_to_range,
    decode,
    encode_jpeg,
    encode_png,
    gaussian_smooth,
    smooth_chw,
)


# ---------------------------------------------------------------------------
# Independent oracle: nested-loop 2-D convolution with reflection padding.
# ---------------------------------------------------------------------------

def _reflect(i: int, n: int) -> int:
    if i < 0:
        return -i
    if i >= n:
        return 2 * n - 2 - i
    return i


def conv2d_reflect_oracle(img: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Direct convolution of an (H, W, 3) image, reflect-padded."""
    h, w, _ = img.shape
    k = weights.shape[0]
    r = k // 2
    out = np.zeros_like(img, dtype=np.float64)
    for y in range(h):
        for x in range(w):
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    sy = _reflect(y + dy, h)
                    sx = _reflect(x + dx, w)
                    out[y, x] += weights[dy + r, dx + r] * img[sy, sx]
    return out


def _rand_image(rng: np.random.Generator, h: int, w: int) -> ImageTensor:
    return ImageTensor(rng.random((h, w, 3)).astype(np.float32))


class TestImageTensor:
    def test_rejects_wrong_shape(self):
        with pytest.raises(ValueError):
            ImageTensor(np.zeros((4, 4), dtype=np.float32))
        with pytest.raises(ValueError):
            ImageTensor(np.zeros((4, 4, 4), dtype=np.float32))

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            ImageTensor(np.full((2, 2, 3), 1.5, dtype=np.float32))
        with pytest.raises(ValueError):
            ImageTensor(np.full((2, 2, 3), -0.1, dtype=np.float32))

    def test_rejects_nonfinite(self):
        arr = np.zeros((2, 2, 3), dtype=np.float32)
        arr[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            ImageTensor(arr)

    def test_pixels_are_immutable(self):
        img = ImageTensor(np.zeros((2, 2, 3), dtype=np.float32))
        with pytest.raises(ValueError):
            img.pixels[0, 0, 0] = 1.0

    def test_chw_round_trip(self):
        rng = np.random.default_rng(0)
        img = _rand_image(rng, 5, 7)
        back = ImageTensor.from_chw(img.to_chw())
        assert np.array_equal(back.pixels, img.pixels)


class TestSmoothingKernel:
    def test_even_window_rejected(self):
        with pytest.raises(InvalidKernel):
            SmoothingKernel.gaussian(3.0, window=6)

    def test_nonpositive_sigma_rejected(self):
        with pytest.raises(InvalidKernel):
            SmoothingKernel.gaussian(0.0, window=7)

    def test_weights_sum_to_one(self):
        k = SmoothingKernel.gaussian(3.0, window=7)
        assert abs(k.weights.sum() - 1.0) <= 1e-6

    def test_weights_flip_symmetric(self):
        k = SmoothingKernel.gaussian(2.0, window=9)
        assert np.allclose(k.weights, k.weights[::-1, :])
        assert np.allclose(k.weights, k.weights[:, ::-1])

    def test_default_window_covers_full_support(self):
        # no-window construction spans 2*ceil(3*sigma)+1
        k = SmoothingKernel.gaussian(2.0)
        assert k.window == 13

    @given(sigma=st.floats(min_value=0.3, max_value=6.0),
           half=st.integers(min_value=0, max_value=6))
    @settings(max_examples=30, deadline=None)
    def test_gaussian_always_valid(self, sigma, half):
        k = SmoothingKernel.gaussian(sigma, window=2 * half + 1)
        assert abs(k.weights.sum() - 1.0) <= 1e-6
        assert (k.weights >= 0).all()


class TestGaussianSmooth:
    def test_constant_image_unchanged(self):
        img = ImageTensor(np.full((10, 12, 3), 0.5, dtype=np.float32))
        out = gaussian_smooth(img, SmoothingKernel.gaussian(3.0, window=7))
        assert np.abs(out.pixels - 0.5).max() <= 1e-6

    def test_identity_window_is_exact(self):
        rng = np.random.default_rng(1)
        img = _rand_image(rng, 9, 9)
        out = gaussian_smooth(img, SmoothingKernel.identity())
        assert np.array_equal(out.pixels, img.pixels)

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(2)
        img = _rand_image(rng, 16, 16)
        kernel = SmoothingKernel.gaussian(3.0, window=7)
        expected = conv2d_reflect_oracle(img.pixels.astype(np.float64), np.asarray(kernel.weights))
        out = gaussian_smooth(img, kernel)
        assert np.abs(out.pixels - expected).max() <= 1e-6

    def test_matches_oracle_nonsquare(self):
        rng = np.random.default_rng(3)
        img = _rand_image(rng, 11, 17)
        kernel = SmoothingKernel.gaussian(1.5, window=5)
        expected = conv2d_reflect_oracle(img.pixels.astype(np.float64), np.asarray(kernel.weights))
        out = gaussian_smooth(img, kernel)
        assert np.abs(out.pixels - expected).max() <= 1e-6

    def test_linearity(self):
        rng = np.random.default_rng(4)
        kernel = SmoothingKernel.gaussian(3.0, window=7)
        x = _rand_image(rng, 14, 14)
        y = _rand_image(rng, 14, 14)
        a, b = 0.3, 0.7
        mix = ImageTensor(a * x.pixels + b * y.pixels)
        lhs = gaussian_smooth(mix, kernel).pixels
        rhs = a * gaussian_smooth(x, kernel).pixels + b * gaussian_smooth(y, kernel).pixels
        assert np.abs(lhs - rhs).max() <= 1e-5

    def test_preserves_mean_intensity(self):
        # Reflection padding keeps total mass almost unchanged on
        # natural (spatially smooth) content.
        yy, xx = np.mgrid[0:96, 0:96] / 96.0
        base = np.stack([0.3 + 0.4 * xx, 0.5 + 0.2 * yy, 0.4 + 0.2 * xx * yy], axis=-1)
        img = ImageTensor(base.astype(np.float32))
        out = gaussian_smooth(img, SmoothingKernel.gaussian(3.0, window=7))
        assert abs(out.pixels.mean() - img.pixels.mean()) <= 1e-4

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        kernel = SmoothingKernel.gaussian(2.0, window=5)
        x = torch.tensor(rng.random((3, 12, 12)), dtype=torch.float64, requires_grad=True)
        # scalar probe: weighted sum of the smoothed output
        probe = torch.tensor(rng.random((3, 12, 12)), dtype=torch.float64)
        loss = (smooth_chw(x, kernel) * probe).sum()
        loss.backward()
        grad = x.grad.detach().numpy()

        h = 1e-6
        coords = [tuple(rng.integers(0, s) for s in (3, 12, 12)) for _ in range(100)]
        base = x.detach().clone()
        for c in coords:
            xp = base.clone()
            xp[c] += h
            xm = base.clone()
            xm[c] -= h
            fp = (smooth_chw(xp, kernel) * probe).sum().item()
            fm = (smooth_chw(xm, kernel) * probe).sum().item()
            fd = (fp - fm) / (2 * h)
            denom = max(abs(fd), abs(grad[c]), 1e-8)
            assert abs(fd - grad[c]) / denom < 1e-4


class TestCodecs:
    def test_jpeg_q100_flat_gray_nearly_lossless(self):
        img = ImageTensor(np.full((32, 32, 3), 128 / 255.0, dtype=np.float32))
        out = decode(encode_jpeg(img, 100))
        assert np.abs(out.pixels - img.pixels).max() <= 2.0 / 255.0

    def test_png_round_trip_bit_exact(self):
        rng = np.random.default_rng(6)
        img = ImageTensor.from_uint8(rng.integers(0, 256, (20, 24, 3), dtype=np.uint8))
        out = decode(encode_png(img))
        assert np.array_equal(out.pixels, img.pixels)

    def test_jpeg_round_trip_shape(self):
        rng = np.random.default_rng(7)
        img = _rand_image(rng, 18, 22)
        out = decode(encode_jpeg(img, 85))
        assert out.shape == img.shape

    @pytest.mark.parametrize("quality", [0, -3, 101])
    def test_invalid_quality(self, quality):
        img = ImageTensor(np.full((8, 8, 3), 0.5, dtype=np.float32))
        with pytest.raises(InvalidQuality):
            encode_jpeg(img, quality)

    def test_corrupt_bytes(self):
        with pytest.raises(DecodeError):
            decode(b"definitely not an image")

    def test_truncated_png(self):
        img = ImageTensor(np.full((8, 8, 3), 0.5, dtype=np.float32))
        data = encode_png(img)
        with pytest.raises(DecodeError):
            decode(data[: len(data) // 2])


class TestClipToRange:
    def test_clips_high(self):
        arr = np.full((2, 2, 3), 1.3, dtype=np.float32)
        assert clip_to_range(arr).pixels.max() == 1.0

    def test_clips_low(self):
        arr = np.full((2, 2, 3), -0.2, dtype=np.float32)
        assert clip_to_range(arr).pixels.min() == 0.0

    def test_in_range_unchanged(self):
        rng = np.random.default_rng(8)
        img = _rand_image(rng, 6, 6)
        assert np.array_equal(clip_to_range(img).pixels, img.pixels)

    @given(hnp.arrays(np.float32, (4, 5, 3),
                      elements=st.floats(-3, 3, width=32)))
    @settings(max_examples=50, deadline=None)
    def test_always_in_range_and_idempotent(self, arr):
        out = clip_to_range(arr)
        assert out.pixels.min() >= 0.0 and out.pixels.max() <= 1.0
        again = clip_to_range(out)
        assert np.array_equal(again.pixels, out.pixels)
