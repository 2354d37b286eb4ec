"""Canonical image representation, codecs, and Gaussian smoothing.

Images are float RGB arrays of shape (height, width, 3) with values in
[0, 1]. The differentiable operations (smoothing, warping, the attack
itself) run on torch tensors in CHW layout; :class:`ImageTensor` is the
numpy-facing boundary type and converts in both directions.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, InvalidKernel, InvalidQuality

COLOR_ORDER = "RGB"


@dataclass(frozen=True)
class ImageTensor:
    """A float RGB image with pixel values in [0, 1].

    The pixel buffer is copied and marked read-only at construction, so
    instances can be shared between threads freely.
    """

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) array, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if not np.issubdtype(px.dtype, np.floating):
            raise ValueError(f"expected float pixels, got dtype {px.dtype}")
        if not np.isfinite(px).all():
            raise ValueError("pixels must be finite")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("pixels outside [0, 1]; clip_to_range first")
        px = px.copy()
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.pixels.shape

    def to_chw(self, dtype: torch.dtype = torch.float32) -> torch.Tensor:
        """Pixels as a (3, H, W) torch tensor."""
        return torch.from_numpy(np.ascontiguousarray(self.pixels.transpose(2, 0, 1))).to(dtype)

    @classmethod
    def from_chw(cls, t: torch.Tensor) -> "ImageTensor":
        """Wrap a (3, H, W) tensor, clamping float round-off back into range.

        float64 inputs keep full precision; everything else becomes float32.
        """
        arr = t.detach().cpu().clamp(0.0, 1.0).numpy().transpose(1, 2, 0)
        if arr.dtype != np.float64:
            arr = arr.astype(np.float32)
        return cls(arr.copy())

    @classmethod
    def from_uint8(cls, arr: np.ndarray) -> "ImageTensor":
        return cls(arr.astype(np.float32) / 255.0)

    def to_uint8(self) -> np.ndarray:
        return np.round(self.pixels * 255.0).astype(np.uint8)


@dataclass(frozen=True)
class SmoothingKernel:
    """A normalized, flip-symmetric 2-D smoothing kernel.

    ``window`` must be odd; ``weights`` always sums to 1. A window of 1
    is the identity kernel.
    """

    sigma: float
    window: int
    weights: np.ndarray

    def __post_init__(self):
        if self.window % 2 != 1 or self.window < 1:
            raise InvalidKernel(f"window must be odd and >= 1, got {self.window}")
        if not self.sigma > 0:
            raise InvalidKernel(f"sigma must be > 0, got {self.sigma}")
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (self.window, self.window):
            raise InvalidKernel(f"weights shape {w.shape} != ({self.window}, {self.window})")
        if abs(w.sum() - 1.0) > 1e-6:
            raise InvalidKernel("weights must sum to 1")
        if not (np.allclose(w, w[::-1, :], atol=1e-9) and np.allclose(w, w[:, ::-1], atol=1e-9)):
            raise InvalidKernel("weights must be symmetric under horizontal/vertical flip")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def gaussian(cls, sigma: float, window: int | None = None) -> "SmoothingKernel":
        """Truncated Gaussian kernel.

        When ``window`` is omitted it spans the full effective support,
        2*ceil(3*sigma) + 1.
        """
        if not sigma > 0:
            raise InvalidKernel(f"sigma must be > 0, got {sigma}")
        if window is None:
            window = 2 * math.ceil(3.0 * sigma) + 1
        if window % 2 != 1 or window < 1:
            raise InvalidKernel(f"window must be odd and >= 1, got {window}")
        c = (window - 1) / 2.0
        i = np.arange(window, dtype=np.float64)
        g = np.exp(-((i - c) ** 2) / (2.0 * sigma * sigma))
        k2 = np.outer(g, g)
        k2 /= k2.sum()
        return cls(sigma=float(sigma), window=int(window), weights=k2)

    @classmethod
    def identity(cls) -> "SmoothingKernel":
        return cls(sigma=1.0, window=1, weights=np.ones((1, 1)))

    @property
    def is_identity(self) -> bool:
        return self.window == 1

    def to_torch(self, dtype: torch.dtype) -> torch.Tensor:
        return torch.from_numpy(np.array(self.weights)).to(dtype)


def smooth_chw(x: torch.Tensor, kernel: SmoothingKernel) -> torch.Tensor:
    """Depthwise convolution with reflection padding on a (C, H, W) or
    (N, C, H, W) tensor. Differentiable in ``x``; the kernel is constant.
    """
    if kernel.is_identity:
        return x
    squeeze = x.dim() == 3
    if squeeze:
        x = x.unsqueeze(0)
    n, c, h, w = x.shape
    pad = kernel.window // 2
    if h <= pad or w <= pad:
        raise InvalidKernel(
            f"image {h}x{w} too small for reflection padding of window {kernel.window}"
        )
    weight = kernel.to_torch(x.dtype).expand(c, 1, kernel.window, kernel.window).contiguous()
    padded = F.pad(x, (pad, pad, pad, pad), mode="reflect")
    out = F.conv2d(padded, weight, groups=c)
    return out.squeeze(0) if squeeze else out


def gaussian_smooth(img: ImageTensor, kernel: SmoothingKernel) -> ImageTensor:
    """Smooth an image with the given kernel, reflection-padded at the
    boundary. Shape is preserved."""
    if kernel.is_identity:
        return img
    out = smooth_chw(img.to_chw(torch.float64), kernel)
    return ImageTensor.from_chw(out)


def clip_to_range(pixels: np.ndarray | ImageTensor) -> ImageTensor:
    """Clamp pixel values into [0, 1]. In-range values pass through unchanged."""
    arr = pixels.pixels if isinstance(pixels, ImageTensor) else np.asarray(pixels)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) array, got shape {arr.shape}")
    out = np.clip(arr, 0.0, 1.0)
    if out.dtype != np.float64:
        out = out.astype(np.float32)
    return ImageTensor(out)


def _to_pil(img: ImageTensor) -> Image.Image:
    return Image.fromarray(img.to_uint8(), mode="RGB")


def encode_png(img: ImageTensor) -> bytes:
    buf = io.BytesIO()
    _to_pil(img).save(buf, format="PNG")
    return buf.getvalue()


def encode_jpeg(img: ImageTensor, quality: int) -> bytes:
    if not 1 <= int(quality) <= 100:
        raise InvalidQuality(f"quality must be in [1, 100], got {quality}")
    buf = io.BytesIO()
    _to_pil(img).save(buf, format="JPEG", quality=int(quality))
    return buf.getvalue()


def decode(data: bytes) -> ImageTensor:
    """Decode PNG or JPEG bytes to an ImageTensor."""
    try:
        with Image.open(io.BytesIO(data)) as im:
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(f"cannot decode image bytes: {exc}") from exc
    return ImageTensor.from_uint8(arr)


def resize_image(img: ImageTensor, scale: float) -> ImageTensor:
    """Bilinear resize by a scale factor (e.g. 0.5 halves each side)."""
    if not scale > 0:
        raise ValueError(f"scale must be > 0, got {scale}")
    w = max(1, round(img.width * scale))
    h = max(1, round(img.height * scale))
    resized = _to_pil(img).resize((w, h), Image.BILINEAR)
    return ImageTensor.from_uint8(np.asarray(resized, dtype=np.uint8))


def save_png(img: ImageTensor, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_png(img))


def load_image(path) -> ImageTensor:
    with open(path, "rb") as fh:
        return decode(fh.read())
