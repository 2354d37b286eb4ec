"""Differentiable crop-align-resize onto the canonical 112x112 face frame.

Detection happens once, on the original image, in plain numpy; what gets
differentiated is only the fixed bilinear warp that maps source pixels into
the canonical frame. Landmark coordinates are (x, y) pixel positions with
pixel centers at integer coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import DegenerateLandmarks
from .imaging import ImageTensor

FACE_SIZE = 112

# Standard five-point destination layout for 112x112 aligned crops:
# left eye, right eye, nose tip, left mouth corner, right mouth corner.
CANONICAL_LANDMARKS = np.array(
    [
        [38.2946, 51.6963],
        [73.5318, 51.5014],
        [56.0252, 71.7366],
        [41.5493, 92.3655],
        [70.7299, 92.2041],
    ],
    dtype=np.float64,
)


@dataclass(frozen=True)
class FaceDetection:
    """One detected face: box, five landmarks, confidence in [0, 1]."""

    box: tuple[float, float, float, float]  # x0, y0, x1, y1
    landmarks: np.ndarray  # (5, 2) float, (x, y) order
    confidence: float

    def __post_init__(self):
        x0, y0, x1, y1 = self.box
        if not (x0 < x1 and y0 < y1):
            raise ValueError(f"degenerate box {self.box}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        lm = np.asarray(self.landmarks, dtype=np.float64)
        if lm.shape != (5, 2):
            raise ValueError(f"expected 5 (x, y) landmarks, got shape {lm.shape}")
        # landmarks must sit inside the box dilated by 20%
        dw, dh = 0.2 * (x1 - x0), 0.2 * (y1 - y0)
        inside = (
            (lm[:, 0] >= x0 - dw).all()
            and (lm[:, 0] <= x1 + dw).all()
            and (lm[:, 1] >= y0 - dh).all()
            and (lm[:, 1] <= y1 + dh).all()
        )
        if not inside:
            raise ValueError("landmarks outside dilated detection box")
        lm = lm.copy()
        lm.setflags(write=False)
        object.__setattr__(self, "landmarks", lm)

    def clamped(self, width: int, height: int) -> "FaceDetection":
        """Clamp the box to image bounds."""
        x0, y0, x1, y1 = self.box
        x0, x1 = max(0.0, x0), min(float(width), x1)
        y0, y1 = max(0.0, y0), min(float(height), y1)
        return FaceDetection(box=(x0, y0, x1, y1), landmarks=self.landmarks,
                             confidence=self.confidence)


@dataclass(frozen=True)
class AlignmentTransform:
    """Affine 2x3 map from source-image coordinates to the canonical frame.

    Built once per detection and frozen for the duration of an attack; the
    matrix is a constant of the optimization, never a variable.
    """

    affine: np.ndarray  # 2x3, canonical = affine @ [x, y, 1]
    frozen: bool = True

    def __post_init__(self):
        m = np.asarray(self.affine, dtype=np.float64)
        if m.shape != (2, 3):
            raise ValueError(f"expected 2x3 affine, got {m.shape}")
        if abs(np.linalg.det(m[:, :2])) < 1e-12:
            raise ValueError("affine 2x2 part is singular")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "affine", m)

    @classmethod
    def identity(cls) -> "AlignmentTransform":
        return cls(affine=np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))

    def apply_points(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        return pts @ self.affine[:, :2].T + self.affine[:, 2]

    def inverse_matrix(self) -> np.ndarray:
        """2x3 map from canonical coordinates back to source coordinates."""
        a = self.affine[:, :2]
        t = self.affine[:, 2]
        a_inv = np.linalg.inv(a)
        return np.hstack([a_inv, (-a_inv @ t)[:, None]])

    @property
    def scale(self) -> float:
        return float(np.sqrt(abs(np.linalg.det(self.affine[:, :2]))))


@dataclass(frozen=True)
class AlignedFace:
    """A 112x112 crop plus the transform and detection that produced it."""

    crop: ImageTensor
    transform: AlignmentTransform
    source_detection: FaceDetection

    def __post_init__(self):
        if self.crop.shape != (FACE_SIZE, FACE_SIZE, 3):
            raise ValueError(f"crop must be {FACE_SIZE}x{FACE_SIZE}x3, got {self.crop.shape}")


def build_alignment(det: FaceDetection) -> AlignmentTransform:
    """Least-squares similarity transform from the detection's landmarks to
    the canonical five-point template.

    Raises DegenerateLandmarks when the landmark set is coincident or
    collinear within tolerance (no stable similarity fit).
    """
    src = np.asarray(det.landmarks, dtype=np.float64)
    dst = CANONICAL_LANDMARKS
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    sc = src - mu_s
    dc = dst - mu_d

    sv = np.linalg.svd(sc, compute_uv=False)
    if sv[0] < 1e-9 or sv[1] / sv[0] < 1e-3:
        raise DegenerateLandmarks("landmarks are coincident or collinear")

    cov = dc.T @ sc / src.shape[0]
    u, d, vt = np.linalg.svd(cov)
    s = np.eye(2)
    if np.linalg.det(u @ vt) < 0:
        s[1, 1] = -1.0
    rot = u @ s @ vt
    var_s = (sc ** 2).sum() / src.shape[0]
    scale = np.trace(np.diag(d) @ s) / var_s
    t = mu_d - scale * rot @ mu_s
    affine = np.hstack([scale * rot, t[:, None]])
    return AlignmentTransform(affine=affine, frozen=True)


class WarpGrid:
    """Precomputed bilinear sampling pattern for one (transform, image shape).

    The grid is a constant of the attack; applying it is a linear, exactly
    differentiable function of the input pixels. Samples falling outside the
    image use border replication.
    """

    def __init__(self, transform: AlignmentTransform, in_hw: tuple[int, int],
                 out_size: int = FACE_SIZE):
        if not transform.frozen:
            raise ValueError("transform must be frozen before warping")
        h, w = in_hw
        self.in_hw = (h, w)
        self.out_size = out_size
        inv = transform.inverse_matrix()
        us, vs = np.meshgrid(np.arange(out_size), np.arange(out_size))  # x, y
        grid = np.stack([us, vs, np.ones_like(us)], axis=-1).reshape(-1, 3).astype(np.float64)
        src = grid @ inv.T  # (N, 2) source x, y

        x = np.clip(src[:, 0], 0.0, w - 1.0)
        y = np.clip(src[:, 1], 0.0, h - 1.0)
        x0 = np.floor(x).astype(np.int64)
        y0 = np.floor(y).astype(np.int64)
        x1 = np.minimum(x0 + 1, w - 1)
        y1 = np.minimum(y0 + 1, h - 1)
        self._wx = torch.from_numpy(x - x0)
        self._wy = torch.from_numpy(y - y0)
        self._i00 = torch.from_numpy(y0 * w + x0)
        self._i01 = torch.from_numpy(y0 * w + x1)
        self._i10 = torch.from_numpy(y1 * w + x0)
        self._i11 = torch.from_numpy(y1 * w + x1)

    def apply(self, img: torch.Tensor) -> torch.Tensor:
        """Warp a (C, H, W) tensor to (C, out_size, out_size)."""
        c, h, w = img.shape
        if (h, w) != self.in_hw:
            raise ValueError(f"grid built for {self.in_hw}, got {(h, w)}")
        wx = self._wx.to(img.dtype)
        wy = self._wy.to(img.dtype)
        flat = img.reshape(c, -1)
        top = flat[:, self._i00] * (1 - wx) + flat[:, self._i01] * wx
        bot = flat[:, self._i10] * (1 - wx) + flat[:, self._i11] * wx
        out = top * (1 - wy) + bot * wy
        return out.reshape(c, self.out_size, self.out_size)


def warp_chw(img: torch.Tensor, transform: AlignmentTransform,
             out_size: int = FACE_SIZE) -> torch.Tensor:
    """One-shot bilinear warp of a (C, H, W) tensor into the canonical frame."""
    return WarpGrid(transform, (img.shape[1], img.shape[2]), out_size).apply(img)


def apply_alignment(img: ImageTensor, t: AlignmentTransform,
                    source_detection: FaceDetection | None = None) -> AlignedFace:
    """Warp an image into a 112x112 aligned crop using a frozen transform.

    When the originating detection is not supplied, a nominal one is
    reconstructed from the transform itself.
    """
    det = source_detection if source_detection is not None else detection_from_transform(t)
    crop = warp_chw(img.to_chw(torch.float64), t)
    return AlignedFace(crop=ImageTensor.from_chw(crop), transform=t, source_detection=det)


def detection_from_transform(t: AlignmentTransform) -> FaceDetection:
    """Nominal detection implied by a transform: the canonical template and
    crop corners mapped back into source coordinates."""
    inv = t.inverse_matrix()
    lm = CANONICAL_LANDMARKS @ inv[:, :2].T + inv[:, 2]
    corners = np.array([[0, 0], [FACE_SIZE - 1, 0], [0, FACE_SIZE - 1],
                        [FACE_SIZE - 1, FACE_SIZE - 1]], dtype=np.float64)
    src_corners = corners @ inv[:, :2].T + inv[:, 2]
    x0, y0 = src_corners.min(axis=0)
    x1, y1 = src_corners.max(axis=0)
    return FaceDetection(box=(float(x0), float(y0), float(x1) + 1e-6, float(y1) + 1e-6),
                         landmarks=lm, confidence=1.0)
