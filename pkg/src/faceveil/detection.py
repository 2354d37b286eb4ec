"""Face detection: plug-in contract, the bundled blob detector, and the
detect-once pipeline helpers.

Any object with ``detect(img) -> list[FaceDetection]`` satisfies the
detector contract; the attack and the benchmark only assume that much. The
bundled :class:`BlobFaceDetector` is tuned for this package's synthetic
corpus: it finds skin-hue blobs, then estimates eye and mouth landmarks
from darkness/redness structure inside each blob.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np
from scipy import ndimage

from .alignment import (
    CANONICAL_LANDMARKS,
    AlignedFace,
    FaceDetection,
    apply_alignment,
    build_alignment,
)
from .errors import NoFaceFound
from .imaging import ImageTensor, SmoothingKernel, gaussian_smooth


@runtime_checkable
class FaceDetector(Protocol):
    def detect(self, img: ImageTensor) -> list[FaceDetection]: ...


def detect_faces(img: ImageTensor, detector: FaceDetector) -> list[FaceDetection]:
    """Run a detector; results come back confidence-sorted with boxes
    clamped to image bounds. An empty list is a valid result."""
    dets = [d.clamped(img.width, img.height) for d in detector.detect(img)]
    return sorted(dets, key=lambda d: -d.confidence)


class StubDetector:
    """Returns a fixed detection list; counts calls. Test fixture."""

    def __init__(self, detections: list[FaceDetection]):
        self.detections = list(detections)
        self.calls = 0

    def detect(self, img: ImageTensor) -> list[FaceDetection]:
        self.calls += 1
        return list(self.detections)


def _rgb_to_hsv(px: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    r, g, b = px[..., 0], px[..., 1], px[..., 2]
    v = px.max(axis=-1)
    c = v - px.min(axis=-1)
    s = np.where(v > 1e-9, c / np.maximum(v, 1e-9), 0.0)
    h = np.zeros_like(v)
    safe = c > 1e-9
    rmax = safe & (v == r)
    gmax = safe & (v == g) & ~rmax
    bmax = safe & ~rmax & ~gmax
    h[rmax] = ((g - b)[rmax] / c[rmax]) % 6
    h[gmax] = (b - r)[gmax] / c[gmax] + 2
    h[bmax] = (r - g)[bmax] / c[bmax] + 4
    return h / 6.0, s, v


# template vertical fraction of the nose between eye line and mouth line
_NOSE_FRAC = float((CANONICAL_LANDMARKS[2, 1] - CANONICAL_LANDMARKS[:2, 1].mean())
                   / (CANONICAL_LANDMARKS[3:, 1].mean() - CANONICAL_LANDMARKS[:2, 1].mean()))


@dataclass
class BlobFaceDetector:
    """Skin-blob face detector for the synthetic corpus.

    The hue/saturation/value band is wider than the generator's skin
    palette so detection survives adversarial perturbation and mild
    blurring of protected images.
    """

    hue_max: float = 0.17
    hue_wrap_min: float = 0.96
    sat_range: tuple[float, float] = (0.10, 0.80)
    val_min: float = 0.34
    min_area_frac: float = 0.008
    presmooth_sigma: float = 1.2

    def detect(self, img: ImageTensor) -> list[FaceDetection]:
        px = img.pixels.astype(np.float64)
        hch, sch, vch = _rgb_to_hsv(px)
        mask = (((hch <= self.hue_max) | (hch >= self.hue_wrap_min))
                & (sch >= self.sat_range[0]) & (sch <= self.sat_range[1])
                & (vch >= self.val_min))
        mask = ndimage.binary_opening(mask, iterations=1)
        mask = ndimage.binary_closing(mask, iterations=3)
        labels, n = ndimage.label(mask)
        if n == 0:
            return []
        min_area = self.min_area_frac * px.shape[0] * px.shape[1]
        smooth = gaussian_smooth(img, SmoothingKernel.gaussian(self.presmooth_sigma, 5)).pixels

        dets = []
        for comp in range(1, n + 1):
            comp_mask = labels == comp
            if comp_mask.sum() < min_area:
                continue
            det = self._analyze_component(px, smooth, comp_mask)
            if det is not None:
                dets.append(det)
        return dets

    def _analyze_component(self, px, smooth, comp_mask) -> FaceDetection | None:
        ys, xs = np.nonzero(comp_mask)
        x0, x1 = float(xs.min()), float(xs.max() + 1)
        y0, y1 = float(ys.min()), float(ys.max() + 1)
        bw, bh = x1 - x0, y1 - y0
        if bw < 12 or bh < 12:
            return None
        box = (x0, y0, x1, y1)

        _, _, v = _rgb_to_hsv(smooth)
        skin_v = np.median(v[comp_mask])
        # eyes and mouth are holes in the skin mask; search the filled blob
        filled = ndimage.binary_fill_holes(comp_mask)

        eyes = self._find_eyes(v, filled, box, skin_v)
        mouth = self._find_mouth(smooth, filled, box, skin_red=self._skin_redness(smooth, comp_mask))
        if eyes is not None and mouth is not None:
            (le, re) = eyes
            (ml, mr) = mouth
            eye_mid = (le + re) / 2
            mouth_mid = (ml + mr) / 2
            nose = eye_mid + _NOSE_FRAC * (mouth_mid - eye_mid)
            lm = np.stack([le, re, nose, ml, mr])
            if self._geometry_ok(lm, box):
                return FaceDetection(box=box, landmarks=lm, confidence=0.95)
        # fall back to template geometry inside the blob box
        lm = self._template_landmarks(box)
        return FaceDetection(box=box, landmarks=lm, confidence=0.6)

    @staticmethod
    def _template_landmarks(box) -> np.ndarray:
        x0, y0, x1, y1 = box
        # canonical template expressed as fractions of its own bounding span,
        # stretched onto the blob box
        t = CANONICAL_LANDMARKS
        tx0, ty0 = 20.0, 40.0
        tx1, ty1 = 92.0, 104.0
        fx = (t[:, 0] - tx0) / (tx1 - tx0)
        fy = (t[:, 1] - ty0) / (ty1 - ty0)
        lm = np.stack([x0 + fx * (x1 - x0), y0 + fy * (y1 - y0)], axis=1)
        return lm

    def _find_eyes(self, v, comp_mask, box, skin_v):
        x0, y0, x1, y1 = box
        bh = y1 - y0
        region = np.zeros_like(comp_mask)
        ry0, ry1 = int(y0 + 0.10 * bh), int(y0 + 0.52 * bh)
        region[ry0:ry1, int(x0):int(x1)] = True
        # erode so smoothing bleed along the hair/background boundary cannot
        # masquerade as dark eye blobs
        interior = ndimage.binary_erosion(comp_mask, iterations=3)
        dark = interior & region & (v < skin_v - 0.22)
        labels, n = ndimage.label(dark)
        if n < 2:
            return None
        sizes = ndimage.sum_labels(np.ones_like(v), labels, index=range(1, n + 1))
        order = np.argsort(sizes)[::-1]
        cand = [i + 1 for i in order[:4] if sizes[order[0]] >= 3 and sizes[i] >= 3]
        if len(cand) < 2:
            return None
        cents = ndimage.center_of_mass(dark, labels, cand)  # (y, x)
        best = None
        for a in range(len(cand)):
            for b in range(a + 1, len(cand)):
                (ya, xa), (yb, xb) = cents[a], cents[b]
                dx = abs(xa - xb)
                dy = abs(ya - yb)
                if dx < 0.15 * (x1 - x0) or dy > 0.3 * dx + 3:
                    continue
                score = dx - 2 * dy
                if best is None or score > best[0]:
                    best = (score, (xa, ya), (xb, yb))
        if best is None:
            return None
        p, q = np.array(best[1]), np.array(best[2])
        return (p, q) if p[0] <= q[0] else (q, p)

    @staticmethod
    def _skin_redness(smooth, comp_mask) -> float:
        redness = smooth[..., 0] - 0.5 * (smooth[..., 1] + smooth[..., 2])
        return float(np.median(redness[comp_mask]))

    def _find_mouth(self, smooth, filled, box, skin_red):
        x0, y0, x1, y1 = box
        bh = y1 - y0
        region = np.zeros_like(filled)
        region[int(y0 + 0.58 * bh):int(y1), int(x0):int(x1)] = True
        redness = smooth[..., 0] - 0.5 * (smooth[..., 1] + smooth[..., 2])
        # skin is warm, so threshold redness relative to the blob itself
        red = filled & region & (redness > skin_red + 0.12)
        labels, n = ndimage.label(red)
        if n == 0:
            return None
        sizes = ndimage.sum_labels(np.ones(red.shape), labels, index=range(1, n + 1))
        biggest = int(np.argmax(sizes)) + 1
        if sizes[biggest - 1] < 6:
            return None
        ys, xs = np.nonzero(labels == biggest)
        cy = ys.mean()
        left = np.array([xs.min(), cy], dtype=np.float64)
        right = np.array([xs.max(), cy], dtype=np.float64)
        return left, right

    @staticmethod
    def _geometry_ok(lm: np.ndarray, box) -> bool:
        x0, y0, x1, y1 = box
        bw, bh = x1 - x0, y1 - y0
        eye_sep = lm[1, 0] - lm[0, 0]
        if not (0.18 * bw <= eye_sep <= 0.75 * bw):
            return False
        if not (lm[3:, 1].mean() > lm[:2, 1].mean() + 0.1 * bh):
            return False
        dw, dh = 0.2 * bw, 0.2 * bh
        if (lm[:, 0] < x0 - dw).any() or (lm[:, 0] > x1 + dw).any():
            return False
        if (lm[:, 1] < y0 - dh).any() or (lm[:, 1] > y1 + dh).any():
            return False
        return True


def top_face(img: ImageTensor, detector: FaceDetector) -> FaceDetection:
    """Highest-confidence detection, or NoFaceFound."""
    dets = detect_faces(img, detector)
    if not dets:
        raise NoFaceFound("no face detected")
    return dets[0]


def align_top_face(img: ImageTensor, detector: FaceDetector,
                   fallback_whole_image: bool = False) -> AlignedFace:
    """Detect, fit, and warp the strongest face.

    With ``fallback_whole_image`` the whole frame is treated as a face box
    when detection fails (benchmark-style behavior so feature extraction
    never aborts); otherwise NoFaceFound propagates.
    """
    dets = detect_faces(img, detector)
    if not dets:
        if not fallback_whole_image:
            raise NoFaceFound("no face detected")
        box = (0.0, 0.0, float(img.width), float(img.height))
        lm = BlobFaceDetector._template_landmarks(box)
        dets = [FaceDetection(box=box, landmarks=lm, confidence=0.0)]
    det = dets[0]
    transform = build_alignment(det)
    return apply_alignment(img, transform, source_detection=det)
