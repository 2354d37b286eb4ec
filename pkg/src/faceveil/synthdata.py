"""Procedural face corpus for desk-scale experiments.

Each identity is a parameter vector (skin tone, eye geometry, mouth shape,
hair, beauty marks); each image of an identity re-renders those parameters
under a random similarity placement, lighting gain, background, and pixel
noise. Landmarks are known analytically, so every image comes with a
ground-truth detection.

Rendering maps canvas pixels back into a canonical face frame (unit square
over the face box) and shades by region, which makes rotation and scaling
exact. Skin hues stay inside a fixed warm band and backgrounds/hair stay
well outside it, which is what the bundled blob detector keys on.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass

import numpy as np

from .alignment import FaceDetection
from .imaging import ImageTensor

# Warm band that face skin is drawn from; detection relies on backgrounds
# and hair staying far from it.
SKIN_HUE = (0.035, 0.105)
SKIN_SAT = (0.30, 0.55)
SKIN_VAL = (0.62, 0.88)
BG_HUE = (0.30, 0.80)


@dataclass(frozen=True)
class IdentityParams:
    """Fixed per-identity facial geometry and palette (canonical face frame)."""

    skin_rgb: tuple[float, float, float]
    oval_w: float
    oval_h: float
    eye_sep: float
    eye_y: float
    eye_radius: float
    iris_rgb: tuple[float, float, float]
    nose_dx: float
    nose_frac: float
    mouth_y: float
    mouth_halfwidth: float
    mouth_thick: float
    mouth_rgb: tuple[float, float, float]
    mouth_curve: float
    hair_rgb: tuple[float, float, float]
    hair_band: float
    marks: tuple[tuple[float, float, float], ...]  # (fx, fy, darkness)

    @property
    def landmarks_face_frame(self) -> np.ndarray:
        """Five (x, y) landmarks in the unit face frame."""
        lx = 0.5 - self.eye_sep / 2
        rx = 0.5 + self.eye_sep / 2
        nose_y = self.eye_y + self.nose_frac * (self.mouth_y - self.eye_y)
        return np.array(
            [
                [lx, self.eye_y],
                [rx, self.eye_y],
                [0.5 + self.nose_dx, nose_y],
                [0.5 - self.mouth_halfwidth, self.mouth_y],
                [0.5 + self.mouth_halfwidth, self.mouth_y],
            ]
        )


def _hsv(rng: np.random.Generator, h_range, s_range, v_range) -> tuple[float, float, float]:
    h = rng.uniform(*h_range)
    s = rng.uniform(*s_range)
    v = rng.uniform(*v_range)
    return colorsys.hsv_to_rgb(h % 1.0, s, v)


def sample_identity(rng: np.random.Generator) -> IdentityParams:
    n_marks = rng.integers(1, 4)
    marks = []
    for _ in range(n_marks):
        fx = rng.uniform(0.28, 0.72)
        fy = rng.uniform(0.60, 0.72)
        marks.append((float(fx), float(fy), float(rng.uniform(0.45, 0.65))))
    dark_hair = rng.random() < 0.5
    if dark_hair:
        hair = _hsv(rng, (0.0, 1.0), (0.0, 0.4), (0.05, 0.22))
    else:
        hair = _hsv(rng, BG_HUE, (0.35, 0.7), (0.3, 0.6))
    return IdentityParams(
        skin_rgb=_hsv(rng, SKIN_HUE, SKIN_SAT, SKIN_VAL),
        oval_w=float(rng.uniform(0.36, 0.44)),
        oval_h=float(rng.uniform(0.46, 0.54)),
        eye_sep=float(rng.uniform(0.30, 0.40)),
        eye_y=float(rng.uniform(0.40, 0.48)),
        eye_radius=float(rng.uniform(0.040, 0.065)),
        iris_rgb=_hsv(rng, (0.0, 1.0), (0.2, 0.8), (0.05, 0.25)),
        nose_dx=float(rng.uniform(-0.02, 0.02)),
        nose_frac=float(rng.uniform(0.42, 0.56)),
        mouth_y=float(rng.uniform(0.76, 0.85)),
        mouth_halfwidth=float(rng.uniform(0.12, 0.19)),
        mouth_thick=float(rng.uniform(0.022, 0.042)),
        mouth_rgb=(float(rng.uniform(0.70, 0.92)), float(rng.uniform(0.02, 0.12)),
                   float(rng.uniform(0.03, 0.15))),
        mouth_curve=float(rng.uniform(-0.25, 0.25)),
        hair_rgb=hair,
        hair_band=float(rng.uniform(0.70, 0.82)),
        marks=tuple(marks),
    )


@dataclass(frozen=True)
class Placement:
    """Similarity placement of the face frame on the canvas."""

    center: tuple[float, float]
    size: float  # face box side in pixels
    angle: float  # radians

    def face_to_canvas(self, pts: np.ndarray) -> np.ndarray:
        c, s = np.cos(self.angle), np.sin(self.angle)
        rot = np.array([[c, -s], [s, c]])
        return (pts - 0.5) @ rot.T * self.size + np.asarray(self.center)


def sample_placement(rng: np.random.Generator, canvas: tuple[int, int],
                     size_range=(0.50, 0.68)) -> Placement:
    h, w = canvas
    size = rng.uniform(*size_range) * min(h, w)
    margin = 0.56 * size
    cx = rng.uniform(margin, w - margin)
    cy = rng.uniform(margin, h - margin)
    angle = rng.uniform(-0.10, 0.10)
    return Placement(center=(float(cx), float(cy)), size=float(size), angle=float(angle))


def _render_background(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    c1 = np.array(_hsv(rng, BG_HUE, (0.15, 0.55), (0.35, 0.85)))
    c2 = np.array(_hsv(rng, BG_HUE, (0.15, 0.55), (0.35, 0.85)))
    yy, xx = np.mgrid[0:h, 0:w]
    t = ((xx / max(w - 1, 1)) * rng.uniform(0.3, 0.7)
         + (yy / max(h - 1, 1)) * rng.uniform(0.3, 0.7))
    t = (t - t.min()) / max(t.max() - t.min(), 1e-9)
    img = c1[None, None, :] * (1 - t[..., None]) + c2[None, None, :] * t[..., None]
    # one soft off-hue blob for clutter
    bx, by = rng.uniform(0, w), rng.uniform(0, h)
    rad = rng.uniform(0.15, 0.3) * min(h, w)
    blob = np.exp(-(((xx - bx) ** 2 + (yy - by) ** 2) / (2 * rad * rad)))
    c3 = np.array(_hsv(rng, BG_HUE, (0.2, 0.5), (0.3, 0.8)))
    img = img * (1 - 0.6 * blob[..., None]) + c3[None, None, :] * 0.6 * blob[..., None]
    return img


def _paint_face(img: np.ndarray, ident: IdentityParams, place: Placement) -> None:
    h, w, _ = img.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    c, s = np.cos(place.angle), np.sin(place.angle)
    dx = xx - place.center[0]
    dy = yy - place.center[1]
    # inverse rotation into the face frame
    fx = (c * dx + s * dy) / place.size + 0.5
    fy = (-s * dx + c * dy) / place.size + 0.5

    oval = (((fx - 0.5) / ident.oval_w) ** 2 + ((fy - 0.52) / ident.oval_h) ** 2)
    face_mask = oval <= 1.0
    img[face_mask] = ident.skin_rgb

    hair = (oval > ident.hair_band) & (oval <= 1.25) & (fy < ident.eye_y - 0.06)
    img[hair] = ident.hair_rgb

    lm = ident.landmarks_face_frame
    for ex, ey in (lm[0], lm[1]):
        eye = ((fx - ex) ** 2 + (fy - ey) ** 2) <= ident.eye_radius ** 2
        img[eye & face_mask] = ident.iris_rgb

    # nose: slightly darkened skin ridge ending at the tip landmark
    nx, ny = lm[2]
    ridge = ((np.abs(fx - nx) <= 0.014)
             & (fy >= ident.eye_y + 0.05) & (fy <= ny)) | (
        ((fx - nx) ** 2 + (fy - ny) ** 2) <= 0.018 ** 2)
    img[ridge & face_mask] = np.asarray(ident.skin_rgb) * 0.82

    # mouth: curved slab between the two corner landmarks
    mouth_cy = ident.mouth_y + ident.mouth_curve * ((fx - 0.5) ** 2 - (ident.mouth_halfwidth ** 2) / 2)
    mouth = (np.abs(fy - mouth_cy) <= ident.mouth_thick) & (np.abs(fx - 0.5) <= ident.mouth_halfwidth)
    img[mouth & face_mask] = ident.mouth_rgb

    for mx, my, dark in ident.marks:
        mark = ((fx - mx) ** 2 + (fy - my) ** 2) <= 0.016 ** 2
        img[mark & face_mask & ~mouth & ~ridge] = np.asarray(ident.skin_rgb) * dark


def _soft_blur(img: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # 3x3 binomial blur to soften mask edges
    k = np.array([1.0, 2.0, 1.0])
    k = np.outer(k, k)
    k /= k.sum()
    out = np.zeros_like(img)
    padded = np.pad(img, ((1, 1), (1, 1), (0, 0)), mode="edge")
    for dy in range(3):
        for dx in range(3):
            out += k[dy, dx] * padded[dy:dy + img.shape[0], dx:dx + img.shape[1]]
    return out


def render_scene(ident: IdentityParams, rng: np.random.Generator,
                 canvas: tuple[int, int] = (128, 128),
                 placement: Placement | None = None,
                 extra_faces: list[tuple[IdentityParams, Placement]] | None = None,
                 ) -> tuple[ImageTensor, list[FaceDetection]]:
    """Render one scene; returns the image and ground-truth detections,
    strongest (largest) face first."""
    h, w = canvas
    img = _render_background(rng, h, w)
    faces = [(ident, placement or sample_placement(rng, canvas))]
    if extra_faces:
        faces.extend(extra_faces)
    dets = []
    for par, place in faces:
        _paint_face(img, par, place)
        lm = place.face_to_canvas(par.landmarks_face_frame)
        corners = place.face_to_canvas(np.array(
            [[0.5 - par.oval_w, 0.52 - par.oval_h], [0.5 + par.oval_w, 0.52 - par.oval_h],
             [0.5 - par.oval_w, 0.52 + par.oval_h], [0.5 + par.oval_w, 0.52 + par.oval_h]]))
        x0, y0 = corners.min(axis=0)
        x1, y1 = corners.max(axis=0)
        dets.append(FaceDetection(box=(float(x0), float(y0), float(x1), float(y1)),
                                  landmarks=lm, confidence=1.0))
    img = _soft_blur(img, rng)
    gain = rng.uniform(0.94, 1.06)
    img = img * gain + rng.normal(0.0, 0.012, img.shape)
    dets.sort(key=lambda d: -(d.box[2] - d.box[0]) * (d.box[3] - d.box[1]))
    return ImageTensor(np.clip(img, 0.0, 1.0).astype(np.float32)), dets


def render_background_only(rng: np.random.Generator,
                           canvas: tuple[int, int] = (128, 128)) -> ImageTensor:
    """A faceless scene; the detector must return nothing on these."""
    h, w = canvas
    img = _render_background(rng, h, w)
    img = img + rng.normal(0.0, 0.012, img.shape)
    return ImageTensor(np.clip(img, 0.0, 1.0).astype(np.float32))


@dataclass
class CorpusImage:
    image_id: str
    identity: str
    image: ImageTensor
    truth: FaceDetection


def make_corpus(n_identities: int, images_per_identity: int, seed: int,
                canvas: tuple[int, int] = (128, 128),
                n_distractors: int = 0,
                identity_prefix: str = "id") -> list[CorpusImage]:
    """Generate a labeled corpus; distractor images get the reserved
    identity label "unknown"."""
    rng = np.random.default_rng(seed)
    out: list[CorpusImage] = []
    for i in range(n_identities):
        ident = sample_identity(rng)
        name = f"{identity_prefix}{i:03d}"
        for j in range(images_per_identity):
            img, dets = render_scene(ident, rng, canvas)
            out.append(CorpusImage(f"{name}_{j:02d}", name, img, dets[0]))
    for k in range(n_distractors):
        ident = sample_identity(rng)
        img, dets = render_scene(ident, rng, canvas)
        out.append(CorpusImage(f"distractor_{k:03d}", "unknown", img, dets[0]))
    return out
