import numpy as np
import pytest
import torch

from faceveil.alignment import (
    CANONICAL_LANDMARKS,
    AlignmentTransform,
    FaceDetection,
    WarpGrid,
    apply_alignment,
    build_alignment,
    warp_chw,
)
from faceveil.errors import DegenerateLandmarks
from faceveil.imaging import ImageTensor


def _det(landmarks, box=None, conf=0.95):
    lm = np.asarray(landmarks, dtype=np.float64)
    if box is None:
        x0, y0 = lm.min(axis=0) - 20
        x1, y1 = lm.max(axis=0) + 20
        box = (float(x0), float(y0), float(x1), float(y1))
    return FaceDetection(box=box, landmarks=lm, confidence=conf)


# Closed-form similarity oracle: for src = s*R(theta)@dst + t exactly, the
# least-squares fit must recover the inverse map.
def similarity_params(affine):
    a = affine[:, :2]
    scale = np.sqrt(abs(np.linalg.det(a)))
    theta = np.arctan2(a[1, 0], a[0, 0])
    return scale, theta, affine[:, 2]


class TestFaceDetection:
    def test_rejects_degenerate_box(self):
        with pytest.raises(ValueError):
            FaceDetection(box=(10, 10, 10, 20), landmarks=np.zeros((5, 2)), confidence=0.9)

    def test_rejects_landmarks_outside_dilated_box(self):
        lm = np.full((5, 2), 500.0)
        with pytest.raises(ValueError):
            FaceDetection(box=(0, 0, 100, 100), landmarks=lm, confidence=0.9)

    def test_clamped_to_image(self):
        det = _det(CANONICAL_LANDMARKS, box=(-10.0, -5.0, 130.0, 140.0))
        c = det.clamped(112, 112)
        assert c.box == (0.0, 0.0, 112.0, 112.0)


class TestBuildAlignment:
    def test_template_landmarks_give_identity(self):
        t = build_alignment(_det(CANONICAL_LANDMARKS))
        expected = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        assert np.abs(t.affine - expected).max() <= 1e-6
        assert t.frozen

    def test_recovers_scale_and_shift(self):
        # landmarks at template*2 + (10, 10) -> fit maps them back: scale 0.5
        src = CANONICAL_LANDMARKS * 2.0 + np.array([10.0, 10.0])
        t = build_alignment(_det(src))
        scale, theta, _ = similarity_params(t.affine)
        assert abs(scale - 0.5) <= 1e-5
        assert abs(theta) <= 1e-5
        mapped = t.apply_points(src)
        assert np.abs(mapped - CANONICAL_LANDMARKS).max() <= 1e-5

    def test_recovers_rotation(self):
        ang = 0.3
        rot = np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
        src = (CANONICAL_LANDMARKS - 56.0) @ rot.T * 1.5 + np.array([80.0, 70.0])
        t = build_alignment(_det(src))
        mapped = t.apply_points(src)
        assert np.abs(mapped - CANONICAL_LANDMARKS).max() <= 1e-5

    def test_coincident_landmarks_degenerate(self):
        lm = np.tile([[50.0, 50.0]], (5, 1))
        det = FaceDetection(box=(40, 40, 60, 60), landmarks=lm, confidence=0.9)
        with pytest.raises(DegenerateLandmarks):
            build_alignment(det)

    def test_collinear_landmarks_degenerate(self):
        lm = np.stack([np.linspace(10, 90, 5), np.linspace(10, 90, 5)], axis=1)
        det = _det(lm)
        with pytest.raises(DegenerateLandmarks):
            build_alignment(det)


class TestApplyAlignment:
    def test_identity_transform_preserves_112(self):
        rng = np.random.default_rng(0)
        img = ImageTensor(rng.random((112, 112, 3)).astype(np.float32))
        face = apply_alignment(img, AlignmentTransform.identity())
        assert np.abs(face.crop.pixels - img.pixels).max() <= 1e-6

    def test_identity_idempotent(self):
        rng = np.random.default_rng(1)
        img = ImageTensor(rng.random((112, 112, 3)).astype(np.float32))
        once = apply_alignment(img, AlignmentTransform.identity()).crop
        twice = apply_alignment(once, AlignmentTransform.identity()).crop
        assert np.array_equal(once.pixels, twice.pixels)

    def test_integer_translation_exact_on_interior(self):
        rng = np.random.default_rng(2)
        img = ImageTensor(rng.random((140, 140, 3)).astype(np.float32))
        # canonical (u, v) samples source at (u + 12, v + 9)
        t = AlignmentTransform(affine=np.array([[1.0, 0.0, -12.0], [0.0, 1.0, -9.0]]))
        face = apply_alignment(img, t)
        assert np.abs(face.crop.pixels - img.pixels[9:9 + 112, 12:12 + 112]).max() <= 1e-7

    def test_unfrozen_transform_rejected(self):
        t = AlignmentTransform(affine=np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
                               frozen=False)
        rng = np.random.default_rng(3)
        img = ImageTensor(rng.random((112, 112, 3)).astype(np.float32))
        with pytest.raises(ValueError):
            apply_alignment(img, t)

    def test_warp_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        src = CANONICAL_LANDMARKS * 1.3 + np.array([8.0, 5.0])
        t = build_alignment(_det(src))
        img = torch.tensor(rng.random((3, 160, 160)), dtype=torch.float64, requires_grad=True)
        out = warp_chw(img, t)
        probe = torch.tensor(rng.random(tuple(out.shape)), dtype=torch.float64)
        (out * probe).sum().backward()
        grad = img.grad.detach().numpy()

        h = 1e-6
        base = img.detach().clone()
        grid = WarpGrid(t, (160, 160))
        checked = 0
        attempts = 0
        while checked < 20 and attempts < 200:
            attempts += 1
            c = tuple(rng.integers(0, s) for s in (3, 160, 160))
            if abs(grad[c]) < 1e-9:
                continue  # pixel not sampled by the warp
            xp = base.clone(); xp[c] += h
            xm = base.clone(); xm[c] -= h
            fp = (grid.apply(xp) * probe).sum().item()
            fm = (grid.apply(xm) * probe).sum().item()
            fd = (fp - fm) / (2 * h)
            rel = abs(fd - grad[c]) / max(abs(fd), abs(grad[c]))
            assert rel < 1e-3
            checked += 1
        assert checked == 20
