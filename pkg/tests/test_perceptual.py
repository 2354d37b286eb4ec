import numpy as np
import pytest
import torch

from faceveil.errors import ShapeMismatch
from faceveil.imaging import ImageTensor, clip_to_range
from faceveil.perceptual import (
    PerceptualMetric,
    PerceptualMetricSpec,
    default_metric,
    lpips,
)


def _rand(rng, h=32, w=32):
    return ImageTensor(rng.random((h, w, 3)).astype(np.float32))


class TestSpec:
    def test_default_spec_valid(self):
        spec = PerceptualMetricSpec()
        assert spec.layer_set
        assert all((np.asarray(w) >= 0).all() for w in spec.layer_weights)

    def test_empty_layers_rejected(self):
        with pytest.raises(ValueError):
            PerceptualMetricSpec(layer_set=())

    def test_negative_weights_rejected(self):
        spec = PerceptualMetricSpec()
        bad = [np.array(w) for w in spec.layer_weights]
        bad[0] = -bad[0]
        with pytest.raises(ValueError):
            PerceptualMetricSpec(layer_weights=tuple(bad))

    def test_seed_recorded_in_network_id(self):
        assert PerceptualMetricSpec().feature_network_id.endswith("seed0")


class TestDistance:
    def test_zero_on_identity(self):
        rng = np.random.default_rng(0)
        x = _rand(rng)
        assert lpips(x, x) == 0.0

    def test_symmetric(self):
        rng = np.random.default_rng(1)
        x, y = _rand(rng), _rand(rng)
        assert abs(lpips(x, y) - lpips(y, x)) <= 1e-6

    def test_nonnegative(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            assert lpips(_rand(rng), _rand(rng)) >= 0.0

    def test_monotone_in_noise_magnitude(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            x = _rand(rng, 32, 32)
            noise = rng.normal(size=x.shape)
            prev = 0.0
            for eps in (0.01, 0.02, 0.05):
                d = lpips(x, clip_to_range(x.pixels + eps * noise))
                assert d > prev
                prev = d

    def test_shape_mismatch(self):
        rng = np.random.default_rng(4)
        with pytest.raises(ShapeMismatch):
            lpips(_rand(rng, 32, 32), _rand(rng, 32, 48))

    def test_arbitrary_sizes_supported(self):
        rng = np.random.default_rng(5)
        for h, w in ((16, 16), (33, 47), (128, 96)):
            x, y = _rand(rng, h, w), _rand(rng, h, w)
            assert np.isfinite(lpips(x, y))

    def test_deterministic_across_instances(self):
        rng = np.random.default_rng(6)
        x, y = _rand(rng), _rand(rng)
        a = PerceptualMetric()(x, y)
        b = PerceptualMetric()(x, y)
        assert a == b

    def test_gradient_matches_finite_differences(self):
        metric = PerceptualMetric(dtype=torch.float64)
        rng = np.random.default_rng(7)
        x = torch.tensor(rng.random((3, 24, 24)), dtype=torch.float64)
        y = torch.tensor(rng.random((3, 24, 24)), dtype=torch.float64, requires_grad=True)
        metric.distance_chw(x, y).backward()
        grad = y.grad.detach().numpy()

        h = 1e-6
        base = y.detach().clone()
        checked = 0
        tries = 0
        while checked < 20 and tries < 100:
            tries += 1
            c = tuple(rng.integers(0, s) for s in (3, 24, 24))
            yp = base.clone(); yp[c] += h
            ym = base.clone(); ym[c] -= h
            with torch.no_grad():
                fp = metric.distance_chw(x, yp).item()
                fm = metric.distance_chw(x, ym).item()
            fd = (fp - fm) / (2 * h)
            if max(abs(fd), abs(grad[c])) < 1e-9:
                continue
            rel = abs(fd - grad[c]) / max(abs(fd), abs(grad[c]))
            assert rel < 1e-3, f"coord {c}: fd={fd} vs {grad[c]}"
            checked += 1
        assert checked == 20

    def test_default_metric_singleton(self):
        assert default_metric() is default_metric()
