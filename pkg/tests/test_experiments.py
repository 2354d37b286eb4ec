"""Experiment mechanics on a small corpus with untrained extractors; the
trained desk-scale runs live in the acceptance suite."""

import numpy as np
import pytest

from faceveil.attack import AttackConfig
from faceveil.detection import BlobFaceDetector
from faceveil.errors import ConfigError
from faceveil.evalbench.dataset import write_corpus
from faceveil.evalbench.experiments import (
    ProtectedStore,
    run_jpeg_robustness,
    run_protection_eval,
    run_smoothing_defense,
    run_transfer_matrix,
)
from faceveil.evalbench.protocol import EvalProtocol
from faceveil.registry import ExtractorSpec, new_extractor
from faceveil.synthdata import make_corpus

CHEAP = AttackConfig(steps=2, preset="custom")


@pytest.fixture(scope="module")
def mini_dataset(tmp_path_factory):
    corpus = make_corpus(5, 4, seed=61, n_distractors=4)
    root = tmp_path_factory.mktemp("mini")
    return write_corpus(corpus, root, name="mini")


@pytest.fixture(scope="module")
def model_a():
    return new_extractor(ExtractorSpec("rn-micro", "arcface", embed_dim=48), seed=3)


@pytest.fixture(scope="module")
def model_b():
    return new_extractor(ExtractorSpec("ir-micro", "cosface", embed_dim=48), seed=4)


@pytest.fixture(scope="module")
def det():
    return BlobFaceDetector()


@pytest.fixture(scope="module")
def store():
    return ProtectedStore()


class TestProtectionEval:
    def test_zero_protected_equals_clean_baseline(self, mini_dataset, model_a, model_b, det):
        proto = EvalProtocol(probe_fraction=0.25, protected_identity_count=0,
                             rank_ks=(1, 3), seed=5)
        rep = run_protection_eval(mini_dataset, [model_a], model_b, proto, CHEAP,
                                  detector=det)
        vid = model_b.model_id
        for k in (1, 3):
            assert rep.accuracy("clean", vid, k) == rep.accuracy(model_a.model_id, vid, k)

    def test_protected_probes_only(self, mini_dataset, model_a, model_b, det, store):
        proto = EvalProtocol(probe_fraction=0.25, protected_identity_count=2,
                             rank_ks=(1,), seed=5)
        rep = run_protection_eval(mini_dataset, [model_a], model_b, proto, CHEAP,
                                  detector=det, store=store, seed=1)
        assert rep.n_probes == 2  # one probe for each protected identity

    def test_rank_accuracy_nondecreasing_in_k(self, mini_dataset, model_a, model_b, det, store):
        proto = EvalProtocol(probe_fraction=0.25, protected_identity_count=2,
                             rank_ks=(1, 3, 10), seed=5)
        rep = run_protection_eval(mini_dataset, [model_a], model_b, proto, CHEAP,
                                  detector=det, store=store, seed=1)
        for src in rep.sources:
            accs = [rep.accuracy(src, model_b.model_id, k) for k in (1, 3, 10)]
            assert accs == sorted(accs)


class TestTransferMatrix:
    def test_single_model_grid_matches_protection_eval(self, mini_dataset, model_a, det, store):
        proto = EvalProtocol(probe_fraction=0.25, protected_identity_count=2,
                             rank_ks=(1, 3), seed=6)
        grid = run_transfer_matrix(mini_dataset, [model_a], [model_a], proto, CHEAP,
                                   detector=det, store=store, seed=2)
        single = run_protection_eval(mini_dataset, [model_a], model_a, proto, CHEAP,
                                     detector=det, store=store, seed=2)
        vid = model_a.model_id
        for k in (1, 3):
            assert grid.accuracy("clean", vid, k) == single.accuracy("clean", vid, k)
            assert grid.accuracy(vid, vid, k) == single.accuracy(vid, vid, k)

    def test_grid_complete_with_clean_and_ensemble_rows(self, mini_dataset, model_a,
                                                        model_b, det, store):
        proto = EvalProtocol(probe_fraction=0.25, protected_identity_count=1,
                             rank_ks=(1,), seed=6)
        grid = run_transfer_matrix(mini_dataset, [model_a, model_b],
                                   [model_a, model_b], proto, CHEAP,
                                   detector=det, store=store, seed=2)
        assert grid.sources == ("clean", model_a.model_id, model_b.model_id, "ensemble")
        assert grid.victims == (model_a.model_id, model_b.model_id)
        assert len(grid.cells) == 8

    def test_empty_sources_rejected(self, mini_dataset, model_a, det):
        proto = EvalProtocol(seed=0)
        with pytest.raises(ValueError):
            run_transfer_matrix(mini_dataset, [], [model_a], proto, CHEAP, detector=det)


class TestSmoothingDefense:
    def test_vanishing_defense_equals_undefended(self, mini_dataset, model_a, model_b,
                                                 det, store):
        proto = EvalProtocol(probe_fraction=0.25, protected_identity_count=2,
                             rank_ks=(1, 3), seed=7)
        rep = run_smoothing_defense(mini_dataset, [model_a], model_b, proto, CHEAP,
                                    defense_sigma=0.01, detector=det, store=store,
                                    seed=3)
        vid = model_b.model_id
        for src in rep.sources:
            for k in (1, 3):
                assert rep.accuracy(src, vid, k) == rep.accuracy(src, f"{vid}+blur", k)

    def test_report_has_both_attack_variants(self, mini_dataset, model_a, model_b,
                                             det, store):
        proto = EvalProtocol(probe_fraction=0.25, protected_identity_count=1,
                             rank_ks=(1,), seed=7)
        rep = run_smoothing_defense(mini_dataset, [model_a], model_b, proto, CHEAP,
                                    detector=det, store=store, seed=3)
        assert set(rep.sources) == {"clean", "with-smoothing", "without-smoothing"}


class TestJpegRobustness:
    def test_quality_100_close_to_png(self, mini_dataset, model_a, model_b, det, store):
        proto = EvalProtocol(probe_fraction=0.25, protected_identity_count=2,
                             rank_ks=(1, 3), seed=8)
        png, jpeg = run_jpeg_robustness(mini_dataset, [model_a], model_b, proto,
                                        CHEAP, quality=100, detector=det,
                                        store=store, seed=4)
        vid = model_b.model_id
        tag = model_a.model_id
        for k in (1, 3):
            assert abs(png.accuracy(tag, vid, k) - jpeg.accuracy(tag, vid, k)) <= 0.02 + 1e-9

    def test_bad_quality_rejected(self, mini_dataset, model_a, model_b, det):
        proto = EvalProtocol(seed=0)
        with pytest.raises(ConfigError):
            run_jpeg_robustness(mini_dataset, [model_a], model_b, proto, CHEAP,
                                quality=0, detector=det)


class TestProtectedStore:
    def test_cache_hit_avoids_recompute(self, mini_dataset, model_a, det, tmp_path):
        store = ProtectedStore(directory=tmp_path / "prot")
        row = mini_dataset.images[0]
        img = mini_dataset.load(row.image_id)
        first = store.get_or_protect(row.image_id, img, [model_a], CHEAP, det, seed=9)
        # a fresh store over the same directory loads from disk
        store2 = ProtectedStore(directory=tmp_path / "prot")
        second = store2.get_or_protect(row.image_id, img, [model_a], CHEAP, det, seed=9)
        assert np.array_equal(first[0].pixels, second[0].pixels)
        assert first[1] == pytest.approx(second[1])

    def test_key_distinguishes_configs(self, mini_dataset, model_a, det):
        store = ProtectedStore()
        row = mini_dataset.images[0]
        img = mini_dataset.load(row.image_id)
        store.get_or_protect(row.image_id, img, [model_a], CHEAP, det, seed=9)
        other = AttackConfig(steps=3, preset="custom")
        store.get_or_protect(row.image_id, img, [model_a], other, det, seed=9)
        assert len(store.memory) == 2
