import time

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sdnsplice import pipeline, synth
from sdnsplice.config import Config
from sdnsplice.errors import DomainError, ShapeError
from sdnsplice.pipeline import AttackSpec, Metrics


def test_score_examples():
    truth = np.zeros((10, 10), bool)
    truth[2:5, 3:7] = True
    m = pipeline.score(truth, truth)
    assert (m.precision, m.recall, m.accuracy, m.f_score) == (1, 1, 1, 1)
    m = pipeline.score(np.zeros_like(truth), truth)
    assert (m.precision, m.recall, m.f_score) == (0, 0, 0)
    m = Metrics(tp=50, tn=850, fp=50, fn=50)
    assert (m.precision, m.recall, m.accuracy, m.f_score) == pytest.approx((0.5, 0.5, 0.9, 0.5))
    with pytest.raises(ShapeError):
        pipeline.score(truth, truth[:5])


@given(st.integers(0, 2 ** 32 - 1))
def test_score_invariants(seed):
    rng = np.random.default_rng(seed)
    d = rng.uniform(size=(12, 9)) < 0.3
    t = rng.uniform(size=(12, 9)) < 0.4
    m = pipeline.score(d, t)
    assert m.tp + m.tn + m.fp + m.fn == d.size
    mc = pipeline.score(~d, ~t)
    assert mc.accuracy == m.accuracy
    swapped = pipeline.score(d, ~t)
    assert (swapped.tp, swapped.fn) == (m.fp, m.tn)
    img = pipeline.render_decision_map(d, t)
    colors = {k: int(np.all(img == v, axis=-1).sum()) for k, v in pipeline.DECISION_COLORS.items()}
    assert colors == {"tp": m.tp, "fp": m.fp, "fn": m.fn, "tn": m.tn}


def test_render_examples():
    t = np.zeros((4, 4), bool)
    t[1:3, 1:3] = True
    img = pipeline.render_decision_map(t, t)
    assert {tuple(c) for c in img.reshape(-1, 3)} == {(255, 255, 255), (0, 0, 0)}
    img = pipeline.render_decision_map(np.ones((3, 3), bool), np.zeros((3, 3), bool))
    assert np.all(img == (0, 255, 255))


def test_binarize_soft():
    pred = np.r_[np.full(50, 0.1), np.full(20, 0.9), [0.15, 0.85]].reshape(8, 9)
    out = pipeline.binarize_soft(pred)
    assert out.sum() == 21
    assert np.array_equal(pipeline.binarize_soft(pred > 0.5), pred > 0.5)


def test_attack_validation():
    with pytest.raises(DomainError):
        AttackSpec("jpeg", 0)
    with pytest.raises(DomainError):
        AttackSpec("scale", 1.5)
    with pytest.raises(DomainError):
        AttackSpec("blur", 1)


def test_apply_attack_shapes():
    sc = synth.make_splice_scene(size=128, patch=48, seed=1)
    img, mask = pipeline.apply_attack(sc.image, sc.mask, AttackSpec("scale", 0.5))
    assert img.shape == (64, 64) and mask.shape == (64, 64)
    assert abs(mask.mean() - sc.mask.mean()) < 0.02
    img, mask = pipeline.apply_attack(sc.image, sc.mask, AttackSpec("jpeg", 90))
    assert img.shape == sc.image.shape and np.array_equal(mask, sc.mask)


@pytest.fixture(scope="module")
def scene():
    return synth.make_splice_scene(seed=11)


def test_detect_localises_splice(scene, prior):
    res = pipeline.detect(scene.image, prior)
    assert res.decision.shape == scene.image.shape
    assert not res.degraded
    assert pipeline.score(res.decision, scene.mask).f_score >= 0.8
    assert res.combined_probs.kind == "combined"
    assert set(res.maps) == {"distance", "bayes", "combined"}
    assert res.nlf1 is not None


def test_detect_pristine_is_clean(scene, prior):
    res = pipeline.detect(scene.pristine, prior)
    assert res.degraded and res.warnings
    assert res.decision.mean() < 0.05


def test_detect_deterministic(scene, prior):
    a = pipeline.detect(scene.image, prior, Config(seed=3))
    b = pipeline.detect(scene.image, prior, Config(seed=3))
    assert np.array_equal(a.decision, b.decision)
    assert np.array_equal(a.combined_probs.p, b.combined_probs.p)


def test_detect_rgb_and_odd_size(prior):
    sc = synth.make_splice_scene(size=200, patch=72, seed=4)
    rgb = np.repeat(sc.image[:190, :, None], 3, axis=2)
    res = pipeline.detect(rgb, prior)
    assert res.decision.shape == (190, 200)
    assert not res.decision[176:].any() and not res.decision[:, 192:].any()


def test_detect_single_cluster_degrades(prior):
    res = pipeline.detect(np.full((128, 128), 0.5), prior)
    assert res.degraded
    assert res.decision.sum() == 0


def test_detect_too_small(prior):
    with pytest.raises(DomainError):
        pipeline.detect(np.zeros((40, 70)), prior)


def test_robustness_sweep_reports_rows(scene, prior):
    rows = pipeline.robustness_sweep(scene.image, scene.mask, prior,
                                     [AttackSpec("jpeg", 100), AttackSpec("scale", 0.1)],
                                     workers=2)
    assert [r[0].label for r in rows] == ["jpeg:100", "scale:0.1"]
    assert rows[0][1] is not None and rows[0][1].f_score > 0.8
    # a 26 px image has no room for four blocks; the sweep carries on
    assert rows[1][1] is None and rows[1][2]


@pytest.mark.slow
def test_runtime_512(prior):
    sc = synth.make_splice_scene(size=512, patch=160, seed=0)
    t = time.perf_counter()
    pipeline.detect(sc.image, prior)
    assert time.perf_counter() - t <= 60
