import numpy as np
import pytest
from hypothesis import given, strategies as st

from sdnsplice import synth
from sdnsplice.errors import DegenerateFitError, DomainError, InsufficientDataError
from sdnsplice.synth import Crf, NoiseParams


def test_identity_crf_is_identity(rng):
    plane = rng.uniform(0, 1, (16, 16))
    np.testing.assert_allclose(synth.apply_crf(Crf.identity(), plane), plane, atol=1e-12)


def test_gamma_crf_value():
    assert synth.apply_crf(Crf.gamma(2.2), np.array(0.25)) == pytest.approx(0.25 ** (1 / 2.2), abs=1e-3)
    assert synth.apply_crf(Crf.gamma(2.2), np.array(0.25)) == pytest.approx(0.5325, abs=1e-3)


def test_saturated_endpoints():
    for g in synth.GAMMA_FAMILY:
        crf = Crf.gamma(g)
        assert crf.saturated
        assert synth.apply_crf(crf, np.array(1.0)) == 1.0
        assert synth.invert_crf(crf, 0.0) == 0.0


def test_invert_crf_examples():
    assert synth.invert_crf(Crf.identity(), 0.7) == pytest.approx(0.7, abs=1e-12)
    assert synth.invert_crf(Crf.gamma(2.2), 0.5325) == pytest.approx(0.25, abs=1e-3)


def test_invert_out_of_range():
    crf = Crf(np.array([0.0, 1.0]), np.array([0.1, 0.9]), "partial")
    with pytest.raises(DomainError):
        synth.invert_crf(crf, 0.95)
    with pytest.raises(DomainError):
        synth.apply_crf(crf, np.array([1.5]))


def test_non_monotone_crf_rejected():
    with pytest.raises(DomainError):
        Crf(np.array([0.0, 0.5, 1.0]), np.array([0.0, 0.6, 0.4]))
    with pytest.raises(DomainError):
        Crf(np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.5, 1.0]))


@given(st.sampled_from(synth.GAMMA_FAMILY), st.floats(0.0, 1.0))
def test_crf_round_trip(g, x):
    crf = Crf.gamma(g)
    assert float(crf(crf.inverse(x))) == pytest.approx(x, abs=1e-6)


def test_crf_file_round_trip(tmp_path):
    crf = Crf.gamma(1.8)
    path = tmp_path / "c.txt"
    crf.save(path)
    assert path.read_text().splitlines()[0] == "crf gamma:1.8 1024"
    back = Crf.from_spec(str(path))
    assert back.name == "gamma:1.8"
    np.testing.assert_allclose(back.intensity, crf.intensity, rtol=1e-8)


def test_crf_file_bad_header(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("nope\n0 0\n1 1\n")
    with pytest.raises(DomainError):
        Crf.load(path)


def test_zero_noise_is_exact(rng):
    clean = rng.uniform(0, 1, (32, 32))
    out = synth.synthesize_noisy(clean, Crf.gamma(2.2), NoiseParams(0, 0), seed=1)
    assert np.array_equal(out, clean)


@pytest.mark.parametrize("ss,sc,expected", [(0.0, 0.04, 0.0016), (0.06, 0.04, 0.0034)])
def test_identity_variance_matches_model(ss, sc, expected):
    clean = np.full((1000, 1000), 0.5)
    out = synth.synthesize_noisy(clean, Crf.identity(), NoiseParams(ss, sc), seed=3)
    assert np.var(out) == pytest.approx(expected, rel=0.05)
    assert NoiseParams(ss, sc).variance(0.5) == pytest.approx(expected)


def test_synthesis_is_seed_deterministic(rng):
    clean = rng.uniform(0, 1, (20, 20))
    a = synth.synthesize_noisy(clean, Crf.gamma(1.4), NoiseParams(0.05, 0.03), seed=9)
    b = synth.synthesize_noisy(clean, Crf.gamma(1.4), NoiseParams(0.05, 0.03), seed=9)
    c = synth.synthesize_noisy(clean, Crf.gamma(1.4), NoiseParams(0.05, 0.03), seed=10)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c)
    assert a.min() >= 0 and a.max() <= 1


def test_negative_sigma_rejected():
    with pytest.raises(DomainError):
        NoiseParams(-0.1, 0.0)


def test_gradient_pattern():
    g = synth.make_gradient_pattern(1024, 4)
    assert g[:, 0].tolist() == [0.0] * 4
    assert g[:, 1023].tolist() == [1.0] * 4
    assert np.allclose(synth.make_gradient_pattern(2, 3), [[0, 1]] * 3)
    synth.check_plane(g)
    with pytest.raises(DomainError):
        synth.make_gradient_pattern(1, 3)


def test_gaussian_fit_on_normal_draws(rng):
    noisy = rng.normal(0.5, 0.03, 100_000)
    report = synth.fit_gaussian_at_intensity(noisy, np.full_like(noisy, 0.5), 0.5)
    assert report.r_square >= 0.99
    assert report.rmse >= 0 and report.r_square <= 1
    assert report.sample_count == 100_000
    assert set(report.as_row()) == {"intensity", "n", "rmse", "r_square"}


def test_gaussian_fit_errors():
    clean = np.full(500, 0.5)
    with pytest.raises(DegenerateFitError):
        synth.fit_gaussian_at_intensity(clean.copy(), clean, 0.5)
    with pytest.raises(InsufficientDataError) as info:
        synth.fit_gaussian_at_intensity(clean[:50], clean[:50], 0.5)
    assert info.value.count == 50


def test_nlf_ground_truth_examples():
    assert np.all(synth.nlf_ground_truth(Crf.gamma(2.2), NoiseParams(0, 0)).values == 0)
    nlf = synth.nlf_ground_truth(Crf.identity(), NoiseParams(0.06, 0.04), [0.5])
    assert nlf.values[0] == pytest.approx(np.sqrt(0.0034), rel=0.03)


def test_nlf_sigma_s_coincide_low_diverge_high():
    crf = Crf.gamma(2.2)
    a = synth.nlf_ground_truth(crf, NoiseParams(0.02, 0.04), [0.05, 0.9])
    b = synth.nlf_ground_truth(crf, NoiseParams(0.10, 0.04), [0.05, 0.9])
    assert a.values[0] == pytest.approx(b.values[0], rel=0.10)
    assert b.values[1] > 1.2 * a.values[1]


@given(st.sampled_from(synth.GAMMA_FAMILY), st.floats(0.0, 0.1), st.floats(0.005, 0.05),
       st.floats(0.005, 0.05))
def test_nlf_monotone_in_sigma_c(g, ss, sc, dsc):
    crf = Crf.gamma(g)
    grid = np.linspace(0.05, 0.95, 10)
    lo = synth.nlf_ground_truth(crf, NoiseParams(ss, sc), grid)
    hi = synth.nlf_ground_truth(crf, NoiseParams(ss, sc + dsc), grid)
    assert np.all(hi.values >= lo.values * (1 - 0.02))


def test_splice_scene_layout():
    sc = synth.make_splice_scene(size=128, patch=40, seed=2, offset=(10, 20))
    assert sc.mask.sum() == 40 * 40
    assert sc.mask[10, 20] and not sc.mask[9, 20]
    np.testing.assert_array_equal(sc.image[~sc.mask], sc.pristine[~sc.mask])
    assert np.allclose(sc.image * 255, np.round(sc.image * 255))
    assert sc.meta["rng"] == synth.RNG_ALGORITHM
    with pytest.raises(DomainError):
        synth.make_splice_scene(size=64, patch=64)
