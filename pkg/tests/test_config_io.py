import numpy as np
import pytest
from PIL import Image

from sdnsplice import config, imageio
from sdnsplice.config import Config
from sdnsplice.errors import DomainError


def test_defaults():
    cfg = Config()
    assert (cfg.block_size, cfg.zeta, cfg.phi, cfg.iter_max) == (32, 50.0, 25.0, 5)
    assert (cfg.lambda_steep, cfg.delta_shift, cfg.p_floor, cfg.sigma_min) == (100, 0.05, 1e-4, 1e-4)


@pytest.mark.parametrize("bad", [{"zeta": -1}, {"block_size": 15}, {"iter_max": 0},
                                 {"delta_shift": 1.5}, {"seed": -2}])
def test_validation(bad):
    with pytest.raises(DomainError):
        Config().updated(**bad)


def test_unknown_key(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("zeta = 40\nfoo = 1\n")
    with pytest.raises(DomainError):
        config.load_config(path)


def test_precedence(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("zeta = 40.0\nphi = 30\n")
    cfg = config.resolve(path, zeta=60.0, phi=None)
    assert cfg.zeta == 60.0 and cfg.phi == 30.0 and cfg.block_size == 32


def test_toml_round_trip(tmp_path):
    cfg = Config(zeta=33.5, seed=7, prior_path="p.json")
    path = tmp_path / "c.toml"
    path.write_text(config.to_toml(cfg))
    assert config.load_config(path) == cfg


def test_read_8_and_16_bit(tmp_path):
    a8 = np.array([[0, 128], [255, 64]], dtype=np.uint8)
    Image.fromarray(a8).save(tmp_path / "a.png")
    np.testing.assert_allclose(imageio.read_image(tmp_path / "a.png"), a8 / 255)
    a16 = np.array([[0, 40000], [65535, 1]], dtype=np.uint16)
    Image.fromarray(a16).save(tmp_path / "b.png")
    np.testing.assert_allclose(imageio.read_image(tmp_path / "b.png"), a16 / 65535)
    Image.fromarray(a8).save(tmp_path / "c.pgm")
    np.testing.assert_allclose(imageio.read_image(tmp_path / "c.pgm"), a8 / 255)
    rgb = np.dstack([a8, a8, a8])
    Image.fromarray(rgb).save(tmp_path / "d.ppm")
    assert imageio.read_image(tmp_path / "d.ppm").shape == (2, 2, 3)


def test_write_round_trip(tmp_path):
    img = np.linspace(0, 1, 12).reshape(3, 4)
    imageio.write_image(tmp_path / "x.png", img, bits=16)
    np.testing.assert_allclose(imageio.read_image(tmp_path / "x.png"), img, atol=1 / 65535)
    mask = img > 0.5
    imageio.write_mask(tmp_path / "m.png", mask)
    assert np.array_equal(imageio.read_mask(tmp_path / "m.png"), mask)


def test_read_missing(tmp_path):
    with pytest.raises(DomainError):
        imageio.read_image(tmp_path / "nope.png")
