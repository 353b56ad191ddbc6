import json
from pathlib import Path

import numpy as np
import pytest

from sdnsplice import __version__, cli, imageio

SNAPSHOTS = Path(__file__).parent / "snapshots"
HELP_CASES = {"help": [], "help_detect": ["detect"], "help_synth_splice": ["synth", "splice"],
              "help_prior_build": ["prior", "build"], "help_eval": ["eval"],
              "help_robustness": ["robustness"]}


@pytest.fixture
def cols80(monkeypatch):
    monkeypatch.setenv("COLUMNS", "80")


@pytest.mark.parametrize("name", sorted(HELP_CASES))
def test_help_snapshot(name, cols80, capsys):
    assert cli.main(HELP_CASES[name] + ["--help"]) == 0
    assert capsys.readouterr().out == (SNAPSHOTS / f"{name}.txt").read_text()


def _subparsers(parser):
    for action in parser._actions:
        if action.__class__.__name__ == "_SubParsersAction":
            for sub in action.choices.values():
                yield sub
                yield from _subparsers(sub)


def test_help_lists_every_flag(cols80):
    parser = cli.build_parser()
    for p in [parser, *_subparsers(parser)]:
        text = p.format_help()
        for action in p._actions:
            for opt in action.option_strings:
                assert opt in text


def test_version(capsys):
    assert cli.main(["--version"]) == 0
    assert capsys.readouterr().out.strip() == f"sdnsplice {__version__}"


def test_unknown_command_and_flag(capsys):
    assert cli.main(["bogus"]) == 2
    assert cli.main(["detect", "x.png", "--no-such-flag"]) == 2
    assert "usage" in capsys.readouterr().err


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("scene")
    assert cli.main(["synth", "splice", "--seed", "5", "--out", str(out)]) == 0
    return out


def test_synth_outputs(scene_dir):
    img = imageio.read_image(scene_dir / "image.png")
    mask = imageio.read_mask(scene_dir / "mask.png")
    assert img.shape == mask.shape == (256, 256)
    assert mask.sum() == 96 * 96
    assert json.loads((scene_dir / "scene.json").read_text())["seed"] == 5


def test_detect_outputs(scene_dir, tmp_path):
    out = tmp_path / "d"
    code = cli.main(["detect", str(scene_dir / "image.png"), "--out", str(out),
                     "--dump-prob", "bayes", "--dump-prob", "distance",
                     "--dump-samples", "--dump-energy"])
    assert code == 0
    for name in ("decision.png", "heatmap.png", "result.json", "config.toml", "prob_bayes.png",
                 "prob_distance.json", "samples.csv", "energy.json"):
        assert (out / name).is_file()
    result = json.loads((out / "result.json").read_text())
    assert result["config"]["zeta"] == 50.0
    assert 1 <= len(result["energy_trace"]) <= 5
    assert imageio.read_mask(out / "decision.png").shape == (256, 256)


def test_detect_pristine_exit_code(scene_dir, tmp_path, capsys):
    code = cli.main(["--log-level", "info", "detect", str(scene_dir / "pristine.png"),
                     "--out", str(tmp_path)])
    assert code == 3
    lines = [ln for ln in capsys.readouterr().err.splitlines() if ln.strip()]
    assert lines and all(json.loads(ln)["level"] for ln in lines)


def test_detect_bad_zeta(scene_dir, tmp_path):
    assert cli.main(["detect", str(scene_dir / "image.png"), "--zeta", "-1",
                     "--out", str(tmp_path)]) == 2


def test_detect_missing_image(tmp_path):
    assert cli.main(["detect", str(tmp_path / "none.png"), "--out", str(tmp_path)]) == 2


def test_config_file_and_round_trip(scene_dir, tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("zeta = 40.0\niter_max = 3\n")
    a = tmp_path / "a"
    assert cli.main(["--config", str(cfg), "detect", str(scene_dir / "image.png"),
                     "--out", str(a), "--phi", "30"]) == 0
    resolved = json.loads((a / "result.json").read_text())["config"]
    assert (resolved["zeta"], resolved["iter_max"], resolved["phi"]) == (40.0, 3, 30.0)
    b = tmp_path / "b"
    assert cli.main(["--config", str(a / "config.toml"), "detect", str(scene_dir / "image.png"),
                     "--out", str(b)]) == 0
    assert (a / "result.json").read_bytes() == (b / "result.json").read_bytes()
    bad = tmp_path / "bad.toml"
    bad.write_text("colour = 1\n")
    assert cli.main(["--config", str(bad), "detect", str(scene_dir / "image.png")]) == 2


def test_eval(scene_dir, tmp_path):
    pred, truth = tmp_path / "pred", tmp_path / "truth"
    pred.mkdir()
    truth.mkdir()
    mask = imageio.read_mask(scene_dir / "mask.png")
    imageio.write_mask(pred / "a.png", mask)
    imageio.write_mask(truth / "a.png", mask)
    soft = np.where(mask, 0.8, 0.1) + 0.01 * np.random.default_rng(0).uniform(size=mask.shape)
    imageio.write_image(pred / "b.png", soft)
    imageio.write_mask(truth / "b.png", mask)
    assert cli.main(["eval", str(pred), str(truth), "--out", str(tmp_path / "ev")]) == 0
    summary = json.loads((tmp_path / "ev" / "summary.json").read_text())
    assert summary["images"] == 2
    assert summary["macro"]["f_score"] == 1.0
    assert (tmp_path / "ev" / "metrics.csv").read_text().startswith("image,tp,tn,fp,fn")


def test_eval_no_pairs(tmp_path):
    (tmp_path / "p").mkdir()
    (tmp_path / "t").mkdir()
    assert cli.main(["eval", str(tmp_path / "p"), str(tmp_path / "t")]) == 2


def test_robustness(scene_dir, tmp_path):
    code = cli.main(["--threads", "2", "robustness", str(scene_dir / "image.png"),
                     str(scene_dir / "mask.png"), "--jpeg", "90", "--scale", "0.85",
                     "--out", str(tmp_path)])
    assert code == 0
    rows = (tmp_path / "sweep.csv").read_text().splitlines()
    assert rows[0].startswith("attack,factor,tp")
    assert [r.split(",")[:2] for r in rows[1:]] == [["jpeg", "90"], ["scale", "0.85"]]


def test_prior_build(tmp_path):
    out = tmp_path / "p.json"
    code = cli.main(["prior", "build", "--crf", "identity", "--sigma-s", "0,0.05",
                     "--sigma-c", "0.02,0.04,0.06,0.08,0.1,0.12,0.14,0.16,0.18,0.2",
                     "--components", "3", "--out", str(out)])
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["m"] == 3 and payload["metadata"]["training_curves"] == 20
    assert cli.main(["prior", "build", "--crf", "identity", "--sigma-s", "0",
                     "--sigma-c", "0.02", "--out", str(out)]) == 2
