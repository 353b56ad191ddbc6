"""Command-line entry point: ``sdnsplice <command> ...``."""

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, config as config_mod, imageio, pipeline, prior as prior_mod, synth
from .errors import SdnError

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DEGRADED = 3

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO,
              "debug": logging.DEBUG}
IMAGE_SUFFIXES = (".png", ".pgm", ".ppm", ".pnm", ".tif", ".tiff", ".bmp", ".jpg", ".jpeg")

log = logging.getLogger("sdnsplice")


class JsonLineFormatter(logging.Formatter):
    def format(self, record):
        entry = {"level": record.levelname.lower(), "logger": record.name,
                 "message": record.getMessage()}
        if record.exc_info:
            entry["exception"] = self.formatException(record.exc_info)
        return json.dumps(entry)


def setup_logging(level):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonLineFormatter())
    root = logging.getLogger("sdnsplice")
    root.handlers[:] = [handler]
    root.setLevel(LOG_LEVELS[level])
    root.propagate = False


def fmt(value):
    """Round every float to 9 significant digits for stable output files."""
    if isinstance(value, dict):
        return {k: fmt(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [fmt(v) for v in value]
    if isinstance(value, np.ndarray):
        return fmt(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return float(f"{v:.9g}") if np.isfinite(v) else str(v)
    return value


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(fmt(payload), fh, indent=1, sort_keys=True)
        fh.write("\n")


def float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def sigma_pair(text):
    values = float_list(text)
    if len(values) != 2:
        raise argparse.ArgumentTypeError("expected two values 'sigma_s,sigma_c'")
    return values


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sdnsplice",
        description="Blind splicing localisation from signal-dependent noise.")
    parser.add_argument("--version", action="version", version=f"sdnsplice {__version__}")
    parser.add_argument("--config", metavar="FILE", help="TOML file with detection settings")
    parser.add_argument("--log-level", choices=list(LOG_LEVELS), default="warn",
                        help="stderr verbosity; one JSON object per line (default: warn)")
    parser.add_argument("--threads", type=int, default=None, metavar="N",
                        help="worker threads for sweeps (default: logical cores)")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p_synth = sub.add_parser("synth", help="generate synthetic test data")
    synth_sub = p_synth.add_subparsers(dest="synth_command", metavar="KIND")
    synth_sub.required = True
    sp = synth_sub.add_parser("splice", help="spliced image with mask and pristine twin")
    sp.add_argument("--host-sigmas", type=sigma_pair, default=[0.02, 0.02], metavar="S,C")
    sp.add_argument("--patch-sigmas", type=sigma_pair, default=[0.08, 0.06], metavar="S,C")
    sp.add_argument("--crf", default="identity", help="identity, gamma:G or a CRF file")
    sp.add_argument("--patch-crf", default=None, help="CRF of the alien patch (default: --crf)")
    sp.add_argument("--size", type=int, default=256, help="image side (default: 256)")
    sp.add_argument("--patch", type=int, default=96, help="alien patch side (default: 96)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=".", help="output directory (default: .)")

    p_prior = sub.add_parser("prior", help="noise level function prior")
    prior_sub = p_prior.add_subparsers(dest="prior_command", metavar="ACTION")
    prior_sub.required = True
    pb = prior_sub.add_parser("build", help="train a prior from synthetic curves")
    pb.add_argument("--crf", action="append", default=None,
                    help="CRF spec, repeatable (default: gamma family)")
    pb.add_argument("--sigma-s", type=float_list, default=list(prior_mod.DEFAULT_SIGMA_S),
                    metavar="LIST", help="irradiance-dependent noise grid")
    pb.add_argument("--sigma-c", type=float_list, default=list(prior_mod.DEFAULT_SIGMA_C),
                    metavar="LIST", help="independent noise grid")
    pb.add_argument("--components", type=int, default=prior_mod.DEFAULT_M, metavar="M",
                    help="principal components kept (default: 6)")
    pb.add_argument("--mc-draws", type=int, default=10_000, metavar="N",
                    help="Monte-Carlo draws per curve (default: 10000)")
    pb.add_argument("--seed", type=int, default=0)
    pb.add_argument("--out", required=True, help="output prior file")

    pd = sub.add_parser("detect", help="localise spliced regions in one image")
    pd.add_argument("image", help="grey or RGB image (PNG, PPM/PGM, ...)")
    pd.add_argument("--prior", default=None, help="prior file (default: bundled prior)")
    pd.add_argument("--out", default="out", help="output directory (default: out)")
    pd.add_argument("--seed", type=int, default=None, help="run seed (default: 0)")
    pd.add_argument("--block", type=int, default=None, help="block size B (default: 32)")
    pd.add_argument("--zeta", type=float, default=None,
                    help="distance-map gain (default: 50)")
    pd.add_argument("--phi", type=float, default=None,
                    help="colour similarity scale, 8-bit units (default: 25)")
    pd.add_argument("--iter-max", type=int, default=None,
                    help="parameter/labelling rounds (default: 5)")
    pd.add_argument("--dump-prob", action="append", choices=["bayes", "distance", "combined"],
                    default=None, help="write a probability map, repeatable")
    pd.add_argument("--dump-samples", action="store_true", help="write samples.csv")
    pd.add_argument("--dump-energy", action="store_true", help="write energy.json")

    pe = sub.add_parser("eval", help="score predictions against ground-truth masks")
    pe.add_argument("pred_dir", help="binary or soft predictions, paired with masks by stem")
    pe.add_argument("truth_dir", help="ground-truth masks, non-zero = tampered")
    pe.add_argument("--out", default=".", help="output directory (default: .)")

    pr = sub.add_parser("robustness", help="JPEG and rescaling sweep")
    pr.add_argument("image")
    pr.add_argument("mask", help="ground-truth mask, non-zero = tampered")
    pr.add_argument("--prior", default=None, help="prior file (default: bundled prior)")
    pr.add_argument("--jpeg", type=float_list, default=[85, 90, 95, 100], metavar="Q,...",
                    help="JPEG qualities (default: 85,90,95,100)")
    pr.add_argument("--scale", type=float_list, default=[0.5, 0.65, 0.75, 0.85, 0.95],
                    metavar="F,...", help="scale factors (default: 0.5,0.65,0.75,0.85,0.95)")
    pr.add_argument("--out", default=".", help="output directory (default: .)")
    return parser


def _config(args):
    overrides = {
        "seed": getattr(args, "seed", None),
        "block_size": getattr(args, "block", None),
        "zeta": getattr(args, "zeta", None),
        "phi": getattr(args, "phi", None),
        "iter_max": getattr(args, "iter_max", None),
        "prior_path": getattr(args, "prior", None),
    }
    return config_mod.resolve(args.config, **overrides)


def _prior(cfg):
    if cfg.prior_path:
        return prior_mod.load_prior(cfg.prior_path)
    return prior_mod.default_prior()


def cmd_synth(args):
    host = synth.NoiseParams(*args.host_sigmas)
    alien = synth.NoiseParams(*args.patch_sigmas)
    crf = synth.Crf.from_spec(args.crf)
    alien_crf = synth.Crf.from_spec(args.patch_crf) if args.patch_crf else None
    scene = synth.make_splice_scene(args.size, args.patch, host, alien, crf, alien_crf, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    imageio.write_image(out / "image.png", scene.image)
    imageio.write_image(out / "pristine.png", scene.pristine)
    imageio.write_mask(out / "mask.png", scene.mask)
    write_json(out / "scene.json", scene.meta)
    return EXIT_OK


def cmd_prior(args):
    crfs = [synth.Crf.from_spec(c) for c in (args.crf or [])] or \
        [synth.Crf.gamma(g) for g in synth.GAMMA_FAMILY]
    pr = prior_mod.build_prior(crfs, args.sigma_s, args.sigma_c, args.components,
                               args.mc_draws, args.seed)
    prior_mod.save_prior(pr, args.out)
    log.info("prior with %d components written to %s", pr.m, args.out)
    return EXIT_OK


def cmd_detect(args):
    cfg = _config(args)
    pr = _prior(cfg)
    image = imageio.read_image(args.image)
    result = pipeline.detect(image, pr, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    imageio.write_mask(out / "decision.png", result.decision)
    imageio.write_image(out / "heatmap.png", pipeline.heatmap_image(result.combined_probs))
    diag = {k: v for k, v in result.diagnostics.items() if k not in ("timings", "energy_trace")}
    payload = {
        "version": __version__,
        "image": Path(args.image).name,
        "height": int(image.shape[0]),
        "width": int(image.shape[1]),
        "config": cfg.as_dict(),
        "prior": {"m": pr.m, "metadata": pr.metadata},
        "params": result.params.as_dict(),
        "tampered_fraction": float(np.mean(result.decision)),
        "nlf0": result.nlf0.values,
        "nlf1": None if result.nlf1 is None else result.nlf1.values,
        "diagnostics": diag,
        "energy_trace": result.diagnostics["energy_trace"],
    }
    write_json(out / "result.json", payload)
    (out / "config.toml").write_text(config_mod.to_toml(cfg))
    for kind in args.dump_prob or []:
        tmap = result.maps.get(kind)
        if tmap is None:
            log.warning("no %s map on the degraded path", kind)
            continue
        imageio.write_image(out / f"prob_{kind}.png", pipeline.heatmap_image(tmap))
        write_json(out / f"prob_{kind}.json", {"kind": kind, "block_size": tmap.grid.block_size,
                                               "p": tmap.p})
    if args.dump_samples:
        result.samples.to_csv(out / "samples.csv")
    if args.dump_energy:
        write_json(out / "energy.json", result.diagnostics["energy_trace"])
    for w in result.warnings:
        log.info("degraded: %s", w)
    return EXIT_DEGRADED if result.degraded else EXIT_OK


def _files_by_stem(directory):
    d = Path(directory)
    if not d.is_dir():
        raise SdnError(f"{directory} is not a directory")
    return {p.stem: p for p in sorted(d.iterdir()) if p.suffix.lower() in IMAGE_SUFFIXES}


def cmd_eval(args):
    preds = _files_by_stem(args.pred_dir)
    truths = _files_by_stem(args.truth_dir)
    stems = sorted(set(preds) & set(truths))
    if not stems:
        raise SdnError("no prediction/mask pairs share a file stem")
    for stem in sorted(set(preds) ^ set(truths)):
        log.warning("unpaired file %s skipped", stem)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for stem in stems:
        pred = imageio.read_image(preds[stem])
        if pred.ndim == 3:
            pred = pred.mean(axis=2)
        m = pipeline.score(pipeline.binarize_soft(pred), imageio.read_mask(truths[stem]))
        rows.append({"image": stem, **m.as_dict()})
    keys = ["precision", "recall", "accuracy", "f_score"]
    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image", "tp", "tn", "fp", "fn"] + keys)
        for r in rows:
            writer.writerow([r["image"], r["tp"], r["tn"], r["fp"], r["fn"]]
                            + [f"{r[k]:.9g}" for k in keys])
    macro = {k: float(np.mean([r[k] for r in rows])) for k in keys}
    write_json(out / "summary.json", {"images": len(rows), "macro": macro, "per_image": rows})
    return EXIT_OK


def cmd_robustness(args):
    cfg = _config(args)
    pr = _prior(cfg)
    image = imageio.read_image(args.image)
    truth = imageio.read_mask(args.mask)
    if truth.shape != image.shape[:2]:
        raise SdnError("mask and image differ in size")
    attacks = [pipeline.AttackSpec("jpeg", q) for q in args.jpeg]
    attacks += [pipeline.AttackSpec("scale", s) for s in args.scale]
    workers = args.threads or os.cpu_count() or 1
    rows = pipeline.robustness_sweep(image, truth, pr, attacks, cfg, workers=workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    keys = ["precision", "recall", "accuracy", "f_score"]
    table = []
    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["attack", "factor", "tp", "tn", "fp", "fn"] + keys + ["error"])
        for attack, m, err in rows:
            if m is None:
                writer.writerow([attack.kind, f"{attack.factor:g}"] + [""] * 8 + [err])
                table.append({"attack": attack.kind, "factor": attack.factor, "error": err})
                continue
            d = m.as_dict()
            writer.writerow([attack.kind, f"{attack.factor:g}", m.tp, m.tn, m.fp, m.fn]
                            + [f"{d[k]:.9g}" for k in keys] + [""])
            table.append({"attack": attack.kind, "factor": attack.factor, **d})
    write_json(out / "sweep.json", {"config": cfg.as_dict(), "rows": table})
    return EXIT_DEGRADED if any(err for _, _, err in rows) else EXIT_OK


COMMANDS = {"synth": cmd_synth, "prior": cmd_prior, "detect": cmd_detect, "eval": cmd_eval,
            "robustness": cmd_robustness}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    setup_logging(args.log_level)
    if args.threads is not None and args.threads < 1:
        log.error("--threads must be >= 1")
        return EXIT_INPUT
    try:
        return COMMANDS[args.command](args)
    except (SdnError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
