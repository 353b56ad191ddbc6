"""Blind splicing localisation end to end, plus scoring and robustness sweeps."""

import io
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from . import blocks, mrf, nlf, tamper
from .config import Config
from .errors import DomainError, InsufficientSmoothBlocksError, ShapeError, SingleClusterError
from .imageio import to_uint8

log = logging.getLogger(__name__)

ATTACK_KINDS = ("jpeg", "scale")


@dataclass
class DetectionResult:
    decision: np.ndarray
    combined_probs: tamper.TamperMap
    nlf0: nlf.Nlf
    nlf1: nlf.Nlf | None
    params: mrf.MrfParams
    labels: mrf.LabelField
    maps: dict = field(default_factory=dict)
    samples: blocks.NoiseSampleSet | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def degraded(self):
        return bool(self.diagnostics.get("degraded", False))

    @property
    def warnings(self):
        return list(self.diagnostics.get("warnings", []))


@dataclass(frozen=True)
class Metrics:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self):
        return self.tp + self.tn + self.fp + self.fn

    @property
    def precision(self):
        d = self.tp + self.fp
        return self.tp / d if d else 0.0

    @property
    def recall(self):
        d = self.tp + self.fn
        return self.tp / d if d else 0.0

    @property
    def accuracy(self):
        return (self.tp + self.tn) / self.total if self.total else 0.0

    @property
    def f_score(self):
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    @property
    def fp_rate(self):
        """Share of all pixels that are false positives."""
        return self.fp / self.total if self.total else 0.0

    def as_dict(self):
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn,
                "precision": self.precision, "recall": self.recall,
                "accuracy": self.accuracy, "f_score": self.f_score}


@dataclass(frozen=True)
class AttackSpec:
    kind: str
    factor: float

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise DomainError(f"unknown attack {self.kind!r}")
        if self.kind == "jpeg" and not (1 <= self.factor <= 100 and float(self.factor).is_integer()):
            raise DomainError("JPEG quality must be an integer in [1, 100]")
        if self.kind == "scale" and not 0 < self.factor <= 1:
            raise DomainError("scale factor must lie in (0, 1]")

    @property
    def label(self):
        return f"{self.kind}:{self.factor:g}"


def _half_labels(split_labels, grid, half):
    """Replicate coarse-grid labels onto the grid of half-size blocks."""
    parent_r = np.minimum(np.arange(half.rows) // 2, grid.rows - 1)
    parent_c = np.minimum(np.arange(half.cols) // 2, grid.cols - 1)
    return split_labels[np.ix_(parent_r, parent_c)]


def _smooth_within(samples, ratio):
    return blocks.select_smooth(blocks.mark_smooth(samples, ratio=ratio))


def _separation(samples, curve):
    """Median log ratio of measured noise to the benchmark curve."""
    ref = np.maximum(curve.at(samples.mean), 1e-12)
    return float(np.median(np.log(np.maximum(samples.std, 1e-12) / ref)))


def detect(image, prior, config=None):
    """Localise spliced regions from inconsistencies in block noise levels.

    Parameters
    ----------
    image : ndarray
        Grey ``(H, W)`` or RGB ``(H, W, 3)`` image in [0, 1]. Noise is
        analysed on the luma channel; colour only feeds the pairwise weights.
    prior : NlfPrior
    config : Config, optional

    Returns
    -------
    DetectionResult
        ``decision`` has the input's height and width.
    """
    cfg = config or Config()
    t_start = time.perf_counter()
    timings = {}
    warn = []
    image = np.asarray(image, dtype=float)
    gray = blocks.luminance(image)
    B = cfg.block_size
    grid = blocks.decompose(gray, B)
    if grid.count < 4:
        raise DomainError(f"image needs at least 4 blocks of {B}x{B}; got {grid.count}")

    coarse = blocks.estimate_block_noise(gray, grid)
    timings["coarse_noise"] = time.perf_counter() - t_start

    degraded = False
    try:
        split = tamper.kmeans_split(coarse, seed=cfg.seed)
        split_labels = coarse.to_map(split.labels, fill=0).astype(np.uint8)
        area = split.area_fraction
    except SingleClusterError:
        split = None
        split_labels = np.zeros(grid.shape, dtype=np.uint8)
        area = 0.0
        degraded = True
        warn.append("noise variances form a single cluster; no suspicious region")

    fit0 = fit1 = None
    separation = None
    if split is not None:
        orig = _smooth_within(coarse.subset(split.labels == 0), cfg.smooth_ratio)
        if len(orig) == 0:
            raise InsufficientSmoothBlocksError("original", int(np.sum(split.labels == 0)))
        fit0 = nlf.fit_nlf(orig, prior, cfg.sigma_min)
        susp = _smooth_within(coarse.subset(split.labels == 1), cfg.smooth_ratio)
        if len(susp) == 0:
            degraded = True
            warn.append("suspicious cluster has no smooth blocks; using the distance map only")
        else:
            separation = _separation(susp, fit0.nlf)
            if abs(separation) < np.log1p(cfg.split_gap):
                degraded = True
                warn.append("clusters share one noise level function; treating image as unsplit")
            else:
                fit1 = nlf.fit_nlf(susp, prior, cfg.sigma_min)
    if degraded:
        fit0 = nlf.fit_nlf(_smooth_within(coarse, cfg.smooth_ratio), prior, cfg.sigma_min)
        fit1 = None
        split_labels = np.zeros(grid.shape, dtype=np.uint8)
    timings["nlf_fit"] = time.perf_counter() - t_start

    half = blocks.decompose(gray, B // 2)
    fine = blocks.estimate_block_noise(gray, half)
    comb_cfg = tamper.CombinationConfig(cfg.zeta, cfg.lambda_steep, cfg.delta_shift)
    ctx = nlf.LikelihoodContext.for_block(B // 2)
    j1 = tamper.distance_tamper_map(fine, fit0.nlf, comb_cfg)
    maps = {"distance": j1}
    if fit1 is not None:
        j2 = tamper.bayes_tamper_map(fine, fit0.nlf, fit1.nlf, ctx, sigma_min=cfg.sigma_min)
        maps["bayes"] = j2
        combined = tamper.combine_maps(j1, j2, area, comb_cfg)
        init = _half_labels(split_labels, grid, half)
    else:
        combined = tamper.TamperMap(half, j1.p, "combined")
        init = (combined.p > 0.5).astype(np.uint8)
    maps["combined"] = combined
    timings["tamper_maps"] = time.perf_counter() - t_start

    est = mrf.estimate_params(combined, image, mrf.LabelField(half, init), cfg.iter_max,
                              cfg.phi, p_floor=cfg.p_floor)
    timings["mrf"] = time.perf_counter() - t_start
    for w in warn:
        log.warning(w)

    diagnostics = {
        "degraded": degraded,
        "warnings": warn,
        "area_fraction": area,
        "beta_p": float(comb_cfg.weight(area)) if fit1 is not None else 0.0,
        "separation": separation,
        "smooth_blocks": int(np.sum(coarse.smooth)),
        "nlf_fit": {"nlf0": {"converged": fit0.converged, "iterations": fit0.iterations},
                    "nlf1": (None if fit1 is None else
                             {"converged": fit1.converged, "iterations": fit1.iterations})},
        "mrf_converged": est.converged,
        "mrf_iterations": est.iterations,
        "energy_trace": est.trace,
        "timings": timings,
    }
    return DetectionResult(
        decision=est.labels.to_pixels(),
        combined_probs=combined,
        nlf0=fit0.nlf,
        nlf1=None if fit1 is None else fit1.nlf,
        params=est.params,
        labels=est.labels,
        maps=maps,
        samples=coarse,
        diagnostics=diagnostics,
    )


def score(decision, truth):
    d = np.asarray(decision).astype(bool)
    t = np.asarray(truth).astype(bool)
    if d.shape != t.shape:
        raise ShapeError(f"decision {d.shape} and truth {t.shape} differ in shape")
    tp = int(np.sum(d & t))
    fp = int(np.sum(d & ~t))
    fn = int(np.sum(~d & t))
    return Metrics(tp, int(d.size) - tp - fp - fn, fp, fn)


DECISION_COLORS = {
    "tp": (255, 255, 255),
    "fp": (0, 255, 255),
    "fn": (255, 0, 0),
    "tn": (0, 0, 0),
}


def render_decision_map(decision, truth):
    """RGB map: white true positive, cyan false positive, red miss, black true negative."""
    d = np.asarray(decision).astype(bool)
    t = np.asarray(truth).astype(bool)
    if d.shape != t.shape:
        raise ShapeError("decision and truth differ in shape")
    out = np.zeros(d.shape + (3,), dtype=np.uint8)
    out[d & t] = DECISION_COLORS["tp"]
    out[d & ~t] = DECISION_COLORS["fp"]
    out[~d & t] = DECISION_COLORS["fn"]
    return out


def binarize_soft(pred):
    """Two-means threshold for soft heat maps; binary inputs pass through."""
    pred = np.asarray(pred, dtype=float)
    values = np.unique(pred)
    if values.size <= 2:
        return pred >= values.max() if values.max() > 0 else np.zeros(pred.shape, dtype=bool)
    _, _, thr = tamper.two_means_1d(pred)
    return pred > thr


def apply_attack(image, truth, attack):
    """Return the attacked 8-bit image in [0, 1] and its matching mask."""
    img8 = to_uint8(image)
    pil = Image.fromarray(img8)
    if attack.kind == "jpeg":
        buf = io.BytesIO()
        pil.save(buf, format="JPEG", quality=int(attack.factor), subsampling=0)
        buf.seek(0)
        with Image.open(buf) as dec:
            out = np.asarray(dec.convert(pil.mode), dtype=float) / 255.0
        return out, np.asarray(truth, dtype=bool)
    h, w = img8.shape[:2]
    size = (max(1, int(round(w * attack.factor))), max(1, int(round(h * attack.factor))))
    if size == (w, h):
        return img8.astype(float) / 255.0, np.asarray(truth, dtype=bool)
    out = np.asarray(pil.resize(size, Image.Resampling.BICUBIC), dtype=float) / 255.0
    mask = Image.fromarray(np.asarray(truth, dtype=np.uint8) * 255)
    mask = np.asarray(mask.resize(size, Image.Resampling.NEAREST)) > 0
    return out, mask


def _run_attack(image, truth, prior, attack, config):
    try:
        attacked, mask = apply_attack(image, truth, attack)
        result = detect(attacked, prior, config)
        return attack, score(result.decision, mask), None
    except Exception as exc:  # noqa: BLE001 - surfaced in the table
        log.warning("attack %s failed: %s", attack.label, exc)
        return attack, None, str(exc)


def robustness_sweep(image, truth, prior, attacks, config=None, workers=1):
    """Score ``detect`` on every attacked version of ``image``.

    Returns a list of ``(AttackSpec, Metrics or None, error or None)`` in
    the order of ``attacks``; a failing attack is reported in its row and
    the sweep carries on.
    """
    def run(attack):
        return _run_attack(image, truth, prior, attack, config)

    if workers <= 1:
        return [run(a) for a in attacks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, attacks))


def heatmap_image(tmap):
    """8-bit grey heat map at pixel resolution (p * 255, nearest)."""
    return to_uint8(tmap.grid.upsample(tmap.p, fill=0.0))
