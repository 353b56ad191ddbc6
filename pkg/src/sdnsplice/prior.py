"""Principal-component prior over noise level functions.

Training curves are Monte-Carlo ground-truth NLFs of the synthesis model
over a grid of CRFs and noise parameters. The prior is stored as JSON.
"""

import itertools
import json
from functools import lru_cache
from importlib import resources

import numpy as np

from . import synth
from .errors import DomainError, RankError
from .nlf import Nlf, NlfPrior, default_grid

DEFAULT_M = 6
DEFAULT_SIGMA_S = (0.0, 0.02, 0.04, 0.06, 0.08, 0.1)
DEFAULT_SIGMA_C = (0.025, 0.03, 0.04, 0.06, 0.08, 0.1)
MIN_TRAINING_CURVES = 20


def training_curves(crfs, sigma_s_grid, sigma_c_grid, mc_draws=10_000, seed=0):
    grid = default_grid()
    curves = []
    for crf, ss, sc in itertools.product(crfs, sigma_s_grid, sigma_c_grid):
        nlf = synth.nlf_ground_truth(crf, synth.NoiseParams(ss, sc), grid, mc_draws, seed)
        curves.append(nlf.values)
    return np.array(curves)


def prior_from_curves(curves, m=DEFAULT_M, metadata=None):
    curves = np.asarray(curves, dtype=float)
    if curves.shape[0] < 2:
        raise RankError("need at least two training curves")
    if m > min(curves.shape):
        raise DomainError(f"m={m} exceeds the number of curves or grid points")
    mean = curves.mean(axis=0)
    centered = curves - mean
    _, sv, vt = np.linalg.svd(centered, full_matrices=False)
    eig = sv ** 2 / (curves.shape[0] - 1)
    scale = max(float(np.max(np.abs(curves))), 1e-300) ** 2
    if eig.size == 0 or eig[0] <= 1e-20 * scale:
        raise RankError("training curves are identical; covariance has rank zero")
    if eig[m - 1] <= 1e-20 * scale:
        rank = int(np.sum(eig > 1e-20 * scale))
        raise RankError(f"covariance rank {rank} is below the requested m={m}")
    basis = vt[:m].T
    # fix the sign so that each component has a positive sum (reproducible files)
    basis = basis * np.where(basis.sum(axis=0) < 0, -1.0, 1.0)
    meta = dict(metadata or {})
    meta["explained_variance"] = float(eig[:m].sum() / eig.sum())
    meta["training_curves"] = int(curves.shape[0])
    return NlfPrior(Nlf(np.maximum(mean, 0.0)), basis, eig[:m], meta)


def build_prior(crfs, sigma_s_grid=DEFAULT_SIGMA_S, sigma_c_grid=DEFAULT_SIGMA_C,
                m=DEFAULT_M, mc_draws=10_000, seed=0):
    combos = len(crfs) * len(sigma_s_grid) * len(sigma_c_grid)
    if combos < MIN_TRAINING_CURVES:
        raise DomainError(f"{combos} training combinations; at least {MIN_TRAINING_CURVES} required")
    if m > combos:
        raise DomainError("m exceeds the number of training combinations")
    curves = training_curves(crfs, sigma_s_grid, sigma_c_grid, mc_draws, seed)
    meta = {
        "crfs": [c.name for c in crfs],
        "sigma_s_grid": [float(v) for v in sigma_s_grid],
        "sigma_c_grid": [float(v) for v in sigma_c_grid],
        "mc_draws": int(mc_draws),
        "seed": int(seed),
        "rng": synth.RNG_ALGORITHM,
    }
    return prior_from_curves(curves, m, meta)


def build_default_prior():
    """Prior over the parametric gamma CRF family with the default noise grids."""
    return build_prior([synth.Crf.gamma(g) for g in synth.GAMMA_FAMILY])


@lru_cache(maxsize=1)
def default_prior():
    """Bundled copy of :func:`build_default_prior` (rebuilt if the file is missing)."""
    ref = resources.files("sdnsplice") / "data" / "default_prior.json"
    if ref.is_file():
        with resources.as_file(ref) as path:
            return load_prior(path)
    return build_default_prior()


def _round(values):
    return [float(f"{v:.17g}") for v in np.ravel(values)]


def save_prior(prior, path):
    payload = {
        "format": "sdnsplice-nlf-prior",
        "version": 1,
        "d": len(prior.mean),
        "m": prior.m,
        "mean": _round(prior.mean.values),
        "basis": [_round(row) for row in prior.basis],
        "eigenvalues": _round(prior.eigenvalues),
        "metadata": prior.metadata,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)


def load_prior(path):
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DomainError(f"cannot read prior file {path}: {exc}") from exc
    if payload.get("format") != "sdnsplice-nlf-prior":
        raise DomainError(f"{path} is not an NLF prior file")
    return NlfPrior(Nlf(np.array(payload["mean"])), np.array(payload["basis"]),
                    np.array(payload["eigenvalues"]), payload.get("metadata", {}))
