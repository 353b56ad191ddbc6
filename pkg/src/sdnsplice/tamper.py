"""Per-block tamper probabilities from two noise level functions."""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DomainError, ShapeError, SingleClusterError
from .nlf import SIGMA_MIN, chi2_log_likelihood, nlf_likelihood

MAP_KINDS = ("bayes", "distance", "combined")


@dataclass
class ClusterSplit:
    labels: np.ndarray
    centroids: tuple
    threshold: float

    @property
    def area_fraction(self):
        return float(np.mean(self.labels))


@dataclass
class CombinationConfig:
    zeta: float = 50.0
    lambda_steep: float = 100.0
    delta_shift: float = 0.05

    def __post_init__(self):
        if not self.zeta > 0:
            raise DomainError("zeta must be positive")
        if not self.lambda_steep > 0:
            raise DomainError("lambda_steep must be positive")
        if not 0 < self.delta_shift < 1:
            raise DomainError("delta_shift must lie in (0, 1)")

    def weight(self, area_fraction):
        """Share of the Bayes map in the combination (steep logistic in the area)."""
        return 1.0 / (1.0 + np.exp(-self.lambda_steep * (area_fraction - self.delta_shift)))


@dataclass
class TamperMap:
    grid: object
    p: np.ndarray
    kind: str

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        if self.kind not in MAP_KINDS:
            raise DomainError(f"unknown map kind {self.kind!r}")
        if self.p.shape != self.grid.shape:
            raise ShapeError(f"map shape {self.p.shape} does not match grid {self.grid.shape}")
        if np.any(~(self.p >= 0)) or np.any(~(self.p <= 1)):
            raise DomainError("tamper probabilities must lie in [0, 1]")


def two_means_1d(values):
    """Optimal two-cluster partition of scalars by a sweep over sorted splits.

    Returns ``(labels, (low_centroid, high_centroid), threshold)`` with label
    1 for the high cluster.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size < 2 or np.ptp(v) == 0:
        raise SingleClusterError("all values are identical; no two-cluster split exists")
    order = np.argsort(v, kind="stable")
    s = v[order]
    n = s.size
    c1 = np.cumsum(s)
    c2 = np.cumsum(s * s)
    k = np.arange(1, n)  # size of the low cluster
    lo_sse = c2[k - 1] - c1[k - 1] ** 2 / k
    hi_sum = c1[-1] - c1[k - 1]
    hi_sse = (c2[-1] - c2[k - 1]) - hi_sum ** 2 / (n - k)
    cost = lo_sse + hi_sse
    # splits between equal values are not proper partitions of distinct values
    cost = np.where(s[k] > s[k - 1], cost, np.inf)
    best = int(np.argmin(cost))
    split = best + 1
    labels = np.zeros(n, dtype=int)
    labels[order[split:]] = 1
    lo_c = float(s[:split].mean())
    hi_c = float(s[split:].mean())
    return labels, (lo_c, hi_c), float(0.5 * (s[split - 1] + s[split]))


def kmeans_split(samples, seed=None):
    """Two-means split of block noise variances; the smaller cluster is suspicious.

    ``seed`` is accepted for interface stability; the sorted sweep is exact
    and deterministic. On equal cluster sizes the high-variance cluster is
    labelled suspicious.
    """
    var = np.asarray(samples.std, dtype=float) ** 2
    labels, (lo_c, hi_c), thr = two_means_1d(var)
    n_hi = int(labels.sum())
    if n_hi > labels.size - n_hi:
        labels = 1 - labels
        return ClusterSplit(labels, (hi_c, lo_c), thr)
    return ClusterSplit(labels, (lo_c, hi_c), thr)


def _log_densities(samples, nlf0, nlf1, ctx, sigma_min):
    l0 = np.asarray(nlf_likelihood(samples, nlf0, ctx, sigma_min), dtype=float)
    l1 = np.asarray(nlf_likelihood(samples, nlf1, ctx, sigma_min), dtype=float)
    return l0, l1


def class_prior_from_logs(l0, l1):
    """Normalised class weights from per-sample log densities of both classes."""
    l0 = np.atleast_1d(l0)
    l1 = np.atleast_1d(l1)
    shift = max(np.max(l0), np.max(l1))
    if not np.isfinite(shift):
        warnings.warn("all class densities vanish; using a uniform class prior")
        return 0.5, 0.5
    s0 = np.sum(np.exp(l0 - shift))
    s1 = np.sum(np.exp(l1 - shift))
    p1 = float(s1 / (s0 + s1))
    return 1.0 - p1, p1


def class_prior(samples, nlf0, nlf1, ctx, sigma_min=SIGMA_MIN):
    """Share of the total likelihood mass that the second curve explains."""
    return class_prior_from_logs(*_log_densities(samples, nlf0, nlf1, ctx, sigma_min))


def tamper_posterior(l0, l1, p0, p1):
    """Posterior of the tampered class from log densities and class priors."""
    l0 = np.asarray(l0, dtype=float)
    l1 = np.asarray(l1, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.log(p0) + l0
        b = np.log(p1) + l1
        post = expit(b - a)
    post = np.where(np.isneginf(a) & np.isneginf(b), 0.5, post)
    return float(post) if post.ndim == 0 else post


def variance_posterior(s2, sigma0_sq, sigma1_sq, ctx, prior=(0.5, 0.5)):
    """Tamper posterior for raw variances, bypassing curve lookup."""
    l0 = chi2_log_likelihood(s2, sigma0_sq, ctx)
    l1 = chi2_log_likelihood(s2, sigma1_sq, ctx)
    return tamper_posterior(l0, l1, *prior)


def bayes_tamper_map(samples, nlf0, nlf1, ctx, prior=None, sigma_min=SIGMA_MIN):
    """Posterior probability that each block follows the alien curve ``nlf1``."""
    l0, l1 = _log_densities(samples, nlf0, nlf1, ctx, sigma_min)
    p0, p1 = prior if prior is not None else class_prior_from_logs(l0, l1)
    post = tamper_posterior(l0, l1, p0, p1)
    return TamperMap(samples.grid, samples.to_map(post, fill=0.0), "bayes")


def distance_tamper_map(samples, nlf0, cfg):
    """``1 - exp(-zeta |s - sigma0(m)|)`` per block."""
    gap = np.abs(np.asarray(samples.std) - nlf0.at(samples.mean))
    return TamperMap(samples.grid, samples.to_map(-np.expm1(-cfg.zeta * gap), fill=0.0),
                     "distance")


def combine_maps(j1, j2, area_fraction, cfg):
    if j1.kind != "distance" or j2.kind != "bayes":
        raise DomainError("combine_maps expects a distance map and a Bayes map")
    if j1.p.shape != j2.p.shape:
        raise ShapeError("maps to combine live on different grids")
    if not 0 <= area_fraction <= 1:
        raise DomainError("area fraction must lie in [0, 1]")
    beta = cfg.weight(area_fraction)
    p = np.clip((1.0 - beta) * j1.p + beta * j2.p, np.minimum(j1.p, j2.p), np.maximum(j1.p, j2.p))
    return TamperMap(j1.grid, p, "combined")
