"""Noise level functions: chi-square likelihood and Bayesian MAP curve fitting."""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, log_ndtr

from .errors import DomainError, InsufficientDataError

NLF_POINTS = 256
SIGMA_MIN = 1e-4

_LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)


def default_grid(points=NLF_POINTS):
    return np.linspace(0.0, 1.0, points)


@dataclass(frozen=True)
class Nlf:
    """Noise standard deviation sampled on an intensity grid (default 256 points on [0, 1])."""

    values: np.ndarray
    intensities: np.ndarray = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise DomainError("NLF values must be one-dimensional")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise DomainError("NLF values must be finite and non-negative")
        g = default_grid(v.size) if self.intensities is None else np.asarray(self.intensities, float)
        if g.shape != v.shape:
            raise DomainError("NLF grid and values differ in length")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "intensities", g)

    def __len__(self):
        return self.values.size

    @property
    def uniform(self):
        d = self.values.size
        return d > 1 and np.allclose(self.intensities, default_grid(d), atol=1e-12)

    def index(self, m):
        """Nearest grid index for block means ``m``."""
        m = np.asarray(m, dtype=float)
        d = self.values.size
        if self.uniform:
            return np.clip(np.rint(m * (d - 1)), 0, d - 1).astype(int)
        g = self.intensities
        pos = np.clip(np.searchsorted(g, m), 1, d - 1)
        left_closer = (m - g[pos - 1]) <= (g[pos] - m)
        return np.where(left_closer, pos - 1, pos)

    def at(self, m):
        return self.values[self.index(m)]

    def to_csv(self, path):
        rows = ["intensity,sigma"] + [f"{x:.9g},{s:.9g}" for x, s in zip(self.intensities, self.values)]
        with open(path, "w") as fh:
            fh.write("\n".join(rows) + "\n")


@dataclass(frozen=True)
class NlfPrior:
    """Mean curve with principal components and their variances."""

    mean: Nlf
    basis: np.ndarray
    eigenvalues: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        E = np.asarray(self.basis, dtype=float)
        lam = np.asarray(self.eigenvalues, dtype=float)
        d = len(self.mean)
        if E.ndim != 2 or E.shape[0] != d or E.shape[1] != lam.size or lam.size > d:
            raise DomainError("prior basis must be d x m with m eigenvalues, m <= d")
        if not np.allclose(E.T @ E, np.eye(lam.size), atol=1e-8):
            raise DomainError("prior basis columns are not orthonormal")
        if np.any(lam <= 0) or np.any(np.diff(lam) > 0):
            raise DomainError("prior eigenvalues must be positive and non-increasing")
        object.__setattr__(self, "basis", E)
        object.__setattr__(self, "eigenvalues", lam)

    @property
    def m(self):
        return self.eigenvalues.size

    def curve(self, x):
        return self.mean.values + self.basis @ np.asarray(x, dtype=float)

    def project(self, curve):
        """Coefficients of ``curve`` in the prior basis."""
        return self.basis.T @ (np.asarray(curve, dtype=float) - self.mean.values)


@dataclass(frozen=True)
class LikelihoodContext:
    dof: int

    def __post_init__(self):
        if self.dof < 1:
            raise DomainError("chi-square degrees of freedom must be >= 1")

    @classmethod
    def for_block(cls, block_size):
        return cls(block_size * block_size - 1)

    @property
    def log_norm(self):
        k = self.dof
        return 0.5 * k * np.log(2.0) + gammaln(0.5 * k)


def chi2_logpdf(x, k):
    """log of the chi-square density with ``k`` degrees of freedom."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (0.5 * k - 1.0) * np.log(x) - 0.5 * x - (0.5 * k * np.log(2.0) + gammaln(0.5 * k))
    if k == 2:
        out = np.where(x == 0, -np.log(2.0), out)
    return np.where(x < 0, -np.inf, out)


def chi2_log_likelihood(s2, sigma2, ctx):
    """log chi-square density of the statistic ``k * s2 / sigma2``.

    This is the conditional likelihood of a sample variance given the
    population variance, expressed on the statistic's scale (no Jacobian).
    """
    sigma2 = np.asarray(sigma2, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    if np.any(sigma2 <= 0):
        raise DomainError("population variance must be positive")
    if np.any(s2 < 0):
        raise DomainError("sample variance must be non-negative")
    k = ctx.dof
    out = chi2_logpdf(k * s2 / sigma2, k)
    return float(out) if out.ndim == 0 else out


def nlf_likelihood(sample, nlf, ctx, sigma_min=SIGMA_MIN):
    """Log-likelihood of block noise samples under a noise level function.

    ``sample`` is anything with ``mean`` and ``std`` attributes (scalars or
    arrays); the curve is read at the nearest grid point and floored at
    ``sigma_min``.
    """
    sigma = np.maximum(nlf.at(sample.mean), sigma_min)
    return chi2_log_likelihood(np.asarray(sample.std, dtype=float) ** 2, sigma ** 2, ctx)


@dataclass
class NlfFit:
    nlf: Nlf
    coefficients: np.ndarray
    converged: bool
    iterations: int
    objective: list


class _MapObjective:
    """Negative log-posterior of the prior coefficients for one sample set."""

    def __init__(self, means, stds, counts, prior, sigma_min):
        self.prior = prior
        idx = prior.mean.index(means)
        self.mbar = prior.mean.values[idx]
        self.En = prior.basis[idx]
        self.s = np.maximum(np.asarray(stds, dtype=float), sigma_min)
        self.a = np.sqrt(np.asarray(counts, dtype=float)) / self.s
        self.inv_lam = 1.0 / prior.eigenvalues

    def value(self, x):
        r = self.mbar + self.En @ x
        u = self.a * (self.s - r)
        data = np.sum(-log_ndtr(u) + 0.5 * (self.a * (r - self.s)) ** 2)
        return float(data + np.sum(self.inv_lam * x * x))

    def derivatives(self, x):
        r = self.mbar + self.En @ x
        u = self.a * (self.s - r)
        # inverse Mills ratio phi(u) / Phi(u), stable in the lower tail
        h = np.exp(-0.5 * u * u - _LOG_SQRT_2PI - log_ndtr(u))
        dr = self.a * h + self.a ** 2 * (r - self.s)
        d2r = self.a ** 2 * (h * np.maximum(u + h, 0.0) + 1.0)
        g = self.En.T @ dr + 2.0 * self.inv_lam * x
        H = (self.En * d2r[:, None]).T @ self.En + np.diag(2.0 * self.inv_lam)
        return g, H


def _constrained_newton_step(H, g, A):
    """Newton step keeping the rows of ``A`` at zero; returns (step, multipliers)."""
    n = g.size
    if A.shape[0] == 0:
        Z = np.eye(n)
    else:
        _, sv, vt = np.linalg.svd(A)
        rank = int(np.sum(sv > 1e-10 * max(sv[0], 1.0)))
        Z = vt[rank:].T
    if Z.shape[1] == 0:
        d = np.zeros(n)
    else:
        Hr = Z.T @ H @ Z
        d = -Z @ np.linalg.solve(Hr, Z.T @ g)
    if A.shape[0] == 0:
        return d, np.zeros(0)
    lam, *_ = np.linalg.lstsq(A.T, g + H @ d, rcond=None)
    return d, lam


def fit_nlf(samples, prior, sigma_min=SIGMA_MIN, max_iter=500, gtol=1e-8):
    """MAP estimate of a noise level function from block noise samples.

    Minimises, over the prior coefficients ``x``,

        sum_n [ -log Phi(a_n (s_n - r_n)) + a_n**2 (r_n - s_n)**2 / 2 ] + x' inv(Lambda) x

    with ``r_n = mean(m_n) + e_n' x`` and ``a_n = sqrt(k_n) / s_n``, subject to
    the whole curve staying non-negative. The solver is an active-set Newton
    method with a feasibility-capped Armijo line search, so the objective
    never increases between iterations.
    """
    means = np.asarray(samples.mean, dtype=float)
    if means.size == 0:
        raise InsufficientDataError("cannot fit a noise level function to zero samples")
    obj = _MapObjective(means, samples.std, samples.pixel_count, prior, sigma_min)
    E, mbar = prior.basis, prior.mean.values
    if np.any(mbar < 0):
        raise DomainError("prior mean curve is negative")
    x = np.zeros(prior.m)
    f = obj.value(x)
    trace = [f]
    active = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g, H = obj.derivatives(x)
        d, lam = _constrained_newton_step(H, g, E[active])
        decrement = -float(g @ d)
        if decrement <= gtol * (1.0 + abs(f)):
            if active and lam.size and lam.min() < -1e-10 * (1.0 + np.abs(g).max()):
                active.pop(int(np.argmin(lam)))
                continue
            converged = True
            break
        curve = mbar + E @ x
        slope = E @ d
        blocking = [i for i in np.flatnonzero(slope < 0) if i not in active]
        t_max, hit = 1.0, None
        if blocking:
            ratios = np.maximum(curve[blocking], 0.0) / -slope[blocking]
            j = int(np.argmin(ratios))
            if ratios[j] < 1.0:
                t_max, hit = float(ratios[j]), int(blocking[j])
        if hit is not None and t_max <= 1e-14:
            active.append(hit)
            continue
        t = t_max
        while t > 1e-14:
            f_new = obj.value(x + t * d)
            if f_new <= f - 1e-4 * t * decrement:
                break
            t *= 0.5
        else:
            break
        x = x + t * d
        f = f_new
        trace.append(f)
        if hit is not None and t == t_max:
            active.append(hit)
    sigma = np.maximum(mbar + E @ x, 0.0)
    return NlfFit(Nlf(sigma, prior.mean.intensities), x, converged, it, trace)
