"""Signal-dependent noise synthesis through a camera response function.

The imaging model is ``y = f(L + n_s + n_c)`` with ``x = f(L)`` the clean
intensity, ``n_s ~ N(0, L * sigma_s**2)`` and ``n_c ~ N(0, sigma_c**2)``.
Quantization noise is not modelled.

All random draws come from numpy's PCG64 bit generator; the identifier is
exported as :data:`RNG_ALGORITHM` so that files written by the CLI can
record it.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage, optimize, stats

from .errors import DegenerateFitError, DomainError, InsufficientDataError
from .nlf import Nlf

RNG_ALGORITHM = "numpy.PCG64/standard_normal"

#: Exponents of the parametric saturated CRF family ``f(L) = L**(1/gamma)``.
GAMMA_FAMILY = (1.0, 1.4, 1.8, 2.2, 2.6)

CRF_FILE_POINTS = 1024


def make_rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class Crf:
    """Monotone camera response curve sampled at increasing irradiances."""

    irradiance: np.ndarray
    intensity: np.ndarray
    name: str = "crf"

    def __post_init__(self):
        L = np.asarray(self.irradiance, dtype=float)
        x = np.asarray(self.intensity, dtype=float)
        if L.ndim != 1 or L.shape != x.shape or L.size < 2:
            raise DomainError("CRF needs two equal-length 1-D sample arrays of length >= 2")
        if not np.all(np.isfinite(L)) or not np.all(np.isfinite(x)):
            raise DomainError("CRF samples must be finite")
        if np.any(np.diff(L) <= 0):
            raise DomainError("CRF irradiances must be strictly increasing")
        if np.any(np.diff(x) < 0):
            raise DomainError(f"CRF {self.name!r} is not monotone")
        object.__setattr__(self, "irradiance", L)
        object.__setattr__(self, "intensity", x)

    @classmethod
    def identity(cls, points=CRF_FILE_POINTS):
        L = np.linspace(0.0, 1.0, points)
        return cls(L, L.copy(), "identity")

    @classmethod
    def gamma(cls, gamma, points=CRF_FILE_POINTS):
        if gamma <= 0:
            raise DomainError("gamma must be positive")
        L = np.linspace(0.0, 1.0, points)
        return cls(L, L ** (1.0 / gamma), f"gamma:{gamma:g}")

    @classmethod
    def from_spec(cls, spec):
        """Parse ``identity``, ``gamma:<g>`` or a path to a CRF text file."""
        if spec == "identity":
            return cls.identity()
        if spec.startswith("gamma:"):
            return cls.gamma(float(spec.split(":", 1)[1]))
        return cls.load(spec)

    @property
    def saturated(self):
        return (abs(self.irradiance[0]) <= 1e-6 and abs(self.irradiance[-1] - 1) <= 1e-6
                and abs(self.intensity[0]) <= 1e-6 and abs(self.intensity[-1] - 1) <= 1e-6)

    @property
    def range(self):
        return float(self.intensity[0]), float(self.intensity[-1])

    def __call__(self, L):
        out = np.interp(np.asarray(L, dtype=float), self.irradiance, self.intensity)
        return np.clip(out, 0.0, 1.0)

    def inverse(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.range
        if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
            raise DomainError(f"intensity outside the range [{lo}, {hi}] of CRF {self.name!r}")
        return np.interp(x, self.intensity, self.irradiance)

    def save(self, path):
        lines = [f"crf {self.name} {self.irradiance.size}"]
        lines += [f"{L:.9g} {x:.9g}" for L, x in zip(self.irradiance, self.intensity)]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path):
        text = Path(path).read_text().split("\n")
        header = text[0].split()
        if len(header) != 3 or header[0] != "crf":
            raise DomainError(f"{path}: expected header 'crf <name> <count>'")
        count = int(header[2])
        rows = [ln.split() for ln in text[1:] if ln.strip()]
        if len(rows) != count:
            raise DomainError(f"{path}: header announces {count} samples, found {len(rows)}")
        data = np.array(rows, dtype=float)
        return cls(data[:, 0], data[:, 1], header[1])


@dataclass(frozen=True)
class NoiseParams:
    sigma_s: float
    sigma_c: float

    def __post_init__(self):
        if not (self.sigma_s >= 0 and self.sigma_c >= 0):
            raise DomainError("noise standard deviations must be non-negative")

    def variance(self, x):
        """Noise variance at intensity ``x`` for an identity CRF."""
        return np.asarray(x) * self.sigma_s ** 2 + self.sigma_c ** 2


def check_plane(values, name="image"):
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise DomainError(f"{name} must be a 2-D intensity plane")
    if np.any(~np.isfinite(values)) or values.min(initial=0) < 0 or values.max(initial=0) > 1:
        raise DomainError(f"{name} values must lie in [0, 1]")
    return values


def apply_crf(crf, irradiance_plane):
    L = np.asarray(irradiance_plane, dtype=float)
    if np.any(L < 0) or np.any(L > 1):
        raise DomainError("irradiance must lie in [0, 1]")
    return crf(L)


def invert_crf(crf, intensity):
    out = crf.inverse(intensity)
    return float(out) if np.ndim(out) == 0 else out


def synthesize_noisy(clean, crf, params, seed):
    """Pass a clean plane through the irradiance-domain noise model.

    The perturbed irradiance is clamped to ``[0, 1]`` before the CRF is
    applied. With both noise levels at zero the input is returned unchanged.
    """
    clean = check_plane(clean, "clean")
    if params.sigma_s == 0 and params.sigma_c == 0:
        return clean.copy()
    rng = make_rng(seed)
    L = crf.inverse(clean)
    n_s = np.sqrt(L) * params.sigma_s * rng.standard_normal(clean.shape)
    n_c = params.sigma_c * rng.standard_normal(clean.shape)
    return crf(np.clip(L + n_s + n_c, 0.0, 1.0))


def make_gradient_pattern(width, height):
    """Test chart whose column ``j`` has the constant value ``j / (width - 1)``."""
    if width < 2 or height < 1:
        raise DomainError("gradient pattern needs width >= 2 and height >= 1")
    row = np.arange(width, dtype=float) / (width - 1)
    return np.tile(row, (height, 1))


@dataclass
class GaussianFitReport:
    intensity: float
    sample_count: int
    rmse: float
    r_square: float
    skewness: float = 0.0
    mean: float = 0.0
    std: float = 0.0

    def as_row(self):
        return {"intensity": self.intensity, "n": self.sample_count,
                "rmse": self.rmse, "r_square": self.r_square}


def _gauss(x, a, mu, s):
    return a * np.exp(-0.5 * ((x - mu) / s) ** 2)


def fit_gaussian_at_intensity(noisy, clean, intensity, bin_count=64, min_samples=100):
    """Goodness of a Gaussian fit to the noise distribution at one clean level.

    Pixels whose clean value is within ``1 / (2 * bin_count)`` of
    ``intensity`` are histogrammed into ``bin_count`` bins spanning their
    observed range. Bin frequencies are scaled so the tallest bin is 1 and a
    Gaussian profile is fitted by least squares.
    """
    noisy = np.asarray(noisy, dtype=float)
    clean = np.asarray(clean, dtype=float)
    if noisy.shape != clean.shape:
        raise DomainError("noisy and clean planes differ in shape")
    sel = noisy[np.abs(clean - intensity) <= 1.0 / (2 * bin_count)]
    if sel.size < min_samples:
        raise InsufficientDataError(
            f"only {sel.size} pixels near intensity {intensity}", count=int(sel.size))
    lo, hi = sel.min(), sel.max()
    if hi - lo <= 0:
        raise DegenerateFitError(f"no noise spread at intensity {intensity}")
    counts, edges = np.histogram(sel, bins=bin_count, range=(lo, hi))
    centers = 0.5 * (edges[1:] + edges[:-1])
    freq = counts / counts.max()
    mu0, s0 = sel.mean(), sel.std()
    try:
        coef, _ = optimize.curve_fit(_gauss, centers, freq, p0=(1.0, mu0, s0), maxfev=10000)
    except RuntimeError as exc:
        raise DegenerateFitError(f"Gaussian fit failed at intensity {intensity}: {exc}") from exc
    resid = freq - _gauss(centers, *coef)
    ss_res = float(np.sum(resid ** 2))
    ss_tot = float(np.sum((freq - freq.mean()) ** 2))
    if ss_tot == 0:
        raise DegenerateFitError(f"flat histogram at intensity {intensity}")
    return GaussianFitReport(
        intensity=float(intensity),
        sample_count=int(sel.size),
        rmse=float(np.sqrt(np.mean(resid ** 2))),
        r_square=1.0 - ss_res / ss_tot,
        skewness=float(stats.skew(sel)),
        mean=float(mu0),
        std=float(s0),
    )


def nlf_ground_truth(crf, params, intensity_grid=None, mc_draws=10_000, seed=0):
    """Monte-Carlo noise level function ``sqrt(E (y - x)**2)`` of the model.

    The same standard-normal draws are reused at every grid point, which
    keeps the curve smooth and makes curves for different parameters
    directly comparable.
    """
    if intensity_grid is None:
        intensity_grid = np.linspace(0.0, 1.0, 256)
    grid = np.asarray(intensity_grid, dtype=float)
    if mc_draws < 10_000:
        raise DomainError("mc_draws must be at least 1e4")
    if params.sigma_s == 0 and params.sigma_c == 0:
        return Nlf(np.zeros_like(grid), grid)
    rng = make_rng(seed)
    z_s = rng.standard_normal(mc_draws)
    z_c = rng.standard_normal(mc_draws)
    L = crf.inverse(grid)[:, None]
    y = crf(np.clip(L + np.sqrt(L) * params.sigma_s * z_s + params.sigma_c * z_c, 0.0, 1.0))
    sigma = np.sqrt(np.mean((y - grid[:, None]) ** 2, axis=1))
    return Nlf(sigma, grid)


def smooth_scene(height, width, seed, low=0.15, high=0.85, scale=None):
    """Low-frequency random content spanning ``[low, high]``."""
    rng = make_rng(seed)
    scale = scale or max(height, width) / 8
    field_ = ndimage.gaussian_filter(rng.standard_normal((height, width)), scale, mode="reflect")
    field_ -= field_.min()
    span = field_.max()
    if span == 0:
        return np.full((height, width), 0.5 * (low + high))
    return low + (high - low) * field_ / span


@dataclass
class SpliceScene:
    image: np.ndarray
    mask: np.ndarray
    pristine: np.ndarray
    clean: np.ndarray
    meta: dict = field(default_factory=dict)


def make_splice_scene(size=256, patch=96, host=NoiseParams(0.02, 0.02),
                      alien=NoiseParams(0.08, 0.06), crf=None, alien_crf=None,
                      seed=0, quantize=True, offset=None):
    """Synthetic spliced image with its ground-truth mask and pristine twin.

    The host and the alien patch get independent smooth content and
    independent noise. ``pristine`` is the host with host noise everywhere,
    i.e. the matched negative for the same seed.
    """
    if patch >= size:
        raise DomainError("patch must be smaller than the image")
    crf = crf or Crf.identity()
    alien_crf = alien_crf or crf
    rng = make_rng(seed)
    host_seed, alien_seed, noise_seed, alien_noise_seed = rng.integers(0, 2**63 - 1, size=4)
    host_clean = smooth_scene(size, size, int(host_seed))
    alien_clean = smooth_scene(patch, patch, int(alien_seed), scale=size / 8)
    if offset is None:
        r0, c0 = (int(v) for v in rng.integers(0, size - patch + 1, size=2))
    else:
        r0, c0 = offset
    pristine = synthesize_noisy(host_clean, crf, host, int(noise_seed))
    alien_noisy = synthesize_noisy(alien_clean, alien_crf, alien, int(alien_noise_seed))
    image = pristine.copy()
    image[r0:r0 + patch, c0:c0 + patch] = alien_noisy
    clean = host_clean.copy()
    clean[r0:r0 + patch, c0:c0 + patch] = alien_clean
    mask = np.zeros((size, size), dtype=bool)
    mask[r0:r0 + patch, c0:c0 + patch] = True
    if quantize:
        image = np.round(image * 255) / 255
        pristine = np.round(pristine * 255) / 255
    meta = {"size": size, "patch": patch, "offset": [r0, c0],
            "host_sigmas": [host.sigma_s, host.sigma_c],
            "patch_sigmas": [alien.sigma_s, alien.sigma_c],
            "crf": crf.name, "seed": seed, "rng": RNG_ALGORITHM}
    return SpliceScene(image, mask, pristine, clean, meta)
