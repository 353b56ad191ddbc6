"""Block decomposition and PCA-based per-block noise estimation."""

import csv
import json
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DomainError

#: mean |Laplacian| of unit-variance white noise for the 5-point stencil
LAPLACE_NOISE_GAIN = float(np.sqrt(20.0) * np.sqrt(2.0 / np.pi))

SMOOTH_TEXTURE_RATIO = 1.5
SMOOTH_STD_FACTOR = 3.0

# blocks per eigen-decomposition batch; bounds memory on large images
_BATCH = 256


@dataclass(frozen=True)
class BlockGrid:
    block_size: int
    rows: int
    cols: int
    height: int
    width: int

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def count(self):
        return self.rows * self.cols

    def blocks(self, image):
        """View of the image as ``(rows, cols, B, B)``; trailing partial blocks dropped."""
        B = self.block_size
        crop = np.asarray(image)[: self.rows * B, : self.cols * B]
        return crop.reshape(self.rows, B, self.cols, B).swapaxes(1, 2)

    def upsample(self, values, fill=0):
        """Replicate per-block values to pixel resolution."""
        values = np.asarray(values)
        out = np.full((self.height, self.width), fill, dtype=values.dtype)
        B = self.block_size
        out[: self.rows * B, : self.cols * B] = np.kron(values, np.ones((B, B), dtype=values.dtype))
        return out


def decompose(image, block_size=32):
    """Lattice of non-overlapping ``block_size`` squares covering the image."""
    h, w = np.shape(image)[:2]
    if block_size < 8:
        raise DomainError("block size must be at least 8")
    if h < block_size or w < block_size:
        raise DomainError(f"image {h}x{w} is smaller than one {block_size}x{block_size} block")
    return BlockGrid(block_size, h // block_size, w // block_size, h, w)


@dataclass(frozen=True)
class NoiseSample:
    mean: float
    std: float
    block_index: tuple
    pixel_count: int
    smooth: bool
    texture: float = 0.0


@dataclass
class NoiseSampleSet:
    """Column-wise store of block noise samples ordered by block index."""

    mean: np.ndarray
    std: np.ndarray
    row: np.ndarray
    col: np.ndarray
    pixel_count: np.ndarray
    smooth: np.ndarray
    texture: np.ndarray
    grid: BlockGrid

    def __len__(self):
        return self.mean.size

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i):
        return NoiseSample(float(self.mean[i]), float(self.std[i]),
                           (int(self.row[i]), int(self.col[i])), int(self.pixel_count[i]),
                           bool(self.smooth[i]), float(self.texture[i]))

    def subset(self, mask):
        mask = np.asarray(mask)
        return NoiseSampleSet(self.mean[mask], self.std[mask], self.row[mask], self.col[mask],
                              self.pixel_count[mask], self.smooth[mask], self.texture[mask],
                              self.grid)

    def to_map(self, values, fill=np.nan):
        """Scatter per-sample values onto the block lattice."""
        out = np.full(self.grid.shape, fill, dtype=float)
        out[self.row, self.col] = values
        return out

    def records(self):
        return [{"row": int(r), "col": int(c), "mean": float(m), "std": float(s),
                 "k": int(k), "smooth": bool(f)}
                for r, c, m, s, k, f in zip(self.row, self.col, self.mean, self.std,
                                            self.pixel_count, self.smooth)]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["row", "col", "mean", "std", "k", "smooth"])
            for rec in self.records():
                writer.writerow([rec["row"], rec["col"], f"{rec['mean']:.9g}",
                                 f"{rec['std']:.9g}", rec["k"], int(rec["smooth"])])

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump({"block_size": self.grid.block_size, "rows": self.grid.rows,
                       "cols": self.grid.cols, "samples": self.records()}, fh)


def _pca_noise_variance(blocks, patch_size):
    """Mean of the smallest half of the patch-covariance eigenvalues, per block."""
    n, B, _ = blocks.shape
    patches = sliding_window_view(blocks, (patch_size, patch_size), axis=(1, 2))
    patches = patches.reshape(n, -1, patch_size * patch_size)
    centered = patches - patches.mean(axis=1, keepdims=True)
    cov = np.einsum("npi,npj->nij", centered, centered) / (patches.shape[1] - 1)
    eig = np.linalg.eigvalsh(cov)  # ascending
    keep = int(np.ceil(patch_size * patch_size / 2))
    return np.maximum(eig[:, :keep].mean(axis=1), 0.0)


def _texture(blocks):
    lap = (blocks[:, :-2, 1:-1] + blocks[:, 2:, 1:-1] + blocks[:, 1:-1, :-2]
           + blocks[:, 1:-1, 2:] - 4.0 * blocks[:, 1:-1, 1:-1])
    return np.abs(lap).mean(axis=(1, 2))


def mark_smooth(samples, ratio=SMOOTH_TEXTURE_RATIO, std_factor=SMOOTH_STD_FACTOR):
    """Recompute smooth flags relative to the samples in ``samples``.

    A block is smooth when its mean absolute Laplacian is no more than
    ``ratio`` times what its own noise level alone would produce, and its
    noise estimate is at most ``std_factor`` times the set median.
    """
    if len(samples) == 0:
        return samples
    expected = LAPLACE_NOISE_GAIN * samples.std
    flat = np.where(expected > 0, samples.texture <= ratio * expected, samples.texture == 0)
    calm = samples.std <= std_factor * np.median(samples.std)
    out = samples.subset(np.ones(len(samples), dtype=bool))
    out.smooth = flat & calm
    return out


def estimate_block_noise(image, grid, patch_size=5):
    """Noise sample ``(mean, std)`` for every full block of ``grid``."""
    image = np.asarray(image, dtype=float)
    if patch_size >= grid.block_size:
        raise DomainError("patch size must be smaller than the block size")
    B = grid.block_size
    flat = np.ascontiguousarray(grid.blocks(image)).reshape(-1, B, B)
    var = np.empty(flat.shape[0])
    for start in range(0, flat.shape[0], _BATCH):
        var[start:start + _BATCH] = _pca_noise_variance(flat[start:start + _BATCH], patch_size)
    rows, cols = np.divmod(np.arange(grid.count), grid.cols)
    samples = NoiseSampleSet(
        mean=flat.mean(axis=(1, 2)),
        std=np.sqrt(var),
        row=rows,
        col=cols,
        pixel_count=np.full(grid.count, B * B),
        smooth=np.zeros(grid.count, dtype=bool),
        texture=_texture(flat),
        grid=grid,
    )
    return mark_smooth(samples)


def select_smooth(samples):
    return samples.subset(samples.smooth)


def luminance(image):
    """ITU-R BT.601 luma for RGB input; 2-D input is returned as float."""
    image = np.asarray(image, dtype=float)
    if image.ndim == 2:
        return image
    if image.ndim == 3 and image.shape[2] >= 3:
        return image[..., 0] * 0.299 + image[..., 1] * 0.587 + image[..., 2] * 0.114
    if image.ndim == 3 and image.shape[2] == 1:
        return image[..., 0]
    raise DomainError(f"unsupported image shape {image.shape}")
