"""Image and mask file access through Pillow, normalised to floats in [0, 1]."""

import numpy as np
from PIL import Image

from .errors import DomainError

_SIXTEEN_BIT = ("I;16", "I;16B", "I;16L", "I")


def read_image(path):
    """Grey ``(H, W)`` or RGB ``(H, W, 3)`` float image in [0, 1].

    8-bit data are divided by 255 and 16-bit grey data by 65535. Alpha and
    palettes are flattened to RGB.
    """
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in _SIXTEEN_BIT:
                arr = np.asarray(im, dtype=np.float64) / 65535.0
                return np.clip(arr, 0.0, 1.0)
            if mode == "L":
                return np.asarray(im, dtype=np.float64) / 255.0
            if mode in ("1", "LA"):
                return np.asarray(im.convert("L"), dtype=np.float64) / 255.0
            if mode == "F":
                return np.clip(np.asarray(im, dtype=np.float64), 0.0, 1.0)
            return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except (OSError, ValueError) as exc:
        raise DomainError(f"cannot read image {path}: {exc}") from exc


def read_mask(path):
    """Ground-truth mask; any non-zero pixel is tampered."""
    img = read_image(path)
    if img.ndim == 3:
        img = img.max(axis=2)
    return img > 0


def to_uint8(image):
    return np.round(np.clip(np.asarray(image, dtype=float), 0.0, 1.0) * 255.0).astype(np.uint8)


def write_image(path, image, bits=8):
    image = np.asarray(image)
    if bits == 16:
        if image.ndim != 2:
            raise DomainError("16-bit output is supported for grey images only")
        data = np.round(np.clip(image, 0, 1) * 65535.0).astype(np.uint16)
        Image.fromarray(data).save(path)
        return
    if image.dtype != np.uint8:
        image = to_uint8(image)
    Image.fromarray(image).save(path)


def write_mask(path, mask):
    """1-bit PNG of a boolean map."""
    Image.fromarray(np.asarray(mask, dtype=bool)).save(path)
