"""Raster handling for the background canvas and its saliency map.

Covers four-channel composition (RGB canvas + saliency), salient-region
bounding-box extraction by thresholding, and decomposition into flat
non-overlapping patches for the image encoder.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from PIL import Image

from .geometry import BBox

DEFAULT_SALIENCY_THRESHOLD = 0.5
DEFAULT_RESOLUTION = 64
DEFAULT_PATCH_SIZE = 8


@dataclass(frozen=True)
class Raster:
    """Immutable pixel grid, values in [0,1], shape (height, width, channels)."""

    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ValueError(f"raster data must be HxWxC, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("raster contains non-finite values")
        if arr.min() < 0 or arr.max() > 1:
            raise ValueError("raster values must lie in [0,1]")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @staticmethod
    def constant(height: int, width: int, channels: int, value: float = 0.0) -> "Raster":
        return Raster(np.full((height, width, channels), value, dtype=np.float32))


@dataclass(frozen=True)
class PatchGrid:
    """Row-major grid of flattened non-overlapping patches."""

    rows: int
    cols: int
    patch_size: int
    patches: np.ndarray = field(repr=False)  # (rows*cols, patch_size^2 * channels)

    def __post_init__(self):
        if self.patches.shape[0] != self.rows * self.cols:
            raise ValueError("patch count must equal rows*cols")

    @property
    def num_patches(self) -> int:
        return self.rows * self.cols


def compose_four_channel(canvas: Raster, saliency: Raster) -> Raster:
    """Merge a 3-channel canvas and a 1-channel saliency map into one raster."""
    if canvas.channels != 3:
        raise ValueError(f"canvas must have 3 channels, got {canvas.channels}")
    if saliency.channels != 1:
        raise ValueError(f"saliency must have 1 channel, got {saliency.channels}")
    if (canvas.height, canvas.width) != (saliency.height, saliency.width):
        raise ValueError(
            f"canvas {canvas.height}x{canvas.width} and saliency "
            f"{saliency.height}x{saliency.width} dimensions differ"
        )
    return Raster(np.concatenate([canvas.data, saliency.data], axis=2))


def extract_salbox(saliency: Raster, threshold: float = DEFAULT_SALIENCY_THRESHOLD) -> Optional[BBox]:
    """Tight normalized bounding box of all pixels with value >= threshold.

    Returns None when no pixel passes; callers that need a total input
    substitute geometry.center_sentinel_box().
    """
    if not 0 < threshold < 1:
        raise ValueError(f"threshold must lie in (0,1), got {threshold}")
    if saliency.channels != 1:
        raise ValueError("saliency map must be single-channel")
    mask = saliency.data[:, :, 0] >= threshold
    if not mask.any():
        return None
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    h, w = saliency.height, saliency.width
    # box spans the outer edges of the extreme pixels
    x0 = cols[0] / w
    x1 = (cols[-1] + 1) / w
    y0 = rows[0] / h
    y1 = (rows[-1] + 1) / h
    return BBox.from_corners(x0, y0, x1, y1)


def patchify(image: Raster, patch_size: int = DEFAULT_PATCH_SIZE) -> PatchGrid:
    """Split into a row-major grid of flattened patches."""
    if image.height % patch_size or image.width % patch_size:
        raise ValueError(
            f"image {image.height}x{image.width} not divisible by patch size {patch_size}"
        )
    rows = image.height // patch_size
    cols = image.width // patch_size
    c = image.channels
    arr = image.data.reshape(rows, patch_size, cols, patch_size, c)
    patches = arr.transpose(0, 2, 1, 3, 4).reshape(rows * cols, patch_size * patch_size * c)
    return PatchGrid(rows, cols, patch_size, np.ascontiguousarray(patches))


def unpatchify(grid: PatchGrid, channels: int) -> Raster:
    """Inverse of patchify."""
    p = grid.patch_size
    arr = grid.patches.reshape(grid.rows, grid.cols, p, p, channels)
    img = arr.transpose(0, 2, 1, 3, 4).reshape(grid.rows * p, grid.cols * p, channels)
    return Raster(img)


def load_png(path) -> Raster:
    """Read an 8-bit PNG, mapping values linearly to [0,1]. Grayscale stays 1-channel."""
    with Image.open(path) as im:
        if im.mode in ("L", "I;16"):
            im = im.convert("L")
            arr = np.asarray(im, dtype=np.float32)[:, :, None] / 255.0
        else:
            im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.float32) / 255.0
    return Raster(arr)


def save_png(raster: Raster, path) -> None:
    arr = np.round(raster.data * 255.0).astype(np.uint8)
    if raster.channels == 1:
        Image.fromarray(arr[:, :, 0], mode="L").save(path)
    elif raster.channels == 3:
        Image.fromarray(arr, mode="RGB").save(path)
    else:
        raise ValueError(f"cannot write {raster.channels}-channel raster as PNG")
