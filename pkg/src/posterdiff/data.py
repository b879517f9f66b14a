"""Synthetic poster dataset generation and manifest-based ingestion.

Generated samples are structurally clean by construction: salient product
blobs sit on one side of the canvas, elements live in the complementary
band snapped to a column grid, texts stack with uniform gaps, underlays
contain their text with a small margin. Ground-truth layouts therefore
satisfy tight occlusion/overlap/underlay bounds, which is the teaching
signal the model is trained on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .canvas import Raster, load_png, save_png
from .geometry import BBox, Element, Layout, clamp_to_canvas

SIDES = ("left", "right", "top", "bottom")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class PosterSample:
    canvas: Raster
    saliency: Raster
    layout: Layout

    def __post_init__(self):
        if (self.canvas.height, self.canvas.width) != (self.saliency.height, self.saliency.width):
            raise ValueError("canvas and saliency dimensions differ")
        if self.canvas.channels != 3 or self.saliency.channels != 1:
            raise ValueError("canvas must be RGB and saliency single-channel")
        for i, e in enumerate(self.layout):
            c = clamp_to_canvas(e.box)
            if (
                abs(c.cx - e.box.cx) > 1e-6
                or abs(c.cy - e.box.cy) > 1e-6
                or abs(c.w - e.box.w) > 1e-6
                or abs(c.h - e.box.h) > 1e-6
            ):
                raise ValueError(f"element {i} extends outside the canvas")


@dataclass(frozen=True)
class SynthConfig:
    num_samples: int = 100
    resolution: int = 64
    min_elements: int = 2
    max_elements: int = 6
    grid_columns: int = 12
    blob_size_range: tuple[float, float] = (0.2, 0.38)
    second_blob_prob: float = 0.25
    logo_prob: float = 0.5
    underlay_prob: float = 0.9
    text_heights: tuple[float, ...] = (0.06, 0.08, 0.10)
    stack_gap: float = 0.08
    underlay_margin: float = 0.035
    seed: int = 0

    def __post_init__(self):
        if self.num_samples < 0:
            raise ValueError("num_samples must be >= 0")
        if not 1 <= self.min_elements <= self.max_elements:
            raise ValueError("element count range is empty")
        lo, hi = self.blob_size_range
        if not 0 < lo <= hi < 1:
            raise ValueError("blob size range invalid")


@dataclass
class SynthResult:
    samples: list[PosterSample]
    skipped: int = 0


def _quantize(arr: np.ndarray) -> np.ndarray:
    """Snap to the 8-bit grid so PNG round trips are lossless."""
    return np.round(np.clip(arr, 0.0, 1.0) * 255.0) / 255.0


def _paint_background(rng: np.random.Generator, res: int) -> np.ndarray:
    c0 = rng.uniform(0.55, 0.95, 3)
    c1 = rng.uniform(0.55, 0.95, 3)
    axis = rng.integers(0, 2)
    ramp = np.linspace(0.0, 1.0, res)
    grad = np.broadcast_to(ramp[:, None] if axis == 0 else ramp[None, :], (res, res))
    img = c0 * (1.0 - grad[..., None]) + c1 * grad[..., None]
    return np.ascontiguousarray(img, dtype=np.float64)


def _blob_masks(rng: np.random.Generator, res: int, cx, cy, w, h) -> tuple[np.ndarray, np.ndarray]:
    """(core mask, soft saliency) for one rectangular or elliptical blob."""
    coords = (np.arange(res) + 0.5) / res
    X, Y = np.meshgrid(coords, coords)
    rx, ry = w / 2, h / 2
    if rng.random() < 0.5:
        d = np.maximum(np.abs(X - cx) / rx, np.abs(Y - cy) / ry)
    else:
        d = np.sqrt(((X - cx) / rx) ** 2 + ((Y - cy) / ry) ** 2)
    soft = 3.0 / (res * min(rx, ry))  # ~3 px falloff, scale-normalized
    sal = np.clip((1.0 + soft - d) / soft, 0.0, 1.0)
    return d <= 1.0, sal


def _snap(value: float, step: float) -> float:
    return round(value / step) * step


def _generate_one(rng: np.random.Generator, cfg: SynthConfig) -> Optional[PosterSample]:
    res = cfg.resolution
    side = SIDES[rng.integers(0, len(SIDES))]
    w = rng.uniform(*cfg.blob_size_range)
    h = rng.uniform(*cfg.blob_size_range)
    pos = {
        "left": (rng.uniform(0.05, 0.3 - w / 2) + w / 2, rng.uniform(0.3, 0.7)),
        "right": (1.0 - rng.uniform(0.05, 0.3 - w / 2) - w / 2, rng.uniform(0.3, 0.7)),
        "top": (rng.uniform(0.3, 0.7), rng.uniform(0.05, 0.3 - h / 2) + h / 2),
        "bottom": (rng.uniform(0.3, 0.7), 1.0 - rng.uniform(0.05, 0.3 - h / 2) - h / 2),
    }
    cx, cy = pos[side]

    canvas = _paint_background(rng, res)
    saliency = np.zeros((res, res), dtype=np.float64)
    blobs = [(cx, cy, w, h)]
    if rng.random() < cfg.second_blob_prob:
        w2, h2 = w * rng.uniform(0.3, 0.5), h * rng.uniform(0.3, 0.5)
        if side in ("left", "right"):
            blobs.append((cx, np.clip(cy + rng.choice([-1, 1]) * (h / 2 + h2), 0.1, 0.9), w2, h2))
        else:
            blobs.append((np.clip(cx + rng.choice([-1, 1]) * (w / 2 + w2), 0.1, 0.9), cy, w2, h2))
    for bx, by, bw, bh in blobs:
        core, sal = _blob_masks(rng, res, bx, by, bw, bh)
        saliency = np.maximum(saliency, sal)
        color = rng.uniform(0.05, 0.6, 3)
        canvas[core] = color

    # salient extent from the soft map at the 0.5 threshold
    hot = saliency >= 0.5
    ys, xs = np.nonzero(hot)
    sx0, sx1 = xs.min() / res, (xs.max() + 1) / res
    sy0, sy1 = ys.min() / res, (ys.max() + 1) / res

    margin = 0.06
    edge = 0.04
    band = {
        "left": (sx1 + margin, edge, 1 - edge, 1 - edge),
        "right": (edge, edge, sx0 - margin, 1 - edge),
        "top": (edge, sy1 + margin, 1 - edge, 1 - edge),
        "bottom": (edge, edge, 1 - edge, sy0 - margin),
    }[side]
    bx0, by0, bx1, by1 = band
    if bx1 - bx0 < 0.22 or by1 - by0 < 0.3:
        return None

    n_text = int(rng.integers(1, 4))
    has_logo = rng.random() < cfg.logo_prob
    has_underlay = rng.random() < cfg.underlay_prob
    if n_text + has_logo + has_underlay < cfg.min_elements:
        has_underlay = True
    step = 1.0 / cfg.grid_columns
    center_x = _snap((bx0 + bx1) / 2, step / 2)

    heights = [cfg.text_heights[rng.integers(0, len(cfg.text_heights))] for _ in range(n_text)]
    widths = []
    for _ in range(n_text):
        raw = (bx1 - bx0 - 0.04) * rng.uniform(0.55, 0.95)
        widths.append(max(_snap(raw, step), 2 * step))
    gap = cfg.stack_gap
    logo_h = rng.uniform(0.08, 0.14) if has_logo else 0.0
    logo_w = logo_h * rng.uniform(0.9, 1.4)
    stack_h = sum(heights) + gap * (n_text - 1) + (logo_h + gap if has_logo else 0.0)
    room = (by1 - by0) - stack_h - 2 * cfg.underlay_margin
    if room < 0:
        return None
    y_cursor = by0 + cfg.underlay_margin + rng.uniform(0.0, room)

    elements: list[Element] = []
    if has_logo:
        elements.append(Element("logo", BBox(center_x, y_cursor + logo_h / 2, logo_w, logo_h)))
        y_cursor += logo_h + gap
    text_elems = []
    for th, tw in zip(heights, widths):
        text_elems.append(Element("text", BBox(center_x, y_cursor + th / 2, tw, th)))
        y_cursor += th + gap
    elements.extend(text_elems)
    if has_underlay:
        # always wrap the topmost text: a deterministic relation the model can learn
        target = text_elems[0]
        m = cfg.underlay_margin
        ub = BBox(target.box.cx, target.box.cy, target.box.w + 2 * m, target.box.h + 2 * m)
        elements.append(Element("underlay", ub))

    for e in elements:
        x0, y0, x1, y1 = e.box.corners()
        if x0 < 0 or y0 < 0 or x1 > 1 or y1 > 1:
            return None
    if len(elements) > cfg.max_elements:
        return None

    return PosterSample(
        canvas=Raster(_quantize(canvas).astype(np.float32)),
        saliency=Raster(_quantize(saliency).astype(np.float32)[:, :, None]),
        layout=Layout(elements),
    )


def generate_synthetic(cfg: SynthConfig) -> SynthResult:
    """Deterministic per seed; infeasible placements are retried then skipped."""
    samples: list[PosterSample] = []
    skipped = 0
    for index in range(cfg.num_samples):
        sample = None
        for attempt in range(20):
            rng = np.random.default_rng([cfg.seed, index, attempt])
            sample = _generate_one(rng, cfg)
            if sample is not None:
                break
        if sample is None:
            skipped += 1
        else:
            samples.append(sample)
    return SynthResult(samples=samples, skipped=skipped)


# ------------------------------------------------------------------ manifest


def save_dataset(samples: list[PosterSample], out_dir) -> Path:
    """PNG pair per sample plus a JSON-lines manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = out / "manifest.jsonl"
    with open(manifest, "w", encoding="utf-8") as f:
        for i, s in enumerate(samples):
            canvas_name = f"canvas_{i:05d}.png"
            sal_name = f"saliency_{i:05d}.png"
            save_png(s.canvas, out / canvas_name)
            save_png(s.saliency, out / sal_name)
            f.write(
                json.dumps({"canvas": canvas_name, "saliency": sal_name, "layout": s.layout.to_dict()})
                + "\n"
            )
    return manifest


def load_manifest_with_errors(path) -> tuple[list[PosterSample], list[str]]:
    """Stream and validate every entry; errors come back indexed, never raised."""
    manifest = Path(path)
    if not manifest.exists():
        raise ManifestError(f"manifest not found: {manifest}")
    base = manifest.parent
    samples: list[PosterSample] = []
    errors: list[str] = []
    with open(manifest, "r", encoding="utf-8") as f:
        for index, line in enumerate(f):
            line = line.strip()
            if not line:
                continue
            try:
                entry = json.loads(line)
                canvas = load_png(base / entry["canvas"])
                saliency = load_png(base / entry["saliency"])
                layout = Layout.from_dict(entry["layout"])
                samples.append(PosterSample(canvas=canvas, saliency=saliency, layout=layout))
            except (KeyError, ValueError, OSError, TypeError) as exc:
                errors.append(f"entry {index}: {exc}")
    return samples, errors


def load_manifest(path, skip_invalid: bool = False) -> list[PosterSample]:
    samples, errors = load_manifest_with_errors(path)
    if errors and not skip_invalid:
        raise ManifestError("; ".join(errors))
    return samples


def split(
    samples: list[PosterSample], fractions: tuple[float, float, float], seed: int = 0
) -> dict[str, list[PosterSample]]:
    """Deterministic shuffled train/val/test split."""
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise ValueError("fractions must be three non-negative values")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {sum(fractions)}")
    order = np.random.default_rng(seed).permutation(len(samples))
    n_val = int(round(fractions[1] * len(samples)))
    n_test = int(round(fractions[2] * len(samples)))
    n_train = len(samples) - n_val - n_test
    shuffled = [samples[i] for i in order]
    return {
        "train": shuffled[:n_train],
        "val": shuffled[n_train : n_train + n_val],
        "test": shuffled[n_train + n_val :],
    }
