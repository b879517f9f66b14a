"""Layout quality metrics plus the rasterization oracle they are tested
against.

Content metrics need the canvas: occlusion is the mean saliency under the
union of element boxes; readability is the mean Sobel gradient magnitude of
the background inside text boxes. Graphic metrics look only at the boxes:
loose/strict underlay validity and pairwise non-underlay IoU. Vacuous cases
(no underlays, no texts, fewer than two elements) score the best value so
absent element classes are not penalized.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Iterable, Sequence

import numpy as np

from .canvas import Raster
from .geometry import BBox, CONTAIN_EPS, Layout, area, contains, intersection_area, iou

ORACLE_RESOLUTION = 1024


@dataclass(frozen=True)
class MetricsReport:
    occ: float
    rea: float
    und_l: float
    und_s: float
    ove: float
    num_elements: int
    num_underlays: int
    num_texts: int

    def to_dict(self) -> dict:
        return asdict(self)


def rasterize(boxes: Iterable[BBox], resolution: int) -> np.ndarray:
    """Boolean coverage mask of the box union under the pixel-center rule."""
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    mask = np.zeros((resolution, resolution), dtype=bool)
    for b in boxes:
        x0, y0, x1, y1 = b.corners()
        # pixel (i, j) has center ((j+.5)/res, (i+.5)/res)
        j0 = int(np.ceil(x0 * resolution - 0.5))
        j1 = int(np.floor(x1 * resolution - 0.5))
        i0 = int(np.ceil(y0 * resolution - 0.5))
        i1 = int(np.floor(y1 * resolution - 0.5))
        j0, i0 = max(j0, 0), max(i0, 0)
        j1, i1 = min(j1, resolution - 1), min(i1, resolution - 1)
        if j1 >= j0 and i1 >= i0:
            mask[i0 : i1 + 1, j0 : j1 + 1] = True
    return mask


def occlusion(layout: Layout, saliency: Raster) -> float:
    """Mean saliency over pixels covered by the union of element boxes."""
    if saliency.channels != 1:
        raise ValueError("saliency must be single-channel")
    if len(layout) == 0:
        return 0.0
    h, w = saliency.height, saliency.width
    sal = saliency.data[:, :, 0]
    covered = np.zeros((h, w), dtype=bool)
    for e in layout:
        x0, y0, x1, y1 = e.box.corners()
        j0 = max(int(np.ceil(x0 * w - 0.5)), 0)
        j1 = min(int(np.floor(x1 * w - 0.5)), w - 1)
        i0 = max(int(np.ceil(y0 * h - 0.5)), 0)
        i1 = min(int(np.floor(y1 * h - 0.5)), h - 1)
        if j1 >= j0 and i1 >= i0:
            covered[i0 : i1 + 1, j0 : j1 + 1] = True
    n = int(covered.sum())
    if n == 0:
        return 0.0
    return float(sal[covered].sum() / n)


def _sobel_magnitude(gray: np.ndarray) -> np.ndarray:
    """3x3 Sobel gradient magnitude with edge replication."""
    padded = np.pad(gray.astype(np.float64), 1, mode="edge")
    # horizontal gradient kernel [[-1,0,1],[-2,0,2],[-1,0,1]]
    gx = (
        (padded[:-2, 2:] - padded[:-2, :-2])
        + 2.0 * (padded[1:-1, 2:] - padded[1:-1, :-2])
        + (padded[2:, 2:] - padded[2:, :-2])
    )
    gy = (
        (padded[2:, :-2] - padded[:-2, :-2])
        + 2.0 * (padded[2:, 1:-1] - padded[:-2, 1:-1])
        + (padded[2:, 2:] - padded[:-2, 2:])
    )
    return np.sqrt(gx * gx + gy * gy)


def readability(layout: Layout, canvas: Raster) -> float:
    """Mean background gradient magnitude within text boxes; 0 with no text."""
    if canvas.channels != 3:
        raise ValueError("canvas must have 3 channels")
    texts = layout.by_category("text")
    if not texts:
        return 0.0
    gray = (
        0.299 * canvas.data[:, :, 0]
        + 0.587 * canvas.data[:, :, 1]
        + 0.114 * canvas.data[:, :, 2]
    )
    grad = _sobel_magnitude(gray)
    h, w = canvas.height, canvas.width
    covered = np.zeros((h, w), dtype=bool)
    for e in texts:
        x0, y0, x1, y1 = e.box.corners()
        j0 = max(int(np.ceil(x0 * w - 0.5)), 0)
        j1 = min(int(np.floor(x1 * w - 0.5)), w - 1)
        i0 = max(int(np.ceil(y0 * h - 0.5)), 0)
        i1 = min(int(np.floor(y1 * h - 0.5)), h - 1)
        if j1 >= j0 and i1 >= i0:
            covered[i0 : i1 + 1, j0 : j1 + 1] = True
    if not covered.any():
        return 0.0
    return float(grad[covered].mean())


def underlay_loose(layout: Layout) -> float:
    """Per underlay: best covered-area ratio of any non-underlay element."""
    unders = layout.by_category("underlay")
    others = [e for e in layout if e.category != "underlay"]
    if not unders:
        return 1.0
    scores = []
    for u in unders:
        best = 0.0
        for o in others:
            a = area(o.box)
            if a <= 0:
                continue
            best = max(best, intersection_area(u.box, o.box) / a)
        scores.append(min(best, 1.0))
    # sorted reduction keeps the mean bitwise permutation-invariant
    return float(np.mean(sorted(scores)))


def underlay_strict(layout: Layout, eps: float = CONTAIN_EPS) -> float:
    """Per underlay: 1 iff it entirely covers some non-underlay element."""
    unders = layout.by_category("underlay")
    others = [e for e in layout if e.category != "underlay"]
    if not unders:
        return 1.0
    scores = [
        1.0 if any(contains(u.box, o.box, eps) for o in others) else 0.0 for u in unders
    ]
    return float(np.mean(sorted(scores)))


def overlay(layout: Layout) -> float:
    """Mean IoU over unordered pairs of non-underlay elements."""
    boxes = [e.box for e in layout if e.category != "underlay"]
    if len(boxes) < 2:
        return 0.0
    vals = [iou(boxes[i], boxes[j]) for i in range(len(boxes)) for j in range(i + 1, len(boxes))]
    return float(np.mean(sorted(vals)))


def evaluate_layout(layout: Layout, canvas: Raster, saliency: Raster) -> MetricsReport:
    return MetricsReport(
        occ=occlusion(layout, saliency),
        rea=readability(layout, canvas),
        und_l=underlay_loose(layout),
        und_s=underlay_strict(layout),
        ove=overlay(layout),
        num_elements=len(layout),
        num_underlays=len(layout.by_category("underlay")),
        num_texts=len(layout.by_category("text")),
    )


def aggregate_reports(reports: Sequence[MetricsReport]) -> dict:
    """Per-metric means plus totals; empty input yields zero counts."""
    if not reports:
        return {
            "count": 0,
            "occ": 0.0,
            "rea": 0.0,
            "und_l": 0.0,
            "und_s": 0.0,
            "ove": 0.0,
            "num_elements": 0,
        }
    return {
        "count": len(reports),
        "occ": float(np.mean([r.occ for r in reports])),
        "rea": float(np.mean([r.rea for r in reports])),
        "und_l": float(np.mean([r.und_l for r in reports])),
        "und_s": float(np.mean([r.und_s for r in reports])),
        "ove": float(np.mean([r.ove for r in reports])),
        "num_elements": int(sum(r.num_elements for r in reports)),
    }
