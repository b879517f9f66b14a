"""Shared test fixtures helpers."""

from __future__ import annotations

import numpy as np

from posterdiff.canvas import Raster, compose_four_channel, extract_salbox
from posterdiff.model import Conditioning, ModelConfig


def make_cond(cfg: ModelConfig, seed: int = 0, batch: int = 1) -> Conditioning:
    """Random canvas with one bright salient block."""
    rng = np.random.default_rng(seed)
    conds = []
    for _ in range(batch):
        canvas = Raster(rng.random((cfg.resolution, cfg.resolution, 3)).astype(np.float32))
        sal = np.zeros((cfg.resolution, cfg.resolution, 1), dtype=np.float32)
        r0, c0 = rng.integers(0, cfg.resolution // 2, 2)
        sal[r0 : r0 + 8, c0 : c0 + 8] = 1.0
        sal_raster = Raster(sal)
        img4 = compose_four_channel(canvas, sal_raster)
        conds.append(Conditioning.from_raster(img4, extract_salbox(sal_raster), cfg))
    return Conditioning.stack(conds)
