"""Finite-difference verification of the autodiff engine, block by block.

Values are drawn in float32; both the analytic and finite-difference paths
then run the same ops in float64 so the comparison isolates gradient math
from float rounding. The corrupt flag perturbs one analytic gradient
coordinate as a negative control.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, asdict
from typing import Callable

import numpy as np

from . import numerics as nm
from .model import ModelConfig, NoiseModel
from .numerics import Tensor

DEFAULT_TOL = 1e-3
FD_STEP = 1e-3


@dataclass
class BlockReport:
    name: str
    max_rel_err: float
    coords_checked: int
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _draw_f32(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.standard_normal(shape).astype(np.float32).astype(np.float64)


def _check_block(
    name: str,
    build_loss: Callable[[], Tensor],
    leaves: dict[str, Tensor],
    rng: np.random.Generator,
    n_coords: int,
    tol: float,
    corrupt: bool,
) -> BlockReport:
    for leaf in leaves.values():
        leaf.zero_grad()
    loss = build_loss()
    nm.backward(loss)
    grads = {k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data)) for k, t in leaves.items()}
    if corrupt:
        key = sorted(grads)[0]
        flat = grads[key].reshape(-1)
        flat[0] += 0.05

    names = sorted(leaves)
    sizes = np.array([leaves[k].data.size for k in names], dtype=np.float64)
    probs = sizes / sizes.sum()
    max_rel = 0.0
    for _ in range(n_coords):
        key = names[rng.choice(len(names), p=probs)]
        t = leaves[key]
        flat = t.data.reshape(-1)
        k = int(rng.integers(0, flat.size))
        orig = flat[k]
        flat[k] = orig + FD_STEP
        lp = build_loss().item()
        flat[k] = orig - FD_STEP
        lm = build_loss().item()
        flat[k] = orig
        fd = (lp - lm) / (2 * FD_STEP)
        a = float(grads[key].reshape(-1)[k])
        denom = max(abs(a), abs(fd))
        if denom < 1e-8:
            continue
        max_rel = max(max_rel, abs(a - fd) / denom)
    return BlockReport(name=name, max_rel_err=max_rel, coords_checked=n_coords, passed=max_rel <= tol)


def run_gradcheck(seed: int = 0, corrupt: bool = False, tol: float = DEFAULT_TOL, coords_per_block: int = 120) -> dict:
    """Per-block finite-difference report; overall pass requires every block."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(
        d_model=16, gnn_layers=1, attn_heads=2, resolution=16, patch_size=8,
        max_elements=3, timesteps=10,
    )
    model = NoiseModel(cfg, seed=seed, dtype=np.float64)
    n, d, m = cfg.max_elements, cfg.d_model, cfg.num_patches

    reports: list[BlockReport] = []

    # GNN layer over the complete salbox+element graph
    feats = Tensor(_draw_f32(rng, (1, n + 1, d)), requires_grad=True, name="feats")
    w_gnn = _draw_f32(rng, (1, n + 1, d))
    gnn_leaves = {
        "feats": feats,
        "msg.src": model.store.get("blm.l0.msg.src"),
        "msg.b": model.store.get("blm.l0.msg.b"),
        "upd1.w": model.store.get("blm.l0.upd1.w"),
        "ln.gain": model.store.get("blm.l0.ln.gain"),
    }
    reports.append(
        _check_block(
            "gnn_layer",
            lambda: nm.sum_reduce(nm.mul(model.gnn_message_pass(model._g_blm, feats, "blm"), Tensor(w_gnn))),
            gnn_leaves, rng, coords_per_block, tol, corrupt,
        )
    )

    # cross attention (multi-head attention + norms + MLP)
    h_blm = Tensor(_draw_f32(rng, (1, n, d)), requires_grad=True, name="h_blm")
    h_ilm = Tensor(_draw_f32(rng, (1, n, d)), requires_grad=True, name="h_ilm")
    w_attn = _draw_f32(rng, (1, n, d))
    attn_leaves = {
        "h_blm": h_blm,
        "h_ilm": h_ilm,
        "q.w": model.store.get("xa.q.w"),
        "k.w": model.store.get("xa.k.w"),
        "v.w": model.store.get("xa.v.w"),
        "mlp1.w": model.store.get("xa.mlp1.w"),
    }
    reports.append(
        _check_block(
            "attention",
            lambda: nm.sum_reduce(nm.mul(model.cross_attention(h_blm, h_ilm), Tensor(w_attn))),
            attn_leaves, rng, coords_per_block, tol, corrupt,
        )
    )

    # image encoder (patch embed + positional + transformer blocks)
    patches = Tensor(_draw_f32(rng, (1, m, cfg.patch_dim)), requires_grad=True, name="patches")
    w_img = _draw_f32(rng, (1, m, d))
    img_leaves = {
        "patches": patches,
        "patch.w": model.store.get("img.patch.w"),
        "pos_row": model.store.get("img.pos_row"),
        "qkv.w": model.store.get("img.blk0.qkv.w"),
        "mlp1.w": model.store.get("img.blk1.mlp1.w"),
    }
    reports.append(
        _check_block(
            "image_encoder",
            lambda: nm.sum_reduce(nm.mul(model.encode_image(patches), Tensor(w_img))),
            img_leaves, rng, coords_per_block, tol, corrupt,
        )
    )

    # layout + bbox encoders
    x_state = Tensor(_draw_f32(rng, (1, n, 5)), requires_grad=True, name="x_state")
    salbox = Tensor(_draw_f32(rng, (1, 4)), requires_grad=True, name="salbox")
    w_lay = _draw_f32(rng, (1, n, d))
    w_bb = _draw_f32(rng, (1, 1, d))
    enc_leaves = {
        "x_state": x_state,
        "salbox": salbox,
        "lay.in.w": model.store.get("lay.in.w"),
        "bb.in.w": model.store.get("bb.in.w"),
    }

    def enc_loss():
        lay = nm.sum_reduce(nm.mul(model.encode_layout(x_state, np.array([3])), Tensor(w_lay)))
        bb = nm.sum_reduce(nm.mul(model.encode_bbox(salbox), Tensor(w_bb)))
        return nm.add(lay, bb)

    reports.append(_check_block("encoders", enc_loss, enc_leaves, rng, coords_per_block, tol, corrupt))

    # layer norm in isolation
    ln_x = Tensor(_draw_f32(rng, (4, d)), requires_grad=True, name="ln_x")
    ln_gain = Tensor(_draw_f32(rng, (d,)), requires_grad=True, name="ln_gain")
    ln_bias = Tensor(_draw_f32(rng, (d,)), requires_grad=True, name="ln_bias")
    w_ln = _draw_f32(rng, (4, d))
    reports.append(
        _check_block(
            "layer_norm",
            lambda: nm.sum_reduce(nm.mul(nm.layer_norm(ln_x, ln_gain, ln_bias), Tensor(w_ln))),
            {"x": ln_x, "gain": ln_gain, "bias": ln_bias},
            rng, coords_per_block, tol, corrupt,
        )
    )

    # full noise predictor end to end, gradients w.r.t. sampled parameters
    x_full = _draw_f32(rng, (1, n, 5))
    patch_full = _draw_f32(rng, (1, m, cfg.patch_dim))
    sal_full = _draw_f32(rng, (1, 4))
    w_full = _draw_f32(rng, (1, n, 5))
    full_leaves = {name: model.store.get(name) for name in model.store.names()}

    def full_loss():
        f_img = model.encode_image(patch_full)
        f_bb = model.encode_bbox(sal_full)
        eps = model.predict_noise_from_features(x_full, np.array([2]), f_img, f_bb)
        return nm.sum_reduce(nm.mul(eps, Tensor(w_full)))

    reports.append(_check_block("full_model", full_loss, full_leaves, rng, coords_per_block, tol, corrupt))

    elapsed = time.perf_counter() - start
    return {
        "passed": all(r.passed for r in reports),
        "tolerance": tol,
        "fd_step": FD_STEP,
        "seed": seed,
        "corrupt": corrupt,
        "elapsed_s": elapsed,
        "blocks": [r.to_dict() for r in reports],
    }
