"""Conditional noise-prediction network.

Three encoders (image patches, layout state, salient-region box) feed two
GNN modules: one over the complete salbox+elements graph, one over the
patch-grid+elements graph. A cross-attention block fuses the two element
feature sets before the per-element noise head. There is deliberately no
element-index positional term anywhere, so the network is equivariant under
element permutations.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from . import numerics as nm
from .canvas import Raster, patchify
from .geometry import BBox, center_sentinel_box
from .graph import LayoutGraph, build_blm_graph, build_ilm_graph
from .numerics import ParameterStore, Tensor


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 64
    gnn_layers: int = 2
    attn_heads: int = 4
    resolution: int = 64
    patch_size: int = 8
    max_elements: int = 10
    num_categories: int = 4
    timesteps: int = 100
    attn_direction: str = "blm_query"  # which branch supplies attention queries
    mlp_ratio: int = 2

    def __post_init__(self):
        if self.d_model % self.attn_heads:
            raise ValueError("d_model must be divisible by attn_heads")
        if self.max_elements < 1:
            raise ValueError("max_elements must be >= 1")
        if self.num_categories < 2:
            raise ValueError("need at least two categories (including empty)")
        if self.resolution % self.patch_size:
            raise ValueError("resolution must be divisible by patch_size")
        if self.attn_direction not in ("blm_query", "ilm_query"):
            raise ValueError(f"unknown attn_direction {self.attn_direction!r}")

    @property
    def grid(self) -> int:
        return self.resolution // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid * self.grid

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * 4

    @classmethod
    def tiny(cls, **overrides) -> "ModelConfig":
        """Small preset for CPU training runs."""
        base = dict(d_model=32, resolution=32, patch_size=8)
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass(frozen=True)
class Conditioning:
    """Batched model-side view of canvas conditioning."""

    patches: np.ndarray  # (B, M, patch_dim) float32
    salbox: np.ndarray  # (B, 4) float32, (cx, cy, w, h)

    @property
    def batch(self) -> int:
        return self.patches.shape[0]

    @staticmethod
    def from_raster(img4: Raster, salbox: Optional[BBox], cfg: ModelConfig) -> "Conditioning":
        if (img4.height, img4.width, img4.channels) != (cfg.resolution, cfg.resolution, 4):
            raise ValueError(
                f"expected {cfg.resolution}x{cfg.resolution}x4 conditioning image, "
                f"got {img4.height}x{img4.width}x{img4.channels}"
            )
        grid = patchify(img4, cfg.patch_size)
        box = salbox if salbox is not None else center_sentinel_box()
        return Conditioning(
            patches=grid.patches[None, :, :].astype(np.float32),
            salbox=np.array([[box.cx, box.cy, box.w, box.h]], dtype=np.float32),
        )

    @staticmethod
    def stack(conds: Sequence["Conditioning"]) -> "Conditioning":
        return Conditioning(
            patches=np.concatenate([c.patches for c in conds], axis=0),
            salbox=np.concatenate([c.salbox for c in conds], axis=0),
        )


class NoiseModel:
    """Noise predictor over padded N-element layout states."""

    def __init__(self, cfg: ModelConfig, seed: int = 0, dtype=nm.DEFAULT_DTYPE):
        self.cfg = cfg
        self.store = ParameterStore(seed=seed, dtype=dtype)
        self._g_blm = build_blm_graph(cfg.max_elements)
        self._g_ilm = build_ilm_graph(cfg.grid, cfg.grid, cfg.max_elements)
        self._edges_blm = self._g_blm.directed_edges()
        self._edges_ilm = self._g_ilm.directed_edges()
        self._build_params()

    # ---------------------------------------------------------------- params

    def _linear(self, name: str, d_in: int, d_out: int) -> None:
        self.store.create(f"{name}.w", (d_in, d_out))
        self.store.create_zeros(f"{name}.b", (d_out,))

    def _norm(self, name: str, d: int) -> None:
        self.store.create_full(f"{name}.gain", (d,), 1.0)
        self.store.create_zeros(f"{name}.bias", (d,))

    def _build_params(self) -> None:
        c = self.cfg
        d = c.d_model
        self._linear("img.patch", c.patch_dim, d)
        self.store.create("img.pos_row", (c.grid, d), scale=0.02)
        self.store.create("img.pos_col", (c.grid, d), scale=0.02)
        for b in range(2):
            self._norm(f"img.blk{b}.ln1", d)
            self._linear(f"img.blk{b}.qkv", d, 3 * d)
            self._linear(f"img.blk{b}.out", d, d)
            self._norm(f"img.blk{b}.ln2", d)
            self._linear(f"img.blk{b}.mlp1", d, c.mlp_ratio * d)
            self._linear(f"img.blk{b}.mlp2", c.mlp_ratio * d, d)
        self._linear("lay.in", 5, d)
        self._linear("lay.out", d, d)
        self._linear("bb.in", 4, d)
        self._linear("bb.out", d, d)
        for mod in ("blm", "ilm"):
            for l in range(c.gnn_layers):
                p = f"{mod}.l{l}"
                self.store.create(f"{p}.msg.src", (d, d))
                self.store.create(f"{p}.msg.dst", (d, d))
                self.store.create_zeros(f"{p}.msg.b", (d,))
                self._linear(f"{p}.upd1", 2 * d, d)
                self._linear(f"{p}.upd2", d, d)
                self._norm(f"{p}.ln", d)
        for proj in ("q", "k", "v", "out"):
            self._linear(f"xa.{proj}", d, d)
        self._norm("xa.ln1", d)
        self._linear("xa.mlp1", d, c.mlp_ratio * d)
        self._linear("xa.mlp2", c.mlp_ratio * d, d)
        self._norm("xa.ln2", d)
        self._linear("head", d, 5)

    def _lin(self, name: str, x: Tensor) -> Tensor:
        return nm.add(nm.matmul(x, self.store.get(f"{name}.w")), self.store.get(f"{name}.b"))

    def _ln(self, name: str, x: Tensor) -> Tensor:
        return nm.layer_norm(x, self.store.get(f"{name}.gain"), self.store.get(f"{name}.bias"))

    def num_parameters(self) -> int:
        return self.store.num_parameters()

    # -------------------------------------------------------------- encoders

    def _attention(self, q: Tensor, k: Tensor, v: Tensor) -> Tensor:
        """Multi-head scaled dot-product attention over (B, L, d) inputs."""
        heads = self.cfg.attn_heads
        dk = self.cfg.d_model // heads
        b, lq = q.shape[0], q.shape[1]
        lk = k.shape[1]

        def split(x: Tensor, length: int) -> Tensor:
            x = nm.reshape(x, (b, length, heads, dk))
            return nm.transpose(x, (0, 2, 1, 3))

        qh, kh, vh = split(q, lq), split(k, lk), split(v, lk)
        scores = nm.mul(nm.matmul(qh, nm.transpose(kh, (0, 1, 3, 2))), 1.0 / np.sqrt(dk))
        attn = nm.softmax(scores)
        mixed = nm.matmul(attn, vh)
        mixed = nm.transpose(mixed, (0, 2, 1, 3))
        return nm.reshape(mixed, (b, lq, self.cfg.d_model))

    def encode_image(self, patches: np.ndarray | Tensor) -> Tensor:
        """(B, M, patch_dim) patch vectors -> (B, M, d) features."""
        c = self.cfg
        x = patches if isinstance(patches, Tensor) else Tensor(np.asarray(patches, dtype=self.store.dtype))
        if len(x.shape) != 3 or x.shape[1] != c.num_patches or x.shape[2] != c.patch_dim:
            raise ValueError(f"expected (B,{c.num_patches},{c.patch_dim}) patches, got {x.shape}")
        h = self._lin("img.patch", x)
        rows = np.repeat(np.arange(c.grid), c.grid)
        cols = np.tile(np.arange(c.grid), c.grid)
        pos = nm.add(
            nm.gather_rows(self.store.get("img.pos_row"), rows),
            nm.gather_rows(self.store.get("img.pos_col"), cols),
        )
        h = nm.add(h, pos)
        for bidx in range(2):
            p = f"img.blk{bidx}"
            normed = self._ln(f"{p}.ln1", h)
            qkv = self._lin(f"{p}.qkv", normed)
            q = nm.take_slice(qkv, (slice(None), slice(None), slice(0, c.d_model)))
            k = nm.take_slice(qkv, (slice(None), slice(None), slice(c.d_model, 2 * c.d_model)))
            v = nm.take_slice(qkv, (slice(None), slice(None), slice(2 * c.d_model, 3 * c.d_model)))
            h = nm.add(h, self._lin(f"{p}.out", self._attention(q, k, v)))
            normed = self._ln(f"{p}.ln2", h)
            h = nm.add(h, self._lin(f"{p}.mlp2", nm.gelu(self._lin(f"{p}.mlp1", normed))))
        return h

    def encode_layout(self, x_t: np.ndarray | Tensor, t: np.ndarray) -> Tensor:
        """(B, N, 5) state rows + per-sample timestep -> (B, N, d)."""
        x = nm.as_tensor(x_t)
        h = self._lin("lay.out", nm.gelu(self._lin("lay.in", x)))
        temb = nm.sinusoidal_embed(np.atleast_1d(t), self.cfg.d_model, dtype=self.store.dtype)
        temb = nm.reshape(temb, (temb.shape[0], 1, self.cfg.d_model))
        return nm.add(h, temb)

    def encode_bbox(self, salbox: np.ndarray | Tensor) -> Tensor:
        """(B, 4) salbox rows -> (B, 1, d)."""
        x = salbox if isinstance(salbox, Tensor) else Tensor(np.asarray(salbox, dtype=self.store.dtype))
        x = nm.reshape(x, (-1, 1, 4))
        return self._lin("bb.out", nm.gelu(self._lin("bb.in", x)))

    # ------------------------------------------------------------------ GNNs

    def gnn_message_pass(self, graph: LayoutGraph, feats: Tensor, prefix: str,
                         edges: Optional[tuple[np.ndarray, np.ndarray]] = None) -> Tensor:
        """Per layer: per-edge messages, mean aggregation at the receiver,
        residual update, layer norm."""
        if feats.shape[-2] != graph.num_nodes:
            raise ValueError(f"feature rows {feats.shape[-2]} != graph nodes {graph.num_nodes}")
        src, dst = edges if edges is not None else graph.directed_edges()
        h = feats
        for l in range(self.cfg.gnn_layers):
            p = f"{prefix}.l{l}"
            proj_src = nm.matmul(h, self.store.get(f"{p}.msg.src"))
            proj_dst = nm.matmul(h, self.store.get(f"{p}.msg.dst"))
            msg = nm.gelu(
                nm.add(
                    nm.add(nm.gather_rows(proj_src, src), nm.gather_rows(proj_dst, dst)),
                    self.store.get(f"{p}.msg.b"),
                )
            )
            agg = nm.scatter_mean(msg, dst, graph.num_nodes)
            upd_in = nm.concat([h, agg], axis=-1)
            upd = self._lin(f"{p}.upd2", nm.gelu(self._lin(f"{p}.upd1", upd_in)))
            h = self._ln(f"{p}.ln", nm.add(h, upd))
        return h

    def blm_forward(self, f_bbox: Tensor, f_layout: Tensor) -> Tensor:
        nodes = nm.concat([f_bbox, f_layout], axis=-2)
        out = self.gnn_message_pass(self._g_blm, nodes, "blm", self._edges_blm)
        n = self.cfg.max_elements
        return nm.take_slice(out, (slice(None), slice(1, 1 + n), slice(None)))

    def ilm_forward(self, f_image: Tensor, f_layout: Tensor) -> Tensor:
        nodes = nm.concat([f_image, f_layout], axis=-2)
        out = self.gnn_message_pass(self._g_ilm, nodes, "ilm", self._edges_ilm)
        m, n = self.cfg.num_patches, self.cfg.max_elements
        return nm.take_slice(out, (slice(None), slice(m, m + n), slice(None)))

    def cross_attention(self, h_blm: Tensor, h_ilm: Tensor) -> Tensor:
        if self.cfg.attn_direction == "blm_query":
            q_in, kv_in = h_blm, h_ilm
        else:
            q_in, kv_in = h_ilm, h_blm
        attn = self._attention(self._lin("xa.q", q_in), self._lin("xa.k", kv_in), self._lin("xa.v", kv_in))
        h = self._ln("xa.ln1", nm.add(q_in, self._lin("xa.out", attn)))
        mlp = self._lin("xa.mlp2", nm.gelu(self._lin("xa.mlp1", h)))
        return self._ln("xa.ln2", nm.add(h, mlp))

    # ------------------------------------------------------------- inference

    def encode_conditioning(self, cond: Conditioning) -> tuple[Tensor, Tensor]:
        """Image + salbox features; reusable across denoising steps."""
        return self.encode_image(cond.patches), self.encode_bbox(cond.salbox)

    def predict_noise_from_features(self, x_t, t, f_image: Tensor, f_bbox: Tensor) -> Tensor:
        x = np.asarray(x_t, dtype=self.store.dtype)
        squeeze = x.ndim == 2
        if squeeze:
            x = x[None]
        n = self.cfg.max_elements
        if x.shape[1:] != (n, 5):
            raise ValueError(f"expected state shape (B,{n},5), got {x.shape}")
        f_layout = self.encode_layout(x, np.atleast_1d(t))
        h_blm = self.blm_forward(f_bbox, f_layout)
        h_ilm = self.ilm_forward(f_image, f_layout)
        fused = self.cross_attention(h_blm, h_ilm)
        eps = self._lin("head", fused)
        return nm.take_slice(eps, (0,)) if squeeze else eps

    def predict_noise(self, x_t, t, cond: Conditioning) -> Tensor:
        """Full conditional forward pass; returns predicted noise (B, N, 5)."""
        f_image, f_bbox = self.encode_conditioning(cond)
        return self.predict_noise_from_features(x_t, t, f_image, f_bbox)
