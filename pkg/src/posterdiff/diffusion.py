"""Forward noising, training objective, reverse sampling, and the
task-adaptive constraint masking that realizes every constraint task.

Layout states are (N, 5) float rows [c, cx, cy, w, h] in model space:
boxes mapped from [0,1] to [-1,1], categories placed on equally spaced
bins in [-1,1]. User constraints are enforced by overwriting the state
wherever the task mask is 1, at initialization and after every denoising
step, so constrained entries stay bit-identical to the encoded user values
throughout the trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import numerics as nm
from .geometry import BBox, CATEGORIES, Element, Layout, clamp_to_canvas
from .model import Conditioning, NoiseModel
from .numerics import Tensor

TASKS = ("c_to_sp", "cs_to_p", "completion", "refinement", "unconstrained")

DEFAULT_TIMESTEPS = 100
DEFAULT_REFINE_STRENGTH = 0.1


@dataclass(frozen=True)
class DiffusionSchedule:
    """Variance-preserving noise schedule; index 0 is the identity sentinel."""

    timesteps: int
    betas: np.ndarray  # (T+1,), betas[0] == 0
    alphas: np.ndarray  # (T+1,), 1 - betas
    alpha_bars: np.ndarray  # (T+1,), cumulative product, alpha_bars[0] == 1

    def __post_init__(self):
        b = self.betas[1:]
        if not ((b > 0).all() and (b < 1).all()):
            raise ValueError("betas must lie in (0,1)")
        if not (np.diff(b) >= 0).all():
            raise ValueError("betas must be monotone non-decreasing")
        if not (np.diff(self.alpha_bars) < 0).all():
            raise ValueError("alpha_bars must be strictly decreasing")

    @classmethod
    def linear(
        cls,
        timesteps: int = DEFAULT_TIMESTEPS,
        beta_start: Optional[float] = None,
        beta_end: Optional[float] = None,
    ) -> "DiffusionSchedule":
        """Linear betas; defaults rescale the canonical 1000-step range
        (1e-4, 0.02) by 1000/T so that alpha_bar at T stays below 0.01."""
        scale = 1000.0 / timesteps
        if beta_start is None:
            beta_start = 1e-4 * scale
        if beta_end is None:
            beta_end = min(0.02 * scale, 0.5)
        betas = np.concatenate([[0.0], np.linspace(beta_start, beta_end, timesteps)]).astype(np.float64)
        alphas = 1.0 - betas
        alpha_bars = np.cumprod(alphas)
        return cls(timesteps=timesteps, betas=betas, alphas=alphas, alpha_bars=alpha_bars)

    def to_dict(self) -> dict:
        return {"timesteps": self.timesteps, "betas": self.betas[1:].tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "DiffusionSchedule":
        betas = np.concatenate([[0.0], np.asarray(d["betas"], dtype=np.float64)])
        alphas = 1.0 - betas
        return cls(
            timesteps=int(d["timesteps"]),
            betas=betas,
            alphas=alphas,
            alpha_bars=np.cumprod(alphas),
        )


class CategoryCodec:
    """Category labels on equally spaced values in [-1, 1]; decode snaps to
    the nearest bin."""

    def __init__(self, labels: Sequence[str] = CATEGORIES):
        if len(labels) < 2:
            raise ValueError("need at least two categories")
        self.labels = tuple(labels)
        self.values = np.linspace(-1.0, 1.0, len(labels))
        self._index = {lab: i for i, lab in enumerate(labels)}

    def encode(self, label: str) -> float:
        return float(self.values[self._index[label]])

    def decode(self, value: float) -> str:
        return self.labels[int(np.argmin(np.abs(self.values - value)))]


@dataclass(frozen=True)
class ConstraintSpec:
    """A constraint task plus the encoded user anchor values."""

    task: str
    x_user: np.ndarray  # (N, 5) model space; zeros-encoded where unspecified
    anchor_flags: np.ndarray  # (N,) bool; meaningful for completion only

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.x_user.ndim != 2 or self.x_user.shape[1] != 5:
            raise ValueError(f"x_user must be (N,5), got {self.x_user.shape}")
        if not np.isfinite(self.x_user).all():
            raise ValueError("x_user must be finite")
        if self.anchor_flags.shape != (self.x_user.shape[0],):
            raise ValueError("anchor_flags must have one entry per element row")

    @property
    def n(self) -> int:
        return self.x_user.shape[0]

    @staticmethod
    def unconstrained(n: int) -> "ConstraintSpec":
        return ConstraintSpec("unconstrained", np.zeros((n, 5), dtype=np.float32), np.zeros(n, dtype=bool))

    @staticmethod
    def from_layout(
        task: str,
        layout: Layout,
        n: int,
        codec: Optional[CategoryCodec] = None,
        anchored: Optional[Sequence[bool]] = None,
    ) -> "ConstraintSpec":
        codec = codec or CategoryCodec()
        x_user = encode_layout_state(layout, n, codec)
        flags = np.zeros(n, dtype=bool)
        if anchored is not None:
            if len(anchored) != len(layout):
                raise ValueError("anchored flags must match layout length")
            flags[: len(layout)] = np.asarray(anchored, dtype=bool)
        return ConstraintSpec(task, x_user, flags)


def encode_layout_state(layout: Layout, n: int, codec: Optional[CategoryCodec] = None) -> np.ndarray:
    """Pad/encode a layout into the (N, 5) model-space state."""
    codec = codec or CategoryCodec()
    if len(layout) > n:
        raise ValueError(f"layout has {len(layout)} elements, exceeds capacity {n}")
    x = np.empty((n, 5), dtype=np.float32)
    x[:, 0] = codec.encode("empty")
    x[:, 1:] = -1.0  # zero box in canvas space
    for i, e in enumerate(layout):
        x[i, 0] = codec.encode(e.category)
        x[i, 1] = 2.0 * e.box.cx - 1.0
        x[i, 2] = 2.0 * e.box.cy - 1.0
        x[i, 3] = 2.0 * e.box.w - 1.0
        x[i, 4] = 2.0 * e.box.h - 1.0
    return x


def decode_layout_state(x: np.ndarray, codec: Optional[CategoryCodec] = None) -> Layout:
    """Nearest-bin category decode; boxes clamped to the canvas; empty rows dropped."""
    codec = codec or CategoryCodec()
    elements = []
    for row in np.asarray(x, dtype=np.float64):
        label = codec.decode(row[0])
        if label == "empty":
            continue
        cx = (row[1] + 1.0) / 2.0
        cy = (row[2] + 1.0) / 2.0
        w = max((row[3] + 1.0) / 2.0, 0.0)
        h = max((row[4] + 1.0) / 2.0, 0.0)
        elements.append(Element(label, clamp_to_canvas(BBox(cx, cy, w, h))))
    return Layout(elements)


def build_mask(spec: ConstraintSpec, n: int) -> np.ndarray:
    """Binary (N, 5) mask of the entries the task pins to the user values."""
    if spec.n != n:
        raise ValueError(f"spec covers {spec.n} rows, expected {n}")
    m = np.zeros((n, 5), dtype=np.float32)
    if spec.task == "c_to_sp":
        m[:, 0] = 1.0
    elif spec.task == "cs_to_p":
        m[:, [0, 3, 4]] = 1.0
    elif spec.task == "completion":
        m[spec.anchor_flags] = 1.0
    elif spec.task in ("refinement", "unconstrained"):
        pass
    else:  # pragma: no cover - guarded by ConstraintSpec
        raise ValueError(f"unknown task {spec.task!r}")
    return m


def apply_mask(x_hat: np.ndarray, x_user: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """x <- M*x_user + (1-M)*x_hat, exact (bitwise) where M = 1."""
    if x_hat.shape != x_user.shape or x_hat.shape != mask.shape:
        raise ValueError(f"shape mismatch: {x_hat.shape}, {x_user.shape}, {mask.shape}")
    return np.where(mask == 1.0, x_user, x_hat)


def forward_noise(x0: np.ndarray, t, eps: np.ndarray, sched: DiffusionSchedule) -> np.ndarray:
    """Closed-form noisy state sqrt(ab_t) x0 + sqrt(1 - ab_t) eps.

    Accepts t == 0 (identity) for the clean-limit convention.
    """
    t_arr = np.asarray(t)
    if (t_arr < 0).any() or (t_arr > sched.timesteps).any():
        raise ValueError(f"t must lie in [0, {sched.timesteps}]")
    ab = sched.alpha_bars[t_arr]
    if t_arr.ndim:  # per-sample timestep over a batch
        ab = ab.reshape((-1,) + (1,) * (x0.ndim - 1))
    return (np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps).astype(x0.dtype)


@dataclass
class TrainingBatch:
    """One optimizer step's worth of encoded samples."""

    x0: np.ndarray  # (B, N, 5)
    cond: Conditioning
    masks: np.ndarray  # (B, N, 5) constraint masks, x_user == x0 at train time
    loss_weight: np.ndarray  # (B, N, 5) entries included in the loss


def training_step(model: NoiseModel, sched: DiffusionSchedule, batch: TrainingBatch, rng: np.random.Generator) -> float:
    """Noise-prediction MSE over weighted entries; leaves gradients in the store."""
    x0 = batch.x0
    b = x0.shape[0]
    t = rng.integers(1, sched.timesteps + 1, size=b)
    eps = rng.standard_normal(x0.shape).astype(x0.dtype)
    x_t = forward_noise(x0, t, eps, sched)
    # teacher-inject the constrained entries with clean values
    x_t = batch.masks * x0 + (1.0 - batch.masks) * x_t
    weight = batch.loss_weight * (1.0 - batch.masks)
    total = float(weight.sum())
    model.store.zero_grads()
    if total == 0.0:
        return 0.0
    eps_hat = model.predict_noise(x_t, t, batch.cond)
    diff = nm.add(eps_hat, Tensor(-eps))
    weighted = nm.mul(nm.mul(diff, diff), Tensor(weight))
    loss = nm.mul(nm.sum_reduce(weighted), 1.0 / total)
    nm.backward(loss)
    return loss.item()


PredictFn = Callable[[np.ndarray, int], np.ndarray]


def reverse_loop(
    predict_fn: PredictFn,
    x: np.ndarray,
    t_start: int,
    sched: DiffusionSchedule,
    rng: np.random.Generator,
    x_user: np.ndarray,
    mask: np.ndarray,
    deterministic: bool = False,
    record: bool = True,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Ancestral reverse updates from t_start down to 1, re-applying the
    constraint mask after every step. Returns the final state and the
    recorded (post-mask) trajectory, initial state included."""
    x = apply_mask(x, x_user, mask)
    trajectory = [x.copy()] if record else []
    for t in range(t_start, 0, -1):
        eps_hat = predict_fn(x, t)
        beta = sched.betas[t]
        alpha = sched.alphas[t]
        ab = sched.alpha_bars[t]
        mean = (x - beta / np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(alpha)
        if t > 1 and not deterministic:
            z = rng.standard_normal(x.shape)
            x = mean + np.sqrt(beta) * z
        else:
            x = mean
        x = apply_mask(x.astype(np.float32), x_user, mask)
        if record:
            trajectory.append(x.copy())
    return x, trajectory


@dataclass
class SampleResult:
    layout: Layout
    state: np.ndarray
    trajectory: list[np.ndarray] = field(repr=False)


def _model_predictor(model: NoiseModel, cond: Conditioning) -> PredictFn:
    f_image, f_bbox = model.encode_conditioning(cond)
    f_image = f_image.detach()
    f_bbox = f_bbox.detach()

    def predict(x: np.ndarray, t: int) -> np.ndarray:
        return model.predict_noise_from_features(x, t, f_image, f_bbox).data

    return predict


def sample(
    model: NoiseModel,
    sched: DiffusionSchedule,
    cond: Conditioning,
    spec: ConstraintSpec,
    seed: int = 0,
    codec: Optional[CategoryCodec] = None,
    deterministic: bool = False,
    record_trajectory: bool = True,
) -> SampleResult:
    """Constrained generation of one layout; deterministic per seed."""
    n = model.cfg.max_elements
    if spec.n != n:
        raise ValueError(f"constraint spec covers {spec.n} rows, model expects {n}")
    rng = np.random.default_rng(seed)
    mask = build_mask(spec, n)
    x = rng.standard_normal((n, 5)).astype(np.float32)
    predict = _model_predictor(model, cond)
    x, trajectory = reverse_loop(
        predict,
        x,
        sched.timesteps,
        sched,
        rng,
        spec.x_user,
        mask,
        deterministic=deterministic,
        record=record_trajectory,
    )
    return SampleResult(decode_layout_state(x, codec), x, trajectory)


def refine(
    model: NoiseModel,
    sched: DiffusionSchedule,
    cond: Conditioning,
    initial: Layout,
    strength: float = DEFAULT_REFINE_STRENGTH,
    seed: int = 0,
    codec: Optional[CategoryCodec] = None,
    record_trajectory: bool = True,
) -> SampleResult:
    """Re-noise an existing layout to an intermediate step and denoise it back."""
    if not 0 < strength <= 1:
        raise ValueError(f"strength must lie in (0,1], got {strength}")
    if len(initial) == 0:
        raise ValueError("refinement needs a non-empty initial layout")
    n = model.cfg.max_elements
    codec = codec or CategoryCodec()
    x0 = encode_layout_state(initial, n, codec)
    t_r = max(1, round(strength * sched.timesteps))
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal(x0.shape).astype(np.float32)
    x = forward_noise(x0, t_r, eps, sched)
    zero_user = np.zeros((n, 5), dtype=np.float32)
    zero_mask = np.zeros((n, 5), dtype=np.float32)
    predict = _model_predictor(model, cond)
    x, trajectory = reverse_loop(
        predict, x, t_r, sched, rng, zero_user, zero_mask, record=record_trajectory
    )
    return SampleResult(decode_layout_state(x, codec), x, trajectory)
