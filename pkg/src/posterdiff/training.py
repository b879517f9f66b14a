"""Training loop: per-step derived RNG streams, uniform task sampling with
teacher-injected constraints, gradient clipping, Adam, and an EMA of the
weights used for sampling.

Every randomness source at step s comes from default_rng([seed, s]), so an
interrupted run resumed from a checkpoint replays the remaining steps
bit-identically.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from .canvas import compose_four_channel, extract_salbox
from .data import PosterSample
from .diffusion import (
    CategoryCodec,
    DiffusionSchedule,
    TASKS,
    TrainingBatch,
    encode_layout_state,
    training_step,
)
from .model import Conditioning, ModelConfig, NoiseModel
from .numerics import AdamConfig, load_checkpoint, save_checkpoint


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 20_000
    batch_size: int = 32
    lr: float = 1e-3
    ema_decay: float = 0.999
    grad_clip: float = 1.0
    seed: int = 0
    # padding rows carry loss by default: without it the sampler never learns
    # to emit empty rows and every generation decodes max_elements junk boxes
    padding_in_loss: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PreparedDataset:
    """Dataset pre-encoded for batched optimizer steps."""

    x0: np.ndarray  # (S, N, 5)
    patches: np.ndarray  # (S, M, patch_dim)
    salbox: np.ndarray  # (S, 4)
    n_real: np.ndarray  # (S,)

    def __len__(self) -> int:
        return self.x0.shape[0]


def prepare_dataset(samples: list[PosterSample], cfg: ModelConfig, codec: Optional[CategoryCodec] = None) -> PreparedDataset:
    if not samples:
        raise ValueError("cannot train on an empty dataset")
    codec = codec or CategoryCodec()
    x0 = np.zeros((len(samples), cfg.max_elements, 5), dtype=np.float32)
    patches = np.zeros((len(samples), cfg.num_patches, cfg.patch_dim), dtype=np.float32)
    salbox = np.zeros((len(samples), 4), dtype=np.float32)
    n_real = np.zeros(len(samples), dtype=np.int64)
    for i, s in enumerate(samples):
        if (s.canvas.height, s.canvas.width) != (cfg.resolution, cfg.resolution):
            raise ValueError(
                f"sample {i} is {s.canvas.height}x{s.canvas.width}, model expects {cfg.resolution}"
            )
        img4 = compose_four_channel(s.canvas, s.saliency)
        cond = Conditioning.from_raster(img4, extract_salbox(s.saliency), cfg)
        patches[i] = cond.patches[0]
        salbox[i] = cond.salbox[0]
        x0[i] = encode_layout_state(s.layout, cfg.max_elements, codec)
        n_real[i] = len(s.layout)
    return PreparedDataset(x0=x0, patches=patches, salbox=salbox, n_real=n_real)


def _build_masks(rng: np.random.Generator, x0: np.ndarray, n_real: np.ndarray) -> np.ndarray:
    """Uniform per-example task draw; completion anchors a random real subset."""
    b, n, _ = x0.shape
    masks = np.zeros_like(x0)
    tasks = rng.integers(0, len(TASKS), size=b)
    for i, task_id in enumerate(tasks):
        task = TASKS[task_id]
        if task == "c_to_sp":
            masks[i, :, 0] = 1.0
        elif task == "cs_to_p":
            masks[i, :, [0, 3, 4]] = 1.0
        elif task == "completion":
            k = int(rng.integers(0, n_real[i] + 1))
            if k:
                anchored = rng.choice(n_real[i], size=k, replace=False)
                masks[i, anchored, :] = 1.0
        # refinement / unconstrained: zero mask
    return masks


class Trainer:
    def __init__(
        self,
        model: NoiseModel,
        sched: DiffusionSchedule,
        samples: list[PosterSample],
        cfg: TrainConfig,
        codec: Optional[CategoryCodec] = None,
    ):
        self.model = model
        self.sched = sched
        self.cfg = cfg
        self.codec = codec or CategoryCodec()
        self.data = prepare_dataset(samples, model.cfg, self.codec)
        self.adam = AdamConfig(lr=cfg.lr)
        self.ema = model.store.snapshot()
        self.history: list[float] = []
        self.step = 0

    def _loss_weight(self, n_real_batch: np.ndarray, shape) -> np.ndarray:
        weight = np.ones(shape, dtype=np.float32)
        if not self.cfg.padding_in_loss:
            for i, nr in enumerate(n_real_batch):
                weight[i, nr:, :] = 0.0
        return weight

    def run_step(self) -> float:
        rng = np.random.default_rng([self.cfg.seed, self.step])
        idx = rng.integers(0, len(self.data), size=self.cfg.batch_size)
        x0 = self.data.x0[idx]
        cond = Conditioning(self.data.patches[idx], self.data.salbox[idx])
        masks = _build_masks(rng, x0, self.data.n_real[idx])
        batch = TrainingBatch(
            x0=x0,
            cond=cond,
            masks=masks,
            loss_weight=self._loss_weight(self.data.n_real[idx], x0.shape),
        )
        loss = training_step(self.model, self.sched, batch, rng)
        self.model.store.clip_global_norm(self.cfg.grad_clip)
        self.model.store.adam_step(self.adam)
        d = self.cfg.ema_decay
        for name, p in self.model.store.items():
            ema = self.ema[name]
            ema *= d
            ema += (1.0 - d) * p.data
        self.step += 1
        self.history.append(loss)
        return loss

    def run(self, steps: Optional[int] = None, progress: Optional[Callable[[int, float], None]] = None) -> list[float]:
        target = self.cfg.steps if steps is None else self.step + steps
        while self.step < target:
            loss = self.run_step()
            if progress is not None:
                progress(self.step, loss)
        return self.history

    # ------------------------------------------------------------ checkpoint

    def save(self, path) -> None:
        tensors = self.model.store.state_tensors()
        for name, arr in self.ema.items():
            tensors[f"ema.{name}"] = arr
        config = {
            "model": self.model.cfg.to_dict(),
            "schedule": self.sched.to_dict(),
            "train": self.cfg.to_dict(),
            "step": self.step,
        }
        save_checkpoint(path, tensors, config)

    @classmethod
    def resume(cls, path, samples: list[PosterSample]) -> "Trainer":
        tensors, config = load_checkpoint(path)
        model_cfg = ModelConfig.from_dict(config["model"])
        sched = DiffusionSchedule.from_dict(config["schedule"])
        cfg = TrainConfig(**config["train"])
        model = NoiseModel(model_cfg, seed=cfg.seed)
        trainer = cls(model, sched, samples, cfg)
        model.store.load_state_tensors(tensors, step_count=config["step"])
        trainer.step = config["step"]
        trainer.ema = {
            name: tensors[f"ema.{name}"].copy() for name in model.store.names()
        }
        return trainer


def save_model(path, model: NoiseModel, sched: DiffusionSchedule, ema: Optional[dict] = None, extra: Optional[dict] = None) -> None:
    """Inference-only checkpoint (parameters plus optional EMA weights)."""
    tensors = {name: p.data for name, p in model.store.items()}
    if ema is not None:
        for name, arr in ema.items():
            tensors[f"ema.{name}"] = arr
    config = {"model": model.cfg.to_dict(), "schedule": sched.to_dict()}
    if extra:
        config.update(extra)
    save_checkpoint(path, tensors, config)


def load_model(path, use_ema: bool = True) -> tuple[NoiseModel, DiffusionSchedule, dict]:
    """Rebuild a model for inference; prefers EMA weights when present."""
    tensors, config = load_checkpoint(path)
    cfg = ModelConfig.from_dict(config["model"])
    sched = DiffusionSchedule.from_dict(config["schedule"])
    model = NoiseModel(cfg, seed=0)
    values = {}
    for name in model.store.names():
        key = f"ema.{name}" if use_ema and f"ema.{name}" in tensors else name
        if key not in tensors:
            raise KeyError(f"checkpoint missing tensor for parameter {name!r}")
        values[name] = tensors[key]
    model.store.load_snapshot(values)
    return model, sched, config


def train_model(
    samples: list[PosterSample],
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    sched: Optional[DiffusionSchedule] = None,
    progress: Optional[Callable[[int, float], None]] = None,
) -> Trainer:
    sched = sched or DiffusionSchedule.linear(model_cfg.timesteps)
    model = NoiseModel(model_cfg, seed=train_cfg.seed)
    trainer = Trainer(model, sched, samples, train_cfg)
    trainer.run(progress=progress)
    return trainer
