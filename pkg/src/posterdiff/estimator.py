"""sklearn-style facade over the generator: fit on poster samples, sample
constrained layouts, score held-out data. Hyperparameters mirror the model
and training configs so the estimator clones and grid-searches like any
other scikit-learn estimator.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .canvas import Raster, compose_four_channel, extract_salbox
from .data import PosterSample
from .diffusion import (
    CategoryCodec,
    ConstraintSpec,
    DiffusionSchedule,
    SampleResult,
    forward_noise,
    refine as diffusion_refine,
    sample as diffusion_sample,
)
from .geometry import Layout
from .model import Conditioning, ModelConfig, NoiseModel
from .training import TrainConfig, Trainer, load_model, save_model


def check_samples(X: Sequence[PosterSample], resolution: Optional[int] = None) -> list[PosterSample]:
    """Validate a dataset argument; returns it as a list."""
    samples = list(X)
    if not samples:
        raise ValueError("expected a non-empty sequence of poster samples")
    for i, s in enumerate(samples):
        if not isinstance(s, PosterSample):
            raise TypeError(f"X[{i}] is {type(s).__name__}, expected PosterSample")
        if resolution is not None and (s.canvas.height, s.canvas.width) != (resolution, resolution):
            raise ValueError(
                f"X[{i}] is {s.canvas.height}x{s.canvas.width}, expected {resolution}x{resolution}"
            )
    return samples


def check_canvas_pair(canvas: Raster, saliency: Raster, resolution: int) -> None:
    if canvas.channels != 3:
        raise ValueError("canvas must be a 3-channel raster")
    if saliency.channels != 1:
        raise ValueError("saliency must be a 1-channel raster")
    if (canvas.height, canvas.width) != (saliency.height, saliency.width):
        raise ValueError("canvas and saliency dimensions differ")
    if (canvas.height, canvas.width) != (resolution, resolution):
        raise ValueError(f"expected {resolution}x{resolution} rasters, got {canvas.height}x{canvas.width}")


class PosterLayoutGenerator(BaseEstimator):
    """Content-aware constrained layout generator.

    fit() trains the denoiser on poster samples; sample() serves the four
    constraint tasks; predict() maps samples to unconstrained layouts.
    """

    def __init__(
        self,
        d_model: int = 32,
        gnn_layers: int = 2,
        attn_heads: int = 4,
        resolution: int = 32,
        patch_size: int = 8,
        max_elements: int = 10,
        timesteps: int = 100,
        attn_direction: str = "blm_query",
        steps: int = 20_000,
        batch_size: int = 32,
        lr: float = 1e-3,
        ema_decay: float = 0.999,
        grad_clip: float = 1.0,
        padding_in_loss: bool = True,
        seed: int = 0,
    ):
        self.d_model = d_model
        self.gnn_layers = gnn_layers
        self.attn_heads = attn_heads
        self.resolution = resolution
        self.patch_size = patch_size
        self.max_elements = max_elements
        self.timesteps = timesteps
        self.attn_direction = attn_direction
        self.steps = steps
        self.batch_size = batch_size
        self.lr = lr
        self.ema_decay = ema_decay
        self.grad_clip = grad_clip
        self.padding_in_loss = padding_in_loss
        self.seed = seed

    # ------------------------------------------------------------- plumbing

    def _model_config(self) -> ModelConfig:
        return ModelConfig(
            d_model=self.d_model,
            gnn_layers=self.gnn_layers,
            attn_heads=self.attn_heads,
            resolution=self.resolution,
            patch_size=self.patch_size,
            max_elements=self.max_elements,
            timesteps=self.timesteps,
            attn_direction=self.attn_direction,
        )

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            steps=self.steps,
            batch_size=self.batch_size,
            lr=self.lr,
            ema_decay=self.ema_decay,
            grad_clip=self.grad_clip,
            seed=self.seed,
            padding_in_loss=self.padding_in_loss,
        )

    def _check_fitted(self) -> None:
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted; call fit() or load()")

    def conditioning(self, canvas: Raster, saliency: Raster) -> Conditioning:
        self._check_fitted()
        check_canvas_pair(canvas, saliency, self.model_.cfg.resolution)
        img4 = compose_four_channel(canvas, saliency)
        return Conditioning.from_raster(img4, extract_salbox(saliency), self.model_.cfg)

    # ----------------------------------------------------------------- API

    def fit(self, X: Sequence[PosterSample], y=None, progress=None) -> "PosterLayoutGenerator":
        samples = check_samples(X, self.resolution)
        model_cfg = self._model_config()
        sched = DiffusionSchedule.linear(self.timesteps)
        model = NoiseModel(model_cfg, seed=self.seed)
        trainer = Trainer(model, sched, samples, self._train_config())
        trainer.run(progress=progress)
        model.store.load_snapshot(trainer.ema)
        self.model_ = model
        self.schedule_ = sched
        self.codec_ = trainer.codec
        self.loss_history_ = list(trainer.history)
        return self

    def sample(
        self,
        canvas: Raster,
        saliency: Raster,
        task: str = "unconstrained",
        elements: Optional[Layout] = None,
        anchored: Optional[Sequence[bool]] = None,
        num_samples: int = 1,
        seed: int = 0,
    ) -> list[SampleResult]:
        """Generate constrained layouts; sample i uses seed + i."""
        self._check_fitted()
        cond = self.conditioning(canvas, saliency)
        n = self.model_.cfg.max_elements
        if elements is None:
            spec = ConstraintSpec.unconstrained(n)
            spec = ConstraintSpec(task, spec.x_user, spec.anchor_flags)
        else:
            spec = ConstraintSpec.from_layout(task, elements, n, self.codec_, anchored)
        return [
            diffusion_sample(self.model_, self.schedule_, cond, spec, seed=seed + i, codec=self.codec_)
            for i in range(num_samples)
        ]

    def refine(self, canvas: Raster, saliency: Raster, layout: Layout, strength: float = 0.1, seed: int = 0) -> SampleResult:
        self._check_fitted()
        cond = self.conditioning(canvas, saliency)
        return diffusion_refine(self.model_, self.schedule_, cond, layout, strength=strength, seed=seed, codec=self.codec_)

    def predict(self, X: Sequence[PosterSample], seed: int = 0) -> list[Layout]:
        """Unconstrained layout per input sample (canvas + saliency are used,
        the ground-truth layout is ignored)."""
        samples = check_samples(X)
        out = []
        for i, s in enumerate(samples):
            result = self.sample(s.canvas, s.saliency, num_samples=1, seed=seed + i)[0]
            out.append(result.layout)
        return out

    def score(self, X: Sequence[PosterSample], y=None, seed: int = 0) -> float:
        """Negative noise-prediction MSE on the given samples (higher is better)."""
        self._check_fitted()
        samples = check_samples(X, self.model_.cfg.resolution)
        from .training import prepare_dataset

        data = prepare_dataset(samples, self.model_.cfg, self.codec_)
        rng = np.random.default_rng(seed)
        t = rng.integers(1, self.schedule_.timesteps + 1, size=len(samples))
        eps = rng.standard_normal(data.x0.shape).astype(np.float32)
        x_t = forward_noise(data.x0, t, eps, self.schedule_)
        cond = Conditioning(data.patches, data.salbox)
        eps_hat = self.model_.predict_noise(x_t, t, cond)
        diff = eps_hat.data - eps
        return -float(np.mean(diff * diff))

    # ------------------------------------------------------------- persist

    def save(self, path) -> None:
        self._check_fitted()
        save_model(
            path,
            self.model_,
            self.schedule_,
            extra={"estimator_params": self.get_params()},
        )

    @classmethod
    def load(cls, path) -> "PosterLayoutGenerator":
        model, sched, config = load_model(path, use_ema=True)
        params = config.get("estimator_params")
        est = cls(**params) if params else cls()
        est.model_ = model
        est.schedule_ = sched
        est.codec_ = CategoryCodec()
        est.loss_history_ = []
        return est
