"""Named parameter store with Adam state and gradient utilities."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .tensor import DEFAULT_DTYPE, Tensor


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("betas must lie in (0,1)")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")


class ParameterStore:
    """Uniquely named parameter tensors with per-parameter Adam moments."""

    def __init__(self, seed: int = 0, dtype=DEFAULT_DTYPE):
        self.rng = np.random.default_rng(seed)
        self.dtype = dtype
        self._params: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def _register(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"parameter {name!r} already exists")
        p = Tensor(data, requires_grad=True, name=name)
        self._params[name] = p
        return p

    def create(self, name: str, shape: tuple[int, ...], scale: float | None = None) -> Tensor:
        """Allocate a random-normal parameter; scale defaults to 1/sqrt(fan_in)."""
        if scale is None:
            fan_in = shape[0] if len(shape) > 1 else max(shape[-1], 1)
            scale = 1.0 / math.sqrt(max(fan_in, 1))
        data = (self.rng.standard_normal(shape) * scale).astype(self.dtype)
        return self._register(name, data)

    def create_zeros(self, name: str, shape: tuple[int, ...]) -> Tensor:
        return self._register(name, np.zeros(shape, dtype=self.dtype))

    def create_full(self, name: str, shape: tuple[int, ...], value: float) -> Tensor:
        return self._register(name, np.full(shape, value, dtype=self.dtype))

    def get(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self._params.items())

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self._params.values())

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.grad = None

    def grad_or_zero(self, name: str) -> np.ndarray:
        p = self._params[name]
        return p.grad if p.grad is not None else np.zeros_like(p.data)

    def clip_global_norm(self, max_norm: float) -> float:
        """Scale all gradients so their joint L2 norm is at most max_norm."""
        total = 0.0
        for p in self._params.values():
            if p.grad is not None:
                total += float((p.grad.astype(np.float64) ** 2).sum())
        norm = math.sqrt(total)
        if norm > max_norm and norm > 0:
            factor = max_norm / norm
            for p in self._params.values():
                if p.grad is not None:
                    p.grad *= factor
        return norm

    def adam_step(self, cfg: AdamConfig) -> None:
        """Bias-corrected Adam update; gradients are zeroed afterwards.

        Parameters whose gradient was never populated are treated as
        zero-gradient (their moments still decay).
        """
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - cfg.beta1**t
        bc2 = 1.0 - cfg.beta2**t
        for name, p in self._params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m = self._m.get(name)
            v = self._v.get(name)
            if m is None:
                m = np.zeros_like(p.data)
                v = np.zeros_like(p.data)
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * (g * g)
            self._m[name] = m
            self._v[name] = v
            mhat = m / bc1
            vhat = v / bc2
            p.data -= (cfg.lr * mhat / (np.sqrt(vhat) + cfg.eps)).astype(p.data.dtype)
            p.grad = None

    def state_tensors(self) -> dict[str, np.ndarray]:
        """Parameters plus optimizer moments, flat named map (checkpoint payload)."""
        out: dict[str, np.ndarray] = {}
        for name, p in self._params.items():
            out[name] = p.data
        for name, m in self._m.items():
            out[f"adam.m.{name}"] = m
        for name, v in self._v.items():
            out[f"adam.v.{name}"] = v
        return out

    def load_state_tensors(self, tensors: dict[str, np.ndarray], step_count: int = 0) -> None:
        for name, p in self._params.items():
            if name not in tensors:
                raise KeyError(f"checkpoint missing parameter {name!r}")
            arr = tensors[name]
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name!r}: {arr.shape} vs {p.data.shape}")
            p.data = arr.astype(self.dtype).copy()
            m = tensors.get(f"adam.m.{name}")
            v = tensors.get(f"adam.v.{name}")
            if m is not None:
                self._m[name] = m.astype(self.dtype).copy()
            if v is not None:
                self._v[name] = v.astype(self.dtype).copy()
        self.step_count = step_count

    def snapshot(self) -> dict[str, np.ndarray]:
        """Frozen copy of parameter values only (no moments)."""
        return {name: p.data.copy() for name, p in self._params.items()}

    def load_snapshot(self, values: dict[str, np.ndarray]) -> None:
        for name, p in self._params.items():
            p.data = values[name].astype(self.dtype).copy()
