"""Flat named-parameter store with paired gradient and Adam moment buffers."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4

    def validate(self) -> None:
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("adam betas must lie in (0, 1)")
        if self.lr < 0 or self.eps <= 0 or self.weight_decay < 0:
            raise ValueError("bad adam config")


def xavier_uniform(shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    fan_in, fan_out = shape[0], shape[-1]
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


class Params:
    """Every parameter carries a same-shape gradient and Adam m/v buffer."""

    def __init__(self):
        self.values: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self.values:
            raise ValueError(f"duplicate parameter {name}")
        value = np.asarray(value, dtype=np.float64)
        self.values[name] = value
        self.grads[name] = np.zeros_like(value)
        self.m[name] = np.zeros_like(value)
        self.v[name] = np.zeros_like(value)

    def get(self, name: str) -> np.ndarray:
        return self.values[name]

    def subset(self, prefix: str) -> dict[str, np.ndarray]:
        """View of tensors under a prefix, keyed by the remainder of the name."""
        skip = len(prefix)
        return {k[skip:]: v for k, v in self.values.items() if k.startswith(prefix)}

    def accumulate(self, grads: dict[str, np.ndarray], prefix: str = "") -> None:
        for k, g in grads.items():
            self.grads[prefix + k] += g

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g[...] = 0.0

    def n_params(self) -> int:
        return sum(v.size for v in self.values.values())

    def clone(self) -> "Params":
        out = Params()
        for k, v in self.values.items():
            out.add(k, v.copy())
            out.m[k][...] = self.m[k]
            out.v[k][...] = self.v[k]
            out.grads[k][...] = self.grads[k]
        out.step = self.step
        return out

    def adam_step(self, cfg: AdamConfig) -> None:
        """Decoupled weight decay, then the bias-corrected moment update.

        Increments the step counter and zeroes gradients afterwards.
        """
        cfg.validate()
        self.step += 1
        t = self.step
        c1 = 1.0 - cfg.beta1 ** t
        c2 = 1.0 - cfg.beta2 ** t
        for name in self.values:
            w = self.values[name]
            g = self.grads[name]
            if cfg.weight_decay > 0.0:
                w -= cfg.lr * cfg.weight_decay * w
            m = self.m[name]
            v = self.v[name]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * (g * g)
            w -= cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
        self.zero_grads()
