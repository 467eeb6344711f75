"""Semantic state encoder: raw resource snapshots to compact vectors, the
deviation trigger signal, and the temporal smoothness penalty."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nn import Params, xavier_uniform
from .nn import ops

DEVIATION_EPS = 1e-8


@dataclass
class EncoderConfig:
    window: int = 1
    d_in: int = 6
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ffn: int = 256
    dropout: float = 0.1
    d_sem: int = 3
    pooling: str = "mean"

    def validate(self) -> None:
        if self.d_model % self.n_heads != 0:
            raise ValueError("encoder.d_model must be divisible by n_heads")
        if self.window < 1 or self.d_in < 1 or self.d_sem < 1:
            raise ValueError("encoder dimensions must be positive")
        if self.pooling != "mean":
            raise ValueError(f"unsupported pooling {self.pooling!r}")


@dataclass
class FeatureNormalizer:
    """Brings the six raw state features to O(1) scale with an outlier clip.

    Core count divides by the core total, waiting times and ages divide by
    the task deadline, the arrival estimate divides by one second; queue
    depth per core and the workload ratio arrive already normalized. The
    clip bounds the unbounded features at 10; queue depth instead saturates
    at its own physical maximum (q_max per core), which can exceed 10 and
    must stay distinguishable right up to a full queue.
    """
    n_cores: int
    deadline: float
    q_max: int = 100
    clip: float = 10.0

    def scales(self) -> np.ndarray:
        return np.array([self.n_cores, 1.0, self.deadline, self.deadline,
                         1.0, 1.0], dtype=np.float64)

    def caps(self) -> np.ndarray:
        caps = np.full(6, self.clip)
        caps[1] = max(self.clip, self.q_max / self.n_cores)
        return caps

    def apply(self, x_raw: np.ndarray) -> np.ndarray:
        out = np.asarray(x_raw, dtype=np.float64) / self.scales()
        return np.clip(out, 0.0, self.caps())

    def clip_scalar(self, value: float) -> float:
        return float(min(max(value, 0.0), self.clip))


def sinusoidal_encoding(length: int, d_model: int) -> np.ndarray:
    pos = np.arange(length, dtype=np.float64)[:, None]
    div = np.exp(np.arange(0, d_model, 2, dtype=np.float64)
                 * (-math.log(10000.0) / d_model))
    pe = np.zeros((length, d_model), dtype=np.float64)
    pe[:, 0::2] = np.sin(pos * div)
    pe[:, 1::2] = np.cos(pos * div)
    return pe


class SemanticEncoder:
    """Projection + positional encoding + pre-norm attention blocks + mean
    pooling + output head. Operates on already-normalized feature windows."""

    PREFIX = "enc."

    def __init__(self, cfg: EncoderConfig):
        cfg.validate()
        self.cfg = cfg
        self.pe = sinusoidal_encoding(cfg.window, cfg.d_model)

    def init_params(self, params: Params, rng: np.random.Generator) -> None:
        c = self.cfg
        p = self.PREFIX

        def lin(name, din, dout):
            params.add(p + name + ".w", xavier_uniform((din, dout), rng))
            params.add(p + name + ".b", np.zeros(dout))

        def ln(name):
            params.add(p + name + ".g", np.ones(c.d_model))
            params.add(p + name + ".b", np.zeros(c.d_model))

        lin("proj", c.d_in, c.d_model)
        for l in range(c.n_layers):
            blk = f"blk{l}."
            ln(blk + "ln1")
            for nm in ("wq", "wk", "wv", "wo"):
                params.add(p + blk + "msa." + nm, xavier_uniform((c.d_model, c.d_model), rng))
            for nm in ("bq", "bv", "bo"):  # keys take no bias (softmax-invariant)
                params.add(p + blk + "msa." + nm, np.zeros(c.d_model))
            ln(blk + "ln2")
            params.add(p + blk + "ffn.w1", xavier_uniform((c.d_model, c.d_ffn), rng))
            params.add(p + blk + "ffn.b1", np.zeros(c.d_ffn))
            params.add(p + blk + "ffn.w2", xavier_uniform((c.d_ffn, c.d_model), rng))
            params.add(p + blk + "ffn.b2", np.zeros(c.d_model))
        lin("head", c.d_model, c.d_sem)

    # -- forward ---------------------------------------------------------------

    def forward(self, params: Params, x: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None):
        """x: (batch, window, d_in) normalized features -> (batch, d_sem)."""
        c = self.cfg
        if x.ndim == 2:
            x = x[None, :, :]
        if x.shape[1] != c.window or x.shape[2] != c.d_in:
            raise ValueError(f"encoder expects (*, {c.window}, {c.d_in}), got {x.shape}")
        p = self.PREFIX
        g = params.values

        h, c_proj = ops.linear_fwd(x, g[p + "proj.w"], g[p + "proj.b"])
        h = h + self.pe
        caches = [c_proj]
        for l in range(c.n_layers):
            blk = p + f"blk{l}."
            a, c_ln1 = ops.layernorm_fwd(h, g[blk + "ln1.g"], g[blk + "ln1.b"])
            msa_p = {k: g[blk + "msa." + k]
                     for k in ("wq", "bq", "wk", "wv", "bv", "wo", "bo")}
            m, c_msa = ops.msa_fwd(a, msa_p, c.n_heads)
            m, c_do1 = ops.dropout_fwd(m, c.dropout, rng, train)
            h = h + m
            b, c_ln2 = ops.layernorm_fwd(h, g[blk + "ln2.g"], g[blk + "ln2.b"])
            ffn_p = {k: g[blk + "ffn." + k] for k in ("w1", "b1", "w2", "b2")}
            f, c_ffn = ops.ffn_fwd(b, ffn_p)
            f, c_do2 = ops.dropout_fwd(f, c.dropout, rng, train)
            h = h + f
            caches.append((c_ln1, c_msa, c_do1, c_ln2, c_ffn, c_do2, msa_p))
        pooled = h.mean(axis=1)
        z, c_head = ops.linear_fwd(pooled, g[p + "head.w"], g[p + "head.b"])
        caches.append(c_head)
        return z, caches

    def backward(self, params: Params, gz: np.ndarray, caches) -> None:
        """Accumulates parameter gradients for one forward pass."""
        c = self.cfg
        p = self.PREFIX
        c_head = caches[-1]
        gpooled, gw, gb = ops.linear_bwd(gz, c_head)
        params.grads[p + "head.w"] += gw
        params.grads[p + "head.b"] += gb
        B = gz.shape[0]
        gh = np.repeat(gpooled[:, None, :], c.window, axis=1) / c.window
        for l in reversed(range(c.n_layers)):
            blk = p + f"blk{l}."
            c_ln1, c_msa, c_do1, c_ln2, c_ffn, c_do2, msa_p = caches[1 + l]
            gf = ops.dropout_bwd(gh, c_do2)
            gb_, ffn_grads = ops.ffn_bwd(gf, c_ffn)
            params.accumulate(ffn_grads, blk + "ffn.")
            gh2, gg, gbeta = ops.layernorm_bwd(gb_, c_ln2)
            params.grads[blk + "ln2.g"] += gg
            params.grads[blk + "ln2.b"] += gbeta
            gh = gh + gh2
            gm = ops.dropout_bwd(gh, c_do1)
            ga, msa_grads = ops.msa_bwd(gm, c_msa, msa_p)
            params.accumulate(msa_grads, blk + "msa.")
            gh1, gg, gbeta = ops.layernorm_bwd(ga, c_ln1)
            params.grads[blk + "ln1.g"] += gg
            params.grads[blk + "ln1.b"] += gbeta
            gh = gh + gh1
        _, gw, gb = ops.linear_bwd(gh, caches[0])
        params.grads[p + "proj.w"] += gw
        params.grads[p + "proj.b"] += gb

    def encode(self, params: Params, window: np.ndarray) -> np.ndarray:
        """Single window (window, d_in) -> (d_sem,), eval mode."""
        z, _ = self.forward(params, window[None, :, :], train=False)
        return z[0]


# -- trigger signal --------------------------------------------------------------

def semantic_deviation(z: np.ndarray, z_cached: np.ndarray,
                       eps: float = DEVIATION_EPS) -> float:
    """Relative displacement of the current vector from the cached one."""
    if z.shape != z_cached.shape:
        raise ValueError("vector lengths differ")
    if eps <= 0:
        raise ValueError("eps must be positive")
    return float(np.linalg.norm(z - z_cached) / (np.linalg.norm(z_cached) + eps))


def deviation_fwd(z: np.ndarray, z_cached: np.ndarray, eps: float = DEVIATION_EPS):
    """Batched deviation (B, d) x (B, d) -> (B,), with backward cache."""
    diff = z - z_cached
    num = np.linalg.norm(diff, axis=-1)
    den = np.linalg.norm(z_cached, axis=-1) + eps
    return num / den, (diff, num, z_cached, den)


def deviation_bwd(gy, cache):
    diff, num, z_cached, den = cache
    # subgradient 0 at coincident vectors / zero cache
    safe_num = np.maximum(num, 1e-30)[:, None]
    cnorm = np.maximum(den - DEVIATION_EPS, 1e-30)[:, None]
    g = gy[:, None]
    gz = g * diff / (safe_num * den[:, None])
    gzc = -gz - g * (num[:, None] * z_cached) / (cnorm * den[:, None] ** 2)
    return gz, gzc


def smoothness_penalty(z_t: np.ndarray, z_prev: np.ndarray):
    """Squared displacement between consecutive encodings; per-row for
    batched inputs. The training consistency term calls this directly."""
    d = np.asarray(z_t, dtype=np.float64) - np.asarray(z_prev, dtype=np.float64)
    if d.ndim == 1:
        return float((d * d).sum())
    return (d * d).sum(axis=-1)
