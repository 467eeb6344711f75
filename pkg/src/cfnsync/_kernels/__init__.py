"""Backend selection for the per-tick inference hot path.

The compiled extension is used when importable; setting CFNSYNC_FORCE_NUMPY=1
(or passing force_numpy) pins the pure-numpy fallback. Both backends compute
the same functions; they may differ in the last floating-point digits.
"""
from __future__ import annotations

import os
from typing import Callable

import numpy as np
from scipy.special import erf

from ..encoder import EncoderConfig, SemanticEncoder, sinusoidal_encoding
from ..nn import Params
from ..nn.ops import LN_EPS

try:
    from . import _fastpath

    HAVE_COMPILED = True
except ImportError:  # extension not built; numpy path covers everything
    _fastpath = None
    HAVE_COMPILED = False


def _force_numpy_env() -> bool:
    return os.environ.get("CFNSYNC_FORCE_NUMPY", "") not in ("", "0")


def backend_name(force_numpy: bool = False) -> str:
    if force_numpy or _force_numpy_env() or not HAVE_COMPILED:
        return "numpy"
    return "compiled"


def _encoder_buffer(cfg: EncoderConfig, params: Params) -> np.ndarray:
    # weight matrices go in transposed so the kernel reads contiguous rows
    pe0 = sinusoidal_encoding(1, cfg.d_model)[0]
    parts = [params.get("enc.proj.w").T, params.get("enc.proj.b"), pe0]
    for l in range(cfg.n_layers):
        blk = f"enc.blk{l}."
        parts += [
            params.get(blk + "ln1.g"), params.get(blk + "ln1.b"),
            params.get(blk + "msa.wv").T, params.get(blk + "msa.bv"),
            params.get(blk + "msa.wo").T, params.get(blk + "msa.bo"),
            params.get(blk + "ln2.g"), params.get(blk + "ln2.b"),
            params.get(blk + "ffn.w1").T, params.get(blk + "ffn.b1"),
            params.get(blk + "ffn.w2").T, params.get(blk + "ffn.b2"),
        ]
    parts += [params.get("enc.head.w").T, params.get("enc.head.b")]
    return np.concatenate([np.ascontiguousarray(p, dtype=np.float64).ravel()
                           for p in parts])


def _numpy_encoder_w1(cfg: EncoderConfig, params: Params) -> Callable:
    """Lean single-sample mirror of the encoder forward at window=1."""
    pe0 = sinusoidal_encoding(1, cfg.d_model)[0]
    g = params.values

    def ln(x, gamma, beta):
        mu = x.mean()
        xc = x - mu
        inv = 1.0 / np.sqrt((xc * xc).mean() + LN_EPS)
        return xc * inv * gamma + beta

    def encode(x: np.ndarray) -> np.ndarray:
        h = x @ g["enc.proj.w"] + g["enc.proj.b"] + pe0
        for l in range(cfg.n_layers):
            blk = f"enc.blk{l}."
            a = ln(h, g[blk + "ln1.g"], g[blk + "ln1.b"])
            # softmax over a single key is exactly one: attention collapses
            # to the value and output projections
            v = a @ g[blk + "msa.wv"] + g[blk + "msa.bv"]
            h = h + (v @ g[blk + "msa.wo"] + g[blk + "msa.bo"])
            b = ln(h, g[blk + "ln2.g"], g[blk + "ln2.b"])
            t = b @ g[blk + "ffn.w1"] + g[blk + "ffn.b1"]
            t = 0.5 * t * (1.0 + erf(t * 0.7071067811865476))
            h = h + (t @ g[blk + "ffn.w2"] + g[blk + "ffn.b2"])
        return h @ g["enc.head.w"] + g["enc.head.b"]

    return encode


def make_encoder_fn(cfg: EncoderConfig, params: Params,
                    force_numpy: bool = False) -> Callable[[np.ndarray], np.ndarray]:
    """Returns encode(x) for one normalized window; x is (d_in,) at w=1 or
    (window, d_in) otherwise. Windows above 1 always take the numpy path."""
    if cfg.window != 1:
        enc = SemanticEncoder(cfg)
        return lambda x: enc.encode(params, np.asarray(x, dtype=np.float64))
    if backend_name(force_numpy) == "compiled":
        kern = _fastpath.EncoderKernelW1(
            _encoder_buffer(cfg, params), cfg.d_in, cfg.d_model, cfg.d_ffn,
            cfg.d_sem, cfg.n_layers)
        return lambda x: kern.encode(np.ascontiguousarray(x, dtype=np.float64).ravel())
    fn = _numpy_encoder_w1(cfg, params)
    return lambda x: fn(np.asarray(x, dtype=np.float64).ravel())


def _mlp_buffer(params: Params, prefix: str) -> tuple[np.ndarray, list[int]]:
    parts = []
    dims = [params.get(f"{prefix}l0.w").shape[0]]
    for l in range(3):
        w = params.get(f"{prefix}l{l}.w")
        parts += [w.T, params.get(f"{prefix}l{l}.b")]
        dims.append(w.shape[1])
    buf = np.concatenate([np.ascontiguousarray(p, dtype=np.float64).ravel()
                          for p in parts])
    return buf, dims


def _numpy_mlp(params: Params, prefix: str) -> Callable:
    g = params.values
    ws = [g[f"{prefix}l{l}.w"] for l in range(3)]
    bs = [g[f"{prefix}l{l}.b"] for l in range(3)]

    def prob(x: np.ndarray) -> float:
        h = x @ ws[0] + bs[0]
        h = 0.5 * h * (1.0 + erf(h * 0.7071067811865476))
        h = h @ ws[1] + bs[1]
        h = 0.5 * h * (1.0 + erf(h * 0.7071067811865476))
        logit = float((h @ ws[2] + bs[2])[0])
        if logit >= 0:
            return 1.0 / (1.0 + np.exp(-logit))
        e = np.exp(logit)
        return float(e / (1.0 + e))

    return prob


def make_mlp_fn(params: Params, prefix: str,
                force_numpy: bool = False) -> Callable[[np.ndarray], float]:
    """Returns prob(features) for a policy head stored under `prefix`."""
    if backend_name(force_numpy) == "compiled":
        buf, dims = _mlp_buffer(params, prefix)
        kern = _fastpath.MlpKernel(buf, dims)
        return lambda x: kern.prob(np.ascontiguousarray(x, dtype=np.float64))
    return _numpy_mlp(params, prefix)
