"""Dense-tensor forward/backward primitives in float64.

Every *_fwd returns (output, cache); the matching *_bwd consumes the
upstream gradient plus that cache and returns input gradients along with
parameter gradients. Tensors are plain 2-D/3-D float64 numpy arrays; the
last axis is always the feature axis.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

LN_EPS = 1e-12
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _flat(t: np.ndarray) -> np.ndarray:
    return t.reshape(-1, t.shape[-1])


# -- affine -------------------------------------------------------------------

def linear_fwd(x, w, b):
    if x.shape[-1] != w.shape[0]:
        raise ValueError(f"linear: input width {x.shape[-1]} != weight rows {w.shape[0]}")
    # flatten leading axes so the product runs as one GEMM
    y = _flat(x) @ w + b
    return y.reshape(x.shape[:-1] + (w.shape[1],)), (x, w)


def linear_bwd(gy, cache):
    x, w = cache
    g2 = _flat(gy)
    gx = (g2 @ w.T).reshape(x.shape)
    gw = _flat(x).T @ g2
    gb = g2.sum(axis=0)
    return gx, gw, gb


# -- normalization ------------------------------------------------------------

def layernorm_fwd(x, gamma, beta, eps: float = LN_EPS):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    return xhat * gamma + beta, (xhat, inv, gamma)


def layernorm_bwd(gy, cache):
    xhat, inv, gamma = cache
    gxhat = gy * gamma
    gx = inv * (
        gxhat
        - gxhat.mean(axis=-1, keepdims=True)
        - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
    )
    ggamma = _flat(gy * xhat).sum(axis=0)
    gbeta = _flat(gy).sum(axis=0)
    return gx, ggamma, gbeta


# -- activations ----------------------------------------------------------------

def gelu_fwd(x):
    phi = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    return x * phi, (x, phi)


def gelu_bwd(gy, cache):
    x, phi = cache
    pdf = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
    return gy * (phi + x * pdf)


def sigmoid_fwd(x):
    s = np.empty_like(x)
    pos = x >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    s[~pos] = ex / (1.0 + ex)
    return s, (s,)


def sigmoid_bwd(gy, cache):
    (s,) = cache
    return gy * s * (1.0 - s)


def softmax_fwd(x):
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)
    return p, (p,)


def softmax_bwd(gy, cache):
    (p,) = cache
    return p * (gy - (gy * p).sum(axis=-1, keepdims=True))


# -- regularization -------------------------------------------------------------

def dropout_fwd(x, p: float, rng: np.random.Generator | None = None,
                train: bool = False):
    """Inverted-scaling dropout; identity outside training."""
    if not train or p <= 0.0:
        return x, None
    if rng is None:
        raise ValueError("dropout in train mode needs an rng")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * mask, mask


def dropout_bwd(gy, mask):
    return gy if mask is None else gy * mask


# -- attention ------------------------------------------------------------------

def msa_fwd(x, p: dict, n_heads: int):
    """Multi-head self-attention over (batch, seq, d_model).

    p holds wq/bq, wk, wv/bv, wo/bo. Keys carry no bias: a shared key offset
    shifts every score of a query equally, which softmax cancels exactly, so
    such a parameter would have identically zero gradient. Scores are scaled
    by 1/sqrt(head_dim).
    """
    B, w, d = x.shape
    if d % n_heads != 0:
        raise ValueError("d_model must divide evenly across heads")
    hd = d // n_heads

    q, _ = linear_fwd(x, p["wq"], p["bq"])
    k = x @ p["wk"]
    v, _ = linear_fwd(x, p["wv"], p["bv"])

    def split(t):
        return t.reshape(B, w, n_heads, hd).transpose(0, 2, 1, 3)

    qh, kh, vh = split(q), split(k), split(v)
    scale = 1.0 / math.sqrt(hd)
    scores = (qh @ kh.transpose(0, 1, 3, 2)) * scale
    probs, _ = softmax_fwd(scores)
    ctx = probs @ vh
    merged = ctx.transpose(0, 2, 1, 3).reshape(B, w, d)
    out, _ = linear_fwd(merged, p["wo"], p["bo"])
    return out, (x, qh, kh, vh, probs, merged, scale, n_heads)


def msa_bwd(gy, cache, p: dict):
    x, qh, kh, vh, probs, merged, scale, n_heads = cache
    B, w, d = x.shape
    hd = d // n_heads
    grads = {}

    grads["wo"] = _flat(merged).T @ _flat(gy)
    grads["bo"] = _flat(gy).sum(axis=0)
    gmerged = gy @ p["wo"].T

    gctx = gmerged.reshape(B, w, n_heads, hd).transpose(0, 2, 1, 3)
    gprobs = gctx @ vh.transpose(0, 1, 3, 2)
    gvh = probs.transpose(0, 1, 3, 2) @ gctx
    gscores = softmax_bwd(gprobs, (probs,)) * scale
    gqh = gscores @ kh
    gkh = gscores.transpose(0, 1, 3, 2) @ qh

    def merge(t):
        return t.transpose(0, 2, 1, 3).reshape(B, w, d)

    gq, gk, gv = merge(gqh), merge(gkh), merge(gvh)
    gx = gq @ p["wq"].T + gk @ p["wk"].T + gv @ p["wv"].T
    for name, g in (("q", gq), ("k", gk), ("v", gv)):
        grads["w" + name] = _flat(x).T @ _flat(g)
        if name != "k":
            grads["b" + name] = _flat(g).sum(axis=0)
    return gx, grads


# -- feed-forward -----------------------------------------------------------------

def ffn_fwd(x, p: dict):
    h, c1 = linear_fwd(x, p["w1"], p["b1"])
    a, cg = gelu_fwd(h)
    y, c2 = linear_fwd(a, p["w2"], p["b2"])
    return y, (c1, cg, c2)


def ffn_bwd(gy, cache):
    c1, cg, c2 = cache
    ga, gw2, gb2 = linear_bwd(gy, c2)
    gh = gelu_bwd(ga, cg)
    gx, gw1, gb1 = linear_bwd(gh, c1)
    return gx, {"w1": gw1, "b1": gb1, "w2": gw2, "b2": gb2}


# -- losses -----------------------------------------------------------------------

def bce_fwd(p, y, eps: float = 1e-12):
    """Elementwise binary cross-entropy on probabilities."""
    pc = np.clip(p, eps, 1.0 - eps)
    loss = -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))
    return loss, (pc, y)


def bce_bwd(gy, cache):
    pc, y = cache
    return gy * (pc - y) / (pc * (1.0 - pc))


def bce_logits_fwd(logit, y):
    """BCE fused with the sigmoid, computed from logits for stability."""
    loss = np.logaddexp(0.0, logit) - y * logit
    s, _ = sigmoid_fwd(logit)
    return loss, (s, y)


def bce_logits_bwd(gy, cache):
    s, y = cache
    return gy * (s - y)
