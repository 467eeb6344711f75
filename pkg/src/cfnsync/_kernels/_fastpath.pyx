# cython: boundscheck=False, wraparound=False, cdivision=True
"""Fused single-sample inference kernels for the per-tick hot path.

Mirrors the numpy forward passes: pre-norm blocks with the w=1 attention
degeneracy (softmax over one key is exactly 1, so attention reduces to the
value/output projections), erf-based GELU, layer norm with the shared
1e-12 epsilon. Weight matrices arrive transposed so every output element
is one contiguous dot product.
"""
from libc.math cimport erf, exp, sqrt

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef double LN_EPS = 1e-12
cdef double INV_SQRT2 = 0.7071067811865476


cdef inline double _gelu(double x) nogil:
    return 0.5 * x * (1.0 + erf(x * INV_SQRT2))


cdef inline double _sigmoid(double x) nogil:
    cdef double e
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef void _affine_t(const double* wt, const double* b, const double* x,
                    double* out, int din, int dout) nogil:
    """out = x @ W + b with W stored transposed: wt[j*din + i] = W[i, j]."""
    cdef int i, j
    cdef double acc
    cdef const double* row
    for j in range(dout):
        row = wt + j * din
        acc = b[j]
        for i in range(din):
            acc += x[i] * row[i]
        out[j] = acc


cdef void _layernorm(const double* x, const double* g, const double* b,
                     double* out, int d) nogil:
    cdef double mu = 0.0, var = 0.0, inv, c
    cdef int j
    for j in range(d):
        mu += x[j]
    mu /= d
    for j in range(d):
        c = x[j] - mu
        var += c * c
    var /= d
    inv = 1.0 / sqrt(var + LN_EPS)
    for j in range(d):
        out[j] = (x[j] - mu) * inv * g[j] + b[j]


def ping():
    return "fastpath"


cdef class EncoderKernelW1:
    """Window-1 encoder forward from one flat parameter buffer.

    Buffer layout (weights transposed to (dout, din) row-major):
    proj.wt, proj.b, pe0, then per block ln1.g, ln1.b, msa.wvt, msa.bv,
    msa.wot, msa.bo, ln2.g, ln2.b, ffn.w1t, ffn.b1, ffn.w2t, ffn.b2,
    then head.wt, head.b.
    """
    cdef double[::1] buf
    cdef int d_in, d_model, d_ffn, d_sem, n_layers
    cdef double[::1] h, a, m, t

    def __init__(self, double[::1] buf, int d_in, int d_model, int d_ffn,
                 int d_sem, int n_layers):
        self.buf = buf
        self.d_in = d_in
        self.d_model = d_model
        self.d_ffn = d_ffn
        self.d_sem = d_sem
        self.n_layers = n_layers
        self.h = np.empty(d_model)
        self.a = np.empty(d_model)
        self.m = np.empty(d_model)
        self.t = np.empty(d_ffn)

    def encode(self, double[::1] x):
        cdef int dm = self.d_model, dffn = self.d_ffn, j, l
        cdef const double* p = &self.buf[0]
        cdef double* h = &self.h[0]
        cdef double* a = &self.a[0]
        cdef double* m = &self.m[0]
        cdef double* t = &self.t[0]
        cdef Py_ssize_t off = 0

        out = np.empty(self.d_sem)
        cdef double[::1] z = out

        with nogil:
            _affine_t(p + off, p + off + self.d_in * dm, &x[0], h, self.d_in, dm)
            off += self.d_in * dm + dm
            for j in range(dm):
                h[j] += p[off + j]
            off += dm

            for l in range(self.n_layers):
                _layernorm(h, p + off, p + off + dm, a, dm)
                off += 2 * dm
                # attention at w=1: value projection then output projection
                _affine_t(p + off, p + off + dm * dm, a, m, dm, dm)
                off += dm * dm + dm
                _affine_t(p + off, p + off + dm * dm, m, a, dm, dm)
                off += dm * dm + dm
                for j in range(dm):
                    h[j] += a[j]
                _layernorm(h, p + off, p + off + dm, a, dm)
                off += 2 * dm
                _affine_t(p + off, p + off + dm * dffn, a, t, dm, dffn)
                off += dm * dffn + dffn
                for j in range(dffn):
                    t[j] = _gelu(t[j])
                _affine_t(p + off, p + off + dffn * dm, t, a, dffn, dm)
                off += dffn * dm + dm
                for j in range(dm):
                    h[j] += a[j]

            _affine_t(p + off, p + off + dm * self.d_sem, h, &z[0], dm, self.d_sem)
        return out


cdef class MlpKernel:
    """GELU MLP with sigmoid scalar output; flat buffer of transposed
    (w, b) pairs laid out layer by layer."""
    cdef double[::1] buf
    cdef int[::1] dims
    cdef double[::1] t0, t1

    def __init__(self, double[::1] buf, dims):
        self.buf = buf
        self.dims = np.asarray(dims, dtype=np.int32)
        cdef int widest = max(dims)
        self.t0 = np.empty(widest)
        self.t1 = np.empty(widest)

    def prob(self, double[::1] x):
        cdef const double* p = &self.buf[0]
        cdef double* src = &self.t0[0]
        cdef double* dst = &self.t1[0]
        cdef double* swp
        cdef Py_ssize_t off = 0
        cdef int n_layers = self.dims.shape[0] - 1
        cdef int l, j, din, dout
        cdef double result

        with nogil:
            for j in range(self.dims[0]):
                src[j] = x[j]
            for l in range(n_layers):
                din = self.dims[l]
                dout = self.dims[l + 1]
                _affine_t(p + off, p + off + din * dout, src, dst, din, dout)
                off += din * dout + dout
                if l < n_layers - 1:
                    for j in range(dout):
                        dst[j] = _gelu(dst[j])
                swp = src
                src = dst
                dst = swp
            result = _sigmoid(src[0])
        return result
