"""Hot trellis-recursion kernels.

Every kernel exists twice: a numba @njit version and a pure-numpy version.
The active path is chosen per call; set CPMKIT_DISABLE_NUMBA=1 to force the
numpy fallback (see `backend_default`).  Both paths implement exact base-2
max* soft combining; outputs agree to float64 rounding.
"""

from __future__ import annotations

import math
import os

import numpy as np
from numba import njit

LN2 = math.log(2.0)
NEG_INF = -np.inf


def backend_default() -> str:
    if os.environ.get("CPMKIT_DISABLE_NUMBA", "").lower() in ("1", "true", "yes"):
        return "numpy"
    return "numba"


def resolve_backend(backend) -> str:
    b = backend or backend_default()
    if b not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {b!r}")
    return b


def max_star(a: float, b: float) -> float:
    """Exact log2(2**a + 2**b)."""
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    hi, lo = (a, b) if a >= b else (b, a)
    return hi + math.log1p(math.exp((lo - hi) * LN2)) / LN2


def max_star_seq(values) -> float:
    """Left-to-right max* reduction of a sequence (fixed accumulation order)."""
    acc = NEG_INF
    for v in values:
        acc = max_star(acc, float(v))
    return acc


def lse2(x: np.ndarray, axis=-1) -> np.ndarray:
    """Vectorized log2-sum-exp2 along an axis, -inf aware."""
    x = np.asarray(x, dtype=float)
    hi = np.max(x, axis=axis, keepdims=True)
    hi_safe = np.where(np.isfinite(hi), hi, 0.0)
    out = hi_safe.squeeze(axis) + np.log2(np.sum(np.exp2(x - hi_safe), axis=axis))
    return np.where(np.isfinite(hi.squeeze(axis)), out, NEG_INF)


# ---------------------------------------------------------------- numba path

@njit(cache=True, inline="always")
def _mstar(a, b):
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    if a >= b:
        return a + math.log1p(math.exp((b - a) * 0.6931471805599453)) / 0.6931471805599453
    return b + math.log1p(math.exp((a - b) * 0.6931471805599453)) / 0.6931471805599453


@njit(cache=True)
def _forward_nb(gamma, edge_start, edge_end, alpha0):
    n, ne = gamma.shape
    s = alpha0.shape[0]
    alphas = np.empty((n + 1, s))
    shifts = np.empty(n + 1)
    terminals = np.empty(n + 1)
    alphas[0] = alpha0
    shifts[0] = 0.0
    acc = -np.inf
    for j in range(s):
        acc = _mstar(acc, alpha0[j])
    terminals[0] = acc
    for i in range(n):
        for j in range(s):
            alphas[i + 1, j] = -np.inf
        for e in range(ne):
            v = alphas[i, edge_start[e]] + gamma[i, e]
            t = edge_end[e]
            alphas[i + 1, t] = _mstar(alphas[i + 1, t], v)
        hi = -np.inf
        for j in range(s):
            if alphas[i + 1, j] > hi:
                hi = alphas[i + 1, j]
        for j in range(s):
            alphas[i + 1, j] -= hi
        shifts[i + 1] = shifts[i] + hi
        acc = -np.inf
        for j in range(s):
            acc = _mstar(acc, alphas[i + 1, j])
        terminals[i + 1] = acc + shifts[i + 1]
    return alphas, shifts, terminals


@njit(cache=True)
def _backward_nb(gamma, edge_start, edge_end, beta_last):
    n, ne = gamma.shape
    s = beta_last.shape[0]
    betas = np.empty((n + 1, s))
    betas[n] = beta_last
    for i in range(n - 1, -1, -1):
        for j in range(s):
            betas[i, j] = -np.inf
        for e in range(ne):
            v = gamma[i, e] + betas[i + 1, edge_end[e]]
            t = edge_start[e]
            betas[i, t] = _mstar(betas[i, t], v)
        hi = -np.inf
        for j in range(s):
            if betas[i, j] > hi:
                hi = betas[i, j]
        for j in range(s):
            betas[i, j] -= hi
    return betas


@njit(cache=True)
def _bit_llrs_nb(gamma, edge_start, edge_end, bits, alphas, betas):
    n, ne = gamma.shape
    nb = bits.shape[1]
    llr = np.empty((n, nb))
    for i in range(n):
        for k in range(nb):
            acc1 = -np.inf
            acc0 = -np.inf
            for e in range(ne):
                v = alphas[i, edge_start[e]] + gamma[i, e] + betas[i + 1, edge_end[e]]
                if bits[e, k] == 1:
                    acc1 = _mstar(acc1, v)
                else:
                    acc0 = _mstar(acc0, v)
            llr[i, k] = acc1 - acc0
    return llr


# ---------------------------------------------------------------- numpy path

def _forward_np(gamma, edge_start, edge_end, alpha0):
    n, ne = gamma.shape
    s = alpha0.shape[0]
    order = np.argsort(edge_end, kind="stable")
    starts = np.searchsorted(edge_end[order], np.arange(s))
    src = edge_start[order]
    alphas = np.empty((n + 1, s))
    shifts = np.empty(n + 1)
    terminals = np.empty(n + 1)
    alphas[0] = alpha0
    shifts[0] = 0.0
    terminals[0] = lse2(alpha0)
    g = gamma[:, order]
    for i in range(n):
        contrib = alphas[i][src] + g[i]
        nxt = np.logaddexp2.reduceat(contrib, starts)
        hi = nxt.max()
        alphas[i + 1] = nxt - hi
        shifts[i + 1] = shifts[i] + hi
        terminals[i + 1] = lse2(alphas[i + 1]) + shifts[i + 1]
    return alphas, shifts, terminals


def _backward_np(gamma, edge_start, edge_end, beta_last):
    n, ne = gamma.shape
    s = beta_last.shape[0]
    order = np.argsort(edge_start, kind="stable")
    starts = np.searchsorted(edge_start[order], np.arange(s))
    dst = edge_end[order]
    betas = np.empty((n + 1, s))
    betas[n] = beta_last
    g = gamma[:, order]
    for i in range(n - 1, -1, -1):
        contrib = g[i] + betas[i + 1][dst]
        cur = np.logaddexp2.reduceat(contrib, starts)
        betas[i] = cur - cur.max()
    return betas


def _bit_llrs_np(gamma, edge_start, edge_end, bits, alphas, betas):
    post = alphas[:-1][:, edge_start] + gamma + betas[1:][:, edge_end]
    n = gamma.shape[0]
    nb = bits.shape[1]
    llr = np.empty((n, nb))
    for k in range(nb):
        ones = bits[:, k] == 1
        llr[:, k] = lse2(post[:, ones], axis=1) - lse2(post[:, ~ones], axis=1)
    return llr


# ---------------------------------------------------------------- dispatch

def forward(gamma, edge_start, edge_end, alpha0, backend=None):
    fn = _forward_nb if resolve_backend(backend) == "numba" else _forward_np
    return fn(np.ascontiguousarray(gamma), edge_start, edge_end,
              np.ascontiguousarray(alpha0, dtype=float))


def backward(gamma, edge_start, edge_end, beta_last, backend=None):
    fn = _backward_nb if resolve_backend(backend) == "numba" else _backward_np
    return fn(np.ascontiguousarray(gamma), edge_start, edge_end,
              np.ascontiguousarray(beta_last, dtype=float))


def bit_llrs(gamma, edge_start, edge_end, bits, alphas, betas, backend=None):
    fn = _bit_llrs_nb if resolve_backend(backend) == "numba" else _bit_llrs_np
    return fn(np.ascontiguousarray(gamma), edge_start, edge_end,
              np.ascontiguousarray(bits), alphas, betas)
