"""Soft-input soft-output processing on trellises.

All log-domain quantities use base-2 logs.  The functions here run on any
object exposing `edge_start`, `edge_end` and `n_states` (the CPM trellis and
the convolutional-code trellis both do), so a single BCJR engine serves the
demodulator, the capacity estimators, and the binary decoders.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._kernels import max_star, max_star_seq, lse2  # re-exported


def pinned_init(n_states: int, state: int = 0) -> np.ndarray:
    v = np.full(n_states, -np.inf)
    v[state] = 0.0
    return v


def free_init(n_states: int) -> np.ndarray:
    return np.zeros(n_states)


def awgn_sigma2(n0: float, ns: int, symbol_period: float = 1.0) -> float:
    """Per-sample complex-noise variance making the per-symbol matched-filter
    SNR equal Es/N0 for unit-energy constant-envelope segments."""
    return 2.0 * n0 * ns / symbol_period


def branch_metrics(trellis, received, n0: float, ref_edge: int | None = 0) -> np.ndarray:
    """Per-section, per-edge log2 likelihood ratios lambda[n, e].

    Uses the correlation sufficient statistic (2 Re<y, x> - |x|^2) scaled by
    the per-sample noise variance.  With the default `ref_edge` the stationary
    all-zeros-input edge gets lambda = 0 in every section; pass None to skip
    referencing (constants cancel in all soft outputs either way).
    """
    samples = getattr(received, "samples", received)
    ns = trellis.ns
    if len(samples) % ns != 0:
        raise ValueError("received length is not a whole number of sections")
    y = np.asarray(samples).reshape(-1, ns)
    sigma2 = awgn_sigma2(n0, ns, trellis.scheme.t)
    corr = y @ trellis.segments.conj().T
    lam = (2.0 * corr.real - trellis.seg_energy[None, :]) / (sigma2 * _kernels.LN2)
    if ref_edge is not None:
        lam = lam - lam[:, ref_edge][:, None]
    return lam


@dataclass
class ForwardResult:
    alphas: np.ndarray      # [N+1, S], normalized per section
    shifts: np.ndarray      # [N+1] cumulative normalization
    terminals: np.ndarray   # [N+1] max* over states of the true alpha_n

    @property
    def terminal(self) -> float:
        return float(self.terminals[-1])


def forward_recursion(graph, gamma: np.ndarray, init=None, backend=None) -> ForwardResult:
    """alpha_{n+1}(s') = max* over edges into s' of (alpha_n(s) + gamma[n, e]).

    `gamma` holds branch metrics plus any per-edge priors.  `init` defaults to
    the all-mass-at-state-0 vector; the returned terminal at step N equals the
    max* over all input sequences of their path metrics.
    """
    if init is None:
        init = pinned_init(graph.n_states)
    init = np.asarray(init, dtype=float)
    if init.shape != (graph.n_states,):
        raise ValueError("init vector length must equal the state count")
    a, s, t = _kernels.forward(gamma, graph.edge_start, graph.edge_end, init, backend)
    return ForwardResult(a, s, t)


def backward_recursion(graph, gamma: np.ndarray, init=None, backend=None) -> np.ndarray:
    if init is None:
        init = free_init(graph.n_states)
    init = np.asarray(init, dtype=float)
    if init.shape != (graph.n_states,):
        raise ValueError("init vector length must equal the state count")
    return _kernels.backward(gamma, graph.edge_start, graph.edge_end, init, backend)


@dataclass
class SisoResult:
    llr: np.ndarray         # [N, nbits] posterior log2 P(b=1|y)/P(b=0|y)
    extrinsic: np.ndarray   # llr minus the prior fed in
    terminal: float         # max* of forward metrics at step N
    forward: ForwardResult
    betas: np.ndarray


def bcjr_bit_llrs(graph, bits: np.ndarray, metrics: np.ndarray, priors=None,
                  init_forward=None, init_backward=None, backend=None) -> SisoResult:
    """Full forward-backward pass returning posterior and extrinsic bit LLRs.

    `bits` is the [E, nbits] per-edge binary pattern (labels for a modulation
    trellis, output bits for a code trellis).  `priors` is an optional
    [N, nbits] array of prior LLRs on those bit positions.
    """
    bits = np.asarray(bits, dtype=np.int8)
    gamma = np.asarray(metrics, dtype=float)
    if priors is not None:
        priors = np.asarray(priors, dtype=float)
        gamma = gamma + priors @ bits.T.astype(float)
    fwd = forward_recursion(graph, gamma, init_forward, backend)
    betas = backward_recursion(graph, gamma, init_backward, backend)
    llr = _kernels.bit_llrs(gamma, graph.edge_start, graph.edge_end, bits,
                            fwd.alphas, betas, backend)
    ext = llr - priors if priors is not None else llr.copy()
    return SisoResult(llr, ext, fwd.terminal, fwd, betas)
