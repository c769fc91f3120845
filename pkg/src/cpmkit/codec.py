"""Binary codes and complete coded transceivers.

Contains the 4-state recursive systematic convolutional code with its SISO
decoder, rate-matching puncturers, the spread interleaver, the two coded
chains (iterative serial concatenation with the modulation trellis, and the
pragmatic chain with a concatenated binary code in front of a one-shot soft
demodulator), plus decoder-output information-rate and complexity accounting.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import siso
from .trellis import Trellis, Labeling, build_trellis, rimoldi_labeling
from .waveform import CpmScheme, scheme as make_scheme
from .capacity import awgn


# ------------------------------------------------------------ convolutional code

@dataclass
class ConvCode:
    """Rate-1/2 recursive systematic convolutional code.

    Polynomials are octal; the default (7, 5) gives the standard 4-state
    code.  The trellis arrays expose the same interface the SISO engine
    expects from the modulation trellis.
    """

    feedback: int = 0o7
    forward: int = 0o5

    def __post_init__(self):
        self.mem = self.feedback.bit_length() - 1
        self.n_states = 1 << self.mem
        edges = []
        for s in range(self.n_states):
            for u in (0, 1):
                w = u ^ self._taps(self.feedback & ((1 << self.mem) - 1), s)
                par = self._taps(self.forward, (w << self.mem) | s)
                nxt = (w << (self.mem - 1)) | (s >> 1)
                edges.append((s, nxt, u, par))
        arr = np.array(edges, dtype=np.int32)
        self.edge_start = arr[:, 0]
        self.edge_end = arr[:, 1]
        self.edge_input = arr[:, 2]
        self.edge_parity = arr[:, 3]
        # per-edge (input, parity) bit pattern for the SISO engine
        self.edge_bits = np.stack([self.edge_input, self.edge_parity], axis=1).astype(np.int8)

    @staticmethod
    def _taps(poly: int, reg: int) -> int:
        return bin(poly & reg).count("1") % 2

    def encode(self, info_bits, terminate: bool = True):
        """Returns (systematic, parity) including termination bits when asked.

        Termination drives the register to zero with `mem` extra inputs.
        """
        info = np.asarray(info_bits, dtype=np.int64)
        n = info.size
        total = n + (self.mem if terminate else 0)
        sys_out = np.empty(total, dtype=np.int64)
        par_out = np.empty(total, dtype=np.int64)
        s = 0
        fb_mask = (1 << self.mem) - 1
        for k in range(total):
            if k < n:
                u = int(info[k])
            else:
                u = self._taps(self.feedback & fb_mask, s)  # forces w = 0
            w = u ^ self._taps(self.feedback & fb_mask, s)
            par = self._taps(self.forward, (w << self.mem) | s)
            sys_out[k] = u
            par_out[k] = par
            s = (w << (self.mem - 1)) | (s >> 1)
        if terminate and s != 0:
            raise AssertionError("termination failed to zero the register")
        return sys_out, par_out

    def siso_decode(self, sys_llr, par_llr, input_prior=None, terminated=True,
                    backend=None):
        """BCJR pass; returns a SisoResult whose bit columns are (input, parity).

        LLRs follow log2 P(1)/P(0).  `input_prior` adds a prior on the input
        bits (for concatenated schemes); extrinsics subtract it again.
        """
        n = len(sys_llr)
        gamma = (self.edge_input[None, :] * np.asarray(sys_llr, dtype=float)[:, None]
                 + self.edge_parity[None, :] * np.asarray(par_llr, dtype=float)[:, None])
        priors = None
        if input_prior is not None:
            priors = np.column_stack([np.asarray(input_prior, dtype=float),
                                      np.zeros(n)])
        init_b = siso.pinned_init(self.n_states) if terminated else siso.free_init(self.n_states)
        return siso.bcjr_bit_llrs(self, self.edge_bits, gamma, priors,
                                  init_backward=init_b, backend=backend)


def code_free_distance(code: ConvCode, keep_mask, max_span: int = 120) -> int:
    """Minimum kept-output Hamming weight over nonzero error events of the
    punctured code, minimized over puncturing phases.  `keep_mask` is one
    (keep_sys, keep_par) bool pair per position, tiled periodically."""
    period = len(keep_mask)
    INF = 10 ** 9
    best = INF
    for ph0 in range(period):
        diverged = {}
        for step in range(max_span):
            ks, kp = keep_mask[(ph0 + step) % period]
            new_d = {}
            sources = diverged if step else {0: 0}
            for s, d in sources.items():
                for e in np.flatnonzero(code.edge_start == s):
                    u = int(code.edge_input[e])
                    if step == 0 and u == 0:
                        continue
                    if step > 0 and s == 0 and u == 0:
                        continue
                    w = d + (u if ks else 0) + (int(code.edge_parity[e]) if kp else 0)
                    nxt = int(code.edge_end[e])
                    if nxt == 0:
                        best = min(best, w)
                    elif w < new_d.get(nxt, INF) and w < best:
                        new_d[nxt] = w
            diverged = new_d
            if not diverged:
                break
    return best


# ------------------------------------------------------------ puncturing

@dataclass
class PuncturePattern:
    """Keep-mask over blocks of `n_o` (systematic, parity) pairs.

    All systematic bits are kept; 2*n_i - n_o parity bits per block survive,
    evenly spaced, for an output rate of n_o / (2*n_i).
    """

    n_o: int
    n_i: int

    def __post_init__(self):
        if not (self.n_i <= self.n_o <= 2 * self.n_i):
            raise ValueError("need n_i <= n_o <= 2*n_i")
        keep_par = 2 * self.n_i - self.n_o
        idx = np.floor((np.arange(keep_par) + 0.5) * self.n_o / keep_par).astype(int)
        self.parity_keep = np.zeros(self.n_o, dtype=bool)
        self.parity_keep[idx] = True
        if self.parity_keep.sum() != keep_par:
            raise AssertionError("parity keep pattern collision")

    @property
    def rate(self) -> Fraction:
        return Fraction(self.n_o, 2 * self.n_i)

    def keep_mask(self, n_positions: int) -> np.ndarray:
        """[n, 2] bool (sys, par) keep flags; n must be a block multiple."""
        if n_positions % self.n_o:
            raise ValueError(f"{n_positions} positions is not a multiple of n_o={self.n_o}")
        reps = n_positions // self.n_o
        par = np.tile(self.parity_keep, reps)
        return np.stack([np.ones(n_positions, dtype=bool), par], axis=1)


def puncture(pattern: PuncturePattern, sys_bits, par_bits) -> np.ndarray:
    """Interleaves (sys, par) pairs and drops the masked-out positions."""
    sys_bits = np.asarray(sys_bits)
    par_bits = np.asarray(par_bits)
    mask = pattern.keep_mask(sys_bits.size)
    stream = np.stack([sys_bits, par_bits], axis=1)
    return stream[mask]


def depuncture(pattern: PuncturePattern, values, n_positions: int) -> np.ndarray:
    """Scatters kept values back to the full (sys, par) grid, zeros elsewhere."""
    mask = pattern.keep_mask(n_positions)
    out = np.zeros((n_positions, 2))
    out[mask] = np.asarray(values, dtype=float)
    return out


# ------------------------------------------------------------ spread interleaver

@dataclass
class SpreadInterleaver:
    perm: np.ndarray
    s: int
    seed: int

    @property
    def n(self) -> int:
        return len(self.perm)

    def interleave(self, x):
        return np.asarray(x)[self.perm]

    def deinterleave(self, x):
        out = np.empty_like(np.asarray(x))
        out[self.perm] = np.asarray(x)
        return out


def verify_spread(perm: np.ndarray, s: int) -> bool:
    """Spread property: |pi(i) - pi(j)| + |i - j| > s whenever |i - j| <= s."""
    perm = np.asarray(perm)
    for d in range(1, s + 1):
        if d >= len(perm):
            break
        if np.any(np.abs(perm[d:] - perm[:-d]) + d <= s):
            return False
    return True


def build_spread_interleaver(n: int, s: int | None = None, seed: int = 0,
                             max_restarts: int = 60) -> SpreadInterleaver:
    """Randomized greedy construction of an S-random permutation.

    Falls back to s-1 (with a warning) if the greedy fill keeps failing.
    """
    if s is None:
        s = int(np.sqrt(n / 2))
    rng = np.random.default_rng(seed)
    s_try = s
    while s_try >= 0:
        for _ in range(max_restarts):
            pool = rng.permutation(n)
            perm = np.empty(n, dtype=np.int64)
            used = np.zeros(n, dtype=bool)
            ok = True
            for i in range(n):
                lo = max(0, i - s_try)
                window = perm[lo:i]
                placed = False
                for v in pool:
                    if used[v]:
                        continue
                    d = np.arange(i - len(window), i)[::-1]
                    if len(window) == 0 or np.all(np.abs(v - window) + (i - np.arange(lo, i)) > s_try):
                        perm[i] = v
                        used[v] = True
                        placed = True
                        break
                if not placed:
                    ok = False
                    break
            if ok:
                return SpreadInterleaver(perm, s_try, seed)
        warnings.warn(f"spread {s_try} infeasible after {max_restarts} restarts; reducing")
        s_try -= 1
    raise RuntimeError("could not build any permutation")


# ------------------------------------------------------------ configs

@dataclass
class CodedSchemeConfig:
    """Everything needed to run one coded chain."""

    mode: str                       # "sc-cpm" | "p-cpm"
    scheme: CpmScheme
    labeling: str                   # "rimoldi" | "optimized"
    k_info: int
    n_it: int = 10
    n_o: int | None = None          # sc-cpm outer puncturing
    n_i: int | None = None
    r_sccc: float | None = None     # p-cpm overall binary-code rate
    interleaver_seed: int = 1
    spread: int | None = None
    name: str = ""

    def __post_init__(self):
        if self.mode not in ("sc-cpm", "p-cpm"):
            raise ValueError("mode must be 'sc-cpm' or 'p-cpm'")
        if self.mode == "sc-cpm" and (self.n_o is None or self.n_i is None):
            raise ValueError("sc-cpm needs n_o and n_i")
        if self.mode == "p-cpm" and self.r_sccc is None:
            raise ValueError("p-cpm needs r_sccc")

    def to_json_dict(self) -> dict:
        s = self.scheme
        return {"mode": self.mode, "labeling": self.labeling, "k_info": self.k_info,
                "n_it": self.n_it, "n_o": self.n_o, "n_i": self.n_i,
                "r_sccc": self.r_sccc, "interleaver_seed": self.interleaver_seed,
                "spread": self.spread, "name": self.name,
                "scheme": {"m": s.m, "q": s.q, "p": s.p, "pulse": s.pulse.kind, "L": s.L}}

    @classmethod
    def from_json_dict(cls, d: dict) -> "CodedSchemeConfig":
        sd = d["scheme"]
        cpm = make_scheme(sd["m"], sd["q"], sd["p"], sd["pulse"], sd["L"])
        kw = {k: d.get(k) for k in ("mode", "labeling", "k_info", "n_it", "n_o",
                                    "n_i", "r_sccc", "interleaver_seed", "spread", "name")}
        kw = {k: v for k, v in kw.items() if v is not None}
        return cls(scheme=cpm, **kw)


def load_config(path) -> CodedSchemeConfig:
    with open(path) as fh:
        return CodedSchemeConfig.from_json_dict(json.load(fh))


def save_config(config: CodedSchemeConfig, path):
    with open(path, "w") as fh:
        json.dump(config.to_json_dict(), fh, indent=1)


# ------------------------------------------------------------ transceiver helpers

def label_to_edge_lut(trellis: Trellis, labeling: Labeling) -> np.ndarray:
    """[S, M] edge index for (state, label); inverse of a right-resolving map."""
    M = trellis.scheme.M
    lut = np.full((trellis.n_states, M), -1, dtype=np.int64)
    for e in range(trellis.n_edges):
        lut[trellis.edge_start[e], labeling.labels[e]] = e
    if (lut < 0).any():
        raise ValueError("labeling is not right-resolving")
    return lut


def encode_bits_to_path(trellis: Trellis, lut: np.ndarray, bits: np.ndarray) -> np.ndarray:
    """Drive the modulation trellis from state 0 with m-bit label groups."""
    m = trellis.scheme.m
    M = trellis.scheme.M
    if bits.size % m:
        raise ValueError("bit count not a multiple of bits-per-symbol")
    weights = 1 << np.arange(m - 1, -1, -1)
    labels = bits.reshape(-1, m) @ weights
    path = np.empty(labels.size, dtype=np.int64)
    s = 0
    for n, lab in enumerate(labels):
        e = lut[s, lab]
        path[n] = e
        s = trellis.edge_end[e]
    return path


@dataclass
class FrameResult:
    bit_errors: int
    frame_error: bool
    info_llrs: np.ndarray
    info_bits: np.ndarray
    extrinsic_mean_abs: np.ndarray     # per iteration
    demod_calls: int


@dataclass
class _ScCpmChain:
    config: CodedSchemeConfig
    trellis: Trellis
    labeling: Labeling
    lut: np.ndarray
    code: ConvCode
    pattern: PuncturePattern
    interleaver: SpreadInterleaver
    n_positions: int
    n_channel_bits: int

    @property
    def es_per_info_bit(self) -> float:
        n_sym = self.n_channel_bits // self.trellis.scheme.m
        return n_sym * self.trellis.scheme.es / self.config.k_info


def build_sc_cpm_chain(config: CodedSchemeConfig, ns: int = 8) -> _ScCpmChain:
    if config.k_info % config.n_o:
        raise ValueError("k_info must be a multiple of n_o")
    cpm = config.scheme
    tr = build_trellis(cpm, ns)
    lab = rimoldi_labeling(tr)
    code = ConvCode()
    pattern = PuncturePattern(config.n_o, config.n_i)
    n_positions = config.k_info  # punctured block part; tail pairs kept whole
    n_eff = 2 * config.n_i * (config.k_info // config.n_o) + 2 * code.mem
    if n_eff % cpm.m:
        raise ValueError("channel bits not a multiple of bits/symbol; adjust k_info")
    il = build_spread_interleaver(n_eff, config.spread, config.interleaver_seed)
    return _ScCpmChain(config, tr, lab, label_to_edge_lut(tr, lab), code, pattern,
                       il, n_positions, n_eff)


def sc_cpm_encode(chain: _ScCpmChain, info_bits: np.ndarray) -> np.ndarray:
    sys_b, par_b = chain.code.encode(info_bits, terminate=True)
    k = chain.n_positions
    kept = puncture(chain.pattern, sys_b[:k], par_b[:k])
    tail = np.stack([sys_b[k:], par_b[k:]], axis=1).ravel()
    stream = np.concatenate([kept, tail])
    return chain.interleaver.interleave(stream)


def sc_cpm_transceive(config: CodedSchemeConfig, eb_n0_db: float, num_frames: int,
                      seed: int = 0, ns: int = 8, backend=None,
                      chain: _ScCpmChain | None = None) -> list[FrameResult]:
    """Iterative receive chain: soft demodulator and outer decoder exchange
    extrinsics through the interleaver for n_it rounds."""
    ch = chain if chain is not None else build_sc_cpm_chain(config, ns)
    cpm = config.scheme
    tr, code, pattern, il = ch.trellis, ch.code, ch.pattern, ch.interleaver
    bits_mat = ch.labeling.bits()
    k = config.k_info
    n0 = ch.es_per_info_bit / 10 ** (eb_n0_db / 10)
    sigma2 = siso.awgn_sigma2(n0, ns, cpm.t)
    out = []
    for rng in np.random.SeedSequence(seed).spawn(num_frames):
        r = np.random.default_rng(rng)
        info = r.integers(0, 2, k)
        coded = sc_cpm_encode(ch, info)
        path = encode_bits_to_path(tr, ch.lut, coded)
        tx = tr.segments[path].ravel()
        y = tx + awgn(r, tx.size, sigma2)
        lam = siso.branch_metrics(tr, y, n0)
        m = cpm.m
        prior_bits = np.zeros((len(path), m))
        ext_hist = []
        dec = None
        n_blk = ch.n_channel_bits - 2 * code.mem
        for _ in range(config.n_it):
            demod = siso.bcjr_bit_llrs(tr, bits_mat, lam, prior_bits, backend=backend)
            deint = il.deinterleave(demod.extrinsic.reshape(-1))
            blk, tail = deint[:n_blk], deint[n_blk:]
            grid = depuncture(pattern, blk, ch.n_positions)
            sys_llr = np.concatenate([grid[:, 0], tail[0::2]])
            par_llr = np.concatenate([grid[:, 1], tail[1::2]])
            dec = code.siso_decode(sys_llr, par_llr, backend=backend)
            # code-only information per coded bit: posterior minus its input
            code_ext = np.stack([dec.llr[:, 0] - sys_llr, dec.llr[:, 1] - par_llr], axis=1)
            blk_ext = code_ext[: ch.n_positions][pattern.keep_mask(ch.n_positions)]
            tail_ext = code_ext[ch.n_positions:].ravel()
            prior_bits = il.interleave(np.concatenate([blk_ext, tail_ext])).reshape(-1, m)
            ext_hist.append(float(np.abs(demod.extrinsic).mean()))
        info_llr = dec.llr[:k, 0]
        decided = (info_llr > 0).astype(np.int64)
        nerr = int((decided != info).sum())
        out.append(FrameResult(nerr, nerr > 0, info_llr, info, np.array(ext_hist), 1))
    return out


@dataclass
class _PCpmChain:
    config: CodedSchemeConfig
    trellis: Trellis
    labeling: Labeling
    lut: np.ndarray
    outer: ConvCode
    outer_pattern: PuncturePattern
    interleaver: SpreadInterleaver
    inner: ConvCode
    inner_keep: np.ndarray          # [n_inner, 2] bool (sys, par)
    n_outer_positions: int
    n_inner: int
    n_channel_bits: int

    @property
    def es_per_info_bit(self) -> float:
        n_sym = self.n_channel_bits // self.trellis.scheme.m
        return n_sym * self.trellis.scheme.es / self.config.k_info


def inner_keep_mask(n_positions: int, n_keep: int) -> np.ndarray:
    """Rate-matching mask for the inner code: evenly spaced parity bits first,
    evenly spaced systematic bits once all parity is kept.  The high rates of
    interest put the inner code above rate one, where its systematic stream
    must be (partly or fully) dropped; the recursive parity stream is what
    buys interleaver gain, so it has priority."""
    if n_keep > 2 * n_positions:
        raise ValueError("cannot keep more bits than the code emits")
    keep = np.zeros((n_positions, 2), dtype=bool)
    kp = min(n_keep, n_positions)
    idx = np.floor((np.arange(kp) + 0.5) * n_positions / kp).astype(int)
    keep[idx, 1] = True
    ks = n_keep - kp
    if ks > 0:
        idx = np.floor((np.arange(ks) + 0.5) * n_positions / ks).astype(int)
        keep[idx, 0] = True
    if keep.sum() != n_keep:
        raise AssertionError("inner keep mask collision")
    return keep


def build_p_cpm_chain(config: CodedSchemeConfig, ns: int = 8,
                      labeling: Labeling | None = None) -> _PCpmChain:
    from .mapping import best_labeling
    cpm = config.scheme
    tr = build_trellis(cpm, ns)
    if labeling is None:
        labeling, _ = best_labeling(tr)
    outer = ConvCode()
    inner = ConvCode()
    outer_pattern = PuncturePattern(4, 3)          # outer rate 2/3
    if (config.k_info + outer.mem) % outer_pattern.n_o:
        raise ValueError("k_info + 2 must be a multiple of 4 for the outer puncturer")
    n_outer_positions = config.k_info + outer.mem
    n_kept_outer = int(np.count_nonzero(outer_pattern.keep_mask(n_outer_positions)))
    il = build_spread_interleaver(n_kept_outer, config.spread, config.interleaver_seed)
    n_inner = n_kept_outer + inner.mem
    m = cpm.m
    n_ch = m * round(config.k_info / (config.r_sccc * m))
    keep = inner_keep_mask(n_inner, n_ch)
    return _PCpmChain(config, tr, labeling, label_to_edge_lut(tr, labeling), outer,
                      outer_pattern, il, inner, keep, n_outer_positions, n_inner, n_ch)


def p_cpm_encode(chain: _PCpmChain, info_bits: np.ndarray) -> np.ndarray:
    sys_o, par_o = chain.outer.encode(info_bits, terminate=True)
    outer_stream = puncture(chain.outer_pattern, sys_o, par_o)
    inner_in = chain.interleaver.interleave(outer_stream)
    sys_i, par_i = chain.inner.encode(inner_in, terminate=True)
    grid = np.stack([sys_i, par_i], axis=1)
    return grid[chain.inner_keep]


def p_cpm_transceive(config: CodedSchemeConfig, eb_n0_db: float, num_frames: int,
                     seed: int = 0, ns: int = 8, backend=None,
                     chain: _PCpmChain | None = None) -> list[FrameResult]:
    """Pragmatic chain: one soft-demodulation pass (uniform priors), then
    n_it internal iterations of the concatenated binary decoder.  No
    information flows back to the demodulator."""
    ch = chain if chain is not None else build_p_cpm_chain(config, ns)
    cpm = config.scheme
    tr, il = ch.trellis, ch.interleaver
    bits_mat = ch.labeling.bits()
    k = config.k_info
    n0 = ch.es_per_info_bit / 10 ** (eb_n0_db / 10)
    sigma2 = siso.awgn_sigma2(n0, ns, cpm.t)
    out = []
    for rng in np.random.SeedSequence(seed).spawn(num_frames):
        r = np.random.default_rng(rng)
        info = r.integers(0, 2, k)
        chan_bits = p_cpm_encode(ch, info)
        path = encode_bits_to_path(tr, ch.lut, chan_bits)
        tx = tr.segments[path].ravel()
        y = tx + awgn(r, tx.size, sigma2)
        lam = siso.branch_metrics(tr, y, n0)
        demod_calls = 1
        demod = siso.bcjr_bit_llrs(tr, bits_mat, lam, backend=backend)
        grid = np.zeros((ch.n_inner, 2))
        grid[ch.inner_keep] = demod.llr.reshape(-1)
        sys_i_llr, par_i_llr = grid[:, 0], grid[:, 1]
        ki = ch.n_inner - ch.inner.mem
        prior_inner = np.zeros(ch.n_inner)
        ext_hist = []
        outer_res = None
        for _ in range(config.n_it):
            inner_res = ch.inner.siso_decode(sys_i_llr, par_i_llr,
                                             input_prior=prior_inner, backend=backend)
            # input-bit extrinsic: strip both the prior and the direct
            # systematic observation before crossing the interleaver
            to_outer = il.deinterleave((inner_res.llr[:, 0] - prior_inner - sys_i_llr)[:ki])
            grid_o = depuncture(ch.outer_pattern, to_outer, ch.n_outer_positions)
            outer_res = ch.outer.siso_decode(grid_o[:, 0], grid_o[:, 1], backend=backend)
            code_ext = np.stack([outer_res.llr[:, 0] - grid_o[:, 0],
                                 outer_res.llr[:, 1] - grid_o[:, 1]], axis=1)
            kept = code_ext[ch.outer_pattern.keep_mask(ch.n_outer_positions)]
            prior_inner = np.concatenate([il.interleave(kept), np.zeros(ch.inner.mem)])
            ext_hist.append(float(np.abs(prior_inner).mean()))
        info_llr = outer_res.llr[:k, 0]
        decided = (info_llr > 0).astype(np.int64)
        nerr = int((decided != info).sum())
        out.append(FrameResult(nerr, nerr > 0, info_llr, info, np.array(ext_hist),
                               demod_calls))
    return out


def transceive(config: CodedSchemeConfig, eb_n0_db: float, num_frames: int,
               seed: int = 0, ns: int = 8, backend=None, chain=None):
    fn = sc_cpm_transceive if config.mode == "sc-cpm" else p_cpm_transceive
    return fn(config, eb_n0_db, num_frames, seed=seed, ns=ns, backend=backend,
              chain=chain)


def build_chain(config: CodedSchemeConfig, ns: int = 8):
    return (build_sc_cpm_chain(config, ns) if config.mode == "sc-cpm"
            else build_p_cpm_chain(config, ns))


# ------------------------------------------------------------ measurements

def info_rate_estimate(llrs, true_bits) -> float:
    """Mutual information (bits per info bit) between encoder input and the
    decoder's soft output: 1 - avg binary entropy of the posterior probability
    assigned to the transmitted bit value."""
    llrs = np.asarray(llrs, dtype=float).ravel()
    bits = np.asarray(true_bits).ravel()
    toward = np.where(bits == 1, llrs, -llrs)
    mag = np.abs(toward)
    t = np.exp2(-mag)
    ent = np.log2(1.0 + t) + (t / (1.0 + t)) * mag
    return float(np.clip(1.0 - ent.mean(), 0.0, 1.0))


@dataclass
class BerPoint:
    eb_n0_db: float
    ber: float
    fer: float
    frames: int
    bit_errors: int
    frame_errors: int
    ci_low: float
    ci_high: float


def ber_curve(config: CodedSchemeConfig, eb_n0_grid, seed: int = 0, ns: int = 8,
              max_frames: int = 200, target_frame_errors: int = 200,
              min_frames: int = 20, backend=None, chain=None) -> list[BerPoint]:
    """Frame-based error-rate sweep with early stop on enough frame errors.
    Confidence bounds are Clopper-Pearson 95% on the frame error rate."""
    from scipy.stats import beta as beta_dist
    ch = chain if chain is not None else build_chain(config, ns)
    rows = []
    for i, eb in enumerate(np.atleast_1d(eb_n0_grid)):
        frames = 0
        bit_err = 0
        fr_err = 0
        while frames < max_frames and (fr_err < target_frame_errors or frames < min_frames):
            batch = transceive(config, float(eb), min(20, max_frames - frames),
                               seed=(seed, i, frames), ns=ns, backend=backend, chain=ch)
            for f in batch:
                bit_err += f.bit_errors
                fr_err += int(f.frame_error)
            frames += len(batch)
        n_bits = frames * config.k_info
        lo = beta_dist.ppf(0.025, fr_err, frames - fr_err + 1) if fr_err > 0 else 0.0
        hi = (beta_dist.ppf(0.975, fr_err + 1, frames - fr_err)
              if fr_err < frames else 1.0)
        rows.append(BerPoint(float(eb), bit_err / n_bits, fr_err / frames, frames,
                             bit_err, fr_err, float(lo), float(hi)))
    return rows


def ber_rows_to_csv(rows: list[BerPoint], path):
    cols = ["eb_n0_db", "ber", "fer", "frames", "bit_errors", "frame_errors",
            "ci_low", "ci_high"]
    lines = [",".join(cols)]
    for r in rows:
        lines.append(",".join(f"{getattr(r, c):.10g}" for c in cols))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# ------------------------------------------------------------ complexity

@dataclass
class ComplexityReport:
    y_sccc: float
    y_cpm: float
    y_total: float
    y_sc_cpm: float | None = None
    ratio: float | None = None

    def rounded(self):
        vals = [round(self.y_sccc), round(self.y_cpm), round(self.y_total)]
        if self.y_sc_cpm is not None:
            vals.append(round(self.y_sc_cpm))
        return vals


def decoder_edges_per_info_bit(cpm: CpmScheme, rate: Fraction) -> Fraction:
    """Soft-demodulator trellis edges visited per information bit."""
    n_states = cpm.p * cpm.M ** (cpm.L - 1)
    return Fraction(cpm.M * n_states, cpm.m) / rate


def complexity_report(p_scheme: CpmScheme, p_rate, sc_scheme: CpmScheme | None = None,
                      sc_rate=None, n_it: int = 10, n_so: int = 4,
                      n_si: int = 4) -> ComplexityReport:
    """Edges-per-information-bit accounting for the pragmatic chain (binary
    decoder + one demodulator pass) and the iterative serial chain."""
    p_rate = Fraction(p_rate) if not isinstance(p_rate, Fraction) else p_rate
    y_sccc = 2 * n_it * (Fraction(n_so) + Fraction(3, 2) * n_si)
    y_cpm = decoder_edges_per_info_bit(p_scheme, p_rate)
    y_total = y_sccc + y_cpm
    y_sc = ratio = None
    if sc_scheme is not None:
        sc_rate = Fraction(sc_rate) if not isinstance(sc_rate, Fraction) else sc_rate
        y_sc = n_it * (2 * n_so + decoder_edges_per_info_bit(sc_scheme, sc_rate))
        ratio = round(y_sc) / (round(y_sccc) + round(y_cpm))
    return ComplexityReport(float(y_sccc), float(y_cpm), float(y_total),
                            float(y_sc) if y_sc is not None else None,
                            float(ratio) if ratio is not None else None)
