"""Time-invariant CPM trellis: phase-state decomposition, edge waveform
segments, labelings, complexity, and Euclidean-distance searches.

State convention
----------------
A state packs the phase index beta in {0..P-1} and the L-1 most recent ring
symbols (c_1 = newest, ..., c_{L-1} = oldest):

    state = beta * M**(L-1) + sum_k c_k * M**(k-1)

An edge additionally carries the current input u; its window alpha lists
(u, c_1, ..., c_{L-1}) newest-first, and advancing the trellis folds the
oldest window symbol into the phase: beta' = (beta + q * alpha[-1]) mod p.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from math import pi

import numpy as np

from .waveform import CpmScheme, phase_pulse, tilt_phase_offsets

MAX_EDGES_DEFAULT = 10 ** 6


class TrellisTooLarge(ValueError):
    pass


class MappingConditionsNotMet(ValueError):
    """Raised when the closed-form optimized labeling does not exist."""

    def __init__(self, conditions):
        self.conditions = list(conditions)
        super().__init__("; ".join(self.conditions))


@dataclass
class Trellis:
    scheme: CpmScheme
    ns: int
    n_states: int
    edge_start: np.ndarray       # [E] int32
    edge_end: np.ndarray         # [E] int32
    edge_input: np.ndarray       # [E] int32, ring input u
    edge_alpha: np.ndarray       # [E, L] window symbols, newest first
    edge_beta: np.ndarray        # [E] phase index of the start state
    segments: np.ndarray         # [E, ns] complex128 tilted waveform

    @property
    def n_edges(self) -> int:
        return len(self.edge_start)

    @property
    def seg_energy(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.segments.real, self.segments.real) + \
               np.einsum("ij,ij->i", self.segments.imag, self.segments.imag)

    def state_of(self, beta: int, correlative) -> int:
        m_pow = self.scheme.M ** np.arange(max(self.scheme.L - 1, 0))
        c = np.asarray(correlative, dtype=int)
        return int(beta
                   * self.scheme.M ** (self.scheme.L - 1) + int((c * m_pow).sum()))

    def edges_from(self, state: int) -> np.ndarray:
        m = self.scheme.M
        return np.arange(state * m, (state + 1) * m)

    def path_edges(self, u_symbols, beta0: int = 0, correlative0=None) -> np.ndarray:
        """Edge indices visited when feeding `u_symbols` from a start state.

        `correlative0` lists the pre-history newest-first (default all zeros).
        """
        L, M, P, Q = self.scheme.L, self.scheme.M, self.scheme.p, self.scheme.q
        u = np.asarray(u_symbols, dtype=np.int64)
        n = u.size
        c0 = (np.zeros(L - 1, dtype=np.int64) if correlative0 is None
              else np.asarray(correlative0, dtype=np.int64))
        hist = np.concatenate([c0[::-1], u])        # chronological timeline
        absorbed = np.zeros(n, dtype=np.int64)
        if n > 1:
            absorbed[1:] = np.cumsum(hist[: n - 1])
        beta = (beta0 + Q * absorbed) % P
        if L > 1:
            win = np.lib.stride_tricks.sliding_window_view(hist, L)[:n]
            weights = M ** np.arange(L - 2, -1, -1)
            corr_code = win[:, : L - 1] @ weights
        else:
            corr_code = 0
        state = beta * M ** (L - 1) + corr_code
        return state * M + u

    def concat_segments(self, edge_path) -> np.ndarray:
        return self.segments[np.asarray(edge_path, dtype=int)].ravel()

    def dump(self, labeling=None) -> dict:
        edges = []
        for e in range(self.n_edges):
            rec = {"start": int(self.edge_start[e]), "input": int(self.edge_input[e]),
                   "end": int(self.edge_end[e])}
            if labeling is not None:
                rec["label"] = int(labeling.labels[e])
            edges.append(rec)
        out = {
            "scheme": {"m": self.scheme.m, "q": self.scheme.q, "p": self.scheme.p,
                       "pulse": self.scheme.pulse.kind, "L": self.scheme.L},
            "n_states": self.n_states,
            "samples_per_symbol": self.ns,
            "edges": edges,
        }
        if labeling is not None:
            out["labeling"] = labeling.provenance
        return out


def cpm_complexity(cpm: CpmScheme):
    """Trellis edges per modulation input bit: P * 2**(m*L) / m (exact)."""
    y = Fraction(cpm.p * 2 ** (cpm.m * cpm.L), cpm.m)
    return int(y) if y.denominator == 1 else y


def build_trellis(cpm: CpmScheme, ns: int = 8, max_edges: int = MAX_EDGES_DEFAULT) -> Trellis:
    M, P, Q, L, T = cpm.M, cpm.p, cpm.q, cpm.L, cpm.t
    n_states = P * M ** (L - 1)
    n_edges = n_states * M
    if n_edges > max_edges:
        raise TrellisTooLarge(f"{n_edges} edges exceeds cap {max_edges}")

    edge_start = np.repeat(np.arange(n_states, dtype=np.int32), M)
    edge_input = np.tile(np.arange(M, dtype=np.int32), n_states)
    # unpack states: beta plus correlative symbols c_1 (newest) .. c_{L-1}
    states = np.arange(n_states)
    beta_s = states // M ** (L - 1)
    corr = np.empty((n_states, max(L - 1, 0)), dtype=np.int32)
    rem = states % M ** (L - 1)
    for k in range(L - 1):
        corr[:, k] = rem % M
        rem //= M

    edge_beta = beta_s[edge_start].astype(np.int32)
    alpha = np.empty((n_edges, L), dtype=np.int32)
    alpha[:, 0] = edge_input
    if L > 1:
        alpha[:, 1:] = corr[edge_start]

    oldest = alpha[:, -1]
    beta_next = (edge_beta + Q * oldest) % P
    if L > 1:
        corr_next = np.column_stack([edge_input, corr[edge_start][:, :-1]])
        corr_code = (corr_next * (M ** np.arange(L - 1))[None, :]).sum(axis=1)
    else:
        corr_code = 0
    edge_end = (beta_next * M ** (L - 1) + corr_code).astype(np.int32)

    tau = np.arange(ns) * (T / ns)
    qtab = np.stack([phase_pulse(cpm.pulse, tau + k * T, T) for k in range(L)])
    data_phase = 4.0 * pi * cpm.h * (alpha @ qtab)
    phase = data_phase + (2.0 * pi / P) * edge_beta[:, None] + tilt_phase_offsets(cpm, ns)[None, :]
    segments = cpm.amplitude * np.exp(1j * phase)

    return Trellis(cpm, ns, n_states, edge_start, edge_end, edge_input,
                   alpha, edge_beta, segments)


@dataclass
class Labeling:
    """Per-edge m-bit labels.  Construction verifies the right-resolving
    property (edges leaving one state carry distinct labels)."""

    labels: np.ndarray
    m: int
    provenance: str

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int32)

    def bits(self) -> np.ndarray:
        """[E, m] bit matrix, MSB first."""
        shifts = np.arange(self.m - 1, -1, -1)
        return ((self.labels[:, None] >> shifts[None, :]) & 1).astype(np.int8)


def is_right_resolving(trellis: Trellis, labels: np.ndarray) -> bool:
    M = trellis.scheme.M
    per_state = np.asarray(labels).reshape(trellis.n_states, M)
    return all(len(np.unique(row)) == M for row in per_state)


def make_labeling(trellis: Trellis, labels, provenance: str) -> Labeling:
    lab = Labeling(np.asarray(labels), trellis.scheme.m, provenance)
    if not is_right_resolving(trellis, lab.labels):
        raise ValueError(f"labeling {provenance!r} is not right-resolving")
    return lab


def rimoldi_labeling(trellis: Trellis) -> Labeling:
    """Natural binary label of the ring input symbol."""
    return make_labeling(trellis, trellis.edge_input.copy(), "rimoldi-natural")


def gray_code(i: int) -> int:
    return i ^ (i >> 1)


def optimized_cpe_labeling(trellis: Trellis) -> Labeling:
    """Closed-form distance-matched labeling.

    Each edge's cluster index is i = (sum(alpha) + beta * q^{-1}) mod M and the
    label is the binary-reflected Gray code of i.  Requires P to be a multiple
    of M (for M = 2 this is just P even); otherwise the mod-M reduction of the
    phase index is not well defined and MappingConditionsNotMet is raised.
    """
    cpm = trellis.scheme
    conditions = []
    if cpm.p % cpm.M != 0:
        if cpm.M == 2:
            conditions.append(f"P is even (P={cpm.p})")
        else:
            conditions.append(f"P is a multiple of M (P={cpm.p}, M={cpm.M})")
    if conditions:
        raise MappingConditionsNotMet(conditions)
    qinv = pow(cpm.q, -1, cpm.p)
    cluster = (trellis.edge_alpha.sum(axis=1) + trellis.edge_beta * qinv) % cpm.M
    labels = np.array([gray_code(int(i)) for i in cluster], dtype=np.int32)
    return make_labeling(trellis, labels, "optimized-analytic")


def segment_pair_dist2(trellis: Trellis) -> np.ndarray:
    """[E, E] squared Euclidean distances between edge segments, in the
    passband convention d^2 = (1/2) * integral |x1 - x2|^2 dt."""
    segs = trellis.segments
    dt = trellis.scheme.t / trellis.ns
    gram = segs @ segs.conj().T
    energy = np.real(np.diag(gram))
    d2 = (energy[:, None] + energy[None, :] - 2.0 * np.real(gram)) * (dt / 2.0)
    return np.maximum(d2, 0.0)


@dataclass
class DistanceReport:
    min_dist2: dict            # weight -> squared distance (passband), inf if none found
    event_depth: dict          # weight -> depth of the minimizing event
    de1_classification: str    # "finite" | "infinite" | "undetermined"
    max_depth: int
    scheme: CpmScheme

    def normalized(self, weight: int) -> float:
        """d^2 / (2 Eb) with Eb = Es / m."""
        eb = self.scheme.es / self.scheme.m
        return self.min_dist2[weight] / (2.0 * eb)


def min_distance_search(trellis: Trellis, labeling: Labeling,
                        max_hamming: int = 2, max_depth: int | None = None) -> DistanceReport:
    """Minimum squared Euclidean distance between label sequences at each
    input Hamming weight, via dynamic programming on the pair trellis.

    Weight-1 distance is classified infinite when no merged weight-1 event
    exists within `max_depth` and the running distance of open weight-1 pairs
    keeps strictly growing.
    """
    cpm = trellis.scheme
    if max_depth is None:
        max_depth = 4 * (cpm.L + cpm.p) + 8
    if max_depth < 2 * cpm.L + cpm.p:
        raise ValueError("max_depth too small to observe remerging events")

    S, E = trellis.n_states, trellis.n_edges
    d2 = segment_pair_dist2(trellis)
    bits = labeling.bits()
    ham = np.zeros((E, E), dtype=np.int32)
    for k in range(labeling.m):
        ham += bits[:, k][:, None] != bits[:, k][None, :]

    e1, e2 = np.meshgrid(np.arange(E), np.arange(E), indexing="ij")
    e1, e2 = e1.ravel(), e2.ravel()
    ps1, ps2 = trellis.edge_start[e1], trellis.edge_start[e2]
    pe1, pe2 = trellis.edge_end[e1], trellis.edge_end[e2]
    pd2 = d2[e1, e2]
    pham = ham[e1, e2]

    W = max_hamming
    diag = np.arange(S)
    cost = np.full((W + 1, S, S), np.inf)
    cost[0, diag, diag] = 0.0
    best = {w: np.inf for w in range(1, W + 1)}
    depth_at = {w: -1 for w in range(1, W + 1)}

    for depth in range(1, max_depth + 1):
        new = np.full_like(cost, np.inf)
        for w in range(W + 1):
            src = cost[w][ps1, ps2] + pd2
            wn = w + pham
            ok = wn <= W
            if not ok.any():
                continue
            flat = wn[ok] * (S * S) + pe1[ok] * S + pe2[ok]
            np.minimum.at(new.reshape(-1), flat, src[ok])
        cost = new
        cost[0, diag, diag] = 0.0
        for w in range(1, W + 1):
            merged = cost[w, diag, diag].min()
            if merged < best[w] - 1e-12:
                best[w] = float(merged)
                depth_at[w] = depth

    # growth probe for weight 1: pairs forced to diverge at time zero, so the
    # running minimum cannot be refreshed by later divergences
    probe = np.full(S * S, np.inf)
    sel = (pham == 1) & (ps1 == ps2)
    np.minimum.at(probe, pe1[sel] * S + pe2[sel], pd2[sel])
    keep = pham == 0
    ks1, ks2, kd1, kd2, kw = ps1[keep], ps2[keep], pe1[keep], pe2[keep], pd2[keep]
    open_hist = [float(probe[probe < np.inf].min()) if np.isfinite(probe).any() else np.inf]
    for depth in range(2, max_depth + 1):
        new = np.full(S * S, np.inf)
        np.minimum.at(new, kd1 * S + kd2, probe[ks1 * S + ks2] + kw)
        probe = new
        off = probe.reshape(S, S)[~np.eye(S, dtype=bool)]
        open_hist.append(float(off.min()) if np.isfinite(off).any() else np.inf)

    if np.isfinite(best.get(1, np.inf)):
        cls = "finite"
    else:
        horizon = max(cpm.L + cpm.p, 2)
        tail = [v for v in open_hist[horizon:] if np.isfinite(v)]
        growing = len(tail) >= 4 and all(b > a + 1e-12 for a, b in zip(tail[-4:], tail[-3:]))
        cls = "infinite" if growing else "undetermined"
    return DistanceReport(best, depth_at, cls, max_depth, cpm)


def dump_trellis_json(trellis: Trellis, path, labeling=None):
    with open(path, "w") as fh:
        json.dump(trellis.dump(labeling), fh)
