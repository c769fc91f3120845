"""Label-assignment machinery: minimum-distance difference sequences, the
edge-pair constraint graph, pairwise path metrics, greedy clustering with
Gray assignment, and the closed-form cluster construction with its
feasibility conditions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import pi

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import linear_sum_assignment

from .trellis import (Trellis, Labeling, build_trellis, make_labeling,
                      gray_code, segment_pair_dist2, MappingConditionsNotMet)
from .waveform import CpmScheme, phase_pulse


# ------------------------------------------------------------ difference sequences

def mergeable(b, p: int) -> bool:
    """A difference sequence generates remerging path pairs iff its element
    sum vanishes modulo the number of phase states."""
    return int(np.sum(b)) % p == 0


def diff_sequence_dist2(cpm: CpmScheme, b, points_per_symbol: int = 256) -> float:
    """Squared Euclidean distance of the waveform pair generated by a
    difference sequence, integrated over the event support."""
    b = np.asarray(b, dtype=int)
    delta = len(b)
    T, L = cpm.t, cpm.L
    n_t = (delta + L - 1) * points_per_symbol + 1
    t = np.linspace(T, (delta + L) * T, n_t)
    dpsi = np.zeros(n_t)
    for i, bi in enumerate(b, start=1):
        if bi:
            dpsi += bi * phase_pulse(cpm.pulse, t - i * T, T)
    dpsi *= 4.0 * pi * cpm.h
    return float((2.0 * cpm.es / T) * simpson(1.0 - np.cos(dpsi), x=t))


def _candidates_of_length(cpm: CpmScheme, length: int) -> np.ndarray:
    """Canonical (first element positive) event-generating sequences, [n, length]."""
    hi = cpm.M - 1
    if length == 1:
        vals = np.arange(1, hi + 1)
        return vals[vals % cpm.p == 0][:, None]
    cols = [np.arange(1, hi + 1)]
    cols += [np.arange(-hi, hi + 1)] * (length - 2)
    cols += [np.concatenate([np.arange(-hi, 0), np.arange(1, hi + 1)])]
    grids = np.meshgrid(*cols, indexing="ij")
    b = np.stack([g.ravel() for g in grids], axis=1)
    return b[b.sum(axis=1) % cpm.p == 0]


def _batch_dist2(cpm: CpmScheme, b_mat: np.ndarray, pts: int) -> np.ndarray:
    """Trapezoid-rule squared distances for a batch of equal-length sequences."""
    delta = b_mat.shape[1]
    T, L = cpm.t, cpm.L
    n_t = (delta + L - 1) * pts + 1
    t = np.linspace(T, (delta + L) * T, n_t)
    qshift = np.stack([phase_pulse(cpm.pulse, t - i * T, T) for i in range(1, delta + 1)])
    dpsi = (4.0 * pi * cpm.h) * (b_mat @ qshift)
    return (2.0 * cpm.es / T) * np.trapezoid(1.0 - np.cos(dpsi), x=t, axis=1)


@dataclass
class MinDistanceResult:
    dist2: float
    achievers: list            # sequences (both signs) hitting the minimum
    max_len: int
    rel_tol: float

    @property
    def lengths(self):
        return sorted({len(b) for b in self.achievers})


def min_distance_diff_sequences(cpm: CpmScheme, max_len: int = 8,
                                rel_tol: float = 1e-6) -> MinDistanceResult:
    """Exhaustive search (vectorized coarse screen, fine re-evaluation) for
    the minimum-distance difference sequences up to `max_len`."""
    if max_len < 2:
        raise ValueError("max_len must be >= 2")
    survivors = []
    coarse_best = np.inf
    batches = []
    for length in range(1, max_len + 1):
        b_mat = _candidates_of_length(cpm, length)
        if b_mat.size == 0:
            continue
        d = _batch_dist2(cpm, b_mat, pts=24)
        coarse_best = min(coarse_best, float(d.min()))
        batches.append((b_mat, d))
    if not np.isfinite(coarse_best):
        raise ValueError("no event-generating difference sequences at this length")
    for b_mat, d in batches:
        keep = d <= coarse_best * 1.05 + 1e-12
        survivors.extend(tuple(int(x) for x in row) for row in b_mat[keep])
    fine = np.array([diff_sequence_dist2(cpm, b) for b in survivors])
    d2 = float(fine.min())
    ach = [survivors[i] for i in np.flatnonzero(fine <= d2 * (1.0 + rel_tol))]
    ach = ach + [tuple(-x for x in b) for b in ach]
    return MinDistanceResult(d2, ach, max_len, rel_tol)


# ------------------------------------------------------------ constraint graph

class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


@dataclass
class DifferenceGraph:
    trellis: Trellis
    b: tuple
    components: list           # list of frozensets of edge indices
    component_of: np.ndarray   # [E]

    @property
    def n_components(self) -> int:
        return len(self.components)


def phase_shell_sets(trellis: Trellis):
    """The P vertex sets V_p = {(alpha, (p - q*sum(alpha)) mod P)}, indexed
    by p; every trellis edge belongs to exactly one."""
    cpm = trellis.scheme
    p_idx = (trellis.edge_beta + cpm.q * trellis.edge_alpha.sum(axis=1)) % cpm.p
    return [frozenset(np.flatnonzero(p_idx == p).tolist()) for p in range(cpm.p)]


def build_difference_graph(cpm: CpmScheme, b, trellis: Trellis | None = None,
                           max_events: int = 10 ** 7) -> DifferenceGraph:
    """Connect trellis edges that sit in the same section of some error event
    generated by `b` (with distinct starting states); return the connected
    components.  Enumerates every event: all start phases, all pre/tail
    correlative fillers, and all symbol pairs consistent with each element."""
    b = tuple(int(x) for x in b)
    if not b or b[0] == 0 or b[-1] == 0:
        raise ValueError("difference sequence must have nonzero first/last elements")
    if not mergeable(b, cpm.p):
        raise ValueError("sequence sum must vanish mod P, otherwise paths never remerge")
    tr = trellis if trellis is not None else build_trellis(cpm, ns=2)
    M, P, L = cpm.M, cpm.p, cpm.L

    per_pos = []
    for bi in b:
        if bi == 0:
            per_pos.append([(v, v) for v in range(M)])
        else:
            vals = range(max(0, bi), M + min(0, bi))
            per_pos.append([(v, v - bi) for v in vals])
    n_events = P * M ** (2 * (L - 1)) * int(np.prod([len(c) for c in per_pos]))
    if n_events > max_events:
        raise ValueError(f"{n_events} events exceed cap {max_events}")

    uf = _UnionFind(tr.n_edges)
    fillers = list(itertools.product(range(M), repeat=L - 1))
    for beta0 in range(P):
        for pre in fillers:
            for choice in itertools.product(*per_pos):
                s1 = np.array([c[0] for c in choice])
                s2 = np.array([c[1] for c in choice])
                for tail in fillers:
                    seq1 = np.concatenate([s1, tail]).astype(int)
                    seq2 = np.concatenate([s2, tail]).astype(int)
                    e1 = tr.path_edges(seq1, beta0=beta0, correlative0=pre)
                    e2 = tr.path_edges(seq2, beta0=beta0, correlative0=pre)
                    starts1 = tr.edge_start[e1]
                    starts2 = tr.edge_start[e2]
                    for k in range(1, len(seq1)):
                        if starts1[k] != starts2[k]:
                            uf.union(int(e1[k]), int(e2[k]))

    roots = np.array([uf.find(e) for e in range(tr.n_edges)])
    comp_ids = {r: i for i, r in enumerate(np.unique(roots))}
    component_of = np.array([comp_ids[r] for r in roots])
    comps = [frozenset(np.flatnonzero(component_of == i).tolist())
             for i in range(len(comp_ids))]
    return DifferenceGraph(tr, b, comps, component_of)


def gamma_rotation_check(graph: DifferenceGraph, gamma: int):
    """Verify the phase rotation beta -> beta + gamma maps component vertex
    sets onto component vertex sets; returns the induced permutation."""
    tr = graph.trellis
    cpm = tr.scheme
    M, P, L = cpm.M, cpm.p, cpm.L
    state_corr = tr.edge_start % M ** (L - 1)
    rot_state = ((tr.edge_beta + gamma) % P) * M ** (L - 1) + state_corr
    rot_edge = rot_state * M + tr.edge_input
    index = {c: i for i, c in enumerate(graph.components)}
    perm = []
    for comp in graph.components:
        image = frozenset(int(rot_edge[e]) for e in comp)
        if image not in index:
            raise AssertionError(f"rotation by {gamma} does not map components to components")
    # second pass so the error above fires before building a partial answer
    for comp in graph.components:
        image = frozenset(int(rot_edge[e]) for e in comp)
        perm.append(index[image])
    return perm


# ------------------------------------------------------------ pairwise metrics

@dataclass
class PairMetricTable:
    log2_metric: np.ndarray    # [E, E]; maximal pair log2-likelihood, diag -inf
    pair_dist2: np.ndarray     # [E, E] minimal through-pair squared distance
    es_n0_db: float
    converged: bool
    iterations: int


def _steady_state_pair_costs(trellis: Trellis, d2: np.ndarray, probe_depth: int,
                             forward: bool, tol: float = 1e-9):
    """Min accumulated pair distance to reach (forward) or leave (backward)
    each state pair, iterated to steady state."""
    S = trellis.n_states
    e1, e2 = np.meshgrid(np.arange(trellis.n_edges), np.arange(trellis.n_edges),
                         indexing="ij")
    e1, e2 = e1.ravel(), e2.ravel()
    if forward:
        src1, src2 = trellis.edge_start[e1], trellis.edge_start[e2]
        dst1, dst2 = trellis.edge_end[e1], trellis.edge_end[e2]
    else:
        src1, src2 = trellis.edge_end[e1], trellis.edge_end[e2]
        dst1, dst2 = trellis.edge_start[e1], trellis.edge_start[e2]
    w = d2[e1, e2]
    flat_dst = dst1 * S + dst2
    cost = np.zeros(S * S)
    for it in range(1, probe_depth + 1):
        new = np.full(S * S, np.inf)
        np.minimum.at(new, flat_dst, cost[src1 * S + src2] + w)
        if np.max(np.abs(new - cost)) < tol:
            return new.reshape(S, S), True, it
        cost = new
    return cost.reshape(S, S), False, probe_depth


def pairwise_edge_metrics(trellis: Trellis, es_n0_db: float = 10.0,
                          probe_depth: int | None = None) -> PairMetricTable:
    """For every pair of section-zero edges, the maximum joint likelihood of
    path pairs through them, extended left and right to steady state.
    Equivalently minus the minimal accumulated squared distance scaled by the
    noise level; only the ordering matters to the clustering."""
    cpm = trellis.scheme
    if probe_depth is None:
        probe_depth = 4 * (cpm.L + cpm.p) + 8
    if probe_depth < cpm.L + cpm.p:
        raise ValueError("probe_depth must be at least L + P")
    d2 = segment_pair_dist2(trellis)
    fwd, ok_f, it_f = _steady_state_pair_costs(trellis, d2, probe_depth, True)
    bwd, ok_b, it_b = _steady_state_pair_costs(trellis, d2, probe_depth, False)
    through = (fwd[trellis.edge_start][:, trellis.edge_start] + d2
               + bwd[trellis.edge_end][:, trellis.edge_end])
    n0 = cpm.es / 10.0 ** (es_n0_db / 10.0)
    metric = -through / (n0 * np.log(2.0))
    np.fill_diagonal(metric, -np.inf)
    return PairMetricTable(metric, through, es_n0_db, ok_f and ok_b,
                           max(it_f, it_b))


# ------------------------------------------------------------ clustering

@dataclass
class Clustering:
    cluster_of: np.ndarray      # [E] cluster index in [0, M)
    labels: np.ndarray          # [E] Gray-assigned binary labels
    provenance: str
    fully_performed: bool
    n_top_pairs_split: int      # max-metric pairs that ended up in different clusters
    cluster_dist2: np.ndarray   # [M, M] min through-pair distance between clusters

    def to_labeling(self, trellis: Trellis) -> Labeling:
        return make_labeling(trellis, self.labels, self.provenance)


def _gray_assign(cluster_dist2: np.ndarray, m_bits: int):
    """Brute-force label assignment: cluster pairs are ranked by distance and
    the assignment whose Hamming-distance profile is lexicographically
    smallest over that ranking wins (closest pairs get adjacent labels)."""
    M = cluster_dist2.shape[0]
    pairs = sorted(((cluster_dist2[a, b], a, b)
                    for a in range(M) for b in range(a + 1, M)))
    best = None
    for perm in itertools.permutations(range(M)):
        prof = tuple(bin(gray_code(perm[a]) ^ gray_code(perm[b])).count("1")
                     for _, a, b in pairs)
        key = (prof, tuple(gray_code(perm[c]) for c in range(M)))
        if best is None or key < best[0]:
            best = (key, perm)
    perm = best[1]
    return np.array([gray_code(perm[c]) for c in range(M)])


def cluster_and_label(table: PairMetricTable, trellis: Trellis) -> Clustering:
    """Greedy agglomerative clustering of trellis edges into M equal groups.

    Pairs are merged in descending metric order; merges that would exceed the
    cluster size or put two same-start edges together are skipped.  If the
    greedy pass cannot reach M full clusters the remainder is completed by
    per-state assignment (best affinity, Hungarian), and the result is
    flagged as not fully performed.  Gray labels come from inter-cluster
    minimum distances.
    """
    cpm = trellis.scheme
    E, S, M = trellis.n_edges, trellis.n_states, cpm.M
    target = E // M
    metric = table.log2_metric
    iu = np.triu_indices(E, k=1)
    order = np.lexsort((iu[1], iu[0], -metric[iu]))
    pairs = list(zip(iu[0][order], iu[1][order]))

    uf = _UnionFind(E)
    size = {e: 1 for e in range(E)}
    starts = {e: {int(trellis.edge_start[e])} for e in range(E)}
    n_clusters = E
    for a, b in pairs:
        if n_clusters <= M or not np.isfinite(metric[a, b]):
            break
        ra, rb = uf.find(int(a)), uf.find(int(b))
        if ra == rb:
            continue
        if size[ra] + size[rb] > target or starts[ra] & starts[rb]:
            continue
        uf.union(ra, rb)
        r = uf.find(ra)
        o = rb if r == ra else ra
        size[r] += size[o]
        starts[r] |= starts[o]
        n_clusters -= 1

    roots = np.array([uf.find(e) for e in range(E)])
    uniq = np.unique(roots)
    fully = len(uniq) == M and all(size[r] == target for r in uniq)

    if fully:
        cluster_of = np.searchsorted(uniq, roots)
    else:
        # per-state assignment: seed clusters with the largest groups, then
        # give every state's M edges to the M clusters by best affinity
        group_sizes = sorted(((size[r], -r, r) for r in uniq), reverse=True)
        seeds = [g[2] for g in group_sizes[:M]]
        members = {i: set(np.flatnonzero(roots == r).tolist()) for i, r in enumerate(seeds)}
        assigned = np.full(E, -1)
        lin = metric.copy()
        lin[~np.isfinite(lin)] = lin[np.isfinite(lin)].min() - 1.0
        for i, r in enumerate(seeds):
            for e in members[i]:
                assigned[e] = i
        for s in range(S):
            edges = [e for e in range(S * 0, E) if trellis.edge_start[e] == s]
            edges = [e for e in edges if assigned[e] < 0]
            if not edges:
                continue
            free_clusters = [c for c in range(M)
                             if not any(trellis.edge_start[e] == s for e in members[c])]
            cost = np.zeros((len(edges), len(free_clusters)))
            for i, e in enumerate(edges):
                for j, c in enumerate(free_clusters):
                    aff = max((lin[e, o] for o in members[c]), default=0.0)
                    cost[i, j] = -aff
            ri, ci = linear_sum_assignment(cost)
            for i, j in zip(ri, ci):
                members[free_clusters[j]].add(edges[i])
                assigned[edges[i]] = free_clusters[j]
        cluster_of = assigned

    # inter-cluster distance and Gray labels
    cd = np.full((M, M), np.inf)
    for a in range(M):
        ia = cluster_of == a
        for b in range(a + 1, M):
            ib = cluster_of == b
            cd[a, b] = cd[b, a] = table.pair_dist2[np.ix_(ia, ib)].min()
    lab_of_cluster = _gray_assign(cd, cpm.m)
    labels = lab_of_cluster[cluster_of]

    # count top-metric pairs (same-start excluded) split across clusters
    finite = metric[iu][np.isfinite(metric[iu])]
    top = finite.max()
    split = 0
    for a, b in zip(*iu):
        if metric[a, b] >= top - 1e-9 and trellis.edge_start[a] != trellis.edge_start[b]:
            if cluster_of[a] != cluster_of[b]:
                split += 1
    return Clustering(cluster_of, labels, "optimized-clustered", fully, split, cd)


# ------------------------------------------------------------ analytic clusters

@dataclass
class ConditionReport:
    ok: bool
    conditions: list           # (description, passed, detail)

    def failures(self):
        return [c for c in self.conditions if not c[1]]


@dataclass
class AnalyticClustersResult:
    report: ConditionReport
    clustering: Clustering | None
    min_distance: MinDistanceResult | None

    @property
    def ok(self) -> bool:
        return self.report.ok


def check_mapping_conditions(cpm: CpmScheme, max_len: int | None = None) -> tuple:
    if max_len is None:
        # enumeration grows as (2M-1)**len; longer sequences accumulate
        # distance and stop competing well before these bounds
        max_len = {2: 8, 4: 6}.get(cpm.M, 4)
    mdr = min_distance_diff_sequences(cpm, max_len=max_len)
    conds = []
    if cpm.M == 2:
        conds.append(("P is even", cpm.p % 2 == 0, f"P={cpm.p}"))
        bad = [b for b in mdr.achievers if len(b) != 2]
        conds.append(("every minimum-distance difference sequence has length two",
                      not bad, f"violating: {bad[:4]}" if bad else ""))
    else:
        conds.append(("P is a multiple of M", cpm.p % cpm.M == 0,
                      f"P={cpm.p}, M={cpm.M}"))
        bad = [b for b in mdr.achievers if len(b) != 2 or abs(b[-1]) != 1]
        conds.append(("every minimum-distance difference sequence has length two"
                      " with last element +-1", not bad,
                      f"violating: {bad[:4]}" if bad else ""))
    return ConditionReport(all(c[1] for c in conds), conds), mdr


def analytic_clusters(cpm: CpmScheme, trellis: Trellis | None = None,
                      max_len: int | None = None) -> AnalyticClustersResult:
    """Closed-form clusters T(i) = union over k of V_{((k*M + i) * q) mod P},
    Gray-labeled by i, when the feasibility conditions hold; otherwise a
    structured report of which condition failed."""
    report, mdr = check_mapping_conditions(cpm, max_len=max_len)
    if not report.ok:
        return AnalyticClustersResult(report, None, mdr)
    tr = trellis if trellis is not None else build_trellis(cpm, ns=8)
    qinv = pow(cpm.q, -1, cpm.p)
    p_idx = (tr.edge_beta + cpm.q * tr.edge_alpha.sum(axis=1)) % cpm.p
    cluster_of = (p_idx * qinv) % cpm.M
    labels = np.array([gray_code(int(i)) for i in cluster_of], dtype=np.int32)
    d2 = segment_pair_dist2(tr)
    M = cpm.M
    cd = np.full((M, M), np.inf)
    table = pairwise_edge_metrics(tr)
    for a in range(M):
        ia = cluster_of == a
        for b in range(a + 1, M):
            ib = cluster_of == b
            cd[a, b] = cd[b, a] = table.pair_dist2[np.ix_(ia, ib)].min()
    clustering = Clustering(cluster_of.astype(np.int64), labels,
                            "optimized-analytic", True, 0, cd)
    return AnalyticClustersResult(report, clustering, mdr)


def best_labeling(trellis: Trellis, max_len: int | None = None):
    """Optimized labeling: analytic when the conditions hold, greedy-clustered
    fallback otherwise.  Returns (labeling, condition_report)."""
    res = analytic_clusters(trellis.scheme, trellis=trellis, max_len=max_len)
    if res.ok:
        return res.clustering.to_labeling(trellis), res.report
    table = pairwise_edge_metrics(trellis)
    clust = cluster_and_label(table, trellis)
    return clust.to_labeling(trellis), res.report


def same_partition(a: np.ndarray, b: np.ndarray) -> bool:
    """True when two cluster index arrays induce the same edge partition."""
    a = np.asarray(a)
    b = np.asarray(b)
    seen = {}
    for x, y in zip(a.tolist(), b.tolist()):
        if x in seen:
            if seen[x] != y:
                return False
        else:
            if y in seen.values():
                return False
            seen[x] = y
    return True
