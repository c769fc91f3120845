"""Monte-Carlo estimators for the modulation's information rates.

Joint capacity: C = m - avg_n(per-symbol soft-demodulation penalty), computed
from the forward recursion terminal against the transmitted-path metric.
Pragmatic capacity: sum over label-bit positions of 1 - H(bit | channel
output), computed from posterior bit LLRs with uniform priors.

Trials run on derived seeds and are merged in fixed order, so results are
reproducible bit-for-bit for a given backend.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import siso
from .trellis import Trellis, Labeling, build_trellis
from .waveform import CpmScheme, normalized_symbol_rate


@dataclass
class CapacityPoint:
    es_n0_db: float
    bits_per_symbol: float
    std_error: float
    num_symbols: int
    num_trials: int


@dataclass
class NormalizedPoint:
    eb_n0_db: float
    c_bits_per_s_per_hz: float
    rs: float

    @property
    def valid(self) -> bool:
        return np.isfinite(self.eb_n0_db)


def awgn(rng, n_samples: int, sigma2: float) -> np.ndarray:
    scale = np.sqrt(sigma2 / 2.0)
    return rng.normal(scale=scale, size=n_samples) + 1j * rng.normal(scale=scale, size=n_samples)


def _trial_rngs(seed, trials):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(trials)]


def _simulate_block(trellis: Trellis, rng, n0: float, block_symbols: int):
    cpm = trellis.scheme
    u = rng.integers(0, cpm.M, size=block_symbols)
    path = trellis.path_edges(u)
    tx = trellis.segments[path].ravel()
    y = tx + awgn(rng, tx.size, siso.awgn_sigma2(n0, trellis.ns, cpm.t))
    lam = siso.branch_metrics(trellis, y, n0)
    return u, path, lam


def cpm_capacity(cpm: CpmScheme, es_n0_db: float, block_symbols: int = 10000,
                 trials: int = 10, seed: int = 0, ns: int = 8, trim: int | None = None,
                 trellis: Trellis | None = None, backend=None) -> CapacityPoint:
    """Joint (waveform) capacity in bits/symbol at one symbol SNR.

    Per trial: uniform symbols -> modulate -> AWGN -> branch metrics ->
    pinned-start forward recursion.  The per-symbol information increment is
    m - (terminal increment - transmitted-path metric); `trim` sections are
    dropped at both ends (default L + P) to suppress boundary bias.
    """
    tr = trellis if trellis is not None else build_trellis(cpm, ns)
    n0 = cpm.es / 10.0 ** (es_n0_db / 10.0)
    t = trim if trim is not None else cpm.L + cpm.p
    if block_symbols <= 2 * t:
        raise ValueError("block too short for the boundary trim")
    per_trial = np.empty(trials)
    for k, rng in enumerate(_trial_rngs(seed, trials)):
        u, path, lam = _simulate_block(tr, rng, n0, block_symbols)
        fwd = siso.forward_recursion(tr, lam, backend=backend)
        inc = np.diff(fwd.terminals)
        lam_path = lam[np.arange(block_symbols), path]
        info = cpm.m - (inc - lam_path)
        sl = slice(t, block_symbols - t) if t else slice(None)
        per_trial[k] = info[sl].mean()
    est = float(per_trial.mean())
    se = float(per_trial.std(ddof=1) / np.sqrt(trials)) if trials > 1 else float("nan")
    return CapacityPoint(es_n0_db, est, se, block_symbols, trials)


def _bit_entropy_from_llr(llr_toward_true: np.ndarray) -> np.ndarray:
    """Binary entropy (bits) of a posterior given the base-2 LLR toward the
    transmitted bit value; stable for large magnitudes."""
    mag = np.abs(llr_toward_true)
    t = np.exp2(-mag)
    return np.log2(1.0 + t) + (t / (1.0 + t)) * mag


def pragmatic_capacity(cpm: CpmScheme, labeling: Labeling, es_n0_db: float,
                       block_symbols: int = 10000, trials: int = 10, seed: int = 0,
                       ns: int = 8, trim: int | None = None,
                       trellis: Trellis | None = None, backend=None) -> CapacityPoint:
    """Sum over bit positions of I(bit; channel output) for a given labeling.

    Uses posterior (not extrinsic) bit LLRs from a full BCJR pass with
    uniform priors; I_i = 1 - avg H(bit_i | Y).
    """
    tr = trellis if trellis is not None else build_trellis(cpm, ns)
    bits = labeling.bits()
    n0 = cpm.es / 10.0 ** (es_n0_db / 10.0)
    t = trim if trim is not None else cpm.L + cpm.p
    if block_symbols <= 2 * t:
        raise ValueError("block too short for the boundary trim")
    per_trial = np.empty(trials)
    for k, rng in enumerate(_trial_rngs(seed, trials)):
        u, path, lam = _simulate_block(tr, rng, n0, block_symbols)
        res = siso.bcjr_bit_llrs(tr, bits, lam, backend=backend)
        tx_bits = bits[path]                       # [N, m]
        toward_true = np.where(tx_bits == 1, res.llr, -res.llr)
        ent = _bit_entropy_from_llr(toward_true)
        sl = slice(t, block_symbols - t) if t else slice(None)
        per_trial[k] = (1.0 - ent[sl]).sum(axis=1).mean()
    est = float(per_trial.mean())
    se = float(per_trial.std(ddof=1) / np.sqrt(trials)) if trials > 1 else float("nan")
    return CapacityPoint(es_n0_db, est, se, block_symbols, trials)


def normalize_point(point: CapacityPoint, rs: float) -> NormalizedPoint:
    """Bits/s/Hz and bit-SNR views: C = Rs * C_sym, Eb/N0 = (Es/N0) / C_sym."""
    if rs <= 0:
        raise ValueError("rs must be positive")
    c_sym = point.bits_per_symbol
    c = rs * c_sym
    if c_sym <= 0:
        return NormalizedPoint(float("nan"), c, rs)
    eb_n0_db = point.es_n0_db - 10.0 * np.log10(c_sym)
    return NormalizedPoint(float(eb_n0_db), float(c), rs)


@dataclass
class CapacityCurve:
    scheme: CpmScheme
    labeling_provenance: str | None
    points: list
    rs: float
    seed: int
    normalized: list = field(default_factory=list)

    def __post_init__(self):
        self.points = sorted(self.points, key=lambda p: p.es_n0_db)
        if not self.normalized:
            self.normalized = [normalize_point(p, self.rs) for p in self.points]

    def es_n0_grid(self) -> np.ndarray:
        return np.array([p.es_n0_db for p in self.points])

    def bits_per_symbol(self) -> np.ndarray:
        return np.array([p.bits_per_symbol for p in self.points])

    def crossing_es_n0(self, target_bits_per_symbol: float) -> float:
        """Es/N0 (dB) where the curve crosses a bits/symbol level, by linear
        interpolation on the raw points; nan if never crossed."""
        x = self.es_n0_grid()
        y = self.bits_per_symbol()
        above = y >= target_bits_per_symbol
        if not above.any() or above.all():
            return float("nan")
        i = int(np.argmax(above))
        if i == 0:
            return float(x[0])
        x0, x1, y0, y1 = x[i - 1], x[i], y[i - 1], y[i]
        return float(x0 + (target_bits_per_symbol - y0) * (x1 - x0) / (y1 - y0))

    def to_rows(self) -> list:
        rows = []
        for p, n in zip(self.points, self.normalized):
            rows.append({"es_n0_db": p.es_n0_db, "eb_n0_db": n.eb_n0_db,
                         "c_bits_symbol": p.bits_per_symbol,
                         "c_bits_s_hz": n.c_bits_per_s_per_hz,
                         "std_err": p.std_error})
        return rows

    def to_csv(self, path):
        cols = ["es_n0_db", "eb_n0_db", "c_bits_symbol", "c_bits_s_hz", "std_err"]
        lines = [",".join(cols)]
        for r in self.to_rows():
            lines.append(",".join(f"{r[c]:.10g}" for c in cols))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    def to_json_dict(self) -> dict:
        s = self.scheme
        return {
            "scheme": {"m": s.m, "q": s.q, "p": s.p, "pulse": s.pulse.kind, "L": s.L},
            "labeling": self.labeling_provenance,
            "rs": self.rs,
            "seed": self.seed,
            "points": self.to_rows(),
        }


def capacity_curve(cpm: CpmScheme, es_n0_grid, labeling: Labeling | None = None,
                   block_symbols: int = 10000, trials: int = 10, seed: int = 0,
                   ns: int = 8, rs: float | None = None, trellis: Trellis | None = None,
                   backend=None) -> CapacityCurve:
    """Batch wrapper: raw estimates on a grid, no smoothing applied.

    With a labeling the pragmatic estimator runs, otherwise the joint one.
    """
    tr = trellis if trellis is not None else build_trellis(cpm, ns)
    if rs is None:
        rs = normalized_symbol_rate(cpm)
    pts = []
    for i, snr in enumerate(np.atleast_1d(np.asarray(es_n0_grid, dtype=float))):
        point_seed = (seed, i)
        if labeling is None:
            pts.append(cpm_capacity(cpm, float(snr), block_symbols, trials,
                                     seed=point_seed, ns=ns, trellis=tr, backend=backend))
        else:
            pts.append(pragmatic_capacity(cpm, labeling, float(snr), block_symbols,
                                          trials, seed=point_seed, ns=ns, trellis=tr,
                                          backend=backend))
    prov = labeling.provenance if labeling is not None else None
    return CapacityCurve(cpm, prov, pts, rs, seed)


def export_curve(curve: CapacityCurve, csv_path=None, json_path=None):
    if csv_path is not None:
        curve.to_csv(csv_path)
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump(curve.to_json_dict(), fh)
