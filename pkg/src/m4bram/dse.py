"""Area model, resource accounting and exhaustive tiling search."""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .engine_perf import Arch, ArchitectureProfile
from .hetero_dla import (
    AccelConfig,
    ConfigError,
    LayerShape,
    PerfReport,
    TilingConfig,
    layer_compute_cycles,
    simulate_network,
)
from .precision import PrecisionConfig


class InfeasibleError(RuntimeError):
    pass


@dataclass(frozen=True)
class FpgaTarget:
    name: str
    logic_blocks: int
    dsp_blocks: int
    m20k_blocks: int
    area_fraction_logic: float
    area_fraction_dsp: float
    area_fraction_m20k: float

    def __post_init__(self):
        for f in ("logic_blocks", "dsp_blocks", "m20k_blocks"):
            if getattr(self, f) < 0:
                raise ConfigError(f"{self.name}: {f} must be non-negative")

    @classmethod
    def from_json(cls, path) -> "FpgaTarget":
        data = json.loads(Path(path).read_text())
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"{path}: {exc}") from None


GX400 = FpgaTarget("GX400", 12816, 648, 1537, 55.6, 15.7, 28.7)
GX650 = FpgaTarget("GX650", 20736, 1152, 2489, 54.7, 17.0, 28.3)
# Equal-area pair built around GX650: all M20Ks upgraded versus plain M20Ks plus extra DSPs.
GX_M4 = replace(GX650, name="GX-M4", dsp_blocks=0)
GX_DSP = replace(GX650, name="GX-DSP", dsp_blocks=640)
TARGETS = {t.name.lower(): t for t in (GX400, GX650, GX_M4, GX_DSP)}


def target(name) -> FpgaTarget:
    if isinstance(name, FpgaTarget):
        return name
    key = str(name).lower()
    if key in TARGETS:
        return TARGETS[key]
    if Path(name).is_file():
        return FpgaTarget.from_json(name)
    raise ConfigError(f"unknown FPGA target {name!r}")


@dataclass(frozen=True)
class AreaModel:
    """Per-block areas in units of one plain M20K."""

    unit_area_logic: float
    unit_area_dsp: float
    unit_area_m20k: float = 1.0
    source: str = ""

    def bram_area(self, arch: ArchitectureProfile) -> float:
        return self.unit_area_m20k * (1.0 + arch.m20k_area_overhead)

    def extra_area_in_dsps(self, arch: ArchitectureProfile, blocks: int) -> float:
        """CIM overhead of `blocks` upgraded M20Ks, expressed as DSP blocks."""
        return arch.m20k_area_overhead * blocks * self.unit_area_m20k / self.unit_area_dsp


def unit_areas(t: FpgaTarget) -> AreaModel:
    if min(t.logic_blocks, t.dsp_blocks, t.m20k_blocks) <= 0:
        raise ConfigError(f"{t.name}: unit areas need non-zero block counts")
    m20k = t.area_fraction_m20k / t.m20k_blocks
    return AreaModel(
        unit_area_logic=t.area_fraction_logic / t.logic_blocks / m20k,
        unit_area_dsp=t.area_fraction_dsp / t.dsp_blocks / m20k,
        source=t.name,
    )


DEFAULT_AREA = unit_areas(GX650)


def core_area_increase(arch: ArchitectureProfile, t: FpgaTarget = GX650) -> float:
    """Fractional growth of the FPGA core when every M20K carries the CIM overhead."""
    return arch.m20k_area_overhead * t.area_fraction_m20k / 100.0


def objective(perf: float, area: float) -> float:
    if perf <= 0 or area <= 0:
        raise ValueError("perf and area must be positive")
    return perf * perf / area


@dataclass(frozen=True)
class ResourceUsage:
    dsp_blocks: int
    bram_blocks: int
    cim_blocks: int
    area: float

    def fits(self, t: FpgaTarget) -> bool:
        return self.dsp_blocks <= t.dsp_blocks and self.bram_blocks <= t.m20k_blocks


def buffer_blocks(c_vec, k_vec, p_vec, p: PrecisionConfig, out_bits: int = 8):
    """Double-buffered input and output feature buffers, sized by port width.

    The DSP array consumes C_VEC x P_VEC activations per cycle and emits
    K_VEC x P_VEC outputs per tile row; each M20K supplies one 32-bit word.
    """
    inp = 2 * -(-(c_vec * p_vec * p.act_bits) // 32)
    out = 2 * -(-(k_vec * p_vec * out_bits) // 32)
    return inp, out


def _usage_arrays(k, c, p, q, qb, n_i, cfg: AccelConfig, area: AreaModel):
    k, c, p, q, qb, n_i = (np.asarray(a, dtype=np.int64) for a in (k, c, p, q, qb, n_i))
    use_dsp = qb < q
    use_bpe = qb > 0
    if np.any(use_bpe) and not cfg.arch.has_cim:
        raise ConfigError("plain BRAM has no BPE engine")
    per_dsp = cfg.dsp.multipliers_per_block * cfg.packing
    dsp = np.where(use_dsp, -(-(k * c * p) // per_dsp), 0)
    filt = -(-(k * cfg.precision.weight_bits) // 32) * c
    if cfg.arch.has_cim:
        rate = cfg.bpe_rate
        n_w = rate.n_w // n_i if cfg.arch.is_m4bram else np.full_like(k, rate.n_w)
        cim = np.where(use_bpe, -(-k // n_w) * c, 0)
    else:
        cim = np.zeros_like(k)
    if cfg.arch.allows_dsp_access_during_cim:
        weights = np.maximum(cim, filt)
    else:
        # CIM blocks are locked during compute, so the DSP side keeps its own copies.
        weights = cim + np.where(use_dsp, filt, 0)
    inp, out = buffer_blocks(c, k, p, cfg.precision, 8 * cfg.out_bytes)
    bram = weights + inp + out
    a = dsp * area.unit_area_dsp + bram * area.bram_area(cfg.arch)
    return dsp, bram, cim, a


def resource_usage(t: TilingConfig | None, cfg: AccelConfig, area: AreaModel = DEFAULT_AREA) -> ResourceUsage:
    if t is None:
        return ResourceUsage(0, 0, 0, 0.0)
    n_i = cfg.n_i if cfg.arch.is_m4bram else 1
    dsp, bram, cim, a = _usage_arrays(t.k_vec, t.c_vec, t.p_vec, t.q_vec, t.q_bpe, n_i, cfg, area)
    return ResourceUsage(int(dsp), int(bram), int(cim), float(a))


def check_feasible(t: FpgaTarget, dsp_blocks: int, bram_blocks: int) -> bool:
    return dsp_blocks <= t.dsp_blocks and bram_blocks <= t.m20k_blocks


def grid(bound: int) -> list[int]:
    """Powers of two below `bound`, plus `bound` itself."""
    out, v = [], 1
    while v < bound:
        out.append(v)
        v *= 2
    out.append(bound)
    return out


def balanced_q_bpe(q_vec: int, p_vec: int, n_i: int, period: int) -> int:
    """Columns for the BPE side that best equalize a full tile's engine times."""
    best, best_key = 0, None
    for qb in range(q_vec + 1):
        bpe = -(-(p_vec * qb) // n_i) * period / 2
        key = (max(bpe, q_vec - qb), abs(bpe - (q_vec - qb)), -qb)
        if best_key is None or key < best_key:
            best, best_key = qb, key
    return best


CANDIDATE_COLUMNS = ("k_vec", "c_vec", "q_vec", "p_vec", "r_vec", "n_i", "q_bpe", "dsp_blocks",
                     "bram_blocks", "area", "feasible", "perf_bound", "perf", "score_bound", "score")


@dataclass
class SearchResult:
    tiling: TilingConfig
    config: AccelConfig
    report: PerfReport
    score: float
    usage: ResourceUsage
    evaluated: int
    candidates: dict | None = None

    def candidates_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CANDIDATE_COLUMNS)
        cand = self.candidates or {}
        for i in range(len(cand.get("k_vec", []))):
            row = []
            for col in CANDIDATE_COLUMNS:
                v = cand[col][i]
                if isinstance(v, (float, np.floating)):
                    row.append("" if np.isnan(v) else f"{v:.6g}")
                elif isinstance(v, (bool, np.bool_)):
                    row.append(int(v))
                else:
                    row.append(int(v))
            w.writerow(row)
        return buf.getvalue()


def _unique_layers(layers):
    counts = Counter(layers)
    return list(counts.keys()), np.array(list(counts.values()), dtype=np.int64)


def enumerate_candidates(layers, tgt: FpgaTarget, cfg: AccelConfig, n_i_allowed) -> dict:
    kmax = max(l.k for l in layers)
    cmax = max(l.c for l in layers)
    pmax = max(l.p for l in layers)
    qmax = max(l.q for l in layers)
    rmax = max(max(l.r, l.s) for l in layers)
    if cfg.arch.is_m4bram:
        nis = sorted(set(n_i_allowed) & set(cfg.arch.n_i_options))
        if not nis:
            raise InfeasibleError(f"n_i set {sorted(n_i_allowed)} not supported by {cfg.arch.name.value}")
    else:
        nis = [1]
    ni_eff = {n: (n if cfg.arch.is_m4bram else (cfg.bpe_rate.n_i if cfg.arch.has_cim else 1)) for n in nis}
    period = cfg.period if cfg.arch.has_cim else 1
    rows = []
    for q in grid(qmax):
        for p in grid(pmax):
            for n in nis:
                if not cfg.arch.has_cim:
                    splits = {0}
                elif tgt.dsp_blocks == 0:
                    splits = {q}
                else:
                    # both engines get columns when they can; q_vec = 1 goes whole to one side
                    b = balanced_q_bpe(q, p, ni_eff[n], period)
                    splits = {s for s in (b - 1, b, b + 1) if 0 < s < q} or {b}
                for qb in sorted(splits):
                    rows.append((q, p, n, qb))
    if not rows:
        raise InfeasibleError("no candidate tilings")
    qpn = np.array(rows, dtype=np.int64).reshape(-1, 4)
    ks, cs, rs = np.array(grid(kmax)), np.array(grid(cmax)), np.array(grid(rmax))
    K, C, R, I = np.meshgrid(ks, cs, rs, np.arange(len(qpn)), indexing="ij")
    K, C, R, I = K.ravel(), C.ravel(), R.ravel(), I.ravel()
    Q, P, N, QB = qpn[I, 0], qpn[I, 1], qpn[I, 2], qpn[I, 3]
    return dict(k_vec=K, c_vec=C, q_vec=Q, p_vec=P, r_vec=R, n_i=N, q_bpe=QB)


def _peak_rates(K, C, P, Q, QB, N, cfg: AccelConfig):
    """Per-candidate DSP and BPE peak MACs/cycle, ignoring every utilization loss."""
    dsp = np.where(QB < Q, K * C * P, 0).astype(float)
    if not cfg.arch.has_cim:
        return dsp, np.zeros_like(dsp)
    rate = cfg.bpe_rate
    if cfg.arch.is_m4bram:
        n_w, pix = rate.n_w // N, N
    else:
        n_w, pix = rate.n_w, cfg.pixels_per_mac2
    blocks = -(-K // n_w) * C
    bpe = np.where(QB > 0, blocks * 2 * n_w * pix / cfg.period, 0.0)
    return dsp, bpe


CHUNK = 4096


def search(layers, tgt: FpgaTarget, cfg: AccelConfig, n_i_allowed=(1, 2, 4),
           area: AreaModel = DEFAULT_AREA, name: str = "net", keep_table: bool = False) -> SearchResult:
    """Maximize perf^2/area over one tiling for the whole network.

    Two upper bounds on each candidate's score prune the space.  The cheap
    one uses peak engine rates with K padding; the tight one uses the exact
    compute-cycle total, which is a lower bound on pipelined latency.  Exact
    simulation runs best-bound-first until no remaining candidate can win.
    Ties go to the lexicographically smallest (k, c, q, p, r, n_i, q_bpe).
    """
    layers = list(layers)
    if not layers:
        raise ConfigError("empty network")
    tgt = target(tgt)
    cand = enumerate_candidates(layers, tgt, cfg, n_i_allowed)
    K, C, Q, P, R, N, QB = (cand[c] for c in ("k_vec", "c_vec", "q_vec", "p_vec", "r_vec", "n_i", "q_bpe"))
    ni_eff = N if cfg.arch.is_m4bram else np.full_like(N, cfg.pixels_per_mac2)
    dsp, bram, _, a = _usage_arrays(K, C, P, Q, QB, N, cfg, area)
    feasible = (dsp <= tgt.dsp_blocks) & (bram <= tgt.m20k_blocks)
    if not feasible.any():
        raise InfeasibleError(f"no feasible tiling for {cfg.label} on {tgt.name}")

    uniq, mult = _unique_layers(layers)
    macs = sum(l.macs for l in layers)
    a_safe = np.maximum(a, 1e-12)

    dsp_peak, bpe_peak = _peak_rates(K, C, P, Q, QB, N, cfg)
    t_min = np.zeros(K.size)
    for layer, m in zip(uniq, mult):
        t_min += m * layer.macs * (-(-layer.k // K) * K / layer.k)
    peak = np.maximum(dsp_peak + bpe_peak, 1e-12)
    score_cheap = np.where(feasible, (macs * peak / t_min) ** 2 / a_safe, -np.inf)

    score_ub = np.full(K.size, np.nan)
    perf_ub = np.full(K.size, np.nan)

    def tight(ids):
        compute = np.zeros(ids.size, dtype=np.int64)
        for layer, m in zip(uniq, mult):
            cyc, _s = layer_compute_cycles(layer, K[ids], C[ids], P[ids], Q[ids], R[ids], QB[ids],
                                           np.where(QB[ids] > 0, ni_eff[ids], 1), cfg)
            compute += m * cyc
        perf_ub[ids] = macs / np.maximum(compute, 1)
        score_ub[ids] = perf_ub[ids] ** 2 / a_safe[ids]

    perf_exact = np.full(K.size, np.nan)
    score_exact = np.full(K.size, np.nan)
    best = None
    best_key = None
    evaluated = 0
    order = np.lexsort((QB, N, R, P, Q, C, K, -score_cheap))
    order = order[feasible[order]]
    for start in range(0, order.size, CHUNK):
        ids = order[start:start + CHUNK]
        if best is not None and score_cheap[ids[0]] < best[1]:
            break
        tight(ids)
        sub = ids[np.lexsort((QB[ids], N[ids], R[ids], P[ids], Q[ids], C[ids], K[ids], -score_ub[ids]))]
        for i in sub:
            if best is not None and score_ub[i] < best[1]:
                break
            t = TilingConfig(c_vec=int(C[i]), k_vec=int(K[i]), r_vec=int(R[i]), p_vec=int(P[i]),
                             q_vec=int(Q[i]), q_bpe=int(QB[i]))
            c_i = replace(cfg, n_i=int(N[i])) if cfg.arch.is_m4bram else cfg
            rep = simulate_network(layers, t, c_i, name)
            evaluated += 1
            s = objective(rep.perf, float(a[i]))
            perf_exact[i], score_exact[i] = rep.perf, s
            key = (-s, int(K[i]), int(C[i]), int(Q[i]), int(P[i]), int(R[i]), int(N[i]), int(QB[i]))
            if best_key is None or key < best_key:
                best_key = key
                best = (i, s, t, c_i, rep)
    i, s, t, c_i, rep = best
    rep.area = float(a[i])
    table = None
    if keep_table:
        missing = np.flatnonzero(feasible & np.isnan(score_ub))
        if missing.size:
            tight(missing)
        table = dict(cand, dsp_blocks=dsp, bram_blocks=bram, area=a, feasible=feasible,
                     perf_bound=perf_ub, perf=perf_exact, score_bound=score_ub, score=score_exact)
    return SearchResult(t, c_i, rep, s, resource_usage(t, c_i, area), evaluated, table)
