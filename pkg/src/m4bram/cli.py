"""Command-line entry point: ``m4bram <subcommand> ...``.

Every subcommand writes CSV files under ``--out-dir`` and prints their paths.
Outputs depend only on the arguments, so repeated runs are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import replace
from pathlib import Path

from .block import M4Bram, Mode
from .dse import InfeasibleError, resource_usage, search, target
from .dsp_packing import PRESETS, Operands, dsp_utilization, packing_factor, sweep_rows
from .engine_perf import Arch, profile
from .hetero_dla import AccelConfig, ConfigError, TilingConfig, simulate_network
from .io_utils import atomic_write
from .networks import NetworkError, resolve_network
from .precision import Kind, PrecisionConfig, PrecisionError, Pumping, Variant
from .scenarios import NOTES, SCENARIOS, run_scenario
from .trace import TraceError, diff_golden, parse_trace, random_trace, replay

ARCHS = {
    "m4s": Arch.M4BRAM_S,
    "m4l": Arch.M4BRAM_L,
    "bramac1da": Arch.BRAMAC_1DA,
    "bramac2sa": Arch.BRAMAC_2SA,
    "plain": Arch.PLAIN,
}
PUMPS = {"sy": Pumping.SY, "dp": Pumping.DP}


def int_list(text: str) -> tuple[int, ...]:
    """Comma-separated integers; an empty string is an empty list."""
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--fpga", default=None, help="gx400, gx650 (default), gx-m4, gx-dsp or a JSON target file")
    p.add_argument("--arch", choices=sorted(ARCHS), default="m4l")
    p.add_argument("--pump", choices=sorted(PUMPS), default="sy")
    p.add_argument("--wbits", type=int_list, default=None, help="weight precision(s), comma-separated")
    p.add_argument("--abits", type=int_list, default=None, help="activation precision(s), comma-separated")
    p.add_argument("--ni-set", type=int_list, default=None, help="allowed N_I values, e.g. 1,2,4")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", type=Path, default=Path("out"))


def _one(values, default: int, flag: str) -> int:
    if values is None:
        return default
    if len(values) != 1:
        raise ConfigError(f"{flag} takes a single value for this subcommand")
    return values[0]


def _accel(args) -> tuple[AccelConfig, tuple[int, ...]]:
    arch = ARCHS[args.arch]
    p = PrecisionConfig(_one(args.wbits, 8, "--wbits"), _one(args.abits, 8, "--abits"))
    prof = profile(arch)
    if args.ni_set is not None:
        ni = args.ni_set
    elif prof.is_m4bram:
        ni = (1, 2, 4)
    else:
        ni = (1,)
    return AccelConfig(arch=prof, precision=p, pumping=PUMPS[args.pump]), ni


def _emit(path: Path, text: str) -> None:
    atomic_write(path, text)
    print(path)


# ---------------------------------------------------------------- subcommands


def cmd_pack(args) -> int:
    if args.dsp == "all":
        vendors = tuple(PRESETS)
    else:
        vendors = (args.dsp,)
    wbits = args.wbits if args.wbits is not None else (2, 4, 8)
    abits = args.abits if args.abits is not None else tuple(range(2, 9))
    if args.guard:
        rows = []
        for v in vendors:
            dsp = replace(PRESETS[v], guard_bits=args.guard)
            for wb in wbits:
                for ab in abits:
                    ops = Operands(wb, ab)
                    rows.append((v, wb, ab, packing_factor(ops, dsp), round(dsp_utilization(ops, dsp), 6)))
    else:
        rows = sweep_rows(vendors, wbits, abits)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("vendor", "P_W", "P_I", "packing_factor", "utilization"))
    w.writerows(rows)
    _emit(args.out_dir / "pack.csv", buf.getvalue())
    return 0


def cmd_simulate_block(args) -> int:
    arch = ARCHS[args.arch]
    if arch not in (Arch.M4BRAM_S, Arch.M4BRAM_L):
        raise ConfigError("simulate-block models M4BRAM blocks only (--arch m4s or m4l)")
    variant = Variant(Kind.S if arch is Arch.M4BRAM_S else Kind.L, PUMPS[args.pump])
    wbits = _one(args.wbits, 8, "--wbits")
    if args.trace is None:
        if args.pairs is None:
            raise ConfigError("give a --trace file or --pairs to generate one")
        text = random_trace(variant, _one(args.abits, 8, "--abits"), args.pairs, args.seed, args.dp)
        _emit(args.out_dir / "trace.csv", text)
    else:
        text = Path(args.trace).read_text()
    block = M4Bram(variant, wbits, args.dp, Mode.MEMORY if args.memory_mode else Mode.COMPUTE)
    result = replay(parse_trace(text), block)
    _emit(args.out_dir / "block_trace.csv", result)
    if args.golden is not None:
        problem = diff_golden(result, Path(args.golden).read_text())
        if problem:
            print(f"golden mismatch: {problem}", file=sys.stderr)
            return 1
        print("golden trace matches")
    return 0


def _tiling(text: str) -> TilingConfig:
    keys = ("k_vec", "c_vec", "q_vec", "p_vec", "r_vec", "q_bpe")
    vals = {}
    for part in text.split(","):
        k, _, v = part.partition("=")
        k = k.strip()
        if k not in keys:
            raise ConfigError(f"unknown tiling field {k!r}; use {', '.join(keys)}")
        vals[k] = int(v)
    return TilingConfig(**vals)


def cmd_perf(args) -> int:
    net = resolve_network(args.net)
    tgt = target(args.fpga or "gx650")
    cfg, ni = _accel(args)
    if args.tiling:
        if len(ni) != 1 and cfg.arch.is_m4bram:
            raise ConfigError("an explicit --tiling needs a single --ni-set value")
        cfg = AccelConfig(cfg.arch, cfg.precision, cfg.pumping, n_i=ni[0] if cfg.arch.is_m4bram else 1)
        t = _tiling(args.tiling)
        report = simulate_network(net.layers, t, cfg, net.name)
        usage = resource_usage(t, cfg)
        if not usage.fits(tgt):
            print(f"warning: tiling needs {usage.dsp_blocks} DSP / {usage.bram_blocks} M20K, "
                  f"more than {tgt.name} has", file=sys.stderr)
    else:
        res = search(net.layers, tgt, cfg, ni, name=net.name)
        report, cfg, t = res.report, res.config, res.tiling
    stem = f"perf_{net.name}_{cfg.label}_w{cfg.precision.weight_bits}a{cfg.precision.act_bits}"
    _emit(args.out_dir / f"{stem}.csv", report.to_csv())
    print(f"{net.name} {cfg.label} n_i={cfg.n_i} {t.key()} latency={report.latency} "
          f"perf={report.perf:.4f} MAC/cycle stall={report.stall_fraction:.4f}")
    return 0


def cmd_dse(args) -> int:
    net = resolve_network(args.net)
    tgt = target(args.fpga or "gx650")
    cfg, ni = _accel(args)
    res = search(net.layers, tgt, cfg, ni, name=net.name, keep_table=True)
    stem = f"dse_{net.name}_{res.config.label}_w{cfg.precision.weight_bits}a{cfg.precision.act_bits}"
    _emit(args.out_dir / f"{stem}_candidates.csv", res.candidates_csv())
    _emit(args.out_dir / f"{stem}_best.csv", res.report.to_csv())
    t = res.tiling
    print(f"best n_i={res.config.n_i} k={t.k_vec} c={t.c_vec} q={t.q_vec} p={t.p_vec} r={t.r_vec} "
          f"q_bpe={t.q_bpe} score={res.score:.6g} evaluated={res.evaluated}")
    return 0


def cmd_scenario(args) -> int:
    sid = args.id
    kw = {}
    if args.nets is not None:
        nets = tuple(n for n in args.nets.split(",") if n)
        if sid == "mixed-weights":
            if len(nets) != 1:
                raise ConfigError("mixed-weights runs one network")
            kw["network"] = nets[0]
        else:
            kw["networks"] = nets
    if sid in ("activation-sweep", "iso-area"):
        if args.abits is not None:
            kw["acts"] = args.abits
        if args.wbits is not None:
            kw["weight_bits"] = _one(args.wbits, 8, "--wbits")
    elif sid in ("bramac-compare", "ablation"):
        if args.wbits is not None:
            kw["bits"] = args.wbits
    elif sid == "mixed-weights" and args.abits is not None:
        kw["act_bits"] = _one(args.abits, 6, "--abits")
    if args.fpga is not None and sid in ("activation-sweep", "mixed-weights"):
        kw["tgt"] = target(args.fpga)
    path, rows = run_scenario(sid, args.out_dir, **kw)
    print(path)
    print(f"{sid}: {len(rows)} rows. {NOTES[sid]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="m4bram", description="M4BRAM block and accelerator workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pack", help="DSP packing sweep")
    _common(p)
    p.add_argument("--dsp", choices=("intel", "xilinx", "all"), default="all")
    p.add_argument("--guard", type=int, default=0, help="guard bits between packed fields")
    p.set_defaults(fn=cmd_pack)

    p = sub.add_parser("simulate-block", help="replay a port trace through one block")
    _common(p)
    p.add_argument("--trace", help="input trace CSV; omit to generate one with --pairs")
    p.add_argument("--pairs", type=int, help="MAC2 pairs in a generated trace")
    p.add_argument("--golden", help="expected output CSV; exit status 1 on mismatch")
    p.add_argument("--dp", type=int, choices=(1, 2, 4), default=1, help="weight duplication factor")
    p.add_argument("--memory-mode", action="store_true")
    p.set_defaults(fn=cmd_simulate_block)

    for name, fn, help_ in (("perf", cmd_perf, "one network on one configuration"),
                            ("dse", cmd_dse, "tiling search with the full candidate table")):
        p = sub.add_parser(name, help=help_)
        _common(p)
        p.add_argument("--net", required=True, help="built-in name or JSON network file")
        if name == "perf":
            p.add_argument("--tiling", help="explicit tiling, e.g. k_vec=32,c_vec=16,q_vec=4,q_bpe=2")
        p.set_defaults(fn=fn)

    p = sub.add_parser("scenario", help="experiment suites")
    _common(p)
    p.add_argument("id", choices=sorted(SCENARIOS))
    p.add_argument("--nets", help="comma-separated network subset")
    p.set_defaults(fn=cmd_scenario)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, InfeasibleError, NetworkError, PrecisionError, TraceError, OSError, ValueError) as exc:
        print(f"m4bram {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
