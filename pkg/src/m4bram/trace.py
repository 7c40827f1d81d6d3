"""Cycle traces for the block model: CSV replay, golden diffs and random traces."""

from __future__ import annotations

import csv
import io
import random

from .block import (
    BlockStateError,
    EncodingError,
    ProtocolError,
    DEPTH,
    READOUT_BASE,
    WORDS_PER_ROW,
    CimInstruction,
    M4Bram,
    Mode,
    Write,
    decode_instruction,
    encode_instruction,
)
from .precision import Kind, Variant

TRACE_COLUMNS = ("cycle", "portA_op", "portA_addr", "portA_data", "be", "inClr", "wenB", "portB_addr")
RESULT_COLUMNS = ("cycle", "accepted", "portB_data", "dsp_stalled", "result_ready", "phase")


class TraceError(ValueError):
    pass


def _int(v: str, line: int, col: str) -> int:
    v = v.strip()
    if v == "":
        return 0
    try:
        return int(v, 0)
    except ValueError:
        raise TraceError(f"line {line}: column {col!r} is not an integer: {v!r}") from None


def parse_trace(text: str) -> list[dict]:
    reader = csv.DictReader(io.StringIO(text))
    missing = set(TRACE_COLUMNS) - set(reader.fieldnames or ())
    if missing:
        raise TraceError(f"trace header lacks {sorted(missing)}")
    rows = []
    prev = -1
    for n, raw in enumerate(reader, start=2):
        op = raw["portA_op"].strip().lower() or "nop"
        if op not in ("nop", "write"):
            raise TraceError(f"line {n}: portA_op must be nop or write")
        row = {"op": op, **{c: _int(raw[c], n, c) for c in TRACE_COLUMNS if c != "portA_op"}}
        if raw["portB_addr"].strip() == "":
            row["portB_addr"] = None
        if row["cycle"] <= prev:
            raise TraceError(f"line {n}: cycles must increase")
        if row["wenB"] and op != "write":
            raise TraceError(f"line {n}: wenB needs a port-A write to carry the instruction")
        prev = row["cycle"]
        rows.append(row)
    return rows


def _port_a(row: dict, block: M4Bram):
    if row["op"] == "nop":
        return None
    if row["wenB"] and block.mode is Mode.COMPUTE:
        return decode_instruction(row["portA_addr"], row["portA_data"], row["be"], row["inClr"])
    return Write(row["portA_addr"], row["portA_data"])


def replay(rows, block: M4Bram) -> str:
    """Clock the block through the trace, idling across cycle gaps; returns result CSV.

    A port-A write with wenB high is a CIM instruction in compute mode.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for row in rows:
        while block.cycle < row["cycle"]:
            block.clock()
        try:
            res = block.clock(_port_a(row, block), row["portB_addr"])
        except (ProtocolError, BlockStateError, EncodingError, IndexError) as exc:
            raise TraceError(f"cycle {row['cycle']}: {exc}") from exc
        w.writerow([
            row["cycle"],
            "" if res.accepted is None else int(res.accepted),
            "" if res.port_b_data is None else f"0x{res.port_b_data:08x}",
            int(res.dsp_stalled),
            int(res.result_ready),
            block.phase.value,
        ])
    return buf.getvalue()


def diff_golden(actual: str, golden: str) -> str | None:
    """First differing line as a message, or None when identical."""
    a, g = actual.splitlines(), golden.splitlines()
    for i, (x, y) in enumerate(zip(a, g), start=1):
        if x != y:
            return f"line {i}: expected {y!r}, got {x!r}"
    if len(a) != len(g):
        return f"length differs: expected {len(g)} lines, got {len(a)}"
    return None


def random_trace(variant: Variant, act_bits: int, pairs: int, seed: int = 0,
                 dp: int = 1) -> str:
    """A legal trace: fill weights, configure, then MAC2 pairs with DSP reads and readouts."""
    rng = random.Random(seed)
    rows = []
    cycle = 0

    def emit(op="nop", addr=0, data=0, be=0, in_clr=0, wen_b=0, port_b=None):
        nonlocal cycle
        rows.append([cycle, op, addr, data, be, in_clr, wen_b, "" if port_b is None else port_b])
        cycle += 1

    def issue(instr, port_b=None):
        addr, data, be, in_clr = encode_instruction(instr)
        emit("write", addr, data, be, in_clr, 1, port_b)

    for addr in range(DEPTH):
        emit("write", addr, rng.getrandbits(32))
    issue(CimInstruction.config(act_bits, False))
    # L fetches pair row r with r + 64, so keep both inside the writable depth
    n_rows = (DEPTH // WORDS_PER_ROW) - (64 if variant.kind is Kind.L else 0)
    period = (act_bits + 1) // 2 if variant.double_pumped else act_bits
    words = 4 if variant.kind is Kind.S else 8
    fresh = True
    for k in range(pairs):
        last = k == pairs - 1 or rng.random() < 0.25
        addr_dp = rng.randrange(4) if dp > 1 else 0
        operands = []
        for first in (True, False):
            acts = tuple(rng.randrange(1 << act_bits) for _ in range(4))
            operands.append(CimInstruction.operand(
                rng.randrange(n_rows), rng.randrange(WORDS_PER_ROW), addr_dp, acts,
                first=first, accumulate=first and not fresh, last=last))
        fresh = last
        for instr in operands:
            issue(instr, port_b=rng.randrange(DEPTH))
        for _ in range(period):
            emit(port_b=rng.randrange(DEPTH) if rng.random() < 0.8 else None)
        if last:
            for j in range(words):
                emit(port_b=READOUT_BASE | j)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    w.writerows(rows)
    return buf.getvalue()
