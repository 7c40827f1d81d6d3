#!/usr/bin/env python3
"""Measure MAC2 period and readout stalls on the cycle-level block model."""

import random

from m4bram.block import CimInstruction, M4Bram, readout, run_mac2
from m4bram.precision import Kind, Pumping, Variant


def period(variant: Variant, act_bits: int) -> int:
    b = M4Bram(variant, 8)
    b.clock(CimInstruction.config(act_bits, False))
    first = CimInstruction.operand(0, 0, 0, (1, 2, 3, 1), first=True, last=True)
    second = CimInstruction.operand(1, 0, 0, (3, 2, 1, 0), first=False, last=True)
    return run_mac2(b, first, second)


def stalls(variant: Variant, pairs: int = 200, seed: int = 1) -> tuple[int, int]:
    """(stalled port-B cycles, readouts) over random MAC2s with DSP reads every cycle."""
    rng = random.Random(seed)
    b = M4Bram(variant, 8)
    b.clock(CimInstruction.config(8, False))
    stalled = 0
    for _ in range(pairs):
        acts = tuple(rng.randrange(256) for _ in range(4))
        f = CimInstruction.operand(rng.randrange(38), 0, 0, acts, first=True, last=True)
        s = CimInstruction.operand(rng.randrange(38), 1, 0, acts, first=False, last=True)
        run_mac2(b, f, s, port_b=lambda c: rng.randrange(512))
        before = b.cycle
        readout(b)
        stalled += b.cycle - before
    return stalled, pairs


if __name__ == "__main__":
    for kind in Kind:
        for pump in Pumping:
            v = Variant(kind, pump)
            periods = [period(v, n) for n in range(2, 9)]
            s, n = stalls(v)
            print(f"{v.label:7s} MAC2 cycles for a=2..8: {periods}  readout stall per result: {s / n:g}")
