"""Cycle-level model of one M4BRAM block.

In compute mode the main array is a simple dual-port 512x32 RAM: port A
writes, port B reads.  Asserting wenB turns the port-A request into a CIM
instruction for the eFSM, which drives 4 BPEs.  Port B stays free for other
readers except while BPE results are read out through mux MO.

Port-B addresses are 10 bits: the MSB selects BPE output words (DOUT), the
low 9 bits address the main array.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from math import ceil

from .bpe import BpeState, act_range, load_weights, mac2_rowwise
from .precision import NUM_BPES, Kind, Variant, check_act_bits, lanes_per_bpe

DEPTH = 512
WORD_BITS = 32
WORD_MASK = (1 << WORD_BITS) - 1
PHYS_ROWS = 128
WORDS_PER_ROW = 5  # 160 columns / 32
BANK_ROWS = 64
READOUT_BASE = 1 << 9


class EncodingError(ValueError):
    pass


class ProtocolError(RuntimeError):
    pass


class BlockStateError(RuntimeError):
    pass


class Mode(str, Enum):
    MEMORY = "memory"
    COMPUTE = "compute"


class Phase(str, Enum):
    IDLE = "Idle"
    RECV1 = "Recv1"
    COMPUTE = "Compute"
    READOUT_READY = "ReadoutReady"


# byte-enable flag bits when inClr is low
FLAG_FIRST = 0x1
FLAG_ACCUMULATE = 0x2
FLAG_LAST = 0x4
FLAG_RESERVED = 0x8


@dataclass(frozen=True)
class CimInstruction:
    addr_row: int = 0
    addr_col: int = 0
    addr_dp: int = 0
    activations: tuple[int, int, int, int] = (0, 0, 0, 0)  # raw 8-bit fields
    be_payload: int = 0
    in_clr: bool = False

    @classmethod
    def config(cls, act_bits: int, act_signed: bool) -> "CimInstruction":
        check_act_bits(act_bits)
        return cls(be_payload=(int(act_signed) << 3) | (act_bits - 1), in_clr=True)

    @classmethod
    def operand(cls, addr_row, addr_col, addr_dp, activations, *, first, accumulate=False, last=False):
        be = (FLAG_FIRST if first else 0) | (FLAG_ACCUMULATE if accumulate else 0) | (FLAG_LAST if last else 0)
        raw = tuple(a & 0xFF for a in activations)
        return cls(addr_row, addr_col, addr_dp, raw, be, False)

    @property
    def act_bits(self) -> int:
        return (self.be_payload & 0x7) + 1

    @property
    def act_signed(self) -> bool:
        return bool(self.be_payload & 0x8)


def _validate(i: CimInstruction) -> None:
    if not 0 <= i.addr_row < PHYS_ROWS:
        raise EncodingError(f"addr_row {i.addr_row} out of range")
    if not 0 <= i.addr_col < WORDS_PER_ROW:
        raise EncodingError(f"addr_col {i.addr_col} out of range")
    if not 0 <= i.addr_dp < 4:
        raise EncodingError(f"addr_dp {i.addr_dp} out of range")
    if not 0 <= i.be_payload < 16:
        raise EncodingError("byte-enable payload is 4 bits")
    if len(i.activations) != 4 or any(not 0 <= a < 256 for a in i.activations):
        raise EncodingError("activations must be four raw 8-bit fields")
    if i.in_clr and i.act_bits < 2:
        raise EncodingError("activation precision below 2 bits is reserved")
    if not i.in_clr and i.be_payload & FLAG_RESERVED:
        raise EncodingError("reserved flag bit set")


def encode_instruction(i: CimInstruction) -> tuple[int, int, int, int]:
    """Return (addrA, dataA, byte_enable, in_clr) bit fields."""
    _validate(i)
    addr_a = (i.addr_row << 5) | (i.addr_col << 2) | i.addr_dp
    data_a = 0
    for k, a in enumerate(i.activations):
        data_a |= a << (8 * k)
    return addr_a, data_a, i.be_payload, int(i.in_clr)


def decode_instruction(addr_a: int, data_a: int, byte_enable: int, in_clr: int) -> CimInstruction:
    if not 0 <= addr_a < 1 << 12 or not 0 <= data_a <= WORD_MASK:
        raise EncodingError("addrA is 12 bits and dataA 32 bits")
    i = CimInstruction(
        addr_row=addr_a >> 5,
        addr_col=(addr_a >> 2) & 0x7,
        addr_dp=addr_a & 0x3,
        activations=tuple((data_a >> (8 * k)) & 0xFF for k in range(4)),
        be_payload=byte_enable,
        in_clr=bool(in_clr),
    )
    _validate(i)
    return i


def shuffle(word: int, dp: int, addr_dp: int) -> tuple[int, int, int, int]:
    """Duplication shuffler: route 8-bit slices of a fetched word to the 4 BPEs."""
    s = [(word >> (8 * k)) & 0xFF for k in range(4)]
    if dp == 1:
        return tuple(s)
    if dp == 2:
        half = (addr_dp >> 1) & 1
        a, b = s[2 * half], s[2 * half + 1]
        return (a, b, a, b)
    if dp == 4:
        return (s[addr_dp],) * 4
    raise ValueError(f"duplication factor must be 1, 2 or 4, got {dp}")


@dataclass(frozen=True)
class Write:
    """Plain port-A write."""

    addr: int
    data: int


@dataclass
class ClockResult:
    port_b_data: int | None = None
    dsp_stalled: bool = False
    accepted: bool | None = None  # None when no port-A request
    result_ready: bool = False


@dataclass
class M4Bram:
    variant: Variant = field(default_factory=Variant)
    weight_bits: int = 8
    dp: int = 1
    mode: Mode = Mode.COMPUTE
    faithful: bool = False
    cycle: int = 0
    act_bits: int = 8
    act_signed: bool = False
    phase: Phase = Phase.IDLE
    compute_left: int = 0
    readout_left: int = 0
    result_ready_cycle: int | None = None

    def __post_init__(self):
        if self.dp not in (1, 2, 4):
            raise ValueError("dp must be 1, 2 or 4")
        self.main_array = [0] * (PHYS_ROWS * WORDS_PER_ROW)
        self.bpes = [BpeState(self.variant, self.weight_bits, self.faithful) for _ in range(NUM_BPES)]
        self._pending: CimInstruction | None = None
        self._ops: list[tuple[int, int]] = []
        self._accumulate = False
        self._last = False

    # -- main array -------------------------------------------------------
    def peek(self, addr: int) -> int:
        return self.main_array[addr]

    def _check_addr(self, addr: int) -> None:
        if not 0 <= addr < DEPTH:
            raise IndexError(f"main-array address {addr} outside 0..{DEPTH - 1}")

    @property
    def readout_words(self) -> int:
        return 4 if self.variant.kind is Kind.S else 8

    @property
    def busy(self) -> bool:
        return self.phase not in (Phase.IDLE, Phase.RECV1)

    def compute_cycles(self) -> int:
        return ceil(self.act_bits / 2) if self.variant.double_pumped else self.act_bits

    def _fetch_slices(self, i: CimInstruction) -> list[int]:
        if self.variant.kind is Kind.S:
            addr = i.addr_row * WORDS_PER_ROW + i.addr_col
            self._check_addr(addr)
            return list(shuffle(self.main_array[addr], self.dp, i.addr_dp))
        if i.addr_row >= BANK_ROWS:
            raise EncodingError("M4BRAM-L weight rows address one 64-row bank")
        lo_addr = i.addr_row * WORDS_PER_ROW + i.addr_col
        hi_addr = (i.addr_row + BANK_ROWS) * WORDS_PER_ROW + i.addr_col
        lo = shuffle(self.main_array[lo_addr], self.dp, i.addr_dp)
        hi = shuffle(self.main_array[hi_addr], self.dp, i.addr_dp)
        return [a | (b << 8) for a, b in zip(lo, hi)]

    def _acts(self, i: CimInstruction) -> list[int]:
        lo, hi = act_range(self.act_bits, self.act_signed)
        out = []
        for raw in i.activations:
            v = raw - 256 if self.act_signed and raw & 0x80 else raw
            if not lo <= v <= hi:
                raise ProtocolError(f"activation {v} not representable in {self.act_bits} bits")
            out.append(v)
        return out

    # -- one main-clock cycle ------------------------------------------------
    def clock(self, port_a=None, port_b: int | None = None) -> ClockResult:
        res = ClockResult()
        # port B sees the array state before this cycle's write (read-first)
        if port_b is not None:
            if port_b & READOUT_BASE and self.mode is Mode.COMPUTE:
                res.port_b_data = self._serve_readout(port_b & (READOUT_BASE - 1))
                res.dsp_stalled = True
            else:
                self._check_addr(port_b)
                res.port_b_data = self.main_array[port_b]

        if self.mode is Mode.COMPUTE and self.phase is Phase.COMPUTE:
            self._step_compute()

        if port_a is not None:
            if isinstance(port_a, CimInstruction):
                if self.mode is not Mode.COMPUTE:
                    raise ProtocolError("CIM instruction issued in memory mode")
                res.accepted = self._issue(port_a)
            else:
                res.accepted = self._write(port_a)

        if self.phase is Phase.READOUT_READY and self.result_ready_cycle is None:
            self.result_ready_cycle = self.cycle + 1
        res.result_ready = self.phase is Phase.READOUT_READY
        self.cycle += 1
        return res

    def _write(self, w: Write) -> bool:
        self._check_addr(w.addr)
        if self.mode is Mode.COMPUTE and self.phase is Phase.RECV1:
            return False
        self.main_array[w.addr] = w.data & WORD_MASK
        return True

    def _issue(self, i: CimInstruction) -> bool:
        if self.busy:
            return False
        if i.in_clr:
            if self.phase is not Phase.IDLE:
                raise ProtocolError("precision change inside an instruction pair")
            self.act_bits, self.act_signed = i.act_bits, i.act_signed
            return True
        first = bool(i.be_payload & FLAG_FIRST)
        if self.phase is Phase.IDLE:
            if not first:
                raise ProtocolError("second instruction of a pair without a first")
            self._pending = i
            self._accumulate = bool(i.be_payload & FLAG_ACCUMULATE)
            self._last = bool(i.be_payload & FLAG_LAST)
            self.phase = Phase.RECV1
            self.result_ready_cycle = None
            self._first_cycle = self.cycle
            return True
        # Recv1: second instruction completes the pair
        if first:
            raise ProtocolError("expected the second instruction of a pair")
        first_i = self._pending
        if i.addr_dp != first_i.addr_dp:
            raise ProtocolError("addr_dp differs between the two instructions of a pair")
        w1 = self._fetch_slices(first_i)
        w2 = self._fetch_slices(i)
        i1, i2 = self._acts(first_i), self._acts(i)
        self.bpes = [load_weights(b, a, c) for b, a, c in zip(self.bpes, w1, w2)]
        self._ops = list(zip(i1, i2))
        self._pending = None
        self.phase = Phase.COMPUTE
        self.compute_left = self.compute_cycles()
        return True

    def _step_compute(self) -> None:
        self.compute_left -= 1
        if self.compute_left > 0:
            return
        # final bit position: result added into the accumulator row
        new = []
        for bpe, (a1, a2) in zip(self.bpes, self._ops):
            bpe, _, _ = mac2_rowwise(bpe, a1, a2, self.act_bits, self.act_signed, self._accumulate)
            new.append(bpe)
        self.bpes = new
        if self._last:
            self.phase = Phase.READOUT_READY
            self.readout_left = self.readout_words
        else:
            self.phase = Phase.IDLE

    def _serve_readout(self, k: int) -> int:
        if self.phase is not Phase.READOUT_READY:
            raise BlockStateError("BPE result read before it is ready")
        words = self.result_words()
        if not 0 <= k < len(words):
            raise IndexError(f"result word {k} out of range")
        self.readout_left -= 1
        if self.readout_left == 0:
            self.phase = Phase.IDLE
        return words[k]

    def result_words(self) -> list[int]:
        """Accumulator rows serialized lane-major, BPE 0 first, low word first."""
        words = []
        for bpe in self.bpes:
            width = bpe.variant.dummy_cols // bpe.lanes
            image = 0
            for lane, v in enumerate(bpe.row_acc):
                image |= (v & ((1 << width) - 1)) << (lane * width)
            for w in range(bpe.variant.dummy_cols // WORD_BITS):
                words.append((image >> (WORD_BITS * w)) & WORD_MASK)
        return words


def decode_result_words(words, variant: Variant, weight_bits: int) -> list[list[int]]:
    """Inverse of ``M4Bram.result_words``: per-BPE lists of signed lane values."""
    lanes = lanes_per_bpe(variant, weight_bits)
    width = variant.dummy_cols // lanes
    per_bpe = variant.dummy_cols // WORD_BITS
    out = []
    for b in range(NUM_BPES):
        image = 0
        for w in range(per_bpe):
            image |= words[b * per_bpe + w] << (WORD_BITS * w)
        vals = []
        for lane in range(lanes):
            raw = (image >> (lane * width)) & ((1 << width) - 1)
            vals.append(raw - (1 << width) if raw >> (width - 1) else raw)
        out.append(vals)
    return out


def readout(block: M4Bram) -> list[int]:
    """Drive port B through every result word; one cycle per word."""
    if block.phase is not Phase.READOUT_READY:
        raise BlockStateError("readout requested before the result is ready")
    return [block.clock(port_b=READOUT_BASE | k).port_b_data for k in range(block.readout_words)]


def run_mac2(block: M4Bram, first: CimInstruction, second: CimInstruction, port_b=None) -> int:
    """Issue an instruction pair and clock until the eFSM is idle or ready.

    Returns the number of cycles consumed.  ``port_b`` is an optional
    callable ``cycle -> address`` used to exercise concurrent reads.
    """
    start = block.cycle
    for instr in (first, second):
        r = block.clock(instr, port_b(block.cycle) if port_b else None)
        if not r.accepted:
            raise ProtocolError("instruction rejected")
    while block.phase is Phase.COMPUTE:
        block.clock(None, port_b(block.cycle) if port_b else None)
    return block.cycle - start


__all__ = [
    "CimInstruction",
    "ClockResult",
    "M4Bram",
    "Mode",
    "Phase",
    "Write",
    "decode_instruction",
    "decode_result_words",
    "encode_instruction",
    "readout",
    "run_mac2",
    "shuffle",
]
