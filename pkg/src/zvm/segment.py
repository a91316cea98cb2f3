"""Bytecode segments: mutable 32-bit word array, globals, primitive names.

Opcode words are mutated in place by the threaded interpreter and the
JIT, so a pristine copy of the words is kept from load time for
disassembly and re-runs.

Binary .zbc format, little-endian:
  magic "ZBC1" | u32 version=1 | u32 code words | u32 globals | u32 prims
  code words (i32 each)
  globals: u8 kind (0=int, 1=string, 2=unit atom), then i64 / u32 len+bytes
  prims: u32 len + utf-8 name, in declaration order
"""

import struct
from array import array

from . import isa
from .errors import BadMagic, BadVersion, BadOpcode, Corrupt

MAGIC = b"ZBC1"
VERSION = 1

GLOB_INT = 0
GLOB_STRING = 1
GLOB_UNIT = 2

MODE_COLD = "cold"
MODE_THREADED = "threaded"
MODE_JIT = "jit"


class Segment:
    def __init__(self, words, globals_=(), prims=()):
        self.words = array("i", words)
        self.pristine_words = array("i", words)
        self.globals = list(globals_)      # (kind, payload) pairs
        self.prims = list(prims)
        self.mode = MODE_COLD

    def __len__(self):
        return len(self.words)

    @property
    def words_addr(self):
        return self.words.buffer_info()[0]

    def pristine(self):
        """Fresh cold segment with the original words."""
        return Segment(self.pristine_words, self.globals, self.prims)

    def decode_all(self, pristine=False):
        """Decode the whole array into (index, Instr) pairs."""
        words = self.pristine_words if pristine else self.words
        out = []
        at = 0
        while at < len(words):
            instr, at2 = isa.decode(words, at)
            out.append((at, instr))
            at = at2
        return out


def store_segment(seg):
    out = [MAGIC, struct.pack("<IIII", VERSION, len(seg.pristine_words),
                              len(seg.globals), len(seg.prims))]
    out.append(struct.pack("<%di" % len(seg.pristine_words),
                           *seg.pristine_words))
    for kind, payload in seg.globals:
        out.append(struct.pack("<B", kind))
        if kind == GLOB_INT:
            out.append(struct.pack("<q", payload))
        elif kind == GLOB_STRING:
            data = payload.encode("utf-8") if isinstance(payload, str) else payload
            out.append(struct.pack("<I", len(data)))
            out.append(data)
        elif kind == GLOB_UNIT:
            pass
        else:
            raise Corrupt("unknown global kind %d" % kind)
    for name in seg.prims:
        data = name.encode("utf-8")
        out.append(struct.pack("<I", len(data)))
        out.append(data)
    return b"".join(out)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise Corrupt("truncated segment file")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def i64(self):
        return struct.unpack("<q", self.take(8))[0]

    def u8(self):
        return self.take(1)[0]


def load_segment(data):
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise BadMagic("not a .zbc file")
    version = r.u32()
    if version != VERSION:
        raise BadVersion("unsupported version %d" % version)
    ncode = r.u32()
    nglobals = r.u32()
    nprims = r.u32()
    words = struct.unpack("<%di" % ncode, r.take(4 * ncode))
    globals_ = []
    for _ in range(nglobals):
        kind = r.u8()
        if kind == GLOB_INT:
            globals_.append((GLOB_INT, r.i64()))
        elif kind == GLOB_STRING:
            n = r.u32()
            globals_.append((GLOB_STRING, bytes(r.take(n))))
        elif kind == GLOB_UNIT:
            globals_.append((GLOB_UNIT, None))
        else:
            raise Corrupt("unknown global kind %d" % kind)
    prims = []
    for _ in range(nprims):
        n = r.u32()
        prims.append(bytes(r.take(n)).decode("utf-8"))
    if r.pos != len(data):
        raise Corrupt("%d trailing bytes" % (len(data) - r.pos))
    return Segment(words, globals_, prims)


def validate(seg):
    """Structural diagnostics; empty list means the segment is well formed."""
    diags = []
    words = seg.pristine_words
    starts = set()
    instrs = []
    at = 0
    try:
        while at < len(words):
            starts.add(at)
            instr, at2 = isa.decode(words, at)
            instrs.append((at, instr))
            at = at2
    except BadOpcode as e:
        diags.append((at, str(e)))
        return diags

    if not instrs or instrs[-1][1].opcode != isa.STOP:
        diags.append((len(words), "segment does not end with STOP"))

    prev_op = None
    for at, instr in instrs:
        op = instr.opcode
        for tgt in isa.branch_targets(instr, at) + isa.closure_code_targets(instr, at):
            if tgt not in starts:
                diags.append((at, "%s target %d is not an instruction start"
                              % (instr.mnemonic, tgt)))
        if op == isa.C_CALL:
            prim, nargs = instr.operands
            if not (0 <= prim < len(seg.prims)):
                diags.append((at, "C_CALL primitive index %d out of range" % prim))
            if not (1 <= nargs <= 5):
                diags.append((at, "C_CALL argument count %d out of range" % nargs))
        elif op in (isa.GETGLOBAL, isa.SETGLOBAL, isa.GETGLOBALFIELD):
            if not (0 <= instr.operands[0] < len(seg.globals)):
                diags.append((at, "global index %d out of range" % instr.operands[0]))
        elif op == isa.ATOM:
            if not (0 <= instr.operands[0] < 256):
                diags.append((at, "atom tag %d out of range" % instr.operands[0]))
        elif op == isa.GRAB:
            if prev_op != isa.RESTART:
                diags.append((at, "GRAB not preceded by RESTART"))
        elif op == isa.MAKEBLOCK:
            if instr.operands[1] < 1:
                diags.append((at, "MAKEBLOCK of size %d" % instr.operands[1]))
        elif op == isa.MAKEFLOATBLOCK:
            if instr.operands[0] < 1:
                diags.append((at, "MAKEFLOATBLOCK of size %d" % instr.operands[0]))
        prev_op = op
    return diags
