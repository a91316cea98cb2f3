"""VM assembly: memory layout, machine state, run results, rendering.

One VM instance owns a single words-array holding, in order, the value
stack, the atom table, the global table, the minor arena and the major
space.  Engines (interpreters and JIT backends) all execute against this
shared layout, so results, heap contents and collection counts are
directly comparable.
"""

from dataclasses import dataclass, field

from . import values
from .errors import UnknownPrimitive
from .segment import GLOB_INT, GLOB_STRING, GLOB_UNIT
from .values import (DOUBLE_ARRAY_TAG, DOUBLE_TAG, INFIX_TAG, CLOSURE_TAG,
                     NUM_ATOMS, R_ATOMS, R_CODE_BASE, R_CODE_END, R_EXN,
                     R_GLOBALS, R_SIGNAL_FLAG, R_STACK_GUARD, R_STACK_HI,
                     R_START_PC, R_TRAP_SP, STACK_GUARD_SLOTS, STRING_TAG,
                     Heap, VMMem, make_header, new_record, val_of_int)


@dataclass
class Config:
    engine: str = "switch"
    arena_size: int = 1 << 24
    minor_bytes: int = 256 * 1024
    stack_slots: int = 1 << 20
    major_bytes: int = 32 << 20
    float_inline: bool = True
    stack_elide: bool = True
    wx: bool = False
    step_budget: int = 0          # 0 = unlimited (interpreters only)
    iterations: int = 3
    warmup: int = 1


@dataclass
class RunResult:
    engine: str
    status: str                   # done | uncaught | fault | ...
    value: int | None = None
    value_render: str = ""
    exn_render: str = ""
    output: str = ""
    counters: dict = field(default_factory=dict)

    def key(self):
        """Comparison key for differential testing."""
        shown = self.value_render if self.status == "done" else self.exn_render
        return (self.status, shown, self.output,
                self.counters.get("minor_gcs"))

    def summary(self):
        if self.status == "done":
            return self.value_render
        if self.status == "uncaught":
            return "uncaught exception: %s" % self.exn_render
        return "error: %s" % self.status


class MachineState:
    """The virtual registers plus root-set bookkeeping for the collector."""

    __slots__ = ("accu", "env", "extra_args", "pc", "sp", "trap_sp",
                 "stack_hi_idx", "stack_lo_idx", "globals_lo_idx",
                 "globals_hi_idx", "extra_cells", "signal_flag")

    def __init__(self, vm):
        self.accu = val_of_int(0)
        self.env = vm.heap.atom(0)
        self.extra_args = 0
        self.pc = 0
        self.sp = vm.stack_hi_idx
        self.trap_sp = -1
        self.stack_hi_idx = vm.stack_hi_idx
        self.stack_lo_idx = vm.stack_lo_idx
        self.globals_lo_idx = vm.globals_lo_idx
        self.globals_hi_idx = vm.globals_hi_idx
        self.extra_cells = []
        self.signal_flag = False


class VM:
    def __init__(self, seg, config=None):
        cfg = config or Config()
        self.config = cfg
        self.seg = seg
        minor_words = max(cfg.minor_bytes // 8, 64)
        major_words = max(cfg.major_bytes // 8, 1024)
        stack_slots = max(cfg.stack_slots, 1024)
        nglobals = len(seg.globals)

        stack_lo = 0
        atoms_lo = stack_lo + stack_slots
        globals_lo = atoms_lo + NUM_ATOMS + 1
        minor_lo = globals_lo + max(nglobals, 1)
        total = minor_lo + minor_words + major_words

        self.mem = VMMem(total)
        self.record = new_record()
        self.record_addr = self.record.buffer_info()[0]
        self.heap = Heap(self.mem, self.record, minor_lo, minor_words,
                         major_words)

        self.stack_lo_idx = stack_lo
        self.stack_hi_idx = atoms_lo
        self.globals_lo_idx = globals_lo
        self.globals_hi_idx = globals_lo + nglobals

        # atom table: 256 zero-size headers back to back
        w = self.mem.w
        for t in range(NUM_ATOMS):
            w[atoms_lo + t] = make_header(0, t)
        self.heap.atoms_base = self.mem.addr(atoms_lo)

        rec = self.record
        rec[R_STACK_GUARD] = self.mem.addr(stack_lo + STACK_GUARD_SLOTS)
        rec[R_STACK_HI] = self.mem.addr(atoms_lo)
        rec[R_GLOBALS] = self.mem.addr(globals_lo)
        rec[R_ATOMS] = self.heap.atoms_base
        rec[R_CODE_BASE] = seg.words_addr
        rec[R_START_PC] = seg.words_addr
        rec[R_TRAP_SP] = 0
        rec[R_EXN] = values.UNIT
        rec[R_SIGNAL_FLAG] = 0

        self._fill_globals(seg)

        from . import prims
        self.prim_table = prims.resolve(seg.prims)
        self.output = []
        self.signal_callback = None
        self.counters = {}

    def _fill_globals(self, seg):
        w = self.mem.w
        for i, (kind, payload) in enumerate(seg.globals):
            if kind == GLOB_INT:
                w[self.globals_lo_idx + i] = val_of_int(payload)
            elif kind == GLOB_STRING:
                ptr = self.heap.make_string(payload, space="major")
                w[self.globals_lo_idx + i] = ptr
            elif kind == GLOB_UNIT:
                w[self.globals_lo_idx + i] = self.heap.atom(0)

    def new_state(self):
        return MachineState(self)

    def set_signal(self):
        self.record[R_SIGNAL_FLAG] = 1

    def global_value(self, i):
        return self.mem.w[self.globals_lo_idx + i]

    def base_counters(self):
        c = dict(self.counters)
        c["minor_gcs"] = self.heap.collections
        c.update(self.heap.stats())
        return c

    def close(self):
        self.mem.release()


class RecordRoots:
    """Root adapter over the raw state record, for native-driven GC."""

    def __init__(self, vm):
        self.vm = vm
        self.stack_hi_idx = vm.stack_hi_idx
        self.globals_lo_idx = vm.globals_lo_idx
        self.globals_hi_idx = vm.globals_hi_idx
        self.extra_cells = []

    @property
    def accu(self):
        return self.vm.record[values.R_ACCU]

    @accu.setter
    def accu(self, v):
        self.vm.record[values.R_ACCU] = v

    @property
    def env(self):
        return self.vm.record[values.R_ENV]

    @env.setter
    def env(self, v):
        self.vm.record[values.R_ENV] = v

    @property
    def sp(self):
        return self.vm.mem.widx(self.vm.record[values.R_SP])


def _escape(data):
    text = data.decode("latin-1")
    for a, b in (("\\", "\\\\"), ('"', '\\"'), ("\n", "\\n"), ("\t", "\\t")):
        text = text.replace(a, b)
    return '"%s"' % text


def render_value(heap, v, depth=0):
    """Canonical human-readable form; the tree-walk oracle must agree."""
    if depth > 12:
        return "..."
    if v & 1:
        return "int %d" % (v >> 1)
    if not heap.is_block(v) and not (heap.atoms_base <= v
                                     < heap.atoms_base + 8 * (NUM_ATOMS + 1)):
        return "<bad pointer>"
    tag = heap.block_tag(v)
    if tag == STRING_TAG:
        return "string %s" % _escape(heap.string_bytes(v))
    if tag == DOUBLE_TAG:
        return "float %r" % heap.unbox_float(v)
    if tag == DOUBLE_ARRAY_TAG:
        n = heap.block_wosize(v)
        i = heap.mem.widx(v)
        return "floats [%s]" % " ".join(repr(heap.mem.f[i + k])
                                        for k in range(n))
    if tag in (CLOSURE_TAG, INFIX_TAG):
        return "<closure>"
    n = heap.block_wosize(v)
    inner = " ".join(render_value(heap, heap.field(v, k), depth + 1)
                     for k in range(n))
    return "block tag=%d [%s]" % (tag, inner)


def run(seg, config=None):
    """Execute a segment under the configured engine; returns RunResult."""
    cfg = config or Config()
    engine = cfg.engine
    if engine in ("switch", "threaded"):
        from . import interp
        return interp.interpret(seg, mode=engine, config=cfg)
    if engine == "jit-trace":
        from .jit import trace
        return trace.run_trace(seg, cfg)
    if engine == "jit-native":
        from .jit import native
        return native.run_native(seg, cfg)
    raise ValueError("unknown engine %r" % engine)
