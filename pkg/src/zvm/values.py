"""Tagged machine words and the two-generation heap.

A value is one 64-bit word, held on the Python side as a signed int in
[-2**63, 2**63).  Odd words encode the integer n as 2n+1; even words are
addresses of heap blocks, stack cells or atoms.  All value memory (stack,
globals, atom table, minor arena, major space) lives in a single
``array('q')`` so that generated machine code and Python see exactly the
same bytes at the same addresses.

The heap is generational at desk scale: a bump-allocated minor arena
(allocating downward) plus a grow-only major space.  A minor collection
is a Cheney copy of live minor objects into major space; there is no
major collection.
"""

from array import array

from .errors import OutOfMemory, VMFault

MASK64 = (1 << 64) - 1
SIGN64 = 1 << 63
MIN_INT = -(1 << 62)
MAX_INT = (1 << 62) - 1

# Block tags.  Tags >= NO_SCAN_TAG have fields the collector must not
# interpret as values (raw bytes / raw doubles).
CLOSURE_TAG = 247
OBJECT_TAG = 248
INFIX_TAG = 249
NO_SCAN_TAG = 251
STRING_TAG = 252
DOUBLE_TAG = 253
DOUBLE_ARRAY_TAG = 254

NUM_ATOMS = 256

COLOR_WHITE = 0
COLOR_FORWARD = 3

LARGE_BLOCK_WORDS = 256     # bigger blocks go straight to major space
STACK_GUARD_SLOTS = 512     # apply-time headroom, in words

UNIT = 1                    # val_of_int(0)
VAL_FALSE = 1
VAL_TRUE = 3


def wrap64(x):
    """Reduce a Python int to the canonical signed 64-bit word."""
    return ((x + SIGN64) & MASK64) - SIGN64


def val_of_int(n):
    assert MIN_INT <= n <= MAX_INT, "unboxable integer %d" % n
    return 2 * n + 1


def int_of_val(v):
    assert v & 1, "int_of_val on a non-integer value"
    return v >> 1


def is_int(v):
    return v & 1


def val_of_bool(b):
    return 3 if b else 1


def make_header(wosize, tag, color=COLOR_WHITE):
    return (wosize << 10) | (color << 8) | tag


def header_wosize(hd):
    return hd >> 10


def header_tag(hd):
    return hd & 0xFF


def header_color(hd):
    return (hd >> 8) & 3


class VMMem:
    """One contiguous word-addressed memory; every region lives inside it."""

    def __init__(self, total_words):
        self.arr = array("q", bytes(8 * total_words))
        self.base = self.arr.buffer_info()[0]
        bview = memoryview(self.arr).cast("B")
        self.w = bview.cast("q")    # word view, indexed by word number
        self.b = bview              # byte view
        self.f = bview.cast("d")    # double view, word-aligned
        self.total_words = total_words

    def widx(self, addr):
        return (addr - self.base) >> 3

    def addr(self, widx):
        return self.base + 8 * widx

    def release(self):
        self.f.release()
        self.b.release()
        self.w.release()


class Heap:
    """Minor arena + grow-only major space over a VMMem region.

    ``young_ptr`` and the remembered-set cursor live in the shared state
    record so that native code and Python always agree on them.
    """

    def __init__(self, mem, record, minor_lo, minor_words, major_words):
        self.mem = mem
        self.record = record
        self.minor_lo = mem.addr(minor_lo)              # lowest minor address
        self.minor_hi = mem.addr(minor_lo + minor_words)
        self.major_lo = self.minor_hi
        self.major_hi = mem.addr(minor_lo + minor_words + major_words)
        self.major_cursor = self.major_lo
        self.minor_words = minor_words
        # remembered set: raw buffer of slot addresses, native-writable
        self.rs = array("q", bytes(8 * 4096))
        self.rs_base = self.rs.buffer_info()[0]
        record[R_YOUNG_PTR] = self.minor_hi
        record[R_YOUNG_LIMIT] = self.minor_lo
        record[R_RS_PTR] = self.rs_base
        record[R_RS_LIMIT] = self.rs_base + 8 * len(self.rs)
        self.collections = 0
        self.bytes_promoted = 0
        # pointers to the 256 preallocated atoms, filled in by the VM
        self.atoms_base = 0

    # --- young pointer, shared with native code through the record ---

    @property
    def young_ptr(self):
        return self.record[R_YOUNG_PTR]

    @young_ptr.setter
    def young_ptr(self, v):
        self.record[R_YOUNG_PTR] = v

    def atom(self, tag):
        return self.atoms_base + 8 * tag + 8

    def is_minor(self, v):
        return (v & 1) == 0 and self.minor_lo <= v < self.minor_hi

    def is_major(self, v):
        return (v & 1) == 0 and self.major_lo <= v < self.major_hi

    def is_block(self, v):
        return (v & 1) == 0 and self.minor_lo <= v < self.major_hi

    # --- allocation ---

    def alloc_block(self, tag, wosize, roots=None):
        """Zero-initialized block; GC runs if the minor arena is full.

        ``roots`` must enumerate every live value when a collection is
        possible.  Size 0 returns the preallocated atom for the tag.
        """
        assert wosize >= 0
        if wosize == 0:
            return self.atom(tag)
        if wosize > LARGE_BLOCK_WORDS or wosize + 1 > self.minor_words:
            ptr = self._alloc_major(tag, wosize)
        else:
            np = self.young_ptr - 8 * (wosize + 1)
            if np < self.minor_lo:
                self.minor_collect(roots)
                np = self.young_ptr - 8 * (wosize + 1)
            self.young_ptr = np
            w = self.mem.w
            i = self.mem.widx(np)
            w[i] = make_header(wosize, tag)
            ptr = np + 8
        w = self.mem.w
        i = self.mem.widx(ptr)
        for k in range(wosize):
            w[i + k] = UNIT
        return ptr

    def alloc_slow(self, tag, wosize, roots):
        """Out-of-line allocation path: collect, then bump (or go major)."""
        if wosize > LARGE_BLOCK_WORDS or wosize + 1 > self.minor_words:
            return self._alloc_major(tag, wosize)
        self.minor_collect(roots)
        np = self.young_ptr - 8 * (wosize + 1)
        self.young_ptr = np
        self.mem.w[self.mem.widx(np)] = make_header(wosize, tag)
        return np + 8

    def _alloc_major(self, tag, wosize):
        need = 8 * (wosize + 1)
        if self.major_cursor + need > self.major_hi:
            raise OutOfMemory("major space cap exhausted")
        ptr = self.major_cursor + 8
        self.mem.w[self.mem.widx(self.major_cursor)] = make_header(wosize, tag)
        self.major_cursor += need
        return ptr

    # --- block accessors ---

    def block_header(self, v):
        return self.mem.w[self.mem.widx(v) - 1]

    def block_tag(self, v):
        return self.block_header(v) & 0xFF

    def block_wosize(self, v):
        return self.block_header(v) >> 10

    def field(self, v, i):
        return self.mem.w[self.mem.widx(v) + i]

    def set_field_raw(self, v, i, x):
        self.mem.w[self.mem.widx(v) + i] = x

    def set_field(self, block, index, v):
        """Checked store with the generational write barrier."""
        if block & 1 or not self.is_block(block):
            raise VMFault("set_field on a non-block value")
        if index < 0 or index >= self.block_wosize(block):
            raise VMFault("set_field index out of bounds")
        slot = block + 8 * index
        self.mem.w[self.mem.widx(slot)] = v
        if slot >= self.major_lo and self.is_minor(v):
            self.record_slot(slot)

    def record_slot(self, slot):
        rec = self.record
        ptr = rec[R_RS_PTR]
        if ptr >= rec[R_RS_LIMIT]:
            self._grow_rs()
            ptr = rec[R_RS_PTR]
        self.rs[(ptr - self.rs_base) >> 3] = slot
        rec[R_RS_PTR] = ptr + 8

    def _grow_rs(self):
        used = (self.record[R_RS_PTR] - self.rs_base) >> 3
        bigger = array("q", bytes(16 * len(self.rs)))
        bigger[:used] = self.rs[:used]
        self.rs = bigger
        self.rs_base = bigger.buffer_info()[0]
        self.record[R_RS_PTR] = self.rs_base + 8 * used
        self.record[R_RS_LIMIT] = self.rs_base + 8 * len(bigger)

    # --- minor collection: Cheney copy into major space ---

    def _promote(self, base):
        """Copy the block at ``base`` to major space, leave a forward mark."""
        mem = self.mem
        w = mem.w
        hi = mem.widx(base)
        hd = w[hi - 1]
        if header_color(hd) == COLOR_FORWARD:
            return w[hi]
        wosize = hd >> 10
        need = 8 * (wosize + 1)
        if self.major_cursor + need > self.major_hi:
            raise OutOfMemory("major space cap exhausted during collection")
        dst = self.major_cursor + 8
        di = mem.widx(dst)
        w[di - 1] = hd
        w[di:di + wosize] = w[hi:hi + wosize]
        self.major_cursor += need
        self.bytes_promoted += need
        w[hi - 1] = hd | (COLOR_FORWARD << 8)
        w[hi] = dst
        return dst

    def _forward(self, v):
        if v & 1 or not (self.minor_lo <= v < self.minor_hi):
            return v
        hd = self.mem.w[self.mem.widx(v) - 1]
        if header_tag(hd) == INFIX_TAG:
            off = 8 * (hd >> 10)
            return self._promote(v - off) + off
        return self._promote(v)

    def minor_collect(self, roots):
        """Copy every live minor object to major space and reset the arena.

        ``roots`` provides .accu/.env (read-write), .sp (stack word index),
        stack and globals bounds, and optionally .extra_cells (mutable
        single-element lists used by primitives to keep arguments alive).
        """
        self.collections += 1
        mem = self.mem
        w = mem.w
        scan = self.major_cursor

        if roots is not None:
            roots.accu = self._forward(roots.accu)
            roots.env = self._forward(roots.env)
            for i in range(roots.sp, roots.stack_hi_idx):
                w[i] = self._forward(w[i])
            for i in range(roots.globals_lo_idx, roots.globals_hi_idx):
                w[i] = self._forward(w[i])
            for cell in getattr(roots, "extra_cells", ()):
                cell[0] = self._forward(cell[0])

        nrs = (self.record[R_RS_PTR] - self.rs_base) >> 3
        for k in range(nrs):
            slot = self.rs[k]
            i = mem.widx(slot)
            w[i] = self._forward(w[i])

        while scan < self.major_cursor:
            i = mem.widx(scan)
            hd = w[i]
            wosize = hd >> 10
            if header_tag(hd) < NO_SCAN_TAG:
                for k in range(i + 1, i + 1 + wosize):
                    v = w[k]
                    if (v & 1) == 0 and self.minor_lo <= v < self.minor_hi:
                        w[k] = self._forward(v)
            scan += 8 * (wosize + 1)

        self.young_ptr = self.minor_hi
        self.record[R_RS_PTR] = self.rs_base

    # --- strings and floats ---

    def make_string(self, data, roots=None, space="minor"):
        """Byte block with length padding in the final byte."""
        if isinstance(data, str):
            data = data.encode("utf-8")
        wosize = (len(data) + 8) >> 3
        if space == "major":
            ptr = self._alloc_major(STRING_TAG, wosize)
        else:
            ptr = self.alloc_block(STRING_TAG, wosize, roots)
        bi = ptr - self.mem.base
        self.mem.b[bi:bi + len(data)] = data
        pad = 8 * wosize - 1 - len(data)
        for k in range(len(data), 8 * wosize - 1):
            self.mem.b[bi + k] = 0
        self.mem.b[bi + 8 * wosize - 1] = pad
        return ptr

    def string_length(self, v):
        wosize = self.block_wosize(v)
        pad = self.mem.b[v - self.mem.base + 8 * wosize - 1]
        return 8 * wosize - 1 - pad

    def string_bytes(self, v):
        n = self.string_length(v)
        bi = v - self.mem.base
        return bytes(self.mem.b[bi:bi + n])

    def box_float(self, x, roots=None):
        ptr = self.alloc_block(DOUBLE_TAG, 1, roots)
        self.mem.f[self.mem.widx(ptr)] = x
        return ptr

    def unbox_float(self, v):
        return self.mem.f[self.mem.widx(v)]

    def stats(self):
        return {
            "minor_collections": self.collections,
            "bytes_promoted": self.bytes_promoted,
            "major_bytes": self.major_cursor - self.major_lo,
            "minor_bytes_free": self.young_ptr - self.minor_lo,
        }


# State record layout (word indices into the shared array('q')).  Generated
# native code addresses these fields as fixed displacements off its state
# base register, so the order is frozen.
R_ACCU = 0
R_ENV = 1
R_EXTRA_ARGS = 2     # raw count (native code holds it tagged in a register)
R_SP = 3             # native address
R_TRAP_SP = 4        # native address, 0 = no handler
R_YOUNG_PTR = 5
R_YOUNG_LIMIT = 6
R_CODE_BASE = 7      # address of bytecode word 0
R_CODE_END = 8       # arena code_end address
R_GLOBALS = 9
R_STACK_GUARD = 10
R_STACK_HI = 11
R_SIGNAL_FLAG = 12
R_STATUS = 13
R_PENDING_KIND = 14  # 0 none, 1 raise pending, 2 fatal pending
R_PENDING_VAL = 15
R_EXN = 16           # uncaught exception value
R_START_PC = 17      # address of the first bytecode word to execute
R_ATOMS = 18
R_RS_PTR = 19        # remembered set write cursor (address)
R_RS_LIMIT = 20
RECORD_WORDS = 24

# R_STATUS values reported by a finishing engine
ST_DONE = 0
ST_UNCAUGHT = 1
ST_FAULT = 2
ST_STACK_OVERFLOW = 3
ST_OOM = 4
ST_ARENA_EXHAUSTED = 5


def new_record():
    return array("q", bytes(8 * RECORD_WORDS))
