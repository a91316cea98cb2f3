"""Primitive table shared by every engine.

A primitive is ``fn(ctx, args) -> value`` where args are raw words.  It
may allocate through the context (which keeps argument values rooted
across a collection) and may raise a VM-level exception with VmRaise.
The registry is extensible; tests register argument-echo and
allocation-storm helpers through the same mechanism.
"""

import math

from .errors import UnknownPrimitive, VmRaise
from .lamb import EXN_DIVISION_BY_ZERO, EXN_INVALID_ARGUMENT
from .values import (DOUBLE_ARRAY_TAG, DOUBLE_TAG, UNIT, int_of_val,
                     val_of_bool, val_of_int)

_REGISTRY = {}


def register(name, arity, fn):
    if not (1 <= arity <= 5):
        raise ValueError("primitive arity must be 1..5")
    _REGISTRY[name] = (arity, fn)
    return fn


def registered(name, arity):
    def deco(fn):
        return register(name, arity, fn)
    return deco


def resolve(names):
    """Declared names -> ordered (name, arity, fn) table."""
    table = []
    for name in names:
        if name not in _REGISTRY:
            raise UnknownPrimitive("unknown primitive %r" % name)
        arity, fn = _REGISTRY[name]
        table.append((name, arity, fn))
    return table


class PrimContext:
    """What a primitive may touch: heap, output, rooted allocation."""

    def __init__(self, vm, roots):
        self.vm = vm
        self.heap = vm.heap
        self.roots = roots
        self.out = vm.output

    def alloc_keep(self, tag, wosize, keep):
        """Allocate while keeping ``keep`` values alive; returns
        (pointer, possibly-moved keep values)."""
        cells = [[v] for v in keep]
        saved = self.roots.extra_cells
        self.roots.extra_cells = list(saved) + cells
        try:
            ptr = self.heap.alloc_block(tag, wosize, self.roots)
        finally:
            self.roots.extra_cells = saved
        return ptr, [c[0] for c in cells]

    def box_float(self, x):
        ptr, _ = self.alloc_keep(DOUBLE_TAG, 1, ())
        self.heap.mem.f[self.heap.mem.widx(ptr)] = x
        return ptr


def invoke(table, index, ctx, args):
    name, arity, fn = table[index]
    assert len(args) == arity, "C_CALL arity mismatch for %s" % name
    return fn(ctx, args)


def _invalid_argument(ctx):
    return VmRaise(ctx.heap.atom(EXN_INVALID_ARGUMENT))


def _division_by_zero(ctx):
    return VmRaise(ctx.heap.atom(EXN_DIVISION_BY_ZERO))


# --- IEEE helpers: these define the observable float semantics, and the
# backend's inlined templates must match them bit for bit.

def fdiv(a, b):
    if b == 0.0:
        if a != a or a == 0.0:
            return float("nan")
        return math.copysign(math.inf, a) * math.copysign(1.0, b)
    return a / b


def fsqrt(x):
    if x != x or x < 0.0:
        return float("nan")
    return math.sqrt(x)


def ftrunc(x):
    if x != x or x == math.inf or x == -math.inf:
        return 0
    n = int(x)
    return ((n + (1 << 62)) % (1 << 63)) - (1 << 62)


# --- I/O ---

@registered("print_int", 1)
def _print_int(ctx, args):
    ctx.out.append(str(int_of_val(args[0])))
    return UNIT


@registered("print_string", 1)
def _print_string(ctx, args):
    ctx.out.append(ctx.heap.string_bytes(args[0]).decode("latin-1"))
    return UNIT


@registered("print_newline", 1)
def _print_newline(ctx, args):
    ctx.out.append("\n")
    return UNIT


# --- strings ---

@registered("string_length", 1)
def _string_length(ctx, args):
    return val_of_int(ctx.heap.string_length(args[0]))


@registered("string_get", 2)
def _string_get(ctx, args):
    s, i = args[0], int_of_val(args[1])
    if not (0 <= i < ctx.heap.string_length(s)):
        raise _invalid_argument(ctx)
    return val_of_int(ctx.heap.mem.b[s - ctx.heap.mem.base + i])


@registered("string_set", 3)
def _string_set(ctx, args):
    s, i, c = args[0], int_of_val(args[1]), int_of_val(args[2])
    if not (0 <= i < ctx.heap.string_length(s)):
        raise _invalid_argument(ctx)
    ctx.heap.mem.b[s - ctx.heap.mem.base + i] = c & 0xFF
    return UNIT


# --- boxed floats ---

def _float_binop(name, op):
    def prim(ctx, args):
        a = ctx.heap.unbox_float(args[0])
        b = ctx.heap.unbox_float(args[1])
        return ctx.box_float(op(a, b))
    prim.__name__ = "_" + name
    return register(name, 2, prim)


_float_binop("caml_add_float", lambda a, b: a + b)
_float_binop("caml_sub_float", lambda a, b: a - b)
_float_binop("caml_mul_float", lambda a, b: a * b)
_float_binop("caml_div_float", fdiv)


def _float_cmp(name, op):
    def prim(ctx, args):
        a = ctx.heap.unbox_float(args[0])
        b = ctx.heap.unbox_float(args[1])
        return val_of_bool(op(a, b))
    prim.__name__ = "_" + name
    return register(name, 2, prim)


_float_cmp("caml_eq_float", lambda a, b: a == b)
_float_cmp("caml_lt_float", lambda a, b: a < b)
_float_cmp("caml_le_float", lambda a, b: a <= b)


@registered("caml_sqrt_float", 1)
def _sqrt_float(ctx, args):
    return ctx.box_float(fsqrt(ctx.heap.unbox_float(args[0])))


@registered("caml_int_of_float", 1)
def _int_of_float(ctx, args):
    return val_of_int(ftrunc(ctx.heap.unbox_float(args[0])))


@registered("caml_float_of_int", 1)
def _float_of_int(ctx, args):
    return ctx.box_float(float(int_of_val(args[0])))


# --- arrays ---

@registered("array_make", 2)
def _array_make(ctx, args):
    n = int_of_val(args[0])
    v = args[1]
    if n < 0:
        raise _invalid_argument(ctx)
    if n == 0:
        return ctx.heap.atom(0)
    heap = ctx.heap
    if (v & 1) == 0 and heap.is_block(v) and heap.block_tag(v) == DOUBLE_TAG:
        ptr, (v,) = ctx.alloc_keep(DOUBLE_ARRAY_TAG, n, (v,))
        x = heap.unbox_float(v)
        base = heap.mem.widx(ptr)
        for k in range(n):
            heap.mem.f[base + k] = x
        return ptr
    ptr, (v,) = ctx.alloc_keep(0, n, (v,))
    base = heap.mem.widx(ptr)
    for k in range(n):
        heap.mem.w[base + k] = v
    # stores of a minor pointer into a major block need the barrier
    if ptr >= heap.major_lo and heap.is_minor(v):
        for k in range(n):
            heap.record_slot(ptr + 8 * k)
    return ptr
