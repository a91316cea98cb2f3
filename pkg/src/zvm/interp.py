"""Reference execution engines: switch dispatch and threaded dispatch.

The switch interpreter is one long dispatch loop with the hot
instructions inlined; the threaded interpreter first rewrites every
opcode word into a handler displacement (the segment itself becomes the
opcode-to-handler map) and then dispatches through the handler table.
Both define the semantics the JIT backends must reproduce exactly.
"""

from . import isa
from .errors import (AlreadyThreaded, StackOverflow, StepBudgetExceeded,
                     UncaughtException, VMFault, VmRaise)
from .lamb import EXN_DIVISION_BY_ZERO
from .machine import VM, RunResult, render_value
from .prims import PrimContext, invoke
from .segment import MODE_COLD, MODE_THREADED, validate
from .values import (CLOSURE_TAG, INFIX_TAG, R_SIGNAL_FLAG, UNIT,
                     STACK_GUARD_SLOTS, make_header, val_of_int)

MASK64 = (1 << 64) - 1
SIGN64 = 1 << 63

# threaded displacements: word = opcode + THREAD_BASE, so they never
# collide with raw opcodes or with negative JIT offsets
THREAD_BASE = isa.NUM_OPCODES


def _wrap(x):
    return ((x + SIGN64) & MASK64) - SIGN64


def _tdiv(a, b):
    q = abs(a) // abs(b)
    return -q if (a < 0) != (b < 0) else q


class _Stop(Exception):
    pass


# --- shared complex transitions (used by both dispatch strategies) ---

def closure_code_index(heap, clo):
    if clo & 1 or not heap.is_block(clo):
        raise VMFault("apply of a non-closure value")
    tag = heap.block_tag(clo)
    if tag not in (CLOSURE_TAG, INFIX_TAG):
        raise VMFault("apply of a non-closure block (tag %d)" % tag)
    code = heap.field(clo, 0)
    if not code & 1:
        raise VMFault("closure code slot is not a bytecode index")
    return code >> 1


def apply_closure(vm, st, nargs, ret_pc):
    """APPLY: insert the frame trio under the arguments and jump."""
    heap = vm.heap
    w = vm.mem.w
    sp = st.sp
    if sp - 3 < st.stack_lo_idx + STACK_GUARD_SLOTS:
        raise StackOverflow("value stack exhausted")
    sp -= 3
    for i in range(nargs):
        w[sp + i] = w[sp + i + 3]
    w[sp + nargs] = val_of_int(ret_pc)
    w[sp + nargs + 1] = st.env
    w[sp + nargs + 2] = val_of_int(st.extra_args)
    st.sp = sp
    st.extra_args = nargs - 1
    st.env = st.accu
    st.pc = closure_code_index(heap, st.accu)


def appterm(vm, st, nargs, frame_size):
    w = vm.mem.w
    sp = st.sp
    newsp = sp + frame_size - nargs
    for i in range(nargs - 1, -1, -1):
        w[newsp + i] = w[sp + i]
    st.sp = newsp
    st.extra_args += nargs - 1
    st.env = st.accu
    st.pc = closure_code_index(vm.heap, st.accu)


def do_return(vm, st, to_pop):
    w = vm.mem.w
    st.sp += to_pop
    if st.extra_args > 0:
        st.extra_args -= 1
        st.env = st.accu
        st.pc = closure_code_index(vm.heap, st.accu)
    else:
        sp = st.sp
        st.pc = w[sp] >> 1
        st.env = w[sp + 1]
        st.extra_args = w[sp + 2] >> 1
        st.sp = sp + 3


def grab_partial(vm, st, grab_pc):
    """GRAB with too few arguments: box them up into a closure."""
    heap = vm.heap
    w = vm.mem.w
    num_args = 1 + st.extra_args
    clo = heap.alloc_block(CLOSURE_TAG, num_args + 2, st)
    heap.set_field_raw(clo, 0, val_of_int(grab_pc - 1))   # the RESTART
    heap.set_field_raw(clo, 1, st.env)
    for i in range(num_args):
        heap.set_field_raw(clo, i + 2, w[st.sp + i])
    st.sp += num_args
    sp = st.sp
    st.accu = clo
    st.pc = w[sp] >> 1
    st.env = w[sp + 1]
    st.extra_args = w[sp + 2] >> 1
    st.sp = sp + 3


def do_restart(vm, st):
    heap = vm.heap
    w = vm.mem.w
    num_args = heap.block_wosize(st.env) - 2
    st.sp -= num_args
    for i in range(num_args):
        w[st.sp + i] = heap.field(st.env, i + 2)
    st.extra_args += num_args
    st.env = heap.field(st.env, 1)


def closurerec(vm, st, code, at):
    """CLOSUREREC: one block with infix headers for the later functions."""
    heap = vm.heap
    w = vm.mem.w
    nfuncs = code[at + 1]
    nvars = code[at + 2]
    anchor = at + 3
    if nvars > 0:
        st.sp -= 1
        w[st.sp] = st.accu
    blk = heap.alloc_block(CLOSURE_TAG, 2 * nfuncs - 1 + nvars, st)
    for j in range(nvars):
        heap.set_field_raw(blk, 2 * nfuncs - 1 + j, w[st.sp + j])
    st.sp += nvars
    heap.set_field_raw(blk, 0, val_of_int(anchor + code[anchor]))
    st.sp -= 1
    w[st.sp] = blk
    for i in range(1, nfuncs):
        heap.set_field_raw(blk, 2 * i - 1, make_header(2 * i, INFIX_TAG))
        heap.set_field_raw(blk, 2 * i, val_of_int(anchor + code[anchor + i]))
        st.sp -= 1
        w[st.sp] = blk + 16 * i
    st.accu = blk
    st.pc = at + 3 + nfuncs


def do_raise(vm, st):
    """Unwind to the innermost trap frame, or report an uncaught value."""
    w = vm.mem.w
    if st.trap_sp < 0:
        raise UncaughtException(st.accu)
    sp = st.trap_sp
    st.pc = w[sp] >> 1
    st.trap_sp = w[sp + 1] >> 1
    st.env = w[sp + 2]
    st.extra_args = w[sp + 3] >> 1
    st.sp = sp + 4


def do_ccall(vm, st, prim_index, nargs):
    w = vm.mem.w
    args = [st.accu] + [w[st.sp + i] for i in range(nargs - 1)]
    ctx = PrimContext(vm, st)
    try:
        result = invoke(vm.prim_table, prim_index, ctx, args)
    except VmRaise as exc:
        st.sp += nargs - 1
        st.accu = exc.value
        do_raise(vm, st)
        return
    st.sp += nargs - 1
    st.accu = result
    st.pc += 3


def check_signals(vm, st):
    if vm.record[R_SIGNAL_FLAG]:
        vm.record[R_SIGNAL_FLAG] = 0
        if vm.signal_callback is not None:
            vm.signal_callback(vm)


def getmethod(vm, st):
    heap = vm.heap
    obj = vm.mem.w[st.sp]
    table = heap.field(obj, 0)
    idx = st.accu >> 1
    if not (0 <= idx < heap.block_wosize(table)):
        raise VMFault("method index out of range")
    st.accu = heap.field(table, idx)


# --- the switch interpreter ---

def _switch_loop(vm, st, seg, budget):
    mem = vm.mem
    w = mem.w
    base = mem.base
    bmem = mem.b
    fmem = mem.f
    code = list(seg.words)
    heap = vm.heap
    rec = vm.record
    glo = vm.globals_lo_idx
    atoms = heap.atoms_base
    major_lo = heap.major_lo
    minor_lo = heap.minor_lo
    minor_hi = heap.minor_hi
    guard_idx = st.stack_lo_idx + STACK_GUARD_SLOTS
    rsig = R_SIGNAL_FLAG

    accu = st.accu
    env = st.env
    sp = st.sp
    extra = st.extra_args
    pc = st.pc
    trap_sp = st.trap_sp
    steps = 0

    M = MASK64
    S = SIGN64

    def sync():
        st.accu = accu
        st.env = env
        st.sp = sp
        st.extra_args = extra
        st.pc = pc
        st.trap_sp = trap_sp

    def reload():
        nonlocal accu, env, sp, extra, pc, trap_sp
        accu = st.accu
        env = st.env
        sp = st.sp
        extra = st.extra_args
        pc = st.pc
        trap_sp = st.trap_sp

    try:
        while True:
            op = code[pc]
            steps += 1
            if budget and steps > budget:
                raise StepBudgetExceeded("interpreter step budget")

            if op < 29:
                if op < 11:
                    # stack manipulation and loads
                    if op == 0:      # ACC
                        accu = w[sp + code[pc + 1]]
                        pc += 2
                    elif op == 1:    # PUSH
                        sp -= 1
                        w[sp] = accu
                        pc += 1
                    elif op == 6:    # CONSTINT
                        accu = 2 * code[pc + 1] + 1
                        pc += 2
                    elif op == 5:    # ENVACC
                        accu = w[((env - base) >> 3) + code[pc + 1]]
                        pc += 2
                    elif op == 8:    # OFFSETINT
                        accu = ((accu + 2 * code[pc + 1] + S) & M) - S
                        pc += 2
                    elif op == 2:    # PUSHACC
                        sp -= 1
                        w[sp] = accu
                        accu = w[sp + code[pc + 1]]
                        pc += 2
                    elif op == 3:    # POP
                        sp += code[pc + 1]
                        pc += 2
                    elif op == 4:    # ASSIGN
                        w[sp + code[pc + 1]] = accu
                        accu = UNIT
                        pc += 2
                    elif op == 7:    # ATOM
                        accu = atoms + 8 * code[pc + 1] + 8
                        pc += 2
                    elif op == 9:    # NEGINT
                        accu = ((2 - accu + S) & M) - S
                        pc += 1
                    else:            # BOOLNOT
                        accu = 4 - accu
                        pc += 1
                else:
                    # integer arithmetic and comparisons
                    if op == 11:     # ADDINT
                        accu = ((accu + w[sp] - 1 + S) & M) - S
                        sp += 1
                        pc += 1
                    elif op == 12:   # SUBINT
                        accu = ((accu - w[sp] + 1 + S) & M) - S
                        sp += 1
                        pc += 1
                    elif op == 24:   # LTINT
                        accu = 3 if accu < w[sp] else 1
                        sp += 1
                        pc += 1
                    elif op == 25:   # LEINT
                        accu = 3 if accu <= w[sp] else 1
                        sp += 1
                        pc += 1
                    elif op == 22:   # EQ
                        accu = 3 if accu == w[sp] else 1
                        sp += 1
                        pc += 1
                    elif op == 26:   # GTINT
                        accu = 3 if accu > w[sp] else 1
                        sp += 1
                        pc += 1
                    elif op == 27:   # GEINT
                        accu = 3 if accu >= w[sp] else 1
                        sp += 1
                        pc += 1
                    elif op == 23:   # NEQ
                        accu = 3 if accu != w[sp] else 1
                        sp += 1
                        pc += 1
                    elif op == 13:   # MULINT
                        accu = (((accu >> 1) * (w[sp] >> 1) * 2 + 1 + S) & M) - S
                        sp += 1
                        pc += 1
                    elif op == 16:   # ANDINT
                        accu &= w[sp]
                        sp += 1
                        pc += 1
                    elif op == 17:   # ORINT
                        accu |= w[sp]
                        sp += 1
                        pc += 1
                    elif op == 18:   # XORINT
                        accu = (accu ^ w[sp]) | 1
                        sp += 1
                        pc += 1
                    elif op == 19:   # LSLINT
                        s = (w[sp] >> 1) & 63
                        sp += 1
                        accu = (((((accu - 1) << s) | 1) + S) & M) - S
                        pc += 1
                    elif op == 20:   # LSRINT
                        s = (w[sp] >> 1) & 63
                        sp += 1
                        accu = (((accu & M) - 1) >> s) | 1
                        pc += 1
                    elif op == 21:   # ASRINT
                        s = (w[sp] >> 1) & 63
                        sp += 1
                        accu = ((accu - 1) >> s) | 1
                        pc += 1
                    elif op == 28:   # ISINT
                        accu = 3 if accu & 1 else 1
                        pc += 1
                    elif op == 14:   # DIVINT
                        d = w[sp] >> 1
                        sp += 1
                        if d == 0:
                            accu = atoms + 8 * EXN_DIVISION_BY_ZERO + 8
                            sync()
                            do_raise(vm, st)
                            reload()
                        else:
                            a = accu >> 1
                            q = abs(a) // abs(d)
                            if (a < 0) != (d < 0):
                                q = -q
                            accu = ((2 * q + 1 + S) & M) - S
                            pc += 1
                    else:            # MODINT
                        d = w[sp] >> 1
                        sp += 1
                        if d == 0:
                            accu = atoms + 8 * EXN_DIVISION_BY_ZERO + 8
                            sync()
                            do_raise(vm, st)
                            reload()
                        else:
                            a = accu >> 1
                            q = abs(a) // abs(d)
                            if (a < 0) != (d < 0):
                                q = -q
                            accu = 2 * (a - d * q) + 1
                            pc += 1
            elif op < 51:
                if op < 39:
                    # application, frames and allocation
                    if op == 29:     # APPLY
                        n = code[pc + 1]
                        if sp - 3 < guard_idx:
                            raise StackOverflow("value stack exhausted")
                        sp -= 3
                        for i in range(n):
                            w[sp + i] = w[sp + i + 3]
                        w[sp + n] = 2 * (pc + 2) + 1
                        w[sp + n + 1] = env
                        w[sp + n + 2] = 2 * extra + 1
                        extra = n - 1
                        env = accu
                        if accu & 1:
                            raise VMFault("apply of a non-closure value")
                        cw = w[(accu - base) >> 3]
                        if not cw & 1:
                            raise VMFault("closure code slot is not a bytecode index")
                        pc = cw >> 1
                    elif op == 31:   # RETURN
                        sp += code[pc + 1]
                        if extra > 0:
                            extra -= 1
                            env = accu
                            if accu & 1:
                                raise VMFault("apply of a non-closure value")
                            cw = w[(accu - base) >> 3]
                            if not cw & 1:
                                raise VMFault("closure code slot is not a bytecode index")
                            pc = cw >> 1
                        else:
                            pc = w[sp] >> 1
                            env = w[sp + 1]
                            extra = w[sp + 2] >> 1
                            sp += 3
                    elif op == 30:   # APPTERM
                        n = code[pc + 1]
                        newsp = sp + code[pc + 2] - n
                        for i in range(n - 1, -1, -1):
                            w[newsp + i] = w[sp + i]
                        sp = newsp
                        extra += n - 1
                        env = accu
                        if accu & 1:
                            raise VMFault("apply of a non-closure value")
                        cw = w[(accu - base) >> 3]
                        if not cw & 1:
                            raise VMFault("closure code slot is not a bytecode index")
                        pc = cw >> 1
                    elif op == 33:   # GRAB
                        n = code[pc + 1]
                        if extra >= n:
                            extra -= n
                            pc += 2
                        else:
                            sync()
                            grab_partial(vm, st, pc)
                            reload()
                    elif op == 34:   # CLOSURE
                        nvars = code[pc + 1]
                        if nvars > 0:
                            sp -= 1
                            w[sp] = accu
                        sync()
                        blk = heap.alloc_block(CLOSURE_TAG, 1 + nvars, st)
                        reload()
                        bi = (blk - base) >> 3
                        w[bi] = 2 * (pc + 2 + code[pc + 2]) + 1
                        for i in range(nvars):
                            w[bi + 1 + i] = w[sp + i]
                        sp += nvars
                        accu = blk
                        pc += 3
                    elif op == 36:   # OFFSETCLOSURE
                        accu = env + 8 * code[pc + 1]
                        pc += 2
                    elif op == 37:   # MAKEBLOCK
                        tag = code[pc + 1]
                        size = code[pc + 2]
                        sync()
                        blk = heap.alloc_block(tag, size, st)
                        reload()
                        bi = (blk - base) >> 3
                        w[bi] = accu
                        for i in range(1, size):
                            w[bi + i] = w[sp + i - 1]
                        sp += size - 1
                        if blk >= major_lo:
                            for i in range(size):
                                v = w[bi + i]
                                if (v & 1) == 0 and minor_lo <= v < minor_hi:
                                    heap.record_slot(blk + 8 * i)
                        accu = blk
                        pc += 3
                    elif op == 35:   # CLOSUREREC
                        sync()
                        closurerec(vm, st, code, pc)
                        reload()
                    elif op == 32:   # RESTART
                        sync()
                        do_restart(vm, st)
                        reload()
                        pc += 1
                    else:            # MAKEFLOATBLOCK
                        size = code[pc + 1]
                        sync()
                        blk = heap.alloc_block(254, size, st)
                        reload()
                        bi = (blk - base) >> 3
                        fmem[bi] = fmem[(accu - base) >> 3]
                        for i in range(1, size):
                            fmem[bi + i] = fmem[(w[sp + i - 1] - base) >> 3]
                        sp += size - 1
                        accu = blk
                        pc += 2
                else:
                    # field, global, string and vector access
                    if op == 42:     # GETFIELD
                        i = code[pc + 1]
                        bi = (accu - base) >> 3
                        if accu & 1 or not 0 <= i < (w[bi - 1] >> 10):
                            raise VMFault("GETFIELD out of bounds")
                        accu = w[bi + i]
                        pc += 2
                    elif op == 43:   # SETFIELD
                        i = code[pc + 1]
                        v = w[sp]
                        sp += 1
                        bi = (accu - base) >> 3
                        if accu & 1 or not 0 <= i < (w[bi - 1] >> 10):
                            raise VMFault("SETFIELD out of bounds")
                        w[bi + i] = v
                        if accu >= major_lo and (v & 1) == 0 and minor_lo <= v < minor_hi:
                            heap.record_slot(accu + 8 * i)
                        accu = UNIT
                        pc += 2
                    elif op == 49:   # GETVECTITEM
                        i = w[sp] >> 1
                        sp += 1
                        accu = w[((accu - base) >> 3) + i]
                        pc += 1
                    elif op == 50:   # SETVECTITEM
                        i = w[sp] >> 1
                        v = w[sp + 1]
                        sp += 2
                        bi = (accu - base) >> 3
                        w[bi + i] = v
                        if accu >= major_lo and (v & 1) == 0 and minor_lo <= v < minor_hi:
                            heap.record_slot(accu + 8 * i)
                        accu = UNIT
                        pc += 1
                    elif op == 39:   # GETGLOBAL
                        accu = w[glo + code[pc + 1]]
                        pc += 2
                    elif op == 48:   # VECTLENGTH
                        accu = 2 * (w[((accu - base) >> 3) - 1] >> 10) + 1
                        pc += 1
                    elif op == 40:   # SETGLOBAL
                        w[glo + code[pc + 1]] = accu
                        accu = UNIT
                        pc += 2
                    elif op == 41:   # GETGLOBALFIELD
                        g = w[glo + code[pc + 1]]
                        accu = w[((g - base) >> 3) + code[pc + 2]]
                        pc += 3
                    elif op == 44:   # GETFLOATFIELD
                        x = fmem[((accu - base) >> 3) + code[pc + 1]]
                        sync()
                        blk = heap.alloc_block(253, 1, st)
                        reload()
                        fmem[(blk - base) >> 3] = x
                        accu = blk
                        pc += 2
                    elif op == 45:   # SETFLOATFIELD
                        fmem[((accu - base) >> 3) + code[pc + 1]] = \
                            fmem[(w[sp] - base) >> 3]
                        sp += 1
                        accu = UNIT
                        pc += 2
                    elif op == 46:   # GETSTRINGCHAR
                        i = w[sp] >> 1
                        sp += 1
                        accu = 2 * bmem[accu - base + i] + 1
                        pc += 1
                    else:            # SETSTRINGCHAR
                        i = w[sp] >> 1
                        c = w[sp + 1] >> 1
                        sp += 2
                        bmem[accu - base + i] = c & 0xFF
                        accu = UNIT
                        pc += 1
            elif op < 61:
                # branches
                if op == 53:         # BRANCHIFNOT
                    if accu == 1:
                        pc = pc + 1 + code[pc + 1]
                    else:
                        pc += 2
                elif op == 51:       # BRANCH
                    pc = pc + 1 + code[pc + 1]
                elif op == 52:       # BRANCHIF
                    if accu != 1:
                        pc = pc + 1 + code[pc + 1]
                    else:
                        pc += 2
                elif op == 60:       # SWITCH
                    sizes = code[pc + 1]
                    p = sizes & 0xFFFF
                    if accu & 1:
                        idx = accu >> 1
                        if not 0 <= idx < p:
                            raise VMFault("SWITCH int index out of range")
                        pc = pc + 2 + code[pc + 2 + idx]
                    else:
                        tag = w[((accu - base) >> 3) - 1] & 0xFF
                        q = (sizes >> 16) & 0xFFFF
                        if not 0 <= tag < q:
                            raise VMFault("SWITCH tag out of range")
                        pc = pc + 2 + code[pc + 2 + p + tag]
                elif op == 54:       # BEQ
                    if 2 * code[pc + 1] + 1 == accu:
                        pc = pc + 2 + code[pc + 2]
                    else:
                        pc += 3
                elif op == 55:       # BNEQ
                    if 2 * code[pc + 1] + 1 != accu:
                        pc = pc + 2 + code[pc + 2]
                    else:
                        pc += 3
                elif op == 56:       # BLTINT
                    if 2 * code[pc + 1] + 1 < accu:
                        pc = pc + 2 + code[pc + 2]
                    else:
                        pc += 3
                elif op == 57:       # BLEINT
                    if 2 * code[pc + 1] + 1 <= accu:
                        pc = pc + 2 + code[pc + 2]
                    else:
                        pc += 3
                elif op == 58:       # BGTINT
                    if 2 * code[pc + 1] + 1 > accu:
                        pc = pc + 2 + code[pc + 2]
                    else:
                        pc += 3
                else:                # BGEINT
                    if 2 * code[pc + 1] + 1 >= accu:
                        pc = pc + 2 + code[pc + 2]
                    else:
                        pc += 3
            else:
                # traps, signals, primitives, stop
                if op == 64:         # CHECK_SIGNALS
                    if rec[rsig]:
                        sync()
                        check_signals(vm, st)
                        reload()
                    pc += 1
                elif op == 61:       # PUSHTRAP
                    sp -= 4
                    w[sp] = 2 * (pc + 1 + code[pc + 1]) + 1
                    w[sp + 1] = 2 * trap_sp + 1
                    w[sp + 2] = env
                    w[sp + 3] = 2 * extra + 1
                    trap_sp = sp
                    pc += 2
                elif op == 62:       # POPTRAP
                    trap_sp = w[sp + 1] >> 1
                    sp += 4
                    pc += 1
                elif op == 63:       # RAISE
                    sync()
                    do_raise(vm, st)
                    reload()
                elif op == 65:       # C_CALL
                    sync()
                    do_ccall(vm, st, code[pc + 1], code[pc + 2])
                    reload()
                elif op == 66:       # GETMETHOD
                    sync()
                    getmethod(vm, st)
                    reload()
                    pc += 1
                elif op == 67:       # STOP
                    break
                else:
                    raise VMFault("invalid opcode %d at %d" % (op, pc))
    finally:
        st.accu = accu
        st.env = env
        st.sp = sp
        st.extra_args = extra
        st.pc = pc
        st.trap_sp = trap_sp
        vm.counters["instructions"] = steps
        vm.counters["dispatches"] = steps
    return accu


# --- the threaded interpreter ---

def thread_code(seg, handlers):
    """Replace each opcode word with its handler displacement.

    The displacement is the handler's table index plus THREAD_BASE, so a
    threaded word w dispatches as handlers[w - THREAD_BASE]; displaced
    words can never be mistaken for raw opcodes.
    """
    if seg.mode != MODE_COLD:
        raise AlreadyThreaded("segment is already %s" % seg.mode)
    if len(handlers) < isa.NUM_OPCODES:
        raise ValueError("handler table does not cover the ISA")
    for at, instr in seg.decode_all(pristine=True):
        seg.words[at] = instr.opcode + THREAD_BASE
    seg.mode = MODE_THREADED


def _build_handlers():
    """One handler per opcode; each receives (vm, st, code, w)."""
    H = [None] * isa.NUM_OPCODES

    def handler(op):
        def deco(fn):
            H[op] = fn
            return fn
        return deco

    def h_simple(op, fn):
        H[op] = fn

    @handler(isa.ACC)
    def _acc(vm, st, code, w):
        st.accu = w[st.sp + code[st.pc + 1]]
        st.pc += 2

    @handler(isa.PUSH)
    def _push(vm, st, code, w):
        st.sp -= 1
        w[st.sp] = st.accu
        st.pc += 1

    @handler(isa.PUSHACC)
    def _pushacc(vm, st, code, w):
        st.sp -= 1
        w[st.sp] = st.accu
        st.accu = w[st.sp + code[st.pc + 1]]
        st.pc += 2

    @handler(isa.POP)
    def _pop(vm, st, code, w):
        st.sp += code[st.pc + 1]
        st.pc += 2

    @handler(isa.ASSIGN)
    def _assign(vm, st, code, w):
        w[st.sp + code[st.pc + 1]] = st.accu
        st.accu = UNIT
        st.pc += 2

    @handler(isa.ENVACC)
    def _envacc(vm, st, code, w):
        st.accu = vm.heap.field(st.env, code[st.pc + 1])
        st.pc += 2

    @handler(isa.CONSTINT)
    def _constint(vm, st, code, w):
        st.accu = 2 * code[st.pc + 1] + 1
        st.pc += 2

    @handler(isa.ATOM)
    def _atom(vm, st, code, w):
        st.accu = vm.heap.atom(code[st.pc + 1])
        st.pc += 2

    @handler(isa.OFFSETINT)
    def _offsetint(vm, st, code, w):
        st.accu = _wrap(st.accu + 2 * code[st.pc + 1])
        st.pc += 2

    @handler(isa.NEGINT)
    def _negint(vm, st, code, w):
        st.accu = _wrap(2 - st.accu)
        st.pc += 1

    @handler(isa.BOOLNOT)
    def _boolnot(vm, st, code, w):
        st.accu = 4 - st.accu
        st.pc += 1

    def _binint(fn):
        def go(vm, st, code, w):
            st.accu = fn(st.accu, w[st.sp])
            st.sp += 1
            st.pc += 1
        return go

    def _div_or_mod(want_mod):
        def go(vm, st, code, w):
            d = w[st.sp] >> 1
            st.sp += 1
            if d == 0:
                st.accu = vm.heap.atom(EXN_DIVISION_BY_ZERO)
                do_raise(vm, st)
                return
            a = st.accu >> 1
            q = abs(a) // abs(d)
            if (a < 0) != (d < 0):
                q = -q
            st.accu = _wrap(2 * (a - d * q if want_mod else q) + 1)
            st.pc += 1
        return go

    h_simple(isa.ADDINT, _binint(lambda a, b: _wrap(a + b - 1)))
    h_simple(isa.SUBINT, _binint(lambda a, b: _wrap(a - b + 1)))
    h_simple(isa.MULINT, _binint(lambda a, b: _wrap((a >> 1) * (b >> 1) * 2 + 1)))
    h_simple(isa.DIVINT, _div_or_mod(False))
    h_simple(isa.MODINT, _div_or_mod(True))
    h_simple(isa.ANDINT, _binint(lambda a, b: a & b))
    h_simple(isa.ORINT, _binint(lambda a, b: a | b))
    h_simple(isa.XORINT, _binint(lambda a, b: (a ^ b) | 1))
    h_simple(isa.LSLINT, _binint(
        lambda a, b: _wrap(((a - 1) << ((b >> 1) & 63)) | 1)))
    h_simple(isa.LSRINT, _binint(
        lambda a, b: (((a & MASK64) - 1) >> ((b >> 1) & 63)) | 1))
    h_simple(isa.ASRINT, _binint(lambda a, b: ((a - 1) >> ((b >> 1) & 63)) | 1))
    h_simple(isa.EQ, _binint(lambda a, b: 3 if a == b else 1))
    h_simple(isa.NEQ, _binint(lambda a, b: 3 if a != b else 1))
    h_simple(isa.LTINT, _binint(lambda a, b: 3 if a < b else 1))
    h_simple(isa.LEINT, _binint(lambda a, b: 3 if a <= b else 1))
    h_simple(isa.GTINT, _binint(lambda a, b: 3 if a > b else 1))
    h_simple(isa.GEINT, _binint(lambda a, b: 3 if a >= b else 1))

    @handler(isa.ISINT)
    def _isint(vm, st, code, w):
        st.accu = 3 if st.accu & 1 else 1
        st.pc += 1

    @handler(isa.APPLY)
    def _apply(vm, st, code, w):
        apply_closure(vm, st, code[st.pc + 1], st.pc + 2)

    @handler(isa.APPTERM)
    def _appterm(vm, st, code, w):
        appterm(vm, st, code[st.pc + 1], code[st.pc + 2])

    @handler(isa.RETURN)
    def _return(vm, st, code, w):
        do_return(vm, st, code[st.pc + 1])

    @handler(isa.RESTART)
    def _restart(vm, st, code, w):
        do_restart(vm, st)
        st.pc += 1

    @handler(isa.GRAB)
    def _grab(vm, st, code, w):
        n = code[st.pc + 1]
        if st.extra_args >= n:
            st.extra_args -= n
            st.pc += 2
        else:
            grab_partial(vm, st, st.pc)

    @handler(isa.CLOSURE)
    def _closure(vm, st, code, w):
        heap = vm.heap
        nvars = code[st.pc + 1]
        if nvars > 0:
            st.sp -= 1
            w[st.sp] = st.accu
        blk = heap.alloc_block(CLOSURE_TAG, 1 + nvars, st)
        heap.set_field_raw(blk, 0, val_of_int(st.pc + 2 + code[st.pc + 2]))
        for i in range(nvars):
            heap.set_field_raw(blk, 1 + i, w[st.sp + i])
        st.sp += nvars
        st.accu = blk
        st.pc += 3

    @handler(isa.CLOSUREREC)
    def _closurerec(vm, st, code, w):
        closurerec(vm, st, code, st.pc)

    @handler(isa.OFFSETCLOSURE)
    def _offsetclosure(vm, st, code, w):
        st.accu = st.env + 8 * code[st.pc + 1]
        st.pc += 2

    @handler(isa.MAKEBLOCK)
    def _makeblock(vm, st, code, w):
        heap = vm.heap
        tag = code[st.pc + 1]
        size = code[st.pc + 2]
        blk = heap.alloc_block(tag, size, st)
        heap.set_field_raw(blk, 0, st.accu)
        for i in range(1, size):
            heap.set_field_raw(blk, i, w[st.sp + i - 1])
        st.sp += size - 1
        if blk >= heap.major_lo:
            for i in range(size):
                v = heap.field(blk, i)
                if heap.is_minor(v):
                    heap.record_slot(blk + 8 * i)
        st.accu = blk
        st.pc += 3

    @handler(isa.MAKEFLOATBLOCK)
    def _makefloatblock(vm, st, code, w):
        heap = vm.heap
        size = code[st.pc + 1]
        blk = heap.alloc_block(254, size, st)
        f = heap.mem.f
        f[heap.mem.widx(blk)] = heap.unbox_float(st.accu)
        for i in range(1, size):
            f[heap.mem.widx(blk) + i] = heap.unbox_float(w[st.sp + i - 1])
        st.sp += size - 1
        st.accu = blk
        st.pc += 2

    @handler(isa.GETGLOBAL)
    def _getglobal(vm, st, code, w):
        st.accu = w[vm.globals_lo_idx + code[st.pc + 1]]
        st.pc += 2

    @handler(isa.SETGLOBAL)
    def _setglobal(vm, st, code, w):
        w[vm.globals_lo_idx + code[st.pc + 1]] = st.accu
        st.accu = UNIT
        st.pc += 2

    @handler(isa.GETGLOBALFIELD)
    def _getglobalfield(vm, st, code, w):
        g = w[vm.globals_lo_idx + code[st.pc + 1]]
        st.accu = vm.heap.field(g, code[st.pc + 2])
        st.pc += 3

    @handler(isa.GETFIELD)
    def _getfield(vm, st, code, w):
        heap = vm.heap
        i = code[st.pc + 1]
        if st.accu & 1 or not (0 <= i < heap.block_wosize(st.accu)):
            raise VMFault("GETFIELD out of bounds")
        st.accu = heap.field(st.accu, i)
        st.pc += 2

    @handler(isa.SETFIELD)
    def _setfield(vm, st, code, w):
        v = w[st.sp]
        st.sp += 1
        vm.heap.set_field(st.accu, code[st.pc + 1], v)
        st.accu = UNIT
        st.pc += 2

    @handler(isa.GETFLOATFIELD)
    def _getfloatfield(vm, st, code, w):
        heap = vm.heap
        x = heap.mem.f[heap.mem.widx(st.accu) + code[st.pc + 1]]
        blk = heap.alloc_block(253, 1, st)
        heap.mem.f[heap.mem.widx(blk)] = x
        st.accu = blk
        st.pc += 2

    @handler(isa.SETFLOATFIELD)
    def _setfloatfield(vm, st, code, w):
        heap = vm.heap
        x = heap.unbox_float(w[st.sp])
        st.sp += 1
        heap.mem.f[heap.mem.widx(st.accu) + code[st.pc + 1]] = x
        st.accu = UNIT
        st.pc += 2

    @handler(isa.GETSTRINGCHAR)
    def _getstringchar(vm, st, code, w):
        i = w[st.sp] >> 1
        st.sp += 1
        st.accu = val_of_int(vm.mem.b[st.accu - vm.mem.base + i])
        st.pc += 1

    @handler(isa.SETSTRINGCHAR)
    def _setstringchar(vm, st, code, w):
        i = w[st.sp] >> 1
        c = w[st.sp + 1] >> 1
        st.sp += 2
        vm.mem.b[st.accu - vm.mem.base + i] = c & 0xFF
        st.accu = UNIT
        st.pc += 1

    @handler(isa.VECTLENGTH)
    def _vectlength(vm, st, code, w):
        st.accu = val_of_int(vm.heap.block_wosize(st.accu))
        st.pc += 1

    @handler(isa.GETVECTITEM)
    def _getvectitem(vm, st, code, w):
        i = w[st.sp] >> 1
        st.sp += 1
        st.accu = vm.heap.field(st.accu, i)
        st.pc += 1

    @handler(isa.SETVECTITEM)
    def _setvectitem(vm, st, code, w):
        i = w[st.sp] >> 1
        v = w[st.sp + 1]
        st.sp += 2
        vm.heap.set_field(st.accu, i, v)
        st.accu = UNIT
        st.pc += 1

    @handler(isa.BRANCH)
    def _branch(vm, st, code, w):
        st.pc = st.pc + 1 + code[st.pc + 1]

    @handler(isa.BRANCHIF)
    def _branchif(vm, st, code, w):
        if st.accu != 1:
            st.pc = st.pc + 1 + code[st.pc + 1]
        else:
            st.pc += 2

    @handler(isa.BRANCHIFNOT)
    def _branchifnot(vm, st, code, w):
        if st.accu == 1:
            st.pc = st.pc + 1 + code[st.pc + 1]
        else:
            st.pc += 2

    def _cmp_branch(test):
        def go(vm, st, code, w):
            if test(2 * code[st.pc + 1] + 1, st.accu):
                st.pc = st.pc + 2 + code[st.pc + 2]
            else:
                st.pc += 3
        return go

    h_simple(isa.BEQ, _cmp_branch(lambda c, a: c == a))
    h_simple(isa.BNEQ, _cmp_branch(lambda c, a: c != a))
    h_simple(isa.BLTINT, _cmp_branch(lambda c, a: c < a))
    h_simple(isa.BLEINT, _cmp_branch(lambda c, a: c <= a))
    h_simple(isa.BGTINT, _cmp_branch(lambda c, a: c > a))
    h_simple(isa.BGEINT, _cmp_branch(lambda c, a: c >= a))

    @handler(isa.SWITCH)
    def _switch(vm, st, code, w):
        pc = st.pc
        sizes = code[pc + 1]
        p = sizes & 0xFFFF
        q = (sizes >> 16) & 0xFFFF
        if st.accu & 1:
            idx = st.accu >> 1
            if not (0 <= idx < p):
                raise VMFault("SWITCH int index out of range")
            st.pc = pc + 2 + code[pc + 2 + idx]
        else:
            tag = vm.heap.block_tag(st.accu)
            if not (0 <= tag < q):
                raise VMFault("SWITCH tag out of range")
            st.pc = pc + 2 + code[pc + 2 + p + tag]

    @handler(isa.PUSHTRAP)
    def _pushtrap(vm, st, code, w):
        st.sp -= 4
        w[st.sp] = val_of_int(st.pc + 1 + code[st.pc + 1])
        w[st.sp + 1] = val_of_int(st.trap_sp)
        w[st.sp + 2] = st.env
        w[st.sp + 3] = val_of_int(st.extra_args)
        st.trap_sp = st.sp
        st.pc += 2

    @handler(isa.POPTRAP)
    def _poptrap(vm, st, code, w):
        st.trap_sp = w[st.sp + 1] >> 1
        st.sp += 4
        st.pc += 1

    @handler(isa.RAISE)
    def _raise(vm, st, code, w):
        do_raise(vm, st)

    @handler(isa.CHECK_SIGNALS)
    def _check_signals(vm, st, code, w):
        check_signals(vm, st)
        st.pc += 1

    @handler(isa.C_CALL)
    def _ccall(vm, st, code, w):
        do_ccall(vm, st, code[st.pc + 1], code[st.pc + 2])

    @handler(isa.GETMETHOD)
    def _getmethod(vm, st, code, w):
        getmethod(vm, st)
        st.pc += 1

    @handler(isa.STOP)
    def _stop(vm, st, code, w):
        raise _Stop()

    assert all(h is not None for h in H)
    return H


HANDLERS = _build_handlers()


def _threaded_loop(vm, st, seg, budget):
    code = seg.words
    w = vm.mem.w
    handlers = HANDLERS
    base = -THREAD_BASE
    steps = 0
    try:
        while True:
            steps += 1
            if budget and steps > budget:
                raise StepBudgetExceeded("interpreter step budget")
            handlers[code[st.pc] + base](vm, st, code, w)
    except _Stop:
        pass
    finally:
        vm.counters["instructions"] = steps
        vm.counters["dispatches"] = steps
    return st.accu


# --- entry point ---

def interpret(seg, mode="switch", config=None, vm=None):
    """Run a segment from word 0; returns a RunResult."""
    from .machine import Config
    from .errors import OutOfMemory
    cfg = config or Config()
    diags = validate(seg)
    if diags:
        raise VMFault("segment does not validate: %s" % (diags[:3],))
    own_vm = vm is None
    if own_vm:
        vm = VM(seg, cfg)
    st = vm.new_state()
    budget = cfg.step_budget
    status, value, exn = "done", None, None
    try:
        if mode == "threaded":
            if seg.mode == MODE_COLD:
                thread_code(seg, HANDLERS)
            elif seg.mode != MODE_THREADED:
                raise AlreadyThreaded("segment already used by %s" % seg.mode)
            value = _threaded_loop(vm, st, seg, budget)
        else:
            value = _switch_loop(vm, st, seg, budget)
    except UncaughtException as exc:
        status, exn = "uncaught", exc.value
    except VMFault:
        status = "fault"
    except StackOverflow:
        status = "stack_overflow"
    except OutOfMemory:
        status = "oom"
    except StepBudgetExceeded:
        status = "step_budget"
    result = RunResult(
        engine=mode,
        status=status,
        value=value,
        value_render=render_value(vm.heap, value) if value is not None else "",
        exn_render=render_value(vm.heap, exn) if exn is not None else "",
        output="".join(vm.output),
        counters=vm.base_counters(),
    )
    if own_vm:
        vm.close()
    return result
