"""Instruction set: opcode numbering, operand arities, word encoding.

Every instruction is one opcode word followed by its operand words, all
signed 32 bits.  Branch-class operands are relative to the word position
of the operand itself, so code is position independent.  SWITCH packs
the int-arm count in the low 16 bits of its first operand and the
tag-arm count in the high 16 bits, followed by the arm offsets (relative
to the first arm word).  CLOSUREREC's code offsets are all relative to
the word holding the first one.
"""

from .errors import BadOpcode, OperandOverflow

I32_MIN = -(1 << 31)
I32_MAX = (1 << 31) - 1

_SPEC = [
    # (mnemonic, operand count; -1 = counted table)
    ("ACC", 1), ("PUSH", 0), ("PUSHACC", 1), ("POP", 1), ("ASSIGN", 1),
    ("ENVACC", 1), ("CONSTINT", 1), ("ATOM", 1), ("OFFSETINT", 1),
    ("NEGINT", 0), ("BOOLNOT", 0),
    ("ADDINT", 0), ("SUBINT", 0), ("MULINT", 0), ("DIVINT", 0), ("MODINT", 0),
    ("ANDINT", 0), ("ORINT", 0), ("XORINT", 0),
    ("LSLINT", 0), ("LSRINT", 0), ("ASRINT", 0),
    ("EQ", 0), ("NEQ", 0), ("LTINT", 0), ("LEINT", 0), ("GTINT", 0),
    ("GEINT", 0), ("ISINT", 0),
    ("APPLY", 1), ("APPTERM", 2), ("RETURN", 1), ("RESTART", 0), ("GRAB", 1),
    ("CLOSURE", 2), ("CLOSUREREC", -1), ("OFFSETCLOSURE", 1),
    ("MAKEBLOCK", 2), ("MAKEFLOATBLOCK", 1),
    ("GETGLOBAL", 1), ("SETGLOBAL", 1), ("GETGLOBALFIELD", 2),
    ("GETFIELD", 1), ("SETFIELD", 1),
    ("GETFLOATFIELD", 1), ("SETFLOATFIELD", 1),
    ("GETSTRINGCHAR", 0), ("SETSTRINGCHAR", 0),
    ("VECTLENGTH", 0), ("GETVECTITEM", 0), ("SETVECTITEM", 0),
    ("BRANCH", 1), ("BRANCHIF", 1), ("BRANCHIFNOT", 1),
    ("BEQ", 2), ("BNEQ", 2), ("BLTINT", 2), ("BLEINT", 2),
    ("BGTINT", 2), ("BGEINT", 2),
    ("SWITCH", -1),
    ("PUSHTRAP", 1), ("POPTRAP", 0), ("RAISE", 0), ("CHECK_SIGNALS", 0),
    ("C_CALL", 2), ("GETMETHOD", 0), ("STOP", 0),
]

NUM_OPCODES = len(_SPEC)
assert NUM_OPCODES <= 146

MNEMONICS = [name for name, _ in _SPEC]
ARITY = [n for _, n in _SPEC]
OPCODE = {name: i for i, (name, _) in enumerate(_SPEC)}

(ACC, PUSH, PUSHACC, POP, ASSIGN, ENVACC, CONSTINT, ATOM, OFFSETINT,
 NEGINT, BOOLNOT, ADDINT, SUBINT, MULINT, DIVINT, MODINT, ANDINT, ORINT,
 XORINT, LSLINT, LSRINT, ASRINT, EQ, NEQ, LTINT, LEINT, GTINT, GEINT,
 ISINT, APPLY, APPTERM, RETURN, RESTART, GRAB, CLOSURE, CLOSUREREC,
 OFFSETCLOSURE, MAKEBLOCK, MAKEFLOATBLOCK, GETGLOBAL, SETGLOBAL,
 GETGLOBALFIELD, GETFIELD, SETFIELD, GETFLOATFIELD, SETFLOATFIELD,
 GETSTRINGCHAR, SETSTRINGCHAR, VECTLENGTH, GETVECTITEM, SETVECTITEM,
 BRANCH, BRANCHIF, BRANCHIFNOT, BEQ, BNEQ, BLTINT, BLEINT, BGTINT,
 BGEINT, SWITCH, PUSHTRAP, POPTRAP, RAISE, CHECK_SIGNALS, C_CALL,
 GETMETHOD, STOP) = range(NUM_OPCODES)

# instructions whose last operand(s) are branch offsets
_BRANCH_OPS = {OPCODE[m] for m in
               ("BRANCH", "BRANCHIF", "BRANCHIFNOT",
                "BEQ", "BNEQ", "BLTINT", "BLEINT", "BGTINT", "BGEINT",
                "PUSHTRAP")}

BLOCK_ENDERS = {OPCODE[m] for m in
                ("STOP", "RETURN", "APPTERM", "RAISE", "BRANCH", "SWITCH")}


class Instr:
    __slots__ = ("opcode", "operands")

    def __init__(self, opcode, operands=()):
        self.opcode = opcode
        self.operands = list(operands)

    @property
    def mnemonic(self):
        return MNEMONICS[self.opcode]

    def __eq__(self, other):
        return (isinstance(other, Instr) and self.opcode == other.opcode
                and self.operands == other.operands)

    def __repr__(self):
        return "Instr(%s, %r)" % (self.mnemonic, self.operands)


def instruction_set():
    """The full ISA as (mnemonic, opcode, arity) rows; -1 = counted table."""
    return [(name, i, n) for i, (name, n) in enumerate(_SPEC)]


def _check_i32(x):
    if not (I32_MIN <= x <= I32_MAX):
        raise OperandOverflow("operand %d does not fit in 32 bits" % x)
    return x


def encode(instr):
    """Instruction -> list of 32-bit words."""
    op = instr.opcode
    if not (0 <= op < NUM_OPCODES):
        raise BadOpcode("bad opcode %d" % op)
    ops = instr.operands
    if op == OPCODE["SWITCH"]:
        if not ops:
            raise OperandOverflow("SWITCH needs its size word")
        p = ops[0] & 0xFFFF
        q = (ops[0] >> 16) & 0xFFFF
        if len(ops) != 1 + p + q:
            raise OperandOverflow("SWITCH table length mismatch")
    elif op == OPCODE["CLOSUREREC"]:
        if len(ops) < 2 or len(ops) != 2 + ops[0]:
            raise OperandOverflow("CLOSUREREC table length mismatch")
    elif len(ops) != ARITY[op]:
        raise OperandOverflow("%s takes %d operands, got %d"
                              % (instr.mnemonic, ARITY[op], len(ops)))
    return [op] + [_check_i32(x) for x in ops]


def decode(words, at):
    """(Instr, next index).  Inverse of encode."""
    n = len(words)
    if at < 0 or at >= n:
        raise BadOpcode("decode index %d out of bounds" % at)
    op = words[at]
    if not (0 <= op < NUM_OPCODES):
        raise BadOpcode("word %d at index %d is not an opcode" % (op, at))
    if op == OPCODE["SWITCH"]:
        if at + 1 >= n:
            raise BadOpcode("truncated SWITCH at %d" % at)
        sizes = words[at + 1]
        p = sizes & 0xFFFF
        q = (sizes >> 16) & 0xFFFF
        count = 1 + p + q
    elif op == OPCODE["CLOSUREREC"]:
        if at + 2 >= n or words[at + 1] < 0:
            raise BadOpcode("truncated CLOSUREREC at %d" % at)
        count = 2 + words[at + 1]
    else:
        count = ARITY[op]
    if at + 1 + count > n:
        raise BadOpcode("truncated %s at %d" % (MNEMONICS[op], at))
    return Instr(op, [words[at + i] for i in range(1, count + 1)]), at + 1 + count


def instr_len(instr):
    return len(encode(instr))


def branch_targets(instr, at):
    """Absolute word indices this instruction may jump to.

    ``at`` is the instruction's own word index.  This is the single
    source of truth for the relative-offset rules, used by the
    assembler, disassembler, validator and the JIT alike.
    """
    op = instr.opcode
    ops = instr.operands
    if op in _BRANCH_OPS:
        k = len(ops) - 1          # offset is the last operand
        return [at + 1 + k + ops[k]]
    if op == OPCODE["SWITCH"]:
        base = at + 2             # first table word
        return [base + ops[1 + i] for i in range(len(ops) - 1)]
    return []


def closure_code_targets(instr, at):
    """Word indices of function bodies referenced by closure allocation."""
    op = instr.opcode
    ops = instr.operands
    if op == OPCODE["CLOSURE"]:
        return [at + 2 + ops[1]]
    if op == OPCODE["CLOSUREREC"]:
        base = at + 3             # word holding the first code offset
        return [base + ops[2 + i] for i in range(ops[0])]
    return []
