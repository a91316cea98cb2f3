"""Textual assembly for bytecode segments.

One instruction per line; ``name:`` defines a label.  Branch-class
operands, closure code operands and SWITCH arms may be labels or raw
relative offsets.  Directives:

    .global int <n>        .global string "..."       .global unit
    .string "..."          (shorthand for .global string)
    .prim <name>

SWITCH is written ``SWITCH p q arm...`` (p int arms then q tag arms);
CLOSUREREC is written ``CLOSUREREC p q body1 ... bodyp``.
A final STOP is appended when the source does not end with one.
"""

import re

from . import isa
from .errors import (AsmError, BadOpcode, DuplicateLabel, SyntaxError_,
                     UndefinedLabel)
from .segment import (GLOB_INT, GLOB_STRING, GLOB_UNIT, MODE_COLD, Segment)

_LABEL_RE = re.compile(r"^[A-Za-z_.$][A-Za-z0-9_.$]*$")
_STRING_RE = re.compile(r'"((?:[^"\\]|\\.)*)"')

_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", '"': '"', "\\": "\\", "0": "\0"}


def _unescape(s):
    out = []
    i = 0
    while i < len(s):
        c = s[i]
        if c == "\\" and i + 1 < len(s):
            out.append(_ESCAPES.get(s[i + 1], s[i + 1]))
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


def _tokenize(line):
    line = line.split(";")[0].split("#")[0].strip()
    if not line:
        return []
    # protect string literals from whitespace splitting
    parts = []
    pos = 0
    for m in _STRING_RE.finditer(line):
        parts.extend(line[pos:m.start()].split())
        parts.append(("str", _unescape(m.group(1))))
        pos = m.end()
    parts.extend(line[pos:].split())
    return parts


class _Pending:
    """An instruction whose label operands still need resolution."""

    def __init__(self, at, opcode, operands, fixups, lineno):
        self.at = at
        self.opcode = opcode
        self.operands = operands    # ints; label slots hold None
        self.fixups = fixups        # (operand index, label, base word index)
        self.lineno = lineno


def _operand_layout(opcode, nops):
    """For each operand: (may_be_label, base offset of the word it is
    resolved against, relative to the instruction start)."""
    layout = []
    for j in range(nops):
        layout.append((False, None))
    if opcode in (isa.BRANCH, isa.BRANCHIF, isa.BRANCHIFNOT, isa.PUSHTRAP):
        layout[0] = (True, 1)
    elif opcode in (isa.BEQ, isa.BNEQ, isa.BLTINT, isa.BLEINT,
                    isa.BGTINT, isa.BGEINT):
        layout[1] = (True, 2)
    elif opcode == isa.CLOSURE:
        layout[1] = (True, 2)
    elif opcode == isa.CLOSUREREC:
        for j in range(2, nops):
            layout[j] = (True, 3)   # all relative to the first code word
    elif opcode == isa.SWITCH:
        for j in range(2, nops):
            layout[j] = (True, 2)   # written p q arms...; arms vs table start
    return layout


def assemble(text):
    """Assembly source -> Segment."""
    labels = {}
    pendings = []
    globals_ = []
    prims = []
    word_count = 0

    for lineno, raw in enumerate(text.splitlines(), start=1):
        toks = _tokenize(raw)
        while toks and isinstance(toks[0], str) and toks[0].endswith(":"):
            name = toks[0][:-1]
            if not _LABEL_RE.match(name):
                raise SyntaxError_("bad label %r" % name, lineno)
            if name in labels:
                raise DuplicateLabel("duplicate label %r" % name, lineno)
            labels[name] = word_count
            toks = toks[1:]
        if not toks:
            continue
        head = toks[0]
        if not isinstance(head, str):
            raise SyntaxError_("unexpected string literal", lineno)

        if head == ".global":
            if len(toks) == 3 and toks[1] == "int" and isinstance(toks[2], str):
                try:
                    globals_.append((GLOB_INT, int(toks[2])))
                except ValueError:
                    raise SyntaxError_("bad .global int value", lineno) from None
            elif len(toks) >= 2 and toks[1] == "string":
                if len(toks) < 3 or not isinstance(toks[2], tuple):
                    raise SyntaxError_(".global string needs a literal", lineno)
                globals_.append((GLOB_STRING, toks[2][1].encode("utf-8")))
            elif len(toks) >= 2 and toks[1] == "unit":
                globals_.append((GLOB_UNIT, None))
            else:
                raise SyntaxError_("bad .global directive", lineno)
            continue
        if head == ".string":
            if len(toks) < 2 or not isinstance(toks[1], tuple):
                raise SyntaxError_(".string needs a literal", lineno)
            globals_.append((GLOB_STRING, toks[1][1].encode("utf-8")))
            continue
        if head == ".prim":
            if len(toks) != 2 or not isinstance(toks[1], str):
                raise SyntaxError_(".prim needs a name", lineno)
            prims.append(toks[1])
            continue
        if head.startswith("."):
            raise SyntaxError_("unknown directive %s" % head, lineno)

        mnem = head.upper()
        if mnem not in isa.OPCODE:
            raise SyntaxError_("unknown instruction %r" % head, lineno)
        opcode = isa.OPCODE[mnem]
        args = toks[1:]
        if opcode == isa.SWITCH:
            if len(args) < 2:
                raise SyntaxError_("SWITCH needs p and q", lineno)
            p, q = int(args[0]), int(args[1])
            if len(args) != 2 + p + q:
                raise SyntaxError_("SWITCH expects %d arms" % (p + q), lineno)
        elif opcode == isa.CLOSUREREC:
            if len(args) < 2:
                raise SyntaxError_("CLOSUREREC needs p and q", lineno)
            if len(args) != 2 + int(args[0]):
                raise SyntaxError_("CLOSUREREC expects %s bodies" % args[0], lineno)
        elif len(args) != isa.ARITY[opcode]:
            raise SyntaxError_("%s takes %d operands" % (mnem, isa.ARITY[opcode]),
                               lineno)

        layout = _operand_layout(opcode, len(args))
        operands = []
        fixups = []
        for j, a in enumerate(args):
            may_label, base = layout[j]
            if isinstance(a, tuple):
                raise SyntaxError_("string literal as operand", lineno)
            if may_label and not re.match(r"^-?\d+$", a):
                if not _LABEL_RE.match(a):
                    raise SyntaxError_("bad operand %r" % a, lineno)
                operands.append(None)
                fixups.append((j, a, base))
            else:
                try:
                    operands.append(int(a))
                except ValueError:
                    raise SyntaxError_("bad operand %r" % a, lineno) from None
        pendings.append(_Pending(word_count, opcode, operands, fixups, lineno))
        if opcode == isa.SWITCH:
            word_count += 1 + len(operands) - 1   # p and q pack into one word
        else:
            word_count += 1 + len(operands)

    if not pendings or pendings[-1].opcode != isa.STOP:
        pendings.append(_Pending(word_count, isa.STOP, [], [], 0))
        word_count += 1

    words = []
    for p in pendings:
        for j, label, base in p.fixups:
            if label not in labels:
                raise UndefinedLabel("undefined label %r" % label, p.lineno)
            if p.opcode == isa.SWITCH:
                anchor = p.at + 2
            elif p.opcode == isa.CLOSUREREC:
                anchor = p.at + 3
            else:
                anchor = p.at + base
            p.operands[j] = labels[label] - anchor
        ops = list(p.operands)
        if p.opcode == isa.SWITCH:
            ops = [ops[0] | (ops[1] << 16)] + ops[2:]
        words.extend(isa.encode(isa.Instr(p.opcode, ops)))
    assert len(words) == word_count
    return Segment(words, globals_, prims)


def disassemble(seg, pristine=False):
    """Segment -> assembly text; round-trips through assemble bit-exactly."""
    if seg.mode != MODE_COLD and not pristine:
        raise BadOpcode("segment words were mutated by %s; disassemble the "
                        "pristine copy" % seg.mode)
    instrs = seg.decode_all(pristine=pristine)
    targets = set()
    for at, instr in instrs:
        targets.update(isa.branch_targets(instr, at))
        targets.update(isa.closure_code_targets(instr, at))
    names = {t: "L%d" % n for n, t in enumerate(sorted(targets))}

    lines = []
    for kind, payload in seg.globals:
        if kind == GLOB_INT:
            lines.append(".global int %d" % payload)
        elif kind == GLOB_STRING:
            text = payload.decode("utf-8")
            text = text.replace("\\", "\\\\").replace('"', '\\"')
            text = text.replace("\n", "\\n").replace("\t", "\\t")
            lines.append('.global string "%s"' % text)
        else:
            lines.append(".global unit")
    for name in seg.prims:
        lines.append(".prim %s" % name)

    for at, instr in instrs:
        if at in names:
            lines.append("%s:" % names[at])
        op = instr.opcode
        if op == isa.SWITCH:
            p = instr.operands[0] & 0xFFFF
            q = (instr.operands[0] >> 16) & 0xFFFF
            arms = [names[t] for t in isa.branch_targets(instr, at)]
            lines.append("    SWITCH %d %d %s" % (p, q, " ".join(arms)))
        elif op == isa.CLOSUREREC:
            bodies = [names[t] for t in isa.closure_code_targets(instr, at)]
            lines.append("    CLOSUREREC %d %d %s"
                         % (instr.operands[0], instr.operands[1], " ".join(bodies)))
        elif op == isa.CLOSURE:
            tgt = isa.closure_code_targets(instr, at)[0]
            lines.append("    CLOSURE %d %s" % (instr.operands[0], names[tgt]))
        elif isa.branch_targets(instr, at):
            tgt = isa.branch_targets(instr, at)[0]
            front = " ".join(str(x) for x in instr.operands[:-1])
            sep = " " if front else ""
            lines.append("    %s %s%s%s" % (instr.mnemonic, front, sep, names[tgt]))
        else:
            ops = " ".join(str(x) for x in instr.operands)
            sep = " " if ops else ""
            lines.append("    %s%s%s" % (instr.mnemonic, sep, ops))
    return "\n".join(lines) + "\n"
