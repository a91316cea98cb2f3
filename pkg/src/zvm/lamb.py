"""Untyped call-by-value lambda layer: s-expression parser and compiler.

The surface syntax is small s-expressions::

    (let (x 1) (+ x 3))
    (letrec ((f (fun (n) ...))) (f 10))
    (fun (a b) body)          (f a b)
    (if c t e)  (seq e...)  (while c body)  (for i lo hi body)
    (try body x handler)  (raise e)
    (block tag e...)  (field e k)  (setfield e k v)
    (switch e ((0 a) (1 b)) ((0 c)))

Compilation follows the stack discipline of the abstract machine: let
binds by pushing, free variables are captured into closure slots,
multi-argument applications push arguments then APPLY/APPTERM, and the
only peephole is integer + with a constant right operand, which becomes
OFFSETINT.
"""

import re

from . import isa
from .errors import SyntaxError_, TooManyArguments, UnboundVariable
from .segment import GLOB_STRING, Segment

MAX_ARGS = 250

# predefined exception values are zero-size blocks with reserved tags
EXN_DIVISION_BY_ZERO = 240
EXN_INVALID_ARGUMENT = 241


class Var:
    def __init__(self, name, uid=None):
        self.name = name
        self.uid = uid


class ConstInt:
    def __init__(self, n):
        self.n = n


class ConstStr:
    def __init__(self, data):
        self.data = data


class Let:
    def __init__(self, name, uid, value, body):
        self.name, self.uid, self.value, self.body = name, uid, value, body


class LetRec:
    def __init__(self, bindings, body):
        self.bindings = bindings    # [(name, uid, Fun)]
        self.body = body


class Fun:
    def __init__(self, params, body):
        self.params = params        # [(name, uid)]
        self.body = body


class Apply:
    def __init__(self, fn, args):
        self.fn, self.args = fn, args


class Prim:
    def __init__(self, op, args):
        self.op, self.args = op, args


class If:
    def __init__(self, cond, then, els):
        self.cond, self.then, self.els = cond, then, els


class Switch:
    def __init__(self, scrutinee, int_arms, tag_arms):
        self.scrutinee = scrutinee
        self.int_arms = int_arms
        self.tag_arms = tag_arms


class Seq:
    def __init__(self, items):
        self.items = items


class While:
    def __init__(self, cond, body):
        self.cond, self.body = cond, body


class For:
    def __init__(self, name, uid, lo, hi, body):
        self.name, self.uid, self.lo, self.hi, self.body = name, uid, lo, hi, body


class Raise:
    def __init__(self, value):
        self.value = value


class TryWith:
    def __init__(self, body, name, uid, handler):
        self.body, self.name, self.uid, self.handler = body, name, uid, handler


class MakeBlock:
    def __init__(self, tag, items):
        self.tag, self.items = tag, items


class Field:
    def __init__(self, block, index):
        self.block, self.index = block, index


class SetField:
    def __init__(self, block, index, value):
        self.block, self.index, self.value = block, index, value


# names an application head may not use
_KEYWORDS = {"let", "letrec", "fun", "if", "seq", "while", "for", "try",
             "raise", "block", "field", "setfield", "switch"}

# instruction-backed binary primitives
_BINOPS = {
    "+": isa.ADDINT, "-": isa.SUBINT, "*": isa.MULINT, "/": isa.DIVINT,
    "mod": isa.MODINT, "land": isa.ANDINT, "lor": isa.ORINT,
    "lxor": isa.XORINT, "lsl": isa.LSLINT, "lsr": isa.LSRINT,
    "asr": isa.ASRINT, "=": isa.EQ, "<>": isa.NEQ, "<": isa.LTINT,
    "<=": isa.LEINT, ">": isa.GTINT, ">=": isa.GEINT,
}
_UNOPS = {"neg": isa.NEGINT, "not": isa.BOOLNOT, "isint": isa.ISINT}

# C-call primitives: surface name -> (registry name, arity)
_CPRIMS = {
    "print-int": ("print_int", 1),
    "print-string": ("print_string", 1),
    "newline": ("print_newline", 1),
    "+.": ("caml_add_float", 2),
    "-.": ("caml_sub_float", 2),
    "*.": ("caml_mul_float", 2),
    "/.": ("caml_div_float", 2),
    "=.": ("caml_eq_float", 2),
    "<.": ("caml_lt_float", 2),
    "<=.": ("caml_le_float", 2),
    "sqrt": ("caml_sqrt_float", 1),
    "float": ("caml_float_of_int", 1),
    "trunc": ("caml_int_of_float", 1),
    "slen": ("string_length", 1),
    "sget": ("string_get", 2),
    "sset": ("string_set", 3),
    "array-make": ("array_make", 2),
}

_PRIM_NAMES = (set(_BINOPS) | set(_UNOPS) | set(_CPRIMS)
               | {"vlen", "vget", "vset", "schar", "sschar", "getmethod"})


# --- s-expression reader ---

_TOKEN_RE = re.compile(r'''\(|\)|"(?:[^"\\]|\\.)*"|[^\s()";]+''')
_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", '"': '"', "\\": "\\", "0": "\0"}


def _strip_comments(text):
    out = []
    in_str = False
    i = 0
    while i < len(text):
        c = text[i]
        if in_str:
            out.append(c)
            if c == "\\" and i + 1 < len(text):
                out.append(text[i + 1])
                i += 1
            elif c == '"':
                in_str = False
        elif c == '"':
            in_str = True
            out.append(c)
        elif c == ";":
            while i < len(text) and text[i] != "\n":
                i += 1
            continue
        else:
            out.append(c)
        i += 1
    return "".join(out)


def _read_sexprs(text):
    toks = _TOKEN_RE.findall(_strip_comments(text))
    pos = 0

    def read():
        nonlocal pos
        if pos >= len(toks):
            raise SyntaxError_("unexpected end of input")
        t = toks[pos]
        pos += 1
        if t == "(":
            items = []
            while True:
                if pos >= len(toks):
                    raise SyntaxError_("unclosed parenthesis")
                if toks[pos] == ")":
                    pos += 1
                    return items
                items.append(read())
        if t == ")":
            raise SyntaxError_("unbalanced ')'")
        return t

    exprs = []
    while pos < len(toks):
        exprs.append(read())
    return exprs


def _unescape(s):
    out, i = [], 0
    while i < len(s):
        if s[i] == "\\" and i + 1 < len(s):
            out.append(_ESCAPES.get(s[i + 1], s[i + 1]))
            i += 2
        else:
            out.append(s[i])
            i += 1
    return "".join(out)


_INT_RE = re.compile(r"^-?\d+$")


class _Renamer:
    """Turns surface names into alpha-distinct (name, uid) binders."""

    def __init__(self):
        self.counter = 0

    def fresh(self, name):
        self.counter += 1
        return self.counter

    def build(self, sx, env):
        if isinstance(sx, str):
            if sx.startswith('"'):
                return ConstStr(_unescape(sx[1:-1]).encode("utf-8"))
            if _INT_RE.match(sx):
                return ConstInt(int(sx))
            if sx in env:
                return Var(sx, env[sx])
            raise UnboundVariable("unbound variable %r" % sx)
        if not isinstance(sx, list) or not sx:
            raise SyntaxError_("empty application")
        head = sx[0]

        if head == "let":
            if len(sx) != 3 or not isinstance(sx[1], list) or len(sx[1]) != 2:
                raise SyntaxError_("let wants (let (x e) body)")
            name = sx[1][0]
            value = self.build(sx[1][1], env)
            uid = self.fresh(name)
            body = self.build(sx[2], dict(env, **{name: uid}))
            return Let(name, uid, value, body)
        if head == "letrec":
            if len(sx) != 3 or not isinstance(sx[1], list):
                raise SyntaxError_("letrec wants (letrec ((f e)...) body)")
            names = []
            for b in sx[1]:
                if not isinstance(b, list) or len(b) != 2 or not isinstance(b[0], str):
                    raise SyntaxError_("bad letrec binding")
                names.append(b[0])
            uids = [self.fresh(n) for n in names]
            inner = dict(env)
            inner.update(zip(names, uids))
            bindings = []
            for (name, uid, b) in zip(names, uids, sx[1]):
                fn = self.build(b[1], inner)
                if not isinstance(fn, Fun):
                    raise SyntaxError_("letrec bindings must be functions")
                bindings.append((name, uid, fn))
            return LetRec(bindings, self.build(sx[2], inner))
        if head == "fun":
            if len(sx) != 3 or not isinstance(sx[1], list):
                raise SyntaxError_("fun wants (fun (params) body)")
            params = [(p, self.fresh(p)) for p in sx[1]]
            if not params:
                raise SyntaxError_("fun needs at least one parameter")
            if len(params) > MAX_ARGS:
                raise TooManyArguments("%d parameters" % len(params))
            inner = dict(env)
            inner.update({n: u for n, u in params})
            return Fun(params, self.build(sx[2], inner))
        if head == "if":
            if len(sx) != 4:
                raise SyntaxError_("if wants 3 arguments")
            return If(*(self.build(s, env) for s in sx[1:]))
        if head == "seq":
            if len(sx) < 2:
                raise SyntaxError_("empty seq")
            return Seq([self.build(s, env) for s in sx[1:]])
        if head == "while":
            if len(sx) != 3:
                raise SyntaxError_("while wants cond and body")
            return While(self.build(sx[1], env), self.build(sx[2], env))
        if head == "for":
            if len(sx) != 5 or not isinstance(sx[1], str):
                raise SyntaxError_("for wants (for i lo hi body)")
            lo = self.build(sx[2], env)
            hi = self.build(sx[3], env)
            uid = self.fresh(sx[1])
            body = self.build(sx[4], dict(env, **{sx[1]: uid}))
            return For(sx[1], uid, lo, hi, body)
        if head == "try":
            if len(sx) != 4 or not isinstance(sx[2], str):
                raise SyntaxError_("try wants (try body x handler)")
            body = self.build(sx[1], env)
            uid = self.fresh(sx[2])
            handler = self.build(sx[3], dict(env, **{sx[2]: uid}))
            return TryWith(body, sx[2], uid, handler)
        if head == "raise":
            if len(sx) != 2:
                raise SyntaxError_("raise wants one argument")
            return Raise(self.build(sx[1], env))
        if head == "block":
            if len(sx) < 2 or not isinstance(sx[1], str) or not _INT_RE.match(sx[1]):
                raise SyntaxError_("block wants a constant tag")
            return MakeBlock(int(sx[1]), [self.build(s, env) for s in sx[2:]])
        if head == "field":
            if len(sx) != 3 or not _INT_RE.match(sx[2]):
                raise SyntaxError_("field wants a constant index")
            return Field(self.build(sx[1], env), int(sx[2]))
        if head == "setfield":
            if len(sx) != 4 or not _INT_RE.match(sx[2]):
                raise SyntaxError_("setfield wants a constant index")
            return SetField(self.build(sx[1], env), int(sx[2]),
                            self.build(sx[3], env))
        if head == "switch":
            if len(sx) not in (3, 4):
                raise SyntaxError_("switch wants arm lists")
            int_arms = self._arms(sx[2], env)
            tag_arms = self._arms(sx[3], env) if len(sx) == 4 else []
            return Switch(self.build(sx[1], env), int_arms, tag_arms)
        if isinstance(head, str) and head in _PRIM_NAMES:
            return Prim(head, [self.build(s, env) for s in sx[1:]])
        fn = self.build(head, env)
        args = [self.build(s, env) for s in sx[1:]]
        if not args:
            raise SyntaxError_("application without arguments")
        if len(args) > MAX_ARGS:
            raise TooManyArguments("%d arguments" % len(args))
        return Apply(fn, args)

    def _arms(self, sx, env):
        if not isinstance(sx, list):
            raise SyntaxError_("switch arms must be a list")
        arms = []
        for a in sx:
            if (not isinstance(a, list) or len(a) != 2
                    or not isinstance(a[0], str) or not _INT_RE.match(a[0])):
                raise SyntaxError_("bad switch arm")
            arms.append((int(a[0]), self.build(a[1], env)))
        arms.sort(key=lambda kv: kv[0])
        if [k for k, _ in arms] != list(range(len(arms))):
            raise SyntaxError_("switch arms must cover 0..n-1 densely")
        return [e for _, e in arms]


def parse_lambda(text):
    """Source text -> alpha-distinct LambdaExpr (a single expression)."""
    sxs = _read_sexprs(text)
    if len(sxs) != 1:
        raise SyntaxError_("expected exactly one top-level expression")
    return _Renamer().build(sxs[0], {})


# --- free variables ---

def _free_vars(expr, bound, out, seen):
    """Append free uids in first-occurrence order."""
    t = type(expr)
    if t is Var:
        if expr.uid not in bound and expr.uid not in seen:
            seen.add(expr.uid)
            out.append(expr.uid)
    elif t is ConstInt or t is ConstStr:
        pass
    elif t is Let:
        _free_vars(expr.value, bound, out, seen)
        _free_vars(expr.body, bound | {expr.uid}, out, seen)
    elif t is LetRec:
        inner = bound | {uid for _, uid, _ in expr.bindings}
        for _, _, fn in expr.bindings:
            _free_vars(fn, inner, out, seen)
        _free_vars(expr.body, inner, out, seen)
    elif t is Fun:
        _free_vars(expr.body, bound | {u for _, u in expr.params}, out, seen)
    elif t is Apply:
        _free_vars(expr.fn, bound, out, seen)
        for a in expr.args:
            _free_vars(a, bound, out, seen)
    elif t is Prim:
        for a in expr.args:
            _free_vars(a, bound, out, seen)
    elif t is If:
        _free_vars(expr.cond, bound, out, seen)
        _free_vars(expr.then, bound, out, seen)
        _free_vars(expr.els, bound, out, seen)
    elif t is Switch:
        _free_vars(expr.scrutinee, bound, out, seen)
        for a in expr.int_arms + expr.tag_arms:
            _free_vars(a, bound, out, seen)
    elif t is Seq:
        for a in expr.items:
            _free_vars(a, bound, out, seen)
    elif t is While:
        _free_vars(expr.cond, bound, out, seen)
        _free_vars(expr.body, bound, out, seen)
    elif t is For:
        _free_vars(expr.lo, bound, out, seen)
        _free_vars(expr.hi, bound, out, seen)
        _free_vars(expr.body, bound | {expr.uid}, out, seen)
    elif t is Raise:
        _free_vars(expr.value, bound, out, seen)
    elif t is TryWith:
        _free_vars(expr.body, bound, out, seen)
        _free_vars(expr.handler, bound | {expr.uid}, out, seen)
    elif t is MakeBlock:
        for a in expr.items:
            _free_vars(a, bound, out, seen)
    elif t is Field:
        _free_vars(expr.block, bound, out, seen)
    elif t is SetField:
        _free_vars(expr.block, bound, out, seen)
        _free_vars(expr.value, bound, out, seen)
    else:
        raise TypeError("unknown node %r" % expr)


def free_vars(expr, bound=frozenset()):
    out, seen = [], set()
    _free_vars(expr, set(bound), out, seen)
    return out


# --- code emission with label backpatching ---

class _Emitter:
    def __init__(self):
        self.words = []
        self.fixups = []        # (word index, label, anchor word index)
        self.labels = {}
        self.next_label = 0

    def here(self):
        return len(self.words)

    def label(self):
        self.next_label += 1
        return self.next_label

    def bind(self, lab):
        assert lab not in self.labels
        self.labels[lab] = len(self.words)

    def raw(self, *ws):
        self.words.extend(ws)

    def instr(self, op, *operands):
        self.words.append(op)
        self.words.extend(operands)

    def lref(self, lab, anchor):
        """Emit a label-resolved word, relative to word index ``anchor``."""
        self.fixups.append((len(self.words), lab, anchor))
        self.words.append(0)

    def branch(self, op, *front_operands, lab):
        self.words.append(op)
        self.words.extend(front_operands)
        self.lref(lab, anchor=len(self.words))

    def finish(self):
        from .errors import OperandOverflow
        for at, lab, anchor in self.fixups:
            self.words[at] = self.labels[lab] - anchor
        for x in self.words:
            if not (-(1 << 31) <= x < (1 << 31)):
                raise OperandOverflow("operand %d does not fit in 32 bits" % x)
        return self.words


class _FnScope:
    """Variable addressing inside one function (or the main body)."""

    def __init__(self, kind, fvs=(), rec_uids=(), rec_index=0):
        self.kind = kind                  # 'main' | 'plain' | 'rec'
        self.fv_index = {u: j for j, u in enumerate(fvs)}
        self.rec_index = {u: j for j, u in enumerate(rec_uids)}
        self.rec_pos = rec_index          # own index in the recursive group
        self.rec_count = len(rec_uids)
        self.stack = {}                   # uid -> bind depth
        self.depth = 0

    def bind(self, uid):
        self.stack[uid] = self.depth

    def lookup(self, uid):
        if uid in self.stack:
            return ("stack", self.depth - self.stack[uid])
        if uid in self.fv_index:
            j = self.fv_index[uid]
            if self.kind == "rec":
                base = 2 * self.rec_count - 1 - 2 * self.rec_pos
                return ("env", base + j)
            return ("env", 1 + j)
        if uid in self.rec_index:
            return ("offs", 2 * (self.rec_index[uid] - self.rec_pos))
        raise UnboundVariable("internal: uid %d has no location" % uid)


class _Compiler:
    def __init__(self):
        self.e = _Emitter()
        self.globals = []
        self.prims = []
        self.prim_index = {}
        self.todo = []          # deferred function bodies

    def prim(self, name):
        if name not in self.prim_index:
            self.prim_index[name] = len(self.prims)
            self.prims.append(name)
        return self.prim_index[name]

    def string_global(self, data):
        self.globals.append((GLOB_STRING, data))
        return len(self.globals) - 1

    # closures: record a deferred body, return its entry label
    def defer_function(self, fn, fvs, rec_uids=(), rec_index=0):
        entry = self.e.label()
        self.todo.append((entry, fn, fvs, rec_uids, rec_index))
        return entry

    def emit_functions(self):
        while self.todo:
            entry, fn, fvs, rec_uids, rec_index = self.todo.pop(0)
            kind = "rec" if rec_uids else "plain"
            sc = _FnScope(kind, fvs, rec_uids, rec_index)
            k = len(fn.params)
            if k > 1:
                self.e.instr(isa.RESTART)
                self.e.bind(entry)
                self.e.instr(isa.GRAB, k - 1)
            else:
                self.e.bind(entry)
            sc.depth = k
            for i, (_, uid) in enumerate(fn.params):
                sc.stack[uid] = k - i     # arg1 deepest bind, at slot 0
            self.compile(fn.body, sc, tail=True)

    # --- expression compilation ---

    def compile_var(self, uid, sc):
        kind, n = sc.lookup(uid)
        if kind == "stack":
            self.e.instr(isa.ACC, n)
        elif kind == "env":
            self.e.instr(isa.ENVACC, n)
        else:
            self.e.instr(isa.OFFSETCLOSURE, n)

    def push(self, sc):
        self.e.instr(isa.PUSH)
        sc.depth += 1

    def compile_ccall(self, name, arity, args, sc):
        if len(args) != arity:
            raise SyntaxError_("%s wants %d arguments, got %d"
                               % (name, arity, len(args)))
        for a in reversed(args[1:]):
            self.compile(a, sc)
            self.push(sc)
        self.compile(args[0], sc)
        self.e.instr(isa.C_CALL, self.prim(name), arity)
        sc.depth -= arity - 1

    def compile(self, expr, sc, tail=False):
        t = type(expr)
        e = self.e

        if t is Var:
            self.compile_var(expr.uid, sc)
        elif t is ConstInt:
            e.instr(isa.CONSTINT, expr.n)
        elif t is ConstStr:
            e.instr(isa.GETGLOBAL, self.string_global(expr.data))
        elif t is Let:
            self.compile(expr.value, sc)
            self.push(sc)
            sc.bind(expr.uid)
            if tail:
                self.compile(expr.body, sc, tail=True)
                return
            self.compile(expr.body, sc)
            e.instr(isa.POP, 1)
            sc.depth -= 1
        elif t is LetRec:
            self.compile_letrec(expr, sc, tail)
            return
        elif t is Fun:
            fvs = free_vars(expr)
            entry = self.defer_function(expr, fvs)
            for uid in reversed(fvs[1:]):
                self.compile_var(uid, sc)
                self.push(sc)
            if fvs:
                self.compile_var(fvs[0], sc)
            e.branch(isa.CLOSURE, len(fvs), lab=entry)
            sc.depth -= max(0, len(fvs) - 1)
        elif t is Apply:
            for a in reversed(expr.args):
                self.compile(a, sc)
                self.push(sc)
            self.compile(expr.fn, sc)
            if tail:
                e.instr(isa.APPTERM, len(expr.args), sc.depth)
                sc.depth -= len(expr.args)
                return
            e.instr(isa.APPLY, len(expr.args))
            sc.depth -= len(expr.args)
        elif t is Prim:
            self.compile_prim(expr, sc)
        elif t is If:
            self.compile(expr.cond, sc)
            l_else = e.label()
            e.branch(isa.BRANCHIFNOT, lab=l_else)
            depth0 = sc.depth      # arms must not leak depth into each other
            if tail:
                self.compile(expr.then, sc, tail=True)
                sc.depth = depth0
                e.bind(l_else)
                self.compile(expr.els, sc, tail=True)
                sc.depth = depth0
                return
            l_end = e.label()
            self.compile(expr.then, sc)
            sc.depth = depth0
            e.branch(isa.BRANCH, lab=l_end)
            e.bind(l_else)
            self.compile(expr.els, sc)
            sc.depth = depth0
            e.bind(l_end)
        elif t is Switch:
            self.compile_switch(expr, sc, tail)
            return
        elif t is Seq:
            for item in expr.items[:-1]:
                self.compile(item, sc)
            self.compile(expr.items[-1], sc, tail=tail)
            if tail:
                return
        elif t is While:
            l_top, l_end = e.label(), e.label()
            e.bind(l_top)
            e.instr(isa.CHECK_SIGNALS)
            self.compile(expr.cond, sc)
            e.branch(isa.BRANCHIFNOT, lab=l_end)
            self.compile(expr.body, sc)
            e.branch(isa.BRANCH, lab=l_top)
            e.bind(l_end)
            e.instr(isa.CONSTINT, 0)
        elif t is For:
            self.compile_for(expr, sc)
        elif t is Raise:
            self.compile(expr.value, sc)
            e.instr(isa.RAISE)
        elif t is TryWith:
            l_handler, l_end = e.label(), e.label()
            depth0 = sc.depth
            e.branch(isa.PUSHTRAP, lab=l_handler)
            sc.depth += 4
            self.compile(expr.body, sc)
            e.instr(isa.POPTRAP)
            sc.depth = depth0
            e.branch(isa.BRANCH, lab=l_end)
            e.bind(l_handler)
            self.push(sc)
            sc.bind(expr.uid)
            self.compile(expr.handler, sc)
            e.instr(isa.POP, 1)
            sc.depth = depth0
            e.bind(l_end)
        elif t is MakeBlock:
            if not expr.items:
                e.instr(isa.ATOM, expr.tag)
            else:
                for a in reversed(expr.items[1:]):
                    self.compile(a, sc)
                    self.push(sc)
                self.compile(expr.items[0], sc)
                e.instr(isa.MAKEBLOCK, expr.tag, len(expr.items))
                sc.depth -= len(expr.items) - 1
        elif t is Field:
            self.compile(expr.block, sc)
            e.instr(isa.GETFIELD, expr.index)
        elif t is SetField:
            self.compile(expr.value, sc)
            self.push(sc)
            self.compile(expr.block, sc)
            e.instr(isa.SETFIELD, expr.index)
            sc.depth -= 1
        else:
            raise TypeError("unknown node %r" % expr)

        if tail:
            e.instr(isa.RETURN, sc.depth)

    def compile_letrec(self, expr, sc, tail):
        e = self.e
        group = [uid for _, uid, _ in expr.bindings]
        # captured variables: union over the group, excluding the rec names
        fvs = []
        seen = set()
        for _, _, fn in expr.bindings:
            for u in free_vars(fn, bound=frozenset(group)):
                if u not in seen:
                    seen.add(u)
                    fvs.append(u)
        p = len(expr.bindings)
        entries = []
        for i, (_, _, fn) in enumerate(expr.bindings):
            entries.append(self.defer_function(fn, fvs, group, i))
        for uid in reversed(fvs[1:]):
            self.compile_var(uid, sc)
            self.push(sc)
        if fvs:
            self.compile_var(fvs[0], sc)
        e.instr(isa.CLOSUREREC, p, len(fvs))
        anchor = e.here()
        for lab in entries:
            e.lref(lab, anchor)
        sc.depth -= max(0, len(fvs) - 1)
        sc.depth += p                      # the p closures are pushed
        for i, (_, uid, _) in enumerate(expr.bindings):
            sc.stack[uid] = sc.depth - (p - 1) + i
        if tail:
            self.compile(expr.body, sc, tail=True)
            return
        self.compile(expr.body, sc)
        e.instr(isa.POP, p)
        sc.depth -= p

    def compile_for(self, expr, sc):
        e = self.e
        self.compile(expr.lo, sc)
        self.push(sc)
        sc.bind(expr.uid)
        self.compile(expr.hi, sc)
        self.push(sc)
        l_top, l_end = e.label(), e.label()
        e.bind(l_top)
        e.instr(isa.CHECK_SIGNALS)
        e.instr(isa.ACC, 0)               # limit
        self.push(sc)
        e.instr(isa.ACC, 2)               # loop variable
        e.instr(isa.LEINT)
        sc.depth -= 1
        e.branch(isa.BRANCHIFNOT, lab=l_end)
        self.compile(expr.body, sc)
        e.instr(isa.ACC, 1)
        e.instr(isa.OFFSETINT, 1)
        e.instr(isa.ASSIGN, 1)
        e.branch(isa.BRANCH, lab=l_top)
        e.bind(l_end)
        e.instr(isa.CONSTINT, 0)
        e.instr(isa.POP, 2)
        sc.depth -= 2

    def compile_switch(self, expr, sc, tail):
        e = self.e
        self.compile(expr.scrutinee, sc)
        p, q = len(expr.int_arms), len(expr.tag_arms)
        e.instr(isa.SWITCH, p | (q << 16))
        anchor = e.here()
        labs = [e.label() for _ in range(p + q)]
        for lab in labs:
            e.lref(lab, anchor)
        l_end = e.label()
        depth0 = sc.depth
        for lab, arm in zip(labs, expr.int_arms + expr.tag_arms):
            e.bind(lab)
            sc.depth = depth0
            if tail:
                self.compile(arm, sc, tail=True)
            else:
                self.compile(arm, sc)
                e.branch(isa.BRANCH, lab=l_end)
        sc.depth = depth0
        if not tail:
            e.bind(l_end)

    def compile_prim(self, expr, sc):
        e = self.e
        op, args = expr.op, expr.args

        if op in _CPRIMS:
            name, arity = _CPRIMS[op]
            if op == "newline" and not args:
                args = [ConstInt(0)]
            self.compile_ccall(name, arity, args, sc)
            return
        if op in _UNOPS:
            if len(args) != 1:
                raise SyntaxError_("%s wants one argument" % op)
            self.compile(args[0], sc)
            e.instr(_UNOPS[op])
            return
        if op in _BINOPS:
            if len(args) != 2:
                raise SyntaxError_("%s wants two arguments" % op)
            if op == "+" and type(args[1]) is ConstInt:
                self.compile(args[0], sc)
                e.instr(isa.OFFSETINT, args[1].n)
                return
            self.compile(args[1], sc)
            self.push(sc)
            self.compile(args[0], sc)
            e.instr(_BINOPS[op])
            sc.depth -= 1
            return
        if op == "vlen":
            self.compile(args[0], sc)
            e.instr(isa.VECTLENGTH)
            return
        if op == "vget":
            self.compile(args[1], sc)
            self.push(sc)
            self.compile(args[0], sc)
            e.instr(isa.GETVECTITEM)
            sc.depth -= 1
            return
        if op == "vset":
            self.compile(args[2], sc)
            self.push(sc)
            self.compile(args[1], sc)
            self.push(sc)
            self.compile(args[0], sc)
            e.instr(isa.SETVECTITEM)
            sc.depth -= 2
            return
        if op == "schar":
            self.compile(args[1], sc)
            self.push(sc)
            self.compile(args[0], sc)
            e.instr(isa.GETSTRINGCHAR)
            sc.depth -= 1
            return
        if op == "sschar":
            self.compile(args[2], sc)
            self.push(sc)
            self.compile(args[1], sc)
            self.push(sc)
            self.compile(args[0], sc)
            e.instr(isa.SETSTRINGCHAR)
            sc.depth -= 2
            return
        if op == "getmethod":
            self.compile(args[0], sc)
            self.push(sc)
            self.compile(args[1], sc)
            e.instr(isa.GETMETHOD)
            e.instr(isa.POP, 1)
            sc.depth -= 1
            return
        raise SyntaxError_("unknown primitive %r" % op)


def compile_lambda(expr):
    """Closed LambdaExpr -> Segment."""
    c = _Compiler()
    sc = _FnScope("main")
    c.compile(expr, sc)
    c.e.instr(isa.STOP)
    had_functions = bool(c.todo)
    c.emit_functions()
    if had_functions:
        c.e.instr(isa.STOP)       # keep the final-instruction-is-STOP shape
    words = c.e.finish()
    return Segment(words, c.globals, c.prims)


def compile_source(text):
    return compile_lambda(parse_lambda(text))
