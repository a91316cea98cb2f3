"""Direct evaluator for the lambda layer.

This is the reference oracle: it interprets LambdaExpr trees with plain
Python data and never touches the bytecode pipeline, so VM engines can
be checked against it.  Arithmetic wraps to 63-bit two's complement with
truncating division, mirroring the machine's tagged-integer behavior.
"""

import math

from . import lamb
from .errors import StepBudgetExceeded, VMFault

_W = 1 << 63        # payload modulus: ints live in [-2**62, 2**62)


def wrap63(n):
    return ((n + (_W >> 1)) % _W) - (_W >> 1)


def tdiv(a, b):
    q = abs(a) // abs(b)
    return -q if (a < 0) != (b < 0) else q


def tmod(a, b):
    return a - b * tdiv(a, b)


class TWBlock:
    __slots__ = ("tag", "fields")

    def __init__(self, tag, fields):
        self.tag = tag
        self.fields = fields


class TWString:
    __slots__ = ("data",)

    def __init__(self, data):
        self.data = bytearray(data)


class TWClosure:
    __slots__ = ("params", "body", "env")

    def __init__(self, params, body, env):
        self.params = params
        self.body = body
        self.env = env


class TWPartial:
    __slots__ = ("fn", "args")

    def __init__(self, fn, args):
        self.fn = fn
        self.args = args


class TWFloatArray:
    __slots__ = ("items",)

    def __init__(self, items):
        self.items = items


class TWRaise(Exception):
    def __init__(self, value):
        super().__init__("lambda-level raise")
        self.value = value


DIV0 = TWBlock(lamb.EXN_DIVISION_BY_ZERO, [])
INVARG = TWBlock(lamb.EXN_INVALID_ARGUMENT, [])


class TreeWalker:
    def __init__(self, budget=10_000_000):
        self.budget = budget
        self.steps = 0
        self.output = []

    def tick(self):
        self.steps += 1
        if self.steps > self.budget:
            raise StepBudgetExceeded("tree-walk budget exhausted")

    def run(self, expr):
        return self.eval(expr, {})

    def eval(self, expr, env):
        self.tick()
        t = type(expr)
        if t is lamb.Var:
            return env[expr.uid]
        if t is lamb.ConstInt:
            return expr.n
        if t is lamb.ConstStr:
            return TWString(expr.data)
        if t is lamb.Let:
            v = self.eval(expr.value, env)
            inner = dict(env)
            inner[expr.uid] = v
            return self.eval(expr.body, inner)
        if t is lamb.LetRec:
            inner = dict(env)
            for _, uid, fn in expr.bindings:
                inner[uid] = TWClosure([u for _, u in fn.params], fn.body, inner)
            return self.eval(expr.body, inner)
        if t is lamb.Fun:
            return TWClosure([u for _, u in expr.params], expr.body, env)
        if t is lamb.Apply:
            # arguments evaluate right to left, then the function,
            # matching the push order the compiler emits
            args = self._eval_rtl(expr.args, env)
            fn = self.eval(expr.fn, env)
            return self.apply(fn, args)
        if t is lamb.Prim:
            return self.prim(expr, env)
        if t is lamb.If:
            c = self.eval(expr.cond, env)
            taken = not (isinstance(c, int) and c == 0)
            return self.eval(expr.then if taken else expr.els, env)
        if t is lamb.Switch:
            v = self.eval(expr.scrutinee, env)
            if isinstance(v, int):
                if not (0 <= v < len(expr.int_arms)):
                    raise VMFault("switch int index %d out of range" % v)
                return self.eval(expr.int_arms[v], env)
            tag = v.tag if isinstance(v, TWBlock) else None
            if tag is None or not (0 <= tag < len(expr.tag_arms)):
                raise VMFault("switch tag out of range")
            return self.eval(expr.tag_arms[tag], env)
        if t is lamb.Seq:
            v = 0
            for item in expr.items:
                v = self.eval(item, env)
            return v
        if t is lamb.While:
            while True:
                self.tick()
                c = self.eval(expr.cond, env)
                if isinstance(c, int) and c == 0:
                    return 0
                self.eval(expr.body, env)
        if t is lamb.For:
            lo = self.eval(expr.lo, env)
            hi = self.eval(expr.hi, env)
            # the loop variable is assignable in bytecode; model with a cell
            i = lo
            while i <= hi:
                self.tick()
                inner = dict(env)
                inner[expr.uid] = i
                self.eval(expr.body, inner)
                i += 1
            return 0
        if t is lamb.Raise:
            raise TWRaise(self.eval(expr.value, env))
        if t is lamb.TryWith:
            try:
                return self.eval(expr.body, env)
            except TWRaise as exc:
                inner = dict(env)
                inner[expr.uid] = exc.value
                return self.eval(expr.handler, inner)
        if t is lamb.MakeBlock:
            return TWBlock(expr.tag, self._eval_rtl(expr.items, env))
        if t is lamb.Field:
            b = self.eval(expr.block, env)
            self._check_field(b, expr.index)
            return b.fields[expr.index]
        if t is lamb.SetField:
            v = self.eval(expr.value, env)
            b = self.eval(expr.block, env)
            self._check_field(b, expr.index)
            b.fields[expr.index] = v
            return 0
        raise TypeError("unknown node %r" % expr)

    def _check_field(self, b, i):
        if not isinstance(b, TWBlock) or not (0 <= i < len(b.fields)):
            raise VMFault("bad field access")

    def _eval_rtl(self, exprs, env):
        vals = [None] * len(exprs)
        for i in range(len(exprs) - 1, -1, -1):
            vals[i] = self.eval(exprs[i], env)
        return vals

    def apply(self, fn, args):
        self.tick()
        while True:
            if isinstance(fn, TWPartial):
                args = fn.args + args
                fn = fn.fn
                continue
            if not isinstance(fn, TWClosure):
                raise VMFault("apply of a non-function")
            arity = len(fn.params)
            if len(args) < arity:
                return TWPartial(fn, args)
            env = dict(fn.env)
            env.update(zip(fn.params, args[:arity]))
            result = self.eval(fn.body, env)
            if len(args) == arity:
                return result
            fn, args = result, args[arity:]

    def prim(self, expr, env):
        op = expr.op
        if op == "getmethod":
            # the object is pushed before the index is evaluated
            args = [self.eval(a, env) for a in expr.args]
        else:
            args = self._eval_rtl(expr.args, env)

        if op in ("+", "-", "*", "land", "lor", "lxor", "lsl", "lsr", "asr",
                  "/", "mod"):
            a, b = self._ints(args, 2)
            if op == "+":
                return wrap63(a + b)
            if op == "-":
                return wrap63(a - b)
            if op == "*":
                return wrap63(a * b)
            if op == "land":
                return a & b
            if op == "lor":
                return a | b
            if op == "lxor":
                return a ^ b
            if op == "lsl":
                return wrap63(a << (b & 63))
            if op == "lsr":
                # logical shift of the 63-bit payload
                return wrap63((a % _W) >> (b & 63))
            if op == "asr":
                return a >> (b & 63)
            if b == 0:
                raise TWRaise(DIV0)
            return wrap63(tdiv(a, b)) if op == "/" else tmod(a, b)
        if op in ("=", "<>"):
            a, b = args
            same = self._same(a, b)
            return int(same) if op == "=" else int(not same)
        if op in ("<", "<=", ">", ">="):
            a, b = self._ints(args, 2)
            return int({"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[op])
        if op == "neg":
            (a,) = self._ints(args, 1)
            return wrap63(-a)
        if op == "not":
            (a,) = self._ints(args, 1)
            return wrap63(1 - a)
        if op == "isint":
            return int(isinstance(args[0], int))

        if op == "vlen":
            b = args[0]
            if isinstance(b, TWFloatArray):
                return len(b.items)
            return len(b.fields)
        if op == "vget":
            b, i = args
            if isinstance(b, TWFloatArray):
                if not (0 <= i < len(b.items)):
                    raise VMFault("float array index")
                return b.items[i]
            self._check_field(b, i)
            return b.fields[i]
        if op == "vset":
            b, i, v = args
            if isinstance(b, TWFloatArray):
                if not (0 <= i < len(b.items)):
                    raise VMFault("float array index")
                b.items[i] = v
                return 0
            self._check_field(b, i)
            b.fields[i] = v
            return 0
        if op == "schar":
            s, i = args
            if not (0 <= i < len(s.data)):
                raise VMFault("string index")
            return s.data[i]
        if op == "sschar":
            s, i, c = args
            if not (0 <= i < len(s.data)):
                raise VMFault("string index")
            s.data[i] = c & 0xFF
            return 0
        if op == "getmethod":
            obj, idx = args
            table = obj.fields[0]
            return table.fields[idx]

        if op == "print-int":
            self.output.append(str(args[0]))
            return 0
        if op == "print-string":
            self.output.append(args[0].data.decode("latin-1"))
            return 0
        if op == "newline":
            self.output.append("\n")
            return 0

        if op in ("+.", "-.", "*.", "/."):
            a, b = args
            if op == "+.":
                return a + b
            if op == "-.":
                return a - b
            if op == "*.":
                return a * b
            return fdiv(a, b)
        if op in ("=.", "<.", "<=."):
            a, b = args
            return int({"=.": a == b, "<.": a < b, "<=.": a <= b}[op])
        if op == "sqrt":
            return fsqrt(args[0])
        if op == "float":
            return float(args[0])
        if op == "trunc":
            return ftrunc(args[0])
        if op == "slen":
            return len(args[0].data)
        if op == "sget":
            s, i = args
            if not (0 <= i < len(s.data)):
                raise TWRaise(INVARG)
            return s.data[i]
        if op == "sset":
            s, i, c = args
            if not (0 <= i < len(s.data)):
                raise TWRaise(INVARG)
            s.data[i] = c & 0xFF
            return 0
        if op == "array-make":
            n, v = args
            if n < 0:
                raise TWRaise(INVARG)
            if n == 0:
                return TWBlock(0, [])
            if isinstance(v, float):
                return TWFloatArray([v] * n)
            return TWBlock(0, [v] * n)
        raise TypeError("unknown primitive %r" % op)

    def _ints(self, args, n):
        for a in args:
            if not isinstance(a, int):
                raise VMFault("integer primitive on a non-integer")
        if len(args) != n:
            raise VMFault("primitive arity")
        return args

    def _same(self, a, b):
        # physical equality on blocks, numeric equality on ints
        if isinstance(a, int) and isinstance(b, int):
            return a == b
        return a is b


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
    if x != x or x in (float("inf"), float("-inf")):
        return 0
    return wrap63(int(x))


def render_tw(value, depth=0):
    """Canonical rendering; must agree with the VM-side renderer."""
    if depth > 12:
        return "..."
    if isinstance(value, bool):
        value = int(value)
    if isinstance(value, int):
        return "int %d" % value
    if isinstance(value, float):
        return "float %r" % value
    if isinstance(value, TWString):
        return "string %s" % _escape(bytes(value.data))
    if isinstance(value, (TWClosure, TWPartial)):
        return "<closure>"
    if isinstance(value, TWFloatArray):
        return "floats [%s]" % " ".join(repr(x) for x in value.items)
    if isinstance(value, TWBlock):
        inner = " ".join(render_tw(f, depth + 1) for f in value.fields)
        return "block tag=%d [%s]" % (value.tag, inner)
    raise TypeError("unrenderable %r" % value)


def _escape(data):
    text = data.decode("latin-1")
    for a, b in (("\\", "\\\\"), ('"', '\\"'), ("\n", "\\n"), ("\t", "\\t")):
        text = text.replace(a, b)
    return '"%s"' % text


def evaluate(expr, budget=10_000_000):
    """Returns (outcome, rendered result or exception, output string, steps)."""
    tw = TreeWalker(budget)
    try:
        v = tw.run(expr)
        return ("done", render_tw(v), "".join(tw.output), tw.steps)
    except TWRaise as exc:
        return ("uncaught", render_tw(exc.value), "".join(tw.output), tw.steps)
