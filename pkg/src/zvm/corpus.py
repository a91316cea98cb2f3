"""Bundled benchmark programs and the randomized differential corpus.

Benchmarks mirror the usual categories (number crunching, sorting,
allocation-heavy term processing, floating point, exception handling)
at desk scale.  The random generator produces small closed, terminating
expressions whose expected behavior comes from the tree-walk oracle.
"""

import random

from . import lamb, zasm

# --- benchmark sources (.zl) ---

def fib_src(n):
    return ("(letrec ((fib (fun (n) (if (< n 2) n "
            "(+ (fib (- n 1)) (fib (- n 2))))))) (fib %d))" % n)


def tak_src(x, y, z):
    return ("(letrec ((tak (fun (x y z) (if (< y x) "
            "(tak (tak (- x 1) y z) (tak (- y 1) z x) (tak (- z 1) x y)) "
            "z)))) (tak %d %d %d))" % (x, y, z))


def quicksort_src(n):
    return """
(letrec
  ((swap (fun (a i j)
     (let (t (vget a i)) (seq (vset a i (vget a j)) (vset a j t)))))
   (part (fun (a lo hi)
     (let (pv (vget a hi))
       (let (ic (block 0 (- lo 1)))
         (seq
           (for j lo (- hi 1)
             (if (<= (vget a j) pv)
                 (seq (setfield ic 0 (+ (field ic 0) 1))
                      (swap a (field ic 0) j))
                 0))
           (swap a (+ (field ic 0) 1) hi)
           (+ (field ic 0) 1))))))
   (qs (fun (a lo hi)
     (if (< lo hi)
         (let (p (part a lo hi))
           (seq (qs a lo (- p 1)) (qs a (+ p 1) hi)))
         0)))
   (fill (fun (a n)
     (let (sc (block 0 12345))
       (for i 0 (- n 1)
         (seq (setfield sc 0 (mod (+ (* (field sc 0) 1103) 12345) 65536))
              (vset a i (field sc 0)))))))
   (checksum (fun (a n)
     (let (acc (block 0 0))
       (seq
         (for i 1 (- n 1)
           (if (<= (vget a (- i 1)) (vget a i)) 0 (raise 999)))
         (for i 0 (- n 1)
           (setfield acc 0 (land (+ (field acc 0) (* (vget a i) (+ i 1)))
                                 1073741823)))
         (field acc 0))))))
  (let (n %d)
    (let (a (array-make n 0))
      (seq (fill a n) (qs a 0 (- n 1)) (checksum a n)))))
""" % n


def listsort_src(n):
    # allocation-heavy merge sort: cons cells are tag-0 blocks, nil is atom 1
    return """
(letrec
  ((gen (fun (n seed)
     (if (= n 0) (block 1)
         (let (s (mod (+ (* seed 31) 17) 9973))
           (block 0 s (gen (- n 1) s))))))
   (split (fun (l)
     (switch l ()
       ((0 (let (t (field l 1))
             (switch t ()
               ((0 (let (rest (split (field t 1)))
                     (block 0
                       (block 0 (field l 0) (field rest 0))
                       (block 0 (field t 0) (field rest 1)))))
                (1 (block 0 l (block 1)))))))
        (1 (block 0 (block 1) (block 1)))))))
   (merge (fun (a b)
     (switch a ()
       ((0 (switch b ()
             ((0 (if (<= (field a 0) (field b 0))
                     (block 0 (field a 0) (merge (field a 1) b))
                     (block 0 (field b 0) (merge a (field b 1)))))
              (1 a))))
        (1 b)))))
   (msort (fun (l)
     (switch l ()
       ((0 (switch (field l 1) ()
             ((0 (let (h (split l))
                   (merge (msort (field h 0)) (msort (field h 1)))))
              (1 l))))
        (1 l)))))
   (checksum (fun (l acc i)
     (switch l ()
       ((0 (checksum (field l 1)
                     (land (+ acc (* (field l 0) i)) 1073741823)
                     (+ i 1)))
        (1 acc))))))
  (checksum (msort (gen %d 42)) 0 1))
""" % n


def floatloop_src(grid):
    # mandelbrot-style escape iteration over a small grid
    inner = """
(let (cx (-. (/. (*. (float px) four) (float {g})) (float 2)))
 (let (cy (-. (/. (*. (float py) four) (float {g})) (float 2)))
  (let (zx (block 0 (float 0)))
   (let (zy (block 0 (float 0)))
    (let (it (block 0 0))
     (seq
      (while (if (< (field it 0) limit)
                 (<=. (+. (*. (field zx 0) (field zx 0))
                          (*. (field zy 0) (field zy 0))) four)
                 0)
       (let (nx (+. (-. (*. (field zx 0) (field zx 0))
                        (*. (field zy 0) (field zy 0))) cx))
        (let (ny (+. (*. (*. (field zx 0) (field zy 0)) (float 2)) cy))
         (seq (setfield zx 0 nx)
              (setfield zy 0 ny)
              (setfield it 0 (+ (field it 0) 1))))))
      (if (= (field it 0) limit)
          (setfield count 0 (+ (field count 0) 1))
          0)))))))
""".format(g=grid)
    return """
(let (four (float 4))
 (let (limit 24)
  (let (count (block 0 0))
   (seq
    (for py 0 {m}
     (for px 0 {m}
      {inner}))
    (field count 0)))))
""".format(m=grid - 1, inner=inner)


def nestexc_src(n):
    return """
(letrec ((f (fun (n) (if (= n 0) (raise 1) (try (f (- n 1)) e (raise (+ e 1)))))))
  (let (acc (block 0 0))
    (seq
      (for i 1 %d
        (try (f (mod i 13)) e (setfield acc 0 (land (+ (field acc 0) e) 262143))))
      (field acc 0))))
""" % n


BENCH_SPECS = {
    # name: (bench-scale source, corpus-scale source)
    "fib": (lambda: fib_src(30), lambda: fib_src(13)),
    "tak": (lambda: tak_src(18, 12, 6), lambda: tak_src(9, 6, 3)),
    "quicksort": (lambda: quicksort_src(100_000), lambda: quicksort_src(120)),
    "listsort": (lambda: listsort_src(4000), lambda: listsort_src(60)),
    "floatloop": (lambda: floatloop_src(100), lambda: floatloop_src(10)),
    "nestexc": (lambda: nestexc_src(30_000), lambda: nestexc_src(40)),
}


def bench_source(name):
    return BENCH_SPECS[name][0]()


def corpus_benchmarks():
    return [(name + "-small", spec[1]()) for name, spec in BENCH_SPECS.items()]


# --- handwritten assembly programs covering opcodes the compiler rarely
# or never emits (PUSHACC, the compare-branch family, GETMETHOD, ...) ---

ASM_PROGRAMS = [
    ("asm-pushacc", """
        CONSTINT 7
        PUSHACC 0
        PUSHACC 1
        ADDINT
        ADDINT
        POP 1
    """),
    ("asm-beq-chain", """
        CONSTINT 5
        BEQ 4 no
        BNEQ 5 no
        BLTINT 4 yes
    no: CONSTINT -1
        BRANCH end
    yes:
        BLEINT 5 y2
        BRANCH no
    y2: BGTINT 6 no2
        BGEINT 5 final
    no2: CONSTINT -2
        BRANCH end
    final:
        CONSTINT 123
    end:
        STOP
    """),
    ("asm-getmethod", """
        ATOM 0
        PUSH
        CONSTINT 31
        PUSH
        CONSTINT 63
        PUSH
        CONSTINT 2
        MAKEBLOCK 0 3
        MAKEBLOCK 0 1
        PUSH
        CONSTINT 1
        GETMETHOD
        POP 2
    """),
    ("asm-floatfields", """
        .prim caml_float_of_int
        CONSTINT 3
        C_CALL 0 1
        PUSH
        CONSTINT 2
        C_CALL 0 1
        PUSH
        CONSTINT 1
        C_CALL 0 1
        MAKEFLOATBLOCK 3
        PUSH
        ACC 0
        GETFLOATFIELD 1
        PUSH
        ACC 1
        SETFLOATFIELD 0
        ACC 0
        GETFLOATFIELD 0
        PUSH
        ACC 1
        VECTLENGTH
        POP 2
    """),
    ("asm-globals", """
        .global int 40
        .global unit
        .string "zw"
        GETGLOBAL 0
        PUSH
        CONSTINT 2
        ADDINT
        SETGLOBAL 1
        GETGLOBAL 1
        PUSH
        GETGLOBAL 2
        PUSH
        CONSTINT 0
        PUSH
        ACC 1
        GETSTRINGCHAR
        PUSH
        CONSTINT 1
        PUSH
        CONSTINT 88
        PUSH
        ACC 3
        SETSTRINGCHAR
        ACC 2
        POP 3
    """),
    ("asm-switch-mixed", """
        CONSTINT 1
        PUSH
        CONSTINT 0
        MAKEBLOCK 2 2
        SWITCH 1 3 i0 t0 t1 t2
    i0: CONSTINT -5
        BRANCH end
    t0: CONSTINT 10
        BRANCH end
    t1: CONSTINT 20
        BRANCH end
    t2: CONSTINT 30
    end:
        STOP
    """),
    ("asm-assign", """
        CONSTINT 11
        PUSH
        CONSTINT 22
        PUSH
        CONSTINT 33
        ASSIGN 1
        ACC 1
        PUSH
        ACC 1
        ADDINT
        POP 2
    """),
]


def corpus_asm():
    return [(name, zasm.assemble(text)) for name, text in ASM_PROGRAMS]


# --- randomized closed expressions ---

_STR_LITS = ['"abcdefgh"', '"01234567"', '"zy x.w,v"']


class _Gen:
    def __init__(self, rng):
        self.r = rng

    def int_expr(self, env, depth):
        r = self.r
        ints = [n for n, t in env if t == "int"]
        if depth <= 0:
            if ints and r.random() < 0.5:
                return r.choice(ints)
            return str(r.choice([0, 1, 2, 3, -1, 7, 100, -41, 65535]))
        arrays = [n for n, t in env if t == "arr8"]
        funs = [(n, t) for n, t in env if isinstance(t, tuple) and t[0] == "fun"]
        choices = ["const", "arith", "arith", "cmp"]
        if ints:
            choices += ["var", "var", "arith"]
        if depth > 0:
            choices += ["let", "if", "seq", "tryraise", "switch", "forloop",
                        "block", "float2int", "strop", "print"]
            if arrays:
                choices += ["vget", "vget"]
            if funs:
                choices += ["call", "call"]
        kind = r.choice(choices)

        if kind == "const":
            return str(r.choice([0, 1, 2, 3, -1, 7, 100, -41, 65535]))
        if kind == "var":
            return r.choice(ints)
        if kind == "arith":
            op = r.choice(["+", "-", "*", "land", "lor", "lxor", "/", "mod",
                           "lsl", "lsr", "asr", "neg"])
            a = self.int_expr(env, depth - 1)
            if op == "neg":
                return "(neg %s)" % a
            if op in ("/", "mod"):
                return "(%s %s (lor %s 1))" % (op, a, self.int_expr(env, depth - 1))
            if op in ("lsl", "lsr", "asr"):
                return "(%s %s %d)" % (op, a, r.randrange(0, 8))
            return "(%s %s %s)" % (op, a, self.int_expr(env, depth - 1))
        if kind == "cmp":
            op = r.choice(["=", "<>", "<", "<=", ">", ">=", "isint", "not"])
            if op in ("isint", "not"):
                return "(%s %s)" % (op, self.int_expr(env, depth - 1))
            return "(%s %s %s)" % (op, self.int_expr(env, depth - 1),
                                   self.int_expr(env, depth - 1))
        if kind == "let":
            name = "v%d" % r.randrange(1000)
            t = r.choice(["int", "int", "arr8", "str", "float", "funint"])
            if t == "funint":
                fn, ft = self.fun_expr(env, depth - 1)
                return "(let (%s %s) %s)" % (
                    name, fn, self.int_expr(env + [(name, ft)], depth - 1))
            return "(let (%s %s) %s)" % (
                name, self.typed_expr(t, env, depth - 1),
                self.int_expr(env + [(name, t)], depth - 1))
        if kind == "if":
            return "(if %s %s %s)" % (self.int_expr(env, depth - 1),
                                      self.int_expr(env, depth - 1),
                                      self.int_expr(env, depth - 1))
        if kind == "seq":
            return "(seq %s %s)" % (self.int_expr(env, depth - 1),
                                    self.int_expr(env, depth - 1))
        if kind == "tryraise":
            body = self.int_expr(env, depth - 1)
            if r.random() < 0.6:
                body = "(if %s (raise %s) %s)" % (
                    self.int_expr(env, depth - 1),
                    self.int_expr(env, depth - 1), body)
            return "(try %s exn (+ exn %s))" % (body, self.int_expr(env, depth - 1))
        if kind == "switch":
            n = r.randrange(2, 5)
            arms = " ".join("(%d %s)" % (i, self.int_expr(env, depth - 1))
                            for i in range(n))
            return "(switch (land %s %d) (%s))" % (
                self.int_expr(env, depth - 1), n - 1, arms)
        if kind == "forloop":
            acc = "a%d" % r.randrange(1000)
            i = "i%d" % r.randrange(1000)
            return ("(let (%s (block 0 0)) (seq (for %s 0 %d "
                    "(setfield %s 0 (land (+ (field %s 0) %s) 8191))) "
                    "(field %s 0)))"
                    % (acc, i, r.randrange(0, 6), acc, acc,
                       self.int_expr(env + [(i, "int")], depth - 1), acc))
        if kind == "block":
            k = r.randrange(1, 4)
            items = " ".join(self.int_expr(env, depth - 1) for _ in range(k))
            return "(field (block %d %s) %d)" % (r.randrange(0, 3), items,
                                                 r.randrange(0, k))
        if kind == "vget" and arrays:
            return "(vget %s (land %s 7))" % (r.choice(arrays),
                                              self.int_expr(env, depth - 1))
        if kind == "call" and funs:
            name, t = r.choice(funs)
            args = " ".join(self.int_expr(env, depth - 1)
                            for _ in range(len(t[1])))
            return "(%s %s)" % (name, args)
        if kind == "float2int":
            return "(trunc %s)" % self.float_expr(env, depth - 1)
        if kind == "strop":
            strs = [n for n, t in env if t == "str"]
            s = r.choice(strs) if strs else r.choice(_STR_LITS)
            if r.random() < 0.5:
                return "(sget %s (land %s 7))" % (s, self.int_expr(env, depth - 1))
            return "(+ (slen %s) (schar %s (land %s 7)))" % (
                s, s, self.int_expr(env, depth - 1))
        if kind == "print":
            return "(seq (print-int %s) %s)" % (self.int_expr(env, depth - 1),
                                                self.int_expr(env, depth - 1))
        return "1"

    def float_expr(self, env, depth):
        r = self.r
        floats = [n for n, t in env if t == "float"]
        if depth <= 0 or (r.random() < 0.3):
            if floats and r.random() < 0.5:
                return r.choice(floats)
            return "(float %s)" % self.int_expr(env, max(depth - 1, 0))
        op = r.choice(["+.", "-.", "*.", "/.", "sqrt"])
        if op == "sqrt":
            return "(sqrt %s)" % self.float_expr(env, depth - 1)
        return "(%s %s %s)" % (op, self.float_expr(env, depth - 1),
                               self.float_expr(env, depth - 1))

    def fun_expr(self, env, depth):
        nargs = self.r.randrange(1, 4)
        params = ["p%d" % self.r.randrange(1000) for _ in range(nargs)]
        inner = env + [(p, "int") for p in params]
        body = self.int_expr(inner, depth - 1)
        return ("(fun (%s) %s)" % (" ".join(params), body),
                ("fun", ["int"] * nargs, "int"))

    def typed_expr(self, t, env, depth):
        if t == "int":
            return self.int_expr(env, depth)
        if t == "arr8":
            return "(array-make 8 %s)" % self.int_expr(env, depth - 1)
        if t == "str":
            return self.r.choice(_STR_LITS)
        if t == "float":
            return self.float_expr(env, depth)
        raise ValueError(t)

    def toplevel(self):
        r = self.r
        kind = r.choice(["int", "int", "int", "rec", "float", "block"])
        if kind == "rec":
            f = "f%d" % r.randrange(1000)
            n = "n%d" % r.randrange(1000)
            env = [(n, "int"), (f, ("fun", ["int"], "int"))]
            body = self.int_expr(env, 2)
            return ("(letrec ((%s (fun (%s) (if (<= %s 0) %s "
                    "(+ %s (%s (- %s 1))))))) (%s %d))"
                    % (f, n, n, self.int_expr([(n, 'int')], 2),
                       body, f, n, f, r.randrange(1, 9)))
        if kind == "float":
            return self.float_expr([], 3)
        if kind == "block":
            k = r.randrange(1, 4)
            items = " ".join(self.int_expr([], 2) for _ in range(k))
            return "(block %d %s)" % (r.randrange(0, 4), items)
        return self.int_expr([], 4)


def random_sources(count, seed=20_08):
    """Deterministic list of (name, source) pairs, oracle-filtered."""
    from . import treewalk
    rng = random.Random(seed)
    gen = _Gen(rng)
    out = []
    attempts = 0
    while len(out) < count and attempts < count * 30:
        attempts += 1
        src = gen.toplevel()
        try:
            expr = lamb.parse_lambda(src)
            outcome, rendered, output, steps = treewalk.evaluate(expr, 60_000)
        except Exception:
            continue
        if steps > 50_000 or len(output) > 4000:
            continue
        out.append(("rand-%03d" % len(out), src))
    if len(out) < count:
        raise RuntimeError("generator could not fill the corpus")
    return out


def full_corpus(random_count=40, seed=20_08):
    """(name, Segment) pairs: benchmarks at small scale, asm extras,
    randomized expressions."""
    entries = []
    for name, src in corpus_benchmarks():
        entries.append((name, lamb.compile_source(src), src))
    for name, seg in corpus_asm():
        entries.append((name, seg, None))
    for name, src in random_sources(random_count, seed):
        entries.append((name, lamb.compile_source(src), src))
    return entries
