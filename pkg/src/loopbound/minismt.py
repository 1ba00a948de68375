"""A tiny SMT-LIB2 solver for quantifier-free conjunctions of integer
polynomial (in)equalities, run as ``python -m loopbound.minismt``.

It exists so the analyzer works out of the box on machines without an SMT
solver; any external solver that speaks SMT-LIB2 with named assertions and
unsat cores can be used instead.  Supported commands: set-option, set-logic,
declare-const/declare-fun (Int), assert (with ``(! f :named L)``), check-sat,
get-model, get-unsat-core, reset, exit.

Decision procedure: satisfiability by deterministic local search plus small
box enumeration; unsatisfiability by Fourier-Motzkin elimination over the
rationals after integer tightening, with nonlinear monomials abstracted as
fresh variables.  Anything it cannot decide is reported as ``unknown``.
"""

from __future__ import annotations

import sys
from fractions import Fraction
from itertools import product
from math import gcd

# ---------------------------------------------------------------------------
# s-expression reading
# ---------------------------------------------------------------------------


def tokenize(text: str):
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif ch in "()":
            yield ch
            i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "();":
                j += 1
            yield text[i:j]
            i = j


def parse_sexprs(tokens):
    stack = [[]]
    for tok in tokens:
        if tok == "(":
            stack.append([])
        elif tok == ")":
            done = stack.pop()
            if not stack:
                raise SyntaxError("unbalanced ')'")
            stack[-1].append(done)
        else:
            stack[-1].append(tok)
    if len(stack) != 1:
        raise SyntaxError("unbalanced '('")
    return stack[0]


# ---------------------------------------------------------------------------
# terms: polynomials as {monomial-tuple: int-coefficient}
# ---------------------------------------------------------------------------


def poly_const(c):
    return {(): c} if c else {}


def poly_var(name):
    return {(name,): 1}


def poly_add(p, q):
    out = dict(p)
    for m, c in q.items():
        s = out.get(m, 0) + c
        if s:
            out[m] = s
        else:
            out.pop(m, None)
    return out


def poly_neg(p):
    return {m: -c for m, c in p.items()}

def poly_mul(p, q):
    out = {}
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            m = tuple(sorted(m1 + m2))
            s = out.get(m, 0) + c1 * c2
            if s:
                out[m] = s
            else:
                out.pop(m, None)
    return out


def term_to_poly(sexpr, declared):
    if isinstance(sexpr, str):
        if sexpr.lstrip("-").isdigit():
            return poly_const(int(sexpr))
        if sexpr in declared:
            return poly_var(sexpr)
        raise ValueError(f"undeclared symbol {sexpr!r}")
    if not sexpr:
        raise ValueError("empty term")
    head, args = sexpr[0], sexpr[1:]
    if head == "+":
        out = {}
        for a in args:
            out = poly_add(out, term_to_poly(a, declared))
        return out
    if head == "-":
        if len(args) == 1:
            return poly_neg(term_to_poly(args[0], declared))
        out = term_to_poly(args[0], declared)
        for a in args[1:]:
            out = poly_add(out, poly_neg(term_to_poly(a, declared)))
        return out
    if head == "*":
        out = poly_const(1)
        for a in args:
            out = poly_mul(out, term_to_poly(a, declared))
        return out
    raise ValueError(f"unsupported term {sexpr!r}")


def formula_to_constraints(sexpr, declared):
    """Flatten a formula into constraints ``poly >= 0``.

    Returns a list of polynomial dicts, each meaning "value >= 0"; strict
    comparisons are tightened over the integers.
    """
    if sexpr == "true":
        return []
    if sexpr == "false":
        return [poly_const(-1)]
    if isinstance(sexpr, list) and sexpr and sexpr[0] == "and":
        out = []
        for sub in sexpr[1:]:
            out.extend(formula_to_constraints(sub, declared))
        return out
    if isinstance(sexpr, list) and sexpr and sexpr[0] == "not":
        inner = formula_to_constraints(sexpr[1], declared)
        if len(inner) != 1:
            raise ValueError("negation is only supported on atoms")
        # not (p >= 0)  iff  -p - 1 >= 0
        return [poly_add(poly_neg(inner[0]), poly_const(-1))]
    if isinstance(sexpr, list) and len(sexpr) == 3 and sexpr[0] in ("<", "<=", ">", ">=", "="):
        op = sexpr[0]
        left = term_to_poly(sexpr[1], declared)
        right = term_to_poly(sexpr[2], declared)
        diff = poly_add(left, poly_neg(right))
        if op == ">":
            return [poly_add(diff, poly_const(-1))]
        if op == ">=":
            return [diff]
        if op == "<":
            return [poly_add(poly_neg(diff), poly_const(-1))]
        if op == "<=":
            return [poly_neg(diff)]
        return [diff, poly_neg(diff)]
    raise ValueError(f"unsupported formula {sexpr!r}")


def poly_eval(p, env):
    total = 0
    for m, c in p.items():
        v = c
        for name in m:
            v *= env[name]
        total += v
    return total


# ---------------------------------------------------------------------------
# satisfiability search
# ---------------------------------------------------------------------------


def _violation(constraints, env):
    bad = 0
    for p in constraints:
        v = poly_eval(p, env)
        if v < 0:
            bad += min(-v, 10**6)
    return bad


def _linear_coeff(p, name, env):
    """d(p)/d(name) when p is linear in name, with other variables fixed."""
    coeff = 0
    for m, c in p.items():
        count = sum(1 for v in m if v == name)
        if count == 0:
            continue
        if count > 1:
            return None
        value = c
        for v in m:
            if v != name:
                value *= env[v]
        coeff += value
    return coeff


def _repair(constraints, variables, start, steps=500):
    env = dict(start)
    for _ in range(steps):
        total = _violation(constraints, env)
        if total == 0:
            return env
        moved = False
        for p in constraints:
            pval = poly_eval(p, env)
            if pval >= 0:
                continue
            best = None
            for name in sorted({v for m in p for v in m}):
                base = env[name]
                candidates = {base + d for d in (1, -1, 2, -2, 3, -3, 8, -8, 32, -32)}
                coeff = _linear_coeff(p, name, env)
                if coeff:
                    # smallest move of this variable that satisfies p outright
                    if coeff > 0:
                        candidates.add(base + (-pval + coeff - 1) // coeff)
                    else:
                        candidates.add(base - ((-pval + -coeff - 1) // -coeff))
                for new_value in sorted(candidates):
                    env[name] = new_value
                    t = _violation(constraints, env)
                    pv = max(0, -poly_eval(p, env))
                    key = (t, pv, abs(new_value - base), name, new_value)
                    if best is None or key < best:
                        best = key
                env[name] = base
            if best is not None:
                t, pv, _, name, new_value = best
                # accept strict improvements, or sideways moves that strictly
                # reduce the violation of the constraint under repair
                if t < total or (t == total and pv < -pval):
                    env[name] = new_value
                    moved = True
                    break
        if not moved:
            return None
    return None


def find_model(constraints, variables):
    names = sorted(variables)
    starts = [
        {v: 0 for v in names},
        {v: 1 for v in names},
        {v: -1 for v in names},
        {v: 2 for v in names},
    ]
    for start in starts:
        env = _repair(constraints, names, start)
        if env is not None and _violation(constraints, env) == 0:
            return env
    # small exhaustive boxes as a deterministic fallback
    for bound in (1, 2, 3, 4):
        if (2 * bound + 1) ** len(names) > 30000:
            break
        for combo in product(range(-bound, bound + 1), repeat=len(names)):
            env = dict(zip(names, combo))
            if _violation(constraints, env) == 0:
                return env
    return None


# ---------------------------------------------------------------------------
# unsatisfiability via linearized, integer-tightened Fourier-Motzkin
# ---------------------------------------------------------------------------


def _linearize(tagged):
    """Monomials become variables; returns [(coeffs, const, labels)]."""
    rows = []
    mono_vars = set()
    for p, labels in tagged:
        coeffs = {}
        const = Fraction(0)
        for m, c in p.items():
            if not m:
                const += c
            else:
                coeffs[m] = coeffs.get(m, Fraction(0)) + c
                mono_vars.add(m)
        rows.append((coeffs, const, labels))
    # squares and other even-powered monomials are non-negative
    for m in sorted(mono_vars):
        counts = {}
        for name in m:
            counts[name] = counts.get(name, 0) + 1
        if counts and all(e % 2 == 0 for e in counts.values()):
            rows.append(({m: Fraction(1)}, Fraction(0), frozenset()))
    return rows


def _tighten(coeffs, const):
    """Divide by the gcd of the coefficients, rounding the constant down.

    Valid for integer-valued monomials: sum(c_i * m_i) >= -const implies
    sum(c_i/g * m_i) >= ceil(-const/g).
    """
    if not coeffs:
        return coeffs, const
    denom = 1
    for c in list(coeffs.values()) + [const]:
        denom = denom * c.denominator // gcd(denom, c.denominator)
    ints = [int(c * denom) for c in coeffs.values()]
    g = 0
    for c in ints:
        g = gcd(g, c)
    if g <= 1:
        return coeffs, const
    rhs = -const * denom  # sum(int coeffs * m) >= rhs
    new_rhs = -(-rhs // g)  # ceil
    new_coeffs = {m: Fraction(int(c * denom), g) for m, c in coeffs.items()}
    return new_coeffs, Fraction(-new_rhs)


def prove_unsat(tagged, max_rows=4000):
    """Returns a core label set if the constraints are unsatisfiable over
    the integers, None if no contradiction was derived."""
    rows = []
    for coeffs, const, labels in _linearize(tagged):
        coeffs = {m: Fraction(c) for m, c in coeffs.items()}
        coeffs, const = _tighten(coeffs, const)
        if not coeffs and const < 0:
            return labels
        rows.append((coeffs, const, labels))
    variables = sorted({m for coeffs, _, _ in rows for m in coeffs})
    for _ in range(len(variables)):
        if not rows:
            return None
        # eliminate the variable with the fewest pairings first
        counts = []
        for v in variables:
            pos = sum(1 for c, _, _ in rows if c.get(v, 0) > 0)
            neg = sum(1 for c, _, _ in rows if c.get(v, 0) < 0)
            if pos or neg:
                counts.append((pos * neg, v))
        if not counts:
            break
        _, target = min(counts)
        lower, upper, rest = [], [], []
        for coeffs, const, labels in rows:
            c = coeffs.get(target, Fraction(0))
            if c > 0:
                lower.append((coeffs, const, labels))
            elif c < 0:
                upper.append((coeffs, const, labels))
            else:
                rest.append((coeffs, const, labels))
        new_rows = rest
        for lc, lk, ll in lower:
            for uc, uk, ul in upper:
                a = lc[target]
                b = -uc[target]
                coeffs = {}
                for m, c in lc.items():
                    if m != target:
                        coeffs[m] = coeffs.get(m, Fraction(0)) + b * c
                for m, c in uc.items():
                    if m != target:
                        coeffs[m] = coeffs.get(m, Fraction(0)) + a * c
                coeffs = {m: c for m, c in coeffs.items() if c}
                const = b * lk + a * uk
                labels = ll | ul
                coeffs, const = _tighten(coeffs, const)
                if not coeffs:
                    if const < 0:
                        return labels
                    continue
                new_rows.append((coeffs, const, labels))
        if len(new_rows) > max_rows:
            return None
        rows = new_rows
        variables = [v for v in variables if v != target]
    for coeffs, const, labels in rows:
        if not coeffs and const < 0:
            return labels
    return None


# ---------------------------------------------------------------------------
# the solver loop
# ---------------------------------------------------------------------------


class Solver:
    def __init__(self):
        self.reset()

    def reset(self):
        self.declared: set[str] = set()
        self.assertions: list[tuple[str, object]] = []
        self.auto = 0
        self.last_verdict: str | None = None
        self.last_model: dict[str, int] | None = None
        self.last_core: list[str] | None = None

    def declare(self, name: str):
        self.declared.add(name)

    def add_assertion(self, sexpr):
        label = None
        if isinstance(sexpr, list) and sexpr and sexpr[0] == "!":
            body = sexpr[1]
            rest = sexpr[2:]
            for i, item in enumerate(rest):
                if item == ":named" and i + 1 < len(rest):
                    label = rest[i + 1]
            sexpr = body
        if label is None:
            label = f"a!{self.auto}"
            self.auto += 1
        self.assertions.append((label, sexpr))

    def check_sat(self) -> str:
        tagged = []
        try:
            for label, sexpr in self.assertions:
                for p in formula_to_constraints(sexpr, self.declared):
                    tagged.append((p, frozenset([label])))
        except ValueError:
            self.last_verdict = "unknown"
            self.last_model = None
            self.last_core = None
            return "unknown"
        constraints = [p for p, _ in tagged]
        variables = {v for p in constraints for m in p for v in m}
        core = prove_unsat(tagged)
        if core is not None:
            self.last_verdict = "unsat"
            self.last_core = sorted(core)
            self.last_model = None
            return "unsat"
        env = find_model(constraints, variables)
        if env is not None:
            model = {name: env.get(name, 0) for name in sorted(self.declared)}
            self.last_verdict = "sat"
            self.last_model = model
            self.last_core = None
            return "sat"
        self.last_verdict = "unknown"
        self.last_model = None
        self.last_core = None
        return "unknown"

    def get_model(self) -> str:
        if self.last_verdict != "sat" or self.last_model is None:
            return '(error "no model available")'
        defs = []
        for name, value in self.last_model.items():
            v = str(value) if value >= 0 else f"(- {-value})"
            defs.append(f"(define-fun {name} () Int {v})")
        return "(" + " ".join(defs) + ")"

    def get_unsat_core(self) -> str:
        if self.last_verdict != "unsat" or self.last_core is None:
            return '(error "no unsat core available")'
        return "(" + " ".join(self.last_core) + ")"


def main() -> int:
    solver = Solver()
    out = sys.stdout
    buffer = ""
    depth = 0
    while True:
        line = sys.stdin.readline()
        if not line:
            break
        buffer += line
        depth = buffer.count("(") - buffer.count(")")
        if depth > 0:
            continue
        text, buffer = buffer, ""
        try:
            commands = parse_sexprs(tokenize(text))
        except SyntaxError:
            out.write('(error "parse error")\n')
            out.flush()
            continue
        for cmd in commands:
            if not isinstance(cmd, list) or not cmd:
                out.write('(error "bad command")\n')
                out.flush()
                continue
            head = cmd[0]
            if head in ("set-option", "set-logic", "set-info"):
                pass
            elif head in ("declare-const", "declare-fun"):
                solver.declare(cmd[1])
            elif head == "assert":
                solver.add_assertion(cmd[1])
            elif head == "check-sat":
                out.write(solver.check_sat() + "\n")
                out.flush()
            elif head == "get-model":
                out.write(solver.get_model() + "\n")
                out.flush()
            elif head == "get-unsat-core":
                out.write(solver.get_unsat_core() + "\n")
                out.flush()
            elif head == "reset":
                solver.reset()
            elif head == "exit":
                out.flush()
                return 0
            else:
                out.write(f'(error "unsupported command {head}")\n')
                out.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
