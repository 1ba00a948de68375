"""Integer transition systems: data model, text format, and a ground
interpreter used as the brute-force oracle in tests.

The text format::

    # comment
    vars x y
    start main
    main(x, y) -> f(x, y) [true] cost 1
    f(x, y) -> f(x-1, y) [x > 0 && y >= 0] cost y

Guards are conjunctions of integer relations; omitted costs default to 1.
Identifiers not declared under ``vars`` are temporary variables.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence, Union

from .terms import (
    Atom,
    Conjunction,
    Poly,
    Update,
    VarKind,
    Variable,
    normalize_relation,
)

START_NAME = "main"
SINK_NAME = "sink"


@dataclass(frozen=True)
class Location:
    name: str

    def __str__(self) -> str:
        return self.name


class Infinity:
    """Distinguished infinite cost, produced only by the analysis."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "inf"


INF = Infinity()

Cost = Union[Poly, Infinity]


@dataclass(frozen=True)
class Transition:
    src: Location
    dst: Location
    update: Update
    guard: Conjunction
    cost: Cost

    @property
    def is_simple_loop(self) -> bool:
        return self.src == self.dst

    def temporaries(self) -> frozenset[Variable]:
        out = {
            v
            for v in self.guard.variables() | self.update.temporaries()
            if v.kind == VarKind.TEMPORARY
        }
        if isinstance(self.cost, Poly):
            out |= {
                v for v in self.cost.variables() if v.kind == VarKind.TEMPORARY
            }
        return frozenset(out)

    def render(self) -> str:
        cost = "inf" if isinstance(self.cost, Infinity) else self.cost.render()
        args = ", ".join(v.name for v in self.update.variables)
        return (
            f"{self.src}({args}) -> {self.dst}({self.update.render()}) "
            f"[{self.guard.render()}] cost {cost}"
        )

    def __str__(self) -> str:
        return self.render()


@dataclass(frozen=True)
class ITS:
    program_vars: tuple[Variable, ...]
    transitions: tuple[Transition, ...]
    start: Location
    locations: frozenset[Location]

    @staticmethod
    def of(program_vars: Sequence[Variable], transitions: Iterable[Transition]) -> "ITS":
        ts = tuple(transitions)
        locs = frozenset(
            itertools.chain.from_iterable((t.src, t.dst) for t in ts)
        ) | {Location(START_NAME)}
        return ITS(tuple(program_vars), ts, Location(START_NAME), locs)

    def to_text(self) -> str:
        lines = [
            "vars " + " ".join(v.name for v in self.program_vars),
            f"start {self.start.name}",
        ]
        for t in self.transitions:
            if isinstance(t.cost, Infinity):
                raise ValueError("infinite costs have no input syntax")
            args = ", ".join(v.name for v in self.program_vars)
            exprs = ", ".join(_input_expr(p) for p in t.update.exprs)
            guard = (
                "true"
                if not t.guard.atoms
                else " && ".join(_input_expr(a.lhs) + " > 0" for a in t.guard.atoms)
            )
            lines.append(
                f"{t.src.name}({args}) -> {t.dst.name}({exprs}) "
                f"[{guard}] cost {_input_expr(t.cost)}"
            )
        return "\n".join(lines) + "\n"


def _input_expr(p: Poly) -> str:
    """Render a polynomial in the input grammar (no ^, * spelled out)."""
    if p.is_zero():
        return "0"
    parts = []
    for i, (mono, c) in enumerate(p.terms()):
        if c.denominator != 1:
            raise ValueError("input syntax requires integer coefficients")
        factors = []
        for v, e in mono:
            factors.extend([v.name] * e)
        mag = abs(int(c))
        if not factors:
            piece = str(mag)
        elif mag == 1:
            piece = "*".join(factors)
        else:
            piece = "*".join([str(mag)] + factors)
        if i == 0:
            parts.append(piece if c > 0 else f"-{piece}")
        else:
            parts.append(f"+ {piece}" if c > 0 else f"- {piece}")
    return " ".join(parts)


class ParseError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{line}:{column}: {message}")
        self.line = line
        self.column = column


_SYMBOLS = ("->", "&&", "<=", ">=", "==", "(", ")", ",", "[", "]", "+", "-", "*", "<", ">")


def _tokenize(text: str) -> list[tuple[str, str, int, int]]:
    tokens = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        col = 0
        n = len(line)
        while col < n:
            ch = line[col]
            if ch.isspace():
                col += 1
                continue
            matched = None
            for sym in _SYMBOLS:
                if line.startswith(sym, col):
                    matched = sym
                    break
            if matched:
                tokens.append(("sym", matched, lineno, col + 1))
                col += len(matched)
                continue
            if ch.isdigit():
                j = col
                while j < n and line[j].isdigit():
                    j += 1
                if j < n and (line[j] == "." or line[j] == "/"):
                    raise ParseError("non-integer literal", lineno, col + 1)
                tokens.append(("int", line[col:j], lineno, col + 1))
                col = j
                continue
            if ch.isalpha() or ch == "_":
                j = col
                while j < n and (line[j].isalnum() or line[j] == "_"):
                    j += 1
                tokens.append(("ident", line[col:j], lineno, col + 1))
                col = j
                continue
            raise ParseError(f"unexpected character {ch!r}", lineno, col + 1)
        if tokens and tokens[-1][0] != "newline":
            tokens.append(("newline", "", lineno, n + 1))
    tokens.append(("eof", "", len(text.splitlines()) + 1, 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.program_vars: list[Variable] = []
        self.var_map: dict[str, Variable] = {}
        self.temps: dict[str, Variable] = {}

    def peek(self):
        return self.tokens[self.pos]

    def next(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message: str):
        kind, value, line, col = self.peek()
        raise ParseError(message, line, col)

    def expect(self, kind: str, value: str | None = None) -> str:
        k, v, line, col = self.peek()
        if k != kind or (value is not None and v != value):
            want = value if value is not None else kind
            raise ParseError(f"expected {want!r}, found {v or k!r}", line, col)
        self.next()
        return v

    def skip_newlines(self):
        while self.peek()[0] == "newline":
            self.next()

    def ident(self) -> str:
        k, v, line, col = self.peek()
        if k != "ident":
            raise ParseError("expected identifier", line, col)
        if v == "inf":
            raise ParseError("infinite costs are not allowed in input", line, col)
        self.next()
        return v

    def lookup(self, name: str) -> Variable:
        if name in self.var_map:
            return self.var_map[name]
        if name not in self.temps:
            self.temps[name] = Variable(name, VarKind.TEMPORARY)
        return self.temps[name]

    # expr := term (('+'|'-') term)*
    # term := factor ('*' factor)*
    # factor := INT | IDENT | '(' expr ')' | '-' factor
    def expr(self) -> Poly:
        p = self.term()
        while self.peek()[:2] in (("sym", "+"), ("sym", "-")):
            op = self.next()[1]
            q = self.term()
            p = p + q if op == "+" else p - q
        return p

    def term(self) -> Poly:
        p = self.factor()
        while self.peek()[:2] == ("sym", "*"):
            self.next()
            p = p * self.factor()
        return p

    def factor(self) -> Poly:
        k, v, line, col = self.peek()
        if k == "int":
            self.next()
            return Poly.const(int(v))
        if k == "ident":
            return Poly.var(self.lookup(self.ident()))
        if (k, v) == ("sym", "("):
            self.next()
            p = self.expr()
            self.expect("sym", ")")
            return p
        if (k, v) == ("sym", "-"):
            self.next()
            return -self.factor()
        raise ParseError("expected expression", line, col)

    def relation(self) -> list[Atom]:
        left = self.expr()
        k, v, line, col = self.peek()
        if (k, v) not in {("sym", o) for o in ("<", "<=", ">", ">=", "==")}:
            raise ParseError("expected comparison operator", line, col)
        self.next()
        right = self.expr()
        return normalize_relation(v, left, right)

    def guard(self) -> Conjunction:
        k, v, _, _ = self.peek()
        if (k, v) == ("ident", "true"):
            self.next()
            return Conjunction(())
        atoms: list[Atom] = []
        atoms.extend(self.relation())
        while self.peek()[:2] == ("sym", "&&"):
            self.next()
            atoms.extend(self.relation())
        return Conjunction(atoms)

    def header(self):
        self.skip_newlines()
        k, v, line, col = self.peek()
        if (k, v) != ("ident", "vars"):
            raise ParseError("expected 'vars' header", line, col)
        self.next()
        while self.peek()[0] == "ident":
            name = self.ident()
            if name in self.var_map:
                self.error(f"duplicate program variable {name!r}")
            var = Variable(name, VarKind.PROGRAM)
            self.var_map[name] = var
            self.program_vars.append(var)
        if not self.program_vars:
            self.error("at least one program variable is required")
        self.expect("newline")
        self.skip_newlines()
        k, v, line, col = self.peek()
        if (k, v) != ("ident", "start"):
            raise ParseError("expected 'start' header", line, col)
        self.next()
        start = self.ident()
        if start != START_NAME:
            k, v, line, col = self.tokens[self.pos - 1]
            raise ParseError(f"start location must be {START_NAME!r}", line, col)
        if self.peek()[0] == "newline":
            self.next()

    def rule(self) -> Transition:
        src = self.ident()
        if src == SINK_NAME:
            self.error(f"location name {SINK_NAME!r} is reserved")
        self.expect("sym", "(")
        lhs_args = [self.ident()]
        while self.peek()[:2] == ("sym", ","):
            self.next()
            lhs_args.append(self.ident())
        self.expect("sym", ")")
        if lhs_args != [v.name for v in self.program_vars]:
            k, v, line, col = self.peek()
            raise ParseError(
                "left-hand side arguments must list the declared program "
                "variables in order",
                line,
                col,
            )
        self.expect("sym", "->")
        dst = self.ident()
        if dst == SINK_NAME:
            self.error(f"location name {SINK_NAME!r} is reserved")
        self.expect("sym", "(")
        exprs = [self.expr()]
        while self.peek()[:2] == ("sym", ","):
            self.next()
            exprs.append(self.expr())
        self.expect("sym", ")")
        if len(exprs) != len(self.program_vars):
            k, v, line, col = self.peek()
            raise ParseError(
                f"expected {len(self.program_vars)} update expressions, "
                f"found {len(exprs)}",
                line,
                col,
            )
        self.expect("sym", "[")
        guard = self.guard()
        self.expect("sym", "]")
        cost: Poly = Poly.const(1)
        if self.peek()[:2] == ("ident", "cost"):
            self.next()
            cost = self.expr()
        if self.peek()[0] == "newline":
            self.next()
        return Transition(
            Location(src),
            Location(dst),
            Update(tuple(self.program_vars), exprs),
            guard,
            cost,
        )

    def parse(self) -> ITS:
        self.header()
        transitions = []
        self.skip_newlines()
        while self.peek()[0] != "eof":
            transitions.append(self.rule())
            self.skip_newlines()
        if not transitions:
            self.error("at least one transition is required")
        return ITS.of(self.program_vars, transitions)


def parse(text: str) -> ITS:
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# ground interpreter (the oracle)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Configuration:
    loc: Location
    values: tuple[int, ...]

    def __str__(self) -> str:
        return f"{self.loc}({', '.join(map(str, self.values))})"


def step(
    cfg: Configuration,
    transition: Transition,
    theta: Mapping[Variable, int] | None = None,
) -> tuple[Configuration, int] | None:
    """One evaluation step; None if the guard is infeasible under theta."""
    if isinstance(transition.cost, Infinity):
        raise ValueError("the oracle only handles input-legal transitions")
    if cfg.loc != transition.src:
        return None
    env: dict[Variable, int] = dict(zip(transition.update.variables, cfg.values))
    if theta:
        env.update(theta)
    missing = transition.temporaries() - set(env)
    if missing:
        raise ValueError(f"unassigned temporaries: {sorted(v.name for v in missing)}")
    if not transition.guard.evaluate(env):
        return None
    values = tuple(p.evaluate_int(env) for p in transition.update.exprs)
    cost = transition.cost.evaluate_int(env)
    return Configuration(transition.dst, values), cost


@dataclass(frozen=True)
class FuelExhausted:
    """Exploration did not close every branch; carries the best bound found."""

    best: int


def _theta_choices(
    transition: Transition, temp_range: tuple[int, int]
) -> Iterator[dict[Variable, int]]:
    temps = sorted(transition.temporaries(), key=lambda v: v.name)
    lo, hi = temp_range
    if not temps:
        yield {}
        return
    for combo in itertools.product(range(lo, hi + 1), repeat=len(temps)):
        yield dict(zip(temps, combo))


def derivation_height(
    its: ITS,
    cfg: Configuration,
    max_steps: int = 30,
    temp_range: tuple[int, int] = (-5, 5),
) -> int | FuelExhausted:
    """Supremum of run costs from cfg, by exhaustive bounded exploration.

    Temporaries are enumerated over temp_range and runs are cut after
    max_steps; if any branch is cut the result is a FuelExhausted lower
    bound rather than an exact value.
    """

    def explore(c: Configuration, steps_left: int) -> tuple[int, bool]:
        successors = []
        for t in its.transitions:
            if t.src != c.loc:
                continue
            for theta in _theta_choices(t, temp_range):
                r = step(c, t, theta)
                if r is not None:
                    successors.append(r)
        if not successors:
            return 0, True
        if steps_left == 0:
            return 0, False
        best, closed = 0, True
        for nxt, cost in successors:
            sub, sub_closed = explore(nxt, steps_left - 1)
            best = max(best, cost + sub)
            closed = closed and sub_closed
        return best, closed

    value, closed = explore(cfg, max_steps)
    return value if closed else FuelExhausted(value)
