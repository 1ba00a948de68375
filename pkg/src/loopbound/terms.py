"""Exact symbolic arithmetic: variables, polynomials, atoms and updates.

All values are immutable and hashable.  Coefficients are rationals so that
accelerated costs like ``x*n - 1/2*n^2 + 1/2*n`` stay exact; guard atoms are
kept integer-coefficient by clearing denominators on construction.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Sequence, Union


class VarKind(Enum):
    PROGRAM = "program"
    TEMPORARY = "temporary"
    ITERATION = "iteration"


_KIND_RANK = {VarKind.PROGRAM: 0, VarKind.TEMPORARY: 1, VarKind.ITERATION: 2}


@dataclass(frozen=True)
class Variable:
    name: str
    kind: VarKind = VarKind.PROGRAM

    def sort_key(self) -> tuple:
        return (self.name, _KIND_RANK[self.kind])

    def __str__(self) -> str:
        return self.name

    def __repr__(self) -> str:
        return f"Variable({self.name!r}, {self.kind.value})"


#: The calculus' iteration counter.  Never appears in user input; substituted
#: by a fresh temporary before accelerated transitions are emitted.
ITERATION_VAR = Variable("n", VarKind.ITERATION)

Rational = Union[int, Fraction]

# A monomial is a sorted tuple of (variable, exponent) pairs with exponent >= 1.
Monomial = tuple


def _mono_key(mono: Monomial) -> tuple:
    # graded lexicographic: total degree first, then the expanded variable
    # sequence compared by name
    degree = sum(e for _, e in mono)
    expanded = tuple(
        itertools.chain.from_iterable((v.sort_key(),) * e for v, e in mono)
    )
    return (-degree, expanded)


def _mono_mul(a: Monomial, b: Monomial) -> Monomial:
    exps: dict[Variable, int] = {}
    for v, e in itertools.chain(a, b):
        exps[v] = exps.get(v, 0) + e
    return tuple(sorted(exps.items(), key=lambda p: p[0].sort_key()))


class Poly:
    """Multivariate polynomial with rational coefficients.

    Internally a canonical tuple of (monomial, coefficient) pairs sorted in
    graded lexicographic order; zero coefficients are never stored.
    """

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms: Mapping[Monomial, Rational] | None = None):
        items = []
        if terms:
            for mono, coeff in terms.items():
                c = Fraction(coeff)
                if c != 0:
                    items.append((mono, c))
        items.sort(key=lambda t: _mono_key(t[0]))
        object.__setattr__(self, "_terms", tuple(items))
        object.__setattr__(self, "_hash", hash(self._terms))

    # -- constructors -------------------------------------------------

    @staticmethod
    def const(value: Rational) -> "Poly":
        return Poly({(): value})

    @staticmethod
    def var(v: Variable) -> "Poly":
        return Poly({((v, 1),): 1})

    # -- basic queries ------------------------------------------------

    def terms(self) -> tuple:
        return self._terms

    def monomials(self) -> Iterator[tuple[Monomial, Fraction]]:
        return iter(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def is_const(self) -> bool:
        return all(mono == () for mono, _ in self._terms)

    def const_value(self) -> Fraction:
        if not self.is_const():
            raise ValueError(f"not a constant: {self}")
        return self._terms[0][1] if self._terms else Fraction(0)

    def constant_term(self) -> Fraction:
        for mono, c in self._terms:
            if mono == ():
                return c
        return Fraction(0)

    def degree(self) -> int:
        return max((sum(e for _, e in m) for m, _ in self._terms), default=0)

    def degree_in(self, v: Variable) -> int:
        deg = 0
        for mono, _ in self._terms:
            for var, e in mono:
                if var == v:
                    deg = max(deg, e)
        return deg

    def variables(self) -> frozenset[Variable]:
        return frozenset(v for mono, _ in self._terms for v, _ in mono)

    def has_integer_coefficients(self) -> bool:
        return all(c.denominator == 1 for _, c in self._terms)

    def denominator_lcm(self) -> int:
        lcm = 1
        for _, c in self._terms:
            d = c.denominator
            g = _gcd(lcm, d)
            lcm = lcm // g * d
        return lcm

    def coefficient(self, v: Variable) -> "Poly":
        """The coefficient of v in a polynomial linear in v."""
        if self.degree_in(v) > 1:
            raise ValueError(f"{self} is not linear in {v}")
        out: dict[Monomial, Fraction] = {}
        for mono, c in self._terms:
            rest = tuple((var, e) for var, e in mono if var != v)
            if len(rest) != len(mono):
                out[rest] = out.get(rest, Fraction(0)) + c
        return Poly(out)

    def drop_variable(self, v: Variable) -> "Poly":
        """The part of the polynomial not mentioning v."""
        return Poly(
            {m: c for m, c in self._terms if all(var != v for var, _ in m)}
        )

    # -- arithmetic ---------------------------------------------------

    def __add__(self, other) -> "Poly":
        other = _as_poly(other)
        out = dict(self._terms)
        for mono, c in other._terms:
            out[mono] = out.get(mono, Fraction(0)) + c
        return Poly(out)

    __radd__ = __add__

    def __neg__(self) -> "Poly":
        return Poly({m: -c for m, c in self._terms})

    def __sub__(self, other) -> "Poly":
        return self + (-_as_poly(other))

    def __rsub__(self, other) -> "Poly":
        return _as_poly(other) + (-self)

    def __mul__(self, other) -> "Poly":
        other = _as_poly(other)
        out: dict[Monomial, Fraction] = {}
        for m1, c1 in self._terms:
            for m2, c2 in other._terms:
                m = _mono_mul(m1, m2)
                out[m] = out.get(m, Fraction(0)) + c1 * c2
        return Poly(out)

    __rmul__ = __mul__

    def __pow__(self, exponent: int) -> "Poly":
        if exponent < 0:
            raise ValueError("negative exponent")
        result = Poly.const(1)
        for _ in range(exponent):
            result = result * self
        return result

    # -- substitution and evaluation -----------------------------------

    def substitute(self, sigma: Mapping[Variable, "Poly"]) -> "Poly":
        """Simultaneous substitution of variables by polynomials."""
        if not sigma or not (self.variables() & set(sigma)):
            return self
        acc = Poly()
        for mono, c in self._terms:
            prod = Poly.const(c)
            for v, e in mono:
                base = sigma.get(v)
                prod = prod * (base if base is not None else Poly.var(v)) ** e
            acc = acc + prod
        return acc

    def evaluate(self, env: Mapping[Variable, Rational]) -> Fraction:
        total = Fraction(0)
        for mono, c in self._terms:
            val = Fraction(c)
            for v, e in mono:
                val *= Fraction(env[v]) ** e
            total += val
        return total

    def evaluate_int(self, env: Mapping[Variable, Rational]) -> int:
        value = self.evaluate(env)
        if value.denominator != 1:
            raise ValueError(f"{self} is not integer-valued at {dict(env)}")
        return int(value)

    # -- rendering ----------------------------------------------------

    def render(self) -> str:
        if not self._terms:
            return "0"
        parts = []
        for i, (mono, c) in enumerate(self._terms):
            body = "*".join(
                f"{v.name}^{e}" if e > 1 else v.name for v, e in mono
            )
            mag = abs(c)
            if not body:
                piece = str(mag)
            elif mag == 1:
                piece = body
            else:
                piece = f"{mag}*{body}"
            if i == 0:
                parts.append(piece if c > 0 else f"-{piece}")
            else:
                parts.append(f"+ {piece}" if c > 0 else f"- {piece}")
        return " ".join(parts)

    def __str__(self) -> str:
        return self.render()

    def __repr__(self) -> str:
        return f"Poly({self.render()})"

    def __eq__(self, other) -> bool:
        return isinstance(other, Poly) and self._terms == other._terms

    def __hash__(self) -> int:
        return self._hash


def _as_poly(value) -> Poly:
    if isinstance(value, Poly):
        return value
    if isinstance(value, (int, Fraction)):
        return Poly.const(value)
    raise TypeError(f"cannot interpret {value!r} as a polynomial")


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return abs(a)


@dataclass(frozen=True)
class Atom:
    """A normalized inequation ``lhs > 0`` with integer coefficients.

    Rational coefficients are cleared by scaling with the positive lcm of
    the denominators, which preserves the solution set.
    """

    lhs: Poly

    def __init__(self, lhs: Poly):
        lcm = lhs.denominator_lcm()
        if lcm != 1:
            lhs = lhs * lcm
        object.__setattr__(self, "lhs", lhs)

    def negate(self) -> "Atom":
        # over the integers: not (t > 0)  iff  1 - t > 0
        return Atom(Poly.const(1) - self.lhs)

    def substitute(self, sigma: Mapping[Variable, Poly]) -> "Atom":
        return Atom(self.lhs.substitute(sigma))

    def evaluate(self, env: Mapping[Variable, Rational]) -> bool:
        return self.lhs.evaluate(env) > 0

    def variables(self) -> frozenset[Variable]:
        return self.lhs.variables()

    def is_trivially_true(self) -> bool:
        return self.lhs.is_const() and self.lhs.const_value() > 0

    def is_trivially_false(self) -> bool:
        return self.lhs.is_const() and self.lhs.const_value() <= 0

    def render(self) -> str:
        return f"{self.lhs.render()} > 0"

    def __str__(self) -> str:
        return self.render()


class Conjunction:
    """An ordered, duplicate-free conjunction of atoms."""

    __slots__ = ("_atoms",)

    def __init__(self, atoms: Iterable[Atom] = ()):
        seen = {}
        for a in atoms:
            if a not in seen:
                seen[a] = None
        self._atoms: tuple[Atom, ...] = tuple(seen)

    @property
    def atoms(self) -> tuple[Atom, ...]:
        return self._atoms

    def __iter__(self) -> Iterator[Atom]:
        return iter(self._atoms)

    def __len__(self) -> int:
        return len(self._atoms)

    def __and__(self, other) -> "Conjunction":
        if isinstance(other, Atom):
            return Conjunction(self._atoms + (other,))
        if isinstance(other, Conjunction):
            return Conjunction(self._atoms + other._atoms)
        raise TypeError(f"cannot conjoin {other!r}")

    def without(self, atom: Atom) -> "Conjunction":
        return Conjunction(a for a in self._atoms if a != atom)

    def substitute(self, sigma: Mapping[Variable, Poly]) -> "Conjunction":
        return Conjunction(a.substitute(sigma) for a in self._atoms)

    def evaluate(self, env: Mapping[Variable, Rational]) -> bool:
        return all(a.evaluate(env) for a in self._atoms)

    def variables(self) -> frozenset[Variable]:
        out: frozenset[Variable] = frozenset()
        for a in self._atoms:
            out |= a.variables()
        return out

    def drop_trivial(self) -> "Conjunction":
        return Conjunction(a for a in self._atoms if not a.is_trivially_true())

    def is_trivially_false(self) -> bool:
        return any(a.is_trivially_false() for a in self._atoms)

    def render(self) -> str:
        if not self._atoms:
            return "true"
        return " && ".join(a.render() for a in self._atoms)

    def __str__(self) -> str:
        return self.render()

    def __repr__(self) -> str:
        return f"Conjunction({self.render()})"

    def __eq__(self, other) -> bool:
        return isinstance(other, Conjunction) and self._atoms == other._atoms

    def __hash__(self) -> int:
        return hash(self._atoms)


TRUE = Conjunction(())


def normalize_relation(op: str, left: Poly, right: Poly) -> list[Atom]:
    """Normalize a relation over integer expressions to atoms ``t > 0``.

    Non-strict comparisons are tightened over the integers, e.g. ``a >= b``
    becomes ``a - b + 1 > 0``; equality yields two atoms.
    """
    if not (left.has_integer_coefficients() and right.has_integer_coefficients()):
        raise ValueError("relations require integer coefficients")
    one = Poly.const(1)
    if op == ">":
        return [Atom(left - right)]
    if op == ">=":
        return [Atom(left - right + one)]
    if op == "<":
        return [Atom(right - left)]
    if op == "<=":
        return [Atom(right - left + one)]
    if op == "==":
        return [Atom(left - right + one), Atom(right - left + one)]
    raise ValueError(f"unknown relation {op!r}")


def equality_atoms(left: Poly, right: Poly) -> list[Atom]:
    return normalize_relation("==", left, right)


class Update:
    """Simultaneous assignment of one polynomial per program variable.

    Temporaries may occur on right-hand sides; they behave like symbolic
    constants (their implicit update is the identity).
    """

    __slots__ = ("_vars", "_exprs")

    def __init__(self, variables: Sequence[Variable], exprs: Sequence[Poly]):
        if len(variables) != len(exprs):
            raise ValueError("update arity mismatch")
        self._vars = tuple(variables)
        self._exprs = tuple(exprs)

    @property
    def variables(self) -> tuple[Variable, ...]:
        return self._vars

    @property
    def exprs(self) -> tuple[Poly, ...]:
        return self._exprs

    @staticmethod
    def identity(variables: Sequence[Variable]) -> "Update":
        return Update(variables, [Poly.var(v) for v in variables])

    def as_subst(self) -> dict[Variable, Poly]:
        return dict(zip(self._vars, self._exprs))

    def expr_for(self, v: Variable) -> Poly:
        return self._exprs[self._vars.index(v)]

    def apply_to(self, e):
        """Substitute program variables of e by their updated expressions."""
        return e.substitute(self.as_subst())

    def substitute(self, sigma: Mapping[Variable, Poly]) -> "Update":
        return Update(self._vars, [p.substitute(sigma) for p in self._exprs])

    def temporaries(self) -> frozenset[Variable]:
        out = frozenset()
        for p in self._exprs:
            out |= {v for v in p.variables() if v.kind == VarKind.TEMPORARY}
        return out

    def render(self) -> str:
        return ", ".join(p.render() for p in self._exprs)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Update)
            and self._vars == other._vars
            and self._exprs == other._exprs
        )

    def __hash__(self) -> int:
        return hash((self._vars, self._exprs))

    def __repr__(self) -> str:
        return f"Update({self.render()})"


def compose(update: Update, m: int) -> Update:
    """The m-fold composition of an update; ``compose(a, 0)`` is the identity."""
    if m < 0:
        raise ValueError("m must be non-negative")
    result = Update.identity(update.variables)
    for _ in range(m):
        result = Update(
            update.variables,
            [p.substitute(result.as_subst()) for p in update.exprs],
        )
    return result
