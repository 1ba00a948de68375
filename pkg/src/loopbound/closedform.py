"""Closed forms for iterated updates and symbolic cost summation.

Supported class: the variable-dependency relation admits a topological
order in which every variable is either reset to a program-variable-free
expression or incremented by a polynomial over strictly earlier variables
and temporaries.  Resets make the closed form valid only from the first
iteration on (validity threshold 1); everything else is valid from 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Mapping

from .terms import ITERATION_VAR, Poly, Update, VarKind, Variable

FAULHABER_CAP = 10


class _Unsupported:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "Unsupported"

    def __bool__(self) -> bool:
        return False


UNSUPPORTED = _Unsupported()


def _bernoulli(count: int) -> list[Fraction]:
    # second Bernoulli numbers (B1 = +1/2 variant is avoided; we use -1/2)
    values = [Fraction(1)]
    for m in range(1, count + 1):
        acc = Fraction(0)
        for k in range(m):
            acc += comb(m + 1, k) * values[k]
        values.append(-acc / (m + 1))
    return values


_BERNOULLI = _bernoulli(FAULHABER_CAP + 1)


def faulhaber(d: int):
    """The polynomial in n equal to sum_{i=0}^{n-1} i^d, for d <= 10."""
    if d < 0:
        raise ValueError("d must be non-negative")
    if d > FAULHABER_CAP:
        return UNSUPPORTED
    n = Poly.var(ITERATION_VAR)
    total = Poly()
    for j in range(d + 1):
        coeff = Fraction(comb(d + 1, j)) * _BERNOULLI[j] / (d + 1)
        total = total + Poly.const(coeff) * n ** (d + 1 - j)
    return total


def _split_by_iteration_power(p: Poly) -> dict[int, Poly]:
    """Decompose p as sum_d c_d * n^d with n-free coefficients c_d."""
    parts: dict[int, dict] = {}
    for mono, coeff in p.monomials():
        power = 0
        rest = []
        for v, e in mono:
            if v == ITERATION_VAR:
                power = e
            else:
                rest.append((v, e))
        parts.setdefault(power, {})[tuple(rest)] = coeff
    return {d: Poly(terms) for d, terms in parts.items()}


def symbolic_sum(p: Poly):
    """sum_{i=0}^{n-1} p(i) where the iteration symbol of p is the index."""
    total = Poly()
    for d, coeff in _split_by_iteration_power(p).items():
        f = faulhaber(d)
        if f is UNSUPPORTED:
            return UNSUPPORTED
        total = total + coeff * f
    return total


@dataclass(frozen=True)
class ClosedForm:
    """Per-variable polynomials in the iteration symbol n describing a^n."""

    variables: tuple[Variable, ...]
    exprs: tuple[Poly, ...]
    validity_threshold: int

    def subst(self) -> dict[Variable, Poly]:
        return dict(zip(self.variables, self.exprs))

    def shifted(self, delta: int) -> dict[Variable, Poly]:
        """The substitution for a^(n+delta)."""
        n = Poly.var(ITERATION_VAR) + delta
        shift = {ITERATION_VAR: n}
        return {v: p.substitute(shift) for v, p in zip(self.variables, self.exprs)}

    def at(self, m: int) -> Update:
        sub = {ITERATION_VAR: Poly.const(m)}
        return Update(self.variables, [p.substitute(sub) for p in self.exprs])


@dataclass(frozen=True)
class CostClosedForm:
    poly: Poly

    def at(self, env: Mapping[Variable, int], m: int) -> Fraction:
        full = dict(env)
        full[ITERATION_VAR] = m
        return self.poly.evaluate(full)


def closed_form(update: Update):
    """Closed form for a^n, or UNSUPPORTED outside the solvable class."""
    variables = update.variables
    kind: dict[Variable, tuple] = {}
    deps: dict[Variable, set[Variable]] = {}
    for v, expr in zip(variables, update.exprs):
        prog = {w for w in expr.variables() if w.kind == VarKind.PROGRAM}
        if not prog:
            kind[v] = ("reset", expr)
            deps[v] = set()
            continue
        q = expr - Poly.var(v)
        if v in q.variables():
            return UNSUPPORTED
        kind[v] = ("inc", q)
        deps[v] = {w for w in q.variables() if w.kind == VarKind.PROGRAM}

    order: list[Variable] = []
    remaining = set(variables)
    while remaining:
        ready = [v for v in remaining if deps[v] <= set(order)]
        if not ready:
            return UNSUPPORTED
        ready.sort(key=lambda v: variables.index(v))
        order.append(ready[0])
        remaining.remove(ready[0])

    forms: dict[Variable, Poly] = {}
    thresholds: dict[Variable, int] = {}
    for v in order:
        what, payload = kind[v]
        if what == "reset":
            forms[v] = payload
            thresholds[v] = 1
            continue
        q = payload
        q_cf = q.substitute({w: forms[w] for w in deps[v]})
        total = symbolic_sum(q_cf)
        if total is UNSUPPORTED:
            return UNSUPPORTED
        if any(thresholds[w] == 1 for w in deps[v]):
            at_zero = q_cf.substitute({ITERATION_VAR: Poly.const(0)})
            forms[v] = Poly.var(v) + q + total - at_zero
            thresholds[v] = 1
        else:
            forms[v] = Poly.var(v) + total
            thresholds[v] = 0

    threshold = max(thresholds.values(), default=0)
    return ClosedForm(
        variables,
        tuple(forms[v] for v in variables),
        threshold,
    )


def cost_sum(p: Poly, cf: ClosedForm):
    """Symbolic sum of the cost over the first n iterations.

    Requires validity threshold 0: with resets the i = 0 summand differs
    from the closed form, so the plain summation does not apply.
    """
    if cf.validity_threshold != 0:
        return UNSUPPORTED
    composed = p.substitute(cf.subst())
    total = symbolic_sum(composed)
    if total is UNSUPPORTED:
        return UNSUPPORTED
    return CostClosedForm(total)


def cost_sum_from_step_one(p: Poly, cf: ClosedForm):
    """Cost summation valid for n >= 1 regardless of the threshold.

    Uses sum_{i=0}^{n-1} p(a^i) = p + sum_{i=1}^{n-1} p(closed form at i).
    """
    composed = p.substitute(cf.subst())
    total = symbolic_sum(composed)
    if total is UNSUPPORTED:
        return UNSUPPORTED
    at_zero = composed.substitute({ITERATION_VAR: Poly.const(0)})
    return CostClosedForm(p + total - at_zero)
