"""Query-count benchmark: unsat-core driven technique selection vs. the
naive retry strategy, on generated accelerable loops.

The generator composes guards from three block families, listed with the
atoms they contribute and the technique that ultimately handles them:

* countdown: v' = v - c with atom v > 0 (decrease)
* drift: x' = x - y, y' = y with atoms x > 0, y > 0 (decrease + increase)
* cascade: p' = K, q' = q + p, r' = r + q with atoms r > 0, p > 0
  (eventual increase + increase); the r atom is only admissible once the
  p atom is known to stay invariant, which is what makes retry-based
  strategies pay a quadratic number of attempts

Dependent atoms are listed before their prerequisites, which is the
adversarial processing order for the naive strategy.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .accel import AccelerationEngine, Incomplete, PHASE_CANDIDATE
from .closedform import UNSUPPORTED, closed_form
from .its import Location, Transition
from .smt import SolverSession
from .terms import Atom, Conjunction, Poly, Update, Variable


@dataclass(frozen=True)
class BenchInstance:
    m: int
    core_checks: int
    naive_checks: int


@dataclass(frozen=True)
class BenchRow:
    m: int
    trials: int
    core_mean: float
    naive_mean: float
    core_max: int
    naive_max: int

    @property
    def core_budget(self) -> int:
        return 5 * self.m

    @property
    def naive_budget(self) -> int:
        return 5 * (self.m * self.m + self.m) // 2


def generate_loop(rng: random.Random, m: int) -> Transition:
    """A simple loop with m guard atoms, accelerable by the core strategy."""
    if m < 1:
        raise ValueError("m must be positive")
    blocks: list[str] = []
    budget = m
    if m >= 4:
        blocks.append("cascade")
        budget -= 2
    while budget > 0:
        if budget == 1:
            blocks.append("countdown")
            budget -= 1
            continue
        choice = rng.choice(("countdown", "drift", "cascade"))
        cost = 1 if choice == "countdown" else 2
        blocks.append(choice)
        budget -= cost

    variables: list[Variable] = []
    exprs: list[Poly] = []
    dependents: list[Atom] = []
    bases: list[Atom] = []

    def fresh(prefix: str) -> Variable:
        v = Variable(f"{prefix}{len(variables)}")
        variables.append(v)
        return v

    for block in blocks:
        if block == "countdown":
            v = fresh("v")
            c = rng.randint(1, 3)
            exprs.append(Poly.var(v) - c)
            bases.append(Atom(Poly.var(v)))
        elif block == "drift":
            x = fresh("x")
            y = fresh("y")
            exprs.append(Poly.var(x) - Poly.var(y))
            exprs.append(Poly.var(y))
            dependents.append(Atom(Poly.var(x)))
            bases.append(Atom(Poly.var(y)))
        else:
            p = fresh("p")
            q = fresh("q")
            r = fresh("r")
            k = rng.randint(1, 3)
            exprs.append(Poly.const(k))
            exprs.append(Poly.var(q) + Poly.var(p))
            exprs.append(Poly.var(r) + Poly.var(q))
            dependents.append(Atom(Poly.var(r)))
            bases.append(Atom(Poly.var(p)))

    guard = Conjunction(dependents + bases)
    assert len(guard) == m, (m, blocks)
    loc = Location("f")
    return Transition(
        loc, loc, Update(tuple(variables), tuple(exprs)), guard, Poly.const(1)
    )


def measure(session: SolverSession, loop: Transition) -> BenchInstance:
    """Candidate-phase SMT checks of both strategies on one loop."""
    engine = AccelerationEngine(session)
    cf = closed_form(loop.update)
    assert cf is not UNSUPPORTED
    counts = []
    for analyze in (engine.analyze_dependencies, engine.analyze_naive):
        before = session.count(PHASE_CANDIDATE)
        outcome = analyze(loop.guard, loop.update, cf)
        if isinstance(outcome, Incomplete):
            raise RuntimeError(f"generated loop not accelerable: {outcome.render()}")
        counts.append(session.count(PHASE_CANDIDATE) - before)
    return BenchInstance(len(loop.guard), counts[0], counts[1])


def run_bench(
    m_max: int,
    trials: int,
    seed: int = 0,
    session: SolverSession | None = None,
) -> tuple[list[BenchRow], list[BenchInstance]]:
    if m_max > 12:
        raise ValueError("m_max is capped at 12")
    rng = random.Random(seed)
    own_session = session is None
    if own_session:
        session = SolverSession()
        session.start()
    rows: list[BenchRow] = []
    instances: list[BenchInstance] = []
    try:
        for m in range(1, m_max + 1):
            core_counts: list[int] = []
            naive_counts: list[int] = []
            for _ in range(trials):
                loop = generate_loop(rng, m)
                inst = measure(session, loop)
                instances.append(inst)
                core_counts.append(inst.core_checks)
                naive_counts.append(inst.naive_checks)
            rows.append(
                BenchRow(
                    m,
                    trials,
                    sum(core_counts) / trials,
                    sum(naive_counts) / trials,
                    max(core_counts),
                    max(naive_counts),
                )
            )
    finally:
        if own_session:
            session.close()
    return rows, instances


def render_table(rows: list[BenchRow]) -> str:
    header = (
        f"{'m':>3} {'trials':>6} {'core mean':>10} {'naive mean':>11} "
        f"{'core max':>9} {'naive max':>10} {'5m':>5} {'5(m^2+m)/2':>11}"
    )
    lines = [header]
    for row in rows:
        lines.append(
            f"{row.m:>3} {row.trials:>6} {row.core_mean:>10.1f} "
            f"{row.naive_mean:>11.1f} {row.core_max:>9} {row.naive_max:>10} "
            f"{row.core_budget:>5} {row.naive_budget:>11}"
        )
    return "\n".join(lines)


def check_budgets(rows: list[BenchRow]) -> list[str]:
    problems = []
    for row in rows:
        if row.core_max > row.core_budget:
            problems.append(
                f"m={row.m}: core checks {row.core_max} exceed {row.core_budget}"
            )
        if row.naive_max > row.naive_budget:
            problems.append(
                f"m={row.m}: naive checks {row.naive_max} exceed {row.naive_budget}"
            )
    return problems
