"""Whole-program strategy: acceleration, instantiation, chaining and
non-termination processors, plus bound extraction and reporting.

The strategy is a fixed worklist: (1) accelerate every simple loop (after
chaining 2-cycles into simple loops), proving non-termination along the way
when requested, (2) instantiate temporaries of accelerated transitions,
(3) chain transitions reachable from the start location, (4) collect the
resulting simplified transitions, (5) extract the best bound or verdict.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from typing import Mapping, Sequence

from .accel import (
    Accelerated,
    AccelerationEngine,
    Certificate,
    Failure,
    PHASE_GUARD,
)
from .its import (
    INF,
    ITS,
    Cost,
    Infinity,
    Location,
    SINK_NAME,
    Transition,
)
from .smt import SolverSession, Verdict, implies, satisfiable
from .terms import (
    Atom,
    Conjunction,
    Poly,
    Update,
    VarKind,
    Variable,
)

PHASE_PIPELINE = "pipeline"


class ProofTrace:
    """Ordered, serializable record of processor applications."""

    def __init__(self):
        self.events: list[dict] = []

    def event(self, kind: str, **data) -> None:
        entry = {"kind": kind}
        entry.update(data)
        self.events.append(entry)

    def to_list(self) -> list[dict]:
        return [dict(e) for e in self.events]


# ---------------------------------------------------------------------------
# processors
# ---------------------------------------------------------------------------


def _rename_apart(t2: Transition, taken: frozenset[Variable]) -> Transition:
    collisions = {v for v in t2.temporaries() if v in taken}
    if not collisions:
        return t2
    used_names = {v.name for v in taken | t2.temporaries()}
    rename: dict[Variable, Poly] = {}
    for v in sorted(collisions, key=lambda v: v.sort_key()):
        k = 1
        while f"{v.name}_{k}" in used_names:
            k += 1
        fresh = Variable(f"{v.name}_{k}", VarKind.TEMPORARY)
        used_names.add(fresh.name)
        rename[v] = Poly.var(fresh)
    cost = t2.cost if isinstance(t2.cost, Infinity) else t2.cost.substitute(rename)
    return Transition(
        t2.src,
        t2.dst,
        t2.update.substitute(rename),
        t2.guard.substitute(rename),
        cost,
    )


def chain(t1: Transition, t2: Transition) -> Transition:
    """Combine two subsequent transitions into one."""
    if t1.dst != t2.src:
        raise ValueError(f"cannot chain {t1.dst} with {t2.src}")
    t2 = _rename_apart(t2, t1.temporaries())
    first = t1.update.as_subst()
    guard = t1.guard & t2.guard.substitute(first)
    update = Update(
        t1.update.variables,
        [p.substitute(first) for p in t2.update.exprs],
    )
    if isinstance(t1.cost, Infinity) or isinstance(t2.cost, Infinity):
        cost: Cost = INF
    else:
        cost = t1.cost + t2.cost.substitute(first)
    return Transition(t1.src, t2.dst, update, guard, cost)


def _bound_candidates(guard: Conjunction, v: Variable) -> list[Poly]:
    """Upper bounds e for v from guard atoms of the shape e - v >= 0."""
    out = []
    for atom in guard.atoms:
        lhs = atom.lhs
        if lhs.degree_in(v) != 1:
            continue
        coeff = lhs.coefficient(v)
        if not (coeff.is_const() and coeff.const_value() == -1):
            continue
        rest = lhs + Poly.var(v)
        if v in rest.variables():
            continue
        if any(w.kind == VarKind.TEMPORARY for w in rest.variables()):
            continue
        out.append(rest - 1)
    return out


def _strictly_dominates(
    session: SolverSession, guard: Conjunction, e1: Poly, e2: Poly
) -> bool:
    ge = implies(session, guard, Atom(e1 - e2 + 1), phase=PHASE_PIPELINE)
    le = implies(session, guard, Atom(e2 - e1 + 1), phase=PHASE_PIPELINE)
    return ge and not le


def instantiate(
    t: Transition, session: SolverSession, trace: ProofTrace | None = None
) -> tuple[Transition, bool]:
    """Substitute temporaries by guard-derived expressions where possible.

    Prefers the largest bound (ties by atom order); falls back to the next
    candidate if a substitution empties the guard.  Returns the transition
    and whether anything changed.
    """
    changed = False
    while True:
        ordered: list[Variable] = []
        for atom in t.guard.atoms:
            for v in sorted(atom.variables(), key=lambda v: v.sort_key()):
                if v.kind == VarKind.TEMPORARY and v not in ordered:
                    ordered.append(v)
        done = True
        for v in ordered:
            candidates = _bound_candidates(t.guard, v)
            if not candidates:
                continue
            best = candidates[0]
            for cand in candidates[1:]:
                if _strictly_dominates(session, t.guard, cand, best):
                    best = cand
            preference = [best] + [c for c in candidates if c is not best]
            committed = False
            for e in preference:
                sub = {v: e}
                new_guard = t.guard.substitute(sub).drop_trivial()
                if new_guard.is_trivially_false():
                    continue
                if satisfiable(session, new_guard, phase=PHASE_PIPELINE).verdict is not Verdict.SAT:
                    continue
                cost = t.cost if isinstance(t.cost, Infinity) else t.cost.substitute(sub)
                t = Transition(
                    t.src, t.dst, t.update.substitute(sub), new_guard, cost
                )
                if trace is not None:
                    trace.event(
                        "instantiate", variable=v.name, bound=e.render(),
                        result=t.render(),
                    )
                changed = True
                committed = True
                break
            if committed:
                done = False
                break
        if done:
            return t, changed


def nonterm_processor(its: ITS, t: Transition, cert: Certificate) -> ITS:
    """Add the infinite-cost sink transition certified by cert."""
    sink = sink_transition(t, cert, its.program_vars)
    return ITS.of(its.program_vars, its.transitions + (sink,))


def sink_transition(
    t: Transition, cert: Certificate, program_vars: Sequence[Variable]
) -> Transition:
    return Transition(
        t.src,
        Location(SINK_NAME),
        Update.identity(tuple(program_vars)),
        cert.psi,
        INF,
    )


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Hint:
    degree: int
    label: str = "heuristic"


@dataclass
class BoundResult:
    guard: Conjunction
    cost: Cost
    reading: str
    asymptotic_hint: Hint | None = None


def concrete_bound(st: Transition) -> BoundResult:
    cost = "inf" if isinstance(st.cost, Infinity) else st.cost.render()
    args = ", ".join(v.name for v in st.update.variables)
    reading = f"dh(main({args})) >= I[{st.guard.render()}] * ({cost})"
    return BoundResult(st.guard, st.cost, reading)


_RAY_POINTS = [2**k for k in range(0, 11)]


def asymptotic_estimate(
    session: SolverSession, bound: BoundResult
) -> Hint | None:
    """Growth-degree heuristic: verify guard membership along a model ray
    and read off the degree of the cost along it."""
    if isinstance(bound.cost, Infinity):
        return None
    if bound.cost.degree() == 0:
        return Hint(0)
    base = satisfiable(session, bound.guard, want_model=True, phase=PHASE_PIPELINE)
    if base.verdict is not Verdict.SAT:
        return None
    m1 = dict(base.model)
    all_vars = sorted(
        bound.guard.variables() | bound.cost.variables(), key=lambda v: v.sort_key()
    )
    cost_vars = sorted(bound.cost.variables(), key=lambda v: v.sort_key())
    targets = cost_vars + [v for v in all_vars if v not in cost_vars]
    m2 = None
    for target in targets:
        floor = m1.get(target, 0) + 8
        probe = bound.guard & Atom(Poly.var(target) - floor + 1)
        r = satisfiable(session, probe, want_model=True, phase=PHASE_PIPELINE)
        if r.verdict is Verdict.SAT:
            m2 = dict(r.model)
            break
    if m2 is None:
        return None
    ray = {v: m2.get(v, 0) - m1.get(v, 0) for v in all_vars}
    for k in _RAY_POINTS:
        point = {v: m1.get(v, 0) + k * ray[v] for v in all_vars}
        if not bound.guard.evaluate(point):
            return None
    k_var = Variable("k!", VarKind.TEMPORARY)
    along = bound.cost.substitute(
        {
            v: Poly.const(m1.get(v, 0)) + Poly.var(k_var) * ray.get(v, 0)
            for v in bound.cost.variables()
        }
    )
    return Hint(along.degree_in(k_var))


# ---------------------------------------------------------------------------
# the strategy
# ---------------------------------------------------------------------------


@dataclass
class AnalysisReport:
    mode: str
    verdict: str
    bound: BoundResult | None
    witness_formula: Conjunction | None
    witness_model: dict[Variable, int] | None
    simplified: list[Transition]
    trace: ProofTrace
    smt_stats: dict[str, int]
    incomplete: bool = False

    def to_dict(self) -> dict:
        bound = None
        if self.bound is not None:
            bound = {
                "guard": self.bound.guard.render(),
                "cost": "inf"
                if isinstance(self.bound.cost, Infinity)
                else self.bound.cost.render(),
                "reading": self.bound.reading,
            }
        hint = None
        if self.bound is not None and self.bound.asymptotic_hint is not None:
            hint = {
                "degree": self.bound.asymptotic_hint.degree,
                "label": self.bound.asymptotic_hint.label,
            }
        witness = None
        if self.witness_formula is not None:
            witness = {
                "formula": self.witness_formula.render(),
                "model": {
                    v.name: value
                    for v, value in sorted(
                        (self.witness_model or {}).items(),
                        key=lambda item: item[0].sort_key(),
                    )
                },
            }
        return {
            "mode": self.mode,
            "verdict": self.verdict,
            "bound": bound,
            "asymptotic_hint": hint,
            "witness": witness,
            "simplified": [t.render() for t in self.simplified],
            "incomplete": self.incomplete,
            "smt_stats": dict(sorted(self.smt_stats.items())),
            "trace": self.trace.to_list(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self, proof_level: int = 1, plain: bool = True) -> str:
        def emph(s: str) -> str:
            return s if plain else f"\033[1m{s}\033[0m"

        lines = [emph(f"verdict: {self.verdict}")]
        if self.incomplete:
            lines.append("note: analysis incomplete (timeout)")
        if proof_level >= 1:
            if self.bound is not None:
                lines.append(f"bound: {self.bound.reading}")
                hint = self.bound.asymptotic_hint
                if hint is not None:
                    lines.append(
                        f"asymptotic: Omega(n^{hint.degree}) ({hint.label})"
                    )
            if self.witness_formula is not None:
                lines.append(f"witness: {self.witness_formula.render()}")
                if self.witness_model:
                    start = ", ".join(
                        f"{v.name} = {value}"
                        for v, value in sorted(
                            self.witness_model.items(),
                            key=lambda item: item[0].sort_key(),
                        )
                        if v.kind == VarKind.PROGRAM
                    )
                    if start:
                        lines.append(f"start: {start}")
        if proof_level >= 2:
            lines.append("simplified transitions:")
            for t in self.simplified:
                lines.append(f"  {t.render()}")
        if proof_level >= 3:
            lines.append("proof trace:")
            for event in self.trace.to_list():
                kind = event.pop("kind")
                detail = ", ".join(f"{k}={v}" for k, v in event.items())
                lines.append(f"  [{kind}] {detail}")
            lines.append(
                "smt checks: "
                + ", ".join(
                    f"{k}={v}" for k, v in sorted(self.smt_stats.items())
                )
            )
        return "\n".join(lines) + "\n"


MODE_COMPLEXITY = "complexity"
MODE_NON_TERMINATION = "non_termination"

_MAX_CHAIN_DEPTH = 3
_MAX_FRONTIER = 48


class Analyzer:
    def __init__(
        self,
        its: ITS,
        session: SolverSession,
        mode: str = MODE_COMPLEXITY,
        strategy: str = "core",
        timeout_s: float = 300.0,
    ):
        if mode not in (MODE_COMPLEXITY, MODE_NON_TERMINATION):
            raise ValueError(f"unknown mode {mode!r}")
        self.its = its
        self.session = session
        self.mode = mode
        self.strategy = strategy
        self.timeout_s = timeout_s
        self.trace = ProofTrace()
        self.engine = AccelerationEngine(session, self.trace)

    # -- helpers ---------------------------------------------------------

    def _sat(self, guard: Conjunction) -> bool:
        return (
            satisfiable(self.session, guard, phase=PHASE_PIPELINE).verdict
            is Verdict.SAT
        )

    def _two_cycles(self, non_loops: list[Transition]) -> list[Transition]:
        chained = []
        for t1 in non_loops:
            if t1.src == t1.dst:
                continue
            for t2 in non_loops:
                if t1.dst == t2.src and t2.dst == t1.src:
                    loop = chain(t1, t2)
                    self.trace.event("chain_cycle", result=loop.render())
                    chained.append(loop)
        return chained

    def _note_longer_cycles(self, non_loops: list[Transition]) -> None:
        edges: dict[Location, set[Location]] = {}
        for t in non_loops:
            if t.src != t.dst:
                edges.setdefault(t.src, set()).add(t.dst)

        seen: set[Location] = set()

        def dfs(node: Location, path: list[Location]) -> bool:
            if node in path:
                return len(path) - path.index(node) > 2
            if node in seen:
                return False
            seen.add(node)
            for nxt in edges.get(node, ()):  # deterministic enough for a note
                if dfs(nxt, path + [node]):
                    return True
            return False

        for start in list(edges):
            if dfs(start, []):
                self.trace.event(
                    "skipped", reason="cycles longer than 2 are not accelerated"
                )
                return

    # -- the worklist -----------------------------------------------------

    def run(self) -> AnalysisReport:
        deadline = time.monotonic() + self.timeout_s
        incomplete = False
        main = self.its.start

        loops = [t for t in self.its.transitions if t.is_simple_loop]
        non_loops = [t for t in self.its.transitions if not t.is_simple_loop]
        loops += self._two_cycles(non_loops)
        self._note_longer_cycles(non_loops)

        chainable: list[Transition] = list(non_loops)
        sink_formulas: dict[Transition, Certificate] = {}

        for loop in loops:
            if time.monotonic() > deadline:
                incomplete = True
                break
            acc = self.engine.accelerate(loop, strategy=self.strategy)
            if isinstance(acc, Accelerated):
                chainable.append(acc.transition)
                if acc.retained_original:
                    chainable.append(loop)
                inst, changed = instantiate(acc.transition, self.session, self.trace)
                if changed:
                    chainable.append(inst)
            else:
                self.trace.event("accelerate_failure", reason=acc.reason)
                chainable.append(loop)
            if self.mode == MODE_NON_TERMINATION:
                cert = self.engine.prove_nonterm(loop, strategy=self.strategy)
                if cert is not None:
                    sink = sink_transition(loop, cert, self.its.program_vars)
                    self.trace.event("nonterm_sink", transition=sink.render())
                    chainable.append(sink)
                    sink_formulas[sink] = cert

        simplified: list[Transition] = []
        seen: set[Transition] = set()
        provenance: dict[Transition, Conjunction] = {}

        def note_candidate(t: Transition, origin: Conjunction | None) -> None:
            if t in seen or t.src != main or t.dst == main:
                return
            seen.add(t)
            simplified.append(t)
            if origin is not None:
                provenance[t] = origin

        frontier: list[Transition] = []
        for t in chainable:
            if t.src == main and not t.is_simple_loop:
                if self._sat(t.guard):
                    frontier.append(t)
                    note_candidate(t, sink_formulas[t].psi if t in sink_formulas else None)

        for _ in range(_MAX_CHAIN_DEPTH):
            if time.monotonic() > deadline:
                incomplete = True
                break
            new_frontier: list[Transition] = []
            for prefix in frontier:
                for t in chainable:
                    if t.src != prefix.dst or prefix.dst == main:
                        continue
                    candidate = chain(prefix, t)
                    if candidate in seen:
                        continue
                    if not self._sat(candidate.guard):
                        continue
                    self.trace.event("chain", result=candidate.render())
                    origin = sink_formulas[t].psi if t in sink_formulas else None
                    note_candidate(candidate, origin)
                    if len(new_frontier) < _MAX_FRONTIER:
                        new_frontier.append(candidate)
            frontier = new_frontier
            if not frontier:
                break

        return self._report(simplified, provenance, incomplete)

    # -- verdict extraction -------------------------------------------------

    def _report(
        self,
        simplified: list[Transition],
        provenance: dict[Transition, Conjunction],
        incomplete: bool,
    ) -> AnalysisReport:
        if self.mode == MODE_NON_TERMINATION:
            for st in simplified:
                if isinstance(st.cost, Infinity):
                    witness = satisfiable(
                        self.session, st.guard, want_model=True, phase=PHASE_PIPELINE
                    )
                    if witness.verdict is not Verdict.SAT:
                        continue
                    formula = provenance.get(st, st.guard)
                    bound = concrete_bound(st)
                    self.trace.event("verdict", verdict="NO")
                    return AnalysisReport(
                        self.mode,
                        "NO",
                        bound,
                        formula,
                        witness.model,
                        simplified,
                        self.trace,
                        self.session.query_counter(),
                        incomplete,
                    )
            self.trace.event("verdict", verdict="MAYBE")
            return AnalysisReport(
                self.mode,
                "MAYBE",
                None,
                None,
                None,
                simplified,
                self.trace,
                self.session.query_counter(),
                incomplete,
            )

        best: BoundResult | None = None
        best_key = None
        for st in simplified:
            bound = concrete_bound(st)
            if isinstance(st.cost, Infinity):
                key = (1, 0, 0)
            else:
                temps = {
                    v
                    for v in st.guard.variables() | st.cost.variables()
                    if v.kind == VarKind.TEMPORARY
                }
                key = (0, st.cost.degree(), -len(temps))
            if best_key is None or key > best_key:
                best, best_key = bound, key
        if best is None:
            self.trace.event("verdict", verdict="MAYBE")
            return AnalysisReport(
                self.mode,
                "MAYBE",
                None,
                None,
                None,
                simplified,
                self.trace,
                self.session.query_counter(),
                incomplete,
            )
        best.asymptotic_hint = asymptotic_estimate(self.session, best)
        self.trace.event(
            "verdict",
            verdict="BOUND",
            bound=best.reading,
            hint=None
            if best.asymptotic_hint is None
            else best.asymptotic_hint.degree,
        )
        return AnalysisReport(
            self.mode,
            "BOUND",
            best,
            None,
            None,
            simplified,
            self.trace,
            self.session.query_counter(),
            incomplete,
        )


def run_strategy(
    its: ITS,
    session: SolverSession,
    mode: str = MODE_COMPLEXITY,
    strategy: str = "core",
    timeout_s: float = 300.0,
) -> AnalysisReport:
    return Analyzer(its, session, mode, strategy, timeout_s).run()
