"""The conditional acceleration calculus engine.

Implements the five acceleration techniques, their implication encodings,
unsat-core driven dependency discovery with greedy technique selection, the
ordering of acceleration steps, and the two drivers built on top: loop
acceleration and non-termination certification.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .closedform import (
    UNSUPPORTED,
    ClosedForm,
    closed_form,
    cost_sum,
    cost_sum_from_step_one,
)
from .its import Infinity, Transition
from .smt import (
    SmtFormula,
    SolverSession,
    Verdict,
    satisfiable,
)
from .terms import (
    ITERATION_VAR,
    TRUE,
    Atom,
    Conjunction,
    Poly,
    Update,
    VarKind,
    Variable,
    equality_atoms,
)

PHASE_CANDIDATE = "candidate"
PHASE_PREMISE = "premise"
PHASE_SHRINK = "shrink"
PHASE_GUARD = "guard"


class Technique(Enum):
    INC = "inc"
    DEC = "dec"
    EV_DEC = "ev-dec"
    EV_INC = "ev-inc"
    FP = "fp"

    @property
    def rank(self) -> int:
        return _RANK[self]

    def __str__(self) -> str:
        return self.value


_RANK = {
    Technique.INC: 4,
    Technique.DEC: 3,
    Technique.EV_DEC: 2,
    Technique.EV_INC: 1,
    Technique.FP: 0,
}

#: All techniques in descending >_AT order.
TECHNIQUES = (
    Technique.INC,
    Technique.DEC,
    Technique.EV_DEC,
    Technique.EV_INC,
    Technique.FP,
)

AT_IMP = TECHNIQUES[:4]

#: Techniques usable for non-termination certificates; none needs a closed form.
NONTERM_TECHNIQUES = frozenset({Technique.INC, Technique.EV_INC, Technique.FP})


class NeedsClosedForm:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NeedsClosedForm"


NEEDS_CLOSED_FORM = NeedsClosedForm()


def closure(t: Poly, update: Update) -> frozenset[Variable]:
    """All program variables feeding the value of t under iteration."""
    subst = update.as_subst()
    current = {v for v in t.variables() if v.kind == VarKind.PROGRAM}
    while True:
        extra = set()
        for v in current:
            extra |= {
                w
                for w in subst[v].variables()
                if w.kind == VarKind.PROGRAM and w not in current
            }
        if not extra:
            return frozenset(current)
        current |= extra


def technique_result(
    technique: Technique,
    atom: Atom,
    checked: Conjunction,
    update: Update,
    cf: ClosedForm | None = None,
):
    """The formula a technique contributes to the accelerated guard.

    Pure construction; the side conditions are checked by the analysis.
    The checked part is irrelevant for the construction itself.
    """
    del checked
    t = atom.lhs
    subst = update.as_subst()
    if technique is Technique.INC:
        return Conjunction([atom])
    if technique is Technique.DEC:
        if cf is None:
            return NEEDS_CLOSED_FORM
        return Conjunction([atom.substitute(cf.shifted(-1))])
    if technique is Technique.EV_DEC:
        if cf is None:
            return NEEDS_CLOSED_FORM
        return Conjunction([atom, Atom(t.substitute(cf.shifted(-1)))])
    if technique is Technique.EV_INC:
        # t > 0 and t <= t(a)
        return Conjunction([atom, Atom(t.substitute(subst) - t + 1)])
    if technique is Technique.FP:
        atoms = [atom]
        for v in sorted(closure(t, update), key=lambda v: v.sort_key()):
            atoms.extend(equality_atoms(Poly.var(v), subst[v]))
        return Conjunction(atoms)
    raise ValueError(f"unknown technique {technique}")


def encode(
    technique: Technique,
    atom: Atom,
    checked: Conjunction,
    update: Update,
) -> tuple[Conjunction, Atom]:
    """The implication (premise, conclusion) whose validity admits a technique."""
    if technique is Technique.FP:
        raise ValueError("the fixpoint technique has no implication encoding")
    t = atom.lhs
    subst = update.as_subst()
    t_a = t.substitute(subst)
    t_aa = t_a.substitute(subst)
    if technique is Technique.INC:
        first, conclusion = atom, atom.substitute(subst)
    elif technique is Technique.DEC:
        first, conclusion = atom.substitute(subst), atom
    elif technique is Technique.EV_DEC:
        first, conclusion = Atom(t - t_a + 1), Atom(t_a - t_aa + 1)
    else:
        first, conclusion = Atom(t_a - t + 1), Atom(t_aa - t_a + 1)
    return Conjunction([first]) & checked, conclusion


@dataclass(frozen=True)
class CandidateStep:
    technique: Technique
    atom: Atom
    deps: tuple[Atom, ...]
    result: Conjunction

    def render(self) -> str:
        return f"({self.technique}, {self.atom.render()})"


@dataclass
class DependencyAnalysis:
    """Selected steps, their dependency order, and the discovered candidates."""

    guard: Conjunction
    selection: dict[Atom, CandidateStep]
    join_order: tuple[CandidateStep, ...]
    extra_candidates: tuple[CandidateStep, ...] = ()

    @property
    def candidates(self) -> tuple[CandidateStep, ...]:
        return tuple(self.selection.values()) + self.extra_candidates

    def order_pairs(self) -> list[tuple[CandidateStep, CandidateStep]]:
        pairs = []
        for step in self.selection.values():
            for dep in step.deps:
                pairs.append((self.selection[dep], step))
        return pairs

    def total_order(self) -> list[CandidateStep]:
        """A strict total order containing the dependency order.

        Ties are broken by ascending guard atom index, then technique rank.
        """
        atoms = list(self.guard.atoms)
        pending = {a: set(self.selection[a].deps) for a in self.selection}
        done: list[CandidateStep] = []
        emitted: set[Atom] = set()
        while pending:
            ready = [a for a, d in pending.items() if d <= emitted]
            if not ready:
                raise RuntimeError("cyclic dependency order")
            ready.sort(
                key=lambda a: (atoms.index(a), -self.selection[a].technique.rank)
            )
            a = ready[0]
            done.append(self.selection[a])
            emitted.add(a)
            del pending[a]
        return done

    def assert_acyclic(self) -> None:
        self.total_order()

    def render_selection(self) -> str:
        parts = [
            self.selection[a].render() for a in self.guard.atoms if a in self.selection
        ]
        return "{" + ", ".join(parts) + "}"

    def render_order(self) -> str:
        return " < ".join(step.render() for step in self.total_order())


@dataclass(frozen=True)
class Incomplete:
    atom: Atom

    def render(self) -> str:
        return f"no admissible technique for {self.atom.render()}"


@dataclass(frozen=True)
class Failure:
    reason: str


@dataclass(frozen=True)
class Accelerated:
    transition: Transition
    iteration_var: Variable
    closed_form: ClosedForm
    analysis: DependencyAnalysis
    original: Transition
    retained_original: bool


@dataclass(frozen=True)
class Certificate:
    psi: Conjunction
    model: dict[Variable, int]
    analysis: DependencyAnalysis


def _probe_envs(variables: Sequence[Variable], seeds: Iterable[Mapping[Variable, int]]):
    """Deterministic ground points used to witness satisfiability cheaply."""
    names = sorted(variables, key=lambda v: v.sort_key())
    for seed in seeds:
        if seed and all(v in seed for v in names):
            yield {v: seed[v] for v in names}
    if len(names) <= 5:
        span = range(-2, 3) if len(names) <= 4 else range(-1, 3)
        for combo in itertools.product(span, repeat=len(names)):
            yield dict(zip(names, combo))
    else:
        for value in (0, 1, -1, 2, 3, -3):
            yield {v: value for v in names}


class AccelerationEngine:
    """Owns one solver session and applies the calculus to simple loops."""

    def __init__(self, session: SolverSession, trace=None):
        self.session = session
        self.trace = trace

    # -- tracing -------------------------------------------------------

    def _event(self, kind: str, **data) -> None:
        if self.trace is not None:
            self.trace.event(kind, **data)

    # -- satisfiability with ground probing ------------------------------

    def _probe_sat(self, conj: Conjunction, seeds) -> bool:
        variables = conj.variables()
        for env in _probe_envs(sorted(variables, key=lambda v: v.sort_key()), seeds):
            if conj.evaluate(env):
                return True
        return False

    def _premise_satisfiable(self, premise: Conjunction, seeds) -> bool:
        if self._probe_sat(premise, seeds):
            return True
        result = satisfiable(self.session, premise, phase=PHASE_PREMISE)
        return result.verdict is Verdict.SAT

    # -- candidate evaluation ---------------------------------------------

    def _evaluate_candidate(
        self,
        technique: Technique,
        atom: Atom,
        guard: Conjunction,
        update: Update,
        cf: ClosedForm | None,
        seeds,
    ) -> CandidateStep | None:
        rest = guard.without(atom)
        if technique is Technique.FP:
            result = technique_result(Technique.FP, atom, TRUE, update, None)
            sat = satisfiable(self.session, result, phase=PHASE_CANDIDATE)
            self._event(
                "candidate",
                technique=str(technique),
                atom=atom.render(),
                verdict=sat.verdict.value,
            )
            if sat.verdict is not Verdict.SAT:
                return None
            return CandidateStep(technique, atom, (), result)

        premise, conclusion = encode(technique, atom, rest, update)
        formula = SmtFormula()
        label_to_atom: dict[str, Atom] = {}
        guard_atoms = list(guard.atoms)
        for extra_idx, pre_atom in enumerate(premise.atoms):
            if pre_atom in rest.atoms:
                idx = guard_atoms.index(pre_atom)
                label = f"g{idx}"
                label_to_atom[label] = pre_atom
            else:
                label = f"pre{extra_idx}"
            if any(l == label for l, _ in formula.assertions):
                continue
            formula.add(label, pre_atom)
        formula.add("nc", conclusion.negate())
        check = self.session.check(formula, want_core=True, phase=PHASE_CANDIDATE)
        self._event(
            "candidate",
            technique=str(technique),
            atom=atom.render(),
            verdict=check.verdict.value,
            core=list(check.core) if check.core else None,
        )
        if not check.is_unsat:
            return None
        core = self.session.shrink_core(formula, check.core)
        deps = tuple(
            a for a in rest.atoms if any(label_to_atom.get(l) == a for l in core)
        )
        if technique is not Technique.INC:
            # Increase premises contain the whole guard, whose satisfiability
            # is checked before the analysis starts.
            if not self._premise_satisfiable(premise, seeds):
                self._event(
                    "candidate_rejected",
                    technique=str(technique),
                    atom=atom.render(),
                    reason="premise unsatisfiable",
                )
                return None
        result = technique_result(technique, atom, rest, update, cf)
        if result is NEEDS_CLOSED_FORM:
            return None
        return CandidateStep(technique, atom, deps, result)

    # -- dependency analysis -----------------------------------------------

    def analyze_dependencies(
        self,
        guard: Conjunction,
        update: Update,
        cf: ClosedForm | None = None,
        allowed: frozenset[Technique] | None = None,
        guard_model: Mapping[Variable, int] | None = None,
    ) -> DependencyAnalysis | Incomplete:
        """Greedy unsat-core driven search for an ordered technique selection.

        Per atom, techniques are tried in descending order and the search
        stops as soon as a candidate's dependencies can join the selection
        without creating a cycle; atoms whose candidates are blocked are
        revisited once more dependencies are covered.
        """
        if allowed is None:
            allowed = frozenset(TECHNIQUES)
        order = [t for t in TECHNIQUES if t in allowed]
        atoms = list(guard.atoms)
        seeds = [guard_model] if guard_model else []

        next_idx = {a: 0 for a in atoms}
        pending: dict[Atom, list[CandidateStep]] = {a: [] for a in atoms}
        exhausted_without_candidate: dict[Atom, bool] = {a: False for a in atoms}
        selection: dict[Atom, CandidateStep] = {}
        join_order: list[CandidateStep] = []
        covered: set[Atom] = set()

        def try_candidates(atom: Atom) -> bool:
            for cand in pending[atom]:
                if set(cand.deps) <= covered:
                    selection[atom] = cand
                    join_order.append(cand)
                    covered.add(atom)
                    pending[atom] = [c for c in pending[atom] if c is not cand]
                    self._event("step_selected", step=cand.render())
                    return True
            return False

        def advance(atom: Atom, force: bool) -> bool:
            if pending[atom] and not force:
                return False
            while next_idx[atom] < len(order):
                technique = order[next_idx[atom]]
                next_idx[atom] += 1
                cand = self._evaluate_candidate(
                    technique, atom, guard, update, cf, seeds
                )
                if cand is None:
                    continue
                if set(cand.deps) <= covered:
                    selection[atom] = cand
                    join_order.append(cand)
                    covered.add(atom)
                    self._event("step_selected", step=cand.render())
                    return True
                pending[atom].append(cand)
                if not force:
                    return False
            if next_idx[atom] >= len(order) and not pending[atom]:
                exhausted_without_candidate[atom] = True
            return False

        while len(covered) < len(atoms):
            progress = False
            for atom in atoms:
                if atom in covered:
                    continue
                if try_candidates(atom) or advance(atom, force=False):
                    progress = True
            if progress:
                continue
            # deadlock: push the first uncovered atom past its blocked
            # candidates to open up an alternative technique
            forced = False
            for atom in atoms:
                if atom in covered:
                    continue
                if advance(atom, force=True):
                    forced = True
                    break
            if not forced:
                for atom in atoms:
                    if atom not in covered:
                        self._event("analysis_incomplete", atom=atom.render())
                        return Incomplete(atom)

        extra = tuple(
            cand
            for atom in atoms
            for cand in pending[atom]
            if set(cand.deps) <= covered
        )
        analysis = DependencyAnalysis(guard, selection, tuple(join_order), extra)
        analysis.assert_acyclic()
        self._event(
            "analysis",
            selection=analysis.render_selection(),
            order=analysis.render_order(),
        )
        return analysis

    def analyze_naive(
        self,
        guard: Conjunction,
        update: Update,
        cf: ClosedForm | None = None,
        allowed: frozenset[Technique] | None = None,
        guard_model: Mapping[Variable, int] | None = None,
    ) -> DependencyAnalysis | Incomplete:
        """Round-based strategy without unsat cores: every remaining atom is
        retried against the currently checked part until no progress."""
        if allowed is None:
            allowed = frozenset(TECHNIQUES)
        order = [t for t in TECHNIQUES if t in allowed]
        atoms = list(guard.atoms)
        seeds = [guard_model] if guard_model else []
        checked = TRUE
        selection: dict[Atom, CandidateStep] = {}
        join_order: list[CandidateStep] = []
        remaining = list(atoms)

        while remaining:
            progress = False
            for atom in list(remaining):
                step = self._naive_attempt(atom, checked, order, update, cf, seeds)
                if step is None:
                    continue
                selection[atom] = step
                join_order.append(step)
                checked = checked & atom
                remaining.remove(atom)
                progress = True
            if not progress:
                return Incomplete(remaining[0])
        analysis = DependencyAnalysis(guard, selection, tuple(join_order))
        self._event(
            "analysis",
            strategy="naive",
            selection=analysis.render_selection(),
            order=analysis.render_order(),
        )
        return analysis

    def _naive_attempt(
        self, atom, checked, order, update, cf, seeds
    ) -> CandidateStep | None:
        for technique in order:
            if technique is Technique.FP:
                result = technique_result(Technique.FP, atom, TRUE, update, None)
                sat = satisfiable(self.session, result, phase=PHASE_CANDIDATE)
                if sat.verdict is Verdict.SAT:
                    return CandidateStep(technique, atom, (), result)
                continue
            premise, conclusion = encode(technique, atom, checked, update)
            formula = SmtFormula()
            for i, pre_atom in enumerate(premise.atoms):
                formula.add(f"p{i}", pre_atom)
            formula.add("nc", conclusion.negate())
            check = self.session.check(formula, phase=PHASE_CANDIDATE)
            if not check.is_unsat:
                continue
            if technique is not Technique.INC and not self._premise_satisfiable(
                premise, seeds
            ):
                continue
            result = technique_result(technique, atom, checked, update, cf)
            if result is NEEDS_CLOSED_FORM:
                continue
            return CandidateStep(technique, atom, (), result)
        return None

    # -- drivers -------------------------------------------------------------

    def _fresh_iteration_var(self, transition: Transition) -> Variable:
        used = {v.name for v in transition.guard.variables()}
        used |= {v.name for v in transition.update.variables}
        used |= {v.name for v in transition.update.temporaries()}
        if isinstance(transition.cost, Poly):
            used |= {v.name for v in transition.cost.variables()}
        if "n" not in used:
            return Variable("n", VarKind.TEMPORARY)
        k = 1
        while f"n{k}" in used:
            k += 1
        return Variable(f"n{k}", VarKind.TEMPORARY)

    def accelerate(
        self, transition: Transition, strategy: str = "core"
    ) -> Accelerated | Failure:
        """Accelerate a simple loop into one transition covering n iterations."""
        if not transition.is_simple_loop:
            return Failure("not a simple loop")
        if isinstance(transition.cost, Infinity):
            return Failure("cannot accelerate an infinite-cost transition")
        self._event("accelerate", transition=transition.render())
        guard_check = satisfiable(
            self.session, transition.guard, want_model=True, phase=PHASE_GUARD
        )
        if guard_check.verdict is not Verdict.SAT:
            return Failure("guard satisfiability not proven")

        cf = closed_form(transition.update)
        if cf is UNSUPPORTED:
            self._event("accelerate_failed", reason="closed form unsupported")
            return Failure("update is outside the supported closed-form class")

        analyze = (
            self.analyze_dependencies if strategy == "core" else self.analyze_naive
        )
        analysis = analyze(
            transition.guard,
            transition.update,
            cf,
            guard_model=guard_check.model,
        )
        if isinstance(analysis, Incomplete):
            self._event("accelerate_failed", reason=analysis.render())
            return Failure(analysis.render())

        steps = analysis.total_order()
        psi = TRUE
        for step in steps:
            psi = psi & step.result

        needs_second_iteration = cf.validity_threshold == 1 and any(
            step.technique in (Technique.DEC, Technique.EV_DEC) for step in steps
        )
        nu = self._fresh_iteration_var(transition)
        rename = {ITERATION_VAR: Poly.var(nu)}

        guard_atoms = list(psi.substitute(rename).atoms)
        guard_atoms.append(Atom(Poly.var(nu)))
        if needs_second_iteration:
            guard_atoms.append(Atom(Poly.var(nu) - 1))
        new_guard = Conjunction(guard_atoms)

        if cf.validity_threshold == 0:
            q = cost_sum(transition.cost, cf)
        else:
            q = cost_sum_from_step_one(transition.cost, cf)
        if q is UNSUPPORTED:
            return Failure("cost summation unsupported")

        final_check = satisfiable(self.session, new_guard, phase=PHASE_GUARD)
        if final_check.verdict is not Verdict.SAT:
            self._event("accelerate_failed", reason="empty acceleration")
            return Failure("empty acceleration")

        accelerated = Transition(
            transition.src,
            transition.dst,
            Update(
                transition.update.variables,
                [p.substitute(rename) for p in cf.exprs],
            ),
            new_guard,
            q.poly.substitute(rename),
        )
        self._event("accelerated", transition=accelerated.render())
        return Accelerated(
            accelerated,
            nu,
            cf,
            analysis,
            transition,
            retained_original=needs_second_iteration,
        )

    def prove_nonterm(
        self, transition: Transition, strategy: str = "core"
    ) -> Certificate | None:
        """Certify non-termination of a simple loop, if possible."""
        if not transition.is_simple_loop:
            return None
        if isinstance(transition.cost, Infinity):
            return None
        self._event("nonterm", transition=transition.render())
        # positive cost along the loop is required for soundness
        cost_formula = SmtFormula()
        for i, atom in enumerate(transition.guard.atoms):
            cost_formula.add(f"g{i}", atom)
        cost_formula.add("nc", Atom(transition.cost).negate())
        if not self.session.check(cost_formula, phase=PHASE_GUARD).is_unsat:
            self._event("nonterm_failed", reason="cost positivity not proven")
            return None
        guard_check = satisfiable(
            self.session, transition.guard, want_model=True, phase=PHASE_GUARD
        )
        if guard_check.verdict is not Verdict.SAT:
            return None

        analyze = (
            self.analyze_dependencies if strategy == "core" else self.analyze_naive
        )
        analysis = analyze(
            transition.guard,
            transition.update,
            None,
            allowed=NONTERM_TECHNIQUES,
            guard_model=guard_check.model,
        )
        if isinstance(analysis, Incomplete):
            self._event("nonterm_failed", reason=analysis.render())
            return None

        psi = TRUE
        for step in analysis.total_order():
            psi = psi & step.result
        witness = satisfiable(self.session, psi, want_model=True, phase=PHASE_GUARD)
        if witness.verdict is not Verdict.SAT:
            self._event("nonterm_failed", reason="certificate unsatisfiable")
            return None
        self._event("nonterm_certificate", psi=psi.render())
        return Certificate(psi, witness.model, analysis)
