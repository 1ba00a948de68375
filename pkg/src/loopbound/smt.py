"""Client for an external SMT-LIB2 solver process.

One solver process is kept per session; each query sends a fresh script
prefixed with ``(reset)`` and reads the response synchronously.  Solver
crashes and timeouts yield Unknown verdicts; malformed responses raise
SmtProtocolError with the transcript attached.  The bundled fallback solver
(:mod:`loopbound.minismt`) is used when no executable is configured.
"""

from __future__ import annotations

import os
import select
import shlex
import subprocess
import sys
import time
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

from .terms import Atom, Conjunction, Poly, VarKind, Variable

ENV_SOLVER = "SMT_SOLVER"

Formula = Union[Atom, Conjunction]


class Verdict(Enum):
    SAT = "sat"
    UNSAT = "unsat"
    UNKNOWN = "unknown"


@dataclass
class SmtResult:
    verdict: Verdict
    model: dict[Variable, int] | None = None
    core: tuple[str, ...] | None = None

    @property
    def is_sat(self) -> bool:
        return self.verdict is Verdict.SAT

    @property
    def is_unsat(self) -> bool:
        return self.verdict is Verdict.UNSAT


class SmtFormula:
    """Labeled assertions; labels must be unique."""

    def __init__(self, assertions: Iterable[tuple[str, Formula]] = ()):
        self.assertions: list[tuple[str, Formula]] = []
        self._labels: set[str] = set()
        for label, f in assertions:
            self.add(label, f)

    def add(self, label: str, formula: Formula) -> None:
        if label in self._labels:
            raise ValueError(f"duplicate label {label!r}")
        self._labels.add(label)
        self.assertions.append((label, formula))

    def restricted(self, labels: Iterable[str]) -> "SmtFormula":
        keep = set(labels)
        return SmtFormula((l, f) for l, f in self.assertions if l in keep)

    def variables(self) -> list[Variable]:
        seen: dict[Variable, None] = {}
        for _, f in self.assertions:
            for v in f.variables():
                seen.setdefault(v, None)
        return sorted(seen, key=lambda v: v.sort_key())


class SolverUnavailable(RuntimeError):
    pass


class SmtProtocolError(RuntimeError):
    def __init__(self, message: str, transcript: str):
        super().__init__(f"{message}\n--- transcript ---\n{transcript}")
        self.transcript = transcript


def default_solver_command() -> list[str]:
    configured = os.environ.get(ENV_SOLVER)
    if configured:
        return shlex.split(configured)
    return [sys.executable, "-m", "loopbound.minismt"]


def _sexpr_int(k: int) -> str:
    return str(k) if k >= 0 else f"(- {-k})"


def _sexpr_poly(p: Poly, names: Mapping[Variable, str]) -> str:
    if p.is_zero():
        return "0"
    parts = []
    for mono, coeff in p.monomials():
        if coeff.denominator != 1:
            raise ValueError("SMT emission requires integer coefficients")
        c = int(coeff)
        factors: list[str] = []
        for v, e in mono:
            factors.extend([names[v]] * e)
        if not factors:
            parts.append(_sexpr_int(c))
        elif c == 1 and len(factors) == 1:
            parts.append(factors[0])
        else:
            items = ([] if c == 1 else [_sexpr_int(c)]) + factors
            if len(items) == 1:
                parts.append(items[0])
            else:
                parts.append("(* " + " ".join(items) + ")")
    if len(parts) == 1:
        return parts[0]
    return "(+ " + " ".join(parts) + ")"


def _sexpr_formula(f: Formula, names: Mapping[Variable, str]) -> str:
    if isinstance(f, Atom):
        return f"(> {_sexpr_poly(f.lhs, names)} 0)"
    if not f.atoms:
        return "true"
    if len(f.atoms) == 1:
        return _sexpr_formula(f.atoms[0], names)
    return "(and " + " ".join(_sexpr_formula(a, names) for a in f.atoms) + ")"


def _name_map(variables: Sequence[Variable]) -> dict[Variable, str]:
    by_name: dict[str, list[Variable]] = {}
    for v in variables:
        by_name.setdefault(v.name, []).append(v)
    names = {}
    suffix = {VarKind.PROGRAM: "", VarKind.TEMPORARY: "!tv", VarKind.ITERATION: "!it"}
    for name, group in by_name.items():
        if len(group) == 1:
            names[group[0]] = name
        else:
            for v in group:
                names[v] = name + suffix[v.kind]
    return names


class _Tokens:
    def __init__(self, text: str):
        self.items: list[str] = []
        i, n = 0, len(text)
        while i < n:
            ch = text[i]
            if ch.isspace():
                i += 1
            elif ch in "()":
                self.items.append(ch)
                i += 1
            else:
                j = i
                while j < n and not text[j].isspace() and text[j] not in "()":
                    j += 1
                self.items.append(text[i:j])
                i = j
        self.pos = 0

    def read(self):
        if self.pos >= len(self.items):
            raise ValueError("unexpected end of solver output")
        tok = self.items[self.pos]
        self.pos += 1
        if tok != "(":
            return tok
        out = []
        while True:
            if self.pos >= len(self.items):
                raise ValueError("unbalanced solver output")
            if self.items[self.pos] == ")":
                self.pos += 1
                return out
            out.append(self.read())


def _parse_int(sexpr) -> int:
    if isinstance(sexpr, str):
        return int(sexpr)
    if isinstance(sexpr, list) and len(sexpr) == 2 and sexpr[0] == "-":
        return -_parse_int(sexpr[1])
    raise ValueError(f"expected an integer, found {sexpr!r}")


class SolverSession:
    """Serialized query interface to one solver process."""

    def __init__(
        self,
        command: Sequence[str] | None = None,
        timeout_ms: int = 2000,
    ):
        self.command = list(command) if command else default_solver_command()
        self.timeout_ms = timeout_ms
        self.proc: subprocess.Popen | None = None
        self._buffer = b""
        self.counters: dict[str, int] = {}
        self.transcript: list[tuple[str, str]] = []

    # -- process management -------------------------------------------

    def start(self) -> None:
        if self.proc is not None and self.proc.poll() is None:
            return
        try:
            self.proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
            )
        except OSError as exc:
            raise SolverUnavailable(
                f"cannot start SMT solver {self.command!r}: {exc}"
            ) from exc
        self._buffer = b""

    def close(self) -> None:
        if self.proc is not None:
            try:
                if self.proc.poll() is None:
                    self.proc.stdin.write(b"(exit)\n")
                    self.proc.stdin.flush()
            except OSError:
                pass
            try:
                self.proc.kill()
            except OSError:
                pass
            self.proc.wait()
            self.proc = None

    def __enter__(self) -> "SolverSession":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _kill(self) -> None:
        if self.proc is not None:
            try:
                self.proc.kill()
            except OSError:
                pass
            self.proc.wait()
            self.proc = None
        self._buffer = b""

    # -- low-level I/O -------------------------------------------------

    def _write(self, text: str) -> None:
        assert self.proc is not None
        self.proc.stdin.write(text.encode())
        self.proc.stdin.flush()

    def _read_more(self, deadline: float) -> None:
        assert self.proc is not None
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise TimeoutError
        fd = self.proc.stdout.fileno()
        ready, _, _ = select.select([fd], [], [], remaining)
        if not ready:
            raise TimeoutError
        chunk = os.read(fd, 65536)
        if not chunk:
            raise EOFError
        self._buffer += chunk

    def _read_line(self, deadline: float) -> str:
        while True:
            while b"\n" not in self._buffer:
                self._read_more(deadline)
            line, self._buffer = self._buffer.split(b"\n", 1)
            text = line.decode().strip()
            if text:
                return text

    def _read_sexpr(self, deadline: float) -> object:
        while True:
            text = self._buffer.decode(errors="replace")
            depth = 0
            end = None
            started = False
            for i, ch in enumerate(text):
                if ch == "(":
                    depth += 1
                    started = True
                elif ch == ")":
                    depth -= 1
                if started and depth == 0:
                    end = i + 1
                    break
            if end is not None:
                self._buffer = text[end:].encode()
                return _Tokens(text[:end]).read()
            self._read_more(deadline)

    # -- queries --------------------------------------------------------

    def check(
        self,
        formula: SmtFormula,
        want_core: bool = False,
        want_model: bool = False,
        timeout_ms: int | None = None,
        phase: str = "other",
    ) -> SmtResult:
        self.counters[phase] = self.counters.get(phase, 0) + 1
        names = _name_map(formula.variables())
        lines = [
            "(reset)",
            "(set-option :produce-unsat-cores true)",
            "(set-option :produce-models true)",
            "(set-logic QF_NIA)",
        ]
        for v in sorted(names, key=lambda v: v.sort_key()):
            lines.append(f"(declare-const {names[v]} Int)")
        for label, f in formula.assertions:
            lines.append(f"(assert (! {_sexpr_formula(f, names)} :named {label}))")
        lines.append("(check-sat)")
        script = "\n".join(lines) + "\n"

        timeout = (timeout_ms if timeout_ms is not None else self.timeout_ms) / 1000.0
        deadline = time.monotonic() + timeout
        self.start()
        output: list[str] = []
        try:
            self._write(script)
            verdict_line = self._read_line(deadline)
            output.append(verdict_line)
            if verdict_line not in ("sat", "unsat", "unknown"):
                raise SmtProtocolError(
                    f"unexpected solver verdict {verdict_line!r}",
                    script + "".join(output),
                )
            verdict = Verdict(verdict_line)
            result = SmtResult(verdict)
            if verdict is Verdict.UNSAT and want_core:
                self._write("(get-unsat-core)\n")
                core = self._read_sexpr(deadline)
                output.append(repr(core))
                if not isinstance(core, list) or not all(
                    isinstance(l, str) for l in core
                ):
                    raise SmtProtocolError(
                        "malformed unsat core", script + "\n".join(output)
                    )
                labels = {l for l, _ in formula.assertions}
                bad = [l for l in core if l not in labels]
                if bad:
                    raise SmtProtocolError(
                        f"core mentions unknown labels {bad}",
                        script + "\n".join(output),
                    )
                result.core = tuple(core)
            if verdict is Verdict.SAT and want_model:
                self._write("(get-model)\n")
                raw = self._read_sexpr(deadline)
                output.append(repr(raw))
                result.model = self._parse_model(raw, names, script, output)
                self._cross_check(formula, result.model, script, output)
        except (TimeoutError, EOFError, OSError):
            self._kill()
            result = SmtResult(Verdict.UNKNOWN)
        self.transcript.append((script, "\n".join(output)))
        return result

    def _parse_model(self, raw, names, script, output) -> dict[Variable, int]:
        if not isinstance(raw, list):
            raise SmtProtocolError("malformed model", script + "\n".join(output))
        entries = raw
        if entries and entries[0] == "model":
            entries = entries[1:]
        values: dict[str, int] = {}
        for entry in entries:
            if (
                isinstance(entry, list)
                and len(entry) >= 5
                and entry[0] == "define-fun"
            ):
                try:
                    values[entry[1]] = _parse_int(entry[4])
                except ValueError as exc:
                    raise SmtProtocolError(
                        f"malformed model value: {exc}", script + "\n".join(output)
                    ) from exc
        model: dict[Variable, int] = {}
        for v, smt_name in names.items():
            model[v] = values.get(smt_name, 0)
        return model

    def _cross_check(self, formula, model, script, output) -> None:
        for label, f in formula.assertions:
            if not f.evaluate(model):
                raise SmtProtocolError(
                    f"model does not satisfy assertion {label!r}",
                    script + "\n".join(output),
                )

    def shrink_core(self, formula: SmtFormula, core: Sequence[str]) -> tuple[str, ...]:
        """Deletion-based minimization of an unsat core."""
        current = list(core)
        for label in list(core):
            if label not in current:
                continue
            trial = [l for l in current if l != label]
            sub = formula.restricted(trial)
            result = self.check(sub, phase="shrink")
            if result.is_unsat:
                current = trial
        return tuple(current)

    # -- statistics ------------------------------------------------------

    def query_counter(self) -> dict[str, int]:
        return dict(self.counters)

    def count(self, phase: str) -> int:
        return self.counters.get(phase, 0)

    def reset_query_counter(self) -> None:
        self.counters = {}

    def dump_transcript(self) -> str:
        chunks = []
        for script, response in self.transcript:
            chunks.append(script.rstrip() + "\n=>\n" + response)
        return "\n\n".join(chunks)


# ---------------------------------------------------------------------------
# convenience helpers used across the analysis
# ---------------------------------------------------------------------------


def conjunction_formula(conj: Conjunction, prefix: str = "g") -> SmtFormula:
    f = SmtFormula()
    for i, atom in enumerate(conj.atoms):
        f.add(f"{prefix}{i}", atom)
    return f


def satisfiable(
    session: SolverSession,
    conj: Conjunction,
    want_model: bool = False,
    phase: str = "other",
) -> SmtResult:
    return satisfiable_atoms(session, conj.atoms, want_model, phase)


def satisfiable_atoms(
    session: SolverSession,
    atoms: Sequence[Atom],
    want_model: bool = False,
    phase: str = "other",
) -> SmtResult:
    f = SmtFormula()
    for i, atom in enumerate(atoms):
        f.add(f"g{i}", atom)
    return session.check(f, want_model=want_model, phase=phase)


def implies(
    session: SolverSession,
    premise: Conjunction,
    conclusion: Formula,
    phase: str = "other",
) -> bool:
    """Validity of premise => conclusion; Unknown counts as not proven."""
    atoms = conclusion.atoms if isinstance(conclusion, Conjunction) else (conclusion,)
    for atom in atoms:
        f = conjunction_formula(premise)
        f.add("nc", atom.negate())
        if not session.check(f, phase=phase).is_unsat:
            return False
    return True


def equivalent(
    session: SolverSession,
    left: Conjunction,
    right: Conjunction,
    phase: str = "other",
) -> bool:
    return implies(session, left, right, phase) and implies(
        session, right, left, phase
    )
