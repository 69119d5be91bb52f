"""The stepping interpreter: break-point execution of tactic programs.

A session runs one calculation. Each do_next scans the active program to
its next applicable tactic (the break-point), applies it as one visible
calculation step, and hands control back. User input is checked against
the program: tactics by locating an equivalent program tactic, formulas
by deriving them through an internal speculative run.
"""

from __future__ import annotations

import copy
import uuid
from dataclasses import dataclass, field
from typing import Optional, Union

from . import program as prog
from .calculation import (
    Calculation,
    Context,
    FormulaEntry,
    NoResult,
    Position,
    Result,
    StepResult,
    SubCalc,
    Tactic,
    TacticEntry,
    apply_tactic,
    close_subproblem,
    entry_at,
    extract_result,
    init_calculation,
    MARKER_EQUIV,
    stub_exports,
    subcalc_at,
    tactic_applicable,
)
from .knowledge import KnowledgeStore, Method
from .program import (
    AtTactic,
    Finished as ScanFinished,
    ProgState,
    Stuck as ScanStuck,
    Subproblem,
    CheckPostcond,
    scan_to_next_tactic,
)
from .rewrite import NotApplicable, equal_modulo, eval_condition
from .terms import App, Term, Var, render_term


class InterpreterError(Exception):
    pass


class InvalidState(InterpreterError):
    pass


class UnknownPosition(InterpreterError):
    pass


class UnboundFormal(InterpreterError):
    pass


class NotApplicableInput(InterpreterError):
    """The user's tactic does not apply in the current configuration; rejected before any search."""


# -- step outcomes ----------------------------------------------------------


@dataclass(frozen=True)
class Stepped:
    tactic: Tactic
    formula: Optional[Term]
    position: Position


@dataclass(frozen=True)
class Located:
    tactic: Tactic
    formula: Optional[Term]
    position: Position


@dataclass(frozen=True)
class Helpless:
    formula: Optional[Term]
    position: Position


@dataclass(frozen=True)
class Derived:
    formula: Term
    steps: tuple[tuple[Tactic, Term], ...]
    position: Position


@dataclass(frozen=True)
class NotDerivable:
    pass


@dataclass(frozen=True)
class Finished:
    result: Result


@dataclass(frozen=True)
class Stuck:
    reason: str


StepOutcome = Union[Stepped, Located, Helpless, Derived, NotDerivable, Finished, Stuck]


@dataclass
class Frame:
    """One open (sub)problem: its method, program state, and calc position."""

    method: Method
    calc_pos: Position
    state: Optional[ProgState] = None          # program frames
    stub_queue: list[tuple[str, Term]] = field(default_factory=list)
    stub_binding: dict[str, Term] = field(default_factory=dict)


@dataclass
class LogRecord:
    trigger: str
    summary: str
    snapshot: tuple  # deep copy of (frames, calc, detached)


LOCATE_BUDGET = 200
DERIVE_BUDGET = 500
AUTO_BUDGET = 10_000


class _Host:
    """Scan callbacks: applicability probes and condition verdicts, both pure."""

    def __init__(self, session: "Session", frame: Frame):
        self.session = session
        self.frame = frame

    def applicable(self, tactic: prog.ProgTactic) -> bool:
        calc = subcalc_at(self.session.calc, self.frame.calc_pos)
        ok, _ = tactic_applicable(tactic, calc, self.session.store)
        return ok

    def eval_cond(self, cond: Term) -> str:
        calc = subcalc_at(self.session.calc, self.frame.calc_pos)
        crs = self.session.store.condition_rules(calc.theory)
        return eval_condition(calc.context.terms(), cond, crs)


class Session:
    """One user's calculation under interpretation; operations are serialized
    by the owning service, never concurrent."""

    def __init__(self, store: KnowledgeStore, calc: Calculation, frames: list[Frame],
                 session_id: Optional[str] = None):
        self.id = session_id or uuid.uuid4().hex
        self.store = store
        self.calc = calc
        self.frames = frames
        self.detached = False
        self.step_log: list[LogRecord] = []
        self._log("open", "session opened")

    # -- bookkeeping ---------------------------------------------------------

    def _snapshot(self) -> tuple:
        return copy.deepcopy((self.frames, self.calc, self.detached))

    def _log(self, trigger: str, summary: str) -> None:
        self.step_log.append(LogRecord(trigger, summary, self._snapshot()))

    def _restore(self, snapshot: tuple) -> None:
        frames, calc, detached = copy.deepcopy(snapshot)
        self.frames = frames
        self.calc = calc
        self.detached = detached

    def current_subcalc(self) -> Calculation:
        if not self.frames:
            return self.calc
        return subcalc_at(self.calc, self.frames[-1].calc_pos)

    def current_theory(self) -> str:
        return self.current_subcalc().theory

    # -- the do_next judgment --------------------------------------------------

    def do_next(self, _log: bool = True) -> StepOutcome:
        if self.calc.status == "solved" or not self.frames:
            raise InvalidState("calculation already finished")
        if self.detached:
            # a no-op: nothing changes, so nothing is logged
            return Stuck("interpreter is detached after an unprogrammed step; "
                         "backtrack or input a derivable formula")
        outcome = self._advance()
        if _log:
            self._log("do_next", _summary(outcome))
        return outcome

    def _advance(self) -> StepOutcome:
        frame = self.frames[-1]
        if frame.method.is_stub:
            return self._advance_stub(frame)
        return self._advance_program(frame)

    def _advance_stub(self, frame: Frame) -> StepOutcome:
        calc = subcalc_at(self.calc, frame.calc_pos)
        if frame.stub_queue:
            kind, term = frame.stub_queue.pop(0)
            if kind == "take":
                res = apply_tactic(self.calc, frame.calc_pos, prog.Take(term), self.store)
                return Stepped(prog.Take(term), res.formula, res.entry_position)
            # declared approximation: emitted verbatim with the session's bound
            errbound = _stub_errbound(frame.stub_binding)
            tactic = prog.Approximate(errbound)
            calc.entries.append(TacticEntry(tactic))
            calc.entries.append(FormulaEntry(term, "…", "tactic"))
            calc.context.add(term, "value_export")
            pos = frame.calc_pos + (len(calc.entries) - 1,)
            return Stepped(tactic, term, pos)
        groups = stub_exports(frame.method, frame.stub_binding)
        return self._close_top_frame(declared_results=groups["result"],
                                     extra_exports=groups["fact"] + groups["approx"])

    def _advance_program(self, frame: Frame) -> StepOutcome:
        assert frame.state is not None and frame.method.program is not None
        scan = scan_to_next_tactic(frame.method.program, frame.state, _Host(self, frame))
        if isinstance(scan, ScanStuck):
            return Stuck(scan.reason)
        if isinstance(scan, ScanFinished):
            return self._close_top_frame()
        assert isinstance(scan, AtTactic)
        tactic = scan.tactic
        if isinstance(tactic, CheckPostcond):
            frame.state = scan.state
            return self._close_top_frame()
        res = apply_tactic(self.calc, frame.calc_pos, tactic, self.store)
        if isinstance(tactic, Subproblem):
            frame.state = scan.state
            self._push_subproblem(tactic, res)
            return Stepped(tactic, None, res.entry_position)
        scan.state.value = res.formula
        frame.state = scan.state
        return Stepped(tactic, res.formula, res.entry_position)

    def _push_subproblem(self, tactic: Subproblem, res: StepResult) -> None:
        method = self.store.lookup_method(tactic.method)
        assert method is not None and res.subcalc is not None
        child_pos = res.entry_position
        binding = dict(res.subcalc.init_args)
        if method.is_stub:
            groups = stub_exports(method, binding)
            queue = [("take", t) for t in groups["take"]]
            queue += [("approx", t) for t in groups["approx"]]
            self.frames.append(Frame(method, child_pos, stub_queue=queue, stub_binding=binding))
        else:
            state = ProgState(env=dict(binding))
            self.frames.append(Frame(method, child_pos, state=state))

    def _close_top_frame(self, declared_results=None, extra_exports=None) -> StepOutcome:
        frame = self.frames[-1]
        if frame.method.is_stub and declared_results is None:
            groups = stub_exports(frame.method, frame.stub_binding)
            declared_results = groups["result"]
            extra_exports = groups["fact"] + groups["approx"]
        formula, pos = close_subproblem(
            self.calc, frame.calc_pos, self.store,
            declared_results=declared_results, extra_exports=extra_exports)
        spec_path = subcalc_at(self.calc, frame.calc_pos).spec.path
        self.frames.pop()
        if not self.frames:
            return Finished(extract_result(self.calc))
        parent = self.frames[-1]
        if parent.state is not None:
            parent.state.value = formula
        return Stepped(CheckPostcond(spec_path), formula, pos)

    # -- user input: tactics (locating) ----------------------------------------

    def input_tactic(self, tactic: Tactic, _log: bool = True) -> StepOutcome:
        if self.calc.status == "solved" or not self.frames:
            raise InvalidState("calculation already finished")
        frame = self.frames[-1]
        calc = subcalc_at(self.calc, frame.calc_pos)
        ok, reason = tactic_applicable(tactic, calc, self.store)
        if not ok:
            raise NotApplicableInput(reason)

        # the search probes program states against the configuration as it
        # was before the input, so clone first
        clone = self._clone_for_search()
        res = apply_tactic(self.calc, frame.calc_pos, tactic, self.store)
        if isinstance(tactic, Subproblem):
            # the user opened a subproblem themselves; locate it if the
            # program proposes the same one right now
            located = self._search_clone(clone, tactic, allow_subproblem=True)
        else:
            located = self._search_clone(clone, tactic)
        if located is not None:
            frame.state = located
            if isinstance(tactic, Subproblem):
                self._push_subproblem(tactic, res)
            outcome: StepOutcome = Located(tactic, res.formula, res.entry_position)
        else:
            self.detached = True
            outcome = Helpless(res.formula, res.entry_position)
        if _log:
            self._log("input_tactic", _summary(outcome))
        return outcome

    def _clone_for_search(self) -> "Session":
        clone = object.__new__(Session)
        clone.id = self.id + ":spec"
        clone.store = self.store
        clone.frames, clone.calc, clone.detached = copy.deepcopy(
            (self.frames, self.calc, self.detached))
        clone.step_log = []
        return clone

    def _search_clone(self, clone: "Session", wanted: Tactic,
                      allow_subproblem: bool = False) -> Optional[ProgState]:
        """Speculatively step the clone within the current frame, looking for
        a program tactic equal to the input one. Returns the program state
        resumed past the match, or None (helpless)."""
        depth = len(clone.frames)
        frame = clone.frames[-1]
        if frame.method.is_stub or frame.state is None:
            return None
        for _ in range(LOCATE_BUDGET):
            scan = scan_to_next_tactic(frame.method.program, frame.state, _Host(clone, frame))
            if not isinstance(scan, AtTactic):
                return None
            if scan.tactic == wanted:
                if isinstance(scan.tactic, Subproblem) and not allow_subproblem:
                    return None
                return scan.state
            if isinstance(scan.tactic, (Subproblem, CheckPostcond)):
                return None  # search stays within the current frame
            try:
                res = apply_tactic(clone.calc, frame.calc_pos, scan.tactic, clone.store)
            except NotApplicable:
                return None
            scan.state.value = res.formula
            frame.state = scan.state
        return None

    # -- user input: formulas (derivation) -------------------------------------

    def input_formula(self, formula: Term, _log: bool = True) -> StepOutcome:
        if self.calc.status == "solved" or not self.frames:
            raise InvalidState("calculation already finished")
        frame = self.frames[-1]
        calc = subcalc_at(self.calc, frame.calc_pos)
        check_rs = self.store.check_rules(calc.theory)
        crs = self.store.condition_rules(calc.theory)
        if check_rs is None:
            return NotDerivable()

        def matches(candidate: Optional[Term], facts) -> bool:
            if candidate is None:
                return False
            if isinstance(candidate, App) and candidate.head == "~":
                return False  # approximations never justify derivations
            return equal_modulo(check_rs, candidate, formula, facts, crs) == "Equal"

        # a NotDerivable verdict is a pure query: nothing may change, not
        # even the log, so the session stays bit-identical
        if isinstance(formula, App) and formula.head == "~":
            return NotDerivable()

        if matches(calc.current_formula(), calc.context.terms()):
            calc.entries.append(FormulaEntry(formula, MARKER_EQUIV, "derived", derivation=[]))
            pos = frame.calc_pos + (len(calc.entries) - 1,)
            outcome = Derived(formula, (), pos)
            self.detached = False
            if _log:
                self._log("input_formula", _summary(outcome))
            return outcome

        clone = self._clone_for_search()
        clone.detached = False
        cframe = clone.frames[-1]
        steps: list[tuple[Tactic, Term]] = []
        found = False
        if not cframe.method.is_stub and cframe.state is not None:
            for _ in range(DERIVE_BUDGET):
                scan = scan_to_next_tactic(cframe.method.program, cframe.state,
                                           _Host(clone, cframe))
                if not isinstance(scan, AtTactic):
                    break
                if isinstance(scan.tactic, (Subproblem, CheckPostcond)):
                    break  # derivation search stays within the current frame
                try:
                    res = apply_tactic(clone.calc, cframe.calc_pos, scan.tactic, clone.store)
                except NotApplicable:
                    break
                scan.state.value = res.formula
                cframe.state = scan.state
                if res.formula is not None:
                    steps.append((scan.tactic, res.formula))
                ccalc = subcalc_at(clone.calc, cframe.calc_pos)
                if matches(res.formula, ccalc.context.terms()):
                    found = True
                    break
        if not found:
            return NotDerivable()

        # commit: one collapsed ad-hoc derivation ending at the user's formula,
        # the internally grown context, and the advanced program state
        ccalc = subcalc_at(clone.calc, cframe.calc_pos)
        for fact in ccalc.context.local_terms():
            if fact not in calc.context.local_terms():
                origin = next(f.origin for f in ccalc.context.facts if f.term == fact)
                calc.context.add(fact, origin)
        calc.entries.append(FormulaEntry(formula, MARKER_EQUIV, "derived",
                                         derivation=list(steps)))
        pos = frame.calc_pos + (len(calc.entries) - 1,)
        frame.state = cframe.state
        self.detached = False
        outcome = Derived(formula, tuple(steps), pos)
        if _log:
            self._log("input_formula", _summary(outcome))
        return outcome

    # -- completion --------------------------------------------------------------

    def auto_complete(self) -> StepOutcome:
        if self.calc.status == "solved":
            return Finished(extract_result(self.calc))
        for _ in range(AUTO_BUDGET):
            outcome = self.do_next()
            if isinstance(outcome, (Finished, Stuck)):
                return outcome
        return Stuck("auto completion budget exceeded")

    # -- backtracking ----------------------------------------------------------

    def backtrack(self, position: int) -> None:
        if not (0 <= position < len(self.step_log)):
            raise UnknownPosition(f"no step {position} in the log (0..{len(self.step_log) - 1})")
        self._restore(self.step_log[position].snapshot)
        self._log("backtrack", f"restored step {position}; later steps abandoned")

    # -- inspection --------------------------------------------------------------

    def inspect_context(self, pos: Position) -> list[dict]:
        calc = subcalc_at(self.calc, pos)
        return [{"term": render_term(f.term), "unicode": render_term(f.term, "unicode"),
                 "origin": f.origin} for f in calc.context.iter_facts()]

    def inspect_trace(self, pos: Position) -> list[dict]:
        entry = entry_at(self.calc, pos)
        if not isinstance(entry, FormulaEntry):
            raise UnknownPosition(f"entry at {pos} is not a formula")
        if entry.derivation is not None:
            return [{"tactic": _tactic_text(t), "formula": render_term(f)}
                    for t, f in entry.derivation]
        if entry.trace is None:
            return []
        return [{"rule": s.rule, "path": list(s.path), "result": render_term(s.result)}
                for s in entry.trace.steps]

    def inspect_knowledge(self, tactic: Tactic) -> dict:
        theory = self.current_theory()
        if isinstance(tactic, (prog.Rewrite, prog.RewriteInst)):
            rule = self.store.lookup_rule(theory, tactic.rule)
            if rule is None:
                raise UnknownPosition(f"unknown rule {tactic.rule}")
            text = f"{rule.name}: {render_term(rule.lhs)} = {render_term(rule.rhs)}"
            if rule.conditions:
                text += " if " + "; ".join(render_term(c) for c in rule.conditions)
            owner = next(t.name for t in self.store.theory_chain(theory) if rule.name in t.rules)
            return {"kind": "rule", "name": rule.name, "text": text, "theory": owner}
        if isinstance(tactic, prog.RewriteSet):
            rs = self.store.lookup_rule_set(theory, tactic.ruleset)
            if rs is None:
                raise UnknownPosition(f"unknown rule set {tactic.ruleset}")
            return {"kind": "ruleset", "name": rs.name,
                    "rules": [r.name for r in rs.rules], "max_steps": rs.max_steps}
        if isinstance(tactic, prog.Subproblem):
            method = self.store.lookup_method(tactic.method)
            return {"kind": "method", "name": tactic.method,
                    "spec": list(tactic.spec), "theory": tactic.theory,
                    "program": prog.pretty_program(method.program) if method and method.program else None}
        if isinstance(tactic, prog.CheckPostcond):
            spec = self.store.lookup_specification(tactic.spec)
            if spec is None:
                raise UnknownPosition(f"unknown specification {list(tactic.spec)}")
            return {"kind": "spec", "path": list(spec.path),
                    "inputs": [list(i) for i in spec.inputs],
                    "outputs": [list(o) for o in spec.outputs],
                    "precond": [render_term(c) for c in spec.precond],
                    "postcond": render_term(spec.postcond) if spec.postcond else None}
        return {"kind": "tactic", "text": _tactic_text(tactic)}


def _stub_errbound(binding: dict[str, Term]) -> Term:
    for name, value in binding.items():
        if "err" in name:
            return value
    from fractions import Fraction
    from .terms import Num
    return Num(Fraction(1, 100))


def _tactic_text(t: Tactic) -> str:
    return prog._pp_tactic(t)


def _summary(outcome: StepOutcome) -> str:
    if isinstance(outcome, Stepped):
        return f"stepped: {_tactic_text(outcome.tactic)}"
    if isinstance(outcome, Located):
        return f"located: {_tactic_text(outcome.tactic)}"
    if isinstance(outcome, Helpless):
        return "helpless: user step kept, frames detached"
    if isinstance(outcome, Derived):
        return f"derived in {len(outcome.steps)} internal step(s)"
    if isinstance(outcome, NotDerivable):
        return "not derivable"
    if isinstance(outcome, Finished):
        return "finished"
    if isinstance(outcome, Stuck):
        return f"stuck: {outcome.reason}"
    return str(outcome)


def open_session(
    store: KnowledgeStore,
    spec_path: list[str] | tuple[str, ...],
    method_name: str,
    args: dict[str, Term],
    session_id: Optional[str] = None,
) -> Session:
    """Open a session on a (specification, method) pair.

    args must bind every program formal (the spec's inputs plus the extras
    that feed the subproblems); stub methods bind the spec's inputs and
    optionally its outputs.
    """
    spec = store.lookup_specification(spec_path)
    if spec is None:
        raise InterpreterError(f"unknown specification {list(spec_path)}")
    method = store.lookup_method(method_name)
    if method is None:
        raise InterpreterError(f"unknown method {method_name}")
    if tuple(method.spec_path) != tuple(spec_path):
        raise InterpreterError(
            f"method {method_name} solves {list(method.spec_path)}, not {list(spec_path)}")

    if method.program is not None:
        missing = [n for n, _ in method.program.formals if n not in args]
        if missing:
            raise UnboundFormal(f"unbound program formals: {missing}")
    calc = init_calculation(spec, args, method.theory, store)
    if method.program is not None:
        env = {n: args[n] for n, _ in method.program.formals}
        frame = Frame(method, (), state=ProgState(env=env))
    else:
        binding = {n: args[n] for n in
                   list(spec.input_names) + list(spec.output_names) if n in args}
        groups = stub_exports(method, binding)
        queue = [("take", t) for t in groups["take"]]
        queue += [("approx", t) for t in groups["approx"]]
        frame = Frame(method, (), stub_queue=queue, stub_binding=binding)
    return Session(store, calc, [frame], session_id=session_id)
