"""Calculation trees: contexts, entries, tactic application, results.

A calculation is the user-visible side of the transition system: formula
entries justified by tactic entries, nested subproblem calculations, and
a logical context per calculation that only ever grows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Union

from . import numeric
from .knowledge import KnowledgeStore, Method, MissingArgument, Specification, check_precondition
from .program import (
    Approximate,
    CheckPostcond,
    PROG_TACTIC_VARIANTS,
    ProgTactic,
    Rewrite,
    RewriteInst,
    RewriteSet,
    Subproblem,
    Take,
)
from .rewrite import NotApplicable, RewriteTrace, normalize, rewrite_once
from .terms import (
    App,
    Num,
    Substitution,
    Term,
    Var,
    free_vars,
    is_boolean,
    list_elements,
    render_term,
    substitute,
    term_list,
)

# External tactics are the calculation-facing form of program tactics: the
# same constructors with argument expressions already evaluated to terms.
# The required bijection with the program form is the identity pairing.
Tactic = ProgTactic
TACTIC_VARIANTS = PROG_TACTIC_VARIANTS

MARKER_INITIAL = "⊢"   # ⊢  initial formula of a (sub)calculation
MARKER_EQUIV = "≡"     # ≡  equivalence-preserving rewrite result
MARKER_RESULT = "…"    # …  collapsed result / declared entry

ORIGINS = ("precondition", "type_constraint", "theory", "assumption",
           "value_export", "assumed_postcondition")


class CalculationError(Exception):
    pass


class PreconditionViolated(CalculationError):
    def __init__(self, conditions: list[Term]):
        super().__init__("precondition violated: " + "; ".join(render_term(c) for c in conditions))
        self.conditions = conditions


class NoResult(CalculationError):
    pass


@dataclass(frozen=True)
class Fact:
    term: Term
    origin: str

    def __post_init__(self):
        if self.origin not in ORIGINS:
            raise ValueError(f"unknown fact origin {self.origin!r}")


@dataclass
class Context:
    """Ordered, tagged fact set; chains to the enclosing calculation's context."""

    facts: list[Fact] = field(default_factory=list)
    parent: Optional["Context"] = None

    def add(self, term: Term, origin: str) -> bool:
        if any(f.term == term for f in self.iter_facts()):
            return False
        self.facts.append(Fact(term, origin))
        return True

    def iter_facts(self) -> Iterable[Fact]:
        if self.parent is not None:
            yield from self.parent.iter_facts()
        yield from self.facts

    def terms(self) -> list[Term]:
        return [f.term for f in self.iter_facts()]

    def local_terms(self) -> list[Term]:
        return [f.term for f in self.facts]

    def __len__(self) -> int:
        return len(self.facts) + (len(self.parent) if self.parent else 0)


@dataclass
class TacticEntry:
    tactic: Tactic


@dataclass
class FormulaEntry:
    term: Term
    marker: str
    justification: str = "tactic"  # initial | tactic | derived
    trace: Optional[RewriteTrace] = None
    derivation: Optional[list[tuple[Tactic, Term]]] = None  # ad-hoc t* steps


@dataclass
class SubCalc:
    spec_path: tuple[str, ...]
    calc: "Calculation"
    collapsed: bool = True


CalcEntry = Union[TacticEntry, FormulaEntry, SubCalc]


@dataclass
class Calculation:
    spec: Specification
    theory: str
    context: Context
    entries: list[CalcEntry] = field(default_factory=list)
    inst_outputs: dict[str, Term] = field(default_factory=dict)
    init_args: dict[str, Term] = field(default_factory=dict)
    status: str = "open"

    def current_formula(self) -> Optional[Term]:
        for entry in reversed(self.entries):
            if isinstance(entry, FormulaEntry):
                return entry.term
        return None


@dataclass(frozen=True)
class Result:
    """Triangular system of output equations plus the solution context."""

    equations: tuple[tuple[str, Term], ...]
    context: Context

    def __post_init__(self):
        seen = set()
        for i, (name, rhs) in enumerate(self.equations):
            if name in seen:
                raise ValueError(f"output {name} appears twice")
            seen.add(name)
            for _, earlier_rhs in self.equations[: i + 1]:
                if name in free_vars(earlier_rhs):
                    raise ValueError(f"not triangular: {name} occurs in an earlier right side")

    def as_term(self) -> Term:
        return term_list([App("=", (Var(n), r)) for n, r in self.equations])


def order_triangular(equations: list[tuple[str, Term]]) -> Optional[list[tuple[str, Term]]]:
    """Order equations so no variable occurs in its own or any earlier rhs.

    Greedy from the back: the last slot can always take an equation whose
    variable is absent from every remaining right side (exchange argument),
    so this finds an ordering exactly when one exists. Scanning from the
    back of the input keeps the input's relative order where possible.
    """
    remaining = list(equations)
    ordered_rev: list[tuple[str, Term]] = []
    while remaining:
        for i in range(len(remaining) - 1, -1, -1):
            name = remaining[i][0]
            if all(name not in free_vars(rhs) for _, rhs in remaining):
                ordered_rev.append(remaining.pop(i))
                break
        else:
            return None
    return list(reversed(ordered_rev))


# ---------------------------------------------------------------------------
# Positions: entry-index paths, stable under appends
# ---------------------------------------------------------------------------

Position = tuple[int, ...]


def subcalc_at(calc: Calculation, pos: Position) -> Calculation:
    """The (sub)calculation addressed by a path of SubCalc entry indices."""
    cur = calc
    for i in pos:
        entry = cur.entries[i]
        if not isinstance(entry, SubCalc):
            raise CalculationError(f"position {pos}: entry {i} is not a subproblem")
        cur = entry.calc
    return cur


def entry_at(calc: Calculation, pos: Position) -> CalcEntry:
    if not pos:
        raise CalculationError("empty position addresses the calculation, not an entry")
    parent = subcalc_at(calc, pos[:-1])
    try:
        return parent.entries[pos[-1]]
    except IndexError:
        raise CalculationError(f"no entry at position {pos}") from None


def iter_entries(calc: Calculation, prefix: Position = ()):
    for i, entry in enumerate(calc.entries):
        yield prefix + (i,), entry
        if isinstance(entry, SubCalc):
            yield from iter_entries(entry.calc, prefix + (i,))


def used_variable_names(calc: Calculation) -> set[str]:
    names: set[str] = set()
    names.update(n for n, _ in calc.spec.inputs)
    names.update(n for n, _ in calc.spec.outputs)
    for t in calc.inst_outputs.values():
        names |= free_vars(t)
    for _, entry in iter_entries(calc):
        if isinstance(entry, FormulaEntry):
            names |= free_vars(entry.term)
        elif isinstance(entry, SubCalc):
            for t in entry.calc.inst_outputs.values():
                names |= free_vars(t)
    return names


# ---------------------------------------------------------------------------
# Initialization: the starting context
# ---------------------------------------------------------------------------

_TYPE_TAGS = {"real": "real", "bool": "bool", "real list": "real_list",
              "real set": "real_set", "bool list": "bool_list"}


def _type_fact(subject: Term, annotation: str) -> Term:
    tag = _TYPE_TAGS.get(annotation, annotation.replace(" ", "_") or "real")
    return App("has_type", (subject, App(tag)))


def init_calculation(
    spec: Specification,
    args: dict[str, Term],
    theory: str,
    store: KnowledgeStore,
    parent_context: Optional[Context] = None,
) -> Calculation:
    """Fresh calculation with x0 = preconditions + type constraints + theory facts."""
    cond_rules = store.condition_rules(theory)
    parent_facts = parent_context.terms() if parent_context is not None else []
    verdict, offenders = check_precondition(spec, args, parent_facts, cond_rules)
    if verdict == "Violated":
        raise PreconditionViolated(offenders)
    ctx = Context(parent=parent_context)
    sub = Substitution({n: t for n, t in args.items()})
    for cond in spec.precond:
        ctx.add(substitute(cond, sub), "precondition")
    inst_outputs = {n: args.get(n, Var(n)) for n in spec.output_names}
    for name, ann in spec.inputs:
        ctx.add(_type_fact(args[name], ann), "type_constraint")
    for name, ann in spec.outputs:
        ctx.add(_type_fact(inst_outputs[name], ann), "type_constraint")
    for fact in store.theory_facts(theory):
        ctx.add(fact, "theory")
    return Calculation(spec=spec, theory=theory, context=ctx,
                       inst_outputs=inst_outputs, init_args=dict(args))


# ---------------------------------------------------------------------------
# Tactic applicability and application
# ---------------------------------------------------------------------------


def _approximation(rhs: Term, ctx: Context, errbound: Term) -> Optional[Term]:
    """Decimal approximation of a ground term, rounded to the error bound."""
    expanded = rhs
    bindings = {}
    for f in ctx.iter_facts():
        t = f.term
        if isinstance(t, App) and t.head == "=" and isinstance(t.args[0], Var):
            bindings[t.args[0].name] = t.args[1]
    for _ in range(8):
        new = substitute(expanded, Substitution(bindings))
        if new == expanded:
            break
        expanded = new
    try:
        value = numeric.eval_real(expanded, {})
        err = numeric.eval_real(errbound, {}) if not isinstance(errbound, Num) else float(errbound.value)
    except numeric.NumericError:
        return None
    if err <= 0 or err > 1:
        err = 0.01
    places = 0
    scale = 1.0
    while scale > err and places < 12:
        places += 1
        scale /= 10
    return Num(Fraction(round(value * 10**places), 10**places))


def tactic_applicable(
    tactic: Tactic,
    calc: Calculation,
    store: KnowledgeStore,
) -> tuple[bool, str]:
    """Decide whether a tactic applies in this configuration; returns (verdict, reason)."""
    theory = calc.theory
    cond_rules = store.condition_rules(theory)
    facts = calc.context.terms()
    current = calc.current_formula()

    if isinstance(tactic, Take):
        return True, "Take applies to any configuration"

    if isinstance(tactic, (Rewrite, RewriteInst)):
        if current is None:
            return False, "no current formula to rewrite"
        rule = store.lookup_rule(theory, tactic.rule)
        if rule is None:
            return False, f"unknown rule {tactic.rule}"
        inst = Substitution(dict(tactic.inst)) if isinstance(tactic, RewriteInst) else Substitution({})
        if rule.schematic - inst.domain():
            return False, f"rule {tactic.rule} needs instantiation of {sorted(rule.schematic)}"
        try:
            rewrite_once(rule, inst, current, facts, cond_rules)
        except NotApplicable:
            return False, f"no redex for {tactic.rule}"
        return True, f"{tactic.rule} has a redex"

    if isinstance(tactic, RewriteSet):
        if current is None:
            return False, "no current formula to normalize"
        rs = store.lookup_rule_set(theory, tactic.ruleset)
        if rs is None:
            return False, f"unknown rule set {tactic.ruleset}"
        result, _ = normalize(rs, current, facts, cond_rules)
        if result == current:
            return False, f"{tactic.ruleset} leaves the formula unchanged"
        return True, f"{tactic.ruleset} rewrites the formula"

    if isinstance(tactic, Subproblem):
        spec = store.lookup_specification(tactic.spec)
        method = store.lookup_method(tactic.method)
        if spec is None or method is None:
            return False, "unresolved subproblem reference"
        try:
            bound = bind_subproblem_args(method, spec, tactic.args, store)
            verdict, offenders = check_precondition(
                spec, bound, facts, store.condition_rules(method.theory))
        except (CalculationError, MissingArgument) as err:
            return False, str(err)
        if verdict == "Violated":
            return False, "subproblem precondition is false: " + \
                "; ".join(render_term(c) for c in offenders)
        return True, "subproblem inputs available and precondition not false"

    if isinstance(tactic, CheckPostcond):
        try:
            extract_result(calc)
        except NoResult as err:
            return False, str(err)
        return True, "candidate result present"

    if isinstance(tactic, Approximate):
        if current is None or not (isinstance(current, App) and current.head == "="):
            return False, "no equation to approximate"
        if _approximation(current.args[1], calc.context, tactic.errbound) is None:
            return False, "right side is not numerically evaluable"
        return True, "equation right side evaluable"

    return False, f"unknown tactic {tactic!r}"


def bind_subproblem_args(
    method: Method,
    spec: Specification,
    args: tuple[Term, ...],
    store: KnowledgeStore,
) -> dict[str, Term]:
    """Positional binding of subproblem arguments.

    Program methods bind their formals. Stubs bind the spec's inputs and
    then optionally its outputs, which is how a caller names the unknown
    a stub solves for.
    """
    if method.program is not None:
        formals = [n for n, _ in method.program.formals]
        if len(args) != len(formals):
            raise CalculationError(
                f"method {method.name} expects {len(formals)} argument(s), got {len(args)}")
        return dict(zip(formals, args))
    names = list(spec.input_names) + list(spec.output_names)
    if len(args) < len(spec.input_names) or len(args) > len(names):
        raise CalculationError(
            f"stub {method.name} expects between {len(spec.input_names)} and "
            f"{len(names)} argument(s), got {len(args)}")
    return dict(zip(names, args))


@dataclass
class StepResult:
    formula: Optional[Term]
    entry_position: Position
    assumptions: list[Term] = field(default_factory=list)
    subcalc: Optional[Calculation] = None


def apply_tactic(
    root: Calculation,
    pos: Position,
    tactic: Tactic,
    store: KnowledgeStore,
) -> StepResult:
    """Apply one tactic at the open (sub)calculation addressed by pos.

    Inserts exactly one tactic entry plus its produced entry at the end of
    that calculation; extends the context monotonically. Deterministic.
    Raises NotApplicable (a normal outcome) when the tactic does not apply.
    """
    calc = subcalc_at(root, pos)
    ok, reason = tactic_applicable(tactic, calc, store)
    if not ok:
        raise NotApplicable(reason)
    theory = calc.theory
    cond_rules = store.condition_rules(theory)
    facts = calc.context.terms()
    current = calc.current_formula()

    if isinstance(tactic, Take):
        calc.entries.append(TacticEntry(tactic))
        calc.entries.append(FormulaEntry(tactic.term, MARKER_INITIAL, "initial"))
        if is_boolean(tactic.term):
            calc.context.add(tactic.term, "value_export")
        return StepResult(tactic.term, pos + (len(calc.entries) - 1,))

    if isinstance(tactic, (Rewrite, RewriteInst)):
        rule = store.lookup_rule(theory, tactic.rule)
        inst = Substitution(dict(tactic.inst)) if isinstance(tactic, RewriteInst) else Substitution({})
        assert current is not None and rule is not None
        result, assumptions, trace = rewrite_once(rule, inst, current, facts, cond_rules)
        calc.entries.append(TacticEntry(tactic))
        calc.entries.append(FormulaEntry(result, MARKER_EQUIV, "tactic", trace=trace))
        for a in assumptions:
            calc.context.add(a, "assumption")
        return StepResult(result, pos + (len(calc.entries) - 1,), assumptions)

    if isinstance(tactic, RewriteSet):
        rs = store.lookup_rule_set(theory, tactic.ruleset)
        assert current is not None and rs is not None
        result, trace = normalize(rs, current, facts, cond_rules)
        calc.entries.append(TacticEntry(tactic))
        calc.entries.append(FormulaEntry(result, MARKER_EQUIV, "tactic", trace=trace))
        assumptions = trace.assumptions()
        for a in assumptions:
            calc.context.add(a, "assumption")
        return StepResult(result, pos + (len(calc.entries) - 1,), assumptions)

    if isinstance(tactic, Approximate):
        assert isinstance(current, App) and current.head == "="
        approx_value = _approximation(current.args[1], calc.context, tactic.errbound)
        assert approx_value is not None
        formula = App("~", (current.args[0], approx_value))
        calc.entries.append(TacticEntry(tactic))
        calc.entries.append(FormulaEntry(formula, MARKER_RESULT, "tactic"))
        calc.context.add(formula, "value_export")
        return StepResult(formula, pos + (len(calc.entries) - 1,))

    if isinstance(tactic, Subproblem):
        spec = store.lookup_specification(tactic.spec)
        method = store.lookup_method(tactic.method)
        assert spec is not None and method is not None
        bound = bind_subproblem_args(method, spec, tactic.args, store)
        bound = _rename_colliding_outputs(root, spec, bound)
        init_args = dict(bound)
        child = init_calculation(spec, init_args, method.theory, store,
                                 parent_context=calc.context)
        calc.entries.append(TacticEntry(tactic))
        calc.entries.append(SubCalc(tactic.spec, child))
        return StepResult(None, pos + (len(calc.entries) - 1,), subcalc=child)

    raise NotApplicable(f"apply_tactic does not handle {tactic!r}")


def _rename_colliding_outputs(
    root: Calculation, spec: Specification, bound: dict[str, Term]
) -> dict[str, Term]:
    """Unique variable names across a calculation: suffix colliding outputs.

    Caller-bound outputs (a stub's named unknown) are left alone; default
    output variables that collide with any name already in the calculation
    get a prime or a numeric suffix.
    """
    used = used_variable_names(root)
    for name in spec.output_names:
        if name in bound:
            continue
        candidate = name
        while candidate in used:
            candidate = candidate + "'" if candidate.endswith("'") else f"{candidate}_2"
        if candidate != name:
            bound[name] = Var(candidate)
        used.add(candidate)
    return bound


# ---------------------------------------------------------------------------
# Results and subproblem close
# ---------------------------------------------------------------------------


def _collect_equations(calc: Calculation) -> list[Term]:
    out: list[Term] = []
    for entry in calc.entries:
        if isinstance(entry, FormulaEntry):
            items = list_elements(entry.term)
            candidates = items if items is not None else [entry.term]
            for t in candidates:
                if isinstance(t, App) and t.head == "=" and len(t.args) == 2:
                    out.append(t)
    return out


def extract_result(calc: Calculation) -> Result:
    """Topologically order the output equations of a calculation.

    Raises NoResult (naming the blocking variable) when an output variable
    has no equation or no triangular ordering exists.
    """
    equations = _collect_equations(calc)
    chosen: list[tuple[str, Term]] = []
    for name in calc.spec.output_names:
        target = calc.inst_outputs.get(name, Var(name))
        if not isinstance(target, Var):
            raise NoResult(f"output {name} is instantiated with a non-variable")
        hits = [e for e in equations if e.args[0] == target]
        if hits:
            chosen.append((target.name, hits[-1].args[1]))
            continue
        current = calc.current_formula()
        if len(calc.spec.output_names) == 1 and current is not None and not is_boolean(current):
            # a single-output program ends in the output's value (line #13
            # style); the close turns it into the exported equation
            chosen.append((target.name, current))
            continue
        raise NoResult(f"no equation for output variable {target.name}")
    ordered = order_triangular(chosen)
    if ordered is None:
        names = ", ".join(n for n, _ in chosen)
        raise NoResult(f"no triangular ordering of the equations for {names}")
    return Result(tuple(ordered), calc.context)


def stub_exports(method: Method, binding: dict[str, Term]) -> dict[str, list[Term]]:
    """Instantiated declared facts of a stub method, grouped by step kind."""
    sub = Substitution(binding)
    grouped: dict[str, list[Term]] = {"take": [], "fact": [], "approx": [], "result": []}
    for step in method.stub:
        grouped[step.kind].append(substitute(step.template, sub))
    return grouped


def close_subproblem(
    root: Calculation,
    pos: Position,
    store: KnowledgeStore,
    declared_results: Optional[list[Term]] = None,
    extra_exports: Optional[list[Term]] = None,
) -> tuple[Term, Position]:
    """Close the subproblem at pos: export values and the assumed postcondition.

    The result equations (declared for stubs, extracted otherwise) become a
    collapsed result entry in the parent and value exports in the parent
    context; the instantiated postcondition is exported as an assumed fact
    (never proved). Returns the result formula and its entry position.
    """
    if pos:
        entry = entry_at(root, pos)
        if not isinstance(entry, SubCalc):
            raise CalculationError(f"position {pos} is not a subproblem")
        child = entry.calc
        parent = subcalc_at(root, pos[:-1])
        parent_ctx = parent.context
    else:
        child = root
        parent = None
        parent_ctx = root.context

    if declared_results is not None:
        results = declared_results
        if not results:
            raise NoResult("stub declares no result equations")
        result_formula = results[0] if len(results) == 1 else term_list(results)
    else:
        result = extract_result(child)
        pairs = [App("=", (Var(n), r)) for n, r in result.equations]
        if not pairs:
            result_formula = child.current_formula() or App("nil")
        elif len(pairs) == 1:
            result_formula = pairs[0]
        else:
            result_formula = term_list(pairs)
        results = pairs

    child.status = "solved"
    for eq in results:
        items = list_elements(eq)
        for item in items if items is not None else [eq]:
            parent_ctx.add(item, "value_export")
    for fact in extra_exports or []:
        parent_ctx.add(fact, "value_export")
    if child.spec.postcond is not None:
        bindings = dict(child.init_args)
        for n, t in child.inst_outputs.items():
            bindings.setdefault(n, t)
        inst_post = substitute(child.spec.postcond, Substitution(bindings))
        parent_ctx.add(inst_post, "assumed_postcondition")
    if parent is not None:
        # context scoping does not follow program scoping: a closing
        # subproblem also hands its own exports (including those received
        # from nested subproblems) to the enclosing calculation
        for fact in child.context.facts:
            if fact.origin in ("value_export", "assumed_postcondition", "assumption"):
                parent_ctx.add(fact.term, fact.origin)

    target = parent if parent is not None else child
    target.entries.append(TacticEntry(CheckPostcond(child.spec.path)))
    target.entries.append(FormulaEntry(result_formula, MARKER_RESULT, "tactic"))
    entry_pos = (pos[:-1] if pos else ()) + (len(target.entries) - 1,)
    if not pos:
        root.status = "solved"
    return result_formula, entry_pos
