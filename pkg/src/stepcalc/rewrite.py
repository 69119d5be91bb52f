"""Conditional term rewriting: rules, rule sets, normalization, equality.

Rewriting is syntactic and first-order; the only AC awareness is the
canonical flatten-and-sort ordering of `+`/`*` applied between rewrite
passes (for rule sets that request it) and before normal-form comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

from .terms import (
    App,
    Num,
    Substitution,
    Term,
    Var,
    free_vars,
    match_term,
    substitute,
    term_key,
)

Path = tuple[int, ...]

FOLD = "<fold>"
ORDER = "<order>"


@dataclass(frozen=True)
class Rule:
    """A named conditional rewrite rule lhs -> rhs if conditions."""

    name: str
    lhs: Term
    rhs: Term
    conditions: tuple[Term, ...] = ()
    schematic: frozenset[str] = frozenset()

    def __post_init__(self):
        allowed = free_vars(self.lhs) | self.schematic
        loose = free_vars(self.rhs) - allowed
        for cond in self.conditions:
            loose |= free_vars(cond) - allowed
        if loose:
            raise ValueError(f"rule {self.name}: unbound variables on rhs/conditions: {sorted(loose)}")


@dataclass(frozen=True)
class RuleSet:
    """An ordered collection of rules normalized under a fixed strategy."""

    name: str
    rules: tuple[Rule, ...] = ()
    strategy: str = "leftmost-innermost"
    max_steps: int = 2000
    ac_canonical: bool = False
    builtin_fold: bool = True

    def __post_init__(self):
        if self.strategy != "leftmost-innermost":
            raise ValueError(f"unsupported strategy {self.strategy!r}")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")


@dataclass(frozen=True)
class TraceStep:
    path: Path
    rule: str  # rule name, or <fold> / <order> strategy steps
    subst: Substitution
    assumptions: tuple[Term, ...]
    result: Term


@dataclass
class RewriteTrace:
    start: Term
    steps: list[TraceStep] = field(default_factory=list)
    truncated: bool = False

    @property
    def final(self) -> Term:
        return self.steps[-1].result if self.steps else self.start

    def assumptions(self) -> list[Term]:
        out: list[Term] = []
        for s in self.steps:
            for a in s.assumptions:
                if a not in out:
                    out.append(a)
        return out


def subterm_at(t: Term, path: Path) -> Term:
    for i in path:
        assert isinstance(t, App)
        t = t.args[i]
    return t


def replace_at(t: Term, path: Path, new: Term) -> Term:
    if not path:
        return new
    assert isinstance(t, App)
    i = path[0]
    args = list(t.args)
    args[i] = replace_at(args[i], path[1:], new)
    return App(t.head, tuple(args))


def postorder_paths(t: Term, prefix: Path = ()) -> Iterable[Path]:
    """Innermost-leftmost position order: children first, left to right."""
    if isinstance(t, App):
        for i, a in enumerate(t.args):
            yield from postorder_paths(a, prefix + (i,))
    yield prefix


# ---------------------------------------------------------------------------
# Canonical AC ordering for + and *
# ---------------------------------------------------------------------------


def _flatten(head: str, t: Term) -> list[Term]:
    if isinstance(t, App) and t.head == head:
        return _flatten(head, t.args[0]) + _flatten(head, t.args[1])
    return [t]


def _rebuild(head: str, parts: Sequence[Term]) -> Term:
    out = parts[0]
    for p in parts[1:]:
        out = App(head, (out, p))
    return out


def _factor_key(f: Term):
    if isinstance(f, Num):
        return (0, (0, f.value))
    if isinstance(f, App) and f.head == "^":
        base, exp = f.args
        return (1, term_key(base), term_key(exp))
    return (1, term_key(f), term_key(Num(Fraction(1))))


def _summand_key(m: Term):
    factors = _flatten("*", m)
    if isinstance(factors[0], Num):
        coeff = factors[0].value
        body = _rebuild("*", factors[1:]) if len(factors) > 1 else Num(Fraction(1))
    else:
        coeff = Fraction(1)
        body = m
    return (term_key(body), coeff)


def ac_canonicalize(t: Term) -> Term:
    """Sort the argument chains of `+` and `*` into the canonical order.

    Products sort numerals first and split them off as one coefficient
    subtree over the remaining factor chain, with factors grouped by base
    so equal bases become adjacent; both choices let the purely syntactic
    collection rules fire. Sums sort by monomial body so like terms
    become adjacent.
    """
    if not isinstance(t, App):
        return t
    t = App(t.head, tuple(ac_canonicalize(a) for a in t.args))
    if t.head == "*":
        parts = sorted(_flatten("*", t), key=_factor_key)
        nums = [p for p in parts if isinstance(p, Num)]
        rest = [p for p in parts if not isinstance(p, Num)]
        if nums and rest:
            return App("*", (_rebuild("*", nums), _rebuild("*", rest)))
        return _rebuild("*", parts)
    if t.head == "+":
        parts = sorted(_flatten("+", t), key=_summand_key)
        return _rebuild("+", parts)
    return t


# ---------------------------------------------------------------------------
# Builtin folding: exact numeral arithmetic and ground boolean evaluation
# ---------------------------------------------------------------------------

_MAX_FOLD_EXP = 128

TRUE = App("true")
FALSE = App("false")


def _fold(t: Term) -> Optional[Term]:
    """One-step evaluation of a ground node, or None."""
    if not isinstance(t, App):
        return None
    a = t.args
    if t.head == "neg" and isinstance(a[0], Num):
        return Num(-a[0].value)
    if t.head == "not":
        if a[0] == TRUE:
            return FALSE
        if a[0] == FALSE:
            return TRUE
        return None
    if t.head == "and":
        if a[0] == TRUE:
            return a[1]
        if a[1] == TRUE:
            return a[0]
        if FALSE in a:
            return FALSE
        return None
    if t.head == "free_of":
        # free_of(t, s): s does not occur as a subterm of t; always decidable
        def occurs(s: Term, hay: Term) -> bool:
            if s == hay:
                return True
            return isinstance(hay, App) and any(occurs(s, x) for x in hay.args)
        return FALSE if occurs(a[1], a[0]) else TRUE
    if t.head == "is_num":
        return TRUE if isinstance(a[0], Num) else FALSE
    if len(a) == 2 and isinstance(a[0], Num) and isinstance(a[1], Num):
        x, y = a[0].value, a[1].value
        if t.head == "+":
            return Num(x + y)
        if t.head == "-":
            return Num(x - y)
        if t.head == "*":
            return Num(x * y)
        if t.head == "/" and y != 0:
            return Num(x / y)
        if t.head == "^" and y.denominator == 1 and abs(y.numerator) <= _MAX_FOLD_EXP:
            if x == 0 and y.numerator < 0:
                return None
            return Num(x ** y.numerator)
        if t.head == "=":
            return TRUE if x == y else FALSE
        if t.head == "<":
            return TRUE if x < y else FALSE
        if t.head == "<=":
            return TRUE if x <= y else FALSE
        if t.head == ">":
            return TRUE if x > y else FALSE
        if t.head == ">=":
            return TRUE if x >= y else FALSE
    return None


# ---------------------------------------------------------------------------
# Condition evaluation
# ---------------------------------------------------------------------------

CondVerdict = str  # "True" | "False" | "Undecided"

_COMPARISONS = {"<", "<=", ">", ">="}


def _fact_contradicts(cond: Term, facts: set[Term]) -> bool:
    """Cheap syntactic contradiction check for comparisons and equations."""
    if not isinstance(cond, App) or len(cond.args) != 2:
        return False
    a, b = cond.args
    contras: list[Term] = []
    if cond.head == "<":
        contras = [App("<", (b, a)), App("<=", (b, a)), App("=", (a, b)), App("=", (b, a))]
    elif cond.head == "<=":
        contras = [App("<", (b, a))]
    elif cond.head == ">":
        contras = [App(">", (b, a)), App(">=", (b, a)), App("=", (a, b)), App("=", (b, a))]
    elif cond.head == ">=":
        contras = [App(">", (b, a))]
    elif cond.head == "=":
        contras = [App("not", (App("=", (a, b)),)), App("not", (App("=", (b, a)),)),
                   App("<", (a, b)), App("<", (b, a)), App(">", (a, b)), App(">", (b, a))]
    # mirrored operator spellings count as the same fact
    if cond.head == "<":
        contras.append(App(">", (a, b)))
    if cond.head == ">":
        contras.append(App("<", (a, b)))
    return any(c in facts for c in contras)


def eval_condition(
    facts: Optional[Iterable[Term]],
    cond: Term,
    condition_rules: Optional[RuleSet] = None,
) -> CondVerdict:
    """Decide a boolean-valued term against builtin folding and context facts."""
    rs = condition_rules or RuleSet("builtin-conditions", ())
    normal, _ = normalize(rs, cond)
    if normal == TRUE:
        return "True"
    if normal == FALSE:
        return "False"
    fact_set = set(facts) if facts is not None else set()
    normal_facts = fact_set | {normalize(rs, f)[0] for f in fact_set}
    if cond in fact_set or normal in normal_facts:
        return "True"
    if App("not", (normal,)) in normal_facts or App("not", (cond,)) in fact_set:
        return "False"
    if isinstance(normal, App) and normal.head == "not":
        inner = eval_condition(fact_set, normal.args[0], condition_rules)
        if inner == "True":
            return "False"
        if inner == "False":
            return "True"
        return "Undecided"
    if _fact_contradicts(normal, normal_facts):
        return "False"
    mirrored = App("=", (normal.args[1], normal.args[0])) if (
        isinstance(normal, App) and normal.head == "=" and len(normal.args) == 2
    ) else None
    if mirrored is not None and mirrored in normal_facts:
        return "True"
    return "Undecided"


# ---------------------------------------------------------------------------
# Single-rule rewriting
# ---------------------------------------------------------------------------


class NotApplicable(Exception):
    """Normal outcome: the rule has no usable redex. Drives OR / REPEAT."""


def _try_conditions(
    rule: Rule,
    subst: Substitution,
    facts: Optional[Iterable[Term]],
    condition_rules: Optional[RuleSet],
    budget: Optional[int],
) -> Optional[list[Term]]:
    """Discharge instantiated conditions. None means a condition is False."""
    crs = condition_rules or RuleSet("builtin-conditions", ())
    if budget is not None:
        crs = replace(crs, max_steps=max(1, budget))
    assumptions: list[Term] = []
    for cond in rule.conditions:
        inst_cond = substitute(cond, subst)
        verdict = eval_condition(facts, inst_cond, crs)
        if verdict == "False":
            return None
        if verdict == "Undecided":
            normal, _ = normalize(crs, inst_cond)
            assumptions.append(normal)
    return assumptions


def rewrite_once(
    rule: Rule,
    inst: Substitution,
    t: Term,
    facts: Optional[Iterable[Term]] = None,
    condition_rules: Optional[RuleSet] = None,
) -> tuple[Term, list[Term], RewriteTrace]:
    """Rewrite the leftmost-innermost redex of one rule.

    `inst` must instantiate the rule's schematic variables. Conditions
    that normalize to true are discharged; undecided ones come back as
    assumptions; a false condition rejects that redex and the search
    moves on. Raises NotApplicable when no redex survives.
    """
    missing = rule.schematic - inst.domain()
    if missing:
        raise ValueError(f"rule {rule.name}: schematic variables not instantiated: {sorted(missing)}")
    pattern = substitute(rule.lhs, inst)
    fixed = frozenset()
    for name in rule.schematic:
        image = inst.get(name)
        if image is not None:
            fixed |= free_vars(image)
    for path in postorder_paths(t):
        target = subterm_at(t, path)
        s = match_term(pattern, target, fixed=fixed)
        if s is None:
            continue
        full = Substitution({**inst.bindings, **s.bindings})
        assumptions = _try_conditions(rule, full, facts, condition_rules, budget=None)
        if assumptions is None:
            continue
        result = replace_at(t, path, substitute(rule.rhs, full))
        trace = RewriteTrace(start=t)
        trace.steps.append(TraceStep(path, rule.name, full, tuple(assumptions), result))
        return result, assumptions, trace
    raise NotApplicable(rule.name)


# ---------------------------------------------------------------------------
# Rule-set normalization
# ---------------------------------------------------------------------------


def normalize(
    rs: RuleSet,
    t: Term,
    facts: Optional[Iterable[Term]] = None,
    condition_rules: Optional[RuleSet] = None,
) -> tuple[Term, RewriteTrace]:
    """Rewrite to a normal form under the set's strategy.

    Each iteration optionally re-sorts `+`/`*` chains, then applies the
    first applicable step (builtin fold, then rules in set order) at the
    leftmost-innermost position. Stops at a fixpoint or after max_steps,
    in which case the trace is marked truncated (reported, not thrown).
    """
    trace = RewriteTrace(start=t)
    cond_budget = max(1, rs.max_steps // 10)
    steps = 0
    while True:
        if rs.ac_canonical:
            ordered = ac_canonicalize(t)
            if ordered != t:
                t = ordered
                trace.steps.append(TraceStep((), ORDER, Substitution({}), (), t))
        progressed = False
        for path in postorder_paths(t):
            target = subterm_at(t, path)
            if rs.builtin_fold:
                folded = _fold(target)
                if folded is not None:
                    t = replace_at(t, path, folded)
                    trace.steps.append(TraceStep(path, FOLD, Substitution({}), (), t))
                    progressed = True
                    break
            matched = False
            for rule in rs.rules:
                if rule.schematic:
                    continue  # schematic rules need explicit instantiation
                s = match_term(rule.lhs, target)
                if s is None:
                    continue
                assumptions = _try_conditions(rule, s, facts, condition_rules, cond_budget)
                if assumptions is None:
                    continue
                t = replace_at(t, path, substitute(rule.rhs, s))
                trace.steps.append(TraceStep(path, rule.name, s, tuple(assumptions), t))
                progressed = True
                matched = True
                break
            if matched:
                break
        if not progressed:
            return t, trace
        steps += 1
        if steps >= rs.max_steps:
            trace.truncated = True
            return t, trace


EqualVerdict = str  # "Equal" | "NotEqual" | "Unknown"


def equal_modulo(
    rs: RuleSet,
    t1: Term,
    t2: Term,
    facts: Optional[Iterable[Term]] = None,
    condition_rules: Optional[RuleSet] = None,
) -> EqualVerdict:
    """Normal-form equality up to the canonical AC ordering.

    Unknown when either normalization was truncated: a truncated form is
    not a normal form, so no verdict would be safe.
    """
    n1, tr1 = normalize(rs, t1, facts, condition_rules)
    n2, tr2 = normalize(rs, t2, facts, condition_rules)
    if tr1.truncated or tr2.truncated:
        return "Unknown"
    return "Equal" if ac_canonicalize(n1) == ac_canonicalize(n2) else "NotEqual"


def replay(trace: RewriteTrace, rules: Optional[dict[str, Rule]] = None) -> Term:
    """Re-execute a trace from its start term, checking every recorded step."""
    t = trace.start
    for step in trace.steps:
        if step.rule == ORDER:
            t = ac_canonicalize(t)
        elif step.rule == FOLD:
            folded = _fold(subterm_at(t, step.path))
            assert folded is not None, "fold step no longer folds"
            t = replace_at(t, step.path, folded)
        else:
            assert rules is not None and step.rule in rules, f"unknown rule {step.rule} in trace"
            rule = rules[step.rule]
            t = replace_at(t, step.path, substitute(rule.rhs, step.subst))
        if t != step.result:
            raise AssertionError(f"trace replay diverged at step {step.rule}@{step.path}")
    return t
