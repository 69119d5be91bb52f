"""The tactic language: programs, parsing, pure evaluation, and scanning.

A program is a pure functional expression whose only step-generating leaves
are tactics. Tacticals (LET, IF, REPEAT, OR, TRY, @@) control the order of
interpretation but never touch the calculation. scan_to_next_tactic walks
from a program state to the next tactic whose applicability the caller
must decide; it performs no side effects.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping, Optional, Protocol, Union

from .terms import (
    App,
    Num,
    ParseError,
    Term,
    Var,
    _Lexer,
    _TermParser,
    CORE_ARITIES,
    term_list,
    list_elements,
    render_term,
)

# List/term combinators usable in pure program expressions. They may be
# partially applied there (curried); saturated nodes are executed by
# eval_pure and never leak into calculations.
from .terms import COMBINATORS  # noqa: E402

KEYWORDS = {
    "Program", "LET", "IN", "IF", "THEN", "ELSE", "REPEAT", "OR", "TRY",
    "Take", "Rewrite", "Rewrite_Inst", "Rewrite_Set", "Subproblem",
    "Check_Postcond", "Approximate",
}


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Take:
    term: Term


@dataclass(frozen=True)
class Rewrite:
    rule: str


@dataclass(frozen=True)
class RewriteInst:
    inst: tuple[tuple[str, Term], ...]
    rule: str


@dataclass(frozen=True)
class RewriteSet:
    ruleset: str


@dataclass(frozen=True)
class Subproblem:
    theory: str
    spec: tuple[str, ...]
    method: str
    args: tuple[Term, ...]


@dataclass(frozen=True)
class CheckPostcond:
    spec: tuple[str, ...]


@dataclass(frozen=True)
class Approximate:
    errbound: Term


ProgTactic = Union[Take, Rewrite, RewriteInst, RewriteSet, Subproblem, CheckPostcond, Approximate]

PROG_TACTIC_VARIANTS = (Take, Rewrite, RewriteInst, RewriteSet, Subproblem, CheckPostcond, Approximate)


@dataclass(frozen=True)
class Let:
    name: str
    bound: "Expr"
    body: "Expr"


@dataclass(frozen=True)
class If:
    cond: Term
    then: "Expr"
    orelse: "Expr"


@dataclass(frozen=True)
class Repeat:
    body: "Expr"


@dataclass(frozen=True)
class Or:
    branches: tuple["Expr", ...]

    def __post_init__(self):
        if not self.branches:
            raise ValueError("OR needs at least one branch")


@dataclass(frozen=True)
class Try:
    body: "Expr"


@dataclass(frozen=True)
class Chain:
    stages: tuple["Expr", ...]

    def __post_init__(self):
        if not self.stages:
            raise ValueError("chain needs at least one stage")


@dataclass(frozen=True)
class TacticNode:
    tactic: ProgTactic


@dataclass(frozen=True)
class Pure:
    term: Term


Expr = Union[Let, If, Repeat, Or, Try, Chain, TacticNode, Pure]


@dataclass(frozen=True)
class Program:
    name: str
    formals: tuple[tuple[str, str], ...]  # (name, type annotation)
    body: Expr


def children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, Let):
        return (e.bound, e.body)
    if isinstance(e, If):
        return (e.then, e.orelse)
    if isinstance(e, Repeat):
        return (e.body,)
    if isinstance(e, Or):
        return e.branches
    if isinstance(e, Try):
        return (e.body,)
    if isinstance(e, Chain):
        return e.stages
    return ()


def node_at(root: Expr, path: tuple[int, ...]) -> Expr:
    node = root
    for i in path:
        node = children(node)[i]
    return node


def iter_tactics(e: Expr) -> Iterator[ProgTactic]:
    if isinstance(e, TacticNode):
        yield e.tactic
    for c in children(e):
        yield from iter_tactics(c)


def iter_identifiers(t: Term) -> Iterator[str]:
    if isinstance(t, Var):
        yield t.name
    elif isinstance(t, App):
        for a in t.args:
            yield from iter_identifiers(a)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_PROG_OPS = ("@@", "::", ";", "<=", ">=", "<", ">", "=", "~", "+", "-", "*", "/", "^",
             "(", ")", "[", "]", ",")


class _PureParser(_TermParser):
    """Term grammar extended with juxtaposition application of combinators."""

    def atom(self) -> Term:
        k, v, o = self.lex.peek()
        if k == "ident" and v in KEYWORDS:
            raise ParseError(f"keyword {v!r} where a pure expression was expected", o)
        if k == "ident" and v in COMBINATORS:
            self.lex.next()
            t: Term = Var(v)  # combinators apply by juxtaposition, never f(x) syntax
        else:
            t = super().atom()
        # juxtaposition: combinator (possibly partial) applied to atoms
        while True:
            k, v, o = self.lex.peek()
            starts_atom = (
                k == "number"
                or (k == "ident" and v not in KEYWORDS and v not in ("and", "in"))
                or (k == "op" and v in ("(", "["))
            )
            if not starts_atom:
                return t
            head_ok = (
                (isinstance(t, Var) and t.name in COMBINATORS)
                or (isinstance(t, App) and t.head in COMBINATORS and len(t.args) < COMBINATORS[t.head])
            )
            if not head_ok:
                return t
            arg = super().atom()
            if isinstance(t, Var):
                t = App(t.name, (arg,))
            else:
                t = App(t.head, t.args + (arg,))

    def parse(self) -> Term:  # no end-of-input check; embedded in program syntax
        return self.boolean()


class _ProgramParser:
    def __init__(self, text: str, arities: Optional[Mapping[str, int]] = None):
        table = dict(CORE_ARITIES)
        if arities:
            table.update(arities)
        self.arities = table
        self.lex = _Lexer(text, ops=_PROG_OPS)

    # -- helpers ------------------------------------------------------------

    def _pure(self) -> Term:
        return _PureParser(self.lex, self.arities).parse()

    def _ident(self) -> str:
        return self.lex.expect("ident")[1]

    def _keyword(self, word: str) -> None:
        k, v, o = self.lex.peek()
        if k == "ident" and v == word:
            self.lex.next()
            return
        raise ParseError(f"expected {word!r}, found {v!r}", o, (word,))

    def _at_keyword(self, *words: str) -> bool:
        k, v, _ = self.lex.peek()
        return k == "ident" and v in words

    def _spec_path(self) -> tuple[str, ...]:
        self.lex.expect("op", "[")
        parts = [self._ident()]
        while self.lex.accept("op", ","):
            parts.append(self._ident())
        self.lex.expect("op", "]")
        return tuple(parts)

    # -- grammar ------------------------------------------------------------

    def parse_program(self) -> Program:
        self._keyword("Program")
        name = self._ident()
        formals: list[tuple[str, str]] = []
        while self.lex.accept("op", "("):
            fname = self._ident()
            self.lex.expect("op", "::")
            ann_parts = [self._ident()]
            while self.lex.peek()[0] == "ident":
                ann_parts.append(self._ident())
            self.lex.expect("op", ")")
            formals.append((fname, " ".join(ann_parts)))
        self.lex.expect("op", "=")
        body = self.expr()
        k, v, o = self.lex.peek()
        if k != "end":
            raise ParseError(f"trailing input {v!r}", o)
        return Program(name, tuple(formals), body)

    def expr(self) -> Expr:
        if self._at_keyword("LET"):
            self.lex.next()
            bindings = [self._binding()]
            while self.lex.accept("op", ";"):
                bindings.append(self._binding())
            self._keyword("IN")
            body = self.expr()
            for name, bound in reversed(bindings):
                body = Let(name, bound, body)
            return body
        return self.chain()

    def _binding(self) -> tuple[str, Expr]:
        name = self._ident()
        self.lex.expect("op", "=")
        return name, self.chain()

    def chain(self) -> Expr:
        stages = [self.or_expr()]
        while self.lex.accept("op", "@@"):
            stages.append(self.or_expr())
        return stages[0] if len(stages) == 1 else Chain(tuple(stages))

    def or_expr(self) -> Expr:
        branches = [self.application()]
        while self._at_keyword("OR"):
            self.lex.next()
            branches.append(self.application())
        return branches[0] if len(branches) == 1 else Or(tuple(branches))

    def application(self) -> Expr:
        fn = self.primary()
        while True:
            k, v, o = self.lex.peek()
            starts = (k == "number") or (k == "op" and v in ("(", "[")) or (
                k == "ident" and v not in KEYWORDS and v not in ("and", "in")
            )
            if not starts:
                return fn
            # pure infix continuation, e.g. `1 < LEN rels`, is handled by the
            # pure parser itself; here only genuine applications arrive
            arg = self.primary()
            if isinstance(fn, Pure) and isinstance(arg, Pure):
                head = fn.term
                if isinstance(head, Var) and head.name in COMBINATORS:
                    fn = Pure(App(head.name, (arg.term,)))
                    continue
                if isinstance(head, App) and head.head in COMBINATORS and len(head.args) < COMBINATORS[head.head]:
                    fn = Pure(App(head.head, head.args + (arg.term,)))
                    continue
                raise ParseError("cannot apply a pure value", o)
            if isinstance(arg, Pure):
                # a tactical pipeline applied to a value: pipe the value in front
                if isinstance(fn, Chain):
                    return Chain((Pure(arg.term),) + fn.stages)
                return Chain((Pure(arg.term), fn))
            raise ParseError("cannot apply to a tactical expression", o)

    def primary(self) -> Expr:
        k, v, o = self.lex.peek()
        if k == "ident" and v == "REPEAT":
            self.lex.next()
            return Repeat(self.primary())
        if k == "ident" and v == "TRY":
            self.lex.next()
            return Try(self.primary())
        if k == "ident" and v == "IF":
            self.lex.next()
            cond = self._pure()
            self._keyword("THEN")
            then = self.expr()
            self._keyword("ELSE")
            orelse = self.expr()
            return If(cond, then, orelse)
        if k == "ident" and v in ("Take", "Rewrite", "Rewrite_Inst", "Rewrite_Set",
                                  "Subproblem", "Check_Postcond", "Approximate"):
            return TacticNode(self._tactic())
        if k == "op" and v == "(":
            self.lex.next()
            inner = self.expr()
            self.lex.expect("op", ")")
            return inner
        # anything else is a pure expression
        return Pure(self._pure())

    def _tactic(self) -> ProgTactic:
        word = self._ident()
        if word == "Take":
            return Take(self._pure_primary())
        if word == "Rewrite":
            return Rewrite(self._ident())
        if word == "Rewrite_Inst":
            self.lex.expect("op", "[")
            pairs = []
            while True:
                self.lex.expect("op", "(")
                name = self._ident()
                self.lex.expect("op", ",")
                value = self._pure()
                self.lex.expect("op", ")")
                pairs.append((name, value))
                if not self.lex.accept("op", ","):
                    break
            self.lex.expect("op", "]")
            rule = self._ident()
            return RewriteInst(tuple(pairs), rule)
        if word == "Rewrite_Set":
            return RewriteSet(self._ident())
        if word == "Subproblem":
            self.lex.expect("op", "(")
            theory = self._ident()
            self.lex.expect("op", ",")
            spec = self._spec_path()
            self.lex.expect("op", ",")
            method = self._ident()
            self.lex.expect("op", ")")
            self.lex.expect("op", "[")
            args = [self._pure()]
            while self.lex.accept("op", ","):
                args.append(self._pure())
            self.lex.expect("op", "]")
            return Subproblem(theory, spec, method, tuple(args))
        if word == "Check_Postcond":
            return CheckPostcond(self._spec_path())
        if word == "Approximate":
            return Approximate(self._pure_primary())
        raise AssertionError(word)

    def _pure_primary(self) -> Term:
        if self.lex.accept("op", "("):
            t = self._pure()
            self.lex.expect("op", ")")
            return t
        return self._pure()


def parse_program(text: str, arities: Optional[Mapping[str, int]] = None) -> Program:
    """Parse a program file. Grammar in docs/program-grammar.md."""
    src = "\n".join(line for line in text.splitlines() if not line.lstrip().startswith("#"))
    return _ProgramParser(src, arities).parse_program()


def parse_tactic(text: str, arities: Optional[Mapping[str, int]] = None) -> ProgTactic:
    """Parse one tactic in the program syntax, e.g. from CLI or API input."""
    parser = _ProgramParser(text, arities)
    k, v, o = parser.lex.peek()
    if not (k == "ident" and v in ("Take", "Rewrite", "Rewrite_Inst", "Rewrite_Set",
                                   "Subproblem", "Check_Postcond", "Approximate")):
        raise ParseError(f"expected a tactic, found {v!r}", o)
    tactic = parser._tactic()
    k, v, o = parser.lex.peek()
    if k != "end":
        raise ParseError(f"trailing input {v!r}", o)
    return tactic


# ---------------------------------------------------------------------------
# Pretty printing (canonical formatting; parse . pretty == identity)
# ---------------------------------------------------------------------------


def _pp_tactic(t: ProgTactic) -> str:
    if isinstance(t, Take):
        return f"Take ({render_term(t.term)})"
    if isinstance(t, Rewrite):
        return f"Rewrite {t.rule}"
    if isinstance(t, RewriteInst):
        pairs = ", ".join(f"({n}, {render_term(v)})" for n, v in t.inst)
        return f"Rewrite_Inst [{pairs}] {t.rule}"
    if isinstance(t, RewriteSet):
        return f"Rewrite_Set {t.ruleset}"
    if isinstance(t, Subproblem):
        args = ", ".join(render_term(a) for a in t.args)
        return f"Subproblem ({t.theory}, [{', '.join(t.spec)}], {t.method}) [{args}]"
    if isinstance(t, CheckPostcond):
        return f"Check_Postcond [{', '.join(t.spec)}]"
    if isinstance(t, Approximate):
        return f"Approximate ({render_term(t.errbound)})"
    raise AssertionError(t)


def _pp(e: Expr, indent: int) -> str:
    pad = "  " * indent
    if isinstance(e, Let):
        bindings = []
        node: Expr = e
        while isinstance(node, Let):
            bindings.append((node.name, node.bound))
            node = node.body
        lines = [f"{pad}LET"]
        for i, (name, bound) in enumerate(bindings):
            sep = " ;" if i < len(bindings) - 1 else ""
            lines.append(f"{pad}  {name} = {_pp(bound, 0).strip()}{sep}")
        lines.append(f"{pad}IN {_pp(node, 0).strip()}")
        return "\n".join(lines)
    if isinstance(e, If):
        return (f"{pad}(IF {render_term(e.cond)}\n"
                f"{pad}  THEN {_pp(e.then, 0).strip()}\n"
                f"{pad}  ELSE {_pp(e.orelse, 0).strip()})")
    if isinstance(e, Repeat):
        return f"{pad}REPEAT ({_pp(e.body, 0).strip()})"
    if isinstance(e, Try):
        return f"{pad}TRY ({_pp(e.body, 0).strip()})"
    if isinstance(e, Or):
        inner = " OR ".join(f"({_pp(b, 0).strip()})" for b in e.branches)
        return f"{pad}{inner}"
    if isinstance(e, Chain):
        if isinstance(e.stages[0], Pure):
            rest = " @@ ".join(f"({_pp(s, 0).strip()})" for s in e.stages[1:])
            return f"{pad}({rest}) {render_term(e.stages[0].term)}"
        return pad + " @@ ".join(f"({_pp(s, 0).strip()})" for s in e.stages)
    if isinstance(e, TacticNode):
        return pad + _pp_tactic(e.tactic)
    if isinstance(e, Pure):
        return pad + render_term(e.term)
    raise AssertionError(e)


def pretty_program(p: Program) -> str:
    header = f"Program {p.name} " + " ".join(f"({n}::{a})" for n, a in p.formals)
    return f"{header} =\n{_pp(p.body, 1)}\n"


# ---------------------------------------------------------------------------
# Pure evaluation
# ---------------------------------------------------------------------------


class EvalError(Exception):
    pass


def _occurs(needle: Term, hay: Term) -> bool:
    if needle == hay:
        return True
    if isinstance(hay, App):
        return any(_occurs(needle, a) for a in hay.args)
    return False


def _apply_comb(head: str, args: tuple[Term, ...]) -> Term:
    if head == "HD":
        elems = list_elements(args[0])
        if elems is None:
            raise EvalError(f"HD of a non-list: {render_term(args[0])}")
        if not elems:
            raise EvalError("HD of an empty list")
        return elems[0]
    if head == "LEN":
        elems = list_elements(args[0])
        if elems is None:
            raise EvalError(f"LEN of a non-list: {render_term(args[0])}")
        return Num(len(elems))
    if head == "RHS":
        t = args[0]
        if isinstance(t, App) and t.head == "=" and len(t.args) == 2:
            return t.args[1]
        raise EvalError(f"RHS of a non-equation: {render_term(t)}")
    if head == "contains":
        return App("true") if _occurs(args[0], args[1]) else App("false")
    if head == "ident":
        return App("true") if args[0] == args[1] else App("false")
    if head in ("FILTER", "FILTER_OUT"):
        pred, lst = args
        elems = list_elements(lst)
        if elems is None:
            raise EvalError(f"{head} of a non-list: {render_term(lst)}")
        keep = head == "FILTER"
        out = []
        for e in elems:
            verdict = _saturate(pred, e)
            if verdict == App("true"):
                if keep:
                    out.append(e)
            elif verdict == App("false"):
                if not keep:
                    out.append(e)
            else:
                raise EvalError(f"predicate did not decide: {render_term(verdict)}")
        return term_list(out)
    raise AssertionError(head)


def _saturate(fn: Term, arg: Term) -> Term:
    if isinstance(fn, Var) and fn.name in COMBINATORS:
        fn = App(fn.name, ())
    if not (isinstance(fn, App) and fn.head in COMBINATORS):
        raise EvalError(f"not a function: {render_term(fn)}")
    args = fn.args + (arg,)
    if len(args) == COMBINATORS[fn.head]:
        return _apply_comb(fn.head, args)
    return App(fn.head, args)


def eval_pure(env: Mapping[str, Term], t: Term) -> Term:
    """Evaluate a pure program expression to a term value.

    Bound names are replaced by their values; unbound plain variables stay
    literal (they denote calculation variables). Saturated combinator
    applications are executed.
    """
    if isinstance(t, Var):
        hit = env.get(t.name)
        return hit if hit is not None else t
    if isinstance(t, Num):
        return t
    assert isinstance(t, App)
    args = tuple(eval_pure(env, a) for a in t.args)
    if t.head in COMBINATORS:
        if len(args) == COMBINATORS[t.head]:
            return _apply_comb(t.head, args)
        return App(t.head, args)  # partial application value
    return App(t.head, args)


# ---------------------------------------------------------------------------
# Program state and scanning
# ---------------------------------------------------------------------------

Path = tuple[int, ...]


@dataclass
class ProgState:
    """Interpreter position: location of the last fired tactic plus bindings."""

    env: dict[str, Term] = field(default_factory=dict)
    loc: Path = ()
    started: bool = False
    value: Optional[Term] = None
    repeat_counters: dict[Path, int] = field(default_factory=dict)

    def clone(self) -> "ProgState":
        return ProgState(dict(self.env), self.loc, self.started, self.value,
                         dict(self.repeat_counters))


@dataclass(frozen=True)
class AtTactic:
    state: ProgState
    tactic: ProgTactic  # argument terms already evaluated in the current env


@dataclass(frozen=True)
class Finished:
    value: Optional[Term]


@dataclass(frozen=True)
class Stuck:
    reason: str


ScanOutcome = Union[AtTactic, Finished, Stuck]


class ScanHost(Protocol):
    """What the scanner needs from its caller; both hooks must be pure."""

    def applicable(self, tactic: ProgTactic) -> bool: ...

    def eval_cond(self, cond: Term) -> str: ...  # "True" | "False" | "Undecided"


REPEAT_LIMIT = 500
SCAN_BUDGET = 100_000


def instantiate_tactic(tactic: ProgTactic, env: Mapping[str, Term]) -> ProgTactic:
    """Evaluate a tactic's argument expressions in the environment."""
    if isinstance(tactic, Take):
        return Take(eval_pure(env, tactic.term))
    if isinstance(tactic, RewriteInst):
        return RewriteInst(tuple((n, eval_pure(env, v)) for n, v in tactic.inst), tactic.rule)
    if isinstance(tactic, Subproblem):
        return Subproblem(tactic.theory, tactic.spec, tactic.method,
                          tuple(eval_pure(env, a) for a in tactic.args))
    if isinstance(tactic, Approximate):
        return Approximate(eval_pure(env, tactic.errbound))
    return tactic


def scan_to_next_tactic(program: Program, state: ProgState, host: ScanHost) -> ScanOutcome:
    """Advance through non-generating statements to the next applicable tactic.

    Pure: mutates nothing it was given. OR branches are probed left to
    right and a fired branch resumes at the following branch; REPEAT
    terminates on the first pass in which nothing applies; TRY absorbs a
    failing branch; a failure at any other seam is Stuck.
    """
    st = state.clone()
    root = program.body
    # paths we are "inside of" by virtue of resuming from the last fired
    # tactic; on an all-branches-fail these complete instead of failing
    resume = {st.loc[:i] for i in range(len(st.loc) + 1)} if st.started else set()

    mode: str
    path: Path
    if not st.started:
        mode, path = "descend", ()
    else:
        mode, path = "complete", st.loc

    budget = SCAN_BUDGET
    while True:
        budget -= 1
        if budget < 0:
            return Stuck("scan budget exceeded")
        node = node_at(root, path)

        if mode == "descend":
            resumeticks = [p for p in resume if len(p) >= len(path) and p[: len(path)] == path]
            for p in resumeticks:
                resume.discard(p)
            if isinstance(node, Let):
                path = path + (0,)
                continue
            if isinstance(node, If):
                cond = eval_pure(st.env, node.cond)
                verdict = host.eval_cond(cond)
                if verdict == "True":
                    path = path + (0,)
                elif verdict == "False":
                    path = path + (1,)
                else:
                    return Stuck(f"IF condition undecided: {render_term(cond)}")
                continue
            if isinstance(node, Repeat):
                count = st.repeat_counters.get(path, 0)
                if count >= REPEAT_LIMIT:
                    return Stuck(f"REPEAT budget exceeded at {path}")
                st.repeat_counters[path] = count + 1
                path = path + (0,)
                continue
            if isinstance(node, (Or, Chain)):
                path = path + (0,)
                continue
            if isinstance(node, Try):
                path = path + (0,)
                continue
            if isinstance(node, Pure):
                try:
                    st.value = eval_pure(st.env, node.term)
                except EvalError as err:
                    return Stuck(str(err))
                mode = "complete"
                continue
            if isinstance(node, TacticNode):
                try:
                    tactic = instantiate_tactic(node.tactic, st.env)
                except EvalError as err:
                    return Stuck(str(err))
                if host.applicable(tactic):
                    st.loc = path
                    st.started = True
                    return AtTactic(st, tactic)
                mode = "fail"
                continue
            raise AssertionError(node)

        parent_path = path[:-1] if path else None

        if mode == "complete":
            if not path:
                return Finished(st.value)
            parent = node_at(root, parent_path)
            idx = path[-1]
            if isinstance(parent, Let):
                if idx == 0:
                    if st.value is None:
                        return Stuck(f"LET {parent.name}: no value to bind")
                    st.env[parent.name] = st.value
                    path = parent_path + (1,)
                    mode = "descend"
                else:
                    path = parent_path
                continue
            if isinstance(parent, Chain):
                if idx + 1 < len(parent.stages):
                    path = parent_path + (idx + 1,)
                    mode = "descend"
                else:
                    path = parent_path
                continue
            if isinstance(parent, Or):
                # a fired branch resumes at the next branch of the same OR
                if idx + 1 < len(parent.branches):
                    path = parent_path + (idx + 1,)
                    mode = "descend"
                else:
                    path = parent_path
                continue
            if isinstance(parent, Repeat):
                # body pass finished with activity: re-enter through the
                # REPEAT node itself so its iteration budget is charged
                path = parent_path
                mode = "descend"
                continue
            # If / Try: completion just bubbles
            path = parent_path
            continue

        if mode == "fail":
            if not path:
                return Stuck("no applicable tactic")
            parent = node_at(root, parent_path)
            idx = path[-1]
            if isinstance(parent, Or):
                if idx + 1 < len(parent.branches):
                    path = parent_path + (idx + 1,)
                    mode = "descend"
                elif parent_path in resume:
                    # some branch fired this entry; the OR completes
                    path = parent_path
                    mode = "complete"
                else:
                    path = parent_path
                continue
            if isinstance(parent, Repeat):
                # pass in which nothing applied: REPEAT terminates
                st.repeat_counters.pop(parent_path, None)
                path = parent_path
                mode = "complete"
                continue
            if isinstance(parent, Try):
                path = parent_path
                mode = "complete"
                continue
            if isinstance(parent, Let) and idx == 0:
                return Stuck(f"LET {parent.name}: bound expression not applicable")
            if isinstance(parent, Chain):
                if idx == 0:
                    path = parent_path  # chain entry fails as a whole
                    continue
                return Stuck("chain stage not applicable")
            # If: branch failure propagates
            path = parent_path
            continue

        raise AssertionError(mode)
