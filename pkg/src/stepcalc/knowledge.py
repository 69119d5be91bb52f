"""The knowledge store: theories, the specification hierarchy, and methods.

Knowledge lives in a directory tree, one subdirectory per theory, in
line-based .kb files plus one file per program (formats documented in
docs/knowledge-format.md). The store is immutable after loading and all
cross-references are verified at load time.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional

from . import program as prog
from .rewrite import Rule, RuleSet, eval_condition
from .terms import App, ParseError, Substitution, Term, free_vars, parse_term, substitute


class LoadError(Exception):
    def __init__(self, message: str, file: Optional[str] = None, line: Optional[int] = None):
        where = f"{file}:{line}: " if file else ""
        super().__init__(f"{where}{message}")
        self.file = file
        self.line = line


class MissingArgument(Exception):
    pass


@dataclass(frozen=True)
class Specification:
    """An implicit problem definition: inputs, precondition, outputs, props."""

    path: tuple[str, ...]
    inputs: tuple[tuple[str, str], ...] = ()  # (name, type annotation)
    precond: tuple[Term, ...] = ()
    outputs: tuple[tuple[str, str], ...] = ()
    postcond: Optional[Term] = None
    props: tuple[Term, ...] = ()
    props_vars: tuple[str, ...] = ()

    def __post_init__(self):
        in_names = {n for n, _ in self.inputs}
        out_names = {n for n, _ in self.outputs}
        if in_names & out_names:
            raise ValueError(f"spec {list(self.path)}: inputs and outputs overlap: {sorted(in_names & out_names)}")
        for cond in self.precond:
            loose = free_vars(cond) - in_names
            if loose:
                raise ValueError(f"spec {list(self.path)}: precondition mentions non-inputs {sorted(loose)}")
        scope = in_names | out_names | set(self.props_vars)
        for p in self.props:
            loose = free_vars(p) - scope
            if loose:
                raise ValueError(f"spec {list(self.path)}: prop mentions unknown variables {sorted(loose)}")

    @property
    def input_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.inputs)

    @property
    def output_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.outputs)


@dataclass
class Theory:
    name: str
    parent: Optional[str] = None
    rules: dict[str, Rule] = field(default_factory=dict)
    rule_sets: dict[str, RuleSet] = field(default_factory=dict)
    declared_symbols: dict[str, int] = field(default_factory=dict)
    facts: tuple[Term, ...] = ()
    condition_set: Optional[str] = None
    check_set: Optional[str] = None


@dataclass(frozen=True)
class StubStep:
    kind: str  # take | fact | approx | result
    template: Term


@dataclass(frozen=True)
class Method:
    """theory + specification + either a program or declared stub steps."""

    name: str
    theory: str
    spec_path: tuple[str, ...]
    program: Optional[prog.Program] = None
    stub: tuple[StubStep, ...] = ()

    @property
    def is_stub(self) -> bool:
        return self.program is None


class KnowledgeStore:
    def __init__(self):
        self.theories: dict[str, Theory] = {}
        self.specs: dict[tuple[str, ...], Specification] = {}
        self.methods: dict[str, Method] = {}
        self.source_hash: str = ""

    # -- lookups (total and pure; absence is a normal outcome) ---------------

    def lookup_specification(self, path: Iterable[str]) -> Optional[Specification]:
        return self.specs.get(tuple(path))

    def lookup_method(self, name: str) -> Optional[Method]:
        return self.methods.get(name)

    def theory_chain(self, name: str) -> list[Theory]:
        chain = []
        seen = set()
        cur: Optional[str] = name
        while cur is not None:
            if cur in seen or cur not in self.theories:
                break
            seen.add(cur)
            theory = self.theories[cur]
            chain.append(theory)
            cur = theory.parent
        return chain

    def rules_in_scope(self, theory: str) -> dict[str, Rule]:
        out: dict[str, Rule] = {}
        for t in reversed(self.theory_chain(theory)):
            out.update(t.rules)
        return out

    def lookup_rule(self, theory: str, name: str) -> Optional[Rule]:
        return self.rules_in_scope(theory).get(name)

    def lookup_rule_set(self, theory: str, name: str) -> Optional[RuleSet]:
        for t in self.theory_chain(theory):
            if name in t.rule_sets:
                return t.rule_sets[name]
        return None

    def condition_rules(self, theory: str) -> Optional[RuleSet]:
        for t in self.theory_chain(theory):
            if t.condition_set:
                return self.lookup_rule_set(theory, t.condition_set)
        return None

    def check_rules(self, theory: str) -> Optional[RuleSet]:
        for t in self.theory_chain(theory):
            if t.check_set:
                return self.lookup_rule_set(theory, t.check_set)
        return None

    def theory_facts(self, theory: str) -> list[Term]:
        out: list[Term] = []
        for t in reversed(self.theory_chain(theory)):
            out.extend(t.facts)
        return out

    def arity_table(self) -> dict[str, int]:
        table: dict[str, int] = {}
        for t in self.theories.values():
            table.update(t.declared_symbols)
        return table

    # -- load-time closure ----------------------------------------------------

    def audit(self) -> list[str]:
        problems: list[str] = []
        for t in self.theories.values():
            if t.parent and t.parent not in self.theories:
                problems.append(f"theory {t.name}: unknown parent {t.parent}")
            chain = self.theory_chain(t.name)
            seen: dict[str, str] = {}
            for anc in chain:
                for rname in anc.rules:
                    if rname in seen and seen[rname] != anc.name:
                        problems.append(f"theory {t.name}: duplicate rule {rname} along parent chain")
                    seen.setdefault(rname, anc.name)
            if t.condition_set and self.lookup_rule_set(t.name, t.condition_set) is None:
                problems.append(f"theory {t.name}: unknown condition rule set {t.condition_set}")
            if t.check_set and self.lookup_rule_set(t.name, t.check_set) is None:
                problems.append(f"theory {t.name}: unknown check rule set {t.check_set}")
        for m in self.methods.values():
            if m.theory not in self.theories:
                problems.append(f"method {m.name}: unknown theory {m.theory}")
            spec = self.lookup_specification(m.spec_path)
            if spec is None:
                problems.append(f"method {m.name}: unknown specification {list(m.spec_path)}")
            if m.is_stub:
                if not (m.stub and m.stub[0].kind == "take"):
                    problems.append(f"method {m.name}: stub must start with a take step")
            else:
                problems.extend(self._audit_program(m, spec))
        return problems

    def _audit_program(self, m: Method, spec: Optional[Specification]) -> list[str]:
        problems: list[str] = []
        assert m.program is not None
        scope = self.rules_in_scope(m.theory)
        for tac in prog.iter_tactics(m.program.body):
            if isinstance(tac, (prog.Rewrite, prog.RewriteInst)) and tac.rule not in scope:
                problems.append(f"method {m.name}: unknown rule {tac.rule}")
            if isinstance(tac, prog.RewriteSet) and self.lookup_rule_set(m.theory, tac.ruleset) is None:
                problems.append(f"method {m.name}: unknown rule set {tac.ruleset}")
            if isinstance(tac, prog.Subproblem):
                if tac.theory not in self.theories:
                    problems.append(f"method {m.name}: Subproblem names unknown theory {tac.theory}")
                if self.lookup_specification(tac.spec) is None:
                    problems.append(f"method {m.name}: Subproblem names unknown specification {list(tac.spec)}")
                callee = self.lookup_method(tac.method)
                if callee is None:
                    problems.append(f"method {m.name}: Subproblem names unknown method {tac.method}")
                elif callee.spec_path != tac.spec:
                    problems.append(
                        f"method {m.name}: Subproblem pairs method {tac.method} with specification "
                        f"{list(tac.spec)} but the method declares {list(callee.spec_path)}"
                    )
        if spec is not None:
            problems.extend(self._audit_identifiers(m, spec))
        return problems

    def _audit_identifiers(self, m: Method, spec: Specification) -> list[str]:
        assert m.program is not None
        allowed = {n for n, _ in m.program.formals}
        allowed |= set(spec.input_names) | set(spec.output_names)
        allowed |= set(prog.COMBINATORS)

        def walk(e: prog.Expr, bound: frozenset[str], acc: list[str]) -> None:
            if isinstance(e, prog.Let):
                walk(e.bound, bound, acc)
                walk(e.body, bound | {e.name}, acc)
                return
            terms: list[Term] = []
            if isinstance(e, prog.If):
                terms.append(e.cond)
            if isinstance(e, prog.Pure):
                terms.append(e.term)
            if isinstance(e, prog.TacticNode):
                t = e.tactic
                if isinstance(t, prog.Take):
                    terms.append(t.term)
                elif isinstance(t, prog.RewriteInst):
                    terms.extend(v for _, v in t.inst)
                elif isinstance(t, prog.Subproblem):
                    terms.extend(t.args)
                elif isinstance(t, prog.Approximate):
                    terms.append(t.errbound)
            for term in terms:
                for name in prog.iter_identifiers(term):
                    if name not in allowed and name not in bound:
                        acc.append(f"method {m.name}: identifier {name!r} is not a formal, "
                                   f"LET binding, or declared name")
            for c in prog.children(e):
                walk(c, bound, acc)

        acc: list[str] = []
        walk(m.program.body, frozenset(), acc)
        return acc


# ---------------------------------------------------------------------------
# Precondition checking
# ---------------------------------------------------------------------------


def check_precondition(
    spec: Specification,
    args: Mapping[str, Term],
    facts: Optional[Iterable[Term]] = None,
    condition_rules: Optional[RuleSet] = None,
) -> tuple[str, list[Term]]:
    """Evaluate each instantiated precondition.

    Returns ("Satisfied", []) or ("Violated"/"Undecided", offending terms).
    """
    missing = [n for n in spec.input_names if n not in args]
    if missing:
        raise MissingArgument(f"spec {list(spec.path)}: missing arguments {missing}")
    sub = Substitution({n: args[n] for n in args})
    fact_list = list(facts) if facts is not None else []
    violated: list[Term] = []
    undecided: list[Term] = []
    for cond in spec.precond:
        inst = substitute(cond, sub)
        verdict = eval_condition(fact_list, inst, condition_rules)
        if verdict == "False":
            violated.append(inst)
        elif verdict == "Undecided":
            undecided.append(inst)
    if violated:
        return "Violated", violated
    if undecided:
        return "Undecided", undecided
    return "Satisfied", []


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

_RULE_RE = re.compile(r"^(?P<name>[A-Za-z_][A-Za-z0-9_]*)\s*:\s*(?P<body>.*)$")


def _strip(line: str) -> str:
    return line.split("#", 1)[0].rstrip()


def _split_word(text: str, word: str) -> tuple[str, Optional[str]]:
    m = re.search(rf"\b{word}\b", text)
    if m is None:
        return text, None
    return text[: m.start()].rstrip(), text[m.end():].strip()


def _parse_rule_line(line: str, arities: Mapping[str, int], file: str, no: int) -> Rule:
    m = _RULE_RE.match(line)
    if m is None:
        raise LoadError(f"malformed rule line: {line!r}", file, no)
    name, body = m.group("name"), m.group("body")
    body, schematic_part = _split_word(body, "schematic")
    body, cond_part = _split_word(body, "if")
    try:
        equation = parse_term(body, arities)
    except ParseError as err:
        raise LoadError(f"rule {name}: {err}", file, no) from err
    if not (isinstance(equation, App) and equation.head == "=" and len(equation.args) == 2):
        raise LoadError(f"rule {name}: body is not of the form lhs = rhs", file, no)
    conditions: list[Term] = []
    if cond_part:
        for chunk in cond_part.split(";"):
            try:
                conditions.append(parse_term(chunk.strip(), arities))
            except ParseError as err:
                raise LoadError(f"rule {name}: bad condition {chunk.strip()!r}: {err}", file, no) from err
    schematic = frozenset()
    if schematic_part:
        schematic = frozenset(s.strip() for s in schematic_part.split(",") if s.strip())
    try:
        return Rule(name, equation.args[0], equation.args[1], tuple(conditions), schematic)
    except ValueError as err:
        raise LoadError(str(err), file, no) from err


def _parse_ruleset_line(line: str, theory: Theory, file: str, no: int, store: KnowledgeStore) -> RuleSet:
    m = _RULE_RE.match(line)
    if m is None:
        raise LoadError(f"malformed rule set line: {line!r}", file, no)
    name, body = m.group("name"), m.group("body")
    kwargs = {"max_steps": 2000, "ac_canonical": False, "builtin_fold": True}
    rules: tuple[Rule, ...] = ()
    for part in body.split():
        if "=" not in part:
            raise LoadError(f"rule set {name}: malformed option {part!r}", file, no)
        key, value = part.split("=", 1)
        if key == "max_steps":
            kwargs["max_steps"] = int(value)
        elif key == "ac":
            kwargs["ac_canonical"] = value == "true"
        elif key == "fold":
            kwargs["builtin_fold"] = value == "true"
        elif key == "strategy":
            kwargs["strategy"] = value
        elif key == "rules":
            names = [r for r in value.split(",") if r]
            resolved = []
            scope = store.rules_in_scope(theory.name)
            scope.update(theory.rules)
            for rname in names:
                if rname not in scope:
                    raise LoadError(f"rule set {name}: unknown rule {rname}", file, no)
                resolved.append(scope[rname])
            rules = tuple(resolved)
        else:
            raise LoadError(f"rule set {name}: unknown option {key!r}", file, no)
    return RuleSet(name, rules, **kwargs)


class _BlockReader:
    """Reads `keyword ... end` blocks of indented `field value` lines."""

    def __init__(self, path: Path):
        self.path = path
        self.lines = path.read_text().splitlines()

    def blocks(self, opener: str):
        current: Optional[tuple[str, int, list[tuple[int, str]]]] = None
        for no, raw in enumerate(self.lines, 1):
            line = _strip(raw)
            if not line.strip():
                continue
            if line.startswith(opener + " ") or line == opener:
                if current is not None:
                    raise LoadError(f"nested {opener} block", str(self.path), no)
                current = (line[len(opener):].strip(), no, [])
            elif line.strip() == "end" and current is not None:
                yield current
                current = None
            elif current is not None:
                current[2].append((no, line.strip()))
            else:
                raise LoadError(f"stray line outside {opener} block: {line!r}", str(self.path), no)
        if current is not None:
            raise LoadError(f"unterminated {opener} block", str(self.path), current[1])


def _parse_path_header(header: str, file: str, no: int) -> tuple[str, ...]:
    m = re.match(r"^\[\s*([A-Za-z0-9_,\s]+)\s*\]$", header)
    if m is None:
        raise LoadError(f"malformed path header {header!r}", file, no)
    return tuple(s.strip() for s in m.group(1).split(",") if s.strip())


def load_knowledge(directory: Path | str) -> KnowledgeStore:
    """Load and cross-link a knowledge directory. Raises LoadError."""
    root = Path(directory)
    if not root.is_dir():
        raise LoadError(f"knowledge directory {root} does not exist")
    store = KnowledgeStore()
    theory_dirs = sorted(p for p in root.iterdir() if p.is_dir())

    hasher = hashlib.sha256()
    for f in sorted(root.rglob("*")):
        if f.is_file():
            hasher.update(str(f.relative_to(root)).encode())
            hasher.update(f.read_bytes())
    store.source_hash = hasher.hexdigest()

    # pass 1: theory headers and symbol declarations
    pending_facts: list[tuple[Theory, str, int, str]] = []
    for tdir in theory_dirs:
        tfile = tdir / "theory.kb"
        if not tfile.exists():
            raise LoadError("missing theory.kb", str(tdir))
        theory: Optional[Theory] = None
        for no, raw in enumerate(tfile.read_text().splitlines(), 1):
            line = _strip(raw).strip()
            if not line:
                continue
            word, _, rest = line.partition(" ")
            rest = rest.strip()
            if word == "theory":
                theory = Theory(name=rest)
            elif theory is None:
                raise LoadError("theory.kb must start with a theory line", str(tfile), no)
            elif word == "parent":
                theory.parent = rest
            elif word == "symbol":
                sym, _, arity = rest.rpartition(" ")
                try:
                    theory.declared_symbols[sym.strip()] = int(arity)
                except ValueError as err:
                    raise LoadError(f"bad symbol declaration {rest!r}", str(tfile), no) from err
            elif word == "condition_set":
                theory.condition_set = rest
            elif word == "check_set":
                theory.check_set = rest
            elif word == "fact":
                pending_facts.append((theory, rest, no, str(tfile)))
            else:
                raise LoadError(f"unknown theory.kb directive {word!r}", str(tfile), no)
        if theory is None:
            raise LoadError("empty theory.kb", str(tfile))
        if theory.name in store.theories:
            raise LoadError(f"duplicate theory {theory.name}", str(tfile))
        store.theories[theory.name] = theory

    arities = store.arity_table()
    for theory, text, no, fname in pending_facts:
        try:
            theory.facts = theory.facts + (parse_term(text, arities),)
        except ParseError as err:
            raise LoadError(f"bad theory fact: {err}", fname, no) from err

    # pass 2: rules, then rule sets (which reference rules)
    for tdir in theory_dirs:
        theory = store.theories[_theory_name(tdir)]
        rfile = tdir / "rules.kb"
        if rfile.exists():
            for no, raw in enumerate(rfile.read_text().splitlines(), 1):
                line = _strip(raw).strip()
                if not line:
                    continue
                rule = _parse_rule_line(line, arities, str(rfile), no)
                if rule.name in theory.rules:
                    raise LoadError(f"duplicate rule {rule.name}", str(rfile), no)
                theory.rules[rule.name] = rule
    for tdir in theory_dirs:
        theory = store.theories[_theory_name(tdir)]
        sfile = tdir / "rulesets.kb"
        if sfile.exists():
            for no, raw in enumerate(sfile.read_text().splitlines(), 1):
                line = _strip(raw).strip()
                if not line:
                    continue
                rs = _parse_ruleset_line(line, theory, str(sfile), no, store)
                theory.rule_sets[rs.name] = rs

    # pass 3: specifications
    for tdir in theory_dirs:
        sfile = tdir / "specs.kb"
        if not sfile.exists():
            continue
        for header, no, body in _BlockReader(sfile).blocks("spec"):
            path = _parse_path_header(header, str(sfile), no)
            inputs: list[tuple[str, str]] = []
            outputs: list[tuple[str, str]] = []
            precond: list[Term] = []
            props: list[Term] = []
            props_vars: list[str] = []
            postcond: Optional[Term] = None
            for lno, line in body:
                word, _, rest = line.partition(" ")
                rest = rest.strip()
                try:
                    if word in ("input", "output"):
                        vname, _, ann = rest.partition("::")
                        entry = (vname.strip(), ann.strip())
                        (inputs if word == "input" else outputs).append(entry)
                    elif word == "precond":
                        precond.append(parse_term(rest, arities))
                    elif word == "postcond":
                        postcond = parse_term(rest, arities)
                    elif word == "prop":
                        props.append(parse_term(rest, arities))
                    elif word == "propvars":
                        props_vars.extend(s.strip() for s in rest.split(",") if s.strip())
                    else:
                        raise LoadError(f"unknown spec field {word!r}", str(sfile), lno)
                except ParseError as err:
                    raise LoadError(f"spec {list(path)}: {err}", str(sfile), lno) from err
            if path in store.specs:
                raise LoadError(f"duplicate specification {list(path)}", str(sfile), no)
            try:
                store.specs[path] = Specification(
                    path, tuple(inputs), tuple(precond), tuple(outputs),
                    postcond, tuple(props), tuple(props_vars),
                )
            except ValueError as err:
                raise LoadError(str(err), str(sfile), no) from err

    # pass 4: methods and programs
    for tdir in theory_dirs:
        mfile = tdir / "methods.kb"
        if not mfile.exists():
            continue
        for header, no, body in _MethodReader(mfile).method_blocks():
            method = _build_method(header, no, body, tdir, arities, str(mfile))
            if method.name in store.methods:
                raise LoadError(f"duplicate method {method.name}", str(mfile), no)
            store.methods[method.name] = method

    problems = store.audit()
    if problems:
        raise LoadError("knowledge audit failed:\n  " + "\n  ".join(problems))
    return store


def _theory_name(tdir: Path) -> str:
    for raw in (tdir / "theory.kb").read_text().splitlines():
        line = _strip(raw).strip()
        if line.startswith("theory "):
            return line.split(" ", 1)[1].strip()
    raise LoadError("missing theory line", str(tdir / "theory.kb"))


class _MethodReader:
    """methods.kb blocks; a stub sub-block may nest one level deep."""

    def __init__(self, path: Path):
        self.path = path

    def method_blocks(self):
        lines = self.path.read_text().splitlines()
        current: Optional[tuple[str, int, list[tuple[int, str]]]] = None
        depth = 0
        for no, raw in enumerate(lines, 1):
            line = _strip(raw).strip()
            if not line:
                continue
            if line.startswith("method "):
                if current is not None:
                    raise LoadError("nested method block", str(self.path), no)
                current = (line[len("method "):].strip(), no, [])
                depth = 1
            elif current is None:
                raise LoadError(f"stray line outside method block: {line!r}", str(self.path), no)
            elif line == "stub":
                depth += 1
                current[2].append((no, line))
            elif line == "end":
                depth -= 1
                if depth == 0:
                    yield current
                    current = None
                else:
                    current[2].append((no, line))
            else:
                current[2].append((no, line))
        if current is not None:
            raise LoadError("unterminated method block", str(self.path), current[1])


def _build_method(
    name: str,
    block_line: int,
    body: list[tuple[int, str]],
    tdir: Path,
    arities: Mapping[str, int],
    file: str,
) -> Method:
    theory = ""
    spec_path: tuple[str, ...] = ()
    program: Optional[prog.Program] = None
    stub: list[StubStep] = []
    in_stub = False
    for no, line in body:
        if line == "stub":
            in_stub = True
            continue
        if line == "end":
            in_stub = False
            continue
        word, _, rest = line.partition(" ")
        rest = rest.strip()
        if in_stub:
            if word not in ("take", "fact", "approx", "result"):
                raise LoadError(f"unknown stub step {word!r}", file, no)
            try:
                stub.append(StubStep(word, parse_term(rest, arities)))
            except ParseError as err:
                raise LoadError(f"stub step: {err}", file, no) from err
        elif word == "theory":
            theory = rest
        elif word == "spec":
            spec_path = _parse_path_header(rest, file, no)
        elif word == "program":
            pfile = tdir / "programs" / rest
            if not pfile.exists():
                raise LoadError(f"method {name}: program file {rest} not found", file, no)
            try:
                program = prog.parse_program(pfile.read_text(), arities)
            except ParseError as err:
                raise LoadError(f"program {rest}: {err}", str(pfile)) from err
        else:
            raise LoadError(f"unknown method field {word!r}", file, no)
    if not theory or not spec_path:
        raise LoadError(f"method {name}: needs theory and spec", file, block_line)
    if program is not None and stub:
        raise LoadError(f"method {name}: cannot be both program and stub", file, block_line)
    if program is None and not stub:
        raise LoadError(f"method {name}: needs a program or a stub block", file, block_line)
    return Method(name, theory, spec_path, program, tuple(stub))
