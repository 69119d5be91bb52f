"""First-order terms: parsing, rendering, matching, substitution.

Terms are the universe of formulas everything else manipulates. They are
immutable values; numerals are exact rationals (fractions.Fraction).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Mapping, Optional, Union


class ParseError(Exception):
    """Raised on ungrammatical input; carries byte offset and expected tokens."""

    def __init__(self, message: str, offset: int, expected: tuple[str, ...] = ()):
        super().__init__(f"{message} at offset {offset}" + (f" (expected {', '.join(expected)})" if expected else ""))
        self.offset = offset
        self.expected = expected


@dataclass(frozen=True)
class Num:
    value: Fraction

    def __post_init__(self):
        if not isinstance(self.value, Fraction):
            object.__setattr__(self, "value", Fraction(self.value))

    def __repr__(self) -> str:
        return f"Num({self.value})"


@dataclass(frozen=True)
class Var:
    name: str

    def __repr__(self) -> str:
        return f"Var({self.name})"


@dataclass(frozen=True)
class App:
    head: str
    args: tuple["Term", ...] = ()

    def __repr__(self) -> str:
        return f"App({self.head}, {list(self.args)})"


Term = Union[Num, Var, App]

# Core symbol arities. Theories may declare more; parsing rejects unknown
# function applications so typos surface early.
CORE_ARITIES: dict[str, int] = {
    "+": 2, "-": 2, "*": 2, "/": 2, "^": 2,
    "neg": 1,
    "=": 2, "<": 2, "<=": 2, ">": 2, ">=": 2, "~": 2, "in": 2,
    "and": 2, "not": 1,
    "sin": 1, "cos": 1, "tan": 1, "arctan": 1, "sqrt": 1,
    "d_d": 2, "free_of": 2, "is_num": 1,
    "cons": 2, "nil": 0,
    "true": 0, "false": 0, "pi": 0,
}

INFIX_HEADS = {"+", "-", "*", "/", "^", "=", "<", "<=", ">", ">=", "~", "in", "and"}

# Pure-program list/term combinators. Not part of the term grammar proper:
# they apply by juxtaposition (program syntax) and render accordingly.
COMBINATORS: dict[str, int] = {
    "HD": 1, "LEN": 1, "RHS": 1,
    "FILTER": 2, "FILTER_OUT": 2, "contains": 2, "ident": 2,
}

BOOLEAN_HEADS = {"=", "<", "<=", ">", ">=", "~", "in", "and", "not", "true", "false", "free_of", "is_num"}


def num(value) -> Num:
    return Num(Fraction(value))


def var(name: str) -> Var:
    return Var(name)


def app(head: str, *args: Term) -> App:
    return App(head, tuple(args))


def is_boolean(t: Term) -> bool:
    return isinstance(t, App) and t.head in BOOLEAN_HEADS


def term_list(items: list[Term]) -> Term:
    """Build a cons/nil list term."""
    out: Term = App("nil")
    for item in reversed(items):
        out = App("cons", (item, out))
    return out


def list_elements(t: Term) -> Optional[list[Term]]:
    """Elements of a nil-terminated cons chain, or None if t is not one."""
    items = []
    while isinstance(t, App) and t.head == "cons":
        items.append(t.args[0])
        t = t.args[1]
    if isinstance(t, App) and t.head == "nil":
        return items
    return None


def subterms(t: Term) -> Iterator[Term]:
    yield t
    if isinstance(t, App):
        for a in t.args:
            yield from subterms(a)


def free_vars(t: Term) -> frozenset[str]:
    """Exact set of variable names occurring in t."""
    if isinstance(t, Var):
        return frozenset((t.name,))
    if isinstance(t, App):
        out: frozenset[str] = frozenset()
        for a in t.args:
            out |= free_vars(a)
        return out
    return frozenset()


def term_key(t: Term):
    """Total-order key: kind rank, then value/name/head-arity-args recursively."""
    if isinstance(t, Num):
        return (0, t.value)
    if isinstance(t, Var):
        return (1, t.name)
    return (2, t.head, len(t.args), tuple(term_key(a) for a in t.args))


@dataclass(frozen=True)
class Substitution:
    """Finite map from variable names to terms."""

    bindings: Mapping[str, Term] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "bindings", dict(self.bindings))

    def get(self, name: str) -> Optional[Term]:
        return self.bindings.get(name)

    def domain(self) -> frozenset[str]:
        return frozenset(self.bindings)

    def extended(self, name: str, value: Term) -> "Substitution":
        merged = dict(self.bindings)
        merged[name] = value
        return Substitution(merged)


def substitute(t: Term, s: Substitution) -> Term:
    """Replace every occurrence of a bound variable by its image."""
    if isinstance(t, Var):
        hit = s.get(t.name)
        return hit if hit is not None else t
    if isinstance(t, App) and t.args:
        return App(t.head, tuple(substitute(a, s) for a in t.args))
    return t


class NoMatch(Exception):
    """Internal signal; match_term returns None instead of raising to callers."""


def match_term(pattern: Term, target: Term, fixed: frozenset[str] = frozenset()) -> Optional[Substitution]:
    """First-order syntactic match of pattern against target.

    Names in `fixed` act as constants: they match only a variable of the
    same name. Returns the witnessing substitution or None.
    """
    bindings: dict[str, Term] = {}

    def walk(p: Term, t: Term) -> None:
        if isinstance(p, Var):
            if p.name in fixed:
                if not (isinstance(t, Var) and t.name == p.name):
                    raise NoMatch
                return
            seen = bindings.get(p.name)
            if seen is None:
                bindings[p.name] = t
            elif seen != t:
                raise NoMatch
            return
        if isinstance(p, Num):
            if not (isinstance(t, Num) and t.value == p.value):
                raise NoMatch
            return
        if not (isinstance(t, App) and t.head == p.head and len(t.args) == len(p.args)):
            raise NoMatch
        for pa, ta in zip(p.args, t.args):
            walk(pa, ta)

    try:
        walk(pattern, target)
    except NoMatch:
        return None
    return Substitution(bindings)


# ---------------------------------------------------------------------------
# Parsing. Grammar published in docs/grammar.md; this is the wire format.
# ---------------------------------------------------------------------------

_TOKEN_OPS = ("<=", ">=", "<", ">", "=", "~", "+", "-", "*", "/", "^", "(", ")", "[", "]", ",")


class _Lexer:
    def __init__(self, text: str, ops: tuple[str, ...] = _TOKEN_OPS):
        self.text = text
        self.ops = ops
        self.pos = 0
        self.tokens: list[tuple[str, str, int]] = []  # (kind, value, offset)
        self._scan()
        self.idx = 0

    def _scan(self) -> None:
        text, n = self.text, len(self.text)
        i = 0
        while i < n:
            c = text[i]
            if c.isspace():
                i += 1
                continue
            if c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
                j = i
                while j < n and text[j].isdigit():
                    j += 1
                if j < n and text[j] == ".":
                    j += 1
                    while j < n and text[j].isdigit():
                        j += 1
                self.tokens.append(("number", text[i:j], i))
                i = j
                continue
            if c.isalpha() or c == "_":
                j = i
                while j < n and (text[j].isalnum() or text[j] == "_"):
                    j += 1
                while j < n and text[j] == "'":
                    j += 1
                self.tokens.append(("ident", text[i:j], i))
                i = j
                continue
            for op in self.ops:
                if text.startswith(op, i):
                    self.tokens.append(("op", op, i))
                    i += len(op)
                    break
            else:
                raise ParseError(f"unexpected character {c!r}", i)
        self.tokens.append(("end", "", n))

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.idx]

    def next(self) -> tuple[str, str, int]:
        tok = self.tokens[self.idx]
        self.idx += 1
        return tok

    def accept(self, kind: str, value: Optional[str] = None) -> Optional[tuple[str, str, int]]:
        k, v, o = self.peek()
        if k == kind and (value is None or v == value):
            return self.next()
        return None

    def expect(self, kind: str, value: Optional[str] = None) -> tuple[str, str, int]:
        tok = self.accept(kind, value)
        if tok is None:
            k, v, o = self.peek()
            raise ParseError(f"unexpected token {v!r}", o, (value or kind,))
        return tok


class _TermParser:
    """Recursive-descent parser over the published precedence ladder."""

    def __init__(self, lexer: _Lexer, arities: Mapping[str, int]):
        self.lex = lexer
        self.arities = arities

    def parse(self) -> Term:
        t = self.boolean()
        k, v, o = self.lex.peek()
        if k != "end":
            raise ParseError(f"trailing input {v!r}", o)
        return t

    def boolean(self) -> Term:
        t = self.relation()
        while self.lex.accept("ident", "and"):
            t = App("and", (t, self.relation()))
        return t

    def relation(self) -> Term:
        t = self.sum()
        k, v, o = self.lex.peek()
        if (k == "op" and v in ("=", "<", "<=", ">", ">=", "~")) or (k == "ident" and v == "in"):
            self.lex.next()
            return App(v, (t, self.sum()))
        return t

    def sum(self) -> Term:
        t = self.product()
        while True:
            if self.lex.accept("op", "+"):
                t = App("+", (t, self.product()))
            elif self.lex.accept("op", "-"):
                t = App("-", (t, self.product()))
            else:
                return t

    def product(self) -> Term:
        t = self.unary()
        while True:
            if self.lex.accept("op", "*"):
                t = App("*", (t, self.unary()))
            elif self.lex.accept("op", "/"):
                rhs = self.unary()
                # a quotient of two numerals is rational-literal syntax
                if isinstance(t, Num) and isinstance(rhs, Num) and rhs.value != 0:
                    t = Num(t.value / rhs.value)
                else:
                    t = App("/", (t, rhs))
            else:
                return t

    def unary(self) -> Term:
        if self.lex.accept("op", "-"):
            inner = self.unary()
            if isinstance(inner, Num):
                return Num(-inner.value)
            return App("neg", (inner,))
        return self.power()

    def power(self) -> Term:
        base = self.atom()
        if self.lex.accept("op", "^"):
            return App("^", (base, self.unary()))
        return base

    def atom(self) -> Term:
        k, v, o = self.lex.peek()
        if k == "number":
            self.lex.next()
            if "." in v:
                whole, frac = v.split(".")
                return Num(Fraction(int((whole or "0") + frac), 10 ** len(frac)))
            return Num(Fraction(int(v)))
        if k == "op" and v == "(":
            self.lex.next()
            t = self.boolean()
            self.lex.expect("op", ")")
            return t
        if k == "op" and v == "[":
            self.lex.next()
            items = []
            if not self.lex.accept("op", "]"):
                items.append(self.boolean())
                while self.lex.accept("op", ","):
                    items.append(self.boolean())
                self.lex.expect("op", "]")
            return term_list(items)
        if k == "ident":
            self.lex.next()
            if self.lex.accept("op", "("):
                args = [self.boolean()]
                while self.lex.accept("op", ","):
                    args.append(self.boolean())
                self.lex.expect("op", ")")
                arity = self.arities.get(v)
                if arity is None:
                    raise ParseError(f"unknown function {v!r}", o)
                if arity != len(args):
                    raise ParseError(f"{v} expects {arity} argument(s), got {len(args)}", o)
                return App(v, tuple(args))
            if self.arities.get(v) == 0:
                return App(v)
            return Var(v)
        raise ParseError(f"unexpected token {v!r}", o, ("term",))


def parse_term(text: str, arities: Optional[Mapping[str, int]] = None) -> Term:
    """Parse the ascii term syntax. Raises ParseError on bad input."""
    table = dict(CORE_ARITIES)
    if arities:
        table.update(arities)
    return _TermParser(_Lexer(text), table).parse()


# ---------------------------------------------------------------------------
# Rendering. ascii re-parses to the same term; unicode is display-only.
# ---------------------------------------------------------------------------

_PREC = {"and": 1, "=": 2, "<": 2, "<=": 2, ">": 2, ">=": 2, "~": 2, "in": 2,
         "+": 3, "-": 3, "*": 4, "/": 4, "neg": 5, "^": 6}
_ATOM = 7

_GREEK = {
    "alpha": "α", "beta": "β", "gamma": "γ", "delta": "δ", "epsilon": "ε",
    "lambda": "λ", "phi": "φ", "pi": "π", "theta": "θ", "omega": "ω",
}
_SUPERSCRIPTS = str.maketrans("0123456789-", "⁰¹²³⁴⁵⁶⁷⁸⁹⁻")


def _num_str(v: Fraction) -> str:
    if v.denominator == 1:
        return str(v.numerator)
    d = v.denominator
    while d % 2 == 0:
        d //= 2
    while d % 5 == 0:
        d //= 5
    if d == 1:
        # denominator is 2^a 5^b: exact finite decimal with k = max(a, b) places
        twos = fives = 0
        den = v.denominator
        while den % 2 == 0:
            den //= 2
            twos += 1
        while den % 5 == 0:
            den //= 5
            fives += 1
        k = max(twos, fives)
        n = v.numerator * 10**k // v.denominator
        sign = "-" if n < 0 else ""
        digits = str(abs(n)).rjust(k + 1, "0")
        return f"{sign}{digits[:-k]}.{digits[-k:]}"
    # reparses as a rational literal via the numeral-quotient fold
    return f"{v.numerator}/{v.denominator}"


def _is_finite_decimal(v: Fraction) -> bool:
    d = v.denominator
    while d % 2 == 0:
        d //= 2
    while d % 5 == 0:
        d //= 5
    return d == 1


def _prec_of(t: Term) -> int:
    if isinstance(t, App) and t.head in _PREC:
        return _PREC[t.head]
    if isinstance(t, Num):
        if t.value.denominator != 1 and not _is_finite_decimal(t.value):
            return _PREC["/"]  # rendered as p/q
        if t.value < 0:
            return _PREC["neg"]
    return _ATOM


def _ascii(t: Term) -> str:
    if isinstance(t, Num):
        return _num_str(t.value)
    if isinstance(t, Var):
        return t.name
    elements = list_elements(t)
    if elements is not None:
        return "[" + ", ".join(_ascii(e) for e in elements) + "]"
    if t.head in COMBINATORS:
        parts = [t.head]
        for a in t.args:
            s = _ascii(a)
            atomic = isinstance(a, Var) or (isinstance(a, Num) and a.value >= 0) \
                or list_elements(a) is not None
            parts.append(s if atomic else f"({s})")
        return " ".join(parts)
    if t.head == "neg":
        inner = t.args[0]
        body = _ascii(inner)
        if _prec_of(inner) < _PREC["neg"] or (isinstance(inner, App) and inner.head == "neg"):
            body = f"({body})"
        return f"-{body}"
    if t.head in INFIX_HEADS:
        p = _PREC[t.head]
        left, right = t.args
        ls, rs = _ascii(left), _ascii(right)
        if t.head == "^":
            # right-assoc; exponent position accepts unary and above
            if _prec_of(left) <= p:
                ls = f"({ls})"
            if _prec_of(right) < _PREC["neg"]:
                rs = f"({rs})"
            return f"{ls}^{rs}"
        left_min = p + 1 if t.head in ("=", "<", "<=", ">", ">=", "~", "in") else p
        if _prec_of(left) < left_min:
            ls = f"({ls})"
        if _prec_of(right) < p + 1:  # left-assoc: same-level right child needs parens
            rs = f"({rs})"
        return f"{ls} {t.head} {rs}"
    if not t.args:
        return t.head
    return f"{t.head}(" + ", ".join(_ascii(a) for a in t.args) + ")"


def _negated(t: Term) -> Optional[Term]:
    """The positive counterpart of a visibly negative term, or None."""
    if isinstance(t, App) and t.head == "neg":
        return t.args[0]
    if isinstance(t, Num) and t.value < 0:
        return Num(-t.value)
    if isinstance(t, App) and t.head == "*":
        flipped = _negated(t.args[0])
        if flipped is not None:
            if isinstance(flipped, Num) and flipped.value == 1:
                return t.args[1]
            return App("*", (flipped, t.args[1]))
    return None


def _uni_name(name: str) -> str:
    if name in _GREEK:
        return _GREEK[name]
    if name.endswith("_hat") and name[:-4] in _GREEK:
        return _GREEK[name[:-4]] + "̂"
    if name.endswith("_tilde"):
        stem = name[:-6]
        stem = _GREEK.get(stem, stem)
        return stem + "̃"
    if name.endswith("'"):
        return _uni_name(name.rstrip("'")) + "′" * (len(name) - len(name.rstrip("'")))
    return name


def _uni(t: Term) -> str:
    if isinstance(t, Num):
        return _num_str(t.value)
    if isinstance(t, Var):
        return _uni_name(t.name)
    elements = list_elements(t)
    if elements is not None:
        return "[" + ", ".join(_uni(e) for e in elements) + "]"
    head = t.head
    if head == "neg":
        inner = _uni(t.args[0])
        if _prec_of(t.args[0]) < _PREC["neg"]:
            inner = f"({inner})"
        return f"-{inner}"
    if head == "d_d":
        v, body = t.args
        shown = _uni(body)
        if not isinstance(body, (Var, Num)):
            shown = f"({shown})"
        return f"d/d{_uni(v)} {shown}"
    if head == "^" and isinstance(t.args[1], Num) and t.args[1].value.denominator == 1:
        base = t.args[0]
        bs = _uni(base)
        if not isinstance(base, (Var, Num)):
            bs = f"({bs})"
        return bs + str(t.args[1].value.numerator).translate(_SUPERSCRIPTS)
    if head == "sqrt":
        return f"√({_uni(t.args[0])})" if not isinstance(t.args[0], (Var, Num)) else f"√{_uni(t.args[0])}"
    if head == "arctan":
        return f"tan⁻¹({_uni(t.args[0])})"
    if head in ("sin", "cos", "tan") and isinstance(t.args[0], (Var, Num)):
        return f"{head} {_uni(t.args[0])}"
    if head == "interval_open" and len(t.args) == 2:
        return f"]{_uni(t.args[0])}, {_uni(t.args[1])}["
    if head == "+":
        # display-only sugar: fold a negated right operand into subtraction
        left, right = t.args
        flipped = _negated(right)
        if flipped is not None:
            rs = _uni(flipped)
            if _prec_of(flipped) < _PREC["+"] + 1:
                rs = f"({rs})"
            return f"{_uni(left)} - {rs}"
    if head in INFIX_HEADS:
        sym = {"*": "·", "<=": "≤", ">=": "≥", "~": "≈", "in": "∈", "and": "∧"}.get(head, head)
        p = _PREC[head]
        left, right = t.args
        ls, rs = _uni(left), _uni(right)
        if _prec_of(left) < p or (head == "^" and not isinstance(left, (Var, Num))):
            ls = f"({ls})"
        right_min = p if head == "^" else p + 1
        if _prec_of(right) < right_min or (head == "*" and isinstance(right, App) and right.head == "neg"):
            rs = f"({rs})"
        return f"{ls}{sym}{rs}" if head in ("*", "^") else f"{ls} {sym} {rs}"
    if not t.args:
        return _GREEK.get(head, head)
    return f"{head}(" + ", ".join(_uni(a) for a in t.args) + ")"


def render_term(t: Term, style: str = "ascii") -> str:
    """Render a term. style='ascii' round-trips through parse_term."""
    if style == "ascii":
        return _ascii(t)
    if style == "unicode":
        return _uni(t)
    raise ValueError(f"unknown style {style!r}")
