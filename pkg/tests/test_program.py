"""Tactic language: parsing, pretty round-trip, pure evaluation, scanning."""

import pytest

from stepcalc.program import (
    AtTactic,
    Chain,
    EvalError,
    Finished,
    If,
    Let,
    Or,
    ProgState,
    Pure,
    Repeat,
    REPEAT_LIMIT,
    Rewrite,
    RewriteInst,
    RewriteSet,
    Stuck,
    Subproblem,
    TacticNode,
    Take,
    Try,
    eval_pure,
    iter_tactics,
    parse_program,
    parse_tactic,
    pretty_program,
    scan_to_next_tactic,
)
from stepcalc.rewrite import eval_condition
from stepcalc.terms import App, ParseError, num, parse_term, term_list, var


class StubHost:
    """Applicability by tactic label; records every probe."""

    def __init__(self, verdicts=None, default=True):
        self.verdicts = dict(verdicts or {})
        self.default = default
        self.probes = []

    def _label(self, tactic):
        if isinstance(tactic, (Rewrite, RewriteInst)):
            return tactic.rule
        if isinstance(tactic, RewriteSet):
            return tactic.ruleset
        if isinstance(tactic, Take):
            return "take"
        return type(tactic).__name__

    def applicable(self, tactic):
        label = self._label(tactic)
        self.probes.append(label)
        return self.verdicts.get(label, self.default)

    def eval_cond(self, cond):
        return eval_condition([], cond)


MINI_DIFF = """
Program D (f::real) (v::real) =
  LET f' = Take (d_d(v, f))
  IN ((REPEAT ((Rewrite_Inst [(bdv, v)] diff_sum) OR
               (Rewrite_Inst [(bdv, v)] diff_sin)))
      @@ (TRY (Rewrite_Set simplifier))) f'
"""


class TestParseProgram:
    def test_differentiation_program_shape(self, store):
        program = store.lookup_method("differentiate").program
        assert program.name == "Differentiate"
        assert [n for n, _ in program.formals] == ["interval", "f", "v"]
        body = program.body
        assert isinstance(body, Let) and body.name == "f'"
        assert isinstance(body.bound, TacticNode) and isinstance(body.bound.tactic, Take)
        chain = body.body
        assert isinstance(chain, Chain)
        assert isinstance(chain.stages[0], Pure)      # the piped f'
        assert isinstance(chain.stages[1], Repeat)
        assert isinstance(chain.stages[1].body, Or)
        assert len(chain.stages[1].body.branches) == 9
        assert isinstance(chain.stages[2], Try)
        rules = [t.rule for t in iter_tactics(body) if isinstance(t, RewriteInst)]
        assert rules[:4] == ["diff_sum", "diff_product", "diff_sin", "diff_cos"]
        assert rules[-1] == "diff_fraction"

    def test_minimal_let_take(self):
        program = parse_program("Program P (x::real) = LET y = Take (x) IN y")
        assert program.formals == (("x", "real"),)
        assert isinstance(program.body, Let)
        assert isinstance(program.body.bound, TacticNode)
        assert isinstance(program.body.body, Pure)

    def test_optimisation_program_subproblems_resolve(self, store):
        program = store.lookup_method("maximize").program
        triples = [t for t in iter_tactics(program.body) if isinstance(t, Subproblem)]
        assert len(triples) == 3
        for t in triples:
            assert store.lookup_specification(t.spec) is not None
            assert store.lookup_method(t.method) is not None

    def test_pretty_round_trip(self, store, arities):
        for name in ("differentiate", "maximize", "maximum_on_interval"):
            program = store.lookup_method(name).program
            again = parse_program(pretty_program(program), arities)
            assert again == program, name

    def test_parse_tactic_text(self, arities):
        t = parse_tactic("Rewrite_Inst [(bdv, alpha)] diff_sin", arities)
        assert t == RewriteInst((("bdv", var("alpha")),), "diff_sin")
        t2 = parse_tactic("Rewrite_Set simplifier", arities)
        assert t2 == RewriteSet("simplifier")
        with pytest.raises(ParseError):
            parse_tactic("Frobnicate x", arities)

    def test_parse_error_has_location(self):
        with pytest.raises(ParseError):
            parse_program("Program P (x::real) = LET y Take x IN y")


class TestEvalPure:
    def test_filter_contains_selects_the_target_equation(self, P):
        rels = P("[A = 2*u*v - u^2, u/2 = r*sin(alpha), v/2 = r*cos(alpha)]")
        env = {"rels": rels, "max": var("A")}
        picked = eval_pure(env, parse_term("x")) if False else eval_pure(
            env, App("FILTER", (App("contains", (var("max"),)), var("rels"))))
        assert picked == term_list([P("A = 2*u*v - u^2")])

    def test_len_of_empty(self):
        assert eval_pure({}, App("LEN", (App("nil"),))) == num(0)

    def test_filter_out_ident_is_set_difference(self, P):
        rels = P("[A = 2*u*v - u^2, u/2 = r*sin(alpha)]")
        keep = eval_pure({"rels": rels, "maxequ": P("A = 2*u*v - u^2")},
                         App("FILTER_OUT", (App("ident", (var("maxequ"),)), var("rels"))))
        assert keep == term_list([P("u/2 = r*sin(alpha)")])

    def test_hd_and_rhs(self, P):
        assert eval_pure({}, App("HD", (P("[1, 2]"),))) == num(1)
        assert eval_pure({}, App("RHS", (P("u = sin(alpha)"),))) == P("sin(alpha)")

    def test_hd_of_empty_raises(self):
        with pytest.raises(EvalError):
            eval_pure({}, App("HD", (App("nil"),)))

    def test_rhs_of_non_equation_raises(self, P):
        with pytest.raises(EvalError):
            eval_pure({}, App("RHS", (P("u + 1"),)))

    def test_unbound_identifiers_stay_literal(self, P):
        assert eval_pure({}, P("alpha_hat")) == var("alpha_hat")


def scan(program, state, host):
    return scan_to_next_tactic(program, state, host)


class TestScan:
    def test_first_statement_is_a_tactic(self):
        program = parse_program("Program P (x::real) = Take (x)")
        out = scan(program, ProgState(env={"x": num(3)}), StubHost())
        assert isinstance(out, AtTactic)
        assert out.tactic == Take(num(3))

    def test_or_falls_through_inapplicable_branches(self, arities):
        program = parse_program(MINI_DIFF, arities)
        host = StubHost({"take": True, "diff_sum": False, "diff_sin": True})
        state = ProgState(env={"f": parse_term("sin(alpha)"), "v": var("alpha")})
        out = scan(program, state, host)
        assert isinstance(out, AtTactic) and isinstance(out.tactic, Take)
        out.state.value = out.tactic.term  # the caller applies the tactic
        out = scan(program, out.state, host)
        assert isinstance(out, AtTactic)
        assert out.tactic == RewriteInst((("bdv", var("alpha")),), "diff_sin")
        assert host.probes[-2:] == ["diff_sum", "diff_sin"]

    def test_fired_branch_resumes_at_the_next_branch(self, arities):
        # after a branch fires, scanning continues with the following
        # branches before REPEAT loops: sum, then sin, then sum again
        program = parse_program(MINI_DIFF, arities)
        host = StubHost(default=True)
        state = ProgState(env={"f": var("q"), "v": var("alpha")})
        out1 = scan(program, state, host)                 # Take
        out1.state.value = num(0)
        out2 = scan(program, out1.state, host)
        assert out2.tactic.rule == "diff_sum"
        out2.state.value = num(0)
        out3 = scan(program, out2.state, host)
        assert out3.tactic.rule == "diff_sin"             # not diff_sum again
        out3.state.value = num(0)
        out4 = scan(program, out3.state, host)
        assert out4.tactic.rule == "diff_sum"             # REPEAT loops

    def test_repeat_ends_when_no_branch_applies_then_try_absorbs(self, arities):
        program = parse_program(MINI_DIFF, arities)
        host = StubHost({"take": True, "diff_sum": False, "diff_sin": False,
                         "simplifier": False})
        state = ProgState(env={"f": var("q"), "v": var("alpha")})
        out = scan(program, state, host)                  # Take fires
        out.state.value = num(0)
        out = scan(program, out.state, host)              # nothing else applies
        assert isinstance(out, Finished)

    def test_missing_try_makes_the_chain_stuck(self, arities):
        # the same program with TRY removed errors when the simplifier
        # has nothing to do
        src = MINI_DIFF.replace("(TRY (Rewrite_Set simplifier))", "(Rewrite_Set simplifier)")
        program = parse_program(src, arities)
        host = StubHost({"take": True, "diff_sum": False, "diff_sin": False,
                         "simplifier": False})
        state = ProgState(env={"f": var("q"), "v": var("alpha")})
        out = scan(program, state, host)
        out.state.value = num(0)
        out = scan(program, out.state, host)
        assert isinstance(out, Stuck)

    def test_if_takes_the_arithmetically_true_branch(self, arities):
        src = ("Program P (xs::bool list) =\n"
               "  IF 1 < LEN xs THEN Take (1) ELSE Take (0)")
        program = parse_program(src, arities)
        big = ProgState(env={"xs": parse_term("[u = 1, v = 2]")})
        out = scan(parse_program(src, arities), big, StubHost())
        assert out.tactic == Take(num(1))
        small = ProgState(env={"xs": parse_term("[u = 1]")})
        out = scan(program, small, StubHost())
        assert out.tactic == Take(num(0))

    def test_let_binds_the_tactic_value(self, arities):
        program = parse_program("Program P (x::real) = LET y = Take (x) IN y", arities)
        state = ProgState(env={"x": num(4)})
        out = scan(program, state, StubHost())
        out.state.value = num(4)  # the interpreter supplies the applied value
        out2 = scan(program, out.state, StubHost())
        assert isinstance(out2, Finished)
        assert out2.value == num(4)

    def test_repeat_budget_makes_stuck(self, arities):
        src = "Program P (x::real) = REPEAT (TRY (Take (x)))"
        program = parse_program(src, arities)
        host = StubHost({"take": False})
        out = scan(program, ProgState(env={"x": num(1)}), host)
        assert isinstance(out, Stuck)
        assert "REPEAT" in out.reason

    def test_scan_is_pure_and_deterministic(self, arities):
        program = parse_program(MINI_DIFF, arities)
        state = ProgState(env={"f": var("q"), "v": var("alpha")})
        before = state.clone()
        host = StubHost(default=True)
        out1 = scan(program, state, host)
        assert state.env == before.env and state.loc == before.loc
        out2 = scan(program, state, StubHost(default=True))
        assert out1.tactic == out2.tactic
        assert out1.state.loc == out2.state.loc

    def test_undecided_if_condition_is_stuck(self, arities):
        src = "Program P (x::real) = IF 0 < x THEN Take (x) ELSE Take (0)"
        program = parse_program(src, arities)
        out = scan(program, ProgState(env={"x": var("q")}), StubHost())
        assert isinstance(out, Stuck)
        assert "undecided" in out.reason
