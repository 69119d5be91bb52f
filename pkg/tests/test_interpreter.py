"""The stepping interpreter: do_next, user input, backtracking, completion."""

import time

import pytest

from oracles import check_derivative
from stepcalc import program as prog
from stepcalc.calculation import FormulaEntry, extract_result
from stepcalc.interpreter import (
    Derived,
    Finished,
    Helpless,
    InvalidState,
    Located,
    NotApplicableInput,
    NotDerivable,
    Stepped,
    Stuck,
    UnknownPosition,
    open_session,
)
from stepcalc.rewrite import rewrite_once, NotApplicable, equal_modulo
from stepcalc.serialize import calc_to_dict, dumps, session_to_dict
from stepcalc.terms import Substitution, parse_term, render_term, var


def drive(session, limit=100):
    outcomes = []
    while len(outcomes) < limit:
        out = session.do_next()
        outcomes.append(out)
        if isinstance(out, (Finished, Stuck)):
            break
    return outcomes


def rewrite_rules_used(outcomes):
    rules = []
    for out in outcomes:
        if isinstance(out, Stepped) and isinstance(out.tactic, (prog.Rewrite, prog.RewriteInst)):
            rules.append(out.tactic.rule)
    return rules


class TestOpenSession:
    def test_first_step_is_the_take(self, store, golden_args, P):
        session = open_session(store, ["differentiate", "function"], "differentiate",
                               golden_args)
        out = session.do_next()
        assert isinstance(out, Stepped)
        assert out.tactic == prog.Take(P(
            "d_d(alpha, 8*r^2*sin(alpha)*cos(alpha) - 4*r^2*sin(alpha)^2)"))

    def test_minimal_session_one_step_from_finished(self, store, tmp_path, P):
        # a stub is the smallest method: take, then close
        session = open_session(store, ["on_interval", "goniometric", "equation"],
                               "solve_goniometric",
                               {"gequ": P("sin(x) = 0"), "gival": P("interval_open(0, 1)")})
        out1 = session.do_next()
        assert isinstance(out1, Stepped)
        out2 = session.do_next()
        assert isinstance(out2, Finished)

    def test_max_session_opens_over_seven_formals(self, store, max_args):
        session = open_session(store, ["maximum_by", "calculus"], "maximize", max_args)
        assert session.frames[-1].state is not None
        assert set(session.frames[-1].state.env) == {
            "givens", "max", "finds", "rels", "var", "interval", "errbound"}

    def test_unbound_formal_rejected(self, store, golden_args):
        del golden_args["v"]
        from stepcalc.interpreter import UnboundFormal
        with pytest.raises(UnboundFormal):
            open_session(store, ["differentiate", "function"], "differentiate", golden_args)


class TestDoNext:
    def test_golden_rewrite_sequence(self, store, golden_args, simplifier, P):
        session = open_session(store, ["differentiate", "function"], "differentiate",
                               golden_args)
        outcomes = drive(session)
        assert isinstance(outcomes[-1], Finished)
        rules = rewrite_rules_used(outcomes)
        assert rules[0] == "diff_sum"
        for needed in ("diff_product", "diff_pow", "diff_sin", "diff_cos"):
            assert needed in rules
        final = extract_result(session.calc).equations[0][1]
        check_derivative(golden_args["f"], "alpha", final, tol=1e-6)

    def test_do_next_after_finished_is_invalid(self, store, golden_args):
        session = open_session(store, ["differentiate", "function"], "differentiate",
                               golden_args)
        drive(session)
        with pytest.raises(InvalidState):
            session.do_next()

    def test_simple_power_derivative_with_oracle(self, store, P):
        args = {"interval": P("interval_open(0, 1)"), "f": P("x^2"), "v": var("x")}
        session = open_session(store, ["differentiate", "function"], "differentiate", args)
        outcomes = drive(session)
        rules = rewrite_rules_used(outcomes)
        assert "diff_pow" in rules
        result = outcomes[-1].result.equations[0][1]
        assert result == P("2 * x")
        check_derivative(P("x^2"), "x", result, tol=1e-6)

    def test_determinism_of_two_identical_sessions(self, store, golden_args):
        logs = []
        calcs = []
        for _ in range(2):
            session = open_session(store, ["differentiate", "function"], "differentiate",
                                   dict(golden_args), session_id="fixed")
            drive(session)
            logs.append([(r.trigger, r.summary) for r in session.step_log])
            calcs.append(dumps(calc_to_dict(session.calc)))
        assert logs[0] == logs[1]
        assert calcs[0] == calcs[1]

    def test_repeat_matches_cyclic_rewriting_oracle(self, store, P):
        # independent reference for the REPEAT(OR(rules)) contract: try the
        # rules cyclically starting after the last applied one; stop after
        # a full idle cycle
        args = {"interval": P("interval_open(0, 1)"),
                "f": P("sin(x)*cos(x) + x^3"), "v": var("x")}
        session = open_session(store, ["differentiate", "function"], "differentiate", args)
        outcomes = drive(session)
        engine_rules = rewrite_rules_used(outcomes)

        order = ["diff_sum", "diff_product", "diff_sin", "diff_cos", "diff_pow",
                 "diff_add", "diff_var", "diff_const", "diff_fraction"]
        term = P("d_d(x, sin(x)*cos(x) + x^3)")
        inst = Substitution({"bdv": var("x")})
        expected = []
        i = 0
        idle = 0
        while idle < len(order):
            rule = store.lookup_rule("Reals", order[i % len(order)])
            try:
                term, _, _ = rewrite_once(rule, inst, term)
                expected.append(rule.name)
                idle = 0
            except NotApplicable:
                idle += 1
            i += 1
        assert engine_rules == expected

    def test_scan_never_mutates_the_calculation(self, store, golden_args):
        from stepcalc.interpreter import _Host
        from stepcalc.program import scan_to_next_tactic
        session = open_session(store, ["differentiate", "function"], "differentiate",
                               golden_args)
        session.do_next()
        frame = session.frames[-1]
        before = dumps(calc_to_dict(session.calc))
        scan_to_next_tactic(frame.method.program, frame.state, _Host(session, frame))
        assert dumps(calc_to_dict(session.calc)) == before


class TestInputTactic:
    def _session_mid_run(self, store, golden_args):
        session = open_session(store, ["differentiate", "function"], "differentiate",
                               golden_args)
        session.do_next()  # Take
        session.do_next()  # diff_sum
        return session

    def test_exactly_proposed_tactic_is_located(self, store, golden_args):
        session = self._session_mid_run(store, golden_args)
        clone = open_session(store, ["differentiate", "function"], "differentiate",
                             dict(golden_args))
        clone.do_next(), clone.do_next()
        proposed = clone.do_next()  # what the interpreter would do next
        out = session.input_tactic(proposed.tactic)
        assert isinstance(out, Located)
        assert out.tactic == proposed.tactic
        assert render_term(out.formula) == render_term(proposed.formula)

    def test_out_of_order_rule_is_located_through_or(self, store, golden_args, P):
        # the interpreter would pick diff_product here; diff_sin is still
        # reachable through the OR/REPEAT fabric
        session = self._session_mid_run(store, golden_args)
        tactic = prog.RewriteInst((("bdv", var("alpha")),), "diff_sin")
        with pytest.raises(NotApplicableInput):
            # no sin(alpha) redex yet right after diff_sum? ensure premise:
            # step once more so d_d(alpha, sin(alpha)) exists
            session.input_tactic(prog.RewriteInst((("bdv", var("alpha")),), "diff_var"))
        session.do_next()  # diff_product exposes d_d(alpha, cos(alpha)) etc.
        session.do_next()  # diff_cos
        session.do_next()  # diff_product -> introduces d_d(alpha, sin(alpha))
        before_entries = len(session.calc.entries)
        out = session.input_tactic(tactic)
        assert isinstance(out, Located)
        # the user-visible configuration changed exactly once: one tactic
        # entry plus one formula entry
        assert len(session.calc.entries) == before_entries + 2
        after = session.do_next()
        assert isinstance(after, Stepped)  # interpretation resumed

    def test_foreign_rule_is_helpless(self, store, golden_args):
        session = self._session_mid_run(store, golden_args)
        # norm_diff_product is a real theory rule applicable to the current
        # formula, but the program never mentions it (it only ever uses the
        # schematic diff_product through Rewrite_Inst)
        tactic = prog.Rewrite("norm_diff_product")
        before_entries = len(session.calc.entries)
        out = session.input_tactic(tactic)
        assert isinstance(out, Helpless)
        assert len(session.calc.entries) == before_entries + 2
        assert session.detached

    def test_detached_do_next_is_stuck_until_backtrack(self, store, golden_args):
        session = self._session_mid_run(store, golden_args)
        session.input_tactic(prog.Rewrite("norm_diff_product"))
        out = session.do_next()
        assert isinstance(out, Stuck)
        session.backtrack(len(session.step_log) - 2)  # before the helpless step
        out = session.do_next()
        assert isinstance(out, Stepped)
        assert not session.detached

    def test_inapplicable_input_rejected_before_search(self, store, golden_args):
        session = self._session_mid_run(store, golden_args)
        before = dumps(session_to_dict(session, "h"))
        with pytest.raises(NotApplicableInput):
            session.input_tactic(prog.RewriteInst((("bdv", var("alpha")),), "diff_fraction"))
        assert dumps(session_to_dict(session, "h")) == before


class TestInputFormula:
    def _session_mid_run(self, store, golden_args):
        session = open_session(store, ["differentiate", "function"], "differentiate",
                               golden_args)
        for _ in range(4):
            session.do_next()
        return session

    def test_variant_with_branch_resolved_ahead_derives(self, store, golden_args, P):
        session = self._session_mid_run(store, golden_args)
        # acceptable mid-differentiation: normal-form equal to the state
        target = P("8*r^2*((cos(alpha))^2 - (sin(alpha))^2 - sin(alpha)*cos(alpha))")
        out = session.input_formula(target)
        assert isinstance(out, Derived)
        entry = session.calc.entries[-1]
        assert isinstance(entry, FormulaEntry)
        assert entry.justification == "derived"
        assert entry.term == target

    def test_fresh_session_derivation_commits_internal_steps(self, store, golden_args, P):
        # before the Take there is no formula at all, so deriving the final
        # value forces a nonempty internal run committed as one entry
        session = open_session(store, ["differentiate", "function"], "differentiate",
                               golden_args)
        target = P("8*r^2*((cos(alpha))^2 - (sin(alpha))^2 - sin(alpha)*cos(alpha))")
        out = session.input_formula(target)
        assert isinstance(out, Derived)
        assert out.steps
        assert isinstance(out.steps[0][0], prog.Take)
        resumed = session.auto_complete()
        assert isinstance(resumed, Finished)

    def test_current_formula_verbatim_derives_with_empty_trace(self, store, golden_args):
        session = self._session_mid_run(store, golden_args)
        current = session.current_subcalc().current_formula()
        out = session.input_formula(current)
        assert isinstance(out, Derived)
        assert out.steps == ()

    def test_unrelated_formula_not_derivable_and_state_identical(self, store, golden_args, P):
        session = self._session_mid_run(store, golden_args)
        before = dumps(session_to_dict(session, "h"))
        out = session.input_formula(P("sin(alpha) + 1"))
        assert isinstance(out, NotDerivable)
        assert dumps(session_to_dict(session, "h")) == before

    def test_derivation_resumes_interpretation(self, store, golden_args, P):
        session = self._session_mid_run(store, golden_args)
        target = P("8*r^2*((cos(alpha))^2 - (sin(alpha))^2 - sin(alpha)*cos(alpha))")
        session.input_formula(target)
        out = session.auto_complete()
        assert isinstance(out, Finished)

    def test_approximation_is_never_derivable(self, store, golden_args, P):
        session = self._session_mid_run(store, golden_args)
        assert isinstance(session.input_formula(P("u ~ 0.5")), NotDerivable)


class TestAutoComplete:
    def test_fresh_golden_session(self, store, golden_args, simplifier, P):
        session = open_session(store, ["differentiate", "function"], "differentiate",
                               golden_args)
        out = session.auto_complete()
        assert isinstance(out, Finished)
        name, value = out.result.equations[0]
        assert name == "f'"
        assert equal_modulo(
            simplifier, value,
            P("8*r^2*((cos(alpha))^2 - (sin(alpha))^2 - sin(alpha)*cos(alpha))")) == "Equal"

    def test_idempotent_on_finished_session(self, store, golden_args):
        session = open_session(store, ["differentiate", "function"], "differentiate",
                               golden_args)
        first = session.auto_complete()
        again = session.auto_complete()
        assert isinstance(again, Finished)
        assert again.result.equations == first.result.equations

    def test_max_with_stub_submethods(self, store, max_args):
        session = open_session(store, ["maximum_by", "calculus"], "maximize", max_args)
        out = session.auto_complete()
        assert isinstance(out, Finished)
        assert [n for n, _ in out.result.equations] == ["u", "v", "A"]

    def test_frame_depth_tracks_subproblem_nesting(self, store, max_args):
        session = open_session(store, ["maximum_by", "calculus"], "maximize", max_args)
        while session.frames:
            for depth, frame in enumerate(session.frames):
                assert len(frame.calc_pos) == depth
            out = session.do_next()
            if isinstance(out, (Finished, Stuck)):
                break


class TestBacktrack:
    def test_replay_equals_fresh_run(self, store, golden_args):
        session = open_session(store, ["differentiate", "function"], "differentiate",
                               dict(golden_args), session_id="bt")
        session.do_next()  # the Take
        take_index = len(session.step_log) - 1
        first = session.auto_complete()
        session.backtrack(take_index)
        second = session.auto_complete()
        assert isinstance(second, Finished)
        assert second.result.equations == first.result.equations

    def test_backtrack_to_current_position_is_noop(self, store, golden_args):
        session = open_session(store, ["differentiate", "function"], "differentiate",
                               golden_args)
        session.do_next()
        before = dumps(calc_to_dict(session.calc))
        session.backtrack(len(session.step_log) - 1)
        assert dumps(calc_to_dict(session.calc)) == before

    def test_unknown_position(self, store, golden_args):
        session = open_session(store, ["differentiate", "function"], "differentiate",
                               golden_args)
        with pytest.raises(UnknownPosition):
            session.backtrack(99)

    def test_abandoned_branch_stays_in_log(self, store, golden_args):
        session = open_session(store, ["differentiate", "function"], "differentiate",
                               golden_args)
        session.do_next()
        session.do_next()
        n = len(session.step_log)
        session.backtrack(1)
        assert len(session.step_log) == n + 1  # old records retained, one added


class TestInspect:
    def test_context_after_differentiate_close_has_the_export(self, store, max_args, P):
        session = open_session(store, ["maximum_by", "calculus"], "maximize", max_args)
        session.auto_complete()
        facts = session.inspect_context(())
        derivative_facts = [f for f in facts if f["term"].startswith("f' =")]
        assert derivative_facts and derivative_facts[0]["origin"] == "value_export"

    def test_trace_of_a_take_is_empty(self, store, golden_args):
        session = open_session(store, ["differentiate", "function"], "differentiate",
                               golden_args)
        out = session.do_next()
        assert session.inspect_trace(out.position) == []

    def test_trace_of_rewrite_set_unfolds(self, store, golden_args):
        session = open_session(store, ["differentiate", "function"], "differentiate",
                               golden_args)
        outcomes = drive(session)
        set_steps = [o for o in outcomes
                     if isinstance(o, Stepped) and isinstance(o.tactic, prog.RewriteSet)]
        steps = session.inspect_trace(set_steps[0].position)
        assert steps and all("rule" in s for s in steps)

    def test_knowledge_behind_a_rewrite(self, store, golden_args):
        session = open_session(store, ["differentiate", "function"], "differentiate",
                               golden_args)
        info = session.inspect_knowledge(prog.Rewrite("diff_sum"))
        assert info["kind"] == "rule"
        assert info["theory"] == "Reals"
        assert "d_d(bdv, u - v)" in info["text"]


class TestCorrectnessObligation:
    """Every bundled (specification, method) pair completes to an
    extractable result under pure do_next iteration."""

    def fixtures(self, store, P, max_args, golden_args):
        return {
            "differentiate": (["differentiate", "function"], golden_args),
            "maximize": (["maximum_by", "calculus"], max_args),
            "maximum_on_interval": (["on_interval", "max", "argument"], {
                "fterm": P("A_tilde = 8*r^2*sin(alpha)*cos(alpha) - 4*r^2*sin(alpha)^2"),
                "fvar": var("alpha"),
                "fival": P("interval_open(0, pi/2)"),
            }),
            "make_fun": (["make", "diffable", "function"], {
                "fmax": var("A"), "fvar": var("alpha"),
                "frels": P("[A = 2*u*v - u^2]"), "fival": P("interval_open(0, pi/2)"),
            }),
            "solve_goniometric": (["on_interval", "goniometric", "equation"], {
                "gequ": P("cos(2*alpha) = sin(2*alpha)"), "gival": P("interval_open(0, pi/2)"),
            }),
            "find_values": (["tool", "find_values"], {
                "vmax": var("A"), "vfun": P("sin(alpha)"), "vvar": var("alpha"),
                "vval": var("A"), "vrels": P("[u/2 = r*sin(alpha)]"), "verr": P("0.01"),
            }),
        }

    def test_every_pair_completes(self, store, P, max_args, golden_args):
        for method, (spec_path, args) in self.fixtures(store, P, max_args, golden_args).items():
            started = time.time()
            session = open_session(store, spec_path, method, dict(args))
            out = session.auto_complete()
            elapsed = time.time() - started
            assert isinstance(out, Finished), (method, out)
            assert session.calc.status == "solved"
            assert elapsed < 2.0, (method, elapsed)
