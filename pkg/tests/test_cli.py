"""CLI: the REPL dialogue, worksheet layout, and error handling."""

from pathlib import Path

from click.testing import CliRunner

from stepcalc.cli import main

GOLDEN = Path(__file__).parent / "golden" / "differentiate_transcript.txt"

DIFF_ARGS = [
    "repl",
    "--spec", "differentiate.function",
    "--method", "differentiate",
    "--arg", "interval=interval_open(0, pi/2)",
    "--arg", "f=8*r^2*sin(alpha)*cos(alpha) - 4*r^2*sin(alpha)^2",
    "--arg", "v=alpha",
]


def run_repl(commands, args=DIFF_ARGS):
    runner = CliRunner()
    return runner.invoke(main, args, input="\n".join(commands) + "\n")


class TestRepl:
    def test_first_next_prints_the_take(self):
        result = run_repl(["next", "quit"])
        assert result.exit_code == 0
        assert "stepped: Take (d_d(alpha" in result.output
        assert "⊢ d/dα (8·r²·sin α·cos α - 4·r²·(sin α)²)" in result.output

    def test_current_formula_derives_with_zero_steps(self):
        result = run_repl(["next", "next",
                           "formula d_d(alpha, 8*r^2*sin(alpha)*cos(alpha))"
                           " - d_d(alpha, 4*r^2*sin(alpha)^2)",
                           "quit"])
        assert result.exit_code == 0
        assert "derived (0 steps)" in result.output

    def test_full_dialogue_matches_golden_transcript(self):
        commands = ["next"] * 12 + [
            "formula 8*(r^2*cos(alpha)^2) + -8*(r^2*cos(alpha)*sin(alpha))"
            " + -8*(r^2*sin(alpha)^2)",
            "result", "quit"]
        result = run_repl(commands)
        assert result.exit_code == 0
        body = "\n".join(result.output.splitlines()[1:]) + "\n"  # session id line varies
        assert body == GOLDEN.read_text()

    def test_formulas_left_tactics_right(self):
        result = run_repl(["next", "next", "quit"])
        lines = result.output.splitlines()
        tactic_lines = [l for l in lines
                        if "Rewrite_Inst [(bdv, alpha)] diff_sum" in l and not l.startswith(">")]
        formula_lines = [l for l in lines if "≡" in l]
        assert tactic_lines and all(l.startswith(" " * 40) for l in tactic_lines)
        assert formula_lines and all(not l.startswith(" ") for l in formula_lines)

    def test_unknown_command_prints_usage_and_continues(self):
        result = run_repl(["frobnicate", "quit"])
        assert result.exit_code == 0
        assert "commands:" in result.output

    def test_engine_errors_render_inline(self):
        result = run_repl(["next", "tactic Rewrite_Inst [(bdv, alpha)] diff_fraction", "quit"])
        assert result.exit_code == 0
        assert "error: no redex for diff_fraction" in result.output

    def test_helpless_tactic_offers_backtrack(self):
        result = run_repl(["next", "next", "tactic Rewrite norm_diff_product",
                           "log", "back 2", "next", "quit"])
        assert result.exit_code == 0
        assert "helpless" in result.output
        assert "backtracked to step 2" in result.output

    def test_unfold_toggles_a_subproblem(self):
        args = [
            "repl", "--spec", "maximum_by.calculus", "--method", "maximize",
            "--arg", "r=r", "--arg", "givens=[r]", "--arg", "max=A",
            "--arg", "finds=[u, v]",
            "--arg", "rels=[A = 2*u*v - u^2, u/2 = r*sin(alpha), v/2 = r*cos(alpha)]",
            "--arg", "var=alpha", "--arg", "interval=interval_open(0, pi/2)",
            "--arg", "errbound=0.001",
        ]
        result = run_repl(["next", "next", "next", "unfold 3", "quit"], args)
        assert result.exit_code == 0
        assert "• Problem [make, diffable, function]" in result.output
        # the unfolded child take appears indented beneath the bullet
        assert "3.1" in result.output

    def test_bad_argument_exits_with_user_error(self):
        runner = CliRunner()
        result = runner.invoke(main, [
            "repl", "--spec", "differentiate.function", "--method", "differentiate",
            "--arg", "f=2 + * 3", "--arg", "v=x", "--arg", "interval=interval_open(0, 1)"])
        assert result.exit_code == 1

    def test_missing_knowledge_dir_exits_nonzero(self):
        runner = CliRunner()
        result = runner.invoke(main, [
            "repl", "--knowledge", "/nonexistent", "--spec", "a.b", "--method", "m"])
        assert result.exit_code == 2
