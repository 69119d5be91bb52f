"""Command line interface: the REPL and the HTTP service runner."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from . import program as prog
from .calculation import (
    Calculation,
    FormulaEntry,
    NoResult,
    SubCalc,
    TacticEntry,
    extract_result,
)
from .interpreter import (
    Derived,
    Finished,
    Helpless,
    InterpreterError,
    InvalidState,
    Located,
    NotApplicableInput,
    NotDerivable,
    Stepped,
    Stuck,
    UnknownPosition,
    open_session,
)
from .knowledge import LoadError, load_knowledge
from .rewrite import NotApplicable
from .terms import ParseError, parse_term, render_term

DEFAULT_KNOWLEDGE = Path(__file__).parent / "knowledge"

WIDTH = 110


def render_worksheet(calc: Calculation, unfold: set[tuple[int, ...]],
                     prefix: tuple[int, ...] = (), depth: int = 0) -> list[str]:
    """The two-margin layout: formulas left (indented by depth), tactics right."""
    lines: list[str] = []
    for i, entry in enumerate(calc.entries):
        pos = prefix + (i,)
        label = ".".join(str(p) for p in pos)
        if isinstance(entry, TacticEntry):
            text = prog._pp_tactic(entry.tactic)
            lines.append(" " * max(2, WIDTH - len(text)) + text)
        elif isinstance(entry, FormulaEntry):
            body = render_term(entry.term, "unicode")
            lines.append(f"{label:<8}{'  ' * depth}{entry.marker} {body}")
        elif isinstance(entry, SubCalc):
            header = f"{label:<8}{'  ' * depth}• Problem [{', '.join(entry.spec_path)}]"
            lines.append(header)
            if pos in unfold or not entry.collapsed:
                lines.extend(render_worksheet(entry.calc, unfold, pos, depth + 1))
    return lines


def _print_worksheet(session, unfold) -> None:
    click.echo("-" * WIDTH)
    for line in render_worksheet(session.calc, unfold):
        click.echo(line)
    click.echo("-" * WIDTH)


def _describe(outcome) -> str:
    if isinstance(outcome, Stepped):
        return f"stepped: {prog._pp_tactic(outcome.tactic)}"
    if isinstance(outcome, Located):
        return f"located: {prog._pp_tactic(outcome.tactic)} (interpretation resumes after it)"
    if isinstance(outcome, Helpless):
        return ("helpless: the step is kept but no matching program tactic was found; "
                "backtrack (`back <n>`) or input a derivable formula")
    if isinstance(outcome, Derived):
        return f"derived ({len(outcome.steps)} steps)"
    if isinstance(outcome, NotDerivable):
        return "not derivable; calculation unchanged"
    if isinstance(outcome, Finished):
        eqs = ", ".join(f"{n} = {render_term(t, 'unicode')}" for n, t in outcome.result.equations)
        return f"finished: [ {eqs} ]"
    if isinstance(outcome, Stuck):
        return f"stuck: {outcome.reason}"
    return str(outcome)


USAGE = """commands:
  next                 ask the interpreter for the next step
  formula <text>       input a formula; checked by derivation
  tactic <text>        input a tactic, e.g. tactic Rewrite_Inst [(bdv, alpha)] diff_sin
  back <n>             backtrack to step n of the log (see `log`)
  ctx                  show the current context facts with origins
  trace <pos>          show the rewrite steps behind the entry at <pos>
  unfold <pos>         toggle folding of the subproblem at <pos>
  log                  list the step log
  result               show the extracted result, if any
  quit                 leave"""


@click.group()
def main() -> None:
    """Stepwise calculations from tactic programs, with checked free input."""


@main.command()
@click.option("--knowledge", envvar="STEPCALC_KNOWLEDGE", default=str(DEFAULT_KNOWLEDGE),
              show_default=True, help="knowledge directory")
@click.option("--spec", "spec_dotted", required=True, help="specification path, dot separated")
@click.option("--method", required=True, help="method name")
@click.option("--arg", "arg_pairs", multiple=True, metavar="NAME=TERM",
              help="session argument (repeatable)")
def repl(knowledge: str, spec_dotted: str, method: str, arg_pairs: tuple[str, ...]) -> None:
    """Interactive session on stdin/stdout."""
    try:
        store = load_knowledge(knowledge)
    except LoadError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(2)
    arities = store.arity_table()
    try:
        args = {}
        for pair in arg_pairs:
            name, _, text = pair.partition("=")
            if not _:
                raise ParseError(f"malformed --arg {pair!r}, expected NAME=TERM", 0)
            args[name.strip()] = parse_term(text.strip(), arities)
        session = open_session(store, spec_dotted.split("."), method, args)
    except (ParseError, InterpreterError) as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(1)

    unfold: set[tuple[int, ...]] = set()
    click.echo(f"session {session.id[:8]} on [{', '.join(spec_dotted.split('.'))}] via {method}")
    click.echo(USAGE)
    _print_worksheet(session, unfold)

    while True:
        try:
            line = input("> ").strip()
        except EOFError:
            break
        if not line:
            continue
        cmd, _, rest = line.partition(" ")
        rest = rest.strip()
        try:
            if cmd == "quit":
                break
            elif cmd == "next":
                outcome = session.do_next()
                click.echo(_describe(outcome))
                _print_worksheet(session, unfold)
            elif cmd == "formula":
                outcome = session.input_formula(parse_term(rest, arities))
                click.echo(_describe(outcome))
                if isinstance(outcome, Derived):
                    _print_worksheet(session, unfold)
            elif cmd == "tactic":
                tactic = prog.instantiate_tactic(prog.parse_tactic(rest, arities), {})
                outcome = session.input_tactic(tactic)
                click.echo(_describe(outcome))
                _print_worksheet(session, unfold)
            elif cmd == "back":
                session.backtrack(int(rest))
                click.echo(f"backtracked to step {rest}")
                _print_worksheet(session, unfold)
            elif cmd == "ctx":
                for f in session.current_subcalc().context.iter_facts():
                    click.echo(f"  [{f.origin:<22}] {render_term(f.term, 'unicode')}")
            elif cmd == "trace":
                pos = tuple(int(p) for p in rest.split(".")) if rest else ()
                for step in session.inspect_trace(pos):
                    if "rule" in step:
                        click.echo(f"  {step['rule']:<24} -> {step['result']}")
                    else:
                        click.echo(f"  {step['tactic']:<40} -> {step['formula']}")
            elif cmd == "unfold":
                pos = tuple(int(p) for p in rest.split("."))
                unfold.symmetric_difference_update({pos})
                _print_worksheet(session, unfold)
            elif cmd == "log":
                for i, record in enumerate(session.step_log):
                    click.echo(f"  {i:>3}  {record.trigger:<14} {record.summary}")
            elif cmd == "result":
                try:
                    result = extract_result(session.calc)
                    for n, t in result.equations:
                        click.echo(f"  {n} = {render_term(t, 'unicode')}")
                except NoResult as err:
                    click.echo(f"  not solved: {err}")
            else:
                click.echo(USAGE)
        except (ParseError, NotApplicableInput, InvalidState, UnknownPosition,
                NotApplicable, InterpreterError, ValueError) as err:
            click.echo(f"error: {err}")
    click.echo("bye")


@main.command()
@click.option("--knowledge", envvar="STEPCALC_KNOWLEDGE", default=str(DEFAULT_KNOWLEDGE),
              show_default=True, help="knowledge directory")
@click.option("--port", envvar="STEPCALC_PORT", default=8634, show_default=True, type=int)
@click.option("--data", envvar="STEPCALC_DATA", default=None, help="session persistence directory")
@click.option("--static", "static_dir", default=None, help="built worksheet UI to serve")
@click.option("--host", default="127.0.0.1", show_default=True)
def serve(knowledge: str, port: int, data: str | None, static_dir: str | None, host: str) -> None:
    """Run the JSON API service."""
    import uvicorn

    from .service import create_app

    try:
        app = create_app(knowledge, data, static_dir)
    except LoadError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(1)

    @app.on_event("shutdown")
    async def _flush() -> None:
        app.state.manager.flush_all()

    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
