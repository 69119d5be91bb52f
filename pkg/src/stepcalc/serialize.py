"""Session and calculation (de)serialization.

Terms travel as ascii-grammar strings (the wire format). Serialization is
deterministic: dumps of equal states are byte-identical, which the
persistence layer relies on.
"""

from __future__ import annotations

import json
from typing import Any, Mapping, Optional

from . import program as prog
from .calculation import (
    Calculation,
    Context,
    Fact,
    FormulaEntry,
    SubCalc,
    Tactic,
    TacticEntry,
)
from .interpreter import Frame, LogRecord, Session
from .knowledge import KnowledgeStore
from .program import ProgState
from .rewrite import RewriteTrace, Substitution, TraceStep
from .terms import Term, parse_term, render_term


class DeserializeError(Exception):
    pass


def _t(term: Term) -> str:
    return render_term(term, "ascii")


def tactic_to_dict(t: Tactic) -> dict:
    if isinstance(t, prog.Take):
        return {"kind": "Take", "term": _t(t.term)}
    if isinstance(t, prog.Rewrite):
        return {"kind": "Rewrite", "rule": t.rule}
    if isinstance(t, prog.RewriteInst):
        return {"kind": "Rewrite_Inst", "inst": [[n, _t(v)] for n, v in t.inst], "rule": t.rule}
    if isinstance(t, prog.RewriteSet):
        return {"kind": "Rewrite_Set", "ruleset": t.ruleset}
    if isinstance(t, prog.Subproblem):
        return {"kind": "Subproblem", "theory": t.theory, "spec": list(t.spec),
                "method": t.method, "args": [_t(a) for a in t.args]}
    if isinstance(t, prog.CheckPostcond):
        return {"kind": "Check_Postcond", "spec": list(t.spec)}
    if isinstance(t, prog.Approximate):
        return {"kind": "Approximate", "errbound": _t(t.errbound)}
    raise DeserializeError(f"unknown tactic {t!r}")


def tactic_from_dict(d: Mapping[str, Any], arities: Mapping[str, int]) -> Tactic:
    kind = d.get("kind")
    p = lambda s: parse_term(s, arities)  # noqa: E731
    if kind == "Take":
        return prog.Take(p(d["term"]))
    if kind == "Rewrite":
        return prog.Rewrite(d["rule"])
    if kind == "Rewrite_Inst":
        return prog.RewriteInst(tuple((n, p(v)) for n, v in d["inst"]), d["rule"])
    if kind == "Rewrite_Set":
        return prog.RewriteSet(d["ruleset"])
    if kind == "Subproblem":
        return prog.Subproblem(d["theory"], tuple(d["spec"]), d["method"],
                               tuple(p(a) for a in d["args"]))
    if kind == "Check_Postcond":
        return prog.CheckPostcond(tuple(d["spec"]))
    if kind == "Approximate":
        return prog.Approximate(p(d["errbound"]))
    raise DeserializeError(f"unknown tactic kind {kind!r}")


def _trace_to_dict(trace: Optional[RewriteTrace]) -> Optional[dict]:
    if trace is None:
        return None
    return {
        "start": _t(trace.start),
        "truncated": trace.truncated,
        "steps": [{"path": list(s.path), "rule": s.rule,
                   "subst": {n: _t(v) for n, v in sorted(s.subst.bindings.items())},
                   "assumptions": [_t(a) for a in s.assumptions],
                   "result": _t(s.result)} for s in trace.steps],
    }


def _trace_from_dict(d: Optional[Mapping], arities) -> Optional[RewriteTrace]:
    if d is None:
        return None
    p = lambda s: parse_term(s, arities)  # noqa: E731
    trace = RewriteTrace(start=p(d["start"]), truncated=d["truncated"])
    for s in d["steps"]:
        trace.steps.append(TraceStep(
            tuple(s["path"]), s["rule"],
            Substitution({n: p(v) for n, v in s["subst"].items()}),
            tuple(p(a) for a in s["assumptions"]), p(s["result"])))
    return trace


def calc_to_dict(calc: Calculation) -> dict:
    entries: list[dict] = []
    for entry in calc.entries:
        if isinstance(entry, TacticEntry):
            entries.append({"kind": "tactic", "tactic": tactic_to_dict(entry.tactic)})
        elif isinstance(entry, FormulaEntry):
            entries.append({
                "kind": "formula", "term": _t(entry.term), "marker": entry.marker,
                "justification": entry.justification,
                "trace": _trace_to_dict(entry.trace),
                "derivation": None if entry.derivation is None else
                    [[tactic_to_dict(t), _t(f)] for t, f in entry.derivation],
            })
        else:
            entries.append({"kind": "subcalc", "spec": list(entry.spec_path),
                            "collapsed": entry.collapsed, "calc": calc_to_dict(entry.calc)})
    return {
        "spec": list(calc.spec.path),
        "theory": calc.theory,
        "status": calc.status,
        "inst_outputs": {n: _t(t) for n, t in sorted(calc.inst_outputs.items())},
        "init_args": {n: _t(t) for n, t in sorted(calc.init_args.items())},
        "facts": [[_t(f.term), f.origin] for f in calc.context.facts],
        "entries": entries,
    }


def calc_from_dict(d: Mapping[str, Any], store: KnowledgeStore,
                   parent_context: Optional[Context] = None) -> Calculation:
    arities = store.arity_table()
    p = lambda s: parse_term(s, arities)  # noqa: E731
    spec = store.lookup_specification(d["spec"])
    if spec is None:
        raise DeserializeError(f"record references unknown specification {d['spec']}")
    ctx = Context(parent=parent_context)
    for term_s, origin in d["facts"]:
        ctx.facts.append(Fact(p(term_s), origin))
    calc = Calculation(
        spec=spec, theory=d["theory"], context=ctx,
        inst_outputs={n: p(t) for n, t in d["inst_outputs"].items()},
        init_args={n: p(t) for n, t in d["init_args"].items()},
        status=d["status"])
    for e in d["entries"]:
        if e["kind"] == "tactic":
            calc.entries.append(TacticEntry(tactic_from_dict(e["tactic"], arities)))
        elif e["kind"] == "formula":
            calc.entries.append(FormulaEntry(
                p(e["term"]), e["marker"], e["justification"],
                trace=_trace_from_dict(e["trace"], arities),
                derivation=None if e["derivation"] is None else
                    [(tactic_from_dict(t, arities), p(f)) for t, f in e["derivation"]]))
        elif e["kind"] == "subcalc":
            child = calc_from_dict(e["calc"], store, parent_context=ctx)
            calc.entries.append(SubCalc(tuple(e["spec"]), child, e["collapsed"]))
        else:
            raise DeserializeError(f"unknown entry kind {e['kind']!r}")
    return calc


def _state_to_dict(state: Optional[ProgState]) -> Optional[dict]:
    if state is None:
        return None
    return {
        "env": {n: _t(t) for n, t in sorted(state.env.items())},
        "loc": list(state.loc),
        "started": state.started,
        "value": None if state.value is None else _t(state.value),
        "repeat_counters": [[list(k), v] for k, v in sorted(state.repeat_counters.items())],
    }


def _state_from_dict(d: Optional[Mapping], arities) -> Optional[ProgState]:
    if d is None:
        return None
    p = lambda s: parse_term(s, arities)  # noqa: E731
    return ProgState(
        env={n: p(t) for n, t in d["env"].items()},
        loc=tuple(d["loc"]), started=d["started"],
        value=None if d["value"] is None else p(d["value"]),
        repeat_counters={tuple(k): v for k, v in d["repeat_counters"]})


def _frame_to_dict(frame: Frame) -> dict:
    return {
        "method": frame.method.name,
        "calc_pos": list(frame.calc_pos),
        "state": _state_to_dict(frame.state),
        "stub_queue": [[k, _t(t)] for k, t in frame.stub_queue],
        "stub_binding": {n: _t(t) for n, t in sorted(frame.stub_binding.items())},
    }


def _frame_from_dict(d: Mapping, store: KnowledgeStore) -> Frame:
    arities = store.arity_table()
    p = lambda s: parse_term(s, arities)  # noqa: E731
    method = store.lookup_method(d["method"])
    if method is None:
        raise DeserializeError(f"record references unknown method {d['method']}")
    return Frame(
        method=method, calc_pos=tuple(d["calc_pos"]),
        state=_state_from_dict(d["state"], arities),
        stub_queue=[(k, p(t)) for k, t in d["stub_queue"]],
        stub_binding={n: p(t) for n, t in d["stub_binding"].items()})


def _snapshot_to_dict(snapshot: tuple) -> dict:
    frames, calc, detached = snapshot
    return {"frames": [_frame_to_dict(f) for f in frames],
            "calc": calc_to_dict(calc), "detached": detached}


def _snapshot_from_dict(d: Mapping, store: KnowledgeStore) -> tuple:
    return ([_frame_from_dict(f, store) for f in d["frames"]],
            calc_from_dict(d["calc"], store), d["detached"])


def session_to_dict(session: Session, store_hash: str) -> dict:
    return {
        "version": 1,
        "id": session.id,
        "store_hash": store_hash,
        "detached": session.detached,
        "calc": calc_to_dict(session.calc),
        "frames": [_frame_to_dict(f) for f in session.frames],
        "step_log": [{"trigger": r.trigger, "summary": r.summary,
                      "snapshot": _snapshot_to_dict(r.snapshot)} for r in session.step_log],
    }


def session_from_dict(d: Mapping[str, Any], store: KnowledgeStore) -> Session:
    if d.get("version") != 1:
        raise DeserializeError(f"unsupported record version {d.get('version')!r}")
    session = object.__new__(Session)
    session.id = d["id"]
    session.store = store
    session.calc = calc_from_dict(d["calc"], store)
    session.frames = [_frame_from_dict(f, store) for f in d["frames"]]
    session.detached = d["detached"]
    session.step_log = [
        LogRecord(r["trigger"], r["summary"], _snapshot_from_dict(r["snapshot"], store))
        for r in d["step_log"]]
    return session


def dumps(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
