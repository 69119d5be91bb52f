"""HTTP JSON API and on-disk session persistence.

Every endpoint answers one envelope: {"ok": true, "payload": ...} or
{"ok": false, "error": {"code", "message", "position"?}}. Terms travel as
ascii-grammar strings plus display strings. Sessions persist as one JSON
file each; a knowledge-store hash guards resumption after edits.
"""

from __future__ import annotations

import os
import threading
from pathlib import Path
from typing import Any, Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import program as prog
from . import serialize
from .calculation import (
    Calculation,
    FormulaEntry,
    SubCalc,
    TacticEntry,
    extract_result,
    NoResult,
    subcalc_at,
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
    Session,
    Stepped,
    Stuck,
    UnknownPosition,
    open_session,
)
from .knowledge import KnowledgeStore, load_knowledge
from .program import pretty_program
from .rewrite import Rule
from .terms import ParseError, Term, parse_term, render_term


class ServiceError(Exception):
    def __init__(self, code: str, message: str, status: int = 400, position: Optional[str] = None):
        super().__init__(message)
        self.code = code
        self.message = message
        self.status = status
        self.position = position


class NotFound(ServiceError):
    def __init__(self, message: str):
        super().__init__("not_found", message, status=404)


class StoreHashMismatch(ServiceError):
    def __init__(self):
        super().__init__("store_hash_mismatch",
                         "session was created against a different knowledge store", status=409)


class CorruptRecord(ServiceError):
    def __init__(self, message: str):
        super().__init__("corrupt_record", message, status=500)


# ---------------------------------------------------------------------------
# Display form of calculations and outcomes
# ---------------------------------------------------------------------------


def _pos_str(pos: tuple[int, ...]) -> str:
    return ".".join(str(i) for i in pos)


def parse_pos(text: str) -> tuple[int, ...]:
    if text in ("", "root"):
        return ()
    try:
        return tuple(int(p) for p in text.split("."))
    except ValueError:
        raise ServiceError("bad_position", f"malformed position {text!r}") from None


def calc_display(calc: Calculation, unfold: set[tuple[int, ...]], prefix: tuple[int, ...] = ()) -> dict:
    entries = []
    for i, entry in enumerate(calc.entries):
        pos = prefix + (i,)
        if isinstance(entry, TacticEntry):
            entries.append({"kind": "tactic", "pos": _pos_str(pos),
                            "text": prog._pp_tactic(entry.tactic),
                            "tactic": serialize.tactic_to_dict(entry.tactic)})
        elif isinstance(entry, FormulaEntry):
            entries.append({
                "kind": "formula", "pos": _pos_str(pos), "marker": entry.marker,
                "ascii": render_term(entry.term), "unicode": render_term(entry.term, "unicode"),
                "justification": entry.justification,
                "has_trace": bool(entry.trace and entry.trace.steps) or bool(entry.derivation),
            })
        else:
            collapsed = entry.collapsed and pos not in unfold
            node: dict[str, Any] = {"kind": "subcalc", "pos": _pos_str(pos),
                                    "spec": list(entry.spec_path), "collapsed": collapsed}
            if not collapsed:
                node["entries"] = calc_display(entry.calc, unfold, pos)["entries"]
            entries.append(node)
    out: dict[str, Any] = {"spec": list(calc.spec.path), "status": calc.status, "entries": entries}
    if not prefix and calc.status == "solved":
        try:
            result = extract_result(calc)
            out["result"] = [{"name": n, "ascii": render_term(t),
                              "unicode": render_term(t, "unicode")} for n, t in result.equations]
        except NoResult:
            out["result"] = None
    return out


def outcome_display(outcome) -> dict:
    if isinstance(outcome, Stepped):
        return {"kind": "Stepped", "tactic": serialize.tactic_to_dict(outcome.tactic),
                "tactic_text": prog._pp_tactic(outcome.tactic),
                "formula": _formula_pair(outcome.formula), "pos": _pos_str(outcome.position)}
    if isinstance(outcome, Located):
        return {"kind": "Located", "tactic": serialize.tactic_to_dict(outcome.tactic),
                "tactic_text": prog._pp_tactic(outcome.tactic),
                "formula": _formula_pair(outcome.formula), "pos": _pos_str(outcome.position)}
    if isinstance(outcome, Helpless):
        return {"kind": "Helpless", "formula": _formula_pair(outcome.formula),
                "pos": _pos_str(outcome.position)}
    if isinstance(outcome, Derived):
        return {"kind": "Derived", "formula": _formula_pair(outcome.formula),
                "steps": len(outcome.steps), "pos": _pos_str(outcome.position)}
    if isinstance(outcome, NotDerivable):
        return {"kind": "NotDerivable"}
    if isinstance(outcome, Finished):
        return {"kind": "Finished",
                "result": [{"name": n, "ascii": render_term(t),
                            "unicode": render_term(t, "unicode")}
                           for n, t in outcome.result.equations]}
    if isinstance(outcome, Stuck):
        return {"kind": "Stuck", "reason": outcome.reason}
    raise AssertionError(outcome)


def _formula_pair(t: Optional[Term]) -> Optional[dict]:
    if t is None:
        return None
    return {"ascii": render_term(t), "unicode": render_term(t, "unicode")}


# ---------------------------------------------------------------------------
# Session registry with per-session serialization and JSON-file persistence
# ---------------------------------------------------------------------------


class SessionManager:
    def __init__(self, store: KnowledgeStore, data_dir: Optional[Path] = None):
        self.store = store
        self.data_dir = Path(data_dir) if data_dir else None
        if self.data_dir:
            self.data_dir.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def lock(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(session_id, threading.Lock())

    def create(self, spec_path, method, args) -> Session:
        session = open_session(self.store, spec_path, method, args)
        with self._registry_lock:
            self._sessions[session.id] = session
        self.persist(session)
        return session

    def get(self, session_id: str) -> Session:
        with self._registry_lock:
            if session_id in self._sessions:
                return self._sessions[session_id]
        session = self.load(session_id)
        with self._registry_lock:
            self._sessions.setdefault(session_id, session)
        return session

    def persist(self, session: Session) -> None:
        if self.data_dir is None:
            return
        record = serialize.session_to_dict(session, self.store.source_hash)
        payload = serialize.dumps(record)
        final = self.data_dir / f"{session.id}.json"
        tmp = final.with_suffix(".json.tmp")
        tmp.write_text(payload)
        os.replace(tmp, final)

    def load(self, session_id: str) -> Session:
        if self.data_dir is None:
            raise NotFound(f"no session {session_id}")
        path = self.data_dir / f"{session_id}.json"
        if not path.exists():
            raise NotFound(f"no session {session_id}")
        import json
        try:
            record = json.loads(path.read_text())
        except json.JSONDecodeError as err:
            raise CorruptRecord(f"session {session_id}: {err}") from err
        if record.get("store_hash") != self.store.source_hash:
            raise StoreHashMismatch()
        try:
            return serialize.session_from_dict(record, self.store)
        except (serialize.DeserializeError, ParseError, KeyError) as err:
            raise CorruptRecord(f"session {session_id}: {err}") from err

    def flush_all(self) -> None:
        with self._registry_lock:
            sessions = list(self._sessions.values())
        for s in sessions:
            self.persist(s)


# ---------------------------------------------------------------------------
# The FastAPI application
# ---------------------------------------------------------------------------


def _ok(payload) -> JSONResponse:
    return JSONResponse({"ok": True, "payload": payload})


def _err(code: str, message: str, status: int = 400, position: Optional[str] = None) -> JSONResponse:
    error: dict[str, Any] = {"code": code, "message": message}
    if position is not None:
        error["position"] = position
    return JSONResponse({"ok": False, "error": error}, status_code=status)


def create_app(knowledge_dir: str | Path, data_dir: Optional[str | Path] = None,
               static_dir: Optional[str | Path] = None) -> FastAPI:
    store = load_knowledge(knowledge_dir)
    manager = SessionManager(store, Path(data_dir) if data_dir else None)
    app = FastAPI(title="stepcalc", docs_url=None, redoc_url=None)
    app.state.manager = manager
    app.state.store = store
    arities = store.arity_table()

    def term_of(text: str) -> Term:
        return parse_term(text, arities)

    @app.exception_handler(ServiceError)
    async def _service_error(_req: Request, exc: ServiceError):
        return _err(exc.code, exc.message, exc.status, exc.position)

    @app.exception_handler(Exception)
    async def _internal_error(_req: Request, exc: Exception):
        if isinstance(exc, ServiceError):
            return _err(exc.code, exc.message, exc.status, exc.position)
        return _err("internal", f"{type(exc).__name__}: {exc}", 500)

    @app.post("/sessions")
    async def create_session(body: dict):
        spec_path = body.get("spec")
        method = body.get("method")
        raw_args = body.get("args", {})
        if not isinstance(spec_path, list) or not isinstance(method, str):
            return _err("bad_request", "body needs spec (list) and method (string)")
        try:
            args = {name: term_of(text) for name, text in raw_args.items()}
            session = manager.create(spec_path, method, args)
        except ParseError as err:
            return _err("parse_error", str(err), position=str(err.offset))
        except InterpreterError as err:
            return _err("bad_request", str(err))
        except Exception as err:
            return _err("bad_request", f"{type(err).__name__}: {err}")
        return _ok({"id": session.id, "calc": calc_display(session.calc, set())})

    @app.get("/sessions/{session_id}/calc")
    async def get_calc(session_id: str, unfold: str = ""):
        session = manager.get(session_id)
        folds = {parse_pos(p) for p in unfold.split(",") if p != ""}
        return _ok(calc_display(session.calc, folds))

    @app.post("/sessions/{session_id}/step")
    async def step(session_id: str, body: dict):
        session = manager.get(session_id)
        kind = body.get("kind")
        with manager.lock(session_id):
            try:
                if kind == "do_next":
                    outcome = session.do_next()
                elif kind == "tactic":
                    if "text" in body:
                        tactic = prog.parse_tactic(body["text"], arities)
                    else:
                        tactic = serialize.tactic_from_dict(body.get("tactic", {}), arities)
                    tactic = prog.instantiate_tactic(tactic, {})
                    outcome = session.input_tactic(tactic)
                elif kind == "formula":
                    formula = term_of(body.get("text", ""))
                    outcome = session.input_formula(formula)
                else:
                    return _err("bad_request", f"unknown step kind {kind!r}")
            except ParseError as err:
                return _err("parse_error", str(err), position=str(err.offset))
            except NotApplicableInput as err:
                return _err("not_applicable", str(err))
            except InvalidState as err:
                return _err("invalid_state", str(err), status=409)
            manager.persist(session)
            return _ok({"outcome": outcome_display(outcome),
                        "calc": calc_display(session.calc, set())})

    @app.post("/sessions/{session_id}/backtrack")
    async def backtrack(session_id: str, body: dict):
        session = manager.get(session_id)
        with manager.lock(session_id):
            try:
                session.backtrack(int(body.get("pos", -1)))
            except (UnknownPosition, ValueError) as err:
                return _err("unknown_position", str(err), status=404)
            manager.persist(session)
            return _ok({"calc": calc_display(session.calc, set()),
                        "log_length": len(session.step_log)})

    @app.get("/sessions/{session_id}/context")
    async def get_context(session_id: str, pos: str = ""):
        session = manager.get(session_id)
        try:
            facts = session.inspect_context(parse_pos(pos))
        except Exception as err:
            return _err("unknown_position", str(err), status=404)
        return _ok({"facts": facts})

    @app.get("/sessions/{session_id}/trace")
    async def get_trace(session_id: str, pos: str = ""):
        session = manager.get(session_id)
        try:
            steps = session.inspect_trace(parse_pos(pos))
        except Exception as err:
            return _err("unknown_position", str(err), status=404)
        return _ok({"steps": steps})

    @app.get("/sessions/{session_id}/log")
    async def get_log(session_id: str):
        session = manager.get(session_id)
        return _ok({"log": [{"index": i, "trigger": r.trigger, "summary": r.summary}
                            for i, r in enumerate(session.step_log)]})

    @app.get("/knowledge/specs")
    async def list_specs():
        return _ok({"specs": [list(p) for p in sorted(store.specs)]})

    @app.get("/knowledge/specs/{dotted}")
    async def get_spec(dotted: str):
        spec = store.lookup_specification(dotted.split("."))
        if spec is None:
            raise NotFound(f"no specification {dotted}")
        return _ok({
            "path": list(spec.path),
            "inputs": [[n, a] for n, a in spec.inputs],
            "precond": [render_term(c) for c in spec.precond],
            "outputs": [[n, a] for n, a in spec.outputs],
            "postcond": render_term(spec.postcond) if spec.postcond else None,
            "props": [render_term(p) for p in spec.props],
            "props_vars": list(spec.props_vars),
        })

    @app.get("/knowledge/theories")
    async def list_theories():
        return _ok({"theories": sorted(store.theories)})

    @app.get("/knowledge/theories/{name}")
    async def get_theory(name: str):
        theory = store.theories.get(name)
        if theory is None:
            raise NotFound(f"no theory {name}")
        return _ok({
            "name": theory.name, "parent": theory.parent,
            "rules": [_rule_text(r) for r in theory.rules.values()],
            "rule_sets": {n: [r.name for r in rs.rules] for n, rs in theory.rule_sets.items()},
            "symbols": theory.declared_symbols,
        })

    @app.get("/knowledge/methods")
    async def list_methods():
        return _ok({"methods": sorted(store.methods)})

    @app.get("/knowledge/methods/{name}")
    async def get_method(name: str):
        method = store.lookup_method(name)
        if method is None:
            raise NotFound(f"no method {name}")
        return _ok({
            "name": method.name, "theory": method.theory, "spec": list(method.spec_path),
            "kind": "stub" if method.is_stub else "program",
            "program": pretty_program(method.program) if method.program else None,
            "stub": [[s.kind, render_term(s.template)] for s in method.stub],
        })

    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app


def _rule_text(r: Rule) -> str:
    text = f"{r.name}: {render_term(r.lhs)} = {render_term(r.rhs)}"
    if r.conditions:
        text += " if " + "; ".join(render_term(c) for c in r.conditions)
    if r.schematic:
        text += " schematic " + ", ".join(sorted(r.schematic))
    return text
