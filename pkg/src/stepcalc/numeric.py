"""Floating-point evaluation of terms.

Deliberately outside the exact term core: used by sampling oracles in the
test suite and by the explicit approximation tactic. Derivative nodes are
evaluated by complex-step differentiation, which has no cancellation error.
"""

from __future__ import annotations

import cmath
from typing import Mapping, Union

from .terms import App, Num, Term, Var

_STEP = 1e-30  # complex-step size; error is O(step^2)


class NumericError(Exception):
    pass


Value = Union[complex, bool]


def _as_real(z: Value, what: str) -> float:
    if isinstance(z, bool):
        raise NumericError(f"{what}: boolean where a number was expected")
    if abs(z.imag) > 1e-6 * max(1.0, abs(z.real)):
        raise NumericError(f"{what}: unexpected imaginary part {z.imag}")
    return z.real


def eval_value(t: Term, env: Mapping[str, float]) -> Value:
    """Evaluate a term to a complex number or a boolean."""
    if isinstance(t, Num):
        return complex(t.value)
    if isinstance(t, Var):
        if t.name not in env:
            raise NumericError(f"unbound variable {t.name}")
        return complex(env[t.name])
    head, args = t.head, t.args
    if head == "pi":
        return complex(cmath.pi)
    if head == "true":
        return True
    if head == "false":
        return False
    if head == "d_d":
        v, body = args
        if not isinstance(v, Var):
            raise NumericError("derivative with a non-variable binder")
        if any(isinstance(s, App) and s.head == "d_d" for s in _proper_subterms(body)):
            raise NumericError("nested derivative")
        if v.name not in env:
            raise NumericError(f"unbound variable {v.name}")
        shifted = dict(env)
        shifted[v.name] = env[v.name] + 1j * _STEP  # type: ignore[assignment]
        z = _eval_complex(body, shifted)
        return complex(z.imag / _STEP)
    vals = [eval_value(a, env) for a in args]
    if head == "neg":
        return -_num(vals[0])
    if head == "not":
        return not _bool(vals[0])
    if head == "and":
        return _bool(vals[0]) and _bool(vals[1])
    if head in ("+", "-", "*", "/", "^"):
        x, y = _num(vals[0]), _num(vals[1])
        if head == "+":
            return x + y
        if head == "-":
            return x - y
        if head == "*":
            return x * y
        if head == "/":
            if y == 0:
                raise NumericError("division by zero")
            return x / y
        return x ** y
    if head in ("sin", "cos", "tan", "arctan", "sqrt"):
        fn = {"sin": cmath.sin, "cos": cmath.cos, "tan": cmath.tan,
              "arctan": cmath.atan, "sqrt": cmath.sqrt}[head]
        return fn(_num(vals[0]))
    if head in ("=", "~"):
        x, y = _as_real(vals[0], head), _as_real(vals[1], head)
        return abs(x - y) <= 1e-9 * max(1.0, abs(x), abs(y))
    if head in ("<", "<=", ">", ">="):
        x, y = _as_real(vals[0], head), _as_real(vals[1], head)
        return {"<": x < y, "<=": x <= y, ">": x > y, ">=": x >= y}[head]
    raise NumericError(f"not numerically evaluable: {head}")


def _proper_subterms(t: Term):
    if isinstance(t, App):
        for a in t.args:
            yield a
            yield from _proper_subterms(a)


def _eval_complex(t: Term, env: Mapping[str, complex]) -> complex:
    if isinstance(t, Num):
        return complex(t.value)
    if isinstance(t, Var):
        if t.name not in env:
            raise NumericError(f"unbound variable {t.name}")
        return complex(env[t.name])
    head, args = t.head, t.args
    if head == "pi":
        return complex(cmath.pi)
    vals = [_eval_complex(a, env) for a in args]
    if head == "neg":
        return -vals[0]
    if head == "+":
        return vals[0] + vals[1]
    if head == "-":
        return vals[0] - vals[1]
    if head == "*":
        return vals[0] * vals[1]
    if head == "/":
        return vals[0] / vals[1]
    if head == "^":
        return vals[0] ** vals[1]
    if head in ("sin", "cos", "tan", "arctan", "sqrt"):
        fn = {"sin": cmath.sin, "cos": cmath.cos, "tan": cmath.tan,
              "arctan": cmath.atan, "sqrt": cmath.sqrt}[head]
        return fn(vals[0])
    raise NumericError(f"not complex-evaluable: {head}")


def eval_real(t: Term, env: Mapping[str, float]) -> float:
    """Evaluate to a real number; raises NumericError for booleans."""
    return _as_real(eval_value(t, env), "eval_real")


def eval_bool(t: Term, env: Mapping[str, float]) -> bool:
    v = eval_value(t, env)
    if not isinstance(v, bool):
        raise NumericError("eval_bool: numeric where a boolean was expected")
    return v


def _num(v: Value) -> complex:
    if isinstance(v, bool):
        raise NumericError("boolean where a number was expected")
    return v


def _bool(v: Value) -> bool:
    if not isinstance(v, bool):
        raise NumericError("numeric where a boolean was expected")
    return v
