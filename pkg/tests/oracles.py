"""Independent oracles for the test suite.

These deliberately avoid the engine's own code paths: numeric sampling
for rewrite-rule soundness, finite differences for derivatives, and a
brute-force permutation search for triangular orderings.
"""

from __future__ import annotations

import itertools
import random
from fractions import Fraction
from typing import Optional

from stepcalc.numeric import NumericError, eval_bool, eval_real
from stepcalc.rewrite import Rule, eval_condition
from stepcalc.terms import App, Num, Substitution, Term, Var, free_vars, substitute

X = Var("x")

# every pool expression is positive on (0.1, 1.4), so symbolic exponents
# and square roots stay well defined during sampling
_POOL = [
    X,
    App("^", (X, Num(Fraction(2)))),
    App("sin", (X,)),
    App("cos", (X,)),
    App("+", (X, Num(Fraction(3, 2)))),
    App("*", (Num(Fraction(2)), X)),
    App("sqrt", (X,)),
    Var("y"),
    Num(Fraction(3)),
    Num(Fraction(1, 2)),
]


class SoundnessFailure(AssertionError):
    pass


def _binder_names(t: Term) -> set[str]:
    """Variables used as the bound-variable slot of a derivative node."""
    out: set[str] = set()
    if isinstance(t, App):
        if t.head == "d_d" and isinstance(t.args[0], Var):
            out.add(t.args[0].name)
        for a in t.args:
            out |= _binder_names(a)
    return out


def _instantiate(rule: Rule, rng: random.Random) -> Optional[Substitution]:
    bindings: dict[str, Term] = {}
    binders = _binder_names(rule.lhs) | rule.schematic
    numeral_only = {c.args[0].name for c in rule.conditions
                    if isinstance(c, App) and c.head == "is_num" and isinstance(c.args[0], Var)}
    for name in sorted(binders):
        bindings[name] = X  # binder slots need an actual variable
    for name in sorted(free_vars(rule.lhs) - binders):
        if name in numeral_only:
            bindings[name] = Num(Fraction(rng.randint(1, 9), rng.randint(1, 4)))
        else:
            bindings[name] = rng.choice(_POOL)
    sub = Substitution(bindings)
    # syntactically decidable conditions must not be violated by the draw
    for cond in rule.conditions:
        verdict = eval_condition([], substitute(cond, sub))
        if verdict == "False":
            return None
    return sub


def check_rule_soundness(rule: Rule, n_points: int = 20, rel_tol: float = 1e-9,
                         seed: int = 0) -> None:
    """Sample both rule sides numerically; raises SoundnessFailure on disagreement.

    Points where a generated assumption evaluates false are excluded, per
    the conditional-rewriting contract.
    """
    rng = random.Random(seed ^ hash(rule.name))
    sub = None
    for _ in range(80):
        sub = _instantiate(rule, rng)
        if sub is not None:
            break
    if sub is None:
        raise SoundnessFailure(f"{rule.name}: could not satisfy conditions while sampling")
    lhs = substitute(rule.lhs, sub)
    rhs = substitute(rule.rhs, sub)
    conditions = [substitute(c, sub) for c in rule.conditions]
    names = sorted(free_vars(lhs) | free_vars(rhs))
    checked = 0
    attempts = 0
    while checked < n_points and attempts < n_points * 40:
        attempts += 1
        env = {n: rng.uniform(0.1, 1.4) for n in names}
        try:
            if not all(_cond_holds(c, env) for c in conditions):
                continue
            lv = eval_real(lhs, env)
            rv = eval_real(rhs, env)
        except NumericError:
            continue
        if abs(lv - rv) > rel_tol * max(1.0, abs(lv), abs(rv)):
            raise SoundnessFailure(
                f"{rule.name}: sides differ at {env}: {lv} vs {rv}")
        checked += 1
    if checked < n_points:
        raise SoundnessFailure(f"{rule.name}: only {checked} usable sample points")


def _cond_holds(cond: Term, env) -> bool:
    verdict = eval_condition([], cond)
    if verdict == "True":
        return True
    if verdict == "False":
        return False
    try:
        return eval_bool(cond, env)
    except NumericError:
        return False


def finite_difference(body: Term, var: str, env: dict[str, float], h: float = 1e-6) -> float:
    """Central-difference derivative of body with respect to var at env."""
    hi = dict(env)
    lo = dict(env)
    hi[var] = env[var] + h
    lo[var] = env[var] - h
    return (eval_real(body, hi) - eval_real(body, lo)) / (2 * h)


def check_derivative(body: Term, var: str, claimed: Term, n_points: int = 20,
                     tol: float = 1e-6, seed: int = 7) -> None:
    """Compare a claimed derivative against finite differences of the body."""
    rng = random.Random(seed)
    names = sorted(free_vars(body) | free_vars(claimed) | {var})
    for _ in range(n_points):
        env = {n: rng.uniform(0.2, 1.3) for n in names}
        expected = finite_difference(body, var, env)
        actual = eval_real(claimed, env)
        if abs(expected - actual) > tol * max(1.0, abs(expected), abs(actual)):
            raise SoundnessFailure(
                f"derivative mismatch at {env}: finite difference {expected}, claimed {actual}")


def brute_force_triangular(equations: list[tuple[str, Term]]) -> Optional[list[tuple[str, Term]]]:
    """Exhaustive permutation search for a triangular ordering."""
    for perm in itertools.permutations(equations):
        ok = True
        for i, (name, _) in enumerate(perm):
            if any(name in free_vars(rhs) for _, rhs in perm[: i + 1]):
                ok = False
                break
        if ok:
            return list(perm)
    return None
