import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for oracles.py

from stepcalc.knowledge import load_knowledge
from stepcalc.terms import parse_term

KNOWLEDGE_DIR = Path(__file__).parent.parent / "src" / "stepcalc" / "knowledge"

GOLDEN_INPUT = "8*r^2*sin(alpha)*cos(alpha) - 4*r^2*sin(alpha)^2"

# hand-derived true derivative of the golden input, verified against the
# finite-difference oracle in test_acceptance
GOLDEN_DERIVATIVE = "8*r^2*((cos(alpha))^2 - (sin(alpha))^2 - sin(alpha)*cos(alpha))"

# the value the source text prints for the end of the worked calculation
# (its last product carries a factor-2 slip; see notes/decisions.md)
GOLDEN_AS_PRINTED = "8*r^2*(-(sin(alpha))^2 + (cos(alpha))^2 - 2*sin(alpha)*cos(alpha))"


@pytest.fixture(scope="session")
def store():
    return load_knowledge(KNOWLEDGE_DIR)


@pytest.fixture(scope="session")
def arities(store):
    return store.arity_table()


@pytest.fixture(scope="session")
def P(arities):
    def parse(text):
        return parse_term(text, arities)
    return parse


@pytest.fixture(scope="session")
def simplifier(store):
    return store.lookup_rule_set("Reals", "simplifier")


@pytest.fixture
def golden_args(P):
    return {
        "interval": P("interval_open(0, pi/2)"),
        "f": P(GOLDEN_INPUT),
        "v": P("alpha"),
    }


@pytest.fixture
def max_args(P):
    return {
        "r": P("r"),
        "givens": P("[r]"),
        "max": P("A"),
        "finds": P("[u, v]"),
        "rels": P("[A = 2*u*v - u^2, u/2 = r*sin(alpha), v/2 = r*cos(alpha)]"),
        "var": P("alpha"),
        "interval": P("interval_open(0, pi/2)"),
        "errbound": P("0.001"),
    }
