"""stepcalc: stepwise calculations generated from tactic programs.

A program written in a small functional tactic language is interpreted
like a debugger: each tactic is a break-point producing one calculation
step, the interpreter builds a logical context as it goes, and free user
input (formulas or tactics) is checked against the program by
rewriting-based derivation.
"""

from .interpreter import Session, open_session
from .knowledge import KnowledgeStore, load_knowledge
from .terms import Term, parse_term, render_term

__all__ = [
    "KnowledgeStore",
    "Session",
    "Term",
    "load_knowledge",
    "open_session",
    "parse_term",
    "render_term",
]

__version__ = "0.1.0"
