"""Loop acceleration based analysis of integer transition systems:
worst-case lower bounds and non-termination proofs."""

__version__ = "0.1.0"

from .its import ITS, Configuration, Transition, parse
from .terms import Atom, Conjunction, Poly, Update, Variable

__all__ = [
    "ITS",
    "Configuration",
    "Transition",
    "parse",
    "Atom",
    "Conjunction",
    "Poly",
    "Update",
    "Variable",
    "__version__",
]
