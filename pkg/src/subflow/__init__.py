"""Regularized p-pseudoharmonic map heat flow on the discrete Heisenberg nilmanifold."""

__version__ = "0.1.0"
