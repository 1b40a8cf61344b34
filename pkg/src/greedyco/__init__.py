"""Greedy-type algorithms for convex optimization over dictionaries, exact
and with inexact step evaluations, plus tools to check their convergence
rates empirically."""

__version__ = "0.1.0"
