"""Desk-scale simulator for gradient-flow and SGD training of shallow and
deep one-dimensional networks, built on exact piecewise-polynomial risk
calculus."""

__version__ = "0.1.0"
