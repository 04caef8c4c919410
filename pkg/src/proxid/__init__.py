"""Exact identification of interventional distributions with proxy variables.

Discrete causal models, kernel algebra, bridge-equation solvers, and a
district-based identification search, all validated against a brute-force
oracle.
"""

__version__ = "0.1.0"
