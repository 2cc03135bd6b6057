"""
jetlab
Subequations on 2-jet space: duality, seeded axiom checks, viscosity verdicts
on grid functions and monotone Dirichlet solvers.
"""

__version__ = "1.0.0"
