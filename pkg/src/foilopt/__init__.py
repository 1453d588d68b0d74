"""Airfoil shape optimization on a full-potential flow model.

Subpackages cover CST geometry, O-grid generation, the conservative
full-potential solver, coupled discrete adjoints, inexact-gradient error
bounds, and convergent descent methods, glued together by a batch CLI.
"""

__version__ = "0.1.0"
