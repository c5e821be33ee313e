"""Inviscid-limit experiments for Navier-Stokes flow over a friction wall.

Subpackages of note: :mod:`bllab.grid` (fields and operators), :mod:`bllab.norms`,
:mod:`bllab.euler`, :mod:`bllab.prandtl`, :mod:`bllab.expansion`, :mod:`bllab.ns`
and the experiment harness in :mod:`bllab.harness`.
"""
from .grid import Field, Grid, psi

__version__ = "0.1.0"

__all__ = ["Field", "Grid", "psi", "__version__"]
