"""Discrete Ginzburg-Landau laboratory for multiply connected planar domains.

The order parameter lives on the cells of a uniform grid restricted to the
sample, the magnetic potential on the edges of the sample with its holes
filled in.  Submodules: :mod:`domain`, :mod:`calculus`, :mod:`gauge`,
:mod:`spectra`, :mod:`functional`, :mod:`bifurcation`, :mod:`symmetry`,
:mod:`phasediagram` and :mod:`cli`.
"""

__version__ = "0.1.0"
