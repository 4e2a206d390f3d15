"""
lame-spectral - Elastic Wave Spectral Laboratory

A pseudospectral solver for the isotropic elastic wave equation built on the
frequency-space diagonalization of the Lamé operator, together with the
experiments that measure its dispersive, Strichartz, weighted and resolvent
estimates on periodic lattices.
"""

__version__ = "0.1.1"
__author__ = "lame-spectral developers"
__description__ = "Pseudospectral solver and estimate-verification lab for the elastic wave equation"
