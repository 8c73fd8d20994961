"""Numerical toolkit for the periodic KdV equation near one-gap tori.

Modules: potential (trig potentials), hill (Hill operator spectra), floquet
(Floquet solutions, gap factors, actions and frequencies), asympt (large-n
expansions), nfmap (partially linearized Birkhoff map and symplectic
corrector), paracalc (paraproducts and composition expansions), cli.
"""

__version__ = "0.1.0"
