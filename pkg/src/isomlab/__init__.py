"""Numerical laboratory for random walks on the Euclidean motion group
and for self-similar measures: spectral-gap curves of sphere-averaging
operators, local-limit-theorem diagnostics, non-concentration bounds,
dyadic-block inequalities, and Fourier-decay smoothness criteria.
"""

__version__ = "0.1.0"

from . import geom, measures, harmonics, spectral, walklab, selfsim  # noqa: F401,E402
