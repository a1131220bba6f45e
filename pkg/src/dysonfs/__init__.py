"""Ordered random walks under area tilts and their diffusion limit.

The package is organized bottom-up:

- ``potentials``: tilt families V_lam and the intrinsic scale H.
- ``spectral``: the half-line Sturm-Liouville problem, eigenpairs, heat kernel.
- ``determinantal``: Slater determinants, Karlin-McGregor and Doob kernels.
- ``lattice``: tilted transfer operators and exact tuple partition functions.
- ``sampler``: exact (backward DP) and MCMC path sampling, path rescaling.
- ``diffusion``: the Dyson Ferrari-Spohn SDE integrator.
- ``stats``: convergence and mixing experiments, distribution distances.
- ``weyl``: Weyl chambers, harmonic numerators, meander exit laws.
- ``cli``: batch entry points producing CSV/JSON artifacts.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import ResourceError, ValidationError

__all__ = ["ResourceError", "ValidationError", "__version__"]
