"""Numerical pluricomplex Green's functions, Monge-Ampere masses and related constructions.

Subpackages and modules
-----------------------
geometry, singularity
    Grids, domains, stencils and the singular data (poles, backgrounds).
solver
    Envelope and regularized-Newton backends for the Dirichlet problem.
measure
    Monge-Ampere densities, pole masses, Lelong numbers and mass ledgers.
blowup, torus, ray
    Exceptional-divisor metrics, compact torus solves and geodesic rays.
config, runner, verify, cli
    Configuration parsing, run orchestration and built-in suites.
"""

__version__ = "0.1.0"

from .errors import PlurigreenError  # noqa: E402

__all__ = ["PlurigreenError", "__version__"]
