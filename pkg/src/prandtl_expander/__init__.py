"""Boundary-layer expansion builder and inviscid-limit rate verifier.

Pipeline stages (one module each):

* ``problem``   - given data, validation, cutoff function
* ``numerics``  - grids, difference operators, quadrature, sparse solves
* ``prandtl0``  - zeroth-order layer via the von Mises / porous-medium route
* ``euler1``    - first-order outer corrector (elliptic solve with lift)
* ``prandtl1``  - first-order layer corrector (implicit x-march)
* ``assembly``  - assembled approximation, full residuals, mirror extension
* ``reference`` - steady Navier-Stokes reference solve (staggered Newton)
* ``harness``   - viscosity sweeps, error norms, fitted convergence rates
* ``cli``       - command-line entry point
"""

__version__ = "0.1.0"
