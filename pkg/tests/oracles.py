"""Independent oracles the tests freeze against.

Everything here is computed from first principles (closed forms or scipy
quadrature written separately from the package), never by calling the code
under test.
"""

import numpy as np
from scipy import integrate

# normalization constants of the truncated Gaussian, frozen from a 30-digit
# mpmath radial quadrature of the quintic-smoothstep profile
C_EPS_HALF = 1.49629714443522
C_EPS_TENTH = 1.00000000934896

# planar Steiner tree for the four corners of the unit square, against the
# two diagonals it replaces
STEINER_SQUARE = 1.0 + np.sqrt(3.0)
CROSS_DIAGONALS = 2.0 * np.sqrt(2.0)


def kernel_mass_oracle(eps):
    """2D integral of the truncated kernel by radial quadrature."""

    def profile(r):
        u = np.clip(2.0 * r - 1.0, 0.0, 1.0)
        return 1.0 - u**3 * (10.0 - 15.0 * u + 6.0 * u * u)

    def radial(r):
        return profile(r) * r / eps**2 * np.exp(-r * r / (2.0 * eps * eps))

    inner, _ = integrate.quad(radial, 0.0, 0.5, epsabs=1e-13, epsrel=1e-12)
    outer, _ = integrate.quad(radial, 0.5, 1.0, epsabs=1e-13, epsrel=1e-12)
    return inner + outer


def ngon_vertices(n, r=1.0):
    th = 2.0 * np.pi * np.arange(n) / n
    return r * np.column_stack([np.cos(th), np.sin(th)])


def ngon_perimeter(n, r=1.0):
    return 2.0 * n * r * np.sin(np.pi / n)


def ngon_area(n, r=1.0):
    return 0.5 * n * r * r * np.sin(2.0 * np.pi / n)


def shrinking_circle_radius(t, r0=1.0):
    """Exact curve-shortening radius for a circle."""
    return np.sqrt(r0 * r0 - 2.0 * t)
