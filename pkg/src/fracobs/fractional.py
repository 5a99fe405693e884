"""Fractional-order constants and pointwise fractional derivatives.

The scalar fractional derivative used throughout is the one-dimensional
Riesz-type derivative

    D^s u(x) = c_s * int_R (u(x) - u(y)) * sign(x - y) / |x - y|^{1+s} dy,

an absolutely convergent integral for Lipschitz u with decay, where c_s is
the classical normalization constant

    c_s = 2^s * pi^{-1/2} * Gamma((s+2)/2) / Gamma((1-s)/2)      (d = 1).

For piecewise-linear compactly supported u the integral is elementary on
each interval between kink radii, so ``ds_gradient_at`` is exact up to
rounding rather than a quadrature approximation.
"""

import math

import numpy as np

from .errors import ValidationError
from .meshes import PiecewiseLinearFn

__all__ = [
    "gamma_fn",
    "riesz_constant",
    "fractional_laplacian_constant",
    "normalization_ratio",
    "check_order",
    "ds_gradient_at",
]

# Lanczos approximation, g = 7, 9 coefficients.  Relative error below
# 1e-13 on the right half-plane; the reflection formula covers the rest.
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gamma_fn(x):
    """Gamma function for real x, poles at non-positive integers."""
    x = float(x)
    if x <= 0.0 and x == math.floor(x):
        raise ValidationError(f"gamma pole at non-positive integer {x}")
    if x < 0.5:
        # reflection: Gamma(x) * Gamma(1-x) = pi / sin(pi x)
        return math.pi / (math.sin(math.pi * x) * gamma_fn(1.0 - x))
    z = x - 1.0
    acc = _LANCZOS_COEF[0]
    for i, c in enumerate(_LANCZOS_COEF[1:], start=1):
        acc += c / (z + i)
    t = z + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * t ** (z + 0.5) * math.exp(-t) * acc


def check_order(s):
    """Validate a fractional order; returns it as float."""
    s = float(s)
    if not 0.0 < s < 1.0:
        raise ValidationError(f"fractional order must lie in (0, 1), got {s}")
    return s


def riesz_constant(d, s):
    """Normalization c_{d,s} = 2^s pi^{-d/2} Gamma((d+s+1)/2) / Gamma((1-s)/2)."""
    s = check_order(s)
    d = int(d)
    if d < 1:
        raise ValidationError(f"dimension must be a positive integer, got {d}")
    return (
        2.0 ** s
        * math.pi ** (-d / 2.0)
        * gamma_fn((d + s + 1.0) / 2.0)
        / gamma_fn((1.0 - s) / 2.0)
    )


def fractional_laplacian_constant(d, s):
    """Constant C(d,s) = 4^s Gamma(d/2 + s) / (pi^{d/2} |Gamma(-s)|) making

        (-Delta)^s u(x) = C(d,s) PV int (u(x) - u(y)) |x - y|^{-d-2s} dy

    agree with the Fourier symbol |xi|^{2s}.
    """
    s = check_order(s)
    d = int(d)
    if d < 1:
        raise ValidationError(f"dimension must be a positive integer, got {d}")
    return (
        4.0 ** s
        * gamma_fn(d / 2.0 + s)
        / (math.pi ** (d / 2.0) * abs(gamma_fn(-s)))
    )


def normalization_ratio(d, s):
    """Ratio C(d,s) / c_{d,s}^2 between the fractional-Laplacian constant and
    the squared Riesz-derivative constant.

    This is the exact factor relating the |x-y|^{-d-2s} Gagliardo form scaled
    by c_{d,s}^2 to the quadratic form of the standard fractional Laplacian;
    it equals 8 at (d,s) = (1, 1/2) and grows without bound as s -> 1.
    """
    return fractional_laplacian_constant(d, s) / riesz_constant(d, s) ** 2


def ds_gradient_at(u, x, s):
    """Exact D^s u(x) for a PiecewiseLinearFn u.

    Folding y = x +/- r turns the defining integral into

        D^s u(x) = c_s int_0^inf (u(x+r) - u(x-r)) r^{-1-s} dr,

    and the integrand is piecewise linear in r between consecutive kink
    radii |p_j - x| (p_j the mesh nodes), zero beyond the largest one, so
    each piece integrates in closed form.
    """
    if not isinstance(u, PiecewiseLinearFn):
        raise ValidationError("ds_gradient_at expects a PiecewiseLinearFn")
    s = check_order(s)
    x = float(x)
    mesh = u.mesh
    radii = np.unique(np.abs(mesh.full_nodes - x))
    # a float image of x itself (|node - x| ~ 1e-16) must count as radius
    # zero, or it seeds an r^{-s} piece whose constant term is pure noise
    radii[radii <= 1e-13 * max(1.0, radii[-1])] = 0.0
    radii = np.unique(radii)
    if radii[0] > 0.0:
        radii = np.concatenate(([0.0], radii))
    F = u(x + radii) - u(x - radii)  # odd difference at each kink radius
    total = 0.0
    for (ra, rb), (Fa, Fb) in zip(zip(radii[:-1], radii[1:]), zip(F[:-1], F[1:])):
        if rb - ra <= 1e-13 * max(1.0, rb):
            # sliver between two float images of the same kink radius: its
            # true contribution is O(eps) but the divided difference is not
            continue
        B = (Fb - Fa) / (rb - ra)
        if ra == 0.0:
            # F(0) = 0, so the piece is purely linear: int_0^rb B r^{-s} dr
            total += B * rb ** (1.0 - s) / (1.0 - s)
            continue
        A = Fa - B * ra
        total += A / s * (ra ** (-s) - rb ** (-s))
        total += B / (1.0 - s) * (rb ** (1.0 - s) - ra ** (1.0 - s))
    return riesz_constant(1, s) * total
