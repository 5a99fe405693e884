"""Uniform 1D meshes and piecewise-linear finite-element functions.

The discretization uses continuous piecewise-linear ("hat") elements on a
uniform subdivision of an open interval, with homogeneous exterior values:
every discrete function is extended by zero outside the interval, which is
the natural setting for nonlocal problems posed on all of the real line.
Degrees of freedom are the interior nodes only.
"""

import numpy as np

from .errors import ValidationError

__all__ = ["IntervalMesh", "Mesh", "PiecewiseLinearFn"]


class IntervalMesh:
    """Uniform mesh on (x_lo, x_hi) with n interior nodes.

    Nodes are x_lo + i*h for i = 0..n+1 with h = (x_hi - x_lo)/(n+1).
    The two endpoint nodes carry no degree of freedom.
    """

    def __init__(self, x_lo, x_hi, n):
        if not (np.isfinite(x_lo) and np.isfinite(x_hi)) or not x_lo < x_hi:
            raise ValidationError(f"interval must satisfy x_lo < x_hi, got ({x_lo}, {x_hi})")
        n = int(n)
        if n < 1:
            raise ValidationError(f"need at least one interior node, got n={n}")
        self.x_lo = float(x_lo)
        self.x_hi = float(x_hi)
        self.n = n
        self.h = (self.x_hi - self.x_lo) / (n + 1)
        self.full_nodes = np.linspace(self.x_lo, self.x_hi, n + 2)
        self.nodes = self.full_nodes[1:-1]

    @property
    def n_elements(self):
        return self.n + 1

    def element(self, k):
        """Endpoints (left, right) of element k, for k = 0..n."""
        return self.full_nodes[k], self.full_nodes[k + 1]

    def __repr__(self):
        return f"IntervalMesh(({self.x_lo}, {self.x_hi}), n={self.n})"

    def __eq__(self, other):
        return (
            isinstance(other, IntervalMesh)
            and self.n == other.n
            and self.x_lo == other.x_lo
            and self.x_hi == other.x_hi
        )

    def interpolate(self, f):
        """Nodal interpolant of the callable f as a PiecewiseLinearFn."""
        vals = np.array([float(f(x)) for x in self.nodes])
        return PiecewiseLinearFn(self, vals)


class PiecewiseLinearFn:
    """Continuous piecewise-linear function on a mesh, zero outside it.

    Stores the interior nodal values; endpoint values are pinned to zero so
    the function is globally defined (and zero) on all of R.
    """

    def __init__(self, mesh, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (mesh.n,):
            raise ValidationError(
                f"expected {mesh.n} nodal values, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValidationError("nodal values must be finite")
        self.mesh = mesh
        self.values = values

    @property
    def padded_values(self):
        """Nodal values including the zero endpoints."""
        return np.concatenate(([0.0], self.values, [0.0]))

    def __call__(self, x):
        """Evaluate at x (scalar or array); zero outside the mesh interval."""
        x = np.asarray(x, dtype=float)
        m = self.mesh
        t = (x - m.x_lo) / m.h
        k = np.clip(np.floor(t).astype(int), 0, m.n)
        frac = t - k
        padded = self.padded_values
        out = padded[k] * (1.0 - frac) + padded[k + 1] * frac
        inside = (x > m.x_lo) & (x < m.x_hi)
        return np.where(inside, out, 0.0)[()]

    def slopes(self):
        """Slope on each of the n+1 elements."""
        return np.diff(self.padded_values) / self.mesh.h

    def __add__(self, other):
        self._check_same_mesh(other)
        return PiecewiseLinearFn(self.mesh, self.values + other.values)

    def __sub__(self, other):
        self._check_same_mesh(other)
        return PiecewiseLinearFn(self.mesh, self.values - other.values)

    def __rmul__(self, c):
        return PiecewiseLinearFn(self.mesh, float(c) * self.values)

    def _check_same_mesh(self, other):
        if not isinstance(other, PiecewiseLinearFn) or other.mesh != self.mesh:
            raise ValidationError("operands live on different meshes")


# uniform interval meshes are the only mesh type; the short name is the
# one the rest of the package uses in signatures
Mesh = IntervalMesh
