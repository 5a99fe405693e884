"""Two-point interaction kernels for nonlocal quadratic forms.

A kernel here is a measurable a(x, y) >= 0 written as

    a(x, y) = amp(x, y) * |x - y|^{-1-2s},

with the smooth "amplitude" amp separated from the singular power.  The
reference kernel has constant amplitude c_s^2 (squared Riesz-derivative
normalization), so its energy matches the fractional-seminorm form used by
the solvers.  Ellipticity metadata travels with the kernel as a relative
band [a_lower, a_upper] measured in units of c_s^2:

    a_lower * c_s^2  <=  amp(x, y)  <=  a_upper * c_s^2.

Kernels need not be symmetric; the assembly handles the general case.

The module also evaluates kernels induced by weighting the pointwise
product of two fractional derivatives with a coefficient field A:

    int_R A(z) D^s u(z) D^s v(z) dz
        = 1/2 iint (u(x)-u(y)) (v(x)-v(y)) kA(x, y) dx dy,

    kA(x, y) = c_s^2 * PV int_R A(z) kappa(x, y, z) dz,

where ``kappa_integrand`` below is positive for z between x and y and
negative outside.  kA can therefore fail to be nonnegative for strongly
localized A: such weighted forms are genuinely outside the class of
(nonnegative-kernel) jump energies, and ``plateau_field`` builds the
standard witness.
"""

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import NumericalError, ValidationError
from .fractional import check_order, riesz_constant
from .quadrature import jacobi_01, legendre_01

__all__ = [
    "CoefficientField",
    "constant_field",
    "plateau_field",
    "kappa_integrand",
    "KAEvaluation",
    "ka_evaluate",
    "BandScanEntry",
    "BandScanReport",
    "ka_band_scan",
    "Kernel",
    "fractional_laplacian_kernel",
    "scaled_fractional_kernel",
    "perturbed_kernel",
    "ka_kernel",
    "kernel_band",
]


# ---------------------------------------------------------------------------
# coefficient fields A(z)

_FIELD_BOUND = 1e6


@dataclass(frozen=True)
class CoefficientField:
    """Bounded scalar weight A(z) entering a D^s-weighted quadratic form.

    ``alpha`` is the pointwise value (vectorized over numpy arrays),
    ``sup_bound`` a guaranteed bound on |alpha| used for analytic tail
    estimates, ``breakpoints`` optional abscissae where alpha changes
    character (quadrature splits there), and ``translation_invariant``
    marks fields that depend on nothing (constants), enabling caching by
    separation only.
    """

    alpha: Callable[[np.ndarray], np.ndarray]
    description: str = ""
    sup_bound: float = _FIELD_BOUND
    breakpoints: Tuple[float, ...] = ()
    translation_invariant: bool = False

    def __post_init__(self):
        probe = np.linspace(-10.0, 10.0, 401)
        if self.breakpoints:
            probe = np.union1d(probe, np.asarray(self.breakpoints, dtype=float))
        vals = np.asarray(self.alpha(probe), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValidationError("coefficient field takes non-finite values on probe grid")
        worst = float(np.max(np.abs(vals)))
        if worst > _FIELD_BOUND:
            raise ValidationError(
                f"coefficient field exceeds bound {_FIELD_BOUND:g} on probe grid (got {worst:g})"
            )
        if not (0.0 <= self.sup_bound <= _FIELD_BOUND):
            raise ValidationError(f"sup_bound must lie in [0, {_FIELD_BOUND:g}]")

    def __call__(self, z):
        return self.alpha(np.asarray(z, dtype=float))


def constant_field(value: float, description: Optional[str] = None) -> CoefficientField:
    value = float(value)
    if not (math.isfinite(value) and abs(value) <= _FIELD_BOUND):
        raise ValidationError(f"constant field value out of range: {value}")
    return CoefficientField(
        alpha=lambda z: np.full_like(np.asarray(z, dtype=float), value),
        description=description or f"constant {value:g}",
        sup_bound=abs(value),
        translation_invariant=True,
    )


def _smoothstep(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, strictly increasing between."""
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        e0 = np.where(t > 0.0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)
        e1 = np.where(t < 1.0, np.exp(-1.0 / np.maximum(1.0 - t, 1e-300)), 0.0)
    return e0 / (e0 + e1)


def plateau_field(
    background: float = 0.01,
    height: float = 50.0,
    rise_lo: float = 0.9,
    flat_lo: float = 1.0,
    flat_hi: float = 1.5,
    rise_hi: float = 1.6,
) -> CoefficientField:
    """Small positive background plus a tall smooth plateau.

    The default parameters concentrate almost all of the field's mass on
    [flat_lo, flat_hi]; weighting a D^s product with this field produces a
    two-point kernel that is strictly negative at well-separated pairs
    straddling the plateau, witnessing that such forms need not be jump
    energies with nonnegative kernels.
    """
    if not (rise_lo < flat_lo < flat_hi < rise_hi):
        raise ValidationError("plateau breakpoints must be increasing")
    if background <= 0.0 or height <= 0.0:
        raise ValidationError("plateau background and height must be positive")

    def A(z):
        z = np.asarray(z, dtype=float)
        up = _smoothstep((z - rise_lo) / (flat_lo - rise_lo))
        down = _smoothstep((rise_hi - z) / (rise_hi - flat_hi))
        return background + height * up * down

    return CoefficientField(
        alpha=A,
        description=(
            f"{background:g} + {height:g} * smooth plateau on "
            f"[{flat_lo:g}, {flat_hi:g}] (support [{rise_lo:g}, {rise_hi:g}])"
        ),
        sup_bound=background + height,
        breakpoints=(rise_lo, flat_lo, flat_hi, rise_hi),
        translation_invariant=False,
    )


# ---------------------------------------------------------------------------
# the induced two-point kernel: pointwise integrand and PV evaluation


def kappa_integrand(x, y, z, s):
    """Triple-point integrand ((y-z)/|y-z|^{2+s}) * ((z-x)/|z-x|^{2+s}).

    Positive for z strictly between x and y, negative outside.  Symmetric
    under swapping x and y (both factors negate).  z must avoid the two
    singular points.
    """
    s = check_order(s)
    x, y, z = (np.asarray(v, dtype=float) for v in (x, y, z))
    dxz = x - z
    dyz = y - z
    if np.any(dxz == 0.0) or np.any(dyz == 0.0):
        raise ValidationError("kappa_integrand is singular at z = x and z = y")
    return -(
        np.sign(dxz)
        * np.sign(dyz)
        * np.abs(dxz) ** (-1.0 - s)
        * np.abs(dyz) ** (-1.0 - s)
    )[()]


def _dyadic_breaks(lo, hi):
    """lo, 2*lo, 4*lo, ..., capped at hi (lo < hi)."""
    out = [lo]
    t = lo
    while t * 2.0 < hi:
        t *= 2.0
        out.append(t)
    out.append(hi)
    return out


def _field_breaks(field, lo, hi):
    """Field breakpoints falling strictly inside (lo, hi)."""
    return [b for b in getattr(field, "breakpoints", ()) if lo < b < hi]


def _piecewise_gauss(f, breaks, n_hi=12, n_lo=8):
    """Fixed-order Gauss-Legendre on each piece; returns (value, error_est).

    The error estimate is the summed discrepancy against the lower-order
    rule, evaluated with no extra f calls beyond the second rule.
    """
    xs_hi, ws_hi = legendre_01(n_hi)
    xs_lo, ws_lo = legendre_01(n_lo)
    a = np.asarray(breaks[:-1])
    b = np.asarray(breaks[1:])
    length = b - a
    nodes_hi = a[:, None] + length[:, None] * xs_hi[None, :]
    nodes_lo = a[:, None] + length[:, None] * xs_lo[None, :]
    vals_hi = f(nodes_hi.ravel()).reshape(nodes_hi.shape)
    vals_lo = f(nodes_lo.ravel()).reshape(nodes_lo.shape)
    per_hi = length * (vals_hi @ ws_hi)
    per_lo = length * (vals_lo @ ws_lo)
    return float(per_hi.sum()), float(np.abs(per_hi - per_lo).sum())


def _pv_pass(A: CoefficientField, x: float, y: float, s: float,
             rw: float, z_cut: float):
    """One full PV evaluation at window radius rw.

    Returns (raw_value, quadrature_error, tail_bound) for the integral
    int A(z) kappa(x, y, z) dz, without the c_s^2 factor.  The two
    principal-value singularities are handled by symmetric windows of
    radius rw: inside a window the two sides are combined analytically
    into a single integrand with a t^{-s} weight (absorbed by a
    Gauss-Jacobi rule), which avoids the catastrophic cancellation of
    summing the sides separately.  Outside, fixed Gauss panels on dyadic
    pieces resolve the steep algebraic decay, and the region beyond z_cut
    is bounded analytically via the field's sup bound.
    """
    d = y - x
    e = 1.0 + s

    # --- paired windows: int_0^rw t^{-s} * (D(t)/t) dt at each singularity
    tj, wj = jacobi_01(12, -s)
    t = rw * tj

    Dx = A(x + t) * (d - t) ** (-e) - A(x - t) * (d + t) ** (-e)
    Dy = A(y - t) * (d - t) ** (-e) - A(y + t) * (d + t) ** (-e)
    win = rw ** (1.0 - s) * float(wj @ ((Dx + Dy) / t))

    # --- middle region (x + rw, y - rw): integrand > 0
    def mid_left(xi):  # xi = z - x in [rw, d/2]
        return A(x + xi) * xi ** (-e) * (d - xi) ** (-e)

    def mid_right(eta):  # eta = y - z in [rw, d/2]
        return A(y - eta) * eta ** (-e) * (d - eta) ** (-e)

    def outer_left(zeta):  # zeta = x - z in [rw, Z]
        return -A(x - zeta) * zeta ** (-e) * (d + zeta) ** (-e)

    def outer_right(zeta):  # zeta = z - y in [rw, Z]
        return -A(y + zeta) * zeta ** (-e) * (d + zeta) ** (-e)

    Z = max(z_cut, 4.0 * d)
    value, err = win, 0.0
    for f, lo, hi, shift in (
        (mid_left, rw, 0.5 * d, None),
        (mid_right, rw, 0.5 * d, None),
        (outer_left, rw, Z, "left"),
        (outer_right, rw, Z, "right"),
    ):
        breaks = _dyadic_breaks(lo, hi)
        if shift == "left":
            extra = [x - b for b in _field_breaks(A, x - hi, x - lo)]
        elif shift == "right":
            extra = [b - y for b in _field_breaks(A, y + lo, y + hi)]
        else:
            extra = []
        breaks = sorted(set(breaks) | set(extra))
        v, ee = _piecewise_gauss(f, breaks)
        value += v
        err += ee

    # --- tail beyond the cut: |integrand| <= sup|A| * zeta^{-2-2s} there
    tail = 2.0 * A.sup_bound * Z ** (-1.0 - 2.0 * s) / (1.0 + 2.0 * s)
    return value, err, tail


@dataclass(frozen=True)
class KAEvaluation:
    """One evaluated pair of the field-weighted PV kernel."""

    x: float
    y: float
    value: float
    est_abs_error: float


def ka_evaluate(A: CoefficientField, x: float, y: float, s: float,
                radius: float = 1e-3, z_cut: float = 1e3) -> KAEvaluation:
    """Field-weighted kernel value c_s^2 * PV int A(z) kappa(x, y, z) dz.

    The principal value is computed at window radius min(radius, |x-y|/4)
    and re-computed at half and quarter radius; the evaluation must be
    self-consistent under that refinement (a growing discrepancy raises a
    numerical-failure error), and the returned value is the finest-level
    one.  ``est_abs_error`` aggregates the refinement discrepancy, the
    interior quadrature estimate, and the analytic tail bound beyond
    z_cut.
    """
    s = check_order(s)
    x0, y0 = float(x), float(y)
    x, y = (x0, y0) if x0 <= y0 else (y0, x0)
    d = y - x
    if d == 0.0:
        raise ValidationError("ka_evaluate needs two distinct points")
    radius = float(radius)
    if not 0.0 < radius:
        raise ValidationError(f"window radius must be positive, got {radius}")
    rw = min(radius, 0.25 * d)

    vals = []
    for level in range(3):
        v, qerr, tail = _pv_pass(A, x, y, s, rw / 2.0 ** level, z_cut)
        vals.append((v, qerr, tail))
    disc1 = abs(vals[0][0] - vals[1][0])
    disc2 = abs(vals[1][0] - vals[2][0])
    v, qerr, tail = vals[2]
    if not all(math.isfinite(t) for t in (v, qerr, disc1, disc2)):
        raise NumericalError(
            f"PV evaluation produced non-finite values at pair ({x0:g}, {y0:g})"
        )
    floor = 1e-9 * (1.0 + abs(v))
    if disc2 > floor and disc2 > 4.0 * disc1:
        raise NumericalError(
            "PV window pairing not converging under refinement at pair "
            f"({x0:g}, {y0:g}): discrepancy {disc1:.3e} -> {disc2:.3e}"
        )
    c2 = riesz_constant(1, s) ** 2
    return KAEvaluation(
        x=x0, y=y0,
        value=c2 * v,
        est_abs_error=c2 * (disc2 + qerr + tail),
    )


# ---------------------------------------------------------------------------
# band scan of the field-weighted kernel


@dataclass(frozen=True)
class BandScanEntry:
    """Scan result at one pair; ``failure`` holds the error text if the
    evaluation failed (the remaining fields are then nan)."""

    x: float
    y: float
    value: float
    normalized_value: float
    est_abs_error: float
    negative: bool
    failure: Optional[str] = None


@dataclass(frozen=True)
class BandScanReport:
    """Ellipticity-band scan of a field-weighted kernel over a pair grid.

    ``normalized_value`` at each entry is value * |x-y|^{1+2s}, the
    quantity that must stay inside a positive band for the kernel to
    define a comparable jump energy; ``any_negative`` flags where that
    fails.  min/max are over successful entries (None if none).
    """

    s: float
    c2: float
    entries: Tuple[BandScanEntry, ...]
    min_normalized: Optional[float]
    max_normalized: Optional[float]
    any_negative: bool
    n_failures: int


def ka_band_scan(A: CoefficientField, s: float, pair_grid) -> BandScanReport:
    """Evaluate the field-weighted kernel on each pair and report the band.

    Per-pair evaluation failures are recorded on the entry and do not
    abort the scan.
    """
    s = check_order(s)
    c2 = riesz_constant(1, s) ** 2
    entries = []
    ok_norms = []
    any_negative = False
    n_failures = 0
    for (px, py) in pair_grid:
        px, py = float(px), float(py)
        try:
            ev = ka_evaluate(A, px, py, s)
        except (ValidationError, NumericalError) as exc:
            n_failures += 1
            entries.append(BandScanEntry(
                x=px, y=py, value=math.nan, normalized_value=math.nan,
                est_abs_error=math.nan, negative=False, failure=str(exc),
            ))
            continue
        norm = ev.value * abs(py - px) ** (1.0 + 2.0 * s)
        neg = norm < 0.0
        any_negative = any_negative or neg
        ok_norms.append(norm)
        entries.append(BandScanEntry(
            x=px, y=py, value=ev.value, normalized_value=norm,
            est_abs_error=ev.est_abs_error, negative=neg,
        ))
    return BandScanReport(
        s=s, c2=c2,
        entries=tuple(entries),
        min_normalized=min(ok_norms) if ok_norms else None,
        max_normalized=max(ok_norms) if ok_norms else None,
        any_negative=any_negative,
        n_failures=n_failures,
    )


# ---------------------------------------------------------------------------
# kernel objects


class Kernel:
    """Two-point kernel a(x, y) = amplitude(x, y) * |x - y|^{-1-2s}.

    ``a_lower``/``a_upper`` are ellipticity bounds relative to c_s^2:
    when set, a_lower * c_s^2 <= amplitude <= a_upper * c_s^2 is the
    kernel's promise (None where no bound is claimed; field-weighted
    kernels can be negative).  ``amplitude_const`` is the absolute
    amplitude when it is a known constant, unlocking closed-form exterior
    tails in the assembly.  ``amplitude`` must accept broadcast arrays.
    """

    def __init__(self, s, amplitude, *, symmetric, amplitude_const=None,
                 a_lower=None, a_upper=None, label="kernel"):
        self.s = check_order(s)
        self.c2 = riesz_constant(1, self.s) ** 2
        self._amplitude = amplitude
        self.symmetric = bool(symmetric)
        self.amplitude_const = None if amplitude_const is None else float(amplitude_const)
        if (a_lower is None) != (a_upper is None):
            raise ValidationError("give both ellipticity bounds or neither")
        if a_lower is not None:
            a_lower, a_upper = float(a_lower), float(a_upper)
            if not 0.0 < a_lower <= a_upper:
                raise ValidationError(
                    f"ellipticity bounds need 0 < a_lower <= a_upper, got ({a_lower}, {a_upper})"
                )
        self.a_lower = a_lower
        self.a_upper = a_upper
        self.label = label

    def amplitude(self, x, y):
        """Amplitude a(x, y) * |x - y|^{1+2s} (absolute, includes c_s^2)."""
        if self.amplitude_const is not None:
            x = np.asarray(x, dtype=float)
            y = np.asarray(y, dtype=float)
            return np.broadcast_to(
                self.amplitude_const, np.broadcast_shapes(x.shape, y.shape)
            ).copy()[()]
        return self._amplitude(np.asarray(x, dtype=float), np.asarray(y, dtype=float))

    def evaluate(self, x, y):
        """Full kernel value a(x, y) for x != y."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if np.any(x == y):
            raise ValidationError("kernel is singular on the diagonal x = y")
        return (self.amplitude(x, y) * np.abs(x - y) ** (-1.0 - 2.0 * self.s))[()]

    __call__ = evaluate

    def __repr__(self):
        band = ("unbounded" if self.a_lower is None
                else f"band=[{self.a_lower:g}, {self.a_upper:g}]")
        return f"Kernel({self.label}, s={self.s}, symmetric={self.symmetric}, {band})"


def fractional_laplacian_kernel(s) -> Kernel:
    """Reference kernel c_s^2 |x-y|^{-1-2s}: energy = fractional-seminorm form."""
    s = check_order(s)
    c2 = riesz_constant(1, s) ** 2
    return Kernel(s, None, symmetric=True, amplitude_const=c2,
                  a_lower=1.0, a_upper=1.0, label="fractional")


def scaled_fractional_kernel(s, alpha) -> Kernel:
    """alpha * (reference kernel), alpha > 0."""
    alpha = float(alpha)
    if alpha <= 0.0:
        raise ValidationError(f"scale must be positive, got {alpha}")
    s = check_order(s)
    c2 = riesz_constant(1, s) ** 2
    return Kernel(s, None, symmetric=True, amplitude_const=alpha * c2,
                  a_lower=alpha, a_upper=alpha, label=f"fractional*{alpha:g}")


def perturbed_kernel(s, b, symmetric, *, box=(-1.0, 1.0),
                     grid_points=128) -> Kernel:
    """Kernel c_s^2 * b(x, y) * |x - y|^{-1-2s} from a bounded perturbation.

    The perturbation b is sampled on a grid_points^2 grid over box^2
    (>= 10^4 off-diagonal pairs at the default size); the sampled range
    becomes the kernel's ellipticity band [a_lower, a_upper].  Any
    nonpositive or non-finite sample rejects the perturbation, and a
    kernel declared symmetric must sample symmetric.
    """
    s = check_order(s)
    c2 = riesz_constant(1, s) ** 2
    lo, hi = float(box[0]), float(box[1])
    if not lo < hi:
        raise ValidationError(f"sampling box must be increasing, got ({lo}, {hi})")

    def b_arr(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.asarray(b(x, y), dtype=float)
        want = np.broadcast_shapes(x.shape, y.shape)
        if out.shape != want:
            out = np.broadcast_to(out, want)
        return out

    pts = np.linspace(lo, hi, int(grid_points))
    X, Y = np.meshgrid(pts, pts, indexing="ij")
    B = b_arr(X, Y)
    off = ~np.eye(len(pts), dtype=bool)
    samples = B[off]
    if not np.all(np.isfinite(samples)):
        raise ValidationError("perturbation takes non-finite values on the sampling grid")
    i_min = int(np.argmin(samples))
    b_min = float(samples[i_min])
    b_max = float(samples.max())
    if b_min <= 0.0:
        bad = (float(X[off][i_min]), float(Y[off][i_min]))
        raise ValidationError(
            f"perturbation must be strictly positive; sampled {b_min:g} at {bad}"
        )
    if symmetric:
        dev = np.abs(B - B.T)[off]
        worst = float(np.max(dev / np.abs(samples)))
        if worst > 1e-12:
            raise ValidationError(
                f"perturbation declared symmetric but samples deviate by {worst:.3e} relative"
            )

    return Kernel(
        s,
        lambda x, y: c2 * b_arr(x, y),
        symmetric=bool(symmetric),
        a_lower=b_min,
        a_upper=b_max,
        label="perturbed",
    )


def ka_kernel(s, A: CoefficientField, radius: float = 1e-3,
              z_cut: float = 1e3) -> Kernel:
    """Two-point kernel induced by the field-weighted D^s product form.

    Values come from the principal-value evaluation, with a per-pair
    cache; for translation-invariant fields the cache key is the
    separation |x - y| only.  No ellipticity band is claimed.
    """
    s = check_order(s)
    cache = {}
    invariant = A.translation_invariant

    def amp_scalar(xv, yv):
        dd = abs(yv - xv)
        key = round(dd, 14) if invariant else (round(xv, 14), round(yv, 14))
        hit = cache.get(key)
        if hit is None:
            ev = ka_evaluate(A, xv, yv, s, radius=radius, z_cut=z_cut)
            hit = ev.value * dd ** (1.0 + 2.0 * s)
            cache[key] = hit
        return hit

    def amplitude(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        xb, yb = np.broadcast_arrays(x, y)
        out = np.empty(xb.shape, dtype=float)
        flat_x, flat_y, flat_o = xb.ravel(), yb.ravel(), out.ravel()
        for i in range(flat_x.size):
            flat_o[i] = amp_scalar(flat_x[i], flat_y[i])
        return out[()] if out.ndim else float(out)

    return Kernel(s, amplitude, symmetric=True, label="ka")


def kernel_band(kernel: Kernel, x_lo, x_hi, nsamples: int = 128):
    """Sampled amplitude range over [x_lo, x_hi]^2 (off-diagonal pairs).

    The default nsamples gives >= 10^4 pairs.  Returns
    (min_value, max_value, argmin_pair) of the absolute amplitude; divide
    by kernel.c2 to compare against the relative band.  For kernels with
    declared bounds this is a cross-check; for field-weighted kernels it
    is the only estimate, and a negative min_value certifies the kernel
    leaves the nonnegative class (the sampled witness pair is returned
    for reporting).
    """
    pts = np.linspace(float(x_lo), float(x_hi), int(nsamples))
    X, Y = np.meshgrid(pts, pts, indexing="ij")
    mask = np.abs(X - Y) > 1e-9
    amp = kernel.amplitude(X[mask], Y[mask])
    amp = np.asarray(amp, dtype=float)
    imin = int(np.argmin(amp))
    pair = (float(X[mask][imin]), float(Y[mask][imin]))
    return float(amp.min()), float(amp.max()), pair
