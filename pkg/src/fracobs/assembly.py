"""Stiffness, load, and mass assembly for nonlocal bilinear forms.

For a kernel a(x, y) the energy acting on functions extended by zero
outside the mesh interval is

    E_a(u, v) = iint_{R^2} W(x, y) dx dy,
    W(x, y) = 1/2 (u(x) - u(y)) (v(x) a(x, y) - v(y) a(y, x)),

which is absolutely convergent for piecewise-linear u, v even when a is
nonsymmetric (the antisymmetrized pairing); for symmetric kernels it
collapses to the double-difference 1/2 (u(x)-u(y)) (v(x)-v(y)) a(x, y).

Two independent assembly routes implement these two formulas:

* ``assemble_stiffness`` -- the antisymmetrized pairing, valid for any
  kernel.  Element-pair quadrature profile: Gauss-Jacobi radial rules on
  identical/adjacent pairs (orders 12), tensor Gauss-Legendre on
  separated pairs graded with gap (12/8/5), 12-point exterior panels.
* ``assemble_stiffness_symmetric`` -- the double-difference form,
  symmetric kernels only.  Distinct derivation (hat values drop out of
  the touching-pair integrands; only slopes enter) and a distinct
  quadrature profile: exact closed forms for constant amplitudes, and
  for general amplitudes Gauss orders (9/15, 15/17, 10/7/6, 14-point
  panels) sharing no nodes with the first route.

The two routes are deliberate mutual oracles: they agree only if both
singularity treatments are right, so their entrywise agreement is a
meaningful check rather than a tautology.

The double integral splits over ordered element pairs plus an exterior
band.  Element pairs are handled by singularity-adapted rules:

* identical elements -- the difference quotients are exact (linears), and
  the radial factor z^{1-2s} is absorbed into a Gauss-Jacobi weight;
* adjacent elements -- Duffy split at the shared vertex, with the
  xi^{2-2s} corner factor absorbed into a Gauss-Jacobi weight;
* separated elements -- tensor Gauss-Legendre, graded with gap;
* exterior band -- reduces to int_Omega u v tau with
  tau(x) = int_{R \\ Omega} a(x, w) dw, computed in closed form for
  constant amplitudes and by dyadic panels out to 10 |Omega| plus a
  bounded remainder otherwise.  On the two boundary elements the tau
  singularity is absorbed into a Gauss-Jacobi weight.

Touching-pair quadrature is self-checked against lower-order rules and a
failure to converge raises a numerical error naming the element pair.
For kernels promising a nonnegative band, tiny positive off-diagonal
excursions (quadrature noise) are clamped to zero to preserve the
discrete comparison structure, with the clamped mass reported.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import NumericalError, ValidationError
from .fractional import riesz_constant
from .kernels import Kernel
from .meshes import IntervalMesh, PiecewiseLinearFn
from .quadrature import jacobi_01, legendre_01

__all__ = [
    "MAX_DOFS",
    "assemble_stiffness",
    "assemble_stiffness_symmetric",
    "LoadData",
    "assemble_load",
    "assemble_ds_load",
    "lumped_mass",
    "add_mass",
    "DiscreteSystem",
    "build_system",
    "gagliardo_matrix",
    "gagliardo_seminorm_sq",
    "ds_norm_sq",
    "hat_ds_profile",
]

MAX_DOFS = 2048          # dense storage: the coupling is genuinely dense
_Z_CLAMP_TOL = 1e-8      # largest positive off-diagonal excursion tolerated
_PAIR_QUAD_TOL = 1e-6    # touching-pair two-order relative agreement
_TAIL_CUT_FACTOR = 10.0  # exterior band truncated at this multiple of |Omega|

# quadrature profiles; the two routes must not share orders on any piece
# so that their agreement checks genuinely cross-validate
_ANTI = {
    "ident": (12, 12),       # (radial GJ, transverse GL)
    "ident_check": (9, 9),
    "adj": (12, 20),         # (radial GJ, angular GL)
    "adj_check": (9, 15),
    "sep": (12, 9, 7),       # gap 2 / gaps 3-4 / gap >= 5
    "tail": 12,
}
_SYM = {
    "ident": (9, 15),
    "ident_check": (7, 11),
    "adj": (15, 17),
    "adj_check": (11, 13),
    "adj_const_angular": 24,
    "sep": (11, 10, 8),
    "tail": 14,
}


class _AmpTracker:
    """Records the range of amplitude values seen during an assembly."""

    def __init__(self):
        self.amp_min = math.inf
        self.amp_max = -math.inf

    def see(self, arr):
        arr = np.asarray(arr, dtype=float)
        if arr.size:
            self.amp_min = min(self.amp_min, float(arr.min()))
            self.amp_max = max(self.amp_max, float(arr.max()))
        return arr


# ---------------------------------------------------------------------------
# scatter machinery: everything assembles into an (n+1)x(n+1) padded matrix
# whose last row/column is a trash slot, so boundary dofs need no masking
# (element k has local dofs k-1 and k; -1 and n both land in the trash).


def _pad(n):
    return np.zeros((n + 1, n + 1))


def _scatter_batch(A_pad, dofs, locals_):
    """Accumulate locals (m, p, p) at dof index rows dofs (m, p)."""
    ii = np.broadcast_to(dofs[:, :, None], locals_.shape)
    jj = np.broadcast_to(dofs[:, None, :], locals_.shape)
    np.add.at(A_pad, (ii, jj), locals_)


def _element_dofs(nel):
    """(nel, 2) local-to-global map; boundary slots fall in the trash."""
    k = np.arange(nel)
    return np.stack([k - 1, k], axis=1)


def _vertex_dofs(nverts):
    """(nverts, 3) map for the vertex-centered adjacent patch."""
    j = np.arange(nverts)
    return np.stack([j - 1, j, j + 1], axis=1)


# ---------------------------------------------------------------------------
# identical element pairs


def _identical_const(mesh, s, amp):
    """2x2 template for T_k x T_k, constant amplitude: exact."""
    h = mesh.h
    scale = amp * h ** (1.0 - 2.0 * s) / ((2.0 - 2.0 * s) * (3.0 - 2.0 * s))
    return scale * np.array([[1.0, -1.0], [-1.0, 1.0]])


def _identical_anti(mesh, kernel, tracker, orders):
    """Per-element 2x2 locals, antisymmetrized integrand, batched over elements.

    Over T_k x T_k both orderings combine to (z = y - x > 0)

        -m_u z^{1-2s} [ v(x) (C1 - C2)/z - m_v C2 ],
        C1 = amp(x, x+z), C2 = amp(x+z, x),

    with m_u, m_v the (constant) trial/test slopes; z^{1-2s} goes into the
    Gauss-Jacobi weight, the transverse x-integral is Gauss-Legendre on the
    z-dependent strip.
    """
    nz, nx = orders
    s, h, nel = kernel.s, mesh.h, mesh.n_elements
    zj, wz = jacobi_01(nz, 1.0 - 2.0 * s)
    xg, wx = legendre_01(nx)
    z = h * zj                                        # (nz,)
    starts = mesh.full_nodes[:-1]                     # (nel,)
    # x runs over [p_k, p_{k+1} - z]: length (h - z)
    strip = (h - z)[None, :, None]                    # (1, nz, 1)
    x = starts[:, None, None] + strip * xg[None, None, :]   # (nel, nz, nx)
    zb = z[None, :, None]
    C1 = tracker.see(kernel.amplitude(x, x + zb))
    C2 = tracker.see(kernel.amplitude(x + zb, x))
    psi = (C1 - C2) / zb
    lam = (x - starts[:, None, None]) / h             # local coordinate in [0,1]
    vshape = np.stack([1.0 - lam, lam])               # (2, nel, nz, nx)
    slopes = np.array([-1.0, 1.0]) / h

    # inner x-integrals (strip length folds into the weights)
    inner_psi = np.einsum("cenx,x->cen", vshape * psi[None], wx) * strip[..., 0]
    inner_c2 = np.einsum("enx,x->en", C2, wx) * strip[..., 0]
    # radial integral with jacobi weights: z^{1-2s} absorbed, factor h^{2-2s}
    rad = h ** (2.0 - 2.0 * s)
    term_v = np.einsum("cen,n->ce", inner_psi, wz) * rad      # (2, nel)
    term_s = np.einsum("en,n->e", inner_c2, wz) * rad         # (nel,)
    # L[c, d] = -m_d * ( term_v[c] - m_c * term_s )
    locals_ = np.empty((nel, 2, 2))
    for c in range(2):
        for d in range(2):
            locals_[:, c, d] = -slopes[d] * (term_v[c] - slopes[c] * term_s)
    return locals_


def _identical_sym(mesh, kernel, tracker, orders):
    """Double-difference locals on T_k x T_k for a symmetric amplitude.

    Linear shapes make the difference quotients exact:
    (u(x) - u(x+z)) (v(x) - v(x+z)) = m_u m_v z^2, so the integrand is
    m_u m_v z^{1-2s} amp(x, x+z) -- no cancellation machinery at all,
    which is what makes this route an independent check of the
    antisymmetrized one.
    """
    nz, nx = orders
    s, h = kernel.s, mesh.h
    zj, wz = jacobi_01(nz, 1.0 - 2.0 * s)
    xg, wx = legendre_01(nx)
    z = h * zj
    starts = mesh.full_nodes[:-1]
    strip = (h - z)[None, :, None]
    x = starts[:, None, None] + strip * xg[None, None, :]
    amp = tracker.see(kernel.amplitude(x, x + z[None, :, None]))
    inner = np.einsum("enx,x->en", amp, wx) * strip[..., 0]
    rad_int = np.einsum("en,n->e", inner, wz) * h ** (2.0 - 2.0 * s)
    slopes = np.array([-1.0, 1.0]) / h
    return rad_int[:, None, None] * np.outer(slopes, slopes)[None]


# ---------------------------------------------------------------------------
# adjacent element pairs (shared vertex)

# slope of each patch hat left/right of the shared vertex p, for the hats
# centered at p-h, p, p+h (per unit h); the center hat also has value 1 at p
_ADJ_SLOPES = np.array([[-1.0, 0.0], [1.0, -1.0], [0.0, 1.0]])
_ADJ_VALUE = np.array([0.0, 1.0, 0.0])


def _adjacent_const_template(s, n_tau):
    """3x3 local for an adjacent pair, constant amplitude, scaled later by
    amp * h^{1-2s}.  Exact radial integral; angular by Gauss-Legendre."""
    tau, wt = legendre_01(n_tau)
    wgt = (1.0 + tau) ** (-1.0 - 2.0 * s) * wt
    gl = _ADJ_SLOPES[:, 0][:, None]
    gr = _ADJ_SLOPES[:, 1][:, None]
    f1 = gl + gr * tau[None, :]        # {xi >= eta} factor, per dof
    f2 = gl * tau[None, :] + gr        # mirrored piece
    ang = np.einsum("dt,ct,t->cd", f1, f1, wgt) + np.einsum("dt,ct,t->cd", f2, f2, wgt)
    # slopes above are per unit h (true slopes are these / h); radial factor
    # int_0^h xi^{2-2s} = h^{3-2s}/(3-2s); net h-power: h^{1-2s}
    return ang / (3.0 - 2.0 * s)


def _adjacent_anti(mesh, kernel, tracker, orders):
    """Per-vertex 3x3 locals for the general antisymmetrized integrand."""
    nxi, ntau = orders
    s, h = kernel.s, mesh.h
    verts = mesh.full_nodes[1:-1]                     # shared vertices p
    xis, wxi = jacobi_01(nxi, 2.0 - 2.0 * s)
    tau, wt = legendre_01(ntau)
    xi = h * xis                                      # (nxi,)
    P = verts[:, None, None]                          # (np, 1, 1)
    XI = xi[None, :, None]
    TAU = tau[None, None, :]

    gl = _ADJ_SLOPES[:, 0] / h
    gr = _ADJ_SLOPES[:, 1] / h
    locals_ = np.zeros((verts.size, 3, 3))
    for piece in (0, 1):
        if piece == 0:       # xi >= eta: x = p - xi, y = p + xi*tau
            x = P - XI
            y = P + XI * TAU
            fu = gl[:, None] + gr[:, None] * tau[None, :]     # (3, ntau)
        else:                # eta >= xi: x = p - eta*tau, y = p + eta
            x = P - XI * TAU
            y = P + XI
            fu = gl[:, None] * tau[None, :] + gr[:, None]
        C1 = tracker.see(kernel.amplitude(x, y))
        C2 = tracker.see(kernel.amplitude(y, x))
        psi = (C1 - C2) / XI
        if piece == 0:
            fv_c1 = gl[:, None] * np.ones_like(tau)[None, :]
            fv_c2 = gr[:, None] * tau[None, :]
        else:
            fv_c1 = gl[:, None] * tau[None, :]
            fv_c2 = gr[:, None] * np.ones_like(tau)[None, :]
        ang = (1.0 + tau) ** (-1.0 - 2.0 * s)
        # integrand after absorbing xi^{2-2s} into the radial weight:
        #   -fu_d [ val_c * psi - (fv_c1 C1 + fv_c2 C2) ] * (1+tau)^{-1-2s},
        # radial factor h^{3-2s} from the jacobi rule on [0, h]
        rad = h ** (3.0 - 2.0 * s)
        inner_vd = np.einsum("dt,pnt,t->dpn", fu * ang[None, :], psi, wt)
        ivd = np.einsum("dpn,n->dp", inner_vd, wxi) * rad      # (3, np)
        innd_c = np.einsum("dt,ct,pnt,t->dcpn", fu, fv_c1 * ang[None, :], C1, wt) \
            + np.einsum("dt,ct,pnt,t->dcpn", fu, fv_c2 * ang[None, :], C2, wt)
        icd = np.einsum("dcpn,n->dcp", innd_c, wxi) * rad      # (3, 3, np)
        for c in range(3):
            val_c = _ADJ_VALUE[c]
            for d in range(3):
                locals_[:, c, d] += -(val_c * ivd[d] - icd[d, c])
    return locals_


def _adjacent_sym(mesh, kernel, tracker, orders):
    """Double-difference locals on adjacent pairs.

    With x = p - a, y = p + b the hat-value at the shared vertex cancels
    from u(x) - u(y) = -(a gl + b gr), so only patch slopes enter.  Duffy
    split a >= b / b >= a, radial xi^{2-2s} into a Gauss-Jacobi weight.
    """
    nxi, ntau = orders
    s, h = kernel.s, mesh.h
    verts = mesh.full_nodes[1:-1]
    xis, wxi = jacobi_01(nxi, 2.0 - 2.0 * s)
    tau, wt = legendre_01(ntau)
    xi = h * xis
    P = verts[:, None, None]
    XI = xi[None, :, None]
    TAU = tau[None, None, :]

    gl = _ADJ_SLOPES[:, 0] / h
    gr = _ADJ_SLOPES[:, 1] / h
    rad = h ** (3.0 - 2.0 * s)
    ang = (1.0 + tau) ** (-1.0 - 2.0 * s)
    locals_ = np.zeros((verts.size, 3, 3))
    for piece in (0, 1):
        if piece == 0:       # a = xi, b = xi*tau
            x = P - XI
            y = P + XI * TAU
            f = gl[:, None] + gr[:, None] * tau[None, :]      # (3, ntau)
        else:                # b = xi, a = xi*tau
            x = P - XI * TAU
            y = P + XI
            f = gl[:, None] * tau[None, :] + gr[:, None]
        amp = tracker.see(kernel.amplitude(x, y))
        inner = np.einsum("ct,dt,pnt,t->cdpn", f, f, amp, wt * ang)
        locals_ += np.einsum("cdpn,n->pcd", inner, wxi) * rad
    return locals_


def _check_pair_convergence(hi, lo, pairs, kind):
    """Two-order agreement on touching pairs; returns the worst relative
    deviation, raising when a pair fails to converge."""
    scale = np.max(np.abs(hi), axis=(1, 2))
    dev = np.max(np.abs(hi - lo), axis=(1, 2))
    rel = dev / np.maximum(scale, 1e-300)
    worst = int(np.argmax(rel))
    if rel[worst] > _PAIR_QUAD_TOL:
        raise NumericalError(
            f"{kind} quadrature not converged on element pair "
            f"{pairs(worst)}: orders disagree by {rel[worst]:.3e} relative"
        )
    return float(rel[worst])


# ---------------------------------------------------------------------------
# separated element pairs


def _sep_order(orders, gap):
    near, mid, far = orders
    if gap == 2:
        return near
    if gap <= 4:
        return mid
    return far


def _separated_anti(mesh, kernel, A_pad, tracker, orders):
    """Batched separated pairs, antisymmetrized integrand.

    Constant amplitudes collapse to one local per gap (translation
    invariance on the uniform mesh); otherwise every pair is evaluated.
    """
    s, h, nel = kernel.s, mesh.h, mesh.n_elements
    starts = mesh.full_nodes[:-1]
    const = kernel.amplitude_const
    for gap in range(2, nel):
        npts = _sep_order(orders, gap)
        xg, wg = legendre_01(npts)
        ks = np.arange(0, nel - gap)
        reps = ks[:1] if const is not None else ks
        xk = starts[reps][:, None] + h * xg[None, :]          # (p, q)
        yl = starts[reps + gap][:, None] + h * xg[None, :]    # (p, r)
        X = xk[:, :, None]
        Y = yl[:, None, :]
        pw = np.abs(X - Y) ** (-1.0 - 2.0 * s)
        A1 = tracker.see(kernel.amplitude(X, Y)) * pw
        A2 = tracker.see(kernel.amplitude(Y, X)) * pw
        shapes = np.stack([1.0 - xg, xg])                     # (2, q)
        ux = np.concatenate([shapes, np.zeros((2, npts))])    # (4, q)
        uy = np.concatenate([np.zeros((2, npts)), shapes])    # (4, r)
        wq = wg * h
        # du[d,q,r] = ux[d,q] - uy[d,r]; v-side couples A1 with x-shapes and
        # A2 with y-shapes
        du = ux[:, :, None] - uy[:, None, :]                  # (4, q, r)
        t1 = np.einsum("dqr,cq,pqr,q,r->pcd", du, ux, A1, wq, wq)
        t2 = np.einsum("dqr,cr,pqr,q,r->pcd", du, uy, A2, wq, wq)
        locals_ = t1 - t2
        if const is not None:
            locals_ = np.broadcast_to(locals_, (ks.size, 4, 4))
        dofs = np.concatenate([_element_dofs(nel)[ks],
                               _element_dofs(nel)[ks + gap]], axis=1)
        _scatter_batch(A_pad, dofs, locals_)


def _separated_sym(mesh, kernel, A_pad, tracker, orders):
    """Batched separated pairs, double-difference integrand (symmetric a)."""
    s, h, nel = kernel.s, mesh.h, mesh.n_elements
    starts = mesh.full_nodes[:-1]
    const = kernel.amplitude_const
    for gap in range(2, nel):
        npts = _sep_order(orders, gap)
        xg, wg = legendre_01(npts)
        ks = np.arange(0, nel - gap)
        reps = ks[:1] if const is not None else ks
        xk = starts[reps][:, None] + h * xg[None, :]
        yl = starts[reps + gap][:, None] + h * xg[None, :]
        X = xk[:, :, None]
        Y = yl[:, None, :]
        K = tracker.see(kernel.amplitude(X, Y)) * np.abs(X - Y) ** (-1.0 - 2.0 * s)
        shapes = np.stack([1.0 - xg, xg])
        ux = np.concatenate([shapes, np.zeros((2, npts))])
        uy = np.concatenate([np.zeros((2, npts)), shapes])
        du = ux[:, :, None] - uy[:, None, :]
        wq = wg * h
        locals_ = np.einsum("cqr,dqr,pqr,q,r->pcd", du, du, K, wq, wq)
        if const is not None:
            locals_ = np.broadcast_to(locals_, (ks.size, 4, 4))
        dofs = np.concatenate([_element_dofs(nel)[ks],
                               _element_dofs(nel)[ks + gap]], axis=1)
        _scatter_batch(A_pad, dofs, locals_)


# ---------------------------------------------------------------------------
# exterior band:  int_Omega u v tau,  tau(x) = int_{R \ Omega} a(x, w) dw


def _tau_const(mesh, s, amp, x):
    lo = (x - mesh.x_lo) ** (-2.0 * s)
    hi = (mesh.x_hi - x) ** (-2.0 * s)
    return amp * (lo + hi) / (2.0 * s)


def _tau_general(mesh, kernel, x, tracker):
    """tau at interior points x (array), by adaptive panels out to the cut.

    Dyadic panels [d 2^k, d 2^{k+1}] are bisected until a two-order
    Gauss estimate converges -- amplitudes may oscillate arbitrarily far
    from the interval, so fixed orders are not safe out here.  Returns
    (tau_values, pointwise_remainder_bound, quadrature_error_estimate);
    the remainder bound covers the region beyond the cut via the
    kernel's upper band.
    """
    s = kernel.s
    L = mesh.x_hi - mesh.x_lo
    R = _TAIL_CUT_FACTOR * L
    x10, w10 = legendre_01(10)
    x20, w20 = legendre_01(20)
    x = np.asarray(x, dtype=float)
    tau = np.zeros_like(x)
    est = 0.0
    seen_max = 0.0
    max_pieces = 40000

    def piece(lo, hi, live, rule_x, rule_w, sign):
        length = hi - lo
        r = lo[:, None] + length[:, None] * rule_x[None, :]
        amp = tracker.see(kernel.amplitude(x[:, None], x[:, None] + sign * r))
        vals = amp * r ** (-1.0 - 2.0 * s)
        nonlocal seen_max
        if amp.size:
            seen_max = max(seen_max, float(np.abs(amp).max()))
        return np.where(live, length * (vals @ rule_w), 0.0)

    for sign, dist in ((-1.0, x - mesh.x_lo), (1.0, mesh.x_hi - x)):
        edges = [dist]
        t = dist.copy()
        while True:
            t = np.minimum(2.0 * t, R)
            edges.append(t.copy())
            if np.all(t >= R):
                break
        for a, b in zip(edges[:-1], edges[1:]):
            live = (b - a) > 0
            work = [(a, b, 0)]
            n_pieces = 0
            while work:
                lo, hi, depth = work.pop()
                n_pieces += 1
                if n_pieces > max_pieces or depth > 14:
                    raise NumericalError(
                        "exterior-band quadrature not converged: the kernel "
                        "amplitude resists refinement on the exterior panel "
                        f"[{float(lo.min()):.3g}, {float(hi.max()):.3g}]"
                    )
                coarse = piece(lo, hi, live, x10, w10, sign)
                fine = piece(lo, hi, live, x20, w20, sign)
                err = float(np.abs(fine - coarse).max())
                scale = float(np.abs(fine).max())
                if err <= max(1e-14, 1e-9 * scale, 1e-12 * float(np.abs(tau).max())):
                    tau += fine
                    est += err
                else:
                    mid = 0.5 * (lo + hi)
                    work.append((lo, mid, depth + 1))
                    work.append((mid, hi, depth + 1))
    amp_bound = (kernel.a_upper * kernel.c2 if kernel.a_upper is not None
                 else 2.0 * seen_max)
    rho = 2.0 * amp_bound * R ** (-2.0 * s) / (2.0 * s)
    return tau, rho, est


def _exterior_matrix(mesh, kernel, tracker, n_panel):
    """Tridiagonal contribution of the exterior band.

    Returns (matrix, truncation_remainder_bound, quadrature_estimate)."""
    s, h, n = kernel.s, mesh.h, mesh.n
    const_amp = kernel.amplitude_const
    T = np.zeros((n, n))
    remainder = 0.0
    quad_est = 0.0

    # interior elements: smooth tau, Gauss-Legendre
    xg, wg = legendre_01(n_panel)
    for k in range(1, mesh.n_elements - 1):
        a, b = mesh.element(k)
        x = a + h * xg
        if const_amp is not None:
            tau = _tau_const(mesh, s, const_amp, x)
        else:
            tau, rho, qe = _tau_general(mesh, kernel, x, tracker)
            remainder = max(remainder, rho)
            quad_est = max(quad_est, qe)
        lam1 = (x - a) / h
        lam0 = 1.0 - lam1
        sh = (lam0, lam1)
        dl, dr = k - 1, k
        for c, gc in enumerate((dl, dr)):
            for d_, gd in enumerate((dl, dr)):
                if 0 <= gc < n and 0 <= gd < n:
                    T[gc, gd] += h * np.sum(wg * sh[c] * sh[d_] * tau)

    # boundary elements: dof shape vanishes linearly at the boundary; absorb
    # the xi^{-2s} blowup of tau into a xi^{2-2s} Jacobi weight
    xj, wj = jacobi_01(n_panel, 2.0 - 2.0 * s)
    for k, at_left in ((0, True), (mesh.n_elements - 1, False)):
        a, b = mesh.element(k)
        xi = h * xj
        x = (a + xi) if at_left else (b - xi)
        if const_amp is not None:
            tau = _tau_const(mesh, s, const_amp, x)
        else:
            tau, rho, qe = _tau_general(mesh, kernel, x, tracker)
            remainder = max(remainder, rho)
            quad_est = max(quad_est, qe)
        g = tau * xi ** (2.0 * s) / (h * h)        # (lam/xi)^2 * xi^{2s} tau
        val = h ** (3.0 - 2.0 * s) * float(wj @ g)
        dof = 0 if at_left else n - 1
        T[dof, dof] += val
    return T, remainder, quad_est


# ---------------------------------------------------------------------------
# Z-structure clamp


def _clamp_z_structure(A, kernel, info):
    """Clamp tiny positive off-diagonal excursions for nonnegative kernels.

    A kernel promising a positive band yields a matrix whose off-diagonal
    entries are nonpositive up to quadrature noise; excursions beyond the
    tolerance mean the assembly itself failed.
    """
    if kernel.a_lower is None:
        info["z_clamp_total"] = 0.0
        info["z_clamp_max"] = 0.0
        info["z_clamp_count"] = 0
        return
    off = ~np.eye(A.shape[0], dtype=bool)
    pos = off & (A > 0.0)
    if np.any(pos):
        worst = float(A[pos].max())
        if worst > _Z_CLAMP_TOL:
            i, j = np.unravel_index(int(np.argmax(np.where(pos, A, -np.inf))), A.shape)
            raise NumericalError(
                f"positive off-diagonal entry {worst:.3e} at ({i}, {j}) exceeds "
                f"the Z-structure tolerance {_Z_CLAMP_TOL:g}"
            )
        info["z_clamp_total"] = float(A[pos].sum())
        info["z_clamp_max"] = worst
        info["z_clamp_count"] = int(pos.sum())
        A[pos] = 0.0
    else:
        info["z_clamp_total"] = 0.0
        info["z_clamp_max"] = 0.0
        info["z_clamp_count"] = 0


def _check_size(mesh):
    if mesh.n > MAX_DOFS:
        raise ValidationError(
            f"dense assembly is limited to {MAX_DOFS} interior nodes, got {mesh.n}"
        )


# ---------------------------------------------------------------------------
# public assembly entry points


def assemble_stiffness(mesh: IntervalMesh, kernel: Kernel):
    """Stiffness matrix of E_a via the antisymmetrized pairing; any kernel.

    Returns (A, info).  info reports the amplitude range seen, whether
    negative kernel values occurred, the analytic bound on the truncated
    exterior remainder, the touching-pair quadrature deviations, and the
    Z-structure clamp summary.
    """
    _check_size(mesh)
    n = mesh.n
    nel = mesh.n_elements
    tracker = _AmpTracker()
    A_pad = _pad(n)

    ident = _identical_anti(mesh, kernel, tracker, _ANTI["ident"])
    ident_lo = _identical_anti(mesh, kernel, tracker, _ANTI["ident_check"])
    dev_ident = _check_pair_convergence(
        ident, ident_lo, lambda k: (k, k), "identical-pair")
    _scatter_batch(A_pad, _element_dofs(nel), ident)

    if nel >= 2:
        adj = _adjacent_anti(mesh, kernel, tracker, _ANTI["adj"])
        adj_lo = _adjacent_anti(mesh, kernel, tracker, _ANTI["adj_check"])
        dev_adj = _check_pair_convergence(
            adj, adj_lo, lambda j: (j, j + 1), "adjacent-pair")
        _scatter_batch(A_pad, _vertex_dofs(nel - 1), adj)
    else:
        dev_adj = 0.0

    _separated_anti(mesh, kernel, A_pad, tracker, _ANTI["sep"])
    A = A_pad[:n, :n].copy()

    T, remainder, ext_est = _exterior_matrix(mesh, kernel, tracker, _ANTI["tail"])
    A += T
    if not np.all(np.isfinite(A)):
        raise NumericalError("assembly produced non-finite stiffness entries")

    info = {
        "route": "antisymmetrized",
        "amp_min": tracker.amp_min,
        "amp_max": tracker.amp_max,
        "negative_amplitude": tracker.amp_min < 0.0,
        "exterior_remainder_bound": remainder,
        "exterior_quad_est": ext_est,
        "quad_dev_identical": dev_ident,
        "quad_dev_adjacent": dev_adj,
    }
    _clamp_z_structure(A, kernel, info)
    return A, info


def assemble_stiffness_symmetric(mesh: IntervalMesh, kernel: Kernel):
    """Stiffness matrix via the symmetric double-difference form.

    Requires a symmetric kernel; constant amplitudes get exact closed
    forms on the touching pairs, general amplitudes an independent
    quadrature profile.  Deliberately shares no quadrature nodes with
    ``assemble_stiffness`` so the two act as mutual oracles.
    """
    if not kernel.symmetric:
        raise ValidationError(
            "double-difference assembly requires a symmetric kernel; "
            "use assemble_stiffness for the general pairing"
        )
    _check_size(mesh)
    n = mesh.n
    nel = mesh.n_elements
    s = kernel.s
    tracker = _AmpTracker()
    A_pad = _pad(n)
    const_amp = kernel.amplitude_const

    if const_amp is not None:
        tracker.see(np.array([const_amp]))
        ident = np.broadcast_to(_identical_const(mesh, s, const_amp), (nel, 2, 2))
        dev_ident = 0.0
    else:
        ident = _identical_sym(mesh, kernel, tracker, _SYM["ident"])
        ident_lo = _identical_sym(mesh, kernel, tracker, _SYM["ident_check"])
        dev_ident = _check_pair_convergence(
            ident, ident_lo, lambda k: (k, k), "identical-pair")
    _scatter_batch(A_pad, _element_dofs(nel), ident)

    dev_adj = 0.0
    if nel >= 2:
        if const_amp is not None:
            tpl = (const_amp * mesh.h ** (1.0 - 2.0 * s)
                   * _adjacent_const_template(s, _SYM["adj_const_angular"]))
            adj = np.broadcast_to(tpl, (nel - 1, 3, 3))
        else:
            adj = _adjacent_sym(mesh, kernel, tracker, _SYM["adj"])
            adj_lo = _adjacent_sym(mesh, kernel, tracker, _SYM["adj_check"])
            dev_adj = _check_pair_convergence(
                adj, adj_lo, lambda j: (j, j + 1), "adjacent-pair")
        _scatter_batch(A_pad, _vertex_dofs(nel - 1), adj)

    _separated_sym(mesh, kernel, A_pad, tracker, _SYM["sep"])
    A = A_pad[:n, :n].copy()

    T, remainder, ext_est = _exterior_matrix(mesh, kernel, tracker, _SYM["tail"])
    A += T
    if not np.all(np.isfinite(A)):
        raise NumericalError("assembly produced non-finite stiffness entries")

    info = {
        "route": "symmetric",
        "amp_min": tracker.amp_min,
        "amp_max": tracker.amp_max,
        "negative_amplitude": tracker.amp_min < 0.0,
        "exterior_remainder_bound": remainder,
        "exterior_quad_est": ext_est,
        "quad_dev_identical": dev_ident,
        "quad_dev_adjacent": dev_adj,
    }
    _clamp_z_structure(A, kernel, info)
    return A, info


# ---------------------------------------------------------------------------
# loads and mass


@dataclass(frozen=True)
class LoadData:
    """Right-hand-side data: a scalar density paired with the test
    function plus an optional vector density paired with its fractional
    derivative.

    ``f_sharp`` is a callable on the mesh interval or an array of nodal
    values (length n for the interior nodes with zero endpoints, or
    n + 2 including the endpoints); ``f_vec`` is a callable on the line,
    treated as supported inside the sampling window used by the
    assembly.
    """

    f_sharp: Union[Callable[[float], float], np.ndarray, None] = None
    f_vec: Optional[Callable[[float], float]] = None


def _sharp_values(mesh, f_sharp, x):
    """Evaluate the scalar density at quadrature points x."""
    if callable(f_sharp):
        vals = np.array([float(f_sharp(t)) for t in x])
    else:
        arr = np.asarray(f_sharp, dtype=float)
        if arr.shape == (mesh.n,):
            fn = PiecewiseLinearFn(mesh, arr)
        elif arr.shape == (mesh.n + 2,):
            fn = PiecewiseLinearFn(mesh, arr[1:-1])
            # endpoint values enter through the two boundary elements
            bump = np.zeros_like(arr)
            bump[0], bump[-1] = arr[0], arr[-1]

            def fn_full(t, base=fn, b=bump, m=mesh):
                t = np.asarray(t, dtype=float)
                lam_lo = np.clip(1.0 - (t - m.x_lo) / m.h, 0.0, 1.0)
                lam_hi = np.clip(1.0 - (m.x_hi - t) / m.h, 0.0, 1.0)
                return base(t) + b[0] * lam_lo + b[-1] * lam_hi

            vals = fn_full(x)
            if not np.all(np.isfinite(vals)):
                raise ValidationError("scalar load values must be finite")
            return vals
        else:
            raise ValidationError(
                f"nodal scalar load needs length {mesh.n} or {mesh.n + 2}, "
                f"got shape {arr.shape}"
            )
        vals = fn(x)
    vals = np.asarray(vals, dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValidationError("scalar load values must be finite")
    return vals


def assemble_load(mesh: IntervalMesh, data: LoadData, s) -> np.ndarray:
    """Load vector b_i = int f_sharp phi_i + int f_vec D^s phi_i.

    The scalar part uses 3-point Gauss per element (exact for the nodal
    representation); the vector part pairs the density with the exact
    fractional derivative of each hat over a window extending twice the
    domain length past each endpoint.
    """
    b = np.zeros(mesh.n)
    if data.f_sharp is not None:
        xg, wg = legendre_01(3)
        h = mesh.h
        for k in range(mesh.n_elements):
            a, _ = mesh.element(k)
            x = a + h * xg
            fx = _sharp_values(mesh, data.f_sharp, x)
            dl, dr = k - 1, k
            if dl >= 0:
                b[dl] += h * np.sum(wg * fx * (1.0 - xg))
            if dr < mesh.n:
                b[dr] += h * np.sum(wg * fx * xg)
    if data.f_vec is not None:
        bd, _ = assemble_ds_load(mesh, data.f_vec, s)
        b += bd
    return b


def hat_ds_profile(t, s):
    """D^s of the reference unit hat (support [-1, 1], peak 1 at 0) at t.

    Piecewise closed form via the kink radii of the folded integrand --
    the same elementary integrals ds_gradient_at performs, specialized to
    the hat's three kinks and vectorized in t.  A hat of width h centered
    at c has D^s phi(x) = h^{-s} * profile((x-c)/h).
    """
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    kinks = np.stack([np.abs(-1.0 - t), np.abs(-t), np.abs(1.0 - t)], axis=-1)
    # collapse float images of radius zero (see ds_gradient_at)
    kinks = np.where(kinks <= 1e-13 * np.maximum(1.0, kinks.max(axis=-1, keepdims=True)),
                     0.0, kinks)
    radii = np.concatenate([np.zeros(t.shape + (1,)), np.sort(kinks, axis=-1)], axis=-1)

    def ref_hat(x):
        return np.maximum(0.0, 1.0 - np.abs(x))

    F = ref_hat(t[..., None] + radii) - ref_hat(t[..., None] - radii)
    ra, rb = radii[..., :-1], radii[..., 1:]
    Fa, Fb = F[..., :-1], F[..., 1:]
    width = rb - ra
    # drop slivers between float images of one kink radius (see
    # ds_gradient_at); their divided differences are pure noise
    ok = width > 1e-13 * np.maximum(1.0, rb)
    B = np.where(ok, (Fb - Fa) / np.where(ok, width, 1.0), 0.0)
    Aco = Fa - B * ra
    first = ra == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        # both np.where branches evaluate; the masked one may hit 0**(-s)
        pow_a = np.where(first, 0.0, ra ** (-s))
        pieces = np.where(
            first,
            B * rb ** (1.0 - s) / (1.0 - s),
            Aco / s * (pow_a - rb ** (-s)) + B / (1.0 - s) * (rb ** (1.0 - s) - ra ** (1.0 - s)),
        )
    out = riesz_constant(1, s) * np.where(ok, pieces, 0.0).sum(axis=-1)
    return float(out[0]) if scalar else out


def assemble_ds_load(mesh: IntervalMesh, f_vec, s, window_factor: float = 2.0):
    """Load from a vector density paired with the fractional derivative:

        b_i = int_W f_vec(x) * D^s phi_i(x) dx,

    W the mesh interval extended by window_factor * |Omega| on each side.
    Returns (b, remainder_bound): the bound covers the neglected exterior
    using |D^s phi_i| <= c_s h dist^{-1-s} and the largest |f_vec| sampled
    beyond the window.
    """
    s = float(s)
    L = mesh.x_hi - mesh.x_lo
    h = mesh.h
    wlo = mesh.x_lo - window_factor * L
    whi = mesh.x_hi + window_factor * L
    # interior panels: each element graded dyadically toward both endpoints,
    # since D^s of a hat has a dist^{1-s} cusp at every mesh node
    levels = 6
    fracs = [0.5 ** k for k in range(levels, 0, -1)]
    edges = [mesh.x_lo]
    for k in range(mesh.n_elements):
        a, b = mesh.element(k)
        w = b - a
        edges.extend(a + w * f for f in fracs)
        edges.extend(b - w * f for f in reversed(fracs[:-1]))
        edges.append(b)
    # exterior: dyadic panels out to the window edge (no interior cusps there)
    t = h
    while mesh.x_lo - t > wlo + 1e-12 * L:
        edges.insert(0, mesh.x_lo - t)
        t *= 2.0
    edges.insert(0, wlo)
    t = h
    while mesh.x_hi + t < whi - 1e-12 * L:
        edges.append(mesh.x_hi + t)
        t *= 2.0
    edges.append(whi)
    edges = np.array(edges)
    xg, wg = legendre_01(10)
    starts = edges[:-1]
    lens = np.diff(edges)
    nodes = (starts[:, None] + lens[:, None] * xg[None, :]).ravel()
    weights = (lens[:, None] * wg[None, :]).ravel()
    fx = np.array([float(f_vec(x)) for x in nodes])
    if not np.all(np.isfinite(fx)):
        raise ValidationError("vector load values must be finite on the window")
    b = np.zeros(mesh.n)
    for i in range(mesh.n):
        c = mesh.nodes[i]
        b[i] = float(np.sum(weights * fx * h ** (-s) * hat_ds_profile((nodes - c) / h, s)))
    # exterior remainder: sample f beyond the window
    probe = np.concatenate([
        wlo - L * np.linspace(0.0, 3.0, 16),
        whi + L * np.linspace(0.0, 3.0, 16),
    ])
    f_out = max(abs(float(f_vec(x))) for x in probe)
    c_s = riesz_constant(1, s)
    margin = window_factor * L
    remainder = mesh.n * f_out * c_s * h * 2.0 * margin ** (-s) / s
    return b, remainder


def lumped_mass(mesh: IntervalMesh) -> np.ndarray:
    """Diagonal of the lumped mass matrix: row sums of int phi_i phi_j = h."""
    return np.full(mesh.n, mesh.h)


# ---------------------------------------------------------------------------
# seminorm helpers (engine: the unit-amplitude double-difference assembly)

_GAG_CACHE = {}


def gagliardo_matrix(mesh: IntervalMesh, s) -> np.ndarray:
    """Matrix G with u^T G v = iint (u(x)-u(y))(v(x)-v(y)) |x-y|^{-1-2s}.

    Twice the unit-amplitude double-difference stiffness (the energy
    carries a 1/2); cached per (interval, n, s).
    """
    key = (mesh.x_lo, mesh.x_hi, mesh.n, float(s))
    G = _GAG_CACHE.get(key)
    if G is None:
        unit = Kernel(s, None, symmetric=True, amplitude_const=1.0,
                      label="unit")
        A, _ = assemble_stiffness_symmetric(mesh, unit)
        G = 2.0 * A
        G.setflags(write=False)
        _GAG_CACHE[key] = G
    return G


def gagliardo_seminorm_sq(u: PiecewiseLinearFn, v: PiecewiseLinearFn, s):
    """Full-plane Gagliardo pairing of zero-extended discrete functions."""
    if not (isinstance(u, PiecewiseLinearFn) and isinstance(v, PiecewiseLinearFn)):
        raise ValidationError("gagliardo_seminorm_sq expects two mesh functions")
    if u.mesh != v.mesh:
        raise ValidationError("gagliardo pairing needs both functions on one mesh")
    G = gagliardo_matrix(u.mesh, s)
    return float(u.values @ G @ v.values)


def ds_norm_sq(u: PiecewiseLinearFn, s):
    """Energy (c_s^2 / 2) [u]^2 of the reference fractional kernel."""
    return 0.5 * riesz_constant(1, s) ** 2 * gagliardo_seminorm_sq(u, u, s)


# ---------------------------------------------------------------------------
# bundled system


@dataclass
class DiscreteSystem:
    """Assembled Galerkin system against the interior hat basis.

    stiffness holds the matrix of E_a plus lam times the lumped mass
    (lam = 0 unless add_mass was applied); load is the right-hand side.
    """

    mesh: IntervalMesh
    kernel: Kernel
    stiffness: np.ndarray
    mass_lumped: np.ndarray
    load: np.ndarray
    lam: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def A(self) -> np.ndarray:
        return self.stiffness

    @property
    def b(self) -> np.ndarray:
        return self.load

    def add_mass(self, lam: float) -> "DiscreteSystem":
        return add_mass(self, lam)

    def residual(self, u: np.ndarray) -> np.ndarray:
        return self.stiffness @ u - self.load

    def energy(self, u: np.ndarray) -> float:
        return 0.5 * float(u @ self.stiffness @ u) - float(self.load @ u)


def add_mass(system: DiscreteSystem, lam: float) -> DiscreteSystem:
    """System for the form E_a(u, v) + lam (u, v) with lumped mass."""
    lam = float(lam)
    if lam < 0.0:
        raise ValidationError(f"mass coefficient must be nonnegative, got {lam}")
    A2 = system.stiffness + np.diag(lam * system.mass_lumped)
    info = dict(system.info)
    return DiscreteSystem(system.mesh, system.kernel, A2,
                          system.mass_lumped.copy(), system.load.copy(),
                          lam=system.lam + lam, info=info)


def _validate_system(A, kernel, info):
    rows = A.sum(axis=1)
    if float(rows.min()) < -1e-8:
        i = int(np.argmin(rows))
        raise NumericalError(
            f"stiffness row {i} sums to {rows[i]:.3e}; the zero-exterior "
            "condition requires nonnegative row sums"
        )
    if kernel.symmetric:
        scale = float(np.abs(A).max())
        dev = float(np.abs(A - A.T).max())
        if dev > 1e-6 * scale:
            raise NumericalError(
                f"symmetric kernel produced asymmetric matrix: deviation "
                f"{dev:.3e} against scale {scale:.3e}"
            )
        info["symmetry_deviation"] = dev


def build_system(mesh, kernel, f_sharp=None, f_vec=None,
                 route: str = "antisymmetrized") -> DiscreteSystem:
    """Assemble stiffness plus loads into a DiscreteSystem.

    route selects the assembly formula: 'antisymmetrized' (default, any
    kernel) or 'symmetric' (double-difference, symmetric kernels only).
    """
    if route == "antisymmetrized":
        A, info = assemble_stiffness(mesh, kernel)
    elif route == "symmetric":
        A, info = assemble_stiffness_symmetric(mesh, kernel)
    else:
        raise ValidationError(f"unknown assembly route {route!r}")
    _validate_system(A, kernel, info)
    data = LoadData(f_sharp=f_sharp, f_vec=f_vec)
    b = np.zeros(mesh.n)
    if f_sharp is not None or f_vec is not None:
        b = assemble_load(mesh, data, kernel.s)
    if f_vec is not None:
        _, rem = assemble_ds_load(mesh, f_vec, kernel.s)
        info["ds_load_remainder_bound"] = rem
    return DiscreteSystem(mesh, kernel, A, lumped_mass(mesh), b, lam=0.0,
                          info=info)
