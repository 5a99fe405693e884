"""Constrained solvers: projected relaxation, penalization, membranes.

All solvers act on assembled systems A u = b with box or ordering
constraints.  Projected SOR is the baseline: on the clamped Z-matrices
the assembly produces, projected Gauss-Seidel is globally convergent,
and a projected Richardson fallback covers matrices that lose that
structure.  The penalized route replaces the constraint by a saturating
reaction term with density zeta and width eps, solved by damped Newton
over a continuation ladder in eps, with a diagonally preconditioned
fixed-point iteration as the fallback; exhausted fallbacks surface as a
non-converged result, never an exception.

Obstacles may be one-sided or two-sided (ObstacleSet); ordered membranes
u_1 >= ... >= u_N share one operator and are solved either by outer
Gauss-Seidel over membranes or by one coupled penalized Newton solve.
A brute-force enumeration oracle for tiny systems provides ground truth
for everything else.
"""

import itertools
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np

from .assembly import DiscreteSystem, lumped_mass
from .errors import ConvergenceError, NumericalError, ValidationError
from .meshes import PiecewiseLinearFn
from .penalties import PenaltyFunction, get_penalty

__all__ = [
    "ObstacleSet",
    "SolveResult",
    "PenalizationConfig",
    "solve_psor",
    "solve_penalized",
    "solve_penalized_lower",
    "solve_two_obstacles",
    "solve_n_membranes",
    "lcp_oracle",
    "solve_unconstrained",
    "minimal_shift_density",
    "membrane_shifts",
    "psor_solve",
]

_BIG = 1e18          # sentinel for an absent bound; excluded from activity
_ACT_TOL = 1e-9


def _as_nodal(mesh, obj, name):
    """Accept a PiecewiseLinearFn, a callable, an array, or a scalar."""
    if obj is None:
        return None
    if isinstance(obj, PiecewiseLinearFn):
        if obj.mesh != mesh:
            raise ValidationError(f"{name} lives on a different mesh")
        return obj.values.copy()
    if callable(obj):
        return np.array([float(obj(x)) for x in mesh.nodes])
    arr = np.asarray(obj, dtype=float)
    if arr.ndim == 0:
        return np.full(mesh.n, float(arr))
    if arr.shape != (mesh.n,):
        raise ValidationError(f"{name} must have {mesh.n} nodal values, got {arr.shape}")
    return arr.copy()


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class ObstacleSet:
    """Admissible box: lower <= v <= upper nodewise.

    Either bound may be omitted (None), given as a scalar, a callable on
    the interval, a nodal vector, or a mesh function; +-inf entries are
    allowed and mean "no constraint at this node".
    """

    lower: object = None
    upper: object = None

    def bounds(self, mesh):
        """Nodal (lo, hi) with infinities replaced by the +-1e18 sentinel."""
        lo = _as_nodal(mesh, self.lower, "lower obstacle")
        hi = _as_nodal(mesh, self.upper, "upper obstacle")
        lo = np.full(mesh.n, -_BIG) if lo is None else np.clip(lo, -_BIG, _BIG)
        hi = np.full(mesh.n, _BIG) if hi is None else np.clip(hi, -_BIG, _BIG)
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise ValidationError("obstacle values must not be NaN")
        bad = np.nonzero(lo > hi)[0]
        if bad.size:
            raise ValidationError(
                "empty admissible set: lower obstacle exceeds upper at node "
                f"indices {bad.tolist()[:8]}"
            )
        return lo, hi


@dataclass
class SolveResult:
    """Outcome of a constrained solve.

    u is an n-vector, or an (N, n) matrix for membranes.  residual is
    A u - b (per membrane for the matrix case).  active_lower /
    active_upper are index arrays of nodes pinned to their bound within
    act_tol; for membranes the flat index j*n + i refers to membrane j,
    node i, against the membrane below (lower) or above (upper).
    history records the per-iteration max nodal update.
    """

    u: np.ndarray
    residual: np.ndarray
    active_lower: np.ndarray
    active_upper: np.ndarray
    iterations: int
    converged: bool
    history: List[float] = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def values(self):
        return self.u

    def fn(self, mesh):
        """The solution as a mesh function (single-membrane results)."""
        if self.u.ndim != 1:
            raise ValidationError("fn() applies to single-membrane results")
        return PiecewiseLinearFn(mesh, self.u)


@dataclass(frozen=True)
class PenalizationConfig:
    """Parameters of the bounded penalization.

    theta: a PenaltyFunction or catalog name; epsilon: smoothing width;
    zeta: penalty density (n-vector; defaults to the minimal admissible
    one) or a (zeta_lower, zeta_upper) pair for two-obstacle problems.
    Admissibility of zeta is checked against the obstacle at solve time:
    the lumped integral h*zeta must dominate the obstacle's residual
    excess (A psi - b)^+ nodewise.
    """

    theta: Union[PenaltyFunction, str] = "ramp"
    epsilon: float = 1e-6
    zeta: object = None

    def __post_init__(self):
        if not float(self.epsilon) > 0.0:
            raise ValidationError(
                f"penalization width must be positive, got {self.epsilon}")

    def shape(self) -> PenaltyFunction:
        return get_penalty(self.theta)


# ---------------------------------------------------------------------------
# projected relaxation engine


def _check_matrix(A):
    d = np.diag(A)
    if np.any(d <= 0.0) or not np.all(np.isfinite(A)):
        raise NumericalError("system matrix must have positive finite diagonal")
    off = A - np.diag(d)
    scale = float(np.max(d))
    return bool(np.max(off) > 1e-12 * scale)


def psor_solve(A, b, lower=None, upper=None, x0=None, omega=1.5,
               tol=1e-10, max_sweeps=100_000):
    """Projected SOR for the box-constrained quadratic program

        min 1/2 u^T A u - b^T u   subject to  lower <= u <= upper.

    Sweeps stop when the largest nodal update falls below tol.  If the
    update size stalls for 50 consecutive sweeps the iteration falls back
    to projected Richardson with step 1/||A||_inf, which is globally
    convergent for symmetric positive definite A.  Running out of sweeps
    returns a flagged result rather than raising.

    Returns (x, info); info holds iterations / converged / history / flags.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n = b.size
    nonmono = _check_matrix(A)
    lo = np.full(n, -_BIG) if lower is None else np.asarray(lower, dtype=float)
    hi = np.full(n, _BIG) if upper is None else np.asarray(upper, dtype=float)
    if np.any(lo > hi):
        raise ValidationError("lower bound exceeds upper bound at some node")
    x = np.clip(np.zeros(n) if x0 is None else np.asarray(x0, dtype=float), lo, hi)
    diag = np.diag(A)
    best = np.inf
    stall = 0
    richardson = False
    step = 1.0 / float(np.max(np.sum(np.abs(A), axis=1)))
    if not 0.0 < omega < 2.0:
        raise ValidationError(f"relaxation factor must lie in (0, 2), got {omega}")

    history = []
    delta = np.inf
    for sweep in range(1, max_sweeps + 1):
        if richardson:
            x_new = np.clip(x + step * (b - A @ x), lo, hi)
            delta = float(np.max(np.abs(x_new - x)))
            x = x_new
        else:
            delta = 0.0
            for i in range(n):
                target = x[i] + (b[i] - A[i] @ x) / diag[i]
                xi = x[i] + omega * (target - x[i])
                xi = min(max(xi, lo[i]), hi[i])
                delta = max(delta, abs(xi - x[i]))
                x[i] = xi
        history.append(delta)
        if delta < tol:
            return x, {
                "iterations": sweep,
                "converged": True,
                "history": history,
                "nonmonotone_matrix": nonmono,
                "fallback_richardson": richardson,
            }
        if delta < best * (1.0 - 1e-3):
            best = delta
            stall = 0
        else:
            stall += 1
            if stall >= 50 and not richardson:
                richardson = True
                stall = 0
                best = np.inf
    return x, {
        "iterations": max_sweeps,
        "converged": False,
        "history": history,
        "nonmonotone_matrix": nonmono,
        "fallback_richardson": richardson,
    }


def solve_unconstrained(system: DiscreteSystem) -> PiecewiseLinearFn:
    """Plain Galerkin solve (no constraints)."""
    u = np.linalg.solve(system.A, system.b)
    return PiecewiseLinearFn(system.mesh, u)


def _activity(u, lo, hi, act_tol):
    act_lo = np.nonzero((np.abs(u - lo) <= act_tol) & (lo > -_BIG / 2))[0]
    act_hi = np.nonzero((np.abs(hi - u) <= act_tol) & (hi < _BIG / 2))[0]
    return act_lo, act_hi


def _result(system, x, info, lo, hi, act_tol, method, extra=None):
    act_lo, act_hi = _activity(x, lo, hi, act_tol)
    inf_keys = ("iterations", "converged", "history")
    details = {k: v for k, v in info.items() if k not in inf_keys}
    details["method"] = method
    if extra:
        details.update(extra)
    return SolveResult(
        u=x,
        residual=system.A @ x - system.b,
        active_lower=act_lo,
        active_upper=act_hi,
        iterations=info["iterations"],
        converged=info["converged"],
        history=info.get("history", []),
        info=details,
    )


def solve_psor(system: DiscreteSystem, obstacles: ObstacleSet, omega=1.5,
               tol=1e-10, max_iter=100_000, act_tol=_ACT_TOL,
               x0=None) -> SolveResult:
    """One- or two-sided obstacle problem by projected relaxation.

    Exhausting max_iter yields a result flagged converged=False; an
    empty admissible box is a usage error.
    """
    lo, hi = obstacles.bounds(system.mesh)
    if x0 is None:
        start = np.clip(np.zeros(system.mesh.n), lo, hi)
    else:
        start = np.clip(_as_nodal(system.mesh, x0, "x0"), lo, hi)
    x, info = psor_solve(system.A, system.b, lower=lo, upper=hi,
                         x0=start, omega=omega, tol=tol, max_sweeps=max_iter)
    return _result(system, x, info, lo, hi, act_tol, "psor")


def solve_two_obstacles(system: DiscreteSystem, obstacles: ObstacleSet,
                        method: str = "psor",
                        config: Optional[PenalizationConfig] = None,
                        tol=None, max_iter=None, act_tol=_ACT_TOL) -> SolveResult:
    """Bilateral problem psi <= u <= phi, by relaxation or penalization.

    method='psor' projects; method='penalized' adds a saturating term per
    obstacle (densities from config.zeta as a (lower, upper) pair, else
    minimal admissible ones).  Both obstacles must be present.
    """
    mesh = system.mesh
    lo, hi = obstacles.bounds(mesh)
    if obstacles.lower is None or obstacles.upper is None:
        raise ValidationError("two-obstacle solve needs both obstacles")
    if method == "psor":
        tol = 1e-10 if tol is None else tol
        max_iter = 100_000 if max_iter is None else max_iter
        x, info = psor_solve(system.A, system.b, lower=lo, upper=hi,
                             x0=np.clip(np.zeros(mesh.n), lo, hi),
                             tol=tol, max_sweeps=max_iter)
        return _result(system, x, info, lo, hi, act_tol, "psor")
    if method == "penalized":
        config = PenalizationConfig() if config is None else config
        tol = 1e-12 if tol is None else tol
        max_iter = 120 if max_iter is None else max_iter
        z_pair = config.zeta if config.zeta is not None else (None, None)
        if not (isinstance(z_pair, (tuple, list)) and len(z_pair) == 2):
            raise ValidationError(
                "two-obstacle penalization needs zeta as a (lower, upper) pair")
        return _penalized_engine(system, lo, hi, config, z_pair[0], z_pair[1],
                                 side="above", tol=tol, max_iter=max_iter,
                                 act_tol=act_tol)
    raise ValidationError(f"unknown method {method!r}: use 'psor' or 'penalized'")


# ---------------------------------------------------------------------------
# penalization


def minimal_shift_density(system: DiscreteSystem, psi, side="above") -> np.ndarray:
    """Smallest admissible penalty density for one obstacle.

    Admissibility asks M zeta >= (A psi - b)^+ nodewise (M the lumped
    mass), i.e. zeta is a density whose lumped integral dominates the
    obstacle's residual excess; for an upper obstacle phi the excess is
    (b - A phi)^+.
    """
    arr = _as_nodal(system.mesh, psi, "obstacle")
    M = lumped_mass(system.mesh)
    excess = system.A @ arr - system.b
    if side == "below":
        excess = -excess
    elif side != "above":
        raise ValidationError(f"side must be 'above' or 'below', got {side!r}")
    return np.maximum(excess, 0.0) / M


def _check_zeta(system, zeta, obstacle, side, name):
    """Validate a user density against the admissibility floor."""
    M = lumped_mass(system.mesh)
    excess = system.A @ obstacle - system.b
    if side == "below":
        excess = -excess
    need = np.maximum(excess, 0.0)
    if np.any(M * zeta < need - 1e-10):
        raise ValidationError(
            f"{name} is not admissible: its lumped integral must dominate "
            "the obstacle's residual excess nodewise")


def _theta_pair(shape: PenaltyFunction, side: str):
    """Effective theta/dtheta(t, eps) for approach from above or below."""
    if side == "above":
        def g(t, eps):
            return shape.theta(t / eps)

        def dg(t, eps):
            return shape.dtheta(t / eps) / eps
    elif side == "below":
        def g(t, eps):
            return 1.0 - shape.theta(-t / eps)

        def dg(t, eps):
            return shape.dtheta(-t / eps) / eps
    else:
        raise ValidationError(f"side must be 'above' or 'below', got {side!r}")
    return g, dg


def _damped_newton(F, J, x0, tol=1e-12, max_iter=120, max_halvings=30,
                   max_nonmonotone=20, floor=None):
    """Semismooth Newton with backtracking and a full-step fallback.

    Backtracking halves the step until the residual decreases; at kinks
    of a piecewise-linear penalty no step length may decrease the
    residual, and there the full undamped step is taken instead (for
    these saturating terms that is exactly active-set iteration, which
    terminates on its own).  A watchdog aborts after too many
    consecutive non-improving full steps.

    `floor(x)`, when given, returns the componentwise rounding floor of
    the residual evaluation: a term with stiffness zeta/eps turns the
    rounding of u - psi into residual noise of size
    M zeta * min(1, mach * |args| / eps), which dwarfs any fixed tol once
    eps is tiny.  Convergence is declared when the residual is within tol
    of that floor.
    """
    x = x0.copy()
    r = F(x)
    rn = float(np.max(np.abs(r)))
    details = {"damping_used": False, "full_step_fallbacks": 0}
    bad = 0
    for it in range(1, max_iter + 1):
        slack = np.abs(r) - (floor(x) if floor is not None else 0.0)
        if float(np.max(slack)) < tol:
            return x, it - 1, details
        dx = np.linalg.solve(J(x), -r)
        # Once the Newton correction is below roundoff in u-space the
        # iterate is converged even if the residual floor sits above tol.
        if float(np.max(np.abs(dx))) < 4e-16 * (1.0 + float(np.max(np.abs(x)))):
            details["step_converged"] = True
            return x + dx, it, details
        t = 1.0
        accepted = False
        for _ in range(max_halvings):
            x_try = x + t * dx
            r_try = F(x_try)
            rn_try = float(np.max(np.abs(r_try)))
            if rn_try < rn:
                accepted = True
                break
            t *= 0.5
            details["damping_used"] = True
        if accepted:
            bad = 0
        else:
            bad += 1
            details["full_step_fallbacks"] += 1
            if bad > max_nonmonotone:
                raise ConvergenceError(
                    "penalized Newton stalled: no residual decrease along "
                    "the Newton direction", iterate=x, residual=rn,
                )
            x_try = x + dx
            r_try = F(x_try)
            rn_try = float(np.max(np.abs(r_try)))
        x, r, rn = x_try, r_try, rn_try
    raise ConvergenceError(
        f"penalized Newton did not converge in {max_iter} iterations",
        iterate=x, residual=rn,
    )


def _fixed_point(F, D, x0, tol, floor=None, max_iter=5000):
    """Diagonally preconditioned residual iteration x <- x - F(x)/D.

    D must dominate the diagonal slope of F (diag(A) plus the penalty's
    Lipschitz diagonal); for the monotone saturating terms used here the
    iteration contracts, slowly but surely, making it the fallback when
    Newton stalls at a kink.
    """
    x = x0.copy()
    for it in range(1, max_iter + 1):
        r = F(x)
        slack = np.abs(r) - (floor(x) if floor is not None else 0.0)
        if float(np.max(slack)) < tol:
            return x, it
        x = x - r / D
    raise ConvergenceError(
        f"fixed-point fallback did not converge in {max_iter} iterations",
        iterate=x, residual=float(np.max(np.abs(F(x)))),
    )


def _newton_continuation(F, J, x0, eps, tol, floor=None, max_iter=120,
                         fp_diag=None):
    """Newton over a decreasing ladder of smoothing widths.

    Tiny eps makes the penalty terms nearly discontinuous, and a cold
    Newton start can stall at a kink; solving at eps 1e-2, 1e-3, ... and
    warm-starting each stage keeps every Newton solve in its quadratic
    regime.  F, J (and floor, fp_diag) take (u, eps).  A stage that
    exhausts Newton falls back to fixed-point iteration; if that fails
    too the last iterate is returned flagged as non-converged.

    Returns (x, iterations, converged, details).
    """
    ladder = [eps]
    e = 1e-2
    while e > eps * 1.0000001:
        ladder.append(e)
        e *= 0.1
    ladder.sort(reverse=True)
    x = x0
    total = 0
    details = {}
    for e in ladder:
        stage_floor = None if floor is None else (lambda u, e_=e: floor(u, e_))
        try:
            x, its, details = _damped_newton(
                lambda u, e_=e: F(u, e_), lambda u, e_=e: J(u, e_), x,
                tol=tol, max_iter=max_iter, floor=stage_floor)
            total += its
        except ConvergenceError as err:
            x = np.asarray(err.iterate, dtype=float)
            if fp_diag is None:
                details = {"failure": str(err)}
                details["stages"] = len(ladder)
                return x, total, False, details
            try:
                x, its = _fixed_point(
                    lambda u, e_=e: F(u, e_), fp_diag(e), x,
                    tol=tol, floor=stage_floor)
                total += its
                details = {"fixed_point_fallback": True}
            except ConvergenceError as err2:
                x = np.asarray(err2.iterate, dtype=float)
                details = {"failure": str(err2), "fixed_point_fallback": True}
                details["stages"] = len(ladder)
                return x, total, False, details
    details["stages"] = len(ladder)
    return x, total, True, details


def _penalized_engine(system, psi_arr, phi_arr, config, zeta_lo, zeta_hi,
                      side, tol, max_iter, act_tol):
    """Shared one/two-obstacle penalized solve; bounds already nodal."""
    shape = config.shape()
    eps = float(config.epsilon)
    mesh = system.mesh
    M = lumped_mass(mesh)
    A = system.A
    b = system.b
    absA = np.abs(A)
    mach = 8.0 * np.finfo(float).eps

    if zeta_lo is None:
        z_lo = minimal_shift_density(system, psi_arr, side="above")
    else:
        z_lo = _as_nodal(mesh, zeta_lo, "zeta")
        _check_zeta(system, z_lo, psi_arr, "above", "zeta")

    g, dg = _theta_pair(shape, side)

    def _noise(u, e, term, obs, gfun):
        # Roundoff of the argument u - obs, pushed through the actual
        # saturation profile: zero on flat pieces, term * mach|args|/e in
        # a transition region.
        d = u - obs
        delta = mach * (np.abs(u) + np.abs(obs))
        g0 = gfun(d, e)
        return term * np.maximum(np.abs(gfun(d + delta, e) - g0),
                                 np.abs(gfun(d - delta, e) - g0))

    if phi_arr is None:
        def F(u, e):
            return A @ u + M * z_lo * g(u - psi_arr, e) - b - M * z_lo

        def J(u, e):
            return A + np.diag(M * z_lo * dg(u - psi_arr, e))

        def floor(u, e):
            return (mach * (absA @ np.abs(u) + np.abs(b))
                    + _noise(u, e, M * z_lo, psi_arr, g))

        def fp_diag(e):
            return np.diag(A) + M * z_lo * shape.lipschitz / e

        x0 = np.maximum(psi_arr, np.linalg.solve(A, b))
        z_hi = None
    else:
        if zeta_hi is None:
            z_hi = minimal_shift_density(system, phi_arr, side="below")
        else:
            z_hi = _as_nodal(mesh, zeta_hi, "zeta_upper")
            _check_zeta(system, z_hi, phi_arr, "below", "zeta_upper")

        def F(u, e):
            return (A @ u - b
                    - M * z_lo * (1.0 - shape.theta((u - psi_arr) / e))
                    + M * z_hi * shape.theta((u - phi_arr) / e))

        def J(u, e):
            return A + np.diag(
                M * z_lo * shape.dtheta((u - psi_arr) / e) / e
                + M * z_hi * shape.dtheta((u - phi_arr) / e) / e
            )

        def floor(u, e):
            def th(d, e_):
                return shape.theta(d / e_)
            return (mach * (absA @ np.abs(u) + np.abs(b))
                    + _noise(u, e, M * z_lo, psi_arr, th)
                    + _noise(u, e, M * z_hi, phi_arr, th))

        def fp_diag(e):
            return np.diag(A) + (M * z_lo + M * z_hi) * shape.lipschitz / e

        x0 = np.clip(np.linalg.solve(A, b), psi_arr, phi_arr)

    x, its, converged, details = _newton_continuation(
        F, J, x0, eps, tol=tol, floor=floor, max_iter=max_iter,
        fp_diag=fp_diag)
    lo = psi_arr
    hi = phi_arr if phi_arr is not None else np.full(mesh.n, _BIG)
    info = {"iterations": its, "converged": converged, "history": []}
    extra = {"eps": eps, "penalty": shape.name, "zeta": z_lo,
             "zeta_upper": z_hi, **details}
    return _result(system, x, info, lo, hi, act_tol, "penalized", extra)


def solve_penalized(system: DiscreteSystem, psi, config: PenalizationConfig,
                    tol=1e-12, max_iter=120, act_tol=_ACT_TOL) -> SolveResult:
    """Penalized lower-obstacle problem, approached from above.

    Solves A u + M zeta . theta((u - psi)/eps) = b + M zeta; as eps -> 0
    the solutions decrease monotonically to the constrained one.  Newton
    stagnation falls back to fixed-point iteration; if both fail the
    result is flagged, not raised.
    """
    psi_arr = _as_nodal(system.mesh, psi, "psi")
    if psi_arr is None:
        raise ValidationError("solve_penalized needs an obstacle")
    if isinstance(config.zeta, (tuple, list)):
        raise ValidationError("one-obstacle penalization takes a single zeta")
    return _penalized_engine(system, psi_arr, None, config, config.zeta, None,
                             side="above", tol=tol, max_iter=max_iter,
                             act_tol=act_tol)


def solve_penalized_lower(system: DiscreteSystem, psi,
                          config: PenalizationConfig, tol=1e-12,
                          max_iter=120, act_tol=_ACT_TOL) -> SolveResult:
    """Penalized obstacle problem approached from below.

    Uses the reflected profile 1 - theta(-t/eps), producing increasing
    approximations; with a saturating theta the pair brackets the
    constrained solution within eps.
    """
    psi_arr = _as_nodal(system.mesh, psi, "psi")
    if psi_arr is None:
        raise ValidationError("solve_penalized_lower needs an obstacle")
    if isinstance(config.zeta, (tuple, list)):
        raise ValidationError("one-obstacle penalization takes a single zeta")
    return _penalized_engine(system, psi_arr, None, config, config.zeta, None,
                             side="below", tol=tol, max_iter=max_iter,
                             act_tol=act_tol)


# ---------------------------------------------------------------------------
# ordered membranes


def membrane_shifts(loads, mesh):
    """Closed-form admissible shift densities for ordered membranes.

    With load densities f_j = b_j / h, the base density is the nodewise
    largest leading-average  zeta_0 = max_i (f_1 + ... + f_i) / i,  and

        zeta_i = i * zeta_0 - (f_1 + ... + f_i)   >= 0,

    which vanishes exactly where the first i loads are the maximizing
    block.  Returns (zeta_0, [zeta_1, ..., zeta_N]).
    """
    bs = [_as_nodal(mesh, l, f"load {j}") for j, l in enumerate(loads)]
    M = lumped_mass(mesh)
    fs = np.stack([bj / M for bj in bs])          # densities, (N, n)
    partial = np.cumsum(fs, axis=0)
    means = partial / np.arange(1, len(bs) + 1)[:, None]
    zeta0 = np.max(means, axis=0)
    zetas = [i * zeta0 - partial[i - 1] for i in range(1, len(bs) + 1)]
    return zeta0, zetas


def _pava_nonincreasing(t):
    """L2 projection of a vector onto the cone x_1 >= x_2 >= ... >= x_N.

    Pool-adjacent-violators: violating neighbours are merged into blocks
    sharing their mean.  Pooled layers then have residuals that cancel
    within each block, which is exactly the interface-multiplier balance
    the layered complementarity system demands.
    """
    blocks = []                       # stack of (mean, count)
    for v in t:
        m, c = float(v), 1
        while blocks and blocks[-1][0] < m:
            m0, c0 = blocks.pop()
            m = (m0 * c0 + m * c) / (c0 + c)
            c += c0
        blocks.append((m, c))
    out = np.empty(len(t))
    k = 0
    for m, c in blocks:
        out[k:k + c] = m
        k += c
    return out


def _membranes_gs(system, bs, tol, max_outer, act_tol):
    """Nodewise Gauss-Seidel sweeps for the ordered-membranes system.

    Each node visit solves its local N-layer complementarity exactly:
    the layers' relaxed single-node targets are projected onto the
    nonincreasing cone, so layers glued at a node share the pooled mean.
    Fixed points of this sweep carry balanced interface multipliers --
    unlike a membrane-frozen sweep (each layer solved against frozen
    neighbours), whose glued states need not be stationary for the
    coupled system.
    """
    A = system.A
    diag = np.diag(A).copy()
    N = len(bs)
    B = np.stack([np.asarray(bj, dtype=float) for bj in bs])
    n = B.shape[1]
    raw = np.stack([np.linalg.solve(A, bj) for bj in bs])
    us = -np.sort(-raw, axis=0)       # feasible ordered start
    omega = 1.5                       # same relaxation as the scalar sweeps
    history = []
    converged = False
    for sweep in range(1, max_outer + 1):
        change = 0.0
        for i in range(n):
            t = (B[:, i] - us @ A[i] + diag[i] * us[:, i]) / diag[i]
            x = _pava_nonincreasing(us[:, i] + omega * (t - us[:, i]))
            change = max(change, float(np.max(np.abs(x - us[:, i]))))
            us[:, i] = x
        history.append(change)
        if change < 10.0 * tol:
            converged = True
            break
    sweeps = len(history)
    # KKT telescoping: A u_j - b_j = lam_j - lam_{j-1}, lam_0 = 0
    lam = np.cumsum(np.stack([A @ us[j] - B[j] for j in range(N)]),
                    axis=0)[:-1]
    return us, lam, {"iterations": sweeps, "converged": converged,
                     "history": history, "inner_iterations": sweeps * n}


def _membranes_penalized(system, bs, config, tol, max_iter):
    """Coupled penalized membranes: one Newton solve on N*n unknowns.

    Interface i carries the saturating term M zeta_i (1 - theta((u_i -
    u_{i+1})/eps)); the outermost interfaces fold away since theta(+inf)=1
    (membrane 0 has nothing above, membrane N nothing below).
    """
    shape = config.shape()
    eps = float(config.epsilon)
    mesh = system.mesh
    N = len(bs)
    n = mesh.n
    M = lumped_mass(mesh)
    _, zetas = membrane_shifts(bs, mesh)
    A = system.A

    def unpack(x):
        return x.reshape(N, n)

    def F(x, e):
        U = unpack(x)
        out = np.empty_like(U)
        for j in range(N):
            r = A @ U[j] - bs[j]
            if j < N - 1:   # interface below membrane j: u_j >= u_{j+1}
                r = r - M * zetas[j] * (1.0 - shape.theta((U[j] - U[j + 1]) / e))
            if j > 0:       # interface above: u_{j-1} >= u_j
                r = r + M * zetas[j - 1] * (1.0 - shape.theta((U[j - 1] - U[j]) / e))
            out[j] = r
        return out.ravel()

    def J(x, e):
        U = unpack(x)
        JJ = np.zeros((N * n, N * n))
        for j in range(N):
            sl = slice(j * n, (j + 1) * n)
            JJ[sl, sl] += A
            if j < N - 1:
                d = M * zetas[j] * shape.dtheta((U[j] - U[j + 1]) / e) / e
                sl2 = slice((j + 1) * n, (j + 2) * n)
                JJ[sl, sl] += np.diag(d)
                JJ[sl, sl2] -= np.diag(d)
            if j > 0:
                d = M * zetas[j - 1] * shape.dtheta((U[j - 1] - U[j]) / e) / e
                sl0 = slice((j - 1) * n, j * n)
                JJ[sl, sl] += np.diag(d)
                JJ[sl, sl0] -= np.diag(d)
        return JJ

    absA = np.abs(A)
    mach = 8.0 * np.finfo(float).eps

    def floor(x, e):
        U = unpack(x)
        out = np.empty_like(U)

        def th_noise(term, hi, lo, e_):
            d = hi - lo
            delta = mach * (np.abs(hi) + np.abs(lo))
            g0 = shape.theta(d / e_)
            return term * np.maximum(np.abs(shape.theta((d + delta) / e_) - g0),
                                     np.abs(shape.theta((d - delta) / e_) - g0))

        for j in range(N):
            fl = mach * (absA @ np.abs(U[j]) + np.abs(bs[j]))
            if j < N - 1:
                fl = fl + th_noise(M * zetas[j], U[j], U[j + 1], e)
            if j > 0:
                fl = fl + th_noise(M * zetas[j - 1], U[j - 1], U[j], e)
            out[j] = fl
        return out.ravel()

    def fp_diag(e):
        base = np.tile(np.diag(A), N)
        extra = np.zeros((N, n))
        for j in range(N):
            if j < N - 1:
                extra[j] += M * zetas[j] * shape.lipschitz / e
            if j > 0:
                extra[j] += M * zetas[j - 1] * shape.lipschitz / e
        return base + extra.ravel()

    raw = np.stack([np.linalg.solve(A, bj) for bj in bs])
    x0 = (-np.sort(-raw, axis=0)).ravel()
    x, its, converged, details = _newton_continuation(
        F, J, x0, eps, tol=tol, floor=floor, max_iter=max_iter,
        fp_diag=fp_diag)
    U = unpack(x)
    lam = np.stack([
        M * zetas[i] * (1.0 - shape.theta((U[i] - U[i + 1]) / eps))
        for i in range(N - 1)
    ]) if N > 1 else np.zeros((0, n))
    return U, lam, {"iterations": its, "converged": converged, "history": [],
                    "penalty": shape.name, "eps": eps,
                    "zetas": zetas, **details}


def solve_n_membranes(system: DiscreteSystem, f_list: Sequence,
                      method: str = "gs",
                      config: Optional[PenalizationConfig] = None,
                      tol=None, max_iter=None, act_tol=_ACT_TOL) -> SolveResult:
    """N ordered membranes u_1 >= u_2 >= ... >= u_N sharing one operator.

    f_list holds the N load vectors (arrays, callables, or scalars).
    method='gs' sweeps membranes with bilateral inner solves until an
    outer fixed point; method='penalized' runs one coupled Newton solve
    with the closed-form interface densities.  Outer non-convergence is
    flagged on the result.  The result's u is an (N, n) matrix; interface
    multipliers sit in info["interface_multipliers"].
    """
    mesh = system.mesh
    N = len(f_list)
    if N < 2:
        raise ValidationError("need at least two membranes")
    bs = [_as_nodal(mesh, l, f"load {j}") for j, l in enumerate(f_list)]
    if method == "gs":
        tol = 1e-10 if tol is None else tol
        max_iter = 500 if max_iter is None else max_iter
        U, lam, info = _membranes_gs(system, bs, tol, max_iter, act_tol)
    elif method == "penalized":
        config = PenalizationConfig() if config is None else config
        tol = 1e-12 if tol is None else tol
        max_iter = 120 if max_iter is None else max_iter
        U, lam, info = _membranes_penalized(system, bs, config, tol, max_iter)
    else:
        raise ValidationError(f"unknown method {method!r}: use 'gs' or 'penalized'")
    n = mesh.n
    res = np.stack([system.A @ U[j] - bs[j] for j in range(N)])
    act_lo = []        # membrane j pinned to the one below it
    act_hi = []        # membrane j pinned to the one above it
    for j in range(N):
        if j < N - 1:
            act_lo.extend(j * n + np.nonzero(U[j] - U[j + 1] <= act_tol)[0])
        if j > 0:
            act_hi.extend(j * n + np.nonzero(U[j - 1] - U[j] <= act_tol)[0])
    inf_keys = ("iterations", "converged", "history")
    details = {k: v for k, v in info.items() if k not in inf_keys}
    details["method"] = method
    details["interface_multipliers"] = lam
    return SolveResult(
        u=U,
        residual=res,
        active_lower=np.array(sorted(act_lo), dtype=int),
        active_upper=np.array(sorted(act_hi), dtype=int),
        iterations=info["iterations"],
        converged=info["converged"],
        history=info.get("history", []),
        info=details,
    )


# ---------------------------------------------------------------------------
# enumeration oracle


def lcp_oracle(system: DiscreteSystem, obstacles: ObstacleSet,
               order: str = "forward", comp_tol: float = 1e-10) -> np.ndarray:
    """Exact solution of a tiny obstacle problem by active-set enumeration.

    Every assignment of each node to lower-active / free / upper-active
    is tried; the reduced linear system is solved with the active nodes
    pinned, and the unique assignment whose solution satisfies both
    feasibility and the multiplier sign conditions (within comp_tol)
    wins.  order='reversed' enumerates and eliminates in the opposite
    index order -- an independent arithmetic path used to cross-check
    the oracle against itself.
    """
    n = system.mesh.n
    if n > 10:
        raise ValidationError(f"enumeration oracle is limited to 10 nodes, got {n}")
    if order not in ("forward", "reversed"):
        raise ValidationError(f"order must be 'forward' or 'reversed', got {order!r}")
    lo, hi = obstacles.bounds(system.mesh)
    A = system.A
    b = system.b
    has_upper = np.any(hi < _BIG / 2)
    states = (-1, 0, 1) if has_upper else (0, 1)   # 1 = lower-active
    idx = np.arange(n) if order == "forward" else np.arange(n)[::-1]
    assignments = itertools.product(states, repeat=n)
    if order == "reversed":
        assignments = reversed(list(assignments))

    for assign in assignments:
        x = np.empty(n)
        fixed = np.zeros(n, dtype=bool)
        feasible = True
        for pos, state in zip(idx, assign):
            if state == 1:
                if lo[pos] <= -_BIG / 2:
                    feasible = False
                    break
                x[pos] = lo[pos]
                fixed[pos] = True
            elif state == -1:
                if hi[pos] >= _BIG / 2:
                    feasible = False
                    break
                x[pos] = hi[pos]
                fixed[pos] = True
        if not feasible:
            continue
        free = idx[~fixed[idx]]
        if free.size:
            Af = A[np.ix_(free, free)]
            rhs = b[free] - A[np.ix_(free, np.nonzero(fixed)[0])] @ x[fixed]
            try:
                x[free] = np.linalg.solve(Af, rhs)
            except np.linalg.LinAlgError:
                continue
        if np.any(x < lo - comp_tol) or np.any(x > hi + comp_tol):
            continue
        r = A @ x - b
        sign_ok = True
        for pos, state in zip(idx, assign):
            if state == 1 and r[pos] < -comp_tol:
                sign_ok = False
            elif state == -1 and r[pos] > comp_tol:
                sign_ok = False
            elif state == 0 and abs(r[pos]) > comp_tol:
                sign_ok = False
            if not sign_ok:
                break
        if sign_ok:
            return x
    raise NumericalError(
        "no active-set assignment satisfies complementarity -- "
        "the system matrix likely violates the structure the problem needs"
    )
