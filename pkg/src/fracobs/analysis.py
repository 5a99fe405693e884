"""Theorem-checking harness over the discrete obstacle solvers.

Three groups of checks live here, one per classical result about
obstacle problems that survives discretization verbatim.

Residual sandwich (Lewy-Stampacchia).  For the one-obstacle problem the
residual r = A u of the solution is pinched between the load and the
obstacle's own residual,

    b_i  <=  r_i  <=  max(b_i, (A psi)_i)        componentwise,

with the mirrored lower bound min(b_i, (A phi)_i) appearing when an
upper obstacle phi is present, and an interleaved chain of the per-layer
loads for a stack of N ordered membranes.  These are sharp order-dual
statements: they say the constraining force never exceeds the force the
obstacle itself would exert.  The checkers report the worst violation of
each side and a verdict.

Penalization error.  Replacing the constraint by a bounded penalty of
strength zeta and steepness 1/eps perturbs the solution by at most

    ds_norm_sq(u - u_eps)  <=  eps * (C_theta / a_*) * ||zeta||_1,

linear in eps, where C_theta is the penalty profile's overshoot constant
and a_* the kernel's lower coercivity bound.  The study tabulates the
measured error against this budget for a list of eps values and insists
on monotone decay.

Classical limit.  As the order s increases to 1 the (properly
renormalized) nonlocal operator turns into the Dirichlet Laplacian, and
the obstacle solutions follow: their L^2 distance to the classical
P1-tridiagonal obstacle solution shrinks.  The sweep solves the same
bump-obstacle problem across an ascending list of orders and compares
endpoints against an independently solved classical reference.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .assembly import (DiscreteSystem, LoadData, assemble_load, build_system,
                       ds_norm_sq)
from .errors import ConvergenceError, NumericalError, ValidationError
from .fractional import check_order, normalization_ratio
from .kernels import fractional_laplacian_kernel
from .meshes import IntervalMesh, PiecewiseLinearFn
from .penalties import get_penalty
from .solvers import (ObstacleSet, PenalizationConfig, SolveResult, _as_nodal,
                      minimal_shift_density, psor_solve, solve_penalized,
                      solve_psor)

__all__ = [
    "LSReport",
    "SweepRecord",
    "ClassicalSolution",
    "check_ls_one",
    "check_ls_two",
    "check_ls_membranes",
    "penalization_error_study",
    "classical_obstacle_solve",
    "s_to_one_study",
    "PENALIZATION_COLUMNS",
    "SWEEP_COLUMNS",
]

_LOG = logging.getLogger("fracobs.analysis")

# Column order for the CSV tables the studies feed (one row per eps / per s).
PENALIZATION_COLUMNS = ("eps", "error_sq", "bound", "ratio", "iterations",
                        "converged")
SWEEP_COLUMNS = ("s", "l2_distance", "max_distance", "h")


@dataclass(frozen=True)
class LSReport:
    """Verdict of one residual-sandwich check.

    lower_violation / upper_violation are the worst componentwise
    excursions (positive parts) below the lower bound and above the
    upper bound; `passed` is the verdict, true exactly when both stay
    within tol.
    """

    lower_violation: float
    upper_violation: float
    tol: float
    passed: bool

    @classmethod
    def from_violations(cls, lower_violation, upper_violation, tol):
        lv = float(lower_violation)
        uv = float(upper_violation)
        tol = float(tol)
        return cls(lv, uv, tol, bool(lv <= tol and uv <= tol))


@dataclass(frozen=True)
class SweepRecord:
    """One row of the classical-limit sweep: order, solution, distances."""

    s: float
    solution: np.ndarray
    l2_distance: float
    max_distance: float
    h: float

    def __post_init__(self):
        vals = np.asarray(self.solution, dtype=float)
        if not (np.all(np.isfinite(vals))
                and np.isfinite(self.l2_distance)
                and np.isfinite(self.max_distance)):
            raise NumericalError(
                f"sweep record at s={self.s} contains non-finite entries"
            )


@dataclass(frozen=True)
class ClassicalSolution:
    """Obstacle solution of the local (s=1) P1 problem on the same mesh."""

    u: np.ndarray
    stiffness: np.ndarray
    load: np.ndarray
    iterations: int
    converged: bool


def _require_converged(result, caller):
    if not getattr(result, "converged", False):
        raise ValidationError(
            f"{caller} requires a converged solver result; this one is "
            f"flagged converged={result.converged} after "
            f"{result.iterations} iterations"
        )


def _default_tol(tol, *loads):
    if tol is not None:
        return float(tol)
    scale = max((float(np.max(np.abs(b))) for b in loads), default=0.0)
    return 1e-6 * scale if scale > 0.0 else 1e-12


def _finite_nodal(mesh, obj, name):
    arr = _as_nodal(mesh, obj, name)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must be finite at every node")
    return arr


def check_ls_one(system: DiscreteSystem, psi_h, result: SolveResult,
                 tol=None) -> LSReport:
    """Residual sandwich for the lower-obstacle problem.

    Checks b - tol <= A u <= max(b, A psi) + tol componentwise.  The
    default tol is 1e-6 times the sup-norm of the load.
    """
    _require_converged(result, "check_ls_one")
    u = np.asarray(result.u, dtype=float)
    if u.ndim != 1:
        raise ValidationError("check_ls_one expects a single-field solution")
    psi = _finite_nodal(system.mesh, psi_h, "psi_h")
    tol = _default_tol(tol, system.b)
    r = system.A @ u
    upper = np.maximum(system.b, system.A @ psi)
    lo_viol = float(np.max(np.clip(system.b - r, 0.0, None)))
    hi_viol = float(np.max(np.clip(r - upper, 0.0, None)))
    return LSReport.from_violations(lo_viol, hi_viol, tol)


def check_ls_two(system: DiscreteSystem, psi_h, phi_h, result: SolveResult,
                 tol=None) -> LSReport:
    """Residual sandwich for the two-obstacle problem.

    Checks min(b, A phi) - tol <= A u <= max(b, A psi) + tol.
    """
    _require_converged(result, "check_ls_two")
    u = np.asarray(result.u, dtype=float)
    if u.ndim != 1:
        raise ValidationError("check_ls_two expects a single-field solution")
    psi = _finite_nodal(system.mesh, psi_h, "psi_h")
    phi = _finite_nodal(system.mesh, phi_h, "phi_h")
    tol = _default_tol(tol, system.b)
    r = system.A @ u
    lower = np.minimum(system.b, system.A @ phi)
    upper = np.maximum(system.b, system.A @ psi)
    lo_viol = float(np.max(np.clip(lower - r, 0.0, None)))
    hi_viol = float(np.max(np.clip(r - upper, 0.0, None)))
    return LSReport.from_violations(lo_viol, hi_viol, tol)


def check_ls_membranes(system: DiscreteSystem, f_list, result: SolveResult,
                       tol=None) -> list:
    """Residual sandwich chain for an ordered stack of membranes.

    For layer j (1-based) the residual A u_j must sit between the
    running minimum of the loads above it, min(b^1..b^j), and the
    running maximum of the loads below it, max(b^j..b^N).  The top
    layer has no membrane above, so its lower bound is the trivial
    min(b^1, A u_1).  Returns one LSReport per layer.
    """
    _require_converged(result, "check_ls_membranes")
    u = np.asarray(result.u, dtype=float)
    if u.ndim != 2:
        raise ValidationError(
            "check_ls_membranes expects a stacked (N, n) solution"
        )
    n_mem = u.shape[0]
    if len(f_list) != n_mem:
        raise ValidationError(
            f"got {len(f_list)} loads for {n_mem} membranes"
        )
    bs = [np.asarray(b, dtype=float) for b in f_list]
    for j, b in enumerate(bs):
        if b.shape != (system.mesh.n,):
            raise ValidationError(
                f"load {j} has shape {b.shape}, expected ({system.mesh.n},)"
            )
    tol = _default_tol(tol, *bs)
    stack = np.stack(bs)
    run_min = np.minimum.accumulate(stack, axis=0)
    run_max = np.maximum.accumulate(stack[::-1], axis=0)[::-1]
    reports = []
    for j in range(n_mem):
        r = system.A @ u[j]
        lower = np.minimum(bs[0], r) if j == 0 else run_min[j]
        lo_viol = float(np.max(np.clip(lower - r, 0.0, None)))
        hi_viol = float(np.max(np.clip(r - run_max[j], 0.0, None)))
        reports.append(LSReport.from_violations(lo_viol, hi_viol, tol))
    return reports


def penalization_error_study(system: DiscreteSystem, psi_h,
                             theta, eps_list) -> list:
    """Tabulate the penalization error against its linear-in-eps budget.

    Uses the minimal admissible penalty weight, the density whose lumped
    integral equals the obstacle's positive residual excess.  For each
    eps the measured ds_norm_sq(u - u_eps) must stay within
    eps * (C_theta / a_*) * ||zeta||_1 (with 0.1% headroom for the
    solves' own tolerance), and the error must not increase as eps
    shrinks.  Violations raise NumericalError; non-converged sub-solves
    raise ConvergenceError.  Returns one row per eps, in the order
    given, with columns PENALIZATION_COLUMNS.
    """
    shape = get_penalty(theta)
    eps_arr = [float(e) for e in eps_list]
    if not eps_arr:
        raise ValidationError("eps_list must be nonempty")
    if any(e <= 0.0 for e in eps_arr):
        raise ValidationError("every eps must be positive")
    a_lo = system.kernel.a_lower
    if a_lo is None or a_lo <= 0.0:
        raise ValidationError(
            "penalization_error_study needs a kernel with a declared "
            "positive lower coercivity bound"
        )
    psi = _finite_nodal(system.mesh, psi_h, "psi_h")
    s = system.kernel.s

    ref = solve_psor(system, ObstacleSet(lower=psi), tol=1e-13)
    if not ref.converged:
        raise ConvergenceError(
            "reference constrained solve did not converge", iterate=ref.u
        )
    zeta = minimal_shift_density(system, psi)
    zeta_l1 = float(np.sum(system.mass_lumped * zeta))

    rows = []
    for eps in eps_arr:
        res = solve_penalized(system, psi,
                              PenalizationConfig(shape, eps, zeta=zeta))
        if not res.converged:
            raise ConvergenceError(
                f"penalized solve at eps={eps} did not converge",
                iterate=res.u,
            )
        diff = PiecewiseLinearFn(system.mesh, ref.u - res.u)
        err = ds_norm_sq(diff, s)
        bound = eps * (shape.c_theta / a_lo) * zeta_l1
        if err > bound * (1.0 + 1e-3) + 1e-18:
            raise NumericalError(
                f"penalization error {err:.6e} exceeds its budget "
                f"{bound:.6e} at eps={eps}"
            )
        rows.append({
            "eps": eps,
            "error_sq": err,
            "bound": bound,
            "ratio": err / bound if bound > 0.0 else 0.0,
            "iterations": res.iterations,
            "converged": res.converged,
        })

    by_eps = sorted(rows, key=lambda row: -row["eps"])
    for prev, nxt in zip(by_eps, by_eps[1:]):
        slack = 1e-14 * (1.0 + prev["error_sq"])
        if nxt["error_sq"] > prev["error_sq"] + slack:
            raise NumericalError(
                "penalization error is not monotone in eps: "
                f"e({nxt['eps']}) = {nxt['error_sq']:.6e} > "
                f"e({prev['eps']}) = {prev['error_sq']:.6e}"
            )
    return rows


def classical_obstacle_solve(mesh: IntervalMesh, psi, f_sharp,
                             tol=1e-12) -> ClassicalSolution:
    """Local P1 obstacle solve: tridiagonal stiffness, same load rule.

    The stiffness is the standard 1/h * tridiag(-1, 2, -1) of the
    Dirichlet Laplacian on the interior hats; the load uses the same
    elementwise Gauss rule as the nonlocal systems so the two problems
    share data exactly.
    """
    n = mesh.n
    psi_arr = _finite_nodal(mesh, psi, "psi")
    h = mesh.h
    A = (np.diag(np.full(n, 2.0 / h))
         + np.diag(np.full(n - 1, -1.0 / h), 1)
         + np.diag(np.full(n - 1, -1.0 / h), -1))
    b = assemble_load(mesh, LoadData(f_sharp=f_sharp), 0.5)
    x, info = psor_solve(A, b, lower=psi_arr, tol=tol)
    if not info["converged"]:
        raise ConvergenceError(
            "classical reference obstacle solve did not converge", iterate=x
        )
    return ClassicalSolution(u=x, stiffness=A, load=b,
                             iterations=info["iterations"],
                             converged=info["converged"])


def _sweep_one(mesh, psi_arr, f_sharp, s, u_classical):
    base = build_system(mesh, fractional_laplacian_kernel(s),
                        f_sharp=f_sharp)
    scaled = DiscreteSystem(
        mesh, base.kernel,
        normalization_ratio(1, s) * base.stiffness,
        base.mass_lumped, base.load, lam=base.lam,
        info=dict(base.info, classical_scaling=normalization_ratio(1, s)),
    )
    res = solve_psor(scaled, ObstacleSet(lower=psi_arr), tol=1e-12)
    if not res.converged:
        raise ConvergenceError(
            f"obstacle solve at s={s} did not converge", iterate=res.u
        )
    delta = res.u - u_classical
    return SweepRecord(
        s=s,
        solution=res.u,
        l2_distance=float(np.sqrt(mesh.h * np.sum(delta * delta))),
        max_distance=float(np.max(np.abs(delta))),
        h=mesh.h,
    )


def s_to_one_study(mesh: IntervalMesh, psi, f_sharp, s_list,
                   threads=1) -> list:
    """Sweep the order toward 1 and compare against the classical limit.

    Each order solves the obstacle problem with the standard-normalized
    nonlocal stiffness (the scaling under which the family of operators
    converges to the Dirichlet Laplacian), then records L^2 and max
    distances to the classical tridiagonal solution of the same data.
    Asserts that the distance at the last (largest) order is strictly
    smaller than at the first; interior monotonicity is logged, not
    asserted.  Returns one SweepRecord per order, ascending; with
    threads > 1 the per-order solves run concurrently (each order's
    system is private, so results are identical to the serial run).
    """
    orders = [check_order(s) for s in s_list]
    if not orders:
        raise ValidationError("s_list must be nonempty")
    if any(b <= a for a, b in zip(orders, orders[1:])):
        raise ValidationError("s_list must be strictly ascending")
    psi_arr = _finite_nodal(mesh, psi, "psi")

    classical = classical_obstacle_solve(mesh, psi_arr, f_sharp)
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=min(threads, len(orders))) as ex:
            records = list(ex.map(
                lambda s: _sweep_one(mesh, psi_arr, f_sharp, s, classical.u),
                orders))
    else:
        records = [_sweep_one(mesh, psi_arr, f_sharp, s, classical.u)
                   for s in orders]

    first, last = records[0], records[-1]
    if not last.l2_distance < first.l2_distance:
        raise NumericalError(
            "classical-limit distances do not shrink: "
            f"d(s={last.s}) = {last.l2_distance:.6e} >= "
            f"d(s={first.s}) = {first.l2_distance:.6e}"
        )
    drops = sum(b.l2_distance < a.l2_distance
                for a, b in zip(records, records[1:]))
    _LOG.info("classical-limit sweep: %d/%d consecutive distances decrease",
              drops, len(records) - 1)
    return records
