import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from conftest import make_system
from fracobs import (
    ConvergenceError,
    DiscreteSystem,
    IntervalMesh,
    ObstacleSet,
    PenalizationConfig,
    ValidationError,
    build_system,
    fractional_laplacian_kernel,
    lcp_oracle,
    lumped_mass,
    membrane_shifts,
    minimal_shift_density,
    perturbed_kernel,
    solve_n_membranes,
    solve_penalized,
    solve_penalized_lower,
    solve_psor,
    solve_two_obstacles,
    solve_unconstrained,
    ds_norm_sq,
)
from fracobs.meshes import PiecewiseLinearFn
from fracobs.solvers import psor_solve


def random_instance(rng, n=6, s=0.6, two_sided=False):
    mesh = IntervalMesh(-1.0, 1.0, n)
    kernel = fractional_laplacian_kernel(s)
    f_vals = rng.uniform(-2.0, 2.0, size=n)
    sys_ = build_system(mesh, kernel, f_sharp=f_vals)
    psi = rng.uniform(-0.5, 0.2, size=n)
    if not two_sided:
        return sys_, ObstacleSet(lower=psi)
    phi = psi + rng.uniform(0.05, 1.0, size=n)
    return sys_, ObstacleSet(lower=psi, upper=phi)


# ---------------------------------------------------------------------------
# projected SOR vs the two independent oracles

def test_psor_matches_enumerations():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for trial in range(30):
        sys_, obs = random_instance(rng, n=6)
        res = solve_psor(sys_, obs, tol=1e-13)
        assert res.converged
        u_pkg = lcp_oracle(sys_, obs)
        lo, _ = obs.bounds(sys_.mesh)
        u_ind = oracles.enumerate_box_lcp(sys_.A, sys_.b, lo)
        worst = max(worst,
                    np.max(np.abs(res.u - u_pkg)),
                    np.max(np.abs(res.u - u_ind)))
    assert worst <= 1e-8, worst


def test_psor_two_obstacles_matches_enumerations():
    rng = np.random.default_rng(77)
    for trial in range(15):
        sys_, obs = random_instance(rng, n=5, two_sided=True)
        res = solve_two_obstacles(sys_, obs, tol=1e-13)
        assert res.converged
        u_pkg = lcp_oracle(sys_, obs)
        lo, hi = obs.bounds(sys_.mesh)
        u_ind = oracles.enumerate_box_lcp(sys_.A, sys_.b, lo, hi)
        assert np.max(np.abs(res.u - u_pkg)) <= 1e-8
        assert np.max(np.abs(res.u - u_ind)) <= 1e-8


def test_oracle_orders_agree():
    rng = np.random.default_rng(5)
    for trial in range(10):
        sys_, obs = random_instance(rng, n=6, two_sided=(trial % 2 == 0))
        a = lcp_oracle(sys_, obs, order="forward")
        b = lcp_oracle(sys_, obs, order="reversed")
        assert np.max(np.abs(a - b)) <= 1e-9


def test_psor_kkt_from_definition():
    rng = np.random.default_rng(13)
    for trial in range(10):
        sys_, obs = random_instance(rng, n=10, s=0.75, two_sided=True)
        res = solve_psor(sys_, obs, tol=1e-13)
        lo, hi = obs.bounds(sys_.mesh)
        ok, resid = oracles.kkt_ok(sys_.A, sys_.b, res.u, lo, hi, tol=1e-8)
        assert ok, resid


def test_solution_respects_box():
    rng = np.random.default_rng(100)
    sys_, obs = random_instance(rng, n=24, two_sided=True)
    res = solve_psor(sys_, obs)
    lo, hi = obs.bounds(sys_.mesh)
    assert np.all(res.u >= lo - 1e-12)
    assert np.all(res.u <= hi + 1e-12)
    assert np.intersect1d(res.active_lower, res.active_upper).size == 0


def test_callable_and_scalar_obstacles():
    sys_ = make_system(n=12, s=0.6, f=lambda x: -1.0)
    res_fn = solve_psor(sys_, ObstacleSet(lower=lambda x: 0.15 - x * x))
    mesh = sys_.mesh
    res_arr = solve_psor(sys_, ObstacleSet(lower=0.15 - mesh.nodes ** 2))
    assert np.max(np.abs(res_fn.u - res_arr.u)) <= 1e-10


def test_crossing_obstacles_rejected():
    sys_ = make_system(n=8)
    with pytest.raises(ValidationError):
        solve_psor(sys_, ObstacleSet(lower=lambda x: 1.0, upper=lambda x: 0.0))


def test_nan_obstacle_rejected():
    sys_ = make_system(n=4)
    bad = np.array([0.0, np.nan, 0.0, 0.0])
    with pytest.raises(ValidationError):
        solve_psor(sys_, ObstacleSet(lower=bad))


def test_omega_validated():
    sys_ = make_system(n=6)
    for omega in (0.0, 2.0, -1.0, 2.5):
        with pytest.raises(ValidationError):
            solve_psor(sys_, ObstacleSet(lower=lambda x: -1.0), omega=omega)


def test_max_iter_flags_not_raises():
    sys_ = make_system(n=32, s=0.7, f=lambda x: 1.0)
    res = solve_psor(sys_, ObstacleSet(lower=lambda x: -10.0), max_iter=3)
    assert not res.converged
    assert res.iterations == 3
    assert len(res.history) == 3


def test_warm_start():
    rng = np.random.default_rng(3)
    sys_, obs = random_instance(rng, n=16)
    res1 = solve_psor(sys_, obs, tol=1e-12)
    res2 = solve_psor(sys_, obs, tol=1e-12, x0=res1.u)
    assert res2.converged
    assert res2.iterations <= 2
    assert np.max(np.abs(res2.u - res1.u)) <= 1e-10


def test_unconstrained_solve():
    sys_ = make_system(n=20, s=0.5)
    u = solve_unconstrained(sys_)
    assert isinstance(u, PiecewiseLinearFn)
    assert np.max(np.abs(sys_.A @ u.values - sys_.b)) <= 1e-10
    # positive load, comparison structure: solution positive
    assert np.all(u.values > 0.0)


def test_two_obstacle_methods_agree():
    rng = np.random.default_rng(8)
    sys_, obs = random_instance(rng, n=12, two_sided=True)
    r1 = solve_two_obstacles(sys_, obs, method="psor")
    r2 = solve_two_obstacles(sys_, obs, method="penalized",
                             config=PenalizationConfig(theta="ramp", epsilon=1e-7))
    assert np.max(np.abs(r1.u - r2.u)) <= 1e-5
    with pytest.raises(ValidationError):
        solve_two_obstacles(sys_, obs, method="cg")
    with pytest.raises(ValidationError):
        solve_two_obstacles(sys_, ObstacleSet(lower=np.zeros(12)))


@given(seed=st.integers(0, 10 ** 6))
@settings(max_examples=25, deadline=None)
def test_psor_property_random_mmatrix(seed):
    # plain M-matrix LCPs, not assembled ones: diagonally dominant with
    # random nonpositive off-diagonals
    rng = np.random.default_rng(seed)
    n = rng.integers(2, 9)
    off = -rng.uniform(0.0, 1.0, size=(n, n))
    np.fill_diagonal(off, 0.0)
    A = off + np.diag(np.abs(off).sum(axis=1) + rng.uniform(0.5, 2.0, size=n))
    b = rng.uniform(-2, 2, size=n)
    lo = rng.uniform(-1, 0.5, size=n)
    x, info = psor_solve(A, b, lower=lo, tol=1e-13, max_sweeps=50_000)
    assert info["converged"]
    ok, resid = oracles.kkt_ok(A, b, x, lo, tol=2e-8)
    assert ok, resid


# ---------------------------------------------------------------------------
# penalization

def partial_contact_system(n=16, s=0.7):
    sys_ = make_system(n=n, s=s, f=lambda x: 0.0)
    psi = 0.3 - 1.8 * sys_.mesh.nodes ** 2
    return sys_, psi


def test_penalized_above_sandwich_and_monotone():
    sys_, psi = partial_contact_system()
    exact = solve_psor(sys_, ObstacleSet(lower=psi), tol=1e-13).u
    prev = None
    for eps in (0.1, 0.02, 0.004):
        res = solve_penalized(sys_, psi, PenalizationConfig(theta="ramp", epsilon=eps))
        assert res.converged
        # convergence from above: u >= exact solution up to an O(eps) slack
        assert np.min(res.u - exact) >= -1e-10
        gap = float(np.max(res.u - exact))
        if prev is not None:
            assert gap <= prev + 1e-12
        prev = gap
    assert prev <= 0.004 * 1.05  # saturating ramp pins the gap to ~eps


def test_penalized_energy_error_bound():
    sys_, psi = partial_contact_system()
    exact = solve_psor(sys_, ObstacleSet(lower=psi), tol=1e-13).u
    zeta = minimal_shift_density(sys_, psi, side="above")
    l1 = float(np.sum(lumped_mass(sys_.mesh) * zeta))
    from fracobs import get_penalty
    shape = get_penalty("ramp")
    a_star = sys_.kernel.a_lower
    for eps in (0.1, 0.05, 0.025):
        res = solve_penalized(sys_, psi,
                              PenalizationConfig(theta=shape, epsilon=eps, zeta=zeta))
        diff = PiecewiseLinearFn(sys_.mesh, res.u - exact)
        err = ds_norm_sq(diff, sys_.kernel.s)
        bound = eps * (shape.c_theta / a_star) * l1
        assert err <= bound * (1 + 1e-3), (eps, err, bound)


def test_penalized_lower_route_approaches_from_below():
    # same lower-obstacle problem, approximated from the other side
    sys_, psi = partial_contact_system()
    exact = solve_psor(sys_, ObstacleSet(lower=psi), tol=1e-13).u
    res = solve_penalized_lower(sys_, psi,
                               PenalizationConfig(theta="ramp", epsilon=0.01))
    assert res.converged
    assert np.max(res.u - exact) <= 1e-10   # stays below the solution
    assert np.max(np.abs(res.u - exact)) <= 0.011


def test_minimal_shift_density_is_minimal_admissible():
    sys_, psi = partial_contact_system()
    zeta = minimal_shift_density(sys_, psi, side="above")
    m = lumped_mass(sys_.mesh)
    excess = np.maximum(sys_.A @ psi - sys_.b, 0.0)
    assert np.all(zeta >= 0.0)
    assert np.max(np.abs(m * zeta - excess)) <= 1e-12


def test_inadmissible_zeta_rejected():
    sys_, psi = partial_contact_system()
    zeta = minimal_shift_density(sys_, psi, side="above")
    weak = 0.5 * zeta
    with pytest.raises(ValidationError) as exc:
        solve_penalized(sys_, psi,
                        PenalizationConfig(theta="ramp", epsilon=0.05, zeta=weak))
    assert "not admissible" in str(exc.value)


@pytest.mark.parametrize("shape", ["ramp", "rational", "arctan"])
def test_penalized_shapes_all_converge(shape):
    sys_, psi = partial_contact_system(n=12)
    exact = solve_psor(sys_, ObstacleSet(lower=psi), tol=1e-13).u
    res = solve_penalized(sys_, psi, PenalizationConfig(theta=shape, epsilon=1e-3))
    assert res.converged
    assert np.min(res.u - exact) >= -1e-9
    assert np.max(res.u - exact) <= 0.05
    assert res.info["penalty"] == shape


def test_penalized_requires_obstacle():
    sys_, _ = partial_contact_system()
    with pytest.raises(ValidationError):
        solve_penalized(sys_, None, PenalizationConfig())


def test_epsilon_validation():
    with pytest.raises(ValidationError):
        PenalizationConfig(theta="ramp", epsilon=0.0)
    with pytest.raises(ValidationError):
        PenalizationConfig(theta="ramp", epsilon=-1e-3)


# ---------------------------------------------------------------------------
# membranes

def membrane_loads(sys_, specs):
    from fracobs import LoadData, assemble_load
    return [assemble_load(sys_.mesh, LoadData(f_sharp=f), sys_.kernel.s)
            for f in specs]


def test_membranes_match_slsqp():
    sys_ = make_system(n=5, s=0.6, f=lambda x: 0.0)
    bs = membrane_loads(sys_, [lambda x: 0.3, lambda x: 1.2, lambda x: -0.5])
    res = solve_n_membranes(sys_, bs, tol=1e-12)
    assert res.converged
    U_ref = oracles.slsqp_membranes(sys_.A, bs, tol=1e-14)
    assert np.max(np.abs(res.u - U_ref)) <= 1e-6
    kkt = oracles.membrane_kkt_residuals(sys_.A, bs, res.u)
    assert max(kkt.values()) <= 1e-8, kkt


def test_membranes_ordered_and_multipliers():
    sys_ = make_system(n=10, s=0.5, f=lambda x: 0.0)
    bs = membrane_loads(sys_, [lambda x: -1.0, lambda x: 2.0])
    res = solve_n_membranes(sys_, bs, tol=1e-12)
    assert res.u.shape == (2, 10)
    assert np.all(res.u[0] >= res.u[1] - 1e-12)
    lam = res.info["interface_multipliers"]
    assert len(lam) == 1
    assert np.all(np.asarray(lam[0]) >= -1e-10)


def test_membranes_equal_loads_coincide():
    sys_ = make_system(n=8, s=0.6, f=lambda x: 0.0)
    bs = membrane_loads(sys_, [lambda x: 1.0, lambda x: 1.0])
    res = solve_n_membranes(sys_, bs, tol=1e-13)
    assert np.max(np.abs(res.u[0] - res.u[1])) <= 1e-9


def test_membranes_methods_agree():
    sys_ = make_system(n=6, s=0.6, f=lambda x: 0.0)
    bs = membrane_loads(sys_, [lambda x: 0.0, lambda x: 1.0, lambda x: 0.5])
    r1 = solve_n_membranes(sys_, bs, method="gs", tol=1e-12)
    r2 = solve_n_membranes(sys_, bs, method="penalized",
                           config=PenalizationConfig(theta="ramp", epsilon=1e-8),
                           tol=1e-12)
    assert np.max(np.abs(r1.u - r2.u)) <= 1e-6


def test_membranes_need_two():
    sys_ = make_system(n=6)
    with pytest.raises(ValidationError) as exc:
        solve_n_membranes(sys_, [np.zeros(6)])
    assert "at least two membranes" in str(exc.value)


def test_membranes_nonsymmetric_kernel_kkt():
    mesh = IntervalMesh(-1.0, 1.0, 6)
    kern = perturbed_kernel(0.6, lambda x, y: 1.0 + 0.3 * np.tanh(x - y),
                            symmetric=False)
    sys_ = build_system(mesh, kern, f_sharp=lambda x: 0.0)
    bs = membrane_loads(sys_, [lambda x: -0.4, lambda x: 0.9])
    res = solve_n_membranes(sys_, bs, tol=1e-12)
    assert res.converged
    kkt = oracles.membrane_kkt_residuals(sys_.A, bs, res.u)
    assert max(kkt.values()) <= 1e-8, kkt


def test_membrane_shifts_closed_form():
    mesh = IntervalMesh(-1.0, 1.0, 8)
    m = lumped_mass(mesh)
    zeta0, per_layer = membrane_shifts([m * 1.0, m * 0.0], mesh)
    assert np.allclose(zeta0, 1.0)
    assert np.allclose(per_layer[0], 0.0)
    assert np.allclose(per_layer[1], 1.0)


def test_membrane_shifts_defining_properties():
    # minimal admissible shifts: nonnegative, tight somewhere at each node,
    # and every shifted density hits the common ceiling zeta_0
    mesh = IntervalMesh(-1.0, 1.0, 8)
    m = lumped_mass(mesh)
    rng = np.random.default_rng(5)
    loads = [m * rng.normal(size=8) for _ in range(4)]
    zeta0, zs = membrane_shifts(loads, mesh)
    Z = np.stack(zs)
    assert np.all(Z >= -1e-12)
    assert np.all(np.min(Z, axis=0) <= 1e-12)          # tight layer per node
    prev = np.zeros(8)
    for load, z in zip(loads, zs):
        assert np.allclose(load / m + z - prev, zeta0)  # f_i + z_i - z_{i-1}
        prev = z
