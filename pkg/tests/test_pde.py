import numpy as np
import pytest

from stablechaos import stable_levy as sl
from stablechaos.particles import BumpDensity, BurgersSaturated, ConstantDrift, ProductForm, ZeroDrift
from stablechaos.pde import (
    NonContraction,
    NumericalFailure,
    PDEProblem,
    solve_picard,
    solve_splitting,
    weak_form_residual,
)
from stablechaos.spectral import GridField, GridSpec, l2_norm, semigroup_apply, sobolev_norm

D1 = sl.StableDriver(1.5)
BURGERS = BurgersSaturated((1.0,), 1.0)


def bump(n, L=8.0, center=0.0, radius=2.0):
    return BumpDensity((center,), radius).on_grid(GridSpec(1, L, n))


def problem(n=1024, T=0.5, dt=0.005, F=BURGERS, driver=D1, **kw):
    return PDEProblem(driver, F, bump(n), T, dt, **kw)


def test_problem_validation():
    with pytest.raises(ValueError):
        problem(T=0.5, dt=0.003)
    with pytest.raises(ValueError):
        PDEProblem(D1, BURGERS, GridField(GridSpec(1, 8.0, 256), -bump(256).values), 0.5, 0.005)
    with pytest.raises(ValueError):
        PDEProblem(D1, BURGERS, GridField(GridSpec(1, 8.0, 256), 2 * bump(256).values), 0.5, 0.005)
    with pytest.raises(ValueError):
        PDEProblem(D1, BURGERS, bump(256, center=6.0, radius=1.5), 0.5, 0.005)
    with pytest.raises(ValueError):
        PDEProblem(sl.StableDriver(1.5, 2), BURGERS, bump(256), 0.5, 0.005)


def test_zero_drift_is_pure_semigroup():
    p = problem(n=512, F=ZeroDrift())
    tr = solve_splitting(p)
    for t in (0.1, 0.25, 0.5):
        exact = semigroup_apply(D1, t, p.u0)
        assert np.max(np.abs(tr.at(t).values - exact.values)) < 1e-13
    pic = solve_picard(p)
    assert pic.info["intervals"][0]["iterations"] == 1
    assert np.max(np.abs(pic.at(0.5).values - tr.at(0.5).values)) < 1e-13


def test_pure_transport():
    p = PDEProblem(None, ConstantDrift((0.8,)), bump(1024), 0.5, 0.005)
    tr = solve_splitting(p)
    exact = bump(1024, center=0.4)
    assert np.max(np.abs(tr.at(0.5).values - exact.values)) < 1e-6


def test_mass_conservation_both_methods():
    p = problem()
    for tr in (solve_splitting(p), solve_picard(p)):
        assert np.max(np.abs(tr.masses() - tr.masses()[0])) < 1e-8


def test_restart_consistency():
    for F, tol in ((ZeroDrift(), 1e-8), (BURGERS, 1e-5)):
        direct = solve_splitting(problem(F=F))
        half = solve_splitting(problem(F=F, T=0.25))
        rest = solve_splitting(PDEProblem(D1, F, half.at(0.25), 0.25, 0.005, check_initial=False))
        assert l2_norm(rest.at(0.25) - direct.at(0.5)) < tol


def test_identical_inputs_bit_identical():
    a = solve_splitting(problem(n=512))
    u0 = GridField(GridSpec(1, 8.0, 512), bump(512).values + 0.0)
    b = solve_splitting(PDEProblem(D1, BURGERS, u0, 0.5, 0.005))
    assert np.array_equal(a.values, b.values)


def test_picard_contraction_at_quarter_horizon():
    p = problem(T=0.25, dt=0.0025)
    tr = solve_picard(p, auto=False)
    ratios = tr.info["intervals"][0]["ratios"]
    assert len(ratios) >= 2 and max(ratios) < 0.9
    assert l2_norm(tr.at(0.25) - solve_splitting(p).at(0.25)) < 1e-4


def test_picard_non_contraction_raises():
    # a stiff flux on a long single interval does not contract
    F = ProductForm(lambda x: np.ones_like(x), lambda u: 40.0 * np.tanh(u), 1, sup_bound=40.0, lipschitz_bound=40.0)
    p = PDEProblem(D1, F, bump(256), 1.0, 0.005)
    with pytest.raises(NonContraction):
        solve_picard(p, auto=False, max_iters=30)


def test_cfl_violation_rejected():
    with pytest.raises(ValueError, match="CFL"):
        solve_splitting(problem(n=1024, dt=0.05))


def test_negativity_monitor_aborts():
    F = ProductForm(lambda x: np.ones_like(x), lambda u: -60.0 * u, 1, sup_bound=60.0, lipschitz_bound=60.0)
    p = PDEProblem(None, F, bump(256, radius=1.0), 0.5, 0.0005)
    with pytest.raises(NumericalFailure):
        solve_splitting(p)


def test_weak_residual_constant_and_splitting():
    p = problem()
    tr = solve_splitting(p)
    assert weak_form_residual(tr, lambda x: 0 * x[..., 0] + 1.0, p) < 1e-8
    rng = np.random.default_rng(0)
    base = []
    for _ in range(5):
        c, w = rng.uniform(-3, 3), rng.uniform(0.5, 1.5)
        phi = GridField.from_function(p.grid, lambda x: np.exp(-((x[..., 0] - c) / w) ** 2))
        r = weak_form_residual(tr, phi, p)
        assert r < 1e-4 * sobolev_norm(phi, 2.0)
        base.append((phi, r))
    # 1% multiplicative noise, one factor per time slice (pointwise white noise
    # would average out against smooth test functions)
    factors = 1 + 0.01 * np.random.default_rng(1).standard_normal(len(tr.times))
    noisy = tr.values * factors[:, None]
    from stablechaos.pde import PDETrajectory

    bad = PDETrajectory(tr.spec, tr.times, noisy)
    for phi, r in base:
        assert weak_form_residual(bad, phi, p) > 10 * r


def test_half_factor_changes_solution_consistently():
    p = problem(n=512, half_factor=True)
    tr = solve_splitting(p)
    phi = GridField.from_function(p.grid, lambda x: np.exp(-x[..., 0] ** 2))
    assert weak_form_residual(tr, phi, p) < 1e-6
    full = problem(n=512)
    assert weak_form_residual(tr, phi, full) > 1e-3


def test_grid_convergence():
    sols = {n: solve_splitting(problem(n=n)).at(0.5) for n in (256, 512, 1024)}

    def dist(a, b):
        # compare on the coarse grid nodes shared by both
        fa, fb = sols[a].values, sols[b].values
        step = b // a
        return np.sqrt(np.sum((fa - fb[::step]) ** 2) * sols[a].spec.dx)

    assert dist(512, 1024) * 4 <= dist(256, 512)
