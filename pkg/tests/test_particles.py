import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from stablechaos import stable_levy as sl
from stablechaos.mollifier import Kernel, ModelParams, ScaledKernel, SmoothBump
from stablechaos.particles import (
    BumpDensity,
    BurgersSaturated,
    ConstantDrift,
    ParticleEnsemble,
    ProductForm,
    TestFunction,
    UniformDensity,
    ZeroDrift,
    empirical_measure,
    generator_pairing,
    run,
    smooth_clamp,
    step,
)
from stablechaos.spectral import GridSpec, semigroup_apply

from oracles import generator_periodic_quadrature

D1 = sl.StableDriver(1.5)
P = ModelParams(1.5, 0.3, 0.8, 0.3, 1, 0.5)
V1 = Kernel(1, SmoothBump(1.0))


def ensemble(x, seed=0, L=8.0, noise=True, driver=D1):
    return ParticleEnsemble(np.asarray(x, float), driver, P, L, master_seed=seed, noise=noise)


@given(st.floats(-100, 100), st.floats(0.01, 10))
def test_smooth_clamp_bounded_and_odd(u, cap):
    s = float(smooth_clamp(np.array(u), cap))
    assert abs(s) <= cap * (1 + 1e-15)
    assert float(smooth_clamp(np.array(-u), cap)) == -s
    if abs(u) <= 0.75 * cap:
        assert s == u


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0, 5), st.floats(0, 5), st.floats(0.1, 3))
def test_burgers_drift_bounds(x, y, u, v, cap):
    F = BurgersSaturated((1.0,), cap)
    a = F(np.array([[x]]), np.array([u]))
    b = F(np.array([[y]]), np.array([v]))
    assert np.all(np.abs(a) <= F.sup_bound * (1 + 1e-15))
    assert np.linalg.norm(a - b) <= F.lipschitz_bound * (abs(x - y) + abs(u - v)) + 1e-14


def test_burgers_direction_is_normalised_2d():
    F = BurgersSaturated((3.0, 4.0), 1.0)
    out = F(np.zeros((1, 2)), np.array([0.5]))
    assert np.allclose(out, [[0.3, 0.4]])


def test_product_form_battery():
    F = ProductForm(lambda x: np.sin(x), lambda u: np.tanh(u), 1, sup_bound=1.0, lipschitz_bound=1.0)
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(2, 500, 1)) * 3
    u, v = np.abs(rng.normal(size=(2, 500))) * 2
    a, b = F(x, u), F(y, v)
    assert np.all(np.abs(a) <= 1.0)
    assert np.all(np.abs(a - b)[:, 0] <= np.abs(x - y)[:, 0] + np.abs(u - v) + 1e-14)


def test_initial_densities():
    rng = np.random.default_rng(1)
    bump = BumpDensity((0.5,), 1.5)
    x = bump.sample(20000, rng)
    assert np.all(np.abs(x - 0.5) < 1.5)
    cdf = lambda t: np.array([np.sum(bump.pdf(np.linspace(-1, s, 2001)[:, None])) * (s + 1) / 2000 for s in np.atleast_1d(t)])
    assert stats.kstest(x[:, 0], cdf).pvalue > 0.01
    assert bump.on_grid(GridSpec(1, 8.0, 1024)).integral() == pytest.approx(1.0, abs=1e-9)
    y = BumpDensity((0.0, 0.0), 1.0).sample(3000, rng)
    assert y.shape == (3000, 2) and np.all(np.linalg.norm(y, axis=1) < 1.0)
    u = UniformDensity(-1.0, 2.0).sample(1000, rng)
    assert u.min() >= -1 and u.max() <= 2


def test_no_noise_no_drift_is_identity():
    x = np.linspace(-3, 3, 50)[:, None]
    ens = ensemble(x, noise=False)
    step(ens, ScaledKernel(V1, 50, 0.3), ZeroDrift(), 0.1)
    assert np.array_equal(ens.positions, x)


def test_constant_transport_is_exact():
    ens = ensemble([[0.25]], noise=False)
    traj = run(ens, ScaledKernel(V1, 1, 0.3), ConstantDrift((0.5,)), 0.125, 1.0, [0.5, 1.0])
    assert traj.positions[0][0, 0] == 0.5
    assert traj.positions[1][0, 0] == 0.75


def test_pure_noise_increment_law():
    x0 = np.zeros((10_000, 1))
    ens = ensemble(x0, seed=3, L=1e6)
    step(ens, ScaledKernel(V1, 10_000, 0.3), ZeroDrift(), 0.05)
    ref = sl.sample_increments(D1, 0.05, 10_000, np.random.default_rng(4))
    assert stats.ks_2samp(ens.positions[:, 0], ref[:, 0]).pvalue > 0.01


def test_drift_displacement_bounded_by_sup():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(400, 1))
    ens = ensemble(x, noise=False)
    F = BurgersSaturated((1.0,), 0.6)
    step(ens, ScaledKernel(V1, 400, 0.3), F, 0.01)
    assert np.all(np.abs(ens.positions - x) <= F.sup_bound * 0.01 + 1e-15)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_step_errors():
    ens = ensemble([[0.0]])
    VN = ScaledKernel(V1, 1, 0.3)
    with pytest.raises(ValueError):
        step(ens, VN, ZeroDrift(), 0.0)
    with pytest.raises(ValueError):
        step(ens, VN, ZeroDrift(), 0.6, T=0.5)
    bad = ProductForm(lambda x: np.full_like(x, np.inf), lambda u: u, 1, depends_on_density=False)
    with pytest.raises(FloatingPointError, match="step 3"):
        run(ensemble([[0.0]], noise=False), VN, ProductForm(lambda x: np.where(np.abs(x) > 1e-3, np.inf, 1.0), lambda u: 1.0 + 0 * u, 1, depends_on_density=False), 0.0005, 0.005)
    with pytest.raises(FloatingPointError):
        step(ensemble([[0.0]]), VN, bad, 0.1)
    with pytest.raises(ValueError):
        run(ensemble([[0.0]]), VN, ZeroDrift(), 0.1, 0.5, [0.25])


def _full_run(seed, N=256, grid=None, tfs=()):
    u0 = BumpDensity((0.0,), 2.0)
    ens = ParticleEnsemble.from_density(u0, N, D1, P, 8.0, master_seed=seed)
    return run(ens, ScaledKernel(V1, N, 0.3), BurgersSaturated((1.0,), 1.0), 0.00625, 0.125, [0.0, 0.0625, 0.125], grid=grid, test_functions=tfs)


def test_run_is_deterministic():
    spec = GridSpec(1, 8.0, 1024)
    a = _full_run(7, grid=spec)
    b = _full_run(7, grid=spec)
    for k in range(3):
        assert np.array_equal(a.positions[k], b.positions[k])
        assert np.array_equal(a.fields[k].values, b.fields[k].values)
    c = _full_run(8)
    assert not np.array_equal(a.positions[-1], c.positions[-1])


def test_exchangeability():
    u0 = BumpDensity((0.0,), 2.0)
    ens = ParticleEnsemble.from_density(u0, 200, D1, P, 8.0, master_seed=9)
    perm = np.random.default_rng(0).permutation(200)
    VN, F = ScaledKernel(V1, 200, 0.3), BurgersSaturated((1.0,), 1.0)
    a = run(ens, VN, F, 0.00625, 0.0625)
    b = run(ens.permuted(perm), VN, F, 0.00625, 0.0625)
    assert np.allclose(a.positions[-1][perm], b.positions[-1], rtol=0, atol=1e-12)


def test_independent_particles_match_across_seeds():
    N, dt, T = 2000, 0.05, 0.5
    F = ConstantDrift((0.01,))
    VN = ScaledKernel(V1, N, 0.3)
    ens = ensemble(np.zeros((N, 1)), seed=0, L=1e6)
    within = run(ens, VN, F, dt, T).positions[-1][:, 0]
    across = np.array([run(ensemble([[0.0]], seed=s, L=1e6), VN, F, dt, T).positions[-1][0, 0] for s in range(1, 1001)])
    assert stats.ks_2samp(within, across).pvalue > 0.01


def test_empirical_measure_mass():
    ens = ensemble(np.random.default_rng(0).normal(size=(37, 1)))
    S = empirical_measure(ens)
    assert S.total_mass == 1.0 and S.weights.sum() == pytest.approx(1.0)
    assert S.pair(lambda x: x[:, 0] ** 2) == pytest.approx(np.mean(ens.positions[:, 0] ** 2))


def test_generator_pairing_constant_and_eigenfunction():
    spec = GridSpec(1, 8.0, 1024)
    ens = ensemble(np.random.default_rng(1).uniform(-7, 7, (300, 1)))
    const = TestFunction.from_function(spec, lambda x: 0 * x[..., 0] + 2.0, D1)
    assert abs(generator_pairing(ens, const)) < 1e-14
    k = np.pi / spec.box_halfwidth
    cos = TestFunction.from_function(spec, lambda x: np.cos(k * x[..., 0]), D1)
    expect = -float(sl.psi(D1, k)) * empirical_measure(ens).pair(cos)
    assert generator_pairing(ens, cos) == pytest.approx(expect, abs=1e-6)
    assert generator_pairing(ens, cos, half_factor=True) == pytest.approx(0.5 * expect, abs=1e-6)
    with pytest.raises(ValueError):
        generator_pairing(ensemble([[0.0]], L=20.0).__class__(np.array([[9.0]]), D1, P, 20.0), cos)


def test_generator_pairing_at_grid_node_matches_singular_integral():
    spec = GridSpec(1, np.pi, 64)
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=(2, 5))
    c0 = 1.3

    def phi(x):
        return c0 + sum(a[m] * np.cos((m + 1) * x) + b[m] * np.sin((m + 1) * x) for m in range(5))

    tf = TestFunction.from_function(spec, lambda x: phi(x[..., 0]), D1)
    j = 23
    x0 = spec.axis[j]
    got = generator_pairing(ensemble([[x0]], L=np.pi), tf)
    d2 = lambda x: -sum((m + 1) ** 2 * (a[m] * np.cos((m + 1) * x) + b[m] * np.sin((m + 1) * x)) for m in range(5))
    d4 = lambda x: sum((m + 1) ** 4 * (a[m] * np.cos((m + 1) * x) + b[m] * np.sin((m + 1) * x)) for m in range(5))
    oracle = generator_periodic_quadrature(1.5, phi, x0, 2 * np.pi, c0, d2, d4)
    # exact for a trigonometric polynomial: -sum psi(k) (a_k cos + b_k sin)
    exact = -sum((m + 1) ** 1.5 * (a[m] * np.cos((m + 1) * x0) + b[m] * np.sin((m + 1) * x0)) for m in range(5))
    assert got == pytest.approx(exact, abs=1e-12)
    assert got == pytest.approx(oracle, abs=1e-6)


def test_pure_noise_pairing_tracks_semigroup():
    spec = GridSpec(1, 8.0, 1024)
    u0 = BumpDensity((0.0,), 2.0)
    tf = TestFunction.from_function(spec, lambda x: np.exp(-x[..., 0] ** 2), D1, "gauss")
    target = semigroup_apply(D1, 0.25, u0.on_grid(spec)).pair(tf.field)
    N = 2048
    vals = []
    for s in range(8):
        ens = ParticleEnsemble.from_density(u0, N, D1, P, 8.0, master_seed=s)
        vals.append(run(ens, ScaledKernel(V1, N, 0.3), ZeroDrift(), 0.0125, 0.25, test_functions=[tf]).pairings["gauss"][-1])
    vals = np.array(vals)
    assert abs(vals.mean() - target) < 3 * vals.std(ddof=1) / math.sqrt(len(vals)) + 1e-4


def test_step_records_shape():
    spec = GridSpec(1, 8.0, 1024)
    tf = TestFunction.from_function(spec, lambda x: np.cos(x[..., 0]), D1, "c")
    tr = _full_run(1, tfs=[tf])
    assert tr.step_records["c"].shape == (21, 3)
    assert tr.step_records["c"][0, 0] == pytest.approx(tr.pairings["c"][0])
    assert tr.step_records["c"][-1, 0] == pytest.approx(tr.pairings["c"][-1])
