import numpy as np
import pytest
from hypothesis import given, strategies as st

from stablechaos import stable_levy as sl
from stablechaos.mollifier import Kernel, SmoothBump
from stablechaos.spectral import (
    GridField,
    GridSpec,
    bessel_apply,
    decay_oracle_sup,
    divergence,
    gradient,
    l2_norm,
    lipschitz_maximal_check,
    maximal_function,
    positivity_check,
    read_gf1,
    semigroup_apply,
    semigroup_decay_bound_check,
    smooth_cutoff,
    sobolev_norm,
    write_gf1,
)

from oracles import decay_sup_bruteforce

D1 = sl.StableDriver(1.5)
SPEC = GridSpec(1, 8.0, 256)


def random_field(spec, seed, modes=12):
    rng = np.random.default_rng(seed)
    spectrum = np.zeros(spec.shape, complex)
    idx = tuple(slice(0, modes) for _ in range(spec.dim))
    spectrum[idx] = rng.normal(size=spectrum[idx].shape) + 1j * rng.normal(size=spectrum[idx].shape)
    return GridField(spec, np.fft.ifftn(spectrum).real * spec.points ** spec.dim)


def test_gridspec_validation():
    with pytest.raises(ValueError):
        GridSpec(1, 8.0, 100)
    with pytest.raises(ValueError):
        GridSpec(1, -1.0, 64)
    with pytest.raises(ValueError):
        GridSpec(1, 1.0, 4)


def test_spectrum_roundtrip():
    f = random_field(GridSpec(2, 4.0, 64), 0)
    g = GridField.from_spectrum(f.spec, f.spectrum)
    assert np.max(np.abs(g.values - f.values)) <= 1e-12 * np.max(np.abs(f.values))


def test_semigroup_identity_law_and_mass():
    f = random_field(SPEC, 1)
    assert np.array_equal(semigroup_apply(D1, 0.0, f).values, f.values)
    a = semigroup_apply(D1, 0.3, semigroup_apply(D1, 0.2, f))
    b = semigroup_apply(D1, 0.5, f)
    assert l2_norm(GridField(SPEC, a.values - b.values)) <= 1e-10 * l2_norm(f)
    assert b.values.mean() == pytest.approx(f.values.mean(), abs=1e-14)


@given(st.integers(0, 10_000), st.floats(0.0, 3.0))
def test_semigroup_contraction(seed, t):
    f = random_field(SPEC, seed)
    assert l2_norm(semigroup_apply(D1, t, f)) <= l2_norm(f) * (1 + 1e-12)


def test_semigroup_commutes_with_gradient():
    f = random_field(GridSpec(2, 4.0, 64), 2)
    d2 = sl.StableDriver(1.5, 2)
    lhs = [semigroup_apply(d2, 0.4, g) for g in gradient(f)]
    rhs = gradient(semigroup_apply(d2, 0.4, f))
    for a, b in zip(lhs, rhs):
        assert np.max(np.abs(a.values - b.values)) < 1e-10 * np.max(np.abs(b.values))


def test_semigroup_on_spike_is_shifted_density():
    spec = GridSpec(1, 40.0, 4096)
    spike = np.zeros(spec.shape)
    j = spec.points // 2 + 64
    spike[j] = 1.0 / spec.dx
    out = semigroup_apply(D1, 1.0, GridField(spec, spike))
    rho = sl.density(D1, 1.0, spec)
    assert np.allclose(out.values, np.roll(rho.values, 64), atol=1e-12)


def test_semigroup_rejects_dimension_mismatch():
    with pytest.raises(ValueError):
        semigroup_apply(sl.StableDriver(1.5, 2), 0.1, random_field(SPEC, 0))


def test_bessel_identity_inverse_and_constant():
    f = random_field(SPEC, 3)
    assert np.array_equal(bessel_apply(0.0, f).values, f.values)
    back = bessel_apply(-0.7, bessel_apply(0.7, f))
    assert np.max(np.abs(back.values - f.values)) < 1e-10 * np.max(np.abs(f.values))
    c = GridField(SPEC, np.full(SPEC.shape, 2.5))
    assert np.allclose(bessel_apply(0.9, c).values, 2.5, atol=1e-13)
    assert sobolev_norm(f, 0.8) == pytest.approx(l2_norm(bessel_apply(0.8, f)), rel=1e-12)


def test_sobolev_single_mode():
    L = SPEC.box_halfwidth
    f = GridField.from_function(SPEC, lambda x: np.sin(np.pi * x[..., 0] / L))
    for eps in (0.3, 0.8, 1.5):
        expect = (1 + (np.pi / L) ** 2) ** (eps / 2) * l2_norm(f)
        assert sobolev_norm(f, eps) == pytest.approx(expect, rel=1e-12)
    assert sobolev_norm(f, 0.0) == l2_norm(f)


@given(st.integers(0, 10_000), st.floats(-1, 2), st.floats(0, 1))
def test_sobolev_monotone_in_order(seed, e1, gap):
    f = random_field(SPEC, seed)
    assert sobolev_norm(f, e1) <= sobolev_norm(f, e1 + gap) * (1 + 1e-12)


def test_kernel_sobolev_norm_grid_refinement():
    V = Kernel(1, SmoothBump(1.0))
    coarse = sobolev_norm(V.on_grid(GridSpec(1, 8.0, 512)), 1.1)
    fine = sobolev_norm(V.on_grid(GridSpec(1, 8.0, 8192)), 1.1)
    assert np.isfinite(coarse) and abs(coarse / fine - 1) < 0.01


def test_decay_bound_matches_oracle():
    spec = GridSpec(1, 8.0, 2 ** 16)
    for eps in (0.5, 0.8):
        for t in (1e-2, 0.1, 1.0):
            rep = semigroup_decay_bound_check(D1, eps, [t], spec)
            oracle = decay_oracle_sup(1.5, eps, t)
            assert rep.lattice_sup[0] == pytest.approx(oracle, rel=0.01)
            assert oracle == pytest.approx(decay_sup_bruteforce(1.5, eps, t), rel=1e-6)


def test_decay_sup_decreasing_in_t():
    rep = semigroup_decay_bound_check(D1, 0.8, [1.0, 2.0, 5.0], GridSpec(1, 8.0, 1024))
    assert np.all(rep.lattice_sup[1:] <= rep.lattice_sup[0])
    with pytest.raises(ValueError):
        semigroup_decay_bound_check(D1, 0.8, [0.0], SPEC)


def test_positivity_examples():
    spec = GridSpec(1, 8.0, 1024)
    V = Kernel(1, SmoothBump(1.0))
    f = V.on_grid(spec)
    m = positivity_check(D1, 0.75, 0.5, f)
    assert m >= -1e-8
    shifted = V.on_grid(spec, center=np.array([spec.dx * 40]))
    assert positivity_check(D1, 0.75, 0.5, shifted) == pytest.approx(m, abs=1e-10)
    assert positivity_check(D1, 0.75, 0.5, GridField(spec, np.zeros(spec.shape))) == 0.0
    with pytest.raises(ValueError):
        positivity_check(D1, 0.75, 0.5, GridField(spec, -f.values))


def test_maximal_function_basic():
    spec = GridSpec(1, 8.0, 256)
    c = GridField(spec, np.full(spec.shape, 1.7))
    assert np.allclose(maximal_function(c).values, 1.7)
    f = random_field(spec, 4)
    few = maximal_function(f, [spec.dx, 4 * spec.dx]).values
    more = maximal_function(f, [spec.dx, 4 * spec.dx, 16 * spec.dx]).values
    assert np.all(more >= few)
    # dominates the smallest-ball average by definition
    three = (np.abs(np.roll(f.values, 1)) + np.abs(f.values) + np.abs(np.roll(f.values, -1))) / 3
    assert np.all(few >= three * (1 - 1e-12))
    with pytest.raises(ValueError):
        maximal_function(f, [0.5 * spec.dx])
    with pytest.raises(ValueError):
        maximal_function(f, [])


def test_maximal_function_2d_constant():
    spec = GridSpec(2, 4.0, 32)
    assert np.allclose(maximal_function(GridField(spec, np.ones(spec.shape))).values, 1.0)


def test_maximal_l2_bound_battery():
    spec = GridSpec(1, 8.0, 256)
    C = [l2_norm(maximal_function(random_field(spec, s))) / l2_norm(random_field(spec, s)) for s in range(100)]
    assert 1.0 <= max(C) < 10.0


def test_lipschitz_sine_ratio_and_constant():
    spec = GridSpec(1, 8.0, 256)
    f = GridField.from_function(spec, lambda x: np.sin(np.pi * x[..., 0] / spec.box_halfwidth))
    rep = lipschitz_maximal_check(f)
    assert rep.n_pairs == 256 * 64 and rep.max_ratio <= 2.0
    flat = lipschitz_maximal_check(GridField(spec, np.full(spec.shape, 3.0)))
    assert flat.max_ratio == 0.0 and flat.n_degenerate == flat.n_pairs


def test_gradient_divergence_of_mode():
    spec = GridSpec(1, np.pi, 64)
    f = GridField.from_function(spec, lambda x: np.sin(3 * x[..., 0]))
    (g,) = gradient(f)
    assert np.allclose(g.values, 3 * np.cos(3 * spec.axis), atol=1e-12)
    assert np.allclose(divergence([g]).values, -9 * f.values, atol=1e-11)


def test_smooth_cutoff_plateau_and_support():
    spec = GridSpec(1, 8.0, 512)
    w = smooth_cutoff(spec, 4.0).values
    x = np.abs(spec.axis)
    assert np.all(w[x <= 2.0] == 1.0) and np.all(w[x >= 4.0] == 0.0)
    assert np.all((w >= 0) & (w <= 1))


def test_gf1_roundtrip(tmp_path):
    for spec in (GridSpec(1, 8.0, 64), GridSpec(2, 3.5, 16)):
        f = random_field(spec, 5)
        write_gf1(tmp_path / "f.gf1", f)
        raw = (tmp_path / "f.gf1").read_bytes()
        assert len(raw) == 32 + 8 * spec.points ** spec.dim
        g = read_gf1(tmp_path / "f.gf1")
        assert g.spec == spec and np.array_equal(g.values, f.values)
    (tmp_path / "bad.gf1").write_bytes(b"nonsense" * 8)
    with pytest.raises(ValueError):
        read_gf1(tmp_path / "bad.gf1")
