import numpy as np
import pytest
from sklearn.base import clone

from stablechaos.estimators import InteractingParticleSystem, MollifiedDensity, NonlocalConservationLaw
from stablechaos.mollifier import local_density_direct
from stablechaos.particles import BumpDensity
from stablechaos.spectral import GridSpec


def test_mollified_density():
    X = np.random.default_rng(0).normal(size=(300, 1))
    est = MollifiedDensity(beta=0.3, grid_points=2048).fit(X)
    grid = est.to_grid()
    assert grid.integral() == pytest.approx(1.0, abs=1e-6)
    nodes = grid.spec.axis[::37, None]
    assert np.allclose(est.score_samples(nodes), grid.values[::37], atol=1e-13)
    assert np.allclose(est.transform(X)[:, 0], local_density_direct(X, est.kernel_, 8.0), rtol=1e-12)
    assert clone(est).get_params() == est.get_params()
    with pytest.raises(ValueError):
        MollifiedDensity().fit(np.full((3, 1), 20.0))


def test_interacting_particle_system():
    X0 = BumpDensity((0.0,), 2.0).sample(128, np.random.default_rng(1))
    a = InteractingParticleSystem(T=0.0625, seed=3).fit(X0)
    b = InteractingParticleSystem(T=0.0625, seed=3).fit(X0)
    assert np.array_equal(a.positions_, b.positions_)
    assert a.predict(np.zeros((1, 1)))[0] > 0
    with pytest.raises(ValueError):
        InteractingParticleSystem(drift="wind").fit(X0)


def test_nonlocal_conservation_law():
    u0 = BumpDensity((0.0,), 2.0).on_grid(GridSpec(1, 8.0, 512)).values
    est = NonlocalConservationLaw(T=0.25, dt=0.005).fit(u0)
    pic = NonlocalConservationLaw(T=0.25, dt=0.005, method="picard").fit(u0[:, None])
    u = est.predict(0.25)
    assert u.shape == (512,) and abs(u.sum() * 16 / 512 - 1) < 1e-8
    assert np.sqrt(np.sum((u - pic.predict(0.25)) ** 2) * 16 / 512) < 1e-4
