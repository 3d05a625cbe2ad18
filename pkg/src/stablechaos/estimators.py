"""scikit-learn style wrappers around the particle, smoothing and PDE code."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import stable_levy as sl
from .mollifier import Kernel, ModelParams, ScaledKernel, SmoothBump, WendlandC2, local_density_direct, mollify
from .particles import BurgersSaturated, ParticleEnsemble, ZeroDrift, run
from .pde import PDEProblem, solve_picard, solve_splitting
from .spectral import GridField, GridSpec

__all__ = ["MollifiedDensity", "InteractingParticleSystem", "NonlocalConservationLaw"]

_PROFILES = {"smooth_bump": SmoothBump, "wendland_c2": WendlandC2}


def _kernel(dim, profile, radius):
    if profile not in _PROFILES:
        raise ValueError(f"kernel must be one of {sorted(_PROFILES)}")
    return Kernel(dim, _PROFILES[profile](radius))


class MollifiedDensity(TransformerMixin, BaseEstimator):
    """Kernel smoothing with the moderately scaled kernel ``V^N``.

    ``fit(X)`` stores the sample and sets ``N = len(X)``; ``score_samples``
    evaluates ``(1/N) sum_i V^N(x - X_i)`` on the periodic box;
    ``transform`` returns that value at the training points themselves.
    """

    def __init__(self, beta=0.3, kernel="smooth_bump", radius=1.0, box_halfwidth=8.0, grid_points=1024):
        self.beta = beta
        self.kernel = kernel
        self.radius = radius
        self.box_halfwidth = box_halfwidth
        self.grid_points = grid_points

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=1)
        if X.shape[1] not in (1, 2):
            raise ValueError("only d = 1 or 2 is supported")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if np.any(np.abs(X) > self.box_halfwidth):
            raise ValueError("samples fall outside the box")
        self.positions_ = X.copy()
        self.n_features_in_ = X.shape[1]
        self.kernel_ = ScaledKernel(_kernel(X.shape[1], self.kernel, self.radius), X.shape[0], self.beta)
        return self

    def score_samples(self, X):
        check_is_fitted(self, "positions_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError("feature count differs from fit")
        box = 2.0 * self.box_halfwidth
        out = np.empty(X.shape[0])
        for a in range(0, X.shape[0], 2048):
            diff = X[a : a + 2048, None, :] - self.positions_[None, :, :]
            diff -= box * np.floor(diff / box + 0.5)
            out[a : a + 2048] = self.kernel_.radial(np.linalg.norm(diff, axis=-1)).mean(axis=1)
        return out

    def transform(self, X):
        return self.score_samples(X)[:, None]

    def to_grid(self) -> GridField:
        check_is_fitted(self, "positions_")
        spec = GridSpec(self.n_features_in_, self.box_halfwidth, self.grid_points)
        return mollify(self.positions_, self.kernel_, spec)

    def local_density(self):
        check_is_fitted(self, "positions_")
        return local_density_direct(self.positions_, self.kernel_, self.box_halfwidth)


class InteractingParticleSystem(BaseEstimator):
    """Euler scheme for the particle system; ``fit(X0)`` runs it to ``T``.

    After fitting, ``positions_`` holds the final configuration and
    ``trajectory_`` the checkpoint record. ``predict(X)`` returns the
    mollified density of the final configuration at ``X``.
    """

    def __init__(
        self,
        alpha=1.5,
        beta=0.3,
        epsilon=0.8,
        delta=0.3,
        T=0.5,
        dt=0.00625,
        drift="burgers_saturated",
        cap=1.0,
        kernel="smooth_bump",
        radius=1.0,
        box_halfwidth=8.0,
        seed=0,
        noise=True,
    ):
        self.alpha = alpha
        self.beta = beta
        self.epsilon = epsilon
        self.delta = delta
        self.T = T
        self.dt = dt
        self.drift = drift
        self.cap = cap
        self.kernel = kernel
        self.radius = radius
        self.box_halfwidth = box_halfwidth
        self.seed = seed
        self.noise = noise

    def _drift(self, dim):
        if self.drift == "burgers_saturated":
            return BurgersSaturated((1.0,) + (0.0,) * (dim - 1), self.cap)
        if self.drift == "zero":
            return ZeroDrift(dim)
        raise ValueError("drift must be 'burgers_saturated' or 'zero'")

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=1)
        d = X.shape[1]
        params = ModelParams(self.alpha, self.beta, self.epsilon, self.delta, d, self.T)
        driver = sl.StableDriver(self.alpha, d)
        ens = ParticleEnsemble(X, driver, params, self.box_halfwidth, master_seed=self.seed, noise=self.noise)
        V_N = ScaledKernel(_kernel(d, self.kernel, self.radius), X.shape[0], self.beta)
        self.trajectory_ = run(ens, V_N, self._drift(d), self.dt, self.T)
        self.positions_ = self.trajectory_.positions[-1]
        self.kernel_ = V_N
        self.n_features_in_ = d
        return self

    def predict(self, X):
        check_is_fitted(self, "positions_")
        dens = MollifiedDensity(self.beta, self.kernel, self.radius, self.box_halfwidth)
        return dens.fit(self.positions_).score_samples(X)


class NonlocalConservationLaw(BaseEstimator):
    """Grid solver for the limit equation; ``fit(u0)`` solves up to ``T``.

    ``u0`` is an array of grid values on ``[-L, L)^d`` (1-d: shape ``(n,)``
    or ``(n, 1)``). ``predict(t)`` returns the solution values at a lattice
    time.
    """

    def __init__(self, alpha=1.5, T=0.5, dt=0.0025, cap=1.0, box_halfwidth=8.0, method="splitting", half_factor=False):
        self.alpha = alpha
        self.T = T
        self.dt = dt
        self.cap = cap
        self.box_halfwidth = box_halfwidth
        self.method = method
        self.half_factor = half_factor

    def fit(self, X, y=None):
        u = np.asarray(X, dtype=float)
        if u.ndim == 2 and u.shape[1] == 1:
            u = u[:, 0]
        u = check_array(u, ensure_2d=False, allow_nd=True)
        dim = u.ndim
        spec = GridSpec(dim, self.box_halfwidth, u.shape[0])
        driver = sl.StableDriver(self.alpha, dim)
        F = BurgersSaturated((1.0,) + (0.0,) * (dim - 1), self.cap)
        p = PDEProblem(driver, F, GridField(spec, u), self.T, self.dt, half_factor=self.half_factor)
        if self.method not in ("splitting", "picard"):
            raise ValueError("method must be 'splitting' or 'picard'")
        self.solution_ = solve_splitting(p) if self.method == "splitting" else solve_picard(p)
        self.grid_ = spec
        return self

    def predict(self, t):
        check_is_fitted(self, "solution_")
        return self.solution_.at(float(t)).values.copy()
