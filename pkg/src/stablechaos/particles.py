"""Moderately interacting particles driven by independent stable noise.

Particles live on the periodic box ``[-L, L)^d`` so that they see the same
geometry as the grid-based PDE solver. One explicit Euler step is

    X_i <- wrap(X_i + F(X_i, rho_i) dt + dL_i),

with ``rho_i`` the kernel-smoothed local density at particle ``i`` computed
from the pre-step configuration.

Noise streams: particle ``i`` draws its uniforms from
``SeedSequence(master_seed, spawn_key=(1, stream_id[i]))``; initial positions
come from ``spawn_key=(0,)``. Permuting particles together with their stream
ids permutes trajectories.
"""
from __future__ import annotations

import copy
import functools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import stable_levy as sl
from .mollifier import ModelParams, ScaledKernel, SmoothBump, local_density_at_particles, mollify
from .spectral import GridField, GridSpec, gradient, psi_on_grid

__all__ = [
    "BurgersSaturated",
    "ProductForm",
    "ZeroDrift",
    "ConstantDrift",
    "smooth_clamp",
    "BumpDensity",
    "UniformDensity",
    "TestFunction",
    "ParticleEnsemble",
    "EmpiricalMeasure",
    "Trajectory",
    "step",
    "run",
    "generator_pairing",
    "empirical_measure",
]


# ---------------------------------------------------------------------------
# Drift fields


def smooth_clamp(u, cap: float):
    """Odd C^1 saturation at level ``cap``.

    Identity for ``|u| <= 3cap/4``, equal to ``+-cap`` for ``|u| >= 5cap/4``,
    and a quadratic with matching slopes in between, so ``|s'| <= 1`` and
    ``|s| <= cap``.
    """
    u = np.asarray(u, dtype=float)
    w = 0.25 * cap
    a = np.abs(u)
    lo = cap - w
    mid = a - (a - lo) ** 2 / (4.0 * w)
    s = np.where(a <= lo, a, np.where(a >= cap + w, cap, mid))
    return np.sign(u) * s


def _unit(v, dim):
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape != (dim,):
        raise ValueError(f"direction must have {dim} components")
    nrm = np.linalg.norm(v)
    if nrm == 0:
        raise ValueError("direction must be non-zero")
    return v / nrm


@dataclass(frozen=True)
class BurgersSaturated:
    """``F(x, u) = e * s(u)`` with ``s`` the smooth clamp at ``cap``."""

    direction: tuple = (1.0,)
    cap: float = 1.0
    depends_on_density = True

    def __post_init__(self):
        if not self.cap > 0:
            raise ValueError("cap must be positive")
        e = _unit(self.direction, len(np.atleast_1d(self.direction)))
        object.__setattr__(self, "direction", tuple(e.tolist()))

    @property
    def dim(self):
        return len(self.direction)

    @property
    def sup_bound(self):
        return self.cap

    @property
    def lipschitz_bound(self):
        return 1.0

    def __call__(self, x, u):
        return smooth_clamp(u, self.cap)[..., None] * np.asarray(self.direction)


@dataclass(frozen=True)
class ProductForm:
    """``F(x, u) = velocity(x) * saturation(u)``.

    ``velocity`` maps ``(..., d)`` to ``(..., d)``, ``saturation`` maps
    ``(...)`` to ``(...)``. The bounds are supplied by the caller and checked
    on random batteries in the test-suite.
    """

    velocity: object
    saturation: object
    dim: int = 1
    sup_bound: float = 1.0
    lipschitz_bound: float = 1.0
    depends_on_density: bool = True

    def __call__(self, x, u):
        x = np.asarray(x, dtype=float)
        return np.asarray(self.velocity(x)) * np.asarray(self.saturation(np.asarray(u, dtype=float)))[..., None]


@dataclass(frozen=True)
class ZeroDrift:
    dim: int = 1
    depends_on_density = False
    sup_bound = 0.0
    lipschitz_bound = 0.0

    def __call__(self, x, u):
        return np.zeros(np.shape(x)[:-1] + (self.dim,))


@dataclass(frozen=True)
class ConstantDrift:
    velocity: tuple = (1.0,)
    depends_on_density = False
    lipschitz_bound = 0.0

    @property
    def dim(self):
        return len(self.velocity)

    @property
    def sup_bound(self):
        return float(np.linalg.norm(self.velocity))

    def __call__(self, x, u):
        return np.broadcast_to(np.asarray(self.velocity, dtype=float), np.shape(x)[:-1] + (self.dim,)).copy()


# ---------------------------------------------------------------------------
# Initial densities


@dataclass(frozen=True)
class BumpDensity:
    """Normalized smooth bump ``c exp(-1/(1-|x-m|^2/r^2))``."""

    center: tuple = (0.0,)
    radius: float = 1.0

    @property
    def dim(self):
        return len(self.center)

    @functools.cached_property
    def _norm(self):
        from .mollifier import Kernel

        return Kernel(self.dim, SmoothBump(self.radius)).normalization

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x - np.asarray(self.center), axis=-1)
        return self._norm * SmoothBump.profile(r / self.radius)

    def sample(self, n: int, rng) -> np.ndarray:
        m = np.asarray(self.center, dtype=float)
        if self.dim == 1:
            # inverse CDF from a fine cumulative table
            s = np.linspace(-1.0, 1.0, 20001)
            dens = SmoothBump.profile(np.abs(s))
            cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(s))])
            cdf /= cdf[-1]
            u = rng.random(n)
            return (m[0] + self.radius * np.interp(u, cdf, s))[:, None]
        out = np.empty((0, 2))
        peak = math.exp(-1.0)
        while out.shape[0] < n:
            k = 2 * (n - out.shape[0]) + 16
            z = rng.uniform(-1.0, 1.0, size=(k, 2))
            acc = rng.random(k) * peak < SmoothBump.profile(np.linalg.norm(z, axis=1))
            out = np.vstack([out, z[acc]])
        return m + self.radius * out[:n]

    def on_grid(self, spec: GridSpec) -> GridField:
        return GridField(spec, self.pdf(spec.wrap(spec.coords())))


@dataclass(frozen=True)
class UniformDensity:
    """Uniform density on the cube ``[low, high]^d``."""

    low: float = -1.0
    high: float = 1.0
    dim: int = 1

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = np.all((x >= self.low) & (x <= self.high), axis=-1)
        return inside / (self.high - self.low) ** self.dim

    def sample(self, n: int, rng) -> np.ndarray:
        return self.low + (self.high - self.low) * rng.random((n, self.dim))

    def on_grid(self, spec: GridSpec) -> GridField:
        return GridField(spec, self.pdf(spec.coords()))


# ---------------------------------------------------------------------------
# Test functions


class TestFunction:
    """A band-limited periodic function with its gradient and generator image.

    Values of ``phi``, ``grad phi`` and ``L phi`` are computed spectrally on
    the grid and evaluated off-grid by periodic cubic-spline interpolation.
    """

    __test__ = False

    def __init__(self, phi: GridField, driver: sl.StableDriver, name: str = "phi"):
        self.name = name
        self.field = phi
        self.spec = phi.spec
        self.driver = driver
        self.grad = gradient(phi)
        self.gen = phi.apply_multiplier(-psi_on_grid(driver, phi.spec))
        self._coef = {}

    @classmethod
    def from_function(cls, spec: GridSpec, fn, driver, name="phi"):
        return cls(GridField.from_function(spec, fn), driver, name)

    def _spline(self, key, values):
        if key not in self._coef:
            self._coef[key] = ndimage.spline_filter(values, order=3, mode="grid-wrap")
        return self._coef[key]

    def _interp(self, key, values, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        idx = ((x + self.spec.box_halfwidth) / self.spec.dx).T
        return ndimage.map_coordinates(
            self._spline(key, values), idx, order=3, mode="grid-wrap", prefilter=False
        )

    def value(self, x):
        return self._interp("phi", self.field.values, x)

    def gradient_at(self, x):
        return np.stack([self._interp(f"g{k}", g.values, x) for k, g in enumerate(self.grad)], axis=-1)

    def generator_at(self, x):
        return self._interp("gen", self.gen.values, x)


# ---------------------------------------------------------------------------
# Ensemble


class _NoiseStreams:
    """One generator per particle, read in blocks of ``block`` steps."""

    def __init__(self, master_seed: int, stream_ids, width: int, block: int = 64):
        self.master_seed = int(master_seed)
        self.width = width
        self.block = block
        self.gens = [
            np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.master_seed, spawn_key=(1, int(s)))))
            for s in stream_ids
        ]
        self.buf = np.empty((len(self.gens), block, width))
        self.pos = block

    def next(self) -> np.ndarray:
        if self.pos == self.block:
            for i, g in enumerate(self.gens):
                self.buf[i] = g.random((self.block, self.width))
            self.pos = 0
        out = self.buf[:, self.pos, :]
        self.pos += 1
        return out


@dataclass
class ParticleEnsemble:
    positions: np.ndarray
    driver: sl.StableDriver
    params: ModelParams
    box_halfwidth: float
    master_seed: int = 0
    time: float = 0.0
    stream_ids: np.ndarray | None = None
    noise: bool = True
    step_index: int = 0
    _streams: _NoiseStreams | None = field(default=None, repr=False)

    def __post_init__(self):
        x = np.asarray(self.positions, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[0] < 1:
            raise ValueError("need at least one particle")
        if x.shape[1] != self.driver.dim:
            raise ValueError("positions do not match driver dimension")
        if not np.all(np.isfinite(x)):
            raise ValueError("positions must be finite")
        self.positions = _wrap(x.copy(), self.box_halfwidth)
        if self.stream_ids is None:
            self.stream_ids = np.arange(x.shape[0])
        self.stream_ids = np.asarray(self.stream_ids, dtype=np.int64)
        if self.stream_ids.shape != (x.shape[0],) or np.unique(self.stream_ids).size != x.shape[0]:
            raise ValueError("stream_ids must be distinct, one per particle")

    @property
    def N(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @classmethod
    def from_density(cls, u0, N, driver, params, box_halfwidth, master_seed=0, **kw):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(master_seed), spawn_key=(0,))))
        x = u0.sample(int(N), rng)
        return cls(x, driver, params, box_halfwidth, master_seed=int(master_seed), **kw)

    def noise_increments(self, dt: float) -> np.ndarray:
        if self._streams is None:
            self._streams = _NoiseStreams(self.master_seed, self.stream_ids, self.driver.uniforms_per_draw)
        return sl.increments_from_uniforms(self.driver, dt, self._streams.next())

    def copy(self) -> "ParticleEnsemble":
        return copy.deepcopy(self)

    def permuted(self, perm) -> "ParticleEnsemble":
        """Reorder particles together with their noise streams (fresh streams)."""
        perm = np.asarray(perm)
        if self._streams is not None:
            raise ValueError("permute before the first step")
        return ParticleEnsemble(
            self.positions[perm], self.driver, self.params, self.box_halfwidth,
            self.master_seed, self.time, self.stream_ids[perm], self.noise, self.step_index,
        )


def _wrap(x, L):
    return x - 2.0 * L * np.floor((x + L) / (2.0 * L))


@dataclass(frozen=True)
class EmpiricalMeasure:
    positions: np.ndarray

    @property
    def N(self):
        return self.positions.shape[0]

    @property
    def weights(self):
        return np.full(self.N, 1.0 / self.N)

    @property
    def total_mass(self) -> float:
        return self.N / self.N

    def pair(self, phi) -> float:
        vals = phi.value(self.positions) if isinstance(phi, TestFunction) else np.asarray(phi(self.positions))
        return float(np.mean(vals))


def empirical_measure(ens: ParticleEnsemble) -> EmpiricalMeasure:
    return EmpiricalMeasure(ens.positions)


def generator_pairing(ens: ParticleEnsemble, phi: TestFunction, driver=None, *, half_factor=False) -> float:
    """``<S^N, L phi>``, optionally with the generator halved."""
    if driver is not None and driver != phi.driver:
        phi = TestFunction(phi.field, driver, phi.name)
    L = phi.spec.box_halfwidth
    if np.any(np.abs(ens.positions) > L):
        raise ValueError("particles outside grid box")
    val = float(np.mean(phi.generator_at(ens.positions)))
    return 0.5 * val if half_factor else val


# ---------------------------------------------------------------------------
# Time stepping


def _density(ens, V_N, F):
    if not F.depends_on_density:
        return np.zeros(ens.N)
    return local_density_at_particles(ens.positions, V_N, ens.box_halfwidth)


def step(ens: ParticleEnsemble, V_N: ScaledKernel, F, dt: float, *, T: float | None = None) -> ParticleEnsemble:
    """Advance ``ens`` in place by one explicit Euler step and return it."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if T is not None and ens.time + dt > T * (1 + 1e-12) + 1e-15:
        raise ValueError("step would pass the horizon T")
    return _advance(ens, F(ens.positions, _density(ens, V_N, F)), dt)


def _advance(ens, drift, dt):
    x = ens.positions + drift * dt
    if ens.noise:
        x = x + ens.noise_increments(dt)
    bad = np.nonzero(~np.all(np.isfinite(x), axis=1))[0]
    if bad.size:
        raise FloatingPointError(f"non-finite positions at particles {bad[:20].tolist()}")
    ens.positions = _wrap(x, ens.box_halfwidth)
    ens.step_index += 1
    ens.time = ens.step_index * dt
    return ens


@dataclass
class Trajectory:
    times: np.ndarray
    positions: list
    fields: list
    pairings: dict
    step_times: np.ndarray
    step_records: dict
    dt: float
    N: int
    seed: int

    def empirical(self, k: int) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.positions[k])


def _step_count(t, dt):
    k = round(t / dt)
    if abs(k * dt - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"dt={dt} does not divide checkpoint {t}")
    return int(k)


def run(
    initial: ParticleEnsemble,
    V_N: ScaledKernel,
    F,
    dt: float,
    T: float,
    checkpoints=None,
    *,
    grid: GridSpec | None = None,
    test_functions=(),
    observers=(),
) -> Trajectory:
    """Iterate :func:`step` from a copy of ``initial`` up to ``T``.

    At each checkpoint the positions, the mollified field (when ``grid`` is
    given) and the pairings with ``test_functions`` are stored. For every test
    function the per-step integrands ``<S, phi>``, ``<S, F . grad phi>`` and
    ``<S, L phi>`` are stored too; they feed the weak-identity residual.
    ``observers`` are called as ``obs(k, ensemble)`` at checkpoints.
    """
    cps = np.asarray([T] if checkpoints is None else checkpoints, dtype=float)
    if np.any(np.diff(cps) <= 0) or cps[-1] > T * (1 + 1e-12) or cps[0] < initial.time:
        raise ValueError("checkpoints must increase within [time, T]")
    stops = {_step_count(t, dt): k for k, t in enumerate(cps)}
    n_steps = _step_count(T, dt)
    if F.sup_bound * dt > V_N.radius / 8:
        warnings.warn("sup_bound*dt exceeds a eighth of the kernel radius", RuntimeWarning, stacklevel=2)

    ens = initial.copy()
    ens.step_index = _step_count(ens.time, dt)
    pos, fields = [None] * len(cps), [None] * len(cps)
    pairings = {tf.name: np.zeros(len(cps)) for tf in test_functions}
    recs = {tf.name: np.zeros((n_steps - ens.step_index + 1, 3)) for tf in test_functions}

    def record(k_step, drift):
        for tf in test_functions:
            g = tf.gradient_at(ens.positions)
            recs[tf.name][k_step] = (
                np.mean(tf.value(ens.positions)),
                np.mean(np.sum(drift * g, axis=1)),
                np.mean(tf.generator_at(ens.positions)),
            )

    def checkpoint(k):
        pos[k] = ens.positions.copy()
        if grid is not None:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                fields[k] = mollify(ens.positions, V_N, grid)
        for tf in test_functions:
            pairings[tf.name][k] = float(np.mean(tf.value(ens.positions)))
        for obs in observers:
            obs(k, ens)

    start = ens.step_index
    if start in stops:
        checkpoint(stops[start])
    for s in range(start, n_steps + 1):
        drift = F(ens.positions, _density(ens, V_N, F))
        record(s - start, drift)
        if s == n_steps:
            break
        try:
            _advance(ens, drift, dt)
        except Exception as exc:
            raise type(exc)(f"step {s}: {exc}") from exc
        if ens.step_index in stops:
            checkpoint(stops[ens.step_index])
    return Trajectory(
        times=cps,
        positions=pos,
        fields=fields,
        pairings=pairings,
        step_times=dt * np.arange(start, n_steps + 1),
        step_records=recs,
        dt=dt,
        N=ens.N,
        seed=ens.master_seed,
    )
