"""Symmetric alpha-stable drivers: characteristic exponent, Levy measure, samplers.

Two spectral descriptions are supported:

* ``Isotropic(scale)`` with ``psi(xi) = (scale * |xi|)**alpha``;
* ``Discrete(directions, weights)``, a symmetric spectral measure carried by
  the stored directions and their mirror images.

All samplers draw uniforms from a numpy ``Generator`` and push them through
an explicit transform (Chambers-Mallows-Stuck, Kanter subordination), so the
same uniforms always give the same increments.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn

__all__ = [
    "Isotropic",
    "Discrete",
    "StableDriver",
    "JumpStream",
    "psi",
    "sample_increment",
    "sample_increments",
    "increments_from_uniforms",
    "density",
    "sample_path_decomposed",
    "big_jump_rate",
    "radial_levy_constant",
    "nondegeneracy_constant",
]

_UNIFORM_SHIFT = 2.0 ** -54  # maps Generator.random() output into the open interval (0, 1)


@dataclass(frozen=True)
class Isotropic:
    """Rotation-invariant spectral measure; ``psi(xi) = (scale*|xi|)**alpha``."""

    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")


@dataclass(frozen=True)
class Discrete:
    """Spectral measure with atoms ``w_j`` at ``+theta_j`` and ``-theta_j``.

    Only one direction of each mirrored pair is stored; the mirror image is
    implied, which keeps the measure symmetric by construction.
    """

    directions: tuple
    weights: tuple

    def __post_init__(self):
        dirs = np.atleast_2d(np.asarray(self.directions, dtype=float))
        w = np.asarray(self.weights, dtype=float).ravel()
        if dirs.shape[0] != w.shape[0]:
            raise ValueError("need exactly one weight per direction")
        if np.any(w <= 0):
            raise ValueError("spectral weights must be positive")
        norms = np.linalg.norm(dirs, axis=1)
        if np.any(norms == 0):
            raise ValueError("zero direction in spectral measure")
        object.__setattr__(self, "directions", tuple(map(tuple, dirs / norms[:, None])))
        object.__setattr__(self, "weights", tuple(w))

    @property
    def direction_array(self) -> np.ndarray:
        return np.asarray(self.directions, dtype=float)

    @property
    def weight_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)


def ray_constant(alpha: float) -> float:
    """``c_alpha`` with ``psi(xi) = sum_j w_j c_alpha |<theta_j, xi>|**alpha``.

    Equals ``2 * int_0^inf (1 - cos u) u**(-1-alpha) du``; the factor 2 counts
    the mirrored atom.
    """
    return -2.0 * gamma_fn(-alpha) * math.cos(math.pi * alpha / 2)


def radial_levy_constant(alpha: float, dim: int) -> float:
    """Constant ``K`` such that ``K |z|^(-d-alpha) dz`` has exponent ``|xi|**alpha``."""
    return (
        alpha
        * 2.0 ** (alpha - 1)
        * gamma_fn((dim + alpha) / 2)
        / (math.pi ** (dim / 2) * gamma_fn(1 - alpha / 2))
    )


def _sphere_area(dim: int) -> float:
    return 2.0 * math.pi ** (dim / 2) / gamma_fn(dim / 2)


@dataclass(frozen=True)
class StableDriver:
    alpha: float
    dim: int = 1
    spectral: Isotropic | Discrete = field(default_factory=Isotropic)

    def __post_init__(self):
        if not 1.0 < self.alpha < 2.0:
            raise ValueError(f"alpha must lie in (1, 2), got {self.alpha}")
        if self.dim not in (1, 2):
            raise ValueError(f"only dim 1 and 2 are supported, got {self.dim}")
        if isinstance(self.spectral, Discrete):
            dirs = self.spectral.direction_array
            if dirs.shape[1] != self.dim:
                raise ValueError("spectral directions do not match dim")
            if np.linalg.matrix_rank(dirs) < self.dim:
                raise ValueError("spectral directions must span R^d (non-degeneracy)")
        elif not isinstance(self.spectral, Isotropic):
            raise TypeError(f"unknown spectral description {self.spectral!r}")

    @property
    def uniforms_per_draw(self) -> int:
        """Number of U(0,1) variates consumed by one increment."""
        if isinstance(self.spectral, Discrete):
            return 2 * len(self.spectral.weights)
        return 2 if self.dim == 1 else 4


def psi(driver: StableDriver, xi) -> np.ndarray:
    """Characteristic exponent, ``E exp(i<xi, L_t>) = exp(-t psi(xi))``.

    ``xi`` has shape ``(..., d)``; for ``d == 1`` a bare scalar or 1-d array of
    frequencies is also accepted.
    """
    xi = np.asarray(xi, dtype=float)
    if driver.dim == 1 and (xi.ndim == 0 or xi.shape[-1] != 1):
        xi = xi[..., None]
    if xi.shape[-1] != driver.dim:
        raise ValueError(f"frequency dimension {xi.shape[-1]} != driver dim {driver.dim}")
    a = driver.alpha
    sp = driver.spectral
    if isinstance(sp, Isotropic):
        return (sp.scale * np.linalg.norm(xi, axis=-1)) ** a
    proj = np.abs(xi @ sp.direction_array.T)
    return ray_constant(a) * (proj ** a) @ sp.weight_array


def nondegeneracy_constant(driver: StableDriver, n_dirs: int = 720) -> float:
    """Infimum of ``psi(xi)/|xi|^alpha`` over a grid of unit vectors.

    A positive value is the numerical counterpart of ``psi >= C |xi|^alpha``.
    Not an analytic certificate for discrete spectral measures.
    """
    if driver.dim == 1:
        units = np.array([[1.0], [-1.0]])
    else:
        ang = np.linspace(0.0, 2 * np.pi, n_dirs, endpoint=False)
        units = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    return float(np.min(psi(driver, units)))


def _open_uniform(u):
    return np.asarray(u, dtype=float) + _UNIFORM_SHIFT


def _cms_symmetric(alpha, u_angle, u_exp):
    """Standard symmetric stable variate with exponent ``|xi|**alpha``."""
    v = np.pi * (u_angle - 0.5)
    w = -np.log(u_exp)
    return (
        np.sin(alpha * v)
        / np.cos(v) ** (1.0 / alpha)
        * (np.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha)
    )


def _kanter_positive(a, u_angle, u_exp):
    """Positive a-stable variate (0 < a < 1) with Laplace transform ``exp(-s**a)``."""
    u = np.pi * u_angle
    w = -np.log(u_exp)
    return (
        np.sin(a * u)
        / np.sin(u) ** (1.0 / a)
        * (np.sin((1.0 - a) * u) / w) ** ((1.0 - a) / a)
    )


def increments_from_uniforms(driver: StableDriver, dt, uniforms) -> np.ndarray:
    """Map uniforms of shape ``(..., uniforms_per_draw)`` to increments ``(..., d)``.

    Implements ``L_dt = dt**(1/alpha) * L_1``.
    """
    u = _open_uniform(uniforms)
    if u.shape[-1] != driver.uniforms_per_draw:
        raise ValueError(
            f"expected {driver.uniforms_per_draw} uniforms per draw, got {u.shape[-1]}"
        )
    a = driver.alpha
    sp = driver.spectral
    if isinstance(sp, Discrete):
        j = len(sp.weights)
        s = _cms_symmetric(a, u[..., :j], u[..., j:])
        s = s * (sp.weight_array * ray_constant(a)) ** (1.0 / a)
        unit = s @ sp.direction_array
    elif driver.dim == 1:
        unit = sp.scale * _cms_symmetric(a, u[..., 0], u[..., 1])[..., None]
    else:
        mix = 2.0 * _kanter_positive(a / 2.0, u[..., 0], u[..., 1])
        # Box-Muller pair
        rad = np.sqrt(-2.0 * np.log(u[..., 2]))
        ang = 2.0 * np.pi * u[..., 3]
        gauss = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=-1)
        unit = sp.scale * np.sqrt(mix)[..., None] * gauss
    return float(dt) ** (1.0 / a) * unit


def _check_dt(dt):
    if not np.all(np.asarray(dt) > 0):
        raise ValueError(f"time step must be positive, got {dt}")


def sample_increment(driver: StableDriver, dt: float, rng) -> np.ndarray:
    """One increment ``L_dt`` as a vector of length ``d``."""
    _check_dt(dt)
    rng = np.random.default_rng(rng)
    return increments_from_uniforms(driver, dt, rng.random(driver.uniforms_per_draw))


def sample_increments(driver: StableDriver, dt: float, size: int, rng) -> np.ndarray:
    """``size`` i.i.d. increments, shape ``(size, d)``."""
    _check_dt(dt)
    rng = np.random.default_rng(rng)
    return increments_from_uniforms(driver, dt, rng.random((size, driver.uniforms_per_draw)))


def density(driver: StableDriver, t: float, grid):
    """Transition density ``rho_t`` on a periodic grid via inverse DFT of ``exp(-t psi)``.

    The result is the periodisation of ``rho_t`` over the box; choose the box
    wide enough for the heavy tails (``|x|^(-1-alpha)`` decay).
    """
    from .spectral import GridField

    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    if grid.dim != driver.dim:
        raise ValueError("grid and driver dimensions differ")
    mult = np.exp(-t * psi(driver, grid.xi_vectors()))
    nyq = grid.nyquist_multiplier_max(mult)
    if nyq > 1e-12:
        warnings.warn(
            f"exp(-t psi) is {nyq:.3g} at the Nyquist frequency; density may be aliased",
            RuntimeWarning,
            stacklevel=2,
        )
    vals = np.fft.ifftn(mult).real * grid.points ** grid.dim / grid.box_volume
    # the multiplier is even, so is rho_t; remove the roundoff asymmetry
    mirror = np.roll(np.flip(vals), 1, axis=tuple(range(vals.ndim)))
    vals = 0.5 * (vals + mirror)
    vals = np.fft.fftshift(vals)  # move x = 0 from index 0 to index n/2
    return GridField(grid, vals)


# ---------------------------------------------------------------------------
# Levy-Ito decomposition


def big_jump_rate(driver: StableDriver) -> float:
    """Total mass ``nu({|z| >= 1})`` of the Levy measure."""
    a = driver.alpha
    sp = driver.spectral
    if isinstance(sp, Discrete):
        # radial density r^(-1-a) on each of the 2J rays, scaled so psi matches
        return 2.0 * float(np.sum(sp.weight_array)) / a
    return sp.scale ** a * radial_levy_constant(a, driver.dim) * _sphere_area(driver.dim) / a


def _big_jump_sizes(driver: StableDriver, count: int, rng) -> np.ndarray:
    a = driver.alpha
    r = (1.0 - rng.random(count)) ** (-1.0 / a)  # Pareto tail r^(-1-a) on [1, inf)
    sp = driver.spectral
    if isinstance(sp, Discrete):
        w = sp.weight_array
        idx = rng.choice(len(w), size=count, p=w / w.sum())
        sign = np.where(rng.random(count) < 0.5, -1.0, 1.0)
        return (r * sign)[:, None] * sp.direction_array[idx]
    if driver.dim == 1:
        return (r * np.where(rng.random(count) < 0.5, -1.0, 1.0))[:, None]
    ang = 2.0 * np.pi * rng.random(count)
    return r[:, None] * np.stack([np.cos(ang), np.sin(ang)], axis=-1)


@dataclass
class JumpStream:
    """Path sample split into compound-Poisson big jumps and a small-jump part."""

    driver: StableDriver
    times: np.ndarray  # step grid, length n_steps + 1
    big_jump_events: list  # [(time, jump_vector)], time-ordered
    small_jump_increments: np.ndarray  # (n_steps, d)
    rng_seed: int | None = None
    rejections: int = 0

    @property
    def big_jump_increments(self) -> np.ndarray:
        """Big jumps aggregated onto the step grid, ``(n_steps, d)``."""
        out = np.zeros_like(self.small_jump_increments)
        if self.big_jump_events:
            t_ev = np.array([e[0] for e in self.big_jump_events])
            z = np.array([e[1] for e in self.big_jump_events])
            k = np.clip(np.searchsorted(self.times, t_ev, side="right") - 1, 0, len(out) - 1)
            np.add.at(out, k, z)
        return out

    @property
    def increments(self) -> np.ndarray:
        return self.small_jump_increments + self.big_jump_increments

    @property
    def path(self) -> np.ndarray:
        """``L`` at ``times`` (starts at 0)."""
        d = self.small_jump_increments.shape[1]
        return np.vstack([np.zeros((1, d)), np.cumsum(self.increments, axis=0)])


def sample_path_decomposed(
    driver: StableDriver,
    T: float,
    dt: float,
    seed=None,
    *,
    big_jumps: bool = True,
    max_rejections: int = 1000,
) -> JumpStream:
    """Sample ``L`` on ``[0, T]`` as big jumps (``|z| >= 1``) plus small jumps.

    Small jumps over one step are a stable increment truncated to ``|z| <= 1``
    by rejection; by symmetry the compensator drift is zero. The truncation is
    an approximation whose error vanishes as ``dt -> 0``.
    """
    if not T > 0 or not dt > 0:
        raise ValueError("T and dt must be positive")
    if dt > T:
        raise ValueError("dt must not exceed T")
    rng_seed = seed if isinstance(seed, (int, np.integer)) else None
    rng = np.random.default_rng(seed)
    n_steps = int(round(T / dt))
    if not math.isclose(n_steps * dt, T, rel_tol=1e-9):
        raise ValueError("dt must divide T")
    times = np.linspace(0.0, T, n_steps + 1)

    events = []
    if big_jumps:
        count = rng.poisson(T * big_jump_rate(driver))
        t_ev = np.sort(T * rng.random(count))
        z = _big_jump_sizes(driver, count, rng)
        events = [(float(t), z[i].copy()) for i, t in enumerate(t_ev)]

    small = np.empty((n_steps, driver.dim))
    pending = np.arange(n_steps)
    rejections = 0
    while pending.size:
        draw = sample_increments(driver, dt, pending.size, rng)
        ok = np.linalg.norm(draw, axis=1) <= 1.0
        small[pending[ok]] = draw[ok]
        rejections += int((~ok).sum())
        pending = pending[~ok]
        if rejections > max_rejections * n_steps:
            raise RuntimeError("small-jump rejection sampler is not accepting; reduce dt")
    return JumpStream(driver, times, events, small, rng_seed, rejections)
