"""Interaction kernel ``V``, its moderate rescaling ``V^N``, and kernel smoothing.

``V^N(x) = N^beta V(N^(beta/d) x)``; ``g^N = V^N * S^N`` is sampled on a
periodic grid, and the per-particle local density ``(1/N) sum_k V^N(X_i-X_k)``
is computed exactly with a uniform cell list.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import integrate

from .spectral import GridField, GridSpec

__all__ = [
    "SmoothBump",
    "WendlandC2",
    "Kernel",
    "ScaledKernel",
    "ModelParams",
    "ValidationReport",
    "validate_params",
    "scaled_kernel",
    "mollify",
    "local_density_at_particles",
    "local_density_direct",
]

_BUMP, _WENDLAND = 0, 1


@dataclass(frozen=True)
class SmoothBump:
    radius: float = 1.0
    code = _BUMP

    @staticmethod
    def profile(s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        inside = s < 1.0
        out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
        return out


@dataclass(frozen=True)
class WendlandC2:
    radius: float = 1.0
    code = _WENDLAND

    @staticmethod
    def profile(s):
        s = np.asarray(s, dtype=float)
        return np.where(s < 1.0, (1.0 - s) ** 4 * (4.0 * s + 1.0), 0.0)


def _unit_mass(profile, dim: int) -> float:
    """``int_{|x|<1} profile(|x|) dx`` by adaptive quadrature."""
    area = 2.0 if dim == 1 else 2.0 * math.pi
    val, _ = integrate.quad(
        lambda s: float(profile(s)) * s ** (dim - 1), 0.0, 1.0, epsabs=1e-14, epsrel=1e-12, limit=200
    )
    return area * val


@dataclass(frozen=True)
class Kernel:
    """Radial probability density with compact support in the ball of ``profile.radius``."""

    dim: int = 1
    profile: SmoothBump | WendlandC2 = field(default_factory=SmoothBump)
    normalization: float = field(init=False)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        mass = _unit_mass(self.profile.profile, self.dim) * self.profile.radius ** self.dim
        object.__setattr__(self, "normalization", 1.0 / mass)

    @property
    def radius(self) -> float:
        return self.profile.radius

    @property
    def amplitude(self) -> float:
        return self.normalization

    def radial(self, r):
        return self.normalization * self.profile.profile(np.asarray(r) / self.radius)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        return self.radial(np.linalg.norm(x, axis=-1))

    def on_grid(self, spec: GridSpec, center=None) -> GridField:
        c = np.zeros(self.dim) if center is None else np.asarray(center, dtype=float)
        disp = spec.wrap(spec.coords() - c)
        return GridField(spec, self(disp))


@dataclass(frozen=True)
class ScaledKernel:
    """``V^N(x) = N^beta V(N^(beta/d) x)``."""

    base: Kernel
    N: int
    beta: float

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def stretch(self) -> float:
        return self.N ** (self.beta / self.dim)

    @property
    def radius(self) -> float:
        return self.base.radius / self.stretch

    @property
    def amplitude(self) -> float:
        """Multiplier in front of ``profile(|x|/radius)``."""
        return self.N ** self.beta * self.base.normalization

    def radial(self, r):
        return self.N ** self.beta * self.base.radial(np.asarray(r) * self.stretch)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        return self.radial(np.linalg.norm(x, axis=-1))

    def on_grid(self, spec: GridSpec, center=None) -> GridField:
        c = np.zeros(self.dim) if center is None else np.asarray(center, dtype=float)
        return GridField(spec, self(spec.wrap(spec.coords() - c)))


# ---------------------------------------------------------------------------
# Parameter constraints


@dataclass(frozen=True)
class ModelParams:
    alpha: float
    beta: float
    epsilon: float
    delta: float
    dim: int = 1
    T: float = 1.0


@dataclass
class Check:
    name: str
    lower: float
    value: float
    upper: float
    lower_strict: bool
    upper_strict: bool

    @property
    def holds(self) -> bool:
        lo = self.value > self.lower if self.lower_strict else self.value >= self.lower
        hi = self.value < self.upper if self.upper_strict else self.value <= self.upper
        return bool(lo and hi)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "lower": self.lower,
            "value": self.value,
            "upper": self.upper,
            "lower_strict": self.lower_strict,
            "upper_strict": self.upper_strict,
            "holds": self.holds,
        }


@dataclass
class ValidationReport:
    params: ModelParams
    checks: list

    @property
    def ok(self) -> bool:
        return all(c.holds for c in self.checks)

    @property
    def violations(self) -> list:
        return [c for c in self.checks if not c.holds]

    def __getitem__(self, name) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {
            "ok": self.ok,
            "params": self.params.__dict__,
            "checks": [c.as_dict() for c in self.checks],
            "violations": [c.name for c in self.violations],
        }


def validate_params(p: ModelParams) -> ValidationReport:
    """Evaluate the beta bound and the epsilon and delta windows.

    * ``0 < beta < 1 / (2 + (2 - alpha)/d)``
    * ``d/2 < epsilon < (1-beta) d / (2 beta) - (1 - alpha/2)``
    * ``1 - alpha/2 < delta <= (1-beta) d / (2 beta) - epsilon``
    """
    if not 1 < p.alpha < 2:
        raise ValueError("alpha must lie in (1, 2)")
    if p.dim not in (1, 2):
        raise ValueError("dim must be 1 or 2")
    d, a, b = p.dim, p.alpha, p.beta
    top = (1.0 - b) * d / (2.0 * b) if b > 0 else math.inf
    checks = [
        Check("beta", 0.0, b, 1.0 / (2.0 + (2.0 - a) / d), True, True),
        Check("epsilon", d / 2.0, p.epsilon, top - (1.0 - a / 2.0), True, True),
        Check("delta", 1.0 - a / 2.0, p.delta, top - p.epsilon, True, False),
    ]
    return ValidationReport(p, checks)


def scaled_kernel(V: Kernel, N: int, p: ModelParams) -> ScaledKernel:
    return ScaledKernel(V, int(N), p.beta)


# ---------------------------------------------------------------------------
# Kernel smoothing onto a grid


def _check_inside(positions, spec: GridSpec):
    L = spec.box_halfwidth
    bad = np.nonzero(np.any((positions < -L) | (positions >= L) | ~np.isfinite(positions), axis=1))[0]
    if bad.size:
        shown = bad[:20].tolist()
        raise ValueError(f"{bad.size} particles outside the box [-{L}, {L}): indices {shown}")


def mollify(positions, V_N: ScaledKernel, grid: GridSpec, *, weight: float | None = None) -> GridField:
    """``g^N = (1/N) sum_i V^N(. - X_i)`` sampled on the periodic grid.

    Each particle scatters its compact footprint; footprints wrap around the
    box. Requires at least four grid points across the kernel support.
    """
    x = np.atleast_2d(np.asarray(positions, dtype=float))
    if grid.dim == 1 and x.shape[0] == 1 and x.shape[1] != 1:
        x = x.T
    if x.shape[1] != grid.dim:
        raise ValueError("positions do not match grid dimension")
    _check_inside(x, grid)
    near = np.any(np.abs(x) > grid.box_halfwidth - V_N.radius, axis=1)
    if near.any():
        warnings.warn(
            f"{int(near.sum())} particles within one kernel radius of the box edge; footprints wrap",
            RuntimeWarning,
            stacklevel=2,
        )
    if 2.0 * V_N.radius / grid.dx < 4.0:
        raise ValueError(
            f"kernel support {2 * V_N.radius:.4g} spans fewer than 4 grid cells (dx={grid.dx:.4g})"
        )
    n, L, h = grid.points, grid.box_halfwidth, grid.dx
    w = int(math.ceil(V_N.radius / h)) + 1
    offs = np.arange(-w, w + 1)
    base = np.floor((x + L) / h).astype(np.int64)  # (N, d)
    weight = 1.0 / x.shape[0] if weight is None else weight
    if grid.dim == 1:
        idx = base[:, 0:1] + offs[None, :]
        disp = (idx * h - L) - x[:, 0:1]
        vals = V_N.radial(np.abs(disp))
        flat = np.mod(idx, n).ravel()
    else:
        oi, oj = np.meshgrid(offs, offs, indexing="ij")
        oi, oj = oi.ravel(), oj.ravel()
        ii = base[:, 0:1] + oi[None, :]
        jj = base[:, 1:2] + oj[None, :]
        dx0 = (ii * h - L) - x[:, 0:1]
        dx1 = (jj * h - L) - x[:, 1:2]
        vals = V_N.radial(np.hypot(dx0, dx1))
        flat = (np.mod(ii, n) * n + np.mod(jj, n)).ravel()
    acc = np.bincount(flat, weights=vals.ravel(), minlength=n ** grid.dim)
    return GridField(grid, weight * acc.reshape(grid.shape))


# ---------------------------------------------------------------------------
# Local density at particles


@numba.njit(cache=True, inline="always")
def _profile(code, s):
    if s >= 1.0:
        return 0.0
    if code == 0:
        return math.exp(-1.0 / (1.0 - s * s))
    return (1.0 - s) ** 4 * (4.0 * s + 1.0)


@numba.njit(cache=True)
def _min_image(d, box):
    return d - box * math.floor(d / box + 0.5)


@numba.njit(cache=True)
def _bin(cell, m):
    n = cell.shape[0]
    counts = np.zeros(m + 1, dtype=np.int64)
    for i in range(n):
        counts[cell[i] + 1] += 1
    for c in range(m):
        counts[c + 1] += counts[c]
    order = np.empty(n, dtype=np.int64)
    fill = counts[:-1].copy()
    for i in range(n):
        order[fill[cell[i]]] = i
        fill[cell[i]] += 1
    return counts, order


@numba.njit(cache=True)
def _cells_1d(x, box, radius, code, ncell):
    # half shell: pairs inside a cell once, then each cell against its right neighbour
    n = x.shape[0]
    cell = np.empty(n, dtype=np.int64)
    for i in range(n):
        c = int(math.floor((x[i] + 0.5 * box) / box * ncell))
        cell[i] = min(max(c, 0), ncell - 1)
    counts, order = _bin(cell, ncell)
    out = np.zeros(n)
    inv_r = 1.0 / radius
    self_term = _profile(code, 0.0)
    for c in range(ncell):
        nb = (c + 1) % ncell
        for a in range(counts[c], counts[c + 1]):
            i = order[a]
            out[i] += self_term
            for b in range(a + 1, counts[c + 1]):
                j = order[b]
                v = _profile(code, abs(_min_image(x[i] - x[j], box)) * inv_r)
                out[i] += v
                out[j] += v
            for b in range(counts[nb], counts[nb + 1]):
                j = order[b]
                v = _profile(code, abs(_min_image(x[i] - x[j], box)) * inv_r)
                out[i] += v
                out[j] += v
    return out


@numba.njit(cache=True)
def _cells_2d(x, box, radius, code, ncell):
    n = x.shape[0]
    cell = np.empty(n, dtype=np.int64)
    for i in range(n):
        cx = min(max(int(math.floor((x[i, 0] + 0.5 * box) / box * ncell)), 0), ncell - 1)
        cy = min(max(int(math.floor((x[i, 1] + 0.5 * box) / box * ncell)), 0), ncell - 1)
        cell[i] = cx * ncell + cy
    counts, order = _bin(cell, ncell * ncell)
    out = np.zeros(n)
    inv_r = 1.0 / radius
    self_term = _profile(code, 0.0)
    half = np.array([[1, -1], [1, 0], [1, 1], [0, 1]])
    for c in range(ncell * ncell):
        cx, cy = c // ncell, c % ncell
        for a in range(counts[c], counts[c + 1]):
            i = order[a]
            out[i] += self_term
            for b in range(a + 1, counts[c + 1]):
                j = order[b]
                d0 = _min_image(x[i, 0] - x[j, 0], box)
                d1 = _min_image(x[i, 1] - x[j, 1], box)
                v = _profile(code, math.sqrt(d0 * d0 + d1 * d1) * inv_r)
                out[i] += v
                out[j] += v
            for h in range(4):
                nb = ((cx + half[h, 0]) % ncell) * ncell + (cy + half[h, 1]) % ncell
                for b in range(counts[nb], counts[nb + 1]):
                    j = order[b]
                    d0 = _min_image(x[i, 0] - x[j, 0], box)
                    d1 = _min_image(x[i, 1] - x[j, 1], box)
                    v = _profile(code, math.sqrt(d0 * d0 + d1 * d1) * inv_r)
                    out[i] += v
                    out[j] += v
    return out


def local_density_direct(positions, V_N: ScaledKernel, box_halfwidth: float) -> np.ndarray:
    """O(N^2) reference: ``(1/N) sum_k V^N(X_i - X_k)`` with periodic minimum image."""
    x = np.atleast_2d(np.asarray(positions, dtype=float))
    box = 2.0 * box_halfwidth
    diff = x[:, None, :] - x[None, :, :]
    diff -= box * np.floor(diff / box + 0.5)
    return V_N.radial(np.linalg.norm(diff, axis=-1)).sum(axis=1) / x.shape[0]


def local_density_at_particles(positions, V_N: ScaledKernel, box_halfwidth: float) -> np.ndarray:
    """``rho_i = (1/N) sum_k V^N(X_i - X_k)``, self-term included.

    Positions live on the periodic box ``[-L, L)^d``. Uses a uniform cell list
    with cell size at least the kernel radius; falls back to the direct sum
    when the box holds fewer than three cells per axis.
    """
    x = np.ascontiguousarray(np.atleast_2d(np.asarray(positions, dtype=float)))
    box = 2.0 * box_halfwidth
    if V_N.radius > box_halfwidth:
        raise ValueError("kernel radius must not exceed the box half-width")
    ncell = int(box // V_N.radius)
    if ncell < 3:
        return local_density_direct(x, V_N, box_halfwidth)
    code = V_N.base.profile.code
    if x.shape[1] == 1:
        raw = _cells_1d(x[:, 0], box, V_N.radius, code, ncell)
    else:
        raw = _cells_2d(x, box, V_N.radius, code, ncell)
    return raw * (V_N.amplitude / x.shape[0])
