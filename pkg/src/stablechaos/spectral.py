"""Fourier multipliers on periodic uniform grids.

The box is ``[-L, L)^d`` with ``n`` points per axis, ``x_j = -L + j*dx``, and
the frequency lattice is ``xi_k = pi*k/L`` for ``k`` in ``{-n/2, ..., n/2-1}``
(numpy FFT ordering).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import ndimage, optimize

from .stable_levy import StableDriver, psi

__all__ = [
    "GridSpec",
    "GridField",
    "semigroup_apply",
    "bessel_apply",
    "gradient",
    "divergence",
    "sobolev_norm",
    "l2_norm",
    "semigroup_decay_bound_check",
    "decay_oracle_sup",
    "positivity_check",
    "maximal_function",
    "dyadic_radii",
    "lipschitz_maximal_check",
    "smooth_cutoff",
    "write_gf1",
    "read_gf1",
]


@dataclass(frozen=True)
class GridSpec:
    dim: int
    box_halfwidth: float
    points_per_axis: int

    def __post_init__(self):
        n = self.points_per_axis
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if n < 8 or n & (n - 1):
            raise ValueError(f"points_per_axis must be a power of two >= 8, got {n}")
        if not self.box_halfwidth > 0:
            raise ValueError("box_halfwidth must be positive")

    @property
    def points(self) -> int:
        return self.points_per_axis

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * self.dim

    @property
    def dx(self) -> float:
        return 2.0 * self.box_halfwidth / self.points_per_axis

    @property
    def cell_volume(self) -> float:
        return self.dx ** self.dim

    @property
    def box_volume(self) -> float:
        return (2.0 * self.box_halfwidth) ** self.dim

    @property
    def axis(self) -> np.ndarray:
        return -self.box_halfwidth + self.dx * np.arange(self.points_per_axis)

    @property
    def xi_axis(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.points_per_axis, d=self.dx)

    def coords(self) -> np.ndarray:
        """Grid point coordinates, shape ``(*shape, d)``."""
        axes = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
        return np.stack(axes, axis=-1)

    def xi_vectors(self) -> np.ndarray:
        axes = np.meshgrid(*([self.xi_axis] * self.dim), indexing="ij")
        return np.stack(axes, axis=-1)

    def xi_norm2(self) -> np.ndarray:
        return np.sum(self.xi_vectors() ** 2, axis=-1)

    def nyquist_mask(self) -> np.ndarray:
        """True on modes with some index equal to ``-n/2``."""
        k = np.fft.fftfreq(self.points_per_axis) * self.points_per_axis
        nyq = k == -self.points_per_axis // 2
        masks = np.meshgrid(*([nyq] * self.dim), indexing="ij")
        return np.logical_or.reduce(masks)

    def nyquist_multiplier_max(self, mult) -> float:
        return float(np.max(np.abs(np.asarray(mult)[self.nyquist_mask()])))

    def wrap(self, x):
        """Map positions into ``[-L, L)`` periodically."""
        L = self.box_halfwidth
        return np.mod(np.asarray(x, dtype=float) + L, 2.0 * L) - L

    def refine(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.dim, self.box_halfwidth, self.points_per_axis * factor)


class GridField:
    """Real field sampled on a ``GridSpec``; the spectrum is cached on first use."""

    def __init__(self, spec: GridSpec, values):
        values = np.asarray(values, dtype=float)
        if values.shape != spec.shape:
            raise ValueError(f"values of shape {values.shape} do not fit grid {spec.shape}")
        self.spec = spec
        self.values = values

    @classmethod
    def from_function(cls, spec: GridSpec, fn) -> "GridField":
        """Sample ``fn(coords)`` where ``coords`` has shape ``(*shape, d)``."""
        return cls(spec, fn(spec.coords()))

    @classmethod
    def from_spectrum(cls, spec: GridSpec, spectrum) -> "GridField":
        out = cls(spec, np.fft.ifftn(spectrum).real)
        return out

    @cached_property
    def spectrum(self) -> np.ndarray:
        return np.fft.fftn(self.values)

    def apply_multiplier(self, mult) -> "GridField":
        return GridField.from_spectrum(self.spec, self.spectrum * mult)

    def integral(self) -> float:
        return float(self.values.sum() * self.spec.cell_volume)

    def pair(self, other) -> float:
        """Grid quadrature of ``int f g dx``."""
        g = other.values if isinstance(other, GridField) else np.asarray(other)
        return float(np.sum(self.values * g) * self.spec.cell_volume)

    def boundary_mass(self, fraction: float = 0.8) -> float:
        """Mass of ``|f|`` outside the inner ``fraction`` of the box."""
        x = self.spec.coords()
        outer = np.max(np.abs(x), axis=-1) > fraction * self.spec.box_halfwidth
        return float(np.abs(self.values[outer]).sum() * self.spec.cell_volume)

    def __add__(self, other):
        return GridField(self.spec, self.values + _vals(other))

    def __sub__(self, other):
        return GridField(self.spec, self.values - _vals(other))

    def __mul__(self, other):
        return GridField(self.spec, self.values * _vals(other))

    __rmul__ = __mul__

    def __repr__(self):
        return f"GridField({self.spec}, min={self.values.min():.4g}, max={self.values.max():.4g})"


def _vals(x):
    return x.values if isinstance(x, GridField) else x


def psi_on_grid(driver: StableDriver, spec: GridSpec) -> np.ndarray:
    """``psi`` at every wavevector of the grid, in FFT order."""
    return psi(driver, spec.xi_vectors())


def semigroup_multiplier(driver: StableDriver, t: float, spec: GridSpec) -> np.ndarray:
    return np.exp(-t * psi_on_grid(driver, spec))


def semigroup_apply(driver: StableDriver, t: float, f: GridField) -> GridField:
    """``e^{tL} f`` as the multiplier ``exp(-t psi(xi))``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if driver.dim != f.spec.dim:
        raise ValueError(f"driver dim {driver.dim} != grid dim {f.spec.dim}")
    if t == 0:
        return GridField(f.spec, f.values.copy())
    return f.apply_multiplier(semigroup_multiplier(driver, t, f.spec))


def bessel_multiplier(epsilon: float, spec: GridSpec) -> np.ndarray:
    return (1.0 + spec.xi_norm2()) ** (epsilon / 2.0)


def bessel_apply(epsilon: float, f: GridField) -> GridField:
    """``(I - Laplacian)^(epsilon/2) f``."""
    if epsilon == 0:
        return GridField(f.spec, f.values.copy())
    return f.apply_multiplier(bessel_multiplier(epsilon, f.spec))


def derivative_multipliers(spec: GridSpec) -> np.ndarray:
    """``i xi`` per axis, shape ``(d, *shape)``, zeroed on the Nyquist modes."""
    xi = np.moveaxis(spec.xi_vectors(), -1, 0)
    mult = 1j * xi
    mult[:, spec.nyquist_mask()] = 0.0
    return mult


def gradient(f: GridField) -> list:
    """Spectral gradient; one ``GridField`` per axis."""
    return [f.apply_multiplier(m) for m in derivative_multipliers(f.spec)]


def divergence(components) -> GridField:
    spec = components[0].spec
    mult = derivative_multipliers(spec)
    spec_sum = sum(c.spectrum * m for c, m in zip(components, mult))
    return GridField.from_spectrum(spec, spec_sum)


def sobolev_norm(f: GridField, epsilon: float) -> float:
    """Discrete Bessel-potential norm via Parseval."""
    if epsilon == 0:
        return l2_norm(f)
    spec = f.spec
    weight = bessel_multiplier(2.0 * epsilon, spec)
    total = np.sum(weight * np.abs(f.spectrum) ** 2)
    return float(np.sqrt(total * spec.cell_volume / spec.points ** spec.dim))


def l2_norm(f: GridField) -> float:
    return float(np.sqrt(np.sum(f.values ** 2) * f.spec.cell_volume))


# ---------------------------------------------------------------------------
# Decay of (I-A)^eps e^{tL}


@dataclass
class DecayBoundReport:
    epsilon: float
    times: np.ndarray
    lattice_sup: np.ndarray  # sup_xi (1+|xi|^2)^eps e^{-t psi}
    scaled: np.ndarray  # lattice_sup * t^(2 eps / alpha)

    @property
    def bound(self) -> float:
        return float(self.scaled.max())

    @property
    def max_min_ratio(self) -> float:
        return float(self.scaled.max() / self.scaled.min())


def semigroup_decay_bound_check(driver, epsilon, t_list, spec: GridSpec) -> DecayBoundReport:
    """Operator norm of ``(I-A)^eps e^{tL}`` on the lattice, times ``t^(2 eps/alpha)``."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    t = np.asarray(t_list, dtype=float)
    if np.any(t <= 0):
        raise ValueError("times must be positive")
    logb = epsilon * np.log1p(spec.xi_norm2()).ravel()
    ps = psi(driver, spec.xi_vectors()).ravel()
    sup = np.array([np.exp(np.max(logb - ti * ps)) for ti in t])
    return DecayBoundReport(epsilon, t, sup, sup * t ** (2 * epsilon / driver.alpha))


def decay_oracle_sup(alpha: float, epsilon: float, t: float, scale: float = 1.0) -> float:
    """Closed-form ``max_r (1+r^2)^eps exp(-t (scale r)^alpha)`` over ``r >= 0``."""
    c = t * scale ** alpha

    def h(r):
        return epsilon * np.log1p(r * r) - c * r ** alpha

    def dh(r):
        return 2 * epsilon * r / (1 + r * r) - c * alpha * r ** (alpha - 1)

    # dh > 0 somewhere iff an interior maximum exists; bracket each sign change
    rs = np.geomspace(1e-8, 1e8, 4001)
    vals = dh(rs)
    best = 0.0
    for i in np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]:
        root = optimize.brentq(dh, rs[i], rs[i + 1], xtol=1e-14, rtol=1e-14)
        best = max(best, h(root))
    return float(np.exp(best))


# ---------------------------------------------------------------------------
# Positivity of (I-A)^{eps/2} e^{tL}


def positivity_check(driver, epsilon: float, t: float, f: GridField) -> float:
    """Minimum grid value of ``(I-A)^(eps/2) e^{tL} f`` for non-negative ``f``."""
    if not t > 0:
        raise ValueError("t must be positive")
    if f.values.min() < -1e-12:
        raise ValueError(f"f must be non-negative, min is {f.values.min():.3g}")
    g = bessel_apply(epsilon, semigroup_apply(driver, t, f))
    return float(g.values.min())


# ---------------------------------------------------------------------------
# Hardy-Littlewood maximal function


def dyadic_radii(spec: GridSpec) -> list:
    """``dx * 2^k`` up to half the box width."""
    radii = []
    r = spec.dx
    while r <= spec.box_halfwidth * (1 + 1e-12):
        radii.append(r)
        r *= 2
    return radii


def _ball_average(absf: np.ndarray, spec: GridSpec, r: float) -> np.ndarray:
    m = int(np.floor(r / spec.dx + 1e-9))
    if spec.dim == 1:
        return ndimage.uniform_filter1d(absf, size=2 * m + 1, mode="wrap")
    offs = np.arange(-m, m + 1)
    disk = (offs[:, None] ** 2 + offs[None, :] ** 2) <= m * m + 1e-9
    kern = np.zeros(spec.shape)
    ii, jj = np.nonzero(disk)
    kern[(ii - m) % spec.points, (jj - m) % spec.points] = 1.0 / disk.sum()
    return np.fft.ifftn(np.fft.fftn(absf) * np.fft.fftn(kern)).real


def maximal_function(f: GridField, radii=None) -> GridField:
    """Discrete maximal function: max over ``radii`` of grid-ball averages of ``|f|``."""
    spec = f.spec
    radii = dyadic_radii(spec) if radii is None else list(radii)
    if not radii:
        raise ValueError("radii must be non-empty")
    if min(radii) < spec.dx * (1 - 1e-12):
        raise ValueError(f"radii below grid spacing {spec.dx:.4g}: {min(radii):.4g}")
    absf = np.abs(f.values)
    out = np.zeros_like(absf)
    for r in radii:
        np.maximum(out, _ball_average(absf, spec, r), out=out)
    return GridField(spec, out)


@dataclass
class LipschitzMaximalReport:
    max_ratio: float
    n_pairs: int
    n_degenerate: int


def lipschitz_maximal_check(
    f: GridField, *, max_pairs: int = 200_000, seed=0, radii=None
) -> LipschitzMaximalReport:
    """Largest ``|f(x)-f(y)| / (|x-y| (M|grad f|(x) + M|grad f|(y)))`` over pairs.

    Pairs are separated by at most a quarter of the box width. In ``d == 1``
    every such grid pair is used when the count fits in ``max_pairs``;
    otherwise pairs are sampled.
    """
    spec = f.spec
    grad = gradient(f)
    gnorm = GridField(spec, np.sqrt(sum(g.values ** 2 for g in grad)))
    mg = maximal_function(gnorm, radii).values.ravel()
    vals = f.values.ravel()
    n = spec.points
    smax = n // 4
    rng = np.random.default_rng(seed)
    if spec.dim == 1 and n * smax <= max_pairs:
        i = np.repeat(np.arange(n), smax)
        s = np.tile(np.arange(1, smax + 1), n)
        j = (i + s) % n
        dist = s * spec.dx
    else:
        m = max_pairs
        idx_i = rng.integers(0, n, size=(m, spec.dim))
        shift = rng.integers(-smax, smax + 1, size=(m, spec.dim))
        if spec.dim == 1:
            shift[shift == 0] = 1
        dist = np.linalg.norm(shift, axis=1) * spec.dx
        keep = (dist > 0) & (dist <= spec.box_halfwidth / 2 + 1e-12)
        idx_i, shift, dist = idx_i[keep], shift[keep], dist[keep]
        idx_j = (idx_i + shift) % n
        i = np.ravel_multi_index(idx_i.T, spec.shape)
        j = np.ravel_multi_index(idx_j.T, spec.shape)
    num = np.abs(vals[i] - vals[j])
    den = dist * (mg[i] + mg[j])
    degenerate = den < 1e-14
    ratio = num[~degenerate] / den[~degenerate]
    return LipschitzMaximalReport(
        float(ratio.max()) if ratio.size else 0.0, int(i.size), int(degenerate.sum())
    )


# ---------------------------------------------------------------------------
# Windowing


def smooth_cutoff(spec: GridSpec, radius: float) -> GridField:
    """C-infinity window: 1 on ``|x| <= radius/2``, 0 for ``|x| >= radius``."""
    u = np.clip(2.0 * np.linalg.norm(spec.coords(), axis=-1) / radius - 1.0, 0.0, 1.0)

    def f(s):
        out = np.zeros_like(s)
        pos = s > 0
        out[pos] = np.exp(-1.0 / s[pos])
        return out

    return GridField(spec, f(1.0 - u) / (f(1.0 - u) + f(u)))


# ---------------------------------------------------------------------------
# GF1 field dumps

GF1_MAGIC = b"GF1\x00GRIDFLD\x00"  # 12 bytes
GF1_VERSION = 1


def write_gf1(path, f: GridField) -> None:
    spec = f.spec
    header = GF1_MAGIC + struct.pack("<I", GF1_VERSION)
    meta = struct.pack("<IId", spec.dim, spec.points_per_axis, spec.box_halfwidth)
    data = np.ascontiguousarray(f.values, dtype="<f8").tobytes(order="C")
    Path(path).write_bytes(header + meta + data)


def read_gf1(path) -> GridField:
    raw = Path(path).read_bytes()
    if raw[:12] != GF1_MAGIC:
        raise ValueError(f"{path}: not a GF1 file")
    (version,) = struct.unpack("<I", raw[12:16])
    if version != GF1_VERSION:
        raise ValueError(f"{path}: unsupported GF1 version {version}")
    dim, n, L = struct.unpack("<IId", raw[16:32])
    spec = GridSpec(dim, L, n)
    vals = np.frombuffer(raw[32:], dtype="<f8")
    if vals.size != n ** dim:
        raise ValueError(f"{path}: expected {n ** dim} values, found {vals.size}")
    return GridField(spec, vals.reshape(spec.shape).astype(float))
