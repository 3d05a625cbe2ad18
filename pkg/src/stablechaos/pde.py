"""Non-local conservation law ``u_t + div(F(x,u) u) = L u`` on the periodic box.

Two independent solvers:

* :func:`solve_splitting` uses an integrating factor for ``L`` and explicit
  stages for the flux. ``order=4`` (default) is the Lawson RK4 scheme,
  ``order=1`` the plain step ``u <- e^{dt L}[u - dt div(F u)]``.
* :func:`solve_picard` iterates the mild map

      u(t) = e^{tL} u0 - int_0^t div e^{(t-s)L} (F(u) u)(s) ds

  over a whole trajectory, with trapezoid quadrature on the ``dt`` lattice.

The flux ``F(x,u) u`` is formed on a 3/2 zero-padded grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .spectral import GridField, GridSpec, gradient, l2_norm, psi_on_grid
from .stable_levy import StableDriver

__all__ = [
    "NumericalFailure",
    "NonContraction",
    "PDEProblem",
    "PDETrajectory",
    "solve_splitting",
    "solve_picard",
    "weak_form_residual",
    "generator_symbol",
]


class NumericalFailure(RuntimeError):
    pass


class NonContraction(NumericalFailure):
    pass


def generator_symbol(driver: StableDriver, spec: GridSpec, half_factor: bool = False) -> np.ndarray:
    """Fourier symbol of ``-L`` (``psi`` or ``psi/2``), FFT order. ``driver=None`` means ``L = 0``."""
    if driver is None:
        return np.zeros(spec.shape)
    s = psi_on_grid(driver, spec)
    return 0.5 * s if half_factor else s


@dataclass
class PDEProblem:
    driver: StableDriver | None
    F: object
    u0: GridField
    T: float
    dt: float
    half_factor: bool = False
    checkpoints: tuple | None = None
    check_initial: bool = True

    def __post_init__(self):
        if self.driver is not None and self.driver.dim != self.u0.spec.dim:
            raise ValueError("driver and grid dimensions differ")
        if not (self.T > 0 and self.dt > 0):
            raise ValueError("T and dt must be positive")
        n = self.T / self.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValueError("dt must divide T")
        if self.check_initial:
            v = self.u0.values
            if v.min() < -1e-12:
                raise ValueError(f"u0 has negative values (min {v.min():.3g})")
            if abs(self.u0.integral() - 1.0) > 1e-4:
                raise ValueError(f"u0 mass {self.u0.integral():.8f} is not 1")
            outer = np.abs(self.grid.coords()).max(axis=-1) > 0.8 * self.grid.box_halfwidth
            tail = np.abs(v[outer])
            if tail.size and tail.max() >= 1e-8:
                raise ValueError(f"u0 reaches {tail.max():.3g} outside the inner 80% of the box")

    @property
    def grid(self) -> GridSpec:
        return self.u0.spec

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)


@dataclass
class PDETrajectory:
    spec: GridSpec
    times: np.ndarray
    values: np.ndarray  # (n_times, *grid.shape)
    info: dict = field(default_factory=dict)

    def field(self, k: int) -> GridField:
        return GridField(self.spec, self.values[k])

    def index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"time {t} is not on the trajectory lattice")
        return k

    def at(self, t: float) -> GridField:
        return self.field(self.index(t))

    def masses(self) -> np.ndarray:
        return self.values.reshape(len(self.times), -1).sum(axis=1) * self.spec.cell_volume

    def minima(self) -> np.ndarray:
        return self.values.reshape(len(self.times), -1).min(axis=1)

    def distance(self, other: "PDETrajectory", t: float) -> float:
        return l2_norm(self.at(t) - other.at(t))


# ---------------------------------------------------------------------------
# Flux with 3/2 dealiasing


class _Flux:
    """Spectral ``div(F(x,u) u)`` with products formed on a padded grid."""

    def __init__(self, F, spec: GridSpec):
        self.F = F
        self.spec = spec
        self.d = spec.dim
        self.n = spec.points
        self.m = 3 * self.n // 2
        L = spec.box_halfwidth
        ax = -L + (2.0 * L / self.m) * np.arange(self.m)
        mesh = np.meshgrid(*([ax] * self.d), indexing="ij")
        self.xpad = np.stack(mesh, axis=-1)
        k = np.fft.fftfreq(self.n, 1.0 / self.n)
        # zero the Nyquist column so derivatives stay real
        xi = np.where(np.abs(k) == self.n // 2, 0.0, np.pi * k / L)
        self.xi = [xi.reshape([-1 if a == b else 1 for b in range(self.d)]) for a in range(self.d)]
        self.idx = np.concatenate([np.arange(self.n // 2), np.arange(self.m - self.n // 2, self.m)])
        self.scale = (self.m / self.n) ** self.d

    def _pad(self, uh):
        out = uh
        for a in range(self.d):
            shape = list(out.shape)
            shape[a] = self.m
            p = np.zeros(shape, dtype=complex)
            sl_in = [slice(None)] * self.d
            sl_out = [slice(None)] * self.d
            half = self.n // 2
            sl_in[a], sl_out[a] = slice(0, half), slice(0, half)
            p[tuple(sl_out)] = out[tuple(sl_in)]
            sl_in[a], sl_out[a] = slice(half + 1, self.n), slice(self.m - half + 1, self.m)
            p[tuple(sl_out)] = out[tuple(sl_in)]
            out = p
        return out

    def _truncate(self, ph):
        return ph[np.ix_(*([self.idx] * self.d))]

    def div_hat(self, uh):
        """Spectrum of ``div(F(x,u) u)`` from the spectrum of ``u``."""
        u = np.fft.ifftn(self._pad(uh)).real * self.scale
        flux = self.F(self.xpad, u) * u[..., None]
        out = np.zeros(uh.shape, dtype=complex)
        for a in range(self.d):
            fh = self._truncate(np.fft.fftn(flux[..., a])) / self.scale
            out += 1j * self.xi[a] * fh
        return out


def _check_cfl(p: PDEProblem):
    if p.F.sup_bound * p.dt > p.grid.dx:
        raise ValueError(
            f"CFL violated: sup_bound*dt = {p.F.sup_bound * p.dt:.4g} exceeds dx = {p.grid.dx:.4g}"
        )


def _monitor(u, k, t, spec):
    mn = float(u.min())
    if mn < -1e-3 or not np.isfinite(mn):
        loc = np.unravel_index(int(np.argmin(u)), u.shape)
        raise NumericalFailure(
            f"negative mass blow-up at step {k} (t={t:.6g}): min {mn:.4g} at grid index {tuple(int(i) for i in loc)}"
        )
    return mn


def solve_splitting(p: PDEProblem, *, order: int = 4) -> PDETrajectory:
    """Integrating-factor time stepping on the ``dt`` lattice."""
    if order not in (1, 4):
        raise ValueError("order must be 1 or 4")
    _check_cfl(p)
    spec = p.grid
    flux = _Flux(p.F, spec)
    sym = generator_symbol(p.driver, spec, p.half_factor)
    E = np.exp(-p.dt * sym)
    Eh = np.exp(-0.5 * p.dt * sym)
    dt = p.dt

    def N(vh):
        return -flux.div_hat(vh)

    uh = np.fft.fftn(p.u0.values)
    out = np.empty((p.n_steps + 1,) + spec.shape)
    out[0] = p.u0.values
    mins = [float(p.u0.values.min())]
    for k in range(1, p.n_steps + 1):
        if order == 1:
            uh = E * (uh + dt * N(uh))
        else:
            k1 = N(uh)
            k2 = N(Eh * (uh + 0.5 * dt * k1))
            k3 = N(Eh * uh + 0.5 * dt * k2)
            k4 = N(E * uh + dt * Eh * k3)
            uh = E * uh + (dt / 6.0) * (E * k1 + 2.0 * Eh * (k2 + k3) + k4)
        out[k] = np.fft.ifftn(uh).real
        mins.append(_monitor(out[k], k, k * dt, spec))
    return PDETrajectory(spec, p.times, out, {"method": "splitting", "order": order, "min": min(mins)})


def _picard_interval(u_start_h, n, dt, E, flux, max_iters, tol, bail_factor):
    """Picard iterates on one interval of ``n`` steps. Returns (values, iterations, ratios)."""
    shape = u_start_h.shape
    # free evolution e^{t_j L} u(start)
    free = np.empty((n + 1,) + shape, dtype=complex)
    free[0] = u_start_h
    for j in range(1, n + 1):
        free[j] = E * free[j - 1]
    cur = free.copy()
    dists, ratios = [], []
    streak = 0
    cell = flux.spec.cell_volume / flux.spec.points
    for it in range(1, max_iters + 1):
        J = np.empty(shape, dtype=complex)
        new = np.empty_like(cur)
        new[0] = cur[0]
        for j in range(n + 1):
            G = flux.div_hat(cur[j])
            J = 0.5 * G if j == 0 else E * J + G
            if j:
                new[j] = free[j] - dt * (J - 0.5 * G)
        diff = new - cur
        # sup over the lattice of the L2 distance, through Parseval
        d = float(np.sqrt(np.max(np.sum(np.abs(diff.reshape(n + 1, -1)) ** 2, axis=1)) * cell))
        cur = new
        if dists and dists[-1] > 0:
            r = d / dists[-1]
            ratios.append(r)
            streak = streak + 1 if r >= 1.0 else 0
            if streak >= 3:
                raise NonContraction(
                    f"Picard distances grew for 3 consecutive iterations (ratios {ratios[-3:]}); "
                    "use a smaller sub-interval"
                )
            if bail_factor is not None and len(ratios) == 2 and max(ratios) >= bail_factor and d > tol:
                return None, it, ratios
        dists.append(d)
        if d < tol:
            return cur, it, ratios
    raise NonContraction(f"no convergence in {max_iters} iterations (last distance {dists[-1]:.3g})")


def solve_picard(
    p: PDEProblem,
    max_iters: int = 60,
    tol: float = 1e-11,
    *,
    subinterval: float | None = None,
    auto: bool = True,
) -> PDETrajectory:
    """Fixed-point iteration on the mild form, restarted on sub-intervals.

    ``subinterval`` defaults to ``T``. With ``auto`` a sub-interval whose
    measured contraction factor reaches 0.5 is halved and redone.
    """
    spec = p.grid
    flux = _Flux(p.F, spec)
    sym = generator_symbol(p.driver, spec, p.half_factor)
    E = np.exp(-p.dt * sym)
    total = p.n_steps
    width = total if subinterval is None else max(1, int(round(subinterval / p.dt)))
    out = np.empty((total + 1,) + spec.shape)
    out[0] = p.u0.values
    uh = np.fft.fftn(p.u0.values)
    start = 0
    log = []
    while start < total:
        n = min(width, total - start)
        vals, iters, ratios = _picard_interval(
            uh, n, p.dt, E, flux, max_iters, tol, 0.5 if (auto and n > 1) else None
        )
        if vals is None:
            width = max(1, n // 2)
            log.append({"start": start * p.dt, "steps": n, "restart": True, "ratios": ratios})
            continue
        log.append({"start": start * p.dt, "steps": n, "iterations": iters, "ratios": ratios})
        for j in range(1, n + 1):
            out[start + j] = np.fft.ifftn(vals[j]).real
            _monitor(out[start + j], start + j, (start + j) * p.dt, spec)
        uh = vals[n]
        start += n
    return PDETrajectory(spec, p.times, out, {"method": "picard", "intervals": log})


def weak_form_residual(u_traj: PDETrajectory, phi, p: PDEProblem, t: float | None = None) -> float:
    """``|<u(t),phi> - <u0,phi> - int <u, F(u) grad phi> - c int <u, L phi>|``.

    ``c`` is 1/2 when ``p.half_factor`` is set, 1 otherwise. Time integrals
    use the trapezoid rule on the trajectory lattice.
    """
    phi_f = phi if isinstance(phi, GridField) else GridField.from_function(u_traj.spec, phi)
    spec = u_traj.spec
    k_end = len(u_traj.times) - 1 if t is None else u_traj.index(t)
    grads = np.stack([g.values for g in gradient(phi_f)], axis=-1)
    Lphi = phi_f.apply_multiplier(-generator_symbol(p.driver, spec, p.half_factor)).values
    x = spec.coords()
    dv = spec.cell_volume
    drift_int = np.empty(k_end + 1)
    gen_int = np.empty(k_end + 1)
    for k in range(k_end + 1):
        u = u_traj.values[k]
        Fu = p.F(x, u)
        drift_int[k] = np.sum(u * np.sum(Fu * grads, axis=-1)) * dv
        gen_int[k] = np.sum(u * Lphi) * dv
    ts = u_traj.times[: k_end + 1]
    lhs = (np.sum(u_traj.values[k_end] * phi_f.values) - np.sum(u_traj.values[0] * phi_f.values)) * dv
    rhs = integrate.trapezoid(drift_int, ts) + integrate.trapezoid(gen_int, ts)
    return float(abs(lhs - rhs))
