"""Convergence experiments: particles against the PDE reference.

A *cell* is one particle run at a given ``(N, seed)``. Cells are independent,
can be persisted to disk and are skipped on rerun when their stored config
digest matches. Report assembly is a deterministic reduction over cells
sorted by ``(N, seed)``.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .config import ExperimentConfig, parse_config
from .mollifier import ScaledKernel
from .particles import ParticleEnsemble, run
from .pde import PDEProblem, solve_picard, solve_splitting
from .spectral import GridField, GridSpec, bessel_apply, l2_norm, read_gf1, smooth_cutoff, sobolev_norm, write_gf1

__all__ = [
    "SCHEMA",
    "ConvergenceReport",
    "reference_solution",
    "resample",
    "run_cell",
    "run_convergence",
    "two_copy_diagnostic",
    "h_eps_trace",
    "time_regularity_quotient",
    "martingale_residual",
    "recheck",
]

SCHEMA = "CR1"
CONVENTIONS = ("full", "half")


# ---------------------------------------------------------------------------
# Reference solution


def _pad_axis(a, axis, n, m):
    half = n // 2

    def at(sl):
        return tuple(sl if ax == axis else slice(None) for ax in range(a.ndim))

    shape = list(a.shape)
    shape[axis] = m
    out = np.zeros(shape, dtype=complex)
    out[at(slice(0, half))] = a[at(slice(0, half))]
    out[at(slice(m - half + 1, m))] = a[at(slice(half + 1, n))]
    # split the Nyquist coefficient between +-n/2 so the result stays real
    nyq = 0.5 * a[at(slice(half, half + 1))]
    out[at(slice(half, half + 1))] = nyq
    out[at(slice(m - half, m - half + 1))] = nyq
    return out


def resample(f: GridField, spec: GridSpec) -> GridField:
    """Trigonometric interpolation of ``f`` onto a finer grid of the same box."""
    if spec.box_halfwidth != f.spec.box_halfwidth or spec.dim != f.spec.dim:
        raise ValueError("grids must share box and dimension")
    n, m = f.spec.points, spec.points
    if m == n:
        return GridField(spec, f.values.copy())
    if m < n:
        raise ValueError("resample only refines")
    big = f.spectrum
    for axis in range(spec.dim):
        big = _pad_axis(big, axis, n, m)
    return GridField(spec, np.fft.ifftn(big).real * (m / n) ** spec.dim)


def reference_solution(cfg: ExperimentConfig, half_factor: bool | None = None, method: str | None = None):
    """Solve the PDE from ``u0`` on the PDE grid."""
    half = cfg.half_factor if half_factor is None else half_factor
    u0 = cfg.u0.on_grid(cfg.pde_grid)
    p = PDEProblem(cfg.driver, cfg.drift, u0, cfg.model.T, cfg.pde_dt, half_factor=half)
    solver = solve_splitting if (method or cfg.method) == "splitting" else solve_picard
    return p, solver(p)


def _reference_fields(cfg):
    out = {}
    for conv in CONVENTIONS:
        _, traj = reference_solution(cfg, half_factor=(conv == "half"))
        out[conv] = [resample(traj.at(t), cfg.grid) for t in cfg.checkpoint_times]
    return out


def _primary(cfg):
    return "half" if cfg.half_factor else "full"


# ---------------------------------------------------------------------------
# Diagnostics on field sequences


def h_eps_trace(fields, epsilon: float, window: GridField | None = None) -> list:
    """``||(I - A)^(eps/2) (w g)||_{L2}`` per checkpoint."""
    return [sobolev_norm(f if window is None else window * f, epsilon) for f in fields]


def _trapezoid_weights(times):
    t = np.asarray(times, dtype=float)
    w = np.zeros_like(t)
    w[1:] += 0.5 * np.diff(t)
    w[:-1] += 0.5 * np.diff(t)
    return w


def time_regularity_quotient(fields, times, gamma: float) -> float:
    """Discrete ``sum_{s != t} ||g_t - g_s||^2_{H^-2} / |t - s|^(1 + 2 gamma) w_s w_t``."""
    if len(fields) < 3:
        raise ValueError("need at least 3 checkpoints")
    if not 0 < gamma < 0.5:
        raise ValueError("gamma must lie in (0, 1/2)")
    w = _trapezoid_weights(times)
    smooth = [bessel_apply(-2.0, f) for f in fields]
    total = 0.0
    for i in range(len(fields)):
        for j in range(i + 1, len(fields)):
            d2 = l2_norm(smooth[i] - smooth[j]) ** 2
            total += 2.0 * w[i] * w[j] * d2 / abs(times[j] - times[i]) ** (1.0 + 2.0 * gamma)
    return total


def _residuals(records, dt, steps, half):
    """Weak-identity residual at the given step indices from per-step integrands."""
    c = 0.5 if half else 1.0
    integrand = records[:, 1] + c * records[:, 2]
    cum = np.concatenate([[0.0], np.cumsum(integrand)]) * dt
    return np.array([records[m, 0] - records[0, 0] - cum[m] for m in steps])


def martingale_residual(values_by_N: dict) -> dict:
    """Seed statistics of the residual and a fit ``var ~ N^-p``.

    ``values_by_N`` maps ``N`` to an array ``(n_seeds, n_times)`` of residuals.
    """
    Ns = sorted(values_by_N)
    out = {"N": Ns, "mean": [], "stderr": [], "var": [], "z_max": []}
    for N in Ns:
        v = np.asarray(values_by_N[N], dtype=float)
        m = v.mean(axis=0)
        se = v.std(axis=0, ddof=1) / math.sqrt(v.shape[0]) if v.shape[0] > 1 else np.full(v.shape[1], np.nan)
        out["mean"].append(m.tolist())
        out["stderr"].append(se.tolist())
        out["var"].append(float(np.var(v[:, -1], ddof=1)) if v.shape[0] > 1 else float("nan"))
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.abs(m) / se
        z = z[np.isfinite(z)]
        out["z_max"].append(float(z.max()) if z.size else 0.0)
    var = np.asarray(out["var"])
    if len(Ns) >= 2 and np.all(var > 0) and np.all(np.isfinite(var)):
        slope = np.polyfit(np.log(Ns), np.log(var), 1)[0]
        out["p"] = float(-slope)
    else:
        out["p"] = None
    return out


# ---------------------------------------------------------------------------
# Cells


@dataclass
class CellResult:
    N: int
    seed: int
    rows: list  # [{"t": t, "metrics": {...}}]
    fields: list | None = None
    residuals: dict = field(default_factory=dict)  # name -> {"full": [...], "half": [...]}
    failure: str | None = None

    def to_json(self, digest):
        return {
            "digest": digest,
            "N": self.N,
            "seed": self.seed,
            "rows": self.rows,
            "residuals": self.residuals,
            "failure": self.failure,
        }


def _metrics(cfg, g, refs, k, window):
    m = {"mass": g.integral(), "h_eps_norm": sobolev_norm(window * g, cfg.model.epsilon)}
    prim = _primary(cfg)
    for conv in CONVENTIONS:
        sfx = "" if conv == prim else "_alt"
        diff = window * (g - refs[conv][k])
        m["err_L2_local" + sfx] = l2_norm(diff)
        m["err_H_eta_local" + sfx] = sobolev_norm(diff, cfg.eta)
    return m


def run_cell(cfg: ExperimentConfig, N: int, seed: int, refs: dict, *, keep_fields=True) -> CellResult:
    """Simulate one ``(N, seed)`` pair and measure it against the references."""
    tfs = cfg.test_functions()
    V_N = ScaledKernel(cfg.kernel, int(N), cfg.model.beta)
    ens = ParticleEnsemble.from_density(
        cfg.u0, N, cfg.driver, cfg.model, cfg.grid.box_halfwidth, master_seed=seed, noise=cfg.noise
    )
    traj = run(ens, V_N, cfg.drift, cfg.dt, cfg.model.T, cfg.checkpoint_times, grid=cfg.grid, test_functions=tfs)
    window = smooth_cutoff(cfg.grid, cfg.window_radius)
    prim = _primary(cfg)
    steps = [int(round(t / cfg.dt)) for t in cfg.checkpoint_times]
    residuals = {
        tf.name: {conv: _residuals(traj.step_records[tf.name], cfg.dt, steps, conv == "half").tolist() for conv in CONVENTIONS}
        for tf in tfs
    }
    rows = []
    for k, t in enumerate(cfg.checkpoint_times):
        g = traj.fields[k]
        m = _metrics(cfg, g, refs, k, window)
        for tf in tfs:
            u_pair = refs[prim][k].pair(tf.field)
            m[f"weak_err[{tf.name}]"] = traj.pairings[tf.name][k] - u_pair
            m[f"pairing[{tf.name}]"] = traj.pairings[tf.name][k]
            m[f"mart_resid[{tf.name}]"] = residuals[tf.name][prim][k]
            m[f"mart_resid_alt[{tf.name}]"] = residuals[tf.name]["half" if prim == "full" else "full"][k]
        rows.append({"t": float(t), "metrics": m})
    if len(cfg.checkpoint_times) >= 3:
        rows[-1]["metrics"]["time_regularity_quotient"] = time_regularity_quotient(
            traj.fields, cfg.checkpoint_times, cfg.gamma
        )
    return CellResult(int(N), int(seed), rows, traj.fields if keep_fields else None, residuals)


def _field_path(out: Path, N, seed, k):
    return out / "fields" / f"N{N}_seed{seed}_k{k}.gf1"


def _load_cell(cfg, out: Path, N, seed):
    path = out / "cells" / f"N{N}_seed{seed}.json"
    if not path.exists():
        return None
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError):
        return None
    if data.get("digest") != cfg.digest() or data.get("failure"):
        return None
    fields = []
    for k in range(len(cfg.checkpoint_times)):
        fp = _field_path(out, N, seed, k)
        if not fp.exists():
            return None
        fields.append(read_gf1(fp))
    return CellResult(N, seed, data["rows"], fields, data["residuals"])


def _store_cell(cfg, out: Path, cell: CellResult):
    (out / "cells").mkdir(parents=True, exist_ok=True)
    (out / "fields").mkdir(parents=True, exist_ok=True)
    if cell.fields is not None:
        for k, f in enumerate(cell.fields):
            write_gf1(_field_path(out, cell.N, cell.seed, k), f)
    path = out / "cells" / f"N{cell.N}_seed{cell.seed}.json"
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(cell.to_json(cfg.digest()), sort_keys=True))
    os.replace(tmp, path)


def _cell_job(args):
    raw, N, seed, refs = args
    cfg = parse_config(raw)
    try:
        return run_cell(cfg, N, seed, refs)
    except Exception as exc:  # recorded per row
        return CellResult(N, seed, [], None, {}, failure=f"{type(exc).__name__}: {exc}")


def _run_cells(cfg, pairs, refs, out: Path | None, workers: int, progress=None):
    results = {}
    todo = []
    for N, seed in pairs:
        cached = _load_cell(cfg, out, N, seed) if out is not None else None
        if cached is not None:
            results[(N, seed)] = cached
        else:
            todo.append((N, seed))
    jobs = [(cfg.raw, N, seed, refs) for N, seed in todo]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = pool.map(_cell_job, jobs)
            for cell in done:
                results[(cell.N, cell.seed)] = cell
                if out is not None and cell.failure is None:
                    _store_cell(cfg, out, cell)
                if progress:
                    progress(cell)
    else:
        for job in jobs:
            cell = _cell_job(job)
            results[(cell.N, cell.seed)] = cell
            if out is not None and cell.failure is None:
                _store_cell(cfg, out, cell)
            if progress:
                progress(cell)
    return results


# ---------------------------------------------------------------------------
# Two-copy distance


def _pair_distance(cfg, a: list, b: list, window):
    return [
        {"L2": l2_norm(window * (fa - fb)), "H_eta": sobolev_norm(window * (fa - fb), cfg.eta)}
        for fa, fb in zip(a, b)
    ]


def two_copy_diagnostic(cfg: ExperimentConfig, N: int, seed_pairs, *, refs=None, out=None, workers=1, cells=None):
    """Distances between mollified fields of independent copies, per checkpoint.

    Returns ``{"N", "pairs", "L2": (n_pairs, n_t), "H_eta": (n_pairs, n_t)}``.
    """
    seeds = sorted({s for p in seed_pairs for s in p})
    if cells is None:
        refs = refs if refs is not None else _reference_fields(cfg)
        cells = _run_cells(cfg, [(N, s) for s in seeds], refs, Path(out) if out else None, workers)
    window = smooth_cutoff(cfg.grid, cfg.window_radius)
    L2, H = [], []
    for s1, s2 in seed_pairs:
        c1, c2 = cells[(N, s1)], cells[(N, s2)]
        if c1.failure or c2.failure:
            L2.append([float("nan")] * len(cfg.checkpoint_times))
            H.append([float("nan")] * len(cfg.checkpoint_times))
            continue
        d = _pair_distance(cfg, c1.fields, c2.fields, window)
        L2.append([x["L2"] for x in d])
        H.append([x["H_eta"] for x in d])
    return {"N": int(N), "pairs": [list(map(int, p)) for p in seed_pairs], "L2": L2, "H_eta": H}


# ---------------------------------------------------------------------------
# Report


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _checksum(payload: dict) -> str:
    body = {k: v for k, v in payload.items() if k not in ("created", "checksum")}
    return hashlib.sha256(json.dumps(body, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


@dataclass
class ConvergenceReport:
    config: dict
    rows: list
    aggregates: dict
    verdicts: dict
    twocopy: dict
    martingale: dict
    convention: dict
    failures: list
    created: str = ""

    def payload(self) -> dict:
        body = _clean(
            {
                "schema": SCHEMA,
                "config": self.config,
                "rows": self.rows,
                "aggregates": self.aggregates,
                "verdicts": self.verdicts,
                "twocopy": self.twocopy,
                "martingale": self.martingale,
                "convention": self.convention,
                "failures": self.failures,
            }
        )
        body["created"] = self.created
        body["checksum"] = _checksum(body)
        return body

    @property
    def checksum(self) -> str:
        return self.payload()["checksum"]

    @property
    def ok(self) -> bool:
        return all(v.get("pass", True) for v in self.verdicts.values()) and not self.failures

    def to_json(self) -> str:
        return json.dumps(self.payload(), sort_keys=True, indent=1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["N", "seed", "t", "metric", "value"])
        for r in self.rows:
            for name in sorted(r["metrics"]):
                v = r["metrics"][name]
                w.writerow([r["N"], r["seed"], repr(float(r["t"])), name, "" if v is None else repr(float(v))])
        return buf.getvalue()

    def write(self, out) -> None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json())
        (out / "report.csv").write_text(self.to_csv())

    def metric(self, name, N, t) -> np.ndarray:
        """Per-seed values of ``name`` at ``(N, t)``, in seed order."""
        return np.array(
            [r["metrics"][name] for r in self.rows if r["N"] == N and abs(r["t"] - t) < 1e-12 and name in r["metrics"]],
            dtype=float,
        )

    def mean(self, name, N, t) -> float:
        return self.aggregates[name][str(N)][_tkey(t)]["mean"]


def _tkey(t):
    return repr(float(t))


def _aggregate(rows, Ns, times):
    names = sorted({n for r in rows for n in r["metrics"]})
    agg = {}
    for name in names:
        agg[name] = {}
        for N in Ns:
            agg[name][str(N)] = {}
            for t in times:
                v = np.array(
                    [r["metrics"][name] for r in rows if r["N"] == N and r["t"] == t and r["metrics"].get(name) is not None],
                    dtype=float,
                )
                if v.size:
                    agg[name][str(N)][_tkey(t)] = {
                        "mean": float(v.mean()),
                        "stderr": float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else None,
                        "count": int(v.size),
                    }
    return agg


def _paired_pvalue(a, b):
    """One-sided paired t-test of ``mean(a - b) > 0``."""
    if a.size < 2 or a.size != b.size:
        return None
    return float(stats.ttest_rel(a, b, alternative="greater").pvalue)


def _verdicts(cfg, rows, agg, twocopy, mart):
    Ns = cfg.N_list
    times = [t for t in cfg.checkpoint_times if t > 0]
    v = {}
    if len(Ns) < 2:
        return v

    def seeds_vals(name, N, t):
        return {r["seed"]: r["metrics"][name] for r in rows if r["N"] == N and r["t"] == t and r["metrics"].get(name) is not None}

    for name in ("err_L2_local", "err_H_eta_local"):
        per_t = {}
        for t in times:
            means = [agg[name][str(N)][_tkey(t)]["mean"] for N in Ns]
            a, b = seeds_vals(name, Ns[0], t), seeds_vals(name, Ns[-1], t)
            common = sorted(set(a) & set(b))
            p = _paired_pvalue(np.array([a[s] for s in common]), np.array([b[s] for s in common]))
            mono = all(y < x for x, y in zip(means, means[1:]))
            per_t[_tkey(t)] = {"means": means, "monotone": mono, "p_value": p, "pass": bool(mono and p is not None and p < 0.05)}
        v[f"decrease[{name}]"] = {"per_t": per_t, "pass": all(x["pass"] for x in per_t.values())}

    per_t = {}
    for t in times:
        means = [agg["h_eps_norm"][str(N)][_tkey(t)]["mean"] for N in Ns]
        per_t[_tkey(t)] = {"means": means, "ratio": max(means) / means[0], "pass": max(means) <= 3.0 * means[0]}
    v["bounded[h_eps_norm]"] = {"per_t": per_t, "pass": all(x["pass"] for x in per_t.values())}

    if "time_regularity_quotient" in agg:
        tT = _tkey(cfg.checkpoint_times[-1])
        means = [agg["time_regularity_quotient"][str(N)][tT]["mean"] for N in Ns]
        v["bounded[time_regularity_quotient]"] = {
            "means": means,
            "ratio": max(means) / means[0] if means[0] > 0 else None,
            "pass": max(means) <= 3.0 * means[0],
        }

    if twocopy:
        per_t = {}
        first, last = twocopy[str(Ns[0])], twocopy[str(Ns[-1])]
        for k, t in enumerate(cfg.checkpoint_times):
            if t <= 0:
                continue
            m0 = float(np.nanmean(np.asarray(first["L2"])[:, k]))
            m1 = float(np.nanmean(np.asarray(last["L2"])[:, k]))
            means = [float(np.nanmean(np.asarray(twocopy[str(N)]["L2"])[:, k])) for N in Ns]
            per_t[_tkey(t)] = {"means": means, "ratio": m1 / m0, "pass": m1 < 0.5 * m0}
        v["twocopy[L2]"] = {"per_t": per_t, "pass": all(x["pass"] for x in per_t.values())}

    for name, stat in mart.items():
        conv = stat["full" if not cfg.half_factor else "half"]
        p = conv["p"]
        v[f"martingale[{name}]"] = {
            "p": p,
            "z_max": max(conv["z_max"]),
            "pass": bool(p is not None and 0.7 <= p <= 1.3 and max(conv["z_max"]) <= 3.0),
        }
    return v


def _convention_summary(mart):
    """Which generator factor the particle residual favours (smaller mean |z|)."""
    if not mart:
        return {}
    score = {}
    for conv in CONVENTIONS:
        zs = []
        for stat in mart.values():
            zs.append(stat[conv]["z_max"][-1])
        score[conv] = float(np.mean(zs))
    return {"mean_abs_z_at_largest_N": score, "favoured": min(score, key=score.get)}


def run_convergence(
    cfg: ExperimentConfig,
    *,
    out=None,
    workers: int = 1,
    twocopy: bool = True,
    progress=None,
) -> ConvergenceReport:
    """Full experiment: references, all ``(N, seed)`` cells, aggregates and verdicts."""
    out = Path(out) if out is not None else None
    refs = _reference_fields(cfg)
    if out is not None:
        (out / "reference").mkdir(parents=True, exist_ok=True)
        for conv in CONVENTIONS:
            for k, f in enumerate(refs[conv]):
                write_gf1(out / "reference" / f"u_{conv}_k{k}.gf1", f)
    pairs = [(N, s) for N in cfg.N_list for s in cfg.seeds]
    cells = _run_cells(cfg, pairs, refs, out, workers, progress)

    rows, failures = [], []
    for N, s in sorted(pairs):
        c = cells[(N, s)]
        if c.failure:
            failures.append({"N": N, "seed": s, "error": c.failure})
            for t in cfg.checkpoint_times:
                rows.append({"N": N, "seed": s, "t": float(t), "metrics": {}, "failed": c.failure})
            continue
        for r in c.rows:
            rows.append({"N": N, "seed": s, "t": r["t"], "metrics": dict(r["metrics"])})

    tc = {}
    if twocopy and len(cfg.seeds) >= 2:
        seed_pairs = [(cfg.seeds[i], cfg.seeds[i + 1]) for i in range(0, len(cfg.seeds) - 1, 2)]
        for N in cfg.N_list:
            tc[str(N)] = two_copy_diagnostic(cfg, N, seed_pairs, cells=cells)
            for (s1, _), d in zip(seed_pairs, tc[str(N)]["L2"]):
                for r in rows:
                    if r["N"] == N and r["seed"] == s1:
                        k = cfg.checkpoint_times.index(r["t"])
                        r["metrics"]["twocopy_distance"] = d[k]

    mart = {}
    names = [tf["name"] for tf in cfg.test_function_specs]
    if len(cfg.seeds) >= 2:
        for name in names:
            mart[name] = {}
            for conv in CONVENTIONS:
                by_N = {
                    N: np.array([cells[(N, s)].residuals[name][conv] for s in cfg.seeds if not cells[(N, s)].failure])
                    for N in cfg.N_list
                }
                mart[name][conv] = martingale_residual(by_N)

    agg = _aggregate(rows, cfg.N_list, cfg.checkpoint_times)
    verdicts = _verdicts(cfg, rows, agg, tc, mart)
    rep = ConvergenceReport(
        config=cfg.to_dict(),
        rows=rows,
        aggregates=agg,
        verdicts=verdicts,
        twocopy=tc,
        martingale=mart,
        convention={"primary": _primary(cfg), **_convention_summary(mart)},
        failures=failures,
        created=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    )
    if out is not None:
        rep.write(out)
    return rep


# ---------------------------------------------------------------------------
# Recheck


def recheck(report_dir, n_rows: int = 5, seed: int = 0, rtol: float = 1e-10) -> list:
    """Re-derive ``n_rows`` random rows of a stored report from its GF1 dumps."""
    report_dir = Path(report_dir)
    data = json.loads((report_dir / "report.json").read_text())
    if data.get("schema") != SCHEMA:
        raise ValueError("not a CR1 report")
    if _checksum(data) != data.get("checksum"):
        raise ValueError("report checksum mismatch")
    cfg = parse_config(data["config"])
    refs = {
        conv: [read_gf1(report_dir / "reference" / f"u_{conv}_k{k}.gf1") for k in range(len(cfg.checkpoint_times))]
        for conv in CONVENTIONS
    }
    window = smooth_cutoff(cfg.grid, cfg.window_radius)
    rows = [r for r in data["rows"] if r["metrics"]]
    rng = np.random.default_rng(seed)
    pick = rng.choice(len(rows), size=min(n_rows, len(rows)), replace=False)
    results = []
    for i in sorted(pick.tolist()):
        r = rows[i]
        k = cfg.checkpoint_times.index(r["t"])
        g = read_gf1(_field_path(report_dir, r["N"], r["seed"], k))
        fresh = _metrics(cfg, g, refs, k, window)
        worst = 0.0
        for name, val in fresh.items():
            old = r["metrics"][name]
            worst = max(worst, abs(val - old) / max(abs(old), 1e-300))
        results.append({"N": r["N"], "seed": r["seed"], "t": r["t"], "max_rel_dev": worst, "ok": worst <= rtol})
    return results
