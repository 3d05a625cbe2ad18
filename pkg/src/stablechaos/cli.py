"""Command line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 acceptance assertion failed (``--assert``).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import stable_levy as sl
from .config import ConfigError, load_config, parse_config
from .mollifier import ModelParams, ScaledKernel, validate_params
from .particles import ParticleEnsemble, run
from .pde import NumericalFailure, PDEProblem, solve_picard, solve_splitting
from .spectral import l2_norm, smooth_cutoff, sobolev_norm, write_gf1

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ASSERT = 0, 2, 3, 4


def _cfg(args):
    return load_config(args.config) if args.config else parse_config({})


def _dump(obj, path=None):
    text = json.dumps(obj, indent=1, sort_keys=True)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def cmd_validate(args):
    if args.config:
        import yaml

        try:
            data = yaml.safe_load(Path(args.config).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(str(exc)) from None
        m = {"alpha": 1.5, "beta": 0.3, "epsilon": 0.8, "delta": 0.3, "dim": 1, "T": 0.5}
        m.update((data.get("model") or {}))
    else:
        m = {"alpha": args.alpha, "beta": args.beta, "epsilon": args.epsilon, "delta": args.delta, "dim": args.dim, "T": 1.0}
    try:
        p = ModelParams(float(m["alpha"]), float(m["beta"]), float(m["epsilon"]), float(m["delta"]), int(m["dim"]), float(m["T"]))
        rep = validate_params(p)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    _dump(rep.as_dict())
    return EXIT_OK if rep.ok else EXIT_CONFIG


def cmd_sample(args):
    cfg = _cfg(args)
    rng = np.random.default_rng(args.seed)
    if args.decomposed:
        js = sl.sample_path_decomposed(cfg.driver, args.dt * args.count, args.dt, seed=args.seed)
        data = js.increments
    else:
        data = sl.sample_increments(cfg.driver, args.dt, args.count, rng)
    t = args.dt * np.arange(1, data.shape[0] + 1)
    table = np.column_stack([t, data])
    header = ",".join(["t"] + [f"x{i + 1}" for i in range(data.shape[1])])
    if args.out and str(args.out).endswith(".npy"):
        np.save(args.out, data)
    else:
        np.savetxt(args.out or sys.stdout, table, delimiter=",", fmt="%.17g", header=header, comments="")
    return EXIT_OK


def cmd_simulate(args):
    cfg = _cfg(args)
    N = args.N or cfg.N_list[-1]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    V_N = ScaledKernel(cfg.kernel, N, cfg.model.beta)
    ens = ParticleEnsemble.from_density(cfg.u0, N, cfg.driver, cfg.model, cfg.grid.box_halfwidth, master_seed=args.seed, noise=cfg.noise)
    traj = run(ens, V_N, cfg.drift, cfg.dt, cfg.model.T, cfg.checkpoint_times, grid=cfg.grid)
    window = smooth_cutoff(cfg.grid, cfg.window_radius)
    manifest = []
    for k, (t, g) in enumerate(zip(traj.times, traj.fields)):
        name = f"g_k{k}.gf1"
        write_gf1(out / name, g)
        np.save(out / f"positions_k{k}.npy", traj.positions[k])
        manifest.append(
            {"time": float(t), "N": N, "seed": args.seed, "mass": g.integral(), "h_eps_norm": sobolev_norm(window * g, cfg.model.epsilon), "file": name}
        )
    _dump({"checkpoints": manifest, "config": cfg.to_dict()}, out / "manifest.json")
    return EXIT_OK


def cmd_solve(args):
    cfg = _cfg(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    u0 = cfg.u0.on_grid(cfg.pde_grid)
    p = PDEProblem(cfg.driver, cfg.drift, u0, cfg.model.T, cfg.pde_dt, half_factor=cfg.half_factor)
    method = args.method or cfg.method
    traj = solve_splitting(p) if method == "splitting" else solve_picard(p)
    manifest = []
    for k, t in enumerate(cfg.checkpoint_times):
        u = traj.at(t)
        name = f"u_k{k}.gf1"
        write_gf1(out / name, u)
        manifest.append(
            {"t": float(t), "mass": u.integral(), "min": float(u.values.min()), "l2": l2_norm(u), "h_eps": sobolev_norm(u, cfg.model.epsilon), "file": name}
        )
    _dump({"method": method, "checkpoints": manifest, "config": cfg.to_dict()}, out / "manifest.json")
    return EXIT_OK


def _progress(cell):
    state = "failed: " + cell.failure if cell.failure else "done"
    print(f"cell N={cell.N} seed={cell.seed} {state}", file=sys.stderr)


def cmd_converge(args):
    from .harness import run_convergence

    cfg = _cfg(args)
    rep = run_convergence(cfg, out=args.out, workers=args.workers, progress=_progress if args.verbose else None)
    summary = {k: v.get("pass") for k, v in rep.verdicts.items()}
    _dump({"checksum": rep.checksum, "verdicts": summary, "failures": rep.failures, "convention": rep.convention})
    if rep.failures and not args.allow_failures:
        return EXIT_NUMERIC
    if args.assert_ and not rep.ok:
        return EXIT_ASSERT
    return EXIT_OK


def cmd_two_copy(args):
    from .harness import _reference_fields, two_copy_diagnostic

    cfg = _cfg(args)
    Ns = args.N or cfg.N_list
    seeds = cfg.seeds
    pairs = [(seeds[i], seeds[i + 1]) for i in range(0, len(seeds) - 1, 2)]
    if not pairs:
        raise ConfigError("two-copy needs at least two seeds")
    refs = _reference_fields(cfg)
    res = {str(N): two_copy_diagnostic(cfg, N, pairs, refs=refs, out=args.out, workers=args.workers) for N in Ns}
    means = {N: np.nanmean(np.asarray(r["L2"]), axis=0).tolist() for N, r in res.items()}
    ok = len(Ns) < 2 or all(
        means[str(Ns[-1])][k] < 0.5 * means[str(Ns[0])][k] for k, t in enumerate(cfg.checkpoint_times) if t > 0
    )
    body = {"checkpoint_times": cfg.checkpoint_times, "distances": res, "mean_L2": means, "pass": ok}
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        _dump(body, Path(args.out) / "twocopy.json")
    _dump({"mean_L2": means, "pass": ok})
    return EXIT_ASSERT if (args.assert_ and not ok) else EXIT_OK


def cmd_recheck(args):
    from .harness import recheck

    try:
        res = recheck(args.report, n_rows=args.rows, seed=args.seed)
    except (OSError, ValueError) as exc:
        print(f"recheck failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    _dump({"rows": res, "ok": all(r["ok"] for r in res)})
    return EXIT_OK if all(r["ok"] for r in res) else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stablechaos", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-params", help="check (alpha, beta, epsilon, delta, d)")
    p.add_argument("--config")
    p.add_argument("--alpha", type=float, default=1.5)
    p.add_argument("--beta", type=float, default=0.3)
    p.add_argument("--epsilon", type=float, default=0.8)
    p.add_argument("--delta", type=float, default=0.3)
    p.add_argument("--dim", type=int, default=1)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("sample", help="draw stable increments")
    p.add_argument("--config")
    p.add_argument("--dt", type=float, default=1.0)
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--decomposed", action="store_true", help="use the big/small jump sampler")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("simulate", help="run one particle system")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--N", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("solve", help="solve the limit PDE")
    p.add_argument("--config")
    p.add_argument("--method", choices=["splitting", "picard"])
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("converge", help="run the convergence experiment")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--assert", dest="assert_", action="store_true")
    p.add_argument("--allow-failures", action="store_true")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(fn=cmd_converge)

    p = sub.add_parser("two-copy", help="distance between independent copies")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--N", type=int, nargs="+")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--assert", dest="assert_", action="store_true")
    p.set_defaults(fn=cmd_two_copy)

    p = sub.add_parser("report", help="report tools")
    rs = p.add_subparsers(dest="report_command", required=True)
    q = rs.add_parser("recheck", help="re-derive random rows from GF1 dumps")
    q.add_argument("report", help="directory holding report.json")
    q.add_argument("--rows", type=int, default=5)
    q.add_argument("--seed", type=int, default=0)
    q.set_defaults(fn=cmd_recheck)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # violated preconditions (CFL, grid resolution, ...) are configuration problems
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
