"""Command-line interface: ``enscond {validate,qtable,simulate,verify}``.

Exit codes: 0 success, 1 I/O or parse error, 2 invalid spectrum,
3 simulation step size too large, 4 verification report contains failures.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import effective, qfun, verify
from .errors import StepRejectedTooOften, ValidationError
from .geometry import ConePoint, locate_sector
from .report import RunManifest, write_report, write_table
from .spectrum import build_spectrum, forcing_constants, load_config

EXIT_IO = 1
EXIT_INVALID = 2
EXIT_STEP = 3
EXIT_FAILED_CHECKS = 4


def _default_threads() -> int:
    env = os.environ.get("ENSCOND_THREADS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH", help="TOML spectrum configuration")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=None, help="worker threads (default: $ENSCOND_THREADS or 1)")
    common.add_argument("--out", default=".", metavar="DIR", help="output directory")

    p = argparse.ArgumentParser(prog="enscond", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("validate", parents=[common], help="check a spectrum configuration")

    q = sub.add_parser("qtable", parents=[common], help="tabulate the conditional mode energies")
    q.add_argument("--grid", type=int, default=100, help="points per axis (ratio u/v times v)")
    q.add_argument("--vmax", type=float, default=1.0)

    sim = sub.add_parser("simulate", parents=[common], help="simulate the cone diffusion")
    sim.add_argument("--dt", type=float, default=1e-3)
    sim.add_argument("--steps", type=int, default=100_000, help="steps per chain")
    sim.add_argument("--burn-in", type=int, default=None, help="discarded steps per chain (default 10%%)")
    sim.add_argument("--chains", type=int, default=16)
    sim.add_argument("--w0", type=float, nargs=2, default=None, metavar=("U", "V"))
    sim.add_argument("--dump-trajectory", action="store_true", help="write (step, t, u, v) of the first chain")
    sim.add_argument("--dump-every", type=int, default=100)
    sim.add_argument("--gzip", action="store_true", help="gzip-compress the trajectory dump")

    ver = sub.add_parser("verify", parents=[common], help="run the verification suite")
    ver.add_argument("--samples", type=int, default=10**6)
    ver.add_argument("--steps", type=int, default=50_000)
    ver.add_argument("--chains", type=int, default=64)
    ver.add_argument("--dt", type=float, default=1e-3)
    ver.add_argument("--burn-in", type=int, default=None)
    ver.add_argument("--grid", type=int, default=40)
    return p


def _load(args):
    cfg = load_config(args.config)
    return build_spectrum(cfg)


def _manifest(args, s, params) -> RunManifest:
    return RunManifest(
        subcommand=args.command,
        config_path=str(args.config),
        seed=args.seed,
        params=params,
        spectrum=s.describe(),
        threads=args.threads,
    )


def qtable_rows(s, grid: int, vmax: float):
    ratios = np.linspace(1.0, s.lam_max, grid)
    vs = np.linspace(vmax / grid, vmax, grid)
    rows = []
    for v in vs:
        for x in ratios:
            u = float(x * v)
            w = ConePoint(u, float(v))
            q = qfun.qhat_eval(s, w)
            ru, rv = qfun.identity_residuals(s, q, w)
            rw = qfun.weighted_residual(s, q, w)
            gap = float(qfun.monotonicity_gaps(s, w, q).min())
            rows.append([u, float(v), locate_sector(s, w).label(), *map(float, q.qhat), ru, rv, rw, gap])
    header = ["u", "v", "sector"] + [f"qhat_{i}" for i in range(1, s.n + 1)] + ["r_u", "r_v", "r_weighted", "min_gap"]
    return header, rows


def cmd_validate(args, s, out: Path) -> int:
    fc = forcing_constants(s)
    m = _manifest(args, s, {})
    path = out / "validate.txt"
    m.outputs = [path.name]
    pairs = list(s.describe().items()) + [("B0", fc.B0), ("B1", fc.B1), ("status", "valid")]
    write_report(path, pairs, m.hash())
    m.write(out)
    print(f"valid spectrum: n = {s.n}, B0 = {fc.B0:g}, B1 = {fc.B1:g}")
    return 0


def cmd_qtable(args, s, out: Path) -> int:
    m = _manifest(args, s, {"grid": args.grid, "vmax": args.vmax})
    header, rows = qtable_rows(s, args.grid, args.vmax)
    path = out / "qtable.txt"
    m.outputs = [path.name]
    write_table(path, header, rows, m.hash())
    m.write(out)
    worst = max(max(abs(r[-4]), abs(r[-3]), abs(r[-2])) / max(r[0], 1.0) for r in rows)
    print(f"wrote {len(rows)} rows to {path} (max scaled residual {worst:.2e})")
    return 0


def cmd_simulate(args, s, out: Path) -> int:
    params = {
        "dt": args.dt,
        "steps": args.steps,
        "burn_in": args.burn_in if args.burn_in is not None else args.steps // 10,
        "chains": args.chains,
        "w0": "default" if args.w0 is None else f"{args.w0[0]!r} {args.w0[1]!r}",
        "dump_every": args.dump_every if args.dump_trajectory else 0,
    }
    m = _manifest(args, s, params)
    h = m.hash()
    try:
        res = effective.simulate(
            s,
            w0=args.w0,
            dt=args.dt,
            steps=args.steps,
            burn_in=args.burn_in,
            seed=args.seed,
            chains=args.chains,
            threads=args.threads,
            dump_every=args.dump_every if args.dump_trajectory else 0,
            return_trajectory=args.dump_trajectory,
        )
    except StepRejectedTooOften as exc:
        m.outputs = []
        m.write(out)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STEP
    stats, traj = res if args.dump_trajectory else (res, None)
    pairs = [("seed", args.seed), ("dt", args.dt), ("steps_per_chain", stats.steps), ("chains", stats.chains),
             ("burn_in", stats.burn_in), ("batches", stats.batches)]
    for k in effective.OBSERVABLES:
        pairs += [(f"mean.{k}", stats.mean[k]), (f"stderr.{k}", stats.stderr[k]),
                  (f"half_drift.{k}", stats.half_drift(k))]
    pairs += [("safeguard.steps", stats.safeguard_steps), ("safeguard.halvings", stats.halvings),
              ("safeguard.projections", stats.projections), ("safeguard.rate", stats.safeguard_rate)]
    cons = verify.conservation_report(s, stats)
    pairs += [("conservation.energy_residual", cons.energy_residual),
              ("conservation.spectral_residual", cons.spectral_residual)]
    path = out / "stats.txt"
    m.outputs = [path.name]
    write_report(path, pairs, h)
    if traj is not None:
        tpath = out / ("trajectory.txt.gz" if args.gzip else "trajectory.txt")
        write_table(tpath, ["step", "t", "u", "v"], traj, h, compress=args.gzip)
        m.outputs.append(tpath.name)
    m.write(out)
    print(f"E[U] = {stats.mean['U']:.6g} ± {stats.stderr['U']:.2g}, E[V] = {stats.mean['V']:.6g} ± {stats.stderr['V']:.2g}")
    return 0


def cmd_verify(args, s, out: Path) -> int:
    budget = verify.Budget(samples=args.samples, steps=args.steps, chains=args.chains, dt=args.dt,
                           burn_in=args.burn_in, grid=args.grid, threads=args.threads)
    params = {k: getattr(budget, k) for k in ("samples", "steps", "chains", "dt", "grid")}
    params["burn_in"] = budget.burn_in if budget.burn_in is not None else budget.steps // 10
    m = _manifest(args, s, params)
    checks = verify.run_suite(s, seed=args.seed, budget=budget)
    pairs = [(f"spectrum.{k}", v) for k, v in s.describe().items()] + [("seed", str(args.seed))]
    pairs += verify.suite_to_pairs(checks)
    path = out / "report.txt"
    m.outputs = [path.name]
    write_report(path, pairs, m.hash())
    m.write(out)
    failed = [c.name for c in checks if c.passed is False]
    print(f"{len(checks)} checks, {len(failed)} failed" + (f": {', '.join(failed)}" if failed else ""))
    return EXIT_FAILED_CHECKS if failed else 0


_COMMANDS = {"validate": cmd_validate, "qtable": cmd_qtable, "simulate": cmd_simulate, "verify": cmd_verify}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.threads is None:
        args.threads = _default_threads()
    try:
        s = _load(args)
    except FileNotFoundError:
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        return EXIT_IO
    except ValidationError as exc:
        print(f"invalid spectrum: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:  # TOML parse errors
        print(f"error: cannot parse {args.config}: {exc}", file=sys.stderr)
        return EXIT_IO
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](args, s, out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
