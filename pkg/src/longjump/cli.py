"""Command-line entry point: ``longjump {check,equilibrium,pde,hydro,sample}``.

Settings come from built-in defaults, then an optional JSON ``--config`` file,
then explicit flags (flags win).  Every output file starts with ``# config:``
and ``# seed:`` lines holding the fully resolved settings.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("longjump")


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, dict] = {
    "check": {"cases": 1000, "L": None, "tiling": None, "reach_probes": 4, "out": None},
    "equilibrium": {
        "L": 64, "rho": [[1 / 3, 1 / 3], [0.2, 0.5]], "burn_in": None, "samples": 200, "gap": 1.0,
        "batches": 20, "out": "equilibrium.csv",
    },
    "pde": {
        "N": 128, "amplitude": 0.025, "modes": [[1, 1]], "rho": [1 / 3, 1 / 3], "t_final": 0.1,
        "times": [0.0, 0.05, 0.1], "c_cfl": 0.2, "dt_policy": "fixed", "convergence": False, "out": "pde_out",
    },
    "hydro": {
        "sizes": [32, 64, 128], "replicas": None, "times": [0.0, 0.05, 0.1], "N": 256, "amplitude": 0.025,
        "modes": [[1, 1]], "rho": [1 / 3, 1 / 3], "margin": 0.02, "c_cfl": 0.2, "dt_policy": "fixed",
        "out": "hydro_out", "timing": True,
    },
    "sample": {"L": 32, "rho": [1 / 3, 1 / 3], "burn_in": None, "out": "tiling.txt"},
}
COMMON = {"seed": 1, "threads": 1}


# -- argument parsing ----------------------------------------------------------


def _floats(s: str) -> list[float]:
    return [float(v) for v in s.split(",") if v]


def _ints(s: str) -> list[int]:
    return [int(v) for v in s.split(",") if v]


def _pair(s: str) -> list[float]:
    v = _floats(s)
    if len(v) != 2:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {s!r}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="longjump", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, help="master seed")
        sp.add_argument("--out", help="output file or directory")
        sp.add_argument("--threads", type=int, help="worker processes for independent chains")
        sp.add_argument("--config", type=Path, help="JSON file of settings; flags override it")
        sp.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                        help="log progress")
        return sp

    c = common(sub.add_parser("check", help="exact identity suite on random tilings"))
    c.add_argument("--cases", type=int)
    c.add_argument("--L", type=int, help="fix the system size (default: random in 12..48)")
    c.add_argument("--tiling", type=Path, help="validate and check a tiling file instead")
    c.add_argument("--reach-probes", type=int)

    e = common(sub.add_parser("equilibrium", help="equilibrium estimates against closed forms"))
    e.add_argument("--L", type=int)
    e.add_argument("--rho", type=_pair, action="append", help="density pair r1,r2 (repeatable)")
    e.add_argument("--burn-in", type=float, help="macroscopic burn-in (default 10 ln L)")
    e.add_argument("--samples", type=int)
    e.add_argument("--gap", type=float)
    e.add_argument("--batches", type=int)

    d = common(sub.add_parser("pde", help="solve the limiting equation for a sine profile"))
    d.add_argument("--N", type=int)
    d.add_argument("--amplitude", type=float)
    d.add_argument("--rho", type=_pair)
    d.add_argument("--t-final", type=float)
    d.add_argument("--times", type=_floats)
    d.add_argument("--c-cfl", type=float)
    d.add_argument("--dt-policy", choices=["fixed", "adaptive"])
    d.add_argument("--convergence", action="store_const", const=True,
                   help="also report rhs agreement and self-convergence under grid refinement")

    h = common(sub.add_parser("hydro", help="particle system against the PDE"))
    h.add_argument("--sizes", type=_ints)
    h.add_argument("--replicas", type=_ints)
    h.add_argument("--times", type=_floats)
    h.add_argument("--N", type=int)
    h.add_argument("--amplitude", type=float)
    h.add_argument("--rho", type=_pair)
    h.add_argument("--margin", type=float)
    h.add_argument("--c-cfl", type=float)
    h.add_argument("--dt-policy", choices=["fixed", "adaptive"])
    h.add_argument("--no-timing", dest="timing", action="store_const", const=False,
                   help="omit the wall_ms column")

    s = common(sub.add_parser("sample", help="dump one equilibrated tiling"))
    s.add_argument("--L", type=int)
    s.add_argument("--rho", type=_pair)
    s.add_argument("--burn-in", type=float)
    return p


def resolve(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    cmd = args.command
    cfg = dict(COMMON) | dict(DEFAULTS[cmd])
    if args.config is not None:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(loaded) - set(cfg))
        if unknown:
            raise ConfigError(f"unknown config keys for {cmd}: {', '.join(unknown)}")
        cfg |= loaded
    for key in cfg:
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    cfg["command"] = cmd
    _validate(cfg)
    return cfg


def _require(cond: bool, field: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{field}: {msg}")


def _check_rho(field: str, r) -> None:
    _require(isinstance(r, (list, tuple)) and len(r) == 2, field, "must be a pair")
    _require(r[0] > 0 and r[1] > 0 and r[0] + r[1] < 1, field, f"{r} is outside the open triangle")


def _validate(cfg: dict) -> None:
    cmd = cfg["command"]
    _require(isinstance(cfg["seed"], int) and cfg["seed"] >= 0, "seed", "must be a nonnegative integer")
    _require(isinstance(cfg["threads"], int) and cfg["threads"] >= 1, "threads", "must be >= 1")
    if cmd == "check":
        _require(cfg["cases"] >= 1, "cases", "must be >= 1")
        _require(cfg["L"] is None or cfg["L"] >= 3, "L", "must be >= 3")
    if cmd in ("equilibrium", "sample"):
        _require(cfg["L"] >= 3, "L", "must be >= 3")
        rhos = cfg["rho"] if cmd == "equilibrium" else [cfg["rho"]]
        for r in rhos:
            _check_rho("rho", r)
        _require(cfg["burn_in"] is None or cfg["burn_in"] >= 0, "burn_in", "must be >= 0")
    if cmd == "equilibrium":
        _require(cfg["samples"] >= 2 * cfg["batches"], "samples", "need at least two snapshots per batch")
        _require(cfg["gap"] > 0, "gap", "must be positive")
    if cmd in ("pde", "hydro"):
        _check_rho("rho", cfg["rho"])
        _require(cfg["N"] >= 8, "N", "must be >= 8")
        _require(cfg["c_cfl"] > 0, "c_cfl", "must be positive")
        _require(all(t >= 0 for t in cfg["times"]), "times", "must be nonnegative")
    if cmd == "pde":
        _require(cfg["t_final"] >= 0, "t_final", "must be nonnegative")
    if cmd == "hydro":
        _require(len(cfg["sizes"]) >= 1 and min(cfg["sizes"]) >= 3, "sizes", "need sizes >= 3")
        _require(cfg["replicas"] is None or len(cfg["replicas"]) == len(cfg["sizes"]), "replicas",
                 "one count per size")


def header(cfg: dict) -> tuple[str, ...]:
    return (f"config: {json.dumps(cfg, sort_keys=True, default=str)}", f"seed: {cfg['seed']}")


# -- commands ------------------------------------------------------------------


def cmd_check(cfg: dict) -> int:
    from .checks import check_tiling, random_geometry, random_tiling
    from .tiling import Tiling, validate

    if cfg["tiling"] is not None:
        try:
            t = Tiling.from_text(Path(cfg["tiling"]).read_text())
        except (OSError, ValueError) as exc:
            print(f"FAIL cannot load tiling: {exc}")
            return EXIT_FAIL
        rep = validate(t)
        if not rep:
            for kind, d, window in rep.violations:
                print(f"FAIL validate: {kind} violation at column {d} (window {window})")
            return EXIT_FAIL
        fails = check_tiling(t, np.random.default_rng(cfg["seed"]), cfg["reach_probes"])
        for f in fails:
            print(f"FAIL {f}")
        print("PASS" if not fails else f"{len(fails)} failures")
        return EXIT_OK if not fails else EXIT_FAIL

    rng = np.random.default_rng(cfg["seed"])
    n_fail = 0
    lines = []
    for c in range(cfg["cases"]):
        geom = random_geometry(rng, cfg["L"])
        t = random_tiling(rng, geom)
        fails = check_tiling(t, rng, cfg["reach_probes"])
        n_fail += bool(fails)
        lines.append(f"{c},{geom.L},{geom.m[0]},{geom.m[1]},{geom.m[2]},{'ok' if not fails else '|'.join(fails)}")
        for f in fails:
            print(f"FAIL case {c} (L={geom.L}, m={geom.m}): {f}")
    if cfg["out"]:
        with open(cfg["out"], "w") as fh:
            for ln in header(cfg):
                fh.write(f"# {ln}\n")
            fh.write("case,L,m1,m2,m3,result\n")
            fh.write("\n".join(lines) + "\n")
    print(f"{cfg['cases'] - n_fail}/{cfg['cases']} cases passed")
    return EXIT_OK if n_fail == 0 else EXIT_FAIL


def _equilibrium_job(args):
    from .equilibrium import comparison_rows, estimate_equilibrium
    from .lattice import TorusGeometry

    L, rho, burn_in, samples, gap, batches, seed = args
    geom = TorusGeometry.from_density(L, rho)
    acc = estimate_equilibrium(geom, burn_in, samples, gap, seed)
    return comparison_rows(acc, geom, batches)


def _pool_map(fn, jobs, threads: int):
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, jobs))


def cmd_equilibrium(cfg: dict) -> int:
    from .equilibrium import write_csv

    jobs = []
    for i, rho in enumerate(cfg["rho"]):
        seed = int(np.random.SeedSequence(cfg["seed"], spawn_key=(i,)).generate_state(1, dtype=np.uint64)[0])
        jobs.append((cfg["L"], tuple(rho), cfg["burn_in"], cfg["samples"], cfg["gap"], cfg["batches"], seed))
    rows = [r for block in _pool_map(_equilibrium_job, jobs, cfg["threads"]) for r in block]
    write_csv(cfg["out"], rows, header(cfg))
    bad = 0
    for r in rows:
        ok = abs(r["z_score"]) <= 3
        bad += not ok
        print(f"{'PASS' if ok else 'FAIL'} rho=({r['rho1']:.4f},{r['rho2']:.4f}) {r['observable']}: "
              f"{r['estimate']:.5f} +- {r['stderr']:.5f} vs {r['closed_form']:.5f} (z={r['z_score']:+.2f})")
    return EXIT_OK if bad == 0 else EXIT_FAIL


def cmd_pde(cfg: dict) -> int:
    from .hydro import SineProfile
    from .pde import Grid, SlopeEscape, CFLViolation, rhs_divergence, rhs_quasilinear, solve, write_trajectory

    prof = SineProfile(cfg["amplitude"], tuple(tuple(m) for m in cfg["modes"]))
    rho = tuple(cfg["rho"])
    try:
        traj = solve(Grid.from_function(prof, cfg["N"]), rho, cfg["t_final"], times=cfg["times"],
                     c_cfl=cfg["c_cfl"], dt_policy=cfg["dt_policy"], track_admissible=True)
    except (SlopeEscape, CFLViolation) as exc:
        print(f"FAIL solver stopped: {exc} (N={cfg['N']}, amplitude={cfg['amplitude']}, rho={rho})")
        return EXIT_FAIL
    out = Path(cfg["out"])
    write_trajectory(traj, out, header(cfg))
    report = [("mean_drift", traj.mean_drift, traj.mean_drift <= 1e-8),
              ("admissible_excess", traj.max_excess, traj.max_excess <= 1e-9)]
    if cfg["convergence"]:
        errs = []
        for N in (cfg["N"] // 2, cfg["N"], 2 * cfg["N"]):
            g = Grid.from_function(prof, N)
            errs.append(float(np.sqrt(np.mean((rhs_divergence(g, rho).values - rhs_quasilinear(g, rho).values) ** 2))))
        for k in range(2):
            ratio = errs[k] / errs[k + 1]
            report.append((f"rhs_ratio_{k}", ratio, 3.5 <= ratio <= 4.5))
    with open(out / "report.csv", "w") as fh:
        for ln in header(cfg):
            fh.write(f"# {ln}\n")
        fh.write("quantity,value,ok\n")
        for name, val, ok in report:
            fh.write(f"{name},{val!r},{ok}\n")
    bad = 0
    for name, val, ok in report:
        print(f"{'PASS' if ok else 'FAIL'} {name} = {val:.3e}")
        bad += not ok
    return EXIT_OK if bad == 0 else EXIT_FAIL


def _hydro_job(args):
    from .hydro import run_replica

    plan, L, r, traj = args
    return run_replica(plan, L, r, traj)


def cmd_hydro(cfg: dict) -> int:
    from .hydro import (ExperimentPlan, SineProfile, solve_plan_pde, summarize, trend_check,
                        write_manifest, write_records, write_summary)

    plan = ExperimentPlan(
        profile=SineProfile(cfg["amplitude"], tuple(tuple(m) for m in cfg["modes"])),
        rho_bar=tuple(cfg["rho"]), sizes=tuple(cfg["sizes"]),
        replicas=None if cfg["replicas"] is None else tuple(cfg["replicas"]),
        times=tuple(sorted(set(cfg["times"]) | {0.0})), grid=cfg["N"], seed=cfg["seed"],
        margin=cfg["margin"], c_cfl=cfg["c_cfl"], dt_policy=cfg["dt_policy"],
    )
    plan.validate()
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    traj = solve_plan_pde(plan)
    records = []
    try:
        for L in plan.sizes:
            jobs = [(plan, L, r, traj) for r in range(plan.replica_count(L))]
            for recs in _pool_map(_hydro_job, jobs, cfg["threads"]):
                records.extend(recs)
            log.info("L=%d done", L)
    finally:
        # partial results survive a failure
        write_records(out / "records.csv", records, header(cfg), timing=cfg["timing"])
    rows = summarize(records)
    write_summary(out / "summary.csv", rows, header(cfg))
    write_manifest(out / "manifest.json", plan, traj, {"config": cfg})
    for r in rows:
        print(f"L={r.L} t={r.t}: D={r.D_mean:.4e} +- {r.D_stderr:.1e}, mean height "
              f"{r.mean_height_mean:+.3e} +- {r.mean_height_stderr:.1e}")
    t_last = max(plan.times)
    if t_last > 0 and len(plan.sizes) > 1:
        tc = trend_check(rows, t_last, plan.sizes)
        for ln in tc.detail:
            print(ln)
        return EXIT_OK if tc.nonincreasing and tc.small else EXIT_FAIL
    return EXIT_OK


def cmd_sample(cfg: dict) -> int:
    from .dynamics import SimState
    from .lattice import TorusGeometry
    from .tiling import linear_tiling

    geom = TorusGeometry.from_density(cfg["L"], tuple(cfg["rho"]))
    burn = cfg["burn_in"] if cfg["burn_in"] is not None else 10 * math.log(geom.L)
    state = SimState(linear_tiling(geom), seed=cfg["seed"]).run_until(burn)
    with open(cfg["out"], "w") as fh:
        for ln in header(cfg):
            fh.write(f"# {ln}\n")
        fh.write(state.tiling.to_text())
    print(f"wrote {cfg['out']} (L={geom.L}, m={geom.m}, {state.events_applied} events)")
    return EXIT_OK


COMMANDS = {"check": cmd_check, "equilibrium": cmd_equilibrium, "pde": cmd_pde, "hydro": cmd_hydro,
            "sample": cmd_sample}


def main(argv: list[str] | None = None) -> int:
    from .hydro import PlanError
    from .lattice import GeometryError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = resolve(args)
        return COMMANDS[cfg["command"]](cfg)
    except (ConfigError, PlanError, GeometryError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
