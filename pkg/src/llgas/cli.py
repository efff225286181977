"""Command-line harness.

Subcommands: ``simulate`` exports one trajectory, ``verify`` runs a named
acceptance bundle, ``renewal-diag`` tabulates scaled regeneration moments,
``skorokhod`` measures the distance between two imported paths, and
``export`` re-emits a report as CSV.  Exit codes: 0 when every requested
check passes, 1 on a failed check, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time

from .cadlag import import_path_csv, skorokhod_distance
from .engine import (
    BUNDLES,
    config_from_dict,
    load_bundled_config,
    rng_for_replica,
    run_experiment,
)
from .environment import DistanceLaw, generate
from .gas import build_gas, export_track_csv, export_trajectory_csv
from .renewal import tau_moment_report
from .walks import JumpLaw, sample_markov, sample_reinforced


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="llgas", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate one trajectory and export CSV")
    sim.add_argument("--config", help="experiment JSON config supplying the laws")
    sim.add_argument("--steps", type=int, default=10_000)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True, help="trajectory CSV (k, S_k, X_k, T_k)")
    sim.add_argument("--track-out", help="interpolated track CSV (t, position)")
    sim.add_argument("--grid-step", type=float, default=1.0)

    ver = sub.add_parser("verify", help="run a named acceptance bundle")
    ver.add_argument("bundle", choices=BUNDLES)
    ver.add_argument("--config", help="JSON config; defaults to the bundled one")
    ver.add_argument("--seed", type=int)
    ver.add_argument("--replicas", type=int)
    ver.add_argument("--horizon", type=int)
    ver.add_argument("--out", help="write the report JSON here")

    ren = sub.add_parser("renewal-diag", help="scaled regeneration-time moment table")
    ren.add_argument("--L", default="2,3,4,5", help="comma-separated run lengths")
    ren.add_argument("--p", default="1,2", help="comma-separated moment orders")
    ren.add_argument("--replicas", type=int, default=10_000)
    ren.add_argument("--seed", type=int, default=0)
    ren.add_argument("--out", help="CSV output (L, p, estimate, stderr, replicas)")

    sko = sub.add_parser("skorokhod", help="J1 distance between two imported paths")
    sko.add_argument("--a", required=True)
    sko.add_argument("--b", required=True)
    sko.add_argument("--nmax", type=int, default=3)

    exp = sub.add_parser("export", help="re-emit a report JSON as CSV")
    exp.add_argument("--report", required=True)
    exp.add_argument("--out", required=True)
    return ap


def _cmd_simulate(args) -> int:
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
        env_law = DistanceLaw.from_json_dict(raw["environment"])
        walk_spec = raw.get("walk", {"support": [1, -1], "probs": [0.5, 0.5]})
    else:
        env_law = DistanceLaw("iid", (1.0, 2.0), probs=(0.5, 0.5))
        walk_spec = {"support": [1, -1], "probs": [0.5, 0.5]}
    rng = rng_for_replica(args.seed, 0)
    if walk_spec.get("kind") == "reinforced":
        walk = sample_reinforced(float(walk_spec["p"]), args.steps, rng)
    else:
        walk = sample_markov(JumpLaw.from_json_dict(walk_spec), args.steps, rng)
    env = generate(env_law, 0, 0, args.seed)
    traj = build_gas(env, walk)
    export_trajectory_csv(traj, args.out)
    if args.track_out:
        export_track_csv(traj, args.track_out, args.grid_step)
    print(f"simulated {args.steps} collisions, track length {traj.horizon:.6g}")
    return 0


def _cmd_verify(args) -> int:
    overrides = {"seed": args.seed, "replicas": args.replicas, "horizon": args.horizon}
    if args.config:
        with open(args.config) as fh:
            cfg = config_from_dict(json.load(fh), overrides)
        if cfg.bundle != args.bundle:
            print(f"config is for bundle {cfg.bundle!r}, not {args.bundle!r}", file=sys.stderr)
            return 2
    else:
        cfg = load_bundled_config(args.bundle, overrides)
    t0 = time.perf_counter()
    report = run_experiment(cfg)
    elapsed = time.perf_counter() - t0
    for c in report.checks:
        flag = "PASS" if c.passed else "FAIL"
        print(f"{flag} {c.stat}: estimate={c.estimate:.6g} target={c.target:.6g} tol={c.tolerance:g}")
    print(f"bundle {cfg.bundle}: {'PASS' if report.passed else 'FAIL'} ({elapsed:.1f}s)", file=sys.stderr)
    if args.out:
        report.write(args.out)
    return 0 if report.passed else 1


def _cmd_renewal(args) -> int:
    L_list = [int(x) for x in args.L.split(",") if x]
    p_list = [float(x) for x in args.p.split(",") if x]
    rng = rng_for_replica(args.seed, 0)
    report = tau_moment_report(L_list, p_list, args.replicas, rng)
    for row in report.rows:
        print(
            f"L={row.L} p={row.p:g}: estimate={row.estimate:.6g} "
            f"stderr={row.stderr:.3g} replicas={row.replicas}"
        )
    ok = all(report.band_ok.values())
    for p, flag in sorted(report.band_ok.items()):
        print(f"band(p={p:g}): {'PASS' if flag else 'FAIL'}")
    if args.out:
        report.to_csv(args.out)
    return 0 if ok else 1


def _cmd_skorokhod(args) -> int:
    a = import_path_csv(args.a)
    b = import_path_csv(args.b)
    d = skorokhod_distance(a, b, args.nmax)
    print(f"{d.value:.9g}")
    print(f"truncation <= {d.truncation:g}", file=sys.stderr)
    return 0


def _cmd_export(args) -> int:
    with open(args.report) as fh:
        rep = json.load(fh)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stat", "estimate", "stderr", "target", "tolerance", "pass"])
        for c in rep["checks"]:
            w.writerow([c["stat"], c["estimate"], c["stderr"], c["target"], c["tolerance"], c["pass"]])
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "verify": _cmd_verify,
    "renewal-diag": _cmd_renewal,
    "skorokhod": _cmd_skorokhod,
    "export": _cmd_export,
}


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
