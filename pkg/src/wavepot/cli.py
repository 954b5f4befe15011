"""Command-line driver: ``wavepot {forward,synth,reconstruct,study,selftest}``.

Every subcommand reads an optional key-value scenario file (``--config``)
and single-field overrides (``--set key=value``).
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

from . import checks
from .measurement import read_measurements, write_measurements
from .scenarios import (
    Scenario,
    ScenarioError,
    build_setup,
    convergence_study,
    parameter_field,
    read_config,
    run_scenario,
    scenario_from_mapping,
    synthesize,
    write_config,
)
from .wave import write_field_csv, write_field_vtk


def _scenario(args) -> Scenario:
    s = read_config(args.config) if args.config else Scenario()
    overrides = {}
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise SystemExit(f"--set expects key=value, got '{item}'")
        overrides[key.strip()] = value
    return scenario_from_mapping(overrides, base=s, source="--set") if overrides else s


def _cmd_forward(args):
    s = _scenario(args)
    setup = build_setup(s)
    c = parameter_field(s, setup.mesh, setup.grid)
    u_all = setup.operator.waves(c)
    os.makedirs(args.out, exist_ok=True)
    for k, u in enumerate(u_all):
        values = setup.mesh.to_vertices(u)
        write_field_csv(os.path.join(args.out, f"wave_{k}.csv"), setup.mesh, setup.grid, values)
        if args.vtk is not None and s.n >= 2:
            i = int(round(args.vtk / setup.grid.dt))
            write_field_vtk(os.path.join(args.out, f"wave_{k}_t{i}.vtk"), setup.mesh, values[i], "u")
    write_field_csv(os.path.join(args.out, "parameter.csv"), setup.mesh, setup.grid, c)
    print(f"wrote {len(u_all)} wave fields to {args.out}")
    return 0


def _cmd_synth(args):
    s = _scenario(args)
    setup = build_setup(s)
    _, noisy = synthesize(s, setup)
    write_measurements(args.out, noisy.reshape(len(noisy), -1), setup.layout)
    print(f"wrote {noisy.shape[0]} x {noisy[0].size} values to {args.out}")
    return 0


def _cmd_reconstruct(args):
    s = _scenario(args)
    data = None
    if args.data:
        flat, _ = read_measurements(args.data)
        if s.sensors == "full":
            setup = build_setup(s)
            data = flat.reshape(len(flat), setup.grid.N, setup.mesh.K)
        else:
            data = flat
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_config(s, os.path.join(args.out, "scenario.cfg"))
    report, _ = run_scenario(s, out_dir=args.out, data=data, log=sys.stdout)
    print(report.to_text(), end="")
    return 0


def _cmd_study(args):
    s = _scenario(args)
    eps = [float(e) for e in args.eps.split(",")]
    rows, (o_l2, o_h2) = convergence_study(s, eps, log=sys.stdout)
    print("epsilon,rel_l2,rel_h2")
    for r in rows:
        print(",".join(repr(float(v)) for v in r))
    print(f"fitted order: L2 {o_l2:.3f}  H2 {o_h2:.3f}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epsilon", "rel_l2", "rel_h2"])
            w.writerows([[repr(float(v)) for v in r] for r in rows])
            w.writerow(["order", repr(o_l2), repr(o_h2)])
    return 0


def _cmd_selftest(args):
    return 0 if checks.run_all() else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wavepot", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="scenario key-value file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one scenario field")

    sp = sub.add_parser("forward", help="solve the wave equation for the exact parameter and dump fields")
    common(sp)
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--vtk", type=float, help="also write VTK snapshots at this time (n >= 2)")
    sp.set_defaults(func=_cmd_forward)

    sp = sub.add_parser("synth", help="generate a noisy data file")
    common(sp)
    sp.add_argument("--out", required=True, help="data file")
    sp.set_defaults(func=_cmd_synth)

    sp = sub.add_parser("reconstruct", help="run REGINN and report errors")
    common(sp)
    sp.add_argument("--data", help="data file from 'synth' (synthesized when omitted)")
    sp.add_argument("--out", help="output directory for report, log and reconstruction")
    sp.set_defaults(func=_cmd_reconstruct)

    sp = sub.add_parser("study", help="noise-level sweep with fitted convergence orders")
    common(sp)
    sp.add_argument("--eps", default="5e-2,2.5e-2,1e-2,5e-3,2.5e-3", help="comma-separated, decreasing")
    sp.add_argument("--out", help="CSV table")
    sp.set_defaults(func=_cmd_study)

    sp = sub.add_parser("selftest", help="analytic, energy, Taylor and adjoint checks")
    sp.set_defaults(func=_cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, ValueError, OSError) as exc:
        print(f"wavepot {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
