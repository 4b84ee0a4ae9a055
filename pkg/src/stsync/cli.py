"""Command-line interface.

Subcommands::

    stsync reference --scenario s.json --vehicle 3 --speed 50 --out results/
    stsync simulate  --scenario s.json --vehicle 2 --out results/
    stsync formation --scenario s.json --out results/
    stsync plan      --scenario s.json --out results/
    stsync bench     --out results/

Exit status: 0 success, 1 usage or scenario validation error, 2 runtime or
convergence failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import cascade_bench as cb
from .reference import ProfileError, march_time
from .scenario import (ScenarioError, json_safe, load_scenario, with_overrides, write_report,
                       write_trace)
from .sim import ArrivalReport, arrival_summary, build_reference, plan_vehicle, run_formation, run_single

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2

log = logging.getLogger("stsync")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _positive(kind):
    def conv(text):
        val = kind(text)
        if not val > 0:
            raise argparse.ArgumentTypeError(f"must be > 0 (got {text})")
        return val

    return conv


def _seed(text):
    val = int(text)
    if not 0 <= val < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return val


def build_parser():
    p = _Parser(prog="stsync", description="Space-and-time synchronised tracking and formation.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, vehicle=False):
        sp.add_argument("--scenario", required=True, type=Path)
        sp.add_argument("--out", type=Path, default=Path("results"))
        sp.add_argument("--dt", type=_positive(float))
        sp.add_argument("--eps", type=_positive(float))
        sp.add_argument("--no-disturbance", action="store_true")
        sp.add_argument("--seed", type=_seed, default=0)
        if vehicle:
            sp.add_argument("--vehicle", type=_positive(int), default=1, help="1-based index")

    sp = sub.add_parser("reference", help="integrate one reference path at constant speed")
    common(sp, vehicle=True)
    sp.add_argument("--speed", type=_positive(float), help="constant V_d (default: V_s0)")
    common(sub.add_parser("simulate", help="closed-loop run of one vehicle"), vehicle=True)
    common(sub.add_parser("formation", help="closed-loop run of every vehicle"))
    common(sub.add_parser("plan", help="travel ranges and velocity plans"))
    sp = sub.add_parser("bench", help="cascade stability bench")
    sp.add_argument("--out", type=Path, default=Path("results"))
    sp.add_argument("--tf", type=_positive(float), default=20.0)
    sp.add_argument("--eps", type=_positive(float), default=1e-3)
    return p


def _load(args):
    scn = load_scenario(args.scenario)
    return with_overrides(scn, dt=args.dt, eps=args.eps, no_disturbance=args.no_disturbance)


def _vehicle(scn, args):
    if args.vehicle > len(scn.vehicles):
        raise ScenarioError(f"--vehicle {args.vehicle} out of range (scenario has "
                            f"{len(scn.vehicles)} vehicles)")
    return args.vehicle - 1, scn.vehicles[args.vehicle - 1]


def _emit(summary):
    print(json.dumps(json_safe(summary), indent=2, allow_nan=False))


def cmd_reference(args):
    scn = _load(args)
    i, veh = _vehicle(scn, args)
    speed = args.speed or veh.Vs0
    params = build_reference(veh, scn.control)
    march = march_time(params, speed, dt=scn.control.dt)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / f"reference_v{i + 1}.csv"
    table = np.column_stack([march.t, march.rd, march.Rd, march.qd, march.eta_d,
                             march.closed_form.astype(float)])
    np.savetxt(path, table, delimiter=",", fmt="%.15g", header="t,r_d,R_d,q_d,eta_d,closed_form",
               comments="")
    tf = params.Sd / speed
    _emit({"vehicle": i + 1, "V_d": speed, "S_d": params.Sd, "t_f": tf,
           "arrival_measured": march.arrival, "C1": params.C1, "C2": params.C2,
           "csv": str(path)})
    return EXIT_OK if abs(march.arrival - tf) <= 2 * scn.control.dt else EXIT_FAILURE


def cmd_simulate(args):
    scn = _load(args)
    i, veh = _vehicle(scn, args)
    trace = run_single(veh, scn.target, scn.control, seed=args.seed, index=i)
    args.out.mkdir(parents=True, exist_ok=True)
    if len(trace):
        write_trace(trace, args.out / f"trace_v{i + 1}.csv")
    report = ArrivalReport(scn.control.Td, [arrival_summary(trace, veh, scn.target, scn.control)])
    write_report(report, args.out / "arrival_report.json")
    _emit(report.to_dict())
    if not report.all_converged:
        log.error("vehicle %d did not meet the terminal tolerances (%s)", i + 1, trace.status_text)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_formation(args):
    scn = _load(args)
    traces, report = run_formation(scn.vehicles, scn.target, scn.control, seed=args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    for i, tr in enumerate(traces):
        if tr is not None and len(tr):
            write_trace(tr, args.out / f"trace_v{i + 1}.csv")
    write_report(report, args.out / "arrival_report.json")
    _emit(report.to_dict())
    failed = [v.vehicle + 1 for v in report.per_vehicle if not v.converged]
    if failed:
        log.error("vehicles %s did not meet the terminal tolerances", failed)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_plan(args):
    scn = _load(args)
    plans = []
    for i, veh in enumerate(scn.vehicles):
        params = build_reference(veh, scn.control)
        prof = plan_vehicle(veh, scn.control, params)
        plans.append({"vehicle": i + 1, "S_d": params.Sd, "Vd0": veh.Vd0_effective,
                      "Vdf": scn.control.Vdf, "m": prof.m, "coeffs": list(prof.coeffs)})
    doc = {"Td": scn.control.Td, "plans": plans}
    args.out.mkdir(parents=True, exist_ok=True)
    write_report(doc, args.out / "plan.json")
    _emit(doc)
    return EXIT_OK


def cmd_bench(args):
    spec = cb.strict_feedback_cascade(tf=args.tf)
    trace, verdict = cb.simulate_cascade(spec, [1.0, 1.0], eps=args.eps)
    inter = cb.check_interconnection(spec)
    _, ratio, decays = cb.controller_instantiation_ratio(1.0, 2.0, 1.0, 2.0, args.tf)
    doc = {
        "cascade": {"passed": verdict.passed, "final_norms": verdict.final_norms,
                    "max_residual": verdict.max_residual, "absorbed": verdict.absorbed},
        "interconnection": {"passed": inter.passed, "decays": inter.decays,
                            "bound_ok": inter.bound_ok},
        "controller_ratio": {"decays": decays, "first": float(ratio[0]), "last": float(ratio[-1])},
    }
    doc["passed"] = verdict.passed and inter.passed and decays
    args.out.mkdir(parents=True, exist_ok=True)
    write_report(doc, args.out / "bench_report.json")
    _emit(doc)
    return EXIT_OK if doc["passed"] else EXIT_FAILURE


COMMANDS = {"reference": cmd_reference, "simulate": cmd_simulate, "formation": cmd_formation,
            "plan": cmd_plan, "bench": cmd_bench}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ProfileError, RuntimeError, ValueError, OSError) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
