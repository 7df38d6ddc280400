"""Command-line entry point: ``atomarray-sim``.

Exit codes: 0 success, 2 validation failure, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .core import Circuit, validate_circuit
from .experiments import (EXPERIMENTS, ConfigError, ExperimentConfig, ExperimentMismatch,
                          UnknownExperiment, _csv_text, diff_reports, entropy_quench, run_experiment)
from .manybody import MHZ, CZPulseParams, MappingErrorModel, cz_pulse_unitary
from .transport import (NonBipartite, OrderingViolation, TrapParams, check_circuit_transport,
                        plan_moves, search_layout, validate_plan)

OK, INVALID, FAILED = 0, 2, 3


class ValidationFailure(Exception):
    pass


def _cmd_run(args) -> int:
    options = dict(kv.split("=", 1) for kv in args.option)
    cfg = ExperimentConfig(args.experiment, args.shots, args.seed, args.noise, args.out, options)
    manifest = run_experiment(cfg)
    print(json.dumps({"out": args.out, "input_hash": manifest.input_hash,
                      "outputs": sorted(manifest.outputs)}, indent=1))
    return OK


def _cmd_transport_check(args) -> int:
    c = Circuit.from_json(Path(args.circuit).read_text())
    problems = [f"layer {v.layer}: {v.rule} ({v.detail})" for v in validate_circuit(c)]
    traps = TrapParams(n_max=args.n_max)
    for r in check_circuit_transport(c, traps):
        print(f"layer {r.layer}: T={r.duration:g} us  max dN={r.max_delta_n:.4g}  "
              f"retention={r.min_retention:.6f}")
        problems += [f"layer {r.layer}: {v}" for v in r.violations]
    for p in problems:
        print(f"violation: {p}")
    return INVALID if problems else OK


def _cmd_transport_plan(args) -> int:
    g = json.loads(Path(args.graph).read_text())
    res = search_layout(g["vertices"], [tuple(e) for e in g["edges"]], seed=args.seed)
    c = res.circuit(args.T)
    plans = []
    positions = [pos for _, pos in c.positions()]
    kinds = [layer.kind for layer in c.layers]
    for i, kind in enumerate(kinds):
        if kind != "move":
            continue
        before = [a.__class__(a.id, a.trap, positions[i - 1][a.id], a.row, a.col) for a in c.atoms]
        after = [a.__class__(a.id, a.trap, positions[i][a.id], a.row, a.col) for a in c.atoms]
        plan = plan_moves(before, after, c.layers[i].duration)
        bad = validate_plan(plan)
        if bad:
            raise ValidationFailure("; ".join(bad))
        plans.append(plan)
    body = {"circuit": json.loads(c.to_json()), "score": list(res.score),
            "plans": [p.to_dict() for p in plans]}
    Path(args.out).write_text(json.dumps(body, indent=1) + "\n")
    if args.csv:
        rows = []
        offset = 0.0
        for p in plans:
            for k, t in enumerate(p.times):
                for label, store, amp in (("row", p.rows, p.row_amp), ("col", p.cols, p.col_amp)):
                    for key in sorted(store):
                        rows.append([offset + float(t), f"{label}{key}", float(store[key][k]), float(amp[key][k])])
            offset += float(p.times[-1])
        Path(args.csv).write_text(_csv_text(["time_us", "tone", "position_um", "amplitude"], rows))
    print(f"{len(res.layers)} CZ layers, {len(plans)} moves -> {args.out}")
    return OK


def _cmd_cz(args) -> int:
    omega = args.omega_mhz * MHZ
    r = cz_pulse_unitary(CZPulseParams(omega), args.blockade_mhz * MHZ)
    print(f"fidelity {r.fidelity:.6f}")
    print(f"zeta {r.zeta:.6f} rad")
    print(f"leakage {r.leakage:.3e}")
    return OK


def _cmd_entropy(args) -> int:
    errs = MappingErrorModel.load(args.noise) if args.noise else MappingErrorModel.zero()
    times = np.round(np.arange(0.0, args.tmax + args.dt / 2, args.dt), 10)
    rows = entropy_quench(args.initial, times, args.shots, errs, args.seed)
    text = _csv_text(list(rows[0]), [list(r.values()) for r in rows])
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return OK


def _cmd_diff(args) -> int:
    deltas = diff_reports(args.a, args.b, args.sigma)
    for d in deltas:
        flag = "" if d.significant is None else ("  SIGNIFICANT" if d.significant else "  ok")
        sig = "" if d.sigma is None else f" (sigma {d.sigma:.3g})"
        print(f"{d.key}: {d.a:.6g} -> {d.b:.6g}  delta {d.delta:+.6g}{sig}{flag}")
    return OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="atomarray-sim")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a named reproduction")
    run.add_argument("experiment", help=", ".join(EXPERIMENTS))
    run.add_argument("--shots", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--noise", help="zero, ed6, or a JSON file")
    run.add_argument("--out", default="results")
    run.add_argument("--option", action="append", default=[], metavar="KEY=VALUE")
    run.set_defaults(func=_cmd_run)

    tr = sub.add_parser("transport", help="move planning and checks")
    tsub = tr.add_subparsers(dest="action", required=True)
    chk = tsub.add_parser("check")
    chk.add_argument("circuit")
    chk.add_argument("--n-max", type=float, default=26.0)
    chk.set_defaults(func=_cmd_transport_check)
    plan = tsub.add_parser("plan")
    plan.add_argument("--graph", required=True)
    plan.add_argument("--T", type=float, default=200.0, help="minimum move duration in us")
    plan.add_argument("--seed", type=int, default=0)
    plan.add_argument("--out", default="plan.json")
    plan.add_argument("--csv")
    plan.set_defaults(func=_cmd_transport_plan)

    cz = sub.add_parser("cz-verify", help="pulse-level check of the CZ gate")
    cz.add_argument("--omega-mhz", type=float, default=3.6)
    cz.add_argument("--blockade-mhz", type=float, default=500.0)
    cz.set_defaults(func=_cmd_cz)

    ent = sub.add_parser("entropy-quench", help="two-copy Renyi entropy after a quench")
    ent.add_argument("--initial", choices=("ground", "z2"), default="ground")
    ent.add_argument("--tmax", type=float, default=2.0)
    ent.add_argument("--dt", type=float, default=0.05)
    ent.add_argument("--shots", type=int, default=2000)
    ent.add_argument("--seed", type=int, default=0)
    ent.add_argument("--noise")
    ent.add_argument("--out")
    ent.set_defaults(func=_cmd_entropy)

    diff = sub.add_parser("diff", help="compare two report.json files")
    diff.add_argument("a")
    diff.add_argument("b")
    diff.add_argument("--sigma", type=float, default=3.0)
    diff.set_defaults(func=_cmd_diff)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UnknownExperiment, ConfigError, ExperimentMismatch, ValidationFailure, OrderingViolation,
            NonBipartite, ValueError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INVALID
    except Exception as exc:  # noqa: BLE001 - surface anything else as a runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return FAILED


if __name__ == "__main__":
    sys.exit(main())
