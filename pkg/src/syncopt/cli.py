"""Command-line front end.

Subcommands: synthesize, regime-map, simulate, verify.  Every command
writes comma-delimited tables (single header row, 17-significant-digit
floats) plus a PNG rendering next to each table; all writes are atomic and
all randomness is seeded explicitly, so outputs are byte-identical across
repeated runs.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import dynamics, netsim, oracle, synthesis
from .dynamics import ModelParams, PiecewiseControl, ProblemInstance
from .pmp import singular_data

__all__ = ["main", "verify_instances"]

CONTROL_FORMAT_VERSION = "1"
VERIFY_TOLERANCE = 0.02


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _write_atomic(path: Path, data: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_atomic_bytes(path: Path, render: Callable[[str], None]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=path.suffix)
    os.close(fd)
    try:
        render(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_table(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) if isinstance(v, float) else str(v) for v in row])
    _write_atomic(path, buf.getvalue())


def _instance_args(parser: argparse.ArgumentParser, with_state: bool = True) -> None:
    parser.add_argument("--alpha", type=float, required=True, help="desynchronization cost weight")
    parser.add_argument("--beta", type=float, required=True, help="transmission energy weight")
    parser.add_argument("--n", type=int, required=True, help="number of client nodes")
    parser.add_argument("--sigma2", type=float, required=True, help="per-client noise variance rate")
    parser.add_argument("--umax", type=float, required=True, help="upper intensity bound")
    parser.add_argument("--v", type=float, default=1.0, help="common clock rate (simulation only)")
    if with_state:
        parser.add_argument("--r0", type=float, required=True, help="initial desynchronization")
        parser.add_argument("--horizon", type=float, required=True, help="time horizon T")


def _params_from(args: argparse.Namespace) -> ModelParams:
    return ModelParams(
        alpha=args.alpha, beta=args.beta, n_clients=args.n,
        sigma_sq=args.sigma2, u_max=args.umax, drift=args.v,
    )


def _instance_from(args: argparse.Namespace) -> ProblemInstance:
    return ProblemInstance(_params_from(args), r0=args.r0, horizon=args.horizon)


def _instance_payload(instance: ProblemInstance) -> dict:
    p = instance.params
    return {
        "alpha": p.alpha, "beta": p.beta, "n": p.n_clients, "sigma2": p.sigma_sq,
        "umax": p.u_max, "v": p.drift, "r0": instance.r0, "horizon": instance.horizon,
    }


def _instance_from_payload(payload: dict) -> ProblemInstance:
    params = ModelParams(
        alpha=payload["alpha"], beta=payload["beta"], n_clients=int(payload["n"]),
        sigma_sq=payload["sigma2"], u_max=payload["umax"], drift=payload.get("v", 1.0),
    )
    return ProblemInstance(params, r0=payload["r0"], horizon=payload["horizon"])


def _sibling(out: Path, suffix: str) -> Path:
    return out.with_name(out.stem + suffix)


def cmd_synthesize(args: argparse.Namespace) -> int:
    instance = _instance_from(args)
    try:
        result = synthesis.synthesize(instance)
    except synthesis.SynthesisError as exc:
        print(f"error: synthesis failed: {exc}", file=sys.stderr)
        for rt, r0 in exc.scan:
            print(f"  scanned terminal_r={_fmt(rt)} -> R(0)={_fmt(r0)}", file=sys.stderr)
        return 1
    sd = singular_data(instance.params)
    out = Path(args.out)
    doc = {
        "version": CONTROL_FORMAT_VERSION,
        "instance": _instance_payload(instance),
        "regime": result.regime.value,
        "switch_times": list(result.switch_times),
        "cost": result.cost,
        "terminal_r": result.terminal_r,
        "singular": {
            "r_s": sd.r_s, "psi_s": sd.psi_s, "u_s": sd.u_s, "admissible": sd.admissible,
        },
        "control": {"segments": result.control.to_dicts()},
    }
    _write_atomic(out, json.dumps(doc, indent=2) + "\n")

    samples = result.extremal.samples(args.samples)
    traj_path = _sibling(out, ".trajectory.csv")
    _write_table(
        traj_path,
        ["t", "r", "psi", "u"],
        [(s.t, s.r, s.psi, s.u) for s in samples],
    )
    if args.figures:
        from . import figures

        _write_atomic_bytes(
            _sibling(out, ".png"),
            lambda p: figures.save_trajectory_figure(
                samples, p, sd.r_s if sd.admissible else None
            ),
        )
    print(
        f"regime {result.regime.value}, cost {_fmt(result.cost)}, "
        f"switch times {[float(t) for t in result.switch_times]}"
    )
    return 0


def cmd_regime_map(args: argparse.Namespace) -> int:
    params = _params_from(args)
    t_range = _parse_range(args.t_range, "t-range")
    r0_range = _parse_range(args.r0_range, "r0-range")
    nt, nr = _parse_grid(args.grid)
    labels = synthesis.regime_map(params, t_range, r0_range, nt, nr)
    ts = np.linspace(t_range[0], t_range[1], nt)
    r0s = np.linspace(r0_range[0], r0_range[1], nr)
    rows = [
        (float(ts[i]), float(r0s[j]), labels[i, j].value)
        for i in range(nt)
        for j in range(nr)
    ]
    out = Path(args.out)
    _write_table(out, ["T", "r0", "label"], rows)
    if args.figures:
        from . import figures

        _write_atomic_bytes(
            _sibling(out, ".png"),
            lambda p: figures.save_regime_map_figure(ts, r0s, labels, p),
        )
    print(f"wrote {nt}x{nr} regime map to {out}")
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    if args.control:
        payload = json.loads(Path(args.control).read_text())
        if payload.get("version") != CONTROL_FORMAT_VERSION:
            print(
                f"error: control file version {payload.get('version')!r} unsupported",
                file=sys.stderr,
            )
            return 2
        instance = _instance_from_payload(payload["instance"])
        control = PiecewiseControl.from_dicts(payload["control"]["segments"])
    else:
        instance = _instance_from(args)
        control = PiecewiseControl.from_constant(args.u, instance.horizon)
    checkpoints = tuple(float(x) for x in args.checkpoints.split(","))
    config = netsim.SimConfig(
        dt=args.dt, runs=args.runs, seed=args.seed, checkpoints=checkpoints,
        gaussian_init=args.gaussian_init,
    )
    sim = netsim.simulate(instance, control, config)
    ode = dynamics.r_at_times(instance, control, list(checkpoints))
    trajectory = [
        dynamics.TrajectorySample(t, r, control.value_at(t))
        for t, r in zip(checkpoints, ode)
    ]
    z = netsim.compare_to_ode(sim, trajectory)
    out = Path(args.out)
    _write_table(
        out,
        ["t", "empirical_r", "std_error", "ode_r", "z"],
        [
            (float(t), float(e), float(s), float(o), float(zz))
            for t, e, s, o, zz in zip(
                sim.checkpoints, sim.empirical_r, sim.std_error, ode, z
            )
        ],
    )
    if args.figures:
        from . import figures

        _write_atomic_bytes(
            _sibling(out, ".png"),
            lambda p: figures.save_simulation_figure(
                sim.checkpoints, sim.empirical_r, sim.std_error,
                np.array(ode), z, p,
            ),
        )
    print(f"max |z| = {_fmt(float(np.max(np.abs(z))))} over {len(checkpoints)} checkpoints")
    return 0


def verify_instances(
    instances: Sequence[ProblemInstance],
    dp_time: int = 2000,
    dp_state: int = 2001,
    dp_control: int = 21,
    synthesizer: Callable[[ProblemInstance], synthesis.SynthesisResult] = synthesis.synthesize,
    tolerance: float = VERIFY_TOLERANCE,
) -> list[dict]:
    """Per-instance synthesized-vs-DP comparison rows; the synthesizer hook
    exists so tests can check that a corrupted control is flagged."""
    rows = []
    for i, inst in enumerate(instances):
        result = synthesizer(inst)
        dp_cost, _ = oracle.dp_solve(
            inst, oracle.DpConfig.for_instance(inst, dp_time, dp_state, dp_control)
        )
        gap = abs(result.cost - dp_cost) / max(abs(dp_cost), 1e-300)
        rows.append(
            {
                "index": i,
                **_instance_payload(inst),
                "regime": result.regime.value,
                "synth_cost": result.cost,
                "dp_cost": dp_cost,
                "rel_gap": gap,
                "pass": gap <= tolerance,
            }
        )
    return rows


def _read_instances(path: Path) -> list[ProblemInstance]:
    instances = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            params = ModelParams(
                alpha=float(row["alpha"]), beta=float(row["beta"]),
                n_clients=int(row["n"]), sigma_sq=float(row["sigma2"]),
                u_max=float(row["umax"]), drift=float(row.get("v", 1.0)),
            )
            instances.append(
                ProblemInstance(params, r0=float(row["r0"]), horizon=float(row["horizon"]))
            )
    return instances


def cmd_verify(args: argparse.Namespace) -> int:
    instances = _read_instances(Path(args.instances))
    rows = verify_instances(instances, args.dp_time, args.dp_state, args.dp_control)
    out = Path(args.out)
    header = [
        "index", "alpha", "beta", "n", "sigma2", "umax", "v", "r0", "horizon",
        "regime", "synth_cost", "dp_cost", "rel_gap", "pass",
    ]
    _write_table(out, header, [[r[k] for k in header] for r in rows])
    if args.figures and rows:
        from . import figures

        _write_atomic_bytes(
            _sibling(out, ".png"),
            lambda p: figures.save_verify_figure(
                [r["index"] for r in rows], [r["rel_gap"] for r in rows],
                VERIFY_TOLERANCE, p,
            ),
        )
    passed = sum(r["pass"] for r in rows)
    print(f"passed {passed}/{len(rows)} instances at {VERIFY_TOLERANCE:.0%} tolerance")
    return 0 if passed == len(rows) else 1


def _parse_range(text: str, name: str) -> tuple[float, float]:
    parts = text.replace(":", ",").split(",")
    if len(parts) != 2:
        raise ValueError(f"--{name} expects LO:HI, got {text!r}")
    return float(parts[0]), float(parts[1])


def _parse_grid(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise ValueError(f"--grid expects NTxNR, got {text!r}")
    return int(parts[0]), int(parts[1])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="syncopt",
        description="Optimal transmission scheduling for clock synchronization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_syn = sub.add_parser("synthesize", help="synthesize the optimal control")
    _instance_args(p_syn)
    p_syn.add_argument("--out", required=True, help="result document path (JSON)")
    p_syn.add_argument("--samples", type=int, default=200, help="trajectory sample count")
    p_syn.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)
    p_syn.set_defaults(func=cmd_synthesize)

    p_map = sub.add_parser("regime-map", help="map control structures over (T, r0)")
    _instance_args(p_map, with_state=False)
    p_map.add_argument("--t-range", required=True, help="horizon range LO:HI")
    p_map.add_argument("--r0-range", required=True, help="initial-state range LO:HI")
    p_map.add_argument("--grid", required=True, help="grid dimensions NTxNR")
    p_map.add_argument("--out", required=True, help="map table path (CSV)")
    p_map.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)
    p_map.set_defaults(func=cmd_regime_map)

    p_sim = sub.add_parser("simulate", help="Monte Carlo network simulation")
    _instance_args(p_sim)
    p_sim.add_argument("--control", help="control document from 'synthesize'")
    p_sim.add_argument("--u", type=float, help="constant intensity (instead of --control)")
    p_sim.add_argument("--runs", type=int, required=True)
    p_sim.add_argument("--dt", type=float, required=True)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--checkpoints", required=True, help="comma-separated times")
    p_sim.add_argument("--gaussian-init", action="store_true")
    p_sim.add_argument("--out", required=True, help="comparison table path (CSV)")
    p_sim.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_ver = sub.add_parser("verify", help="synthesized cost vs DP oracle per instance")
    p_ver.add_argument("--instances", required=True, help="instance list CSV")
    p_ver.add_argument("--dp-time", type=int, default=2000)
    p_ver.add_argument("--dp-state", type=int, default=2001)
    p_ver.add_argument("--dp-control", type=int, default=21)
    p_ver.add_argument("--out", required=True, help="report path (CSV)")
    p_ver.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)
    p_ver.set_defaults(func=cmd_verify)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "simulate" and (args.control is None) == (args.u is None):
        print("error: exactly one of --control or --u is required", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ValueError, dynamics.InvalidControlError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
