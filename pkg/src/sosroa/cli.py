"""Command-line front end.

Four subcommands cover the pipeline end to end:

  simulate   fault-on trajectory from the pre-fault equilibrium, written as
             CSVs in both machine coordinates (angles/speeds) and polynomial
             coordinates.
  estimate   run the full stability-region estimation and emit the estimate
             file plus a contour CSV of V on a 2-D slice of machine space.
  cct        clearing-time estimate from the first crossing of V = 1 along
             the fault trajectory, compared against a time-domain bisection
             oracle.
  verify     Monte Carlo invariance check: sample states inside {V <= 1} and
             simulate each one under the post-fault dynamics.

All outputs are UTF-8 CSV/JSON.  Every file records the seed; numerics are
written with 17 significant digits so they round-trip exactly.  Exit codes:
0 success, 2 input error, 3 pipeline failure (with a diagnostics file).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import traceback
from types import SimpleNamespace

import numpy as np

from . import powersys, roa, shaping, sim
from .powersys import PowerSystemError
from .roa import RoaError
from .sdp import SdpError
from .shaping import ShapingError
from .sim import SimError

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_PIPELINE = 3

STARVATION_RATE = 1e-4
STARVATION_MIN_ATTEMPTS = 100_000


class InputError(Exception):
    """User-facing problem with flags, config, or file compatibility."""


# -- formatting helpers -----------------------------------------------

def _fmt(v):
    return format(float(v), ".17g")


def _write_csv(path, columns, rows, seed):
    lines = [f"# seed={seed}", ",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_json(path, data):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _write_manifest(outdir, command, args, outputs):
    skip = {"func", "out", "config"}
    options = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    _write_json(os.path.join(outdir, "manifest.json"), {
        "command": command,
        "config": args.config,
        "options": options,
        "seed": getattr(args, "seed", 0),
        "outputs": sorted(outputs),
    })


def _prepare_outdir(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


# -- config plumbing --------------------------------------------------

def _load_phases(args, required):
    nets, _cfg = powersys.load_config(args.config)
    for phase in required:
        if phase not in nets:
            raise InputError(
                f"{args.config}: command needs the '{phase}' phase")
    return nets


def _reference_sep(nets):
    """Origin of the polynomial coordinates: the post-fault SEP (falling
    back to the pre-fault network when no post-fault phase is given)."""
    nd = nets.get("postfault", nets.get("prefault"))
    return nd, powersys.find_sep(nd)


def _x_columns(m):
    return (["t"] + [f"delta_rel_{k+1}" for k in range(m)]
            + [f"omega_rel_{k+1}" for k in range(m)])


def _z_columns(m):
    return ["t"] + [f"z{i+1}" for i in range(3 * m)]


def _fault_trajectory(nets, duration, capture=sim.DEFAULT_CAPTURE):
    sep_pre = powersys.find_sep(nets["prefault"])
    if duration <= 0:
        return sim.Trajectory(times=np.array([0.0]),
                              states=np.array([sep_pre]), phase="fault")
    return sim.integrate(lambda x: powersys.swing_rhs(x, nets["fault"]),
                         sep_pre, (0.0, duration), capture=capture,
                         phase="fault")


# -- simulate ---------------------------------------------------------

def cmd_simulate(args):
    nets = _load_phases(args, ("prefault", "fault"))
    outdir = _prepare_outdir(args)
    _nd, sep = _reference_sep(nets)
    traj = _fault_trajectory(nets, args.fault_duration)
    m = len(sep) // 2
    Z = powersys.transform_trajectory(traj.states, sep)
    x_rows = np.column_stack([traj.times, traj.states])
    z_rows = np.column_stack([traj.times, Z])
    _write_csv(os.path.join(outdir, "trajectory_x.csv"),
               _x_columns(m), x_rows, args.seed)
    _write_csv(os.path.join(outdir, "trajectory_z.csv"),
               _z_columns(m), z_rows, args.seed)
    _write_manifest(outdir, "simulate", args,
                    ["trajectory_x.csv", "trajectory_z.csv"])
    return EXIT_OK


# -- estimate ---------------------------------------------------------

def _resolve_shape(args, nets, sep, nvars):
    spec = args.shape
    if spec == "sphere":
        return shaping.sphere_shape(nvars)
    if spec == "pca":
        if "fault" not in nets:
            raise InputError(
                f"{args.config}: --shape pca needs a 'fault' phase")
        traj = _fault_trajectory(nets, args.fault_duration)
        Z = powersys.transform_trajectory(traj.states, sep)
        return shaping.shape_from_trajectory(Z, mode=args.pca_mode)
    if spec.startswith("file:"):
        shape = shaping.load_shape(spec[5:])
        if shape.dim != nvars:
            raise InputError(
                f"shape file is {shape.dim}-dimensional, system needs {nvars}")
        return shape
    raise InputError(f"--shape must be sphere, pca, or file:PATH, got {spec!r}")


def _parse_slice(text, dim):
    parts = text.split(",")
    if len(parts) != 2:
        raise InputError(f"--slice expects two comma-separated indices: {text!r}")
    try:
        i, j = (int(p) for p in parts)
    except ValueError as exc:
        raise InputError(f"--slice indices must be integers: {text!r}") from exc
    if not (0 <= i < dim and 0 <= j < dim) or i == j:
        raise InputError(
            f"--slice indices must be distinct and in [0, {dim}): {text!r}")
    return i, j


def _axis_halfwidth(V, sep, axis):
    """Half-width of a contour axis: doubled from pi/4 until V > 2 at both
    ends (or a cap), so the unit level set fits inside the window."""
    hw = math.pi / 4
    for _ in range(8):
        lo = sep.copy()
        hi = sep.copy()
        lo[axis] -= hw
        hi[axis] += hw
        if all(V.evaluate(powersys.transform(x, sep)) > 2.0 for x in (lo, hi)):
            return hw
        hw *= 2.0
    return hw


def _contour_rows(V, sep, axes, resolution):
    i, j = axes
    hw_i = _axis_halfwidth(V, sep, i)
    hw_j = _axis_halfwidth(V, sep, j)
    grid_i = np.linspace(sep[i] - hw_i, sep[i] + hw_i, resolution)
    grid_j = np.linspace(sep[j] - hw_j, sep[j] + hw_j, resolution)
    rows = []
    x = sep.copy()
    for a in grid_i:
        x[i] = a
        for b in grid_j:
            x[j] = b
            rows.append((a, b, V.evaluate(powersys.transform(x, sep))))
        x[j] = sep[j]
    return rows


def cmd_estimate(args):
    nets = _load_phases(args, ("postfault",) if args.shape != "pca"
                        else ("postfault", "prefault", "fault"))
    outdir = _prepare_outdir(args)
    nd, sep = _reference_sep(nets)
    system = powersys.to_polynomial_system(nd, sep)
    shape = _resolve_shape(args, nets, sep, system.nvars)
    opts = roa.RoaOptions(
        deg_V=args.deg_v, deg_s=args.deg_s,
        beta_rel_tol=args.tol_bisect, c_rel_tol=args.tol_bisect,
        max_outer=args.max_outer)
    est = roa.estimate_roa(system, shape, opts)
    roa.save_estimate(est, os.path.join(outdir, "estimate.json"))
    axes = _parse_slice(args.slice, len(sep))
    rows = _contour_rows(est.V, sep, axes, args.resolution)
    _write_csv(os.path.join(outdir, "contour.csv"),
               ["axis1", "axis2", "V"], rows, args.seed)
    _write_manifest(outdir, "estimate", args, ["estimate.json", "contour.csv"])
    return EXIT_OK


# -- cct --------------------------------------------------------------

def _load_matching_estimate(args, sep):
    est = roa.load_estimate(args.estimate)
    nvars = 3 * (len(sep) // 2)
    if est.V.nvars != nvars:
        raise InputError(
            f"estimate is {est.V.nvars}-dimensional, config needs {nvars}")
    return est


def cmd_cct(args):
    nets = _load_phases(args, ("prefault", "fault", "postfault"))
    outdir = _prepare_outdir(args)
    _nd, sep = _reference_sep(nets)
    est = _load_matching_estimate(args, sep)
    traj = _fault_trajectory(nets, args.fault_duration)
    Z = powersys.transform_trajectory(traj.states, sep)
    report = roa.lyapunov_cct(
        est, SimpleNamespace(times=traj.times, states=Z))
    scenario = sim.FaultScenario(
        prefault=nets["prefault"], fault=nets["fault"],
        postfault=nets["postfault"], fault_duration=args.fault_duration)
    true_cct = None
    true_cct_above = None
    try:
        true_cct = sim.true_cct(scenario, tol_t=args.tol_bisect_time,
                                t_upper=args.t_upper)
    except sim.CctUpperBoundError as exc:
        true_cct_above = exc.bound
    _write_csv(os.path.join(outdir, "v_trace.csv"), ["t", "V"],
               report.v_trace, args.seed)
    _write_json(os.path.join(outdir, "cct_report.json"), {
        "seed": args.seed,
        "cct_lyapunov": report.cct_lyapunov,
        "true_cct": true_cct,
        "true_cct_above": true_cct_above,
        "lower_bound_only": report.lower_bound_only,
        "started_outside": report.started_outside,
        "crossing_index": report.crossing_index,
        "fault_duration": args.fault_duration,
        "tolerances": {
            "cct_bisection_s": args.tol_bisect_time,
            "t_upper_s": args.t_upper,
            "estimate_beta_rel_tol": est.options.beta_rel_tol,
            "estimate_sdp_tol": est.options.sdp_tol,
        },
    })
    _write_manifest(outdir, "cct", args, ["cct_report.json", "v_trace.csv"])
    return EXIT_OK


# -- verify -----------------------------------------------------------

def _speed_halfwidth(V, nvars, axis):
    """Smallest doubled bound b with V(b * e_axis) > level 1 (cap 64)."""
    b = 0.25
    z = np.zeros(nvars)
    for _ in range(9):
        z[axis] = b
        if V.evaluate(z) > 1.0:
            return b
        b *= 2.0
    return b


def _sample_state(rng, sep, speed_hw):
    """One candidate machine state: angles uniform in sep +/- pi, speeds
    uniform in the per-axis windows bracketing {V <= 1}."""
    m = len(sep) // 2
    x = np.empty(2 * m)
    x[:m] = sep[:m] + rng.uniform(-math.pi, math.pi, m)
    x[m:] = rng.uniform(-1.0, 1.0, m) * speed_hw
    return x


def cmd_verify(args):
    nets = _load_phases(args, ("postfault",))
    outdir = _prepare_outdir(args)
    nd, sep = _reference_sep(nets)
    est = _load_matching_estimate(args, sep)
    V = est.V if args.level == 1.0 else est.V.scale(1.0 / args.level)
    report_path = os.path.join(outdir, "verify_report.json")
    if args.samples == 0:
        _write_json(report_path, {
            "seed": args.seed, "samples": 0, "converged": 0,
            "fraction": None, "acceptance_rate": None, "counterexamples": []})
        _write_manifest(outdir, "verify", args, ["verify_report.json"])
        return EXIT_OK
    m = len(sep) // 2
    speed_hw = np.array([_speed_halfwidth(V, 3 * m, k) for k in range(m)])
    attempts = 0
    accepted = []
    # Each sample index owns an independent seeded stream, so the accepted
    # set is identical no matter how the loop is scheduled.
    for i in range(args.samples):
        rng = np.random.default_rng([args.seed, i])
        while True:
            x = _sample_state(rng, sep, speed_hw)
            attempts += 1
            if V.evaluate(powersys.transform(x, sep)) <= 1.0:
                accepted.append(x)
                break
            if (attempts >= STARVATION_MIN_ATTEMPTS
                    and len(accepted) < attempts * STARVATION_RATE):
                raise RoaError(
                    f"sampler starvation: {len(accepted)} acceptances in "
                    f"{attempts} draws (rate < {STARVATION_RATE:g}); the "
                    "level set is too thin for box rejection sampling — "
                    "consider slice-based sampling along the shape axes")
    converged = 0
    counterexamples = []
    for x in accepted:
        if sim.converges_to_sep(x, nd, sep):
            converged += 1
        else:
            counterexamples.append({
                "state": [_fmt(v) for v in x],
                "V": _fmt(V.evaluate(powersys.transform(x, sep)))})
    _write_json(report_path, {
        "seed": args.seed,
        "samples": args.samples,
        "converged": converged,
        "fraction": converged / args.samples,
        "acceptance_rate": args.samples / attempts,
        "counterexamples": counterexamples,
    })
    _write_manifest(outdir, "verify", args, ["verify_report.json"])
    return EXIT_OK


# -- parser / entry point ---------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="sosroa",
        description="Certified stability-region estimation for multi-machine "
                    "power systems via sum-of-squares programming.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="system config JSON")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("simulate", help="fault-on trajectory CSVs")
    common(p)
    p.add_argument("--fault-duration", type=float, required=True,
                   help="seconds of fault-on integration")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="run the estimation pipeline")
    common(p)
    p.add_argument("--shape", default="sphere",
                   help="sphere | pca | file:PATH")
    p.add_argument("--pca-mode", default="sqrt", choices=("sqrt", "linear"))
    p.add_argument("--fault-duration", type=float, default=0.5,
                   help="fault-on window feeding the pca shape")
    p.add_argument("--deg-v", type=int, default=2)
    p.add_argument("--deg-s", type=int, default=2)
    p.add_argument("--tol-bisect", type=float, default=1e-3)
    p.add_argument("--max-outer", type=int, default=5)
    p.add_argument("--slice", default="0,1",
                   help="two machine-state axis indices for the contour CSV")
    p.add_argument("--resolution", type=int, default=41)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("cct", help="Lyapunov clearing-time estimate")
    common(p)
    p.add_argument("--estimate", required=True, help="estimate JSON file")
    p.add_argument("--fault-duration", type=float, default=2.0,
                   help="fault-on window for the V trace")
    p.add_argument("--tol-bisect-time", type=float, default=1e-3,
                   help="time-domain bisection tolerance (s)")
    p.add_argument("--t-upper", type=float, default=5.0,
                   help="largest clearing time probed by the oracle")
    p.set_defaults(func=cmd_cct)

    p = sub.add_parser("verify", help="Monte Carlo invariance check")
    common(p)
    p.add_argument("--estimate", required=True, help="estimate JSON file")
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--level", type=float, default=1.0,
                   help="sublevel of V to sample (diagnostic use)")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, PowerSystemError, ShapingError, OSError,
            json.JSONDecodeError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (RoaError, SdpError, SimError) as exc:
        print(f"pipeline failure: {exc}", file=sys.stderr)
        try:
            os.makedirs(args.out, exist_ok=True)
            with open(os.path.join(args.out, "diagnostics.txt"), "w",
                      encoding="utf-8") as fh:
                fh.write(f"pipeline failure: {exc}\n\n")
                fh.write(traceback.format_exc())
        except OSError:
            pass
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
