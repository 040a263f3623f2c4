"""Command line entry point.

Exit codes: 0 success / feasible / PASS, 1 parse or validation error,
2 infeasible policy, 3 simulation or probe verdict FAIL. Files are the
machine-readable output; stdout is for people.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import shutil
import sys
import tempfile
import warnings
from pathlib import Path

from . import __version__, defaults
from .exceptions import MsbError, ProbeInsideLevelSet
from .model import validate
from .noise import channel_stats
from .policy import GENERAL, ZERO
from .scenario import Scenario, bundled, load, parse
from .sim import (
    SmallSampleWarning,
    boundedness_verdict,
    drift_check,
    fourth_moment_check,
    monte_carlo_moments,
    probes_at_radii,
    synthesize_scenario,
)

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_FAIL = 0, 1, 2, 3

MOMENT_COLUMNS = ["t", "E_norm_x_sq", "se_x", "E_norm_x2_sq", "se_x2", "max_u_norm"]
DRIFT_COLUMNS = ["probe_radius", "estimate", "se", "threshold", "pass"]


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _load_checked(source) -> Scenario:
    sc = source if isinstance(source, Scenario) else load(source)
    report = validate(sc.model)
    if not report.ok:
        raise MsbError("model validation failed: " + "; ".join(report.messages))
    return sc


def feasibility_report(sc: Scenario) -> dict:
    syn = synthesize_scenario(sc.to_sim(horizon=1, trajectories=1))
    reach, params = syn.reach, syn.params
    out = {
        "policy": params.kind,
        "kappa": reach.kappa,
        "norm_R": reach.norm_R,
        "norm_R_pinv": reach.norm_R_pinv,
        "norm_R_I": reach.norm_R_I,
        "C1": syn.C1,
        "C4": syn.C4,
        "Umax": sc.Umax,
        "feasible": bool(params.feasible),
    }
    if params.kind == ZERO:
        return out
    if params.kind == GENERAL:
        cs = channel_stats(sc.channel, overrides=sc.channel_overrides)
        out.update(psi=cs.psi, sigma=cs.sigma, maxinv=cs.maxinv, mu=cs.mu.tolist())
    else:
        out["p"] = params.p
    out.update(a=params.a, r=params.r, J=params.J, drift_threshold=params.drift_threshold,
               checks={k: c.as_dict() for k, c in params.diagnostics.items()})
    return out


def _print_report(rep: dict) -> None:
    print(f"policy            {rep['policy']}")
    for key in ("kappa", "norm_R", "norm_R_pinv", "norm_R_I", "C1", "C4", "psi", "p",
                "Umax", "a", "r", "J", "drift_threshold"):
        if key in rep:
            print(f"{key:<18}{rep[key]:.6g}")
    for name, c in rep.get("checks", {}).items():
        mark = "ok " if c["holds"] else "FAIL"
        print(f"  [{mark}] {name:<24} {c['lhs']:.6g} {c['relation']} {c['rhs']:.6g}")
    print(f"feasible          {rep['feasible']}")


def cmd_check(path, as_json: bool = False) -> int:
    sc = _load_checked(path)
    rep = feasibility_report(sc)
    if as_json:
        print(json.dumps(rep, indent=2))
    else:
        _print_report(rep)
    return EXIT_OK if rep["feasible"] else EXIT_INFEASIBLE


def write_moments(path: Path, ms) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MOMENT_COLUMNS)
        for row in zip(ms.times, ms.mean_x_sq, ms.se_x, ms.mean_x2_sq, ms.se_x2, ms.max_u_norm):
            w.writerow([str(int(row[0]))] + [_fmt(v) for v in row[1:]])


def write_drift(fh, report) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(DRIFT_COLUMNS)
    for r in report.rows:
        w.writerow([_fmt(r.probe_radius), _fmt(r.estimate), _fmt(r.se), _fmt(r.threshold),
                    "true" if r.passed else "false"])


def simulate(sc: Scenario, out_dir, *, seed=None, horizon=None, trajectories=None,
             workers=None) -> tuple[int, dict]:
    """Run the Monte Carlo study and write ``moments.csv`` and ``verdict.json``.

    Files are staged in a temporary directory and moved into ``out_dir``
    only when the run completes, so a failure leaves nothing behind.
    """
    sim = sc.to_sim(seed=seed, horizon=horizon, trajectories=trajectories)
    syn = synthesize_scenario(sim)
    if not syn.params.feasible:
        return EXIT_INFEASIBLE, {"feasible": False}
    if sim.horizon < 4 * syn.kappa:
        raise MsbError(f"horizon {sim.horizon} shorter than 4 * kappa = {4 * syn.kappa}")
    ms = monte_carlo_moments(sim, syn, workers=workers)
    verdict = boundedness_verdict(ms)
    doc = {
        "feasible": bool(syn.params.feasible),
        "bounded_pass": verdict.passed,
        "zeta_hat": verdict.zeta_hat if math.isfinite(verdict.zeta_hat) else None,
        "seed": sim.master_seed,
        "scenario_sha256": sc.sha256(),
        "tool_version": __version__,
    }
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory(dir=out_dir) as tmp:
        write_moments(Path(tmp) / "moments.csv", ms)
        (Path(tmp) / "verdict.json").write_text(json.dumps(doc, indent=2) + "\n")
        for name in ("moments.csv", "verdict.json"):
            shutil.move(str(Path(tmp) / name), out_dir / name)
    doc["_verdict"] = verdict
    doc["_moments"] = ms
    return (EXIT_OK if verdict.passed else EXIT_FAIL), doc


def cmd_simulate(path, out_dir, seed=None, horizon=None, trajectories=None, workers=None) -> int:
    sc = _load_checked(path)
    code, doc = simulate(sc, out_dir, seed=seed, horizon=horizon, trajectories=trajectories,
                         workers=workers)
    if code == EXIT_INFEASIBLE:
        print("policy infeasible; run `msbound check` for diagnostics")
        return code
    v = doc["_verdict"]
    print(f"trajectories {doc['_moments'].trajectories}, seed {doc['seed']}")
    print(f"second-quarter max E||x||^2 {v.reference_max:.6g}")
    print(f"last-quarter max E||x||^2   {v.tail_max:.6g}  (ratio {v.ratio:.4f})")
    print(f"zeta_hat {v.zeta_hat:.6g}  bounded: {'PASS' if v.passed else 'FAIL'}")
    return code


def run_drift(sc: Scenario, radii=None, samples=defaults.DRIFT_SAMPLES, seed=None):
    sim = sc.to_sim(seed=seed, horizon=1, trajectories=1)
    syn = synthesize_scenario(sim)
    if not syn.params.feasible:
        return None, syn
    J = syn.params.J
    if radii is None:
        radii = [k * J for k in defaults.PROBE_MULTIPLES]
    probes = probes_at_radii(sim.master_seed, radii, sc.model.d2)
    return drift_check(sim, probes, samples, syn), syn


def cmd_drift(path, radii=None, samples=defaults.DRIFT_SAMPLES, out=None, seed=None) -> int:
    sc = _load_checked(path)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", SmallSampleWarning)
        report, _ = run_drift(sc, radii, samples, seed)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    if report is None:
        print("policy infeasible; run `msbound check` for diagnostics")
        return EXIT_INFEASIBLE
    if out:
        with open(out, "w", newline="") as fh:
            write_drift(fh, report)
    else:
        write_drift(sys.stdout, report)
    return EXIT_OK if report.passed else EXIT_FAIL


def example_document(p: float | None = None, Umax: float | None = None) -> dict:
    doc = bundled("example1")
    if p is not None:
        doc["channel"]["p"] = p
    if Umax is not None:
        doc["policy"]["Umax"] = Umax
    return doc


def cmd_example_scalar(p=None, Umax=None, out_dir=None, trajectories=None, horizon=None,
                       samples=defaults.DRIFT_SAMPLES) -> int:
    """Check, simulate and probe the bundled scalar example end to end."""
    sc = parse(example_document(p, Umax))
    rep = feasibility_report(sc)
    _print_report(rep)
    if not rep["feasible"]:
        return EXIT_INFEASIBLE
    with tempfile.TemporaryDirectory() as tmp:
        code, doc = simulate(sc, out_dir or tmp, trajectories=trajectories, horizon=horizon)
    v = doc["_verdict"]
    drift, syn = run_drift(sc, [10.0, 50.0, 500.0], samples)
    sim = sc.to_sim(horizon=1, trajectories=1)
    fm = fourth_moment_check(sim, [[0.0], [10.0], [500.0]], samples, syn)
    print()
    print(f"{'check':<28}{'value':>14}{'bound':>14}  result")
    print(f"{'E||x||^2 tail/reference':<28}{v.ratio:>14.4f}{defaults.PLATEAU_HEADROOM:>14.2f}  "
          f"{'PASS' if v.passed else 'FAIL'}")
    for r in drift.rows:
        print(f"{'drift @ ' + format(r.probe_radius, 'g'):<28}{r.estimate:>14.4f}"
              f"{r.threshold:>14.4f}  {'PASS' if r.passed else 'FAIL'}")
    print(f"{'max E|dx|^4':<28}{fm.empirical_max:>14.4f}{fm.bound:>14.4f}  "
          f"{'PASS' if fm.passed else 'FAIL'}")
    ok = v.passed and drift.passed and fm.passed
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msbound",
        description="Bounded-input stabilization over noisy control channels: "
                    "feasibility checks and Monte Carlo verification.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="evaluate feasibility of the scenario's policy")
    p.add_argument("scenario")
    p.add_argument("--json", action="store_true", help="print the report as JSON")

    p = sub.add_parser("simulate", help="Monte Carlo second moments and boundedness verdict")
    p.add_argument("scenario")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--horizon", type=int)
    p.add_argument("--trajectories", type=int)
    p.add_argument("--workers", type=int, help=f"worker threads (default ${defaults.THREADS_ENV})")

    p = sub.add_parser("drift", help="empirical kappa-step drift at probe radii")
    p.add_argument("scenario")
    p.add_argument("--probes", type=float, nargs="+", help="probe radii (default 2J 10J 100J)")
    p.add_argument("--samples", type=int, default=defaults.DRIFT_SAMPLES)
    p.add_argument("--out", help="write drift.csv here instead of stdout")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("example", help="run the bundled scalar example end to end")
    p.add_argument("--p", type=float, help="transmission probability (default 0.5)")
    p.add_argument("--umax", type=float, help="control authority (default 2)")
    p.add_argument("--out", help="keep moments.csv and verdict.json here")
    p.add_argument("--trajectories", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--samples", type=int, default=defaults.DRIFT_SAMPLES)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "check":
            return cmd_check(args.scenario, args.json)
        if args.command == "simulate":
            return cmd_simulate(args.scenario, args.out, args.seed, args.horizon,
                                args.trajectories, args.workers)
        if args.command == "drift":
            return cmd_drift(args.scenario, args.probes, args.samples, args.out, args.seed)
        return cmd_example_scalar(args.p, args.umax, args.out, args.trajectories,
                                  args.horizon, args.samples)
    except ProbeInsideLevelSet as exc:
        print(f"error: ProbeInsideLevelSet: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (MsbError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
