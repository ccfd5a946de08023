"""Command-line entry point: ``hiersim synthesize|plan|simulate|verify|reproduce``.

Exit codes: 0 success, 1 usage or input error, 2 synthesis infeasible or
certificate invalid, 3 no path, 4 certified bound violated.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import svgplot
from .errors import DecayTooLarge, HiersimError, NoExactEmbedding, NoPath, NotHurwitz, NotStabilizable, ScenarioError
from .planner import save_waypoints_csv
from .scenario import (
    CORRIDOR_EXPERIMENTS,
    PUBLISHED_EPS,
    Scenario,
    build_certificate,
    corridor_experiment,
    load_scenario,
    plan,
    profile_from_plan,
    run,
)
from .synthesis import RobustCertificate, verify_certificate

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_NO_PATH, EXIT_VIOLATED = 0, 1, 2, 3, 4

_HINTS = {
    NotStabilizable: "check that (A1, B1) is stabilizable or supply a stabilizing K in overrides",
    NoExactEmbedding: "the abstract output must be reproducible by the concrete system; check C2 and A2",
    DecayTooLarge: "lower overrides.lambda or use a faster gain K",
    NotHurwitz: "the supplied gain does not stabilize the concrete system",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1, allow_nan=True) + "\n", encoding="utf-8")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scenario(args) -> Scenario:
    scn = load_scenario(args.scenario)
    return scn.with_seed(args.seed) if args.seed is not None else scn


def _certificate(args, scn: Scenario) -> RobustCertificate:
    if args.cert:
        return RobustCertificate.load(args.cert)
    return build_certificate(scn, verify=False)[0]


def _eps_lines(scn: Scenario, cert: RobustCertificate) -> list[str]:
    lines = []
    for regime, eps in scn.all_eps(cert).items():
        mark = "  (active)" if regime == scn.bound_regime else ""
        lines.append(f"  eps[{regime}] = {eps:.6g}{mark}")
    return lines


# ---------------------------------------------------------------- commands

def cmd_synthesize(args) -> int:
    scn = _scenario(args)
    cert, report = build_certificate(scn)
    out = _out_dir(args)
    cert.save(out / "cert.json")
    print(f"certificate for {scn.name}: lambda={cert.lam:.6g}, lambda_max(M)={cert.lambda_max_M:.6g}, "
          f"c_input={cert.c_input:.6g}, c_dist={cert.c_dist:.6g}")
    print(report.summary())
    print("\n".join(_eps_lines(scn, cert)))
    print(f"wrote {out / 'cert.json'}")
    if not report.passed:
        print("certificate failed verification: " + ", ".join(report.failures()), file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_verify(args) -> int:
    scn = _scenario(args)
    cert = _certificate(args, scn)
    report = verify_certificate(cert, scn.sys1, scn.sys2, n_samples=scn.verify_samples, rng_seed=scn.seed, B_d=scn.B_d)
    out = _out_dir(args)
    _write_json(out / "verify.json", report.to_dict())
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_INFEASIBLE


def cmd_plan(args) -> int:
    scn = _scenario(args)
    cert = _certificate(args, scn)
    result = plan(scn, cert)
    out = _out_dir(args)
    save_waypoints_csv(result.waypoints, out / "path.csv")
    _write_json(out / "path.json", result.to_dict())
    print(f"planned {len(result.waypoints)} waypoints with clearance eps={result.eps:.6g} "
          f"({result.regime} bound); duration {result.profile.duration:.2f} s")
    return EXIT_OK


def _simulate(scn: Scenario, cert: RobustCertificate, plan_doc: dict | None, out: Path) -> dict:
    t0 = time.perf_counter()
    profile = profile_from_plan(scn, plan_doc) if plan_doc is not None else None
    result = run(scn, cert, profile)
    result.trace.to_csv(out / "trace.csv")
    report = dict(result.report)
    if scn.workspace is not None:
        wps = None if plan_doc is None else plan_doc["waypoints"]
        svgplot.save(out / "plot.svg", scn.workspace, result.trace.y1, result.trace.y2, report["eps"],
                     None if wps is None else np.asarray(wps), title=f"{scn.name}: eps={report['eps']:.4g}")
    report["runtime_s"] = time.perf_counter() - t0
    _write_json(out / "report.json", report)
    return report


def cmd_simulate(args) -> int:
    scn = _scenario(args)
    cert = _certificate(args, scn)
    plan_doc = None
    if args.path:
        plan_doc = json.loads(Path(args.path).read_text(encoding="utf-8"))
    elif scn.workspace is not None:
        plan_doc = plan(scn, cert).to_dict()
    out = _out_dir(args)
    report = _simulate(scn, cert, plan_doc, out)
    status = "ok" if report["n_violations"] == 0 else f"{report['n_violations']} violations"
    print(f"{scn.name}: eps={report['eps']:.6g} max_error={report['max_error']:.6g} "
          f"margin={report['margin']:.6g} [{status}]")
    return EXIT_OK if report["n_violations"] == 0 else EXIT_VIOLATED


def reproduce(out: Path, seed: int | None = None) -> dict:
    """Run the five corridor experiments into ``out``; returns the summary document."""
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    cert = None
    for name in CORRIDOR_EXPERIMENTS:
        scn = Scenario.from_dict(corridor_experiment(name))
        if seed is not None:
            scn = scn.with_seed(seed)
        d = out / name
        d.mkdir(exist_ok=True)
        _write_json(d / "scenario.json", scn.doc)
        if cert is None:
            cert, vrep = build_certificate(scn)
            if not vrep.passed:
                raise HiersimError("corridor certificate failed verification: " + ", ".join(vrep.failures()))
        cert.save(d / "cert.json")
        p = plan(scn, cert)
        save_waypoints_csv(p.waypoints, d / "path.csv")
        plan_doc = p.to_dict()
        _write_json(d / "path.json", plan_doc)
        report = _simulate(scn, cert, plan_doc, d)
        rows.append({
            "experiment": name,
            "disturbance": report["disturbance"],
            "regime": report["regime"],
            "eps": report["eps"],
            "published_eps": PUBLISHED_EPS[report["regime"]],
            "max_error": report["max_error"],
            "n_violations": report["n_violations"],
            "goal_reached": report["goal_reached"],
            "collision_samples": report["collision_samples"],
        })
    summary = {"experiments": rows, "c_input": cert.c_input, "c_dist": cert.c_dist,
               "lambda": cert.lam, "lambda_max_M": cert.lambda_max_M}
    _write_json(out / "summary.json", summary)
    lines = [
        "| experiment | disturbance | bound | eps | published eps | max error | violations | goal reached | collision samples |",
        "|---|---|---|---|---|---|---|---|---|",
    ]
    for r in rows:
        lines.append(
            f"| {r['experiment']} | {r['disturbance']} | {r['regime']} | {r['eps']:.4f} | {r['published_eps']:.4f} "
            f"| {r['max_error']:.4f} | {r['n_violations']} | {'yes' if r['goal_reached'] else 'no'} "
            f"| {r['collision_samples']} |"
        )
    (out / "summary.md").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return summary


def cmd_reproduce(args) -> int:
    out = Path(args.out)
    summary = reproduce(out, args.seed)
    print((out / "summary.md").read_text(encoding="utf-8"), end="")
    corrected_ok = all(r["n_violations"] == 0 and r["goal_reached"]
                       for r in summary["experiments"] if r["experiment"].endswith("corrected"))
    print(f"wrote {out}")
    return EXIT_OK if corrected_ok else EXIT_VIOLATED


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hiersim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, scenario=True, cert=False):
        if scenario:
            p.add_argument("--scenario", required=True, help="scenario JSON file or preset:<name>")
        if cert:
            p.add_argument("--cert", help="certificate JSON (synthesized on the fly if omitted)")
        p.add_argument("--out", default=".", help="output directory (default: current directory)")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")

    common(sub.add_parser("synthesize", help="build and verify a certificate"))
    common(sub.add_parser("verify", help="check a certificate against a scenario"), cert=True)
    common(sub.add_parser("plan", help="plan a path with the certified clearance"), cert=True)
    p = sub.add_parser("simulate", help="simulate the interfaced loop and check the bound")
    common(p, cert=True)
    p.add_argument("--path", help="path.json from 'plan' (planned on the fly if omitted)")
    p = sub.add_parser("reproduce", help="run the five corridor experiments")
    common(p, scenario=False)
    p.set_defaults(out="reproduce_out")
    return parser


_COMMANDS = {
    "synthesize": cmd_synthesize,
    "verify": cmd_verify,
    "plan": cmd_plan,
    "simulate": cmd_simulate,
    "reproduce": cmd_reproduce,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (NotStabilizable, NoExactEmbedding, DecayTooLarge, NotHurwitz) as exc:
        print(f"error: {exc}\nhint: {_HINTS[type(exc)]}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NoPath as exc:
        print(f"error: {exc}\nhint: reduce the disturbance, lower u_max, or increase lambda to shrink eps",
              file=sys.stderr)
        return EXIT_NO_PATH
    except (ScenarioError, HiersimError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
