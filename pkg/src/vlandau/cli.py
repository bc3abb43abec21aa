"""Command-line front end: validate, solve, sweep, and report.

Subcommands
    check   — parameter gate + profile hypothesis checks
    solve   — one deterministic fixed-point solve at a given z
    uq      — collocation sweep in z with gPC projection and
              derivative-bound reports (including an N_z + 4 refinement
              pass for the stability verdicts)
    report  — aggregate manifests in a directory into one summary table

Exit codes: 0 all checks pass, 1 a checked inequality failed, 2 usage
or configuration error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

from .config import ConfigError, RunConfig, load_config
from .kernels import USING_NUMBA, set_num_threads
from .params import AdmissibilityError, check_assumptions
from .profiles import HypothesisError, check_profile
from .scattering import ConvergenceError, PARTITION_NOTE, SolveResult, \
    picard_solve
from .fields import write_field_csv
from .uq import CollocationError, check_corollary, check_theorem_bounds, \
    gauss_legendre_nodes, gpc_coefficients, run_collocation, write_gpc_csv

EXIT_PASS = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_SOLVER = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vlandau",
        description="Backward-in-time fixed-point solver for damped "
                    "electric fields with prescribed asymptotic profiles")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, metavar="PATH",
                        help="run configuration file")
        sp.add_argument("--out", metavar="DIR", default=None,
                        help="output directory (overrides the config)")
        sp.add_argument("--threads", type=int, default=None, metavar="N",
                        help="compute thread count (default: library choice)")

    sp = sub.add_parser("check", help="validate parameters and profile")
    common(sp)
    sp = sub.add_parser("solve", help="single deterministic solve")
    common(sp)
    sp.add_argument("--z", type=float, default=0.0,
                    help="parameter value in [-1, 1] (default 0)")
    sp = sub.add_parser("uq", help="collocation sweep over z")
    common(sp)
    sp.add_argument("--no-refine", action="store_true",
                    help="skip the N_z + 4 refinement pass (stability "
                         "verdicts are then not evaluated)")
    sp = sub.add_parser("report", help="summarize manifests in a directory")
    sp.add_argument("directory", help="directory containing run manifests")
    return parser


def _outdir(cfg: RunConfig, args) -> str:
    out = args.out if args.out else cfg.out_dir
    os.makedirs(out, exist_ok=True)
    return out


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _print_rows(rows) -> None:
    if not rows:
        print("(no checks)")
        return
    headers = ("source", "check", "value", "bound", "ratio", "status")
    table = [headers]
    for r in rows:
        table.append((r["source"], r["check"], "%.6g" % r["value"],
                      "%.6g" % r["bound"], "%.6g" % r["ratio"],
                      "PASS" if r["passed"] else "FAIL"))
    widths = [max(len(row[i]) for row in table) for i in range(len(headers))]
    for n, row in enumerate(table):
        print("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))
        if n == 0:
            print("  ".join("-" * w for w in widths))


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------

def cmd_check(cfg: RunConfig, args) -> int:
    out = _outdir(cfg, args)
    params = cfg.damping_params()
    spec = cfg.profile_spec()
    gate = check_assumptions(params)

    z_samples = (0.0,)
    if not spec.is_z_independent:
        nodes, _ = gauss_legendre_nodes(cfg.n_z)
        z_samples = tuple(sorted(set(float(z) for z in nodes) | {0.0}))
    profile = check_profile(spec, params.a, params.a1, params.a2, params.K,
                            z_samples=z_samples)

    print(f"admissibility gate (C_E = {params.C_E:.6g}, t0 = {params.t0:g}):")
    for cond in gate.conditions:
        mark = "PASS" if cond.passed else "FAIL"
        print(f"  {cond.name}: lhs = {cond.lhs:.6g}  rhs = {cond.rhs:.6g}  "
              f"margin = {cond.margin:.6g}  [{mark}]")
    print("profile hypotheses over z samples "
          f"{', '.join('%.4g' % z for z in z_samples)}:")
    print(f"  regularity margin  {profile.smoothness.margin:.6g}  "
          f"[{'PASS' if profile.smoothness.passed else 'FAIL'}]")
    print(f"  decay margin (f*)  {profile.decay0.margin:.6g}  "
          f"[{'PASS' if profile.decay0.passed else 'FAIL'}]")
    print(f"  decay margin (∇f*) {profile.decay1.margin:.6g}  "
          f"[{'PASS' if profile.decay1.passed else 'FAIL'}]")

    payload = {
        "config_sha256": cfg.content_hash(),
        "gate": gate.as_dict(),
        "profile": profile.as_dict(),
        "passed": gate.passed and profile.passed,
    }
    _write_json(os.path.join(out, "check_report.json"), payload)

    if not gate.passed:
        print("gate FAILED: " + ", ".join(gate.failures))
        return EXIT_CHECK_FAILED
    if not profile.passed:
        print("profile hypotheses FAILED")
        return EXIT_CHECK_FAILED
    print("all checks passed")
    return EXIT_PASS


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def _solve_rows(source: str, manifest: dict) -> list:
    rows = []
    for name, chk in sorted(manifest.get("checks", {}).items()):
        bound = chk["bound"]
        value = chk["value"]
        ratio = chk["ratio"] if chk.get("ratio") is not None else (
            value / bound if bound else math.inf)
        rows.append({"source": source, "check": name, "value": value,
                     "bound": bound, "ratio": ratio,
                     "passed": bool(chk["passed"])})
    ratios = manifest.get("contraction_ratios", [])
    if ratios:
        p = manifest["params"]
        limit = 88.0 * p["a2"] / (p["a"] ** 2 - 80.0 * p["a2"]) * 1.10
        worst = max(ratios)
        rows.append({"source": source, "check": "contraction_ratio",
                     "value": worst, "bound": limit,
                     "ratio": worst / limit if limit else math.inf,
                     "passed": worst <= limit})
    return rows


def cmd_solve(cfg: RunConfig, args) -> int:
    out = _outdir(cfg, args)
    params = cfg.damping_params()
    spec = cfg.profile_spec()
    result = picard_solve(spec, params, args.z, cfg.time_grid(),
                          cfg.phase_grid(), tol=cfg.picard_tol,
                          max_iter=cfg.max_iter, inner_tol=cfg.inner_tol,
                          max_inner=cfg.max_inner, method=cfg.method)

    manifest = result.manifest()
    manifest["config_sha256"] = cfg.content_hash()
    manifest["artifacts"] = {"field": "field.csv"}
    write_field_csv(result.field, os.path.join(out, "field.csv"),
                    metadata={"z": result.z, "method": result.method,
                              "config_sha256": cfg.content_hash(),
                              "reduction_partition": PARTITION_NOTE})
    _write_json(os.path.join(out, "solve_manifest.json"), manifest)

    print(f"converged in {result.iterations} iterations "
          f"(residual {result.residual_norm:.3e})")
    rows = _solve_rows("solve", manifest)
    _print_rows(rows)
    if result.passed:
        print("all bound checks passed")
        return EXIT_PASS
    print("bound checks FAILED")
    return EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# uq
# ---------------------------------------------------------------------------

def cmd_uq(cfg: RunConfig, args) -> int:
    out = _outdir(cfg, args)
    params = cfg.damping_params()
    spec = cfg.profile_spec()
    tgrid, phase = cfg.time_grid(), cfg.phase_grid()

    def sweep(n_z):
        return run_collocation(spec, params, tgrid, phase, n_z=n_z,
                               tol=cfg.picard_tol, max_iter=cfg.max_iter,
                               inner_tol=cfg.inner_tol,
                               max_inner=cfg.max_inner, method=cfg.method)

    ens = sweep(cfg.n_z)
    print(f"collocation sweep: {ens.n_nodes} nodes converged")
    refined = None
    if not args.no_refine and not spec.is_z_independent:
        refined = sweep(cfg.n_z + 4)
        print(f"refinement sweep: {refined.n_nodes} nodes converged")

    gpc = gpc_coefficients(ens)
    write_gpc_csv(gpc, os.path.join(out, "gpc.csv"))
    theorem = check_theorem_bounds(ens, params.K, refined=refined)
    corollary = check_corollary(ens, spec, refined=refined,
                                inner_tol=cfg.inner_tol,
                                max_inner=cfg.max_inner)

    manifest = ens.manifest()
    manifest["config_sha256"] = cfg.content_hash()
    manifest["artifacts"] = {"gpc": "gpc.csv",
                             "theorem": "theorem_report.json",
                             "corollary": "corollary_report.json"}
    manifest["gpc_mode_magnitudes"] = list(gpc.mode_magnitudes())
    manifest["gpc_decay_rate_log10"] = gpc.decay_rate()
    _write_json(os.path.join(out, "ensemble_manifest.json"), manifest)
    _write_json(os.path.join(out, "theorem_report.json"), theorem.as_dict())
    _write_json(os.path.join(out, "corollary_report.json"),
                corollary.as_dict())

    for k, norm in enumerate(theorem.norms):
        extras = []
        if k in theorem.agreement:
            extras.append(f"estimator agreement {theorem.agreement[k]:.3e}")
        if k in theorem.drift:
            extras.append(f"refinement drift {theorem.drift[k]:.3%}")
        note = ("  (" + "; ".join(extras) + ")") if extras else ""
        print(f"  |d^{k}_z E|_a,t0 = {norm:.6g}{note}")
    print(f"  residual k=0 worst node ratio = {corollary.k0_ratio:.6g}")

    nodes_pass = all(r.passed for r in ens.results)
    ok = nodes_pass and theorem.passed and corollary.passed
    print("uq checks " + ("passed" if ok else "FAILED"))
    return EXIT_PASS if ok else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def _load_manifest(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"corrupt or unreadable manifest "
                          f"'{os.path.basename(path)}': {err}") from None


def _report_rows(directory: str) -> list:
    rows = []
    for name in sorted(os.listdir(directory)):
        if not name.endswith(".json"):
            continue
        path = os.path.join(directory, name)
        manifest = _load_manifest(path)
        stem = name[:-len(".json")]
        if "checks" in manifest:
            rows.extend(_solve_rows(stem, manifest))
        if "per_node" in manifest:
            for j, node in enumerate(manifest["per_node"]):
                rows.extend(_solve_rows(f"{stem}[node {j}]", node))
        if "norms" in manifest and "drift" in manifest:   # theorem report
            for k_str, drift in manifest["drift"].items():
                rows.append({"source": stem, "check": f"z_deriv_{k_str}_drift",
                             "value": drift,
                             "bound": manifest["stability_tol"],
                             "ratio": drift / manifest["stability_tol"],
                             "passed": drift <= manifest["stability_tol"]})
        if "node_ratios" in manifest:                     # corollary report
            worst = manifest["k0_worst_ratio"]
            rows.append({"source": stem, "check": "residual_k0",
                         "value": worst, "bound": 1.0, "ratio": worst,
                         "passed": worst <= 1.0})
            for k_str, drift in manifest.get("drift", {}).items():
                rows.append({"source": stem,
                             "check": f"residual_deriv_{k_str}_drift",
                             "value": drift,
                             "bound": manifest["stability_tol"],
                             "ratio": drift / manifest["stability_tol"],
                             "passed": drift <= manifest["stability_tol"]})
    return rows


def cmd_report(args) -> int:
    directory = args.directory
    if not os.path.isdir(directory):
        raise ConfigError(f"'{directory}' is not a directory")
    rows = _report_rows(directory)
    _print_rows(rows)

    csv_path = os.path.join(directory, "report.csv")
    lines = ["source,check,value,bound,ratio,passed"]
    for r in rows:
        lines.append("%s,%s,%.17g,%.17g,%.17g,%s" % (
            r["source"], r["check"], r["value"], r["bound"], r["ratio"],
            "pass" if r["passed"] else "fail"))
    with open(csv_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")

    failures = [r for r in rows if not r["passed"]]
    if failures:
        print(f"{len(failures)} failing check(s):")
        for r in failures:
            print(f"  {r['source']}: {r['check']} = {r['value']:.6g} "
                  f"exceeds {r['bound']:.6g}")
        return EXIT_CHECK_FAILED
    return EXIT_PASS


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_err:
        return EXIT_USAGE if exit_err.code else EXIT_PASS

    try:
        if args.command == "report":
            return cmd_report(args)
        cfg = load_config(args.config)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be at least 1")
            if USING_NUMBA:
                set_num_threads(args.threads)
        if args.command == "check":
            return cmd_check(cfg, args)
        if args.command == "solve":
            return cmd_solve(cfg, args)
        if args.command == "uq":
            return cmd_uq(cfg, args)
        raise ConfigError(f"unknown command '{args.command}'")
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (AdmissibilityError, HypothesisError) as err:
        print(f"check failed: {err}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    except ConvergenceError as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return EXIT_SOLVER
    except CollocationError as err:
        print(f"ensemble failure: {err}", file=sys.stderr)
        if isinstance(err.cause, ConvergenceError):
            return EXIT_SOLVER
        return EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
