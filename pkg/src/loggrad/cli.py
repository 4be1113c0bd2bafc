"""Command line runner: ``loggrad run --config exp.toml --out results/``.

Exit codes: 0 all checks pass, 1 a check was violated (or a calibration
was infeasible), 2 config error, 3 solution build failure, 4 I/O error.

Per-node CSV columns (``[outputs] csv = true``): x1..xn, t, lhs, rhs, region.
``cutoff-check`` CSV columns: r, psi, d1, d2, ratio.
"""

import argparse
import csv
import datetime
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__, _kernels, cutoff, fieldio, samplers
from . import estimate as est
from . import source as src
from . import verify as ver
from .analytic import analytic_solution
from .config import SCHEMA, ConfigError, build_metric, config_hash, load_config
from .domain import DomainSpec
from .solver import pde_residual, solve_parabolic

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_BUILD, EXIT_IO = 0, 1, 2, 3, 4


class BuildError(RuntimeError):
    pass


def clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def dump_json(obj, path):
    with open(path, "w") as fh:
        fh.write(json.dumps(clean(obj), sort_keys=True, indent=2) + "\n")


# ---------------------------------------------------------------------------
# building fields


def build_field(sol, cfg, h_scale=1.0):
    metric = build_metric(cfg["metric"])
    dom = DomainSpec.from_dict(sol["domain"])
    h, dt = sol["h"] * h_scale, sol["dt"] * h_scale
    source = src.SourceSpec.from_dict(cfg["source"])
    try:
        if sol["kind"] == "analytic":
            return analytic_solution(sol["analytic"], dom, metric, h=h, dt=dt, M=sol["M"],
                                     radial=sol["radial"], label=sol["id"], **sol["params"])
        ini, _ = samplers.make_sampler(sol["initial"]["id"], dom, **sol["initial"]["params"])
        _, bnd = samplers.make_sampler(sol["boundary"]["id"], dom, **sol["boundary"]["params"])
        return solve_parabolic(dom, metric, source, ini, bnd, scheme=sol["scheme"], h=h, dt=dt,
                               M=sol["M"], radial=sol["radial"] or None, label=sol["id"])
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        raise BuildError(f"solution {sol['id']!r}: {exc}") from exc


def build_fields(cfg, loaded=None):
    loaded = loaded or {}
    return {s["id"]: loaded.get(s["id"]) or build_field(s, cfg) for s in cfg["solutions"]}


# ---------------------------------------------------------------------------
# checks


def _make_check(fld, cfg, estimate_id, params, subregion=None, traces_mode=None, mu_method="auto"):
    source = src.SourceSpec.from_dict(cfg["source"])
    traces = None
    if traces_mode:
        traces = est.boundary_traces(fld, traces_mode["tau"] == "known",
                                     traces_mode["sigma"] == "known")
    return ver.EstimateCheck(fld, estimate_id, params, source, subregion, traces=traces,
                             mu_method=mu_method)


def _node_rows(chk, C):
    rhs = chk.rhs(C)
    for i in range(chk.lhs.size):
        x, t = chk.node(i)
        yield [*map(float, x), t, float(chk.lhs[i]), float(rhs[i]),
               est.REGION_NAMES[int(chk.codes[i])]]


def run_check(check, fields, cfg):
    """Returns (payload dict, passed, list of (check, C) for CSV output)."""
    kind = check["type"]
    if kind == "check":
        checks = [_make_check(fields[f], cfg, check["estimate"], check["params"],
                              check["subregion"], check["traces"], check["mu_method"])
                  for f in check["fields"]]
        payload = {"check": check}
        if check["C"] == "calibrate":
            cal = ver.calibrate_C(checks, check["tolerance"])
            payload["calibration"] = cal.to_dict()
            if not cal.feasible:
                payload["reports"] = []
                return payload, False, []
            C = cal.C_star
            payload["bracket"] = {
                "C_below": C * (1 - 2 * check["tolerance"]),
                "violated_below": not ver._passes(checks, C * (1 - 2 * check["tolerance"]))}
        else:
            C = check["C"]
        reps = [c.report(C) for c in checks]
        payload["reports"] = [r.to_dict() for r in reps]
        passed = all(r.passed for r in reps)
        return payload, passed, [(c, C) for c in checks]
    if kind == "lemma":
        source = src.SourceSpec.from_dict(cfg["source"])
        rows = []
        for f in check["fields"]:
            fld = fields[f]
            an = src.analyze(source, fld.domain, fld.metric, fld.M, fld.inside_min())
            res = ver.lemma_pi_residual(fld, an, check["collar"], check["tol_constant"])
            rows.append({"field_id": f, **res.to_dict()})
        return {"check": check, "residuals": rows}, all(r["passed"] for r in rows), []
    # compare
    tables = []
    for f in check["fields"]:
        fld = fields[f]
        entries = []
        cstars = {}
        for e in check["entries"]:
            C = e["C"]
            if C == "calibrate":
                chk = _make_check(fld, cfg, e["estimate"], e["params"], "half")
                cal = ver.calibrate_C([chk])
                if not cal.feasible:
                    raise ver.CheckError(f"{e['estimate']} is infeasible on {f}")
                C = cal.C_star
                cstars[e["estimate"]] = C
            entries.append([e["estimate"], e["params"], C])
        if check["shared_C"] and cstars:
            shared = max(cstars.values())
            for row in entries:
                if row[0] in cstars:
                    row[2] = shared
        comps = ver.compare_bounds(fld, [tuple(r) for r in entries],
                                   src.SourceSpec.from_dict(cfg["source"]), check["subregions"])
        tables.append({"field_id": f, "calibrated_C": cstars,
                       "tables": [c.to_dict() for c in comps]})
    return {"check": check, "comparisons": tables}, True, []


def _check_name(i, check):
    tag = check.get("estimate") or check["type"]
    return f"check-{i + 1:02d}-{tag}"


def field_summary(fld):
    return {"id": fld.label, "M": fld.M, "m": fld.inside_min(), "h": fld.h, "dt": fld.dt,
            "provenance": fld.provenance, "levels": int(fld.t.size),
            "inside_nodes": int(fld.inside.sum())}


def refinement_study(cfg, levels):
    """pde residual (and the w-inequality residual on analytic fields) under dyadic refinement."""
    source = src.SourceSpec.from_dict(cfg["source"])
    out = []
    for sol in cfg["solutions"]:
        rows = []
        for j in range(levels + 1):
            fld = build_field(sol, cfg, 0.5 ** j)
            row = {"h": fld.h, "dt": fld.dt, "pde_residual": pde_residual(fld, source)}
            if fld.closed is not None:
                an = src.analyze(source, fld.domain, fld.metric, fld.M, fld.inside_min())
                row["lemma_min_residual"] = ver.lemma_pi_residual(fld, an).min_residual
            rows.append(row)
        for a, b in zip(rows, rows[1:]):
            r0, r1 = a["pde_residual"], b["pde_residual"]
            b["pde_order"] = math.log2(r0 / r1) if r0 > 0 and r1 > 0 else None
        out.append({"id": sol["id"], "levels": rows})
    return out


# ---------------------------------------------------------------------------
# commands


def _load_cfg(args):
    try:
        return load_config(args.config)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_IO)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _fields(cfg, args):
    loaded = {}
    try:
        for path in getattr(args, "field", None) or []:
            fld = fieldio.load_field(path)
            loaded[fld.label] = fld
    except (OSError, ValueError) as exc:
        print(f"error: cannot load field: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_IO)
    try:
        return build_fields(cfg, loaded)
    except BuildError as exc:
        print(f"build failure: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_BUILD)


def _select(cfg, command):
    out = []
    for i, c in enumerate(cfg["checks"]):
        if command == "run":
            out.append((i, c))
        elif command == "verify" and (c["type"] == "lemma"
                                      or (c["type"] == "check" and c["C"] != "calibrate")):
            out.append((i, c))
        elif command == "calibrate" and c["type"] == "check" and c["C"] == "calibrate":
            out.append((i, c))
        elif command == "compare" and c["type"] == "compare":
            out.append((i, c))
    return out


def execute(args, command):
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    clock = time.perf_counter()
    if args.threads:
        _kernels.set_threads(args.threads)
    cfg = _load_cfg(args)
    fields = _fields(cfg, args)
    try:
        os.makedirs(args.out, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create {args.out}: {exc}", file=sys.stderr)
        return EXIT_IO

    results = []
    status = EXIT_OK
    try:
        if cfg["outputs"]["fields"] or command == "solve":
            os.makedirs(os.path.join(args.out, "fields"), exist_ok=True)
            for fid, fld in fields.items():
                fieldio.save_field(fld, os.path.join(args.out, "fields", f"{fid}.field"))
        for i, check in _select(cfg, command):
            name = _check_name(i, check)
            try:
                payload, passed, csv_items = run_check(check, fields, cfg)
            except (ValueError, ArithmeticError) as exc:
                payload, passed, csv_items = {"check": check, "error": str(exc)}, False, []
            payload.update(schema=SCHEMA, passed=passed)
            dump_json(payload, os.path.join(args.out, name + ".json"))
            if cfg["outputs"]["csv"]:
                for chk, C in csv_items:
                    path = os.path.join(args.out, f"{name}-{chk.fld.label}.csv")
                    with open(path, "w", newline="") as fh:
                        wr = csv.writer(fh)
                        wr.writerow([f"x{k + 1}" for k in range(len(chk.fld.axes))]
                                    + ["t", "lhs", "rhs", "region"])
                        wr.writerows(_node_rows(chk, C))
            summary_row = {"name": name, "type": check["type"], "passed": passed}
            if "calibration" in payload:
                summary_row["C_star"] = payload["calibration"]["C_star"]
            if "error" in payload:
                summary_row["error"] = payload["error"]
            results.append(summary_row)
            if not passed:
                status = EXIT_VIOLATION
        refinement = None
        if args.refine:
            try:
                refinement = refinement_study(cfg, args.refine)
            except BuildError as exc:
                print(f"build failure: {exc}", file=sys.stderr)
                return EXIT_BUILD
            dump_json({"schema": SCHEMA, "study": refinement},
                      os.path.join(args.out, "refinement.json"))
        summary = {"schema": SCHEMA, "command": command, "config": cfg,
                   "config_hash": config_hash(cfg), "checks": results,
                   "fields": [field_summary(f) for f in fields.values()], "status": status}
        dump_json(summary, os.path.join(args.out, "summary.json"))
        meta = {"started": started,
                "finished": datetime.datetime.now(datetime.timezone.utc).isoformat(),
                "seconds": time.perf_counter() - clock, "backend": _kernels.backend(),
                "version": __version__}
        dump_json(meta, os.path.join(args.out, "summary.meta.json"))
    except OSError as exc:
        print(f"error: writing results: {exc}", file=sys.stderr)
        return EXIT_IO
    for row in results:
        line = f"{row['name']}: {'pass' if row['passed'] else 'FAIL'}"
        if "C_star" in row:
            line += f"  C*={row['C_star']}"
        print(line)
    return status


def cutoff_check(args):
    try:
        p = cutoff.CutoffParams(args.a, args.R, args.rho, args.t0, args.T, args.delta)
    except cutoff.CutoffError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    consts = cutoff.measure_cutoff_constants(p, args.points)
    r = np.linspace(0.0, p.R + 0.25 * p.rho, args.points + 1)
    f0, f1, f2 = cutoff.psi_bar_derivs(r, p)
    ratio, _ = cutoff.space_ratio(r, p)
    try:
        fh = open(args.out, "w", newline="") if args.out else sys.stdout
        wr = csv.writer(fh)
        wr.writerow(["r", "psi", "d1", "d2", "ratio"])
        for row in zip(r, f0, f1, f2, ratio):
            wr.writerow([repr(float(v)) for v in row])
        if args.out:
            fh.close()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"C_space={consts.C_space!r} C_time={consts.C_time!r} "
          f"C_space_power={consts.C_space_power!r} C_space_bridge={consts.C_space_bridge!r} "
          f"power_bound={cutoff.power_piece_bound(p.a)!r}",
          file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


def make_parser():
    parser = argparse.ArgumentParser(
        prog="loggrad", description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "build solutions and run every check"),
                        ("solve", "build solutions and save them under OUT/fields"),
                        ("verify", "run checks with a fixed C and residual checks"),
                        ("calibrate", "run the calibrating checks only"),
                        ("compare", "run the bound comparisons only")):
        p = sub.add_parser(name, help=help_, description=__doc__,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", required=True, help="TOML config (or a JSON run summary)")
        p.add_argument("--out", default="loggrad-out", help="output directory")
        p.add_argument("--threads", type=int, default=0, help="numba thread count")
        p.add_argument("--refine", type=int, default=0, metavar="N",
                       help="also run a refinement study over N successive halvings of h")
        p.add_argument("--field", action="append",
                       help="use a saved field file instead of building the solution with its id")
    p = sub.add_parser("cutoff-check", help="tabulate the spatial cut-off and its constants")
    p.add_argument("--a", type=float, default=0.5)
    p.add_argument("--R", type=float, default=2.0)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--points", type=int, default=1000)
    p.add_argument("--out", default=None, help="CSV path (default stdout)")
    p.add_argument("--threads", type=int, default=0)
    return parser


def main(argv=None):
    args = make_parser().parse_args(argv)
    if args.command == "cutoff-check":
        return cutoff_check(args)
    try:
        return execute(args, args.command)
    except SystemExit as exc:
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
