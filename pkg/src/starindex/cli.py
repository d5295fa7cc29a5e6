"""Command line interface: geometry loading, verification suites and reports."""

import argparse
import configparser
import json
import sys
from importlib import resources
from pathlib import Path

from .coeffalg import CoeffAlgebra
from .errors import InconsistentRules, ParseError, SingularMetric, StarIndexError
from .starprod import GeometrySpec
from .suites import SUITES, Context, index_values, is_zero, render, run_checks

REPORT_SCHEMA = "starindex-report"
REPORT_VERSION = 1
CONFIG_ERRORS = (ParseError, InconsistentRules, SingularMetric, OSError)


# -- geometry files ---------------------------------------------------------------

def bundled_geometries():
    return sorted(p.name[:-5] for p in resources.files("starindex.geometries").iterdir()
                  if p.name.endswith(".geom"))


def _resolve(path):
    p = Path(path)
    if p.exists():
        return p.read_text(), str(path)
    if path in bundled_geometries():
        return resources.files("starindex.geometries").joinpath(path + ".geom").read_text(), path
    raise OSError("geometry file %s not found (bundled: %s)" % (path, ", ".join(bundled_geometries())))


def parse_geometry(text, source="<string>"):
    cp = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as e:
        raise ParseError(str(e))
    chart = cp["chart"] if cp.has_section("chart") else {}
    try:
        m = int(chart.get("dim", "1"))
    except ValueError:
        raise ParseError("chart dim must be an integer")
    name = chart.get("name", Path(source).stem)
    atoms = []
    if cp.has_section("atoms"):
        for aname, rule in cp["atoms"].items():
            parts = rule.split("|")
            if len(parts) != 2:
                raise ParseError("atom %s needs 'dz rules | dzb rules'" % aname)
            dz = [s.strip() for s in parts[0].split(",")]
            dzb = [s.strip() for s in parts[1].split(",")]
            atoms.append((aname, dz, dzb))
    params = []
    if cp.has_section("parameters"):
        params = [k for k in cp["parameters"]]
    rels = list(cp["relations"].values()) if cp.has_section("relations") else []
    alg = CoeffAlgebra(m, atoms=atoms, relations=rels, free_atoms=params)
    if not cp.has_section("potential"):
        raise ParseError("geometry needs a [potential] section")
    pot = {}
    for key, expr in cp["potential"].items():
        try:
            r = int(key)
        except ValueError:
            raise ParseError("potential keys are nu exponents, got %r" % key)
        pot[r] = alg.parse(expr)
    return GeometrySpec(alg, pot, name=name, source=source)


def load_geometry(path):
    text, source = _resolve(path)
    return parse_geometry(text, source)


# -- reports ----------------------------------------------------------------------------

def make_report(command, args, records, extra=None):
    summary = {s: sum(1 for r in records if r["status"] == s) for s in ("pass", "fail", "error", "skip")}
    rep = {
        "schema": REPORT_SCHEMA,
        "version": REPORT_VERSION,
        "command": command,
        "config": {"geometry": args.geometry, "nu_order": args.nu_order, "deg_max": args.deg_max,
                   "suites": list(args.suites), "seed": args.seed},
        "checks": records,
        "summary": summary,
        "status": "pass" if summary["fail"] == 0 and summary["error"] == 0 else "fail",
    }
    if extra:
        rep["values"] = extra
    return rep


def emit(rep, fmt, out):
    if fmt == "json":
        out.write(json.dumps(rep, indent=2, sort_keys=True) + "\n")
        return
    cfg = rep["config"]
    out.write("starindex %s  geometry=%s N=%s D=%s seed=%s\n" % (
        rep["command"], cfg["geometry"], cfg["nu_order"], cfg["deg_max"], cfg["seed"]))
    for r in rep["checks"]:
        line = "%-5s %-28s %s" % (r["status"].upper(), r["id"], r["topic"])
        if "wall_time" in r:
            line += "  (%.2fs)" % r["wall_time"]
        out.write(line + "\n")
        if r.get("residual"):
            out.write("      residual: %s\n" % r["residual"])
        if r.get("detail"):
            out.write("      %s\n" % r["detail"])
    for k, v in (rep.get("values") or {}).items():
        out.write("%s = %s\n" % (k, v))
    s = rep["summary"]
    out.write("%s: %d pass, %d fail, %d error, %d skip\n" % (
        rep["status"].upper(), s["pass"], s["fail"], s["error"], s["skip"]))


# -- verbs ----------------------------------------------------------------------------

def _context(args):
    geom = load_geometry(args.geometry)
    return Context(geom, N=args.nu_order, D=args.deg_max, seed=args.seed, pairs=args.pairs)


def cmd_verify(args, out):
    ctx = _context(args)
    records = run_checks(ctx, args.suites, timing=args.timing)
    rep = make_report("verify", args, records)
    emit(rep, args.report, out)
    return 0 if rep["status"] == "pass" else 1


def cmd_index(args, out):
    ctx = _context(args)
    args.suites = ["index"]
    records = run_checks(ctx, ["index"], timing=args.timing)
    values = {}
    try:
        v = index_values(ctx)
        for k in ("mu_star", "tau", "flow", "rescaled", "todd", "ahat"):
            values[k] = v[k].as_dict() if args.report == "json" else str(v[k])
    except StarIndexError as e:
        values["error"] = "%s: %s" % (type(e).__name__, e)
    rep = make_report("index", args, records, values)
    emit(rep, args.report, out)
    return 0 if rep["status"] == "pass" and "error" not in values else 1


def cmd_epsilon(args, out):
    ctx = _context(args)
    ss = ctx.ss
    K = ss.epsilon()
    kappa = ss.kappa()
    conds = dict(ss.k_conditions(K))
    conds["harmonic"] = ss.harmonic_residual(K)
    args.suites = []
    rec = [{"id": "kspace.epsilon_conditions", "topic": "epsilon conditions",
            "status": "pass" if is_zero(conds) else "fail", "residual": render(conds),
            "window": {"nu_order": ctx.N, "deg_max": ctx.D}}]
    rep = make_report("epsilon", args, rec, {"epsilon": "e^{-S} * (%s)" % K.P, "kappa": str(kappa)})
    emit(rep, args.report, out)
    return 0 if rep["status"] == "pass" else 1


def cmd_evolve(args, out):
    ctx = _context(args)
    fl = ctx.flow
    res = fl.residual()
    args.suites = []
    rec = [{"id": "flow.residual", "topic": "dF/dt = L_sigma F",
            "status": "pass" if res.is_zero() else "fail", "residual": render(res),
            "window": {"nu_order": ctx.N, "deg_max": ctx.D}}]
    rep = make_report("evolve", args, rec, {"F": "e^{K} * (%s)" % fl.P, "K": str(fl.K)})
    emit(rep, args.report, out)
    return 0 if rep["status"] == "pass" else 1


def cmd_star(args, out):
    ctx = _context(args)
    alg = ctx.alg
    f = alg.parse(args.f)
    g = alg.parse(args.g)
    prod = ctx.sp.star(f, g)
    args.suites = []
    text = " + ".join("nu^%d*(%s)" % (r, v) for r, v in sorted(prod.items())) or "0"
    rep = make_report("star", args, [], {"f*g": text})
    emit(rep, args.report, out)
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--geometry", default="cp1",
                        help="geometry file or bundled name (%s)" % ", ".join(bundled_geometries()))
    common.add_argument("--nu-order", type=int, default=3, dest="nu_order", help="nu order N of base products")
    common.add_argument("--deg-max", type=int, default=8, dest="deg_max", help="degree window D on TU + PiTU")
    common.add_argument("--report", choices=("text", "json"), default="text")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--pairs", type=int, default=20, help="random pairs per property check")
    common.add_argument("--timing", action="store_true", help="record wall time per check")
    p = argparse.ArgumentParser(prog="starindex", description="Exact star products and the algebraic index.")
    sub = p.add_subparsers(dest="verb", required=True)
    v = sub.add_parser("verify", parents=[common], help="run verification suites")
    v.add_argument("--suite", action="append", dest="suite_args",
                   help="suite name or comma list (%s); default all" % ", ".join(SUITES))
    sub.add_parser("index", parents=[common], help="both sides of the index identity")
    sub.add_parser("epsilon", parents=[common], help="the K-space unit epsilon and kappa")
    sub.add_parser("evolve", parents=[common], help="the heat flow F(t)")
    s = sub.add_parser("star", parents=[common], help="a single product f * g")
    s.add_argument("f")
    s.add_argument("g")
    return p


def _suites(raw):
    if not raw:
        return list(SUITES)
    out = []
    for item in raw:
        for s in item.split(","):
            s = s.strip()
            if s == "all":
                out.extend(x for x in SUITES if x not in out)
            elif s not in SUITES:
                raise ParseError("unknown suite %r (choose from %s)" % (s, ", ".join(SUITES)))
            elif s not in out:
                out.append(s)
    return out


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.nu_order < 0 or args.deg_max < 0:
        sys.stderr.write("starindex: --nu-order and --deg-max must be non-negative\n")
        return 2
    cmds = {"verify": cmd_verify, "index": cmd_index, "epsilon": cmd_epsilon,
            "evolve": cmd_evolve, "star": cmd_star}
    try:
        args.suites = _suites(getattr(args, "suite_args", None))
        return cmds[args.verb](args, out)
    except CONFIG_ERRORS as e:
        sys.stderr.write("starindex: configuration error: %s\n" % e)
        return 2
    except StarIndexError as e:
        sys.stderr.write("starindex: %s: %s\n" % (type(e).__name__, e))
        return 1


if __name__ == "__main__":
    sys.exit(main())
