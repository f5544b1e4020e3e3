"""Command-line orchestrator.

Every subcommand reads the experiment config (``--config``, ``--set``),
writes one artifact (JSON or CSV) to stdout or ``--out`` and exits

    0  all checks passed
    1  a check failed; the JSON names the failing items
    2  an error (bad config, bad input, solver failure), as error JSON

Artifacts contain no timings, so identical config gives identical bytes.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import acceptance
from . import geometry as geo
from . import metrics as M
from . import resolvent as R
from . import selfadjoint as SA
from . import symbol_flow as sf
from . import thresholds as th
from .config import ConfigError, dump_config, load_config


METRIC_ALIASES = {"vaidya": "vaidya_glued", "tortoise": "schwarzschild_tortoise",
                  "schwarzschild": "schwarzschild_naive"}
METRIC_KINDS = ("minkowski", "schwarzschild_naive", "schwarzschild_ef",
                "schwarzschild_tortoise", "vaidya_glued", "vaidya_outgoing",
                "symbol_perturbation")


def metric_kind(name):
    kind = METRIC_ALIASES.get(name, name)
    if kind not in METRIC_KINDS:
        raise ConfigError(f"unknown metric kind {name!r}; choose from "
                          f"{sorted(METRIC_KINDS + tuple(METRIC_ALIASES))}")
    return kind


def make_metric(mc, kind=None):
    kind = metric_kind(kind or mc.kind)
    if kind == "minkowski":
        return M.minkowski(mc.d)
    if kind == "schwarzschild_naive":
        return M.schwarzschild(mc.mass, "naive", mc.d)
    if kind == "schwarzschild_ef":
        return M.schwarzschild(mc.mass, "eddington_finkelstein", mc.d)
    if kind == "schwarzschild_tortoise":
        return M.pushforward_metric(M.schwarzschild(mc.mass, "naive", mc.d),
                                    M.tortoise_map(mc.mass, mc.F))
    if kind == "vaidya_glued":
        return M.vaidya_glued(mc.M_I, mc.mass, mc.M_F, r0=mc.r0, d=mc.d)
    if kind == "vaidya_outgoing":
        return M.vaidya_outgoing(M.MassFunction(mc.mass, mc.M_F, mc.v0, mc.v1),
                                 mc.d)
    return M.symbol_perturbation(mc.eps, mc.decay, mc.d)


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _finite(obj):
    # NaN/inf are not JSON; emit null and keep the key
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, (float, np.floating)) and not np.isfinite(obj):
        return None
    return obj


def to_json(obj):
    return json.dumps(_finite(obj), indent=1, sort_keys=True,
                      default=_jsonable, allow_nan=False) + "\n"


def _parse_floats(text, n=None, what="values"):
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"bad {what}: {text!r}") from None
    if n is not None and len(vals) != n:
        raise ConfigError(f"{what} needs {n} comma-separated numbers")
    return vals


def _artifact_path(cfg, suffix):
    if not cfg.output.dir:
        return None
    os.makedirs(cfg.output.dir, exist_ok=True)
    return os.path.join(cfg.output.dir, f"{cfg.output.prefix}_{suffix}")


# ----------------------------------------------------------------- geometry

def cmd_geometry_check(args, cfg):
    rng = np.random.default_rng(cfg.seed)
    n = args.samples
    t = rng.normal(size=n) * 10.0 ** rng.uniform(0, 8, n)
    r = np.abs(rng.normal(size=n)) * 10.0 ** rng.uniform(0, 8, n)
    b = geo.all_bdfs_tr(t, r)
    vals = np.array([b[f] for f in geo.FACES])
    comp = geo.comparability(t, r)
    failed = []
    in_range = bool(np.all((vals > 0) & (vals <= 1)))
    if not in_range:
        failed.append("bdf_range")
    comp_ok = bool(np.all(comp > 0.25) and np.all(comp <= 1 + 1e-12))
    if not comp_ok:
        failed.append("comparability")
    faces = {}
    for face in geo.FACES:
        ends = []
        for fam in geo.canonical_families(face, cfg.metric.d):
            far = geo.bdf(face, fam.point(max(geo.K_RANGE)))
            near = geo.bdf(face, fam.point(min(geo.K_RANGE)))
            ok = far < near and far < 1e-2
            if not ok:
                failed.append(f"approach:{fam.label()}")
            ends.append({"family": fam.label(), "rho_first": near,
                         "rho_last": far, "ok": bool(ok)})
        faces[face] = ends
    out = {"samples": n, "seed": cfg.seed, "bdf_in_unit_interval": in_range,
           "comparability_min": float(comp.min()),
           "comparability_max": float(comp.max()), "families": faces}
    return out, failed


# ------------------------------------------------------------------ metrics

def cmd_metric_decay(args, cfg):
    kind = metric_kind(args.metric or cfg.metric.kind)
    g = make_metric(cfg.metric, kind)
    fams = acceptance.tortoise_families() if kind == "schwarzschild_tortoise" \
        else None
    faces = geo.FACES if args.face == "all" else (args.face,)
    for f in faces:
        geo.check_face(f)
    pent = M.pentuple(g, fams, cfg.metric.d)
    fits = [fit for f in faces for fit in pent[f]]
    failed = [] if fits else [f"no_usable_fits:{','.join(faces)}"]
    return M.fits_to_csv(fits), failed


# --------------------------------------------------------------------- flow

def cmd_flow_trace(args, cfg):
    rc = cfg.ray
    g = make_metric(cfg.metric)
    z = geo.SpacetimePoint(rc.t, (rc.r,))
    P = sf.null_covector(g, z, rc.direction, rc.sheet)
    tr = sf.integrate_bichar(g, P, rc.msq, sf.FlowOptions(
        max_length=rc.max_length))
    end = tr.bdfs()
    failed = [] if end[rc.face] < 0.05 else [f"endpoint_not_at:{rc.face}"]
    summary = {"reason": tr.reason, "length": tr.length,
               "end_bdfs": end, "target_face": rc.face}
    print(to_json(summary), file=sys.stderr, end="")
    return tr.to_csv(), failed


def cmd_flow_radial_sets(args, cfg):
    sets = sf.find_radial_sets(msq=args.msq, d=cfg.metric.d,
                               fd_step=args.fd_step)
    return {"msq": args.msq, "count": len(sets),
            "sets": [r.as_dict() for r in sets]}, []


def cmd_flow_order(args, cfg):
    sets = [r for r in sf.find_radial_sets(msq=args.msq) if r.family != "R"]
    graph = sf.connection_graph()
    order = sf.propagation_order(sets, graph, args.direction, args.sheet)
    return {"direction": args.direction, "sheet": args.sheet,
            "order": order}, []


# --------------------------------------------------------------- thresholds

def _order_from_args(args):
    s = _parse_floats(args.s, 5, "--s")
    return th.OrderTuple(args.m, s)


def cmd_thresholds_check(args, cfg):
    o = _order_from_args(args)
    sl = th.slacks(o, args.case)
    failed = [k for k, v in sl.items() if not v > 0]
    return {"case": args.case, "order": o.as_dict(), "slacks": sl,
            "min_slack": min(sl.values()), "feasible": not failed}, failed


def cmd_thresholds_solve(args, cfg):
    cases = tuple(c.strip() for c in args.cases.split(","))
    res = th.solve_lp(cases, bounds=cfg.thresholds.bounds)
    out = {"cases": list(cases), "bounds": cfg.thresholds.bounds,
           **res.as_dict()}
    failed = []
    if not res.feasible:
        resid, const = th.verify_certificate(res.certificate, cases)
        out["certificate_check"] = {"residual": resid,
                                    "combined_constant": const}
        if not (resid < 1e-8 and const <= 0):
            failed.append("certificate")
    return out, failed


def cmd_thresholds_family(args, cfg):
    variant = args.variant or cfg.thresholds.variant
    Ns = (args.n,) if args.n is not None else cfg.thresholds.N
    rows, failed = [], []
    for N in Ns:
        o = th.family(N, variant)
        case = "case1" if variant == "future_weighted" else "case2"
        sl = th.slacks(o, case)
        ms = min(sl.values())
        if not ms > 0:
            failed.append(f"family:N={N:g}")
        rows.append({"N": N, "variant": variant, "case": case,
                     "order": o.as_dict(), "tuple": [o.m, *o.s],
                     "slacks": sl, "min_slack": ms})
    return (rows[0] if len(rows) == 1 else {"families": rows}), failed


def cmd_thresholds_variable(args, cfg):
    variant = args.variant or cfg.thresholds.variant
    plus = th.family(args.n, variant)
    minus = th.mirror(plus) if args.mirror else plus
    res = th.check_variable_order(th.constant_assignment(plus, minus),
                                  args.im_sign)
    failed = sorted(k for k, v in res.items() if not v["pass"])
    return {"N": args.n, "variant": variant, "mirror_on_minus": args.mirror,
            "im_sign": args.im_sign, "sets": res}, failed


# ---------------------------------------------------------------- resolvent

def _seminorm_csv(table):
    lines = ["N,alpha,value"]
    for row in table:
        lines.append(f"{row['N']},{row['alpha']},{row['value']:.10e}")
    return "\n".join(lines) + "\n"


def cmd_resolvent_free(args, cfg):
    gc = cfg.grid
    lam = cfg.lambda_.value
    spec = R.GridSpec(T=gc.fourier_T, X=gc.fourier_T, n_t=gc.fourier_n,
                      n_x=gc.fourier_n)
    f = R.gaussian_source(spec, width=gc.fourier_width)
    u = R.free_resolvent(f, lam, convention="P")
    resid = R.symbol_residual(u, f, lam, convention="P")
    trip = R.round_trip_error(f, lam, convention="P")
    bound = f.norm() / abs(lam.imag)
    table = R.seminorm_table(u)
    out = {"lambda": [lam.real, lam.imag], "convention": "(P + lam) u = f",
           "grid": [gc.fourier_n, gc.fourier_n], "T": gc.fourier_T,
           "symbol_residual": resid, "round_trip_error": trip,
           "norm_u": u.norm(), "norm_f": f.norm(), "bound": bound,
           "bound_holds": bool(u.norm() <= bound * (1 + 1e-12)),
           "seminorms": table}
    path = _artifact_path(cfg, "free")
    if path:
        u.save(path)
        with open(path + "_seminorms.csv", "w") as fh:
            fh.write(_seminorm_csv(table))
    failed = []
    if not out["bound_holds"]:
        failed.append("resolvent_bound")
    if not trip < 1e-12:
        failed.append("round_trip")
    return out, failed


def cmd_resolvent_curved(args, cfg):
    gc = cfg.grid
    lam = cfg.lambda_.value
    g = make_metric(cfg.metric)
    spec = R.GridSpec.from_spacing(gc.h, gc.extent, boundary="dirichlet")
    a = R.VectorFieldTerm(gc.a_amplitude) if gc.a_amplitude else None
    op = R.build_discrete_operator(g, gc.msq, a, spec)
    f = R.gaussian_source(spec, width=gc.source_width)
    u, rep = R.curved_resolvent(op, f, lam, report=True)
    slope, rms = R.edge_decay_slope(u)
    out = {"lambda": [lam.real, lam.imag], "convention": "(P + lam) u = f",
           "metric": metric_kind(cfg.metric.kind), "h": gc.h,
           "extent": gc.extent, "residual": rep.residual,
           "iterations": rep.iterations, "norm_u": rep.norm_u,
           "norm_f": rep.norm_f, "bound": rep.bound,
           "bound_holds": bool(rep.bound_ok), "edge_decay_slope": slope,
           "edge_rms": rms}
    path = _artifact_path(cfg, "curved")
    if path:
        u.save(path)
    failed = [] if rep.bound_ok else ["resolvent_bound"]
    return out, failed


# ------------------------------------------------------------- selfadjoint

def cmd_selfadjoint_check(args, cfg):
    gc = cfg.grid
    g = make_metric(cfg.metric)
    spec = R.GridSpec.from_spacing(args.h or gc.h, gc.extent,
                                   boundary="dirichlet")
    a = R.VectorFieldTerm(gc.a_amplitude) if gc.a_amplitude else None
    op = R.build_discrete_operator(g, gc.msq, a, spec)
    if args.broken:
        op = SA.broken_operator(op)
    rep = SA.deficiency_check(op)
    out = rep.as_dict()
    out["metric"] = metric_kind(cfg.metric.kind)
    out["broken"] = bool(args.broken)
    return out, ([] if rep.passed else ["deficiency"])


# ------------------------------------------------------------------- report

def cmd_report(args, cfg):
    numbers = None
    if args.only:
        numbers = [int(v) for v in args.only.split(",") if v.strip()]
        bad = [n for n in numbers if not 1 <= n <= len(acceptance.CRITERIA)]
        if bad:
            raise ConfigError(f"no such criteria: {bad}")
    results = acceptance.run_all(cfg, numbers)
    for c in results:
        print(f"{c.line()}  ({c.seconds:.1f} s)", file=sys.stderr)
    failed = [f"criterion {c.number}: {c.name}" for c in results
              if not c.passed]
    return {"verdict": "FAIL" if failed else "PASS",
            "criteria": [c.as_dict() for c in results],
            "config": cfg.as_dict()}, failed


def cmd_config_show(args, cfg):
    return dump_config(cfg), []


# ------------------------------------------------------------------- parser

def _common(prefix=""):
    # the leaf copies use their own dests so options given before the
    # subcommand are not overwritten by the leaf's defaults
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="FILE", dest=prefix + "config",
                   help="INI-style experiment config; defaults are the "
                        "acceptance configuration")
    p.add_argument("--set", action="append", default=[], metavar="S.K=V",
                   dest=prefix + "overrides",
                   help="override one config key (repeatable)")
    p.add_argument("--out", metavar="PATH", dest=prefix + "out",
                   help="write the artifact here instead of stdout")
    return p


def build_parser():
    parser = argparse.ArgumentParser(
        prog="desclab", description=__doc__.split("\n\n")[0],
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__.split("\n\n", 1)[1], parents=[_common()])
    common = _common("leaf_")
    sub = parser.add_subparsers(dest="group", required=True)

    def group(name, help):
        p = sub.add_parser(name, help=help)
        return p.add_subparsers(dest="action", required=True)

    def leaf(subs, name, fn, help):
        p = subs.add_parser(name, help=help, parents=[common])
        p.set_defaults(fn=fn)
        return p

    g = group("geometry", "boundary defining functions")
    p = leaf(g, "check", cmd_geometry_check,
             "range, comparability and face-approach checks (JSON)")
    p.add_argument("--samples", type=int, default=2000)

    g = group("metric", "metric families and decay fits")
    p = leaf(g, "decay", cmd_metric_decay, "decay exponents per face (CSV)")
    p.add_argument("--metric", help="metric kind (default: config); "
                                    "aliases: " + ", ".join(METRIC_ALIASES))
    p.add_argument("--face", default="all",
                   help="one of Pf, nPf, Sf, nFf, Ff, or all")

    g = group("flow", "bicharacteristic flow")
    leaf(g, "trace", cmd_flow_trace, "integrate the ray from the config (CSV)")
    p = leaf(g, "radial-sets", cmd_flow_radial_sets,
             "fixed-point census of the boundary flow (JSON)")
    p.add_argument("--msq", type=float, default=1.0)
    p.add_argument("--fd-step", type=float, default=1e-5)
    p = leaf(g, "order", cmd_flow_order,
             "propagation order of the radial sets (JSON)")
    p.add_argument("--msq", type=float, default=1.0)
    p.add_argument("--direction", default="with_flow",
                   choices=("with_flow", "against_flow"))
    p.add_argument("--sheet", default="+", choices=("+", "-"))

    g = group("thresholds", "decay-order threshold inequalities")
    p = leaf(g, "check", cmd_thresholds_check,
             "named slacks of one order tuple (JSON)")
    p.add_argument("--m", type=float, required=True)
    p.add_argument("--s", required=True,
                   help="five orders at Pf,nPf,Sf,nFf,Ff, comma-separated")
    p.add_argument("--case", default="case1", choices=("case1", "case2"))
    p = leaf(g, "solve", cmd_thresholds_solve,
             "max-min-slack LP or infeasibility certificate (JSON)")
    p.add_argument("--cases", default="case1",
                   help="comma-separated, e.g. case1,case2")
    p = leaf(g, "family", cmd_thresholds_family,
             "explicit order family (JSON)")
    p.add_argument("--n", type=float, help="default: every N in the config")
    p.add_argument("--variant",
                   choices=("future_weighted", "past_weighted"))
    p = leaf(g, "variable", cmd_thresholds_variable,
             "per-radial-set inequalities for a constant assignment (JSON)")
    p.add_argument("--n", type=float, default=2.0)
    p.add_argument("--variant",
                   choices=("future_weighted", "past_weighted"))
    p.add_argument("--im-sign", type=int, default=1, choices=(1, -1))
    p.add_argument("--mirror", action="store_true",
                   help="use the time-reflected tuple on sheet -")

    g = group("resolvent", "resolvent solves (convention (P + lam) u = f)")
    leaf(g, "free", cmd_resolvent_free,
         "Fourier solve on the periodic box (JSON; fields with output.dir)")
    leaf(g, "curved", cmd_resolvent_curved,
         "sparse Dirichlet solve for the config metric (JSON)")

    g = group("selfadjoint", "discrete deficiency diagnostics")
    p = leaf(g, "check", cmd_selfadjoint_check,
             "sigma_min(P_h -+ i) and symmetry defects (JSON)")
    p.add_argument("--h", type=float, help="grid spacing (default grid.h)")
    p.add_argument("--broken", action="store_true",
                   help="add the unsymmetrized negative-control term")

    p = sub.add_parser("report", parents=[common],
                       help="run the acceptance suite (JSON summary)")
    p.add_argument("--only", help="comma-separated criterion numbers")
    p.set_defaults(fn=cmd_report)

    g = group("config", "configuration")
    leaf(g, "show", cmd_config_show, "print the effective config")
    return parser


def _emit(text, path):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    args.config = args.leaf_config or args.config
    args.out = args.leaf_out or args.out
    args.overrides = args.overrides + args.leaf_overrides
    t0 = time.perf_counter()
    try:
        cfg = load_config(args.config, args.overrides)
        payload, failed = args.fn(args, cfg)
    except Exception as exc:
        err = {"status": "error", "error": type(exc).__name__,
               "message": str(exc)}
        _emit(to_json(err), args.out)
        return 2
    if isinstance(payload, dict):
        payload = {**payload, "status": "FAIL" if failed else "PASS",
                   "failed": failed}
    text = payload if isinstance(payload, str) else to_json(payload)
    _emit(text, args.out)
    print(f"done in {time.perf_counter() - t0:.1f} s", file=sys.stderr)
    if failed:
        print(to_json({"status": "FAIL", "failed": failed}), file=sys.stderr,
              end="")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
