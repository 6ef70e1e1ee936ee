"""Command-line entry point: every operation as a subcommand with JSON/CSV
output, a run manifest next to each run, and a `verify` identity suite."""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .measures import (measure_from_json, cauchy_transform, MeasureError,
                       NotDensityBounded)
from .convolve import (free_convolve, quantized_convolve,
                       markov_krein_forward, markov_krein_inverse)
from .edge import (EdgeModel, find_critical_point, edge_constants, tau,
                   tau_q, level_set_grid)
from .symfuncs import (ssym_lift_det, ssym_lift_matrix_form,
                       ssym_lift_contour_k1)
from .moments import MomentRequest, moment_additive, moment_tensor, \
    airy_laplace
from .simulate import ExperimentConfig, edge_experiment


def _fmt(x):
    return float("%.9g" % float(x))


def _load_measure(path):
    with open(path) as fh:
        return measure_from_json(fh.read())


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _write_manifest(args, outdir, started):
    man = {
        "schema": 1,
        "subcommand": args.command,
        "config": args.model or args.measure,
        "output_dir": outdir,
        "seed": args.seed,
        "version": __version__,
        "wall_time_s": _fmt(time.time() - started),
    }
    with open(os.path.join(outdir, "manifest.json"), "w") as fh:
        json.dump(man, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _emit(args, name, text):
    outdir = args.out or "."
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, name), "w") as fh:
        fh.write(text)


def _density_csv(m, n=512):
    if hasattr(m, "locations"):
        rows = ["x,weight"]
        for x, w in zip(m.locations, m.weights):
            rows.append("%.9g,%.9g" % (x, w))
        return "\n".join(rows) + "\n"
    lo, hi = m.support
    xs = np.linspace(lo, hi, n)
    rows = ["x,density"]
    for x in xs:
        try:
            d = m.density(x)
        except MeasureError:
            d = float("nan")
        rows.append("%.9g,%.9g" % (x, d))
    return "\n".join(rows) + "\n"


def _cmd_transform(args):
    m = _load_measure(args.measure)
    lo, hi = m.support
    span = max(hi - lo, 1.0)
    xs = np.linspace(lo - span, hi + span, 257)
    rows = ["x,y,re_G,im_G"]
    for x in xs:
        z = complex(x, 0.05 * span)
        g = cauchy_transform(m, z)
        rows.append("%.9g,%.9g,%.9g,%.9g" % (x, z.imag, g.real, g.imag))
    _emit(args, "transform.csv", "\n".join(rows) + "\n")
    print(json.dumps({"schema": 1, "support": [_fmt(lo), _fmt(hi)]}))
    return 0


def _two_measures(args):
    paths = args.measure.split(",")
    if len(paths) != 2:
        raise ValueError("need two comma-separated measure paths")
    return _load_measure(paths[0]), _load_measure(paths[1])


def _cmd_convolve(args):
    m1, m2 = _two_measures(args)
    out = free_convolve(m1, m2)
    _emit(args, "convolve.csv", out.to_csv())
    lo, hi = out.support
    print(json.dumps({"schema": 1, "support": [_fmt(lo), _fmt(hi)],
                      "mass_defect": _fmt(out.mass_defect)}))
    return 0


def _cmd_quantized_convolve(args):
    m1, m2 = _two_measures(args)
    out = quantized_convolve(m1, m2)
    _emit(args, "quantized_convolve.csv", _density_csv(out))
    lo, hi = out.support
    print(json.dumps({"schema": 1, "support": [_fmt(lo), _fmt(hi)]}))
    return 0


def _cmd_mk(args):
    m = _load_measure(args.measure)
    fwd = args.direction == "forward"
    out = markov_krein_forward(m) if fwd else markov_krein_inverse(m)
    _emit(args, "mk.csv", _density_csv(out))
    lo, hi = out.support
    print(json.dumps({"schema": 1, "direction": args.direction,
                      "support": [_fmt(lo), _fmt(hi)]}))
    return 0


def _edge_model(args):
    if args.model:
        cfg = _load_json(args.model)
        measures = [measure_from_json(json.dumps(mm))
                    for mm in cfg["measures"]]
        mults = cfg.get("multiplicities", [1] * len(measures))
        kind = cfg.get("kind", "additive")
    else:
        measures = [_load_measure(args.measure)]
        mults = [args.n]
        kind = "additive"
    return EdgeModel(measures, mults, kind, args.N or 1)


def _cmd_edge(args):
    model = _edge_model(args)
    report = find_critical_point(model)
    E, V = edge_constants(report, args.N or 1)
    print(json.dumps({"schema": 1, "z": _fmt(report.z_crit), "E": _fmt(E),
                      "V": _fmt(V), "found": report.found}))
    return 0


def _cmd_tau(args):
    print("%.9g" % tau(_load_measure(args.measure)))
    return 0


def _cmd_tauq(args):
    print("%.9g" % tau_q(_load_measure(args.measure)))
    return 0


def _cmd_levelset(args):
    m = _load_measure(args.measure)
    cfg = _load_json(args.model) if args.model else {}
    u = cfg.get("u", 0.5)
    region = tuple(cfg.get("region", (-3.0, 3.0, -3.0, 3.0)))
    res = tuple(cfg.get("resolution", (81, 81)))
    grid = level_set_grid(m, u, region, res)
    _emit(args, "levelset.csv", grid.to_csv())
    print(json.dumps({"schema": 1, "region": list(region),
                      "resolution": list(res)}))
    return 0


def _cmd_lift(args):
    cfg = _load_json(args.model)
    l = cfg["l"]
    p = complex(*cfg["p"]) if isinstance(cfg["p"], list) else cfg["p"]
    u = [complex(*x) if isinstance(x, list) else x for x in cfg["u"]]
    v = [complex(*x) if isinstance(x, list) else x for x in cfg["v"]]
    form = cfg.get("form", "det")
    if form == "det":
        zero = np.zeros(len(l))
        val = ssym_lift_det(l, p, np.concatenate([u, zero]), v) \
            / ssym_lift_det(l, p, zero, [])
    elif form == "matrix":
        val = complex(ssym_lift_matrix_form(l, p, u, v, cfg["xi"]))
    elif form == "contour":
        val = ssym_lift_contour_k1(l, p, u[0], v[0])
    else:
        raise ValueError("form must be det, matrix, or contour")
    print(json.dumps({"schema": 1,
                      "lift": [_fmt(val.real), _fmt(val.imag)]}))
    return 0


def _cmd_moment(args):
    cfg = _load_json(args.model)
    c = [float(x) for x in args.c.split(",")] if args.c else cfg["c"]
    req = MomentRequest((cfg["kind"], cfg["factors"]), c,
                        args.N or cfg["N"])
    if cfg["kind"] == "tensor":
        val = moment_tensor(req)
    else:
        val = moment_additive(req)
    print(json.dumps({"schema": 1, "moment": [_fmt(val), 0.0],
                      "nodes_used": req.nodes_used}))
    return 0


def _cmd_airy(args):
    c = [float(x) for x in args.c.split(",")]
    val = airy_laplace(c)
    print("%.9g" % val)
    return 0


def _cmd_simulate(args):
    cfg = _load_json(args.model)
    measures = [measure_from_json(json.dumps(mm)) for mm in cfg["measures"]]
    ec = ExperimentConfig(
        measures, cfg.get("multiplicities", [1] * len(measures)),
        args.N or cfg["N"], args.trials or cfg.get("trials", 100),
        args.seed, top_k=cfg.get("top_k", 8),
        c_probes=tuple(cfg.get("c_probes", (1.0,))))
    summary, hist = edge_experiment(ec)
    summary["E"] = _fmt(summary["E"])
    summary["V"] = _fmt(summary["V"])
    summary["ks_vs_gue"] = _fmt(summary["ks_vs_gue"])
    for row in summary["laplace"]:
        for k in row:
            row[k] = _fmt(row[k])
    _emit(args, "histogram.csv", hist)
    print(json.dumps(summary))
    return 0


def _cmd_verify(args):
    from .measures import rademacher
    checks = []

    def check(name, fn):
        try:
            ok = bool(fn())
        except Exception as exc:
            ok = False
            name = "%s (%s)" % (name, exc)
        checks.append((name, ok))

    check("tau of the two-atom measure equals 82",
          lambda: abs(tau(rademacher()) - 82.0) < 1e-6)
    check("edge constants of the semicircle",
          lambda: _verify_semicircle())
    check("moment formula matches the shift-operator sum",
          lambda: _verify_moment())
    check("one-point Laplace functional closed form",
          lambda: abs(airy_laplace([1.0]) - np.exp(1.0 / 12.0)
                      / (2.0 * np.sqrt(np.pi))) < 1e-9)
    check("uniform spectrum Monte Carlo vs unitary integral",
          lambda: _verify_hciz())
    width = max(len(n) for n, _ in checks)
    failed = 0
    for name, ok in checks:
        print("%-*s  %s" % (width, name, "pass" if ok else "FAIL"))
        failed += 0 if ok else 1
    return 0 if failed == 0 else 3


def _verify_semicircle():
    from .measures import JacobiLike
    semi = JacobiLike(0.5, 0.5, -2.0, 2.0)
    model = EdgeModel([semi], [1], "additive", 1)
    report = find_critical_point(model)
    E, V = edge_constants(report, 1)
    return abs(report.z_crit - 1.0) < 1e-6 and abs(E - 2.0) < 1e-6 \
        and abs(V - 1.0) < 1e-6


def _verify_moment():
    from .symfuncs import bessel_normalized
    from .moments import difference_operator_oracle
    l = np.array([0.8, 0.1, -0.4])
    c = [0.3, 0.6]
    truth = float(np.prod([np.sum(np.exp(ci * l)) for ci in c]))
    got = moment_additive(MomentRequest(("deterministic", l), c, 3))
    orc = difference_operator_oracle(
        "bessel", lambda z: bessel_normalized(l, np.asarray(z)), c, 3)
    return abs(got / truth - 1) < 1e-7 and abs(orc.real / truth - 1) < 1e-7


def _verify_hciz():
    from .symfuncs import hciz_mc, bessel_normalized
    l = [1.0, 0.0, -0.5]
    z = np.array([0.4, 0.1, 0.0])
    est, se = hciz_mc(l, z, samples=20000, seed=3)
    ref = bessel_normalized(np.asarray(l), z.astype(complex)).real
    return abs(est - ref) < 4.0 * max(se, 1e-12)


_COMMANDS = {
    "transform": _cmd_transform,
    "convolve": _cmd_convolve,
    "quantized-convolve": _cmd_quantized_convolve,
    "mk": _cmd_mk,
    "edge": _cmd_edge,
    "tau": _cmd_tau,
    "tauq": _cmd_tauq,
    "levelset": _cmd_levelset,
    "lift": _cmd_lift,
    "moment": _cmd_moment,
    "airy": _cmd_airy,
    "simulate": _cmd_simulate,
    "verify": _cmd_verify,
}


def _parser():
    p = argparse.ArgumentParser(prog="specedge")
    p.add_argument("command", choices=sorted(_COMMANDS))
    p.add_argument("--measure", help="measure JSON path (comma list for"
                                     " two-measure commands)")
    p.add_argument("--model", help="model/config JSON path")
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--c", help="comma-separated shifts")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--direction", choices=["forward", "inverse"],
                   default="forward")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--threads", type=int,
                   default=int(os.environ.get("SPECEDGE_THREADS", "0")))
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.threads and args.threads > 0:
        os.environ.setdefault("OMP_NUM_THREADS", str(args.threads))
    started = time.time()
    try:
        code = _COMMANDS[args.command](args)
    except (ValueError, KeyError, OSError, json.JSONDecodeError,
            NotDensityBounded) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except Exception as exc:
        print("numerical failure: %s" % exc, file=sys.stderr)
        return 3
    outdir = args.out or "."
    os.makedirs(outdir, exist_ok=True)
    _write_manifest(args, outdir, started)
    return code


if __name__ == "__main__":
    sys.exit(main())
