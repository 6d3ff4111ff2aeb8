"""Command-line front end.

Every command reads a metric spec file, writes its CSV/JSON artifacts and a
``manifest.json`` into ``--out``, and exits with 0 on a pass verdict, 2 on a
mathematical finding (premise or inequality violation) and 1 on an error.
A scenario file (``hopfrig run scenario.json``) holds the same parameters.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .metric import PointChart, SurfaceSpec, parse_metric_spec

EXIT_PASS, EXIT_ERROR, EXIT_FINDING = 0, 1, 2

COMMANDS = ("check-metric", "geodesic", "conjugate-scan", "riccati", "hopf-balance",
            "ball-growth", "theorem1", "ode-lemma", "busemann", "exhaustion", "bol-fiala",
            "end-opening", "theorem2")
MONTE_CARLO = {"hopf-balance"}
NEEDS_SPEC = set(COMMANDS) - {"ode-lemma"}


class CommandError(RuntimeError):
    """Operational failure, tagged with the module that raised it."""

    def __init__(self, module, message):
        super().__init__(f"[{module}] {message}")
        self.module = module


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _clean(o):
    # JSON has no infinities; spell them out so files stay valid
    if isinstance(o, float) and not math.isfinite(o):
        return "nan" if math.isnan(o) else ("inf" if o > 0 else "-inf")
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, np.ndarray):
        return _clean(o.tolist())
    if isinstance(o, (np.floating, np.integer)):
        return _clean(o.item())
    return o


def write_json(path, payload):
    text = json.dumps(_clean(payload), indent=2, sort_keys=True, default=_json_default)
    Path(path).write_text(text + "\n", encoding="utf-8")


def _pair(text, name):
    try:
        a, b = (float(x) for x in str(text).split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"{name} must be two numbers 'a,b', got {text!r}") from None
    return a, b


def _point(spec: SurfaceSpec, params):
    a, b = _pair(params.get("point") or "0,0", "--point")
    if spec.is_cylinder:
        return PointChart.cylinder(a, b)
    kind = params.get("chart") or "cartesian"
    return PointChart((a, b), kind)


# -- commands -----------------------------------------------------------------------
# each returns (report dict, verdict ok: bool)


def cmd_check_metric(spec, p, out):
    from .metric import christoffels_at, curvature_at, metric_at

    pt = _point(spec, p)
    K = curvature_at(spec, pt)
    G = christoffels_at(spec, pt)
    g = metric_at(spec, pt)
    rep = {"family": spec.family, "label": spec.label, "point": list(pt.coords),
           "chart": pt.kind, "metric": g.tolist(),
           "curvature": K.K, "christoffels": np.asarray(G.gamma).tolist(),
           "christoffel_chart": G.chart, "invariants": "checked at construction",
           "tol": p["tol"]}
    return rep, True


def cmd_geodesic(spec, p, out):
    from .geodesics import UnitTangent, first_conjugate, shoot_geodesic

    pt = _point(spec, p)
    path = shoot_geodesic(spec, UnitTangent(pt, p["angle"]), p["rmax"], tol=p["tol"],
                          n_samples=p["grid"] + 1)
    with open(out / "geodesic.csv", "w", encoding="utf-8") as fh:
        fh.write("s,x1,x2,v1,v2\n")
        for s, (a, b), (c, d) in zip(path.s, path.X, path.V):
            fh.write(",".join(repr(float(v)) for v in (s, a, b, c, d)) + "\n")
    conj = first_conjugate(path, p["tol"])
    rep = {"speed_drift": path.speed_drift, "local_defect": path.local_defect(),
           "first_conjugate": conj, "tol": p["tol"], "s_max": path.s_max}
    return rep, True


def cmd_conjugate_scan(spec, p, out):
    from .geodesics import radial_chart

    pt = _point(spec, p)
    ch = radial_chart(spec, pt, p["rmax"], n_theta=p["grid"], tol=p["tol"])
    ch.to_csv(out / "conjugate_scan.csv")
    flag = ch.first_flag() if ch.truncated else None
    rep = {"r_max": p["rmax"], "n_theta": p["grid"], "tol": p["tol"],
           "conjugate_found": bool(ch.truncated),
           "first": None if flag is None else {"theta": flag[0], "r": flag[1]}}
    if flag is not None:
        rep["finding"] = "conjugate point: standing hypothesis fails"
    return rep, flag is None


def cmd_riccati(spec, p, out):
    from .geodesics import UnitTangent
    from .hopf import riccati_residual, stable_riccati

    pt = _point(spec, p)
    v = UnitTangent(pt, p["angle"])
    smp = stable_riccati(spec, v, tol=p["tol"])
    rep = {"U": smp.U, "error": smp.delta, "raw_delta": smp.raw_delta, "status": smp.status,
           "monotone": smp.monotone, "ladder": list(smp.ladder), "rungs": list(smp.u),
           "tol": p["tol"]}
    if smp.status == "converged":
        rep["residual"] = riccati_residual(spec, v, min(p["rmax"], 2.0), smp.T, sample=smp)
    else:
        rep["finding"] = "stable Riccati solution did not converge on the horizon ladder"
    return rep, smp.status == "converged"


def _region(spec, p):
    from .hopf import Ball, Band

    if spec.is_cylinder:
        t0, t1 = _pair(p.get("band") or "-1,1", "--band")
        return Band(t0, t1)
    return Ball(_point(spec, p), p.get("radius") or p["rmax"])


def cmd_hopf_balance(spec, p, out):
    from .hopf import hopf_balance

    rep = hopf_balance(spec, _region(spec, p), p["n"], tol=p["tol"], seed=p["seed"])
    d = rep.to_dict()
    return d, rep.verdict == "pass"


def cmd_ball_growth(spec, p, out):
    from .plane import ball_growth

    pt = _point(spec, p)
    curve = ball_growth(spec, pt, p["rmax"], n_theta=p["grid"])
    curve.to_csv(out / "ball_growth.csv")
    gb = np.abs(curve.gb_defect)
    rep = {"r_max": p["rmax"], "A_rmax": curve.A[-1], "errA_max": float(np.max(curve.errA)),
           "gauss_bonnet_defect": float(np.max(gb)), "max_abs_K": curve.max_abs_K,
           "n_theta": p["grid"]}
    return rep, True


def cmd_theorem1(spec, p, out):
    from .plane import theorem1_report

    curve, rep = theorem1_report(spec, _point(spec, p), p["rmax"], tail=p["tail"],
                                 n_theta=p["grid"])
    if curve is not None:
        curve.to_csv(out / "ball_growth.csv")
    return rep.to_dict(), rep.verdict != "premise-violated"


def cmd_ode_lemma(spec, p, out):
    from .odelemma import LemmaPreconditionError, read_lemma_csv, sharp_bound
    from .plane import A_CONST, B_CONST, C_CONST

    if not p.get("csv"):
        raise CommandError("cli", "ode-lemma needs --csv with columns r,A,F,R")
    a = p.get("a") if p.get("a") is not None else A_CONST
    b = p.get("b") if p.get("b") is not None else B_CONST
    c = p.get("c") if p.get("c") is not None else C_CONST
    data = read_lemma_csv(p["csv"], a, b, c)
    try:
        v = sharp_bound(data, tail=p["tail"], tol=p["tol"])
    except LemmaPreconditionError as exc:
        return {"finding": str(exc), **exc.report, "a": a, "b": b, "c": c}, False
    d = v.to_dict()
    d["tol"] = p["tol"]
    return d, v.passed


def cmd_busemann(spec, p, out):
    from .cylinder import busemann_field

    end = p["end"]
    h = 1.0 / p["grid"] if p["grid"] > 1 else p["grid"]
    bf = busemann_field(spec, end, window=(0.0, p["rmax"]), h=h)
    bf.to_csv(out / f"busemann_end{end}.csv")
    levels = [lv for lv in (0.25, 0.5, 1.0, 1.5, 2.0) if lv < p["rmax"]]
    dev = bf.level_deviation(levels)
    tol = 4 * h + float(np.max(bf.error))
    rep = {"end": end, "h": h, "ladder": list(bf.ladder), "ray_defect": bf.ray_defect,
           "monotone_violation": bf.monotone_violation, "extrapolation_error": float(np.max(bf.error)),
           "levels": levels, "level_deviation": dev.tolist(), "level_tolerance": tol,
           "levels_are_circles": bool(np.all(dev <= tol))}
    if not rep["levels_are_circles"]:
        rep["finding"] = "Busemann levels are not coordinate circles; closed forms do not apply"
    return rep, rep["levels_are_circles"]


def _curve(spec, p, with_F=True):
    from .cylinder import exhaustion_curves, fiber_energy_end

    c = exhaustion_curves(spec, p["end"], p["rmax"], n=p["grid"] + 1)
    if with_F:
        fiber_energy_end(spec, c, tol=p["tol"])
    return c


def cmd_exhaustion(spec, p, out):
    c = _curve(spec, p)
    c.to_csv(out / f"exhaustion_end{p['end']}.csv")
    rep = {"end": p["end"], "r_max": p["rmax"], "H_rmax": c.H[-1], "h_rmax": c.h[-1],
           "omega_rmax": c.omega[-1], "F_rmax": c.F[-1],
           "errH_max": float(np.max(c.errH)), "errF_max": float(np.max(c.errF)),
           "dH_defect_max": float(np.max(c.dH_defect)),
           "omega_defect_max": float(np.max(c.omega_defect)),
           "rotation_defect_max": float(np.max(c.rotation_defect))}
    return rep, True


def cmd_bol_fiala(spec, p, out):
    from .cylinder import bol_fiala_check

    c = _curve(spec, p, with_F=False)
    margin, lo = bol_fiala_check(c)
    with open(out / f"bol_fiala_end{p['end']}.csv", "w", encoding="utf-8") as fh:
        fh.write("t,h,margin\n")
        for row in zip(c.t, c.h, margin):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    tol = 10 * float(np.max(c.errH)) + p["tol"]
    rep = {"end": p["end"], "min_margin": lo, "tolerance": tol}
    if lo < -tol:
        rep["finding"] = "Bol-Fiala inequality violated"
    return rep, lo >= -tol


def cmd_end_opening(spec, p, out):
    from .cylinder import end_opening_report

    rep = end_opening_report(spec, p["end"], tail=p["tail"])
    d = rep.to_dict()
    d["sphere_margin_tolerance"] = 1e-6
    bad = [m for m in rep.sphere_margin if m < -1e-6]
    if bad:
        d["finding"] = "sphere length below the loop length"
    return d, rep.agreement and not bad


def cmd_theorem2(spec, p, out):
    from .cylinder import theorem2_report

    rep = theorem2_report(spec, r_max=p["rmax"], n=p["grid"] + 1, tail=p["tail"],
                          riccati_tol=p["tol"])
    return rep.to_dict(), rep.verdict == "consistent-flat"


HANDLERS = {
    "check-metric": cmd_check_metric,
    "geodesic": cmd_geodesic,
    "conjugate-scan": cmd_conjugate_scan,
    "riccati": cmd_riccati,
    "hopf-balance": cmd_hopf_balance,
    "ball-growth": cmd_ball_growth,
    "theorem1": cmd_theorem1,
    "ode-lemma": cmd_ode_lemma,
    "busemann": cmd_busemann,
    "exhaustion": cmd_exhaustion,
    "bol-fiala": cmd_bol_fiala,
    "end-opening": cmd_end_opening,
    "theorem2": cmd_theorem2,
}

DEFAULTS = {
    "tol": {"riccati": 1e-4, "hopf-balance": 1e-4, "exhaustion": 1e-4, "theorem2": 1e-4,
            "ode-lemma": 1e-9, "bol-fiala": 1e-6, None: 1e-10},
    "rmax": {"theorem1": 10.0, "ball-growth": 10.0, "theorem2": 8.0, "busemann": 3.0,
             "hopf-balance": 2.0, None: 5.0},
    "grid": {"geodesic": 512, "conjugate-scan": 256, "ball-growth": 256, "theorem1": 256,
             "busemann": 20, None: 800},
}


def _defaults(command, params):
    p = dict(params)
    for key, table in DEFAULTS.items():
        if p.get(key) is None:
            p[key] = table.get(command, table[None])
    p.setdefault("tail", 0.5)
    if p.get("tail") is None:
        p["tail"] = 0.5
    if p.get("end") is None:
        p["end"] = 2
    if p.get("angle") is None:
        p["angle"] = 0.0
    if p.get("n") is None:
        p["n"] = 100000
    return p


def validate(command, p):
    if command not in HANDLERS:
        raise CommandError("cli", f"unknown command {command!r}")
    if not p["tol"] > 0:
        raise CommandError("cli", "tolerances must be positive")
    if not p["rmax"] > 0:
        raise CommandError("cli", "--rmax must be positive")
    if not (0 < p["tail"] < 1):
        raise CommandError("cli", "--tail must lie in (0, 1)")
    if int(p["grid"]) < 2:
        raise CommandError("cli", "--grid must be at least 2")
    p["grid"] = int(p["grid"])
    if p["end"] not in (1, 2):
        raise CommandError("cli", "--end must be 1 or 2")
    if command in MONTE_CARLO and p.get("seed") is None:
        raise CommandError("cli", f"{command} samples randomly and needs --seed")
    if command in NEEDS_SPEC and not p.get("spec"):
        raise CommandError("cli", f"{command} needs --spec")


def _module_of(exc):
    mod = type(exc).__module__ or ""
    if mod.startswith("hopfrig."):
        return mod.split(".", 1)[1]
    tb = exc.__traceback__
    name = "cli"
    while tb is not None:
        m = tb.tb_frame.f_globals.get("__name__", "")
        if m.startswith("hopfrig.") and m != "hopfrig.cli":
            name = m.split(".", 1)[1]
        tb = tb.tb_next
    return name


def run_scenario(command, params, out_dir, stream=None):
    """Dispatch one command; returns the exit status."""
    stream = sys.stdout if stream is None else stream
    t_start = time.perf_counter()
    p = _defaults(command, params)
    validate(command, p)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec, spec_text = None, None
    if p.get("spec"):
        spec_text = Path(p["spec"]).read_text(encoding="utf-8")
        spec = parse_metric_spec(spec_text)
    report, ok = HANDLERS[command](spec, p, out)
    findings = [report["finding"]] if "finding" in report else list(report.get("findings", []))
    status = EXIT_PASS if ok else EXIT_FINDING
    report = {"command": command, "status": "pass" if ok else "finding", **report}
    name = command.replace("-", "_") + ".json"
    write_json(out / name, report)
    outputs = sorted(f.name for f in out.iterdir() if f.name != "manifest.json")
    inputs = {k: v for k, v in p.items() if k != "spec"}
    manifest = {
        "command": command,
        "inputs": {"spec_path": p.get("spec"),
                   "spec_sha256": hashlib.sha256(spec_text.encode()).hexdigest() if spec_text else None,
                   "params": inputs},
        "versions": {"hopfrig": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "seed": p.get("seed"),
        "threads": os.environ.get("HOPFRIG_THREADS"),
        "outputs": outputs,
        "status": status,
        "wall_time_s": round(time.perf_counter() - t_start, 3),
    }
    write_json(out / "manifest.json", manifest)
    print(f"{command}: {'pass' if ok else 'finding'}", file=stream)
    for f in findings:
        print(f"  {f}", file=stream)
    return status


class _Parser(argparse.ArgumentParser):
    # usage errors are operational failures (exit 1), never findings (exit 2)
    def error(self, message):
        raise CommandError("cli", message)


def _parser():
    ap = _Parser(prog="hopfrig", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS + ("run",))
    ap.add_argument("scenario", nargs="?", help="scenario JSON (for 'run')")
    ap.add_argument("--spec", help="metric spec file")
    ap.add_argument("--out", default="hopfrig_out", help="output directory")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--tol", type=float)
    ap.add_argument("--rmax", type=float)
    ap.add_argument("--grid", type=int)
    ap.add_argument("--tail", type=float)
    ap.add_argument("--point", help="base point 'a,b' in the chart")
    ap.add_argument("--chart", choices=("cartesian", "polar"), help="plane chart of --point")
    ap.add_argument("--angle", type=float, help="frame angle of the tangent")
    ap.add_argument("--end", type=int, choices=(1, 2))
    ap.add_argument("--radius", type=float, help="ball radius for hopf-balance")
    ap.add_argument("--band", help="'t0,t1' band for hopf-balance on cylinders")
    ap.add_argument("--n", type=int, help="Monte Carlo sample count")
    ap.add_argument("--csv", help="input CSV for ode-lemma (columns r,A,F,R)")
    ap.add_argument("--a", type=float)
    ap.add_argument("--b", type=float)
    ap.add_argument("--c", type=float)
    return ap


PARAM_KEYS = ("spec", "seed", "tol", "rmax", "grid", "tail", "point", "chart", "angle", "end",
              "radius", "band", "n", "csv", "a", "b", "c")


def load_scenario(path):
    """Scenario JSON: ``{"command", "spec", "out", "params": {...}}``."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if "command" not in data:
        raise CommandError("cli", "scenario lacks 'command'")
    base = Path(path).parent
    params = dict(data.get("params", {}))
    unknown = set(params) - set(PARAM_KEYS)
    if unknown:
        raise CommandError("cli", f"unknown scenario parameters {sorted(unknown)}")
    for key in ("spec", "csv"):
        val = data.get(key, params.get(key))
        if val is not None:
            params[key] = str(val if Path(val).is_absolute() else base / val)
    out = data.get("out", "hopfrig_out")
    return data["command"], params, str(out if Path(out).is_absolute() else base / out)


def main(argv=None):
    try:
        args = _parser().parse_args(argv)
        if args.command == "run":
            if not args.scenario:
                raise CommandError("cli", "run needs a scenario file")
            command, params, out = load_scenario(args.scenario)
            for key in PARAM_KEYS:
                val = getattr(args, key)
                if val is not None:
                    params[key] = val
        else:
            command, out = args.command, args.out
            params = {k: getattr(args, k) for k in PARAM_KEYS}
        return run_scenario(command, params, out)
    except CommandError as exc:
        print(f"error {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # noqa: BLE001 - every failure maps to exit 1 with attribution
        print(f"error [{_module_of(exc)}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
