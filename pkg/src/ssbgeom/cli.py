"""Command-line entry point: ``ssbgeom <command> [options]``.

Structured results go to standard output as JSON; bulk samples are CSV.
Exit status is 0 on success, 1 on numerical failure and 2 on input errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .curvature import CurvatureError, principal_curvatures, weingarten_voltage
from .invcalc import inverse_hessian
from .inversion import (
    METHODS,
    fold_curve,
    init_split_kernel,
    init_split_normal,
    round_trip,
    step_full,
    step_kernel_simplified,
)
from .netio import CaseFormatError, assemble_quadratic, builtin_case, flat_profile, load_case, serialize_native
from .projection import project_point, trace_curve_projection
from .quadmap import QuadraticMap
from .ssb import SsbError, det_slice, find_ssb_ray, regularity, tangent_basis

BUILTIN = ("ieee14", "ieee30", "ieee57", "ieee118")


class InputError(ValueError):
    pass


def rng_for(seed: int, stream: int) -> np.random.Generator:
    """Independent counter-based stream ``stream`` derived from ``seed``."""
    ss = np.random.SeedSequence(seed, spawn_key=(stream,))
    return np.random.Generator(np.random.Philox(ss))


def _clean(x):
    if isinstance(x, float):
        return x if math.isfinite(x) else None
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, np.generic):
        return _clean(x.item())
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


def _emit_json(args, payload, out=None):
    config = {k: v for k, v in vars(args).items() if k not in ("func",)}
    doc = {"tool_version": __version__, "config": config, "seed": args.seed}
    doc.update(payload)
    text = json.dumps(_clean(doc), indent=1, sort_keys=True)
    (out or sys.stdout).write(text + "\n")


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    if path in (None, "-"):
        sys.stdout.write(buf.getvalue())
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())


def _vector(text, n, what):
    try:
        v = np.array(json.loads(text), dtype=float)
    except (ValueError, TypeError) as exc:
        raise InputError(f"{what}: expected a JSON list of numbers ({exc})") from None
    if v.shape != (n,):
        raise InputError(f"{what}: expected {n} components, got shape {v.shape}")
    return v


def _load(args):
    """(QuadraticMap, case or None, base point)."""
    if getattr(args, "map", None):
        try:
            with open(args.map, encoding="utf-8") as fh:
                F = QuadraticMap.from_json(fh.read())
        except (OSError, KeyError, ValueError) as exc:
            raise InputError(f"cannot read map: {exc}") from None
        base = np.zeros(F.n)
        base[0] = 1.0
        return F, None, base
    if not args.case:
        raise InputError("one of --case or --map is required")
    if args.case in BUILTIN and not os.path.exists(args.case):
        case = builtin_case(args.case)
    else:
        try:
            case = load_case(args.case, args.format)
        except OSError as exc:
            raise InputError(str(exc)) from None
    elim = not getattr(args, "full_map", False)
    return assemble_quadratic(case, eliminate_slack=elim), case, flat_profile(case, eliminate_slack=elim)


def _ssb_point(F, base, args, stream=0):
    rng = rng_for(args.seed, stream)
    u = rng.standard_normal(F.n)
    return find_ssb_ray(F, base, u / np.linalg.norm(u))


def cmd_parse(args):
    F, case, _ = _load(args)
    payload = {"map_dimension": F.n}
    if case is not None:
        payload.update(name=case.name, n_buses=case.n_bus, n_branches=len(case.branches),
                       base_mva=case.base_mva)
        if args.native:
            payload["case"] = json.loads(serialize_native(case))
    _emit_json(args, payload)


def cmd_ssb(args):
    F, _, base = _load(args)
    points = []
    for i in range(args.rays):
        q = _ssb_point(F, base, args, i)
        dim, regular = regularity(F, q.q)
        points.append(dict(q.to_dict(), kernel_dim=dim, regular=regular))
    _emit_json(args, {"points": points})


def cmd_geom(args):
    F, _, base = _load(args)
    q = _ssb_point(F, base, args)
    DF = q.spectrum.jacobian
    T = tangent_basis(q)
    payload = dict(
        q.to_dict(),
        grad_lambda=q.grad_lambda,
        N_P=q.N_P,
        cokernel_residual=float(np.linalg.norm(DF.T @ q.N_P) / q.spectrum.scale),
        tangent_orthogonality=float(np.abs(T.T @ q.N_V).max()) if T.size else 0.0,
        kernel_normal_cosine=float(np.dot(q.k, q.N_V)),
    )
    _emit_json(args, payload)


def cmd_curvature(args):
    F, _, base = _load(args)
    q = _ssb_point(F, base, args)
    forms, _ = weingarten_voltage(F, q)
    pcs = principal_curvatures(forms)
    kappas = [k for k, _ in pcs]
    kmax = max(abs(k) for k in kappas) if kappas else 0.0
    payload = {
        "q": q.q,
        "principal_kappas": kappas,
        "max_radius_of_curvature": (1.0 / kmax) if kmax > 0 else None,
        "principal_directions": [d for _, d in pcs] if args.directions else None,
        "basis": forms.basis.T,
    }
    _emit_json(args, payload)


def cmd_invert(args):
    F, case, base = _load(args)
    v0, u, _ = fold_curve(F, rng_for(args.seed, 0), base, offset=args.offset)
    res = round_trip(F, v0, u, args.step, args.steps, args.mode)
    rows = [(j, float(res.residuals[j]), float(e)) for j, e in zip(range(1, args.steps + 1), res.errors)]
    if args.csv:
        _write_csv(args.csv, ["step", "residual", "round_trip_distance"], rows)
    _emit_json(args, {
        "n_buses": case.n_bus if case is not None else None,
        "method": args.mode,
        "step_size": args.step,
        "steps": args.steps,
        "mean_round_trip_distance": res.mean_error,
        "max_residual": float(res.residuals.max()),
        "mode_switches": res.mode_switches,
    })


def cmd_project(args):
    F, _, base = _load(args)
    if args.curve:
        try:
            data = np.loadtxt(args.curve, delimiter=",", ndmin=2)
        except (OSError, ValueError) as exc:
            raise InputError(f"cannot read curve: {exc}") from None
        if data.shape[1] != F.n + 1:
            raise InputError(f"curve rows need t plus {F.n} coordinates")
        results = trace_curve_projection(F, [(r[0], r[1:]) for r in data], reanchor=args.reanchor)
        _emit_json(args, {"projections": [dict(q=r.q.q, d=r.d) for r in results]})
        return
    if args.point:
        v = _vector(args.point, F.n, "--point")
    else:
        q = _ssb_point(F, base, args)
        w = rng_for(args.seed, 1).standard_normal(F.n)
        # step to the side where lambda0 grows, away from the nearest eigenvalue collision
        out = np.sign(np.dot(q.N_V, q.grad_lambda)) * q.N_V
        v = q.q + args.offset * out + 0.5 * args.offset * w / np.linalg.norm(w)
    res = project_point(F, v, keep_trace=args.trace)
    _emit_json(args, dict(res.to_dict(), v=v))


def cmd_jet(args):
    F, _, base = _load(args)
    v = _vector(args.point, F.n, "--point") if args.point else base
    _emit_json(args, inverse_hessian(F, v).to_dict())


def cmd_bench(args):
    F, case, base = _load(args)
    v0, u, _ = fold_curve(F, rng_for(args.seed, 0), base)
    pdot = F.jacobian(v0) @ u
    rows = []
    for mode in args.modes:
        if mode == "kernel":
            s = init_split_kernel(F, v0, switch_threshold=0.0)
            t0 = time.perf_counter()
            step_kernel_simplified(F, s, pdot, args.step)
        else:
            s = init_split_normal(F, v0)
            t0 = time.perf_counter()
            step_full(F, s, pdot, args.step)
        rows.append({"n_buses": case.n_bus if case is not None else None, "mode": mode,
                     "seconds": time.perf_counter() - t0})
    _emit_json(args, {"rows": rows})


def cmd_slice(args):
    F, _, base = _load(args)
    rng = rng_for(args.seed, 0)
    origin = _vector(args.origin, F.n, "--origin") if args.origin else base
    d1 = _vector(args.d1, F.n, "--d1") if args.d1 else rng.standard_normal(F.n)
    d2 = _vector(args.d2, F.n, "--d2") if args.d2 else rng.standard_normal(F.n)
    try:
        out = det_slice(F, origin, d1, d2, tuple(args.a_range), tuple(args.b_range), tuple(args.grid))
    except ValueError as exc:
        raise InputError(str(exc)) from None
    rows = zip(out["a"].ravel(), out["b"].ravel(), out["sign"].ravel().astype(int),
               out["logabsdet"].ravel(), out["lambda0"].ravel(), out["sign_change"].ravel().astype(int))
    _write_csv(args.output, ["a", "b", "det_sign", "log_abs_det", "lambda0", "sign_change"], rows)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ssbgeom", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        src = sp.add_mutually_exclusive_group()
        src.add_argument("--case", help="case file, '-' for stdin, or one of " + ", ".join(BUILTIN))
        src.add_argument("--map", help="quadratic map in native JSON form")
        sp.add_argument("--format", choices=("cdf", "json"), help="case format (default: by suffix)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--full-map", action="store_true",
                        help="keep the slack bus as variables (map is then rotation invariant)")
        sp.set_defaults(func=func)
        return sp

    sp = add("parse", cmd_parse, "parse a case and report its size")
    sp.add_argument("--native", action="store_true", help="include the case in native JSON form")
    sp = add("ssb", cmd_ssb, "locate SSB points along random rays")
    sp.add_argument("--rays", type=int, default=1)
    add("geom", cmd_geom, "first-order geometry at an SSB point")
    sp = add("curvature", cmd_curvature, "principal curvatures at an SSB point")
    sp.add_argument("--directions", action="store_true")
    sp = add("invert", cmd_invert, "round-trip inversion of a random curve near the SSB")
    sp.add_argument("--mode", choices=METHODS, default="kernel")
    sp.add_argument("--step", type=float, default=1e-7)
    sp.add_argument("--steps", type=int, default=100)
    sp.add_argument("--offset", type=float, default=1e-4, help="start distance from the SSB")
    sp.add_argument("--csv", help="write per-step CSV here ('-' for stdout)")
    sp = add("project", cmd_project, "orthogonal projection onto the SSB")
    sp.add_argument("--point", help="JSON list of voltage coordinates")
    sp.add_argument("--curve", help="CSV of samples t,v1,...,vn")
    sp.add_argument("--trace", action="store_true")
    sp.add_argument("--offset", type=float, default=1e-3)
    sp.add_argument("--reanchor", type=int, default=10)
    sp = add("jet", cmd_jet, "Jacobian and Hessians of the local inverse")
    sp.add_argument("--point", help="JSON list of voltage coordinates (default: flat profile)")
    sp = add("bench", cmd_bench, "time a single continuation step")
    sp.add_argument("--modes", nargs="+", choices=("kernel", "normal"), default=["kernel", "normal"])
    sp.add_argument("--step", type=float, default=1e-7)
    sp = add("slice", cmd_slice, "sample det DF and lambda0 on a 2-d slice (CSV)")
    sp.add_argument("--origin")
    sp.add_argument("--d1")
    sp.add_argument("--d2")
    sp.add_argument("--grid", type=int, nargs=2, default=[50, 50], metavar=("NA", "NB"))
    sp.add_argument("--a-range", type=float, nargs=2, default=[-1.0, 1.0])
    sp.add_argument("--b-range", type=float, nargs=2, default=[-1.0, 1.0])
    sp.add_argument("--output", help="CSV path (default stdout)")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (ArithmeticError, SsbError, CurvatureError, np.linalg.LinAlgError) as exc:
        print(f"ssbgeom: numerical failure: {exc}", file=sys.stderr)
        return 1
    except (InputError, CaseFormatError, ValueError, OSError) as exc:
        print(f"ssbgeom: input error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
