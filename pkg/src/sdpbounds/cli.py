"""Command-line interface: approximate, refine, certify, and generate.

Subcommands
    approx    bound a problem file with a cone family and decomposition
    cob       iterate change-of-basis refinement, emitting the cost sequence
    certify   check a stored solution's tightness certificate
    sos-min   lower-bound a polynomial minimum via (sparse) SOS
    hinf      gain bound for a linear system via the bounded real condition
    gen       write seeded benchmark instances to files

stdout carries data (text key/value lines, JSON, or CSV per --format);
stderr carries diagnostics.  Exit codes: 0 success, 1 usage or input
error, 2 infeasible/unbounded, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace

import numpy as np

from .apps import (
    LTISystem,
    bounded_real_lmi,
    gen_block_arrow,
    gen_sea_star,
    hnorm_bound,
    hnorm_sweep,
)
from .core import ConeKind, ConicProblem, PSD
from .decomp import assign_cones, build_completion, build_construction, lower_problem
from .refine import certify, cob_run
from .solver import (
    SolverSettings,
    export_json,
    export_sdpa,
    import_json,
    import_sdpa,
    solution_from_json,
    solve,
)
from .sos import (
    Polynomial,
    build_putinar,
    build_sos,
    build_sparse_putinar,
    gen_lehmer_rosenbrock,
    solve_sos,
)
from .sparsity import MergePolicy, chordal_extend, merge_cliques, problem_pattern

_STATUS_EXIT = {"optimal": 0, "infeasible": 2, "unbounded": 2,
                "maxiter": 3, "numerical_error": 3}


# ---------------------------------------------------------------------------
# plumbing
# ---------------------------------------------------------------------------


def _read_config(path):
    """Permissive key=value file; '#' comments, unknown keys kept as-is."""
    conf = {}
    if not path:
        return conf
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line or "=" not in line:
                continue
            key, val = line.split("=", 1)
            key = key.strip().lower().replace("-", "_")
            val = val.strip().strip('"').strip("'")
            try:
                conf[key] = int(val)
            except ValueError:
                try:
                    conf[key] = float(val)
                except ValueError:
                    conf[key] = val
    return conf


def _settings(args, conf) -> SolverSettings:
    def pick(name, default, cast):
        flag = getattr(args, name, None)
        if flag is not None:
            return cast(flag)
        if name in conf:
            return cast(conf[name])
        env = os.environ.get("SDPBOUNDS_" + name.upper())
        if env is not None:
            return cast(env)
        return default

    return SolverSettings(
        eps=pick("tol", 1e-6, float),
        max_iter=pick("max_iter", 50000, int),
        time_limit=pick("time_limit", None, float),
        jobs=pick("jobs", 1, int),
        verbose=bool(getattr(args, "verbose", False)),
    )


def _load_problem(path: str) -> ConicProblem:
    if path.endswith((".dat-s", ".dats", ".sdpa")):
        return import_sdpa(path)
    return import_json(path)


def _parse_cone(token: str) -> ConeKind:
    tok = token.strip().lower().replace(" ", "").replace(":", "")
    if tok in ("psd", "sdp"):
        return PSD
    if tok in ("dd", "sdd"):
        return ConeKind(tok)
    if tok in ("diag", "diagonal"):
        return ConeKind("diagonal")
    for prefix, tag in (("bfw", "bfw2"), ("fw", "fw")):
        if tok.startswith(prefix):
            rest = tok[len(prefix):]
            if not rest.isdigit():
                raise ValueError(f"cone {token!r} needs a numeric width, e.g. {prefix}2")
            return ConeKind(tag, k=int(rest))
    raise ValueError(f"unknown cone family {token!r}")


def _oriented(base: ConeKind, form: str, side: str) -> tuple[ConeKind, str]:
    """Cone orientation and decomposition style for a bound side.

    Returns (kind, style) with style "completion" or "construction".
    Upper bounds on a minimization (or on a maximization's certificate
    side) use subset kinds; lower bounds use the dual superset kinds or
    the slack-building construction, depending on the problem form.
    """
    if base.tag == "psd":
        return base, "completion"
    if form == "primal":
        want_dual = side == "lower"
        return replace(base, dual=want_dual), "completion"
    if side == "upper":
        return replace(base, dual=True), "completion"
    return base, "construction"


def _emit(payload: dict, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(payload, indent=1, default=str))
    elif fmt == "csv":
        keys = list(payload)
        print(",".join(keys))
        print(",".join(str(payload[k]) for k in keys))
    else:
        for k, v in payload.items():
            print(f"{k}: {v}")


def _hist(sizes) -> str:
    out: dict[int, int] = {}
    for s in sizes:
        out[s] = out.get(s, 0) + 1
    return ";".join(f"{s}x{c}" for s, c in sorted(out.items()))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _cmd_approx(args) -> int:
    conf = _read_config(args.config)
    settings = _settings(args, conf)
    p = _load_problem(args.input)
    base = _parse_cone(args.cone)
    kind, style = _oriented(base, p.form, args.side)

    t0 = time.perf_counter()
    cover = chordal_extend(problem_pattern(p))
    if args.merge_cap:
        cover = merge_cliques(cover, MergePolicy(max_union=args.merge_cap))
    if style == "construction":
        assignment = assign_cones(cover, kind, "construction", args.threshold)
        dec = build_construction(p, assignment)
    else:
        assignment = assign_cones(cover, kind, "completion", args.threshold)
        dec = build_completion(p, assignment)
    sol = dec.solve(settings)
    dt = time.perf_counter() - t0

    payload = {
        "bound": sol.objective,
        "direction": dec.bound_direction,
        "status": sol.status,
        "cone": str(kind),
        "style": dec.style,
        "cliques": _hist(len(c) for c in cover.cliques),
        "wall_time_s": round(dt, 4),
        "res_primal": sol.res_primal,
        "res_dual": sol.res_dual,
        "gap": sol.gap,
    }
    if sol.status == "optimal":
        cert_side = "construction" if dec.style == "construct" else "completion"
        report = certify(dec.dual_view(), sol, cover, cert_side,
                         tol=max(settings.eps * 10, 1e-8))
        payload["certified_tight"] = report.tight
        payload["worst_eig"] = min((e for _, e in report.deciding_eigs),
                                   default=0.0)
        if args.emit_plot_data:
            with open(args.emit_plot_data, "w") as fh:
                fh.write("clique,min_eig\n")
                for k, e in report.clique_eigs:
                    fh.write(f"{k},{e!r}\n")
            print(f"wrote clique eigenvalue data to {args.emit_plot_data}",
                  file=sys.stderr)
    _emit(payload, args.format)
    return _STATUS_EXIT.get(sol.status, 3)


def _cmd_cob(args) -> int:
    conf = _read_config(args.config)
    settings = _settings(args, conf)
    p = _load_problem(args.input)
    base = _parse_cone(args.cone)
    kind, style = _oriented(base, p.form, args.side)
    cover = chordal_extend(problem_pattern(p))
    if style == "construction":
        dec = build_construction(p, assign_cones(cover, kind, "construction",
                                                 args.threshold))
    else:
        dec = build_completion(p, assign_cones(cover, kind, "completion",
                                               args.threshold))
    result = cob_run(dec, rounds=args.iters, settings=settings)
    print("round,bound,status")
    for r, (bnd, st) in enumerate(zip(result.bounds, result.statuses)):
        print(f"{r},{bnd!r},{st}")
    print(f"best bound {result.best_bound!r} "
          f"({'stalled' if result.stalled else 'round limit'})",
          file=sys.stderr)
    return _STATUS_EXIT.get(result.statuses[-1], 3)


def _cmd_certify(args) -> int:
    conf = _read_config(args.config)
    p = _load_problem(args.input)
    sol = solution_from_json(args.solution)
    cover = chordal_extend(problem_pattern(p))
    tol = args.tol if args.tol is not None else \
        float(conf.get("tol", os.environ.get("SDPBOUNDS_TOL", 1e-6)))
    report = certify(p, sol, cover, args.side, tol=tol)
    payload = {
        "tight": report.tight,
        "side": report.side,
        "tol": report.tol,
        "worst": report.worst,
        "block_eigs": ";".join(f"{b}:{e!r}" for b, e in report.block_eigs),
        "clique_eigs": ";".join(f"{k}:{e!r}" for k, e in report.clique_eigs),
    }
    _emit(payload, args.format)
    return 0


def _cmd_sos_min(args) -> int:
    conf = _read_config(args.config)
    settings = _settings(args, conf)
    with open(args.poly) as fh:
        p = Polynomial.from_text(fh.read())
    gs = []
    for path in args.ineq or []:
        with open(path) as fh:
            gs.append(Polynomial.from_text(fh.read(), nvars=p.nvars))
    hs = []
    for path in args.eq or []:
        with open(path) as fh:
            hs.append(Polynomial.from_text(fh.read(), nvars=p.nvars))

    t0 = time.perf_counter()
    if args.sparse:
        prog = build_sparse_putinar(p, gs, hs, args.degree)
    elif gs or hs:
        prog = build_putinar(p, gs, hs, args.degree)
    else:
        prog = build_sos(p, args.degree)
    base = _parse_cone(args.cone)
    kinds = None if base.tag == "psd" else base
    if base.dual:
        print("superset Gram cones do not bound the polynomial minimum",
              file=sys.stderr)
    gamma, sol = solve_sos(prog, kinds, settings)
    dt = time.perf_counter() - t0
    payload = {
        "gamma": gamma,
        "status": sol.status,
        "cone": str(base),
        "sparse": bool(args.sparse),
        "gram_blocks": _hist(len(b) for b in prog.gram_bases),
        "wall_time_s": round(dt, 4),
    }
    _emit(payload, args.format)
    if sol.status == "infeasible":
        return 0  # -inf is the honest answer: no certificate at this strength
    return _STATUS_EXIT.get(sol.status, 3)


def _cmd_hinf(args) -> int:
    conf = _read_config(args.config)
    settings = _settings(args, conf)
    with open(args.system) as fh:
        system = LTISystem.from_json(fh.read())
    base = _parse_cone(args.cone)
    res = hnorm_bound(system, base, p_structure=args.p_structure,
                      decompose=args.decompose, settings=settings)
    payload = {
        "gamma": res.gamma,
        "direction": res.direction,
        "status": res.status,
        "cone": str(base),
        "p_structure": args.p_structure,
        "decomposed": bool(args.decompose),
        "wall_time_s": round(res.solve_time, 4),
    }
    if args.sweep_check:
        payload["sweep_lower_bound"] = hnorm_sweep(system)
    _emit(payload, args.format)
    if res.status == "infeasible":
        return 0  # gamma = inf: the restricted condition has no certificate
    return _STATUS_EXIT.get(res.status, 3)


def _cmd_gen(args) -> int:
    if args.what == "block-arrow":
        p = gen_block_arrow(args.blocks, args.blocksize, args.arrowhead,
                            args.m, seed=args.seed)
        out = args.out or f"block_arrow_{args.seed}.json"
        if out.endswith((".dat-s", ".dats")):
            export_sdpa(p, out)
        else:
            export_json(p, out)
    elif args.what == "sea-star":
        system = gen_sea_star(head=args.head, arms=args.arms,
                              knuckles=args.knuckles,
                              agents_per_knuckle=args.agents,
                              coupling=args.coupling, seed=args.seed)
        out = args.out or f"sea_star_{args.seed}.json"
        with open(out, "w") as fh:
            fh.write(system.to_json())
    elif args.what == "lehmer-rosenbrock":
        poly = gen_lehmer_rosenbrock(args.nvars)
        out = args.out or f"lehmer_rosenbrock_{args.nvars}.txt"
        with open(out, "w") as fh:
            fh.write(poly.to_text())
    else:
        raise ValueError(f"unknown generator {args.what!r}")
    print(out)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_common(sp, solverly: bool = True) -> None:
    sp.add_argument("--format", choices=("text", "json", "csv"),
                    default="text", help="output format on stdout")
    sp.add_argument("--config", default=None,
                    help="key=value settings file (parsed permissively)")
    if solverly:
        sp.add_argument("--tol", type=float, default=None,
                        help="solver tolerance (default 1e-6 or SDPBOUNDS_TOL)")
        sp.add_argument("--max-iter", dest="max_iter", type=int, default=None)
        sp.add_argument("--time-limit", dest="time_limit", type=float,
                        default=None)
        sp.add_argument("--jobs", type=int, default=None,
                        help="intra-solve parallelism")
        sp.add_argument("--verbose", action="store_true")


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="sdpbounds",
        description="Bound semidefinite programs with clique decompositions "
                    "and structured cone restrictions.")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("approx", help="bound a problem file")
    sp.add_argument("--input", required=True, help="problem file (.json or .dat-s)")
    sp.add_argument("--cone", default="psd",
                    help="cone family: dd, sdd, psd, diag, fwK, bfwK")
    sp.add_argument("--side", choices=("upper", "lower"), default="upper")
    sp.add_argument("--threshold", type=int, default=0,
                    help="cliques this size or smaller stay psd")
    sp.add_argument("--merge-cap", dest="merge_cap", type=int, default=0,
                    help="merge cliques while unions stay within this size")
    sp.add_argument("--emit-plot-data", default=None,
                    help="write per-clique eigenvalue CSV to this file")
    _add_common(sp)
    sp.set_defaults(func=_cmd_approx)

    sp = sub.add_parser("cob", help="change-of-basis refinement")
    sp.add_argument("--input", required=True)
    sp.add_argument("--cone", default="dd")
    sp.add_argument("--side", choices=("upper", "lower"), default="upper")
    sp.add_argument("--threshold", type=int, default=0)
    sp.add_argument("--iters", type=int, default=10)
    _add_common(sp)
    sp.set_defaults(func=_cmd_cob)

    sp = sub.add_parser("certify", help="tightness certificate for a solution")
    sp.add_argument("--input", required=True)
    sp.add_argument("--solution", required=True, help="solution JSON file")
    sp.add_argument("--side", choices=("completion", "construction"),
                    default="completion")
    sp.add_argument("--tol", type=float, default=None)
    _add_common(sp, solverly=False)
    sp.set_defaults(func=_cmd_certify)

    sp = sub.add_parser("sos-min", help="polynomial lower bound via SOS")
    sp.add_argument("--poly", required=True,
                    help="polynomial file: one 'coeff exponents...' line per monomial")
    sp.add_argument("--degree", type=int, required=True)
    sp.add_argument("--sparse", action="store_true",
                    help="split by variable co-occurrence cliques")
    sp.add_argument("--cone", default="psd")
    sp.add_argument("--ineq", action="append", default=None,
                    help="inequality constraint polynomial file (g >= 0); repeatable")
    sp.add_argument("--eq", action="append", default=None,
                    help="equality constraint polynomial file (h = 0); repeatable")
    _add_common(sp)
    sp.set_defaults(func=_cmd_sos_min)

    sp = sub.add_parser("hinf", help="gain bound for a linear system")
    sp.add_argument("--system", required=True, help="system JSON file")
    sp.add_argument("--p-structure", dest="p_structure", default="dense",
                    help="storage structure: dense or agent")
    sp.add_argument("--cone", default="psd")
    sp.add_argument("--decompose", action="store_true")
    sp.add_argument("--sweep-check", dest="sweep_check", action="store_true",
                    help="also print the frequency-sweep lower bound")
    _add_common(sp)
    sp.set_defaults(func=_cmd_hinf)

    sp = sub.add_parser("gen", help="write a seeded benchmark instance")
    sp.add_argument("what", choices=("block-arrow", "sea-star",
                                     "lehmer-rosenbrock"))
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)
    sp.add_argument("--blocks", type=int, default=3)
    sp.add_argument("--blocksize", type=int, default=4)
    sp.add_argument("--arrowhead", type=int, default=3)
    sp.add_argument("--m", type=int, default=10)
    sp.add_argument("--head", type=int, default=10)
    sp.add_argument("--arms", type=int, default=3)
    sp.add_argument("--knuckles", type=int, default=2)
    sp.add_argument("--agents", type=int, default=3)
    sp.add_argument("--coupling", type=float, default=0.4)
    sp.add_argument("--nvars", type=int, default=12)
    _add_common(sp, solverly=False)
    sp.set_defaults(func=_cmd_gen)
    return ap


def main(argv=None) -> int:
    ap = _build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
