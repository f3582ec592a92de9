"""Command-line front end: ``jacdet det|scan|oracle|compare|selftest``.

Exit codes: 0 success, 1 input error or failed check, 2 degenerate metric
after the perturbation retries.
"""
import argparse
import datetime
import json
import math
import os
import sys
import time
import warnings

import numpy as np

from . import __version__, _kernels
from .config import ConfigError, load_problem
from .determinant import (DegenerateMetric, det_report, hill_reference, normalization,
                          scan_zeros, trace_K)
from .oracle import refine
from .problem import ProblemError
from .report import (COMPARE_SCHEMA, REPORT_SCHEMA, SCAN_SCHEMA, SPECTRUM_SCHEMA, csv_text,
                     dumps, write_text)
from .symplectic import BoundaryError, MetricError, MetricPair

EXIT_OK, EXIT_INPUT, EXIT_DEGENERATE = 0, 1, 2
MAX_ORACLE_DIM = 4200
DET_ABS_FLOOR = 5e-3


class UsageError(ValueError):
    pass


# -- argument parsing ----------------------------------------------------------

def _s_values(text):
    if text is None:
        return np.linspace(0.0, 1.0, 101), "0:1:101"
    parts = text.split(":")
    try:
        if len(parts) == 1:
            return np.array([float(parts[0])]), text
        if len(parts) == 3:
            lo, hi, steps = float(parts[0]), float(parts[1]), int(parts[2])
            if steps < 2 or steps > 100001:
                raise UsageError("--s: STEPS must be in [2, 100001]")
            if not hi > lo:
                raise UsageError("--s: need LO < HI")
            return np.linspace(lo, hi, steps), text
    except ValueError as e:
        if isinstance(e, UsageError):
            raise
    raise UsageError(f"--s: expected X or LO:HI:STEPS, got {text!r}")


def _lambda_range(text):
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError:
        raise UsageError(f"--lambda: expected LO:HI, got {text!r}") from None
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo:
        raise UsageError("--lambda: need finite LO <= HI")
    return lo, hi


def _matrix_arg(text, name):
    try:
        return np.asarray(json.loads(text), dtype=float)
    except (ValueError, TypeError):
        raise UsageError(f"{name}: expected a JSON matrix, e.g. [[1,0],[0,1]]") from None


def build_parser():
    ap = argparse.ArgumentParser(prog="jacdet", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"jacdet {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, problem=True):
        if problem:
            p.add_argument("--problem", required=True, metavar="PATH", help="problem JSON file")
        p.add_argument("--out", default="-", metavar="PATH", help="output file (default stdout)")
        p.add_argument("--format", choices=("json", "csv"), default=None)
        p.add_argument("--grid", type=int, default=None, metavar="N", help="time-grid intervals")
        p.add_argument("--seed", type=int, default=0, metavar="N",
                       help="seed for metric perturbation")
        p.add_argument("--G0", default=None, metavar="JSON", help="override metric G0")
        p.add_argument("--G1", default=None, metavar="JSON", help="override metric G1")

    p = sub.add_parser("det", help="det(I + sK) on an s grid")
    common(p)
    p.add_argument("--s", default=None, metavar="LO:HI:STEPS|X")
    p = sub.add_parser("scan", help="zeros of det(1 + K_lambda) for a Schrodinger family")
    common(p)
    p.add_argument("--lambda", dest="lam", default="-100:1", metavar="LO:HI")
    p.add_argument("--verify", action="store_true", help="attach oracle kernel dimensions")
    p.add_argument("--m", type=int, default=256, metavar="N")
    p = sub.add_parser("oracle", help="Galerkin spectrum of K with m refinement")
    common(p)
    p.add_argument("--m", type=int, default=256, metavar="N")
    p = sub.add_parser("compare", help="formula versus oracle table")
    common(p)
    p.add_argument("--m", type=int, default=256, metavar="N")
    p.add_argument("--tol-det", type=float, default=0.02, metavar="X")
    p.add_argument("--tol-trace", type=float, default=1e-2, metavar="X")
    p = sub.add_parser("selftest", help="run the built-in consistency battery")
    common(p, problem=False)
    p.add_argument("--m", type=int, default=64, metavar="N")
    return ap


def _validate(args):
    if args.grid is not None and not (8 <= args.grid <= 1 << 16):
        raise UsageError("--grid must be in [8, 65536]")
    if args.seed < 0:
        raise UsageError("--seed must be non-negative")
    if hasattr(args, "m") and not (8 <= args.m <= 4096):
        raise UsageError("--m must be in [8, 4096]")
    if hasattr(args, "tol_det") and not (0 < args.tol_det < 1):
        raise UsageError("--tol-det must be in (0, 1)")
    if hasattr(args, "tol_trace") and not (args.tol_trace > 0):
        raise UsageError("--tol-trace must be positive")


def _metrics(args, prob):
    m = prob.metrics
    if args.G0 is None and args.G1 is None:
        return m
    G0 = _matrix_arg(args.G0, "--G0") if args.G0 is not None else m.G0
    G1 = _matrix_arg(args.G1, "--G1") if args.G1 is not None else (G0 if args.G0 is not None else m.G1)
    return MetricPair(G0, G1)


def _run_config(args, prob, metrics, **extra):
    cfg = {"command": args.command, "problem": dict(prob.resolved), "seed": args.seed}
    cfg["problem"]["metrics"] = {"G0": metrics.G0.tolist(), "G1": metrics.G1.tolist()}
    cfg.update(extra)
    return cfg


def _fmt(args, default="json"):
    if args.format:
        return args.format
    if args.out not in (None, "-") and args.out.endswith(".csv"):
        return "csv"
    return default


def _emit(args, text, started):
    write_text(args.out, text)
    if args.out not in (None, "-"):
        meta = {
            "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "version": __version__,
            "backend": _kernels.backend_name(),
            "runtime_s": round(time.perf_counter() - started, 3),
            "argv": sys.argv[1:],
        }
        write_text(args.out + ".meta.json", dumps(meta))


# -- references ----------------------------------------------------------------

def _references(prob, p, metrics):
    spec = prob.boundary_spec
    ok = (p.label in ("driftless", "schrodinger") and spec["type"] == "periodic") or (
        p.label == "drift" and spec == {"type": "graph", "F": "flow"})
    if not ok:
        return None
    out = {"published": hill_reference(p, metrics),
           "corrected": hill_reference(p, metrics, constant="corrected")}
    if p.label != "drift":
        out["published_sum_reading"] = hill_reference(p, metrics, reading="sum")
    if p.label == "drift":
        out["note"] = "Gamma = int X X^T with X = Phi_hat^{-1} B (engine convention)"
    return out


# -- commands ------------------------------------------------------------------

def cmd_det(args):
    started = time.perf_counter()
    prob = load_problem(args.problem, args.grid)
    s, s_text = _s_values(args.s)
    dp = prob.doubled()
    metrics = _metrics(args, prob)
    rep = det_report(dp, metrics, s, seed=args.seed)
    cfg = _run_config(args, prob, metrics, s=s_text)
    if _fmt(args) == "csv":
        text = csv_text(["s", "det_Q", "detIK"], zip(rep.s, rep.pq, rep.detIK))
    else:
        result = {
            "a": rep.a, "b": rep.b, "trK": rep.trK,
            "trK_lemma": trace_K(dp, metrics, method="lemma"),
            "samples": [{"s": a, "det_Q": b, "detIK": c} for a, b, c in zip(rep.s, rep.pq, rep.detIK)],
            "zeros": [{"s": z.x, "order": z.order, "slope": z.slope, "sign_change": z.sign_change,
                       "flagged": z.flagged} for z in rep.zeros],
            "diagnostics": rep.diagnostics,
            "hill_reference": _references(prob, dp.base, metrics),
        }
        text = dumps({"schema": REPORT_SCHEMA, "config": cfg, "result": result})
    _emit(args, text, started)
    return EXIT_OK


def cmd_scan(args):
    started = time.perf_counter()
    prob = load_problem(args.problem, args.grid)
    if prob.kind != "schrodinger":
        raise UsageError("scan needs a problem of kind 'schrodinger'")
    lo, hi = _lambda_range(args.lam)
    metrics = _metrics(args, prob)
    p0 = prob.problem(lo)
    bc = prob.boundary(p0)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        roots = scan_zeros(lambda lam: prob.problem(lam), metrics, bc, (lo, hi),
                           verify=args.verify, oracle_m=args.m) if hi > lo else []
    notes = sorted({str(w.message) for w in caught})
    cfg = _run_config(args, prob, metrics, lambda_range=[lo, hi], verify=args.verify, m=args.m)
    if _fmt(args, "csv") == "csv":
        text = csv_text(["lambda", "order", "kernel_dim"],
                        [(r.x, r.order, r.kernel_dim) for r in roots])
    else:
        text = dumps({"schema": SCAN_SCHEMA, "config": cfg, "warnings": notes,
                      "roots": [{"lambda": r.x, "order": r.order, "slope": r.slope,
                                 "sign_change": r.sign_change, "kernel_dim": r.kernel_dim,
                                 "flagged": r.flagged} for r in roots]})
    _emit(args, text, started)
    return EXIT_OK


def _check_oracle_size(prob, m):
    k = prob.problem(grid=8).k
    if 4 * m * k + 2 * prob.n > MAX_ORACLE_DIM:
        raise UsageError(f"--m {m} gives an oracle of dimension {4*m*k}; limit is {MAX_ORACLE_DIM}")


def cmd_oracle(args):
    started = time.perf_counter()
    prob = load_problem(args.problem, args.grid)
    _check_oracle_size(prob, args.m)
    metrics = _metrics(args, prob)
    ref = refine(prob.doubled(), metrics, args.m)
    fine = ref.spectra[-1]
    cfg = _run_config(args, prob, metrics, m=args.m)
    if _fmt(args) == "csv":
        text = csv_text(["index", "eigenvalue"], enumerate(fine.eigenvalues))
    else:
        text = dumps({
            "schema": SPECTRUM_SCHEMA, "config": cfg,
            "m": fine.m,
            "eigenvalues": fine.eigenvalues,
            "pv_det": fine.pv_det, "pv_trace": fine.pv_trace,
            "capacity": fine.capacity, "symmetry_defect": fine.symmetry, "pairing_defect": fine.pairing,
            "asym_defect": fine.asym_defect, "constraint_residual": fine.constraint_residual,
            "refinement": {"m": ref.m, "pv_det": ref.pv_det, "pv_trace": ref.pv_trace,
                           "det_extrapolated": ref.det_extrapolated,
                           "trace_extrapolated": ref.trace_extrapolated,
                           "det_error": ref.det_error, "trace_error": ref.trace_error,
                           "monotone": ref.monotone},
        })
    _emit(args, text, started)
    return EXIT_OK


def compare_rows(dp, metrics, m, tol_det, tol_trace, seed=0):
    """Formula versus oracle rows: (quantity, formula, oracle, abs, rel, tol, pass)."""
    norm = normalization(dp, metrics, seed=seed)
    from .determinant import determinant
    det = determinant(dp, norm.metrics, 1.0, norm=norm)
    ref = refine(dp, norm.metrics, m)
    rows = []
    gap = abs(det - ref.det_extrapolated)
    rel = gap / abs(det) if det != 0 else math.inf
    allowed = max(tol_det * abs(det), DET_ABS_FLOOR)
    rows.append(("det", det, ref.det_extrapolated, gap, rel, allowed, gap <= allowed))
    gap = abs(norm.trK - ref.trace_extrapolated)
    rel = gap / abs(norm.trK) if norm.trK != 0 else math.inf
    rows.append(("trace", norm.trK, ref.trace_extrapolated, gap, rel, tol_trace, gap <= tol_trace))
    return rows, ref


def cmd_compare(args):
    started = time.perf_counter()
    prob = load_problem(args.problem, args.grid)
    _check_oracle_size(prob, args.m)
    metrics = _metrics(args, prob)
    rows, ref = compare_rows(prob.doubled(), metrics, args.m, args.tol_det, args.tol_trace, args.seed)
    cfg = _run_config(args, prob, metrics, m=args.m, tol_det=args.tol_det, tol_trace=args.tol_trace)
    header = ["quantity", "formula", "oracle", "abs_gap", "rel_gap", "tolerance", "pass"]
    ok = all(r[-1] for r in rows)
    golden_note = None
    gdir = os.environ.get("JACDET_GOLDEN_DIR")
    if gdir:
        stem = os.path.splitext(os.path.basename(args.problem))[0]
        gpath = os.path.join(gdir, stem + ".compare.json")
        current = {"rows": [dict(zip(header, r)) for r in rows]}
        if os.path.exists(gpath):
            with open(gpath, encoding="utf-8") as fh:
                golden = json.load(fh)
            for g, r in zip(golden["rows"], rows):
                for key, val in (("formula", r[1]), ("oracle", r[2])):
                    if g[key] is None or abs(g[key] - val) > 1e-9 * max(1.0, abs(val)):
                        ok = False
                        golden_note = f"regression: {g['quantity']}.{key} {val!r} != golden {g[key]!r}"
            golden_note = golden_note or f"matches golden {gpath}"
        else:
            os.makedirs(gdir, exist_ok=True)
            write_text(gpath, dumps(current))
            golden_note = f"golden established at {gpath}"
    if _fmt(args) == "csv":
        text = csv_text(header, [(*r[:-1], "PASS" if r[-1] else "FAIL") for r in rows])
    else:
        text = dumps({"schema": COMPARE_SCHEMA, "config": cfg, "pass": ok, "golden": golden_note,
                      "rows": [dict(zip(header, r)) for r in rows],
                      "refinement": {"m": ref.m, "pv_det": ref.pv_det, "pv_trace": ref.pv_trace,
                                     "monotone": ref.monotone}})
    _emit(args, text, started)
    if golden_note:
        print(golden_note, file=sys.stderr)
    return EXIT_OK if ok else EXIT_INPUT


def selftest_checks(m=64):
    """Quick battery: (name, passed, detail) tuples."""
    from .determinant import determinant, periodic
    from .flow import closed_form_s0, fundamental_solution, monodromy
    from .problem import build_drift, build_driftless, double_system
    from .symplectic import annihilator_graph, map_A0, map_A1, symplectic_defect
    out = []
    p = build_driftless(np.pi ** 2, grid=256)
    dp, metrics = periodic(p)
    det = determinant(dp, metrics, 1.0)
    out.append(("hill corrected (omega=pi)", abs(det - hill_reference(p, metrics, constant="corrected"))
                <= 1e-6 * abs(det), f"det={det:.10g}"))
    rows, _ = compare_rows(dp, metrics, m, 0.02, 1e-2)
    for r in rows:
        out.append((f"oracle {r[0]} (omega=pi)", r[-1], f"formula={r[1]:.6g} oracle={r[2]:.6g}"))
    p0 = build_driftless(0.0, grid=256)
    dp0, _ = periodic(p0)
    out.append(("trace W=0 equals -1", abs(trace_K(dp0, metrics) + 1) <= 1e-10, ""))
    Psi = monodromy(p)
    out.append(("monodromy routes agree", np.abs(Psi - monodromy(p, "direct")).max() <= 1e-8, ""))
    sd = max(symplectic_defect(fundamental_solution(p, s).Phi1) for s in (-2, 0, 0.5, 2))
    out.append(("flow symplectic", sd <= 1e-8, f"defect={sd:.2e}"))
    ad = max(symplectic_defect(map_A1(s, metrics, p.phi_tilde)) for s in (-1, 0, 0.5, 2))
    out.append(("A_1^s symplectic", ad <= 1e-12, f"defect={ad:.2e}"))
    cf = closed_form_s0(p)
    h = 1e-4
    fd = (fundamental_solution(p, h).Phi1 - fundamental_solution(p, -h).Phi1) / (2 * h)
    out.append(("s=0 closed form", np.abs(fd - cf.dPhi0_1).max() <= 1e-5, ""))
    pd = build_drift(0.5, 1.0, 1.0, grid=256)
    dd = double_system(pd, annihilator_graph(("graph", pd.meta["phi_hat"])))
    det = determinant(dd, metrics, 1.0)
    ref = hill_reference(pd, metrics, constant="corrected")
    out.append(("drift corrected reference", abs(det - ref) <= 1e-6 * abs(ref), f"det={det:.10g}"))
    return out


def cmd_selftest(args):
    started = time.perf_counter()
    checks = selftest_checks(args.m)
    lines = [f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
             for name, ok, detail in checks]
    ok = all(c[1] for c in checks)
    if _fmt(args) == "csv":
        text = csv_text(["check", "pass", "detail"], [(n, "PASS" if k else "FAIL", d) for n, k, d in checks])
    elif args.out in (None, "-") and args.format is None:
        text = "\n".join(lines) + "\n"
    else:
        text = dumps({"schema": "jacdet-selftest/1", "pass": ok,
                      "checks": [{"name": n, "pass": k, "detail": d} for n, k, d in checks]})
    _emit(args, text, started)
    return EXIT_OK if ok else EXIT_INPUT


COMMANDS = {"det": cmd_det, "scan": cmd_scan, "oracle": cmd_oracle, "compare": cmd_compare,
            "selftest": cmd_selftest}


_RANGE_FLAGS = ("--s", "--lambda")


def _join_ranges(argv):
    """Glue ``--s -3:3:601`` into ``--s=-3:3:601`` so negative ranges parse."""
    out = []
    it = iter(argv)
    for a in it:
        if a in _RANGE_FLAGS:
            v = next(it, None)
            out.append(a if v is None else f"{a}={v}")
        else:
            out.append(a)
    return out


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(_join_ranges(sys.argv[1:] if argv is None else list(argv)))
    try:
        _validate(args)
        return COMMANDS[args.command](args)
    except DegenerateMetric as e:
        print(f"jacdet: degenerate metric: {e}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (ConfigError, UsageError, ProblemError, BoundaryError, MetricError, OSError) as e:
        print(f"jacdet: error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
