"""Acceptance criteria. Each test prints one PASS/FAIL line.

Run standalone with ``python3 tests/test_acceptance.py`` or through pytest;
the lines are repeated in the pytest terminal summary.
"""
import glob
import math
import os
import time

import numpy as np
import pytest

from conftest import record
from jacdet import (MetricPair, annihilator_graph, assemble_K, build_drift, build_driftless,
                    build_schrodinger, closed_form_s0, determinant, double_system,
                    fundamental_solution, hill_reference, kernel_dimension, map_A0, map_A1,
                    periodic, random_fourier, refine, scan_zeros, symplectic_defect, trace_K)
from jacdet.config import load_problem
from jacdet.determinant import estimate_order
from jacdet.oracle import pv_spectrum
from jacdet.symplectic import isotropy_residual

PROBLEMS = sorted(glob.glob(os.path.join(os.path.dirname(__file__), "..", "problems", "*.json")))


def _rel(x, ref):
    return abs(x - ref) / abs(ref)


def _random_driftless(seed, grid=1024):
    return build_driftless(random_fourier(np.random.default_rng(seed), 1, 3, 1.0), grid=grid)


@pytest.fixture(scope="module")
def oracle_set():
    """omega = pi oscillator and two random driftless problems, refined 256/512/1024."""
    t0 = time.perf_counter()
    out = []
    for name, p in (("omega=pi", build_driftless(np.pi ** 2, grid=1024)),
                    ("random seed 100", _random_driftless(100)),
                    ("random seed 101", _random_driftless(101))):
        dp, metrics = periodic(p)
        out.append((name, dp, metrics, refine(dp, metrics, 256)))
    return out, time.perf_counter() - t0


def test_criterion_1_hill_consistency():
    t0 = time.perf_counter()
    worst, worst_corr = 0.0, 0.0
    for seed in range(5):
        p = _random_driftless(seed)
        dp, metrics = periodic(p)
        det = determinant(dp, metrics, 1.0)
        worst = max(worst, _rel(det, hill_reference(p, metrics)))
        worst_corr = max(worst_corr, _rel(det, hill_reference(p, metrics, constant="corrected")))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed <= 10.0
    record("criterion 1: Hill consistency, published constant", ok,
           f"max rel gap {worst:.3e}, tol 1e-6, {elapsed:.2f} s; "
           f"corrected constant max rel gap {worst_corr:.3e}")
    assert ok


def test_criterion_2_oracle_equivalence(oracle_set):
    rows, elapsed = oracle_set
    gaps = []
    equiv = True
    for name, dp, metrics, ref in rows:
        det = determinant(dp, metrics, 1.0)
        tol = max(0.02 * abs(det), 5e-3)
        gap = abs(ref.det_extrapolated - det)
        equiv &= gap <= tol
        gaps.append(f"{name}: formula {det:.8g} oracle {ref.det_extrapolated:.8g}")
    det_pi = determinant(rows[0][1], rows[0][2], 1.0)
    anchor = -2.0 / math.e
    anchor_ok = _rel(det_pi, anchor) <= 0.02
    ok = equiv and anchor_ok and elapsed <= 90.0
    record("criterion 2: oracle equivalence and omega=pi anchor -2/e", ok,
           f"equivalence {'ok' if equiv else 'failed'}; omega=pi det {det_pi:.8g} vs anchor "
           f"{anchor:.8g} (rel gap {_rel(det_pi, anchor):.3f}, tol 0.02); {elapsed:.1f} s; "
           + "; ".join(gaps))
    assert ok


def test_criterion_3_trace_formula(oracle_set):
    rows, _ = oracle_set
    worst = 0.0
    for _, dp, metrics, ref in rows:
        worst = max(worst, abs(trace_K(dp, metrics) - ref.trace_extrapolated))
    p0 = build_driftless(0.0, grid=256)
    dp0, metrics0 = periodic(p0)
    tr0 = trace_K(dp0, metrics0)
    orc0 = refine(dp0, metrics0, 64).trace_extrapolated
    ok = worst <= 1e-2 and abs(tr0 + 1) <= 1e-3 and abs(orc0 + 1) <= 1e-3
    record("criterion 3: trace formula", ok,
           f"max |trace_K - oracle| {worst:.2e}, tol 1e-2; W=0: formula {tr0:.6g}, oracle {orc0:.6g}")
    assert ok


def test_criterion_4_s0_closed_forms():
    worst_fd, worst_exact = 0.0, 0.0
    h = 1e-4
    for p in (build_driftless(np.pi ** 2, grid=1024), _random_driftless(7),
              build_drift(0.5, 1.0, 1.0, grid=1024)):
        cf = closed_form_s0(p)
        fd = (fundamental_solution(p, h).Phi1 - fundamental_solution(p, -h).Phi1) / (2 * h)
        worst_fd = max(worst_fd, float(np.abs(fd - cf.dPhi0_1).max()))
        worst_exact = max(worst_exact, float(np.abs(fundamental_solution(p, 0.0).Phi1 - cf.Phi0_1).max()))
    ok = worst_fd <= 1e-5 and worst_exact <= 1e-10
    record("criterion 4: s=0 closed forms", ok,
           f"derivative vs central FD {worst_fd:.2e} (tol 1e-5); Phi_1^0 vs block form "
           f"{worst_exact:.2e} (tol 1e-10)")
    assert ok


def test_criterion_5_schrodinger_scan():
    metrics = MetricPair.identity(1)
    bc = annihilator_graph("periodic", 1)
    roots = scan_zeros(lambda lam: build_schrodinger(0.0, lam, grid=1024), metrics, bc,
                       (-100.0, 1.0), verify=True)
    xs = sorted(r.x for r in roots)
    expected = [-(2 * np.pi) ** 2, 0.0]
    located = len(xs) == 2 and all(abs(x - e) <= 1e-6 for x, e in zip(xs, expected))
    kernels = [r.kernel_dim for r in roots]
    ok = located and all(k is not None and k >= 1 for k in kernels)
    record("criterion 5: Schrodinger scan", ok,
           f"roots {[f'{x:.10f}' for x in xs]}, kernel dims {kernels}, orders {[r.order for r in roots]}")
    assert ok


def test_criterion_6_multiplicity():
    p = build_driftless(0.0, grid=256)
    dp, metrics = periodic(p)
    order, slope = estimate_order(lambda s: determinant(dp, metrics, s), 1.0)
    kdim = kernel_dimension(assemble_K(dp, metrics, 64), 1.0, 1e-6)
    ok = order == kdim == 1
    record("criterion 6: multiplicity correspondence", ok,
           f"order {order} (slope {slope:.4f}), oracle kernel dimension {kdim}")
    assert ok


def test_criterion_7_structural_invariants():
    rng = np.random.default_rng(7)
    worst = {"A_i^s": 0.0, "Phi_t^s": 0.0, "basis": 0.0, "isotropy": 0.0, "constraint": 0.0}
    for path in PROBLEMS:
        prob = load_problem(path, grid=512)
        p = prob.problem()
        bc = prob.boundary(p)
        dp = double_system(p, bc)
        metrics = prob.metrics
        for s in (-1.0, 0.0, 0.5, 2.0):
            worst["A_i^s"] = max(worst["A_i^s"], symplectic_defect(map_A0(s, metrics)),
                                 symplectic_defect(map_A1(s, metrics, p.phi_tilde)))
        for s in (-2.0, 0.0, 0.5, 1.0, 2.0):
            sol = fundamental_solution(dp, s)
            worst["Phi_t^s"] = max(worst["Phi_t^s"], float(sol.symplectic_defect()))
        C = rng.standard_normal((bc.T0.shape[1],) * 2) + 3 * np.eye(bc.T0.shape[1])
        dq = double_system(p, bc.rebased(C))
        for s in (0.5, 1.0, 2.0):
            v0, v1 = determinant(dp, metrics, s), determinant(dq, metrics, s)
            worst["basis"] = max(worst["basis"], abs(v0 - v1) / max(abs(v0), 1e-3))
        worst["isotropy"] = max(worst["isotropy"], isotropy_residual(bc.T0, bc.T1),
                                isotropy_residual(*(dq.bc.T0, dq.bc.T1)))
        g = assemble_K(dp, metrics, 32)
        _, vecs = g.eig()
        worst["constraint"] = max(worst["constraint"], g.constraint_residual(vecs))
    tol = {"A_i^s": 1e-8, "Phi_t^s": 1e-8, "basis": 1e-9, "isotropy": 1e-12, "constraint": 1e-8}
    ok = all(worst[k] <= tol[k] for k in tol)
    record("criterion 7: structural invariants", ok,
           ", ".join(f"{k} {worst[k]:.1e}/{tol[k]:.0e}" for k in tol) + f" over {len(PROBLEMS)} examples")
    assert ok


def test_criterion_8_drift():
    p = build_drift(0.5, 1.0, 0.0, grid=1024)
    metrics = MetricPair.identity(1)
    dp = double_system(p, annihilator_graph(("graph", p.meta["phi_hat"])))
    det = determinant(dp, metrics, 1.0)
    ref = hill_reference(p, metrics)
    # the reference is 0 here, so relative agreement falls back to an absolute floor
    gap = abs(det - ref) if abs(ref) < 1e-8 else _rel(det, ref)
    ok = gap <= 1e-6
    # with R = 0 both sides vanish; R = 1 exercises the nonzero branch
    q = build_drift(0.5, 1.0, 1.0, grid=1024)
    dq = double_system(q, annihilator_graph(("graph", q.meta["phi_hat"])))
    det_r = determinant(dq, metrics, 1.0)
    note = (f"R=1: det {det_r:.8g}, published {hill_reference(q, metrics):.8g}, "
            f"corrected {hill_reference(q, metrics, constant='corrected'):.8g}")
    record("criterion 8: drift Hill reference", ok,
           f"det {det:.3e}, reference {ref:.3e}, gap {gap:.2e}; Gamma = int X X^T, X = Phi_hat^-1 B; "
           + note)
    assert ok


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q"]))
