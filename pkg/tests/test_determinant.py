import math
import sys

import numpy as np
import pytest

from jacdet import (DegenerateMetric, MetricPair, annihilator_graph, assemble_K, build_drift,
                    build_driftless, build_schrodinger, closed_form_s0, det_Q, det_report,
                    determinant, double_system, hill_reference, normalization, periodic,
                    random_fourier, scan_zeros, trace_K)
from jacdet.determinant import estimate_order, find_roots
from jacdet.oracle import pv_spectrum

# the package re-exports the function determinant under the module's name
detmod = sys.modules["jacdet.determinant"]


def _neumann(p):
    L = np.array([[0.0], [1.0]])
    return double_system(p, annihilator_graph(("separated", L, L)))


def test_det_Q_free_particle_example(free):
    p, dp, metrics = free
    assert det_Q(dp, metrics, 0.0) == pytest.approx(-2.0, abs=1e-13)
    norm = normalization(dp, metrics)
    assert norm.a == pytest.approx(-2.0, abs=1e-13)
    assert norm.b == pytest.approx(0.0, abs=1e-8)
    assert norm.trK == pytest.approx(-1.0, abs=1e-12)


@pytest.mark.parametrize("n, seed", [(1, 0), (2, 1)])
def test_det_Q0_periodic_closed_form(n, seed):
    rng = np.random.default_rng(seed)
    H = rng.standard_normal((n, n))
    H = H @ H.T + np.eye(n)
    metrics = MetricPair.from_blocks(np.eye(n), H)
    p = build_driftless(random_fourier(rng, n, 2, 1.0), grid=256)
    dp, _ = periodic(p)
    Gam = closed_form_s0(p).Gamma
    ref = (-1) ** n * np.linalg.det(Gam) * np.linalg.det(2 * H)
    assert det_Q(dp, metrics, 0.0) == pytest.approx(ref, rel=1e-10)


def test_main_formula_sign_is_exp_minus_bs(harmonic):
    _, dp, metrics = harmonic
    norm = normalization(dp, metrics)
    for s in (-1.5, 0.3, 1.0, 2.0):
        expected = det_Q(dp, metrics, s) / norm.a * math.exp(-norm.b * s)
        assert determinant(dp, metrics, s, norm=norm) == expected


def test_determinant_is_one_at_zero(harmonic):
    _, dp, metrics = harmonic
    assert determinant(dp, metrics, 0.0) == pytest.approx(1.0, abs=1e-14)


def test_analytic_log_derivative_matches_fd(harmonic):
    _, dp, metrics = harmonic
    norm = normalization(dp, metrics)
    assert norm.fd_rel_gap < 1e-7


def test_derivative_of_det_at_zero_is_trace(harmonic):
    _, dp, metrics = harmonic
    h = 1e-5
    fd = (determinant(dp, metrics, h) - determinant(dp, metrics, -h)) / (2 * h)
    assert fd == pytest.approx(trace_K(dp, metrics), rel=1e-6)


@pytest.mark.parametrize("n, seed", [(1, 3), (2, 4)])
def test_hill_corrected(n, seed):
    rng = np.random.default_rng(seed)
    p = build_driftless(random_fourier(rng, n, 3, 1.0), grid=1024)
    H = np.diag(rng.uniform(0.5, 2.0, n))
    metrics = MetricPair.from_blocks(np.eye(n), H)
    dp, _ = periodic(p)
    det = determinant(dp, metrics, 1.0)
    assert det == pytest.approx(hill_reference(p, metrics, constant="corrected"), rel=1e-7)
    pub = hill_reference(p, metrics)
    assert pub == pytest.approx(math.exp(-n) * hill_reference(p, metrics, constant="corrected"))
    assert hill_reference(p, metrics, reading="sum") == pytest.approx(
        hill_reference(p, metrics, reading="equal", constant="published"), rel=1e-12)


def test_harmonic_value(harmonic):
    p, dp, metrics = harmonic
    assert determinant(dp, metrics, 1.0) == pytest.approx(-2.0, rel=1e-8)
    assert hill_reference(p, metrics) == pytest.approx(-2 / math.e, rel=1e-8)


def test_b_vanishes_across_boundaries():
    p = build_driftless(random_fourier(np.random.default_rng(6), 1, 3, 1.0), grid=512)
    m = MetricPair.identity(1)
    for dp in (periodic(p)[0], _neumann(p), double_system(p, annihilator_graph(("graph", 1.7)))):
        assert abs(normalization(dp, m).b) < 1e-7


def test_drift_b_is_zero_not_published():
    p = build_drift(0.5, 1.0, 1.0, grid=1024)
    metrics = MetricPair.from_blocks(1.0, 1.5, 1.0, 0.7)
    dp = double_system(p, annihilator_graph(("graph", p.meta["phi_hat"])))
    norm = normalization(dp, metrics)
    Ph = p.meta["phi_hat"]
    G0, G1 = metrics.block(0, "horizontal"), metrics.block(1, "horizontal")
    published_b = 2 * np.trace(np.linalg.solve(G0 + Ph.T @ G1 @ Ph, G0))
    assert abs(norm.b) < 1e-7
    assert abs(published_b) > 0.1
    det = determinant(dp, metrics, 1.0, norm=norm)
    assert det == pytest.approx(hill_reference(p, metrics, constant="corrected"), rel=1e-7)


def test_trace_methods_agree_where_lemma_applies(harmonic):
    _, dp, metrics = harmonic
    assert trace_K(dp, metrics, method="lemma") == pytest.approx(trace_K(dp, metrics), abs=1e-10)
    p = build_drift(0.5, 1.0, 1.0, grid=512)
    dq = double_system(p, annihilator_graph(("graph", p.meta["phi_hat"])))
    assert trace_K(dq, metrics, method="lemma") == pytest.approx(trace_K(dq, metrics), abs=1e-9)


def test_trace_complement_matches_oracle_on_separated():
    p = build_driftless(2.0, grid=512)
    dp = _neumann(p)
    metrics = MetricPair.identity(1)
    orc = pv_spectrum(assemble_K(dp, metrics, 256)).pv_trace
    assert trace_K(dp, metrics) == pytest.approx(orc, abs=1e-2)
    # the literal lemma is off here; see the ledger
    assert abs(trace_K(dp, metrics, method="lemma") - orc) > 0.5
    with pytest.raises(ValueError):
        trace_K(dp, metrics, method="nope")


@pytest.mark.parametrize("kind", ["periodic", "neumann", "graph"])
def test_basis_invariance(kind, rng):
    p = build_driftless(random_fourier(np.random.default_rng(8), 1, 3, 1.0), grid=256)
    if kind == "periodic":
        bc = annihilator_graph("periodic", 1)
    elif kind == "neumann":
        L = np.array([[0.0], [1.0]])
        bc = annihilator_graph(("separated", L, L))
    else:
        bc = annihilator_graph(("graph", 0.6))
    metrics = MetricPair.identity(1)
    dp = double_system(p, bc)
    for _ in range(3):
        C = rng.standard_normal((2, 2))
        C = C if abs(np.linalg.det(C)) > 0.2 else C + 2 * np.eye(2)
        dq = double_system(p, bc.rebased(C))
        for s in (0.5, 1.0, 2.5):
            assert determinant(dq, metrics, s) == pytest.approx(determinant(dp, metrics, s), rel=1e-9)


def test_zero_set_matches_oracle_spectrum(harmonic):
    """Zeros of det(I + sK) on |s| <= 3 are the -1/mu of the oracle spectrum."""
    _, dp, metrics = harmonic
    mu = pv_spectrum(assemble_K(dp, metrics, 512)).eigenvalues
    expected = np.sort([-1 / x for x in mu if abs(x) > 1 / 3 and abs(1 / x) <= 3])
    f = lambda s: det_Q(dp, metrics, s)
    found = np.sort([r.x for r in find_roots(f, -3.0, 3.0, num=601)])
    assert len(found) == len(expected) > 0
    assert np.abs(found - expected).max() <= 2e-3


def test_metric_scaling_covariance(harmonic):
    _, dp, metrics = harmonic
    base = determinant(dp, metrics, 1.0)
    for c in (0.5, 3.0):
        assert determinant(dp, metrics.scaled(c), 1.0) == pytest.approx(base / c ** dp.n, rel=1e-8)


def test_kernel_at_s1_is_metric_independent():
    """W = 0 has a one-dimensional kernel at s = 1 for every metric."""
    p = build_driftless(0.0, grid=256)
    dp, m = periodic(p)
    for metrics in (m, m.scaled(4.0), MetricPair.from_blocks(2.0, 0.3, 1.0, 5.0)):
        assert abs(determinant(dp, metrics, 1.0)) < 1e-10
        assert abs(determinant(dp, metrics, 0.9)) > 1e-3


def test_degenerate_metric_raises(monkeypatch, free):
    _, dp, metrics = free
    monkeypatch.setattr(detmod, "DEGENERACY_REL", 1e300)
    with pytest.raises(DegenerateMetric):
        normalization(dp, metrics)


def test_perturbation_recovers(monkeypatch, free):
    _, dp, metrics = free
    calls = {"n": 0}
    real = detmod._hadamard_bound

    def bound(Q):
        calls["n"] += 1
        return 1e300 if calls["n"] == 1 else real(Q)

    monkeypatch.setattr(detmod, "_hadamard_bound", bound)
    norm = normalization(dp, metrics, seed=3)
    assert norm.perturbed == 1
    assert not np.array_equal(norm.metrics.G0, metrics.G0)
    assert np.abs(norm.metrics.G0 - metrics.G0).max() < 1e-2


def test_find_roots_orders():
    f = lambda x: (x - 1) * (x + 2) ** 2
    roots = find_roots(f, -3, 3, num=300)
    assert [round(r.x, 8) for r in roots] == [-2.0, 1.0]
    assert [r.order for r in roots] == [2, 1]
    assert [r.sign_change for r in roots] == [False, True]
    assert find_roots(f, 3, -3) == []
    assert estimate_order(lambda x: (x - 0.5) ** 3, 0.5)[0] == 3


def test_schrodinger_scan_shift():
    metrics = MetricPair.identity(1)
    bc = annihilator_graph("periodic", 1)
    c = 3.0
    base = scan_zeros(lambda lam: build_schrodinger(0.0, lam, grid=512), metrics, bc, (-45, 1))
    shifted = scan_zeros(lambda lam: build_schrodinger(c, lam, grid=512), metrics, bc, (-48, -2))
    assert len(base) == len(shifted) == 2
    for a, b in zip(base, shifted):
        assert b.x == pytest.approx(a.x - c, abs=1e-6)
        assert a.order == b.order


def test_schrodinger_band_edge():
    p = build_schrodinger(0.0, -(2 * np.pi) ** 2, grid=1024)
    dp, metrics = periodic(p)
    assert abs(determinant(dp, metrics, 1.0)) < 1e-8


def test_det_report(harmonic):
    _, dp, metrics = harmonic
    rep = det_report(dp, metrics, np.linspace(-2, 2, 81))
    assert rep.a == pytest.approx(-2.0)
    assert rep.detIK[40] == pytest.approx(1.0)
    assert rep.diagnostics["symplectic_defect_Phi1"] < 1e-8
    mu = pv_spectrum(assemble_K(dp, metrics, 256)).eigenvalues
    expected = sorted(-1 / x for x in mu if abs(1 / x) <= 2)
    assert np.allclose(sorted(z.x for z in rep.zeros), expected, atol=2e-3)


def test_dirichlet_boundary():
    p = build_driftless(1.0, grid=512)
    D = np.array([[1.0], [0.0]])
    dp = double_system(p, annihilator_graph(("separated", D, D)))
    metrics = MetricPair.identity(1)
    assert dp.d == 0
    ref = pv_spectrum(assemble_K(dp, metrics, 512)).pv_det
    assert determinant(dp, metrics, 1.0) == pytest.approx(ref, rel=1e-2)


def test_hill_reference_errors(free):
    p, _, metrics = free
    with pytest.raises(ValueError):
        hill_reference(p, metrics, constant="other")
    with pytest.raises(ValueError):
        hill_reference(p, metrics, reading="other")
