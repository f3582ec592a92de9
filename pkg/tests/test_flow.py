import numpy as np
import pytest
from scipy.linalg import expm

from jacdet import (build_drift, build_driftless, closed_form_s0, fundamental_solution, monodromy,
                    periodic, random_fourier)
from jacdet.flow import FlowError
from jacdet.functions import Constant
from jacdet.problem import ProblemLQ
from jacdet.symplectic import std_J


def _fd(p, h=1e-4):
    return (fundamental_solution(p, h).Phi1 - fundamental_solution(p, -h).Phi1) / (2 * h)


@pytest.mark.parametrize("s", [-2.0, 0.0, 0.5, 1.0, 2.0])
def test_flow_symplectic_and_unimodular(s):
    p = build_driftless(random_fourier(np.random.default_rng(2), 1, 3, 1.0), grid=512)
    sol = fundamental_solution(p, s)
    assert sol.symplectic_defect() <= 1e-8
    assert sol.det_defect() <= 1e-8
    dp, _ = periodic(p)
    assert fundamental_solution(dp, s).symplectic_defect() <= 1e-8


def test_constant_Z_matches_matrix_exponential():
    y, x = 0.7, 1.3
    p = ProblemLQ(n=1, k=1, Z=Constant(np.array([[y], [x]])), phi_tilde=np.eye(2), grid=128)
    J = std_J(1)
    for s in (0.5, 2.0):
        Zs = np.array([[s * y], [x]])
        ref = expm(Zs @ Zs.T @ J)
        assert np.abs(fundamental_solution(p, s).Phi1 - ref).max() < 1e-10


def test_free_particle_s0():
    p = build_driftless(0.0, grid=64)
    sol = fundamental_solution(p, 0.0)
    t = sol.t
    ref = np.array([[[1.0, 0.0], [ti, 1.0]] for ti in t])
    assert np.abs(sol.Phi - ref).max() < 1e-14
    assert np.abs(_fd(p)).max() < 1e-12
    assert np.abs(closed_form_s0(p).dPhi0_1).max() < 1e-14


def test_constant_potential_theta_gamma():
    r = 1.7
    cf = closed_form_s0(build_driftless(r, grid=64))
    assert cf.Theta[0, 0] == pytest.approx(r / 2, abs=1e-14)
    assert cf.Gamma[0, 0] == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("make", [
    lambda: build_driftless(np.pi ** 2, grid=1024),
    lambda: build_driftless(random_fourier(np.random.default_rng(11), 2, 2, 1.0), grid=1024),
    lambda: build_drift(np.array([[0.0, 1.0], [-1.0, 0.3]]), np.array([[0.0], [1.0]]),
                        np.diag([0.5, 1.0]), grid=1024),
])
def test_closed_form_matches_finite_differences(make):
    p = make()
    cf = closed_form_s0(p)
    assert np.abs(_fd(p) - cf.dPhi0_1).max() <= 1e-5
    assert np.abs(fundamental_solution(p, 0.0).Phi - cf.Phi0).max() <= 1e-10


def test_omega_is_symmetric_source():
    # dPhi at s=0 is in sp(2n): [[Theta, 0], [Omega, -Theta^T]] with Omega symmetric
    p = build_driftless(random_fourier(np.random.default_rng(4), 2, 3, 1.0), grid=512)
    Om = closed_form_s0(p).Omega
    assert np.allclose(Om, Om.T, atol=1e-12)


@pytest.mark.parametrize("omega", [np.pi, 2.0, 5.1])
def test_harmonic_monodromy(omega):
    p = build_driftless(omega ** 2, grid=1024)
    c, s = np.cos(omega), np.sin(omega)
    ref = np.array([[c, -omega * s], [s / omega, c]])
    for route in ("jacobi", "direct"):
        assert np.abs(monodromy(p, route) - ref).max() < 1e-8


def test_free_monodromy():
    p = build_driftless(0.0, grid=64)
    for route in ("jacobi", "direct"):
        assert np.allclose(monodromy(p, route), [[1, 0], [1, 1]], atol=1e-13)


def test_drift_monodromy_routes_agree():
    A = np.array([[0.1, 1.0], [-2.0, 0.0]])
    p = build_drift(A, np.eye(2), np.diag([1.0, 3.0]), grid=1024)
    assert np.abs(monodromy(p) - monodromy(p, "direct")).max() < 1e-8


def test_refinement_is_fourth_order():
    R = random_fourier(np.random.default_rng(9), 1, 3, 2.0)
    ref = fundamental_solution(build_driftless(R, grid=2048), 2.0).Phi1
    e1 = np.abs(fundamental_solution(build_driftless(R, grid=32), 2.0).Phi1 - ref).max()
    e2 = np.abs(fundamental_solution(build_driftless(R, grid=64), 2.0).Phi1 - ref).max()
    assert e1 / e2 >= 8.0


def test_flow_error_on_overflow():
    p = ProblemLQ(n=1, k=1, Z=Constant(np.array([[1e80], [1e80]])), phi_tilde=np.eye(2), grid=64)
    with pytest.raises(FlowError, match="non-finite"):
        fundamental_solution(p, 1.0)
