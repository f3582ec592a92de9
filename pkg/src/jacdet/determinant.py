"""Characteristic function det(Q^s), normalisation constants and det(I + sK).

The determinant of the second variation is evaluated as

    det(I + sK) = a^{-1} exp(-b s) p(s),

with p the characteristic function, a = p(0) and
b = p'(0)/p(0) - tr K. This is the unique entire function of order <= 1
with value 1 and logarithmic derivative tr K at s = 0 sharing the zeros
of p.
"""
from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy.optimize import brentq

from .flow import closed_form_s0, fundamental_solution, monodromy
from .problem import DoubledProblem, ProblemError, ProblemLQ, double_system
from .symplectic import (MetricPair, annihilator_graph, dmap_A0, dmap_A1, map_A0,
                         map_A1, std_J)

DEGENERACY_REL = 1e-10
PERTURB_EPS = 1e-3
PERTURB_RETRIES = 5
FD_CHECK_REL = 1e-5


class DegenerateMetric(RuntimeError):
    """a = p(0) vanishes for the metrics tried."""


def _doubled(p, bc=None):
    if isinstance(p, DoubledProblem):
        return p
    if bc is None:
        raise ProblemError("a boundary subspace is required for a bare ProblemLQ")
    return double_system(p, bc)


def _bc_norm(bc):
    """det((T0^T T0 + T1^T T1)/2)^{1/2}; equals 1 for T0 = T1 = I."""
    G = 0.5 * (bc.T0.T @ bc.T0 + bc.T1.T @ bc.T1)
    return math.sqrt(np.linalg.det(G))


def q_matrix(dp, metrics, s, flow=None):
    """T1^T J A_1^s phi_tilde Phi_1^s A_0^s - T0^T J (unnormalised)."""
    p, bc = dp.base, dp.bc
    J = std_J(p.n)
    Phi1 = (flow if flow is not None else fundamental_solution(p, s)).Phi1
    M = map_A1(s, metrics, p.phi_tilde) @ p.phi_tilde @ Phi1 @ map_A0(s, metrics)
    return bc.T1.T @ J @ M - bc.T0.T @ J


def det_Q(dp, metrics, s, bc=None):
    """Normalised characteristic function p(s) = det(Q^s).

    Vanishes exactly when graph(A_1^s phi_tilde Phi_1^s A_0^s) meets A(N).
    """
    dp = _doubled(dp, bc)
    return float(np.linalg.det(q_matrix(dp, metrics, s))) / _bc_norm(dp.bc)


def log_derivative_s0(dp, metrics, cf=None):
    """p'(0)/p(0) by Jacobi's formula and the s = 0 closed forms."""
    p, bc = dp.base, dp.bc
    J = std_J(p.n)
    cf = closed_form_s0(p) if cf is None else cf
    F = p.phi_tilde
    A0, A1 = map_A0(0.0, metrics), map_A1(0.0, metrics, F)
    dA0, dA1 = dmap_A0(metrics), dmap_A1(metrics, F)
    P0, dP0 = cf.Phi0_1, cf.dPhi0_1
    Q0 = bc.T1.T @ J @ A1 @ F @ P0 @ A0 - bc.T0.T @ J
    dM = dA1 @ F @ P0 @ A0 + A1 @ F @ dP0 @ A0 + A1 @ F @ P0 @ dA0
    dQ = bc.T1.T @ J @ dM
    return float(np.trace(np.linalg.solve(Q0, dQ))), Q0


def trace_K_lemma(dp, metrics, bc=None, cf=None):
    """tr K from the doubled-system trace lemma, evaluated literally.

    tr K = -dim N + tr[pi1 F^{-1} pr J1 F Z0]
           + tr[Gamma^{-1} (Omega + (pi2 - pi1) F^{-1} pr J1 F Xi)],
    where F = diag(I, phi_tilde), pr is the (g0 + g1)-orthogonal projection
    onto the image of F Z1, J1 = (-J_0) + J_1 and Xi = (0; 0; Theta; Gamma).

    This agrees with the Galerkin oracle for periodic boundary conditions
    and for the graph of the reference state flow, but not for separated
    conditions or other graphs; ``trace_K`` defaults to the complement
    formula, which holds for every boundary.
    """
    dp = _doubled(dp, bc)
    p = dp.base
    n = p.n
    cf = closed_form_s0(p) if cf is None else cf
    J = std_J(n)
    O = np.zeros((2 * n, 2 * n))
    Gt = np.block([[metrics.G0, O], [O, metrics.G1]])
    Jt = np.block([[-np.linalg.solve(metrics.G0, J), O], [O, np.linalg.solve(metrics.G1, J)]])
    F = dp.phi_tilde
    Wb = F @ dp.Z1
    if Wb.shape[1]:
        pr = Wb @ np.linalg.solve(Wb.T @ Gt @ Wb, Wb.T @ Gt)
    else:
        pr = np.zeros((4 * n, 4 * n))
    op = np.linalg.solve(F, pr @ Jt @ F)
    pi1 = slice(n, 2 * n)
    pi2 = slice(3 * n, 4 * n)
    OpZ0 = op @ dp.Z0
    Xi = np.vstack([np.zeros((2 * n, n)), cf.Theta, cf.Gamma])
    OpXi = op @ Xi
    inner = cf.Omega + OpXi[pi2] - OpXi[pi1]
    return float(-dp.d + np.trace(OpZ0[pi1]) + np.trace(np.linalg.solve(cf.Gamma, inner)))


def trace_K_complement(dp, metrics, bc=None, cf=None):
    """tr K as the full-space trace minus the trace on the complement of V.

    On H = R^d + L^2 the Volterra part has zero trace, so the full trace is
    that of the boundary block, tr(G_c^{-1} sym(N1^T F_pq N0)) - d. The
    complement of V is n-dimensional, spanned by u_t = X_t^T F_qq^T nu,
    c = G_c^{-1} (F_qq N0 - N1)^T nu, and its contribution only involves
    Gamma, Theta and Omega.
    """
    dp = _doubled(dp, bc)
    p = dp.base
    n, d = p.n, dp.d
    cf = closed_form_s0(p) if cf is None else cf
    F = p.phi_tilde
    Fpp, Fpq, Fqq = F[:n, :n], F[:n, n:], F[n:, n:]
    N0, N1 = dp.tangent[:n], dp.tangent[n:]
    Gc = N0.T @ metrics.block(0, "horizontal") @ N0 + N1.T @ metrics.block(1, "horizontal") @ N1
    B0 = N1.T @ Fpq @ N0
    full = (np.trace(np.linalg.solve(Gc, 0.5 * (B0 + B0.T))) if d else 0.0) - d
    M = Fqq @ N0 - N1
    Cm = np.linalg.solve(Gc, M.T) if d else np.zeros((0, n))
    S = M @ Cm + Fqq @ cf.Gamma @ Fqq.T
    X0, X1 = N0 @ Cm, N1 @ Cm
    P = Fqq.T
    Bv = P.T @ cf.Theta.T @ X0 - P.T @ cf.Omega @ P
    Bv = Bv + X1.T @ (Fpp @ cf.Theta @ P + Fpq @ (X0 + cf.Gamma @ P)) - Cm.T @ Gc @ Cm
    return float(full - np.trace(np.linalg.solve(S, 0.5 * (Bv + Bv.T))))


def trace_K(dp, metrics, bc=None, cf=None, method="complement"):
    """tr K; ``method`` is 'complement' (default) or 'lemma'."""
    if method == "complement":
        return trace_K_complement(dp, metrics, bc, cf)
    if method == "lemma":
        return trace_K_lemma(dp, metrics, bc, cf)
    raise ValueError(f"unknown trace method {method!r}")


@dataclass(frozen=True)
class Normalization:
    a: float
    b: float
    trK: float
    log_derivative: float
    fd_log_derivative: float
    fd_rel_gap: float
    cond_Q0: float
    metrics: MetricPair
    perturbed: int = 0

    def __iter__(self):
        return iter((self.a, self.b))


def _hadamard_bound(Q):
    return float(np.prod(np.linalg.norm(Q, axis=0)))


def _fd_log_derivative(dp, metrics, h=1e-4):
    pp = det_Q(dp, metrics, h)
    pm = det_Q(dp, metrics, -h)
    p0 = det_Q(dp, metrics, 0.0)
    return (pp - pm) / (2 * h * p0)


def _perturb(metrics, rng, eps):
    n = metrics.n

    def one(G):
        out = np.zeros_like(G)
        for sl in (slice(0, n), slice(n, 2 * n)):
            S = rng.standard_normal((n, n))
            S = 0.5 * (S + S.T)
            P = np.eye(n) + eps * S
            blk = P @ G[sl, sl] @ P.T
            out[sl, sl] = 0.5 * (blk + blk.T)
        return out

    return MetricPair(one(metrics.G0), one(metrics.G1))


def normalization(dp, metrics, bc=None, *, seed=0, check_fd=True, trace_method="complement"):
    """Constants (a, b) with det(I + sK) = a^{-1} exp(-b s) p(s).

    a = p(0); b = p'(0)/p(0) - tr K. When |a| is below 1e-10 times the
    Hadamard bound of Q^0 the metrics are perturbed congruentially by
    I + eps S (eps = 1e-3, S random symmetric) up to five times.

    Raises
    ------
    DegenerateMetric
        If every perturbation still gives a degenerate a.
    """
    dp = _doubled(dp, bc)
    cf = closed_form_s0(dp.base)
    rng = np.random.default_rng(seed)
    current = metrics
    for attempt in range(PERTURB_RETRIES + 1):
        ld, Q0 = log_derivative_s0(dp, current, cf)
        a = float(np.linalg.det(Q0)) / _bc_norm(dp.bc)
        if abs(a) * _bc_norm(dp.bc) > DEGENERACY_REL * _hadamard_bound(Q0):
            break
        if attempt == PERTURB_RETRIES:
            raise DegenerateMetric(f"p(0) vanishes after {PERTURB_RETRIES} metric perturbations "
                                   "(nongeneric metric)")
        current = _perturb(current, rng, PERTURB_EPS)
    trK = trace_K(dp, current, cf=cf, method=trace_method)
    fd = _fd_log_derivative(dp, current) if check_fd else float("nan")
    gap = abs(fd - ld) / max(1.0, abs(ld)) if check_fd else float("nan")
    if check_fd and gap > FD_CHECK_REL:
        warnings.warn(f"analytic p'(0)/p(0) = {ld:.10g} differs from finite differences "
                      f"{fd:.10g} (relative {gap:.2e})", RuntimeWarning, stacklevel=2)
    return Normalization(a, ld - trK, trK, ld, fd, gap, float(np.linalg.cond(Q0)), current, attempt)


def determinant(dp, metrics, s, bc=None, norm=None):
    """det(I + sK) = a^{-1} exp(-b s) det(Q^s)."""
    dp = _doubled(dp, bc)
    norm = normalization(dp, metrics) if norm is None else norm
    pq = det_Q(dp, norm.metrics, s)
    return pq / norm.a * math.exp(-norm.b * s)


# -- closed-form references ---------------------------------------------------

def hill_reference(p, metrics, *, constant="published", reading="equal"):
    """Closed-form Hill-type right-hand sides.

    Periodic driftless (and Schrodinger) problems:
    (-1)^n c_n det(G)^{-1} det(Gamma)^{-1} det(I - Psi), where with
    ``reading='equal'`` G = (G^2_0 + G^2_1)/2 and c_n = (2e)^{-n}, and with
    ``reading='sum'`` G = G^2_0 + G^2_1 and c_n = e^{-n}.

    Drift problems with boundary graph(Phi_hat):
    (-1)^n exp(-beta) det(G)^{-1} det(Gamma)^{-1} det(Psi - Phi_lift),
    G = G^2_0 + Phi_hat^T G^2_1 Phi_hat, beta = 2 tr(G^{-1} G^2_0).

    ``constant='published'`` uses the constants as stated in the closed
    forms; ``constant='corrected'`` uses the values that the engine and the
    Galerkin oracle reproduce: no factor e^{-n} in the periodic case and
    beta = 0 with drift (b = 0 in both). See the decisions ledger.
    """
    if constant not in ("published", "corrected"):
        raise ValueError(f"constant must be 'published' or 'corrected', got {constant!r}")
    if reading not in ("equal", "sum"):
        raise ValueError(f"reading must be 'equal' or 'sum', got {reading!r}")
    if isinstance(p, DoubledProblem):
        p = p.base
    n = p.n
    G0 = metrics.block(0, "horizontal")
    G1 = metrics.block(1, "horizontal")
    Gam = closed_form_s0(p).Gamma
    route = "direct" if p.hamiltonian is not None else "jacobi"
    Psi = monodromy(p, route)
    sign = (-1.0) ** n
    if p.label in ("driftless", "schrodinger"):
        if reading == "equal":
            G = 0.5 * (G0 + G1)
            c = 2.0 ** (-n)
        else:
            G = G0 + G1
            c = 1.0
        if constant == "published":
            c *= math.exp(-n)
        return sign * c * float(np.linalg.det(np.eye(2 * n) - Psi)) / (
            float(np.linalg.det(G)) * float(np.linalg.det(Gam)))
    if p.label == "drift":
        Ph = p.meta["phi_hat"]
        G = G0 + Ph.T @ G1 @ Ph
        beta = 2.0 * float(np.trace(np.linalg.solve(G, G0))) if constant == "published" else 0.0
        O = np.zeros((n, n))
        lift = np.block([[np.linalg.inv(Ph).T, O], [O, Ph]])
        return sign * math.exp(-beta) * float(np.linalg.det(Psi - lift)) / (
            float(np.linalg.det(G)) * float(np.linalg.det(Gam)))
    raise ProblemError(f"no closed-form reference for problems labelled {p.label!r}")


# -- roots ---------------------------------------------------------------------

def estimate_order(f, x0, scale=1.0, decade=(1e-2, 1e-1), num=5):
    """Order of the zero of f at x0 from the slope of log|f| vs log|x - x0|.

    Offsets span one decade; both sides are averaged.
    """
    d = np.logspace(math.log10(decade[0]), math.log10(decade[1]), num) * scale
    slopes = []
    for sgn in (1.0, -1.0):
        v = np.array([abs(f(x0 + sgn * di)) for di in d])
        if np.all(v > 0):
            slopes.append(np.polyfit(np.log(d), np.log(v), 1)[0])
    if not slopes:
        return 0, float("nan")
    k = float(np.mean(slopes))
    return int(round(k)), k


@dataclass(frozen=True)
class Root:
    x: float
    order: int
    slope: float
    sign_change: bool
    kernel_dim: object = None
    flagged: bool = False


def _minimum_roots(f, xs, fs, tol):
    """Even-order roots: local minima of |f| where f keeps its sign."""
    out = []
    a = np.abs(fs)
    top = max(a.max(), 1e-300)
    for i in range(1, len(xs) - 1):
        if not (a[i] <= a[i - 1] and a[i] <= a[i + 1]):
            continue
        if np.sign(fs[i - 1]) != np.sign(fs[i]) or np.sign(fs[i + 1]) != np.sign(fs[i]):
            continue
        lo, hi = xs[i - 1], xs[i + 1]
        step = 1e-5 * max(1.0, abs(xs[i]))

        def df(x):
            return (f(x + step) - f(x - step)) / (2 * step)

        dlo, dhi = df(lo), df(hi)
        if np.sign(dlo) == np.sign(dhi):
            continue
        x0 = brentq(df, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=200)
        f0 = abs(f(x0))
        span = max(abs(f(lo)), abs(f(hi)))
        if f0 <= 1e-6 * span and f0 <= 1e-6 * top:
            out.append(x0)
    return out


def find_roots(f, lo, hi, num=801, tol=1e-12, scale=None, even=True):
    """Roots of a real function on [lo, hi] with order estimates.

    Sign changes are bracketed and refined with Brent's method; when
    ``even`` is set, local minima of |f| without a sign change are
    refined by locating the zero of the (central-difference) derivative and
    accepted only when |f| there is negligible.
    """
    if hi <= lo:
        return []
    xs = np.linspace(lo, hi, num)
    fs = np.array([f(x) for x in xs])
    roots = []
    for i in range(num - 1):
        if fs[i] == 0.0:
            roots.append((xs[i], True))
        elif fs[i] * fs[i + 1] < 0:
            roots.append((brentq(f, xs[i], xs[i + 1], xtol=tol, rtol=4 * np.finfo(float).eps,
                                 maxiter=200), True))
    if fs[-1] == 0.0:
        roots.append((xs[-1], True))
    if even:
        roots += [(x, False) for x in _minimum_roots(f, xs, fs, tol)]
    roots.sort()
    sc = (hi - lo) / (num - 1) if scale is None else scale
    out = []
    for x, sc_flag in roots:
        order, slope = estimate_order(f, x, scale=sc)
        out.append(Root(float(x), order, slope, sc_flag, flagged=order > 2 or order < 1))
    return out


def scan_zeros(family, metrics, bc, lam_range, *, num=801, tol=1e-12, verify=False,
               oracle_m=256, kernel_tol=5e-2):
    """Values of lambda at which det(1 + K_lambda) vanishes.

    Parameters
    ----------
    family : callable
        lambda -> ProblemLQ (or DoubledProblem).
    lam_range : (float, float)
    verify : bool
        Attach the Galerkin kernel dimension at each root.

    Returns
    -------
    list of Root
    """
    lo, hi = map(float, lam_range)

    def f(lam):
        dp = _doubled(family(lam), bc)
        return determinant(dp, metrics, 1.0, norm=normalization(dp, metrics, check_fd=False))

    roots = find_roots(f, lo, hi, num=num, tol=tol)
    if not any(r.sign_change for r in roots):
        warnings.warn("no sign change in range; possible even-order roots only", RuntimeWarning,
                      stacklevel=2)
    if verify and roots:
        from .oracle import assemble_K, kernel_dimension
        out = []
        for r in roots:
            g = assemble_K(_doubled(family(r.x), bc), metrics, oracle_m)
            out.append(Root(r.x, r.order, r.slope, r.sign_change,
                            kernel_dimension(g, 1.0, kernel_tol), r.flagged))
        roots = out
    return roots


@dataclass(frozen=True, eq=False)
class DetReport:
    a: float
    b: float
    trK: float
    s: np.ndarray
    pq: np.ndarray
    detIK: np.ndarray
    zeros: list
    diagnostics: dict = field(default_factory=dict)


def det_report(dp, metrics, s_values, bc=None, *, seed=0, find_zeros=True):
    """Evaluate p(s) and det(I + sK) on ``s_values`` and locate zeros in s."""
    dp = _doubled(dp, bc)
    norm = normalization(dp, metrics, seed=seed)
    s_values = np.asarray(s_values, dtype=float)
    pq = np.array([det_Q(dp, norm.metrics, s) for s in s_values])
    det = pq / norm.a * np.exp(-norm.b * s_values)
    zeros = []
    if find_zeros and s_values.size > 1:
        def f(s):
            return det_Q(dp, norm.metrics, s)
        lo, hi = float(s_values.min()), float(s_values.max())
        zeros = [z for z in find_roots(f, lo, hi, num=max(s_values.size, 101), even=True,
                                       scale=0.1 * max(1.0, (hi - lo) / 10))]
    flow1 = fundamental_solution(dp.base, 1.0)
    diag = {
        "cond_Q0": norm.cond_Q0,
        "metric_perturbations": norm.perturbed,
        "log_derivative": norm.log_derivative,
        "log_derivative_fd": norm.fd_log_derivative,
        "log_derivative_rel_gap": norm.fd_rel_gap,
        "symplectic_defect_Phi1": flow1.symplectic_defect(),
        "Gamma_cond": float(np.linalg.cond(closed_form_s0(dp.base).Gamma)),
        "grid": dp.grid,
    }
    return DetReport(norm.a, norm.b, norm.trK, s_values, pq, det, zeros, diag)


def periodic(p, metrics=None):
    """Shorthand: doubled periodic problem and default identity metrics."""
    bc = annihilator_graph("periodic", p.n)
    return double_system(p, bc), (MetricPair.identity(p.n) if metrics is None else metrics)
