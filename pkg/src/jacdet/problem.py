"""Linear-quadratic problem data along an extremal.

Sign convention. The engine is parametrised by a potential W_t: the cost
is 1/2 int |u|^2 + <W_t q, q> and the linearised dynamics are q'' = W_t q.
``build_driftless(R)`` takes the Hill potential R and uses W = -R, so that
Z_t = (int_0^t R; I). ``build_schrodinger(R, lam)`` uses W = R + lam.
"""
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .functions import as_function
from .symplectic import BoundarySubspace, std_J, symplectic_defect

DEFAULT_GRID = 1024
NORMALITY_COND = 1e12


class ProblemError(ValueError):
    pass


class LegendreError(ProblemError):
    """-H_t is not positive definite at some node."""

    def __init__(self, t, eigenvalue):
        self.t = float(t)
        self.eigenvalue = float(eigenvalue)
        super().__init__(f"strong Legendre condition fails at t={self.t:.6g}: "
                         f"smallest eigenvalue of -H is {self.eigenvalue:.6g}")


class NotStrictlyNormal(ProblemError):
    pass


def half_grid(N):
    """Nodes t_j = j/(2N), j = 0..2N (full grid plus midpoints)."""
    return np.linspace(0.0, 1.0, 2 * N + 1)


def cumulative_simpson_half(f, h):
    """Cumulative integral of half-grid samples, returned on the half grid.

    Full nodes use composite Simpson over [t_j, t_{j+1}] with the midpoint;
    midpoints add the quadratic-interpolant integral over the first half
    interval, h/24 (5 f_0 + 8 f_m - f_1).
    """
    f = np.asarray(f, dtype=float)
    f0, fm, f1 = f[0:-1:2], f[1::2], f[2::2]
    steps = (h / 6.0) * (f0 + 4.0 * fm + f1)
    out = np.empty_like(f)
    out[0] = 0.0
    out[2::2] = np.cumsum(steps, axis=0)
    out[1::2] = out[0:-1:2] + (h / 24.0) * (5.0 * f0 + 8.0 * fm - f1)
    return out


def simpson_half(f, h):
    """Composite Simpson integral over [0, 1] from half-grid samples."""
    f = np.asarray(f, dtype=float)
    return (h / 6.0) * (f[0:-1:2] + 4.0 * f[1::2] + f[2::2]).sum(axis=0)


@dataclass(frozen=True, eq=False)
class ProblemLQ:
    """Legendre-normalised LQ data.

    Attributes
    ----------
    n, k : int
        State and control dimensions.
    Z : callable
        t (1-d array) -> array (len(t), 2n, k).
    phi_tilde : ndarray, shape (2n, 2n)
        Backtracking differential at t = 1, block upper triangular.
    label : str
        driftless, drift, schrodinger or custom.
    grid : int
        Number of uniform intervals for all quadratures and ODE solves.
    hamiltonian : callable, optional
        t -> (len(t), 2n, 2n) generator of the linearised extremal flow,
        used for the direct monodromy route.
    meta : dict
        Builder parameters (informational).
    """
    n: int
    k: int
    Z: object
    phi_tilde: np.ndarray
    label: str = "custom"
    grid: int = DEFAULT_GRID
    hamiltonian: object = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        F = np.array(self.phi_tilde, dtype=float)
        n = self.n
        if F.shape != (2 * n, 2 * n):
            raise ProblemError(f"phi_tilde must be {2*n}x{2*n}, got {F.shape}")
        if self.grid < 2:
            raise ProblemError("grid must have at least 2 intervals")
        scale = max(1.0, np.abs(F).max())
        if np.abs(F[n:, :n]).max() > 1e-10 * scale:
            raise ProblemError("phi_tilde must preserve the vertical fibre (lower-left block zero)")
        if symplectic_defect(F) > 1e-10 * scale ** 2:
            raise ProblemError("phi_tilde is not symplectic")
        F.setflags(write=False)
        object.__setattr__(self, "phi_tilde", F)

    @property
    def dim(self):
        return 2 * self.n

    @property
    def h(self):
        return 1.0 / self.grid

    @property
    def J(self):
        return std_J(self.n)

    @property
    def vertical_rows(self):
        return np.arange(self.n)

    def with_grid(self, N):
        return replace(self, grid=int(N))

    @cached_property
    def Z_half(self):
        """Z on the half grid, shape (2N+1, 2n, k)."""
        Zs = np.asarray(self.Z(half_grid(self.grid)), dtype=float)
        expect = (2 * self.grid + 1, 2 * self.n, self.k)
        if Zs.shape != expect:
            raise ProblemError(f"Z sampler returned shape {Zs.shape}, expected {expect}")
        if not np.all(np.isfinite(Zs)):
            raise ProblemError("Z sampler returned non-finite values")
        Zs.setflags(write=False)
        return Zs

    @cached_property
    def Gamma(self):
        """int_0^1 X X^T with X the horizontal block of Z."""
        X = self.Z_half[:, self.n:, :]
        return simpson_half(np.einsum("tik,tjk->tij", X, X), self.h)

    def check_normal(self):
        G = self.Gamma
        c = np.linalg.cond(G)
        if not np.isfinite(c) or c > NORMALITY_COND:
            raise NotStrictlyNormal(f"Gamma = int X X^T is singular (condition {c:.3e}); "
                                    "the extremal is not strictly normal")
        return self


def normalize_legendre(Z_raw, H, phi_tilde, *, n=None, grid=DEFAULT_GRID, label="custom",
                       hamiltonian=None, meta=None):
    """Absorb a control cost -H_t into Z: Z_t <- Z_raw_t (-H_t)^{-1/2}.

    Parameters
    ----------
    Z_raw : callable or MatrixFunction
        t -> (len(t), 2n, k).
    H : callable, MatrixFunction or array
        t -> (len(t), k, k) symmetric, with -H_t positive definite.

    Raises
    ------
    LegendreError
        If -H_t fails to be positive definite at a grid node.
    """
    Zf = as_function(Z_raw)
    Hf = as_function(H)
    t = half_grid(grid)
    Hs = Hf(t)
    Hs = 0.5 * (Hs + np.swapaxes(Hs, 1, 2))
    lam = np.linalg.eigvalsh(-Hs)
    lo = lam[:, 0]
    bad = np.nonzero(~(lo > 0))[0]
    if bad.size:
        j = bad[np.argmin(lo[bad])]
        raise LegendreError(t[j], lo[j])

    def Z(tt):
        M = -Hf(tt)
        M = 0.5 * (M + np.swapaxes(M, 1, 2))
        w, V = np.linalg.eigh(M)
        isq = np.einsum("tij,tj,tkj->tik", V, 1.0 / np.sqrt(w), V)
        return np.einsum("tik,tkl->til", Zf(tt), isq)

    n = Zf.shape[0] // 2 if n is None else n
    return ProblemLQ(n=n, k=Zf.shape[1], Z=Z, phi_tilde=phi_tilde, label=label, grid=grid,
                     hamiltonian=hamiltonian, meta=dict(meta or {}))


def build_driftless(R, grid=DEFAULT_GRID, *, label="driftless", meta=None):
    """Problem with dynamics q' = u and Hill potential R (W = -R).

    Z_t = (int_0^t R; I), phi_tilde = [[I, -int_0^1 R], [0, I]], k = n.
    """
    Rf = as_function(R)
    n = Rf.shape[0]
    if Rf.shape != (n, n):
        raise ProblemError(f"R must be square, got {Rf.shape}")
    I = np.eye(n)

    def Z(t):
        t = np.atleast_1d(t)
        top = Rf.antiderivative(t)
        top = 0.5 * (top + np.swapaxes(top, 1, 2))
        bot = np.broadcast_to(I, (t.size, n, n))
        return np.concatenate([top, bot], axis=1)

    def ham(t):
        # (p, q)' = [[0, W], [I, 0]] (p, q), W = -R
        t = np.atleast_1d(t)
        W = -Rf(t)
        out = np.zeros((t.size, 2 * n, 2 * n))
        out[:, :n, n:] = 0.5 * (W + np.swapaxes(W, 1, 2))
        out[:, n:, :n] = I
        return out

    Rhat = Rf.antiderivative(np.array([1.0]))[0]
    Rhat = 0.5 * (Rhat + Rhat.T)
    F = np.block([[I, -Rhat], [np.zeros((n, n)), I]])
    m = {"R": Rf}
    m.update(meta or {})
    return ProblemLQ(n=n, k=n, Z=Z, phi_tilde=F, label=label, grid=grid, hamiltonian=ham, meta=m)


def build_schrodinger(R, lam, grid=DEFAULT_GRID):
    """Problem whose linearised dynamics are q'' = (R_t + lam) q."""
    Rf = as_function(R)
    n = Rf.shape[0]
    hill = -(Rf + lam * np.eye(n))
    return build_driftless(hill, grid, label="schrodinger", meta={"lambda": float(lam), "R_schrodinger": Rf})


def _drift_flow(Af, Wf, n):
    """Dense solution of Phi_hat' = A Phi_hat and P' = Phi_hat^T W Phi_hat."""
    def rhs(t, y):
        Ph = y[: n * n].reshape(n, n)
        A = Af(np.array([t]))[0]
        W = Wf(np.array([t]))[0]
        return np.concatenate([(A @ Ph).ravel(), (Ph.T @ W @ Ph).ravel()])

    y0 = np.concatenate([np.eye(n).ravel(), np.zeros(n * n)])
    sol = solve_ivp(rhs, (0.0, 1.0), y0, method="DOP853", rtol=1e-13, atol=1e-14, dense_output=True)
    if not sol.success:
        raise ProblemError(f"drift flow integration failed: {sol.message}")
    return sol.sol


def build_drift(A, B, R, grid=DEFAULT_GRID):
    """Problem with dynamics q' = A q + B u and Hill potential R (W = -R).

    The reference flow is Phi_tilde_t = [[Phi_hat^{-T}, Phi_hat^{-T} P_t], [0, Phi_hat]]
    with Phi_hat' = A Phi_hat and P_t = int_0^t Phi_hat^T W Phi_hat; then
    Z_t = Phi_tilde_t^{-1} (0; B_t), i.e. X_t = Phi_hat_t^{-1} B_t.
    """
    Af = as_function(A)
    n = Af.shape[0]
    Bf = as_function(B)
    if Bf.shape[0] != n:
        raise ProblemError(f"B must have {n} rows, got shape {Bf.shape}")
    k = Bf.shape[1]
    Rf = as_function(R, (n, n))
    Wf = -Rf
    const_A = hasattr(Af, "value")
    const_zero_W = hasattr(Rf, "value") and not np.any(Rf.value)
    if const_A and const_zero_W:
        A0 = Af.value

        def flow(t):
            t = np.atleast_1d(t)
            Ph = np.array([expm(tt * A0) for tt in t])
            return Ph, np.zeros_like(Ph)
    else:
        dense = _drift_flow(Af, Wf, n)

        def flow(t):
            t = np.atleast_1d(t)
            y = dense(t).T
            return y[:, : n * n].reshape(-1, n, n), y[:, n * n:].reshape(-1, n, n)

    def Z(t):
        t = np.atleast_1d(t)
        Ph, P = flow(t)
        Bt = Bf(t)
        X = np.linalg.solve(Ph, Bt)
        Y = -np.einsum("tij,tjk->tik", P, X)
        return np.concatenate([Y, X], axis=1)

    def ham(t):
        t = np.atleast_1d(t)
        At = Af(t)
        Bt = Bf(t)
        W = Wf(t)
        out = np.zeros((t.size, 2 * n, 2 * n))
        out[:, :n, :n] = -np.swapaxes(At, 1, 2)
        out[:, :n, n:] = 0.5 * (W + np.swapaxes(W, 1, 2))
        out[:, n:, :n] = np.einsum("tik,tjk->tij", Bt, Bt)
        out[:, n:, n:] = At
        return out

    Ph1, P1 = flow(np.array([1.0]))
    Ph1, P1 = Ph1[0], P1[0]
    P1 = 0.5 * (P1 + P1.T)
    PhiT = np.linalg.inv(Ph1).T
    F = np.block([[PhiT, PhiT @ P1], [np.zeros((n, n)), Ph1]])
    p = ProblemLQ(n=n, k=k, Z=Z, phi_tilde=F, label="drift", grid=grid, hamiltonian=ham,
                  meta={"A": Af, "B": Bf, "R": Rf, "phi_hat": Ph1})
    return p.check_normal()


@dataclass(frozen=True, eq=False)
class DoubledProblem:
    """The problem on M x M with trivial dynamics on the first factor.

    Attributes
    ----------
    base : ProblemLQ
    bc : BoundarySubspace
    Z0 : ndarray (4n, n)
        Diagonal embedding (0; I; 0; I).
    Z1 : ndarray (4n, d)
        (0; X0; phi_tilde^{-1} (0; X1)) for a basis (X0; X1) of TN.
    """
    base: ProblemLQ
    bc: BoundarySubspace
    Z0: np.ndarray
    Z1: np.ndarray
    tangent: np.ndarray

    @property
    def n(self):
        return self.base.n

    @property
    def k(self):
        return self.base.k

    @property
    def dim(self):
        return 4 * self.base.n

    @property
    def d(self):
        """dim N."""
        return self.tangent.shape[1]

    @property
    def grid(self):
        return self.base.grid

    @property
    def h(self):
        return self.base.h

    @property
    def J(self):
        J = std_J(self.n)
        Z = np.zeros_like(J)
        return np.block([[-J, Z], [Z, J]])

    @property
    def phi_tilde(self):
        n2 = 2 * self.n
        out = np.eye(2 * n2)
        out[n2:, n2:] = self.base.phi_tilde
        return out

    @property
    def vertical_rows(self):
        n = self.n
        return np.concatenate([np.arange(n), 2 * n + np.arange(n)])

    def Z(self, t):
        Zb = self.base.Z(t)
        return np.concatenate([np.zeros_like(Zb), Zb], axis=1)

    @cached_property
    def Z_half(self):
        Zb = self.base.Z_half
        out = np.concatenate([np.zeros_like(Zb), Zb], axis=1)
        out.setflags(write=False)
        return out

    def endpoint_residual(self):
        """Distance of phi_tilde Z1 from Pi-perp x Pi-perp and from T A(N)."""
        n = self.n
        W = self.phi_tilde @ self.Z1
        off_pi = max(np.abs(W[:n]).max(), np.abs(W[2 * n:3 * n]).max())
        T = np.vstack([self.bc.T0, self.bc.T1])
        coef, *_ = np.linalg.lstsq(T, W, rcond=None)
        return max(off_pi, float(np.abs(T @ coef - W).max()))


def double_system(p, bc):
    """Doubled problem for general boundary conditions."""
    if not isinstance(bc, BoundarySubspace):
        raise ProblemError("bc must be a BoundarySubspace")
    if bc.n != p.n:
        raise ProblemError(f"boundary is for n={bc.n}, problem has n={p.n}")
    n = p.n
    X = bc.tangent_basis()
    X0, X1 = X[:n], X[n:]
    d = X.shape[1]
    Zn = np.zeros((n, d))
    second = np.linalg.solve(p.phi_tilde, np.vstack([Zn, X1]))
    Z1 = np.vstack([Zn, X0, second])
    I = np.eye(n)
    O = np.zeros((n, n))
    Z0 = np.vstack([O, I, O, I])
    return DoubledProblem(p, bc, Z0, Z1, X)
