"""Linear symplectic algebra on R^{2n} in (p, q) Darboux coordinates.

Vectors are ordered (p, q); the vertical subspace Pi is {q = 0}. The
symplectic form is sigma((p1,q1),(p2,q2)) = <p1,q2> - <p2,q1>, realised as
sigma(v, w) = <J v, w> with J = [[0, -I], [I, 0]].
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np

ISOTROPY_TOL = 1e-12


class MetricError(ValueError):
    """A metric block is not symmetric positive definite."""


class BoundaryError(ValueError):
    """Boundary data is degenerate or not isotropic."""


def std_J(n):
    """Matrix of the standard symplectic form, sigma(v, w) = <J v, w>."""
    I = np.eye(n)
    Z = np.zeros((n, n))
    return np.block([[Z, -I], [I, Z]])


def sigma(v, w):
    """sigma(v, w) for vectors (or column stacks) in (p, q) order."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    n = v.shape[0] // 2
    return v[:n].T @ w[n:] - w[:n].T @ v[n:]


def symplectic_defect(M, J=None):
    """max |M^T J M - J|."""
    M = np.asarray(M, dtype=float)
    if J is None:
        J = std_J(M.shape[0] // 2)
    return float(np.max(np.abs(M.T @ J @ M - J)))


@dataclass(frozen=True)
class SymplecticFrame:
    n: int

    @cached_property
    def J(self):
        return std_J(self.n)

    def sigma(self, v, w):
        return sigma(v, w)


def _check_spd(block, name):
    block = np.asarray(block, dtype=float)
    if block.ndim != 2 or block.shape[0] != block.shape[1]:
        raise MetricError(f"{name}: expected a square matrix, got shape {block.shape}")
    if not np.allclose(block, block.T, rtol=0, atol=1e-12 * max(1.0, np.abs(block).max())):
        raise MetricError(f"{name}: block is not symmetric")
    try:
        np.linalg.cholesky(block)
    except np.linalg.LinAlgError:
        lo = np.linalg.eigvalsh(0.5 * (block + block.T)).min()
        raise MetricError(f"{name}: block is not positive definite "
                          f"(smallest eigenvalue {lo:.3e})") from None
    return block


@dataclass(frozen=True)
class MetricPair:
    """Scalar products g0, g1 on R^{2n} in block-diagonal form.

    Parameters
    ----------
    G0, G1 : ndarray, shape (2n, 2n)
        diag(G^1_i, G^2_i), with G^1_i acting on Pi and G^2_i on its
        orthogonal complement. Off-diagonal blocks must vanish.
    """
    G0: np.ndarray
    G1: np.ndarray

    def __post_init__(self):
        G0 = np.array(self.G0, dtype=float)
        G1 = np.array(self.G1, dtype=float)
        if G0.shape != G1.shape or G0.ndim != 2 or G0.shape[0] % 2:
            raise MetricError(f"metrics must be 2n x 2n of equal shape, got {G0.shape}, {G1.shape}")
        n = G0.shape[0] // 2
        for G, side in ((G0, "G0"), (G1, "G1")):
            off = max(np.abs(G[:n, n:]).max(), np.abs(G[n:, :n]).max())
            if off > 1e-14 * max(1.0, np.abs(G).max()):
                raise MetricError(f"{side}: off-diagonal blocks must vanish (block-diagonal Darboux form)")
            _check_spd(G[:n, :n], f"{side} vertical block")
            _check_spd(G[n:, n:], f"{side} horizontal block")
            G.setflags(write=False)
        object.__setattr__(self, "G0", G0)
        object.__setattr__(self, "G1", G1)

    @classmethod
    def identity(cls, n):
        return cls(np.eye(2 * n), np.eye(2 * n))

    @classmethod
    def from_blocks(cls, v0, h0, v1=None, h1=None):
        """Build from vertical/horizontal blocks; side 1 defaults to side 0."""
        v1 = v0 if v1 is None else v1
        h1 = h0 if h1 is None else h1
        def one(v, h):
            v = np.atleast_2d(np.asarray(v, dtype=float))
            h = np.atleast_2d(np.asarray(h, dtype=float))
            Z = np.zeros((v.shape[0], h.shape[0]))
            return np.block([[v, Z], [Z.T, h]])
        return cls(one(v0, h0), one(v1, h1))

    @property
    def n(self):
        return self.G0.shape[0] // 2

    def block(self, side, which):
        """Return G^1_i (which='vertical') or G^2_i (which='horizontal')."""
        G = self.G0 if side == 0 else self.G1
        n = self.n
        return G[:n, :n] if which == "vertical" else G[n:, n:]

    def scaled(self, c):
        return MetricPair(c * self.G0, c * self.G1)


@dataclass(frozen=True)
class MetricOperators:
    J0: np.ndarray
    J1: np.ndarray
    proj_Pi: tuple
    proj_PiPerp: tuple


def metric_operators(metrics):
    """Operators J_i with g_i(J_i X, Y) = sigma(X, Y), and projections.

    For block-diagonal metrics J_i = G_i^{-1} J. The projections are the
    g_i-orthogonal ones onto Pi and its complement; in block-diagonal form
    they are the coordinate projections.
    """
    n = metrics.n
    J = std_J(n)
    J0 = np.linalg.solve(metrics.G0, J)
    J1 = np.linalg.solve(metrics.G1, J)
    P = np.zeros((2 * n, 2 * n))
    P[:n, :n] = np.eye(n)
    Q = np.eye(2 * n) - P
    return MetricOperators(J0, J1, (P, P.copy()), (Q, Q.copy()))


def dilation(s, n, which="vertical"):
    """delta^s (which='vertical') scales Pi by s; delta_s scales Pi-perp by s."""
    d = np.ones(2 * n)
    if which == "vertical":
        d[:n] = s
    elif which == "horizontal":
        d[n:] = s
    else:
        raise ValueError(f"which must be 'vertical' or 'horizontal', got {which!r}")
    return np.diag(d)


def correction_block(metrics, phi_tilde):
    """Upper-right block C_1 of (A_1^s - I)/(1 - s).

    With phi_tilde = [[F_pp, F_pq], [0, F_qq]] this is
    G^2_1 - F_pq F_qq^{-1}; it is symmetric because phi_tilde is symplectic.
    """
    n = metrics.n
    F = np.asarray(phi_tilde, dtype=float)
    C = metrics.block(1, "horizontal") - F[:n, n:] @ np.linalg.inv(F[n:, n:])
    return 0.5 * (C + C.T)


def _shear(n, C, t):
    A = np.eye(2 * n)
    A[:n, n:] = t * C
    return A


def map_A0(s, metrics):
    """A_0^s = I + (1-s) J_0^{-1} pr_{Pi-perp} = [[I, (1-s) G^2_0], [0, I]]."""
    return _shear(metrics.n, metrics.block(0, "horizontal"), 1.0 - s)


def map_A1(s, metrics, phi_tilde):
    """A_1^s = I + (1-s)(J_1^{-1} + F pr_Pi F^{-1}) pr_{Pi-perp}, F = phi_tilde.

    The sum J_1^{-1} + F pr_Pi F^{-1} restricted to Pi-perp equals
    [[0, G^2_1 - F_pq F_qq^{-1}], [0, 0]].
    """
    return _shear(metrics.n, correction_block(metrics, phi_tilde), 1.0 - s)


def dmap_A0(metrics):
    """d/ds A_0^s (independent of s)."""
    n = metrics.n
    D = np.zeros((2 * n, 2 * n))
    D[:n, n:] = -metrics.block(0, "horizontal")
    return D


def dmap_A1(metrics, phi_tilde):
    n = metrics.n
    D = np.zeros((2 * n, 2 * n))
    D[:n, n:] = -correction_block(metrics, phi_tilde)
    return D


@dataclass(frozen=True)
class BoundarySubspace:
    """Basis (T0; T1) of the annihilator A(N) inside R^{2n} x R^{2n}.

    Column j represents the pair (T0[:, j], T1[:, j]) of covectors at the
    initial and final point.

    Attributes
    ----------
    kind : str
        'periodic', 'graph' or 'separated'; informational.
    """
    T0: np.ndarray
    T1: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        T0 = np.array(self.T0, dtype=float)
        T1 = np.array(self.T1, dtype=float)
        if T0.ndim != 2 or T0.shape != T1.shape or T0.shape[0] % 2:
            raise BoundaryError(f"T0, T1 must be 2n x d of equal shape, got {T0.shape}, {T1.shape}")
        n2, d = T0.shape
        if d != n2:
            raise BoundaryError(f"A(N) is Lagrangian in R^{2*n2}; need {n2} columns, got {d}")
        T = np.vstack([T0, T1])
        if np.linalg.matrix_rank(T) != d:
            raise BoundaryError("boundary basis is rank deficient")
        res = isotropy_residual(T0, T1)
        if res > ISOTROPY_TOL * max(1.0, np.abs(T).max() ** 2):
            raise BoundaryError(f"boundary basis is not isotropic for (-sigma)+sigma (residual {res:.3e})")
        T0.setflags(write=False)
        T1.setflags(write=False)
        object.__setattr__(self, "T0", T0)
        object.__setattr__(self, "T1", T1)

    @property
    def n(self):
        return self.T0.shape[0] // 2

    @property
    def dim(self):
        return self.T0.shape[1]

    def tangent_basis(self):
        """Basis (X0; X1) of TN, shape (2n, dN), from the q-rows of (T0; T1).

        A(N) contains the conormal directions (annihilator of TN), whose
        q-parts vanish; the q-parts of the remaining columns span TN.
        """
        n = self.n
        Xq = np.vstack([self.T0[n:], self.T1[n:]])
        U, sv, _ = np.linalg.svd(Xq, full_matrices=False)
        r = int(np.sum(sv > 1e-12 * max(1.0, sv[0] if sv.size else 1.0)))
        return U[:, :r]

    def rebased(self, C):
        """Same span with columns mixed by an invertible C."""
        C = np.asarray(C, dtype=float)
        return BoundarySubspace(self.T0 @ C, self.T1 @ C, self.kind)


def isotropy_residual(T0, T1):
    """max |T1^T J T1 - T0^T J T0|."""
    n = T0.shape[0] // 2
    J = std_J(n)
    return float(np.max(np.abs(T1.T @ J @ T1 - T0.T @ J @ T0)))


def annihilator_graph(bc, n=None):
    """Basis of A(N) for common boundary manifolds.

    Parameters
    ----------
    bc : str or tuple
        ``'periodic'``; ``('graph', F)`` for N = {(x, F x)}; or
        ``('separated', L0, L1)`` where L_i (2n x d_i) span the annihilators
        of N_0 and N_1 and d_0 + d_1 = 2n.
    n : int, optional
        Required for ``'periodic'``.

    Returns
    -------
    BoundarySubspace
    """
    if isinstance(bc, str):
        bc = (bc,)
    kind = bc[0]
    if kind == "periodic":
        if n is None:
            raise BoundaryError("periodic boundary needs the state dimension n")
        I = np.eye(2 * n)
        return BoundarySubspace(I, I.copy(), "periodic")
    if kind == "graph":
        F = np.atleast_2d(np.asarray(bc[1], dtype=float))
        if F.shape[0] != F.shape[1]:
            raise BoundaryError(f"graph map must be square, got {F.shape}")
        nn = F.shape[0]
        if n is not None and nn != n:
            raise BoundaryError(f"graph map is {nn}x{nn}, problem has n={n}")
        if np.linalg.cond(F) > 1e12:
            raise BoundaryError("graph map F is not invertible")
        # columns (p1, x): covectors (F^T p1, x) at time 0, (p1, F x) at time 1
        Z = np.zeros((nn, nn))
        I = np.eye(nn)
        T0 = np.block([[F.T, Z], [Z, I]])
        T1 = np.block([[I, Z], [Z, F]])
        return BoundarySubspace(T0, T1, "graph")
    if kind == "separated":
        L0 = np.atleast_2d(np.asarray(bc[1], dtype=float))
        L1 = np.atleast_2d(np.asarray(bc[2], dtype=float))
        if L0.shape[0] != L1.shape[0]:
            raise BoundaryError("separated bases must have the same number of rows")
        n2 = L0.shape[0]
        T0 = np.hstack([L0, np.zeros((n2, L1.shape[1]))])
        T1 = np.hstack([np.zeros((n2, L0.shape[1])), L1])
        return BoundarySubspace(T0, T1, "separated")
    raise BoundaryError(f"unknown boundary kind {kind!r}")
