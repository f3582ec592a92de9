"""Galerkin discretisation of the compact part K of the second variation.

Variables are x = (c, u): c in R^d parametrises the boundary variation
(X0; X1) = N c through a basis N of TN, and u is piecewise constant on m
cells. With eta(t) = (0; X0) + int_0^t Z u the quadratic form is

    Q(u) = int |u|^2 - int sigma(eta(t), Z_t u_t) dt + <p(1), X1>,

where (p(1), q(1)) = phi_tilde eta(1), on the subspace V cut out by
q(1) = X1. The reference scalar product is

    int |u|^2 + <G^2_0 X0, X0> + <G^2_1 X1, X1>,

and K is the operator with <(I + K) x, y> = Q(x, y).
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky, eigh, null_space, solve_triangular

from . import _kernels
from .problem import DoubledProblem, ProblemError
from .symplectic import std_J

_QUAD_NODES = 6


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class GalerkinK:
    """Discretised K on an orthonormal basis of V.

    Attributes
    ----------
    m : int
    K : ndarray, shape (dimV, dimV)
        Symmetric matrix of K in an orthonormal basis of V.
    basis : ndarray, shape (d + m k, dimV)
        Columns are the orthonormal basis vectors in (c, u) coordinates.
    constraint : ndarray, shape (n, d + m k)
    asym_defect : float
        max |M - M^T| of the raw (unsymmetrised) Galerkin matrix on V,
        relative to max(1, max |M|).
    form, gram : ndarray
        Raw bilinear form and scalar product on the full (c, u) space.
    """
    m: int
    n: int
    k: int
    d: int
    K: np.ndarray
    basis: np.ndarray
    constraint: np.ndarray
    asym_defect: float
    form: np.ndarray
    gram: np.ndarray

    @property
    def dim(self):
        return self.K.shape[0]

    def eig(self):
        w, v = eigh(self.K)
        return w, self.basis @ v

    def constraint_residual(self, vectors=None):
        """max ||C x|| / ||x|| over the given columns (default: the basis)."""
        V = self.basis if vectors is None else vectors
        r = np.linalg.norm(self.constraint @ V, axis=0) / np.linalg.norm(V, axis=0)
        return float(r.max()) if r.size else 0.0

    def boundary_block(self):
        """K compressed to the boundary coordinates c (constraint ignored)."""
        d = self.d
        Qc = 0.5 * (self.form[:d, :d] + self.form[:d, :d].T)
        L = cholesky(self.gram[:d, :d], lower=True)
        A = solve_triangular(L, solve_triangular(L, Qc, lower=True).T, lower=True)
        return 0.5 * (A + A.T) - np.eye(d)

    def time_block_trace(self):
        """Trace of the Volterra part of K on the time block."""
        d, h = self.d, 1.0 / self.m
        Vb = self.form[d:, d:] - h * np.eye(self.form.shape[0] - d)
        return float(np.trace(Vb) / h)


def _cells(p, m, q):
    x, w = np.polynomial.legendre.leggauss(q)
    h = 1.0 / m
    t = (np.arange(m)[:, None] + 0.5 * (x[None, :] + 1.0)) * h
    Zq = np.asarray(p.Z(t.ravel()), dtype=float).reshape(m, q, 2 * p.n, p.k)
    return Zq, 0.5 * h * w


def assemble_K(dp, metrics, m, *, quad_nodes=_QUAD_NODES):
    """Assemble the Galerkin matrix of K with m piecewise-constant cells.

    Raises
    ------
    OracleError
        If the constraint map is rank deficient (not strictly normal).
    """
    if not isinstance(dp, DoubledProblem):
        raise ProblemError("assemble_K expects a DoubledProblem")
    if m < 4:
        raise ValueError("m must be at least 4")
    p = dp.base
    n, k, d = p.n, p.k, dp.d
    J = std_J(n)
    F = p.phi_tilde
    Nb = dp.tangent
    N0, N1 = Nb[:n], Nb[n:]
    E = np.vstack([np.zeros((n, n)), np.eye(n)])

    Zq, w = _cells(p, m, quad_nodes)
    ZI, D = _kernels.cell_volterra(Zq, w, J)
    Zc = np.transpose(ZI, (1, 0, 2)).reshape(2 * n, m * k)

    # int sigma(eta_u, Z v): rows v, columns u
    V = Zc.T @ J @ Zc
    mask = np.tril(np.ones((m, m)), -1)
    V = V * np.kron(mask, np.ones((k, k)))
    for i in range(m):
        V[i * k:(i + 1) * k, i * k:(i + 1) * k] = D[i]
    h = 1.0 / m
    size = d + m * k
    form = np.zeros((size, size))
    form[d:, d:] = h * np.eye(m * k) - V
    form[d:, :d] = -Zc.T @ J @ E @ N0
    Fp = F[:n]
    form[:d, :d] = N1.T @ Fp @ E @ N0
    form[:d, d:] = N1.T @ Fp @ Zc

    gram = np.zeros((size, size))
    gram[:d, :d] = N0.T @ metrics.block(0, "horizontal") @ N0 + N1.T @ metrics.block(1, "horizontal") @ N1
    gram[d:, d:] = h * np.eye(m * k)

    Fq = F[n:]
    C = np.hstack([Fq @ E @ N0 - N1, Fq @ Zc])
    sv = np.linalg.svd(C, compute_uv=False)
    if sv.size < n or sv[-1] <= 1e-12 * max(1.0, sv[0]):
        raise OracleError("constraint map is rank deficient (extremal not strictly normal)")
    B = null_space(C)

    # the form Q(x, y) = y^T form x
    Mr = B.T @ form.T @ B
    Gr = B.T @ gram @ B
    Gr = 0.5 * (Gr + Gr.T)
    L = cholesky(Gr, lower=True)
    Kraw = solve_triangular(L, solve_triangular(L, Mr, lower=True).T, lower=True).T
    scale = max(1.0, float(np.abs(Kraw).max()))
    asym = float(np.abs(Kraw - Kraw.T).max()) / scale
    K = 0.5 * (Kraw + Kraw.T) - np.eye(Kraw.shape[0])
    basis = B @ solve_triangular(L, np.eye(L.shape[0]), lower=True).T
    return GalerkinK(m, n, k, d, K, basis, C, asym, form, gram)


def kernel_dimension(g, s, tol):
    """Number of eigenvalues mu of K with |1 + s mu| <= tol."""
    w = np.linalg.eigvalsh(g.K)
    return int(np.sum(np.abs(1.0 + s * w) <= tol))


# -- spectrum ------------------------------------------------------------------

def pv_order(mu):
    """Canonical principal-value ordering: |mu| descending, ties by value."""
    mu = np.asarray(mu, dtype=float)
    return mu[np.lexsort((mu, -np.abs(mu)))]


def pv_det(mu):
    return float(np.prod(1.0 + pv_order(mu)))


def pv_trace(mu):
    return float(np.sum(pv_order(mu)))


def capacity_fit(mu, lo=5, frac=0.1):
    """Fit mu_j ~ xi / j separately on the positive and negative tails.

    Returns
    -------
    dict with keys xi_plus, xi_minus, resid_plus, resid_minus (relative rms)
    """
    mu = np.asarray(mu, dtype=float)
    out = {}
    for name, part in (("plus", np.sort(mu[mu > 0])[::-1]), ("minus", np.sort(mu[mu < 0]))):
        hi = max(lo + 2, int(frac * part.size))
        j = np.arange(1, part.size + 1)[lo:hi]
        y = part[lo:hi]
        if y.size < 2:
            out["xi_" + name], out["resid_" + name] = float("nan"), float("nan")
            continue
        xi = float(np.dot(y, 1.0 / j) / np.dot(1.0 / j, 1.0 / j))
        res = float(np.sqrt(np.mean((y - xi / j) ** 2)) / max(abs(xi), 1e-300) * np.sqrt(np.mean(j ** 2)))
        out["xi_" + name], out["resid_" + name] = xi, res
    return out


def symmetry_defect(mu, npairs=10, cluster=0.1, max_skip=3):
    """Pairing of the spectrum as (mu, -mu').

    Eigenvalues within ``cluster`` of -1 are removed; the remaining positive
    and negative parts, sorted by modulus, are aligned allowing up to
    ``max_skip`` boundary-coupled outliers on either side. Returns the
    smallest max |mu - mu'| / |mu| over the top ``npairs`` pairs.
    """
    mu = np.asarray(mu, dtype=float)
    mu = mu[np.abs(mu + 1.0) > cluster]
    pos = np.sort(mu[mu > 0])[::-1]
    neg = np.sort(-mu[mu < 0])[::-1]
    best = np.inf
    for sp in range(max_skip + 1):
        for sn in range(max_skip + 1):
            a, b = pos[sp:sp + npairs], neg[sn:sn + npairs]
            if a.size < npairs or b.size < npairs:
                continue
            best = min(best, float(np.max(np.abs(a - b) / a)))
    return best


def pairing_defect(mu, npairs=10, cluster=0.1):
    """Absolute pairing max |mu_j - mu'_j| over the top ``npairs`` pairs.

    Same cluster removal as ``symmetry_defect``; the shorter of the positive
    and negative parts is padded with zeros, so a spectrum that is zero off
    the cluster pairs trivially.
    """
    mu = np.asarray(mu, dtype=float)
    mu = mu[np.abs(mu + 1.0) > cluster]
    pos = np.sort(mu[mu > 0])[::-1][:npairs]
    neg = np.sort(-mu[mu < 0])[::-1][:npairs]
    a = np.zeros(npairs)
    b = np.zeros(npairs)
    a[:pos.size] = pos
    b[:neg.size] = neg
    return float(np.max(np.abs(a - b)))


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    m: int
    eigenvalues: np.ndarray
    pv_trace: float
    pv_det: float
    capacity: dict
    symmetry: float
    pairing: float
    asym_defect: float
    constraint_residual: float
    refinement: object = None

    def multiplicities(self, tol=1e-8):
        """Clusters of numerically equal eigenvalues as (value, count)."""
        out = []
        for x in self.eigenvalues:
            if out and abs(out[-1][0] - x) <= tol * max(1.0, abs(x)):
                out[-1][1] += 1
            else:
                out.append([float(x), 1])
        return [tuple(o) for o in out]


def pv_spectrum(g):
    """Eigenvalues sorted by |mu|, principal-value trace and determinant."""
    w, vecs = g.eig()
    mu = pv_order(w)
    return SpectrumReport(
        m=g.m,
        eigenvalues=mu,
        pv_trace=float(np.sum(mu)),
        pv_det=float(np.prod(1.0 + mu)),
        capacity=capacity_fit(mu),
        symmetry=symmetry_defect(mu),
        pairing=pairing_defect(mu),
        asym_defect=g.asym_defect,
        constraint_residual=g.constraint_residual(vecs),
    )


@dataclass(frozen=True)
class Refinement:
    m: tuple
    pv_det: tuple
    pv_trace: tuple
    det_extrapolated: float
    trace_extrapolated: float
    det_error: float
    trace_error: float
    monotone: bool
    spectra: tuple = field(default=(), repr=False)


def _richardson(v):
    r1a = 2 * v[1] - v[0]
    r1b = 2 * v[2] - v[1]
    r2 = (4 * r1b - r1a) / 3
    return r2, abs(r2 - r1b)


def _monotone(v):
    d1, d2 = v[1] - v[0], v[2] - v[1]
    return (d1 == 0 and d2 == 0) or (d1 * d2 > 0 and abs(d2) < abs(d1)) or abs(d2) < 1e-12


def refine(dp, metrics, m0=256):
    """Run m0, 2 m0, 4 m0 and Richardson-extrapolate in 1/m.

    Two levels are used: first order, then second order on the two first
    order estimates. The error estimate is the change made by the second
    level.
    """
    if m0 < 8:
        raise ValueError("m0 must be at least 8")
    ms = (m0, 2 * m0, 4 * m0)
    spectra = tuple(pv_spectrum(assemble_K(dp, metrics, m)) for m in ms)
    dets = tuple(s.pv_det for s in spectra)
    trs = tuple(s.pv_trace for s in spectra)
    de, dee = _richardson(dets)
    te, tee = _richardson(trs)
    mono = _monotone(dets) and _monotone(trs)
    return Refinement(ms, dets, trs, de, te, dee, tee, mono, spectra)
