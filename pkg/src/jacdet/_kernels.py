"""Hot loops: fixed-step RK4 for matrix ODEs and Volterra cell sums.

Every kernel exists twice, once as plain numpy and once compiled with
numba. The compiled variant is used when numba imports and the
environment variable ``JACDET_DISABLE_NUMBA`` is unset (or "0"). Both
variants run the same arithmetic in the same order, so results agree to
rounding.
"""
import os

import numpy as np

try:
    from numba import njit
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency
    _HAVE_NUMBA = False


def numba_enabled():
    """True when the compiled kernels are active."""
    flag = os.environ.get("JACDET_DISABLE_NUMBA", "0").strip().lower()
    return _HAVE_NUMBA and flag in ("", "0", "false", "no")


def backend_name():
    return "numba" if numba_enabled() else "numpy"


# -- RK4 ---------------------------------------------------------------------

def _rk4_linear_py(M, h):
    """Integrate Phi' = M(t) Phi, Phi(0) = I.

    Parameters
    ----------
    M : ndarray, shape (2N+1, d, d)
        Generator sampled on the half grid t_j = j*h/2.
    h : float
        Step of the full grid.

    Returns
    -------
    Phi : ndarray, shape (N+1, d, d)
    """
    nh, d, _ = M.shape
    N = (nh - 1) // 2
    out = np.empty((N + 1, d, d))
    P = np.eye(d)
    out[0] = P
    for j in range(N):
        M0 = M[2 * j]
        Mm = M[2 * j + 1]
        M1 = M[2 * j + 2]
        k1 = M0 @ P
        k2 = Mm @ (P + 0.5 * h * k1)
        k3 = Mm @ (P + 0.5 * h * k2)
        k4 = M1 @ (P + h * k3)
        P = P + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[j + 1] = P
    return out


def _matmul_nb(A, B):
    n, m = A.shape
    p = B.shape[1]
    C = np.zeros((n, p))
    for i in range(n):
        for k in range(m):
            a = A[i, k]
            if a != 0.0:
                for j in range(p):
                    C[i, j] += a * B[k, j]
    return C


def _rk4_linear_nb_src(M, h):
    nh, d, _ = M.shape
    N = (nh - 1) // 2
    out = np.empty((N + 1, d, d))
    P = np.eye(d)
    out[0] = P
    for j in range(N):
        M0 = np.ascontiguousarray(M[2 * j])
        Mm = np.ascontiguousarray(M[2 * j + 1])
        M1 = np.ascontiguousarray(M[2 * j + 2])
        k1 = _matmul(M0, P)
        k2 = _matmul(Mm, P + 0.5 * h * k1)
        k3 = _matmul(Mm, P + 0.5 * h * k2)
        k4 = _matmul(M1, P + h * k3)
        P = P + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[j + 1] = P
    return out


# -- Volterra cell sums --------------------------------------------------------

def _cell_volterra_py(Zq, w, J):
    """Per-cell integrals for a piecewise-constant control basis.

    Parameters
    ----------
    Zq : ndarray, shape (m, q, d, k)
        Z sampled at q quadrature nodes inside each of m cells, nodes
        sorted in time.
    w : ndarray, shape (q,)
        Quadrature weights on one cell.
    J : ndarray, shape (d, d)

    Returns
    -------
    ZI : ndarray, shape (m, d, k)
        Cell integrals of Z.
    D : ndarray, shape (m, k, k)
        Discrete triangle integrals sum_{a>b} w_a w_b Z_a^T J Z_b plus half
        the diagonal, so that D - D^T = ZI^T J ZI holds exactly.
    """
    m, q, d, k = Zq.shape
    ZI = np.einsum("a,iadk->idk", w, Zq)
    D = np.zeros((m, k, k))
    for i in range(m):
        JZ = np.einsum("de,aek->adk", J, Zq[i]) * w[:, None, None]
        # JZ.cumsum over earlier nodes
        below = np.cumsum(JZ, axis=0) - 0.5 * JZ
        D[i] = np.einsum("a,adk,adl->kl", w, Zq[i], below)
    return ZI, D


def _cell_volterra_nb_src(Zq, w, J):
    m, q, d, k = Zq.shape
    ZI = np.zeros((m, d, k))
    D = np.zeros((m, k, k))
    for i in range(m):
        acc = np.zeros((d, k))
        for a in range(q):
            Za = np.ascontiguousarray(Zq[i, a])
            JZa = _matmul(J, Za) * w[a]
            below = acc + 0.5 * JZa
            # D += w_a Z_a^T below
            for r in range(k):
                for c in range(k):
                    s = 0.0
                    for e in range(d):
                        s += Za[e, r] * below[e, c]
                    D[i, r, c] += w[a] * s
            acc = acc + JZa
            ZI[i] += w[a] * Za
    return ZI, D


if _HAVE_NUMBA:
    _matmul = njit(cache=True)(_matmul_nb)
    _rk4_linear_nb = njit(cache=True)(_rk4_linear_nb_src)
    _cell_volterra_nb = njit(cache=True)(_cell_volterra_nb_src)


def rk4_linear(M, h):
    M = np.ascontiguousarray(M, dtype=float)
    if numba_enabled():
        return _rk4_linear_nb(M, float(h))
    return _rk4_linear_py(M, float(h))


def cell_volterra(Zq, w, J):
    Zq = np.ascontiguousarray(Zq, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    J = np.ascontiguousarray(J, dtype=float)
    if numba_enabled():
        return _cell_volterra_nb(Zq, w, J)
    return _cell_volterra_py(Zq, w, J)
