"""Jacobi-type flow eta' = Z^s (Z^s)^T J eta and its s = 0 closed forms."""
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .problem import DoubledProblem, ProblemError, cumulative_simpson_half, half_grid


class FlowError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class FlowSolution:
    """Fundamental solution on the uniform grid.

    Attributes
    ----------
    s : float
    t : ndarray (N+1,)
    Phi : ndarray (N+1, d, d)
    J : ndarray (d, d)
        Symplectic form the flow preserves.
    method : str
    steps : int
    """
    s: float
    t: np.ndarray
    Phi: np.ndarray
    J: np.ndarray
    method: str = "rk4"
    steps: int = 0
    order: int = 4

    @property
    def Phi1(self):
        return self.Phi[-1]

    def symplectic_defect(self):
        """max over nodes of |Phi^T J Phi - J|."""
        r = np.einsum("tji,jk,tkl->til", self.Phi, self.J, self.Phi) - self.J
        return float(np.abs(r).max())

    def det_defect(self):
        return float(np.abs(np.linalg.det(self.Phi) - 1.0).max())


def _generator(Zh, J, rows, s):
    Zs = np.array(Zh)
    Zs[:, rows, :] *= s
    return np.einsum("tik,tjk,jl->til", Zs, Zs, J)


def fundamental_solution(p, s):
    """Phi_t^s for a ProblemLQ (dimension 2n) or DoubledProblem (4n).

    Classical RK4 on the problem grid; Z^s = delta^s Z is formed per call.
    """
    s = float(s)
    M = _generator(p.Z_half, p.J, p.vertical_rows, s)
    Phi = _kernels.rk4_linear(M, p.h)
    finite = np.isfinite(Phi).all(axis=(1, 2))
    if not finite.all():
        j = int(np.argmin(finite))
        norm = float(np.abs(Phi[j - 1]).max()) if j > 0 else float("nan")
        raise FlowError(f"non-finite flow at t={j * p.h:.6g} (last norm {norm:.3e}, s={s})")
    t = np.linspace(0.0, 1.0, p.grid + 1)
    return FlowSolution(s, t, Phi, p.J, "rk4", p.grid)


@dataclass(frozen=True, eq=False)
class ClosedFormS0:
    """Gamma, Theta, Omega on the grid and the assembled s = 0 matrices.

    Gamma_t = int_0^t X X^T, Theta_t = int_0^t Y X^T and
    Omega_t = int_0^t int_0^tau X_tau Z_tau^T J Z_r X_r^T dr dtau.
    Then Phi_t^0 = [[I, 0], [Gamma_t, I]] and
    d/ds Phi_t^s at s = 0 is [[Theta_t, 0], [Omega_t, -Theta_t^T]].
    """
    t: np.ndarray
    Gamma_t: np.ndarray
    Theta_t: np.ndarray
    Omega_t: np.ndarray

    @property
    def n(self):
        return self.Gamma_t.shape[1]

    @property
    def Gamma(self):
        return self.Gamma_t[-1]

    @property
    def Theta(self):
        return self.Theta_t[-1]

    @property
    def Omega(self):
        return self.Omega_t[-1]

    @property
    def Phi0(self):
        n = self.n
        out = np.zeros((self.t.size, 2 * n, 2 * n))
        out[:, :n, :n] = np.eye(n)
        out[:, n:, n:] = np.eye(n)
        out[:, n:, :n] = self.Gamma_t
        return out

    @property
    def dPhi0(self):
        n = self.n
        out = np.zeros((self.t.size, 2 * n, 2 * n))
        out[:, :n, :n] = self.Theta_t
        out[:, n:, :n] = self.Omega_t
        out[:, n:, n:] = -np.swapaxes(self.Theta_t, 1, 2)
        return out

    @property
    def Phi0_1(self):
        return self.Phi0[-1]

    @property
    def dPhi0_1(self):
        return self.dPhi0[-1]


def closed_form_s0(p):
    """Nested cumulative Simpson quadrature of Gamma, Theta and Omega."""
    if isinstance(p, DoubledProblem):
        p = p.base
    n, h = p.n, p.h
    Zh = p.Z_half
    Y, X = Zh[:, :n, :], Zh[:, n:, :]
    XX = np.einsum("tik,tjk->tij", X, X)
    YX = np.einsum("tik,tjk->tij", Y, X)
    XY = np.swapaxes(YX, 1, 2)
    Gam = cumulative_simpson_half(XX, h)
    The = cumulative_simpson_half(YX, h)
    inner = np.einsum("tij,tjk->tik", XX, The) - np.einsum("tij,tjk->tik", XY, Gam)
    Om = cumulative_simpson_half(inner, h)
    full = slice(0, None, 2)
    return ClosedFormS0(np.linspace(0.0, 1.0, p.grid + 1), Gam[full], The[full], Om[full])


def monodromy(p, route="jacobi"):
    """Psi = phi_tilde Phi_1^1, or the direct Floquet monodromy.

    Parameters
    ----------
    route : {'jacobi', 'direct'}
        'direct' integrates the linearised extremal flow with the problem's
        Hamiltonian generator (available for the built-in families).
    """
    if isinstance(p, DoubledProblem):
        p = p.base
    if route == "jacobi":
        return p.phi_tilde @ fundamental_solution(p, 1.0).Phi1
    if route == "direct":
        if p.hamiltonian is None:
            raise ProblemError("direct monodromy needs the problem's Hamiltonian generator")
        M = np.asarray(p.hamiltonian(half_grid(p.grid)), dtype=float)
        return _kernels.rk4_linear(M, p.h)[-1]
    raise ValueError(f"unknown route {route!r}")
