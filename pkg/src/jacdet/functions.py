"""Matrix-valued functions of time on [0, 1] with exact antiderivatives.

All samplers take a 1-d array of times and return an array of shape
(len(t), rows, cols). Scalars are promoted to 1x1 matrices.
"""
import numpy as np
from scipy.interpolate import CubicSpline

_GL_X, _GL_W = np.polynomial.legendre.leggauss(32)


def _as_matrix(x):
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1)
    return a


class MatrixFunction:
    """Base class. Subclasses implement ``__call__`` and ``antiderivative``."""

    shape = (1, 1)

    def __call__(self, t):
        raise NotImplementedError

    def antiderivative(self, t):
        """int_0^t f, evaluated at each entry of t."""
        raise NotImplementedError

    def to_config(self):
        raise NotImplementedError

    def __add__(self, other):
        return SumFunction(self, as_function(other, self.shape))

    def __neg__(self):
        return ScaledFunction(self, -1.0)


class Constant(MatrixFunction):
    def __init__(self, value):
        self.value = _as_matrix(value)
        self.shape = self.value.shape

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.broadcast_to(self.value, (t.size,) + self.shape).copy()

    def antiderivative(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return t[:, None, None] * self.value[None]

    def to_config(self):
        return {"constant": self.value.tolist()}


class Fourier(MatrixFunction):
    """f(t) = a_0 + sum_{m>=1} a_m cos(2 pi m t) + b_m sin(2 pi m t).

    Parameters
    ----------
    a : sequence of matrices
        a_0, a_1, ..., a_M.
    b : sequence of matrices, optional
        b_1, ..., b_M (padded with zeros if shorter).
    """

    def __init__(self, a, b=()):
        a = [_as_matrix(x) for x in a]
        if not a:
            raise ValueError("Fourier series needs at least a_0")
        self.shape = a[0].shape
        b = [_as_matrix(x) for x in b]
        M = max(len(a) - 1, len(b))
        zero = np.zeros(self.shape)
        self.a = np.array(a + [zero] * (M + 1 - len(a)))
        self.b = np.array([zero] + b + [zero] * (M - len(b)))
        if self.a.shape[1:] != self.shape or self.b.shape[1:] != self.shape:
            raise ValueError("Fourier coefficients must share one shape")

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        w = 2 * np.pi * np.arange(self.a.shape[0])
        c = np.cos(np.outer(t, w))
        s = np.sin(np.outer(t, w))
        return np.einsum("tm,mij->tij", c, self.a) + np.einsum("tm,mij->tij", s, self.b)

    def antiderivative(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        w = 2 * np.pi * np.arange(1, self.a.shape[0])
        out = t[:, None, None] * self.a[0][None]
        if w.size:
            c = np.sin(np.outer(t, w)) / w
            s = (1.0 - np.cos(np.outer(t, w))) / w
            out = out + np.einsum("tm,mij->tij", c, self.a[1:]) + np.einsum("tm,mij->tij", s, self.b[1:])
        return out

    def to_config(self):
        return {"fourier": {"a": self.a.tolist(), "b": self.b[1:].tolist()}}


class Sampled(MatrixFunction):
    """Cubic-spline interpolant of samples on the uniform nodes t_j = j/N."""

    def __init__(self, values, t=None):
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = v[:, None, None]
        elif v.ndim == 2:
            v = v[:, :, None]
        if v.shape[0] < 4:
            raise ValueError("need at least 4 samples")
        self.values = v
        self.shape = v.shape[1:]
        self.t = np.linspace(0.0, 1.0, v.shape[0]) if t is None else np.asarray(t, dtype=float)
        self._spline = CubicSpline(self.t, v, axis=0)
        self._anti = self._spline.antiderivative()

    def __call__(self, t):
        return self._spline(np.atleast_1d(np.asarray(t, dtype=float)))

    def antiderivative(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return self._anti(t) - self._anti(0.0)

    def to_config(self):
        return {"samples": self.values.tolist()}


class Callable(MatrixFunction):
    """Wrap an arbitrary function; antiderivative by 32-point Gauss-Legendre."""

    def __init__(self, f, shape=None):
        self.f = f
        if shape is None:
            shape = np.asarray(f(np.array([0.0]))).shape[1:]
        self.shape = tuple(shape)

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.asarray(self.f(t), dtype=float).reshape((t.size,) + self.shape)

    def antiderivative(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        nodes = 0.5 * (np.outer(t, _GL_X + 1.0))
        vals = self(nodes.ravel()).reshape(t.size, _GL_X.size, *self.shape)
        return 0.5 * t[:, None, None] * np.einsum("g,tgij->tij", _GL_W, vals)

    def to_config(self):
        raise TypeError("callable matrix functions cannot be serialised")


class SumFunction(MatrixFunction):
    def __init__(self, f, g):
        if f.shape != g.shape:
            raise ValueError(f"shape mismatch {f.shape} vs {g.shape}")
        self.f, self.g, self.shape = f, g, f.shape

    def __call__(self, t):
        return self.f(t) + self.g(t)

    def antiderivative(self, t):
        return self.f.antiderivative(t) + self.g.antiderivative(t)

    def to_config(self):
        raise TypeError("composite functions are not serialised")


class ScaledFunction(MatrixFunction):
    def __init__(self, f, c):
        self.f, self.c, self.shape = f, float(c), f.shape

    def __call__(self, t):
        return self.c * self.f(t)

    def antiderivative(self, t):
        return self.c * self.f.antiderivative(t)

    def to_config(self):
        raise TypeError("composite functions are not serialised")


def as_function(x, shape=None):
    """Promote constants, arrays and callables to a MatrixFunction.

    A scalar with ``shape`` given becomes a multiple of the identity.
    """
    if isinstance(x, MatrixFunction):
        return x
    if callable(x):
        return Callable(x, shape)
    a = np.asarray(x, dtype=float)
    if a.ndim == 0 and shape is not None:
        if shape[0] != shape[1]:
            raise ValueError("scalar can only stand for a square matrix")
        return Constant(float(a) * np.eye(shape[0]))
    return Constant(a)


def random_fourier(rng, n=1, modes=3, scale=1.0, symmetric=True):
    """Random Fourier series with ``modes`` harmonics (plus the mean)."""
    def draw():
        M = rng.standard_normal((n, n)) * scale
        return 0.5 * (M + M.T) if symmetric else M
    a = [draw() for _ in range(modes + 1)]
    b = [draw() for _ in range(modes)]
    return Fourier(a, b)
