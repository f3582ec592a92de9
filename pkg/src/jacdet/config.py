"""Problem configuration files (schema ``jacdet-problem/1``)."""
import json
import math

import numpy as np

from .functions import Constant, Fourier, MatrixFunction, Sampled
from .problem import (DEFAULT_GRID, build_drift, build_driftless, build_schrodinger,
                      double_system, normalize_legendre)
from .symplectic import MetricPair, annihilator_graph

SCHEMA = "jacdet-problem/1"
KINDS = ("driftless", "drift", "schrodinger", "custom")


class ConfigError(ValueError):
    """Malformed configuration; ``path`` names the offending JSON location."""

    def __init__(self, path, msg):
        self.path = path
        super().__init__(f"{path}: {msg}")


def _matrix(x, path, shape=None):
    try:
        a = np.asarray(x, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(path, "expected a number or a nested list of numbers") from None
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1)
    elif a.ndim != 2:
        raise ConfigError(path, f"expected a matrix, got an array of rank {a.ndim}")
    if not np.all(np.isfinite(a)):
        raise ConfigError(path, "non-finite entries")
    if shape is not None and a.shape != tuple(shape):
        if a.shape == (1, 1) and shape[0] == shape[1]:
            return float(a[0, 0]) * np.eye(shape[0])
        raise ConfigError(path, f"expected shape {tuple(shape)}, got {a.shape}")
    return a


def parse_function(x, path, shape=None):
    """Constant, Fourier or sampled matrix function from JSON."""
    if isinstance(x, dict):
        keys = set(x)
        if keys == {"constant"}:
            return Constant(_matrix(x["constant"], path + ".constant", shape))
        if keys == {"fourier"}:
            f = x["fourier"]
            if not isinstance(f, dict) or "a" not in f:
                raise ConfigError(path + ".fourier", "needs an 'a' list (a_0, a_1, ...)")
            a = f["a"]
            b = f.get("b", [])
            if not isinstance(a, list) or not a:
                raise ConfigError(path + ".fourier.a", "must be a non-empty list")
            if not isinstance(b, list):
                raise ConfigError(path + ".fourier.b", "must be a list")
            am = [_matrix(v, f"{path}.fourier.a[{i}]", shape) for i, v in enumerate(a)]
            sh = am[0].shape
            bm = [_matrix(v, f"{path}.fourier.b[{i}]", sh) for i, v in enumerate(b)]
            for i, v in enumerate(am):
                if v.shape != sh:
                    raise ConfigError(f"{path}.fourier.a[{i}]", "coefficient shapes differ")
            return Fourier(am, bm)
        if keys == {"samples"}:
            try:
                v = np.asarray(x["samples"], dtype=float)
            except (TypeError, ValueError):
                raise ConfigError(path + ".samples", "expected numeric samples") from None
            if v.ndim not in (1, 3) or v.shape[0] < 4 or not np.all(np.isfinite(v)):
                raise ConfigError(path + ".samples",
                                  "expected >= 4 finite samples, scalars or matrices")
            f = Sampled(v)
            if shape is not None and f.shape != tuple(shape):
                raise ConfigError(path + ".samples", f"expected shape {tuple(shape)}, got {f.shape}")
            return f
        raise ConfigError(path, "expected one of 'constant', 'fourier', 'samples'")
    return Constant(_matrix(x, path, shape))


def _function_config(f):
    return f.to_config()


def _number(cfg, key, path, default=None, lo=-math.inf, hi=math.inf, integer=False):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"{path}.{key}", "required")
        return default
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}", "expected a number")
    if integer and int(v) != v:
        raise ConfigError(f"{path}.{key}", "expected an integer")
    if not (lo <= v <= hi) or not math.isfinite(v):
        raise ConfigError(f"{path}.{key}", f"out of range [{lo}, {hi}]")
    return int(v) if integer else float(v)


class Problem:
    """A parsed problem: builder closure plus boundary and metrics."""

    def __init__(self, kind, build, n, boundary, metrics, grid, resolved):
        self.kind = kind
        self._build = build
        self.n = n
        self.boundary_spec = boundary
        self.metrics = metrics
        self.grid = grid
        self.resolved = resolved

    def problem(self, lam=None, grid=None):
        return self._build(self.grid if grid is None else grid, lam)

    def boundary(self, p):
        spec = self.boundary_spec
        if spec["type"] == "periodic":
            return annihilator_graph("periodic", p.n)
        if spec["type"] == "graph":
            F = p.meta["phi_hat"] if spec["F"] == "flow" else np.asarray(spec["F"], dtype=float)
            return annihilator_graph(("graph", F))
        if spec["type"] == "separated":
            return annihilator_graph(("separated", np.asarray(spec["L0"]), np.asarray(spec["L1"])))
        from .symplectic import BoundarySubspace
        return BoundarySubspace(np.asarray(spec["T0"]), np.asarray(spec["T1"]), "custom")

    def doubled(self, lam=None, grid=None):
        p = self.problem(lam, grid)
        return double_system(p, self.boundary(p))


def _parse_boundary(cfg, n, kind):
    path = "$.boundary"
    if cfg is None:
        return {"type": "graph", "F": "flow"} if kind == "drift" else {"type": "periodic"}
    if not isinstance(cfg, dict) or "type" not in cfg:
        raise ConfigError(path, "expected an object with a 'type'")
    t = cfg["type"]
    if t == "periodic":
        return {"type": "periodic"}
    if t == "graph":
        F = cfg.get("F", "flow")
        if F == "flow":
            if kind != "drift":
                raise ConfigError(path + ".F", "'flow' is only available for drift problems")
            return {"type": "graph", "F": "flow"}
        F = _matrix(F, path + ".F", (n, n))
        if np.linalg.cond(F) > 1e12:
            raise ConfigError(path + ".F", "graph map is not invertible")
        return {"type": "graph", "F": F.tolist()}
    if t == "separated":
        out = {"type": "separated"}
        for key in ("L0", "L1"):
            if key not in cfg:
                raise ConfigError(f"{path}.{key}", "required")
            L = _matrix(cfg[key], f"{path}.{key}")
            if L.shape != (2 * n, n):
                raise ConfigError(f"{path}.{key}", f"expected shape ({2*n}, {n}), got {L.shape}")
            out[key] = L.tolist()
        return out
    if t == "custom":
        out = {"type": "custom"}
        for key in ("T0", "T1"):
            if key not in cfg:
                raise ConfigError(f"{path}.{key}", "required")
            out[key] = _matrix(cfg[key], f"{path}.{key}", (2 * n, 2 * n)).tolist()
        return out
    raise ConfigError(path + ".type", f"unknown boundary type {t!r}")


def _parse_metrics(cfg, n):
    if cfg is None:
        return MetricPair.identity(n)
    path = "$.metrics"
    if not isinstance(cfg, dict):
        raise ConfigError(path, "expected an object")
    G0 = _matrix(cfg.get("G0", np.eye(2 * n).tolist()), path + ".G0", (2 * n, 2 * n))
    G1 = _matrix(cfg.get("G1", G0.tolist()), path + ".G1", (2 * n, 2 * n))
    try:
        return MetricPair(G0, G1)
    except ValueError as e:
        raise ConfigError(path, str(e)) from None


def parse_problem(cfg, grid=None):
    """Validate a problem configuration and return a :class:`Problem`.

    Raises
    ------
    ConfigError
    """
    if not isinstance(cfg, dict):
        raise ConfigError("$", "expected a JSON object")
    schema = cfg.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise ConfigError("$.schema", f"unsupported schema {schema!r}, expected {SCHEMA!r}")
    kind = cfg.get("kind")
    if kind not in KINDS:
        raise ConfigError("$.kind", f"expected one of {', '.join(KINDS)}")
    g = _number(cfg, "grid", "$", DEFAULT_GRID, 8, 1 << 16, integer=True)
    if grid is not None:
        g = grid
    resolved = {"schema": SCHEMA, "kind": kind, "grid": g}
    H = None

    if kind in ("driftless", "schrodinger"):
        if "R" not in cfg:
            raise ConfigError("$.R", "required")
        R = parse_function(cfg["R"], "$.R")
        n = R.shape[0]
        if R.shape != (n, n):
            raise ConfigError("$.R", f"must be square, got {R.shape}")
        resolved["R"] = _function_config(R)
        lam0 = None
        if kind == "schrodinger":
            lam0 = _number(cfg, "lambda", "$", 0.0)
            resolved["lambda"] = lam0
        k = n
    elif kind == "drift":
        for key in ("A", "B"):
            if key not in cfg:
                raise ConfigError(f"$.{key}", "required")
        A = parse_function(cfg["A"], "$.A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ConfigError("$.A", f"must be square, got {A.shape}")
        B = parse_function(cfg["B"], "$.B")
        if B.shape[0] != n:
            raise ConfigError("$.B", f"must have {n} rows, got {B.shape}")
        k = B.shape[1]
        R = parse_function(cfg.get("R", 0.0), "$.R", (n, n))
        resolved.update(A=_function_config(A), B=_function_config(B), R=_function_config(R))
    else:
        if "Z" not in cfg:
            raise ConfigError("$.Z", "required")
        Zf = parse_function(cfg["Z"], "$.Z")
        if Zf.shape[0] % 2:
            raise ConfigError("$.Z", f"must have 2n rows, got {Zf.shape}")
        n = Zf.shape[0] // 2
        k = Zf.shape[1]
        F = _matrix(cfg.get("phi_tilde", np.eye(2 * n).tolist()), "$.phi_tilde", (2 * n, 2 * n))
        resolved.update(Z=_function_config(Zf), phi_tilde=F.tolist())
    if "H" in cfg:
        H = parse_function(cfg["H"], "$.H", (k, k))
        resolved["H"] = _function_config(H)

    boundary = _parse_boundary(cfg.get("boundary"), n, kind)
    metrics = _parse_metrics(cfg.get("metrics"), n)
    resolved["boundary"] = boundary
    resolved["metrics"] = {"G0": metrics.G0.tolist(), "G1": metrics.G1.tolist()}
    for key in cfg:
        if key not in resolved and key not in ("lambda", "name", "description"):
            raise ConfigError(f"$.{key}", "unknown field")

    def build(grid_n, lam):
        if kind == "driftless":
            p = build_driftless(R, grid_n)
        elif kind == "schrodinger":
            p = build_schrodinger(R, lam0 if lam is None else lam, grid_n)
        elif kind == "drift":
            p = build_drift(A, B, R, grid_n)
        else:
            return normalize_legendre(Zf, H if H is not None else -np.eye(k), F, n=n,
                                      grid=grid_n, label="custom")
        if H is not None:
            p = normalize_legendre(p.Z, H, p.phi_tilde, n=n, grid=grid_n, label=p.label,
                                   meta=p.meta)
        return p

    return Problem(kind, build, n, boundary, metrics, g, resolved)


def load_problem(path, grid=None):
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError("$", f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from None
    return parse_problem(cfg, grid)
