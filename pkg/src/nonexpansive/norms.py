"""Norms on R^n with the unit-ball geometry needed for nonexpansivity checks.

Three variants are supported: ``LpNorm`` (``1 <= p <= inf``), ``WeightedL2``
(``||x||_P = sqrt(x^T P x)``) and ``PolyhedralNorm`` (unit ball given by facet
normals ``eta_k`` with facet planes ``eta_k^T x = 1``, plus the ball's vertices).
``LpNorm`` with ``p`` in ``{1, inf}`` delegates its geometry to the equivalent
polyhedral norm.

Supporting normals are scaled so that ``n^T v = ||v||``; with that scale every
normal has dual norm one.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np

__all__ = [
    "LpNorm",
    "WeightedL2",
    "PolyhedralNorm",
    "NormSpec",
    "SupportingNormalSet",
    "norm_eval",
    "supporting_normals",
    "is_strictly_convex",
    "matrix_measure",
    "measure_is_exact",
    "sphere_sample",
    "linf",
    "l1",
    "enumerate_vertices",
    "random_weighted_l2",
    "norm_to_json",
    "norm_from_json",
]

ACTIVE_TOL = 1e-9


class NormError(ValueError):
    pass


@dataclass(frozen=True)
class SupportingNormalSet:
    """Normals of hyperplanes supporting the ball of radius ``||v||`` at ``v``.

    ``kind`` is ``"unique"`` (one row) or ``"finite"`` (the set is the convex
    hull of the rows).
    """

    kind: str
    normals: np.ndarray = field(compare=False)


# ---------------------------------------------------------------------------
# variants


@dataclass(frozen=True, eq=False)
class LpNorm:
    p: float
    dim: int

    def __post_init__(self):
        if not (self.p >= 1):
            raise NormError(f"p must be >= 1 or inf, got {self.p}")
        if self.dim < 1:
            raise NormError("dimension must be positive")

    @property
    def is_polyhedral(self) -> bool:
        return self.p == 1 or math.isinf(self.p)

    @cached_property
    def polyhedral(self) -> "PolyhedralNorm":
        if math.isinf(self.p):
            return linf(self.dim)
        if self.p == 1:
            return l1(self.dim)
        raise NormError(f"l^{self.p} is not polyhedral")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if math.isinf(self.p):
            return np.max(np.abs(x), axis=-1)
        # scale by the max entry so |x_i|^p neither underflows nor overflows
        m = np.max(np.abs(x), axis=-1, keepdims=True)
        safe = np.where(m > 0, m, 1.0)
        y = np.abs(x / safe)
        if self.p == 2:
            s = np.sqrt(np.sum(y * y, axis=-1))
        elif self.p == 1:
            s = np.sum(y, axis=-1)
        else:
            s = np.sum(y**self.p, axis=-1) ** (1.0 / self.p)
        return s * m[..., 0]

    def normals(self, v: np.ndarray) -> SupportingNormalSet:
        if self.is_polyhedral:
            return self.polyhedral.normals(v)
        u = v / self(v)
        n = np.sign(u) * np.abs(u) ** (self.p - 1)
        return SupportingNormalSet("unique", n[None, :])

    def to_json(self) -> dict:
        return {"type": "lp", "p": "inf" if math.isinf(self.p) else self.p}

    def __repr__(self) -> str:
        return f"LpNorm(p={self.p}, dim={self.dim})"


@dataclass(frozen=True, eq=False)
class WeightedL2:
    P: np.ndarray

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise NormError("P must be a square matrix")
        if not np.allclose(P, P.T, rtol=0, atol=1e-12 * max(1.0, np.abs(P).max())):
            raise NormError("P must be symmetric")
        P = 0.5 * (P + P.T)
        if np.linalg.eigvalsh(P).min() <= 0:
            raise NormError("P must be positive definite")
        P.setflags(write=False)
        object.__setattr__(self, "P", P)

    @property
    def dim(self) -> int:
        return self.P.shape[0]

    @cached_property
    def factor(self) -> np.ndarray:
        """Upper-triangular ``L`` with ``P = L^T L``."""
        return np.linalg.cholesky(self.P).T

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.sqrt(np.einsum("...i,ij,...j->...", x, self.P, x))

    def normals(self, v: np.ndarray) -> SupportingNormalSet:
        return SupportingNormalSet("unique", (self.P @ v / self(v))[None, :])

    def to_json(self) -> dict:
        return {"type": "weighted_l2", "P": self.P.tolist()}

    def __repr__(self) -> str:
        return f"WeightedL2(P={self.P.tolist()})"


@dataclass(frozen=True, eq=False)
class PolyhedralNorm:
    """Symmetric polytope unit ball ``{x : eta_k^T x <= 1 for all k}``."""

    facets: np.ndarray
    vertices: np.ndarray

    def __post_init__(self):
        F = np.atleast_2d(np.array(self.facets, dtype=float))
        V = np.atleast_2d(np.array(self.vertices, dtype=float))
        n = F.shape[1]
        if V.shape[1] != n:
            raise NormError("facet normals and vertices differ in dimension")
        if np.linalg.matrix_rank(F) < n:
            raise NormError("facet normals do not span R^n; unit ball is unbounded")
        for eta in F:
            if not np.any(np.all(np.abs(F + eta) <= 1e-12 * max(1.0, np.abs(eta).max()), axis=1)):
                raise NormError("facet set is not symmetric under negation")
        support = (V @ F.T).max(axis=1)
        if np.any(np.abs(support - 1.0) > 1e-9):
            raise NormError("every vertex must lie on the unit sphere (max_k eta_k^T v = 1)")
        F.setflags(write=False)
        V.setflags(write=False)
        object.__setattr__(self, "facets", F)
        object.__setattr__(self, "vertices", V)

    @classmethod
    def from_facets(cls, facets) -> "PolyhedralNorm":
        """Build the norm, enumerating vertices (only for n <= 3)."""
        facets = np.atleast_2d(np.array(facets, dtype=float))
        return cls(facets, enumerate_vertices(facets))

    @property
    def dim(self) -> int:
        return self.facets.shape[1]

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.max(x @ self.facets.T, axis=-1)

    def active(self, v: np.ndarray, tol: float = ACTIVE_TOL) -> np.ndarray:
        vals = self.facets @ v
        top = vals.max()
        return self.facets[vals >= top - tol * max(abs(top), 1e-300)]

    def normals(self, v: np.ndarray) -> SupportingNormalSet:
        return SupportingNormalSet("finite", self.active(v))

    def vertex_facet_pairs(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(v, eta) for v in self.vertices for eta in self.active(v)]

    def to_json(self) -> dict:
        return {"type": "polyhedral", "facets": self.facets.tolist(), "vertices": self.vertices.tolist()}

    def __repr__(self) -> str:
        return f"PolyhedralNorm(dim={self.dim}, facets={len(self.facets)}, vertices={len(self.vertices)})"


NormSpec = Union[LpNorm, WeightedL2, PolyhedralNorm]


def _as_exact(spec: NormSpec) -> NormSpec:
    """Replace l^1, l^2, l^inf by their polyhedral / weighted forms."""
    if isinstance(spec, LpNorm):
        if spec.is_polyhedral:
            return spec.polyhedral
        if spec.p == 2:
            return WeightedL2(np.eye(spec.dim))
    return spec


def linf(dim: int) -> PolyhedralNorm:
    eye = np.eye(dim)
    vertices = np.array(list(itertools.product((1.0, -1.0), repeat=dim)))
    return PolyhedralNorm(np.vstack([eye, -eye]), vertices)


def l1(dim: int) -> PolyhedralNorm:
    eye = np.eye(dim)
    facets = np.array(list(itertools.product((1.0, -1.0), repeat=dim)))
    return PolyhedralNorm(facets, np.vstack([eye, -eye]))


def enumerate_vertices(facets, tol: float = 1e-9) -> np.ndarray:
    """Vertices of ``{x : F x <= 1}`` by brute-force facet intersection (n <= 3)."""
    F = np.atleast_2d(np.asarray(facets, dtype=float))
    n = F.shape[1]
    if n > 3:
        raise NormError("vertex enumeration is only implemented for n <= 3; supply vertices")
    found: list[np.ndarray] = []
    for rows in itertools.combinations(range(len(F)), n):
        A = F[list(rows)]
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        x = np.linalg.solve(A, np.ones(n))
        if np.max(F @ x) > 1 + tol:
            continue
        if not any(np.allclose(x, y, atol=tol) for y in found):
            found.append(x)
    if not found:
        raise NormError("no vertices found; facets do not bound a polytope")
    return np.array(found)


def random_weighted_l2(dim: int, seed: int, max_log_ratio: float = 1.0) -> WeightedL2:
    """Random ``P = Q diag(exp(s)) Q^T`` with ``s`` uniform in ``[-r/2, r/2]``.

    The eigenvalue ratio of ``P`` is at most ``exp(max_log_ratio)``.
    """
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    s = rng.uniform(-0.5, 0.5, dim) * max_log_ratio
    return WeightedL2(Q @ np.diag(np.exp(s)) @ Q.T)


# ---------------------------------------------------------------------------
# operations


def _check_dim(spec: NormSpec, n: int) -> None:
    if spec.dim != n:
        raise NormError(f"dimension mismatch: norm is {spec.dim}-dimensional, got {n}")


def norm_eval(spec: NormSpec, x) -> float:
    x = np.asarray(x, dtype=float)
    _check_dim(spec, x.shape[-1])
    return float(spec(x)) if x.ndim == 1 else spec(x)


def supporting_normals(spec: NormSpec, v) -> SupportingNormalSet:
    v = np.asarray(v, dtype=float)
    _check_dim(spec, v.shape[0])
    if not np.any(v):
        raise NormError("supporting normals are undefined at the zero vector")
    return spec.normals(v)


def is_strictly_convex(spec: NormSpec) -> bool:
    if isinstance(spec, LpNorm):
        return 1 < spec.p < math.inf
    return isinstance(spec, WeightedL2)


def measure_is_exact(spec: NormSpec) -> bool:
    """False when :func:`matrix_measure` only returns a sampled lower bound."""
    return not isinstance(_as_exact(spec), LpNorm)


def _l2_measure(A: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (A + A.T)).max())


def matrix_measure(spec: NormSpec, A, samples: int = 4000, seed: int = 0) -> float:
    """Logarithmic norm of ``A`` induced by ``spec``.

    Exact for l^1, l^2, l^inf, weighted l^2 and polyhedral norms.  For other
    l^p it is the maximum of ``n^T A v`` over ``samples`` unit vectors, which
    is a lower bound.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NormError("A must be square")
    _check_dim(spec, A.shape[0])
    if not np.all(np.isfinite(A)):
        raise NormError("A has non-finite entries")
    if isinstance(spec, LpNorm):
        if math.isinf(spec.p):
            off = np.abs(A).sum(axis=1) - np.abs(np.diag(A))
            return float(np.max(np.diag(A) + off))
        if spec.p == 1:
            off = np.abs(A).sum(axis=0) - np.abs(np.diag(A))
            return float(np.max(np.diag(A) + off))
        if spec.p == 2:
            return _l2_measure(A)
        V = sphere_sample(spec, samples, seed)
        N = np.sign(V) * np.abs(V) ** (spec.p - 1)
        return float(np.max(np.einsum("ki,ij,kj->k", N, A, V)))
    if isinstance(spec, WeightedL2):
        L = spec.factor
        return _l2_measure(L @ A @ np.linalg.inv(L))
    return float(max(eta @ A @ v for v, eta in spec.vertex_facet_pairs()))


def sphere_sample(spec: NormSpec, count: int, seed: int) -> np.ndarray:
    """``count`` deterministic pseudo-random points of norm 1, shape ``(count, n)``."""
    if count <= 0:
        raise ValueError("count must be positive")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((count, spec.dim))
    g /= spec(g)[:, None]
    # one more pass removes the last ulp of normalization error
    g /= spec(g)[:, None]
    return g


# ---------------------------------------------------------------------------
# JSON


def norm_to_json(spec: NormSpec) -> dict:
    return spec.to_json()


def norm_from_json(obj: dict, dim: int) -> NormSpec:
    kind = obj.get("type")
    if kind == "lp":
        p = obj["p"]
        p = math.inf if p in ("inf", "infinity") else float(p)
        return LpNorm(p, dim)
    if kind == "weighted_l2":
        spec = WeightedL2(np.array(obj["P"], dtype=float))
        _check_dim(spec, dim)
        return spec
    if kind == "polyhedral":
        facets = np.array(obj["facets"], dtype=float)
        spec = (
            PolyhedralNorm(facets, np.array(obj["vertices"], dtype=float))
            if obj.get("vertices") is not None
            else PolyhedralNorm.from_facets(facets)
        )
        _check_dim(spec, dim)
        return spec
    raise NormError(f"unknown norm type {kind!r}")
