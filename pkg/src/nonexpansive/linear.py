"""Conserved linear systems ``x' = B x``.

A system is conserved when ``B`` is diagonalizable with a purely imaginary
spectrum.  In a real block basis ``L`` such a ``B`` becomes

    L^{-1} B L = diag([[0, a_1], [-a_1, 0]], ..., [[0, a_l], [-a_l, 0]], 0, ..., 0)

so ``e^{Bt}`` is a product of plane rotations, ``x^T P x`` with
``P = L^{-T} L^{-1}`` is invariant, and the closure of an orbit is a torus
whose dimension is the number of rationally independent frequencies the
orbit actually excites.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import minimize_scalar

from .exprparse import VectorFieldDef

__all__ = [
    "ConservedAnalysis",
    "QuadraticInvariant",
    "GeneratorFit",
    "analyze_conserved",
    "quadratic_invariant",
    "expm_conserved",
    "min_return_time",
    "integer_relations",
    "torus_dimension",
    "fit_linear_generator",
    "preserved_quadratic_2d",
]

COND_LIMIT = 1e8


class NotConservedError(ValueError):
    pass


@dataclass
class ConservedAnalysis:
    B: np.ndarray
    eigenvalues: np.ndarray
    conserved: bool
    frequencies: np.ndarray
    zero_blocks: int
    L: np.ndarray | None
    reason: str = ""
    block_residual: float = math.nan

    @property
    def block_form(self) -> np.ndarray:
        """``diag`` of rotation generators followed by zeros."""
        n = self.B.shape[0]
        K = np.zeros((n, n))
        for i, a in enumerate(self.frequencies):
            K[2 * i, 2 * i + 1] = a
            K[2 * i + 1, 2 * i] = -a
        return K

    def to_json(self) -> dict:
        return {
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "conserved": self.conserved,
            "frequencies": [float(a) for a in self.frequencies],
            "zero_blocks": self.zero_blocks,
            "block_residual": None if math.isnan(self.block_residual) else self.block_residual,
            "reason": self.reason,
        }


def _spectral_tol(B: np.ndarray, spectral_tol: float | None) -> float:
    if spectral_tol is not None:
        return spectral_tol
    return 1e-8 * max(np.linalg.norm(B, 2), 1e-300)


def analyze_conserved(B, spectral_tol: float | None = None) -> ConservedAnalysis:
    """Spectrum test plus the real block basis ``L`` when ``B`` is conserved.

    ``spectral_tol`` bounds ``|Re lambda|`` (default ``1e-8 ||B||``); the
    eigenvector matrix must have condition number below ``1e8``.
    """
    B = np.array(B, dtype=float)
    n = B.shape[0]
    if B.shape != (n, n):
        raise ValueError("B must be square")
    if not np.all(np.isfinite(B)):
        raise ValueError("B has non-finite entries")
    if not np.any(B):
        # canonical choice: every coordinate is a zero block, L = I
        return ConservedAnalysis(B, np.zeros(n, complex), True, np.zeros(0), n, np.eye(n), block_residual=0.0)
    tol = _spectral_tol(B, spectral_tol)
    try:
        w, V = np.linalg.eig(B)
    except np.linalg.LinAlgError as exc:
        return ConservedAnalysis(B, np.full(n, np.nan + 0j), False, np.zeros(0), 0, None, f"eigensolver failed: {exc}")
    order = np.lexsort((w.real, -np.abs(w.imag)))
    w, V = w[order], V[:, order]

    def fail(reason):
        return ConservedAnalysis(B, w, False, np.zeros(0), 0, None, reason)

    if np.max(np.abs(w.real)) >= tol:
        return fail(f"eigenvalue with |Re| = {np.max(np.abs(w.real)):.3g} >= {tol:.3g}")
    if np.linalg.cond(V) >= COND_LIMIT:
        return fail("eigenvector matrix is singular (B is not diagonalizable)")

    pos = [i for i in range(n) if w[i].imag > tol]
    zero = [i for i in range(n) if abs(w[i].imag) <= tol]
    cols, freqs = [], []
    for i in pos:
        v = V[:, i]
        # rotate so the real and imaginary parts are orthogonal, then scale
        theta = 0.5 * math.atan2(-2 * float(v.real @ v.imag), float(v.real @ v.real - v.imag @ v.imag))
        v = v * np.exp(1j * theta)
        a, b = v.real, v.imag
        s = math.sqrt(2.0 / (a @ a + b @ b))
        cols += [s * a, s * b]
        freqs.append(float(w[i].imag))
    if zero:
        Z = null_space(B, rcond=max(tol / max(np.linalg.norm(B, 2), 1e-300), 1e-12))
        if Z.shape[1] != len(zero):
            return fail("zero eigenvalue is defective")
        cols += list(Z.T)
    L = np.column_stack(cols)
    if np.linalg.cond(L) >= COND_LIMIT:
        return fail("real block basis is singular")
    analysis = ConservedAnalysis(B, w, True, np.array(freqs), len(zero), L)
    K = analysis.block_form
    analysis.block_residual = float(np.max(np.abs(np.linalg.solve(L, B @ L) - K)))
    return analysis


@dataclass
class QuadraticInvariant:
    P: np.ndarray
    residual: float

    def to_json(self) -> dict:
        return {"P": self.P.tolist(), "residual": self.residual}


def quadratic_invariant(analysis: ConservedAnalysis) -> QuadraticInvariant:
    """``P`` with ``B^T P + P B = 0`` from the block basis, normalized to ``trace P = n``."""
    if not analysis.conserved:
        raise NotConservedError("quadratic_invariant needs a conserved system")
    Linv = np.linalg.inv(analysis.L)
    P = Linv.T @ Linv
    P = 0.5 * (P + P.T)
    P *= P.shape[0] / np.trace(P)
    B = analysis.B
    return QuadraticInvariant(P, float(np.linalg.norm(B.T @ P + P @ B, 2)))


def expm_conserved(analysis: ConservedAnalysis, t: float) -> np.ndarray:
    """``e^{Bt}`` assembled from exact block rotations."""
    if not analysis.conserved:
        raise NotConservedError("expm_conserved needs a conserved system")
    n = analysis.B.shape[0]
    R = np.eye(n)
    for i, a in enumerate(analysis.frequencies):
        c, s = math.cos(a * t), math.sin(a * t)
        R[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = [[c, s], [-s, c]]
    L = analysis.L
    return L @ R @ np.linalg.inv(L)


def min_return_time(
    B,
    eps: float,
    delta: float,
    horizon: float,
    analysis: ConservedAnalysis | None = None,
) -> float | None:
    """First ``t`` in ``[delta, horizon]`` with ``||e^{Bt} - I||_2 < eps``, or None.

    A grid over the rotation phases brackets every near-return; each bracket
    is refined by minimizing ``sum_i (1 - cos a_i t)`` and the result is
    accepted on the true operator norm.  The minimizer of the first accepted
    basin is returned.
    """
    if not (eps > 0 and delta > 0):
        raise ValueError("eps and delta must be positive")
    analysis = analysis or analyze_conserved(B)
    if not analysis.conserved:
        raise NotConservedError("min_return_time needs a conserved system")
    freqs = analysis.frequencies
    if len(freqs) == 0:
        return float(delta)
    if horizon < delta:
        return None
    n = analysis.B.shape[0]

    def gap(t):
        return float(np.sum(1.0 - np.cos(freqs * t)))

    def opnorm(t):
        return float(np.linalg.norm(expm_conserved(analysis, t) - np.eye(n), 2))

    h = (2 * math.pi / freqs.max()) / 32
    grid = np.arange(delta, horizon + h, h)
    grid = grid[grid <= horizon]
    if len(grid) < 3:
        grid = np.linspace(delta, horizon, 3)
    values = 1.0 - np.cos(np.outer(grid, freqs))
    values = values.sum(axis=1)
    curvature = float(np.sum(freqs**2))
    cond = np.linalg.cond(analysis.L)
    # ||e^{Bt} - I|| >= max_i 2|sin(a_i t / 2)| / cond(L); gap = sum_i 2 sin^2(a_i t / 2)
    need = len(freqs) * 0.5 * (eps * cond) ** 2 + curvature * h * h
    for i in range(len(grid)):
        left = values[i - 1] if i > 0 else math.inf
        right = values[i + 1] if i + 1 < len(grid) else math.inf
        if values[i] > need or values[i] > left or values[i] > right:
            continue
        lo, hi = max(delta, grid[i] - h), min(horizon, grid[i] + h)
        res = minimize_scalar(gap, bounds=(lo, hi), method="bounded", options={"xatol": 1e-13})
        for t in (float(res.x), float(grid[i])):
            if opnorm(t) < eps:
                return t
    return None


def integer_relations(freqs, coeff_bound: int = 50, tol: float = 1e-6) -> np.ndarray:
    """All ``m`` (up to sign) with ``|m_i| <= coeff_bound`` and ``|m . a| < tol ||m|| max|a|``.

    Exhaustive over the first ``l - 1`` coordinates; the last one is solved for
    and rounded, so the search is exact for the stated bound.
    """
    a = np.asarray(freqs, dtype=float)
    l = len(a)
    if l < 2:
        return np.zeros((0, l), dtype=int)
    scale = float(np.max(np.abs(a)))
    rng = np.arange(-coeff_bound, coeff_bound + 1)
    prefixes = np.array(list(itertools.product(rng, repeat=l - 1)), dtype=float)
    partial = prefixes @ a[:-1]
    found = []
    base = np.round(-partial / a[-1])
    for shift in (-1.0, 0.0, 1.0):
        last = base + shift
        ok = np.abs(last) <= coeff_bound
        m = np.column_stack([prefixes, last])
        resid = np.abs(m @ a)
        norms = np.linalg.norm(m, axis=1)
        ok &= (norms > 0) & (resid < tol * norms * scale)
        found.append(m[ok])
    rel = np.unique(np.vstack(found).astype(int), axis=0)
    # keep one of each +-m pair
    keep = [r for r in rel if tuple(r) > tuple(-r)]
    return np.array(keep, dtype=int).reshape(-1, l)


def block_amplitudes(analysis: ConservedAnalysis, x0) -> np.ndarray:
    z = np.linalg.solve(analysis.L, np.asarray(x0, dtype=float))
    l = len(analysis.frequencies)
    return np.hypot(z[0 : 2 * l : 2], z[1 : 2 * l : 2])


def torus_dimension(analysis: ConservedAnalysis, x0, coeff_bound: int = 50, tol: float = 1e-6) -> int:
    """Dimension ``k`` of the closure of ``{e^{Bt} x0}``.

    Blocks whose amplitude in ``x0`` is below ``tol ||x0||`` are dropped; the
    rest contribute their frequencies, and ``k`` is their number minus the
    rank of the integer relations among them.
    """
    if not analysis.conserved:
        raise NotConservedError("torus_dimension needs a conserved system")
    x0 = np.asarray(x0, dtype=float)
    size = float(np.linalg.norm(x0))
    if size == 0 or len(analysis.frequencies) == 0:
        return 0
    amps = block_amplitudes(analysis, x0)
    alive = analysis.frequencies[amps >= tol * size]
    if len(alive) == 0:
        return 0
    rel = integer_relations(alive, coeff_bound, tol)
    rank = int(np.linalg.matrix_rank(rel.astype(float))) if len(rel) else 0
    return len(alive) - rank


@dataclass
class GeneratorFit:
    """Least-squares linear model ``f(y) ~ B (y - equilibrium)`` on the sample span.

    ``B`` is in ambient coordinates (``basis @ B_span @ basis.T``); ``B_span``
    acts on coordinates in the orthonormal ``basis``.
    """

    B: np.ndarray
    B_span: np.ndarray
    equilibrium: np.ndarray
    basis: np.ndarray
    residual: float

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def to_json(self) -> dict:
        return {
            "B": self.B.tolist(),
            "equilibrium": self.equilibrium.tolist(),
            "span_rank": self.rank,
            "residual": self.residual,
        }


def span_basis(Y: np.ndarray, rel_tol: float = 1e-8) -> np.ndarray:
    """Orthonormal basis (columns) of the span of the rows of ``Y``.

    Singular values below ``rel_tol * max(s_max, sqrt(N) * max(1, |Y|_max))``
    are dropped, so a cloud of roundoff around a point has rank 0.
    """
    if Y.size == 0:
        return np.zeros((Y.shape[1], 0))
    _, s, Vt = np.linalg.svd(Y, full_matrices=False)
    floor = math.sqrt(Y.shape[0]) * max(1.0, float(np.abs(Y).max()))
    cut = rel_tol * max(float(s[0]) if len(s) else 0.0, floor)
    r = int(np.sum(s > cut))
    return Vt[:r].T


def fit_linear_generator(
    f: VectorFieldDef,
    samples,
    equilibrium,
    rel_tol: float = 1e-8,
) -> GeneratorFit:
    """Fit ``B`` minimizing ``sum_j ||f(y_j) - B (y_j - e)||^2`` over the span of ``y_j - e``.

    The RMS misfit includes the part of ``f`` normal to the span.
    """
    Y = np.atleast_2d(np.asarray(samples, dtype=float))
    e = np.asarray(equilibrium, dtype=float)
    D = Y - e
    F = f(Y.T).T
    Q = span_basis(D, rel_tol)
    r = Q.shape[1]
    n = Y.shape[1]
    if r == 0:
        resid = float(np.sqrt(np.mean(np.sum(F**2, axis=1))))
        return GeneratorFit(np.zeros((n, n)), np.zeros((0, 0)), e, Q, resid)
    Z = D @ Q  # (N, r)
    G = F @ Q  # (N, r)
    Bt, *_ = np.linalg.lstsq(Z, G, rcond=None)
    B_span = Bt.T
    B = Q @ B_span @ Q.T
    misfit = F - Z @ B_span.T @ Q.T
    resid = float(np.sqrt(np.mean(np.sum(misfit**2, axis=1))))
    return GeneratorFit(B, B_span, e, Q, resid)


def preserved_quadratic_2d(B, tol: float = 1e-10) -> QuadraticInvariant | None:
    """The unique (up to scale) ``P > 0`` with ``B^T P + P B = 0``, or None.

    Exists iff ``B`` has nonzero purely imaginary eigenvalues; then the map
    ``P -> B^T P + P B`` on symmetric 2x2 matrices has a 1-D kernel.
    ``P`` is normalized to trace 2.
    """
    B = np.asarray(B, dtype=float)
    if B.shape != (2, 2):
        raise ValueError("B must be 2x2")
    scale = max(float(np.abs(B).max()), 1e-300)
    w = np.linalg.eigvals(B)
    if np.any(np.abs(w.real) > tol * scale) or np.any(np.abs(w.imag) <= tol * scale):
        return None
    basis = [np.array([[1.0, 0.0], [0.0, 0.0]]), np.array([[0.0, 1.0], [1.0, 0.0]]), np.array([[0.0, 0.0], [0.0, 1.0]])]
    M = np.column_stack([(B.T @ E + E @ B)[np.triu_indices(2)] for E in basis])
    kernel = null_space(M, rcond=tol)
    if kernel.shape[1] != 1:
        return None
    p11, p12, p22 = kernel[:, 0]
    P = np.array([[p11, p12], [p12, p22]])
    if np.trace(P) < 0:
        P = -P
    P *= 2.0 / np.trace(P)
    if np.linalg.eigvalsh(P).min() <= 0:
        return None
    return QuadraticInvariant(P, float(np.linalg.norm(B.T @ P + P @ B, 2)))
