"""Nonexpansivity checks for ``x' = f(x)`` with respect to a fixed norm.

The flow is nonexpansive iff ``n^T J_f(x) v <= 0`` for every state ``x``, every
direction ``v`` and every outward supporting normal ``n`` of the ball of radius
``||v||`` at ``v``.  ``check_demidovich`` samples that condition,
``certify_linear`` decides it exactly for linear fields under polyhedral and
weighted-l2 norms, and ``empirical_pairwise_test`` checks the flow definition
directly on integrated pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exprparse import FieldEvaluationError, VectorFieldDef
from .norms import (
    NormSpec,
    PolyhedralNorm,
    WeightedL2,
    _as_exact,
    norm_to_json,
    sphere_sample,
)
from .odeint import DivergenceError, IntegrationError, IntegratorConfig, distance_series, trace, with_guard

__all__ = [
    "CERTIFIED_EXACT",
    "PASSED_SAMPLED",
    "VIOLATED",
    "VIOLATION_TOL",
    "Box",
    "NonexpansivityReport",
    "PairwiseReport",
    "BoundednessResult",
    "EquilibriumResult",
    "check_demidovich",
    "certify_linear",
    "empirical_pairwise_test",
    "boundedness_probe",
    "find_equilibrium",
]

CERTIFIED_EXACT = "CertifiedExact"
PASSED_SAMPLED = "PassedSampled"
VIOLATED = "Violated"

VIOLATION_TOL = 1e-9


class UnsupportedNormError(ValueError):
    pass


@dataclass(frozen=True)
class Box:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi) or not lo:
            raise ValueError("box bounds must have equal, positive length")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError("box is empty (lower > upper)")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def symmetric(cls, half_width: float, dim: int) -> "Box":
        return cls((-half_width,) * dim, (half_width,) * dim)

    @classmethod
    def from_intervals(cls, intervals) -> "Box":
        return cls(tuple(a for a, _ in intervals), tuple(b for _, b in intervals))

    @property
    def dim(self) -> int:
        return len(self.lower)

    def grid(self, count: int) -> np.ndarray:
        """Regular grid with about ``count`` points (corners included), shape ``(N, n)``."""
        per_axis = max(1, int(round(count ** (1.0 / self.dim))))
        while per_axis**self.dim < count:
            per_axis += 1
        axes = [
            np.linspace(a, b, per_axis) if b > a else np.array([a])
            for a, b in zip(self.lower, self.upper)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(count, self.dim))

    def to_json(self) -> dict:
        return {"type": "box", "intervals": [[a, b] for a, b in zip(self.lower, self.upper)]}


@dataclass
class NonexpansivityReport:
    verdict: str
    norm: NormSpec
    worst_margin: float
    domain: Box | None = None
    nx: int = 0
    nv: int = 0
    seed: int | None = None
    counterexample: dict | None = None
    exact_normals: bool = True

    @property
    def passed(self) -> bool:
        return self.verdict != VIOLATED

    def to_json(self) -> dict:
        out = {
            "verdict": self.verdict,
            "worst_margin": self.worst_margin,
            "samples": {"nx": self.nx, "nv": self.nv, "seed": self.seed},
            "norm": norm_to_json(self.norm),
            "domain": self.domain.to_json() if self.domain is not None else None,
        }
        if self.counterexample is not None:
            out["counterexample"] = self.counterexample
        return out


def _direction_normal_pairs(norm: NormSpec, directions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flatten every (v, n) with n an extreme point of N_v."""
    vs, ns = [], []
    for v in directions:
        for n in norm.normals(v).normals:
            vs.append(v)
            ns.append(n)
    return np.array(vs), np.array(ns)


def check_demidovich(
    f: VectorFieldDef,
    norm: NormSpec,
    domain: Box,
    nx: int = 2500,
    nv: int = 500,
    seed: int = 0,
    radius: float = 1.0,
    tol: float = VIOLATION_TOL,
) -> NonexpansivityReport:
    """Sample ``n^T J_f(x) v`` over a grid of ``x`` and directions ``v``.

    ``x`` runs over a regular grid of about ``nx`` points of ``domain``; ``v``
    over ``nv`` seeded points of the norm sphere of radius ``radius`` (plus
    the ball's vertices for polyhedral norms).  Margins are reported divided
    by ``||v||``, so they do not depend on ``radius``.  The verdict is never
    ``CertifiedExact``.
    """
    if nx <= 0 or nv <= 0:
        raise ValueError("nx and nv must be positive")
    if domain.dim != f.dimension or norm.dim != f.dimension:
        raise ValueError("field, norm and domain dimensions differ")
    geom = _as_exact(norm)
    directions = radius * sphere_sample(geom, nv, seed)
    if isinstance(geom, PolyhedralNorm):
        directions = np.vstack([directions, radius * geom.vertices])
    V, N = _direction_normal_pairs(geom, directions)
    X = domain.grid(nx)
    J = f.jacobian(X.T)  # (n, n, N)
    # margins[k, p] = N[p]^T J(x_k) V[p] / ||V[p]||
    margins = np.einsum("pi,ijk,pj->kp", N, J, V) / radius
    k, p = np.unravel_index(int(np.argmax(margins)), margins.shape)
    worst = float(margins[k, p])
    verdict = VIOLATED if worst > tol else PASSED_SAMPLED
    counterexample = None
    if verdict == VIOLATED:
        counterexample = {"x": X[k].tolist(), "v": V[p].tolist(), "n": N[p].tolist(), "margin": worst}
    return NonexpansivityReport(
        verdict,
        norm,
        worst,
        domain,
        nx=len(X),
        nv=len(directions),
        seed=seed,
        counterexample=counterexample,
        exact_normals=True,
    )


def certify_linear(A, norm: NormSpec, tol: float = VIOLATION_TOL) -> NonexpansivityReport:
    """Exact decision for ``x' = A x`` under polyhedral or weighted-l2 norms.

    Polyhedral: ``eta^T A v <= 0`` for every ball vertex ``v`` and facet normal
    ``eta`` active at ``v`` (``v -> eta^T A v`` is linear on each facet).
    Weighted l2: ``max eig(A^T P + P A) <= 0``, reported as the log-norm.
    """
    A = np.asarray(A, dtype=float)
    geom = _as_exact(norm)
    if A.shape != (geom.dim, geom.dim):
        raise ValueError("matrix and norm dimensions differ")
    if isinstance(geom, PolyhedralNorm):
        worst, witness = -math.inf, None
        for v, eta in geom.vertex_facet_pairs():
            m = float(eta @ A @ v)
            if m > worst:
                worst, witness = m, (v, eta)
        ok = worst <= tol
        counterexample = None
        if not ok:
            counterexample = {"v": witness[0].tolist(), "n": witness[1].tolist(), "margin": worst}
        return NonexpansivityReport(CERTIFIED_EXACT if ok else VIOLATED, norm, worst, counterexample=counterexample)
    if isinstance(geom, WeightedL2):
        L = geom.factor
        Linv = np.linalg.inv(L)
        S = L @ A @ Linv
        w, U = np.linalg.eigh(0.5 * (S + S.T))
        worst = float(w[-1])
        ok = worst <= tol
        counterexample = None
        if not ok:
            v = Linv @ U[:, -1]
            v = v / geom(v)
            counterexample = {"v": v.tolist(), "n": (geom.P @ v).tolist(), "margin": worst}
        return NonexpansivityReport(CERTIFIED_EXACT if ok else VIOLATED, norm, worst, counterexample=counterexample)
    raise UnsupportedNormError(f"no exact certificate for {norm!r}; use check_demidovich")


# ---------------------------------------------------------------------------
# flow-level tests


@dataclass
class PairwiseReport:
    passed: bool
    max_increment: float
    threshold: float
    pair_count: int
    diverged: int = 0
    worst_pair: tuple | None = None

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "max_increment": self.max_increment,
            "threshold": self.threshold,
            "pair_count": self.pair_count,
            "diverged": self.diverged,
            "worst_pair": None if self.worst_pair is None else [list(map(float, p)) for p in self.worst_pair],
        }


def empirical_pairwise_test(
    f: VectorFieldDef,
    norm: NormSpec,
    pair_count: int,
    domain: Box,
    horizon: float,
    cfg: IntegratorConfig = IntegratorConfig(),
    seed: int = 0,
    sample_dt: float = 0.1,
) -> PairwiseReport:
    """Largest increase of ``t -> ||phi_t(x) - phi_t(y)||`` between consecutive samples.

    Increments are relative to the pair's initial distance.  Passes iff the
    largest one is at most ``10 * max(rtol, atol)``.  Diverging pairs are
    counted, not fatal.
    """
    if pair_count <= 0:
        raise ValueError("pair_count must be positive")
    rng = np.random.default_rng(seed)
    threshold = 10 * max(cfg.rtol, cfg.atol)
    worst, worst_pair, diverged = -math.inf, None, 0
    for _ in range(pair_count):
        x, y = domain.sample(2, rng)
        d0 = float(norm(x - y))
        if d0 == 0:
            continue
        try:
            series = distance_series(f, x, y, norm, horizon, sample_dt, cfg)
        except (DivergenceError, IntegrationError, FieldEvaluationError):
            diverged += 1
            continue
        inc = float(np.max(np.diff(series[:, 1]))) / d0
        if inc > worst:
            worst, worst_pair = inc, (x, y)
    passed = worst <= threshold and diverged == 0
    return PairwiseReport(passed, worst, threshold, pair_count, diverged, worst_pair)


@dataclass
class BoundednessResult:
    """``bounded`` is evidence over a finite horizon, not a proof."""

    bounded: bool
    max_norm: float
    horizon: float
    escape_time: float | None = None

    def to_json(self) -> dict:
        return {
            "bounded": self.bounded,
            "max_norm": self.max_norm,
            "horizon": self.horizon,
            "escape_time": self.escape_time,
        }


def boundedness_probe(
    f: VectorFieldDef,
    x0,
    horizon: float,
    radius_guard: float = 1e6,
    cfg: IntegratorConfig = IntegratorConfig(),
    sample_dt: float = 0.5,
) -> BoundednessResult:
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    guard = min(radius_guard, cfg.overflow_guard)
    try:
        traj = trace(f, x0, horizon, min(sample_dt, horizon), with_guard(cfg, guard))
    except FieldEvaluationError:
        return BoundednessResult(False, math.inf, horizon, None)
    norms = np.linalg.norm(traj.states, axis=1)
    if traj.termination == "overflow":
        return BoundednessResult(False, float(norms.max()), horizon, traj.escape_time)
    if not traj.complete:
        raise IntegrationError(f"integration stopped ({traj.termination}) at t={traj.times[-1]:g}")
    return BoundednessResult(True, float(norms.max()), horizon, None)


@dataclass
class EquilibriumResult:
    point: np.ndarray
    residual: float
    converged: bool
    iterations: int = 0

    def to_json(self) -> dict:
        return {"point": self.point.tolist(), "residual": self.residual, "converged": self.converged}


def find_equilibrium(
    f: VectorFieldDef,
    seeds: Sequence,
    newton_iters: int = 50,
    tol: float = 1e-12,
    max_halvings: int = 40,
) -> EquilibriumResult:
    """Damped Newton on ``f(x) = 0`` from each seed; first converged root wins.

    The step is halved until the residual decreases (at most ``max_halvings``
    times).  Singular Jacobians fall back to a least-squares step.
    """
    seeds = [np.asarray(s, dtype=float) for s in seeds]
    if not seeds:
        raise ValueError("at least one seed is required")
    best = None
    for seed in seeds:
        x = seed.copy()
        r = float(np.linalg.norm(f(x)))
        it = 0
        for it in range(1, newton_iters + 1):
            # one polishing step is always attempted; it is kept only if it lowers the residual
            if r == 0.0 or (r < tol and it > 1):
                break
            fx = f(x)
            step = np.linalg.lstsq(f.jacobian(x), -fx, rcond=None)[0]
            lam = 1.0
            for _ in range(max_halvings + 1):
                trial = x + lam * step
                try:
                    rt = float(np.linalg.norm(f(trial)))
                except FieldEvaluationError:
                    rt = math.inf
                if rt < r:
                    break
                lam *= 0.5
            else:
                break
            x, r = trial, rt
        result = EquilibriumResult(x, r, r < tol, it)
        if result.converged:
            return result
        if best is None or r < best.residual:
            best = result
    return best
