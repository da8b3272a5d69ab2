"""Numerical classification of omega-limit sets.

Pipeline: boundedness probe, attractor sampling after a transient, span
detection, then either an equilibrium verdict (rank-0 span) or a linear
generator fit whose conserved spectrum and excited frequencies give a
``Torus(k)`` verdict.  Whenever the evidence does not support a verdict the
result is ``Unknown`` with a reason.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .contraction import BoundednessResult, EquilibriumResult, boundedness_probe, find_equilibrium
from .exprparse import FieldEvaluationError, VectorFieldDef
from .linear import (
    ConservedAnalysis,
    GeneratorFit,
    analyze_conserved,
    fit_linear_generator,
    span_basis,
    torus_dimension,
)
from .norms import NormSpec, is_strictly_convex
from .odeint import IntegrationError, IntegratorConfig, distance_series, integrate, sample_times

__all__ = [
    "EQUILIBRIUM",
    "TORUS",
    "UNBOUNDED",
    "UNKNOWN",
    "ClassifyConfig",
    "AttractorSample",
    "LimitSetReport",
    "extract_attractor",
    "isometry_check",
    "convex_combination_check",
    "classify_limit_set",
]

EQUILIBRIUM = "Equilibrium"
TORUS = "Torus"
UNBOUNDED = "Unbounded"
UNKNOWN = "Unknown"

SPAN_TOL = 1e-8


class DivergentTransient(IntegrationError):
    def __init__(self, message: str, escape_time: float | None):
        super().__init__(message)
        self.escape_time = escape_time


@dataclass(frozen=True)
class ClassifyConfig:
    transient: float = 50.0
    window: float = 200.0
    sample_dt: float = 0.1
    radius_guard: float = 1e6
    fit_tol: float = 1e-6
    spectral_tol: float | None = None
    equilibrium_tol: float = 1e-8
    coeff_bound: int = 50
    relation_tol: float = 1e-6
    evidence: bool = True
    evidence_pairs: int = 4
    evidence_ts: tuple = (1.0, 5.0)
    seed: int = 0
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)

    def __post_init__(self):
        if not (self.transient > 0 and self.window > 0 and self.sample_dt > 0):
            raise ValueError("transient, window and sample_dt must be positive")


@dataclass
class AttractorSample:
    points: np.ndarray
    times: np.ndarray
    basis: np.ndarray
    equilibrium: EquilibriumResult | None

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    @property
    def center(self) -> np.ndarray:
        if self.equilibrium is not None and self.equilibrium.converged:
            return self.equilibrium.point
        return self.points.mean(axis=0)

    @classmethod
    def from_points(cls, points, f: VectorFieldDef | None = None) -> "AttractorSample":
        """Wrap given points (no integration); the equilibrium is estimated if ``f`` is given."""
        P = np.atleast_2d(np.asarray(points, dtype=float))
        eq = find_equilibrium(f, [P.mean(axis=0)]) if f is not None else None
        center = eq.point if eq is not None and eq.converged else P.mean(axis=0)
        return cls(P, np.zeros(len(P)), span_basis(P - center, SPAN_TOL), eq)


def extract_attractor(
    f: VectorFieldDef,
    x0,
    transient: float,
    window: float,
    sample_dt: float,
    cfg: IntegratorConfig = IntegratorConfig(),
) -> AttractorSample:
    """Samples of the trajectory on ``[transient, transient + window]``.

    The span is taken around an equilibrium found by Newton from the sample
    mean (or around the mean if none is found).  Raises
    :class:`DivergentTransient` if the trajectory blows up.
    """
    if not (transient > 0 and window > 0):
        raise ValueError("transient and window must be positive")
    x0 = np.asarray(x0, dtype=float)
    ts = np.concatenate([[0.0], sample_times(window, sample_dt, start=transient)])
    traj = integrate(f, x0, ts, cfg)
    if traj.termination != "horizon":
        raise DivergentTransient(f"trajectory did not reach the horizon ({traj.termination})", traj.escape_time)
    points = traj.states[1:]
    eq = find_equilibrium(f, [points.mean(axis=0), points[-1]])
    center = eq.point if eq.converged else points.mean(axis=0)
    basis = span_basis(points - center, SPAN_TOL)
    return AttractorSample(points, traj.times[1:], basis, eq)


def _pairs(sample: AttractorSample, count: int, seed: int) -> list[tuple[int, int]]:
    m = len(sample.points)
    if m < 2:
        return []
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        i, j = rng.choice(m, size=2, replace=False)
        out.append((int(i), int(j)))
    return out


def isometry_check(
    f: VectorFieldDef,
    sample: AttractorSample,
    norm: NormSpec,
    ts: Sequence[float],
    cfg: IntegratorConfig = IntegratorConfig(),
    pairs: int = 10,
    seed: int = 0,
) -> float:
    """Max over sampled pairs and ``t`` of ``| ||phi_t(x) - phi_t(y)|| - ||x - y|| |``.

    Identical points (a single-point sample) give 0.
    """
    ts = sorted(float(t) for t in ts)
    worst = 0.0
    for i, j in _pairs(sample, pairs, seed):
        x, y = sample.points[i], sample.points[j]
        d0 = float(norm(x - y))
        if d0 == 0:
            continue
        series = distance_series(f, x, y, norm, 0, 0, cfg, times=[0.0] + [t for t in ts if t > 0])
        worst = max(worst, float(np.max(np.abs(series[1:, 1] - d0))) if len(series) > 1 else 0.0)
    return worst


def convex_combination_check(
    f: VectorFieldDef,
    sample: AttractorSample,
    norm: NormSpec,
    lambdas: Sequence[float],
    ts: Sequence[float],
    cfg: IntegratorConfig = IntegratorConfig(),
    pairs: int = 6,
    seed: int = 0,
) -> float:
    """Max of ``||phi_t(l x + (1-l) y) - (l phi_t(x) + (1-l) phi_t(y))||``.

    The flow is linear along segments of the attractor only for strictly
    convex norms, so other norms are rejected.
    """
    if not is_strictly_convex(norm):
        raise ValueError("convex_combination_check requires a strictly convex norm")
    ts = [0.0] + sorted(float(t) for t in ts if t > 0)
    n = f.dimension
    lambdas = [float(l) for l in lambdas]

    def stacked(z):
        return np.concatenate([f(z[k * n : (k + 1) * n]) for k in range(len(z) // n)])

    worst = 0.0
    for i, j in _pairs(sample, pairs, seed):
        x, y = sample.points[i], sample.points[j]
        starts = [x, y] + [l * x + (1 - l) * y for l in lambdas]
        traj = integrate(stacked, np.concatenate(starts), ts, cfg)
        if traj.termination != "horizon":
            raise IntegrationError(f"integration stopped ({traj.termination})")
        for row in traj.states[1:]:
            px, py = row[:n], row[n : 2 * n]
            for k, l in enumerate(lambdas):
                pz = row[(k + 2) * n : (k + 3) * n]
                worst = max(worst, float(norm(pz - (l * px + (1 - l) * py))))
    return worst


@dataclass
class LimitSetReport:
    classification: str
    k: int | None = None
    equilibrium: np.ndarray | None = None
    generator: GeneratorFit | None = None
    analysis: ConservedAnalysis | None = None
    reason: str = ""
    evidence: dict = field(default_factory=dict)
    transient: float = 0.0
    horizon: float = 0.0

    @property
    def frequencies(self) -> list[float] | None:
        if self.analysis is None or not self.analysis.conserved:
            return None
        return [float(a) for a in self.analysis.frequencies]

    @property
    def label(self) -> str:
        return f"Torus({self.k})" if self.classification == TORUS else self.classification

    def to_json(self) -> dict:
        out: dict = {"classification": self.classification}
        if self.k is not None:
            out["k"] = self.k
        if self.equilibrium is not None:
            out["equilibrium"] = [float(v) for v in self.equilibrium]
        if self.frequencies is not None:
            out["frequencies"] = self.frequencies
        if self.generator is not None:
            out["generator"] = self.generator.to_json()
        if self.reason:
            out["reason"] = self.reason
        out["evidence"] = {
            "isometry_dev": self.evidence.get("isometry_dev"),
            "fit_residual": self.evidence.get("fit_residual"),
            "convexity_dev": self.evidence.get("convexity_dev"),
            "transient": self.transient,
            "horizon": self.horizon,
        }
        for key in ("max_norm", "escape_time", "span_rank", "final_residual", "tail_displacement"):
            if key in self.evidence:
                out["evidence"][key] = self.evidence[key]
        return out


def _evidence(f, sample, norm, config, report_evidence) -> None:
    if norm is None or not config.evidence or len(sample.points) < 2:
        return
    cfg = config.integrator
    report_evidence["isometry_dev"] = isometry_check(
        f, sample, norm, config.evidence_ts, cfg, pairs=config.evidence_pairs, seed=config.seed
    )
    if is_strictly_convex(norm):
        report_evidence["convexity_dev"] = convex_combination_check(
            f, sample, norm, (0.25, 0.5, 0.75), config.evidence_ts, cfg, pairs=config.evidence_pairs, seed=config.seed
        )


def classify_limit_set(
    f: VectorFieldDef,
    x0,
    norm: NormSpec | None = None,
    config: ClassifyConfig = ClassifyConfig(),
) -> LimitSetReport:
    """Classify the omega-limit set of ``x0`` as Equilibrium, Torus(k), Unbounded or Unknown.

    ``norm`` is only used for the isometry / convex-combination evidence.
    """
    x0 = np.asarray(x0, dtype=float)
    horizon = config.transient + config.window
    base = dict(transient=config.transient, horizon=horizon)
    evidence: dict = {}
    try:
        probe: BoundednessResult = boundedness_probe(f, x0, horizon, config.radius_guard, config.integrator)
    except IntegrationError as exc:
        return LimitSetReport(UNKNOWN, reason=f"integration failed: {exc}", **base)
    evidence["max_norm"] = probe.max_norm
    if not probe.bounded:
        evidence["escape_time"] = probe.escape_time
        return LimitSetReport(UNBOUNDED, reason="trajectory left the radius guard", evidence=evidence, **base)
    try:
        sample = extract_attractor(f, x0, config.transient, config.window, config.sample_dt, config.integrator)
    except DivergentTransient as exc:
        evidence["escape_time"] = exc.escape_time
        return LimitSetReport(UNBOUNDED, reason=str(exc), evidence=evidence, **base)
    except (IntegrationError, FieldEvaluationError) as exc:
        return LimitSetReport(UNKNOWN, reason=f"integration failed: {exc}", evidence=evidence, **base)
    evidence["span_rank"] = sample.rank

    if sample.rank == 0:
        final = sample.points[-1]
        point = sample.equilibrium.point if sample.equilibrium.converged else final
        final_residual = float(np.linalg.norm(f(final)))
        tail = sample.points[sample.times >= horizon - 0.1 * horizon]
        displacement = float(np.max(np.linalg.norm(tail - final, axis=1))) if len(tail) else 0.0
        evidence.update(final_residual=final_residual, tail_displacement=displacement, fit_residual=0.0)
        _evidence(f, sample, norm, config, evidence)
        if final_residual < config.equilibrium_tol and displacement < config.equilibrium_tol:
            return LimitSetReport(EQUILIBRIUM, k=0, equilibrium=point, evidence=evidence, **base)
        return LimitSetReport(
            UNKNOWN,
            equilibrium=point,
            reason="samples collapse to a point but the field residual or tail drift is too large",
            evidence=evidence,
            **base,
        )

    fit = fit_linear_generator(f, sample.points, sample.center)
    evidence["fit_residual"] = fit.residual
    _evidence(f, sample, norm, config, evidence)
    if fit.residual >= config.fit_tol:
        return LimitSetReport(
            UNKNOWN,
            generator=fit,
            reason=(
                f"generator residual {fit.residual:.3g} exceeds {config.fit_tol:.3g}; dynamics on the "
                "sampled set are not linear (the system may not be nonexpansive for a strictly convex norm)"
            ),
            evidence=evidence,
            **base,
        )
    analysis = analyze_conserved(fit.B_span, config.spectral_tol)
    if not analysis.conserved:
        return LimitSetReport(
            UNKNOWN,
            generator=fit,
            analysis=analysis,
            reason=f"fitted generator is not conserved: {analysis.reason}",
            evidence=evidence,
            **base,
        )
    z0 = fit.basis.T @ (sample.points[0] - fit.equilibrium)
    k = torus_dimension(analysis, z0, config.coeff_bound, config.relation_tol)
    if k == 0:
        return LimitSetReport(
            UNKNOWN,
            generator=fit,
            analysis=analysis,
            reason="sample span is non-trivial but no rotation block is excited",
            evidence=evidence,
            **base,
        )
    return LimitSetReport(
        TORUS,
        k=k,
        equilibrium=fit.equilibrium,
        generator=fit,
        analysis=analysis,
        evidence=evidence,
        **base,
    )
