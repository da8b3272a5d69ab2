"""End-to-end reproduction runs for the worked examples.

Each case returns a list of :class:`Criterion` results; the CLI prints one
pass/fail line per criterion and a JSON report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .catalog import ac_matrix, catalog_names, get_system
from .contraction import CERTIFIED_EXACT, PASSED_SAMPLED, VIOLATED, Box, certify_linear, check_demidovich
from .limitset import EQUILIBRIUM, TORUS, classify_limit_set
from .norms import LpNorm, l1, linf, random_weighted_l2

__all__ = ["Criterion", "CASES", "run_case", "l4_margin", "AC_L4_CS"]

AC_L4_CS = (-2.0, -1.0, 0.5, 1.0, 2.0)


@dataclass
class Criterion:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "detail": self.detail}


def l4_margin(c: float, u: float, v: float) -> float:
    """``[u^3, v^3] A_c [u, v]`` divided by ``||(u, v)||_4^4`` (scale-free)."""
    w = np.array([u, v], dtype=float)
    return float((w**3) @ ac_matrix(c) @ w / np.sum(w**4))


def _ac_l4(seed: int) -> list[Criterion]:
    out = []
    box = Box.symmetric(2.0, 2)
    norm = LpNorm(4, 2)
    rows = {}
    for c in AC_L4_CS:
        f = get_system("ac_l4", c=c).field
        rep = check_demidovich(f, norm, box, nx=2500, nv=500, seed=seed)
        rows[repr(c)] = {"verdict": rep.verdict, "worst_margin": rep.worst_margin}
    ok = all(r["verdict"] == PASSED_SAMPLED and r["worst_margin"] <= 1e-9 for r in rows.values())
    out.append(Criterion("ac_l4.sampled_check", ok, rows))

    rng = np.random.default_rng(seed)
    u, v, c = rng.uniform(-3, 3, (3, 10_000))
    # the quadratic form evaluated through A_c against the closed-form square
    quad = u**3 * (-u - 4 * c * v) + v**3 * (8 * c**3 * u - 4 * c**4 * v)
    square = -((u**2 + 2 * c * u * v - 2 * c**2 * v**2) ** 2)
    scale = np.maximum(np.abs(square), (u**2 + c**2 * v**2) ** 2)
    rel = float(np.max(np.abs(quad - square) / scale))
    out.append(Criterion("ac_l4.identity", rel <= 1e-9, {"max_rel_error": rel}))

    # zero set of the margin: u^2 + 2cuv - 2c^2 v^2 = 0, i.e. u = (-1 +- sqrt 3) c v
    roots = {}
    for c in AC_L4_CS:
        roots[repr(c)] = {
            "u=-(1+sqrt3)cv": l4_margin(c, -(1 + math.sqrt(3)) * c, 1.0),
            "u=(sqrt3-1)cv": l4_margin(c, (math.sqrt(3) - 1) * c, 1.0),
            "u=(1+sqrt3)cv": l4_margin(c, (1 + math.sqrt(3)) * c, 1.0),
        }
    ok = all(abs(r["u=-(1+sqrt3)cv"]) <= 1e-9 and abs(r["u=(sqrt3-1)cv"]) <= 1e-9 for r in roots.values())
    out.append(Criterion("ac_l4.equality_direction", ok, roots))
    return out


def _hurwitz(seed: int) -> list[Criterion]:
    entry = get_system("hurwitz_noncontractive")
    box = Box.symmetric(3.0, 2)
    fixed = {"l1": l1(2), "l2": LpNorm(2, 2), "l4": LpNorm(4, 2), "linf": linf(2)}
    rows = {}
    for name, norm in fixed.items():
        rep = check_demidovich(entry.field, norm, box, seed=seed)
        rows[name] = {"verdict": rep.verdict, "worst_margin": rep.worst_margin, "counterexample": rep.counterexample}
    out = [Criterion("hurwitz.violated_standard_norms", all(r["verdict"] == VIOLATED for r in rows.values()), rows)]
    margins, violated = [], 0
    for s in range(100):
        rep = check_demidovich(entry.field, random_weighted_l2(2, s), box, seed=seed)
        margins.append(rep.worst_margin)
        violated += rep.verdict == VIOLATED
    out.append(
        Criterion(
            "hurwitz.violated_random_weighted_l2",
            violated == 100,
            {"violated": violated, "total": 100, "min_worst_margin": min(margins)},
        )
    )
    rep = classify_limit_set(entry.field, [1.0, 1.0], entry.norm)
    eq = rep.equilibrium
    ok = rep.classification == EQUILIBRIUM and eq is not None and float(np.max(np.abs(eq))) < 1e-8
    out.append(Criterion("hurwitz.classify_equilibrium", ok, {"classification": rep.label, "equilibrium": None if eq is None else eq.tolist()}))
    return out


def _torus_criterion(name: str, params: dict, expected_k: int) -> Criterion:
    entry = get_system(name, params)
    rep = classify_limit_set(entry.field, entry.x0, entry.norm)
    detail = {"classification": rep.label, "expected": f"Torus({expected_k})"}
    ok = rep.classification == TORUS and rep.k == expected_k
    if rep.generator is not None:
        detail["fit_residual"] = rep.generator.residual
        ok = ok and rep.generator.residual < 1e-6
    if rep.analysis is not None:
        re = float(np.max(np.abs(np.real(rep.analysis.eigenvalues))))
        detail["max_abs_real_eigenvalue"] = re
        detail["frequencies"] = rep.frequencies
        ok = ok and re < 1e-6
    return Criterion(f"tori.{name}{'' if not params else '(' + ','.join(f'{v:g}' for v in params.values()) + ')'}", ok, detail)


def _tori(seed: int) -> list[Criterion]:
    return [
        _torus_criterion("harmonic", {}, 1),
        _torus_criterion("coupled_osc", {"alpha1": 1.0, "alpha2": math.sqrt(2.0)}, 2),
        _torus_criterion("coupled_osc", {"alpha1": 1.0, "alpha2": 2.0}, 1),
    ]


def _polyhedral(seed: int) -> list[Criterion]:
    out = []
    diag = get_system("diag_stable")
    cert = certify_linear(diag.matrix, linf(2))
    rep = classify_limit_set(diag.field, diag.x0, diag.norm)
    out.append(
        Criterion(
            "polyhedral.diag_stable",
            cert.verdict == CERTIFIED_EXACT and rep.classification == EQUILIBRIUM,
            {"certificate": cert.verdict, "classification": rep.label},
        )
    )
    rot = get_system("harmonic")
    cert = certify_linear(rot.matrix, linf(2))
    sampled = check_demidovich(rot.field, linf(2), rot.domain, seed=seed)
    out.append(
        Criterion(
            "polyhedral.rotation_violated",
            cert.verdict == VIOLATED and sampled.verdict == VIOLATED and cert.counterexample is not None,
            {"certificate": cert.verdict, "witness": cert.counterexample, "sampled": sampled.verdict},
        )
    )
    # every catalog system certified for a polyhedral norm must settle at an equilibrium
    rows = {}
    for name in catalog_names():
        entry = get_system(name)
        if entry.matrix is None:
            continue
        n = entry.field.dimension
        certified = [label for label, norm in (("l1", l1(n)), ("linf", linf(n))) if certify_linear(entry.matrix, norm).verdict == CERTIFIED_EXACT]
        if certified:
            rows[name] = {"certified": certified, "classification": classify_limit_set(entry.field, entry.x0, entry.norm).label}
    ok = bool(rows) and all(r["classification"] == EQUILIBRIUM for r in rows.values())
    out.append(Criterion("polyhedral.certified_implies_equilibrium", ok, rows))
    return out


CASES = {"ac_l4": _ac_l4, "hurwitz": _hurwitz, "tori": _tori, "polyhedral": _polyhedral}


def run_case(case: str, seed: int = 0) -> list[Criterion]:
    if case not in CASES:
        raise KeyError(f"unknown case {case!r}; choose from {', '.join(CASES)}")
    return CASES[case](seed)
