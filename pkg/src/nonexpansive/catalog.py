"""Built-in systems with their recommended norms and expected verdicts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .contraction import CERTIFIED_EXACT, PASSED_SAMPLED, VIOLATED, Box
from .exprparse import VectorFieldDef, linear_field, parse_field
from .linear import integer_relations
from .norms import LpNorm, NormSpec, linf, norm_to_json

__all__ = ["CatalogEntry", "get_system", "catalog_names", "ac_matrix", "to_document"]


@dataclass
class CatalogEntry:
    name: str
    field: VectorFieldDef
    params: dict
    norm: NormSpec
    expected_check: str
    expected_class: str
    x0: np.ndarray
    domain: Box
    note: str = ""
    matrix: np.ndarray | None = None
    extra: dict = field(default_factory=dict)


def ac_matrix(c: float) -> np.ndarray:
    """The l^4-nonexpansive family ``[[-1, -4c], [8c^3, -4c^4]]``."""
    return np.array([[-1.0, -4.0 * c], [8.0 * c**3, -4.0 * c**4]])


def _fmt(v: float) -> str:
    return repr(float(v))


def _ac_l4(params):
    c = float(params.get("c", 1.0))
    A = ac_matrix(c)
    return CatalogEntry(
        "ac_l4",
        linear_field(A),
        {"c": c},
        LpNorm(4, 2),
        PASSED_SAMPLED,
        "Equilibrium",
        np.array([1.0, 1.0]),
        Box.symmetric(2.0, 2),
        "linear field nonexpansive for l^4 for every c; the margin vanishes where u^2 + 2cuv - 2c^2 v^2 = 0",
        matrix=A,
    )


def _harmonic(params):
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    return CatalogEntry(
        "harmonic",
        parse_field("y; -x", 2),
        {},
        LpNorm(2, 2),
        CERTIFIED_EXACT,
        "Torus(1)",
        np.array([1.0, 0.0]),
        Box.symmetric(2.0, 2),
        "isometric flow with periodic orbits",
        matrix=A,
    )


def _coupled_osc(params):
    a1 = float(params.get("alpha1", params.get("a1", 1.0)))
    a2 = float(params.get("alpha2", params.get("a2", math.sqrt(2.0))))
    if a1 <= 0 or a2 <= 0:
        raise ValueError("frequencies must be positive")
    A = np.zeros((4, 4))
    A[0, 1], A[1, 0] = a1, -a1
    A[2, 3], A[3, 2] = a2, -a2
    rel = integer_relations([a1, a2])
    k = 2 - (int(np.linalg.matrix_rank(rel.astype(float))) if len(rel) else 0)
    return CatalogEntry(
        "coupled_osc",
        linear_field(A),
        {"alpha1": a1, "alpha2": a2},
        LpNorm(2, 4),
        CERTIFIED_EXACT,
        f"Torus({k})",
        np.array([1.0, 0.0, 1.0, 0.0]),
        Box.symmetric(2.0, 4),
        "two uncoupled rotations; torus dimension follows the rational relations of the frequencies",
        matrix=A,
    )


def _hurwitz(params):
    return CatalogEntry(
        "hurwitz_noncontractive",
        parse_field("-x; -(x^2 + 1)*y", 2),
        {},
        LpNorm(2, 2),
        VIOLATED,
        "Equilibrium",
        np.array([1.0, 1.0]),
        Box.symmetric(3.0, 2),
        "Jacobian is Hurwitz everywhere and trajectories converge, yet no norm makes it nonexpansive",
    )


def _diag_stable(params):
    A = -np.eye(2)
    return CatalogEntry(
        "diag_stable",
        parse_field("-x; -y", 2),
        {},
        linf(2),
        CERTIFIED_EXACT,
        "Equilibrium",
        np.array([1.0, 1.0]),
        Box.symmetric(2.0, 2),
        "-I is contractive for every norm",
        matrix=A,
    )


def _rot_saturated(params):
    w = float(params.get("omega", 1.0))
    g = "relu(x^2 + y^2 - 1)^2"
    src = f"{_fmt(w)}*y - {g}*x; -{_fmt(w)}*x - {g}*y"
    return CatalogEntry(
        "rot_saturated",
        parse_field(src, 2),
        {"omega": w},
        LpNorm(2, 2),
        PASSED_SAMPLED,
        "Torus(1)",
        np.array([0.6, 0.0]),
        Box.symmetric(2.0, 2),
        "rotation inside the unit disk, squared-hinge radial damping outside; symmetrized "
        "Jacobian is -(g I + 2 g' x x^T) <= 0",
    )


_BUILDERS = {
    "ac_l4": _ac_l4,
    "harmonic": _harmonic,
    "coupled_osc": _coupled_osc,
    "hurwitz_noncontractive": _hurwitz,
    "diag_stable": _diag_stable,
    "rot_saturated": _rot_saturated,
}


# accepted parameter names; missing ones take the defaults of the builders
_PARAMS = {
    "ac_l4": ("c",),
    "harmonic": (),
    "coupled_osc": ("alpha1", "alpha2", "a1", "a2"),
    "hurwitz_noncontractive": (),
    "diag_stable": (),
    "rot_saturated": ("omega",),
}


def catalog_names() -> list[str]:
    return list(_BUILDERS)


def get_system(name: str, params: dict | None = None, **kwargs) -> CatalogEntry:
    if name not in _BUILDERS:
        raise KeyError(f"unknown system {name!r}; known: {', '.join(_BUILDERS)}")
    merged = dict(params or {}, **kwargs)
    unknown = set(merged) - set(_PARAMS[name])
    if unknown:
        raise ValueError(f"{name} takes parameters {list(_PARAMS[name]) or 'none'}; got {sorted(unknown)}")
    return _BUILDERS[name](merged)


def to_document(entry: CatalogEntry) -> dict:
    """The entry as a JSON system document (see ``system.schema.json``)."""
    return {
        "dimension": entry.field.dimension,
        "field": entry.field.source(),
        "norm": norm_to_json(entry.norm),
        "domain": [[a, b] for a, b in zip(entry.domain.lower, entry.domain.upper)],
        "x0": [float(v) for v in entry.x0],
    }
