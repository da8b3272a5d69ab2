"""Nonexpansivity checks, conserved linear analysis and limit-set classification for ODEs."""

from .catalog import CatalogEntry, catalog_names, get_system
from .contraction import (
    CERTIFIED_EXACT,
    PASSED_SAMPLED,
    VIOLATED,
    Box,
    NonexpansivityReport,
    boundedness_probe,
    certify_linear,
    check_demidovich,
    empirical_pairwise_test,
    find_equilibrium,
)
from .exprparse import ParseError, VectorFieldDef, differentiate, linear_field, parse_expr, parse_field, to_source
from .limitset import ClassifyConfig, LimitSetReport, classify_limit_set, convex_combination_check, isometry_check
from .linear import analyze_conserved, expm_conserved, min_return_time, quadratic_invariant, torus_dimension
from .norms import LpNorm, PolyhedralNorm, WeightedL2, l1, linf, matrix_measure, norm_eval, supporting_normals
from .odeint import IntegratorConfig, distance_series, flow, integrate, trace

__version__ = "0.1.0"

__all__ = [
    "CatalogEntry",
    "catalog_names",
    "get_system",
    "CERTIFIED_EXACT",
    "PASSED_SAMPLED",
    "VIOLATED",
    "Box",
    "NonexpansivityReport",
    "boundedness_probe",
    "certify_linear",
    "check_demidovich",
    "empirical_pairwise_test",
    "find_equilibrium",
    "ParseError",
    "VectorFieldDef",
    "differentiate",
    "linear_field",
    "parse_expr",
    "parse_field",
    "to_source",
    "ClassifyConfig",
    "LimitSetReport",
    "classify_limit_set",
    "convex_combination_check",
    "isometry_check",
    "analyze_conserved",
    "expm_conserved",
    "min_return_time",
    "quadratic_invariant",
    "torus_dimension",
    "LpNorm",
    "PolyhedralNorm",
    "WeightedL2",
    "l1",
    "linf",
    "matrix_measure",
    "norm_eval",
    "supporting_normals",
    "IntegratorConfig",
    "distance_series",
    "flow",
    "integrate",
    "trace",
]
