"""Loading and validating JSON system documents."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .contraction import Box
from .exprparse import ParseError, VectorFieldDef, parse_field
from .limitset import ClassifyConfig
from .norms import NormError, NormSpec, norm_from_json
from .odeint import IntegratorConfig

__all__ = ["DocumentError", "SystemDocument", "load_schema", "validate_document", "load_document", "parse_document"]


class DocumentError(ValueError):
    """Schema violation or semantically invalid document."""


@dataclass
class SystemDocument:
    field: VectorFieldDef
    norm: NormSpec
    domain: Box | None
    x0: np.ndarray | None
    integrator: IntegratorConfig
    classification: ClassifyConfig
    name: str = ""
    raw: dict | None = None

    @property
    def dimension(self) -> int:
        return self.field.dimension


_SCHEMA: dict | None = None


def load_schema() -> dict:
    global _SCHEMA
    if _SCHEMA is None:
        text = resources.files("nonexpansive").joinpath("data/system.schema.json").read_text()
        _SCHEMA = json.loads(text)
    return _SCHEMA


def validate_document(obj) -> None:
    """Raise :class:`DocumentError` listing every schema violation."""
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(obj), key=lambda e: list(e.absolute_path))
    if errors:
        lines = []
        for e in errors:
            where = "/".join(str(p) for p in e.absolute_path) or "<root>"
            lines.append(f"{where}: {e.message}")
        raise DocumentError("schema validation failed:\n  " + "\n  ".join(lines))


def _integrator(obj: dict) -> IntegratorConfig:
    kw = dict(obj)
    if kw.get("max_step") is None:
        kw.pop("max_step", None)
    try:
        return IntegratorConfig(**kw)
    except ValueError as exc:
        raise DocumentError(f"integrator: {exc}") from exc


def parse_document(obj: dict) -> SystemDocument:
    validate_document(obj)
    n = obj["dimension"]
    try:
        field = parse_field(obj["field"], n)
    except ParseError as exc:
        raise DocumentError(f"field: {exc}") from exc
    try:
        norm = norm_from_json(obj["norm"], n)
    except (NormError, ValueError) as exc:
        raise DocumentError(f"norm: {exc}") from exc
    domain = None
    if "domain" in obj:
        if len(obj["domain"]) != n:
            raise DocumentError(f"domain has {len(obj['domain'])} intervals, dimension is {n}")
        try:
            domain = Box.from_intervals(obj["domain"])
        except ValueError as exc:
            raise DocumentError(f"domain: {exc}") from exc
    x0 = None
    if "x0" in obj:
        x0 = np.array(obj["x0"], dtype=float)
        if len(x0) != n:
            raise DocumentError(f"x0 has length {len(x0)}, dimension is {n}")
    integrator = _integrator(obj.get("integrator", {}))
    try:
        classification = replace(ClassifyConfig(integrator=integrator), **obj.get("classification", {}))
    except ValueError as exc:
        raise DocumentError(f"classification: {exc}") from exc
    return SystemDocument(field, norm, domain, x0, integrator, classification, obj.get("name", ""), obj)


def load_document(path) -> SystemDocument:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise DocumentError(f"no such file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_document(obj)
