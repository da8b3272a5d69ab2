"""Command-line front end.

Exit codes: 0 pass, 1 usage or validation error, 2 violation or negative finding.
Reports go to stdout as JSON (sorted keys, so identical runs are byte-identical);
diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace

import numpy as np

from .catalog import catalog_names, get_system, to_document
from .contraction import VIOLATED, UnsupportedNormError, certify_linear, check_demidovich
from .document import DocumentError, load_document
from .exprparse import FieldEvaluationError
from .limitset import classify_limit_set
from .norms import measure_is_exact
from .odeint import IntegrationError, distance_series, trace, write_csv
from .reproduce import CASES, run_case

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NEGATIVE = 2

SEED_ENV = "NONEXPANSIVE_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def dump_json(obj, stream=None) -> None:
    stream = stream or sys.stdout
    stream.write(json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False))
    stream.write("\n")


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return 0
    try:
        seed = int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be a non-negative integer, got {raw!r}") from None
    if seed < 0:
        raise UsageError(f"{SEED_ENV} must be a non-negative integer, got {raw!r}")
    return seed


def _parse_vector(text: str, dim: int, what: str) -> np.ndarray:
    try:
        vals = [float(tok) for tok in text.replace(" ", "").split(",") if tok != ""]
    except ValueError:
        raise UsageError(f"{what}: expected comma-separated numbers, got {text!r}") from None
    if len(vals) != dim:
        raise UsageError(f"{what}: expected {dim} values, got {len(vals)}")
    if not all(math.isfinite(v) for v in vals):
        raise UsageError(f"{what}: values must be finite")
    return np.array(vals)


def _positive(name: str, value: float | None) -> None:
    if value is not None and not (value > 0 and math.isfinite(value)):
        raise UsageError(f"{name} must be positive and finite")


def _x0(args, doc) -> np.ndarray:
    if args.x0 is not None:
        return _parse_vector(args.x0, doc.dimension, "--x0")
    if doc.x0 is None:
        raise UsageError("no initial condition: pass --x0 or add x0 to the document")
    return doc.x0


# ---------------------------------------------------------------------------
# commands


def cmd_check(args) -> int:
    doc = load_document(args.document)
    seed = _default_seed() if args.seed is None else args.seed
    if args.exact:
        A = doc.field.linear_matrix
        if A is None:
            raise UsageError("--exact needs a linear field")
        if not measure_is_exact(doc.norm):
            raise UsageError(f"--exact needs a polyhedral or (weighted) l2 norm, got {doc.norm!r}")
        try:
            report = certify_linear(A, doc.norm)
        except UnsupportedNormError as exc:
            raise UsageError(str(exc)) from None
    else:
        if doc.domain is None:
            raise UsageError("the document has no domain to sample")
        if args.samples <= 0 or args.directions <= 0:
            raise UsageError("--samples and --directions must be positive")
        report = check_demidovich(doc.field, doc.norm, doc.domain, nx=args.samples, nv=args.directions, seed=seed)
    out = report.to_json()
    if args.plot_data:
        if doc.domain is None:
            raise UsageError("--plot-data needs a domain")
        _write_distance_data(doc, seed, args.plot_data)
        out["plot_data"] = args.plot_data
    dump_json(out)
    return EXIT_NEGATIVE if report.verdict == VIOLATED else EXIT_OK


def _write_distance_data(doc, seed: int, path: str, pairs: int = 4, horizon: float = 10.0, dt: float = 0.1) -> None:
    """CSV ``t,d1,...,dk``: distances between flows of ``k`` seeded pairs in the domain."""
    rng = np.random.default_rng(seed)
    cols = []
    for _ in range(pairs):
        x, y = doc.domain.sample(2, rng)
        try:
            rows = distance_series(doc.field, x, y, doc.norm, horizon, dt, doc.integrator)
        except IntegrationError:
            continue
        cols.append(rows[:, 1])
        times = rows[:, 0]
    if not cols:
        raise UsageError("every plotted pair diverged")
    data = np.column_stack([times] + cols)
    header = ",".join(["t"] + [f"d{i + 1}" for i in range(len(cols))])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")


def cmd_classify(args) -> int:
    doc = load_document(args.document)
    x0 = _x0(args, doc)
    config = doc.classification
    _positive("--transient", args.transient)
    _positive("--horizon", args.horizon)
    if args.transient is not None:
        config = replace(config, transient=args.transient)
    if args.horizon is not None:
        if args.horizon <= config.transient:
            raise UsageError("--horizon must exceed the transient")
        config = replace(config, window=args.horizon - config.transient)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    report = classify_limit_set(doc.field, x0, doc.norm, config)
    out = report.to_json()
    out["label"] = report.label
    out["x0"] = x0.tolist()
    if args.plot_data:
        traj = trace(doc.field, x0, config.transient + config.window, config.sample_dt, config.integrator)
        write_csv(traj, args.plot_data)
        out["plot_data"] = args.plot_data
    dump_json(out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    doc = load_document(args.document)
    x0 = _x0(args, doc)
    _positive("--horizon", args.horizon)
    _positive("--dt", args.dt)
    if args.dt > args.horizon:
        raise UsageError("--dt must not exceed --horizon")
    traj = trace(doc.field, x0, args.horizon, args.dt, doc.integrator)
    write_csv(traj, args.out if args.out != "-" else sys.stdout)
    if not traj.complete:
        print(f"warning: integration stopped early ({traj.termination}) at t={traj.times[-1]:g}", file=sys.stderr)
        return EXIT_NEGATIVE
    return EXIT_OK


def cmd_reproduce(args) -> int:
    seed = _default_seed() if args.seed is None else args.seed
    cases = list(CASES) if args.case == "all" else [args.case]
    results = {}
    ok = True
    for case in cases:
        crits = run_case(case, seed)
        for c in crits:
            print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}", file=sys.stderr)
        ok = ok and all(c.passed for c in crits)
        results[case] = [c.to_json() for c in crits]
    dump_json({"seed": seed, "passed": ok, "cases": results})
    return EXIT_OK if ok else EXIT_NEGATIVE


def cmd_export(args) -> int:
    if args.list:
        for name in catalog_names():
            print(name)
        return EXIT_OK
    if args.system is None:
        raise UsageError("name a catalog system (or pass --list)")
    params = {}
    for item in args.param or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise UsageError(f"--param expects key=value, got {item!r}")
        try:
            params[key] = float(val)
        except ValueError:
            raise UsageError(f"--param {key}: not a number: {val!r}") from None
    try:
        entry = get_system(args.system, params)
    except (KeyError, ValueError) as exc:
        raise UsageError(exc.args[0]) from None
    doc = to_document(entry)
    doc["name"] = entry.name
    if args.out and args.out != "-":
        with open(args.out, "w") as handle:
            dump_json(doc, handle)
    else:
        dump_json(doc)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nonexpansive", description="Nonexpansivity checks and limit-set classification for ODEs.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("check", help="sampled Demidovich check or exact linear certificate")
    p.add_argument("document")
    p.add_argument("--samples", type=int, default=2500, help="number of x samples (grid points)")
    p.add_argument("--directions", type=int, default=500, help="number of directions on the unit sphere")
    p.add_argument("--seed", type=int, default=None, help=f"sampling seed (default ${SEED_ENV} or 0)")
    p.add_argument("--exact", action="store_true", help="exact certificate; needs a linear field")
    p.add_argument("--plot-data", metavar="CSV", help="write pairwise distance series to CSV")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("classify", help="classify the omega-limit set of a trajectory")
    p.add_argument("document")
    p.add_argument("--x0", help="initial state, comma-separated (use --x0=-1,0 for negatives)")
    p.add_argument("--horizon", type=float, default=None, help="total integration time")
    p.add_argument("--transient", type=float, default=None, help="time discarded before sampling")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--plot-data", metavar="CSV", help="write the sampled trajectory to CSV")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("simulate", help="integrate and write a trajectory CSV")
    p.add_argument("document")
    p.add_argument("--x0")
    p.add_argument("--horizon", type=float, default=10.0)
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--out", default="-", help="CSV path ('-' for stdout)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reproduce", help="run the worked examples end to end")
    p.add_argument("--case", required=True, choices=[*CASES, "all"])
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("export", help="write a catalog system as a JSON document")
    p.add_argument("system", nargs="?")
    p.add_argument("--param", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", default="-")
    p.add_argument("--list", action="store_true", help="list catalog systems")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, or usage errors from argparse
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if getattr(args, "seed", None) is not None and args.seed < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (DocumentError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IntegrationError, FieldEvaluationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NEGATIVE


if __name__ == "__main__":
    sys.exit(main())
