"""Acceptance criteria, one test (and one summary line) per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the PASS/FAIL lines are
printed in the "acceptance criteria" section at the end of the session.
"""

import math
import time

import numpy as np
import pytest

from fuzz import fd_jacobian, random_expr
from nonexpansive.catalog import ac_matrix, catalog_names, get_system
from nonexpansive.contraction import CERTIFIED_EXACT, PASSED_SAMPLED, VIOLATED, Box, certify_linear, check_demidovich
from nonexpansive.exprparse import linear_field, parse_field, to_source
from nonexpansive.limitset import (
    EQUILIBRIUM,
    TORUS,
    AttractorSample,
    classify_limit_set,
    convex_combination_check,
    extract_attractor,
    isometry_check,
)
from nonexpansive.linear import analyze_conserved, min_return_time, quadratic_invariant
from nonexpansive.norms import LpNorm, PolyhedralNorm, WeightedL2, l1, linf, random_weighted_l2
from nonexpansive.odeint import IntegratorConfig, flow, trace
from nonexpansive.reproduce import AC_L4_CS, l4_margin

ROT = np.array([[0.0, 1.0], [-1.0, 0.0]])
L2 = LpNorm(2, 2)
SQRT3 = math.sqrt(3.0)


def record(log, name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    log.append(line)
    print(line)
    assert ok, line


def test_ac01_l4_family(acceptance_log):
    start = time.perf_counter()
    worst = -math.inf
    verdicts = set()
    for c in AC_L4_CS:
        rep = check_demidovich(linear_field(ac_matrix(c)), LpNorm(4, 2), Box.symmetric(2.0, 2), nx=2500, nv=500, seed=0)
        verdicts.add(rep.verdict)
        worst = max(worst, rep.worst_margin)
    rng = np.random.default_rng(0)
    u, v, c = rng.uniform(-3, 3, (3, 10_000))
    lhs = np.array([np.array([a**3, b**3]) @ ac_matrix(g) @ np.array([a, b]) for a, b, g in zip(u, v, c)])
    rhs = -((u**2 + 2 * c * u * v - 2 * c**2 * v**2) ** 2)
    rel = float(np.max(np.abs(lhs - rhs) / np.maximum(np.abs(rhs), (u**2 + c**2 * v**2) ** 2)))
    # zero set of the margin: the roots of u^2 + 2cuv - 2c^2 v^2, u = (-1 +- sqrt 3) c v
    roots = max(
        max(abs(l4_margin(c, -(1 + SQRT3) * c, 1.0)), abs(l4_margin(c, (SQRT3 - 1) * c, 1.0))) for c in AC_L4_CS
    )
    elapsed = time.perf_counter() - start
    ok = verdicts == {PASSED_SAMPLED} and worst <= 1e-9 and rel <= 1e-9 and roots <= 1e-9 and elapsed < 10
    record(
        acceptance_log,
        "AC1  l4 family",
        ok,
        f"verdicts={sorted(verdicts)} worst_margin={worst:.2e} identity_rel={rel:.1e} "
        f"margin_at_roots={roots:.1e} time={elapsed:.1f}s",
    )


@pytest.mark.xfail(
    strict=True,
    reason="u = (1+sqrt3)cv is not a root of u^2 + 2cuv - 2c^2 v^2; the roots are u = (-1 +- sqrt3)cv",
)
def test_ac01_literal_equality_direction(acceptance_log):
    margins = [l4_margin(c, (1 + SQRT3) * c, 1.0) for c in AC_L4_CS]
    worst = max(abs(m) for m in margins)
    record(
        acceptance_log,
        "AC1b l4 margin at u=(1+sqrt3)cv",
        worst <= 1e-9,
        f"|margin| up to {worst:.3f} (normalized by ||w||_4^4); expected failure, see corrected roots in AC1",
    )


def test_ac02_exact_certificates(acceptance_log):
    start = time.perf_counter()
    a = certify_linear(-np.eye(2), linf(2))
    b = certify_linear(ROT, linf(2))
    c = certify_linear(np.array([[0.0, 2.0, -1.0], [-2.0, 0.0, 0.5], [1.0, -0.5, 0.0]]), WeightedL2(np.eye(3)))
    elapsed = time.perf_counter() - start
    v = np.array(b.counterexample["v"]) if b.counterexample else None
    witness = v is not None and np.allclose(np.abs(v), 1.0) and b.counterexample["margin"] > 0
    ok = a.verdict == CERTIFIED_EXACT and b.verdict == VIOLATED and witness and c.verdict == CERTIFIED_EXACT
    record(
        acceptance_log,
        "AC2  exact certificates",
        ok and elapsed < 1,
        f"-I/linf={a.verdict} rotation/linf={b.verdict} (vertex {None if v is None else v.tolist()}) "
        f"skew/l2={c.verdict} time={elapsed:.2f}s",
    )


def test_ac03_isometry_on_attractor(acceptance_log):
    start = time.perf_counter()
    ts = [1.0, 5.0, 25.0]
    h = get_system("harmonic")
    dev_h = isometry_check(h.field, extract_attractor(h.field, h.x0, 50.0, 200.0, 0.1), L2, ts, pairs=10)
    r = get_system("rot_saturated")
    dev_r = isometry_check(r.field, extract_attractor(r.field, r.x0, 50.0, 200.0, 0.1), L2, ts, pairs=10)
    d = get_system("diag_stable")
    control = AttractorSample.from_points([[1.5, -1.0], [-0.5, 1.2]], d.field)
    dev_d = isometry_check(d.field, control, d.norm, ts, pairs=1)
    elapsed = time.perf_counter() - start
    ok = dev_h < 1e-6 and dev_r < 1e-6 and dev_d > 0.1 and elapsed < 30
    record(
        acceptance_log,
        "AC3  isometry on attractor",
        ok,
        f"harmonic={dev_h:.1e} rot_saturated={dev_r:.1e} diag_stable_control={dev_d:.3f} time={elapsed:.1f}s",
    )


def test_ac04_strictly_convex_classification(acceptance_log):
    start = time.perf_counter()
    cases = [
        ("harmonic", {}, "Torus(1)"),
        ("coupled_osc", {"alpha1": 1.0, "alpha2": math.sqrt(2)}, "Torus(2)"),
        ("coupled_osc", {"alpha1": 1.0, "alpha2": 2.0}, "Torus(1)"),
        ("diag_stable", {}, "Equilibrium"),
        ("hurwitz_noncontractive", {}, "Equilibrium"),
    ]
    labels, ok = [], True
    worst_res = worst_re = 0.0
    for name, params, expected in cases:
        e = get_system(name, params)
        rep = classify_limit_set(e.field, e.x0, e.norm)
        labels.append(rep.label)
        ok = ok and rep.label == expected
        if rep.classification == TORUS:
            worst_res = max(worst_res, rep.generator.residual)
            worst_re = max(worst_re, float(np.max(np.abs(np.linalg.eigvals(rep.generator.B_span).real))))
    elapsed = time.perf_counter() - start
    ok = ok and worst_res < 1e-6 and worst_re < 1e-6 and elapsed < 120
    record(
        acceptance_log,
        "AC4  limit-set classification",
        ok,
        f"{labels} fit_residual<={worst_res:.1e} max|Re(eig)|={worst_re:.1e} time={elapsed:.1f}s",
    )


def _random_conserved(rng, n):
    K = np.zeros((n, n))
    for i in range(n // 2):
        a = rng.uniform(0.3, 3.0)
        K[2 * i, 2 * i + 1], K[2 * i + 1, 2 * i] = a, -a
    S = np.eye(n) + 0.4 * rng.normal(size=(n, n))
    while np.linalg.cond(S) > 50:
        S = np.eye(n) + 0.4 * rng.normal(size=(n, n))
    return S @ K @ np.linalg.inv(S)


def test_ac05_conserved_linear(acceptance_log):
    rng = np.random.default_rng(0)
    worst_res, worst_drift = 0.0, 0.0
    for k in range(100):
        n = (2, 3, 4, 6)[k % 4]
        B = _random_conserved(rng, n)
        q = quadratic_invariant(analyze_conserved(B))
        worst_res = max(worst_res, float(np.linalg.norm(B.T @ q.P + q.P @ B, 2)))
        if k < 8:
            # tight tolerances so that integration error does not mask the invariant
            tr = trace(linear_field(B), rng.normal(size=n), 100.0, 1.0, IntegratorConfig(rtol=1e-11, atol=1e-13))
            vals = np.einsum("ti,ij,tj->t", tr.states, q.P, tr.states)
            worst_drift = max(worst_drift, float(np.max(np.abs(vals - vals[0])) / vals[0]))
    t = min_return_time(ROT, 1e-6, 0.1, 20.0)
    ok = worst_res < 1e-9 and worst_drift < 1e-7 and t is not None and abs(t - 2 * math.pi) <= 1e-6
    record(
        acceptance_log,
        "AC5  conserved linear analysis",
        ok,
        f"residual<={worst_res:.1e} drift<={worst_drift:.1e} return_time={t!r}",
    )


def test_ac06_recurrence(acceptance_log):
    start = time.perf_counter()
    e = get_system("coupled_osc", alpha1=1.0, alpha2=math.sqrt(2))
    x0 = np.array([1.0, 0.0, 1.0, 0.0])
    # candidate from the conserved analysis, then confirmed by integrating the field itself
    eps = 0.05 / np.linalg.norm(x0) * 0.9
    t = min_return_time(e.matrix, eps, 10.0, 5000.0)
    dist = float(np.linalg.norm(flow(e.field, x0, t) - x0)) if t is not None else math.inf
    elapsed = time.perf_counter() - start
    ok = t is not None and 10 <= t <= 5000 and dist < 0.05 and elapsed < 60
    record(acceptance_log, "AC6  recurrence", ok, f"t={t} |phi_t(x0)-x0|={dist:.4f} time={elapsed:.1f}s")


def test_ac07_convex_combination(acceptance_log):
    r = get_system("rot_saturated")
    sample = extract_attractor(r.field, r.x0, 50.0, 200.0, 0.1)
    dev = convex_combination_check(r.field, sample, L2, (0.25, 0.5, 0.75), [1.0, 10.0])
    record(acceptance_log, "AC7  convex combination", dev < 1e-6, f"deviation={dev:.1e}")


def test_ac08_hurwitz_counterexample(acceptance_log):
    e = get_system("hurwitz_noncontractive")
    box = Box.symmetric(3.0, 2)
    fixed = {"l1": l1(2), "l2": L2, "l4": LpNorm(4, 2), "linf": linf(2)}
    verdicts = {k: check_demidovich(e.field, n, box).verdict for k, n in fixed.items()}
    weighted = sum(check_demidovich(e.field, random_weighted_l2(2, s), box).verdict == VIOLATED for s in range(100))
    rep = classify_limit_set(e.field, [1.0, 1.0], e.norm)
    eq_ok = rep.classification == EQUILIBRIUM and np.allclose(rep.equilibrium, 0.0, atol=1e-8)
    ok = all(v == VIOLATED for v in verdicts.values()) and weighted == 100 and eq_ok
    record(
        acceptance_log,
        "AC8  Hurwitz counterexample",
        ok,
        f"{verdicts} weighted_l2_violated={weighted}/100 classify={rep.label} at {np.round(rep.equilibrium, 12).tolist()}",
    )


def test_ac09_polyhedral_consistency(acceptance_log):
    hexagon = PolyhedralNorm.from_facets(
        np.column_stack([np.cos(np.pi / 3 * np.arange(6)), np.sin(np.pi / 3 * np.arange(6))])
    )
    certified, bad = [], []
    for name in catalog_names():
        e = get_system(name)
        if e.matrix is None:
            continue
        n = e.field.dimension
        norms = {"l1": l1(n), "linf": linf(n)}
        if isinstance(e.norm, PolyhedralNorm):
            norms["catalog"] = e.norm
        if n == 2:
            norms["hexagon"] = hexagon
        for label, norm in norms.items():
            if certify_linear(e.matrix, norm).verdict != CERTIFIED_EXACT:
                continue
            rep = classify_limit_set(e.field, e.x0)
            certified.append(f"{name}/{label}")
            if rep.classification != EQUILIBRIUM:
                bad.append(f"{name}/{label}:{rep.label}")
    ok = bool(certified) and not bad
    record(acceptance_log, "AC9  polyhedral consistency", ok, f"certified={certified} non_equilibrium={bad}")


def test_ac10_jacobian_fuzz(acceptance_log):
    rng = np.random.default_rng(10)
    worst, count = 0.0, 0
    while count < 1000:
        n = int(rng.integers(1, 4))
        f = parse_field([to_source(random_expr(rng, n)) for _ in range(n)], n)
        for _ in range(4):
            x = rng.uniform(-1, 1, n)
            J = f.jacobian(x)
            worst = max(worst, float(np.max(np.abs(J - fd_jacobian(f, x)) / np.maximum(1.0, np.abs(J)))))
            count += 1
    record(acceptance_log, "AC10 Jacobian vs finite differences", worst < 1e-6, f"pairs={count} max_rel_err={worst:.1e}")
