import math

import numpy as np
import pytest

from nonexpansive.catalog import ac_matrix, get_system
from nonexpansive.contraction import (
    CERTIFIED_EXACT,
    PASSED_SAMPLED,
    VIOLATED,
    Box,
    UnsupportedNormError,
    boundedness_probe,
    certify_linear,
    check_demidovich,
    empirical_pairwise_test,
    find_equilibrium,
)
from nonexpansive.exprparse import linear_field, parse_field
from nonexpansive.norms import LpNorm, PolyhedralNorm, WeightedL2, l1, linf, matrix_measure, random_weighted_l2

ROT = np.array([[0.0, 1.0], [-1.0, 0.0]])
HURWITZ = parse_field("-x; -(x^2 + 1)*y", 2)


def test_box():
    b = Box.from_intervals([[-1, 2], [0, 0.5]])
    assert b.dim == 2
    G = b.grid(25)
    assert G.shape == (25, 2)
    assert {tuple(p) for p in G} >= {(-1.0, 0.0), (2.0, 0.5), (-1.0, 0.5), (2.0, 0.0)}
    with pytest.raises(ValueError):
        Box((1.0,), (0.0,))


def test_ac_l4_passes_sampled():
    f = get_system("ac_l4", c=1.0).field
    rep = check_demidovich(f, LpNorm(4, 2), Box.symmetric(2.0, 2), nx=2500, nv=500, seed=0)
    assert rep.verdict == PASSED_SAMPLED
    assert rep.worst_margin <= 1e-12
    assert rep.counterexample is None


@pytest.mark.parametrize("norm", [LpNorm(2, 2), LpNorm(4, 2), l1(2), linf(2), random_weighted_l2(2, 3)])
def test_negative_identity_passes_every_norm(norm):
    rep = check_demidovich(parse_field("-x; -y", 2), norm, Box.symmetric(2.0, 2), nx=100, nv=100)
    assert rep.verdict == PASSED_SAMPLED
    # n^T(-I)v = -||v|| with the normalization n^T v = ||v||
    assert rep.worst_margin == pytest.approx(-1.0, abs=1e-12)


def test_hurwitz_violated_with_witness():
    rep = check_demidovich(HURWITZ, LpNorm(2, 2), Box.symmetric(3.0, 2))
    assert rep.verdict == VIOLATED
    cx = rep.counterexample
    x, v, n = (np.array(cx[k]) for k in ("x", "v", "n"))
    recomputed = n @ HURWITZ.jacobian(x) @ v / np.linalg.norm(v)
    assert recomputed == pytest.approx(cx["margin"], rel=1e-12)
    # oracle: positive eigenvalue of the symmetrized Jacobian somewhere on the grid
    g = np.linspace(-3, 3, 61)
    lam = max(np.linalg.eigvalsh(0.5 * (J + J.T))[-1] for J in (HURWITZ.jacobian(np.array([a, b])) for a in g for b in g))
    assert lam > 0
    assert cx["margin"] <= lam + 1e-12
    assert cx["margin"] > 0.9 * lam


def test_report_json_shape():
    rep = check_demidovich(HURWITZ, LpNorm(2, 2), Box.symmetric(3.0, 2), nx=16, nv=8, seed=4)
    out = rep.to_json()
    assert set(out) == {"verdict", "worst_margin", "counterexample", "samples", "norm", "domain"}
    assert out["samples"] == {"nx": 16, "nv": 8, "seed": 4}


def test_certify_linear_examples():
    assert certify_linear(ROT, WeightedL2(np.eye(2))).verdict == CERTIFIED_EXACT
    assert certify_linear(-np.eye(2), linf(2)).verdict == CERTIFIED_EXACT
    rep = certify_linear(ROT, linf(2))
    assert rep.verdict == VIOLATED
    assert rep.worst_margin == pytest.approx(1.0)
    v, n = np.array(rep.counterexample["v"]), np.array(rep.counterexample["n"])
    assert np.max(np.abs(v)) == pytest.approx(1.0)
    assert n @ ROT @ v == pytest.approx(1.0)
    with pytest.raises(UnsupportedNormError):
        certify_linear(ROT, LpNorm(4, 2))


def test_certify_linear_brute_force_oracle():
    # vertex/facet pairs by hand for the square: vertices (+-1, +-1), active facets +-e_i
    rng = np.random.default_rng(0)
    for _ in range(50):
        A = rng.normal(size=(2, 2))
        worst = -math.inf
        for sx in (-1, 1):
            for sy in (-1, 1):
                v = np.array([sx, sy], float)
                for eta in (np.array([sx, 0.0]), np.array([0.0, sy])):
                    worst = max(worst, eta @ A @ v)
        rep = certify_linear(A, linf(2))
        assert rep.worst_margin == pytest.approx(worst, abs=1e-14)
        assert rep.worst_margin == pytest.approx(matrix_measure(linf(2), A), abs=1e-14)


def test_agreement_between_exact_sampled_and_flow():
    rng = np.random.default_rng(5)
    box = Box.symmetric(1.0, 2)
    hexagon = PolyhedralNorm.from_facets(np.column_stack([np.cos(np.pi / 3 * np.arange(6)), np.sin(np.pi / 3 * np.arange(6))]))
    norms = [linf(2), l1(2), hexagon, random_weighted_l2(2, 1)]
    seen = {CERTIFIED_EXACT: 0, VIOLATED: 0}
    for k in range(40):
        norm = norms[k % len(norms)]
        A = rng.normal(size=(2, 2)) - 0.8 * np.eye(2)
        mu = matrix_measure(norm, A)
        if abs(mu) < 0.02:
            continue  # sampled directions cannot resolve near-tight cases
        rep = certify_linear(A, norm)
        seen[rep.verdict] += 1
        if rep.verdict == CERTIFIED_EXACT:
            pw = empirical_pairwise_test(linear_field(A), norm, 5, box, 5.0, seed=k)
            assert pw.passed, (A, norm, pw)
        else:
            assert check_demidovich(linear_field(A), norm, box, nx=4, nv=2000).verdict == VIOLATED
    assert seen[CERTIFIED_EXACT] > 3 and seen[VIOLATED] > 3


def test_scale_invariance_of_sampled_check():
    for f, norm in [(HURWITZ, LpNorm(2, 2)), (linear_field(ac_matrix(0.5)), LpNorm(4, 2)), (HURWITZ, linf(2))]:
        a = check_demidovich(f, norm, Box.symmetric(3.0, 2), nx=400, nv=200, radius=1.0)
        b = check_demidovich(f, norm, Box.symmetric(3.0, 2), nx=400, nv=200, radius=2.0)
        assert a.verdict == b.verdict
        assert a.worst_margin == pytest.approx(b.worst_margin, rel=1e-12, abs=1e-15)


def test_self_duality_for_gradient_fields():
    # f = -grad(x^4/4 + x y + y^2) has a symmetric Jacobian
    f = parse_field("-x^3 - y; -x - 2*y", 2)
    box = Box.symmetric(1.5, 2)
    rep = check_demidovich(f, LpNorm(2, 2), box, nx=400, nv=2000)
    lam = max(np.linalg.eigvalsh(f.jacobian(x))[-1] for x in box.grid(400))
    assert rep.worst_margin <= lam + 1e-12
    assert rep.worst_margin == pytest.approx(lam, abs=1e-4)
    x = np.array(rep.counterexample["x"])
    v = np.array(rep.counterexample["v"])
    assert rep.counterexample["margin"] == pytest.approx(v @ f.jacobian(x) @ v / (v @ v), rel=1e-12)


def test_pairwise_examples():
    f = get_system("ac_l4", c=1.0).field
    rep = empirical_pairwise_test(f, LpNorm(4, 2), 100, Box.symmetric(2.0, 2), 20.0, seed=0)
    assert rep.passed and rep.max_increment <= 1e-7
    rep = empirical_pairwise_test(parse_field("y; -x", 2), LpNorm(2, 2), 10, Box.symmetric(2.0, 2), 20.0)
    assert rep.passed and abs(rep.max_increment) <= 1e-7
    rep = empirical_pairwise_test(parse_field("x", 1), LpNorm(2, 1), 5, Box.symmetric(1.0, 1), 3.0)
    assert not rep.passed and rep.max_increment > 0.1


def test_boundedness_probe_examples():
    assert boundedness_probe(parse_field("-x", 1), [5.0], 20.0).bounded
    r = boundedness_probe(parse_field("x", 1), [1.0], 100.0, radius_guard=1e6)
    assert not r.bounded and r.escape_time == pytest.approx(math.log(1e6), abs=0.1)
    r = boundedness_probe(parse_field("y; -x", 2), [0.6, 0.8], 50.0)
    assert r.bounded and r.max_norm == pytest.approx(1.0, abs=1e-8)


def test_find_equilibrium_examples():
    r = find_equilibrium(parse_field("-x; -y", 2), [[3.0, 3.0]])
    assert r.converged and r.residual < 1e-12 and np.allclose(r.point, 0, atol=1e-12)
    r = find_equilibrium(HURWITZ, [[1.0, 1.0]])
    assert r.converged and np.allclose(r.point, 0, atol=1e-10)
    A = ac_matrix(1.0)
    assert abs(np.linalg.det(A)) > 1
    r = find_equilibrium(linear_field(A), [[1.0, 1.0]])
    assert r.converged and np.allclose(r.point, 0, atol=1e-12)
    r = find_equilibrium(parse_field("x^2 + 1; y", 2), [[1.0, 1.0]])
    assert not r.converged
    with pytest.raises(ValueError):
        find_equilibrium(HURWITZ, [])
