import math

import numpy as np
import pytest
from scipy.integrate import quad, solve_ivp

from nonexpansive.catalog import catalog_names, get_system
from nonexpansive.exprparse import parse_field
from nonexpansive.norms import LpNorm
from nonexpansive.odeint import (
    DivergenceError,
    IntegratorConfig,
    distance_series,
    flow,
    integrate,
    read_csv,
    sample_times,
    trace,
    write_csv,
)

DECAY1 = parse_field("-x", 1)
HARMONIC = parse_field("y; -x", 2)
HURWITZ = parse_field("-x; -(x^2 + 1)*y", 2)


def test_flow_closed_forms():
    assert flow(DECAY1, [1.0], 1.0)[0] == pytest.approx(math.exp(-1), abs=1e-8)
    np.testing.assert_allclose(flow(HARMONIC, [1.0, 0.0], 2 * math.pi), [1.0, 0.0], atol=1e-7)
    x0 = np.array([0.3, -0.2])
    out = flow(HURWITZ, x0, 0.0)
    np.testing.assert_array_equal(out, x0)
    assert out is not x0


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(rtol=0)
    with pytest.raises(ValueError):
        IntegratorConfig(max_steps=0)
    with pytest.raises(ValueError):
        IntegratorConfig(method="rk4")
    with pytest.raises(ValueError):
        flow(DECAY1, [1.0], -1.0)


def test_trace_examples():
    tr = trace(DECAY1, [1.0], 5.0, 1.0)
    np.testing.assert_array_equal(tr.times, np.arange(6.0))
    np.testing.assert_allclose(tr.states[:, 0], np.exp(-np.arange(6.0)), atol=1e-8)
    z = trace(parse_field("0; 0", 2), [1.5, -2.0], 3.0, 0.5)
    assert np.all(z.states == [1.5, -2.0]) and z.complete


def test_hurwitz_against_quadrature_oracle():
    # y(t) = exp(-int_0^t (e^{-2s} + 1) ds) for x0 = y0 = 1
    expo, _ = quad(lambda s: math.exp(-2 * s) + 1.0, 0.0, 10.0, epsabs=1e-13, epsrel=1e-13)
    expected = np.array([math.exp(-10.0), math.exp(-expo)])
    got = trace(HURWITZ, [1.0, 1.0], 10.0, 0.5).states[-1]
    np.testing.assert_allclose(got, expected, atol=1e-6, rtol=0)
    # the oracle is also available in closed form
    assert math.exp(-expo) == pytest.approx(math.exp(-10 - 0.5 * (1 - math.exp(-20))), rel=1e-12)


def test_agrees_with_scipy():
    f = parse_field("y; -sin(x) - 0.1*y", 2)
    ours = flow(f, [1.0, 0.5], 20.0)
    ref = solve_ivp(lambda t, z: f(z), (0, 20), [1.0, 0.5], method="DOP853", rtol=1e-12, atol=1e-14).y[:, -1]
    np.testing.assert_allclose(ours, ref, atol=1e-7)


def test_sample_times_includes_horizon():
    np.testing.assert_allclose(sample_times(1.0, 0.3), [0, 0.3, 0.6, 0.9, 1.0])
    np.testing.assert_allclose(sample_times(1.0, 0.25), [0, 0.25, 0.5, 0.75, 1.0])
    with pytest.raises(ValueError):
        sample_times(1.0, 0.0)


def test_overflow_guard_reports_divergence():
    grow = parse_field("x", 1)
    tr = trace(grow, [1.0], 100.0, 1.0)
    assert tr.termination == "overflow"
    # detected at the end of the step that crosses the guard
    assert math.log(1e12) <= tr.escape_time < math.log(1e12) + 0.1
    assert tr.final_norm > 1e12
    with pytest.raises(DivergenceError) as info:
        flow(grow, [1.0], 100.0)
    assert math.log(1e12) <= info.value.t < math.log(1e12) + 0.1


def test_max_steps_termination():
    tr = trace(HARMONIC, [1.0, 0.0], 100.0, 1.0, IntegratorConfig(max_steps=10))
    assert tr.termination == "max_steps" and not tr.complete


def test_output_times_must_increase():
    with pytest.raises(ValueError):
        integrate(DECAY1, [1.0], [0.0, 1.0, 1.0])


def test_distance_series_examples():
    d = distance_series(parse_field("-x; -y", 2), [1.0, 2.0], [-0.5, 0.5], LpNorm(2, 2), 5.0, 0.5)
    d0 = math.hypot(1.5, 1.5)
    np.testing.assert_allclose(d[:, 1], d0 * np.exp(-d[:, 0]), atol=1e-7)
    assert np.all(np.diff(d[:, 1]) <= 0)
    d = distance_series(HARMONIC, [1.0, 0.0], [0.0, -2.0], LpNorm(2, 2), 20.0, 0.5)
    np.testing.assert_allclose(d[:, 1], math.sqrt(5.0), atol=1e-7)
    d = distance_series(parse_field("0; 0", 2), [1.0, 0.0], [0.0, 1.0], LpNorm(2, 2), 2.0, 0.5)
    assert np.all(d[:, 1] == d[0, 1])


def test_deterministic():
    a = trace(HURWITZ, [1.0, 1.0], 10.0, 0.1)
    b = trace(HURWITZ, [1.0, 1.0], 10.0, 0.1)
    np.testing.assert_array_equal(a.states, b.states)


CATALOG = [n for n in catalog_names()]


@pytest.mark.parametrize("name", CATALOG)
def test_semigroup_property(name):
    e = get_system(name)
    s, t = 1.7, 2.9
    a = flow(e.field, flow(e.field, e.x0, s), t)
    b = flow(e.field, e.x0, s + t)
    assert np.linalg.norm(a - b) < 1e-7


@pytest.mark.parametrize("name", CATALOG)
def test_tolerance_halving(name):
    e = get_system(name)
    cfg = IntegratorConfig()
    half = IntegratorConfig(rtol=cfg.rtol / 2, atol=cfg.atol / 2)
    a = flow(e.field, e.x0, 10.0, cfg)
    b = flow(e.field, e.x0, 10.0, half)
    assert np.max(np.abs(a - b)) < 10 * max(cfg.rtol, cfg.atol) * max(1.0, np.max(np.abs(b)))


def test_csv_round_trip(tmp_path):
    tr = trace(HURWITZ, [1.0, 1.0], 2.0, 0.1)
    path = tmp_path / "traj.csv"
    write_csv(tr, path)
    assert path.read_text().splitlines()[0] == "t,x1,x2"
    t, X = read_csv(path)
    np.testing.assert_array_equal(t, tr.times)
    np.testing.assert_array_equal(X, tr.states)
