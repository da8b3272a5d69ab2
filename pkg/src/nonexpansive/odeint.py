"""Adaptive Dormand-Prince 5(4) integration of autonomous fields ``x' = f(x)``.

Steps are clipped so that every requested output time is hit exactly; no
interpolant is involved in the sampled values.  Integration stops early (not
with an exception) when the state norm passes the overflow guard, so
divergence can be reported as evidence.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .exprparse import VectorFieldDef
from .norms import NormSpec

__all__ = [
    "IntegratorConfig",
    "Trajectory",
    "IntegrationError",
    "DivergenceError",
    "integrate",
    "flow",
    "trace",
    "distance_series",
    "write_csv",
    "read_csv",
]

HORIZON = "horizon"
STEP_FAILURE = "step_failure"
OVERFLOW = "overflow"
MAX_STEPS = "max_steps"


class IntegrationError(RuntimeError):
    pass


class DivergenceError(IntegrationError):
    """The state norm crossed the overflow guard at time ``t``."""

    def __init__(self, message: str, t: float):
        super().__init__(message)
        self.t = t


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-9
    atol: float = 1e-11
    max_step: float = math.inf
    max_steps: int = 2_000_000
    overflow_guard: float = 1e12
    method: str = "dopri5"

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_steps <= 0 or not self.max_step > 0:
            raise ValueError("max_steps and max_step must be positive")
        if self.method != "dopri5":
            raise ValueError(f"unsupported method {self.method!r}")

    def to_json(self) -> dict:
        return {
            "rtol": self.rtol,
            "atol": self.atol,
            "max_step": None if math.isinf(self.max_step) else self.max_step,
            "max_steps": self.max_steps,
            "method": self.method,
        }


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    config: IntegratorConfig
    termination: str = HORIZON
    steps: int = 0
    escape_time: float | None = None
    final_norm: float = field(default=0.0)

    @property
    def complete(self) -> bool:
        return self.termination == HORIZON

    def __len__(self) -> int:
        return len(self.times)


# Dormand & Prince (1980), coefficients of the RK5(4)7M pair.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_A = [np.array(row) for row in _A]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B_HAT = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B - _B_HAT


def _initial_step(rhs, y0, f0, rtol, atol) -> float:
    # Hairer, Norsett & Wanner, Solving ODEs I, II.4
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    f1 = rhs(y0 + h0 * f0)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1)


def integrate(
    rhs: Callable[[np.ndarray], np.ndarray],
    y0,
    t_out: Sequence[float],
    cfg: IntegratorConfig = IntegratorConfig(),
    guard_norm: Callable[[np.ndarray], float] | None = None,
) -> Trajectory:
    """Integrate ``y' = rhs(y)`` from ``t_out[0]`` and record the state at each ``t_out``.

    ``guard_norm`` measures the state for the overflow guard (default: max-abs).
    """
    t_out = np.asarray(t_out, dtype=float)
    if t_out.ndim != 1 or len(t_out) == 0:
        raise ValueError("t_out must be a non-empty 1-D sequence")
    if np.any(np.diff(t_out) <= 0):
        raise ValueError("output times must be strictly increasing")
    y = np.array(y0, dtype=float)
    guard_norm = guard_norm or (lambda s: float(np.max(np.abs(s))))
    times = [t_out[0]]
    states = [y.copy()]
    if len(t_out) == 1:
        return Trajectory(t_out.copy(), np.array(states), cfg, HORIZON, 0, None, guard_norm(y))

    rtol, atol = cfg.rtol, cfg.atol
    t = t_out[0]
    k1 = rhs(y)
    h = min(_initial_step(rhs, y, k1, rtol, atol), cfg.max_step)
    next_out = 1
    steps = 0
    termination = HORIZON
    escape = None
    K = np.empty((7, y.size))
    while next_out < len(t_out):
        target = t_out[next_out]
        if steps >= cfg.max_steps:
            termination = MAX_STEPS
            break
        h_try = h
        hit = t + h >= target - 1e-14 * max(1.0, abs(target))
        if hit:
            h = target - t
        if h <= 1e-14 * max(1.0, abs(t)):
            termination = STEP_FAILURE
            break
        K[0] = k1
        for s in range(1, 7):
            ys = y + h * np.dot(_A[s], K[:s])
            K[s] = rhs(ys)
        y_new = ys  # the last stage is evaluated at the 5th-order solution (FSAL)
        err_vec = h * (_E @ K)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = math.sqrt(float(np.mean((err_vec / scale) ** 2)))
        steps += 1
        if not math.isfinite(err):
            h *= 0.2
            continue
        if err > 1.0:
            h *= max(0.2, 0.9 * err**-0.2)
            continue
        t = target if hit else t + h
        y = y_new
        k1 = K[6].copy()
        factor = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err**-0.2))
        h_next = h * factor
        if hit:
            times.append(t)
            states.append(y.copy())
            next_out += 1
            if factor >= 1.0:
                # a clipped step says nothing against the controller's last proposal
                h_next = max(h_next, h_try)
        h = min(h_next, cfg.max_step)
        if guard_norm(y) > cfg.overflow_guard:
            termination = OVERFLOW
            escape = t
            if not hit:
                times.append(t)
                states.append(y.copy())
            break
    return Trajectory(
        np.array(times),
        np.array(states),
        cfg,
        termination,
        steps,
        escape,
        guard_norm(states[-1]),
    )


def _check_field(f: VectorFieldDef, x0) -> np.ndarray:
    x0 = np.array(x0, dtype=float).reshape(-1)
    if x0.shape[0] != f.dimension:
        raise ValueError(f"initial state has length {x0.shape[0]}, field dimension is {f.dimension}")
    return x0


def flow(f: VectorFieldDef, x0, t: float, cfg: IntegratorConfig = IntegratorConfig()) -> np.ndarray:
    """``phi_t(x0)``; ``flow(f, x0, 0)`` returns ``x0`` unchanged."""
    x0 = _check_field(f, x0)
    if t < 0:
        raise ValueError("flow time must be non-negative")
    if t == 0:
        return x0.copy()
    traj = integrate(f, x0, [0.0, t], cfg)
    _raise_on_failure(traj)
    return traj.states[-1]


def _raise_on_failure(traj: Trajectory) -> None:
    if traj.termination == OVERFLOW:
        raise DivergenceError(f"state norm exceeded {traj.config.overflow_guard:g} at t={traj.escape_time:g}", traj.escape_time)
    if traj.termination != HORIZON:
        raise IntegrationError(f"integration stopped ({traj.termination}) at t={traj.times[-1]:g}")


def sample_times(horizon: float, sample_dt: float, start: float = 0.0) -> np.ndarray:
    if not horizon > 0 or not sample_dt > 0:
        raise ValueError("horizon and sample_dt must be positive")
    count = int(math.floor(horizon / sample_dt + 1e-9))
    ts = start + sample_dt * np.arange(count + 1)
    if horizon - count * sample_dt > 1e-9 * sample_dt:
        ts = np.append(ts, start + horizon)
    return ts


def trace(
    f: VectorFieldDef,
    x0,
    horizon: float,
    sample_dt: float,
    cfg: IntegratorConfig = IntegratorConfig(),
) -> Trajectory:
    """Trajectory sampled at ``0, dt, 2 dt, ...`` up to ``horizon`` (inclusive).

    Divergence and step failure end the trajectory early; check ``termination``.
    """
    x0 = _check_field(f, x0)
    return integrate(f, x0, sample_times(horizon, sample_dt), cfg)


def distance_series(
    f: VectorFieldDef,
    x0,
    y0,
    norm: NormSpec,
    horizon: float,
    sample_dt: float,
    cfg: IntegratorConfig = IntegratorConfig(),
    times: Sequence[float] | None = None,
) -> np.ndarray:
    """Rows ``(t, ||phi_t(x0) - phi_t(y0)||)`` from one stacked 2n-dimensional run.

    Raises :class:`DivergenceError` if either trajectory blows up.
    """
    x0 = _check_field(f, x0)
    y0 = _check_field(f, y0)
    n = f.dimension

    def stacked(z):
        return np.concatenate([f(z[:n]), f(z[n:])])

    ts = np.asarray(times, dtype=float) if times is not None else sample_times(horizon, sample_dt)
    traj = integrate(stacked, np.concatenate([x0, y0]), ts, cfg)
    _raise_on_failure(traj)
    d = norm(traj.states[:, :n] - traj.states[:, n:])
    return np.column_stack([traj.times, d])


def write_csv(traj: Trajectory, path) -> None:
    """CSV with header ``t,x1,...,xn`` and full double precision (``repr``).

    ``path`` may also be an open text stream.
    """
    if hasattr(path, "write"):
        _write_rows(traj, path)
        return
    with Path(path).open("w", newline="") as handle:
        _write_rows(traj, handle)


def _write_rows(traj: Trajectory, handle) -> None:
    n = traj.states.shape[1]
    w = csv.writer(handle, lineterminator="\n")
    w.writerow(["t"] + [f"x{i + 1}" for i in range(n)])
    for t, s in zip(traj.times, traj.states):
        w.writerow([repr(float(t))] + [repr(float(v)) for v in s])


def read_csv(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1:]


def with_guard(cfg: IntegratorConfig, guard: float) -> IntegratorConfig:
    return replace(cfg, overflow_guard=guard)
