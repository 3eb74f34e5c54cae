"""Potassium-channel benchmark system and its experiment pipeline.

The plant maps a membrane voltage trajectory u (mV) to the potassium current
y = g_max * x^4 * (u - u_rev) (uA/cm^2), where the gating state x follows
dx/dt = alpha(u) (1 - x) - beta(u) x from x(0) = 0.  Time is in ms.  The
system is a classic example of an operator that is incrementally positive
(monotone) despite a strongly nonlinear response surface, which makes it a
natural target for the constrained identification pipeline.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Union

import numpy as np

from .errors import NumericalError, ShapeError
from .signals import Dataset, Signal, TimeGrid, inner_product

# Voltage levels (mV) for the default step-response experiment.
DEFAULT_LEVELS = (-6.0, -10.0, -19.0, -26.0, -32.0, -38.0, -51.0, -63.0,
                  -76.0, -88.0, -100.0, -109.0)

# Normalization constants that bring the step data to O(1) amplitude
# before scattering; inputs divide by the first, outputs by the second.
INPUT_SCALE = 978.7
OUTPUT_SCALE = 2.539e4


@dataclass(frozen=True)
class HHParams:
    g_max: float = 36.0   # peak conductance, mS/cm^2
    u_rev: float = 12.0   # reversal potential, mV


def rate_alpha(u):
    """Opening rate (1/ms).  The formula 0.01 (u+10) / (exp((u+10)/10) - 1)
    has a removable singularity at u = -10, filled by its series there."""
    u = np.asarray(u, dtype=float)
    w = (u + 10.0) / 10.0
    small = np.abs(u + 10.0) < 1e-4
    wsafe = np.where(small, 1.0, w)
    direct = 0.1 * wsafe / np.expm1(wsafe)
    series = 0.1 * (1.0 - w / 2.0 + w * w / 12.0)
    out = np.where(small, series, direct)
    return float(out) if out.ndim == 0 else out


def rate_beta(u):
    """Closing rate (1/ms)."""
    u = np.asarray(u, dtype=float)
    out = 0.125 * np.exp(u / 80.0)
    return float(out) if out.ndim == 0 else out


def steady_state_gating(u: float) -> float:
    """Asymptotic gating value alpha / (alpha + beta) for constant input."""
    a, b = rate_alpha(u), rate_beta(u)
    return a / (a + b)


InputLike = Union[float, Callable[[np.ndarray], np.ndarray], Signal]


def _input_on_half_grid(u: InputLike, dt_ode: float,
                        horizon: float | None) -> tuple[np.ndarray, int]:
    """Sample the input at every half step of the integration grid."""
    if isinstance(u, Signal):
        if u.dim != 1:
            raise ShapeError("channel input must have one channel")
        if abs(u.grid.dt - dt_ode) > 1e-12 * dt_ode:
            raise ShapeError(
                f"signal dt {u.grid.dt} does not match dt_ode {dt_ode}"
            )
        nodes = u.values[:, 0]
        n = u.grid.tau
        half = np.empty(2 * n + 1)
        half[::2] = nodes
        half[1::2] = 0.5 * (nodes[:-1] + nodes[1:])
        return half, n
    if horizon is None:
        raise ValueError("horizon is required for non-signal inputs")
    n = round(horizon / dt_ode)
    if n < 1 or abs(n * dt_ode - horizon) > 1e-9:
        raise ValueError(f"horizon {horizon} is not a multiple of dt_ode {dt_ode}")
    t_half = np.arange(2 * n + 1) * (dt_ode / 2.0)
    if callable(u):
        half = np.asarray(u(t_half), dtype=float)
        if half.shape != t_half.shape:
            half = np.array([float(u(t)) for t in t_half])
    else:
        half = np.full(t_half.shape, float(u))
    return half, n


def _integrate_gating(u: InputLike, dt_ode: float, horizon: float | None,
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Classical fourth-order fixed-step integration of the gating equation."""
    if dt_ode <= 0:
        raise ValueError(f"dt_ode must be positive, got {dt_ode}")
    half, n = _input_on_half_grid(u, dt_ode, horizon)
    alpha = rate_alpha(half)
    beta = rate_beta(half)
    rate = alpha + beta
    x = 0.0
    xs = np.empty(n + 1)
    xs[0] = x
    h = dt_ode
    for k in range(n):
        a0, r0 = alpha[2 * k], rate[2 * k]
        am, rm = alpha[2 * k + 1], rate[2 * k + 1]
        a1, r1 = alpha[2 * k + 2], rate[2 * k + 2]
        k1 = a0 - r0 * x
        k2 = am - rm * (x + 0.5 * h * k1)
        k3 = am - rm * (x + 0.5 * h * k2)
        k4 = a1 - r1 * (x + h * k3)
        x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        xs[k + 1] = x
    if not np.isfinite(xs).all():
        raise NumericalError("gating integration produced non-finite values")
    return xs, half[::2]


def gating_trajectory(u: InputLike, dt_ode: float,
                      horizon: float | None = None) -> Signal:
    """Gating state x on the integration grid."""
    xs, _ = _integrate_gating(u, dt_ode, horizon)
    return Signal(TimeGrid(len(xs) - 1, dt_ode), xs)


def simulate_channel(u: InputLike, dt_ode: float, horizon: float | None = None,
                     params: HHParams | None = None) -> Signal:
    """Channel current response on the integration grid.

    The input may be a constant level, a callable of time (evaluated exactly
    at the integrator's half steps), or a signal already sampled at dt_ode.
    """
    params = params or HHParams()
    xs, u_nodes = _integrate_gating(u, dt_ode, horizon)
    y = params.g_max * xs**4 * (u_nodes - params.u_rev)
    return Signal(TimeGrid(len(xs) - 1, dt_ode), y)


def _subsample(fine: Signal, sample_dt: float) -> Signal:
    stride = round(sample_dt / fine.grid.dt)
    if stride < 1 or abs(stride * fine.grid.dt - sample_dt) > 1e-9:
        raise ValueError(
            f"sample_dt {sample_dt} is not a multiple of dt_ode {fine.grid.dt}"
        )
    values = fine.values[::stride]
    return Signal(TimeGrid(len(values) - 1, sample_dt), values)


def step_dataset(levels=DEFAULT_LEVELS, horizon: float = 10.0,
                 sample_dt: float = 0.5, dt_ode: float = 1e-3,
                 params: HHParams | None = None) -> Dataset:
    """Constant-voltage step responses, subsampled to the working grid."""
    inputs, outputs = [], []
    for level in levels:
        fine = simulate_channel(float(level), dt_ode, horizon, params)
        y = _subsample(fine, sample_dt)
        u = Signal(y.grid, np.full((y.grid.size, 1), float(level)))
        inputs.append(u)
        outputs.append(y)
    return Dataset(tuple(inputs), tuple(outputs))


def witness_inputs() -> tuple[Callable, Callable]:
    """The two voltage trajectories used to expose non-monotone behavior."""
    u1 = lambda t: 25.0 * np.sin(12.0 * np.pi * t / 50.0)
    u2 = lambda t: 25.0 * np.cos(14.0 * np.pi * t / 75.0)
    return u1, u2


@dataclass(frozen=True)
class WitnessResult:
    continuous: float   # trapezoidal integral approximation of <du, dy>
    sampled: float      # plain sum over the subsampled working grid


def monotonicity_witness(dt_ode: float = 1e-3, sample_dt: float = 0.5,
                         horizon: float = 10.0,
                         params: HHParams | None = None) -> WitnessResult:
    """Inner product <u1 - u2, y1 - y2> for the witness pair.

    A negative value shows the raw channel operator is not incrementally
    positive on this horizon, in both the integral and the sampled reading.
    """
    u1, u2 = witness_inputs()
    y1 = simulate_channel(u1, dt_ode, horizon, params)
    y2 = simulate_channel(u2, dt_ode, horizon, params)
    t = y1.grid.times()
    du = Signal(y1.grid, u1(t) - u2(t))
    dy = y1 - y2
    continuous = inner_product(du, dy, mode="sampled", trapezoid=True)
    du_s = _subsample(du, sample_dt)
    dy_s = _subsample(dy, sample_dt)
    sampled = inner_product(du_s, dy_s)
    return WitnessResult(float(continuous), float(sampled))


def scale_dataset(data: Dataset, a: float = INPUT_SCALE,
                  b: float = OUTPUT_SCALE) -> Dataset:
    """Divide inputs by a and outputs by b."""
    if a <= 0 or b <= 0:
        raise ValueError("scale factors must be positive")
    return Dataset(tuple(u * (1.0 / a) for u in data.inputs),
                   tuple(y * (1.0 / b) for y in data.outputs))


@dataclass(frozen=True)
class OrderingReport:
    ordered: bool
    max_violation: float


def check_step_ordering(data: Dataset, tol: float = 1e-9) -> OrderingReport:
    """Report whether step responses stay pointwise ordered with their levels."""
    levels = [float(u.values[0, 0]) for u in data.inputs]
    order = np.argsort(levels)
    worst = 0.0
    for lo, hi in zip(order[:-1], order[1:]):
        gap = float((data.outputs[lo].values - data.outputs[hi].values).max())
        worst = max(worst, gap)
    return OrderingReport(bool(worst <= tol), worst)


def write_figure1(data: Dataset, path: str | Path):
    """Long-format CSV (t, level, y) of the step-response sweep."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "level", "y"])
        times = data.grid.times()
        for u, y in zip(data.inputs, data.outputs):
            level = float(u.values[0, 0])
            for t, val in zip(times, y.values[:, 0]):
                writer.writerow([f"{t:.17g}", f"{level:.17g}", f"{val:.17g}"])


def time_constant(u: float) -> float:
    """Relaxation time 1 / (alpha + beta) for constant input (ms)."""
    return 1.0 / (rate_alpha(u) + rate_beta(u))
