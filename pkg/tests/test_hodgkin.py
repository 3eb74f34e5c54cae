import csv

import numpy as np
import pytest

from iqcfit.errors import ShapeError
from iqcfit.hodgkin import (
    DEFAULT_LEVELS,
    check_step_ordering,
    gating_trajectory,
    monotonicity_witness,
    rate_alpha,
    rate_beta,
    scale_dataset,
    simulate_channel,
    steady_state_gating,
    step_dataset,
    time_constant,
    witness_inputs,
    write_figure1,
)
from iqcfit.signals import Signal, TimeGrid
from iqcfit.supply import iiqc_residual, passivity_supply

ALPHA_AT_ZERO = 0.05819767068693264
XINF_AT_ZERO = 0.31767691406069737


def test_rate_values():
    assert rate_beta(0.0) == 0.125
    assert rate_alpha(-10.0) == pytest.approx(0.1, rel=1e-12)
    assert rate_alpha(0.0) == pytest.approx(ALPHA_AT_ZERO, rel=1e-12)


def test_alpha_branches_agree_at_switch():
    # the series branch takes over below |u + 10| = 1e-4; compare it with
    # the direct formula at the same points
    for u in (-10.0 + 0.99e-4, -10.0 - 0.99e-4):
        w = (u + 10.0) / 10.0
        direct = 0.1 * w / np.expm1(w)
        assert rate_alpha(u) == pytest.approx(direct, rel=1e-12)


def test_rates_positive_on_physical_range():
    u = np.linspace(-120.0, 20.0, 2001)
    assert (rate_alpha(u) > 0).all()
    assert (rate_beta(u) > 0).all()


def test_steady_state_value():
    assert steady_state_gating(0.0) == pytest.approx(XINF_AT_ZERO, rel=1e-12)


def test_reversal_potential_gives_zero_output():
    y = simulate_channel(12.0, 1e-3, horizon=2.0)
    assert np.abs(y.values).max() == 0.0


def test_gating_reaches_steady_state():
    for level in (-100.0, -50.0, 0.0):
        tau_ms = time_constant(level)
        horizon = round(20.0 * tau_ms, 3)
        x = gating_trajectory(level, 1e-3, horizon=horizon)
        assert abs(x.values[-1, 0] - steady_state_gating(level)) <= 1e-6


def test_gating_stays_in_unit_interval():
    for level in (-109.0, -6.0, 12.0):
        x = gating_trajectory(level, 1e-3, horizon=10.0)
        assert x.values.min() >= 0.0
        assert x.values.max() <= 1.0 + 1e-12


def test_output_starts_at_zero():
    y = simulate_channel(-50.0, 1e-3, horizon=1.0)
    assert y.values[0, 0] == 0.0


def test_integrator_step_refinement():
    u1, _ = witness_inputs()
    coarse = simulate_channel(u1, 1e-3, horizon=5.0)
    fine = simulate_channel(u1, 5e-4, horizon=5.0)
    gap = abs(coarse.values[-1, 0] - fine.values[-1, 0])
    assert gap <= 1e-8 * abs(fine.values[-1, 0])


def test_step_dataset_defaults():
    data = step_dataset()
    assert len(data.inputs) == 12
    assert data.grid.tau == 20
    assert data.grid.dt == 0.5
    assert data.grid.size == 21
    for u, level in zip(data.inputs, DEFAULT_LEVELS):
        assert np.all(u.values == level)
    assert DEFAULT_LEVELS[0] == -6.0
    assert DEFAULT_LEVELS[-1] == -109.0
    report = check_step_ordering(data)
    assert report.ordered
    assert report.max_violation <= 1e-9


def test_step_dataset_overrides():
    data = step_dataset(levels=(-20.0, -40.0), horizon=5.0, sample_dt=0.25)
    assert len(data.inputs) == 2
    assert data.grid.tau == 20
    assert data.grid.dt == 0.25


def test_step_dataset_matches_fine_simulation():
    data = step_dataset(levels=(-51.0,), horizon=2.0)
    fine = simulate_channel(-51.0, 1e-3, horizon=2.0)
    stride = round(0.5 / 1e-3)
    assert np.abs(data.outputs[0].values[:, 0] - fine.values[::stride, 0]).max() == 0.0


def test_witness_values():
    w = monotonicity_witness()
    assert w.continuous == pytest.approx(-33.508400495773714, rel=1e-9)
    assert w.sampled == pytest.approx(-67.41999463442133, rel=1e-9)
    assert w.continuous < 0
    assert w.sampled < 0
    assert abs(w.continuous - (-33.51)) <= 1.0


def test_witness_matches_supply_residual():
    u1, u2 = witness_inputs()
    y1 = simulate_channel(u1, 1e-3, horizon=10.0)
    y2 = simulate_channel(u2, 1e-3, horizon=10.0)
    grid = TimeGrid(20, 0.5)
    stride = round(0.5 / 1e-3)
    t = grid.times()
    u1_s = Signal(grid, u1(t))
    u2_s = Signal(grid, u2(t))
    y1_s = Signal(grid, y1.values[::stride])
    y2_s = Signal(grid, y2.values[::stride])
    residual = iiqc_residual(passivity_supply(1), u1_s, u2_s, y1_s, y2_s)
    w = monotonicity_witness()
    # passivity supply is twice the input-output product
    assert residual == pytest.approx(2.0 * w.sampled, rel=1e-12)
    swapped = iiqc_residual(passivity_supply(1), u2_s, u1_s, y2_s, y1_s)
    assert swapped == pytest.approx(residual, rel=1e-12)


def test_scale_dataset():
    data = step_dataset(levels=(-20.0, -60.0), horizon=2.0)
    same = scale_dataset(data, 1.0, 1.0)
    for a, b in zip(same.inputs, data.inputs):
        assert np.abs(a.values - b.values).max() == 0.0
    scaled = scale_dataset(data, 2.0, 4.0)
    for a, b in zip(scaled.inputs, data.inputs):
        assert np.abs(a.values - b.values / 2.0).max() == 0.0
    for a, b in zip(scaled.outputs, data.outputs):
        assert np.abs(a.values - b.values / 4.0).max() == 0.0
        assert np.all(np.sign(a.values) == np.sign(b.values))
    with pytest.raises(ValueError):
        scale_dataset(data, 0.0, 1.0)
    with pytest.raises(ValueError):
        scale_dataset(data, 1.0, -2.0)


def test_time_constant_wiring():
    want = 1.0 / (ALPHA_AT_ZERO + 0.125)
    assert time_constant(0.0) == pytest.approx(want, rel=1e-12)


def test_figure_csv_format(tmp_path):
    data = step_dataset()
    path = tmp_path / "figure1.csv"
    write_figure1(data, path)
    with path.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "level", "y"]
    assert len(rows) == 1 + 12 * 21
    t, level, y = (float(x) for x in rows[1])
    assert t == 0.0
    assert level == -6.0
    assert y == data.outputs[0].values[0, 0]
    t, level, y = (float(x) for x in rows[-1])
    assert t == 10.0
    assert level == -109.0
    assert y == data.outputs[-1].values[-1, 0]


def test_input_validation():
    with pytest.raises(ValueError):
        simulate_channel(-50.0, 1e-3)  # horizon required for constants
    with pytest.raises(ValueError):
        simulate_channel(-50.0, 1e-3, horizon=0.0005)
    with pytest.raises(ValueError):
        simulate_channel(-50.0, -1e-3, horizon=1.0)
    grid = TimeGrid(10, 0.5)
    sig = Signal(grid, np.zeros(11))
    with pytest.raises(ShapeError):
        simulate_channel(sig, 1e-3)  # grid dt must equal dt_ode
    wide = Signal(TimeGrid(10, 1e-3), np.zeros((11, 2)))
    with pytest.raises(ShapeError):
        simulate_channel(wide, 1e-3)


def test_signal_input_matches_callable():
    u1, _ = witness_inputs()
    grid = TimeGrid(2000, 1e-3)
    sig = Signal(grid, u1(grid.times()))
    from_sig = simulate_channel(sig, 1e-3)
    from_fn = simulate_channel(u1, 1e-3, horizon=2.0)
    # midpoints differ: linear interpolation vs exact samples
    gap = np.abs(from_sig.values - from_fn.values).max()
    assert gap <= 1e-5 * np.abs(from_fn.values).max()
