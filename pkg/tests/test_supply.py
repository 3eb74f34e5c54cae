import numpy as np
import pytest

from iqcfit.errors import ShapeError, SignatureError
from iqcfit.signals import Dataset, Signal, TimeGrid, constant_signal, norm, random_signal
from iqcfit.supply import (
    ScatteringFactors,
    SupplyRate,
    check_operator_iiqc,
    factor_phi,
    factors_from_matrix,
    gain_supply,
    iiqc_residual,
    passivity_supply,
    scatter_dataset,
    supply_from_json,
    supply_to_json,
    supply_value,
    unscatter_dataset,
    verify_signature,
)

ROOT2 = np.sqrt(2.0)


def test_signature_examples():
    rep = verify_signature(np.array([[0.0, 1.0], [1.0, 0.0]]), 1, 1)
    assert (rep.n_positive, rep.n_negative) == (1, 1)
    verify_signature(np.diag([4.0, -1.0]), 1, 1)
    with pytest.raises(SignatureError):
        verify_signature(np.diag([1.0, 1.0]), 1, 1)
    with pytest.raises(SignatureError):
        verify_signature(np.diag([1.0, 0.0]), 1, 1)
    with pytest.raises(ShapeError):
        verify_signature(np.array([[0.0, 1.0], [0.5, 0.0]]), 1, 1)
    with pytest.raises(ShapeError):
        verify_signature(np.eye(3), 1, 1)


def test_supply_values():
    assert supply_value(passivity_supply(1), [1.0], [2.0]) == 4.0
    assert supply_value(gain_supply(1.0), [3.0], [2.0]) == 5.0
    assert supply_value(gain_supply(4.0), [0.0], [0.0]) == 0.0
    with pytest.raises(ShapeError):
        supply_value(passivity_supply(1), [1.0, 2.0], [0.0])


def test_factor_passivity_is_canonical_scattering():
    f = factor_phi(passivity_supply(1))
    want = (ROOT2 / 2) * np.array([[1.0, 1.0], [1.0, -1.0]])
    assert np.allclose(f.M, want, atol=1e-14)
    assert np.allclose(f.N, want, atol=1e-14)


def test_factor_gain_is_diagonal():
    f = factor_phi(gain_supply(4.0))
    assert np.allclose(f.M, np.diag([2.0, 1.0]), atol=1e-14)
    assert np.allclose(f.N, np.diag([0.5, 1.0]), atol=1e-14)


def test_factor_identity_sweep():
    # random nonsingular A gives a valid two-sided-signature matrix A' Sigma A
    rng = np.random.default_rng(11)
    for _ in range(50):
        m = int(rng.integers(1, 3))
        p = int(rng.integers(1, 3))
        d = m + p
        while True:
            A = rng.normal(size=(d, d))
            if abs(np.linalg.det(A)) > 1e-3:
                break
        sigma = np.diag(np.concatenate([np.ones(m), -np.ones(p)]))
        phi = A.T @ sigma @ A
        supply = SupplyRate(phi, m, p)
        f = factor_phi(supply)
        recon = f.M.T @ sigma @ f.M
        assert np.abs(recon - phi).max() <= 1e-10 * max(1.0, np.abs(phi).max())
        assert np.abs(f.M @ f.N - np.eye(d)).max() <= 1e-10


def test_factors_validate_inverse():
    with pytest.raises(ShapeError):
        ScatteringFactors(np.eye(2), 2 * np.eye(2), 1, 1)


def test_scatter_identity_factor_keeps_dataset():
    rng = np.random.default_rng(12)
    grid = TimeGrid(4)
    data = Dataset(
        (random_signal(grid, 1, rng),), (random_signal(grid, 1, rng),)
    )
    f = factors_from_matrix(np.eye(2), 1, 1)
    out = scatter_dataset(data, f)
    assert np.array_equal(out.inputs[0].values, data.inputs[0].values)
    assert np.array_equal(out.outputs[0].values, data.outputs[0].values)


def test_scatter_constant_ones():
    grid = TimeGrid(3)
    data = Dataset(
        (constant_signal(grid, 1.0),), (constant_signal(grid, 1.0),)
    )
    f = factor_phi(passivity_supply(1))
    out = scatter_dataset(data, f)
    assert np.allclose(out.inputs[0].values, ROOT2, atol=1e-14)
    assert np.allclose(out.outputs[0].values, 0.0, atol=1e-14)


def test_scatter_round_trip():
    rng = np.random.default_rng(13)
    grid = TimeGrid(5)
    data = Dataset(
        tuple(random_signal(grid, 2, rng) for _ in range(3)),
        tuple(random_signal(grid, 1, rng) for _ in range(3)),
    )
    supply = SupplyRate(
        np.array([[2.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, -1.0]]), 2, 1
    )
    f = factor_phi(supply)
    back = unscatter_dataset(scatter_dataset(data, f), f)
    for a, b in zip(data.inputs, back.inputs):
        assert np.abs(a.values - b.values).max() <= 1e-12
    for a, b in zip(data.outputs, back.outputs):
        assert np.abs(a.values - b.values).max() <= 1e-12


def test_iiqc_residual_zero_increment():
    rng = np.random.default_rng(14)
    grid = TimeGrid(4)
    u = random_signal(grid, 1, rng)
    y = random_signal(grid, 1, rng)
    assert iiqc_residual(passivity_supply(1), u, u, y, y) == 0.0


def test_iiqc_residual_linear_gain_case():
    rng = np.random.default_rng(15)
    grid = TimeGrid(6)
    u = random_signal(grid, 1, rng)
    v = random_signal(grid, 1, rng)
    got = iiqc_residual(gain_supply(1.0), u, v, 0.5 * u, 0.5 * v)
    assert got == pytest.approx(0.75 * norm(u - v) ** 2, rel=1e-12)
    assert got >= 0.0


def test_iiqc_residual_horizons():
    grid = TimeGrid(2)
    u = Signal(grid, [1.0, 1.0, 1.0])
    v = Signal(grid, [0.0, 0.0, 0.0])
    y = Signal(grid, [1.0, -1.0, 0.0])
    z = Signal(grid, [0.0, 0.0, 0.0])
    # partial sums of 2*(u-v)*(y-z): 2, 0, 0
    assert iiqc_residual(passivity_supply(1), u, v, y, z, horizon=0) == 2.0
    assert iiqc_residual(passivity_supply(1), u, v, y, z, horizon=1) == 0.0
    assert iiqc_residual(passivity_supply(1), u, v, y, z) == 0.0


def test_check_identity_passes_and_negation_fails():
    rng = np.random.default_rng(16)
    grid = TimeGrid(5)
    probes = [
        (random_signal(grid, 1, rng), random_signal(grid, 1, rng))
        for _ in range(20)
    ]
    ok = check_operator_iiqc(lambda u: u, passivity_supply(1), probes)
    assert ok.passed
    assert ok.min_residual >= 0.0
    bad = check_operator_iiqc(lambda u: -1.0 * u, passivity_supply(1), probes)
    assert not bad.passed
    assert bad.min_residual < 0.0


def test_check_all_horizons_mode():
    rng = np.random.default_rng(17)
    grid = TimeGrid(5)
    probes = [
        (random_signal(grid, 1, rng), random_signal(grid, 1, rng))
        for _ in range(10)
    ]
    rep = check_operator_iiqc(lambda u: u, passivity_supply(1), probes,
                              mode="all-horizons")
    assert rep.passed
    with pytest.raises(ValueError):
        check_operator_iiqc(lambda u: u, passivity_supply(1), probes,
                            mode="partial")


def _closed_form_s(factors: ScatteringFactors, r: float) -> float:
    m11 = float(factors.m11[0, 0])
    m12 = float(factors.m12[0, 0])
    m21 = float(factors.m21[0, 0])
    m22 = float(factors.m22[0, 0])
    return (m21 + m22 * r) / (m11 + m12 * r)


def test_scattering_equivalence_for_linear_operators():
    # supply constraint on R = r*I holds exactly when the induced scattered
    # map S = s*I has |s| <= 1
    rng = np.random.default_rng(18)
    grid = TimeGrid(6)
    f = factor_phi(passivity_supply(1))
    probes = [
        (random_signal(grid, 1, rng), random_signal(grid, 1, rng))
        for _ in range(25)
    ]
    for r in (-0.5, 0.0, 0.3, 1.0, 2.0, 5.0, -2.0):
        rep = check_operator_iiqc(lambda u, r=r: r * u, passivity_supply(1),
                                  probes, tol=1e-12)
        s = _closed_form_s(f, r)
        assert rep.passed == (abs(s) <= 1.0 + 1e-12), (r, s)


def test_scatter_of_linear_graph_is_linear_graph():
    # y = r u maps to z = s v with the closed-form scalar s
    rng = np.random.default_rng(19)
    grid = TimeGrid(4)
    f = factor_phi(passivity_supply(1))
    for r in (-0.25, 0.5, 3.0):
        u = random_signal(grid, 1, rng)
        data = Dataset((u,), (r * u,))
        sc = scatter_dataset(data, f)
        s = _closed_form_s(f, r)
        assert np.abs(sc.outputs[0].values - s * sc.inputs[0].values).max() \
            <= 1e-12


def test_causal_all_horizons_includes_full():
    rng = np.random.default_rng(20)
    grid = TimeGrid(4)
    probes = [
        (random_signal(grid, 1, rng), random_signal(grid, 1, rng))
        for _ in range(10)
    ]
    every = check_operator_iiqc(lambda u: u, passivity_supply(1), probes,
                                mode="all-horizons")
    full = check_operator_iiqc(lambda u: u, passivity_supply(1), probes,
                               mode="full")
    assert every.passed
    assert full.passed
    assert every.min_residual <= full.min_residual + 1e-15


def test_supply_json_round_trip():
    for supply in (passivity_supply(2), gain_supply(3.0, m=1, p=2),
                   SupplyRate(np.array([[2.0, 1.0], [1.0, -1.0]]), 1, 1)):
        back = supply_from_json(supply_to_json(supply))
        assert back.m == supply.m and back.p == supply.p
        assert np.allclose(back.phi, supply.phi, atol=1e-15)
    assert supply_to_json(passivity_supply(1))["kind"] == "passivity"
    assert supply_to_json(gain_supply(2.5))["kind"] == "gain"
