"""Quadratic supply rates, their scattering factorizations, and IQC checks.

A supply rate is a symmetric nonsingular matrix Phi on R^(m+p) with exactly m
positive and p negative eigenvalues.  Such a matrix factors as
Phi = M' Sigma M with Sigma = diag(I_m, -I_p), and the induced change of
coordinates (v, z) = M(u, y) turns incremental dissipativity with respect to
Phi into plain nonexpansiveness of the transformed operator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ShapeError, SignatureError
from .signals import Dataset, Signal, sample_weights

# Relative eigenvalue floor below which Phi counts as singular.
SINGULAR_TOL = 1e-10


@dataclass(frozen=True)
class SignatureReport:
    n_positive: int
    n_negative: int
    min_abs_eigenvalue: float
    tolerance: float


def verify_signature(phi: np.ndarray, m: int, p: int) -> SignatureReport:
    """Check that phi is symmetric, nonsingular, with inertia (m, p).

    Returns the eigenvalue counts on success; raises SignatureError when the
    counts disagree or an eigenvalue sits inside the singularity tolerance.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 2 or phi.shape[0] != phi.shape[1]:
        raise ShapeError(f"supply matrix must be square, got shape {phi.shape}")
    if phi.shape[0] != m + p:
        raise ShapeError(f"supply matrix is {phi.shape[0]}x{phi.shape[0]}, need {m + p}")
    if not np.allclose(phi, phi.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(phi).max())):
        raise ShapeError("supply matrix must be symmetric")
    eig = np.linalg.eigvalsh(phi)
    tol = SINGULAR_TOL * np.abs(eig).max()
    n_pos = int((eig > tol).sum())
    n_neg = int((eig < -tol).sum())
    report = SignatureReport(n_pos, n_neg, float(np.abs(eig).min()), float(tol))
    if np.abs(eig).min() <= tol:
        raise SignatureError(
            f"supply matrix is singular within tolerance {tol:.3e} "
            f"(min |eigenvalue| {report.min_abs_eigenvalue:.3e})"
        )
    if (n_pos, n_neg) != (m, p):
        raise SignatureError(
            f"supply matrix has {n_pos} positive / {n_neg} negative eigenvalues, "
            f"need {m} / {p}"
        )
    return report


@dataclass(frozen=True, eq=False)
class SupplyRate:
    """Symmetric nonsingular supply matrix with inertia (m, p)."""

    phi: np.ndarray
    m: int
    p: int

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float).copy()
        verify_signature(phi, self.m, self.p)
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)


def passivity_supply(m: int = 1) -> SupplyRate:
    """Supply [[0, I], [I, 0]] whose rate is twice the input-output product."""
    zero, eye = np.zeros((m, m)), np.eye(m)
    phi = np.block([[zero, eye], [eye, zero]])
    return SupplyRate(phi, m, m)


def gain_supply(delta: float, m: int = 1, p: int | None = None) -> SupplyRate:
    """Supply diag(delta*I, -I) encoding an incremental gain bound sqrt(delta)."""
    if delta <= 0:
        raise ValueError(f"gain parameter must be positive, got {delta}")
    if p is None:
        p = m
    phi = np.diag(np.concatenate([np.full(m, float(delta)), -np.ones(p)]))
    return SupplyRate(phi, m, p)


def supply_value(supply: SupplyRate, x1: np.ndarray, x2: np.ndarray) -> float:
    """Evaluate [x1; x2]' Phi [x1; x2] for one input/output increment pair."""
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if x1.shape != (supply.m,) or x2.shape != (supply.p,):
        raise ShapeError(
            f"expected increment dims ({supply.m},)/({supply.p},), "
            f"got {x1.shape}/{x2.shape}"
        )
    x = np.concatenate([x1, x2])
    return float(x @ supply.phi @ x)


@dataclass(frozen=True, eq=False)
class ScatteringFactors:
    """Invertible M with M' Sigma M = Phi, plus its inverse N, in blocks."""

    M: np.ndarray
    N: np.ndarray
    m: int
    p: int

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float).copy()
        N = np.asarray(self.N, dtype=float).copy()
        d = self.m + self.p
        if M.shape != (d, d) or N.shape != (d, d):
            raise ShapeError(f"factor matrices must be {d}x{d}")
        scale = max(1.0, np.abs(M).max() * np.abs(N).max())
        if np.abs(M @ N - np.eye(d)).max() > 1e-10 * scale:
            raise ShapeError("N is not the inverse of M within tolerance")
        for arr in (M, N):
            arr.setflags(write=False)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "N", N)

    # Block accessors, partitioned after the first m rows/columns.
    @property
    def m11(self) -> np.ndarray:
        return self.M[: self.m, : self.m]

    @property
    def m12(self) -> np.ndarray:
        return self.M[: self.m, self.m:]

    @property
    def m21(self) -> np.ndarray:
        return self.M[self.m:, : self.m]

    @property
    def m22(self) -> np.ndarray:
        return self.M[self.m:, self.m:]

    @property
    def n11(self) -> np.ndarray:
        return self.N[: self.m, : self.m]

    @property
    def n12(self) -> np.ndarray:
        return self.N[: self.m, self.m:]

    @property
    def n21(self) -> np.ndarray:
        return self.N[self.m:, : self.m]

    @property
    def n22(self) -> np.ndarray:
        return self.N[self.m:, self.m:]


def factors_from_matrix(M: np.ndarray, m: int, p: int) -> ScatteringFactors:
    return ScatteringFactors(M, np.linalg.inv(np.asarray(M, dtype=float)), m, p)


def factor_phi(supply: SupplyRate) -> ScatteringFactors:
    """Deterministic factorization Phi = M' Sigma M via eigendecomposition.

    Eigenvalues are sorted descending and each eigenvector's first nonzero
    entry is made positive, so repeated calls return identical factors.
    """
    eig, vec = np.linalg.eigh(supply.phi)
    order = np.argsort(eig)[::-1]
    eig, vec = eig[order], vec[:, order]
    for k in range(vec.shape[1]):
        col = vec[:, k]
        lead = col[np.abs(col) > 1e-12 * np.abs(col).max()][0]
        if lead < 0:
            vec[:, k] = -col
    M = np.diag(np.sqrt(np.abs(eig))) @ vec.T
    sigma = np.diag(np.concatenate([np.ones(supply.m), -np.ones(supply.p)]))
    recon = M.T @ sigma @ M
    if np.abs(recon - supply.phi).max() > 1e-10 * max(1.0, np.abs(supply.phi).max()):
        raise SignatureError("factorization failed to reproduce the supply matrix")
    return factors_from_matrix(M, supply.m, supply.p)


def _apply_blocks(data: Dataset, a11, a12, a21, a22) -> Dataset:
    new_in, new_out = [], []
    for u, y in zip(data.inputs, data.outputs):
        new_in.append(Signal(u.grid, u.values @ a11.T + y.values @ a12.T))
        new_out.append(Signal(u.grid, u.values @ a21.T + y.values @ a22.T))
    return Dataset(tuple(new_in), tuple(new_out))


def scatter_dataset(data: Dataset, factors: ScatteringFactors) -> Dataset:
    """Map trajectories (u, y) to scattering coordinates (v, z) = M(u, y)."""
    if data.input_dim != factors.m or data.output_dim != factors.p:
        raise ShapeError(
            f"dataset dims ({data.input_dim}, {data.output_dim}) do not match "
            f"factor dims ({factors.m}, {factors.p})"
        )
    return _apply_blocks(data, factors.m11, factors.m12, factors.m21, factors.m22)


def unscatter_dataset(data: Dataset, factors: ScatteringFactors) -> Dataset:
    """Invert scatter_dataset by applying the blocks of N."""
    return _apply_blocks(data, factors.n11, factors.n12, factors.n21, factors.n22)


def iiqc_residual(supply: SupplyRate, u: Signal, v: Signal, y: Signal, z: Signal,
                  horizon: int | None = None, mode: str = "sequence",
                  trapezoid: bool = False) -> float:
    """Accumulated supply of the increments (u - v, y - z) up to a horizon."""
    du, dy = u - v, y - z
    if du.dim != supply.m or dy.dim != supply.p:
        raise ShapeError(
            f"increment dims ({du.dim}, {dy.dim}) do not match supply "
            f"({supply.m}, {supply.p})"
        )
    last = du.grid.tau if horizon is None else horizon
    w = sample_weights(du.grid, mode, trapezoid, upto=last)
    x = np.hstack([du.values[: last + 1], dy.values[: last + 1]])
    return float(np.einsum("t,tj,jk,tk->", w, x, supply.phi, x))


@dataclass(frozen=True)
class IiqcReport:
    min_residual: float
    worst_pair: int
    worst_horizon: int
    tolerance: float
    passed: bool
    residuals: tuple[float, ...]


def check_operator_iiqc(op: Callable[[Signal], Signal], supply: SupplyRate,
                        probes: list[tuple[Signal, Signal]], mode: str = "full",
                        quadrature: str = "sequence", trapezoid: bool = False,
                        tol: float | None = None) -> IiqcReport:
    """Evaluate op on probe pairs and report the worst accumulated supply.

    mode "full" checks the complete horizon only; "all-horizons" also checks
    every truncation, which is the actual incremental dissipativity property.
    Passing means min residual >= -tol; by default tol scales with the largest
    per-pair sum of absolute supply terms.
    """
    if mode not in ("full", "all-horizons"):
        raise ValueError(f"unknown check mode {mode!r}")
    mins, scale = [], 0.0
    worst = (np.inf, -1, -1)
    for idx, (u, v) in enumerate(probes):
        y, z = op(u), op(v)
        du, dy = u - v, y - z
        w = sample_weights(du.grid, quadrature, trapezoid)
        x = np.hstack([du.values, dy.values])
        terms = w * np.einsum("tj,jk,tk->t", x, supply.phi, x)
        scale = max(scale, float(np.abs(terms).sum()))
        partial = np.cumsum(terms)
        if mode == "full":
            res = float(partial[-1])
            horizon = du.grid.tau
        else:
            t_min = int(np.argmin(partial))
            res = float(partial[t_min])
            horizon = t_min
        mins.append(res)
        if res < worst[0]:
            worst = (res, idx, horizon)
    if tol is None:
        tol = 1e-8 * scale
    min_residual = worst[0] if mins else 0.0
    return IiqcReport(
        min_residual=float(min_residual),
        worst_pair=worst[1],
        worst_horizon=worst[2],
        tolerance=float(tol),
        passed=bool(min_residual >= -tol),
        residuals=tuple(mins),
    )


def supply_to_json(supply: SupplyRate) -> dict:
    """JSON-friendly description; built-in kinds keep their parameters."""
    phi = supply.phi
    m, p = supply.m, supply.p
    if m == p and np.array_equal(phi, passivity_supply(m).phi):
        return {"kind": "passivity", "m": m, "p": p}
    diag = np.diag(phi)
    if (np.count_nonzero(phi - np.diag(diag)) == 0
            and np.all(diag[m:] == -1.0) and np.all(diag[:m] == diag[0]) and diag[0] > 0):
        return {"kind": "gain", "delta": float(diag[0]), "m": m, "p": p}
    return {"kind": "custom", "phi": phi.tolist(), "m": m, "p": p}


def supply_from_json(obj: dict | str | Path) -> SupplyRate:
    if not isinstance(obj, dict):
        obj = json.loads(Path(obj).read_text())
    kind = obj.get("kind", "custom")
    if kind == "passivity":
        return passivity_supply(int(obj.get("m", 1)))
    if kind == "gain":
        return gain_supply(float(obj["delta"]), int(obj.get("m", 1)),
                           int(obj["p"]) if "p" in obj else None)
    if kind == "custom":
        return SupplyRate(np.array(obj["phi"], dtype=float), int(obj["m"]), int(obj["p"]))
    raise ValueError(f"unknown supply kind {kind!r}")
