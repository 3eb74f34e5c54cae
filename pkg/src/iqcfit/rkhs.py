"""Gram assembly and regularized least-squares fitting of operators.

The estimator is the minimizer of sum_i ||y_i - H(u_i)||^2 + gamma ||H||^2
over the space induced by an operator-valued kernel.  It is a kernel
expansion H(u) = sum_j K(u, u_j) c_j whose coefficients solve the block
linear system (G + gamma I) c = y, with G the Gram operator of the inputs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConvergenceError, NumericalError, ShapeError
from .kernels import (OperatorKernel, SeparableKernel, as_operator,
                      kernel_from_json, kernel_to_json)
from .signals import Dataset, Signal, TimeGrid, norm, read_signal, write_signal

# Dense Gram matrices above this side length are refused.
DENSE_CAP = 4096


def _stack(signals: tuple[Signal, ...]) -> np.ndarray:
    return np.stack([s.values for s in signals])


def _flatten(signals: tuple[Signal, ...]) -> np.ndarray:
    # Trajectory-major, then time, then channel.
    return _stack(signals).reshape(-1)


@dataclass(frozen=True, eq=False)
class GramOperator:
    """Gram operator of a kernel over n center signals.

    Dense layout stores the full matrix on the flattened output space.  The
    kronecker layout, available for separable kernels, stores the n x n
    scalar Gram and the channel matrix R; the full operator is their
    tensor product with an identity over time.
    """

    kernel: OperatorKernel
    centers: tuple[Signal, ...]
    layout: str
    dense: np.ndarray | None = None
    scalar_gram: np.ndarray | None = None
    R: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.centers)

    @property
    def steps(self) -> int:
        return self.centers[0].grid.size

    @property
    def p(self) -> int:
        return self.kernel.output_dim

    @property
    def dim(self) -> int:
        return self.n * self.steps * self.p

    def apply(self, coeff: np.ndarray) -> np.ndarray:
        """Apply G to coefficients shaped (n, steps, p)."""
        if self.layout == "dense":
            return (self.dense @ coeff.reshape(-1)).reshape(coeff.shape)
        return np.einsum("ij,jtb,ab->ita", self.scalar_gram, coeff, self.R)

    def quad(self, coeff: np.ndarray) -> float:
        return float(np.vdot(coeff, self.apply(coeff)))

    def trace(self) -> float:
        if self.layout == "dense":
            return float(np.trace(self.dense))
        return float(np.trace(self.scalar_gram) * self.steps * np.trace(self.R))

    def to_dense(self) -> np.ndarray:
        if self.layout == "dense":
            return self.dense
        return np.kron(self.scalar_gram, np.kron(np.eye(self.steps), self.R))


def build_gram(kernel: OperatorKernel, inputs: tuple[Signal, ...],
               layout: str = "auto", cap: int = DENSE_CAP) -> GramOperator:
    """Assemble the Gram operator, choosing the factored layout when possible."""
    kernel = as_operator(kernel)
    inputs = tuple(inputs)
    if not inputs:
        raise ShapeError("need at least one center signal")
    grid = inputs[0].grid
    for u in inputs:
        if u.grid != grid:
            raise ShapeError("center signals must share one grid")
    if layout == "auto":
        layout = "kronecker" if isinstance(kernel, SeparableKernel) else "dense"
    if layout == "kronecker":
        if not isinstance(kernel, SeparableKernel):
            raise ShapeError("kronecker layout needs a separable kernel")
        from .kernels import eval_scalar

        n = len(inputs)
        scalar = np.empty((n, n))
        for i in range(n):
            for j in range(i, n):
                scalar[i, j] = scalar[j, i] = eval_scalar(kernel.scalar,
                                                          inputs[i], inputs[j])
        return GramOperator(kernel, inputs, "kronecker",
                            scalar_gram=scalar, R=kernel.R)
    if layout != "dense":
        raise ValueError(f"unknown gram layout {layout!r}")
    side = len(inputs) * grid.size * kernel.output_dim
    if side > cap:
        raise NumericalError(
            f"dense Gram side {side} exceeds cap {cap}; "
            f"use a separable kernel or raise the cap"
        )
    blocks = grid.size * kernel.output_dim
    G = np.empty((side, side))
    for i in range(len(inputs)):
        for j in range(i, len(inputs)):
            block = kernel.block_matrix(inputs[i], inputs[j])
            G[i * blocks:(i + 1) * blocks, j * blocks:(j + 1) * blocks] = block
            if i != j:
                G[j * blocks:(j + 1) * blocks, i * blocks:(i + 1) * blocks] = block.T
    scale = max(1.0, float(np.abs(G).max()))
    if np.abs(G - G.T).max() > 1e-10 * scale:
        raise NumericalError("assembled Gram matrix is not symmetric")
    return GramOperator(kernel, inputs, "dense", dense=G)


def _solve(gram: GramOperator, targets: np.ndarray, gamma: float) -> np.ndarray:
    """Solve (G + gamma I) c = targets with targets shaped (n, steps, p)."""
    if gram.layout == "dense":
        A = gram.dense + gamma * np.eye(gram.dim)
        try:
            factor = cho_factor(A)
        except np.linalg.LinAlgError:
            min_eig = float(np.linalg.eigvalsh(gram.dense).min())
            raise NumericalError(
                f"G + gamma I is not positive definite "
                f"(min Gram eigenvalue {min_eig:.6e}, gamma {gamma:.6e})"
            ) from None
        return cho_solve(factor, targets.reshape(-1)).reshape(targets.shape)
    lam, Q = np.linalg.eigh(gram.scalar_gram)
    mu, U = np.linalg.eigh(gram.R)
    denom = lam[:, None] * mu[None, :] + gamma
    if denom.min() <= 0:
        raise NumericalError(
            f"G + gamma I is not positive definite "
            f"(min Gram eigenvalue {float((lam[:, None] * mu).min()):.6e}, "
            f"gamma {gamma:.6e})"
        )
    work = np.einsum("ji,jtb->itb", Q, targets)
    work = np.einsum("itb,ba->ita", work, U)
    work = work / denom[:, None, :]
    work = np.einsum("ji,ita->jta", Q, work)
    return np.einsum("jta,ba->jtb", work, U)


@dataclass(frozen=True, eq=False)
class FittedOperator:
    """Kernel expansion H(u) = sum_j K(u, u_j) c_j from a regularized fit."""

    kernel: OperatorKernel
    centers: tuple[Signal, ...]
    coefficients: tuple[Signal, ...]
    gamma: float
    rkhs_norm: float

    @property
    def grid(self) -> TimeGrid:
        return self.centers[0].grid

    @property
    def input_dim(self) -> int:
        return self.centers[0].dim

    @property
    def output_dim(self) -> int:
        return self.kernel.output_dim


def _model_from_solution(kernel, data: Dataset, coeff: np.ndarray,
                         gram: GramOperator, gamma: float) -> FittedOperator:
    targets = _stack(data.outputs)
    residual = gram.apply(coeff) + gamma * coeff - targets
    rel = np.linalg.norm(residual) / max(np.linalg.norm(targets), 1e-300)
    if np.linalg.norm(targets) > 0 and rel > 1e-10:
        raise NumericalError(f"fit residual {rel:.3e} exceeds 1e-10")
    sq = max(gram.quad(coeff), 0.0)
    coeff_signals = tuple(Signal(data.grid, coeff[j]) for j in range(data.n))
    return FittedOperator(gram.kernel, data.inputs, coeff_signals,
                          float(gamma), math.sqrt(sq))


def fit(kernel: OperatorKernel, data: Dataset, gamma: float,
        layout: str = "auto") -> FittedOperator:
    """Regularized least-squares fit of an operator to the dataset.

    Parameters
    ----------
    kernel : operator kernel whose output dim matches the data outputs.
    data : paired trajectories on one grid.
    gamma : regularization weight, must be positive.
    layout : Gram layout, "auto" picks the factored path when available.
    """
    kernel = as_operator(kernel)
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if kernel.output_dim != data.output_dim:
        raise ShapeError(
            f"kernel output dim {kernel.output_dim} != data {data.output_dim}"
        )
    gram = build_gram(kernel, data.inputs, layout)
    coeff = _solve(gram, _stack(data.outputs), gamma)
    return _model_from_solution(kernel, data, coeff, gram, gamma)


def values_evaluator(model: FittedOperator) -> Callable[[np.ndarray], np.ndarray]:
    """Array-level evaluator u_values -> y_values, precompiled for tight loops."""
    kernel = model.kernel
    centers = _stack(model.centers)
    coeff = _stack(model.coefficients)
    if isinstance(kernel, SeparableKernel):
        from .kernels import _scalar_batch

        spec, R = kernel.scalar, kernel.R

        def run(uvals: np.ndarray) -> np.ndarray:
            k = _scalar_batch(spec, centers, uvals)
            return np.einsum("j,jtb->tb", k, coeff) @ R.T

        return run

    grid = model.grid

    def run_general(uvals: np.ndarray) -> np.ndarray:
        u = Signal(grid, uvals)
        out = np.zeros((grid.size, model.output_dim))
        for center, cj in zip(model.centers, model.coefficients):
            out += kernel.apply(u, center, cj).values
        return out

    return run_general


def evaluate(model: FittedOperator, u: Signal) -> Signal:
    """Evaluate the fitted operator at a new input signal."""
    if u.grid != model.grid:
        raise ShapeError("input grid differs from the training grid")
    if u.dim != model.input_dim:
        raise ShapeError(f"expected {model.input_dim} input channels, got {u.dim}")
    return Signal(u.grid, values_evaluator(model)(u.values))


def rkhs_norm(model: FittedOperator) -> float:
    """Recompute sqrt(<c, G c>) from scratch."""
    gram = build_gram(model.kernel, model.centers)
    return math.sqrt(max(gram.quad(_stack(model.coefficients)), 0.0))


def empirical_risk(model: FittedOperator, data: Dataset) -> float:
    """Sum of squared output misfits over the dataset."""
    return sum(norm(y - evaluate(model, u)) ** 2
               for u, y in zip(data.inputs, data.outputs))


class _NormCurve:
    """gamma -> rkhs norm of the fit, via the Gram eigendecomposition."""

    def __init__(self, gram: GramOperator, targets: np.ndarray):
        if gram.layout == "dense":
            lam, V = np.linalg.eigh(gram.dense)
            weight = (V.T @ targets.reshape(-1)) ** 2
        else:
            lam_s, Q = np.linalg.eigh(gram.scalar_gram)
            mu, U = np.linalg.eigh(gram.R)
            work = np.einsum("ji,jtb->itb", Q, targets)
            work = np.einsum("itb,ba->ita", work, U)
            lam = (lam_s[:, None, None]
                   * np.ones((1, targets.shape[1], 1))
                   * mu[None, None, :]).reshape(-1)
            weight = (work ** 2).reshape(-1)
        self.lam = np.clip(lam, 0.0, None)
        self.weight = weight

    def __call__(self, gamma: float) -> float:
        return math.sqrt(float(
            (self.lam * self.weight / (self.lam + gamma) ** 2).sum()
        ))


def tune_gamma(kernel: OperatorKernel, data: Dataset, rho: float,
               layout: str = "auto", rel_tol: float = 1e-3,
               max_iter: int = 200) -> tuple[float, FittedOperator]:
    """Find the smallest gamma whose fit has rkhs norm at most rho.

    Bisection on log gamma against the monotone norm curve; the returned fit
    always satisfies norm <= rho, and sits within rel_tol of the crossing
    unless the target is reachable for every gamma.
    """
    kernel = as_operator(kernel)
    if not 0 < rho <= 1:
        raise ValueError(f"norm target rho must be in (0, 1], got {rho}")
    gram = build_gram(kernel, data.inputs, layout)
    targets = _stack(data.outputs)

    def finish(gamma: float) -> tuple[float, FittedOperator]:
        coeff = _solve(gram, targets, gamma)
        return gamma, _model_from_solution(kernel, data, coeff, gram, gamma)

    gamma0 = max(gram.trace() / gram.dim, 1e-300)
    if np.linalg.norm(targets) == 0:
        return finish(gamma0)
    curve = _NormCurve(gram, targets)

    if curve(gamma0) > rho:
        lo = hi = gamma0
        for _ in range(max_iter):
            hi *= 2.0
            if curve(hi) <= rho:
                break
            lo = hi
        else:
            raise ConvergenceError("norm target not reached while growing gamma")
    else:
        hi = gamma0
        lo = None
        prev = curve(gamma0)
        for _ in range(max_iter):
            g = hi / 2.0
            value = curve(g)
            if value > rho:
                lo = g
                break
            # Plateau means the norm stays below rho down to gamma -> 0,
            # so every gamma meets the target; keep the smallest probed.
            if abs(value - prev) <= 1e-9 * rho:
                return finish(g)
            hi, prev = g, value
        if lo is None:
            return finish(hi)

    for _ in range(max_iter):
        tight = (hi - lo) <= rel_tol * hi
        close = curve(hi) >= rho * (1.0 - rel_tol)
        if tight and close:
            break
        mid = math.sqrt(lo * hi)
        if curve(mid) > rho:
            lo = mid
        else:
            hi = mid
    return finish(hi)


def save_fitted(model: FittedOperator, directory: str | Path,
                extra: dict | None = None) -> Path:
    """Write the model as a JSON manifest plus CSV trajectories."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "format": "iqcfit-model",
        "kernel": kernel_to_json(model.kernel),
        "gamma": model.gamma,
        "rkhs_norm": model.rkhs_norm,
        "tau": model.grid.tau,
        "dt": model.grid.dt,
        "m": model.input_dim,
        "p": model.output_dim,
        "n": len(model.centers),
        "extra": extra or {},
    }
    gram = build_gram(model.kernel, model.centers)
    coeff = _stack(model.coefficients)
    targets = gram.apply(coeff) + model.gamma * coeff
    for i, (u, c) in enumerate(zip(model.centers, model.coefficients)):
        write_signal(u, directory / f"center_{i:03d}.csv")
        write_signal(c, directory / f"coeff_{i:03d}.csv")
        write_signal(Signal(model.grid, targets[i]), directory / f"target_{i:03d}.csv")
    path = directory / "model.json"
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def load_fitted(location: str | Path) -> FittedOperator:
    """Load a model bundle, re-verifying the fit and its stored norm."""
    location = Path(location)
    path = location / "model.json" if location.is_dir() else location
    meta = json.loads(path.read_text())
    if meta.get("format") != "iqcfit-model":
        raise ValueError(f"{path}: not a model bundle")
    base = path.parent
    kernel = kernel_from_json(meta["kernel"])
    dt = float(meta["dt"])
    centers, coeffs, targets = [], [], []
    for i in range(int(meta["n"])):
        centers.append(read_signal(base / f"center_{i:03d}.csv", dt=dt))
        coeffs.append(read_signal(base / f"coeff_{i:03d}.csv", dt=dt))
        targets.append(read_signal(base / f"target_{i:03d}.csv", dt=dt))
    gamma = float(meta["gamma"])
    gram = build_gram(kernel, tuple(centers))
    coeff = _stack(tuple(coeffs))
    ybar = _stack(tuple(targets))
    residual = gram.apply(coeff) + gamma * coeff - ybar
    rel = np.linalg.norm(residual) / max(np.linalg.norm(ybar), 1e-300)
    if np.linalg.norm(ybar) > 0 and rel > 1e-10:
        raise NumericalError(f"{path}: stored fit violates its linear system "
                             f"(relative residual {rel:.3e})")
    nrm = math.sqrt(max(gram.quad(coeff), 0.0))
    if abs(nrm - float(meta["rkhs_norm"])) > 1e-6 * max(1.0, nrm):
        raise NumericalError(
            f"{path}: stored norm {meta['rkhs_norm']} != recomputed {nrm}"
        )
    return FittedOperator(kernel, tuple(centers), tuple(coeffs), gamma, nrm)
