"""Operator-valued kernels on signal spaces, with structural certificates.

A kernel maps a pair of input trajectories to a linear map on the output
space.  Certificates for nonexpansiveness, boundedness, and causality are
granted by structural rules only; the numeric sweeps in this module can find
violations but never promote "unknown" to "proven".
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.linalg import block_diag

from .errors import ShapeError
from .signals import Signal, inner_product, norm, truncate

PROVEN = "proven"
UNKNOWN = "unknown"

SCALAR_KINDS = (
    "bilinear",
    "polynomial",
    "gaussian",
    "laplacian",
    "scaled_laplacian",
    "inverse_power",
    "stable_spline",
)


@dataclass(frozen=True)
class ScalarKernelSpec:
    """One scalar kernel from the catalog, identified by kind plus parameters."""

    kind: str
    sigma: float | None = None
    c: float | None = None
    d: float | None = None
    beta: float | None = None

    def __post_init__(self):
        if self.kind not in SCALAR_KINDS:
            raise ValueError(f"unknown scalar kernel kind {self.kind!r}")
        if self.kind in ("gaussian", "laplacian"):
            if self.sigma is None or self.sigma <= 0:
                raise ValueError(f"{self.kind} kernel needs sigma > 0")
        if self.kind == "polynomial":
            if self.c is None or self.c < 0:
                raise ValueError("polynomial kernel needs offset c >= 0")
            if self.d is None or self.d != int(self.d) or self.d < 1:
                raise ValueError("polynomial kernel needs integer degree d >= 1")
        if self.kind == "inverse_power":
            # c = 0 would make k(u, u) singular
            if self.c is None or self.c <= 0:
                raise ValueError("inverse power kernel needs offset c > 0")
            if self.d is None or self.d <= 0:
                raise ValueError("inverse power kernel needs exponent d > 0")
        if self.kind == "stable_spline":
            if self.beta is None or self.beta <= 0:
                raise ValueError("stable spline kernel needs beta > 0")


def bilinear() -> ScalarKernelSpec:
    return ScalarKernelSpec("bilinear")


def polynomial(c: float, d: int) -> ScalarKernelSpec:
    return ScalarKernelSpec("polynomial", c=float(c), d=float(d))


def gaussian(sigma: float) -> ScalarKernelSpec:
    return ScalarKernelSpec("gaussian", sigma=float(sigma))


def laplacian(sigma: float) -> ScalarKernelSpec:
    return ScalarKernelSpec("laplacian", sigma=float(sigma))


def scaled_laplacian() -> ScalarKernelSpec:
    return ScalarKernelSpec("scaled_laplacian")


def inverse_power(c: float, d: float) -> ScalarKernelSpec:
    return ScalarKernelSpec("inverse_power", c=float(c), d=float(d))


def stable_spline(beta: float) -> ScalarKernelSpec:
    return ScalarKernelSpec("stable_spline", beta=float(beta))


def _spline_point(u: Signal) -> float:
    if u.grid.tau != 0 or u.dim != 1:
        raise ShapeError("stable spline kernel acts on scalar single-sample signals")
    x = float(u.values[0, 0])
    if x < 0:
        raise ValueError("stable spline kernel needs nonnegative arguments")
    return x


def eval_scalar(spec: ScalarKernelSpec, u: Signal, v: Signal) -> float:
    """Evaluate one catalog kernel at a pair of signals."""
    kind = spec.kind
    if kind == "bilinear":
        return inner_product(u, v)
    if kind == "polynomial":
        return (spec.c + inner_product(u, v)) ** spec.d
    if kind == "gaussian":
        return math.exp(-norm(u - v) ** 2 / spec.sigma**2)
    if kind == "laplacian":
        return math.exp(-norm(u - v) / spec.sigma)
    if kind == "scaled_laplacian":
        r = norm(u - v)
        return (1.0 + r) * math.exp(-r)
    if kind == "inverse_power":
        return (spec.c + norm(u - v) ** 2) ** (-spec.d)
    # stable_spline: defined on nonnegative scalars, decays in the later argument
    return math.exp(-spec.beta * max(_spline_point(u), _spline_point(v)))


def _scalar_batch(spec: ScalarKernelSpec, centers: np.ndarray,
                  uvals: np.ndarray) -> np.ndarray:
    """Evaluate one scalar kernel against stacked centers (n, steps, dim)."""
    kind = spec.kind
    if kind in ("bilinear", "polynomial"):
        ips = np.einsum("jtc,tc->j", centers, uvals)
        return ips if kind == "bilinear" else (spec.c + ips) ** spec.d
    if kind == "stable_spline":
        top = np.maximum(centers[:, 0, 0], uvals[0, 0])
        return np.exp(-spec.beta * top)
    diff = centers - uvals[None]
    r2 = np.einsum("jtc,jtc->j", diff, diff)
    if kind == "gaussian":
        return np.exp(-r2 / spec.sigma**2)
    if kind == "laplacian":
        return np.exp(-np.sqrt(r2) / spec.sigma)
    if kind == "scaled_laplacian":
        r = np.sqrt(r2)
        return (1.0 + r) * np.exp(-r)
    assert kind == "inverse_power"
    return (spec.c + r2) ** (-spec.d)


def _scalar_nonexpansive(spec: ScalarKernelSpec) -> bool:
    """Structural rules granting the increment bound for scalar kernels."""
    if spec.kind == "bilinear":
        return True
    if spec.kind == "gaussian":
        return spec.sigma >= math.sqrt(2.0)
    if spec.kind == "scaled_laplacian":
        return True
    if spec.kind == "inverse_power":
        return 2.0 * spec.d <= spec.c ** (spec.d + 1.0)
    return False


def _spectral_norm_sym(a: np.ndarray) -> float:
    return float(np.abs(np.linalg.eigvalsh(a)).max()) if a.size else 0.0


def _frozen_matrix(r, name: str, square: int | None = None) -> np.ndarray:
    arr = np.asarray(r, dtype=float).copy()
    if arr.ndim != 2 or (square is not None and arr.shape != (square, square)):
        raise ShapeError(f"{name} must be a square 2-d matrix, got shape {arr.shape}")
    if arr.shape[0] != arr.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


class OperatorKernel(ABC):
    """Common interface: per-sample matrices, certificates, Gram blocks."""

    @property
    @abstractmethod
    def output_dim(self) -> int: ...

    @property
    @abstractmethod
    def is_causal(self) -> bool: ...

    @property
    def is_uniform(self) -> bool:
        """True when K(u, v) acts by a single matrix on every sample."""
        return False

    @abstractmethod
    def matrix_at(self, t: int, u: Signal, v: Signal) -> np.ndarray:
        """Matrix acting on output sample t of K(u, v)."""

    def matrix(self, u: Signal, v: Signal) -> np.ndarray:
        if not self.is_uniform:
            raise ShapeError("kernel acts differently per sample; use matrix_at")
        return self.matrix_at(0, u, v)

    def apply(self, u: Signal, v: Signal, y: Signal) -> Signal:
        """Evaluate K(u, v) on an output-space signal y."""
        if y.dim != self.output_dim:
            raise ShapeError(f"expected {self.output_dim} channels, got {y.dim}")
        if self.is_uniform:
            return Signal(y.grid, y.values @ self.matrix(u, v).T)
        out = np.empty_like(y.values)
        for t in range(y.grid.size):
            out[t] = self.matrix_at(t, u, v) @ y.values[t]
        return Signal(y.grid, out)

    def block_matrix(self, u: Signal, v: Signal) -> np.ndarray:
        """Dense matrix of K(u, v) on the flattened output space."""
        steps = u.grid.size
        if self.is_uniform:
            return np.kron(np.eye(steps), self.matrix(u, v))
        return block_diag(*(self.matrix_at(t, u, v) for t in range(steps)))

    def second_difference_norm(self, u: Signal, v: Signal) -> float:
        """Operator norm of K(u,u) - K(u,v) - K(v,u) + K(v,v)."""
        def diff(t):
            return (self.matrix_at(t, u, u) - self.matrix_at(t, u, v)
                    - self.matrix_at(t, v, u) + self.matrix_at(t, v, v))
        if self.is_uniform:
            return _spectral_norm_sym(diff(0))
        return max(_spectral_norm_sym(diff(t)) for t in range(u.grid.size))

    def diag_operator_norm(self, u: Signal) -> float:
        """Operator norm of K(u, u)."""
        if self.is_uniform:
            return _spectral_norm_sym(self.matrix_at(0, u, u))
        return max(_spectral_norm_sym(self.matrix_at(t, u, u))
                   for t in range(u.grid.size))


@dataclass(frozen=True, eq=False)
class SeparableKernel(OperatorKernel):
    """Scalar kernel times a fixed symmetric positive semidefinite matrix."""

    scalar: ScalarKernelSpec
    R: np.ndarray

    def __post_init__(self):
        R = _frozen_matrix(self.R, "R")
        if np.abs(R - R.T).max() > 1e-12 * max(1.0, np.abs(R).max()):
            raise ShapeError("separable kernel matrix must be symmetric")
        eig = np.linalg.eigvalsh(R)
        if eig.min() < -1e-12 * max(1.0, np.abs(eig).max()):
            raise ValueError(f"separable kernel matrix has eigenvalue {eig.min():.3e} < 0")
        object.__setattr__(self, "R", R)

    @property
    def output_dim(self) -> int:
        return self.R.shape[0]

    @property
    def is_causal(self) -> bool:
        return False

    @property
    def is_uniform(self) -> bool:
        return True

    def matrix_at(self, t: int, u: Signal, v: Signal) -> np.ndarray:
        return eval_scalar(self.scalar, u, v) * self.R

    def second_difference_norm(self, u: Signal, v: Signal) -> float:
        # |k(u,u) - 2k(u,v) + k(v,v)| times the norm of R, computed exactly.
        duu = eval_scalar(self.scalar, u, u)
        duv = eval_scalar(self.scalar, u, v)
        dvv = eval_scalar(self.scalar, v, v)
        return abs(duu - 2.0 * duv + dvv) * _spectral_norm_sym(self.R)


@dataclass(frozen=True, eq=False)
class SumKernel(OperatorKernel):
    """Nonnegative combination sum_i alpha_i K_i of kernels with equal output dim."""

    weights: tuple[float, ...]
    children: tuple[OperatorKernel, ...]

    def __post_init__(self):
        weights = tuple(float(w) for w in self.weights)
        children = tuple(self.children)
        if len(weights) != len(children) or not children:
            raise ShapeError("need one weight per child kernel")
        if any(w < 0 for w in weights):
            raise ValueError("sum kernel weights must be nonnegative")
        dims = {child.output_dim for child in children}
        if len(dims) != 1:
            raise ShapeError(f"children disagree on output dim: {sorted(dims)}")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "children", children)

    @property
    def output_dim(self) -> int:
        return self.children[0].output_dim

    @property
    def is_causal(self) -> bool:
        return all(child.is_causal for child in self.children)

    @property
    def is_uniform(self) -> bool:
        return all(child.is_uniform for child in self.children)

    def matrix_at(self, t: int, u: Signal, v: Signal) -> np.ndarray:
        return sum(w * child.matrix_at(t, u, v)
                   for w, child in zip(self.weights, self.children))


@dataclass(frozen=True, eq=False)
class ConjugatedKernel(OperatorKernel):
    """Scalar kernel conjugated by a fixed matrix: K(u, v) = R L(u, v) R'."""

    scalar: ScalarKernelSpec
    R: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "R", _frozen_matrix(self.R, "R"))

    @property
    def output_dim(self) -> int:
        return self.R.shape[0]

    @property
    def is_causal(self) -> bool:
        return False

    @property
    def is_uniform(self) -> bool:
        return True

    def matrix_at(self, t: int, u: Signal, v: Signal) -> np.ndarray:
        return eval_scalar(self.scalar, u, v) * (self.R @ self.R.T)


@dataclass(frozen=True, eq=False)
class CausalDiagonalKernel(OperatorKernel):
    """Samplewise kernel acting on truncated pasts: sample t of K(u, v) y is
    K_t(u restricted to [0, t], v restricted to [0, t]) applied to y(t)."""

    children: Union[OperatorKernel, tuple[OperatorKernel, ...]]

    def __post_init__(self):
        children = self.children
        if isinstance(children, OperatorKernel):
            per_time = (children,)
            shared = True
        else:
            per_time = tuple(children)
            shared = False
            if not per_time:
                raise ShapeError("need at least one per-sample child kernel")
        dims = {child.output_dim for child in per_time}
        if len(dims) != 1:
            raise ShapeError(f"children disagree on output dim: {sorted(dims)}")
        for child in per_time:
            if not child.is_uniform:
                raise ShapeError("per-sample children must act by a single matrix")
        object.__setattr__(self, "children", per_time[0] if shared else per_time)

    def _child(self, t: int) -> OperatorKernel:
        if isinstance(self.children, OperatorKernel):
            return self.children
        if t >= len(self.children):
            raise ShapeError(
                f"kernel has {len(self.children)} per-sample children, "
                f"grid needs index {t}"
            )
        return self.children[t]

    @property
    def output_dim(self) -> int:
        child = self.children if isinstance(self.children, OperatorKernel) \
            else self.children[0]
        return child.output_dim

    @property
    def is_causal(self) -> bool:
        return True

    def matrix_at(self, t: int, u: Signal, v: Signal) -> np.ndarray:
        return self._child(t).matrix(truncate(u, t), truncate(v, t))


AnyKernel = Union[ScalarKernelSpec, OperatorKernel]


def as_operator(kernel: AnyKernel) -> OperatorKernel:
    """Wrap a scalar spec as a single-channel separable kernel."""
    if isinstance(kernel, ScalarKernelSpec):
        return SeparableKernel(kernel, np.eye(1))
    return kernel


def eval_operator(kernel: AnyKernel, u: Signal, v: Signal, y: Signal) -> Signal:
    return as_operator(kernel).apply(u, v, y)


def certify_nonexpansive(kernel: AnyKernel) -> str:
    """Structural nonexpansiveness certificate: "proven" or "unknown"."""
    k = as_operator(kernel)
    if isinstance(k, SeparableKernel):
        if _scalar_nonexpansive(k.scalar) and _spectral_norm_sym(k.R) <= 1.0:
            return PROVEN
        return UNKNOWN
    if isinstance(k, SumKernel):
        if (sum(k.weights) <= 1.0
                and all(certify_nonexpansive(c) == PROVEN for c in k.children)):
            return PROVEN
        return UNKNOWN
    if isinstance(k, ConjugatedKernel):
        if (_scalar_nonexpansive(k.scalar)
                and np.linalg.svd(k.R, compute_uv=False).max() <= 1.0):
            return PROVEN
        return UNKNOWN
    # Samplewise-on-pasts composition: no structural rule shipped, so the
    # certificate stays unknown even when every child is proven.
    return UNKNOWN


def certify_bounded(kernel: AnyKernel) -> str:
    """Certificate that ||K(u, u)||^(1/2) <= ||u|| for all u."""
    k = as_operator(kernel)
    if (isinstance(k, SeparableKernel) and k.scalar.kind == "bilinear"
            and _spectral_norm_sym(k.R) <= 1.0):
        return PROVEN
    return UNKNOWN


def nonexpansive_defect(kernel: AnyKernel, u: Signal, v: Signal) -> float:
    """Positive values witness a violation of the kernel increment bound."""
    k = as_operator(kernel)
    return k.second_difference_norm(u, v) - norm(u - v) ** 2


@dataclass(frozen=True)
class BoundedReport:
    max_defect: float
    worst_probe: int
    passed: bool


def check_bounded(kernel: AnyKernel, probes: list[Signal],
                  tol: float = 1e-10) -> BoundedReport:
    """Numeric sweep of ||K(u, u)||^(1/2) - ||u|| over probe signals."""
    k = as_operator(kernel)
    worst, arg = -np.inf, -1
    for idx, u in enumerate(probes):
        defect = math.sqrt(max(k.diag_operator_norm(u), 0.0)) - norm(u)
        if defect > worst:
            worst, arg = defect, idx
    return BoundedReport(float(worst), arg, bool(worst <= tol))


def is_causal(kernel: AnyKernel) -> bool:
    return as_operator(kernel).is_causal


def causal_check(kernel: AnyKernel, u: Signal, v: Signal, y: Signal, T: int) -> float:
    """Size of P_T K(u, v) y - P_T K(P_T u, v) y; zero for causal kernels."""
    k = as_operator(kernel)
    full = truncate(k.apply(u, v, y), T)
    cut = truncate(k.apply(truncate(u, T), v, y), T)
    return norm(full - cut)


@dataclass(frozen=True)
class GramReport:
    min_eigenvalue: float
    threshold: float
    passed: bool


def psd_report_from_matrix(G: np.ndarray) -> GramReport:
    eig = np.linalg.eigvalsh(np.asarray(G, dtype=float))
    scale = float(np.abs(eig).max()) if eig.size else 0.0
    threshold = 1e-8 * scale
    return GramReport(float(eig.min()), threshold, bool(eig.min() >= -threshold))


def gram_psd_check(kernel: AnyKernel, inputs: list[Signal]) -> GramReport:
    """Assemble the dense Gram matrix over the inputs and screen its spectrum."""
    from .rkhs import build_gram  # local import, rkhs depends on this module

    gram = build_gram(as_operator(kernel), tuple(inputs), layout="dense")
    return psd_report_from_matrix(gram.dense)


def _scalar_to_json(spec: ScalarKernelSpec) -> dict:
    out = {"kind": spec.kind}
    for field in ("sigma", "c", "d", "beta"):
        value = getattr(spec, field)
        if value is not None:
            out[field] = value
    return out


def _scalar_from_json(obj: dict) -> ScalarKernelSpec:
    return ScalarKernelSpec(
        obj["kind"],
        sigma=obj.get("sigma"),
        c=obj.get("c"),
        d=obj.get("d"),
        beta=obj.get("beta"),
    )


def _matrix_to_json(R: np.ndarray):
    if np.array_equal(R, np.eye(R.shape[0])):
        return "identity"
    return R.tolist()


def _matrix_from_json(obj, p: int | None) -> np.ndarray:
    if isinstance(obj, str):
        if obj != "identity":
            raise ValueError(f"unknown matrix shorthand {obj!r}")
        if p is None:
            raise ValueError("matrix shorthand 'identity' needs an explicit dim p")
        return np.eye(p)
    return np.array(obj, dtype=float)


def kernel_to_json(kernel: AnyKernel) -> dict:
    k = as_operator(kernel)
    if isinstance(k, SeparableKernel):
        return {"structure": "separable", "scalar": _scalar_to_json(k.scalar),
                "R": _matrix_to_json(k.R), "p": k.output_dim}
    if isinstance(k, SumKernel):
        return {"structure": "sum", "weights": list(k.weights),
                "children": [kernel_to_json(c) for c in k.children]}
    if isinstance(k, ConjugatedKernel):
        return {"structure": "conjugated", "scalar": _scalar_to_json(k.scalar),
                "R": _matrix_to_json(k.R), "p": k.output_dim}
    assert isinstance(k, CausalDiagonalKernel)
    if isinstance(k.children, OperatorKernel):
        return {"structure": "causal_diagonal", "child": kernel_to_json(k.children)}
    return {"structure": "causal_diagonal",
            "children": [kernel_to_json(c) for c in k.children]}


def kernel_from_json(obj: dict) -> OperatorKernel:
    """Rebuild a kernel from its JSON form; certificates are re-derived."""
    structure = obj.get("structure", "separable")
    if structure == "separable":
        R = _matrix_from_json(obj.get("R", "identity"), obj.get("p", 1))
        return SeparableKernel(_scalar_from_json(obj["scalar"]), R)
    if structure == "sum":
        return SumKernel(tuple(obj["weights"]),
                         tuple(kernel_from_json(c) for c in obj["children"]))
    if structure == "conjugated":
        R = _matrix_from_json(obj.get("R", "identity"), obj.get("p", 1))
        return ConjugatedKernel(_scalar_from_json(obj["scalar"]), R)
    if structure == "causal_diagonal":
        if "child" in obj:
            return CausalDiagonalKernel(kernel_from_json(obj["child"]))
        return CausalDiagonalKernel(tuple(kernel_from_json(c)
                                          for c in obj["children"]))
    raise ValueError(f"unknown kernel structure {structure!r}")
