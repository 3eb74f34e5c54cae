"""Sampled vector-valued signals on uniform time grids.

Everything downstream works with finite trajectories u : {0, ..., tau} -> R^d
under the plain sum inner product.  For densely sampled continuous records the
same operations can weight each term by the sampling period (optionally with
trapezoidal end correction) so that inner products approximate integrals.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeError

# Sample times in a CSV file must match j*dt to this absolute tolerance.
TIME_TOLERANCE = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_j = j*dt for j = 0, ..., tau."""

    tau: int
    dt: float = 1.0

    def __post_init__(self):
        if not isinstance(self.tau, int) or self.tau < 0:
            raise ShapeError(f"tau must be a nonnegative integer, got {self.tau!r}")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive and finite, got {self.dt!r}")

    @property
    def size(self) -> int:
        return self.tau + 1

    def times(self) -> np.ndarray:
        return np.arange(self.size) * self.dt


@dataclass(frozen=True, eq=False)
class Signal:
    """Immutable trajectory with samples stacked as a (tau+1, dim) array."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise ShapeError(f"signal values must be 1-d or 2-d, got ndim={arr.ndim}")
        if arr.shape[0] != self.grid.size:
            raise ShapeError(
                f"expected {self.grid.size} samples for tau={self.grid.tau}, "
                f"got {arr.shape[0]}"
            )
        if arr.shape[1] < 1:
            raise ShapeError("signal needs at least one channel")
        if not np.isfinite(arr).all():
            raise ValueError("signal contains non-finite samples")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __add__(self, other: "Signal") -> "Signal":
        _require_compatible(self, other)
        return Signal(self.grid, self.values + other.values)

    def __sub__(self, other: "Signal") -> "Signal":
        _require_compatible(self, other)
        return Signal(self.grid, self.values - other.values)

    def __mul__(self, scalar: float) -> "Signal":
        return Signal(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "Signal":
        return Signal(self.grid, -self.values)


def _require_compatible(f: Signal, g: Signal):
    if f.grid != g.grid:
        raise ShapeError(f"grids differ: {f.grid} vs {g.grid}")
    if f.dim != g.dim:
        raise ShapeError(f"channel counts differ: {f.dim} vs {g.dim}")


def zeros(grid: TimeGrid, dim: int = 1) -> Signal:
    return Signal(grid, np.zeros((grid.size, dim)))


def constant_signal(grid: TimeGrid, value: float, dim: int = 1) -> Signal:
    return Signal(grid, np.full((grid.size, dim), float(value)))


def random_signal(grid: TimeGrid, dim: int, rng: np.random.Generator,
                  scale: float = 1.0) -> Signal:
    """Gaussian samples, used for seeded probe generation."""
    return Signal(grid, scale * rng.standard_normal((grid.size, dim)))


def sample_weights(grid: TimeGrid, mode: str = "sequence",
                   trapezoid: bool = False, upto: int | None = None) -> np.ndarray:
    """Quadrature weights over samples 0..upto (defaults to the full grid).

    mode "sequence" weights every sample by 1; mode "sampled" weights by dt,
    with the first and last sample halved when trapezoid is set.
    """
    last = grid.tau if upto is None else upto
    if not 0 <= last <= grid.tau:
        raise ValueError(f"horizon index {last} outside 0..{grid.tau}")
    if mode == "sequence":
        if trapezoid:
            raise ValueError("trapezoid correction only applies to sampled mode")
        return np.ones(last + 1)
    if mode != "sampled":
        raise ValueError(f"unknown quadrature mode {mode!r}")
    w = np.full(last + 1, grid.dt)
    if trapezoid and last >= 1:
        w[0] *= 0.5
        w[-1] *= 0.5
    return w


def inner_product(f: Signal, g: Signal, mode: str = "sequence",
                  trapezoid: bool = False) -> float:
    _require_compatible(f, g)
    w = sample_weights(f.grid, mode, trapezoid)
    return float(np.einsum("t,tc,tc->", w, f.values, g.values))


def norm(f: Signal, mode: str = "sequence", trapezoid: bool = False) -> float:
    return math.sqrt(max(inner_product(f, f, mode, trapezoid), 0.0))


def truncate(f: Signal, T: int) -> Signal:
    """Zero every sample after index T, keeping the grid."""
    if not 0 <= T <= f.grid.tau:
        raise ValueError(f"truncation index {T} outside 0..{f.grid.tau}")
    out = f.values.copy()
    out[T + 1:] = 0.0
    return Signal(f.grid, out)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Paired input/output trajectories on one shared grid."""

    inputs: tuple[Signal, ...]
    outputs: tuple[Signal, ...]

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        if len(self.inputs) == 0 or len(self.inputs) != len(self.outputs):
            raise ShapeError(
                f"need matching nonempty input/output lists, got "
                f"{len(self.inputs)}/{len(self.outputs)}"
            )
        grid = self.inputs[0].grid
        m = self.inputs[0].dim
        p = self.outputs[0].dim
        for s in self.inputs + self.outputs:
            if s.grid != grid:
                raise ShapeError("all trajectories must share one grid")
        for s in self.inputs:
            if s.dim != m:
                raise ShapeError("input channel counts differ across trajectories")
        for s in self.outputs:
            if s.dim != p:
                raise ShapeError("output channel counts differ across trajectories")

    @property
    def n(self) -> int:
        return len(self.inputs)

    @property
    def grid(self) -> TimeGrid:
        return self.inputs[0].grid

    @property
    def input_dim(self) -> int:
        return self.inputs[0].dim

    @property
    def output_dim(self) -> int:
        return self.outputs[0].dim


def write_signal(f: Signal, path: str | Path):
    """CSV with header t,ch1,...,chd and one row per sample."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"ch{k + 1}" for k in range(f.dim)])
        for j, t in enumerate(f.grid.times()):
            writer.writerow([f"{t:.17g}"] + [f"{x:.17g}" for x in f.values[j]])


def read_signal(path: str | Path, dt: float | None = None) -> Signal:
    """Read a trajectory CSV, validating the time column against j*dt."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0].strip() != "t":
        raise ValueError(f"{path}: first column must be named 't'")
    body = [r for r in rows[1:] if r]
    if not body:
        raise ValueError(f"{path}: no samples")
    data = np.array([[float(x) for x in r] for r in body])
    times, values = data[:, 0], data[:, 1:]
    if values.shape[1] < 1:
        raise ShapeError(f"{path}: no channel columns")
    if dt is None:
        if len(times) < 2:
            raise ValueError(f"{path}: cannot infer dt from a single row")
        dt = float(times[1] - times[0])
    grid = TimeGrid(len(times) - 1, dt)
    if np.abs(times - grid.times()).max() > TIME_TOLERANCE:
        raise ValueError(f"{path}: time column deviates from j*dt (dt={dt})")
    return Signal(grid, values)


def save_dataset(data: Dataset, directory: str | Path) -> Path:
    """Write one CSV per trajectory plus a JSON manifest; returns its path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    pairs = []
    for i, (u, y) in enumerate(zip(data.inputs, data.outputs)):
        uname, yname = f"u_{i:03d}.csv", f"y_{i:03d}.csv"
        write_signal(u, directory / uname)
        write_signal(y, directory / yname)
        pairs.append({"input": uname, "output": yname})
    manifest = {
        "m": data.input_dim,
        "p": data.output_dim,
        "dt": data.grid.dt,
        "tau": data.grid.tau,
        "pairs": pairs,
    }
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_dataset(location: str | Path) -> Dataset:
    """Load a dataset from a manifest path or the directory holding one."""
    location = Path(location)
    manifest_path = location / "manifest.json" if location.is_dir() else location
    meta = json.loads(manifest_path.read_text())
    base = manifest_path.parent
    dt = float(meta["dt"])
    inputs, outputs = [], []
    for pair in meta["pairs"]:
        u = read_signal(base / pair["input"], dt=dt)
        y = read_signal(base / pair["output"], dt=dt)
        inputs.append(u)
        outputs.append(y)
    data = Dataset(tuple(inputs), tuple(outputs))
    if data.input_dim != meta["m"] or data.output_dim != meta["p"]:
        raise ShapeError(
            f"{manifest_path}: manifest declares m={meta['m']}, p={meta['p']} "
            f"but files have m={data.input_dim}, p={data.output_dim}"
        )
    if data.grid.tau != meta["tau"]:
        raise ShapeError(f"{manifest_path}: manifest tau {meta['tau']} != {data.grid.tau}")
    return data
