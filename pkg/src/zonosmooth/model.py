"""System definitions and seeded ground-truth simulation.

Two model classes are supported:

* :class:`LinearSystem` -- ``x[k+1] = Phi x[k] + Gamma w[k]``,
  ``y[k] = Xi x[k] + Psi v[k]`` with constrained-zonotope noise and initial
  ranges.  Matrices are either constant or given per time step as a stacked
  ``(T, rows, cols)`` array / list.
* :class:`ScalarAffineSystem` -- ``x[k+1] = eta(x[k]) + w[k]``,
  ``y[k] = alpha x[k] + v[k]`` with interval ranges and monotone ``eta``.

Simulation draws noises uniformly in their ranges.  Every trial gets its own
Philox stream keyed by ``(seed, trial)``, so trials can run in any order or
in parallel and still replay bit-exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cz import ConstrainedZonotope, IntervalBox, contains_point, interval_hull
from .errors import InconsistentDataError
from .interval1d import Interval, MonotoneMap

__all__ = [
    "LinearSystem",
    "ScalarAffineSystem",
    "Trajectory",
    "UnsupportedConfigurationError",
    "InconsistentDataError",
    "trial_rng",
    "simulate_linear",
    "simulate_scalar",
    "planar_benchmark",
    "cube_root_benchmark",
    "write_trajectory_csv",
    "CSV_HEADER",
]

CSV_HEADER = "# zonosmooth-csv v1"


class UnsupportedConfigurationError(ValueError):
    pass


def trial_rng(seed: int, trial: int = 0) -> np.random.Generator:
    """Independent counter-based stream for one Monte-Carlo trial."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(trial)])))


def _stack(m):
    a = np.asarray(m, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim not in (2, 3):
        raise ValueError(f"system matrix must be 2-D or a stack of 2-D matrices, got shape {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class LinearSystem:
    Phi: np.ndarray
    Gamma: np.ndarray
    Xi: np.ndarray
    Psi: np.ndarray
    w_range: ConstrainedZonotope
    v_range: ConstrainedZonotope
    x0_range: ConstrainedZonotope

    def __post_init__(self):
        for name in ("Phi", "Gamma", "Xi", "Psi"):
            object.__setattr__(self, name, _stack(getattr(self, name)))
        Phi, Gamma, Xi, Psi = self.matrices(0)
        n, p, m, q = Phi.shape[0], Gamma.shape[1], Xi.shape[0], Psi.shape[1]
        shapes = {"Phi": (n, n), "Gamma": (n, p), "Xi": (m, n), "Psi": (m, q)}
        for name, want in shapes.items():
            got = getattr(self, name).shape[-2:]
            if got != want:
                raise ValueError(f"{name} has shape {got}, expected {want}")
        for name, rng_, d in (("w_range", self.w_range, p), ("v_range", self.v_range, q), ("x0_range", self.x0_range, n)):
            if rng_.dim != d:
                raise ValueError(f"{name} has dimension {rng_.dim}, expected {d}")

    @property
    def n(self) -> int:
        return self.Phi.shape[-1]

    @property
    def m(self) -> int:
        return self.Xi.shape[-2]

    @property
    def time_varying(self) -> bool:
        return any(getattr(self, k).ndim == 3 for k in ("Phi", "Gamma", "Xi", "Psi"))

    def matrices(self, k: int):
        """``(Phi, Gamma, Xi, Psi)`` in effect at step ``k``.

        Per-step tables must cover ``k = 0..T`` (the measurement at ``T``
        uses ``Xi``/``Psi`` of step ``T``).
        """
        out = []
        for name in ("Phi", "Gamma", "Xi", "Psi"):
            a = getattr(self, name)
            if a.ndim == 3:
                if k >= a.shape[0]:
                    raise IndexError(f"{name} table has {a.shape[0]} steps, asked for k={k}")
                a = a[k]
            out.append(a)
        return tuple(out)


@dataclass(frozen=True, eq=False)
class ScalarAffineSystem:
    eta: MonotoneMap
    meas_gain: float
    w_range: Interval
    v_range: Interval
    x0_range: Interval

    def __post_init__(self):
        if self.meas_gain == 0 or not math.isfinite(self.meas_gain):
            raise ValueError("measurement gain must be finite and nonzero")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States ``x[0..T]``, measurements ``y[0..T]`` and the noises that produced them."""

    states: np.ndarray
    measurements: np.ndarray
    seed: int
    trial: int = 0
    process_noise: np.ndarray = field(default=None, repr=False)
    measurement_noise: np.ndarray = field(default=None, repr=False)

    @property
    def T(self) -> int:
        return self.states.shape[0] - 1


def _box_of(Z: ConstrainedZonotope, what: str) -> IntervalBox:
    if not Z.is_bounded_box:
        raise UnsupportedConfigurationError(f"{what} must be a bounded axis-aligned box for simulation")
    half = np.abs(Z.G) @ Z.h
    return IntervalBox(Z.c - half, Z.c + half)


def _uniform(rng, box: IntervalBox):
    return box.lower + (box.upper - box.lower) * rng.random(box.dim)


def _draw_initial(rng, Z: ConstrainedZonotope, max_tries=10_000):
    if Z.is_bounded_box:
        return _uniform(rng, _box_of(Z, "x0_range"))
    hull = interval_hull(Z)
    if not np.all(np.isfinite(hull.widths)):
        raise UnsupportedConfigurationError("x0_range must be bounded for simulation")
    for _ in range(max_tries):
        x = _uniform(rng, hull)
        if contains_point(Z, x):
            return x
    raise UnsupportedConfigurationError("could not draw an initial state from x0_range by rejection")


def simulate_linear(sys: LinearSystem, T: int, seed: int, trial: int = 0) -> Trajectory:
    if T < 0:
        raise ValueError("horizon must be nonnegative")
    w_box = _box_of(sys.w_range, "w_range")
    v_box = _box_of(sys.v_range, "v_range")
    rng = trial_rng(seed, trial)
    x = _draw_initial(rng, sys.x0_range)
    xs, ys, ws, vs = [], [], [], []
    for k in range(T + 1):
        Phi, Gamma, Xi, Psi = sys.matrices(k)
        v = _uniform(rng, v_box)
        xs.append(x)
        ys.append(Xi @ x + Psi @ v)
        vs.append(v)
        if k < T:
            w = _uniform(rng, w_box)
            ws.append(w)
            x = Phi @ x + Gamma @ w
    return Trajectory(
        np.asarray(xs), np.asarray(ys), seed, trial,
        np.asarray(ws, dtype=float).reshape(T, sys.Gamma.shape[-1]), np.asarray(vs),
    )


def simulate_scalar(sys: ScalarAffineSystem, T: int, seed: int, trial: int = 0) -> Trajectory:
    if T < 0:
        raise ValueError("horizon must be nonnegative")
    rng = trial_rng(seed, trial)

    def draw(iv):
        return iv.a + (iv.b - iv.a) * rng.random()

    x = draw(sys.x0_range)
    xs, ys, ws, vs = [], [], [], []
    for k in range(T + 1):
        v = draw(sys.v_range)
        xs.append(x)
        ys.append(sys.meas_gain * x + v)
        vs.append(v)
        if k < T:
            w = draw(sys.w_range)
            ws.append(w)
            x = sys.eta(x) + w
    return Trajectory(
        np.asarray(xs).reshape(-1, 1), np.asarray(ys).reshape(-1, 1), seed, trial,
        np.asarray(ws).reshape(-1, 1), np.asarray(vs).reshape(-1, 1),
    )


def planar_benchmark(x0_range: ConstrainedZonotope | None = None) -> LinearSystem:
    """Two-state rotation-like system with scalar process noise and two sensors.

    Noise ranges are ``w in [-1, 1]`` and ``v in [-1, 1]^2``; the initial range
    defaults to ``[-1, 1]^2``.
    """
    s, c = math.sin(1.0), math.cos(1.0)
    return LinearSystem(
        Phi=np.array([[s, c], [-c, s]]),
        Gamma=np.array([[0.5], [1.0]]),
        Xi=np.array([[0.5, 0.5], [1.0, 0.3]]),
        Psi=np.eye(2),
        w_range=ConstrainedZonotope.from_box([-1.0], [1.0]),
        v_range=ConstrainedZonotope.from_box([-1.0, -1.0], [1.0, 1.0]),
        x0_range=x0_range if x0_range is not None else ConstrainedZonotope.from_box([-1.0, -1.0], [1.0, 1.0]),
    )


def _cube_root_drift(x: float) -> float:
    # real (odd) cube root, so the map is defined on the whole line
    return float(np.cbrt(x)) + x


def cube_root_benchmark(x0_range: Interval | None = None) -> ScalarAffineSystem:
    """``x+ = cbrt(x) + x + w``, ``y = 2x + v`` with ``w in [-1, 1]``, ``v in [1, 3]``."""
    return ScalarAffineSystem(
        eta=MonotoneMap(_cube_root_drift, name="cbrt(x) + x"),
        meas_gain=2.0,
        w_range=Interval(-1.0, 1.0),
        v_range=Interval(1.0, 3.0),
        x0_range=x0_range if x0_range is not None else Interval(-1.0, 1.0),
    )


def write_trajectory_csv(traj: Trajectory, path) -> Path:
    """Columns ``k, x1..xn, y1..ym`` after a version comment line."""
    path = Path(path)
    n, m = traj.states.shape[1], traj.measurements.shape[1]
    with path.open("w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k"] + [f"x{i + 1}" for i in range(n)] + [f"y{i + 1}" for i in range(m)])
        for k in range(traj.states.shape[0]):
            w.writerow([k] + [repr(float(v)) for v in traj.states[k]] + [repr(float(v)) for v in traj.measurements[k]])
    return path
