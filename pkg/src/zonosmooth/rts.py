"""Kalman filter and Rauch-Tung-Striebel smoother baseline.

The stochastic baseline treats the bounded noises of a :class:`LinearSystem`
as Gaussian with scalar variance parameters ``q`` and ``r``:
process noise enters the state as ``Q = Gamma q Gamma^T`` and measurement
noise as ``R = r Psi Psi^T``.  Noise means default to zero.

Covariances and gains of a linear Kalman filter do not depend on the data, so
they are computed once per ``(system, horizon, config)`` and the means of many
trajectories are then propagated together as ``(trials, n)`` arrays.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg

from .model import CSV_HEADER, LinearSystem, simulate_linear

__all__ = [
    "RtsConfig",
    "GaussianEstimate",
    "KalmanResult",
    "SingularCovarianceError",
    "TuneResult",
    "kalman_filter",
    "rts_smooth",
    "smoothed_means",
    "tune_grid",
    "write_grid_csv",
]

log = logging.getLogger(__name__)

REGULARIZATION = 1e-12


class SingularCovarianceError(np.linalg.LinAlgError):
    """Innovation covariance not positive definite."""

    def __init__(self, msg, k=None):
        super().__init__(msg)
        self.k = k


@dataclass(frozen=True)
class RtsConfig:
    """Noise variances and the Gaussian prior of the baseline.

    Parameters
    ----------
    q, r : float
        Process and measurement noise variance scalars.
    P0, m0 : array_like, optional
        Initial covariance and mean; identity and zero when omitted.
    w_mean, v_mean : array_like, optional
        Noise means; zero when omitted.
    """

    q: float
    r: float
    P0: np.ndarray | None = None
    m0: np.ndarray | None = None
    w_mean: np.ndarray | None = None
    v_mean: np.ndarray | None = None

    def __post_init__(self):
        if not (self.q >= 0 and self.r >= 0):
            raise ValueError(f"q and r must be nonnegative, got q={self.q}, r={self.r}")
        if self.P0 is not None:
            P0 = np.atleast_2d(np.asarray(self.P0, dtype=float))
            if P0.shape[0] != P0.shape[1] or not np.allclose(P0, P0.T, atol=1e-12):
                raise ValueError("P0 must be a symmetric matrix")
            if np.min(np.linalg.eigvalsh(P0)) < -1e-12:
                raise ValueError("P0 must be positive semidefinite")
            object.__setattr__(self, "P0", P0)

    def prior(self, n: int):
        m0 = np.zeros(n) if self.m0 is None else np.asarray(self.m0, dtype=float).reshape(n)
        P0 = np.eye(n) if self.P0 is None else self.P0
        if P0.shape != (n, n):
            raise ValueError(f"P0 has shape {P0.shape}, expected {(n, n)}")
        return m0, P0

    def noise_means(self, p: int, q: int):
        w = np.zeros(p) if self.w_mean is None else np.asarray(self.w_mean, dtype=float).reshape(p)
        v = np.zeros(q) if self.v_mean is None else np.asarray(self.v_mean, dtype=float).reshape(q)
        return w, v


@dataclass(frozen=True)
class GaussianEstimate:
    mean: np.ndarray
    covariance: np.ndarray


@dataclass(frozen=True)
class KalmanResult:
    """``predicted[k]`` is the estimate of ``x[k]`` given ``y[0..k-1]``; ``filtered[k]`` adds ``y[k]``."""

    filtered: list
    predicted: list

    def __len__(self):
        return len(self.filtered)


def _sym(P):
    return 0.5 * (P + P.T)


@dataclass(frozen=True)
class _Gains:
    P_pred: list
    P_filt: list
    K: list
    C: list  # smoother gains, C[k] for k < T


def _gains(sys: LinearSystem, T: int, cfg: RtsConfig) -> _Gains:
    n = sys.n
    _, P = cfg.prior(n)
    P_pred, P_filt, K = [], [], []
    for k in range(T + 1):
        Phi, Gamma, Xi, Psi = sys.matrices(k)
        R = cfg.r * Psi @ Psi.T
        P_pred.append(P)
        S = _sym(Xi @ P @ Xi.T + R)
        try:
            cho = linalg.cho_factor(S)
        except linalg.LinAlgError:
            raise SingularCovarianceError(f"innovation covariance is singular at k={k}", k=k) from None
        Kk = linalg.cho_solve(cho, Xi @ P).T
        I_KH = np.eye(n) - Kk @ Xi
        # Joseph form keeps the update PSD under rounding
        Pf = _sym(I_KH @ P @ I_KH.T + Kk @ R @ Kk.T)
        K.append(Kk)
        P_filt.append(Pf)
        if k < T:
            P = _sym(Phi @ Pf @ Phi.T + cfg.q * Gamma @ Gamma.T)
    C = []
    for k in range(T):
        Phi = sys.matrices(k)[0]
        C.append(_smoother_gain(P_filt[k], Phi, P_pred[k + 1], k))
    return _Gains(P_pred, P_filt, K, C)


def _smoother_gain(Pf, Phi, P_next, k):
    try:
        cho = linalg.cho_factor(P_next)
    except linalg.LinAlgError:
        log.warning("predicted covariance singular at k=%d; regularizing with %.0e*I", k, REGULARIZATION)
        cho = linalg.cho_factor(P_next + REGULARIZATION * np.eye(P_next.shape[0]))
    # C = Pf Phi^T P_next^-1, with P_next symmetric
    return linalg.cho_solve(cho, Phi @ Pf).T


def _filter_means(sys, ys, cfg, g: _Gains):
    """Predicted and filtered means for ``ys`` of shape ``(trials, T+1, m)``."""
    trials, T1, _ = ys.shape
    n = sys.n
    m0, _ = cfg.prior(n)
    p, q = sys.Gamma.shape[-1], sys.Psi.shape[-1]
    w_mean, v_mean = cfg.noise_means(p, q)
    pred = np.empty((trials, T1, n))
    filt = np.empty((trials, T1, n))
    m = np.broadcast_to(m0, (trials, n)).copy()
    for k in range(T1):
        Phi, Gamma, Xi, Psi = sys.matrices(k)
        pred[:, k] = m
        innov = ys[:, k] - m @ Xi.T - Psi @ v_mean
        m = m + innov @ g.K[k].T
        filt[:, k] = m
        if k < T1 - 1:
            m = m @ Phi.T + Gamma @ w_mean
    return pred, filt


def _smooth_means(pred, filt, g: _Gains):
    sm = filt.copy()
    for k in range(filt.shape[1] - 2, -1, -1):
        sm[:, k] = filt[:, k] + (sm[:, k + 1] - pred[:, k + 1]) @ g.C[k].T
    return sm


def _as_batch(ys):
    ys = np.asarray(ys, dtype=float)
    if ys.ndim == 1:
        ys = ys.reshape(-1, 1)
    if ys.ndim == 2:
        ys = ys[None]
    return ys


def kalman_filter(sys: LinearSystem, ys, cfg: RtsConfig) -> KalmanResult:
    """Filtered and one-step predicted Gaussian estimates for ``y[0..T]``.

    Raises
    ------
    SingularCovarianceError
        If an innovation covariance is not positive definite (e.g. ``r = 0``
        with a singular predicted measurement covariance).
    """
    ys = _as_batch(ys)
    T = ys.shape[1] - 1
    g = _gains(sys, T, cfg)
    pred, filt = _filter_means(sys, ys, cfg, g)
    return KalmanResult(
        filtered=[GaussianEstimate(filt[0, k], g.P_filt[k]) for k in range(T + 1)],
        predicted=[GaussianEstimate(pred[0, k], g.P_pred[k]) for k in range(T + 1)],
    )


def rts_smooth(kf: KalmanResult, sys: LinearSystem) -> list[GaussianEstimate]:
    """Backward RTS pass over a complete filter run; ``smoothed[T] = filtered[T]``."""
    T = len(kf) - 1
    out = [None] * (T + 1)
    out[T] = kf.filtered[T]
    for k in range(T - 1, -1, -1):
        f, p1, s1 = kf.filtered[k], kf.predicted[k + 1], out[k + 1]
        C = _smoother_gain(f.covariance, sys.matrices(k)[0], p1.covariance, k)
        mean = f.mean + C @ (s1.mean - p1.mean)
        cov = _sym(f.covariance + C @ (s1.covariance - p1.covariance) @ C.T)
        out[k] = GaussianEstimate(mean, cov)
    return out


def smoothed_means(sys: LinearSystem, ys, cfg: RtsConfig) -> np.ndarray:
    """RTS smoothed means for a batch ``ys`` of shape ``(trials, T+1, m)``."""
    ys = _as_batch(ys)
    g = _gains(sys, ys.shape[1] - 1, cfg)
    pred, filt = _filter_means(sys, ys, cfg, g)
    return _smooth_means(pred, filt, g)


@dataclass(frozen=True)
class TuneResult:
    q: float
    r: float
    q_grid: np.ndarray
    r_grid: np.ndarray
    mse: np.ndarray  # (len(q_grid), len(r_grid))

    @property
    def best_mse(self) -> float:
        return float(np.min(self.mse))

    def mse_at(self, q: float, r: float) -> float:
        """Table entry for a grid pair (matched to the nearest grid values)."""
        i = int(np.argmin(np.abs(self.q_grid - q)))
        j = int(np.argmin(np.abs(self.r_grid - r)))
        return float(self.mse[i, j])


def tune_grid(sys: LinearSystem, trials: int, q_grid, r_grid, seed: int, T: int = 50,
              base: RtsConfig | None = None, trajectories=None) -> TuneResult:
    """Average smoothed-mean MSE over ``trials`` and ``k = 0..T`` for every ``(q, r)``.

    All pairs are scored on the same seeded trajectories.  Ties resolve to the
    first pair in row-major grid order.
    """
    q_grid = np.asarray(q_grid, dtype=float).reshape(-1)
    r_grid = np.asarray(r_grid, dtype=float).reshape(-1)
    if q_grid.size == 0 or r_grid.size == 0:
        raise ValueError("q_grid and r_grid must be nonempty")
    if trajectories is None:
        trajectories = [simulate_linear(sys, T, seed, t) for t in range(trials)]
    xs = np.stack([tr.states for tr in trajectories])
    ys = np.stack([tr.measurements for tr in trajectories])
    base = base or RtsConfig(q=0.0, r=1.0)
    table = np.empty((q_grid.size, r_grid.size))
    for i, q in enumerate(q_grid):
        for j, r in enumerate(r_grid):
            cfg = RtsConfig(q, r, base.P0, base.m0, base.w_mean, base.v_mean)
            est = smoothed_means(sys, ys, cfg)
            table[i, j] = np.mean(np.sum((est - xs) ** 2, axis=-1))
    i, j = np.unravel_index(int(np.argmin(table)), table.shape)
    return TuneResult(float(q_grid[i]), float(r_grid[j]), q_grid, r_grid, table)


def write_grid_csv(res: TuneResult, path) -> Path:
    """``q, r, mse`` rows in grid order."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["q", "r", "mse"])
        for i, q in enumerate(res.q_grid):
            for j, r in enumerate(res.r_grid):
                w.writerow([repr(float(q)), repr(float(r)), repr(float(res.mse[i, j]))])
    return path
