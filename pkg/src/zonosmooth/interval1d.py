"""Interval filtering and smoothing for scalar systems with monotone dynamics.

The model is ``x[k+1] = eta(x[k]) + w[k]``, ``y[k] = alpha * x[k] + v[k]``
with interval-valued noises and a strictly monotone, continuous ``eta``.
Monotonicity makes every image and preimage of an interval an interval whose
endpoints come from the endpoints of the input, so the exact filter and the
exact backward smoothing recursion need only endpoint arithmetic and
``eta`` inverses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InconsistentDataError

__all__ = [
    "Interval",
    "MonotoneMap",
    "OutOfDomainError",
    "IntervalFilterState",
    "eta_inverse",
    "filter_step_1d",
    "run_filter_1d",
    "smooth_step_1d",
    "run_smoother_1d",
]

INVERSE_RTOL = 1e-12


class OutOfDomainError(ValueError):
    """Value outside the image of a monotone map's domain."""


@dataclass(frozen=True)
class Interval:
    a: float
    b: float
    empty: bool = False

    def __post_init__(self):
        if not self.empty and not (self.a <= self.b):
            raise ValueError(f"interval needs a <= b, got [{self.a}, {self.b}]")

    @classmethod
    def make_empty(cls) -> "Interval":
        return cls(math.nan, math.nan, empty=True)

    @property
    def width(self) -> float:
        return 0.0 if self.empty else self.b - self.a

    @property
    def center(self) -> float:
        return 0.5 * (self.a + self.b)

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return not self.empty and self.a - tol <= x <= self.b + tol

    def intersect(self, other: "Interval") -> "Interval":
        if self.empty or other.empty:
            return Interval.make_empty()
        lo, hi = max(self.a, other.a), min(self.b, other.b)
        return Interval(lo, hi) if lo <= hi else Interval.make_empty()

    def __iter__(self):
        yield self.a
        yield self.b


class MonotoneMap:
    """A strictly monotone continuous scalar function on ``domain``.

    Monotonicity is spot-checked on a grid at construction; ``increasing`` is
    inferred from that grid when not given.
    """

    def __init__(self, forward: Callable[[float], float], domain=(-math.inf, math.inf),
                 increasing: bool | None = None, name: str = "eta", n_check: int = 2001):
        lo, hi = float(domain[0]), float(domain[1])
        if not lo < hi:
            raise ValueError(f"empty domain {domain}")
        self.forward = forward
        self.domain = (lo, hi)
        self.name = name

        grid_lo = lo if math.isfinite(lo) else -1e3 if not math.isfinite(hi) else min(hi - 1.0, -1e3)
        grid_hi = hi if math.isfinite(hi) else 1e3 if not math.isfinite(lo) else max(lo + 1.0, 1e3)
        xs = np.linspace(grid_lo, grid_hi, n_check)
        fs = np.array([forward(float(x)) for x in xs])
        d = np.diff(fs)
        if np.all(d > 0):
            seen = True
        elif np.all(d < 0):
            seen = False
        else:
            raise ValueError(f"{name} is not strictly monotone on {self.domain}")
        if increasing is not None and increasing != seen:
            raise ValueError(f"{name} declared {'in' if increasing else 'de'}creasing but is not")
        self.increasing = seen

    def __call__(self, x: float) -> float:
        return float(self.forward(x))

    def image(self, iv: Interval) -> Interval:
        fa, fb = self(iv.a), self(iv.b)
        return Interval(fa, fb) if self.increasing else Interval(fb, fa)

    def __repr__(self):
        return f"MonotoneMap({self.name}, domain={self.domain}, increasing={self.increasing})"


def _bracket(m: MonotoneMap, y: float):
    lo, hi = m.domain
    sgn = 1.0 if m.increasing else -1.0
    a = lo if math.isfinite(lo) else (hi - 1.0 if math.isfinite(hi) else -1.0)
    b = hi if math.isfinite(hi) else (lo + 1.0 if math.isfinite(lo) else 1.0)
    step = 1.0
    while sgn * m(a) > sgn * y:
        if math.isfinite(lo) or a < -1e300:
            raise OutOfDomainError(f"{y} is outside the image of {m.name} on {m.domain}")
        a, step = a - step, 2.0 * step
    step = 1.0
    while sgn * m(b) < sgn * y:
        if math.isfinite(hi) or b > 1e300:
            raise OutOfDomainError(f"{y} is outside the image of {m.name} on {m.domain}")
        b, step = b + step, 2.0 * step
    return a, b


def eta_inverse(m: MonotoneMap, y: float) -> float:
    """``x`` with ``m(x) = y`` to relative residual 1e-12, by bisection."""
    y = float(y)
    if math.isnan(y):
        raise OutOfDomainError("cannot invert at NaN")
    sgn = 1.0 if m.increasing else -1.0
    a, b = _bracket(m, y)
    fa, fb = sgn * (m(a) - y), sgn * (m(b) - y)
    tol = INVERSE_RTOL * (1.0 + abs(y))
    if abs(fa) <= tol:
        return a
    if abs(fb) <= tol:
        return b
    best, best_res = (a, abs(fa)) if abs(fa) < abs(fb) else (b, abs(fb))
    while True:
        mid = a + 0.5 * (b - a)
        if mid == a or mid == b:
            # float resolution reached; the closer endpoint is the answer
            return best
        fm = sgn * (m(mid) - y)
        if abs(fm) < best_res:
            best, best_res = mid, abs(fm)
        if abs(fm) <= tol:
            return mid
        if fm < 0:
            a = mid
        else:
            b = mid


@dataclass(frozen=True)
class IntervalFilterState:
    k: int
    prior: Interval
    posterior: Interval


def _measurement_interval(y: float, alpha: float, v_range: Interval) -> Interval:
    lo, hi = (y - v_range.b) / alpha, (y - v_range.a) / alpha
    return Interval(lo, hi) if alpha > 0 else Interval(hi, lo)


def filter_step_1d(posterior_prev: Interval | None, y: float, sys) -> tuple[Interval, Interval]:
    """One predict/update cycle; ``posterior_prev=None`` starts from the initial range."""
    if posterior_prev is None:
        prior = sys.x0_range
    else:
        if posterior_prev.empty:
            raise ValueError("cannot predict from an empty posterior")
        img = sys.eta.image(posterior_prev)
        prior = Interval(img.a + sys.w_range.a, img.b + sys.w_range.b)
    posterior = prior.intersect(_measurement_interval(y, sys.meas_gain, sys.v_range))
    return prior, posterior


def run_filter_1d(sys, measurements: Sequence[float]) -> list[IntervalFilterState]:
    out = []
    post = None
    for k, y in enumerate(np.asarray(measurements, dtype=float).reshape(-1)):
        prior, post = filter_step_1d(post, float(y), sys)
        out.append(IntervalFilterState(k, prior, post))
        if post.empty:
            raise InconsistentDataError(f"empty posterior at k={k}", k=k)
    return out


def smooth_step_1d(posterior_k: Interval, smoothed_next: Interval, w_range: Interval, m: MonotoneMap) -> Interval:
    """Smoothed range at ``k`` from the posterior at ``k`` and the smoothed range at ``k+1``.

    The backward image ``{x : eta(x) + w in smoothed_next, w in w_range}`` is
    ``eta^-1([a' - b_w, b' - a_w])``, with endpoints swapped for decreasing
    ``eta``; it is then clamped to the posterior.
    """
    if posterior_k.empty or smoothed_next.empty:
        return Interval.make_empty()
    lo_arg = smoothed_next.a - w_range.b
    hi_arg = smoothed_next.b - w_range.a
    p, q = eta_inverse(m, lo_arg), eta_inverse(m, hi_arg)
    back = Interval(p, q) if m.increasing else Interval(q, p)
    return posterior_k.intersect(back)


def run_smoother_1d(filter_out: Sequence[IntervalFilterState], sys) -> list[Interval]:
    if not filter_out:
        return []
    smoothed = [None] * len(filter_out)
    smoothed[-1] = filter_out[-1].posterior
    for k in range(len(filter_out) - 2, -1, -1):
        s = smooth_step_1d(filter_out[k].posterior, smoothed[k + 1], sys.w_range, sys.eta)
        if s.empty:
            raise InconsistentDataError(f"empty smoothed range at k={k}", k=k)
        smoothed[k] = s
    return smoothed
