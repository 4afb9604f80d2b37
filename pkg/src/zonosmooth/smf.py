"""Exact set-membership filter for linear systems with constrained-zonotope ranges.

Prediction pushes the posterior through the dynamics and adds the process
noise; the update keeps the predicted states that are consistent with the
measurement, written as a generalized intersection.  Both steps are exact, so
the posterior at ``k`` is the set of all states reachable by some noise
sequence that explains ``y[0..k]``.  Representation size grows every step
(``+n_g(w) + n_g(v)`` generators, ``+n_c(v) + m`` constraints); nothing is
reduced.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cz import ConstrainedZonotope, generalized_intersection, is_empty, linear_map, minkowski_sum
from .errors import InconsistentDataError
from .model import LinearSystem, Trajectory

__all__ = ["FilterState", "predict", "measurement_set", "update", "run_filter"]


@dataclass(frozen=True, eq=False)
class FilterState:
    """Prior (given ``y[0..k-1]``) and posterior (given ``y[0..k]``) ranges at step ``k``."""

    k: int
    prior: ConstrainedZonotope
    posterior: ConstrainedZonotope

    @property
    def consistent(self) -> bool:
        """False when the posterior is empty.  Solves an LP, so it is only asked on demand."""
        return not is_empty(self.posterior)


def predict(posterior_prev: ConstrainedZonotope, sys: LinearSystem, k: int) -> ConstrainedZonotope:
    """Prior at ``k+1`` from the posterior at ``k``: ``Phi_k X (+) Gamma_k W``."""
    Phi, Gamma, _, _ = sys.matrices(k)
    return minkowski_sum(linear_map(Phi, posterior_prev), linear_map(Gamma, sys.w_range))


def measurement_set(y, sys: LinearSystem, k: int) -> ConstrainedZonotope:
    """``{y - Psi_k v : v in V}``, the values ``Xi_k x`` may take given ``y``."""
    _, _, _, Psi = sys.matrices(k)
    V = sys.v_range
    y = np.asarray(y, dtype=float).reshape(-1)
    return ConstrainedZonotope(-Psi @ V.G, y - Psi @ V.c, V.A, V.b, V.h)


def update(prior: ConstrainedZonotope, y, sys: LinearSystem, k: int) -> ConstrainedZonotope:
    """Posterior ``{x in prior : Xi_k x in y - Psi_k V}``.

    The result may be empty on inconsistent data; that is not checked here.
    """
    _, _, Xi, _ = sys.matrices(k)
    return generalized_intersection(prior, Xi, measurement_set(y, sys, k))


def run_filter(sys: LinearSystem, traj: Trajectory | Sequence, check_empty: bool = False) -> list[FilterState]:
    """Filter ``k = 0..T``; the first update acts directly on the initial range.

    With ``check_empty`` every posterior is tested and an empty one raises
    :class:`InconsistentDataError`.
    """
    ys = traj.measurements if isinstance(traj, Trajectory) else np.asarray(traj, dtype=float)
    ys = np.asarray(ys, dtype=float).reshape(len(ys), -1)
    if ys.shape[1] != sys.m:
        raise ValueError(f"measurements have {ys.shape[1]} components, system has {sys.m}")
    states = []
    prior = sys.x0_range
    for k in range(ys.shape[0]):
        if k:
            prior = predict(states[-1].posterior, sys, k - 1)
        post = update(prior, ys[k], sys, k)
        if check_empty and is_empty(post):
            raise InconsistentDataError(f"empty posterior at k={k}", k=k)
        states.append(FilterState(k, prior, post))
    return states
