"""Exact backward smoother for linear systems with constrained-zonotope ranges.

The smoothed range at ``k`` keeps the posterior states ``x`` from which some
admissible process noise leads into the smoothed range at ``k+1``::

    S_k = { x in P_k : Phi_k x in S_{k+1} (+) Gamma_k (-W) }

One step is a Minkowski sum followed by a generalized intersection.  Writing
``-W`` as ``Z(G_w, -c_w, A_w, -b_w, h_w)`` (negating the latent variables
instead of the generators) makes the assembled quintuple::

    G = [G_P  0  0]        c = c_P
    A = [A_P  0      0     ]   b = [b_P               ]
        [0    A_S    0     ]       [b_S               ]
        [0    0      A_w   ]       [-b_w              ]
        [Phi G_P  -G_S  -Gamma G_w]  [c_S - Gamma c_w - Phi c_P]
    h = [h_P; h_S; h_w]

Constraint and generator blocks are appended in the order posterior,
next smoothed range, process noise, coupling row.  Nothing is reduced, so
the representation of ``S_0`` holds a copy of every later posterior.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .cz import ConstrainedZonotope, generalized_intersection, is_empty, linear_map, minkowski_sum, reflect
from .errors import InconsistentDataError
from .model import LinearSystem
from .smf import FilterState

__all__ = ["SmootherOutput", "smooth_step", "run_smoother"]


@dataclass(frozen=True, eq=False)
class SmootherOutput:
    """Smoothed ranges for ``k = 0..T``; the last one is the final posterior."""

    smoothed: list

    def __len__(self):
        return len(self.smoothed)

    def __getitem__(self, k) -> ConstrainedZonotope:
        return self.smoothed[k]

    def __iter__(self):
        return iter(self.smoothed)


def smooth_step(posterior_k: ConstrainedZonotope, smoothed_next: ConstrainedZonotope,
                sys: LinearSystem, k: int, check_empty: bool = False) -> ConstrainedZonotope:
    """One backward step ``S_k = {x in P_k : Phi_k x in S_{k+1} + Gamma_k (-W)}``.

    The states of ``P_k`` that can reach ``S_{k+1}`` under some admissible
    noise.  The noise enters through :func:`reflect`, so its generators keep
    their sign and only its offsets flip.

    Parameters
    ----------
    posterior_k : ConstrainedZonotope
        Posterior range at ``k``.
    smoothed_next : ConstrainedZonotope
        Smoothed range at ``k + 1``.
    check_empty : bool
        Raise :class:`InconsistentDataError` when the result is empty.

    Returns
    -------
    ConstrainedZonotope
        Generators ``[G_P, 0, 0]`` over ``[P, S_{k+1}, W]`` and constraint rows
        ``[A_P; A_S; A_W; Phi G_P, -G_S, -Gamma G_W]``.
    """
    Phi, Gamma, _, _ = sys.matrices(k)
    if posterior_k.dim != sys.n or smoothed_next.dim != sys.n:
        raise ValueError("smoothing inputs must live in the state space")
    reachable_from = minkowski_sum(smoothed_next, linear_map(Gamma, reflect(sys.w_range)))
    out = generalized_intersection(posterior_k, Phi, reachable_from)
    if check_empty and is_empty(out):
        raise InconsistentDataError(f"empty smoothed range at k={k}", k=k)
    return out


def run_smoother(filter_out: Sequence[FilterState], sys: LinearSystem, check_empty: bool = False) -> SmootherOutput:
    """Backward pass ``k = T-1 .. 0`` over a complete filter run.

    An empty smoothed range cannot occur on consistent data; with
    ``check_empty`` it raises and stops the recursion.
    """
    if not filter_out:
        return SmootherOutput([])
    T = len(filter_out) - 1
    if [s.k for s in filter_out] != list(range(T + 1)):
        raise ValueError("filter output must cover k = 0..T in order")
    smoothed = [None] * (T + 1)
    smoothed[T] = filter_out[T].posterior
    for k in range(T - 1, -1, -1):
        smoothed[k] = smooth_step(filter_out[k].posterior, smoothed[k + 1], sys, k, check_empty)
    return SmootherOutput(smoothed)
