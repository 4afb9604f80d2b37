"""Independent oracles and random instances shared by the tests.

Nothing here calls the LP layer: the vertex enumerator solves small dense
linear systems with numpy only, so it can referee ``solve_lp`` and the CZ
queries built on it.
"""

from __future__ import annotations

from itertools import combinations, product

import numpy as np

from zonosmooth.cz import ConstrainedZonotope

FEAS_TOL = 1e-9


def enumerate_vertices(A, b, lower, upper, tol=FEAS_TOL):
    """All basic feasible points of ``{x : A x = b, lower <= x <= upper}`` (finite bounds).

    A vertex has ``n - rank(A)`` coordinates at a bound and solves ``A x = b``
    uniquely for the rest.  Returns an array of shape ``(count, n)``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = lower.shape[0]
    if A.size == 0:
        A = np.zeros((0, n))
    b = np.asarray(b, dtype=float).reshape(-1)
    rank = np.linalg.matrix_rank(A) if A.shape[0] else 0
    scale = 1.0 + np.max(np.abs(b), initial=0.0)
    verts = []
    for fixed in combinations(range(n), n - rank):
        free = [j for j in range(n) if j not in fixed]
        Af = A[:, free]
        if free and np.linalg.matrix_rank(Af) < len(free):
            continue
        for pick in product((0, 1), repeat=len(fixed)):
            x = np.empty(n)
            for j, p in zip(fixed, pick):
                x[j] = upper[j] if p else lower[j]
            rhs = b - A[:, list(fixed)] @ x[list(fixed)]
            if free:
                x[free] = np.linalg.lstsq(Af, rhs, rcond=None)[0]
            if A.shape[0] and np.max(np.abs(A @ x - b)) > tol * scale:
                continue
            if np.all(x >= lower - tol) and np.all(x <= upper + tol):
                verts.append(x)
    return np.asarray(verts).reshape(-1, n)


def brute_force_lp(c, A, b, lower, upper, sense="minimize"):
    """``(feasible, value)`` by vertex enumeration; value is ``None`` when infeasible."""
    V = enumerate_vertices(A, b, lower, upper)
    if V.shape[0] == 0:
        return False, None
    vals = V @ np.asarray(c, dtype=float)
    return True, float(vals.min() if sense == "minimize" else vals.max())


def cz_vertex_support(Z: ConstrainedZonotope, d):
    """``max d @ z`` over ``Z`` by enumerating the latent polytope's vertices."""
    ok, val = brute_force_lp(np.asarray(d) @ Z.G, Z.A.toarray(), Z.b, -Z.h, Z.h, "maximize")
    return None if not ok else val + float(np.asarray(d) @ Z.c)


def random_cz(rng, n=2, ng=4, nc=1, feasible=True, h=None):
    """Random bounded CZ; with ``feasible`` the constraints pass through an interior latent point."""
    G = rng.standard_normal((n, ng))
    c = rng.standard_normal(n)
    h = rng.uniform(0.5, 1.5, ng) if h is None else np.asarray(h, dtype=float)
    A = rng.standard_normal((nc, ng))
    if feasible:
        xi0 = rng.uniform(-0.5, 0.5, ng) * h
        b = A @ xi0
    else:
        b = rng.standard_normal(nc) * 3 * np.sum(np.abs(A) * h, axis=1)
    return ConstrainedZonotope(G, c, A, b, h)


def random_lp(rng, max_vars=6, max_rows=3):
    """Random bounded-variable LP data ``(c, A, b, lower, upper, sense)``.

    About half the instances put ``b`` at the image of a box point (feasible);
    the rest draw ``b`` at random, which is often infeasible.
    """
    n = int(rng.integers(1, max_vars + 1))
    m = int(rng.integers(0, min(max_rows, n) + 1))
    A = np.round(rng.standard_normal((m, n)), 3)
    lower = np.round(rng.uniform(-2, 0, n), 3)
    upper = lower + np.round(rng.uniform(0, 3, n), 3)
    if rng.random() < 0.5:
        b = A @ rng.uniform(lower, upper)
    else:
        b = np.round(rng.standard_normal(m) * 3, 3)
    c = np.round(rng.standard_normal(n), 3)
    sense = "minimize" if rng.random() < 0.5 else "maximize"
    return c, A, b, lower, upper, sense


def literal_smoothing_blocks(P: ConstrainedZonotope, S: ConstrainedZonotope, W: ConstrainedZonotope, Phi, Gamma):
    """Smoothing-step quintuple assembled block by block, written out independently.

    Block order: posterior, next smoothed set, process noise, coupling rows
    last.  The noise offsets enter unreflected (``+Gamma c_w`` in the
    coupling rhs and ``b_w`` unchanged), which gives the exact set when ``W``
    is centred.
    """
    ngp, ngs, ngw = P.n_generators, S.n_generators, W.n_generators
    ncp, ncs, ncw = P.n_constraints, S.n_constraints, W.n_constraints
    n = P.dim
    G = np.hstack([P.G, np.zeros((n, ngs + ngw))])
    A = np.zeros((ncp + ncs + ncw + n, ngp + ngs + ngw))
    A[:ncp, :ngp] = P.A.toarray()
    A[ncp:ncp + ncs, ngp:ngp + ngs] = S.A.toarray()
    A[ncp + ncs:ncp + ncs + ncw, ngp + ngs:] = W.A.toarray()
    A[ncp + ncs + ncw:, :ngp] = Phi @ P.G
    A[ncp + ncs + ncw:, ngp:ngp + ngs] = -S.G
    A[ncp + ncs + ncw:, ngp + ngs:] = -Gamma @ W.G
    b = np.concatenate([P.b, S.b, W.b, S.c + Gamma @ W.c - Phi @ P.c])
    h = np.concatenate([P.h, S.h, W.h])
    return G, P.c.copy(), A, b, h


def corrected_smoothing_blocks(P, S, W, Phi, Gamma):
    """Same blocks for an arbitrary (possibly off-centre) ``W``: the noise enters reflected."""
    G, c, A, b, h = literal_smoothing_blocks(P, S, W, Phi, Gamma)
    ncp, ncs, ncw, n = P.n_constraints, S.n_constraints, W.n_constraints, P.dim
    b = b.copy()
    b[ncp + ncs:ncp + ncs + ncw] = -W.b
    b[ncp + ncs + ncw:] = S.c - Gamma @ W.c - Phi @ P.c
    return G, c, A, b, h


def cube_inverse_vec(y, iters=200):
    """Vectorized bisection for cbrt(x) + x = y; |x| <= |y| since the map preserves sign and grows."""
    y = np.asarray(y, dtype=float)
    lo, hi = -np.abs(y) - 1.0, np.abs(y) + 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = np.cbrt(mid) + mid < y
        lo, hi = np.where(below, mid, lo), np.where(below, hi, mid)
    return 0.5 * (lo + hi)
