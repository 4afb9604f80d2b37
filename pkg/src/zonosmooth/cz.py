"""Constrained zonotopes and the set operations the estimators need.

A constrained zonotope ``Z(G, c, A, b, h)`` is the set

    { G xi + c : A xi = b,  -h_j <= xi_j <= h_j }

with half-widths ``h_j`` in ``[0, inf]``.  Allowing per-generator half-widths
(instead of the usual unit box) keeps the appended noise blocks of the
recursions unscaled, and infinite half-widths give unbounded directions.

The three closure operations -- linear map, Minkowski sum and generalized
intersection -- are purely algebraic block assemblies.  Everything that asks a
question about the set (membership, emptiness, support values, interval hull)
solves a small LP over ``xi``; see :mod:`zonosmooth.lp`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .lp import AT_LOWER, AT_ZERO, BASIC, BoundedLp, LpSolverError

__all__ = [
    "ConstrainedZonotope",
    "IntervalBox",
    "EmptySetError",
    "MEMBERSHIP_TOL",
    "linear_map",
    "minkowski_sum",
    "generalized_intersection",
    "reflect",
    "contains_point",
    "is_empty",
    "support_value",
    "interval_hull",
    "diameter_inf",
    "to_record",
    "from_record",
    "dumps",
    "loads",
    "sample_latent",
    "sample_points",
]

# relative slack on G xi = x - c in membership tests
MEMBERSHIP_TOL = 1e-7


class EmptySetError(ValueError):
    """A query that needs a nonempty set was asked of an empty one."""


def _readonly(a):
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ConstrainedZonotope:
    G: np.ndarray
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        c = np.array(self.c, dtype=float).reshape(-1)
        n = c.shape[0]
        G = np.array(self.G, dtype=float)
        if G.size == 0:
            G = np.zeros((n, G.shape[1] if G.ndim == 2 else 0))
        if G.ndim != 2 or G.shape[0] != n:
            raise ValueError(f"generator matrix {G.shape} does not match center of length {n}")
        ng = G.shape[1]
        if sp.issparse(self.A):
            A = sp.csr_matrix(self.A, dtype=float)
        else:
            A = np.array(self.A, dtype=float)
            A = sp.csr_matrix(np.zeros((A.shape[0] if A.ndim == 2 else 0, ng)) if A.size == 0 else A)
        b = np.array(self.b, dtype=float).reshape(-1)
        h = np.array(self.h, dtype=float).reshape(-1)
        if A.shape[1] != ng or h.shape[0] != ng:
            raise ValueError(f"{ng} generators but constraint matrix {A.shape} and {h.shape[0]} half-widths")
        if A.shape[0] != b.shape[0]:
            raise ValueError(f"constraint matrix has {A.shape[0]} rows but rhs has {b.shape[0]}")
        if np.any(np.isnan(h)) or np.any(h < 0):
            raise ValueError("half-widths must lie in [0, inf]")
        object.__setattr__(self, "G", _readonly(G))
        object.__setattr__(self, "c", _readonly(c))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", _readonly(b))
        object.__setattr__(self, "h", _readonly(h))
        object.__setattr__(self, "_lp_cache", None)
        object.__setattr__(self, "_lineage", None)
        object.__setattr__(self, "_lifted_basis", None)
        object.__setattr__(self, "_hull", None)

    @property
    def dim(self) -> int:
        return self.c.shape[0]

    @property
    def n_generators(self) -> int:
        return self.G.shape[1]

    @property
    def n_constraints(self) -> int:
        return self.A.shape[0]

    @property
    def is_bounded_box(self) -> bool:
        """Unconstrained with axis-aligned generators and finite half-widths."""
        if self.n_constraints or not np.all(np.isfinite(self.h)):
            return False
        return bool(np.all(np.count_nonzero(self.G, axis=0) <= 1))

    @classmethod
    def from_box(cls, lower, upper) -> "ConstrainedZonotope":
        return IntervalBox(lower, upper).to_cz()

    @classmethod
    def point(cls, x) -> "ConstrainedZonotope":
        x = np.asarray(x, dtype=float).reshape(-1)
        return cls(np.zeros((x.shape[0], 0)), x, np.zeros((0, 0)), np.zeros(0), np.zeros(0))

    @classmethod
    def zonotope(cls, G, c, h=None) -> "ConstrainedZonotope":
        G = np.atleast_2d(np.asarray(G, dtype=float))
        h = np.ones(G.shape[1]) if h is None else h
        return cls(G, c, np.zeros((0, G.shape[1])), np.zeros(0), h)

    def _lp(self) -> BoundedLp:
        # rows: [A; G], the G rows are free unless a membership test pins them
        if self._lp_cache is None:
            mat = sp.vstack([self.A, sp.csr_matrix(self.G)], format="csc")
            inf = np.full(self.dim, np.inf)
            lp = BoundedLp(
                mat,
                np.concatenate([self.b, -inf]),
                np.concatenate([self.b, inf]),
                -self.h,
                self.h,
            )
            object.__setattr__(self, "_lp_cache", lp)
        return self._lp_cache

    def __repr__(self):
        return (
            f"ConstrainedZonotope(dim={self.dim}, n_generators={self.n_generators}, "
            f"n_constraints={self.n_constraints})"
        )


@dataclass(frozen=True, eq=False)
class IntervalBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.array(self.lower, dtype=float))
        hi = np.atleast_1d(np.array(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be vectors of equal length")
        if np.any(lo > hi):
            raise ValueError("box requires lower <= upper")
        object.__setattr__(self, "lower", _readonly(lo))
        object.__setattr__(self, "upper", _readonly(hi))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, other: "IntervalBox", tol: float = 0.0) -> bool:
        return bool(np.all(other.lower >= self.lower - tol) and np.all(other.upper <= self.upper + tol))

    def inflate(self, fraction: float) -> "IntervalBox":
        """Move each face outward by ``fraction`` of the box width along that axis."""
        pad = fraction * self.widths
        return IntervalBox(self.lower - pad, self.upper + pad)

    def to_cz(self) -> ConstrainedZonotope:
        n = self.dim
        return ConstrainedZonotope(np.eye(n), self.center, np.zeros((0, n)), np.zeros(0), 0.5 * self.widths)


# -- simplex warm starts -------------------------------------------------------
#
# The recursions only ever build sets from parents by the three operations
# above, and each operation appends constraint rows and latent variables in a
# fixed block layout.  That lets an LP basis of a parent be lifted to a valid
# (nonsingular) basis of the child:
#
# * sum(L, R):        L's basis, R's variables nonbasic, R's rows basic.
# * map(F, L):        L's basis when all of L's output rows are basic.
# * intersect(Z, Y):  block-triangular union of a Z basis and a Y basis,
#                     with Y's output rows becoming the coupling rows.
#
# For an intersection the objective of a support query touches only Z's
# variables, so lifting a basis that is optimal for Z in the same direction
# gives a dual-feasible start; the dual simplex then only repairs the coupling
# rows.  On long smoothing horizons this removes most of the pivots.  The
# lineage is a performance hint only; results never depend on it.


def _derived(out, kind, *parents):
    object.__setattr__(out, "_lineage", (kind,) + parents)
    return out


def _nonbasic_cols(h):
    return [AT_LOWER if np.isfinite(v) else AT_ZERO for v in h]


def _any_basis(Z):
    """Some valid basis for ``Z``'s LP, from its own history or its parents."""
    b = Z._lp().basis()
    if b is None:
        b = Z._lifted_basis
    if b is None:
        b = _lift(Z)
        object.__setattr__(Z, "_lifted_basis", b)
    return b


def _lift(Z):
    lin = Z._lineage
    if lin is None:
        lp = Z._lp()
        return lp.basis() if lp.feasible() else None
    kind = lin[0]
    if kind == "sum":
        L, R = lin[1], lin[2]
        bL = _any_basis(L)
        if bL is None:
            return None
        mL = L.n_constraints
        cols = bL[0] + _nonbasic_cols(R.h)
        rows = bL[1][:mL] + [BASIC] * R.n_constraints + bL[1][mL:]
        return cols, rows
    if kind == "map":
        L = lin[1]
        bL = _any_basis(L)
        if bL is None or any(s != BASIC for s in bL[1][L.n_constraints:]):
            return None
        return bL[0], bL[1][: L.n_constraints] + [BASIC] * Z.dim
    P, Y = lin[1], lin[2]
    bP, bY = _any_basis(P), _any_basis(Y)
    if bP is None or bY is None:
        return None
    return _join(P, Y, bP, bY)


def _join(P, Y, bP, bY):
    mP, mY = P.n_constraints, Y.n_constraints
    return bP[0] + bY[0], bP[1][:mP] + bY[1][:mY] + bY[1][mY:] + bP[1][mP:]


def _seed_basis(Z, weights, sense):
    # later queries continue from the previous optimum, which is cheaper
    # than installing a fresh lifted basis
    lin = Z._lineage
    if lin is None or lin[0] != "intersect" or Z._lp().started:
        return None
    P, Y = lin[1], lin[2]
    ng = P.n_generators
    weights = np.asarray(weights, dtype=float)
    if np.any(weights[ng:] != 0.0):
        return None
    bP = P._lp().optimal_basis(weights[:ng], sense)
    if bP is None:
        # only worth solving the parent when it is much smaller than Z
        if Z.n_generators < 2 * ng:
            return None
        if not _support_latent(P, weights[:ng], sense).optimal:
            return None
        bP = P._lp().optimal_basis(weights[:ng], sense)
    bY = _any_basis(Y)
    if bP is None or bY is None:
        return None
    return _join(P, Y, bP, bY)


def _check_dim(Z, n, what):
    if Z.dim != n:
        raise ValueError(f"{what}: expected a set of dimension {n}, got {Z.dim}")


def linear_map(F, Z: ConstrainedZonotope) -> ConstrainedZonotope:
    """``{F z : z in Z}``."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    _check_dim(Z, F.shape[1], "linear_map")
    return _derived(ConstrainedZonotope(F @ Z.G, F @ Z.c, Z.A, Z.b, Z.h), "map", Z)


def minkowski_sum(Z: ConstrainedZonotope, W: ConstrainedZonotope) -> ConstrainedZonotope:
    """``{z + w : z in Z, w in W}``; generators and constraints are stacked as ``[Z, W]``."""
    _check_dim(W, Z.dim, "minkowski_sum")
    out = ConstrainedZonotope(
        np.hstack([Z.G, W.G]),
        Z.c + W.c,
        sp.block_diag([Z.A, W.A], format="csr"),
        np.concatenate([Z.b, W.b]),
        np.concatenate([Z.h, W.h]),
    )
    return _derived(out, "sum", Z, W)


def generalized_intersection(Z: ConstrainedZonotope, R, Y: ConstrainedZonotope) -> ConstrainedZonotope:
    """``{z in Z : R z in Y}``.

    Constraint rows come out as ``[A_Z; A_Y; R G_Z  -G_Y]``, i.e. the coupling
    row last.  An empty result is still a valid quintuple; ask :func:`is_empty`.
    """
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if R.shape != (Y.dim, Z.dim):
        raise ValueError(f"generalized_intersection: R is {R.shape}, expected {(Y.dim, Z.dim)}")
    coupling = sp.hstack([sp.csr_matrix(R @ Z.G), sp.csr_matrix(-Y.G)])
    A = sp.vstack([sp.block_diag([Z.A, Y.A]), coupling], format="csr")
    out = ConstrainedZonotope(
        np.hstack([Z.G, np.zeros((Z.dim, Y.n_generators))]),
        Z.c,
        A,
        np.concatenate([Z.b, Y.b, Y.c - R @ Z.c]),
        np.concatenate([Z.h, Y.h]),
    )
    return _derived(out, "intersect", Z, Y)


def reflect(Z: ConstrainedZonotope) -> ConstrainedZonotope:
    """``-Z``, written by flipping the sign of ``xi`` so the generators are kept."""
    return ConstrainedZonotope(Z.G, -Z.c, Z.A, -Z.b, Z.h)


def contains_point(Z: ConstrainedZonotope, x, atol: float | None = None) -> bool:
    """Is ``x`` in ``Z``?

    ``G xi = x - c`` is relaxed to ``|G xi - (x - c)|_inf <= atol``, by default
    ``MEMBERSHIP_TOL * (1 + |x|_inf)``; ``A xi = b`` is kept at LP tolerance.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    _check_dim(Z, x.shape[0], "contains_point")
    if atol is None:
        atol = MEMBERSHIP_TOL * (1.0 + np.max(np.abs(x), initial=0.0))
    target = x - Z.c
    lp = Z._lp()
    rows = np.arange(Z.n_constraints, Z.n_constraints + Z.dim)
    lp.set_row_bounds(rows, target - atol, target + atol)
    try:
        return lp.feasible()
    finally:
        lp.set_row_bounds(rows, np.full(Z.dim, -np.inf), np.full(Z.dim, np.inf))


def is_empty(Z: ConstrainedZonotope) -> bool:
    if Z.n_constraints == 0:
        return False
    return not Z._lp().feasible()


def _support_latent(Z, weights, sense="maximize"):
    res = Z._lp().optimize(weights, sense, basis=_seed_basis(Z, weights, sense))
    if res.status == "infeasible":
        raise EmptySetError("support value of an empty set")
    return res


def support_value(Z: ConstrainedZonotope, direction) -> float:
    """``max_{z in Z} direction @ z``; ``+inf`` if unbounded in that direction."""
    d = np.asarray(direction, dtype=float).reshape(-1)
    _check_dim(Z, d.shape[0], "support_value")
    res = _support_latent(Z, d @ Z.G)
    if res.status == "unbounded":
        return np.inf
    return res.value + float(d @ Z.c)


def interval_hull(Z: ConstrainedZonotope) -> IntervalBox:
    """Tightest axis-aligned box around ``Z`` (two LPs per coordinate).

    The box is remembered on ``Z``: warm-started re-solves may differ in the
    last bits, and repeated queries should agree exactly.
    """
    if Z._hull is not None:
        return Z._hull
    lo = np.empty(Z.dim)
    hi = np.empty(Z.dim)
    for i in range(Z.dim):
        up = _support_latent(Z, Z.G[i], "maximize")
        dn = _support_latent(Z, Z.G[i], "minimize")
        hi[i] = np.inf if up.status == "unbounded" else up.value + Z.c[i]
        lo[i] = -np.inf if dn.status == "unbounded" else dn.value + Z.c[i]
    box = IntervalBox(lo, hi)
    object.__setattr__(Z, "_hull", box)
    return box


def diameter_inf(Z: ConstrainedZonotope) -> float:
    """Diameter in the infinity norm, i.e. the largest coordinate width of the hull."""
    return float(np.max(interval_hull(Z).widths, initial=0.0))


# -- serialization -------------------------------------------------------------


def _encode(values):
    return [v if np.isfinite(v) else ("inf" if v > 0 else "-inf") for v in np.asarray(values, dtype=float).tolist()]


def _decode(values):
    return np.array([float(v) for v in values], dtype=float)


def to_record(Z: ConstrainedZonotope) -> dict:
    """Plain record ``{n, n_g, n_c, G, c, A, b, h}``; matrices are row-major flat lists."""
    return {
        "n": Z.dim,
        "n_g": Z.n_generators,
        "n_c": Z.n_constraints,
        "G": Z.G.reshape(-1).tolist(),
        "c": Z.c.tolist(),
        "A": Z.A.toarray().reshape(-1).tolist(),
        "b": Z.b.tolist(),
        "h": _encode(Z.h),
    }


def from_record(rec: dict) -> ConstrainedZonotope:
    try:
        n, ng, nc = int(rec["n"]), int(rec["n_g"]), int(rec["n_c"])
        G = _decode(rec["G"]).reshape(n, ng)
        A = _decode(rec["A"]).reshape(nc, ng)
        return ConstrainedZonotope(G, _decode(rec["c"]), A, _decode(rec["b"]), _decode(rec["h"]))
    except (KeyError, TypeError) as err:
        raise ValueError(f"malformed constrained-zonotope record: {err}") from err


def dumps(Z: ConstrainedZonotope) -> str:
    return json.dumps(to_record(Z))


def loads(text: str) -> ConstrainedZonotope:
    return from_record(json.loads(text))


# -- sampling (test utility) ---------------------------------------------------


def sample_latent(Z: ConstrainedZonotope, count: int, rng: np.random.Generator, max_tries: int = 50) -> np.ndarray:
    """Feasible ``xi`` vectors of ``Z``, shape ``(count, n_generators)``.

    Unconstrained sets are sampled uniformly in the box.  With constraints,
    box samples are projected onto ``A xi = b`` and rejected if they leave the
    box; when that accepts too little, random convex combinations of LP
    vertices are used instead.  Meant for tests, not for estimation.  Requires
    finite half-widths.
    """
    if not np.all(np.isfinite(Z.h)):
        raise ValueError("sampling needs finite half-widths")
    ng = Z.n_generators
    if Z.n_constraints == 0:
        return rng.uniform(-Z.h, Z.h, size=(count, ng))
    if is_empty(Z):
        raise EmptySetError("cannot sample an empty set")

    A = Z.A.toarray()
    out = []
    if ng <= 40:
        pinv = np.linalg.pinv(A)
        resid_tol = 1e-9 * (1.0 + np.max(np.abs(Z.b), initial=0.0))
        for _ in range(max_tries):
            xi = rng.uniform(-Z.h, Z.h, size=(4 * count, ng))
            xi = xi - (xi @ A.T - Z.b) @ pinv.T
            ok = np.all(np.abs(xi) <= Z.h + 1e-12, axis=1)
            ok &= np.all(np.abs(xi @ A.T - Z.b) <= resid_tol, axis=1)
            out.extend(xi[ok])
            if len(out) >= count:
                return np.asarray(out[:count])
    if out and len(out) >= count // 4:
        extra = _vertex_mixtures(Z, count - len(out), rng)
        return np.vstack([np.asarray(out), extra])
    return _vertex_mixtures(Z, count, rng)


def _vertex_mixtures(Z, count, rng, n_vertices=None):
    lp = Z._lp()
    ng = Z.n_generators
    n_vertices = n_vertices or min(2 * ng + 2, 64)
    verts = []
    for _ in range(n_vertices):
        res = lp.optimize(rng.standard_normal(ng), "maximize")
        if not res.optimal:
            raise LpSolverError(f"vertex sampling LP ended {res.status}")
        verts.append(np.clip(res.argmin, -Z.h, Z.h))
    verts = np.asarray(verts)
    # sparse Dirichlet weights keep samples away from the barycenter
    w = rng.dirichlet(np.full(len(verts), 0.3), size=count)
    return w @ verts


def sample_points(Z: ConstrainedZonotope, count: int, rng: np.random.Generator) -> np.ndarray:
    """Members of ``Z`` (shape ``(count, dim)``) built from :func:`sample_latent`."""
    xi = sample_latent(Z, count, rng)
    return xi @ Z.G.T + Z.c
