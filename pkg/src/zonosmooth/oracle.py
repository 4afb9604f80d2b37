"""Brute-force lattice evaluation of the exact filter and smoother.

A :class:`GridSet` marks cells of a regular lattice.  Each marked set is an
outer approximation: any state of the exact range that lies inside the domain
falls in a marked cell.

Linear systems (state and measurement dimension <= 2, zonotopic ranges) are
propagated as exact convex polygons and rasterized, so a cell is marked iff
it meets the exact range.

Scalar monotone systems use exact cell images: a monotone ``eta`` maps a cell
``[lo, hi]`` onto ``eta([lo, hi])``, which is an interval with endpoints
``eta(lo)`` and ``eta(hi)``, so no Lipschitz bound is needed (the cube-root
drift has none at 0).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .cz import IntervalBox
from .model import CSV_HEADER, LinearSystem, ScalarAffineSystem, UnsupportedConfigurationError

__all__ = [
    "GridSet",
    "GridTooLargeError",
    "EmptyGridError",
    "MAX_CELLS",
    "grid_filter",
    "grid_smooth",
    "grid_filter_1d",
    "grid_smooth_1d",
    "hull_of_grid",
    "write_grid_set_csv",
]

MAX_CELLS = 10_000_000
_EPS = 1e-12


class GridTooLargeError(ValueError):
    pass


class EmptyGridError(RuntimeError):
    def __init__(self, msg, k=None):
        super().__init__(msg)
        self.k = k


@dataclass(frozen=True, eq=False)
class GridSet:
    """Marked cells of the lattice ``origin + spacing * index``.

    ``origin`` is the centre of cell ``(0, ..., 0)``; ``mask`` has one axis
    per state coordinate.
    """

    origin: np.ndarray
    spacing: np.ndarray
    mask: np.ndarray
    # exact region (polygon vertices) behind the marks, when known
    region: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        origin = np.atleast_1d(np.asarray(self.origin, dtype=float))
        spacing = np.atleast_1d(np.asarray(self.spacing, dtype=float))
        mask = np.asarray(self.mask, dtype=bool)
        if origin.shape != spacing.shape or mask.ndim != origin.size:
            raise ValueError("origin, spacing and mask dimensions disagree")
        if np.any(spacing <= 0):
            raise ValueError("spacing must be positive")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def covering(cls, box: IntervalBox, delta: float, mask=None) -> "GridSet":
        """Lattice of ``delta``-cells whose union covers ``box``."""
        widths = box.upper - box.lower
        if not np.all(np.isfinite(widths)):
            raise ValueError("domain box must be bounded")
        counts = np.maximum(1, np.ceil(widths / delta - 1e-9).astype(int))
        total = int(np.prod(counts.astype(float)))
        if total > MAX_CELLS:
            raise GridTooLargeError(f"grid of {total} cells exceeds the {MAX_CELLS} limit")
        # centre the lattice on the box
        origin = box.center - 0.5 * delta * (counts - 1)
        if mask is None:
            mask = np.ones(tuple(counts), dtype=bool)
        return cls(origin, np.full(box.dim, float(delta)), mask)

    @property
    def dim(self) -> int:
        return self.origin.size

    @property
    def shape(self):
        return self.mask.shape

    @property
    def n_marked(self) -> int:
        return int(np.count_nonzero(self.mask))

    @property
    def is_empty(self) -> bool:
        return self.n_marked == 0

    def all_centers(self) -> np.ndarray:
        """Centres of every cell, ``(prod(shape), n)`` in C order."""
        axes = [self.origin[i] + self.spacing[i] * np.arange(s) for i, s in enumerate(self.shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def centers(self) -> np.ndarray:
        """Centres of marked cells, ``(n_marked, n)``."""
        idx = np.argwhere(self.mask)
        return self.origin + self.spacing * idx

    def with_mask(self, mask) -> "GridSet":
        return GridSet(self.origin, self.spacing, np.asarray(mask, dtype=bool).reshape(self.shape))

    def cell_of(self, x) -> tuple | None:
        """Index of the cell containing ``x``, or None outside the lattice."""
        idx = np.floor((np.asarray(x, dtype=float) - self.origin) / self.spacing + 0.5).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.array(self.shape)):
            return None
        return tuple(idx)


def hull_of_grid(g: GridSet) -> IntervalBox:
    """Tight box over marked cell centres, widened by half a cell."""
    if g.is_empty:
        raise EmptyGridError("hull of an empty grid set")
    lo, hi = [], []
    for i in range(g.dim):
        other = tuple(j for j in range(g.dim) if j != i)
        hit = np.flatnonzero(np.any(g.mask, axis=other) if other else g.mask)
        lo.append(g.origin[i] + g.spacing[i] * (hit[0] - 0.5))
        hi.append(g.origin[i] + g.spacing[i] * (hit[-1] + 0.5))
    return IntervalBox(np.array(lo), np.array(hi))


# -- linear systems ---------------------------------------------------------------
#
# The recursions are evaluated on convex polygons (intervals when n = 1) in
# vertex form: linear maps act on vertices, Minkowski sums with the noise
# zonotope add its vertices, and intersections with measurement slabs or
# preimages clip the polygon one halfspace at a time.  The lattice is then a
# rasterization: a cell is marked iff it meets the polygon.  This shares no
# code with the constrained-zonotope / LP path.

_TOL = 1e-9


def _zonotope_parts(Z, what):
    if Z.n_constraints or not np.all(np.isfinite(Z.h)):
        raise UnsupportedConfigurationError(f"grid oracle needs {what} to be a bounded zonotope")
    return Z.c, Z.G * Z.h


def _check_dim(d):
    if d > 2:
        raise UnsupportedConfigurationError("grid oracle supports state and measurement dimensions <= 2")


def _zonotope_vertices(center, G):
    signs = np.array(list(product((-1.0, 1.0), repeat=G.shape[1]))).reshape(-1, G.shape[1])
    return center + signs @ G.T


def _hull(points):
    """Convex hull vertices (counter-clockwise in 2-D; ``[min, max]`` in 1-D)."""
    pts = np.asarray(points, dtype=float)
    if pts.shape[1] == 1:
        return np.array([[pts[:, 0].min()], [pts[:, 0].max()]])
    try:
        return pts[ConvexHull(pts).vertices]
    except QhullError:
        # flat point set: keep the two extremes along its direction
        c = pts.mean(axis=0)
        _, _, vt = np.linalg.svd(pts - c)
        t = (pts - c) @ vt[0]
        return pts[[int(np.argmin(t)), int(np.argmax(t))]]


def _halfspaces(V):
    """``(a, b)`` rows with ``a x <= b`` describing ``conv(V)`` (``V`` from :func:`_hull`)."""
    n = V.shape[1]
    if n == 1:
        return np.array([[1.0], [-1.0]]), np.array([V[1, 0], -V[0, 0]])
    if len(V) >= 3:
        e = np.roll(V, -1, axis=0) - V
        a = np.stack([e[:, 1], -e[:, 0]], axis=1)  # outward for counter-clockwise order
        anchor = V
    else:
        # segment or point: two opposite sides plus the two end caps
        d = V[-1] - V[0]
        if not np.any(d):
            d = np.array([1.0, 0.0])
        nrm = np.array([d[1], -d[0]])
        a = np.stack([nrm, -nrm, d, -d])
        anchor = V[[0, 0, -1, 0]]
    a = a / np.linalg.norm(a, axis=1, keepdims=True)
    return a, np.sum(a * anchor, axis=1)


def _clip(V, a, b):
    """``conv(V) ∩ {a x <= b}`` in vertex form; empty array when the result is empty."""
    tol = _TOL * (1.0 + abs(b) + np.abs(V).max(initial=0.0))
    s = V @ a - b
    if np.all(s <= tol):
        return V
    if np.all(s > tol):
        return V[:0]
    out = []
    m = len(V)
    for i in range(m):
        j = (i + 1) % m
        if s[i] <= tol:
            out.append(V[i])
        if (s[i] <= tol) != (s[j] <= tol) and s[i] != s[j]:
            t = s[i] / (s[i] - s[j])
            out.append(V[i] + t * (V[j] - V[i]))
    return _hull(np.array(out)) if out else V[:0]


def _clip_all(V, A, b):
    for a_i, b_i in zip(A, b):
        V = _clip(V, a_i, b_i)
        if len(V) == 0:
            break
    return V


def _measurement_halfspaces(sys, k, y):
    """``{x : Xi x in y - Psi V}`` as ``A x <= b``; the zonotope's facets are slabs."""
    _, _, Xi, Psi = sys.matrices(k)
    _check_dim(Xi.shape[0])
    vc, vG = _zonotope_parts(sys.v_range, "v_range")
    a, b = _halfspaces(_hull(_zonotope_vertices(y - Psi @ vc, Psi @ vG)))
    return a @ Xi, b


def _rasterize(g: GridSet, V) -> np.ndarray:
    """Cells meeting ``conv(V)``: no separating axis among the axes and polygon normals."""
    if len(V) == 0:
        return np.zeros(g.shape, dtype=bool)
    a, _ = _halfspaces(V)
    K = np.vstack([np.eye(g.dim), a])
    proj = V @ K.T
    p_lo, p_hi = proj.min(axis=0), proj.max(axis=0)
    xc = g.all_centers()
    mid = xc @ K.T
    rad = 0.5 * np.abs(K) @ g.spacing
    tol = _TOL * (1.0 + np.abs(proj).max())
    ok = np.all((mid - rad <= p_hi + tol) & (mid + rad >= p_lo - tol), axis=1)
    return ok.reshape(g.shape)


def _domains(domain, T1):
    if isinstance(domain, IntervalBox):
        return [domain] * T1
    domain = list(domain)
    if len(domain) != T1:
        raise ValueError(f"need one domain box per step ({T1}), got {len(domain)}")
    return domain


def _box_vertices(box: IntervalBox):
    return _hull(_zonotope_vertices(box.center, np.diag(0.5 * box.widths)))


def grid_filter(sys: LinearSystem, ys, domain, delta: float, raise_empty: bool = True) -> list[GridSet]:
    """Outer lattice approximation of the exact posteriors for ``y[0..T]``.

    The posterior at ``k`` is propagated as a polygon and clipped to the
    domain box; the cells it meets are marked.

    Parameters
    ----------
    domain : IntervalBox or sequence of IntervalBox
        Bounded search box, shared or per step.  Marked sets are outer
        approximations of the exact ranges intersected with the domain.
    delta : float
        Cell width.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    _check_dim(sys.n)
    ys = np.asarray(ys, dtype=float).reshape(-1, sys.m)
    T1 = ys.shape[0]
    domains = _domains(domain, T1)
    wc, wG = _zonotope_parts(sys.w_range, "w_range")

    out = []
    region = None
    for k in range(T1):
        if k == 0:
            region = _hull(_zonotope_vertices(*_zonotope_parts(sys.x0_range, "x0_range")))
        elif len(region):
            Phi, Gamma, _, _ = sys.matrices(k - 1)
            moved = (region @ Phi.T)[:, None, :] + _zonotope_vertices(Gamma @ wc, Gamma @ wG)[None]
            region = _hull(moved.reshape(-1, sys.n))
        region = _clip_all(region, *_measurement_halfspaces(sys, k, ys[k]))
        region = _clip_all(region, *_halfspaces(_box_vertices(domains[k])))
        g = GridSet.covering(domains[k], delta)
        g = GridSet(g.origin, g.spacing, _rasterize(g, region), region)
        if g.is_empty and raise_empty:
            raise EmptyGridError(f"empty oracle posterior at k={k}", k=k)
        out.append(g)
    return out


def _region_of(g: GridSet):
    if g.region is not None:
        return g.region
    # sets not produced by grid_filter: hull of the marked cells
    c = g.centers()
    return _hull((c[:, None, :] + _zonotope_vertices(np.zeros(g.dim), np.diag(0.5 * g.spacing))[None]).reshape(-1, g.dim))


def grid_smooth(filter_sets: list[GridSet], sys: LinearSystem) -> list[GridSet]:
    """Backward pass ``S_k = P_k ∩ {x : Phi x in S_{k+1} - Gamma W}``, rasterized."""
    if not filter_sets:
        return []
    T = len(filter_sets) - 1
    wc, wG = _zonotope_parts(sys.w_range, "w_range")
    out = [None] * (T + 1)
    out[T] = filter_sets[T]
    region = _region_of(filter_sets[T])
    for k in range(T - 1, -1, -1):
        Phi, Gamma, _, _ = sys.matrices(k)
        f = filter_sets[k]
        back = np.empty((0, sys.n))
        if len(region):
            back = (region[:, None, :] - _zonotope_vertices(Gamma @ wc, Gamma @ wG)[None]).reshape(-1, sys.n)
        if len(back):
            a, b = _halfspaces(_hull(back))
            region = _clip_all(_region_of(f), a @ Phi, b)
        else:
            region = back
        out[k] = GridSet(f.origin, f.spacing, _rasterize(f, region) & f.mask, region)
    return out


# -- scalar monotone systems ------------------------------------------------------


def _cell_bounds(g: GridSet):
    c = g.all_centers()[:, 0]
    return c - 0.5 * g.spacing[0], c + 0.5 * g.spacing[0]


def _eta_vec(eta, x):
    return np.array([eta(float(v)) for v in x])


def _cell_images(g: GridSet, eta):
    lo, hi = _cell_bounds(g)
    a, b = _eta_vec(eta, lo), _eta_vec(eta, hi)
    return np.minimum(a, b), np.maximum(a, b)


def _meet(lo1, hi1, lo2, hi2):
    """Pairwise closed-interval intersection test, ``(len1, len2)``."""
    return (lo1[:, None] <= hi2[None, :] + _EPS) & (lo2[None, :] <= hi1[:, None] + _EPS)


def grid_filter_1d(sys: ScalarAffineSystem, ys, domain, delta: float, raise_empty: bool = True) -> list[GridSet]:
    """Cells meeting the exact posterior, using exact monotone cell images."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    ys = np.asarray(ys, dtype=float).reshape(-1)
    domains = _domains(domain, ys.size)
    wa, wb = sys.w_range.a, sys.w_range.b
    alpha = sys.meas_gain
    out = []
    prev = None
    for k, y in enumerate(ys):
        g = GridSet.covering(domains[k], delta)
        lo, hi = _cell_bounds(g)
        if k == 0:
            ok = (lo <= sys.x0_range.b + _EPS) & (hi >= sys.x0_range.a - _EPS)
        else:
            plo, phi = _cell_images(prev, sys.eta)
            sel = prev.mask.reshape(-1)
            ok = _meet(plo[sel] + wa, phi[sel] + wb, lo, hi).any(axis=0)
        m_lo, m_hi = sorted(((y - sys.v_range.b) / alpha, (y - sys.v_range.a) / alpha))
        ok &= (lo <= m_hi + _EPS) & (hi >= m_lo - _EPS)
        g = g.with_mask(ok)
        if g.is_empty and raise_empty:
            raise EmptyGridError(f"empty oracle posterior at k={k}", k=k)
        out.append(g)
        prev = g
    return out


def grid_smooth_1d(filter_sets: list[GridSet], sys: ScalarAffineSystem) -> list[GridSet]:
    if not filter_sets:
        return []
    T = len(filter_sets) - 1
    wa, wb = sys.w_range.a, sys.w_range.b
    out = [None] * (T + 1)
    out[T] = filter_sets[T]
    for k in range(T - 1, -1, -1):
        f, nxt = filter_sets[k], out[k + 1]
        ilo, ihi = _cell_images(f, sys.eta)
        nlo, nhi = _cell_bounds(nxt)
        sel_f, sel_n = f.mask.reshape(-1), nxt.mask.reshape(-1)
        keep = _meet(ilo[sel_f] + wa, ihi[sel_f] + wb, nlo[sel_n], nhi[sel_n]).any(axis=1)
        mask = np.zeros(f.mask.size, dtype=bool)
        mask[np.flatnonzero(sel_f)[keep]] = True
        out[k] = f.with_mask(mask)
    return out


def write_grid_set_csv(sets: list[GridSet], path) -> Path:
    """Marked-cell centres as ``k, x1..xn`` rows."""
    path = Path(path)
    n = sets[0].dim if sets else 1
    with path.open("w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k"] + [f"x{i + 1}" for i in range(n)])
        for k, g in enumerate(sets):
            for c in g.centers():
                w.writerow([k] + [repr(float(v)) for v in c])
    return path
