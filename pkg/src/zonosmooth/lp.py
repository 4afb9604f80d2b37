"""Bounded-variable linear programming.

Every constrained-zonotope query (membership, emptiness, support values,
interval hulls) reduces to a linear program of the form

    minimize / maximize   f @ x
    subject to            A @ x = b          (or row_lower <= A @ x <= row_upper)
                          lower <= x <= upper

where some bounds may be infinite.  The engine is the HiGHS dual simplex.
:class:`BoundedLp` keeps one solver instance per constraint set so that the
several objectives asked of the same set (four support directions plus a
membership test for a planar set) are warm started from the previous basis.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import highspy
import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

__all__ = [
    "LpTolerances",
    "DEFAULT_TOLERANCES",
    "LpProblem",
    "LpResult",
    "LpDimensionError",
    "LpSolverError",
    "BoundedLp",
    "solve_lp",
    "is_feasible",
]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class LpDimensionError(ValueError):
    """Inconsistent shapes in an LP description."""


class _Unverified(Exception):
    pass


class LpSolverError(RuntimeError):
    """The solver broke down or produced a point that fails re-verification."""


@dataclass(frozen=True)
class LpTolerances:
    """Numerical tolerances of the LP engine.

    ``feasibility`` and ``optimality`` are handed to HiGHS as its primal and
    dual feasibility tolerances.  ``verify`` bounds the residual accepted when
    a reported optimum is re-checked against the unscaled constraints; it is
    relative to ``1 + |rhs| + |A| |x|``.
    """

    feasibility: float = 1e-9
    optimality: float = 1e-9
    pivot: float = 1e-11
    verify: float = 1e-7


DEFAULT_TOLERANCES = LpTolerances()


def _as_matrix(m, n_cols=None):
    if sp.issparse(m):
        return sp.csc_matrix(m, dtype=float)
    arr = np.asarray(m, dtype=float)
    if arr.size == 0:
        arr = arr.reshape(0, n_cols if n_cols is not None else arr.shape[-1] if arr.ndim == 2 else 0)
    if arr.ndim != 2:
        raise LpDimensionError(f"constraint matrix must be 2-D, got shape {arr.shape}")
    return sp.csc_matrix(arr)


@dataclass(frozen=True, eq=False)
class LpProblem:
    """``sense`` objective over ``{x : eq_matrix x = eq_rhs, lower <= x <= upper}``."""

    objective: np.ndarray
    eq_matrix: np.ndarray | sp.spmatrix
    eq_rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    sense: str = "minimize"

    def __post_init__(self):
        obj = np.atleast_1d(np.asarray(self.objective, dtype=float))
        n = obj.shape[0]
        mat = _as_matrix(self.eq_matrix, n)
        rhs = np.atleast_1d(np.asarray(self.eq_rhs, dtype=float)).reshape(-1)
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if obj.ndim != 1:
            raise LpDimensionError("objective must be a vector")
        if mat.shape[1] != n or lo.shape != (n,) or hi.shape != (n,):
            raise LpDimensionError(
                f"objective has {n} entries but matrix is {mat.shape}, bounds {lo.shape}/{hi.shape}"
            )
        if mat.shape[0] != rhs.shape[0]:
            raise LpDimensionError(f"matrix has {mat.shape[0]} rows but rhs has {rhs.shape[0]}")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo > hi):
            raise LpDimensionError("bounds must satisfy lower <= upper")
        if self.sense not in ("minimize", "maximize"):
            raise LpDimensionError(f"unknown sense {self.sense!r}")
        object.__setattr__(self, "objective", obj)
        object.__setattr__(self, "eq_matrix", mat)
        object.__setattr__(self, "eq_rhs", rhs)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def n_vars(self) -> int:
        return self.objective.shape[0]


@dataclass(frozen=True, eq=False)
class LpResult:
    status: str
    value: float | None = None
    argmin: np.ndarray | None = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class BoundedLp:
    """A reusable LP over fixed row/column bounds.

    Rows are ``row_lower <= matrix @ x <= row_upper``; equality rows have
    equal bounds and free rows have infinite ones.  The object owns a HiGHS
    instance and is therefore not safe to share between threads.
    """

    def __init__(self, matrix, row_lower, row_upper, lower, upper, tolerances=DEFAULT_TOLERANCES):
        lo = np.asarray(lower, dtype=float).reshape(-1)
        hi = np.asarray(upper, dtype=float).reshape(-1)
        n = lo.shape[0]
        mat = _as_matrix(matrix, n)
        rlo = np.asarray(row_lower, dtype=float).reshape(-1)
        rhi = np.asarray(row_upper, dtype=float).reshape(-1)
        if mat.shape != (rlo.shape[0], n) or rhi.shape != rlo.shape or hi.shape != lo.shape:
            raise LpDimensionError(
                f"matrix {mat.shape} inconsistent with {rlo.shape[0]} rows and {n} columns"
            )
        if np.any(lo > hi) or np.any(rlo > rhi):
            raise LpDimensionError("bounds must satisfy lower <= upper")

        self.tolerances = tolerances
        self.matrix = mat
        self.row_lower = rlo.copy()
        self.row_upper = rhi.copy()
        self.lower = lo
        self.upper = hi
        self.n_vars = n
        self.n_rows = mat.shape[0]
        self._abs_row_sums = np.asarray(abs(mat).sum(axis=1)).reshape(-1)
        self._highs = None
        self._trivially_infeasible = self._zero_row_conflict()
        self._optimal_bases = {}
        self._basis_cache = None

    def _zero_row_conflict(self) -> bool:
        # an all-zero row can only hold if 0 lies within its bounds
        if self.n_rows == 0:
            return False
        empty_rows = self._abs_row_sums == 0.0
        tol = self.tolerances.feasibility
        bad = empty_rows & ((self.row_lower > tol) | (self.row_upper < -tol))
        return bool(np.any(bad))

    def _model(self):
        if self._highs is not None:
            return self._highs
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("presolve", "off")
        h.setOptionValue("threads", 1)
        # re-solves mostly change only the objective, which keeps the basis primal feasible
        h.setOptionValue("simplex_strategy", 4)
        h.setOptionValue("primal_feasibility_tolerance", self.tolerances.feasibility)
        h.setOptionValue("dual_feasibility_tolerance", self.tolerances.optimality)
        lp = highspy.HighsLp()
        lp.num_col_ = self.n_vars
        lp.num_row_ = self.n_rows
        lp.col_cost_ = np.zeros(self.n_vars)
        lp.col_lower_ = self.lower
        lp.col_upper_ = self.upper
        lp.row_lower_ = self.row_lower
        lp.row_upper_ = self.row_upper
        a = lp.a_matrix_
        a.format_ = highspy.MatrixFormat.kColwise
        a.num_col_ = self.n_vars
        a.num_row_ = self.n_rows
        a.start_ = self.matrix.indptr
        a.index_ = self.matrix.indices
        a.value_ = self.matrix.data
        status = h.passModel(lp)
        if status == highspy.HighsStatus.kError:
            raise LpSolverError("HiGHS rejected the model")
        self._highs = h
        return h

    def set_row_bounds(self, rows, lower, upper) -> None:
        """Change the bounds of ``rows`` in place (warm start is kept)."""
        rows = np.asarray(rows, dtype=np.int32).reshape(-1)
        lower = np.asarray(lower, dtype=float).reshape(-1)
        upper = np.asarray(upper, dtype=float).reshape(-1)
        self.row_lower[rows] = lower
        self.row_upper[rows] = upper
        self._trivially_infeasible = self._zero_row_conflict()
        if self._highs is not None and rows.size:
            self._highs.changeRowsBounds(rows.size, rows, lower, upper)

    def basis(self):
        """``(col_status, row_status)`` lists of the last solve, or None.

        Entries are HiGHS basis-status values; bases are kept in that form so
        they can be spliced and passed back without conversion.
        """
        if self._highs is None:
            return None
        if self._basis_cache is None:
            self._basis_cache = _as_lists(self._highs.getBasis())
        return self._basis_cache

    @property
    def started(self) -> bool:
        """Whether a solver model exists (and so holds a basis to continue from)."""
        return self._highs is not None

    def optimal_basis(self, objective, sense):
        """Basis of an earlier optimal solve with exactly this objective, if any."""
        key = _key(objective, sense)
        b = self._optimal_bases.get(key)
        if b is not None and not isinstance(b, tuple):
            b = self._optimal_bases[key] = _as_lists(b)
        return b

    def _set_basis(self, basis) -> bool:
        cols, rows = basis
        if len(cols) != self.n_vars or len(rows) != self.n_rows:
            return False
        b = highspy.HighsBasis()
        b.col_status = cols
        b.row_status = rows
        b.valid = True
        return self._highs.setBasis(b) != highspy.HighsStatus.kError

    def _run(self, objective, sense, basis=None):
        h = self._model()
        cost = np.asarray(objective, dtype=float).reshape(-1)
        if cost.shape[0] != self.n_vars:
            raise LpDimensionError(f"objective has {cost.shape[0]} entries, expected {self.n_vars}")
        if basis is not None:
            # a rejected basis just means a solve from the current one
            self._set_basis(basis)
        if self.n_vars:
            h.changeColsCost(self.n_vars, np.arange(self.n_vars, dtype=np.int32), cost)
        h.changeObjectiveSense(
            highspy.ObjSense.kMaximize if sense == "maximize" else highspy.ObjSense.kMinimize
        )
        self._basis_cache = None
        h.run()
        return h.getModelStatus()

    def optimize(self, objective, sense: str = "minimize", basis=None) -> LpResult:
        """Solve with ``objective``; ``basis`` optionally seeds the simplex."""
        if sense not in ("minimize", "maximize"):
            raise LpDimensionError(f"unknown sense {sense!r}")
        if self._trivially_infeasible:
            return LpResult(INFEASIBLE)
        if self.n_vars == 0:
            return self._empty_problem()

        try:
            return self._optimize_once(objective, sense, basis)
        except _Unverified as exc:
            # a drifted factorization occasionally leaves a point slightly
            # off the rows; a fresh model solved cold settles it
            log.debug("retrying LP from scratch: %s", exc)
            self._reset()
            try:
                return self._optimize_once(objective, sense, None)
            except _Unverified as exc2:
                raise LpSolverError(str(exc2)) from None

    def _reset(self):
        self._highs = None
        self._basis_cache = None
        self._optimal_bases.clear()

    def _optimize_once(self, objective, sense, basis):
        ms = highspy.HighsModelStatus
        status = self._run(objective, sense, basis)
        if status == ms.kUnboundedOrInfeasible:
            # disambiguate with a phase-1 solve
            if not self.feasible():
                return LpResult(INFEASIBLE)
            status = ms.kUnbounded
        if status == ms.kInfeasible:
            return LpResult(INFEASIBLE)
        if status == ms.kUnbounded:
            return LpResult(UNBOUNDED, value=np.inf if sense == "maximize" else -np.inf)
        if status not in (ms.kOptimal, ms.kModelEmpty):
            raise LpSolverError(f"HiGHS stopped with status {self._highs.modelStatusToString(status)}")

        x = np.array(self._highs.getSolution().col_value, dtype=float)
        self._verify(x)
        cost = np.asarray(objective, dtype=float).reshape(-1)
        if len(self._optimal_bases) < 16:
            # kept unconverted; most are never asked for
            self._optimal_bases[_key(cost, sense)] = self._highs.getBasis()
        return LpResult(OPTIMAL, float(cost @ x), x)

    def feasible(self) -> bool:
        """Phase-1 test: is ``{row bounds, column bounds}`` nonempty?"""
        if self._trivially_infeasible:
            return False
        if self.n_vars == 0:
            return self._empty_problem().optimal
        try:
            return self._feasible_once()
        except _Unverified as exc:
            log.debug("retrying feasibility from scratch: %s", exc)
            self._reset()
            try:
                return self._feasible_once()
            except _Unverified as exc2:
                raise LpSolverError(str(exc2)) from None

    def _feasible_once(self) -> bool:
        ms = highspy.HighsModelStatus
        status = self._run(np.zeros(self.n_vars), "minimize")
        if status in (ms.kOptimal, ms.kModelEmpty):
            self._verify(np.array(self._highs.getSolution().col_value, dtype=float))
            return True
        if status in (ms.kInfeasible, ms.kUnboundedOrInfeasible):
            return False
        raise LpSolverError(f"HiGHS stopped with status {self._highs.modelStatusToString(status)}")

    def _empty_problem(self) -> LpResult:
        tol = self.tolerances.feasibility
        if np.all(self.row_lower <= tol) and np.all(self.row_upper >= -tol):
            return LpResult(OPTIMAL, 0.0, np.zeros(0))
        return LpResult(INFEASIBLE)

    def _verify(self, x) -> None:
        tol = self.tolerances.verify
        scale = 1.0 + (np.max(np.abs(x)) if x.size else 0.0)
        col_tol = tol * scale
        if np.any(x < self.lower - col_tol) or np.any(x > self.upper + col_tol):
            raise _Unverified("reported point violates variable bounds")
        if self.n_rows == 0:
            return
        act = self.matrix @ x
        finite_lo = np.where(np.isfinite(self.row_lower), np.abs(self.row_lower), 0.0)
        row_tol = tol * (1.0 + finite_lo + self._abs_row_sums * scale)
        if np.any(act < self.row_lower - row_tol) or np.any(act > self.row_upper + row_tol):
            worst = np.max(np.maximum(self.row_lower - act, act - self.row_upper))
            raise _Unverified(f"reported point violates rows by {worst:.3e}")


BASIC = highspy.HighsBasisStatus.kBasic
AT_LOWER = highspy.HighsBasisStatus.kLower
AT_ZERO = highspy.HighsBasisStatus.kZero


def _as_lists(b):
    if not b.valid:
        return None
    return list(b.col_status), list(b.row_status)


def _key(objective, sense):
    return sense, np.asarray(objective, dtype=float).tobytes()


def _from_problem(p: LpProblem, tolerances) -> BoundedLp:
    return BoundedLp(p.eq_matrix, p.eq_rhs, p.eq_rhs, p.lower, p.upper, tolerances)


def solve_lp(p: LpProblem, tolerances: LpTolerances = DEFAULT_TOLERANCES) -> LpResult:
    """Global optimum of ``p``, or an infeasible/unbounded status."""
    return _from_problem(p, tolerances).optimize(p.objective, p.sense)


def is_feasible(p: LpProblem, tolerances: LpTolerances = DEFAULT_TOLERANCES) -> bool:
    return _from_problem(p, tolerances).feasible()
