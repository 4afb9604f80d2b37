"""Monte-Carlo driver: simulate, filter, smooth, score and write CSV series.

Each trial draws its own trajectory from the ``(seed, trial)`` substream, so
results do not depend on how trials are spread over worker processes.
Per-trial rows are gathered in trial order and every aggregate is a plain mean
over those rows, which keeps the CSV output byte-identical across runs.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..cz import EmptySetError, IntervalBox, contains_point, interval_hull
from ..errors import InconsistentDataError
from ..interval1d import Interval, run_filter_1d, run_smoother_1d
from ..model import CSV_HEADER, LinearSystem, simulate_linear, simulate_scalar
from ..oracle import (
    grid_filter,
    grid_filter_1d,
    grid_smooth,
    grid_smooth_1d,
    hull_of_grid,
    write_grid_set_csv,
)
from ..rts import RtsConfig, TuneResult, smoothed_means, tune_grid, write_grid_csv
from ..smf import run_filter
from ..sms import run_smoother
from .config import ExperimentConfig

__all__ = [
    "TrialRecord",
    "RunRecord",
    "OracleReport",
    "run_experiment",
    "run_trial",
    "run_oracle_check",
    "run_rts_tuning",
    "point_estimate",
    "mse_series",
    "write_outputs",
]

log = logging.getLogger(__name__)

ORACLE_INFLATION = 0.1


def point_estimate(Z) -> np.ndarray:
    """Centre of the interval hull of a nonempty bounded set.

    Accepts a :class:`ConstrainedZonotope`, an :class:`IntervalBox` or a
    1-D :class:`Interval`.

    Raises
    ------
    EmptySetError
        If the set is empty.
    ValueError
        If the set is unbounded.
    """
    if isinstance(Z, Interval):
        if Z.empty:
            raise EmptySetError("point estimate of an empty interval")
        box = IntervalBox(np.array([Z.a]), np.array([Z.b]))
    elif isinstance(Z, IntervalBox):
        box = Z
    else:
        box = interval_hull(Z)
    if not np.all(np.isfinite(box.widths)):
        raise ValueError("point estimate of an unbounded set")
    return box.center


def mse_series(estimates, truths):
    """Mean squared Euclidean error per ``k`` and over all ``k``.

    Parameters
    ----------
    estimates, truths : array_like
        Shape ``(trials, T+1, n)``; a ``(T+1, n)`` array is one trial.

    Returns
    -------
    per_k : ndarray, shape (T+1,)
        Average over trials of ``|est_k - x_k|^2``.
    overall : float
        Average of ``per_k``.
    """
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truths, dtype=float)
    if est.shape != tru.shape:
        raise ValueError(f"estimates {est.shape} and truths {tru.shape} are not aligned")
    if est.ndim == 2:
        est, tru = est[None], tru[None]
    if est.ndim != 3 or est.shape[1] == 0:
        raise ValueError("expected arrays of shape (trials, T+1, n)")
    per_k = np.mean(np.sum((est - tru) ** 2, axis=-1), axis=0)
    return per_k, float(np.mean(per_k))


@dataclass(frozen=True, eq=False)
class TrialRecord:
    """Hull boxes and membership flags of one trial, indexed by ``k = 0..T``."""

    trial: int
    seed: int
    states: np.ndarray
    measurements: np.ndarray
    filt_lower: np.ndarray
    filt_upper: np.ndarray
    smooth_lower: np.ndarray | None = None
    smooth_upper: np.ndarray | None = None
    contained_filt: np.ndarray | None = None
    contained_smooth: np.ndarray | None = None


def _hulls(boxes, n):
    lo = np.array([b.lower for b in boxes]).reshape(-1, n)
    hi = np.array([b.upper for b in boxes]).reshape(-1, n)
    return lo, hi


def _run_linear_trial(sys: LinearSystem, cfg: ExperimentConfig, trial: int, smooth: bool) -> TrialRecord:
    traj = simulate_linear(sys, cfg.horizon, cfg.seed, trial)
    filt = run_filter(sys, traj)
    T1 = len(filt)
    f_box = [None] * T1
    for k in range(T1):
        try:
            f_box[k] = interval_hull(filt[k].posterior)
        except EmptySetError:
            raise InconsistentDataError(f"empty posterior at k={k} (trial {trial}, seed {cfg.seed})",
                                        k=k, trial=trial, seed=cfg.seed) from None
    s_box = None
    if smooth:
        sm = run_smoother(filt, sys)
        s_box = [None] * T1
        # backward order lets each smoothed LP start from the one it was built from
        for k in range(T1 - 1, -1, -1):
            try:
                s_box[k] = interval_hull(sm[k])
            except EmptySetError:
                raise InconsistentDataError(f"empty smoothed range at k={k} (trial {trial}, seed {cfg.seed})",
                                            k=k, trial=trial, seed=cfg.seed) from None
    cf = cs = None
    if cfg.check_containment:
        cf = np.array([contains_point(filt[k].posterior, traj.states[k]) for k in range(T1)])
        if smooth:
            cs = np.array([contains_point(sm[k], traj.states[k]) for k in range(T1)])
    f_lo, f_hi = _hulls(f_box, sys.n)
    s_lo, s_hi = _hulls(s_box, sys.n) if smooth else (None, None)
    return TrialRecord(trial, cfg.seed, traj.states, traj.measurements, f_lo, f_hi, s_lo, s_hi, cf, cs)


def _interval_contains(iv: Interval, x: float) -> bool:
    return iv.contains(x, tol=1e-7 * (1.0 + abs(x)))


def _run_scalar_trial(sys, cfg: ExperimentConfig, trial: int, smooth: bool) -> TrialRecord:
    traj = simulate_scalar(sys, cfg.horizon, cfg.seed, trial)
    try:
        filt = run_filter_1d(sys, traj.measurements.reshape(-1))
        sm = run_smoother_1d(filt, sys) if smooth else None
    except InconsistentDataError as exc:
        raise InconsistentDataError(f"{exc} (trial {trial}, seed {cfg.seed})",
                                    k=exc.k, trial=trial, seed=cfg.seed) from None
    x = traj.states.reshape(-1)
    f_lo = np.array([[s.posterior.a] for s in filt])
    f_hi = np.array([[s.posterior.b] for s in filt])
    s_lo = s_hi = cf = cs = None
    if smooth:
        s_lo = np.array([[iv.a] for iv in sm])
        s_hi = np.array([[iv.b] for iv in sm])
    if cfg.check_containment:
        cf = np.array([_interval_contains(s.posterior, x[k]) for k, s in enumerate(filt)])
        if smooth:
            cs = np.array([_interval_contains(iv, x[k]) for k, iv in enumerate(sm)])
    return TrialRecord(trial, cfg.seed, traj.states, traj.measurements, f_lo, f_hi, s_lo, s_hi, cf, cs)


def run_trial(cfg: ExperimentConfig, trial: int, smooth: bool = True, system=None) -> TrialRecord:
    """Simulate and estimate one trial."""
    sys = system if system is not None else cfg.build_system()
    if cfg.system == "scalar":
        return _run_scalar_trial(sys, cfg, trial, smooth)
    return _run_linear_trial(sys, cfg, trial, smooth)


def _trial_chunk(args):
    cfg, trials, smooth = args
    sys = cfg.build_system()
    return [run_trial(cfg, t, smooth, sys) for t in trials]


@dataclass(frozen=True, eq=False)
class OracleReport:
    """CZ (or interval) hulls next to grid-oracle hulls for one trial.

    Arrays have shape ``(T+1, n)``; ``uncontained_*`` counts the marked cell
    centres farther than ``delta`` from the exact range.
    """

    delta: float
    cz_filt: tuple
    cz_smooth: tuple
    grid_filt: tuple
    grid_smooth: tuple
    marked_filt: np.ndarray
    marked_smooth: np.ndarray
    uncontained_filt: np.ndarray
    uncontained_smooth: np.ndarray
    filter_sets: list = field(repr=False, default=None)
    smooth_sets: list = field(repr=False, default=None)

    @property
    def max_face_gap(self) -> float:
        """Largest face distance between CZ and oracle smoothed hulls."""
        return float(max(np.max(np.abs(self.cz_smooth[0] - self.grid_smooth[0])),
                         np.max(np.abs(self.cz_smooth[1] - self.grid_smooth[1]))))

    @property
    def max_face_gap_filt(self) -> float:
        return float(max(np.max(np.abs(self.cz_filt[0] - self.grid_filt[0])),
                         np.max(np.abs(self.cz_filt[1] - self.grid_filt[1]))))


def _grid_hulls(sets, n):
    return _hulls([hull_of_grid(g) for g in sets], n)


def run_oracle_check(cfg: ExperimentConfig, trial: int = 0, check_centers: bool = True) -> OracleReport:
    """Compare the exact estimator with the grid oracle on one trial.

    The oracle domain at ``k`` is the posterior hull inflated by 10%.  With
    ``check_centers`` every marked cell centre is tested for membership in the
    exact range with tolerance ``delta``.
    """
    sys = cfg.build_system()
    delta = cfg.oracle_delta
    if cfg.system == "scalar":
        traj = simulate_scalar(sys, cfg.horizon, cfg.seed, trial)
        ys = traj.measurements.reshape(-1)
        filt = run_filter_1d(sys, ys)
        sm = run_smoother_1d(filt, sys)
        f_sets = [s.posterior for s in filt]
        boxes = [IntervalBox(np.array([iv.a]), np.array([iv.b])) for iv in f_sets]
        domains = [b.inflate(ORACLE_INFLATION) for b in boxes]
        gf = grid_filter_1d(sys, ys, domains, delta)
        gs = grid_smooth_1d(gf, sys)

        def member(iv, c):
            return iv.contains(float(c[0]), tol=delta)
    else:
        traj = simulate_linear(sys, cfg.horizon, cfg.seed, trial)
        filt = run_filter(sys, traj)
        sm = run_smoother(filt, sys)
        f_sets = [s.posterior for s in filt]
        boxes = [interval_hull(P) for P in f_sets]
        domains = [b.inflate(ORACLE_INFLATION) for b in boxes]
        gf = grid_filter(sys, traj.measurements, domains, delta)
        gs = grid_smooth(gf, sys)

        def member(Z, c):
            return contains_point(Z, c, atol=delta)
    n = sys.n if isinstance(sys, LinearSystem) else 1
    T1 = len(f_sets)
    if isinstance(sys, LinearSystem):
        s_boxes = [None] * T1
        for k in range(T1 - 1, -1, -1):
            s_boxes[k] = interval_hull(sm[k])
    else:
        s_boxes = [IntervalBox(np.array([iv.a]), np.array([iv.b])) for iv in sm]
    unc_f = np.zeros(T1, dtype=int)
    unc_s = np.zeros(T1, dtype=int)
    if check_centers:
        for k in range(T1):
            unc_f[k] = sum(not member(f_sets[k], c) for c in gf[k].centers())
            unc_s[k] = sum(not member(sm[k], c) for c in gs[k].centers())
    return OracleReport(
        delta=delta,
        cz_filt=_hulls(boxes, n),
        cz_smooth=_hulls(s_boxes, n),
        grid_filt=_grid_hulls(gf, n),
        grid_smooth=_grid_hulls(gs, n),
        marked_filt=np.array([g.n_marked for g in gf]),
        marked_smooth=np.array([g.n_marked for g in gs]),
        uncontained_filt=unc_f,
        uncontained_smooth=unc_s,
        filter_sets=gf,
        smooth_sets=gs,
    )


def run_rts_tuning(cfg: ExperimentConfig, trajectories=None) -> TuneResult:
    """Grid search of the RTS variances over ``cfg.rts_trials`` trials."""
    sys = cfg.build_system()
    if not isinstance(sys, LinearSystem):
        raise ValueError("the RTS baseline needs a linear system")
    return tune_grid(sys, cfg.rts_trials, cfg.q_grid, cfg.r_grid, cfg.seed, T=cfg.horizon,
                     trajectories=trajectories)


@dataclass(frozen=True, eq=False)
class RunRecord:
    """Per-trial, per-``k`` results of one experiment and their averages.

    Arrays are indexed ``[trial, k]`` (and ``[..., coordinate]`` for boxes and
    states).  Smoothed fields are ``None`` for filter-only runs.
    """

    config: ExperimentConfig
    states: np.ndarray
    filt_lower: np.ndarray
    filt_upper: np.ndarray
    smooth_lower: np.ndarray | None = None
    smooth_upper: np.ndarray | None = None
    contained_filt: np.ndarray | None = None
    contained_smooth: np.ndarray | None = None
    rts_estimates: np.ndarray | None = None
    rts_params: tuple | None = None
    tuning: TuneResult | None = None
    oracle: OracleReport | None = None

    @property
    def trials(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.states.shape[1] - 1

    @property
    def n_records(self) -> int:
        return self.trials * (self.horizon + 1)

    @property
    def smoothed(self) -> bool:
        return self.smooth_lower is not None

    @property
    def diam_filt(self) -> np.ndarray:
        return np.max(self.filt_upper - self.filt_lower, axis=-1)

    @property
    def diam_smooth(self) -> np.ndarray | None:
        return None if not self.smoothed else np.max(self.smooth_upper - self.smooth_lower, axis=-1)

    @property
    def center_filt(self) -> np.ndarray:
        return 0.5 * (self.filt_lower + self.filt_upper)

    @property
    def center_smooth(self) -> np.ndarray | None:
        return None if not self.smoothed else 0.5 * (self.smooth_lower + self.smooth_upper)

    @property
    def avg_diam_filt(self) -> np.ndarray:
        return np.mean(self.diam_filt, axis=0)

    @property
    def avg_diam_smooth(self) -> np.ndarray | None:
        return None if not self.smoothed else np.mean(self.diam_smooth, axis=0)

    def mse_smf(self):
        return mse_series(self.center_filt, self.states)

    def mse_sms(self):
        return None if not self.smoothed else mse_series(self.center_smooth, self.states)

    def mse_rts(self):
        return None if self.rts_estimates is None else mse_series(self.rts_estimates, self.states)

    @property
    def all_contained(self) -> bool:
        flags = [f for f in (self.contained_filt, self.contained_smooth) if f is not None]
        return all(bool(np.all(f)) for f in flags)

    def violations(self) -> list[tuple[str, int, int]]:
        """``(kind, trial, k)`` for every true state outside its range."""
        out = []
        for kind, flags in (("filtered", self.contained_filt), ("smoothed", self.contained_smooth)):
            if flags is not None:
                out += [(kind, int(t), int(k)) for t, k in np.argwhere(~flags)]
        return out


def _stack(recs, name):
    vals = [getattr(r, name) for r in recs]
    return None if vals[0] is None else np.stack(vals)


def _chunks(trials: int, workers: int):
    per = -(-trials // workers)
    return [list(range(i, min(i + per, trials))) for i in range(0, trials, per)]


def run_experiment(cfg: ExperimentConfig, smooth: bool = True, rts: bool | None = None,
                   oracle: bool | None = None, progress=None) -> RunRecord:
    """Run all trials of ``cfg`` and collect a :class:`RunRecord`.

    Parameters
    ----------
    smooth : bool
        Also run the backward smoother.
    rts, oracle : bool, optional
        Override ``cfg.rts`` / ``cfg.oracle``.
    progress : callable, optional
        Called as ``progress(done, total)`` after each trial (single worker)
        or each chunk (several workers).

    Raises
    ------
    InconsistentDataError
        If a range comes out empty; ``trial`` and ``seed`` identify the run.
    """
    rts = cfg.rts if rts is None else rts
    oracle = cfg.oracle if oracle is None else oracle
    if rts and cfg.system != "linear":
        raise ValueError("the RTS baseline needs a linear system")
    recs: list[TrialRecord] = []
    if cfg.workers == 1:
        sys = cfg.build_system()
        for t in range(cfg.trials):
            recs.append(run_trial(cfg, t, smooth, sys))
            if progress:
                progress(t + 1, cfg.trials)
    else:
        chunks = _chunks(cfg.trials, cfg.workers)
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            # map keeps chunk order, so the reduction order is fixed
            for part in pool.map(_trial_chunk, [(cfg, c, smooth) for c in chunks]):
                recs.extend(part)
                if progress:
                    progress(len(recs), cfg.trials)
    rts_est = params = tuning = None
    if rts:
        sys = cfg.build_system()
        q, r = cfg.rts_q, cfg.rts_r
        if cfg.rts_tune:
            trajs = None
            if cfg.rts_trials <= cfg.trials:
                trajs = [_as_traj(rec) for rec in recs[: cfg.rts_trials]]
            tuning = run_rts_tuning(cfg, trajs)
            q, r = tuning.q, tuning.r
        ys = np.stack([rec.measurements for rec in recs])
        rts_est = smoothed_means(sys, ys, RtsConfig(q, r))
        params = (q, r)
    report = run_oracle_check(cfg) if oracle else None
    return RunRecord(
        config=cfg,
        states=_stack(recs, "states"),
        filt_lower=_stack(recs, "filt_lower"),
        filt_upper=_stack(recs, "filt_upper"),
        smooth_lower=_stack(recs, "smooth_lower"),
        smooth_upper=_stack(recs, "smooth_upper"),
        contained_filt=_stack(recs, "contained_filt"),
        contained_smooth=_stack(recs, "contained_smooth"),
        rts_estimates=rts_est,
        rts_params=params,
        tuning=tuning,
        oracle=report,
    )


@dataclass(frozen=True)
class _Traj:
    states: np.ndarray
    measurements: np.ndarray


def _as_traj(rec: TrialRecord):
    return _Traj(rec.states, rec.measurements)


# -- CSV output ----------------------------------------------------------------


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def _open(path):
    fh = Path(path).open("w", newline="")
    fh.write(CSV_HEADER + "\n")
    return fh, csv.writer(fh, lineterminator="\n")


def write_diameters_csv(rec: RunRecord, path) -> Path:
    fh, w = _open(path)
    with fh:
        w.writerow(["k", "avg_filtered_diam", "avg_smoothed_diam"])
        f, s = rec.avg_diam_filt, rec.avg_diam_smooth
        for k in range(rec.horizon + 1):
            w.writerow([k, _fmt(f[k]), _fmt(None if s is None else s[k])])
    return Path(path)


def write_mse_csv(rec: RunRecord, path) -> Path:
    fh, w = _open(path)
    sms, rts, smf = rec.mse_sms(), rec.mse_rts(), rec.mse_smf()
    with fh:
        w.writerow(["k", "mse_sms_center", "mse_rts", "mse_smf_center"])
        for k in range(rec.horizon + 1):
            w.writerow([k, _fmt(None if sms is None else sms[0][k]),
                        _fmt(None if rts is None else rts[0][k]), _fmt(smf[0][k])])
    return Path(path)


def write_hulls_csv(rec: RunRecord, path, trial: int = 0) -> Path:
    """Hull boxes of one trial over ``cfg.window``, with the true state."""
    n = rec.states.shape[-1]
    lo, hi = rec.config.window
    hi = min(hi, rec.horizon)
    cols = ["k"] + [f"x{i + 1}" for i in range(n)]
    cols += [f"filt_{b}{i + 1}" for i in range(n) for b in ("lo", "hi")]
    cols += [f"smooth_{b}{i + 1}" for i in range(n) for b in ("lo", "hi")]
    fh, w = _open(path)
    with fh:
        w.writerow(cols)
        for k in range(lo, hi + 1):
            row = [k] + [_fmt(v) for v in rec.states[trial, k]]
            for i in range(n):
                row += [_fmt(rec.filt_lower[trial, k, i]), _fmt(rec.filt_upper[trial, k, i])]
            for i in range(n):
                if rec.smoothed:
                    row += [_fmt(rec.smooth_lower[trial, k, i]), _fmt(rec.smooth_upper[trial, k, i])]
                else:
                    row += ["", ""]
            w.writerow(row)
    return Path(path)


def write_oracle_csv(rep: OracleReport, path) -> Path:
    """Per ``k``, kind and coordinate: exact hull, oracle hull, gap in cells and centre counts."""
    fh, w = _open(path)
    with fh:
        w.writerow(["k", "kind", "coord", "exact_lo", "exact_hi", "oracle_lo", "oracle_hi",
                    "max_gap_over_delta", "marked_cells", "uncontained_centers"])
        T1, n = rep.cz_filt[0].shape
        for kind, cz, gr, marked, unc in (
            ("filtered", rep.cz_filt, rep.grid_filt, rep.marked_filt, rep.uncontained_filt),
            ("smoothed", rep.cz_smooth, rep.grid_smooth, rep.marked_smooth, rep.uncontained_smooth),
        ):
            for k in range(T1):
                for i in range(n):
                    gap = max(abs(cz[0][k, i] - gr[0][k, i]), abs(cz[1][k, i] - gr[1][k, i])) / rep.delta
                    w.writerow([k, kind, i + 1, _fmt(cz[0][k, i]), _fmt(cz[1][k, i]),
                                _fmt(gr[0][k, i]), _fmt(gr[1][k, i]), _fmt(gap),
                                int(marked[k]), int(unc[k])])
    return Path(path)


def write_outputs(rec: RunRecord, out_dir) -> dict[str, Path]:
    """Write every CSV the record supports into ``out_dir``; returns name -> path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "diameters": write_diameters_csv(rec, out / "diameters.csv"),
        "mse": write_mse_csv(rec, out / "mse.csv"),
        "hulls_trial0": write_hulls_csv(rec, out / "hulls_trial0.csv"),
    }
    if rec.tuning is not None:
        paths["rts_grid"] = write_grid_csv(rec.tuning, out / "rts_grid.csv")
    if rec.oracle is not None:
        paths.update(write_oracle_outputs(rec.oracle, out))
    return paths


def write_oracle_outputs(rep: OracleReport, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return {
        "oracle_check": write_oracle_csv(rep, out / "oracle_check.csv"),
        "oracle_filtered": write_grid_set_csv(rep.filter_sets, out / "oracle_filtered.csv"),
        "oracle_smoothed": write_grid_set_csv(rep.smooth_sets, out / "oracle_smoothed.csv"),
    }
