"""End-to-end examples that double as smoke tests.

``example_linear`` runs the planar benchmark and ``example_scalar`` the
cube-root benchmark from the shipped configs, check that smoothing never
widens a range, and write the CSV series.  Both finish in well under a minute.

Run from the command line with ``python -m zonosmooth.examples [linear|scalar]``.
"""

from __future__ import annotations

import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .harness.config import ExperimentConfig, load_config
from .harness.experiment import RunRecord, run_experiment, write_outputs

__all__ = ["example_linear", "example_scalar", "config_path", "check_smoothing_gain", "DIAM_TOL"]

DIAM_TOL = 1e-7


def config_path(name: str) -> Path:
    """Path of a config file shipped in ``zonosmooth/configs``."""
    return Path(str(resources.files("zonosmooth") / "configs" / name))


def check_smoothing_gain(rec: RunRecord) -> None:
    """Assert that no smoothed range is wider than its posterior and that all true states are covered.

    The per-trial check is ``diam(smoothed_k) <= diam(posterior_k) + DIAM_TOL``;
    the averages over trials must satisfy the same inequality.
    """
    df, ds = rec.diam_filt, rec.diam_smooth
    worst = float(np.max(ds - df))
    assert worst <= DIAM_TOL, f"smoothed range wider than posterior by {worst:.3e}"
    assert np.all(rec.avg_diam_smooth <= rec.avg_diam_filt + DIAM_TOL), "average smoothed diameter exceeds filtered"
    bad = rec.violations()
    assert not bad, f"true state outside its range: {bad[:5]}"


def _run(default: str, config, out, trials, horizon) -> int:
    if isinstance(config, ExperimentConfig):
        cfg = config
    else:
        cfg = load_config(config if config is not None else config_path(default))
    cfg = cfg.with_overrides(out=out, trials=trials, horizon=horizon)
    rec = run_experiment(cfg)
    check_smoothing_gain(rec)
    write_outputs(rec, cfg.out)
    return 0


def example_linear(config=None, out=None, trials=None, horizon=None) -> int:
    """Planar linear benchmark: 50 trials with T = 20 by default.

    Returns 0 on success.  A failed check raises ``AssertionError`` and an
    invalid config raises :class:`~zonosmooth.harness.config.ConfigError`.
    """
    return _run("linear_example.json", config, out, trials, horizon)


def example_scalar(config=None, out=None, trials=None, horizon=None) -> int:
    """Cube-root scalar benchmark: 50 trials with T = 50 by default."""
    return _run("scalar_example.cfg", config, out, trials, horizon)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    which = argv[0] if argv else "both"
    if which not in ("linear", "scalar", "both"):
        print("usage: python -m zonosmooth.examples [linear|scalar]", file=sys.stderr)
        return 2
    if which in ("linear", "both"):
        example_linear()
        print("linear example passed")
    if which in ("scalar", "both"):
        example_scalar()
        print("scalar example passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
