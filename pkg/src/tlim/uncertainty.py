"""Empirical bootstrap errors and bin-size diagnostics.

Replicate streams are split from the master seed by a counter so they
are order-independent and safe to evaluate in parallel; aggregation
sorts by replicate index, so results are bit-identical for a fixed seed
regardless of scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AllReplicatesFailed, EstimationError
from .estimators import (
    TargetSpec,
    _cell_sign,
    _cell_target_pairs,
    joint_cell_counts,
    multiplicative_interaction,
    resolve_spec,
    row_cell_labels,
)
from .store import DEFAULT_MIN_BIN_COUNT, SampleMatrix

DEFAULT_REPLICATES = 100


@dataclass(frozen=True)
class BootstrapResult:
    point_estimate: float
    boot_mean: float
    stderr: float
    ci_low: float
    ci_high: float
    n_replicates: int
    n_failed: int
    seed: int

    def __post_init__(self):
        if self.stderr < 0 or self.ci_low > self.ci_high:
            raise ValueError("inconsistent bootstrap summary")
        if self.n_failed > self.n_replicates:
            raise ValueError("more failures than replicates")

    def to_record(self) -> dict:
        return {
            "mean": self.boot_mean,
            "stderr": self.stderr,
            "ci": [self.ci_low, self.ci_high],
            "B": self.n_replicates,
            "n_failed": self.n_failed,
            "seed": self.seed,
        }


def _replicate_rng(seed, replicate):
    return np.random.default_rng(
        np.random.SeedSequence(entropy=int(seed), spawn_key=(int(replicate),))
    )


def _summarise(point, values, n_replicates, n_failed, seed) -> BootstrapResult:
    if not values:
        raise AllReplicatesFailed(
            f"all {n_replicates} bootstrap replicates failed"
        )
    arr = np.asarray(values, np.float64)
    stderr = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    lo, hi = np.percentile(arr, [2.5, 97.5])
    return BootstrapResult(
        point_estimate=float(point),
        boot_mean=float(arr.mean()),
        stderr=stderr,
        ci_low=float(lo),
        ci_high=float(hi),
        n_replicates=n_replicates,
        n_failed=n_failed,
        seed=int(seed),
    )


def bootstrap(m: SampleMatrix, estimator, n_replicates=DEFAULT_REPLICATES,
              seed=0) -> BootstrapResult:
    """Efron bootstrap of any scalar estimator of a SampleMatrix.

    Each replicate resamples n_samples rows with replacement and applies
    the estimator; replicates hitting an estimation error are dropped
    and counted in n_failed.  The point estimate uses the original rows
    and its failure propagates.
    """
    if n_replicates < 2:
        raise ValueError("need at least 2 bootstrap replicates")
    point = float(estimator(m))
    values = []
    n_failed = 0
    for r in range(n_replicates):
        rng = _replicate_rng(seed, r)
        idx = rng.integers(0, m.n_samples, m.n_samples)
        try:
            values.append(float(estimator(m.take(idx))))
        except EstimationError:
            n_failed += 1
    return _summarise(point, values, n_replicates, n_failed, seed)


def bootstrap_multiplicative(
    m: SampleMatrix, spec: TargetSpec, n_replicates=DEFAULT_REPLICATES,
    seed=0, min_bin_count=DEFAULT_MIN_BIN_COUNT, statistic="log",
):
    """Fast bootstrap of a multiplicative interaction.

    Returns (InteractionEstimate, BootstrapResult for ln I^m by default,
    or for I^m with statistic="value").  The estimator depends on the
    rows only through their cell membership, so each replicate draws the
    joint cell counts from a multinomial over the observed membership
    frequencies, which is the exact law of resampling rows with
    replacement.
    """
    if n_replicates < 2:
        raise ValueError("need at least 2 bootstrap replicates")
    if statistic not in ("log", "value"):
        raise ValueError("statistic must be 'log' or 'value'")
    estimate = multiplicative_interaction(m, spec, min_bin_count)
    res = resolve_spec(m, spec)
    n = res.n
    labels = row_cell_labels(m, res)
    group_counts = np.bincount(labels + 1, minlength=(1 << n) + 1)
    pvals = group_counts / m.n_samples

    values = []
    n_failed = 0
    for r in range(n_replicates):
        rng = _replicate_rng(seed, r)
        counts = rng.multinomial(m.n_samples, pvals)[1:]
        if (counts == 0).any():
            n_failed += 1
            continue
        log_value = math.fsum(
            _cell_sign(c, n) * math.log(counts[c]) for c in range(1 << n)
        )
        values.append(log_value if statistic == "log" else math.exp(log_value))
    point = estimate.log_value if statistic == "log" else estimate.value
    return estimate, _summarise(point, values, n_replicates, n_failed, seed)


@dataclass(frozen=True)
class BinCount:
    """One conditional cell of a bin report."""

    assignment: tuple
    count: int
    flagged: bool


def bin_report(m: SampleMatrix, spec: TargetSpec,
               min_bin_count=DEFAULT_MIN_BIN_COUNT) -> list:
    """Counts of every target cell under the given conditioning.

    Cells below min_bin_count are flagged; the counts sum to the number
    of rows satisfying the reference assignment.
    """
    res = resolve_spec(m, spec)
    counts = joint_cell_counts(m, res)
    return [
        BinCount(
            assignment=_cell_target_pairs(res, cell),
            count=int(counts[cell]),
            flagged=bool(counts[cell] < min_bin_count),
        )
        for cell in range(1 << res.n)
    ]
