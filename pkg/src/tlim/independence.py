"""Chi-squared (conditional) independence screening for binary pairs.

The conditional test stratifies on every observed configuration of the
conditioning variables and sums per-stratum 2x2 Pearson statistics; a
stratum enters only when all four expected counts reach the floor of 5,
which guards the asymptotic chi-squared approximation.  Degrees of
freedom equal the number of included strata.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .errors import NoUsableStrata
from .store import KIND_BINARY, SampleMatrix

DEFAULT_THRESHOLD = 0.1
DEFAULT_EXPECTED_FLOOR = 5.0

VERDICT_DEPENDENT = "dependent"
VERDICT_INDEPENDENT = "independent"
VERDICT_NO_USABLE_STRATA = "no_usable_strata"


@dataclass(frozen=True)
class IndependenceTest:
    pair: tuple
    conditioning: tuple
    statistic: float
    dof: int
    p_value: float
    n_strata_used: int

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError("p_value outside [0, 1]")
        if self.dof < 1 or self.statistic < 0:
            raise ValueError("invalid test summary")


def _stratum_keys(m: SampleMatrix, conditioning) -> np.ndarray:
    key = np.zeros(m.n_samples, np.int64)
    radix = 1
    for c in conditioning:
        n_cat = m.meta(c).n_categories
        if radix > (1 << 62) // n_cat:
            raise ValueError("conditioning set too large to stratify")
        key += m.column_values(c).astype(np.int64) * radix
        radix *= n_cat
    return key


def chi_squared_pair(m: SampleMatrix, i: int, j: int, conditioning=(),
                     expected_floor=DEFAULT_EXPECTED_FLOOR) -> IndependenceTest:
    """Stratified Pearson chi-squared test of independence of (i, j).

    The null hypothesis is that i and j are independent within every
    configuration of the conditioning variables.  Raises NoUsableStrata
    when no stratum passes the expected-count floor.
    """
    i, j = int(i), int(j)
    if i == j:
        raise ValueError("need two distinct variables")
    conditioning = tuple(int(c) for c in conditioning)
    if i in conditioning or j in conditioning:
        raise ValueError("conditioning set must exclude the tested pair")
    if m.meta(i).kind != KIND_BINARY or m.meta(j).kind != KIND_BINARY:
        raise ValueError("the tested pair must be binary")

    xi = m.column_bool(i).astype(np.int64)
    xj = m.column_bool(j).astype(np.int64)
    if conditioning:
        raw = _stratum_keys(m, conditioning)
        _, key = np.unique(raw, return_inverse=True)
        n_strata = int(key.max()) + 1
    else:
        key = np.zeros(m.n_samples, np.int64)
        n_strata = 1

    cells = np.bincount(key * 4 + xi * 2 + xj, minlength=4 * n_strata)
    tables = cells.reshape(n_strata, 2, 2).astype(np.float64)

    totals = tables.sum(axis=(1, 2))
    rows = tables.sum(axis=2)
    cols = tables.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        expected = rows[:, :, None] * cols[:, None, :] / totals[:, None, None]
    usable = (expected >= expected_floor).all(axis=(1, 2)) & (totals > 0)
    if not usable.any():
        raise NoUsableStrata(
            f"no stratum of pair ({i}, {j}) meets the expected-count floor "
            f"{expected_floor}"
        )
    obs = tables[usable]
    exp = expected[usable]
    statistic = float(((obs - exp) ** 2 / exp).sum())
    dof = int(usable.sum())
    return IndependenceTest(
        pair=(i, j),
        conditioning=conditioning,
        statistic=statistic,
        dof=dof,
        p_value=float(chi2.sf(statistic, dof)),
        n_strata_used=dof,
    )


@dataclass(frozen=True)
class ScreenResult:
    pair: tuple
    parents: tuple
    statistic: float
    dof: int
    p_value: float
    verdict: str

    def to_record(self) -> dict:
        return {
            "pair": list(self.pair),
            "parents": list(self.parents),
            "statistic": self.statistic,
            "dof": self.dof,
            "p_value": self.p_value,
            "verdict": self.verdict,
        }


def blanket_screen(m: SampleMatrix, pairs, parent_map,
                   threshold=DEFAULT_THRESHOLD,
                   expected_floor=DEFAULT_EXPECTED_FLOOR) -> list:
    """Classify each pair as dependent or independent given its parents.

    ``parent_map`` is a mapping or callable from a pair to its parent
    variable list.  Pairs whose every stratum fails the expected-count
    floor are reported with the no_usable_strata verdict instead of
    aborting the batch.
    """
    results = []
    for pair in pairs:
        pair = tuple(int(x) for x in pair)
        parents = tuple(
            parent_map(pair) if callable(parent_map) else parent_map[pair]
        )
        try:
            test = chi_squared_pair(m, pair[0], pair[1], parents,
                                    expected_floor)
        except NoUsableStrata:
            results.append(ScreenResult(
                pair=pair, parents=parents, statistic=float("nan"),
                dof=0, p_value=float("nan"),
                verdict=VERDICT_NO_USABLE_STRATA,
            ))
            continue
        verdict = (
            VERDICT_DEPENDENT
            if test.p_value < threshold
            else VERDICT_INDEPENDENT
        )
        results.append(ScreenResult(
            pair=pair, parents=parents, statistic=test.statistic,
            dof=test.dof, p_value=test.p_value, verdict=verdict,
        ))
    return results
