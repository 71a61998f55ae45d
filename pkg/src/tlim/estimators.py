"""Additive and multiplicative n-point interaction estimators.

Both estimators reduce to alternating combinations of conditional cell
statistics: the additive form sums conditional outcome means over the
2^n target cells with sign (-1)^(n - #on), the multiplicative form takes
the same alternating combination of log cell counts (conditional and
joint ratios coincide because every cell shares the reference
assignment).  Signed terms are accumulated with math.fsum, which is
correctly rounded, so reordering the targets cannot change the result
even at the last bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMean, InsufficientSupport, ZeroCell
from .store import (
    DEFAULT_MIN_BIN_COUNT,
    KIND_BINARY,
    SampleMatrix,
    as_assignment,
)

ADDITIVE = "additive"
MULTIPLICATIVE = "multiplicative"

#: divisor applied to ln(I^m) to undo the {-1,+1} -> {0,1} basis change
#: (and pair double counting) at each interaction order
SPIN_LOG_DIVISORS = {1: -8.0, 2: 8.0, 3: -8.0, 4: 16.0}

FLAG_OK = "ok"
FLAG_LOW_SUPPORT = "low_support"


@dataclass(frozen=True)
class TargetSpec:
    """Which variables interact, how they flip, and what is held fixed.

    targets        ordered variable indices K (n = len(targets) >= 1)
    transitions    per-target (from, to) category pair; default (0, 1)
    conditioning   variable indices pinned to the reference; None means
                   every non-target, non-covariate variable
    reference      assignment on the conditioning set; None means all
                   zeros, indices omitted from a partial assignment
                   default to zero
    covariates     variable indices averaged over as strata (outer
                   average weighted by empirical stratum frequency)
    """

    targets: tuple
    transitions: tuple = None
    conditioning: tuple = None
    reference: tuple = None
    covariates: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if self.transitions is not None:
            trans = tuple((int(a), int(b)) for a, b in self.transitions)
            object.__setattr__(self, "transitions", trans)
        if self.conditioning is not None:
            object.__setattr__(
                self, "conditioning", tuple(int(c) for c in self.conditioning)
            )
        if self.reference is not None:
            object.__setattr__(
                self, "reference", as_assignment(self.reference).pairs
            )
        object.__setattr__(self, "covariates", tuple(int(c) for c in self.covariates))

    @property
    def order(self) -> int:
        return len(self.targets)


@dataclass(frozen=True)
class InteractionEstimate:
    """One estimated interaction with its per-cell diagnostics.

    cell_means and cell_supports are laid out by the integer whose bits
    are the target values, LSB = first target.  For multiplicative
    estimates cell_means holds the conditional cell probabilities, the
    log form is primary and value == exp(log_value); for additive
    estimates the value is already on the outcome scale and log_value
    mirrors it.
    """

    kind: str
    value: float
    log_value: float
    cell_means: tuple
    cell_supports: tuple
    flags: str
    low_support_cells: tuple
    targets: tuple
    transitions: tuple
    conditioning: tuple
    reference: tuple

    @property
    def order(self) -> int:
        return len(self.targets)

    def cell_assignment(self, cell: int) -> tuple:
        """Target (index, value) pairs realised in the given cell."""
        return tuple(
            (t, self.transitions[k][(cell >> k) & 1])
            for k, t in enumerate(self.targets)
        )

    def to_record(self, conditioning_label=None) -> dict:
        cells = [
            {
                "assignment": [list(p) for p in self.cell_assignment(c)],
                "mean": self.cell_means[c],
                "support": self.cell_supports[c],
            }
            for c in range(len(self.cell_means))
        ]
        return {
            "targets": list(self.targets),
            "transitions": [list(t) for t in self.transitions],
            "conditioning": (
                conditioning_label
                if conditioning_label is not None
                else list(self.conditioning)
            ),
            "reference": [list(p) for p in self.reference],
            "kind": self.kind,
            "value": self.value,
            "log_value": self.log_value,
            "coupling": None,
            "cells": cells,
            "flags": (
                self.flags
                if self.flags == FLAG_OK
                else {self.flags: list(self.low_support_cells)}
            ),
        }


@dataclass(frozen=True)
class ResolvedSpec:
    targets: tuple
    transitions: tuple
    cond_pairs: tuple
    covariates: tuple

    @property
    def n(self) -> int:
        return len(self.targets)


def resolve_spec(m: SampleMatrix, spec: TargetSpec) -> ResolvedSpec:
    """Validate a TargetSpec against a matrix and fill in the defaults."""
    targets = spec.targets
    if not targets:
        raise ValueError("at least one target variable is required")
    if len(set(targets)) != len(targets):
        raise ValueError("duplicate target variable")
    for t in targets:
        if not 0 <= t < m.n_variables:
            raise ValueError(f"target index {t} out of range")

    transitions = spec.transitions or ((0, 1),) * len(targets)
    if len(transitions) != len(targets):
        raise ValueError("one (from, to) transition per target required")
    for t, (lo, hi) in zip(targets, transitions):
        k = m.meta(t).n_categories
        if not (0 <= lo < k and 0 <= hi < k):
            raise ValueError(f"transition {(lo, hi)} invalid for variable {t}")
        if lo == hi:
            raise ValueError("transition categories must differ")

    covariates = spec.covariates
    if set(covariates) & set(targets):
        raise ValueError("covariates overlap targets")
    for c in covariates:
        if not 0 <= c < m.n_variables:
            raise ValueError(f"covariate index {c} out of range")

    if spec.conditioning is None:
        conditioning = tuple(
            i
            for i in range(m.n_variables)
            if i not in targets and i not in covariates
        )
    else:
        conditioning = spec.conditioning
        overlap = set(conditioning) & (set(targets) | set(covariates))
        if overlap:
            raise ValueError(f"conditioning overlaps targets/covariates: {overlap}")
        if len(set(conditioning)) != len(conditioning):
            raise ValueError("duplicate conditioning variable")

    given = dict(spec.reference or ())
    unknown = set(given) - set(conditioning)
    if unknown:
        raise ValueError(f"reference mentions non-conditioning variables {unknown}")
    cond_pairs = tuple((i, int(given.get(i, 0))) for i in sorted(conditioning))
    for i, v in cond_pairs:
        if not 0 <= v < m.meta(i).n_categories:
            raise ValueError(f"reference value {v} invalid for variable {i}")
    return ResolvedSpec(targets, transitions, cond_pairs, covariates)


def _cell_sign(cell: int, n: int) -> float:
    return -1.0 if (n - bin(cell).count("1")) % 2 else 1.0


def _cell_target_pairs(res: ResolvedSpec, cell: int) -> tuple:
    return tuple(
        (t, res.transitions[k][(cell >> k) & 1])
        for k, t in enumerate(res.targets)
    )


def joint_cell_counts(m: SampleMatrix, res: ResolvedSpec) -> np.ndarray:
    """Rows matching (targets = cell values, conditioning = reference)."""
    ref_words = m.mask_words(res.cond_pairs)
    n = res.n
    counts = np.zeros(1 << n, np.int64)
    for cell in range(1 << n):
        words = ref_words.copy()
        for t, v in _cell_target_pairs(res, cell):
            words &= m._match_words(t, v)
        counts[cell] = int(np.bitwise_count(words).sum())
    return counts


def row_cell_labels(m: SampleMatrix, res: ResolvedSpec):
    """Per-row cell label (-1 outside the conditioning/transition range).

    Rows match the reference assignment and have every target at one of
    its two transition categories; the label packs which side of each
    transition the row sits on (LSB = first target).
    """
    valid = m.mask_bool(res.cond_pairs)
    labels = np.zeros(m.n_samples, np.int64)
    for k, (t, (lo, hi)) in enumerate(zip(res.targets, res.transitions)):
        col = m.column_values(t)
        on = col == hi
        valid &= on | (col == lo)
        labels |= on.astype(np.int64) << k
    labels[~valid] = -1
    return labels


def _estimate_from_counts(res: ResolvedSpec, counts, min_bin_count):
    n = res.n
    total = int(counts.sum())
    if total == 0:
        raise InsufficientSupport(
            "no rows match the reference assignment",
            cells=[res.cond_pairs],
            support=0,
        )
    zero = [c for c in range(1 << n) if counts[c] == 0]
    if zero:
        raise ZeroCell(
            f"{len(zero)} empty cell(s) make the probability ratio undefined",
            cells=[_cell_target_pairs(res, c) for c in zero],
        )
    log_value = math.fsum(
        _cell_sign(c, n) * math.log(counts[c]) for c in range(1 << n)
    )
    low = tuple(c for c in range(1 << n) if counts[c] < min_bin_count)
    return InteractionEstimate(
        kind=MULTIPLICATIVE,
        value=math.exp(log_value),
        log_value=log_value,
        cell_means=tuple(float(counts[c]) / total for c in range(1 << n)),
        cell_supports=tuple(int(c) for c in counts),
        flags=FLAG_LOW_SUPPORT if low else FLAG_OK,
        low_support_cells=low,
        targets=res.targets,
        transitions=res.transitions,
        conditioning=tuple(i for i, _ in res.cond_pairs),
        reference=res.cond_pairs,
    )


def multiplicative_interaction(
    m: SampleMatrix, spec: TargetSpec, min_bin_count=DEFAULT_MIN_BIN_COUNT
) -> InteractionEstimate:
    """Alternating product of conditional cell probabilities.

    Computed from joint cell counts (the reference normalisation cancels
    across the alternating product).  A zero-count cell raises ZeroCell;
    cells below min_bin_count flag the estimate as low_support.
    """
    res = resolve_spec(m, spec)
    for t, trans in zip(res.targets, res.transitions):
        if m.meta(t).kind != KIND_BINARY or trans != (0, 1):
            raise ValueError("multiplicative interaction requires binary targets")
    if res.covariates:
        raise ValueError("multiplicative interaction does not take covariates")
    counts = joint_cell_counts(m, res)
    return _estimate_from_counts(res, counts, min_bin_count)


def _stratified_cell_means(m, res, outcome):
    """Conditional outcome mean and support per target cell.

    With covariates, each cell mean is the outer average of per-stratum
    means weighted by the empirical stratum frequencies.
    """
    y = m.outcome(outcome)
    ref = m.mask_bool(res.cond_pairs)
    cols = [m.column_values(t) for t in res.targets]
    n = res.n

    strata_keys = None
    strata_weights = None
    if res.covariates:
        key = np.zeros(m.n_samples, np.int64)
        radix = 1
        for c in res.covariates:
            key += m.column_values(c).astype(np.int64) * radix
            radix *= m.meta(c).n_categories
        counts = np.bincount(key, minlength=radix)
        strata_keys = np.nonzero(counts)[0]
        strata_weights = counts[strata_keys] / m.n_samples
        row_key = key

    means = np.zeros(1 << n)
    supports = np.zeros(1 << n, np.int64)
    empty = []
    for cell in range(1 << n):
        sel = ref.copy()
        for k, col in enumerate(cols):
            sel &= col == res.transitions[k][(cell >> k) & 1]
        supports[cell] = int(sel.sum())
        if supports[cell] == 0:
            empty.append(cell)
            continue
        if strata_keys is None:
            means[cell] = float(y[sel].mean())
            continue
        parts = []
        for w, sk in zip(strata_weights, strata_keys):
            sub = sel & (row_key == sk)
            cnt = int(sub.sum())
            if cnt == 0:
                empty.append(cell)
                parts = None
                break
            parts.append(w * float(y[sub].mean()))
        if parts is not None:
            means[cell] = math.fsum(parts)
    if empty:
        raise InsufficientSupport(
            f"{len(empty)} cell(s) have no matching rows",
            cells=[_cell_target_pairs(res, c) for c in sorted(set(empty))],
            support=0,
        )
    return means, supports


def additive_interaction(
    m: SampleMatrix, outcome: str, spec: TargetSpec,
    min_bin_count=DEFAULT_MIN_BIN_COUNT,
) -> InteractionEstimate:
    """Alternating sum of conditional outcome means over the target cells.

    Cells with no matching rows raise InsufficientSupport (listing every
    deficient cell); cells below min_bin_count flag the estimate.
    Transitions other than (0, 1) give the categorical form, which is a
    difference of category-transition treatment effects.
    """
    res = resolve_spec(m, spec)
    means, supports = _stratified_cell_means(m, res, outcome)
    n = res.n
    value = math.fsum(_cell_sign(c, n) * means[c] for c in range(1 << n))
    low = tuple(c for c in range(1 << n) if supports[c] < min_bin_count)
    return InteractionEstimate(
        kind=ADDITIVE,
        value=value,
        log_value=value,
        cell_means=tuple(float(v) for v in means),
        cell_supports=tuple(int(s) for s in supports),
        flags=FLAG_LOW_SUPPORT if low else FLAG_OK,
        low_support_cells=low,
        targets=res.targets,
        transitions=res.transitions,
        conditioning=tuple(i for i, _ in res.cond_pairs),
        reference=res.cond_pairs,
    )


def additive_interaction_categorical(
    m: SampleMatrix, outcome: str, spec: TargetSpec,
    min_bin_count=DEFAULT_MIN_BIN_COUNT,
) -> InteractionEstimate:
    """Categorical-transition form; identical machinery, explicit name.

    With transitions ((0,1), (0,1)) this reduces exactly to
    additive_interaction.
    """
    return additive_interaction(m, outcome, spec, min_bin_count)


def ate(
    m: SampleMatrix, outcome: str, treatment: int, spec: TargetSpec = None,
    min_bin_count=DEFAULT_MIN_BIN_COUNT,
) -> float:
    """Average treatment effect of one variable on an outcome.

    E(Y | T=on, ref) - E(Y | T=off, ref); the 1-point degenerate case of
    the additive interaction.  ``spec`` may carry the transition,
    conditioning, reference and covariates; its targets must name the
    treatment.
    """
    if spec is None:
        spec = TargetSpec(targets=(treatment,))
    elif spec.targets != (int(treatment),):
        raise ValueError("spec.targets must equal (treatment,)")
    return additive_interaction(m, outcome, spec, min_bin_count).value


def multiplicative_via_expectations(
    m: SampleMatrix, spec: TargetSpec, min_bin_count=DEFAULT_MIN_BIN_COUNT
) -> InteractionEstimate:
    """Multiplicative interaction rewritten over conditional means.

    For n = 2 the value is the odds-style combination
    [E(Xi|Xj=1,ref)/E(Xi|Xj=0,ref)] * [(1-E(Xi|Xj=0,ref))/(1-E(Xi|Xj=1,ref))];
    for n = 3 the ratio R(a,b) = E/(1-E) of Xi given (Xj,Xk)=(a,b) is
    combined as R(1,1)/R(1,0) * R(0,0)/R(0,1).  Agrees with
    multiplicative_interaction on the same data up to rounding; a
    conditional mean of exactly 0 or 1 raises DegenerateMean.
    """
    res = resolve_spec(m, spec)
    n = res.n
    if n not in (2, 3):
        raise ValueError("expectation form implemented for 2- and 3-point")
    for t, trans in zip(res.targets, res.transitions):
        if m.meta(t).kind != KIND_BINARY or trans != (0, 1):
            raise ValueError("multiplicative interaction requires binary targets")
    counts = joint_cell_counts(m, res)
    total = int(counts.sum())
    if total == 0:
        raise InsufficientSupport(
            "no rows match the reference assignment",
            cells=[res.cond_pairs], support=0,
        )

    def cond_mean(rest_bits):
        """E(X_first | remaining targets = rest_bits, ref)."""
        on = counts[1 | (rest_bits << 1)]
        off = counts[0 | (rest_bits << 1)]
        denom = on + off
        if denom == 0:
            raise InsufficientSupport(
                "conditional mean over an empty slice",
                cells=[_cell_target_pairs(res, rest_bits << 1)], support=0,
            )
        mean = on / denom
        if mean == 0.0 or mean == 1.0:
            empty_cell = (rest_bits << 1) | (1 if mean == 0.0 else 0)
            raise DegenerateMean(
                f"conditional mean is exactly {mean}",
                cells=[_cell_target_pairs(res, empty_cell)],
            )
        return mean

    if n == 2:
        m1, m0 = cond_mean(1), cond_mean(0)
        value = (m1 / m0) * ((1.0 - m0) / (1.0 - m1))
    else:
        def ratio(bits):
            mean = cond_mean(bits)
            return mean / (1.0 - mean)

        value = (ratio(0b11) / ratio(0b01)) * (ratio(0b00) / ratio(0b10))

    low = tuple(c for c in range(1 << n) if counts[c] < min_bin_count)
    return InteractionEstimate(
        kind=MULTIPLICATIVE,
        value=value,
        log_value=math.log(value),
        cell_means=tuple(float(counts[c]) / total for c in range(1 << n)),
        cell_supports=tuple(int(c) for c in counts),
        flags=FLAG_LOW_SUPPORT if low else FLAG_OK,
        low_support_cells=low,
        targets=res.targets,
        transitions=res.transitions,
        conditioning=tuple(i for i, _ in res.cond_pairs),
        reference=res.cond_pairs,
    )


def coupling_from_interaction(
    est: InteractionEstimate, order: int = None, basis: str = "spin_pm1",
    strict: bool = True,
) -> float:
    """Hamiltonian coupling implied by a multiplicative estimate.

    Divides ln(I^m) by (-8, 8, -8, 16) for orders 1..4, undoing the
    {-1,+1} -> {0,1} basis change.  No factor is defined beyond order 4,
    so higher orders are refused rather than extrapolated.  With
    strict=True (the default) flagged estimates are refused too.
    """
    if est.kind != MULTIPLICATIVE:
        raise ValueError("couplings are defined for multiplicative estimates")
    if basis != "spin_pm1":
        raise ValueError("coupling conversion requires the spin_pm1 basis")
    order = est.order if order is None else int(order)
    if order != est.order:
        raise ValueError(f"estimate has order {est.order}, not {order}")
    if order not in SPIN_LOG_DIVISORS:
        raise ValueError(f"no basis-change factor is defined for order {order}")
    if strict and est.flags != FLAG_OK:
        raise ValueError(f"estimate is flagged {est.flags!r}; pass strict=False")
    return est.log_value / SPIN_LOG_DIVISORS[order]
