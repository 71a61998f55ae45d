"""Closed-form visible marginals and couplings of a two-layer bipartite
energy model with given parameters (no training).

With weights w (hidden x visible), visible biases b and hidden biases c,
the unnormalised log marginal of a visible vector v is

    ln p~(v) = b.v + sum_i softplus(c_i + (w v)_i).

All n-point log interactions over visible units reduce to alternating
sums of these softplus terms: the partition constant and (for n >= 2)
the b terms cancel analytically, and the implementation exploits that
cancellation so couplings are exactly independent of b.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np


def _softplus(x):
    # ln(1 + e^x), stable for large |x|
    return np.logaddexp(0.0, x)


@dataclass(frozen=True)
class RbmParams:
    """Weight matrix w (n_hidden x m_visible) and biases b, c."""

    w: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        w = np.ascontiguousarray(self.w, np.float64)
        b = np.ascontiguousarray(self.b, np.float64)
        c = np.ascontiguousarray(self.c, np.float64)
        if w.ndim != 2:
            raise ValueError("w must be a matrix (hidden x visible)")
        if b.shape != (w.shape[1],) or c.shape != (w.shape[0],):
            raise ValueError("bias lengths must match the weight matrix")
        for arr in (w, b, c):
            if not np.all(np.isfinite(arr)):
                raise ValueError("parameters must be finite")
            arr.flags.writeable = False
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def n_visible(self) -> int:
        return self.w.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.w.shape[0]

    @classmethod
    def from_json(cls, path) -> "RbmParams":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        w = np.asarray(data["w"], np.float64)
        if w.shape != (data["n"], data["m"]):
            raise ValueError("weight matrix shape does not match declared m, n")
        return cls(w=w, b=np.asarray(data["b"]), c=np.asarray(data["c"]))

    def to_json(self, path):
        payload = {
            "m": self.n_visible,
            "n": self.n_hidden,
            "w": self.w.tolist(),
            "b": self.b.tolist(),
            "c": self.c.tolist(),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)


def visible_log_marginal(params: RbmParams, v) -> float:
    """ln of the unnormalised visible marginal (partition term omitted)."""
    v = np.asarray(v, np.float64)
    if v.shape != (params.n_visible,):
        raise ValueError("visible vector has the wrong length")
    if not np.all((v == 0) | (v == 1)):
        raise ValueError("visible vector must be binary")
    return float(params.b @ v + _softplus(params.c + params.w @ v).sum())


def _hidden_term(params: RbmParams, subset) -> float:
    """sum_i softplus(c_i + sum_{j in subset} w_ij).

    Accumulated in sorted index order so the result depends on the
    subset alone, keeping permutation symmetry exact.
    """
    act = params.c.copy()
    for j in sorted(subset):
        act = act + params.w[:, j]
    return float(_softplus(act).sum())


def rbm_npoint_log_interaction(params: RbmParams, targets) -> float:
    """ln I of the multiplicative n-point interaction over visible units.

    Alternating sum of hidden softplus terms over all subsets of the
    targets; for n = 1 the visible bias of the single unit survives the
    cancellation and is added back.
    """
    targets = tuple(int(t) for t in targets)
    if not targets or len(set(targets)) != len(targets):
        raise ValueError("targets must be non-empty and distinct")
    if any(not 0 <= t < params.n_visible for t in targets):
        raise ValueError("target index out of range")
    n = len(targets)
    terms = []
    for size in range(n + 1):
        sign = -1.0 if (n - size) % 2 else 1.0
        for subset in combinations(targets, size):
            terms.append(sign * _hidden_term(params, subset))
    total = math.fsum(terms)
    if n == 1:
        total += float(params.b[targets[0]])
    return total


def rbm_pair_coupling(params: RbmParams, j1: int, j2: int) -> float:
    """Pair coupling of visible units in the spin basis: ln(I)/8."""
    if j1 == j2:
        raise ValueError("need two distinct visible units")
    return rbm_npoint_log_interaction(params, (j1, j2)) / 8.0
