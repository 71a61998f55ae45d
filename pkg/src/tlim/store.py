"""Immutable column store for discrete observations.

Binary variables are kept bit-packed (one bit per cell, LSB-first within
each byte, column-major) so that conditional counting over very large
samples reduces to word-wise AND plus popcount.  Categorical variables are
stored as small-integer columns, real-valued outcome columns as float64.
Missing values are rejected at ingestion.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientSupport, ParseError

KIND_BINARY = "binary"
KIND_CATEGORICAL = "categorical"
KIND_OUTCOME = "outcome"

BASIS_ZERO_ONE = "zero_one"
BASIS_SPIN = "spin_pm1"

#: cells with fewer matching rows than this are unreliable
DEFAULT_MIN_BIN_COUNT = 10

_MAGIC = b"TLIM"
_FORMAT_VERSION = 1
_KIND_TAGS = {KIND_BINARY: 0, KIND_CATEGORICAL: 1, KIND_OUTCOME: 2}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}
_SPIN_FLAG = 0x10  # high nibble of the kind tag records a spin provenance


@dataclass(frozen=True)
class VariableMeta:
    """Declared name, kind and category count of one column."""

    name: str
    kind: str = KIND_BINARY
    n_categories: int = 2
    basis: str = BASIS_ZERO_ONE

    def __post_init__(self):
        if self.kind not in (KIND_BINARY, KIND_CATEGORICAL, KIND_OUTCOME):
            raise ValueError(f"unknown variable kind {self.kind!r}")
        if self.kind == KIND_BINARY and self.n_categories != 2:
            raise ValueError("binary variables have exactly 2 categories")
        if self.kind == KIND_CATEGORICAL and not 2 <= self.n_categories <= 256:
            raise ValueError("categorical variables support 2..256 categories")
        if self.basis not in (BASIS_ZERO_ONE, BASIS_SPIN):
            raise ValueError(f"unknown basis {self.basis!r}")


@dataclass(frozen=True)
class Assignment:
    """Pairs of (variable index, category value), no index repeated."""

    pairs: tuple = ()

    def __post_init__(self):
        pairs = tuple((int(i), int(v)) for i, v in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        indices = [i for i, _ in pairs]
        if len(set(indices)) != len(indices):
            raise ValueError("duplicate variable index in assignment")

    @property
    def indices(self):
        return tuple(i for i, _ in self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __len__(self):
        return len(self.pairs)


def as_assignment(a) -> Assignment:
    """Coerce an Assignment, a mapping, or an iterable of pairs."""
    if isinstance(a, Assignment):
        return a
    if hasattr(a, "items"):
        return Assignment(tuple(sorted(a.items())))
    return Assignment(tuple(a))


def _pack_bool(col: np.ndarray) -> np.ndarray:
    """Bit-pack a boolean column into uint64 words (LSB-first)."""
    packed = np.packbits(col, bitorder="little")
    pad = (-len(packed)) % 8
    if pad:
        packed = np.concatenate([packed, np.zeros(pad, np.uint8)])
    return packed.view(np.uint64)


def _unpack_words(words: np.ndarray, n: int) -> np.ndarray:
    bits = np.unpackbits(words.view(np.uint8), count=n, bitorder="little")
    return bits.astype(bool)


def _popcount(words: np.ndarray) -> int:
    return int(np.bitwise_count(words).sum())


class SampleMatrix:
    """Immutable matrix of N observations over declared discrete variables.

    Discrete (binary/categorical) variables are indexed 0..n_vars-1 in
    declaration order; outcome columns are addressed by name.  All queries
    are pure reads, so a constructed matrix is safe to share across
    concurrent workers.
    """

    def __init__(self, variables, columns, outcomes=None, provenance=None):
        variables = tuple(variables)
        names = [v.name for v in variables]
        if outcomes:
            names.extend(outcomes.keys())
        if len(set(names)) != len(names):
            raise ValueError("variable names must be unique")
        if any(v.kind == KIND_OUTCOME for v in variables):
            raise ValueError("outcome columns go in the outcomes mapping")
        if len(columns) != len(variables):
            raise ValueError("one column per declared variable required")

        lengths = {len(c) for c in columns}
        if outcomes:
            lengths |= {len(c) for c in outcomes.values()}
        if len(lengths) != 1:
            raise ValueError("all columns must have the same length")
        n = lengths.pop()
        if n <= 0:
            raise ValueError("n_samples must be positive")

        self._n = n
        self._vars = variables
        self._index = {v.name: i for i, v in enumerate(variables)}
        self._packed = []
        self._codes = []
        for meta, col in zip(variables, columns):
            col = np.asarray(col)
            if col.min(initial=0) < 0 or col.max(initial=0) >= meta.n_categories:
                raise ValueError(
                    f"column {meta.name!r} has values outside "
                    f"[0, {meta.n_categories - 1}]"
                )
            if meta.kind == KIND_BINARY:
                self._packed.append(_pack_bool(col.astype(bool)))
                self._codes.append(None)
            else:
                codes = np.ascontiguousarray(col, dtype=np.uint8)
                codes.flags.writeable = False
                self._packed.append(None)
                self._codes.append(codes)

        self._outcomes = {}
        for name, col in (outcomes or {}).items():
            arr = np.ascontiguousarray(col, dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"outcome column {name!r} has non-finite values")
            arr.flags.writeable = False
            self._outcomes[name] = arr

        self._ones = _pack_bool(np.ones(n, bool))
        for w in self._packed:
            if w is not None:
                w.flags.writeable = False
        self._ones.flags.writeable = False
        self.provenance = dict(provenance or {})

    # -- basic introspection -------------------------------------------------

    @property
    def n_samples(self) -> int:
        return self._n

    @property
    def n_variables(self) -> int:
        return len(self._vars)

    @property
    def variables(self) -> tuple:
        return self._vars

    @property
    def outcome_names(self) -> tuple:
        return tuple(self._outcomes)

    def variable_index(self, name: str) -> int:
        return self._index[name]

    def meta(self, i: int) -> VariableMeta:
        return self._vars[i]

    def outcome(self, name: str) -> np.ndarray:
        return self._outcomes[name]

    def column_values(self, i: int) -> np.ndarray:
        """Column i as small integers (0/1 for binary variables)."""
        meta = self._vars[i]
        if meta.kind == KIND_BINARY:
            return _unpack_words(self._packed[i], self._n).astype(np.uint8)
        return self._codes[i]

    def column_bool(self, i: int) -> np.ndarray:
        if self._vars[i].kind != KIND_BINARY:
            raise ValueError(f"variable {i} is not binary")
        return _unpack_words(self._packed[i], self._n)

    # -- packed-mask machinery -----------------------------------------------

    def _validate_assignment(self, a: Assignment):
        for i, v in a:
            if not 0 <= i < len(self._vars):
                raise ValueError(f"variable index {i} out of range")
            if not 0 <= v < self._vars[i].n_categories:
                raise ValueError(
                    f"value {v} out of range for variable {self._vars[i].name!r}"
                )

    def _match_words(self, i: int, value: int) -> np.ndarray:
        """Packed mask of rows where variable i equals value."""
        if self._vars[i].kind == KIND_BINARY:
            if value == 1:
                return self._packed[i]
            return self._packed[i] ^ self._ones
        return _pack_bool(self._codes[i] == value)

    def mask_words(self, a) -> np.ndarray:
        """Packed row mask for an assignment (all-ones when empty)."""
        a = as_assignment(a)
        self._validate_assignment(a)
        mask = self._ones.copy()
        for i, v in a:
            mask &= self._match_words(i, v)
        return mask

    def mask_bool(self, a) -> np.ndarray:
        return _unpack_words(self.mask_words(a), self._n)

    def count(self, a) -> int:
        """Number of rows matching every pair of the assignment."""
        return _popcount(self.mask_words(a))

    def conditional_mean(self, target, cond, min_support=DEFAULT_MIN_BIN_COUNT):
        """Mean of a target column over the rows matching ``cond``.

        ``target`` is a variable index or an outcome-column name.  Returns
        (mean, support); raises InsufficientSupport when fewer than
        ``min_support`` rows match.  For a binary target the mean is the
        empirical conditional probability of value 1.
        """
        cond = as_assignment(cond)
        words = self.mask_words(cond)
        support = _popcount(words)
        if support < min_support:
            raise InsufficientSupport(
                f"{support} rows match {cond.pairs!r} (need {min_support})",
                cells=[cond.pairs],
                support=support,
            )
        if isinstance(target, str):
            values = self._outcomes[target]
            mean = float(values[_unpack_words(words, self._n)].mean())
            return mean, support
        target = int(target)
        if target in cond.indices:
            raise ValueError("target variable appears in the conditioning set")
        meta = self._vars[target]
        if meta.kind == KIND_BINARY:
            ones = _popcount(words & self._packed[target])
            return ones / support, support
        codes = self._codes[target][_unpack_words(words, self._n)]
        return float(codes.mean()), support

    # -- derived matrices ----------------------------------------------------

    def take(self, indices) -> "SampleMatrix":
        """New matrix built from the given rows (used by bootstrap)."""
        indices = np.asarray(indices, dtype=np.int64)
        columns = []
        for meta, words, codes in zip(self._vars, self._packed, self._codes):
            if meta.kind == KIND_BINARY:
                columns.append(_unpack_words(words, self._n)[indices])
            else:
                columns.append(codes[indices])
        outcomes = {k: v[indices] for k, v in self._outcomes.items()}
        return SampleMatrix(self._vars, columns, outcomes)

    def to_spins(self) -> np.ndarray:
        """All binary columns as a +-1 matrix (inverse of from_spins)."""
        cols = [
            np.where(self.column_bool(i), 1, -1)
            for i, v in enumerate(self._vars)
            if v.kind == KIND_BINARY
        ]
        return np.column_stack(cols).astype(np.int8)

    def state_codes(self) -> np.ndarray:
        """Row states as integers, bit k = value of binary variable k.

        Only valid when every variable is binary and there are at most 63.
        """
        if any(v.kind != KIND_BINARY for v in self._vars):
            raise ValueError("state_codes requires all-binary variables")
        if len(self._vars) > 63:
            raise ValueError("state_codes supports at most 63 variables")
        out = np.zeros(self._n, np.int64)
        for k in range(len(self._vars)):
            out |= self.column_bool(k).astype(np.int64) << k
        return out

    # -- serialization ---------------------------------------------------------

    def save_packed(self, path):
        """Write the packed binary format (see module docs)."""
        with open(path, "wb") as fh:
            n_total = len(self._vars) + len(self._outcomes)
            fh.write(_MAGIC)
            fh.write(struct.pack("<HIQ", _FORMAT_VERSION, n_total, self._n))
            for meta in self._vars:
                tag = _KIND_TAGS[meta.kind]
                if meta.basis == BASIS_SPIN:
                    tag |= _SPIN_FLAG
                name = meta.name.encode("utf-8")
                fh.write(struct.pack("<H", len(name)))
                fh.write(name)
                fh.write(struct.pack("<BH", tag, meta.n_categories))
            for name in self._outcomes:
                enc = name.encode("utf-8")
                fh.write(struct.pack("<H", len(enc)))
                fh.write(enc)
                fh.write(struct.pack("<BH", _KIND_TAGS[KIND_OUTCOME], 0))
            n_bytes = (self._n + 7) // 8
            for meta, words in zip(self._vars, self._packed):
                if meta.kind == KIND_BINARY:
                    fh.write(words.view(np.uint8)[:n_bytes].tobytes())
            for meta, codes in zip(self._vars, self._codes):
                if meta.kind == KIND_CATEGORICAL:
                    fh.write(codes.tobytes())
            for col in self._outcomes.values():
                fh.write(col.astype("<f8").tobytes())

    @classmethod
    def load_packed(cls, path) -> "SampleMatrix":
        with open(path, "rb") as fh:
            if fh.read(4) != _MAGIC:
                raise ParseError(f"{path}: not a TLIM file")
            version, n_total, n_samples = struct.unpack("<HIQ", fh.read(14))
            if version != _FORMAT_VERSION:
                raise ParseError(f"{path}: unsupported format version {version}")
            metas = []
            for _ in range(n_total):
                (name_len,) = struct.unpack("<H", fh.read(2))
                name = fh.read(name_len).decode("utf-8")
                tag, n_cat = struct.unpack("<BH", fh.read(3))
                kind = _TAG_KINDS[tag & 0x0F]
                basis = BASIS_SPIN if tag & _SPIN_FLAG else BASIS_ZERO_ONE
                if kind == KIND_OUTCOME:
                    metas.append(VariableMeta(name, kind, 2, BASIS_ZERO_ONE))
                else:
                    metas.append(VariableMeta(name, kind, max(n_cat, 2), basis))
            n_bytes = (n_samples + 7) // 8
            columns, discrete = [], []
            for meta in metas:
                if meta.kind == KIND_BINARY:
                    raw = np.frombuffer(fh.read(n_bytes), np.uint8)
                    bits = np.unpackbits(raw, count=n_samples, bitorder="little")
                    discrete.append(meta)
                    columns.append(bits)
            for meta in metas:
                if meta.kind == KIND_CATEGORICAL:
                    discrete.append(meta)
                    columns.append(np.frombuffer(fh.read(n_samples), np.uint8))
            outcomes = {}
            for meta in metas:
                if meta.kind == KIND_OUTCOME:
                    raw = fh.read(8 * n_samples)
                    outcomes[meta.name] = np.frombuffer(raw, "<f8")
            # restore declaration order of discrete variables
            order = sorted(
                range(len(discrete)),
                key=lambda k: next(
                    i for i, m in enumerate(metas) if m is discrete[k]
                ),
            )
            discrete = [discrete[k] for k in order]
            columns = [columns[k] for k in order]
        return cls(discrete, columns, outcomes)

    def save_csv(self, path):
        """Write a CSV with discrete columns first, then outcome columns."""
        names = [v.name for v in self._vars] + list(self._outcomes)
        cols = [
            [str(int(x)) for x in self.column_values(i)]
            for i in range(len(self._vars))
        ]
        cols += [
            [repr(float(x)) for x in self._outcomes[k]]
            for k in self._outcomes
        ]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(names)
            writer.writerows(zip(*cols))


def from_spins(spins, names=None) -> SampleMatrix:
    """Build a matrix from a +-1 spin matrix; -1 maps to 0, +1 to 1."""
    spins = np.asarray(spins)
    if spins.ndim != 2:
        raise ValueError("spins must be a 2-d matrix (samples x variables)")
    if not np.all(np.isin(spins, (-1, 1))):
        raise ValueError("spin entries must be -1 or +1")
    n_vars = spins.shape[1]
    if names is None:
        names = [f"v{i}" for i in range(n_vars)]
    metas = [VariableMeta(name, KIND_BINARY, 2, BASIS_SPIN) for name in names]
    columns = [(spins[:, j] + 1) // 2 for j in range(n_vars)]
    return SampleMatrix(metas, columns)


def from_states(states, names=None, basis=BASIS_ZERO_ONE) -> SampleMatrix:
    """Build a matrix from a 0/1 state matrix (samples x variables)."""
    states = np.asarray(states)
    if states.ndim != 2:
        raise ValueError("states must be a 2-d matrix")
    if not np.all((states == 0) | (states == 1)):
        raise ValueError("state entries must be 0 or 1")
    n_vars = states.shape[1]
    if names is None:
        names = [f"v{i}" for i in range(n_vars)]
    metas = [VariableMeta(name, KIND_BINARY, 2, basis) for name in names]
    return SampleMatrix(metas, [states[:, j] for j in range(n_vars)])


def load_csv(path, schema) -> SampleMatrix:
    """Load a CSV whose header matches the declared schema.

    Binary cells must read 0/1, categorical cells integers within the
    declared range, outcome cells decimal reals.  Parse failures report
    the 1-based data row and the column name.
    """
    schema = list(schema)
    names = [m.name for m in schema]
    if len(set(names)) != len(names):
        raise ParseError("duplicate names in schema")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if [h.strip() for h in header] != names:
            raise ParseError(
                f"{path}: header {header!r} does not match schema {names!r}"
            )
        raw_cols = [[] for _ in schema]
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(schema):
                raise ParseError(
                    f"{path}: row {row_no} has {len(row)} fields, "
                    f"expected {len(schema)}",
                    row=row_no,
                )
            for k, cell in enumerate(row):
                raw_cols[k].append(cell.strip())

    if not raw_cols or not raw_cols[0]:
        raise ParseError(f"{path}: no data rows")

    columns, outcomes, discrete = [], {}, []
    for meta, raw in zip(schema, raw_cols):
        if meta.kind == KIND_OUTCOME:
            try:
                outcomes[meta.name] = np.array([float(x) for x in raw])
            except ValueError:
                bad = next(
                    i for i, x in enumerate(raw, start=1)
                    if not _parses_float(x)
                )
                raise ParseError(
                    f"{path}: row {bad}, column {meta.name!r}: "
                    "not a decimal real",
                    row=bad, column=meta.name,
                ) from None
            continue
        values = np.empty(len(raw), np.int64)
        for i, x in enumerate(raw):
            if not x.lstrip("-").isdigit():
                raise ParseError(
                    f"{path}: row {i + 1}, column {meta.name!r}: "
                    f"{x!r} is not an integer",
                    row=i + 1, column=meta.name,
                )
            values[i] = int(x)
        lo, hi = int(values.min()), int(values.max())
        if lo < 0 or hi >= meta.n_categories:
            bad = int(np.argmax((values < 0) | (values >= meta.n_categories))) + 1
            raise ParseError(
                f"{path}: row {bad}, column {meta.name!r}: value outside "
                f"[0, {meta.n_categories - 1}]",
                row=bad, column=meta.name,
            )
        discrete.append(meta)
        columns.append(values)
    return SampleMatrix(discrete, columns, outcomes)


def _parses_float(x: str) -> bool:
    try:
        float(x)
        return True
    except ValueError:
        return False


def count_assignment(m: SampleMatrix, a) -> int:
    """Number of rows of ``m`` matching every pair of the assignment."""
    return m.count(a)


def conditional_mean(m: SampleMatrix, target, cond,
                     min_support=DEFAULT_MIN_BIN_COUNT):
    """See SampleMatrix.conditional_mean."""
    return m.conditional_mean(target, cond, min_support)
