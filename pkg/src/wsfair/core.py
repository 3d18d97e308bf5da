"""Shared data model: features, binary group assignments, weak label matrices.

All containers are immutable after construction (arrays are copied and marked
read-only), so they can be shared freely across workers. Votes and labels are
encoded in {-1, +1}; abstention is rejected at validation time.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

RNG_VERSION = 1


# ---------------------------------------------------------------------------
# Errors. Data errors map to CLI exit code 2, numerical errors to 3.
# ---------------------------------------------------------------------------

class DataError(ValueError):
    """Malformed or inconsistent input data."""


class DimensionMismatch(DataError):
    pass


class InvalidVote(DataError):
    pass


class EmptyGroup(DataError):
    pass


class NonFiniteFeature(DataError):
    pass


class LengthMismatch(DataError):
    pass


class TooFewRows(DataError):
    pass


class TooFewLFs(DataError):
    pass


class EmptyDestination(DataError):
    pass


class NumericalError(RuntimeError):
    """A computation failed for numerical reasons."""


class DegenerateMoments(NumericalError):
    pass


class SingularCovariance(NumericalError):
    pass


class NumericalUnderflow(NumericalError):
    pass


class NonFiniteLoss(NumericalError):
    pass


class ZeroMatrix(NumericalError):
    pass


# ---------------------------------------------------------------------------
# Small numeric helpers shared across modules.
# ---------------------------------------------------------------------------

def sigmoid(z):
    """Numerically stable logistic function, elementwise."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def rng_stream(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator for the stream `(seed, *stream)`.

    Every sampled quantity in this package draws from its own named stream so
    that adding streams (e.g. more labeling functions) never perturbs earlier
    ones. Philox is counter-based and splittable; RNG_VERSION is part of the
    key so a future change of scheme cannot silently alias old streams.
    """
    key = np.random.SeedSequence(entropy=int(seed),
                                 spawn_key=(RNG_VERSION,) + tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(key))


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, copy=True)
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# Core containers.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureMatrix:
    """n x d real feature matrix with opaque, unique per-row identifiers."""

    values: np.ndarray
    row_ids: tuple = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise DimensionMismatch(f"features must be 2-d, got shape {vals.shape}")
        n, d = vals.shape
        if n < 1 or d < 1:
            raise DimensionMismatch(f"need n >= 1 and d >= 1, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise NonFiniteFeature("features contain NaN or infinity")
        ids = self.row_ids
        if ids is None:
            ids = tuple(str(i) for i in range(n))
        else:
            ids = tuple(str(i) for i in ids)
            if len(ids) != n:
                raise DimensionMismatch(f"{len(ids)} row ids for {n} rows")
            if len(set(ids)) != n:
                raise DataError("row ids must be unique")
        object.__setattr__(self, "values", _frozen(vals))
        object.__setattr__(self, "row_ids", ids)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def take(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx)
        return FeatureMatrix(self.values[idx], tuple(self.row_ids[i] for i in idx))


@dataclass(frozen=True)
class GroupAssignment:
    """Row index -> group id in {0, 1}."""

    group_of: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.group_of)
        if g.ndim != 1:
            raise DimensionMismatch("group assignment must be 1-d")
        if not np.isin(g, (0, 1)).all():
            raise DataError("group ids must be 0 or 1")
        object.__setattr__(self, "group_of", _frozen(g.astype(np.int8)))

    @property
    def n(self) -> int:
        return self.group_of.shape[0]

    def indices(self, group: int) -> np.ndarray:
        return np.flatnonzero(self.group_of == group)


@dataclass(frozen=True)
class WeakLabelMatrix:
    """n x m matrix of labeling-function votes, entries in {-1, +1}."""

    votes: np.ndarray
    lf_names: tuple = None

    def __post_init__(self):
        v = np.asarray(self.votes)
        if v.ndim != 2:
            raise DimensionMismatch(f"votes must be 2-d, got shape {v.shape}")
        if not np.isin(v, (-1, 1)).all():
            raise InvalidVote("votes must be -1 or +1 (abstention is not modeled)")
        names = self.lf_names
        if names is None:
            names = tuple(f"lf_{j + 1}" for j in range(v.shape[1]))
        else:
            names = tuple(str(x) for x in names)
            if len(names) != v.shape[1]:
                raise DimensionMismatch(f"{len(names)} names for {v.shape[1]} LFs")
        object.__setattr__(self, "votes", _frozen(v.astype(np.int8)))
        object.__setattr__(self, "lf_names", names)

    @property
    def n(self) -> int:
        return self.votes.shape[0]

    @property
    def m(self) -> int:
        return self.votes.shape[1]

    def take(self, idx) -> "WeakLabelMatrix":
        return WeakLabelMatrix(self.votes[np.asarray(idx)], self.lf_names)


@dataclass(frozen=True)
class LabelVector:
    """Hard labels in {-1, +1}."""

    labels: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.labels)
        if y.ndim != 1:
            raise DimensionMismatch("labels must be 1-d")
        if not np.isin(y, (-1, 1)).all():
            raise InvalidVote("labels must be -1 or +1")
        object.__setattr__(self, "labels", _frozen(y.astype(np.int8)))

    @property
    def n(self) -> int:
        return self.labels.shape[0]


@dataclass(frozen=True)
class ScoreVector:
    """Per-row probability scores in [0, 1]."""

    scores: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64)
        if s.ndim != 1:
            raise DimensionMismatch("scores must be 1-d")
        if not np.all(np.isfinite(s)) or s.min(initial=0.0) < 0.0 or s.max(initial=0.0) > 1.0:
            raise DataError("scores must lie in [0, 1]")
        object.__setattr__(self, "scores", _frozen(s))

    @property
    def n(self) -> int:
        return self.scores.shape[0]


@dataclass(frozen=True)
class Dataset:
    """Validated (features, groups, weak labels) triple."""

    features: FeatureMatrix
    groups: GroupAssignment
    weak: WeakLabelMatrix


def validate_dataset(features: FeatureMatrix, groups: GroupAssignment,
                     weak: WeakLabelMatrix, *, require_two_groups: bool = False) -> Dataset:
    """Check the three inputs agree and return a dataset handle.

    Idempotent and side-effect free; the handle shares the (read-only) inputs.
    With `require_two_groups` an all-one-group assignment is rejected here
    instead of failing later inside a two-group operation.
    """
    if not (features.n == groups.n == weak.n):
        raise DimensionMismatch(
            f"row counts differ: features {features.n}, groups {groups.n}, weak {weak.n}")
    if require_two_groups:
        for g in (0, 1):
            if groups.indices(g).size == 0:
                raise EmptyGroup(f"group {g} is empty")
    return Dataset(features, groups, weak)


@dataclass(frozen=True)
class GroupSplit:
    """Exact two-way partition of a dataset with index maps back to the input."""

    x0: FeatureMatrix
    w0: WeakLabelMatrix
    x1: FeatureMatrix
    w1: WeakLabelMatrix
    idx0: np.ndarray
    idx1: np.ndarray

    def restore_votes(self, votes0: np.ndarray, votes1: np.ndarray) -> np.ndarray:
        """Invert the split for per-group vote blocks."""
        n = self.idx0.size + self.idx1.size
        out = np.empty((n,) + votes0.shape[1:], dtype=votes0.dtype)
        out[self.idx0] = votes0
        out[self.idx1] = votes1
        return out


def split_by_group(features: FeatureMatrix, groups: GroupAssignment,
                   weak: WeakLabelMatrix) -> GroupSplit:
    """Partition rows by group; the index maps make the split invertible."""
    validate_dataset(features, groups, weak)
    idx0, idx1 = groups.indices(0), groups.indices(1)
    if idx0.size == 0 or idx1.size == 0:
        raise EmptyGroup("both groups must be non-empty to split")
    return GroupSplit(features.take(idx0), weak.take(idx0),
                      features.take(idx1), weak.take(idx1),
                      _frozen(idx0), _frozen(idx1))


def merge_split(split: GroupSplit) -> tuple[FeatureMatrix, WeakLabelMatrix]:
    """Rebuild the original feature and vote matrices from a split."""
    n = split.idx0.size + split.idx1.size
    feats = np.empty((n, split.x0.d))
    feats[split.idx0] = split.x0.values
    feats[split.idx1] = split.x1.values
    ids = [None] * n
    for pos, i in enumerate(split.idx0):
        ids[i] = split.x0.row_ids[pos]
    for pos, i in enumerate(split.idx1):
        ids[i] = split.x1.row_ids[pos]
    votes = split.restore_votes(split.w0.votes, split.w1.votes)
    return FeatureMatrix(feats, tuple(ids)), WeakLabelMatrix(votes, split.w0.lf_names)


# ---------------------------------------------------------------------------
# CSV interfaces. Formats:
#   features:   id,group,f1,...,fd       (group in {0,1}, 64-bit reals)
#   weak votes: id,lf_1,...,lf_m         (entries in {-1,1}, ids match features)
#   labels:     id,y                     (y in {-1,1}; evaluation only)
# Comma-separated, "." decimal, UTF-8, header row required; reals are written
# with 17 significant digits, locale independent.
# ---------------------------------------------------------------------------

def format_real(x: float) -> str:
    return format(float(x), ".17g")


def load_feature_csv(path) -> tuple[FeatureMatrix, GroupAssignment]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows[0]) < 3 or rows[0][0] != "id" or rows[0][1] != "group":
        raise DataError(f"{path}: expected header id,group,f1,...")
    ids, grp, vals = [], [], []
    for r in rows[1:]:
        if not r:
            continue
        ids.append(r[0])
        grp.append(int(r[1]))
        vals.append([float(x) for x in r[2:]])
    return FeatureMatrix(np.array(vals), tuple(ids)), GroupAssignment(np.array(grp))


def load_weak_csv(path, row_ids: tuple) -> WeakLabelMatrix:
    """Load a vote matrix and align its rows to `row_ids` from the feature CSV."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "id" or len(rows[0]) < 2:
        raise DataError(f"{path}: expected header id,lf_1,...")
    names = tuple(rows[0][1:])
    by_id = {}
    for r in rows[1:]:
        if not r:
            continue
        by_id[r[0]] = [int(x) for x in r[1:]]
    missing = [i for i in row_ids if i not in by_id]
    if missing or len(by_id) != len(row_ids):
        raise DataError(f"{path}: ids do not match the feature CSV")
    votes = np.array([by_id[i] for i in row_ids])
    return WeakLabelMatrix(votes, names)


def load_label_csv(path, row_ids: tuple) -> LabelVector:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:2] != ["id", "y"]:
        raise DataError(f"{path}: expected header id,y")
    by_id = {r[0]: int(r[1]) for r in rows[1:] if r}
    missing = [i for i in row_ids if i not in by_id]
    if missing or len(by_id) != len(row_ids):
        raise DataError(f"{path}: ids do not match the feature CSV")
    return LabelVector(np.array([by_id[i] for i in row_ids]))


def feature_csv_text(features: FeatureMatrix, groups: GroupAssignment) -> str:
    buf = io.StringIO()
    header = ["id", "group"] + [f"f{j + 1}" for j in range(features.d)]
    buf.write(",".join(header) + "\n")
    for i in range(features.n):
        row = [features.row_ids[i], str(int(groups.group_of[i]))]
        row += [format_real(x) for x in features.values[i]]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def weak_csv_text(weak: WeakLabelMatrix, row_ids: tuple) -> str:
    buf = io.StringIO()
    buf.write(",".join(("id",) + weak.lf_names) + "\n")
    for i in range(weak.n):
        buf.write(",".join((row_ids[i],) + tuple(str(int(v)) for v in weak.votes[i])) + "\n")
    return buf.getvalue()


def label_csv_text(labels: LabelVector, row_ids: tuple) -> str:
    buf = io.StringIO()
    buf.write("id,y\n")
    for i in range(labels.n):
        buf.write(f"{row_ids[i]},{int(labels.labels[i])}\n")
    return buf.getvalue()
