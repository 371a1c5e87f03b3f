"""Dataset container, file formats, cleaning and stratified splitting."""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DataError,
    DimensionMismatchError,
    EmptyDatasetError,
    LabelValueError,
    MalformedHeaderError,
    NonNumericCellError,
    RowLengthError,
    StratificationError,
)

MFBIN_MAGIC = b"MFB1"
_MFBIN_HEADER = struct.Struct("<4sIQ")

FORMATS = ("csv", "mfbin")


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Row-major float32 feature matrix with binary labels.

    ``labels`` is ``None`` only for unlabeled prediction inputs. ``sources``
    tags each row with the index of the input file it came from.
    """

    features: np.ndarray
    labels: np.ndarray | None
    row_ids: np.ndarray
    sources: np.ndarray = field(default=None)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float32)
        if X.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {X.shape}")
        n = X.shape[0]
        ids = np.asarray(self.row_ids, dtype=np.int64)
        if ids.shape != (n,):
            raise DataError("row_ids length does not match feature rows")
        if self.labels is not None:
            y = np.asarray(self.labels)
            if y.shape != (n,):
                raise DataError("labels length does not match feature rows")
            if y.size and not np.isin(y, (0, 1)).all():
                raise DataError("labels must be 0 or 1")
            object.__setattr__(self, "labels", _frozen(y.astype(np.int8)))
        src = np.zeros(n, np.int16) if self.sources is None else np.asarray(self.sources, np.int16)
        if src.shape != (n,):
            raise DataError("sources length does not match feature rows")
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "row_ids", _frozen(ids))
        object.__setattr__(self, "sources", _frozen(src))

    @classmethod
    def from_arrays(cls, features, labels=None, row_ids=None, sources=None):
        X = np.asarray(features, dtype=np.float32)
        if row_ids is None:
            row_ids = np.arange(X.shape[0], dtype=np.int64)
        return cls(X, labels, row_ids, sources)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def feature_count(self) -> int:
        return self.features.shape[1]

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    def __len__(self):
        return self.n_rows

    def take(self, idx) -> Dataset:
        idx = np.asarray(idx, dtype=np.int64)
        labels = None if self.labels is None else self.labels[idx]
        return Dataset(self.features[idx], labels, self.row_ids[idx], self.sources[idx])

    def with_features(self, features) -> Dataset:
        """Same rows, labels and ids; new feature matrix (e.g. after scaling)."""
        features = np.asarray(features, dtype=np.float32)
        if features.shape[0] != self.n_rows:
            raise DataError("replacement feature matrix has a different row count")
        return Dataset(features, self.labels, self.row_ids, self.sources)

    def class_counts(self) -> tuple[int, int]:
        if self.labels is None:
            raise DataError("dataset has no labels")
        pos = int(np.count_nonzero(self.labels))
        return self.n_rows - pos, pos

    def equals(self, other: Dataset) -> bool:
        same_labels = (self.labels is None and other.labels is None) or (
            self.labels is not None
            and other.labels is not None
            and np.array_equal(self.labels, other.labels)
        )
        return (
            self.features.shape == other.features.shape
            and self.features.tobytes() == other.features.tobytes()
            and same_labels
            and np.array_equal(self.row_ids, other.row_ids)
            and np.array_equal(self.sources, other.sources)
        )


def concat(datasets: list[Dataset]) -> Dataset:
    """Pool several datasets; rows are renumbered and tagged with their source index."""
    if not datasets:
        raise EmptyDatasetError("nothing to concatenate")
    d = datasets[0].feature_count
    for ds in datasets[1:]:
        if ds.feature_count != d:
            raise DimensionMismatchError(d, ds.feature_count)
    X = np.concatenate([ds.features for ds in datasets])
    y = np.concatenate([ds.labels for ds in datasets])
    src = np.concatenate([np.full(ds.n_rows, i, np.int16) for i, ds in enumerate(datasets)])
    return Dataset(X, y, np.arange(X.shape[0]), src)


# ---------------------------------------------------------------------------
# file formats


def infer_format(path) -> str:
    suffix = Path(path).suffix.lower().lstrip(".")
    if suffix in FORMATS:
        return suffix
    raise DataError(f"cannot infer dataset format from {str(path)!r}; use .csv or .mfbin")


def load_dataset(path, format: str | None = None, *, require_labels: bool = True) -> Dataset:
    """Read a dataset file. Row ids are the 0-based file positions.

    With ``require_labels=False`` a CSV lacking the trailing ``label`` column
    is accepted and yields ``labels=None``.
    """
    path = Path(path)
    fmt = format or infer_format(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    if fmt == "csv":
        return _read_csv(path, require_labels)
    if fmt == "mfbin":
        return _read_mfbin(path)
    raise DataError(f"unknown dataset format {fmt!r}")


def _parse_header(header, require_labels):
    has_label = bool(header) and header[-1] == "label"
    names = header[:-1] if has_label else header
    if require_labels and not has_label:
        raise MalformedHeaderError("last header column must be 'label'", row=0)
    for j, name in enumerate(names):
        if name != f"f{j}":
            raise MalformedHeaderError(f"expected header column 'f{j}', got {name!r}", row=0, column=j)
    return len(names), has_label


def _read_csv(path: Path, require_labels: bool) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            if require_labels:
                raise MalformedHeaderError("empty file, header row missing", row=0)
            return Dataset(np.zeros((0, 0), np.float32), None, np.zeros(0, np.int64))
        d, has_label = _parse_header([h.strip() for h in header], require_labels)
        width = d + int(has_label)
        rows, labels = [], []
        for i, cells in enumerate(reader, start=1):
            if not cells:
                continue
            if len(cells) != width:
                raise RowLengthError(f"expected {width} cells, found {len(cells)}", row=i)
            try:
                rows.append([float(c) if c.strip() else math.nan for c in cells[:d]])
            except ValueError:
                for j, c in enumerate(cells[:d]):
                    try:
                        float(c) if c.strip() else None
                    except ValueError:
                        raise NonNumericCellError(f"non-numeric value {c!r}", row=i, column=f"f{j}") from None
            if has_label:
                raw = cells[d].strip()
                try:
                    lab = float(raw)
                except ValueError:
                    raise LabelValueError(f"non-numeric label {raw!r}", row=i, column="label") from None
                if lab not in (0.0, 1.0):
                    raise LabelValueError(f"label must be 0 or 1, got {raw!r}", row=i, column="label")
                labels.append(int(lab))
    X = np.array(rows, dtype=np.float32).reshape(len(rows), d)
    y = np.array(labels, dtype=np.int8) if has_label else None
    return Dataset(X, y, np.arange(len(rows)))


def _read_mfbin(path: Path) -> Dataset:
    raw = path.read_bytes()
    if len(raw) < _MFBIN_HEADER.size:
        raise MalformedHeaderError("mfbin file shorter than its header", row=0)
    magic, cols, rows = _MFBIN_HEADER.unpack_from(raw)
    if magic != MFBIN_MAGIC:
        raise MalformedHeaderError(f"bad magic {magic!r}", row=0)
    body = len(raw) - _MFBIN_HEADER.size
    expected = rows * cols * 4 + rows
    if body != expected:
        raise RowLengthError(f"mfbin payload is {body} bytes, header implies {expected}")
    off = _MFBIN_HEADER.size
    X = np.frombuffer(raw, dtype="<f4", count=rows * cols, offset=off).reshape(rows, cols)
    y = np.frombuffer(raw, dtype=np.uint8, count=rows, offset=off + rows * cols * 4)
    bad = np.flatnonzero(y > 1)
    if bad.size:
        raise LabelValueError(f"label must be 0 or 1, got {int(y[bad[0]])}", row=int(bad[0]) + 1, column="label")
    return Dataset(X.astype(np.float32), y.astype(np.int8), np.arange(rows))


def save_dataset(ds: Dataset, path, format: str | None = None) -> None:
    path = Path(path)
    fmt = format or infer_format(path)
    if fmt == "csv":
        _write_csv(ds, path)
    elif fmt == "mfbin":
        if ds.labels is None:
            raise DataError("mfbin requires labels")
        with open(path, "wb") as fh:
            fh.write(_MFBIN_HEADER.pack(MFBIN_MAGIC, ds.feature_count, ds.n_rows))
            fh.write(np.ascontiguousarray(ds.features, dtype="<f4").tobytes())
            fh.write(ds.labels.astype(np.uint8).tobytes())
    else:
        raise DataError(f"unknown dataset format {fmt!r}")


def _write_csv(ds: Dataset, path: Path) -> None:
    header = [f"f{j}" for j in range(ds.feature_count)]
    if ds.labels is not None:
        header.append("label")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(ds.n_rows):
            # repr of the float32 value widened to float64 round-trips exactly
            row = [repr(float(v)) for v in ds.features[i]]
            if ds.labels is not None:
                row.append(str(int(ds.labels[i])))
            w.writerow(row)


# ---------------------------------------------------------------------------
# cleaning


@dataclass(frozen=True)
class CleanReport:
    missing_removed: int
    duplicates_removed: int
    conflicts_removed: int

    def to_dict(self):
        return {
            "missing_removed": self.missing_removed,
            "duplicates_removed": self.duplicates_removed,
            "conflicts_removed": self.conflicts_removed,
        }


def clean(raw: Dataset) -> tuple[Dataset, CleanReport]:
    """Drop rows with non-finite features, then collapse duplicate feature vectors.

    Duplicates are keyed on the exact bytes of the feature vector. A group of
    identical vectors with one label keeps its first occurrence; a group with
    contradictory labels is removed entirely.
    """
    if raw.labels is None:
        raise DataError("cannot clean an unlabeled dataset")
    finite = np.isfinite(raw.features).all(axis=1)
    missing = int(raw.n_rows - np.count_nonzero(finite))
    kept = np.flatnonzero(finite)
    X = np.ascontiguousarray(raw.features[kept])
    y = raw.labels[kept]

    dups = conflicts = 0
    if kept.size:
        keys = X.view(np.dtype((np.void, X.dtype.itemsize * X.shape[1]))).ravel()
        _, first, inverse, counts = np.unique(keys, return_index=True, return_inverse=True, return_counts=True)
        inverse = inverse.ravel()
        n_groups = first.size
        pos_per_group = np.bincount(inverse, weights=y, minlength=n_groups)
        mixed = (pos_per_group > 0) & (pos_per_group < counts)
        conflicts = int(counts[mixed].sum())
        dups = int((counts[~mixed] - 1).sum())
        keep_first = np.sort(first[~mixed])
        kept = kept[keep_first]

    out = raw.take(kept)
    if out.n_rows == 0:
        raise EmptyDatasetError("cleaning removed every row")
    return out, CleanReport(missing, dups, conflicts)


# ---------------------------------------------------------------------------
# splitting


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    validation_fraction: float = 0.1
    test_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        fr = self.fractions
        if any(not (0.0 < f < 1.0) for f in fr):
            raise DataError(f"split fractions must lie in (0, 1), got {fr}")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise DataError(f"split fractions must sum to 1, got {sum(fr)!r}")

    @property
    def fractions(self):
        return (self.train_fraction, self.validation_fraction, self.test_fraction)


@dataclass(frozen=True, eq=False)
class SplitResult:
    train: Dataset
    validation: Dataset
    test: Dataset
    partition_a: Dataset
    partition_b: Dataset


def allocate(class_sizes, fractions) -> np.ndarray:
    """Per-class subset sizes, shape (n_classes, n_subsets).

    Each class first receives ``floor(fraction * size)`` rows per subset. The
    leftover rows go one at a time to the subsets with the largest fractional
    part; ties go to the subset that has collected the fewest leftovers so far
    (across earlier classes), then to the earlier subset.
    """
    fractions = np.asarray(fractions, dtype=np.float64)
    out = np.zeros((len(class_sizes), fractions.size), dtype=np.int64)
    leftovers_taken = np.zeros(fractions.size, dtype=np.int64)
    for c, size in enumerate(class_sizes):
        exact = fractions * size
        # guard against 0.29 * 100 == 28.999999999999996
        base = np.floor(exact + 1e-9).astype(np.int64)
        frac = np.maximum(exact - base, 0.0)
        out[c] = base
        remaining = int(size - base.sum())
        if remaining <= 0:
            continue
        order = sorted(range(fractions.size), key=lambda s: (-round(frac[s], 12), leftovers_taken[s], s))
        for s in order[:remaining]:
            out[c, s] += 1
            leftovers_taken[s] += 1
    return out


def _stratified_assign(ds: Dataset, fractions, seed: int) -> list[np.ndarray]:
    """Positions (into ``ds``) for each subset, each list ascending."""
    labels = ds.labels
    sizes = [int(np.count_nonzero(labels == c)) for c in (0, 1)]
    counts = allocate(sizes, fractions)
    parts = [[] for _ in fractions]
    for c in (0, 1):
        members = np.flatnonzero(labels == c)
        members = members[np.argsort(ds.row_ids[members], kind="stable")]
        rng = np.random.default_rng(np.random.SeedSequence([seed, c]))
        members = members[rng.permutation(members.size)]
        bounds = np.concatenate([[0], np.cumsum(counts[c])])
        for s in range(len(fractions)):
            parts[s].append(members[bounds[s]:bounds[s + 1]])
    return [np.sort(np.concatenate(p)) for p in parts]


def stratified_split(data: Dataset, spec: SplitSpec) -> SplitResult:
    """Stratified train/validation/test split plus two stratified halves of train.

    The halves use the same allocation rule with fractions (0.5, 0.5) and
    ``seed + 1``.
    """
    if data.labels is None:
        raise DataError("cannot split an unlabeled dataset")
    neg, pos = data.class_counts()
    if min(neg, pos) < 2:
        raise StratificationError(f"each class needs at least 2 rows (benign={neg}, malicious={pos})")
    train_idx, val_idx, test_idx = _stratified_assign(data, spec.fractions, spec.seed)
    for name, idx in (("train", train_idx), ("validation", val_idx), ("test", test_idx)):
        if idx.size == 0:
            raise StratificationError(f"{name} subset would be empty")
    train = data.take(train_idx)
    a_idx, b_idx = _stratified_assign(train, (0.5, 0.5), spec.seed + 1)
    if a_idx.size == 0 or b_idx.size == 0:
        raise StratificationError("training split too small for two partitions")
    return SplitResult(
        train=train,
        validation=data.take(val_idx),
        test=data.take(test_idx),
        partition_a=train.take(a_idx),
        partition_b=train.take(b_idx),
    )
