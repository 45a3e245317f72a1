"""Multi-label datasets, label-overlap similarity, splits and CSV persistence."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DataError,
    DimensionError,
    EmptyLabelError,
    InsufficientItemsError,
    LabelValueError,
    MalformedRowError,
    RowCountMismatchError,
)


def _check_labels(labels: np.ndarray) -> None:
    if not np.isin(labels, (0, 1)).all():
        r, c = np.argwhere(~np.isin(labels, (0, 1)))[0]
        raise LabelValueError(f"label value {labels[r, c]!r} at row {r}, column {c} is not 0/1")
    empty = np.flatnonzero(labels.sum(axis=1) == 0)
    if empty.size:
        raise EmptyLabelError(f"label row {int(empty[0])} has no positive entry")


@dataclass(frozen=True, eq=False)
class MultiLabelDataset:
    features: np.ndarray
    labels: np.ndarray
    ids: np.ndarray = field(default=None)

    def __post_init__(self):
        features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        labels = np.atleast_2d(np.asarray(self.labels))
        if features.shape[0] != labels.shape[0]:
            raise RowCountMismatchError(
                f"{features.shape[0]} feature rows but {labels.shape[0]} label rows"
            )
        if features.shape[1] < 1:
            raise DataError("feature width must be at least 1")
        if labels.shape[1] < 2:
            raise DataError("need at least 2 classes")
        _check_labels(labels)
        ids = np.arange(len(features)) if self.ids is None else np.asarray(self.ids)
        if ids.shape != (len(features),):
            raise RowCountMismatchError(f"{ids.size} ids for {len(features)} items")
        for name, arr in (("features", features), ("labels", labels.astype(np.int8)), ("ids", ids)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_classes(self) -> int:
        return self.labels.shape[1]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "MultiLabelDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return MultiLabelDataset(self.features[idx], self.labels[idx], self.ids[idx])

    def __eq__(self, other):
        if not isinstance(other, MultiLabelDataset):
            return NotImplemented
        return (
            np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.ids, other.ids)
        )


@dataclass(frozen=True)
class SplitSpec:
    query: np.ndarray
    train: np.ndarray
    database: np.ndarray


def pairwise_similarity(a, b) -> int:
    """1 if the two label vectors share at least one positive class."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise DimensionError(f"label length mismatch: {a.shape} vs {b.shape}")
    return int(np.any((a == 1) & (b == 1)))


def batch_similarity(A, B) -> np.ndarray:
    """|A| x |B| matrix of :func:`pairwise_similarity` values."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.size == 0 or B.size == 0:
        raise DataError("batch_similarity needs non-empty label lists")
    A, B = np.atleast_2d(A), np.atleast_2d(B)
    if A.shape[1] != B.shape[1]:
        raise DimensionError(f"class count mismatch: {A.shape[1]} vs {B.shape[1]}")
    _check_labels(A)
    _check_labels(B)
    return (A.astype(np.int64) @ B.astype(np.int64).T > 0).astype(np.float64)


def generate_synthetic(
    n_per_class: int,
    n_classes: int,
    dim: int,
    multi_label_prob: float = 0.0,
    noise_sigma: float = 0.1,
    seed: int = 0,
) -> MultiLabelDataset:
    """Gaussian class-prototype data.

    Every item gets a primary class (``n_per_class`` items per class) and
    each other class independently with probability ``multi_label_prob``.
    Features are the mean of the member-class prototypes plus isotropic
    noise. Prototypes are unit-norm directions in ``R^dim``.
    """
    if min(n_per_class, n_classes, dim) <= 0:
        raise DataError("counts and dimension must be positive")
    if not 0.0 <= multi_label_prob < 1.0:
        raise DataError("multi_label_prob must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    protos = rng.standard_normal((n_classes, dim))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)
    m = n_per_class * n_classes
    primary = np.repeat(np.arange(n_classes), n_per_class)
    labels = (rng.random((m, n_classes)) < multi_label_prob).astype(np.int8)
    labels[np.arange(m), primary] = 1
    feats = (labels @ protos) / labels.sum(axis=1, keepdims=True)
    feats = feats + noise_sigma * rng.standard_normal((m, dim))
    return MultiLabelDataset(feats, labels)


def make_split(
    dataset: MultiLabelDataset,
    per_class_query: int,
    per_class_train: int,
    seed: int = 0,
    train_in_database: bool = True,
) -> SplitSpec:
    """Per-class query/train sampling.

    For each class in order, ``per_class_query`` not-yet-taken items carrying
    that class become queries; everything else is the database. Training
    items are then drawn per class from the database the same way. Queries
    never enter the database; with ``train_in_database=False`` the training
    items are removed from it too.
    """
    rng = np.random.default_rng(seed)
    m = len(dataset)
    perm = rng.permutation(m)

    def take(pool_mask: np.ndarray, per_class: int, what: str) -> np.ndarray:
        chosen = []
        for c in range(dataset.n_classes):
            cand = perm[pool_mask[perm] & (dataset.labels[perm, c] == 1)]
            if cand.size < per_class:
                raise InsufficientItemsError(
                    f"class {c}: need {per_class} {what} items, only {cand.size} available"
                )
            picked = cand[:per_class]
            pool_mask[picked] = False
            chosen.append(picked)
        return np.sort(np.concatenate(chosen)) if chosen else np.empty(0, np.int64)

    available = np.ones(m, dtype=bool)
    query = take(available, per_class_query, "query")
    database_mask = available.copy()
    train = take(available, per_class_train, "train")
    if not train_in_database:
        database_mask[train] = False
    return SplitSpec(query=query, train=train, database=np.flatnonzero(database_mask))


# --- CSV persistence -------------------------------------------------------

def _write_matrix(path: Path, rows, header) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _read_rows(path: Path) -> list[list[str]]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if rows:
        try:
            [float(c) for c in rows[0]]
        except ValueError:
            rows = rows[1:]  # header row
    return rows


def save_dataset(dataset: MultiLabelDataset, directory) -> tuple[Path, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    fpath, lpath = directory / "features.csv", directory / "labels.csv"
    _write_matrix(
        fpath,
        ([repr(float(x)) for x in row] for row in dataset.features),
        [f"f{j}" for j in range(dataset.dim)],
    )
    _write_matrix(
        lpath,
        ([str(int(x)) for x in row] for row in dataset.labels),
        [f"c{j}" for j in range(dataset.n_classes)],
    )
    return fpath, lpath


def load_dataset(features_path, labels_path) -> MultiLabelDataset:
    frows = _read_rows(Path(features_path))
    lrows = _read_rows(Path(labels_path))
    if len(frows) != len(lrows):
        raise RowCountMismatchError(f"{len(frows)} feature rows but {len(lrows)} label rows")
    if not frows:
        raise DataError("empty dataset")

    def parse(rows, conv, what):
        width = len(rows[0])
        out = []
        for i, row in enumerate(rows):
            if len(row) != width:
                raise MalformedRowError(f"{what} row {i}: {len(row)} columns, expected {width}")
            vals = []
            for j, cell in enumerate(row):
                try:
                    vals.append(conv(cell.strip()))
                except ValueError:
                    raise MalformedRowError(f"{what} row {i}, column {j}: cannot parse {cell!r}") from None
            out.append(vals)
        return out

    feats = np.array(parse(frows, float, "features"), dtype=np.float64)
    if not np.isfinite(feats).all():
        r, c = np.argwhere(~np.isfinite(feats))[0]
        raise MalformedRowError(f"features row {r}, column {c}: non-finite value")
    labels = np.array(parse(lrows, int, "labels"), dtype=np.int64)
    bad = np.argwhere((labels != 0) & (labels != 1))
    if bad.size:
        r, c = bad[0]
        raise LabelValueError(f"labels row {r}, column {c}: value {labels[r, c]} is not 0/1")
    return MultiLabelDataset(feats, labels)
