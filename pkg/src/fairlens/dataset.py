"""Immutable tabular datasets with an optional protected group attribute.

The container keeps the protected attribute *beside* the feature matrix, not
inside it, so models are group-blind by construction unless a caller encodes
the attribute explicitly (see :func:`with_group_indicators`). Arrays are
frozen (non-writeable copies); all transformations return new datasets.

CSV ingestion is deliberately strict: column roles are declared by the
caller, never inferred, labels must be 0/1, every other declared column must
parse as a finite float, and missing values are rejected with the offending
row number.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .seeding import derive_seed

DEFAULT_UNSPECIFIED = "U"


def _frozen(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TabularDataset:
    """A feature matrix, binary labels, and an optional group column.

    Parameters
    ----------
    feature_names : tuple of str
        One name per feature column, unique.
    X : ndarray of shape (n_rows, n_features)
        Float64 feature matrix; all values finite.
    y : ndarray of shape (n_rows,)
        Binary labels in {0, 1}.
    groups : ndarray of str, optional
        Per-row group category. ``None`` when no protected attribute is
        declared.
    category_set : tuple of str, optional
        Declared group categories, including the unspecified value. Every
        entry of ``groups`` must be a member.
    unspecified_category : str, optional
        Which member of ``category_set`` stands for "not specified".
    group_name : str, optional
        Name of the protected attribute (CSV column name, indicator prefix).
    row_ids : ndarray of int, optional
        Provenance row indices, propagated through splits and subsets.
    source_id : str, optional
        Identifier of the originating file or generator, used together with
        ``row_ids`` to check split disjointness.
    """

    feature_names: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray
    groups: np.ndarray | None = None
    category_set: tuple[str, ...] | None = None
    unspecified_category: str | None = None
    group_name: str | None = None
    row_ids: np.ndarray | None = None
    source_id: str | None = field(default=None, compare=False)

    def __post_init__(self):
        names = tuple(str(n) for n in self.feature_names)
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")
        X = _frozen(self.X, np.float64)
        if X.ndim != 2:
            raise ValueError("X must be a 2-d array")
        if X.shape[1] != len(names):
            raise ValueError(
                f"X has {X.shape[1]} columns but {len(names)} feature names given")
        if X.size and not np.all(np.isfinite(X)):
            raise ValueError("feature values must be finite")
        y = _frozen(self.y, np.int64)
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ValueError("y must be 1-d with one label per row")
        if y.size and not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

        if self.groups is not None:
            groups = _frozen([str(g) for g in self.groups], object)
            if groups.shape[0] != X.shape[0]:
                raise ValueError("groups must have one entry per row")
            if self.category_set is None:
                raise ValueError("category_set is required when groups are given")
            cats = tuple(str(c) for c in self.category_set)
            if len(set(cats)) != len(cats):
                raise ValueError("category_set entries must be unique")
            unspec = self.unspecified_category
            if unspec is None:
                unspec = DEFAULT_UNSPECIFIED if DEFAULT_UNSPECIFIED in cats else None
            if unspec is None or unspec not in cats:
                raise ValueError(
                    "category_set must include the unspecified category")
            present = set(groups.tolist())
            unknown = present - set(cats)
            if unknown:
                raise ValueError(f"group values outside category_set: {sorted(unknown)}")
            object.__setattr__(self, "groups", groups)
            object.__setattr__(self, "category_set", cats)
            object.__setattr__(self, "unspecified_category", unspec)
            object.__setattr__(self, "group_name", self.group_name or "group")
        else:
            if self.category_set is not None:
                raise ValueError("category_set given but no groups")
            object.__setattr__(self, "unspecified_category", None)
            object.__setattr__(self, "group_name", None)

        if self.row_ids is not None:
            ids = _frozen(self.row_ids, np.int64)
            if ids.shape != (X.shape[0],):
                raise ValueError("row_ids must have one entry per row")
            object.__setattr__(self, "row_ids", ids)

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def positive_rate(self) -> float:
        if self.n_rows == 0:
            raise ValueError("empty dataset has no positive rate")
        return float(self.y.mean())

    def feature_index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise ValueError(f"unknown feature: {name!r}") from None

    def feature_values(self, name: str) -> np.ndarray:
        return self.X[:, self.feature_index(name)]

    def group_mask(self, category: str) -> np.ndarray:
        if self.groups is None:
            raise ValueError("no protected attribute declared")
        if self.category_set and category not in self.category_set:
            raise ValueError(f"unknown category: {category!r}")
        return self.groups == category

    def select_rows(self, indices) -> "TabularDataset":
        """Return the subset dataset at ``indices`` (order preserved)."""
        idx = np.asarray(indices, dtype=np.int64)
        return replace(
            self,
            X=self.X[idx],
            y=self.y[idx],
            groups=None if self.groups is None else self.groups[idx],
            row_ids=None if self.row_ids is None else self.row_ids[idx],
        )

    def drop_feature(self, name: str) -> "TabularDataset":
        """Return a copy without the named feature column."""
        if self.n_features < 2:
            raise ValueError("cannot drop the only feature")
        j = self.feature_index(name)
        keep = [i for i in range(self.n_features) if i != j]
        return replace(
            self,
            feature_names=tuple(n for n in self.feature_names if n != name),
            X=self.X[:, keep],
        )

    def without_groups(self) -> "TabularDataset":
        return replace(self, groups=None, category_set=None,
                       unspecified_category=None, group_name=None)

    def with_shuffled_groups(self, seed: int) -> "TabularDataset":
        """Return a copy whose group column is randomly permuted.

        Useful for test-time blindness checks: a model that never reads the
        group attribute must score both copies identically.
        """
        if self.groups is None:
            raise ValueError("no protected attribute declared")
        rng = np.random.default_rng(derive_seed(seed, "shuffle-groups"))
        return replace(self, groups=self.groups[rng.permutation(self.n_rows)])


def with_group_indicators(dataset: TabularDataset) -> TabularDataset:
    """Append one 0/1 indicator feature per group category.

    Indicator columns are named ``"<group_name>=<category>"`` and appended
    in ``category_set`` order. Every row has exactly one indicator set to 1
    (unspecified rows included), so no row is silently dropped or zeroed.
    """
    if dataset.groups is None:
        raise ValueError("no protected attribute declared")
    indicators = np.column_stack([
        (dataset.groups == cat).astype(np.float64)
        for cat in dataset.category_set
    ])
    names = dataset.feature_names + tuple(
        f"{dataset.group_name}={cat}" for cat in dataset.category_set)
    return replace(dataset,
                   feature_names=names,
                   X=np.hstack([dataset.X, indicators]))


def read_csv(path, *, label_column: str, group_column: str | None = None,
             category_set=None, unspecified_category: str = DEFAULT_UNSPECIFIED,
             group_name: str | None = None) -> TabularDataset:
    """Load a dataset from a headed CSV file with declared column roles.

    Parameters
    ----------
    path : str or Path
        CSV file with a header row.
    label_column : str
        Name of the 0/1 label column.
    group_column : str, optional
        Name of the group column. Empty cells map to the unspecified
        category. All remaining columns are numeric features.
    category_set : sequence of str, optional
        Declared categories. Defaults to the sorted observed values plus the
        unspecified category.
    unspecified_category : str
        Category used for empty group cells (and added to a derived
        category set).
    group_name : str, optional
        Attribute name recorded on the dataset; defaults to ``group_column``.

    Raises
    ------
    ValueError
        On a missing header, unknown declared columns, non-binary labels,
        non-numeric or missing feature values (with the offending row
        number), or group values outside a declared category set.
    """
    path = str(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row") from None
        if label_column not in header:
            raise ValueError(f"{path}: label column {label_column!r} not in header")
        if group_column is not None and group_column not in header:
            raise ValueError(f"{path}: group column {group_column!r} not in header")
        label_idx = header.index(label_column)
        group_idx = header.index(group_column) if group_column is not None else None
        feat_idx = [i for i in range(len(header))
                    if i != label_idx and i != group_idx]
        feature_names = tuple(header[i] for i in feat_idx)

        rows, labels, cats = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(
                    f"{path}: row {lineno}: expected {len(header)} cells, got {len(row)}")
            cell = row[label_idx].strip()
            if cell not in ("0", "1"):
                raise ValueError(
                    f"{path}: row {lineno}: label must be 0 or 1, got {cell!r}")
            labels.append(int(cell))
            vals = []
            for i in feat_idx:
                cell = row[i].strip()
                if cell == "":
                    raise ValueError(
                        f"{path}: row {lineno}: missing value in column {header[i]!r}")
                try:
                    v = float(cell)
                except ValueError:
                    raise ValueError(
                        f"{path}: row {lineno}: non-numeric value {cell!r} "
                        f"in column {header[i]!r}") from None
                if not np.isfinite(v):
                    raise ValueError(
                        f"{path}: row {lineno}: non-finite value in column {header[i]!r}")
                vals.append(v)
            rows.append(vals)
            if group_idx is not None:
                cats.append(row[group_idx].strip() or unspecified_category)

    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(feature_names))
    y = np.array(labels, dtype=np.int64)
    groups = None
    cat_tuple = None
    if group_column is not None:
        groups = np.array(cats, dtype=object)
        if category_set is None:
            observed = sorted(set(cats) | {unspecified_category})
            cat_tuple = tuple(observed)
        else:
            cat_tuple = tuple(category_set)
    return TabularDataset(
        feature_names=feature_names, X=X, y=y,
        groups=groups, category_set=cat_tuple,
        unspecified_category=unspecified_category if group_column else None,
        group_name=group_name or group_column,
        row_ids=np.arange(len(y)),
        source_id=path,
    )


def write_csv(dataset: TabularDataset, path, *, label_column: str = "label") -> None:
    """Write a dataset to CSV (features, optional group column, label).

    Floats are written with ``repr`` so a round-trip through
    :func:`read_csv` reproduces the matrix bit for bit.
    """
    with open(str(path), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = list(dataset.feature_names)
        if dataset.groups is not None:
            header.append(dataset.group_name)
        header.append(label_column)
        writer.writerow(header)
        for i in range(dataset.n_rows):
            row = [repr(float(v)) for v in dataset.X[i]]
            if dataset.groups is not None:
                row.append(dataset.groups[i])
            row.append(str(int(dataset.y[i])))
            writer.writerow(row)


def train_test_split(dataset: TabularDataset, eval_fraction: float, seed: int,
                     *, stratify: bool = True):
    """Split into disjoint (train, eval) datasets.

    With ``stratify`` the positive/negative label balance is preserved on
    both sides (per-class proportional allocation). Row order within each
    side follows the original dataset, and row_ids propagate, so
    disjointness stays checkable downstream.
    """
    if not 0.0 < eval_fraction < 1.0:
        raise ValueError("eval_fraction must be in (0, 1)")
    n = dataset.n_rows
    if n < 2:
        raise ValueError("need at least 2 rows to split")
    rng = np.random.default_rng(derive_seed(seed, "train-test-split"))
    eval_idx = []
    classes = [np.flatnonzero(dataset.y == c) for c in (0, 1)] if stratify \
        else [np.arange(n)]
    for idx in classes:
        if idx.size == 0:
            continue
        shuffled = rng.permutation(idx)
        k = int(round(eval_fraction * idx.size))
        k = min(max(k, 1 if idx.size > 1 else 0), idx.size - 1)
        eval_idx.append(shuffled[:k])
    eval_idx = np.sort(np.concatenate(eval_idx))
    mask = np.zeros(n, dtype=bool)
    mask[eval_idx] = True
    train_idx = np.flatnonzero(~mask)
    return dataset.select_rows(train_idx), dataset.select_rows(eval_idx)


def datasets_disjoint(a: TabularDataset, b: TabularDataset) -> bool | None:
    """Check row-level disjointness of two datasets via provenance.

    Returns ``True``/``False`` when both datasets carry row_ids from the
    same source, ``None`` when provenance is unknown (different or missing
    sources), in which case disjointness is the caller's responsibility.
    """
    if (a.source_id is None or b.source_id is None
            or a.source_id != b.source_id
            or a.row_ids is None or b.row_ids is None):
        return None
    return not bool(np.intersect1d(a.row_ids, b.row_ids).size)
