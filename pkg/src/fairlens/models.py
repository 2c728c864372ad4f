"""Decision tree and random forest learners with reproducibility contracts.

These are deliberately self-contained (plain numpy) rather than wrappers
around an external learner, because the toolkit's audit trail depends on
guarantees that off-the-shelf implementations do not make:

* training is a pure function of (dataset, hyperparameters, seed), with
  per-tree seeds derived from the master seed, so any audited model can be
  reproduced bit for bit later;
* split ties break deterministically (lowest feature index, then lowest
  threshold);
* a leaf scores the exact positive-label fraction of its training rows, and
  a forest scores the exact mean of its trees, so downstream explanation
  fidelity can be asserted at the 1e-12 level rather than "close enough".

Scores are risk estimates in [0, 1]; classification applies a threshold
(default 0.5) as ``score >= threshold``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .dataset import TabularDataset
from .seeding import derive_seed

DEFAULT_THRESHOLD = 0.5

MODEL_FILE_FORMAT = "fairlens-model"
MODEL_FILE_VERSION = 1


@dataclass(frozen=True)
class TreeParams:
    """Hyperparameters for a single decision tree.

    ``feature_fraction`` is the fraction of features drawn (without
    replacement) as split candidates at each node; 1.0 considers all.
    """
    max_depth: int = 8
    min_leaf: int = 1
    feature_fraction: float = 1.0

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if not 0.0 < self.feature_fraction <= 1.0:
            raise ValueError("feature_fraction must be in (0, 1]")


@dataclass(frozen=True)
class ForestParams:
    """Hyperparameters for a bagged forest of decision trees."""
    n_trees: int = 30
    max_depth: int = 8
    min_leaf: int = 5
    feature_fraction: float = 1.0
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        TreeParams(self.max_depth, self.min_leaf, self.feature_fraction)

    def tree_params(self) -> TreeParams:
        return TreeParams(self.max_depth, self.min_leaf, self.feature_fraction)


class PredictionOracle:
    """Interface of anything that maps feature rows to risk scores.

    Subclasses implement :meth:`score_batch`; single-row scoring and
    thresholded classification derive from it, so batch and single-row
    outputs agree bit for bit by construction.
    """

    feature_names: tuple[str, ...] = ()
    model_kind: str = "oracle"
    decision_threshold: float = DEFAULT_THRESHOLD

    def score_batch(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def score(self, features) -> float:
        x = np.asarray(features, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError("score() takes a single feature row")
        return float(self.score_batch(x[np.newaxis, :])[0])

    def classify_batch(self, X: np.ndarray, threshold: float | None = None) -> np.ndarray:
        t = self.decision_threshold if threshold is None else threshold
        return (self.score_batch(X) >= t).astype(np.int64)

    def classify(self, features, threshold: float | None = None) -> int:
        t = self.decision_threshold if threshold is None else threshold
        return int(self.score(features) >= t)

    def _check_matrix(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("expected a 2-d feature matrix")
        if self.feature_names and X.shape[1] != len(self.feature_names):
            raise ValueError(
                f"expected {len(self.feature_names)} features, got {X.shape[1]}")
        return X


class DecisionTreeModel(PredictionOracle):
    """A trained CART tree stored as flat node arrays.

    ``feature[i] == -1`` marks node ``i`` as a leaf with risk ``value[i]``;
    internal nodes route rows with ``x[feature] <= threshold`` to ``left``
    and the rest to ``right``.
    """

    model_kind = "decision_tree"

    def __init__(self, feature_names, feature, threshold, left, right, value,
                 decision_threshold: float = DEFAULT_THRESHOLD):
        self.feature_names = tuple(feature_names)
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=np.float64)
        self.decision_threshold = float(decision_threshold)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def score_batch(self, X: np.ndarray) -> np.ndarray:
        X = self._check_matrix(X)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return self.value[node].copy()

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, feature_names, d, decision_threshold=DEFAULT_THRESHOLD):
        return cls(feature_names, d["feature"], d["threshold"], d["left"],
                   d["right"], d["value"], decision_threshold)


class RandomForestModel(PredictionOracle):
    """A bagged ensemble of :class:`DecisionTreeModel`.

    The forest risk score is the arithmetic mean of its trees' scores,
    accumulated in tree order, which makes batch scoring identical to
    averaging single-row queries.
    """

    model_kind = "random_forest"

    def __init__(self, feature_names, trees, params: ForestParams,
                 seed: int, decision_threshold: float = DEFAULT_THRESHOLD):
        self.feature_names = tuple(feature_names)
        self.trees = list(trees)
        self.params = params
        self.seed = int(seed)
        self.decision_threshold = float(decision_threshold)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def score_batch(self, X: np.ndarray) -> np.ndarray:
        X = self._check_matrix(X)
        acc = np.zeros(X.shape[0], dtype=np.float64)
        for tree in self.trees:
            acc += tree.score_batch(X)
        return acc / len(self.trees)

    def tree_scores(self, X: np.ndarray) -> np.ndarray:
        """Per-tree scores, shape (n_trees, n_rows); mean(axis=0) = forest."""
        X = self._check_matrix(X)
        return np.stack([tree.score_batch(X) for tree in self.trees])


def _grow_tree(X: np.ndarray, y: np.ndarray, params: TreeParams,
               rng: np.random.Generator):
    """Grow one CART tree; returns flat node arrays.

    Split quality maximizes sum over children of (pos^2 + neg^2) / count,
    which orders splits identically to minimizing weighted Gini impurity.
    Candidate thresholds are midpoints between consecutive distinct sorted
    values. Ties break toward the lowest feature index (features are
    scanned in ascending order with a strict improvement test) and, within
    a feature, toward the lowest threshold (first argmax).
    """
    n, d = X.shape
    k_feat = max(1, int(round(params.feature_fraction * d)))
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        yn = y[idx]
        m = idx.size
        pos = int(yn.sum())
        value[node] = pos / m
        if depth >= params.max_depth or pos == 0 or pos == m or m < 2 * params.min_leaf:
            continue
        if k_feat < d:
            candidates = np.sort(rng.permutation(d)[:k_feat])
        else:
            candidates = range(d)
        best_q = -np.inf
        best_feat = -1
        best_thr = 0.0
        Xn = X[idx]
        for j in candidates:
            xj = Xn[:, j]
            order = np.argsort(xj, kind="stable")
            xs = xj[order]
            cum_pos = np.cumsum(yn[order])
            split_at = np.flatnonzero(xs[:-1] < xs[1:])
            if params.min_leaf > 1:
                split_at = split_at[(split_at + 1 >= params.min_leaf)
                                    & (m - split_at - 1 >= params.min_leaf)]
            if split_at.size == 0:
                continue
            lc = (split_at + 1).astype(np.float64)
            lp = cum_pos[split_at].astype(np.float64)
            rc = m - lc
            rp = pos - lp
            ln = lc - lp
            rn = rc - rp
            q = (lp * lp + ln * ln) / lc + (rp * rp + rn * rn) / rc
            k = int(np.argmax(q))
            if q[k] > best_q:
                best_q = q[k]
                best_feat = int(j)
                best_thr = (xs[split_at[k]] + xs[split_at[k] + 1]) / 2.0
        if best_feat < 0:
            continue
        go_left = X[idx, best_feat] <= best_thr
        feature[node] = best_feat
        threshold[node] = best_thr
        left_id = new_node()
        right_id = new_node()
        left[node] = left_id
        right[node] = right_id
        stack.append((right_id, idx[~go_left], depth + 1))
        stack.append((left_id, idx[go_left], depth + 1))
    return feature, threshold, left, right, value


def _require_trainable(dataset: TabularDataset) -> None:
    if dataset.n_rows == 0:
        raise ValueError("empty training set")
    if dataset.n_features == 0:
        raise ValueError("training set has no features")


def train_decision_tree(dataset: TabularDataset, params: TreeParams | None = None,
                        seed: int = 0) -> DecisionTreeModel:
    """Train a single CART tree on the dataset's features and labels.

    Uses the same derived seed as tree 0 of a forest, so a 1-tree forest
    without bootstrap reproduces this model exactly.
    """
    _require_trainable(dataset)
    params = params or TreeParams()
    rng = np.random.default_rng(derive_seed(seed, "tree", 0))
    arrays = _grow_tree(dataset.X, dataset.y, params, rng)
    return DecisionTreeModel(dataset.feature_names, *arrays)


def train_random_forest(dataset: TabularDataset, params: ForestParams | None = None,
                        seed: int = 0) -> RandomForestModel:
    """Train a bagged forest; deterministic given (dataset, params, seed)."""
    _require_trainable(dataset)
    params = params or ForestParams()
    tree_params = params.tree_params()
    n = dataset.n_rows
    trees = []
    for i in range(params.n_trees):
        rng = np.random.default_rng(derive_seed(seed, "tree", i))
        if params.bootstrap:
            idx = rng.integers(0, n, size=n)
            Xi, yi = dataset.X[idx], dataset.y[idx]
        else:
            Xi, yi = dataset.X, dataset.y
        arrays = _grow_tree(Xi, yi, tree_params, rng)
        trees.append(DecisionTreeModel(dataset.feature_names, *arrays))
    return RandomForestModel(dataset.feature_names, trees, params, seed)


def train_model(dataset: TabularDataset, params, seed: int = 0) -> PredictionOracle:
    """Dispatch on params type: ForestParams or TreeParams."""
    if isinstance(params, ForestParams):
        return train_random_forest(dataset, params, seed)
    if isinstance(params, TreeParams):
        return train_decision_tree(dataset, params, seed)
    raise TypeError(f"unsupported params type: {type(params).__name__}")


@dataclass(frozen=True)
class FoldMetrics:
    """Held-out metrics for one cross-validation fold.

    ``tpr``/``tnr`` are ``None`` (an explicit undefined marker, never 0)
    when the fold contains no positives/negatives.
    """
    fold_index: int
    tpr: float | None
    tnr: float | None
    accuracy: float
    heldout_row_indices: tuple[int, ...]


def stratified_fold_ids(values: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Assign each row a fold id in [0, k), stratified on ``values``.

    Rows of each distinct value are shuffled and dealt round-robin, with
    the dealing cursor running on across values. Per-fold class counts stay
    within one row of proportional, and k = n yields n singleton folds.
    """
    values = np.asarray(values)
    n = values.shape[0]
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > n:
        raise ValueError(f"k = {k} exceeds row count {n}")
    rng = np.random.default_rng(derive_seed(seed, "folds"))
    fold = np.empty(n, dtype=np.int64)
    cursor = 0
    for val in np.unique(values):
        idx = rng.permutation(np.flatnonzero(values == val))
        fold[idx] = (cursor + np.arange(idx.size)) % k
        cursor += idx.size
    return fold


def _confusion_rates(y_true: np.ndarray, y_pred: np.ndarray):
    tp = int(np.sum((y_pred == 1) & (y_true == 1)))
    fn = int(np.sum((y_pred == 0) & (y_true == 1)))
    tn = int(np.sum((y_pred == 0) & (y_true == 0)))
    fp = int(np.sum((y_pred == 1) & (y_true == 0)))
    tpr = tp / (tp + fn) if tp + fn else None
    tnr = tn / (tn + fp) if tn + fp else None
    acc = (tp + tn) / y_true.size
    return tpr, tnr, acc


def _cross_val(dataset: TabularDataset, k: int, params, seed: int):
    """Shared CV engine: returns (fold_ids, out-of-fold scores)."""
    _require_trainable(dataset)
    fold_ids = stratified_fold_ids(dataset.y, k, seed)
    scores = np.empty(dataset.n_rows, dtype=np.float64)
    for f in range(k):
        heldout = np.flatnonzero(fold_ids == f)
        train = np.flatnonzero(fold_ids != f)
        model = train_model(dataset.select_rows(train), params,
                            derive_seed(seed, "fold-model", f))
        scores[heldout] = model.score_batch(dataset.X[heldout])
    return fold_ids, scores


def cross_validate(dataset: TabularDataset, k: int, params, seed: int = 0,
                   threshold: float = DEFAULT_THRESHOLD):
    """Run stratified k-fold CV once; return (fold metrics, fold ids, scores).

    Scores are pooled out-of-fold predictions, row-aligned with the
    dataset: every row is scored exactly once, by a model that did not
    train on it. Fold metrics are computed from those same scores at the
    given classification threshold, so the fold-level and pooled views
    never disagree.
    """
    fold_ids, scores = _cross_val(dataset, k, params, seed)
    preds = (scores >= threshold).astype(np.int64)
    folds = []
    for f in range(k):
        heldout = np.flatnonzero(fold_ids == f)
        tpr, tnr, acc = _confusion_rates(dataset.y[heldout], preds[heldout])
        folds.append(FoldMetrics(f, tpr, tnr, acc,
                                 tuple(int(i) for i in heldout)))
    return folds, fold_ids, scores


def k_fold_cross_validate(dataset: TabularDataset, k: int, params,
                          seed: int = 0,
                          threshold: float = DEFAULT_THRESHOLD) -> list[FoldMetrics]:
    """Stratified k-fold cross-validation of the model family ``params``."""
    return cross_validate(dataset, k, params, seed, threshold)[0]


def cross_val_scores(dataset: TabularDataset, k: int, params,
                     seed: int = 0) -> np.ndarray:
    """Pooled out-of-fold scores, row-aligned with the dataset.

    Uses the same fold assignment as :func:`k_fold_cross_validate` for the
    same (labels, k, seed), so fold-level and pooled views are consistent.
    """
    _, scores = _cross_val(dataset, k, params, seed)
    return scores


def save_model(model: PredictionOracle, path) -> None:
    """Serialize a trained tree or forest to a JSON model file."""
    if isinstance(model, RandomForestModel):
        payload = {
            "format": MODEL_FILE_FORMAT,
            "version": MODEL_FILE_VERSION,
            "model_kind": model.model_kind,
            "feature_names": list(model.feature_names),
            "decision_threshold": model.decision_threshold,
            "params": asdict(model.params),
            "seed": model.seed,
            "trees": [t.to_dict() for t in model.trees],
        }
    elif isinstance(model, DecisionTreeModel):
        payload = {
            "format": MODEL_FILE_FORMAT,
            "version": MODEL_FILE_VERSION,
            "model_kind": model.model_kind,
            "feature_names": list(model.feature_names),
            "decision_threshold": model.decision_threshold,
            "tree": model.to_dict(),
        }
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    with open(str(path), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> PredictionOracle:
    """Load a model file written by :func:`save_model`."""
    with open(str(path)) as fh:
        payload = json.load(fh)
    if payload.get("format") != MODEL_FILE_FORMAT:
        raise ValueError(f"{path}: not a model file")
    if payload.get("version") != MODEL_FILE_VERSION:
        raise ValueError(
            f"{path}: unsupported model file version {payload.get('version')!r}")
    names = tuple(payload["feature_names"])
    thr = float(payload.get("decision_threshold", DEFAULT_THRESHOLD))
    if payload["model_kind"] == "random_forest":
        params = ForestParams(**payload["params"])
        trees = [DecisionTreeModel.from_dict(names, d, thr) for d in payload["trees"]]
        return RandomForestModel(names, trees, params, payload.get("seed", 0), thr)
    if payload["model_kind"] == "decision_tree":
        return DecisionTreeModel.from_dict(names, payload["tree"], thr)
    raise ValueError(f"{path}: unknown model kind {payload['model_kind']!r}")
