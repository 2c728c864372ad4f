"""Group-conditional metrics and the quantitative half of a bias audit.

The pieces here answer four questions about a trained classifier:

1. How does it perform per group (confusion counts, TPR, TNR, accuracy,
   support, outcome rate)?
2. Are the per-group differences larger than an evidence-based tolerance
   (half-width from cross-validation fold spread)?
3. Could the protected attribute leak into the model indirectly, i.e. is
   it recoverable from the input features using the same model family?
4. Does group representation differ from a benchmark population
   (chi-squared goodness of fit), and how do metrics shift when a feature
   is ablated?

Per-group metrics are stored as raw confusion counts; rates are derived
properties, so a stored table can never disagree with its own counts.
Undefined rates (a group with no positives has no TPR) are explicit
``None`` values, never silently 0.
"""
from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.stats import chi2

from .dataset import TabularDataset
from .models import (DEFAULT_THRESHOLD, ForestParams, PredictionOracle,
                     cross_val_scores, stratified_fold_ids, train_model)
from .seeding import derive_seed

METRIC_NAMES = ("tpr", "tnr", "accuracy")
TOLERANCE_FLOOR = 0.005
DEFAULT_UPLIFT_THRESHOLD = 0.05


def round_sig(x: float, digits: int = 9) -> float:
    """Round to ``digits`` significant figures via decimal formatting."""
    return float(f"{float(x):.{digits}g}")


def _check_metric(name: str) -> str:
    metric = str(name).lower()
    if metric not in METRIC_NAMES:
        raise ValueError(f"unknown metric {name!r}, expected one of {METRIC_NAMES}")
    return metric


@dataclass(frozen=True)
class GroupMetrics:
    """Confusion counts for one group; rates are derived, never stored."""

    group: str
    tp: int
    fn: int
    tn: int
    fp: int

    def __post_init__(self):
        for name in ("tp", "fn", "tn", "fp"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def support(self) -> int:
        return self.tp + self.fn + self.tn + self.fp

    @property
    def outcome_rate(self) -> float | None:
        """Positive-label fraction of the group, None for an empty group."""
        return (self.tp + self.fn) / self.support if self.support else None

    @property
    def tpr(self) -> float | None:
        pos = self.tp + self.fn
        return self.tp / pos if pos else None

    @property
    def tnr(self) -> float | None:
        neg = self.tn + self.fp
        return self.tn / neg if neg else None

    @property
    def accuracy(self) -> float | None:
        return (self.tp + self.tn) / self.support if self.support else None

    def metric(self, name: str) -> float | None:
        return getattr(self, _check_metric(name))

    def to_dict(self) -> dict:
        return {
            "group": self.group,
            "support": self.support,
            "tp": self.tp, "fn": self.fn, "tn": self.tn, "fp": self.fp,
            "outcome_rate": self.outcome_rate,
            "tpr": self.tpr, "tnr": self.tnr, "accuracy": self.accuracy,
        }


@dataclass(frozen=True)
class GroupMetricsTable:
    """Per-group metrics for one (oracle, dataset, threshold) evaluation."""

    entries: tuple[GroupMetrics, ...]

    def __post_init__(self):
        names = [e.group for e in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("duplicate group in metrics table")

    @property
    def groups(self) -> tuple[str, ...]:
        return tuple(e.group for e in self.entries)

    def __getitem__(self, group: str) -> GroupMetrics:
        for e in self.entries:
            if e.group == group:
                return e
        raise KeyError(group)

    def __iter__(self):
        return iter(self.entries)

    @property
    def total_support(self) -> int:
        return sum(e.support for e in self.entries)

    @property
    def overall_accuracy(self) -> float:
        """Pooled accuracy over all rows, from summed confusion counts."""
        n = self.total_support
        if n == 0:
            raise ValueError("empty metrics table has no overall accuracy")
        return sum(e.tp + e.tn for e in self.entries) / n

    def support_weighted_accuracy(self) -> float:
        """Mean of per-group accuracies weighted by group support.

        Mathematically equal to :attr:`overall_accuracy`; computing it the
        long way round gives tests an internal-consistency check.
        """
        n = self.total_support
        if n == 0:
            raise ValueError("empty metrics table has no overall accuracy")
        return sum((e.support / n) * e.accuracy
                   for e in self.entries if e.support)

    def metric_values(self, metric: str,
                      groups=None) -> dict[str, float | None]:
        """Values of one metric keyed by group, in table order."""
        metric = _check_metric(metric)
        selected = self.groups if groups is None else tuple(groups)
        out = {}
        for g in selected:
            out[g] = getattr(self[g], metric)
        return out

    def to_dict(self) -> dict:
        return {e.group: e.to_dict() for e in self.entries}


def group_metrics_from_predictions(y_true, y_pred, groups,
                                   category_set=None) -> GroupMetricsTable:
    """Tally per-group confusion counts from raw label/prediction arrays.

    Parameters
    ----------
    y_true, y_pred : array-like of {0, 1}
        Actual and predicted labels, same length.
    groups : array-like of str
        Per-row group category.
    category_set : sequence of str, optional
        Categories to report, in order; defaults to the sorted observed
        values. A category with no rows still gets an (all-zero) entry.
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    groups = np.asarray(groups, dtype=object)
    if not (y_true.shape == y_pred.shape == groups.shape) or y_true.ndim != 1:
        raise ValueError("y_true, y_pred and groups must be 1-d and same length")
    for name, arr in (("y_true", y_true), ("y_pred", y_pred)):
        if arr.size and not np.isin(arr, (0, 1)).all():
            raise ValueError(f"{name} must contain only 0 and 1")
    if category_set is None:
        cats = tuple(sorted({str(g) for g in groups}))
    else:
        cats = tuple(category_set)
        extra = {str(g) for g in groups} - set(cats)
        if extra:
            raise ValueError(f"group values outside category_set: {sorted(extra)}")
    entries = []
    for cat in cats:
        m = groups == cat
        yt, yp = y_true[m], y_pred[m]
        entries.append(GroupMetrics(
            group=cat,
            tp=int(np.sum((yp == 1) & (yt == 1))),
            fn=int(np.sum((yp == 0) & (yt == 1))),
            tn=int(np.sum((yp == 0) & (yt == 0))),
            fp=int(np.sum((yp == 1) & (yt == 0))),
        ))
    return GroupMetricsTable(tuple(entries))


def compute_group_metrics(oracle: PredictionOracle, dataset: TabularDataset,
                          threshold: float | None = None) -> GroupMetricsTable:
    """Evaluate an oracle per group at a classification threshold.

    The threshold defaults to the oracle's own decision threshold. Groups
    with zero positives (or negatives) get ``None`` for TPR (or TNR).
    """
    if dataset.groups is None:
        raise ValueError("no protected attribute declared")
    preds = oracle.classify_batch(dataset.X, threshold)
    return group_metrics_from_predictions(dataset.y, preds, dataset.groups,
                                          dataset.category_set)


def _metric_mapping(metrics, metric: str) -> dict[str, float | None]:
    if isinstance(metrics, GroupMetricsTable):
        return metrics.metric_values(metric)
    if isinstance(metrics, Mapping):
        return {str(g): (None if v is None else float(v))
                for g, v in metrics.items()}
    raise TypeError("metrics must be a GroupMetricsTable or a mapping")


def compute_disparity(metrics, metric: str = "tpr", groups=None) -> float:
    """Largest pairwise absolute difference of a metric across groups.

    Parameters
    ----------
    metrics : GroupMetricsTable or mapping of group -> value
    metric : str
        One of ``tpr``, ``tnr``, ``accuracy``. Ignored for mapping input,
        which is taken as already being the metric of interest.
    groups : sequence of str, optional
        Which groups count. Defaults to every group present. Groups whose
        value is undefined are skipped; fewer than two defined values is
        an error.
    """
    values = _metric_mapping(metrics, metric)
    selected = list(values) if groups is None else list(groups)
    defined = []
    for g in selected:
        if g not in values:
            raise ValueError(f"unknown group {g!r}")
        if values[g] is not None:
            defined.append(values[g])
    if len(defined) < 2:
        raise ValueError("need at least 2 groups with a defined metric value")
    return float(max(defined) - min(defined))


@dataclass(frozen=True)
class ToleranceThreshold:
    """An allowed +/- band for per-group differences in one metric."""

    metric: str
    half_width: float = 0.02
    provenance: str = "configured"

    def __post_init__(self):
        object.__setattr__(self, "metric", _check_metric(self.metric))
        if not self.half_width > 0:
            raise ValueError("half_width must be > 0")
        if self.provenance not in ("configured", "derived-from-cv"):
            raise ValueError(f"unknown provenance {self.provenance!r}")

    def to_dict(self) -> dict:
        return {"metric": self.metric, "half_width": self.half_width,
                "provenance": self.provenance}


def derive_tolerance_from_cv(folds, metric: str = "tpr") -> ToleranceThreshold:
    """Turn cross-validation fold spread into a tolerance band.

    The half-width is (max - min) / 2 of the defined fold values, rounded
    to 9 significant figures (so fold TPRs 0.64/0.66/0.68 give exactly
    0.02) and floored at 0.005 so zero spread never yields a zero band.
    """
    metric = _check_metric(metric)
    values = [getattr(f, metric) for f in folds]
    defined = [v for v in values if v is not None]
    if len(defined) < 2:
        raise ValueError(f"need at least 2 folds with a defined {metric}")
    half = round_sig((max(defined) - min(defined)) / 2.0)
    return ToleranceThreshold(metric, max(half, TOLERANCE_FLOOR),
                              "derived-from-cv")


@dataclass(frozen=True)
class AuditFinding:
    """One (metric, group pair) disparity judged against a tolerance.

    ``direction`` names the favoured group (higher metric value), or is
    None on an exact tie. The exceeded flag uses strict inequality: a
    disparity exactly at the band edge is within tolerance.
    """

    metric: str
    group_a: str
    group_b: str
    disparity: float
    threshold: ToleranceThreshold
    exceeded: bool
    direction: str | None

    def __post_init__(self):
        if self.exceeded != (self.disparity > self.threshold.half_width):
            raise ValueError("exceeded flag inconsistent with disparity and threshold")

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "group_a": self.group_a,
            "group_b": self.group_b,
            "disparity": self.disparity,
            "threshold": self.threshold.to_dict(),
            "exceeded": self.exceeded,
            "direction": self.direction,
        }


def evaluate_bias(metrics: GroupMetricsTable, thresholds,
                  groups=None) -> list[AuditFinding]:
    """Judge per-group differences against tolerance thresholds.

    Produces one finding per (threshold metric, pair of selected groups).
    Every selected group must have a defined value for each judged metric.
    """
    if isinstance(thresholds, ToleranceThreshold):
        thresholds = [thresholds]
    thresholds = list(thresholds)
    seen = set()
    for thr in thresholds:
        if thr.metric in seen:
            raise ValueError(f"duplicate threshold for metric {thr.metric!r}")
        seen.add(thr.metric)
    selected = metrics.groups if groups is None else tuple(groups)
    findings = []
    for thr in thresholds:
        values = metrics.metric_values(thr.metric, selected)
        for a, b in combinations(selected, 2):
            va, vb = values[a], values[b]
            if va is None or vb is None:
                missing = a if va is None else b
                raise ValueError(
                    f"{thr.metric} undefined for group {missing!r}")
            disparity = abs(va - vb)
            direction = a if va > vb else b if vb > va else None
            findings.append(AuditFinding(
                metric=thr.metric, group_a=a, group_b=b,
                disparity=disparity, threshold=thr,
                exceeded=disparity > thr.half_width,
                direction=direction,
            ))
    return findings


@dataclass(frozen=True)
class IndirectIdentificationReport:
    """Outcome of trying to recover a protected attribute from features."""

    attribute: str
    accuracy: float
    baseline_accuracy: float
    uplift: float
    uplift_threshold: float
    verdict: str

    def __post_init__(self):
        for name in ("accuracy", "baseline_accuracy"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        expected = "identifiable" if self.uplift > self.uplift_threshold \
            else "not-identifiable"
        if self.verdict != expected:
            raise ValueError("verdict inconsistent with uplift and threshold")

    def to_dict(self) -> dict:
        return {
            "attribute": self.attribute,
            "accuracy": self.accuracy,
            "baseline_accuracy": self.baseline_accuracy,
            "uplift": self.uplift,
            "uplift_threshold": self.uplift_threshold,
            "verdict": self.verdict,
        }


def indirect_identification_test(dataset: TabularDataset, attribute=None,
                                 params=None, seed: int = 0, *, k: int = 5,
                                 uplift_threshold: float = DEFAULT_UPLIFT_THRESHOLD,
                                 ) -> IndirectIdentificationReport:
    """Test whether an attribute is recoverable from the model's features.

    Trains the same model family as the audited model (pass its
    hyperparameters for a model-matched test) to predict the attribute
    from the feature matrix, one-vs-rest per category, and measures
    accuracy by stratified k-fold cross-validation. The baseline is the
    largest category's share; an accuracy uplift above the threshold means
    the attribute leaks through the features.

    ``attribute`` is the dataset's group column when None, or its name; an
    array of per-row category labels may be passed instead to test a
    column the dataset does not carry.
    """
    if attribute is None or isinstance(attribute, str):
        if dataset.groups is None:
            raise ValueError("no protected attribute declared")
        if isinstance(attribute, str) and attribute != dataset.group_name:
            raise ValueError(
                f"dataset declares {dataset.group_name!r}, not {attribute!r}")
        name = dataset.group_name
        attr = dataset.groups
    else:
        attr = np.asarray([str(v) for v in attribute], dtype=object)
        if attr.shape != (dataset.n_rows,):
            raise ValueError("attribute must have one value per row")
        name = "attribute"
    cats = np.unique(attr)
    if cats.size < 2:
        raise ValueError("attribute has a single category")
    params = params if params is not None else ForestParams()
    fold_ids = stratified_fold_ids(attr, k, derive_seed(seed, "indirect-id"))
    scores = np.empty((dataset.n_rows, cats.size), dtype=np.float64)
    for f in range(k):
        train = np.flatnonzero(fold_ids != f)
        held = np.flatnonzero(fold_ids == f)
        X_train, X_held = dataset.X[train], dataset.X[held]
        for ci, cat in enumerate(cats):
            member = TabularDataset(
                feature_names=dataset.feature_names,
                X=X_train,
                y=(attr[train] == cat).astype(np.int64))
            model = train_model(member, params,
                                derive_seed(seed, "indirect-id", str(cat), f))
            scores[held, ci] = model.score_batch(X_held)
    predicted = cats[np.argmax(scores, axis=1)]
    accuracy = float(np.mean(predicted == attr))
    counts = np.array([np.sum(attr == c) for c in cats])
    baseline = float(counts.max() / dataset.n_rows)
    uplift = accuracy - baseline
    verdict = "identifiable" if uplift > uplift_threshold else "not-identifiable"
    return IndirectIdentificationReport(
        attribute=name, accuracy=accuracy, baseline_accuracy=baseline,
        uplift=uplift, uplift_threshold=uplift_threshold, verdict=verdict)


@dataclass(frozen=True)
class ChiSquaredResult:
    statistic: float
    p_value: float
    degrees_of_freedom: int

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "p_value": self.p_value,
                "degrees_of_freedom": self.degrees_of_freedom}


def chi_squared_group_benchmark(observed, benchmark, *,
                                normalize: bool = False) -> ChiSquaredResult:
    """Pearson goodness-of-fit of observed group counts to a benchmark.

    Parameters
    ----------
    observed : mapping of group -> count, or sequence of counts
    benchmark : mapping of group -> proportion, or sequence aligned with
        ``observed``. Proportions must be positive and sum to 1 within
        1e-9 unless ``normalize`` is set, in which case they are rescaled.

    Returns the Pearson statistic, the survival-function p-value (rounded
    to 6 significant figures) and groups - 1 degrees of freedom.
    """
    if isinstance(observed, Mapping) != isinstance(benchmark, Mapping):
        raise TypeError("observed and benchmark must both be mappings or both sequences")
    if isinstance(observed, Mapping):
        keys = sorted(set(observed) | set(benchmark))
        counts = np.array([float(observed.get(g, 0)) for g in keys])
        props = np.array([float(benchmark.get(g, 0.0)) for g in keys])
    else:
        counts = np.asarray(observed, dtype=np.float64)
        props = np.asarray(benchmark, dtype=np.float64)
        if counts.shape != props.shape or counts.ndim != 1:
            raise ValueError("observed and benchmark must be 1-d and same length")
    if counts.size < 2:
        raise ValueError("need at least 2 groups")
    if np.any(counts < 0) or not np.all(np.isfinite(counts)):
        raise ValueError("observed counts must be finite and >= 0")
    total = counts.sum()
    if total <= 0:
        raise ValueError("total observed count must be > 0")
    if np.any(props <= 0):
        raise ValueError("zero expected count: every benchmark proportion must be > 0")
    s = props.sum()
    if not normalize and abs(s - 1.0) > 1e-9:
        raise ValueError(f"benchmark proportions sum to {s!r}, not 1")
    props = props / s
    expected = total * props
    statistic = float(np.sum((counts - expected) ** 2 / expected))
    df = counts.size - 1
    p_value = round_sig(float(chi2.sf(statistic, df)), 6)
    return ChiSquaredResult(statistic=statistic, p_value=p_value,
                            degrees_of_freedom=df)


@dataclass(frozen=True)
class AblationReport:
    """Per-group metric shifts from removing one feature.

    ``deltas[group][metric]`` is the metric without the feature minus the
    metric with it (None when undefined on either side).
    """

    feature: str
    metrics_with: GroupMetricsTable
    metrics_without: GroupMetricsTable
    deltas: dict

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "metrics_with": self.metrics_with.to_dict(),
            "metrics_without": self.metrics_without.to_dict(),
            "deltas": self.deltas,
        }


def feature_ablation_delta(dataset: TabularDataset, feature: str,
                           params=None, seed: int = 0, k: int = 10,
                           threshold: float = DEFAULT_THRESHOLD) -> AblationReport:
    """Compare cross-validated per-group metrics with and without a feature.

    Both runs use identical stratified folds (fold assignment depends only
    on the labels and seed), so the deltas are a paired comparison.
    """
    if dataset.groups is None:
        raise ValueError("no protected attribute declared")
    params = params if params is not None else ForestParams()
    reduced = dataset.drop_feature(feature)
    preds_with = cross_val_scores(dataset, k, params, seed) >= threshold
    preds_without = cross_val_scores(reduced, k, params, seed) >= threshold
    with_table = group_metrics_from_predictions(
        dataset.y, preds_with.astype(np.int64), dataset.groups, dataset.category_set)
    without_table = group_metrics_from_predictions(
        dataset.y, preds_without.astype(np.int64), dataset.groups, dataset.category_set)
    deltas = {}
    for g in with_table.groups:
        row = {}
        for metric in METRIC_NAMES:
            a = getattr(with_table[g], metric)
            b = getattr(without_table[g], metric)
            row[metric] = None if a is None or b is None else b - a
        deltas[g] = row
    return AblationReport(feature=feature, metrics_with=with_table,
                          metrics_without=without_table, deltas=deltas)
