"""Bias interventions and before/after comparison reporting.

Two interventions are implemented, deliberately no more:

* reinstating the protected attribute as one-hot input features, which
  lets the learner model each group directly but makes the attribute an
  explicit model input;
* the blind-separate ensemble: one model per group trained on that
  group's rows only, queried at test time without the group attribute,
  aggregated by taking the maximum risk score across members.

The ensemble is blind by construction: its scoring path touches only the
feature matrix, so permuting or deleting the group column of evaluation
rows cannot change a single score. Taking the maximum makes the ensemble
at least as alert as each member, which is the intended harm-reduction
direction when the positive class means "at risk".
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .audit import GroupMetricsTable, group_metrics_from_predictions, _check_metric
from .dataset import TabularDataset, with_group_indicators
from .models import (DEFAULT_THRESHOLD, ForestParams, PredictionOracle,
                     train_model)
from .seeding import derive_seed

DEFAULT_MIN_GROUP_SUPPORT = 50

REDUCTION_DECIMALS = 3


@dataclass(frozen=True)
class EnsembleMember:
    """One per-group model plus the bookkeeping needed to reproduce it."""

    group: str
    merged_from: tuple[str, ...]
    row_count: int
    seed: int
    model: PredictionOracle

    def describe(self) -> dict:
        return {"group": self.group, "merged_from": list(self.merged_from),
                "row_count": self.row_count, "seed": self.seed}


class BlindSeparateEnsemble(PredictionOracle):
    """Per-group models aggregated by maximum risk score.

    score(x) is the max over member scores, so it stays in [0, 1] and
    dominates every member pointwise. The group attribute of a query row
    is never consulted.
    """

    model_kind = "blind_separate_ensemble"

    def __init__(self, feature_names, members, min_group_support: int,
                 seed: int, decision_threshold: float = DEFAULT_THRESHOLD):
        if not members:
            raise ValueError("ensemble needs at least one member")
        self.feature_names = tuple(feature_names)
        self.members = tuple(members)
        self.min_group_support = int(min_group_support)
        self.seed = int(seed)
        self.decision_threshold = float(decision_threshold)

    @property
    def n_members(self) -> int:
        return len(self.members)

    def score_batch(self, X: np.ndarray) -> np.ndarray:
        X = self._check_matrix(X)
        return np.maximum.reduce([m.model.score_batch(X) for m in self.members])

    def member_scores(self, X: np.ndarray) -> np.ndarray:
        """Per-member scores, shape (n_members, n_rows)."""
        X = self._check_matrix(X)
        return np.stack([m.model.score_batch(X) for m in self.members])

    def describe_members(self) -> list[dict]:
        return [m.describe() for m in self.members]


def train_blind_separate(dataset: TabularDataset, params=None, seed: int = 0,
                         min_group_support: int = DEFAULT_MIN_GROUP_SUPPORT,
                         ) -> BlindSeparateEnsemble:
    """Train one model per group category on group-filtered rows.

    Categories with fewer than ``min_group_support`` rows do not get their
    own member; their rows are pooled with the unspecified category's rows
    into a single member labeled with the unspecified category (the merge
    is recorded in member metadata). At least one category must meet the
    minimum on its own. The group column itself is never a feature.
    """
    if dataset.groups is None:
        raise ValueError("no protected attribute declared")
    if min_group_support < 1:
        raise ValueError("min_group_support must be >= 1")
    params = params if params is not None else ForestParams()
    unspec = dataset.unspecified_category
    counts = {c: int(np.sum(dataset.groups == c)) for c in dataset.category_set}
    fullsize = [c for c in dataset.category_set if counts[c] >= min_group_support]
    if not fullsize:
        raise ValueError("insufficient per-group data")

    members = []
    for cat in dataset.category_set:
        if cat == unspec or cat not in fullsize:
            continue
        rows = np.flatnonzero(dataset.groups == cat)
        member_seed = derive_seed(seed, "member", cat)
        model = train_model(dataset.select_rows(rows), params, member_seed)
        members.append(EnsembleMember(cat, (cat,), rows.size, member_seed, model))

    pool_cats = tuple(c for c in dataset.category_set
                      if counts[c] > 0 and (c == unspec or c not in fullsize))
    if pool_cats:
        rows = np.flatnonzero(np.isin(dataset.groups, pool_cats))
        member_seed = derive_seed(seed, "member", unspec)
        model = train_model(dataset.select_rows(rows), params, member_seed)
        members.append(EnsembleMember(unspec, pool_cats, rows.size,
                                      member_seed, model))
    return BlindSeparateEnsemble(dataset.feature_names, members,
                                 min_group_support, seed)


def predict_max_risk(ensemble: BlindSeparateEnsemble, features) -> float:
    """Score one feature row: the maximum of the member model scores."""
    return ensemble.score(features)


def train_with_attribute(dataset: TabularDataset, params=None,
                         seed: int = 0) -> PredictionOracle:
    """Train a single model with the group attribute as one-hot inputs.

    Every row gets exactly one indicator set (unspecified included), so
    the encoding drops nobody. The returned oracle expects the widened
    feature layout produced by
    :func:`fairlens.dataset.with_group_indicators`.
    """
    encoded = with_group_indicators(dataset)
    params = params if params is not None else ForestParams()
    return train_model(encoded, params, seed)


@dataclass(frozen=True)
class InterventionReport:
    """Before/after comparison of one intervention against a baseline.

    ``relative_reduction`` is 1 - after/before rounded to three decimals
    (the resolution of one-decimal percentage reporting), or None when the
    baseline disparity is zero. The verdict is "improved" only for a
    strict disparity reduction. ``narrowed_only_by_degradation`` flags the
    failure mode where the gap shrinks although no group's priority
    metric actually got better.
    """

    name: str
    priority_metric: str
    groups: tuple[str, ...]
    baseline_disparity: float
    intervention_disparity: float
    relative_reduction: float | None
    baseline_accuracy: float | None
    intervention_accuracy: float | None
    accuracy_delta: float | None
    group_metric_before: dict = field(default_factory=dict)
    group_metric_after: dict = field(default_factory=dict)
    narrowed_only_by_degradation: bool = False
    verdict: str = "not-improved"

    def __post_init__(self):
        if self.baseline_disparity < 0 or self.intervention_disparity < 0:
            raise ValueError("disparities must be >= 0")
        expected = _relative_reduction(self.baseline_disparity,
                                       self.intervention_disparity)
        if expected is None:
            if self.relative_reduction is not None:
                raise ValueError("relative_reduction must be None for zero baseline")
        elif self.relative_reduction is None \
                or abs(self.relative_reduction - expected) > 1e-9:
            raise ValueError("relative_reduction inconsistent with disparities")
        expected_verdict = "improved" \
            if self.intervention_disparity < self.baseline_disparity \
            else "not-improved"
        if self.verdict != expected_verdict:
            raise ValueError("verdict inconsistent with disparities")
        if self.baseline_accuracy is not None \
                and self.intervention_accuracy is not None:
            delta = self.intervention_accuracy - self.baseline_accuracy
            if self.accuracy_delta is None \
                    or abs(self.accuracy_delta - delta) > 1e-12:
                raise ValueError("accuracy_delta inconsistent with accuracies")

    @classmethod
    def from_disparities(cls, before: float, after: float, *,
                         priority_metric: str = "tpr",
                         name: str = "intervention") -> "InterventionReport":
        """Arithmetic-only report from two disparity values.

        Used when the per-group evidence lives elsewhere and only the
        reduction bookkeeping is needed.
        """
        return cls(
            name=name,
            priority_metric=_check_metric(priority_metric),
            groups=(),
            baseline_disparity=float(before),
            intervention_disparity=float(after),
            relative_reduction=_relative_reduction(before, after),
            baseline_accuracy=None,
            intervention_accuracy=None,
            accuracy_delta=None,
            verdict="improved" if after < before else "not-improved",
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "priority_metric": self.priority_metric,
            "groups": list(self.groups),
            "baseline_disparity": self.baseline_disparity,
            "intervention_disparity": self.intervention_disparity,
            "relative_reduction": self.relative_reduction,
            "baseline_accuracy": self.baseline_accuracy,
            "intervention_accuracy": self.intervention_accuracy,
            "accuracy_delta": self.accuracy_delta,
            "group_metric_before": dict(self.group_metric_before),
            "group_metric_after": dict(self.group_metric_after),
            "narrowed_only_by_degradation": self.narrowed_only_by_degradation,
            "verdict": self.verdict,
        }


def _relative_reduction(before: float, after: float) -> float | None:
    if before == 0:
        return None
    return round(1.0 - after / before, REDUCTION_DECIMALS)


def _scores_on(oracle: PredictionOracle, dataset: TabularDataset,
               cache: dict) -> np.ndarray:
    """Score a dataset, using the group-encoded layout when the oracle wants it."""
    names = tuple(oracle.feature_names)
    if not names or names == dataset.feature_names:
        return oracle.score_batch(dataset.X)
    if dataset.groups is not None:
        if "encoded" not in cache:
            cache["encoded"] = with_group_indicators(dataset)
        encoded = cache["encoded"]
        if names == encoded.feature_names:
            return oracle.score_batch(encoded.X)
    raise ValueError(
        f"oracle feature names do not match the evaluation dataset: {names}")


def compare_interventions(baseline: PredictionOracle, candidates,
                          dataset: TabularDataset,
                          priority_metric: str = "tpr", groups=None,
                          threshold: float = DEFAULT_THRESHOLD,
                          names=None) -> list[InterventionReport]:
    """Evaluate candidate oracles against a baseline on one dataset.

    All oracles are thresholded at the same operating point. The caller
    is responsible for evaluation rows being disjoint from training rows.

    Parameters
    ----------
    baseline : PredictionOracle
    candidates : sequence of PredictionOracle
        Candidates trained with one-hot group indicators are scored on the
        encoded layout automatically.
    dataset : TabularDataset
        Evaluation rows; must carry the group attribute.
    priority_metric : str
        Metric whose disparity the comparison is about (default TPR). It
        must be defined for every selected group.
    groups : sequence of str, optional
        Comparison groups; defaults to all categories.
    threshold : float
        Shared classification threshold.
    names : sequence of str, optional
        Labels for the reports; defaults to each candidate's model_kind.
    """
    if dataset.groups is None:
        raise ValueError("no protected attribute declared")
    priority_metric = _check_metric(priority_metric)
    candidates = list(candidates)
    if names is None:
        names = [c.model_kind for c in candidates]
    names = [str(n) for n in names]
    if len(names) != len(candidates):
        raise ValueError("names must match candidates one to one")

    cache: dict = {}

    def evaluate(oracle) -> tuple[GroupMetricsTable, dict, float]:
        scores = _scores_on(oracle, dataset, cache)
        preds = (scores >= threshold).astype(np.int64)
        table = group_metrics_from_predictions(
            dataset.y, preds, dataset.groups, dataset.category_set)
        selected = table.groups if groups is None else tuple(groups)
        values = {}
        for g in selected:
            v = table[g].metric(priority_metric)
            if v is None:
                raise ValueError(f"{priority_metric} undefined for group {g!r}")
            values[g] = v
        return table, values, table.overall_accuracy

    _, before_vals, acc_before = evaluate(baseline)
    disp_before = max(before_vals.values()) - min(before_vals.values())

    reports = []
    for name, candidate in zip(names, candidates):
        _, after_vals, acc_after = evaluate(candidate)
        disp_after = max(after_vals.values()) - min(after_vals.values())
        deltas = [after_vals[g] - before_vals[g] for g in before_vals]
        narrowed = (disp_after < disp_before
                    and all(d <= 0 for d in deltas)
                    and any(d < 0 for d in deltas))
        reports.append(InterventionReport(
            name=name,
            priority_metric=priority_metric,
            groups=tuple(before_vals),
            baseline_disparity=float(disp_before),
            intervention_disparity=float(disp_after),
            relative_reduction=_relative_reduction(disp_before, disp_after),
            baseline_accuracy=acc_before,
            intervention_accuracy=acc_after,
            accuracy_delta=acc_after - acc_before,
            group_metric_before=dict(before_vals),
            group_metric_after=dict(after_vals),
            narrowed_only_by_degradation=narrowed,
            verdict="improved" if disp_after < disp_before else "not-improved",
        ))
    return reports
