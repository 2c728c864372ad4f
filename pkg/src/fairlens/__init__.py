"""Bias audits, mitigation and explanations for player-risk models.

The package covers a six-step audit process end to end: dataset
representation and ingestion, a built-in tree/forest learner behind a
uniform prediction-oracle interface, per-group fairness metrics with
cross-validation-derived tolerances, indirect identification and
chi-squared benchmark tests, two bias interventions with before/after
comparison, feature risk curves with dispersion bands, a synthetic data
generator with plantable bias, and a canonical, reproducible audit
ledger rendered to Markdown. The ``fairlens`` command line drives the
whole pipeline from one JSON config.
"""
from .audit import (
    AblationReport,
    AuditFinding,
    ChiSquaredResult,
    GroupMetrics,
    GroupMetricsTable,
    IndirectIdentificationReport,
    ToleranceThreshold,
    chi_squared_group_benchmark,
    compute_disparity,
    compute_group_metrics,
    derive_tolerance_from_cv,
    evaluate_bias,
    feature_ablation_delta,
    group_metrics_from_predictions,
    indirect_identification_test,
)
from .curves import (
    RiskCurve,
    balance_eval_set,
    compute_percentile_grid,
    export_curve,
    feature_risk_curve,
    flag_blind_spot_players,
    read_curve_csv,
)
from .dataset import (
    TabularDataset,
    datasets_disjoint,
    read_csv,
    train_test_split,
    with_group_indicators,
    write_csv,
)
from .ledger import (
    GUIDELINES,
    AuditLedger,
    canonical_json,
    ledger_id_for,
    load_ledger,
    render_report,
    save_ledger,
    section_hashes,
)
from .mitigation import (
    BlindSeparateEnsemble,
    EnsembleMember,
    InterventionReport,
    compare_interventions,
    predict_max_risk,
    train_blind_separate,
    train_with_attribute,
)
from .models import (
    DecisionTreeModel,
    FoldMetrics,
    ForestParams,
    PredictionOracle,
    RandomForestModel,
    TreeParams,
    cross_val_scores,
    cross_validate,
    k_fold_cross_validate,
    load_model,
    save_model,
    stratified_fold_ids,
    train_decision_tree,
    train_model,
    train_random_forest,
)
from .seeding import derive_seed
from .synth import (
    FeatureSpec,
    GroundTruth,
    SynthConfig,
    generate,
    preset,
    with_planted_bias,
    write_ground_truth_csv,
)

__version__ = "0.1.0"

__all__ = [
    "AblationReport",
    "AuditFinding",
    "AuditLedger",
    "BlindSeparateEnsemble",
    "ChiSquaredResult",
    "DecisionTreeModel",
    "EnsembleMember",
    "FeatureSpec",
    "FoldMetrics",
    "ForestParams",
    "GroundTruth",
    "GroupMetrics",
    "GroupMetricsTable",
    "GUIDELINES",
    "IndirectIdentificationReport",
    "InterventionReport",
    "PredictionOracle",
    "RandomForestModel",
    "RiskCurve",
    "SynthConfig",
    "TabularDataset",
    "ToleranceThreshold",
    "TreeParams",
    "balance_eval_set",
    "canonical_json",
    "chi_squared_group_benchmark",
    "compare_interventions",
    "compute_disparity",
    "compute_group_metrics",
    "compute_percentile_grid",
    "cross_val_scores",
    "cross_validate",
    "datasets_disjoint",
    "derive_seed",
    "derive_tolerance_from_cv",
    "evaluate_bias",
    "export_curve",
    "feature_ablation_delta",
    "feature_risk_curve",
    "flag_blind_spot_players",
    "generate",
    "group_metrics_from_predictions",
    "indirect_identification_test",
    "k_fold_cross_validate",
    "ledger_id_for",
    "load_ledger",
    "load_model",
    "predict_max_risk",
    "preset",
    "read_csv",
    "read_curve_csv",
    "render_report",
    "save_ledger",
    "save_model",
    "section_hashes",
    "stratified_fold_ids",
    "train_blind_separate",
    "train_decision_tree",
    "train_model",
    "train_random_forest",
    "train_test_split",
    "train_with_attribute",
    "with_group_indicators",
    "with_planted_bias",
    "write_csv",
    "write_ground_truth_csv",
]
