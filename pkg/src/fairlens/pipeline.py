"""Config-driven runners behind the command line.

One JSON config document drives the whole six-step process, so every
decision (column roles, category set, model family, folds, tolerances,
comparison groups, interventions, curve features) is an explicit input
recorded in the ledger rather than a default buried in code. The
runners here are plain functions over that document:

* run_synth: write a synthetic dataset (and ground truth) to disk;
* run_train: train the configured model and save it;
* run_audit: steps 1 to 4, returning a fresh ledger;
* run_mitigate: step 5, appended to an existing ledger;
* run_explain: risk curves plus step 6 monitoring notes, appended;
* verify_ledger: recompute every numeric section from the stored
  config and seed and list mismatches.

Dataset sources: a ``dataset`` section pointing at a CSV, or a ``synth``
section (named preset or inline definition) generated in memory. When
both are present the CSV wins; the synth section then only feeds the
``synth`` subcommand.
"""
from __future__ import annotations

import hashlib
import json
import os

import numpy as np

from .audit import (
    DEFAULT_UPLIFT_THRESHOLD,
    METRIC_NAMES,
    ToleranceThreshold,
    chi_squared_group_benchmark,
    derive_tolerance_from_cv,
    evaluate_bias,
    feature_ablation_delta,
    group_metrics_from_predictions,
    indirect_identification_test,
)
from .curves import (
    DEFAULT_GRID_POINTS,
    balance_eval_set,
    export_curve,
    feature_risk_curve,
    flag_blind_spot_players,
)
from .dataset import TabularDataset, datasets_disjoint, read_csv, train_test_split, write_csv
from .ledger import AuditLedger, canonicalize, ledger_id_for
from .mitigation import (
    DEFAULT_MIN_GROUP_SUPPORT,
    compare_interventions,
    train_blind_separate,
    train_with_attribute,
)
from .models import (
    DEFAULT_THRESHOLD,
    ForestParams,
    TreeParams,
    cross_validate,
    load_model,
    save_model,
    train_model,
)
from .seeding import derive_seed
from .synth import SynthConfig, FeatureSpec, generate, preset, with_planted_bias, write_ground_truth_csv

DEFAULT_GUIDELINE_TAGS = ["G2", "G5", "G6"]

METRIC_DEFINITIONS = {
    "tpr": "true positive rate within the group: correctly classified "
           "positives / all positives",
    "tnr": "true negative rate within the group: correctly classified "
           "negatives / all negatives",
    "accuracy": "share of the group's rows classified correctly",
}

_TOP_KEYS = {"seed", "guideline_tags", "operator_alias", "scope",
             "categories", "dataset", "synth", "model", "audit",
             "mitigation", "explain", "monitoring"}
_DATASET_KEYS = {"path", "label_column", "group_column", "category_set",
                 "unspecified_category", "group_name"}
_SYNTH_KEYS = {"preset", "seed", "bias", "write_ground_truth", "n_rows",
               "group_proportions", "features", "weights", "intercept",
               "target_rates", "group_weight_shift", "label_noise",
               "unspecified_category", "group_name"}
_MODEL_KEYS = {"kind", "path", "threshold", "n_trees", "max_depth",
               "min_leaf", "feature_fraction", "bootstrap"}
_AUDIT_KEYS = {"metrics", "comparison_groups", "folds", "evaluation",
               "tolerance", "chi_squared", "indirect_identification",
               "ablation"}
_MITIGATION_KEYS = {"eval_fraction", "min_group_support", "priority_metric",
                    "threshold", "model", "comparison_groups",
                    "adopted_action"}
_EXPLAIN_KEYS = {"features", "n_points", "balance", "formats", "blind_spot"}
_MONITORING_KEYS = {"limitations", "followups"}


class ConfigError(ValueError):
    """A config document that cannot drive the pipeline."""


def load_config(path) -> dict:
    """Parse and shape-check a pipeline config file."""
    with open(str(path)) as fh:
        try:
            config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys(config, _TOP_KEYS, "config")
    for name, keys in (("dataset", _DATASET_KEYS), ("synth", _SYNTH_KEYS),
                       ("model", _MODEL_KEYS), ("audit", _AUDIT_KEYS),
                       ("mitigation", _MITIGATION_KEYS),
                       ("explain", _EXPLAIN_KEYS),
                       ("monitoring", _MONITORING_KEYS)):
        section = config.get(name)
        if section is not None:
            if not isinstance(section, dict):
                raise ConfigError(f"{name} section must be an object")
            _check_keys(section, keys, name)
    return config


def _check_keys(mapping: dict, allowed: set, where: str) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} key(s): {sorted(unknown)}")


def _file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(str(path), "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Config section parsers


def synth_config(config: dict, seed: int) -> tuple[SynthConfig, dict]:
    """Build the generator config; returns it plus the synth options."""
    section = config.get("synth")
    if not section:
        raise ConfigError("config has no synth section")
    gen_seed = int(section.get("seed", seed))
    if section.get("preset"):
        cfg = preset(str(section["preset"]), seed=gen_seed)
        inline = set(section) & (_SYNTH_KEYS - {"preset", "seed", "bias",
                                                "write_ground_truth"})
        if inline:
            raise ConfigError(
                f"synth preset cannot be combined with {sorted(inline)}")
    else:
        fields = {k: section[k] for k in section
                  if k in _SYNTH_KEYS - {"preset", "seed", "bias",
                                         "write_ground_truth"}}
        if "features" not in fields:
            raise ConfigError("inline synth config needs a features list")
        fields["features"] = tuple(
            FeatureSpec(str(f["name"]), str(f["family"]),
                        {str(k): float(v) for k, v in f["params"].items()})
            for f in fields["features"])
        try:
            cfg = SynthConfig(seed=gen_seed, **fields)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"synth section: {exc}") from None
    bias = section.get("bias") or {}
    unknown = set(bias) - {"label_noise", "weight_shift"}
    if unknown:
        raise ConfigError(f"unknown synth.bias key(s): {sorted(unknown)}")
    if bias:
        cfg = with_planted_bias(cfg, noise=bias.get("label_noise"),
                                weight_shift=bias.get("weight_shift"))
    return cfg, section


def resolve_dataset(config: dict, seed: int) -> tuple[TabularDataset, dict]:
    """Load or generate the audited dataset, plus its provenance record."""
    dcfg = config.get("dataset")
    if dcfg:
        if "path" not in dcfg or "label_column" not in dcfg:
            raise ConfigError("dataset section needs path and label_column")
        kwargs = {}
        for key in ("group_column", "category_set", "unspecified_category",
                    "group_name"):
            if key in dcfg:
                kwargs[key] = dcfg[key]
        dataset = read_csv(dcfg["path"], label_column=dcfg["label_column"],
                           **kwargs)
        record = dict(dcfg)
        record["n_rows"] = dataset.n_rows
        record["sha256"] = _file_sha256(dcfg["path"])
        return dataset, record
    if config.get("synth"):
        cfg, _ = synth_config(config, seed)
        dataset, _truth = generate(cfg)
        return dataset, {"source": "synth", "generator": cfg.to_dict(),
                         "digest": cfg.digest(), "n_rows": dataset.n_rows}
    raise ConfigError("config needs a dataset or synth section")


def model_from_config(config: dict):
    """(hyperparameters, decision threshold) from the model section."""
    mcfg = config.get("model") or {}
    threshold = float(mcfg.get("threshold", DEFAULT_THRESHOLD))
    if not 0.0 < threshold < 1.0:
        raise ConfigError("model.threshold must be in (0, 1)")
    return _params_from(mcfg), threshold


def _params_from(mcfg: dict):
    _check_keys(mcfg, _MODEL_KEYS, "model")
    kind = mcfg.get("kind", "forest")
    try:
        if kind == "forest":
            return ForestParams(
                n_trees=int(mcfg.get("n_trees", ForestParams.n_trees)),
                max_depth=int(mcfg.get("max_depth", ForestParams.max_depth)),
                min_leaf=int(mcfg.get("min_leaf", ForestParams.min_leaf)),
                feature_fraction=float(mcfg.get("feature_fraction",
                                                ForestParams.feature_fraction)),
                bootstrap=bool(mcfg.get("bootstrap", ForestParams.bootstrap)))
        if kind == "tree":
            return TreeParams(
                max_depth=int(mcfg.get("max_depth", TreeParams.max_depth)),
                min_leaf=int(mcfg.get("min_leaf", TreeParams.min_leaf)),
                feature_fraction=float(mcfg.get("feature_fraction",
                                                TreeParams.feature_fraction)))
    except ValueError as exc:
        raise ConfigError(f"model section: {exc}") from None
    raise ConfigError(f"unknown model kind {kind!r} (forest or tree)")


def _params_record(params) -> dict:
    if isinstance(params, ForestParams):
        return {"kind": "forest", "n_trees": params.n_trees,
                "max_depth": params.max_depth, "min_leaf": params.min_leaf,
                "feature_fraction": params.feature_fraction,
                "bootstrap": params.bootstrap}
    return {"kind": "tree", "max_depth": params.max_depth,
            "min_leaf": params.min_leaf,
            "feature_fraction": params.feature_fraction}


def default_comparison_groups(dataset: TabularDataset) -> list:
    """All named categories; the unspecified one joins only if nothing else.

    The published comparisons read across the named groups and treat the
    unspecified category as context, so that is the default here; configs
    list categories explicitly to compare all three.
    """
    named = [c for c in dataset.category_set
             if c != dataset.unspecified_category]
    return named if len(named) >= 2 else list(dataset.category_set)


# ---------------------------------------------------------------------------
# Subcommand runners


def run_synth(config: dict, seed: int, out_dir) -> list:
    """Generate the configured dataset; write CSV artifacts. Returns paths."""
    cfg, section = synth_config(config, seed)
    dataset, truth = generate(cfg)
    os.makedirs(str(out_dir), exist_ok=True)
    label_column = (config.get("dataset") or {}).get("label_column", "label")
    dataset_path = os.path.join(str(out_dir), "dataset.csv")
    write_csv(dataset, dataset_path, label_column=label_column)
    written = [dataset_path]
    if section.get("write_ground_truth", True):
        truth_path = os.path.join(str(out_dir), "ground_truth.csv")
        write_ground_truth_csv(truth, truth_path)
        written.append(truth_path)
    return written


def run_train(config: dict, seed: int, out_dir) -> str:
    """Train the configured model on the dataset and save it."""
    dataset, _record = resolve_dataset(config, seed)
    params, _threshold = model_from_config(config)
    model = train_model(dataset, params, seed)
    path = (config.get("model") or {}).get("path")
    if not path:
        os.makedirs(str(out_dir), exist_ok=True)
        path = os.path.join(str(out_dir), "model.json")
    else:
        parent = os.path.dirname(os.path.abspath(str(path)))
        os.makedirs(parent, exist_ok=True)
    save_model(model, path)
    return str(path)


def run_audit(config: dict, seed: int) -> tuple[AuditLedger, list]:
    """Steps 1 to 4: scope, categories, metrics, findings.

    Group metrics come from pooled out-of-fold predictions of a k-fold
    cross-validation, the same folds the tolerance band is derived from,
    so findings and tolerances describe one protocol. Alternatively
    ``audit.evaluation = "model"`` scores a saved model file over the
    dataset (a deployed-artifact audit); the cross-validation then only
    feeds the tolerance derivation.
    """
    dataset, ds_record = resolve_dataset(config, seed)
    if dataset.groups is None:
        raise ConfigError("audit needs a dataset with a group column")
    params, threshold = model_from_config(config)
    acfg = config.get("audit") or {}

    metrics = list(acfg.get("metrics", METRIC_NAMES))
    for m in metrics:
        if m not in METRIC_NAMES:
            raise ConfigError(f"unknown audit metric {m!r}")
    k = int(acfg.get("folds", 10))
    comparison = list(acfg.get("comparison_groups")
                      or default_comparison_groups(dataset))
    evaluation = acfg.get("evaluation", "cv")
    if evaluation not in ("cv", "model"):
        raise ConfigError(f"audit.evaluation must be cv or model, "
                          f"got {evaluation!r}")

    folds, _fold_ids, scores = cross_validate(dataset, k, params, seed,
                                              threshold)
    eval_record = {"protocol": evaluation, "folds": k,
                   "threshold": threshold, "model": _params_record(params)}
    if evaluation == "model":
        path = (config.get("model") or {}).get("path")
        if not path:
            raise ConfigError("audit.evaluation = model needs model.path")
        oracle = load_model(path)
        preds = oracle.score_batch(dataset.X) >= threshold
        eval_record["model_file"] = str(path)
        eval_record["model_sha256"] = _file_sha256(path)
    else:
        preds = scores >= threshold
    table = group_metrics_from_predictions(
        dataset.y, preds.astype(np.int64), dataset.groups,
        dataset.category_set)

    tol_cfg = acfg.get("tolerance") or {"policy": "derive-from-cv"}
    policy = tol_cfg.get("policy", "derive-from-cv")
    thresholds = []
    if policy == "derive-from-cv":
        thresholds = [derive_tolerance_from_cv(folds, m) for m in metrics]
    elif policy == "configured":
        widths = tol_cfg.get("half_widths") or {}
        missing = [m for m in metrics if m not in widths]
        if missing:
            raise ConfigError(f"tolerance.half_widths missing {missing}")
        thresholds = [ToleranceThreshold(m, float(widths[m]), "configured")
                      for m in metrics]
    else:
        raise ConfigError(f"unknown tolerance policy {policy!r}")

    findings = evaluate_bias(table, thresholds, groups=comparison)

    indirect = None
    icfg = acfg.get("indirect_identification")
    if icfg and icfg.get("enabled", True):
        iparams = _params_from(icfg["model"]) if icfg.get("model") else params
        indirect = indirect_identification_test(
            dataset, params=iparams, seed=seed,
            k=int(icfg.get("folds", 5)),
            uplift_threshold=float(icfg.get("uplift_threshold",
                                            DEFAULT_UPLIFT_THRESHOLD)))

    chi = None
    ccfg = acfg.get("chi_squared")
    if ccfg:
        if "benchmark" not in ccfg:
            raise ConfigError("audit.chi_squared needs a benchmark mapping")
        observed = {c: int(np.sum(dataset.groups == c))
                    for c in dataset.category_set}
        benchmark = {str(g): float(p) for g, p in ccfg["benchmark"].items()}
        chi = chi_squared_group_benchmark(
            observed, benchmark, normalize=bool(ccfg.get("normalize", False)))

    ablations = None
    abcfg = acfg.get("ablation")
    if abcfg:
        feats = abcfg.get("features") or []
        aparams = _params_from(abcfg["model"]) if abcfg.get("model") else params
        ablations = [
            feature_ablation_delta(dataset, str(f), aparams, seed=seed,
                                   k=int(abcfg.get("folds", k)),
                                   threshold=threshold)
            for f in feats]

    scope_cfg = config.get("scope") or {}
    record = _params_record(params)
    model_desc = scope_cfg.get("model") or (
        f"{record['kind']} classifier over {dataset.n_features} behavioural "
        f"features at decision threshold {threshold:g}")
    step1 = {
        "model": model_desc,
        "justification": scope_cfg.get("justification")
        or "binary harm-risk classification over player behaviour",
        "dataset": ds_record,
        "audit_config": config,
    }
    group_label = dataset.group_name or "group"
    step2 = config.get("categories") or [{
        "category": group_label,
        "status": "analysed",
        "rationale": "declared group attribute with categories "
                     + ", ".join(dataset.category_set),
    }]
    step3 = {
        "definitions": {m: METRIC_DEFINITIONS[m] for m in metrics},
        "thresholds": [t.to_dict() for t in thresholds],
        "comparison_groups": comparison,
        "evaluation": eval_record,
    }
    step4 = {
        "group_metrics": table.to_dict(),
        "findings": [f.to_dict() for f in findings],
        "indirect_identification": indirect.to_dict() if indirect else None,
        "chi_squared": chi.to_dict() if chi else None,
        "ablation": [a.to_dict() for a in ablations] if ablations else None,
    }
    ledger = AuditLedger(
        ledger_id=ledger_id_for(config, seed),
        seed=seed,
        operator_alias=config.get("operator_alias"),
        step1_scope=step1,
        step2_categories=step2,
        step3_metrics=step3,
        step4_findings=step4,
        guideline_tags=list(config.get("guideline_tags",
                                       DEFAULT_GUIDELINE_TAGS)),
    )
    return ledger, findings


def run_mitigate(config: dict, seed: int, ledger: AuditLedger) -> AuditLedger:
    """Step 5: train and compare the two interventions, append the plan.

    The dataset is split into disjoint train and evaluation halves; the
    pooled baseline, the attribute-reinstated model and the
    blind-separate ensemble all train on the same half and are compared
    on the other at a shared threshold.
    """
    dataset, _record = resolve_dataset(config, seed)
    if dataset.groups is None:
        raise ConfigError("mitigation needs a dataset with a group column")
    mcfg = config.get("mitigation") or {}
    base_params, base_threshold = model_from_config(config)
    params = _params_from(mcfg["model"]) if mcfg.get("model") else base_params
    threshold = float(mcfg.get("threshold", base_threshold))
    eval_fraction = float(mcfg.get("eval_fraction", 0.5))
    min_support = int(mcfg.get("min_group_support",
                               DEFAULT_MIN_GROUP_SUPPORT))
    priority = str(mcfg.get("priority_metric", "tpr"))
    groups = list(mcfg.get("comparison_groups")
                  or default_comparison_groups(dataset))

    train_ds, eval_ds = train_test_split(dataset, eval_fraction, seed)
    baseline = train_model(train_ds, params,
                           derive_seed(seed, "baseline-model"))
    reinstated = train_with_attribute(train_ds, params,
                                      derive_seed(seed, "with-attribute"))
    ensemble = train_blind_separate(train_ds, params,
                                    derive_seed(seed, "blind-separate"),
                                    min_group_support=min_support)
    reports = compare_interventions(
        baseline, [reinstated, ensemble], eval_ds,
        priority_metric=priority, groups=groups, threshold=threshold,
        names=["reinstate-attribute", "blind-separate"])

    adopted = _select_adopted(reports, mcfg.get("adopted_action"))
    ledger.step5_plan = {
        "interventions": [r.to_dict() for r in reports],
        "adopted_action": adopted,
        "priority_metric": priority,
        "comparison_groups": groups,
        "evaluation": {
            "rows": eval_ds.n_rows,
            "eval_fraction": eval_fraction,
            "threshold": threshold,
            "min_group_support": min_support,
            "model": _params_record(params),
            "disjoint_from_training": datasets_disjoint(train_ds, eval_ds),
            "ensemble_members": ensemble.describe_members(),
        },
    }
    ledger.touch()
    return ledger


def _select_adopted(reports, forced=None) -> str:
    if forced:
        names = [r.name for r in reports]
        if forced not in names:
            raise ConfigError(
                f"adopted_action {forced!r} is not a compared intervention "
                f"(candidates: {names})")
        return f"adopt {forced}"
    best = None
    for r in reports:
        if r.verdict != "improved" or r.narrowed_only_by_degradation:
            continue
        key = (r.relative_reduction or 0.0, r.accuracy_delta)
        if best is None or key > (best.relative_reduction or 0.0,
                                  best.accuracy_delta):
            best = r
    if best is None:
        return ("retain baseline: no intervention reduced the priority "
                "disparity without degrading the better-served group")
    return f"adopt {best.name}"


def run_explain(config: dict, seed: int, ledger: AuditLedger, out_dir,
                formats=None) -> list:
    """Risk curves and step 6: monitoring notes and blind-spot overrides.

    Appends one explainability entry per configured feature and writes
    the requested artifact formats. Returns the written paths.
    """
    ecfg = config.get("explain")
    if not ecfg:
        raise ConfigError("config has no explain section")
    features = ecfg.get("features") or []
    if not features:
        raise ConfigError("explain.features must name at least one feature")
    dataset, _record = resolve_dataset(config, seed)
    params, _threshold = model_from_config(config)
    model_path = (config.get("model") or {}).get("path")
    if model_path:
        oracle = load_model(model_path)
    else:
        oracle = train_model(dataset, params, seed)

    n_points = int(ecfg.get("n_points", DEFAULT_GRID_POINTS))
    eval_set = balance_eval_set(dataset, seed) if ecfg.get("balance", True) \
        else dataset
    formats = list(formats or ecfg.get("formats") or ["csv", "svg"])
    for f in formats:
        if f not in ("csv", "svg"):
            raise ConfigError(f"unknown explain format {f!r}")
    os.makedirs(str(out_dir), exist_ok=True)

    written = []
    for feature in features:
        curve = feature_risk_curve(oracle, eval_set, str(feature),
                                   n_points=n_points)
        artifacts = []
        for fmt in formats:
            path = os.path.join(str(out_dir), f"curve_{feature}.{fmt}")
            export_curve(curve, fmt, path)
            artifacts.append(os.path.basename(path))
            written.append(path)
        ledger.explainability_entries.append({
            "curve": curve.to_dict(),
            "artifacts": artifacts,
            "process": {
                "balanced_eval_set": bool(ecfg.get("balance", True)),
                "eval_rows": eval_set.n_rows,
                "oracle": oracle.model_kind,
                "model_file": str(model_path) if model_path else None,
                "seed": seed,
            },
        })

    overrides = None
    bcfg = ecfg.get("blind_spot")
    if bcfg:
        for key in ("feature", "intensity_percentile", "score_threshold"):
            if key not in bcfg:
                raise ConfigError(f"explain.blind_spot needs {key!r}")
        flagged = flag_blind_spot_players(
            dataset, oracle, str(bcfg["feature"]),
            float(bcfg["intensity_percentile"]),
            float(bcfg["score_threshold"]))
        overrides = {
            "feature": str(bcfg["feature"]),
            "intensity_percentile": float(bcfg["intensity_percentile"]),
            "score_threshold": float(bcfg["score_threshold"]),
            "count": len(flagged),
            "example_rows": flagged[:20],
        }

    monitoring = config.get("monitoring") or {}
    ledger.step6_monitoring = {
        "limitations": list(monitoring.get("limitations", [])),
        "followups": list(monitoring.get("followups", [])),
        "blind_spot_overrides": overrides,
    }
    ledger.touch()
    return written


# ---------------------------------------------------------------------------
# Verification


def verify_ledger(ledger: AuditLedger, config: dict | None = None) -> list:
    """Recompute every numeric section from config + seed; list mismatches.

    Uses the config embedded in step 1 unless an override is given. A
    clean ledger returns an empty list; a hand-edited value returns the
    JSON paths where the stored and recomputed content disagree.
    """
    if config is None:
        config = ((ledger.step1_scope or {}).get("audit_config"))
        if config is None:
            raise ValueError("ledger carries no embedded config; pass one")
    seed = ledger.seed
    mismatches = []
    if ledger.ledger_id != ledger_id_for(config, seed):
        mismatches.append("ledger_id: does not match config + seed")

    fresh, _findings = run_audit(config, seed)
    for section in ("step3_metrics", "step4_findings"):
        mismatches += _diff(canonicalize(getattr(ledger, section)),
                            canonicalize(getattr(fresh, section)), section)
    if ledger.step5_plan is not None:
        run_mitigate(config, seed, fresh)
        mismatches += _diff(canonicalize(ledger.step5_plan),
                            canonicalize(fresh.step5_plan), "step5_plan")
    if ledger.explainability_entries:
        stored = canonicalize([e["curve"]
                               for e in ledger.explainability_entries])
        recomputed = canonicalize(_recompute_curves(config, seed))
        mismatches += _diff(stored, recomputed, "explainability_entries")
    return mismatches


def _recompute_curves(config: dict, seed: int) -> list:
    ecfg = config.get("explain") or {}
    dataset, _record = resolve_dataset(config, seed)
    params, _threshold = model_from_config(config)
    model_path = (config.get("model") or {}).get("path")
    oracle = load_model(model_path) if model_path \
        else train_model(dataset, params, seed)
    eval_set = balance_eval_set(dataset, seed) if ecfg.get("balance", True) \
        else dataset
    n_points = int(ecfg.get("n_points", DEFAULT_GRID_POINTS))
    return [feature_risk_curve(oracle, eval_set, str(f),
                               n_points=n_points).to_dict()
            for f in ecfg.get("features") or []]


def _diff(a, b, path: str, out=None) -> list:
    """JSON paths at which two canonical structures differ."""
    out = [] if out is None else out
    if len(out) >= 25:
        return out
    if type(a) is not type(b):
        out.append(f"{path}: {_brief(a)} != {_brief(b)}")
    elif isinstance(a, dict):
        for key in sorted(set(a) | set(b)):
            if key not in a:
                out.append(f"{path}.{key}: missing in ledger")
            elif key not in b:
                out.append(f"{path}.{key}: not reproduced")
            else:
                _diff(a[key], b[key], f"{path}.{key}", out)
    elif isinstance(a, list):
        if len(a) != len(b):
            out.append(f"{path}: length {len(a)} != {len(b)}")
        else:
            for i, (x, y) in enumerate(zip(a, b)):
                _diff(x, y, f"{path}[{i}]", out)
    elif a != b:
        out.append(f"{path}: {_brief(a)} != {_brief(b)}")
    return out


def _brief(value) -> str:
    text = repr(value)
    return text if len(text) <= 60 else text[:57] + "..."
