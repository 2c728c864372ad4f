"""Synthetic behavioural datasets with controllable, declared group bias.

Real player data is unavailable, so verification runs on generated data
where the truth is known by construction. A config declares group
proportions, feature distributions, and a logistic label model; bias is
planted explicitly, through group-conditional coefficient shifts (one
group's outcome depends differently on a feature) and group-conditional
label-noise rates (one group's recorded outcomes are flipped more often).
Every planted effect is returned in the ground truth, so a downstream
audit finding has an expected sign to be checked against.

Outcome rates are declared as per-group targets rather than raw
intercepts: at generation time each group's intercept is solved by root
finding on a large fixed-seed Monte Carlo sample of the declared feature
distributions. Planting a coefficient shift therefore does not drag that
group's base rate off target.

Everything is deterministic given the config: the group assignment,
feature, label, noise and calibration streams are all derived from the
config seed.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from .dataset import TabularDataset
from .seeding import derive_seed

CALIBRATION_SAMPLE = 200_000
_FAMILY_PARAMS = {
    "uniform": ("low", "high"),
    "lognormal": ("mean", "sigma"),
    "beta": ("a", "b"),
}


@dataclass(frozen=True)
class FeatureSpec:
    """One feature column: a name and a parametric distribution."""

    name: str
    family: str
    params: dict

    def __post_init__(self):
        if self.family not in _FAMILY_PARAMS:
            raise ValueError(f"unknown distribution family {self.family!r}")
        expected = _FAMILY_PARAMS[self.family]
        if set(self.params) != set(expected):
            raise ValueError(
                f"{self.name}: {self.family} needs parameters {expected}")
        vals = {k: float(v) for k, v in self.params.items()}
        if any(not np.isfinite(v) for v in vals.values()):
            raise ValueError(f"{self.name}: distribution parameters must be finite")
        if self.family == "uniform" and not vals["low"] < vals["high"]:
            raise ValueError(f"{self.name}: uniform needs low < high")
        if self.family == "lognormal" and not vals["sigma"] > 0:
            raise ValueError(f"{self.name}: lognormal needs sigma > 0")
        if self.family == "beta" and not (vals["a"] > 0 and vals["b"] > 0):
            raise ValueError(f"{self.name}: beta needs a > 0 and b > 0")
        object.__setattr__(self, "params", vals)

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        p = self.params
        if self.family == "uniform":
            return rng.uniform(p["low"], p["high"], n)
        if self.family == "lognormal":
            return rng.lognormal(p["mean"], p["sigma"], n)
        return rng.beta(p["a"], p["b"], n)

    def to_dict(self) -> dict:
        return {"name": self.name, "family": self.family,
                "params": dict(self.params)}


@dataclass(frozen=True)
class SynthConfig:
    """Declarative recipe for one synthetic dataset.

    Exactly one of ``intercept`` (shared logistic intercept) or
    ``target_rates`` (per-group outcome-rate targets, intercepts solved at
    generation) must be given. ``group_weight_shift`` adds per-group
    offsets to the feature weights; ``label_noise`` gives per-group label
    flip rates in [0, 0.5).
    """

    n_rows: int
    group_proportions: dict
    features: tuple
    weights: dict
    intercept: float | None = None
    target_rates: dict | None = None
    group_weight_shift: dict = field(default_factory=dict)
    label_noise: dict = field(default_factory=dict)
    unspecified_category: str = "U"
    group_name: str = "gender"
    seed: int = 0

    def __post_init__(self):
        if self.n_rows < 1:
            raise ValueError("n_rows must be >= 1")
        props = {str(g): float(p) for g, p in self.group_proportions.items()}
        if any(p < 0 for p in props.values()):
            raise ValueError("group proportions must be >= 0")
        if abs(sum(props.values()) - 1.0) > 1e-9:
            raise ValueError("group proportions must sum to 1")
        if self.unspecified_category not in props:
            raise ValueError("group proportions must include the unspecified category")
        object.__setattr__(self, "group_proportions", props)
        feats = tuple(self.features)
        names = [f.name for f in feats]
        if not feats or len(set(names)) != len(names):
            raise ValueError("features must be non-empty with unique names")
        object.__setattr__(self, "features", feats)
        unknown = set(self.weights) - set(names)
        if unknown:
            raise ValueError(f"weights for unknown features: {sorted(unknown)}")
        if (self.intercept is None) == (self.target_rates is None):
            raise ValueError("give exactly one of intercept or target_rates")
        if self.target_rates is not None:
            rates = {str(g): float(r) for g, r in self.target_rates.items()}
            if set(rates) != set(props):
                raise ValueError("target_rates must cover exactly the declared groups")
            if any(not 0.0 < r < 1.0 for r in rates.values()):
                raise ValueError("target rates must be in (0, 1)")
            object.__setattr__(self, "target_rates", rates)
        for g, shifts in self.group_weight_shift.items():
            if g not in props:
                raise ValueError(f"weight shift for unknown group {g!r}")
            bad = set(shifts) - set(names)
            if bad:
                raise ValueError(f"weight shift for unknown features: {sorted(bad)}")
        for g, rate in self.label_noise.items():
            if g not in props:
                raise ValueError(f"label noise for unknown group {g!r}")
            if not 0.0 <= float(rate) < 0.5:
                raise ValueError("label noise rates must be in [0, 0.5)")

    @property
    def categories(self) -> tuple[str, ...]:
        return tuple(self.group_proportions)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    def weight_vector(self, group: str | None = None) -> np.ndarray:
        """Effective weights in feature order, with the group's shift applied."""
        w = np.array([float(self.weights.get(n, 0.0))
                      for n in self.feature_names])
        if group is not None:
            shifts = self.group_weight_shift.get(group, {})
            for name, delta in shifts.items():
                w[self.feature_names.index(name)] += float(delta)
        return w

    def to_dict(self) -> dict:
        return {
            "n_rows": self.n_rows,
            "group_proportions": dict(self.group_proportions),
            "features": [f.to_dict() for f in self.features],
            "weights": {k: float(v) for k, v in self.weights.items()},
            "intercept": self.intercept,
            "target_rates": None if self.target_rates is None
            else dict(self.target_rates),
            "group_weight_shift": {g: {f: float(d) for f, d in s.items()}
                                   for g, s in self.group_weight_shift.items()},
            "label_noise": {g: float(r) for g, r in self.label_noise.items()},
            "unspecified_category": self.unspecified_category,
            "group_name": self.group_name,
            "seed": self.seed,
        }

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:12]


@dataclass(frozen=True)
class GroundTruth:
    """What generate() actually planted, row-aligned with the dataset."""

    true_probability: np.ndarray
    groups: np.ndarray
    noise_flipped: np.ndarray
    intercepts: dict


def _quota_counts(proportions: dict, n: int) -> dict:
    """Largest-remainder allocation of n rows to the declared proportions."""
    cats = list(proportions)
    raw = [proportions[c] * n for c in cats]
    counts = [int(np.floor(r)) for r in raw]
    leftover = n - sum(counts)
    by_frac = sorted(range(len(cats)), key=lambda i: raw[i] - counts[i],
                     reverse=True)
    for i in by_frac[:leftover]:
        counts[i] += 1
    return dict(zip(cats, counts))


def _solve_intercept(z: np.ndarray, target: float) -> float:
    try:
        return float(brentq(lambda c: float(np.mean(expit(z + c))) - target,
                            -35.0, 35.0, xtol=1e-10))
    except ValueError as exc:
        raise ValueError(
            f"cannot calibrate intercept for target rate {target}") from exc


def generate(config: SynthConfig) -> tuple[TabularDataset, GroundTruth]:
    """Generate one dataset plus its ground truth, deterministically.

    Group sizes follow the declared proportions exactly (largest-remainder
    quotas, then a seeded shuffle of row positions). Labels are Bernoulli
    draws from the logistic model, then flipped per the group-conditional
    noise rates; the flip mask is part of the ground truth.
    """
    n = config.n_rows
    cats = config.categories

    quotas = _quota_counts(config.group_proportions, n)
    ordered = np.concatenate([np.full(quotas[c], i, dtype=np.int64)
                              for i, c in enumerate(cats)])
    assign_rng = np.random.default_rng(derive_seed(config.seed, "groups"))
    group_idx = ordered[assign_rng.permutation(n)]
    groups = np.array([cats[i] for i in group_idx], dtype=object)

    feat_rng = np.random.default_rng(derive_seed(config.seed, "features"))
    X = np.column_stack([spec.draw(feat_rng, n) for spec in config.features])

    if config.intercept is not None:
        intercepts = {c: float(config.intercept) for c in cats}
    else:
        cal_rng = np.random.default_rng(derive_seed(config.seed, "calibration"))
        X_cal = np.column_stack([spec.draw(cal_rng, CALIBRATION_SAMPLE)
                                 for spec in config.features])
        intercepts = {}
        for c in cats:
            z_cal = X_cal @ config.weight_vector(c)
            intercepts[c] = _solve_intercept(z_cal, config.target_rates[c])

    z = np.empty(n, dtype=np.float64)
    for i, c in enumerate(cats):
        mask = group_idx == i
        if mask.any():
            z[mask] = X[mask] @ config.weight_vector(c) + intercepts[c]
    p = expit(z)

    label_rng = np.random.default_rng(derive_seed(config.seed, "labels"))
    y = (label_rng.random(n) < p).astype(np.int64)
    noise_rng = np.random.default_rng(derive_seed(config.seed, "noise"))
    rates = np.array([float(config.label_noise.get(c, 0.0)) for c in cats])
    flipped = noise_rng.random(n) < rates[group_idx]
    y = np.where(flipped, 1 - y, y)

    dataset = TabularDataset(
        feature_names=config.feature_names,
        X=X,
        y=y,
        groups=groups,
        category_set=cats,
        unspecified_category=config.unspecified_category,
        group_name=config.group_name,
        row_ids=np.arange(n),
        source_id=f"synth:{config.digest()}",
    )
    truth = GroundTruth(true_probability=p, groups=groups,
                        noise_flipped=flipped, intercepts=intercepts)
    return dataset, truth


def write_ground_truth_csv(truth: GroundTruth, path) -> None:
    """Sidecar CSV: row index, true probability, group, noise-flipped flag."""
    with open(str(path), "w") as fh:
        fh.write("row_index,true_probability,group,noise_flipped\n")
        for i in range(truth.true_probability.shape[0]):
            fh.write(f"{i},{float(truth.true_probability[i])!r},"
                     f"{truth.groups[i]},{int(truth.noise_flipped[i])}\n")


# Shared behavioural feature roster for the named presets. Weight sizes
# set the signal-to-noise of the label model; the roster is the same for
# both presets so scenarios differ only in the published margins.
_PRESET_FEATURES = (
    FeatureSpec("night_play_share", "beta", {"a": 2.0, "b": 5.0}),
    FeatureSpec("deposit_frequency", "lognormal", {"mean": 0.0, "sigma": 0.5}),
    FeatureSpec("bet_volatility", "lognormal", {"mean": 0.0, "sigma": 0.6}),
    FeatureSpec("session_intensity", "lognormal", {"mean": 0.0, "sigma": 0.4}),
    FeatureSpec("loss_chasing", "lognormal", {"mean": 0.0, "sigma": 0.5}),
    FeatureSpec("withdrawal_ratio", "lognormal", {"mean": 0.0, "sigma": 0.5}),
)

_PRESET_WEIGHTS = {
    "night_play_share": 1.0,
    "deposit_frequency": 1.6,
    "bet_volatility": 1.2,
    "session_intensity": 1.4,
    "loss_chasing": 1.0,
    "withdrawal_ratio": 0.6,
}

_PRESETS = {
    "operator1-like": dict(
        n_rows=4340,
        group_proportions={"F": 0.206, "M": 0.326, "U": 0.468},
        target_rates={"F": 0.204, "M": 0.244, "U": 0.168},
    ),
    "operator2-like": dict(
        n_rows=18275,
        group_proportions={"F": 0.365, "M": 0.104, "U": 0.531},
        target_rates={"F": 0.171, "M": 0.187, "U": 0.223},
    ),
}


def preset(name: str, seed: int = 0) -> SynthConfig:
    """A named scenario config with published group margins.

    ``operator1-like`` and ``operator2-like`` reproduce the two published
    group-balance and outcome-rate profiles (n = 4,340 and n = 18,275);
    feature distributions and weights are documented defaults shared by
    both. Returned configs plant no bias; callers add noise or weight
    shifts via :func:`dataclasses.replace`.
    """
    if name not in _PRESETS:
        raise ValueError(f"unknown preset {name!r}; "
                         f"known: {sorted(_PRESETS)}")
    spec = _PRESETS[name]
    return SynthConfig(features=_PRESET_FEATURES, weights=_PRESET_WEIGHTS,
                       seed=seed, **spec)


def with_planted_bias(config: SynthConfig, *, noise=None,
                      weight_shift=None) -> SynthConfig:
    """Overlay group-conditional label noise and/or weight shifts."""
    changes = {}
    if noise is not None:
        changes["label_noise"] = {**config.label_noise,
                                  **{str(g): float(r) for g, r in noise.items()}}
    if weight_shift is not None:
        merged = {g: dict(s) for g, s in config.group_weight_shift.items()}
        for g, shifts in weight_shift.items():
            row = merged.setdefault(str(g), {})
            row.update({str(f): float(d) for f, d in shifts.items()})
        changes["group_weight_shift"] = merged
    return replace(config, **changes) if changes else config
