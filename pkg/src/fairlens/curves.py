"""Feature risk curves: global, model-agnostic explanations by sweeping.

A risk curve for feature f answers "what does the model predict, on
average, when f is forced to each of its percentile values?". For every
grid value the feature column of an evaluation set is overridden, the
oracle is queried on every modified row, and the mean score plus a
dispersion band (std and the 10th/90th score percentiles) is recorded.
The curve is exact by construction, not a surrogate fit: each point IS
the model's mean answer, so fidelity can be asserted by brute-force
requerying.

Percentiles here are nearest-rank (the value at position ceil(q * N) of
the sorted data), which always returns an actually observed value and
keeps duplicate-heavy features honest: a constant feature yields a flat
grid of N identical points, not an interpolated ramp.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dataset import TabularDataset
from .models import PredictionOracle
from .seeding import derive_seed

DEFAULT_GRID_POINTS = 100
BAND_LEVELS = (10, 90)

CSV_COLUMNS = ("percentile", "feature_value", "mean_risk", "std", "p10", "p90")


def nearest_rank(sorted_values: np.ndarray, level: float) -> float:
    """Value at the nearest-rank percentile ``level`` (in (0, 100])."""
    n = sorted_values.shape[0]
    if n == 0:
        raise ValueError("no values")
    if not 0.0 < level <= 100.0:
        raise ValueError("percentile level must be in (0, 100]")
    rank = int(np.ceil(level * n / 100.0))
    return float(sorted_values[max(rank, 1) - 1])


def compute_percentile_grid(values, n_points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    """Nearest-rank percentile grid at levels k/n_points for k = 1..n_points.

    Duplicates are retained, so the grid always has exactly ``n_points``
    entries and is non-decreasing.
    """
    vals = np.asarray(values, dtype=np.float64)
    if vals.ndim != 1 or vals.size == 0:
        raise ValueError("values must be a non-empty 1-d array")
    if not np.all(np.isfinite(vals)):
        raise ValueError("values must be finite")
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    s = np.sort(vals)
    n = s.shape[0]
    ks = np.arange(1, n_points + 1, dtype=np.int64)
    ranks = -(-ks * n // n_points)
    return s[ranks - 1].copy()


@dataclass(frozen=True)
class RiskCurve:
    """One feature's percentile sweep with mean risk and dispersion band.

    ``grid`` pairs each percentile index (1..n_points) with the feature
    value swept at that index. ``std`` is the population standard
    deviation of the per-row scores; ``p10``/``p90`` are nearest-rank
    score percentiles, so p10 <= p90 pointwise by construction.
    """

    feature: str
    grid: tuple[tuple[int, float], ...]
    mean_risk: tuple[float, ...]
    std: tuple[float, ...]
    p10: tuple[float, ...]
    p90: tuple[float, ...]
    eval_set_size: int
    balanced: bool
    oracle_kind: str

    def __post_init__(self):
        n = len(self.grid)
        if n < 2:
            raise ValueError("curve needs at least 2 grid points")
        for name in ("mean_risk", "std", "p10", "p90"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} length does not match grid")
        gv = [v for _, v in self.grid]
        if any(b < a for a, b in zip(gv, gv[1:])):
            raise ValueError("grid feature values must be non-decreasing")
        for name in ("mean_risk", "p10", "p90"):
            if any(not 0.0 <= v <= 1.0 for v in getattr(self, name)):
                raise ValueError(f"{name} values must be in [0, 1]")
        if any(hi < lo for lo, hi in zip(self.p10, self.p90)):
            raise ValueError("p10 must not exceed p90")

    @property
    def n_points(self) -> int:
        return len(self.grid)

    @property
    def grid_values(self) -> tuple[float, ...]:
        return tuple(v for _, v in self.grid)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "n_points": self.n_points,
            "eval_set_size": self.eval_set_size,
            "balanced": self.balanced,
            "oracle_kind": self.oracle_kind,
            "grid_values": list(self.grid_values),
            "mean_risk": list(self.mean_risk),
            "std": list(self.std),
            "p10": list(self.p10),
            "p90": list(self.p90),
        }


def feature_risk_curve(oracle: PredictionOracle, eval_set: TabularDataset,
                       feature: str,
                       n_points: int = DEFAULT_GRID_POINTS) -> RiskCurve:
    """Sweep one feature over its percentile grid and record mean risk.

    For each grid value the feature column is overridden in every
    evaluation row (all other features untouched) and the oracle scores
    the modified rows. The evaluation set itself is never modified.
    """
    if eval_set.n_rows == 0:
        raise ValueError("evaluation set is empty")
    j = eval_set.feature_index(feature)
    grid_values = compute_percentile_grid(eval_set.X[:, j], n_points)
    n = eval_set.n_rows
    means, stds, p10s, p90s = [], [], [], []
    X = eval_set.X.copy()
    for v in grid_values:
        X[:, j] = v
        scores = oracle.score_batch(X)
        means.append(float(scores.mean()))
        stds.append(float(scores.std()))
        ranked = np.sort(scores)
        p10s.append(nearest_rank(ranked, BAND_LEVELS[0]))
        p90s.append(nearest_rank(ranked, BAND_LEVELS[1]))
    pos = int(eval_set.y.sum())
    return RiskCurve(
        feature=feature,
        grid=tuple((k + 1, float(v)) for k, v in enumerate(grid_values)),
        mean_risk=tuple(means),
        std=tuple(stds),
        p10=tuple(p10s),
        p90=tuple(p90s),
        eval_set_size=n,
        balanced=(2 * pos == n),
        oracle_kind=oracle.model_kind,
    )


def balance_eval_set(dataset: TabularDataset, seed: int = 0) -> TabularDataset:
    """Undersample the majority label class to match the minority count.

    Returns the dataset itself if already balanced. Row order of the kept
    rows is preserved; the selection is deterministic in the seed.
    """
    pos = np.flatnonzero(dataset.y == 1)
    neg = np.flatnonzero(dataset.y == 0)
    if pos.size == 0 or neg.size == 0:
        raise ValueError("cannot balance a single-class dataset")
    if pos.size == neg.size:
        return dataset
    minority, majority = (pos, neg) if pos.size < neg.size else (neg, pos)
    rng = np.random.default_rng(derive_seed(seed, "balance"))
    kept = rng.permutation(majority)[:minority.size]
    return dataset.select_rows(np.sort(np.concatenate([minority, kept])))


def flag_blind_spot_players(dataset: TabularDataset, oracle: PredictionOracle,
                            feature: str, intensity_percentile: float,
                            threshold: float) -> list[int]:
    """Rows with extreme feature values the model still scores as low risk.

    Returns the indices of rows whose feature value is at or above the
    given percentile of that feature while the oracle score stays below
    the threshold: candidates for monitoring outside the model.
    """
    if not 0.0 < intensity_percentile < 1.0:
        raise ValueError("intensity_percentile must be in (0, 1)")
    values = dataset.feature_values(feature)
    cutoff = nearest_rank(np.sort(values), intensity_percentile * 100.0)
    scores = oracle.score_batch(dataset.X)
    flagged = np.flatnonzero((values >= cutoff) & (scores < threshold))
    return [int(i) for i in flagged]


def export_curve(curve: RiskCurve, format: str, path) -> None:
    """Write a curve to disk as ``csv`` (exact values) or ``svg`` (chart)."""
    if format == "csv":
        _write_csv(curve, path)
    elif format == "svg":
        _write_svg(curve, path)
    else:
        raise ValueError(f"unknown export format {format!r}")


def _write_csv(curve: RiskCurve, path) -> None:
    with open(str(path), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for i in range(curve.n_points):
            k, v = curve.grid[i]
            writer.writerow([
                k, repr(v),
                repr(curve.mean_risk[i]), repr(curve.std[i]),
                repr(curve.p10[i]), repr(curve.p90[i]),
            ])


def read_curve_csv(path) -> dict:
    """Read a curve CSV back into arrays keyed by column name."""
    with open(str(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_COLUMNS:
            raise ValueError(f"{path}: not a curve CSV")
        rows = [[float(c) for c in row] for row in reader]
    data = np.asarray(rows, dtype=np.float64)
    if data.size == 0:
        raise ValueError(f"{path}: no curve rows")
    return {name: data[:, i].copy() for i, name in enumerate(CSV_COLUMNS)}


# Chart geometry: fixed canvas, margins chosen to fit axis labels.
_W, _H = 640, 400
_ML, _MR, _MT, _MB = 70, 20, 40, 50


def _write_svg(curve: RiskCurve, path) -> None:
    xs = np.asarray(curve.grid_values)
    lo, hi = float(xs.min()), float(xs.max())
    span = hi - lo
    plot_w = _W - _ML - _MR
    plot_h = _H - _MT - _MB

    def px(v: float) -> float:
        if span == 0:
            return _ML + plot_w / 2.0
        return _ML + (v - lo) / span * plot_w

    def py(s: float) -> float:
        return _MT + (1.0 - s) * plot_h

    def pts(values) -> str:
        return " ".join(f"{px(x):.2f},{py(s):.2f}" for x, s in zip(xs, values))

    band = pts(curve.p90) + " " + " ".join(
        f"{px(x):.2f},{py(s):.2f}"
        for x, s in zip(xs[::-1], curve.p10[::-1]))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.2f}" y="22" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">'
        f'Risk curve: {_esc(curve.feature)}</text>',
        f'<polygon points="{band}" fill="#9ecae1" fill-opacity="0.5" stroke="none"/>',
        f'<polyline points="{pts(curve.mean_risk)}" fill="none" '
        f'stroke="#1f618d" stroke-width="1.5"/>',
        f'<line x1="{_ML}" y1="{py(0):.2f}" x2="{_W - _MR}" y2="{py(0):.2f}" '
        f'stroke="black"/>',
        f'<line x1="{_ML}" y1="{py(0):.2f}" x2="{_ML}" y2="{py(1):.2f}" '
        f'stroke="black"/>',
    ]
    for s in (0.0, 0.5, 1.0):
        parts.append(
            f'<text x="{_ML - 8}" y="{py(s) + 4:.2f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{s:g}</text>')
    for v, anchor in ((lo, "start"), (hi, "end")):
        parts.append(
            f'<text x="{px(v):.2f}" y="{py(0) + 18:.2f}" text-anchor="{anchor}" '
            f'font-family="sans-serif" font-size="11">{v:.4g}</text>')
    parts.append(
        f'<text x="{_ML + plot_w / 2:.2f}" y="{_H - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{_esc(curve.feature)}</text>')
    parts.append(
        f'<text x="18" y="{_MT + plot_h / 2:.2f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 18 {_MT + plot_h / 2:.2f})">mean predicted risk</text>')
    parts.append("</svg>")
    with open(str(path), "w") as fh:
        fh.write("\n".join(parts))
        fh.write("\n")


def _esc(text: str) -> str:
    return (str(text).replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;"))
