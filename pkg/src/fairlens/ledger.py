"""The audit ledger: a versioned, canonical, reproducible record.

A ledger documents one audited model scope across six steps: scope,
bias categories, metric and tolerance definitions, findings, the
intervention plan, and monitoring notes, plus explainability run records.
It is the artifact the whole toolkit exists to produce, so its
serialization is deliberately rigid:

* canonical JSON: sorted keys, fixed indentation, floats rounded to 9
  significant figures at save time, so identical content yields identical
  bytes and a hash of the file is tamper evidence;
* a schema version that is checked, never coerced: a future format bumps
  the version and old builds refuse it loudly;
* unknown fields rejected on load (a typo in a hand-edited ledger must
  not silently vanish);
* findings cannot exist without declared metrics (step 4 requires step 3);
* writes are atomic (write to a temp file, then rename over the target).

Timestamps honor SOURCE_DATE_EPOCH so archival runs can be byte-stable.
"""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
import time
from dataclasses import dataclass, field, fields
from datetime import datetime, timezone

import numpy as np

SCHEMA_VERSION = 1

FLOAT_DIGITS = 9

# Industry guideline register: identifier, text, and the high-level
# principle each one operationalizes. The audit process itself covers
# G5 (bias), G6 (blind spots) and G2 (explainability).
GUIDELINES = {
    "G1": ("Invest in AI for responsible gambling to protect the vulnerable",
           "Beneficence"),
    "G2": ("Embrace explainability in sensitive applications of AI",
           "Explicability"),
    "G3": ("Build 'human-in-the-loop' into AI systems where appropriate",
           "Autonomy"),
    "G4": ("Leverage AI to deliver entertainment, however, change products "
           "where evidence points towards harm", "Beneficence"),
    "G5": ("Avoid creating or re-enforcing unfair biases", "Justice"),
    "G6": ("Be open about AI blind spots and failures", "Justice"),
    "G7": ("Be scientifically robust and continually evaluate",
           "Non-Maleficence"),
    "G8": ("Incorporate security, privacy, and diversity by design",
           "Non-Maleficence"),
    "G9": ("Empower all stakeholders, including customers, staff and Boards, "
           "in the possibilities and risks of AI", "Beneficence"),
}

CATEGORY_STATUSES = ("analysed", "not-collected", "deferred")


def canonicalize(obj):
    """Normalize a JSON-able structure to its canonical form.

    Floats are rounded to 9 significant figures, numpy scalars unwrapped,
    tuples become lists. Non-finite numbers are rejected: a ledger value
    that cannot round-trip through JSON is a bug upstream.
    """
    if isinstance(obj, dict):
        out = {}
        for k, v in obj.items():
            if not isinstance(k, str):
                raise TypeError(f"ledger keys must be strings, got {k!r}")
            out[k] = canonicalize(v)
        return out
    if isinstance(obj, (list, tuple)):
        return [canonicalize(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if not np.isfinite(f):
            raise ValueError("non-finite number in ledger content")
        return float(f"{f:.{FLOAT_DIGITS}g}")
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__} in a ledger")


def canonical_json(obj) -> str:
    return json.dumps(canonicalize(obj), sort_keys=True, indent=2,
                      ensure_ascii=False)


def now_timestamp() -> str:
    """UTC timestamp string; SOURCE_DATE_EPOCH overrides the clock."""
    raw = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(raw) if raw else int(time.time())
    return datetime.fromtimestamp(t, timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def ledger_id_for(config: dict, seed: int) -> str:
    """Deterministic ledger identity from the audit config and seed."""
    payload = canonical_json({"config": config, "seed": seed}).encode()
    return "fl-" + hashlib.sha256(payload).hexdigest()[:16]


@dataclass
class AuditLedger:
    """One audited model scope, documented across the six steps.

    Step fields hold plain JSON-able dicts and lists; ``None`` marks a
    step not yet performed. ``operator_alias`` is reserved for future
    cross-operator benchmarking and carries no behavior here.
    """

    ledger_id: str
    seed: int
    created_at: str = ""
    updated_at: str = ""
    schema_version: int = SCHEMA_VERSION
    operator_alias: str | None = None
    step1_scope: dict | None = None
    step2_categories: list | None = None
    step3_metrics: dict | None = None
    step4_findings: dict | None = None
    step5_plan: dict | None = None
    step6_monitoring: dict | None = None
    guideline_tags: list = field(default_factory=list)
    explainability_entries: list = field(default_factory=list)

    def __post_init__(self):
        if not self.created_at:
            self.created_at = now_timestamp()
        if not self.updated_at:
            self.updated_at = self.created_at
        self.validate()

    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(
                f"ledger schema version {self.schema_version!r} is not "
                f"supported by this build (expected {SCHEMA_VERSION}); "
                "migrate the ledger explicitly")
        if self.step4_findings is not None and self.step3_metrics is None:
            raise ValueError("findings without declared metrics: "
                             "step 4 requires step 3")
        if self.step2_categories is not None:
            for entry in self.step2_categories:
                status = entry.get("status")
                if status not in CATEGORY_STATUSES:
                    raise ValueError(f"unknown category status {status!r}")
        for tag in self.guideline_tags:
            if tag not in GUIDELINES:
                raise ValueError(f"unknown guideline tag {tag!r}")

    def touch(self) -> None:
        self.updated_at = now_timestamp()

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, payload: dict) -> "AuditLedger":
        if not isinstance(payload, dict):
            raise ValueError("ledger file must contain a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown ledger fields: {sorted(unknown)}")
        if "schema_version" not in payload:
            raise ValueError("ledger has no schema_version")
        for req in ("ledger_id", "seed", "created_at", "updated_at"):
            if req not in payload:
                raise ValueError(f"ledger missing required field {req!r}")
        return cls(**payload)


def section_hashes(ledger: AuditLedger) -> dict:
    """Canonical hash per ledger field, for append-only verification."""
    return {
        name: hashlib.sha256(canonical_json(value).encode()).hexdigest()
        for name, value in ledger.to_dict().items()
    }


def save_ledger(ledger: AuditLedger, path) -> None:
    """Write canonical JSON atomically (temp file, then rename)."""
    ledger.validate()
    path = str(path)
    text = canonical_json(ledger.to_dict()) + "\n"
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ledger-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_ledger(path) -> AuditLedger:
    with open(str(path)) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not valid JSON: {exc}") from None
    return AuditLedger.from_dict(payload)


# ---------------------------------------------------------------------------
# Markdown rendering


def _pct(value) -> str:
    if value is None:
        return "n/a"
    return f"{100.0 * float(value):.1f}%"


def _num(value) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, int):
        return str(value)
    return f"{float(value):.{FLOAT_DIGITS}g}"


def _md_table(header: list, rows: list) -> list:
    lines = ["| " + " | ".join(header) + " |",
             "| " + " | ".join("---" for _ in header) + " |"]
    for row in rows:
        lines.append("| " + " | ".join(str(c) for c in row) + " |")
    return lines


def _metrics_table_lines(table: dict) -> list:
    groups = list(table)
    rows = [
        ["Support"] + [str(table[g]["support"]) for g in groups],
        ["Outcome rate"] + [_pct(table[g]["outcome_rate"]) for g in groups],
        ["TPR"] + [_pct(table[g]["tpr"]) for g in groups],
        ["TNR"] + [_pct(table[g]["tnr"]) for g in groups],
        ["Accuracy"] + [_pct(table[g]["accuracy"]) for g in groups],
    ]
    return _md_table(["Metric"] + groups, rows)


def render_report(ledger: AuditLedger) -> str:
    """Render a ledger to Markdown. Same ledger, same bytes."""
    ledger.validate()
    out = [f"# Audit ledger {ledger.ledger_id}", ""]
    out += [
        f"- Schema version: {ledger.schema_version}",
        f"- Created: {ledger.created_at}",
        f"- Updated: {ledger.updated_at}",
        f"- Seed: {ledger.seed}",
    ]
    if ledger.operator_alias:
        out.append(f"- Operator alias: {ledger.operator_alias}")
    if ledger.guideline_tags:
        out += ["", "Guidelines in scope:", ""]
        for tag in ledger.guideline_tags:
            text, principle = GUIDELINES[tag]
            out.append(f"- {tag}: {text} ({principle})")
    out.append("")

    out += ["## Step 1: Scope", ""]
    if ledger.step1_scope is None:
        out += ["_pending_", ""]
    else:
        scope = ledger.step1_scope
        if scope.get("model"):
            out.append(f"Audited model: {scope['model']}")
        if scope.get("justification"):
            out.append(f"Justification: {scope['justification']}")
        ds = scope.get("dataset") or {}
        if ds.get("source") == "synth":
            out.append(f"Dataset: synthetic, generator digest "
                       f"{ds.get('digest', '?')} ({ds.get('n_rows', '?')} "
                       f"rows)")
        elif ds:
            out.append(
                f"Dataset: {ds.get('path', 'n/a')} "
                f"({ds.get('n_rows', '?')} rows, label column "
                f"{ds.get('label_column', 'n/a')!r}, group column "
                f"{ds.get('group_column', 'n/a')!r})")
        out.append("")

    out += ["## Step 2: Bias categories", ""]
    if ledger.step2_categories is None:
        out += ["_pending_", ""]
    else:
        rows = [[c["category"], c["status"], c.get("rationale", "")]
                for c in ledger.step2_categories]
        out += _md_table(["Category", "Status", "Rationale"], rows) + [""]

    out += ["## Step 3: Metrics and tolerances", ""]
    if ledger.step3_metrics is None:
        out += ["_pending_", ""]
    else:
        step3 = ledger.step3_metrics
        for name, definition in sorted((step3.get("definitions") or {}).items()):
            out.append(f"- {name}: {definition}")
        if step3.get("comparison_groups"):
            out.append("- Comparison groups: "
                       + ", ".join(step3["comparison_groups"]))
        if step3.get("definitions") or step3.get("comparison_groups"):
            out.append("")
        thresholds = step3.get("thresholds") or []
        if thresholds:
            rows = [[t["metric"], f"±{_pct(t['half_width'])}", t["provenance"]]
                    for t in thresholds]
            out += _md_table(["Metric", "Tolerance", "Provenance"], rows) + [""]

    out += ["## Step 4: Findings", ""]
    if ledger.step4_findings is None:
        out += ["_pending_", ""]
    else:
        step4 = ledger.step4_findings
        if step4.get("group_metrics"):
            out += _metrics_table_lines(step4["group_metrics"]) + [""]
        findings = step4.get("findings") or []
        if findings:
            out.append("Tolerance findings:")
            out.append("")
            for f in findings:
                status = "EXCEEDED" if f["exceeded"] else "within tolerance"
                direction = (f" (favours {f['direction']})"
                             if f.get("direction") else "")
                out.append(
                    f"- {f['metric'].upper()} {f['group_a']} vs {f['group_b']}: "
                    f"disparity {_pct(f['disparity'])} against "
                    f"±{_pct(f['threshold']['half_width'])}: {status}{direction}")
            out.append("")
        indirect = step4.get("indirect_identification")
        if indirect:
            out.append(
                f"Indirect identification of {indirect['attribute']!r}: "
                f"accuracy {_pct(indirect['accuracy'])} vs baseline "
                f"{_pct(indirect['baseline_accuracy'])}, uplift "
                f"{_pct(indirect['uplift'])}: {indirect['verdict']}")
            out.append("")
        chi = step4.get("chi_squared")
        if chi:
            out.append(
                f"Chi-squared vs benchmark: statistic {_num(chi['statistic'])}, "
                f"p-value {_num(chi['p_value'])}, "
                f"df {chi['degrees_of_freedom']}")
            out.append("")
        for ablation in step4.get("ablation") or []:
            out.append(f"Feature ablation {ablation['feature']!r} "
                       "(metric deltas without minus with):")
            out.append("")
            groups = list(ablation["deltas"])
            rows = [[metric.upper()]
                    + [_pct(ablation["deltas"][g].get(metric)) for g in groups]
                    for metric in ("tpr", "tnr", "accuracy")]
            out += _md_table(["Delta"] + groups, rows) + [""]

    out += ["## Step 5: Plan", ""]
    if ledger.step5_plan is None:
        out += ["_pending_", ""]
    else:
        step5 = ledger.step5_plan
        interventions = step5.get("interventions") or []
        if interventions:
            rows = []
            for r in interventions:
                rows.append([
                    r["name"],
                    _pct(r["baseline_disparity"]),
                    _pct(r["intervention_disparity"]),
                    _pct(r["relative_reduction"]),
                    _pct(r["baseline_accuracy"]),
                    _pct(r["intervention_accuracy"]),
                    r["verdict"],
                ])
            out += _md_table(
                ["Intervention", "Disparity before", "Disparity after",
                 "Reduction", "Accuracy before", "Accuracy after", "Verdict"],
                rows) + [""]
            for r in interventions:
                if r.get("narrowed_only_by_degradation"):
                    out.append(
                        f"- Caution: {r['name']} narrowed the gap only by "
                        f"worsening {r['priority_metric'].upper()} for the "
                        "better-served group.")
                    out.append("")
        if step5.get("adopted_action"):
            out += [f"Adopted action: {step5['adopted_action']}", ""]

    out += ["## Step 6: Monitor and reflect", ""]
    if ledger.step6_monitoring is None:
        out += ["_pending_", ""]
    else:
        step6 = ledger.step6_monitoring
        for key, title in (("limitations", "Limitations"),
                           ("followups", "Follow-ups")):
            items = step6.get(key) or []
            if items:
                out.append(f"{title}:")
                out.append("")
                out += [f"- {item}" for item in items]
                out.append("")
        overrides = step6.get("blind_spot_overrides")
        if overrides:
            out.append(
                f"Blind-spot overrides: {overrides['count']} row(s) with "
                f"{overrides['feature']!r} at or above the "
                f"{_pct(overrides['intensity_percentile'])} percentile scored "
                f"below {_num(overrides['score_threshold'])}.")
            out.append("")

    if ledger.explainability_entries:
        out += ["## Explainability entries", ""]
        rows = []
        for e in ledger.explainability_entries:
            curve = e["curve"]
            rows.append([
                curve["feature"],
                curve["n_points"],
                curve["eval_set_size"],
                "yes" if curve["balanced"] else "no",
                _pct(curve["mean_risk"][0]),
                _pct(curve["mean_risk"][-1]),
                ", ".join(e.get("artifacts") or []) or "none",
            ])
        out += _md_table(
            ["Feature", "Grid points", "Eval rows", "Balanced",
             "Mean risk at low end", "at high end", "Artifacts"],
            rows) + [""]

    return "\n".join(out).rstrip("\n") + "\n"
