import json
import os

import numpy as np
import pytest

from fairlens import (
    AuditLedger,
    GUIDELINES,
    canonical_json,
    ledger_id_for,
    load_ledger,
    render_report,
    save_ledger,
    section_hashes,
)
from fairlens.ledger import canonicalize, now_timestamp


def minimal_ledger(**overrides):
    fields = dict(ledger_id="fl-0000000000000000", seed=0,
                  created_at="2024-01-01T00:00:00Z",
                  updated_at="2024-01-01T00:00:00Z")
    fields.update(overrides)
    return AuditLedger(**fields)


class TestCanonicalization:
    def test_floats_rounded_to_nine_significant_figures(self):
        assert canonicalize(0.12345678912345) == 0.123456789
        assert canonicalize(123456789123.0) == 123456789000.0
        assert canonicalize(1.0) == 1.0

    def test_numpy_scalars_unwrapped(self):
        out = canonicalize({"a": np.float64(0.5), "b": np.int64(3),
                            "c": np.bool_(True)})
        assert out == {"a": 0.5, "b": 3, "c": True}
        assert type(out["a"]) is float
        assert type(out["b"]) is int
        assert type(out["c"]) is bool

    def test_bool_does_not_become_int(self):
        assert canonicalize(True) is True
        assert canonicalize(False) is False

    def test_tuples_become_lists(self):
        assert canonicalize({"a": (1, 2, (3,))}) == {"a": [1, 2, [3]]}

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            canonicalize({"a": float("nan")})
        with pytest.raises(ValueError, match="non-finite"):
            canonicalize([np.inf])

    def test_non_string_keys_rejected(self):
        with pytest.raises(TypeError, match="keys must be strings"):
            canonicalize({1: "a"})

    def test_unknown_types_rejected(self):
        with pytest.raises(TypeError, match="cannot serialize set"):
            canonicalize({"a": {1, 2}})

    def test_canonical_json_is_order_insensitive(self):
        a = canonical_json({"b": 1, "a": {"d": 2, "c": 3}})
        b = canonical_json({"a": {"c": 3, "d": 2}, "b": 1})
        assert a == b
        assert a.startswith('{\n  "a"')


class TestLedgerId:
    def test_deterministic_and_prefixed(self):
        config = {"model": {"kind": "forest"}, "audit": {"folds": 10}}
        a = ledger_id_for(config, 7)
        b = ledger_id_for({"audit": {"folds": 10}, "model": {"kind": "forest"}}, 7)
        assert a == b
        assert a.startswith("fl-")
        assert len(a) == 19

    def test_seed_and_config_both_matter(self):
        config = {"audit": {"folds": 10}}
        assert ledger_id_for(config, 0) != ledger_id_for(config, 1)
        assert ledger_id_for(config, 0) != ledger_id_for({"audit": {"folds": 5}}, 0)


class TestTimestamps:
    def test_source_date_epoch_pins_the_clock(self, monkeypatch):
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
        assert now_timestamp() == "1970-01-01T00:00:00Z"
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
        assert now_timestamp() == "2023-11-14T22:13:20Z"

    def test_fresh_ledger_gets_stamped(self, monkeypatch):
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
        ledger = AuditLedger(ledger_id="fl-x", seed=0)
        assert ledger.created_at == "2023-11-14T22:13:20Z"
        assert ledger.updated_at == ledger.created_at

    def test_touch_updates_only_updated_at(self, monkeypatch):
        ledger = minimal_ledger()
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
        ledger.touch()
        assert ledger.created_at == "2024-01-01T00:00:00Z"
        assert ledger.updated_at == "2023-11-14T22:13:20Z"


class TestValidation:
    def test_schema_version_is_checked_not_coerced(self):
        with pytest.raises(ValueError, match="migrate the ledger explicitly"):
            minimal_ledger(schema_version=2)

    def test_findings_require_metrics(self):
        with pytest.raises(ValueError, match="step 4 requires step 3"):
            minimal_ledger(step4_findings={"findings": []})
        ok = minimal_ledger(step3_metrics={"definitions": {}},
                            step4_findings={"findings": []})
        assert ok.step4_findings == {"findings": []}

    def test_category_status_vocabulary(self):
        with pytest.raises(ValueError, match="unknown category status 'todo'"):
            minimal_ledger(step2_categories=[
                {"category": "gender", "status": "todo"}])
        for status in ("analysed", "not-collected", "deferred"):
            minimal_ledger(step2_categories=[
                {"category": "gender", "status": status}])

    def test_guideline_tags_checked_against_register(self):
        with pytest.raises(ValueError, match="unknown guideline tag 'G10'"):
            minimal_ledger(guideline_tags=["G10"])
        ledger = minimal_ledger(guideline_tags=list(GUIDELINES))
        assert len(ledger.guideline_tags) == 9


class TestLoadRejections:
    def test_unknown_fields(self):
        with pytest.raises(ValueError, match="unknown ledger fields: \\['extra'\\]"):
            AuditLedger.from_dict({**minimal_ledger().to_dict(), "extra": 1})

    def test_missing_schema_version(self):
        payload = minimal_ledger().to_dict()
        del payload["schema_version"]
        with pytest.raises(ValueError, match="no schema_version"):
            AuditLedger.from_dict(payload)

    def test_missing_required_fields(self):
        for req in ("ledger_id", "seed", "created_at", "updated_at"):
            payload = minimal_ledger().to_dict()
            del payload[req]
            with pytest.raises(ValueError, match=f"missing required field {req!r}"):
                AuditLedger.from_dict(payload)

    def test_non_object_payload(self):
        with pytest.raises(ValueError, match="must contain a JSON object"):
            AuditLedger.from_dict([1, 2])

    def test_invalid_json_names_the_file(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{nope")
        with pytest.raises(ValueError, match="not valid JSON"):
            load_ledger(path)


class TestSaveLoad:
    def full_ledger(self):
        return minimal_ledger(
            ledger_id="fl-1234567890abcdef",
            seed=42,
            guideline_tags=["G2", "G5", "G6"],
            step1_scope={"model": "random forest", "dataset": {"n_rows": 100}},
            step2_categories=[{"category": "gender", "status": "analysed",
                              "rationale": "declared attribute"}],
            step3_metrics={"definitions": {"tpr": "true positive rate"},
                           "thresholds": [{"metric": "tpr",
                                           "half_width": 0.0427113,
                                           "provenance": "derived-from-cv"}]},
            step4_findings={"findings": [], "group_metrics": {}},
        )

    def test_round_trip_preserves_bytes(self, tmp_path):
        path = tmp_path / "ledger.json"
        ledger = self.full_ledger()
        save_ledger(ledger, path)
        first = path.read_bytes()
        assert first.endswith(b"\n")
        back = load_ledger(path)
        save_ledger(back, path)
        assert path.read_bytes() == first

    def test_loaded_ledger_equals_saved_content(self, tmp_path):
        path = tmp_path / "ledger.json"
        ledger = self.full_ledger()
        save_ledger(ledger, path)
        back = load_ledger(path)
        assert canonical_json(back.to_dict()) == canonical_json(ledger.to_dict())

    def test_no_temp_files_left_behind(self, tmp_path):
        path = tmp_path / "ledger.json"
        save_ledger(self.full_ledger(), path)
        assert sorted(p.name for p in tmp_path.iterdir()) == ["ledger.json"]

    def test_save_validates_first(self, tmp_path):
        ledger = self.full_ledger()
        ledger.step3_metrics = None
        with pytest.raises(ValueError, match="step 4 requires step 3"):
            save_ledger(ledger, tmp_path / "ledger.json")
        assert not (tmp_path / "ledger.json").exists()

    def test_float_rounding_applied_at_save(self, tmp_path):
        ledger = minimal_ledger(step1_scope={"value": 0.123456789123456})
        path = tmp_path / "ledger.json"
        save_ledger(ledger, path)
        payload = json.loads(path.read_text())
        assert payload["step1_scope"]["value"] == 0.123456789


class TestSectionHashes:
    def test_covers_every_field(self):
        hashes = section_hashes(minimal_ledger())
        assert set(hashes) == set(minimal_ledger().to_dict())
        assert all(len(h) == 64 for h in hashes.values())

    def test_append_only_sections_keep_their_hashes(self):
        ledger = minimal_ledger(
            step1_scope={"model": "forest"},
            step2_categories=[{"category": "gender", "status": "analysed"}],
            step3_metrics={"definitions": {}},
            step4_findings={"findings": []},
        )
        before = section_hashes(ledger)
        ledger.step5_plan = {"adopted_action": "retain baseline"}
        ledger.step6_monitoring = {"limitations": ["synthetic data"]}
        ledger.explainability_entries.append({"curve": {"feature": "x"}})
        after = section_hashes(ledger)
        for name in ("step1_scope", "step2_categories", "step3_metrics",
                     "step4_findings", "ledger_id", "seed"):
            assert after[name] == before[name]
        for name in ("step5_plan", "step6_monitoring",
                     "explainability_entries"):
            assert after[name] != before[name]


class TestRenderReport:
    def test_empty_ledger_renders_all_steps_pending(self):
        text = render_report(minimal_ledger())
        for heading in ("## Step 1: Scope", "## Step 2: Bias categories",
                        "## Step 3: Metrics and tolerances",
                        "## Step 4: Findings", "## Step 5: Plan",
                        "## Step 6: Monitor and reflect"):
            assert heading in text
        assert text.count("_pending_") == 6
        assert text.startswith("# Audit ledger fl-0000000000000000")
        assert text.endswith("\n")
        assert not text.endswith("\n\n")

    def test_rendering_is_deterministic(self):
        a = render_report(minimal_ledger())
        b = render_report(minimal_ledger())
        assert a == b

    def test_guideline_block(self):
        text = render_report(minimal_ledger(guideline_tags=["G5"]))
        assert "Guidelines in scope:" in text
        assert "- G5: Avoid creating or re-enforcing unfair biases (Justice)" \
            in text

    def test_finding_line_formatting(self):
        ledger = minimal_ledger(
            step3_metrics={"definitions": {}},
            step4_findings={"findings": [{
                "metric": "tpr", "group_a": "F", "group_b": "M",
                "disparity": 0.21,
                "threshold": {"metric": "tpr", "half_width": 0.043,
                              "provenance": "derived-from-cv"},
                "exceeded": True, "direction": "F",
            }]},
        )
        text = render_report(ledger)
        assert ("- TPR F vs M: disparity 21.0% against ±4.3%: "
                "EXCEEDED (favours F)") in text

    def test_group_metrics_percentages(self):
        ledger = minimal_ledger(
            step3_metrics={"definitions": {}},
            step4_findings={"group_metrics": {
                "F": {"support": 100, "outcome_rate": 0.25, "tpr": 0.537,
                      "tnr": None, "accuracy": 0.8},
            }},
        )
        text = render_report(ledger)
        assert "| TPR | 53.7% |" in text
        assert "| TNR | n/a |" in text
        assert "| Support | 100 |" in text

    def test_plan_table_and_degradation_caution(self):
        ledger = minimal_ledger(step5_plan={
            "interventions": [{
                "name": "blind-separate",
                "priority_metric": "tpr",
                "baseline_disparity": 0.072,
                "intervention_disparity": 0.04,
                "relative_reduction": 0.444,
                "baseline_accuracy": 0.9,
                "intervention_accuracy": 0.88,
                "verdict": "improved",
                "narrowed_only_by_degradation": True,
            }],
            "adopted_action": "adopt blind-separate",
        })
        text = render_report(ledger)
        assert "| blind-separate | 7.2% | 4.0% | 44.4% | 90.0% | 88.0% | improved |" in text
        assert "Caution: blind-separate narrowed the gap only by worsening" in text
        assert "Adopted action: adopt blind-separate" in text

    def test_blind_spot_line(self):
        ledger = minimal_ledger(step6_monitoring={"blind_spot_overrides": {
            "feature": "loss_chasing", "intensity_percentile": 0.95,
            "score_threshold": 0.2, "count": 4, "example_rows": [1, 2, 3, 4],
        }})
        text = render_report(ledger)
        assert ("Blind-spot overrides: 4 row(s) with 'loss_chasing' at or "
                "above the 95.0% percentile scored below 0.2.") in text

    def test_explainability_table(self):
        ledger = minimal_ledger(explainability_entries=[{
            "curve": {"feature": "bet_volatility", "n_points": 100,
                      "eval_set_size": 400, "balanced": True,
                      "mean_risk": [0.2, 0.5, 0.8]},
            "artifacts": ["curve_bet_volatility.csv"],
        }])
        text = render_report(ledger)
        assert "## Explainability entries" in text
        assert ("| bet_volatility | 100 | 400 | yes | 20.0% | 80.0% | "
                "curve_bet_volatility.csv |") in text
