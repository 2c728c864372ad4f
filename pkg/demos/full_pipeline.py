#!/usr/bin/env python3
"""The whole six-step process through the command line, start to finish.

Writes a config document, then drives the same entry points the
installed `fairlens` command exposes: synthesize, train, audit,
mitigate, explain, report, and finally the self-verification that
recomputes every number in the ledger from its recorded config + seed.
"""
import json
import os
import tempfile

from fairlens.cli import main

CONFIG = {
    "seed": 5,
    "synth": {"preset": "operator1-like",
              "bias": {"label_noise": {"M": 0.08},
                       "weight_shift": {"M": {"night_play_share": 12.0}}}},
    "model": {"kind": "forest", "n_trees": 12, "max_depth": 8,
              "min_leaf": 30, "feature_fraction": 0.8, "threshold": 0.5},
    "audit": {"folds": 5},
    "mitigation": {"threshold": 0.6},
    "explain": {"features": ["night_play_share"], "n_points": 20},
    "monitoring": {
        "limitations": ["synthetic cohort, single operator profile"],
        "followups": ["re-audit after each retraining"],
    },
}


def run(argv):
    print(f"\n$ fairlens {' '.join(argv)}")
    code = main(argv)
    print(f"(exit {code})")
    return code


if __name__ == "__main__":
    workdir = tempfile.mkdtemp(prefix="fairlens_demo_")
    config_path = os.path.join(workdir, "config.json")
    ledger_path = os.path.join(workdir, "ledger.json")
    with open(config_path, "w") as fh:
        json.dump(CONFIG, fh, indent=2)
    print(f"working directory: {workdir}")

    run(["synth", "--config", config_path, "--out", workdir])
    run(["train", "--config", config_path, "--out", workdir])
    run(["audit", "--config", config_path, "--ledger", ledger_path,
         "--fail-on-bias"])
    run(["mitigate", "--config", config_path, "--ledger", ledger_path])
    run(["explain", "--config", config_path, "--ledger", ledger_path,
         "--out", workdir])
    run(["report", "--ledger", ledger_path, "--out", workdir])
    run(["report", "--ledger", ledger_path, "--verify",
         "--out", workdir])

    report_path = os.path.join(workdir, "report.md")
    with open(report_path) as fh:
        lines = fh.read().splitlines()
    print(f"\nfirst lines of {report_path}:")
    for line in lines[:18]:
        print(f"  {line}")
    print(f"  ... ({len(lines)} lines total)")
