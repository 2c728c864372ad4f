"""Command line wiring for the audit pipeline.

Subcommands follow the process order: synth, train, audit, mitigate,
explain, report. Exit codes: 0 on success, 1 on any validation or
configuration error, 2 when `audit --fail-on-bias` finds an exceeded
tolerance. The run seed resolves as: --seed flag, then the config's
"seed" field, then the FAIRLENS_SEED environment variable, then 0.
Commands that append to an existing ledger (mitigate, explain) default
to the ledger's recorded seed and refuse a conflicting one, keeping the
provenance chain intact.
"""
from __future__ import annotations

import argparse
import os
import sys

from .ledger import canonical_json, load_ledger, render_report, save_ledger
from .pipeline import (
    ConfigError,
    load_config,
    run_audit,
    run_explain,
    run_mitigate,
    run_synth,
    run_train,
    verify_ledger,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairlens",
        description="Six-step bias audits for player-risk models: "
                    "synthesize, train, audit, mitigate, explain, report.")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="command")

    def add(name, help_text, *, config=True, ledger=False, out=None,
            seed=True):
        p = sub.add_parser(name, help=help_text, description=help_text)
        if config:
            p.add_argument("--config", required=True,
                           help="pipeline config JSON document")
        if ledger:
            p.add_argument("--ledger", required=True,
                           help="audit ledger JSON path")
        if seed:
            p.add_argument("--seed", type=int, default=None,
                           help="run seed (default: config seed, then "
                                "FAIRLENS_SEED, then 0)")
        if out is not None:
            p.add_argument("--out", default=out,
                           help="output directory (default: %(default)s)")
        return p

    add("synth", "generate the configured synthetic dataset", out=".")
    add("train", "train the configured model and save it", out=".")
    p = add("audit", "run steps 1-4 and write the ledger", ledger=True)
    p.add_argument("--fail-on-bias", action="store_true",
                   help="exit 2 when any finding exceeds its tolerance")
    add("mitigate", "run step 5 and append the plan to the ledger",
        ledger=True)
    p = add("explain", "compute risk curves, write artifacts, append "
                       "explainability entries and step 6", ledger=True,
            out=".")
    p.add_argument("--format", choices=["csv", "svg"], default=None,
                   help="restrict curve artifacts to one format")
    p = add("report", "render a ledger to Markdown", config=False,
            ledger=True, out=None, seed=False)
    p.add_argument("--config", default=None,
                   help="config override for --verify (default: the "
                        "config embedded in the ledger)")
    p.add_argument("--out", default=None,
                   help="write the document here instead of stdout")
    p.add_argument("--format", choices=["md", "json"], default="md",
                   help="document format (default: %(default)s)")
    p.add_argument("--verify", action="store_true",
                   help="recompute all numeric sections from the stored "
                        "config and seed; exit 1 on any mismatch")
    return parser


def _resolve_seed(arg_seed, config) -> tuple[int, str]:
    """Seed plus where it came from: flag, config, env or default."""
    if arg_seed is not None:
        return int(arg_seed), "flag"
    if config is not None and config.get("seed") is not None:
        try:
            return int(config["seed"]), "config"
        except (TypeError, ValueError):
            raise ConfigError(f"seed must be an integer, "
                              f"got {config['seed']!r}") from None
    env = os.environ.get("FAIRLENS_SEED")
    if env:
        try:
            return int(env), "env"
        except ValueError:
            raise ConfigError(
                f"FAIRLENS_SEED must be an integer, got {env!r}") from None
    return 0, "default"


def _load_existing(path):
    if not os.path.exists(str(path)):
        raise ValueError(f"ledger {path} does not exist; "
                         "run the audit subcommand first")
    return load_ledger(path)


def _append_seed(args, config, ledger) -> int:
    seed, source = _resolve_seed(args.seed, config)
    if source == "default":
        return ledger.seed
    if seed != ledger.seed:
        raise ValueError(
            f"seed {seed} conflicts with the ledger's recorded seed "
            f"{ledger.seed}; appended steps must share the audit's seed")
    return seed


def _cmd_report(args) -> int:
    ledger = _load_existing(args.ledger)
    if args.verify:
        config = load_config(args.config) if args.config else None
        mismatches = verify_ledger(ledger, config)
        if mismatches:
            print(f"verify: {len(mismatches)} mismatch(es) against "
                  "recomputation:", file=sys.stderr)
            for m in mismatches:
                print(f"  {m}", file=sys.stderr)
            return 1
        print(f"verify: ledger {ledger.ledger_id} reproduces from its "
              "config and seed")
    if args.format == "json":
        document, name = canonical_json(ledger.to_dict()) + "\n", "ledger.json"
    else:
        document, name = render_report(ledger), "report.md"
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, name)
        with open(path, "w") as fh:
            fh.write(document)
        print(f"wrote {path}")
    else:
        sys.stdout.write(document)
    return 0


def _dispatch(args) -> int:
    if args.command == "report":
        return _cmd_report(args)
    config = load_config(args.config)
    if args.command == "synth":
        seed, _ = _resolve_seed(args.seed, config)
        for path in run_synth(config, seed, args.out):
            print(f"wrote {path}")
        return 0
    if args.command == "train":
        seed, _ = _resolve_seed(args.seed, config)
        print(f"wrote {run_train(config, seed, args.out)}")
        return 0
    if args.command == "audit":
        seed, _ = _resolve_seed(args.seed, config)
        ledger, findings = run_audit(config, seed)
        save_ledger(ledger, args.ledger)
        exceeded = [f for f in findings if f.exceeded]
        print(f"audit: {len(findings)} finding(s), {len(exceeded)} exceeded "
              f"tolerance; ledger {ledger.ledger_id} written to {args.ledger}")
        if args.fail_on_bias and exceeded:
            for f in exceeded:
                print(f"bias: {f.metric} {f.group_a} vs {f.group_b}: "
                      f"disparity {f.disparity:.4f} exceeds "
                      f"+/-{f.threshold.half_width:.4f}")
            return 2
        return 0
    if args.command == "mitigate":
        ledger = _load_existing(args.ledger)
        run_mitigate(config, _append_seed(args, config, ledger), ledger)
        save_ledger(ledger, args.ledger)
        print(f"mitigation plan appended to {args.ledger}")
        return 0
    if args.command == "explain":
        ledger = _load_existing(args.ledger)
        seed = _append_seed(args, config, ledger)
        formats = [args.format] if args.format else None
        for path in run_explain(config, seed, ledger, args.out, formats):
            print(f"wrote {path}")
        save_ledger(ledger, args.ledger)
        print(f"explainability entries appended to {args.ledger}")
        return 0
    raise ValueError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        where = getattr(args, "config", None)
        prefix = f"{where}: " if where else ""
        print(f"error: {prefix}{exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
