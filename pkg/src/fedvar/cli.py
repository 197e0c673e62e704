"""Command line front end.

    fedvar run CONFIG [--compare] [--set section.key=value ...] [--output DIR]
    fedvar grid CONFIG [--client-lrs ...] [--server-lrs ...]
    fedvar sweep-tau CONFIG
    fedvar baseline CONFIG

CONFIG may be omitted to use the built-in defaults. Output goes to
``--output``, else $FEDVAR_OUTPUT_DIR, else ``experiment.output``.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import harness
from .config import ConfigError, ExperimentConfig, load_config, parse_override, serialize_config
from .optim import OptimizerSpec, OptKind


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = dict(parse_override(s) for s in args.set)
    return cfg.replace(**overrides) if overrides else cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    summary = harness.run_experiment(cfg, args.output, compare=args.compare)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_grid(args) -> int:
    cfg = _load(args)
    c_lrs = args.client_lrs or cfg.grid.client_lrs
    s_lrs = args.server_lrs or cfg.grid.server_lrs
    res = harness.grid_search(cfg, c_lrs, s_lrs)
    out = harness.output_dir(cfg, args.output)
    doc = {
        "pairing": cfg.experiment.pairing,
        "rows": [{"client_lr": r.client_lr, "server_lr": r.server_lr, "best_accuracy": r.best_accuracy} for r in res.rows],
        "best": {"client_lr": res.best.client_lr, "server_lr": res.best.server_lr, "best_accuracy": res.best.best_accuracy},
    }
    harness.write_json(doc, out / "grid.json")
    for r in res.rows:
        print(f"client_lr={r.client_lr:g}\tserver_lr={r.server_lr:g}\tbest_accuracy={r.best_accuracy:.4f}")
    print(f"best: client_lr={res.best.client_lr:g} server_lr={res.best.server_lr:g}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    table = harness.sweep_tau(cfg).table()
    harness.write_json({"pairing": cfg.experiment.pairing, "rows": table}, harness.output_dir(cfg, args.output) / "sweep_tau.json")
    print("tau_epochs\tFedOpt\tFDAOpt")
    for row in table:
        print(f"{row['tau_epochs']:g}\t{row['FedOpt']}\t{row['FDAOpt']}")
    return 0


def cmd_baseline(args) -> int:
    cfg = _load(args)
    prep = harness.prepare(cfg)
    acc = harness.centralized_baseline(
        prep.model_spec,
        prep.train,
        cfg.baseline.epochs,
        OptimizerSpec(OptKind.SGD, learning_rate=cfg.baseline.learning_rate),
        cfg.baseline.batch_size,
        cfg.data.seed,
        prep.test,
    )
    harness.write_json({"baseline_accuracy": acc}, harness.output_dir(cfg, args.output) / "baseline.json")
    print(f"{acc:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fedvar", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", nargs="?", help="TOML experiment config")
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override a config key")
        sp.add_argument("--output", help="output directory")

    sp = sub.add_parser("run", help="run one experiment")
    common(sp)
    sp.add_argument("--compare", action="store_true", help="run both FedOpt and FDAOpt")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("grid", help="client/server learning-rate grid")
    common(sp)
    sp.add_argument("--client-lrs", type=float, nargs="+")
    sp.add_argument("--server-lrs", type=float, nargs="+")
    sp.set_defaults(func=cmd_grid)

    sp = sub.add_parser("sweep-tau", help="rounds-to-target over several local-training lengths")
    common(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("baseline", help="centralized accuracy ceiling")
    common(sp)
    sp.set_defaults(func=cmd_baseline)

    sp = sub.add_parser("show-config", help="print the resolved config")
    common(sp)
    sp.set_defaults(func=lambda a: print(serialize_config(_load(a)), end="") or 0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
