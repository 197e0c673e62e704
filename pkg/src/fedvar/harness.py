"""Experiment front end: building runs from a config, centralized baselines,
rounds-to-target evaluation, learning-rate grids, tau sweeps and metrics files."""

from __future__ import annotations

import csv
import json
import math
import os
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import optim
from .config import ExperimentConfig, serialize_config
from .data import (
    BatchStream,
    Dataset,
    FederatedDataset,
    PartitionSpec,
    dirichlet_partition,
    load_csv,
    mean_shard_size,
    partition_summary,
    synth_generate,
    train_test_split,
)
from .engine import Algorithm, RoundRecord, run_training
from .models import ModelSpec, evaluate, init_params, loss_and_grad
from .optim import PAIRINGS, OptimizerSpec, OptKind

NOT_CONVERGED = "×"
OUTPUT_ENV = "FEDVAR_OUTPUT_DIR"

METRICS_COLUMNS = [
    "experiment",
    "seed",
    "algorithm",
    "pairing",
    "round",
    "cohort",
    "s_t",
    "n_queries",
    "exact_var",
    "theta",
    "train_loss",
    "eval_loss",
    "eval_accuracy",
    "bytes_up",
    "bytes_down",
    "wall_steps",
    "status",
]


@dataclass
class Prepared:
    train: Dataset
    test: Dataset
    fd: FederatedDataset
    model_spec: ModelSpec
    e_steps: float


def with_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    """Same experiment, fresh randomness everywhere (data, split, partition, cohorts, batches)."""
    return cfg.replace(
        **{"experiment.seed": seed, "data.seed": seed, "partition.seed": seed, "cohort.seed": seed}
    )


def prepare(cfg: ExperimentConfig) -> Prepared:
    da = cfg.data
    if da.source == "csv":
        source = load_csv(da.csv_path)
    else:
        source = synth_generate(
            da.input_dim, da.num_classes, da.samples_per_class, da.separation, da.seed, nuisance=da.nuisance
        )
    train, test = train_test_split(source, da.test_fraction, da.seed)
    fd = dirichlet_partition(train, PartitionSpec(cfg.partition.num_clients, cfg.partition.alpha, cfg.partition.seed))
    spec = cfg.model_spec(source.input_dim, source.num_classes)
    return Prepared(train, test, fd, spec, mean_shard_size(fd, cfg.local.batch_size))


def centralized_baseline(
    model_spec: ModelSpec,
    dataset: Dataset,
    epochs: int,
    opt: OptimizerSpec,
    batch_size: int = 8,
    seed: int = 0,
    eval_data: Optional[Dataset] = None,
) -> float:
    """Best accuracy over epochs of plain minibatch training on pooled data.

    Epoch 0 (the initial model) counts, so ``epochs=0`` returns the initial
    model's accuracy.
    """
    eval_data = dataset if eval_data is None else eval_data
    w = init_params(model_spec)
    state = optim.init_state(opt, w.size)
    best = evaluate(model_spec, w, eval_data)[1]
    stream = BatchStream(dataset, seed, batch_size)
    for _ in range(epochs):
        for _ in range(stream.spe):
            _, g = loss_and_grad(model_spec, w, next(stream))
            w, state = optim.step(opt, state, w, g)
        best = max(best, evaluate(model_spec, w, eval_data)[1])
    return best


def baseline_for(cfg: ExperimentConfig, prep: Prepared) -> float:
    if cfg.experiment.baseline_accuracy > 0:
        return cfg.experiment.baseline_accuracy
    b = cfg.baseline
    opt = OptimizerSpec(OptKind.SGD, learning_rate=b.learning_rate)
    return centralized_baseline(prep.model_spec, prep.train, b.epochs, opt, b.batch_size, cfg.data.seed, prep.test)


def rounds_to_target(history: Sequence[RoundRecord], baseline: float, fraction: float) -> Optional[int]:
    """1-based count of rounds until accuracy first reaches ``fraction * baseline``; None if never."""
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    threshold = fraction * baseline
    for n, rec in enumerate(history, start=1):
        if rec.eval_accuracy >= threshold:
            return n
    return None


def best_accuracy(history: Sequence[RoundRecord]) -> float:
    return max((r.eval_accuracy for r in history if r.status == "ok"), default=0.0)


def speedup(rounds_fedopt: Optional[int], rounds_fdaopt: Optional[int]) -> Optional[float]:
    """``rounds_fedopt / rounds_fdaopt``; None when either run never converged."""
    if rounds_fedopt is None or rounds_fdaopt is None:
        return None
    if rounds_fedopt <= 0 or rounds_fdaopt <= 0:
        raise ValueError("round counts must be positive")
    return rounds_fedopt / rounds_fdaopt


def fmt_rounds(r: Optional[float]) -> str:
    return NOT_CONVERGED if r is None else f"{r:g}"


def run_algorithm(
    cfg: ExperimentConfig,
    prep: Prepared,
    algorithm: Optional[str] = None,
    stop_at_accuracy: Optional[float] = None,
):
    ecfg = cfg.engine_config(algorithm, prep.e_steps)
    stop = None
    if stop_at_accuracy is not None:
        stop = lambda rec: rec.eval_accuracy >= stop_at_accuracy  # noqa: E731
    return run_training(ecfg, prep.fd, prep.model_spec, eval_data=prep.test, train_data=prep.train, stop=stop)


# -- grid search -------------------------------------------------------------


@dataclass(frozen=True)
class GridRow:
    client_lr: float
    server_lr: float
    best_accuracy: float


@dataclass
class GridResult:
    rows: list[GridRow]
    best: GridRow


def pick_best(rows: Iterable[GridRow]) -> GridRow:
    """Highest accuracy; ties go to the smaller server lr, then the smaller client lr."""
    return min(rows, key=lambda r: (-r.best_accuracy, r.server_lr, r.client_lr))


def grid_search(cfg: ExperimentConfig, client_lrs: Sequence[float], server_lrs: Sequence[float]) -> GridResult:
    """Train every (client lr, server lr) pair for the configured rounds and
    keep the best accuracy seen in any round."""
    if not client_lrs or not server_lrs:
        raise ValueError("grid axes must be nonempty")
    prep = prepare(cfg)
    rows = []
    for s_lr in sorted(set(server_lrs)):
        for c_lr in sorted(set(client_lrs)):
            run_cfg = cfg.replace(**{"client_opt.learning_rate": c_lr, "server_opt.learning_rate": s_lr})
            res = run_algorithm(run_cfg, prep)
            rows.append(GridRow(c_lr, s_lr, best_accuracy(res.history)))
    return GridResult(rows, pick_best(rows))


# -- metrics -----------------------------------------------------------------


def _num(x):
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)  # 'inf', '-inf', 'nan'
    return x


def metrics_rows(
    history: Sequence[RoundRecord], experiment: str, seed: int, algorithm: str, pairing: str
) -> list[dict]:
    rows = []
    for rec in history:
        rows.append(
            {
                "experiment": experiment,
                "seed": seed,
                "algorithm": algorithm,
                "pairing": pairing,
                "round": rec.round,
                "cohort": " ".join(str(k) for k in rec.cohort),
                "s_t": rec.s_t,
                "n_queries": rec.n_queries,
                "exact_var": rec.exact_var,
                "theta": rec.theta,
                "train_loss": rec.train_loss,
                "eval_loss": rec.eval_loss,
                "eval_accuracy": rec.eval_accuracy,
                "bytes_up": rec.bytes_up,
                "bytes_down": rec.bytes_down,
                "wall_steps": rec.wall_steps,
                "status": rec.status,
            }
        )
    return rows


def emit_metrics(rows: Sequence[dict], path, append: bool = False) -> None:
    """Write rows as CSV (header first) plus a JSON-lines mirror next to it.

    With ``append=True`` rows are added to existing files and the header is
    only written when the CSV is new or empty.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "a" if append else "w"
    fresh = not append or not path.exists() or path.stat().st_size == 0
    with open(path, mode, newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if fresh:
            writer.writerow(METRICS_COLUMNS)
        for row in rows:
            writer.writerow([_csv_cell(row[c]) for c in METRICS_COLUMNS])
    with open(path.with_suffix(".jsonl"), mode, encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps({c: _num(row[c]) for c in METRICS_COLUMNS}) + "\n")


def _csv_cell(v):
    return repr(v) if isinstance(v, float) else v


def read_metrics(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_json(obj, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n", encoding="utf-8")


def summarize(
    histories: dict[str, Sequence[RoundRecord]],
    baseline: float,
    fractions: Sequence[float],
    metric: str = "first_crossing",
) -> dict:
    """Per-algorithm rounds-to-target, byte totals and, if both algorithms ran, speedups."""
    out: dict = {"baseline_accuracy": baseline, "summary_metric": metric, "algorithms": {}}
    rtt: dict[str, dict[str, Optional[int]]] = {}
    for alg, hist in histories.items():
        rtt[alg] = {f"{f:g}": rounds_to_target(hist, baseline, f) for f in fractions}
        entry = {
            "rounds": len(hist),
            "rounds_to_target": {k: fmt_rounds(v) if v is None else v for k, v in rtt[alg].items()},
            "best_accuracy": best_accuracy(hist),
            "final_train_loss": _num(hist[-1].train_loss) if hist else None,
            "total_bytes_up": sum(r.bytes_up for r in hist),
            "total_bytes_down": sum(r.bytes_down for r in hist),
            "total_local_steps": hist[-1].wall_steps if hist else 0,
        }
        if metric == "best":
            entry["headline"] = entry["best_accuracy"]
        else:
            entry["headline"] = entry["rounds_to_target"]
        out["algorithms"][alg] = entry
    if Algorithm.FEDOPT.value in rtt and Algorithm.FDAOPT.value in rtt:
        sp = {}
        for k in rtt[Algorithm.FEDOPT.value]:
            s = speedup(rtt[Algorithm.FEDOPT.value][k], rtt[Algorithm.FDAOPT.value][k])
            sp[k] = NOT_CONVERGED if s is None else round(s, 4)
        out["speedup"] = sp
    return out


def output_dir(cfg: ExperimentConfig, override=None) -> Path:
    return Path(override or os.environ.get(OUTPUT_ENV) or cfg.experiment.output)


def algorithm_label(algorithm: str, pairing: str) -> str:
    return pairing if algorithm == Algorithm.FEDOPT.value else PAIRINGS[pairing][0]


def run_experiment(cfg: ExperimentConfig, out_dir=None, compare: bool = False) -> dict:
    """Run one experiment (or both algorithm families with ``compare``) and
    write config echo, partition summary, metrics and summary files."""
    out = output_dir(cfg, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prep = prepare(cfg)
    baseline = baseline_for(cfg, prep)
    algs = [a.value for a in Algorithm] if compare else [cfg.experiment.algorithm]
    histories = {}
    rows = []
    for alg in algs:
        res = run_algorithm(cfg, prep, alg)
        histories[alg] = res.history
        rows += metrics_rows(res.history, cfg.experiment.name, cfg.experiment.seed, alg, cfg.experiment.pairing)
    (out / "config.toml").write_text(serialize_config(cfg), encoding="utf-8")
    write_json(partition_summary(prep.fd), out / "partition.json")
    emit_metrics(rows, out / "metrics.csv")
    summary = summarize(histories, baseline, cfg.experiment.target_fractions, cfg.experiment.summary_metric)
    summary["experiment"] = cfg.experiment.name
    summary["pairing"] = cfg.experiment.pairing
    summary["labels"] = {a: algorithm_label(a, cfg.experiment.pairing) for a in algs}
    summary["model_params"] = prep.model_spec.num_params
    summary["mean_epoch_steps"] = prep.e_steps
    write_json(summary, out / "summary.json")
    return summary


# -- tau sweep ---------------------------------------------------------------


@dataclass
class SweepCell:
    tau_epochs: float
    algorithm: str
    rounds: list[Optional[int]]

    @property
    def median(self) -> Optional[float]:
        """Median over seeds, counting non-convergence as +inf; None if that median is inf."""
        vals = [math.inf if r is None else r for r in self.rounds]
        m = statistics.median(vals)
        return None if math.isinf(m) else m


@dataclass
class SweepResult:
    cells: list[SweepCell] = field(default_factory=list)

    def cell(self, tau_epochs: float, algorithm: str) -> SweepCell:
        for c in self.cells:
            if c.tau_epochs == tau_epochs and c.algorithm == algorithm:
                return c
        raise KeyError((tau_epochs, algorithm))

    def table(self) -> list[dict]:
        taus = sorted({c.tau_epochs for c in self.cells})
        rows = []
        for tau in taus:
            row = {"tau_epochs": tau}
            for alg in (Algorithm.FEDOPT.value, Algorithm.FDAOPT.value):
                try:
                    c = self.cell(tau, alg)
                except KeyError:
                    continue
                row[alg] = fmt_rounds(c.median)
                row[f"{alg}_per_seed"] = [fmt_rounds(r) for r in c.rounds]
            rows.append(row)
        return rows


def sweep_tau(cfg: ExperimentConfig) -> SweepResult:
    """Rounds-to-target for both algorithm families over a list of tau values (in epochs)."""
    sw = cfg.sweep
    result = SweepResult()
    per_seed = {}
    for seed in sw.seeds:
        scfg = with_seed(cfg, seed)
        prep = prepare(scfg)
        per_seed[seed] = (scfg, prep, baseline_for(scfg, prep))
    for tau in sw.tau_epochs:
        for alg in (Algorithm.FEDOPT.value, Algorithm.FDAOPT.value):
            rounds = []
            for seed in sw.seeds:
                scfg, prep, base = per_seed[seed]
                tcfg = scfg.replace(**{"local.tau_epochs": float(tau), "local.tau": 0})
                target = sw.target_fraction * base
                res = run_algorithm(tcfg, prep, alg, stop_at_accuracy=target if sw.stop_at_target else None)
                rounds.append(rounds_to_target(res.history, base, sw.target_fraction))
            result.cells.append(SweepCell(float(tau), alg, rounds))
    return result
