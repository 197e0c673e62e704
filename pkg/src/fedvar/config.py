"""Experiment configuration: a TOML document of flat sections.

Every key has a default; :func:`parse_config` rejects unknown sections or
keys and out-of-range values with an error naming the offending key, and
:func:`serialize_config` writes back the fully resolved document.

Integer knobs where 0 means "derive from the data" are noted inline.
"""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, field, fields
from typing import Any

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .data import CohortSpec, PartitionSpec
from .engine import Algorithm, EngineConfig
from .models import ModelKind, ModelSpec
from .optim import PAIRINGS, OptimizerSpec, OptKind
from .sketch import SketchConfig


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the dotted key."""

    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}")
        self.key = key


@dataclass(frozen=True)
class ExperimentSection:
    name: str = "experiment"
    algorithm: str = "FDAOpt"  # FedOpt | FDAOpt
    pairing: str = "FedAvg"  # FedAvg | FedAvgM | FedAdam | FedAdamW | FedAdaGrad
    rounds: int = 100
    seed: int = 0
    output: str = "runs"
    target_fractions: list = field(default_factory=lambda: [0.9, 0.95])
    baseline_accuracy: float = 0.0  # 0 -> measure with a centralized run
    summary_metric: str = "first_crossing"  # first_crossing | best


@dataclass(frozen=True)
class ModelSection:
    kind: str = "LogReg"
    hidden_dim: int = 16
    init_seed: int = 0


@dataclass(frozen=True)
class DataSection:
    source: str = "synthetic"  # synthetic | csv
    csv_path: str = ""
    input_dim: int = 10
    num_classes: int = 4
    samples_per_class: int = 150
    separation: float = 6.0
    nuisance: float = 0.0
    seed: int = 0
    test_fraction: float = 0.2


@dataclass(frozen=True)
class PartitionSection:
    num_clients: int = 10
    alpha: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class CohortSection:
    size: int = 10
    seed: int = 0


@dataclass(frozen=True)
class ClientOptSection:
    learning_rate: float = 0.01


@dataclass(frozen=True)
class ServerOptSection:
    learning_rate: float = 1.0
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.01


@dataclass(frozen=True)
class LocalSection:
    batch_size: int = 8
    tau_epochs: float = 1.0
    tau: int = 0  # explicit step count, 0 -> round(tau_epochs * ceil(e))
    tau_tilde: int = 0  # 0 -> 2 tau + 8 ceil(e)
    query_every: int = 0  # 0 -> ceil(e), once per epoch
    weighted: bool = False


@dataclass(frozen=True)
class SketchSection:
    depth: int = 7
    width: int = 1024
    seed: int = 0


@dataclass(frozen=True)
class ThresholdSection:
    theta_min: float = 1e-12


@dataclass(frozen=True)
class BaselineSection:
    epochs: int = 60
    learning_rate: float = 0.05
    batch_size: int = 8


@dataclass(frozen=True)
class GridSection:
    client_lrs: list = field(default_factory=lambda: [1e-3, 1e-2, 1e-1])
    server_lrs: list = field(default_factory=lambda: [1e-2, 1e-1, 1.0])


@dataclass(frozen=True)
class SweepSection:
    tau_epochs: list = field(default_factory=lambda: [1.0, 2.0, 4.0, 8.0])
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    target_fraction: float = 0.95
    stop_at_target: bool = True


SECTIONS = {
    "experiment": ExperimentSection,
    "model": ModelSection,
    "data": DataSection,
    "partition": PartitionSection,
    "cohort": CohortSection,
    "client_opt": ClientOptSection,
    "server_opt": ServerOptSection,
    "local": LocalSection,
    "sketch": SketchSection,
    "threshold": ThresholdSection,
    "baseline": BaselineSection,
    "grid": GridSection,
    "sweep": SweepSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: ExperimentSection = ExperimentSection()
    model: ModelSection = ModelSection()
    data: DataSection = DataSection()
    partition: PartitionSection = PartitionSection()
    cohort: CohortSection = CohortSection()
    client_opt: ClientOptSection = ClientOptSection()
    server_opt: ServerOptSection = ServerOptSection()
    local: LocalSection = LocalSection()
    sketch: SketchSection = SketchSection()
    threshold: ThresholdSection = ThresholdSection()
    baseline: BaselineSection = BaselineSection()
    grid: GridSection = GridSection()
    sweep: SweepSection = SweepSection()

    def replace(self, **dotted: Any) -> "ExperimentConfig":
        """Copy with ``section.key`` overrides, e.g. ``replace(**{"experiment.seed": 3})``."""
        doc = to_dict(self)
        for key, value in dotted.items():
            section, _, name = key.partition(".")
            doc.setdefault(section, {})[name] = value
        return from_dict(doc)

    # -- derived objects ---------------------------------------------------

    @property
    def server_kind(self) -> OptKind:
        return PAIRINGS[self.experiment.pairing][1]

    def model_spec(self, input_dim: int, num_classes: int) -> ModelSpec:
        return ModelSpec(self.model.kind, input_dim, num_classes, self.model.hidden_dim, self.model.init_seed)

    def server_spec(self) -> OptimizerSpec:
        s = self.server_opt
        return OptimizerSpec(self.server_kind, s.learning_rate, s.momentum, s.beta1, s.beta2, s.epsilon, s.weight_decay)

    def engine_config(self, algorithm: str | None = None, e_steps: float | None = None) -> EngineConfig:
        loc = self.local
        tau = loc.tau or None
        if tau is None and e_steps is not None:
            tau = max(1, round(loc.tau_epochs * math.ceil(e_steps)))
        return EngineConfig(
            algorithm=Algorithm(algorithm or self.experiment.algorithm),
            client_opt=OptimizerSpec(OptKind.SGD, learning_rate=self.client_opt.learning_rate),
            server_opt=self.server_spec(),
            rounds=self.experiment.rounds,
            tau=tau,
            tau_tilde=loc.tau_tilde or None,
            query_every=loc.query_every or None,
            batch_size=loc.batch_size,
            sketch=SketchConfig(self.sketch.depth, self.sketch.width, self.sketch.seed),
            cohort=CohortSpec(self.cohort.size, self.cohort.seed),
            seed=self.experiment.seed,
            weighted=loc.weighted,
            theta_min=self.threshold.theta_min,
        )


def _coerce(key: str, value: Any, default: Any) -> Any:
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(key, f"expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(key, f"expected a list, got {value!r}")
        kind = type(default[0]) if default else None
        out = []
        for v in value:
            if kind is float and isinstance(v, int) and not isinstance(v, bool):
                v = float(v)
            if kind is not None and kind is not float and not isinstance(v, kind):
                raise ConfigError(key, f"list entries must be {kind.__name__}, got {v!r}")
            if kind is float and not isinstance(v, float):
                raise ConfigError(key, f"list entries must be numbers, got {v!r}")
            out.append(v)
        return out
    return value


def _check(cond: bool, key: str, msg: str) -> None:
    if not cond:
        raise ConfigError(key, msg)


def _validate(cfg: ExperimentConfig) -> None:
    ex, da, lo = cfg.experiment, cfg.data, cfg.local
    _check(ex.algorithm in {a.value for a in Algorithm}, "experiment.algorithm", f"unknown algorithm {ex.algorithm!r}")
    _check(ex.pairing in PAIRINGS, "experiment.pairing", f"unknown pairing {ex.pairing!r}")
    _check(ex.rounds >= 1, "experiment.rounds", "must be >= 1")
    _check(ex.seed >= 0, "experiment.seed", "must be >= 0")
    fr = ex.target_fractions
    _check(all(0 < f <= 1 for f in fr), "experiment.target_fractions", "entries must lie in (0, 1]")
    _check(list(fr) == sorted(fr), "experiment.target_fractions", "must be sorted ascending")
    _check(0 <= ex.baseline_accuracy <= 1, "experiment.baseline_accuracy", "must lie in (0, 1], or 0 to measure")
    _check(ex.summary_metric in ("first_crossing", "best"), "experiment.summary_metric", "first_crossing or best")
    _check(cfg.model.kind in {k.value for k in ModelKind}, "model.kind", f"unknown model {cfg.model.kind!r}")
    _check(cfg.model.hidden_dim >= 1, "model.hidden_dim", "must be >= 1")
    _check(da.source in ("synthetic", "csv"), "data.source", "synthetic or csv")
    _check(da.source != "csv" or bool(da.csv_path), "data.csv_path", "required when data.source = csv")
    for k in ("input_dim", "num_classes", "samples_per_class"):
        _check(getattr(da, k) >= 1, f"data.{k}", "must be >= 1")
    _check(da.nuisance >= 0, "data.nuisance", "must be >= 0")
    _check(0 < da.test_fraction < 1, "data.test_fraction", "must lie in (0, 1)")
    _check(cfg.partition.num_clients >= 2, "partition.num_clients", "must be >= 2")
    _check(cfg.partition.alpha > 0, "partition.alpha", "must be > 0")
    _check(1 <= cfg.cohort.size <= cfg.partition.num_clients, "cohort.size", "must lie in [1, partition.num_clients]")
    _check(cfg.client_opt.learning_rate > 0, "client_opt.learning_rate", "must be > 0")
    so = cfg.server_opt
    _check(so.learning_rate > 0, "server_opt.learning_rate", "must be > 0")
    if ex.pairing == "FedAvg":
        _check(so.learning_rate == 1.0, "server_opt.learning_rate", "FedAvg requires server SGD with lr = 1.0")
    _check(0 <= so.momentum < 1, "server_opt.momentum", "must lie in [0, 1)")
    _check(0 <= so.beta1 < 1, "server_opt.beta1", "must lie in [0, 1)")
    _check(0 <= so.beta2 < 1, "server_opt.beta2", "must lie in [0, 1)")
    _check(so.epsilon > 0, "server_opt.epsilon", "must be > 0")
    _check(so.weight_decay >= 0, "server_opt.weight_decay", "must be >= 0")
    _check(lo.batch_size >= 1, "local.batch_size", "must be >= 1")
    _check(lo.tau_epochs > 0, "local.tau_epochs", "must be > 0")
    for k in ("tau", "tau_tilde", "query_every"):
        _check(getattr(lo, k) >= 0, f"local.{k}", "must be >= 0 (0 = derive from data)")
    for k in ("depth", "width"):
        _check(getattr(cfg.sketch, k) >= 1, f"sketch.{k}", "must be >= 1")
    _check(cfg.threshold.theta_min > 0, "threshold.theta_min", "must be > 0")
    _check(cfg.baseline.epochs >= 0, "baseline.epochs", "must be >= 0")
    _check(cfg.baseline.learning_rate > 0, "baseline.learning_rate", "must be > 0")
    _check(len(cfg.grid.client_lrs) > 0 and all(v > 0 for v in cfg.grid.client_lrs), "grid.client_lrs", "nonempty, positive")
    _check(len(cfg.grid.server_lrs) > 0 and all(v > 0 for v in cfg.grid.server_lrs), "grid.server_lrs", "nonempty, positive")
    _check(len(cfg.sweep.tau_epochs) > 0 and all(v > 0 for v in cfg.sweep.tau_epochs), "sweep.tau_epochs", "nonempty, positive")
    _check(len(cfg.sweep.seeds) > 0 and all(v >= 0 for v in cfg.sweep.seeds), "sweep.seeds", "nonempty, non-negative")
    _check(0 < cfg.sweep.target_fraction <= 1, "sweep.target_fraction", "must lie in (0, 1]")


def from_dict(doc: dict) -> ExperimentConfig:
    sections = {}
    for name, body in doc.items():
        if name not in SECTIONS:
            raise ConfigError(name, "unknown section")
        if not isinstance(body, dict):
            raise ConfigError(name, "expected a table")
        cls = SECTIONS[name]
        defaults = cls()
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in body.items():
            if key not in known:
                raise ConfigError(f"{name}.{key}", "unknown key")
            kwargs[key] = _coerce(f"{name}.{key}", value, getattr(defaults, key))
        sections[name] = cls(**kwargs)
    cfg = ExperimentConfig(**sections)
    _validate(cfg)
    return cfg


def to_dict(cfg: ExperimentConfig) -> dict:
    return {name: dataclasses.asdict(getattr(cfg, name)) for name in SECTIONS}


def parse_config(text: str) -> ExperimentConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<document>", str(exc)) from exc
    return from_dict(doc)


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("<document>", f"{path}: {exc}") from exc
    return from_dict(doc)


def serialize_config(cfg: ExperimentConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))


def parse_override(assignment: str) -> tuple[str, Any]:
    """``section.key=value`` with a TOML literal value; bare words are strings."""
    key, sep, raw = assignment.partition("=")
    key = key.strip()
    if not sep or "." not in key:
        raise ConfigError(key or assignment, "override must look like section.key=value")
    raw = raw.strip()
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key, value
