"""The federated round loop.

``FedOpt`` rounds run a fixed ``tau`` local steps. ``FDAOpt`` rounds run up
to ``tau_tilde`` steps in lockstep and, at every query step, average the
clients' local states, estimate the model variance and stop everyone once
the estimate exceeds the current threshold. Both end the same way: the
negated mean drift is handed to the server optimizer as a pseudo-gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from . import optim
from .data import BatchStream, CohortSpec, Dataset, FederatedDataset, mean_shard_size, sample_cohort
from .models import ModelSpec, evaluate, init_params, loss_and_grad
from .optim import OptimizerSpec, OptKind
from .params import NonFiniteError, check_finite
from .seeding import derive_rng
from .sketch import SketchConfig, sketch_bytes
from .variance import (
    DEFAULT_THETA_MIN,
    GlobalState,
    aggregate,
    estimate_variance,
    exact_variance,
    extend_tau,
    local_state,
    query_indices,
    threshold_adjust,
)

FLOAT_BYTES = 8


class Algorithm(str, Enum):
    FEDOPT = "FedOpt"
    FDAOPT = "FDAOpt"


@dataclass(frozen=True)
class EngineConfig:
    algorithm: Algorithm = Algorithm.FEDOPT
    client_opt: OptimizerSpec = OptimizerSpec(OptKind.SGD, learning_rate=0.1)
    server_opt: OptimizerSpec = optim.FEDAVG_SERVER
    rounds: int = 100
    # None -> derived from the data: tau = ceil(e), tau_tilde = 2 tau + 8 ceil(e),
    # query every ceil(e) steps
    tau: Optional[int] = None
    tau_tilde: Optional[int] = None
    query_every: Optional[int] = None
    batch_size: int = 8
    sketch: SketchConfig = SketchConfig()
    cohort: CohortSpec = CohortSpec()
    seed: int = 0
    weighted: bool = False
    theta_min: float = DEFAULT_THETA_MIN
    # pin the threshold to a constant in every round (testing / ablation)
    theta_override: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        for name in ("tau", "tau_tilde", "query_every"):
            val = getattr(self, name)
            if val is not None and val < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class RoundRecord:
    round: int
    cohort: list[int]
    s_t: int
    exact_var: float
    theta: float
    train_loss: float
    eval_loss: float
    eval_accuracy: float
    bytes_up: int
    bytes_down: int
    wall_steps: int
    queries: list[tuple[int, float]] = field(default_factory=list)
    status: str = "ok"

    @property
    def n_queries(self) -> int:
        return len(self.queries)


def communication_bytes(
    d: int, cohort_size: int, n_queries: int = 0, sketch_config: Optional[SketchConfig] = None
) -> tuple[int, int]:
    """Bytes (up, down) for one round.

    Model broadcast and drift upload cost ``cohort * d * 8`` each way. Every
    executed variance query adds, per client, one float plus one sketch up
    and one float (the estimate) down.
    """
    model = cohort_size * d * FLOAT_BYTES
    up, down = model, model
    if n_queries:
        if sketch_config is None:
            raise ValueError("queries were executed but no sketch config was given")
        up += n_queries * cohort_size * (FLOAT_BYTES + sketch_bytes(sketch_config))
        down += n_queries * cohort_size * FLOAT_BYTES
    return up, down


Estimator = Callable[[GlobalState], float]


class _Client:
    __slots__ = ("k", "w", "state", "stream")

    def __init__(self, k, w, state, stream):
        self.k = k
        self.w = w
        self.state = state
        self.stream = stream


class Simulator:
    """Holds the server side of a run: global model, server optimizer state, threshold.

    ``eval_data`` defaults to the pooled client data; ``train_data`` (for the
    reported training loss) likewise. ``estimator`` maps the aggregated
    global state to a variance estimate and can be swapped for a test double.
    """

    def __init__(
        self,
        config: EngineConfig,
        fd: FederatedDataset,
        model_spec: ModelSpec,
        eval_data: Optional[Dataset] = None,
        train_data: Optional[Dataset] = None,
        estimator: Optional[Estimator] = None,
        w0: Optional[np.ndarray] = None,
    ):
        if model_spec.input_dim != fd.input_dim or model_spec.num_classes != fd.num_classes:
            raise ValueError("model dimensions do not match the federated dataset")
        self.config = config
        self.fd = fd
        self.model_spec = model_spec
        self.train_data = train_data if train_data is not None else fd.pooled()
        self.eval_data = eval_data if eval_data is not None else self.train_data
        self.estimator = estimator or estimate_variance

        self.e_steps = mean_shard_size(fd, config.batch_size)
        ce = math.ceil(self.e_steps)
        self.tau = config.tau if config.tau is not None else ce
        self.tau_tilde = config.tau_tilde if config.tau_tilde is not None else extend_tau(self.tau, self.e_steps)
        self.query_every = config.query_every if config.query_every is not None else ce

        self.w = init_params(model_spec) if w0 is None else np.array(w0, dtype=np.float64)
        self.d = self.w.size
        self.server_state = optim.init_state(config.server_opt, self.d)
        self.theta = -math.inf
        self.wall_steps = 0

    # -- helpers --------------------------------------------------------

    def _start_clients(self, w_t: np.ndarray, cohort: Sequence[int], t: int) -> list[_Client]:
        clients = []
        for k in cohort:
            epoch_seed = int(derive_rng(self.config.seed, "batch", t, k).integers(2**63 - 1))
            stream = BatchStream(self.fd.shards[k], epoch_seed, self.config.batch_size)
            clients.append(_Client(k, w_t.copy(), optim.init_state(self.config.client_opt, self.d), stream))
        return clients

    def _local_step(self, c: _Client) -> None:
        _, g = loss_and_grad(self.model_spec, c.w, next(c.stream))
        c.w, c.state = optim.step(self.config.client_opt, c.state, c.w, g)

    def _finish(self, w_t, clients, t, s_t, theta, queries):
        deltas = [c.w - w_t for c in clients]
        if self.config.weighted:
            sizes = np.array([len(self.fd.shards[c.k]) for c in clients], dtype=np.float64)
            mean_delta = np.zeros_like(w_t)
            for wt, dl in zip(sizes / sizes.sum(), deltas):
                mean_delta += wt * dl
        else:
            mean_delta = deltas[0].copy()
            for dl in deltas[1:]:
                mean_delta += dl
            mean_delta /= len(deltas)
        pseudo_grad = -mean_delta
        var_t = exact_variance(deltas)
        w_next, self.server_state = optim.step(self.config.server_opt, self.server_state, w_t, pseudo_grad)
        check_finite(w_next, "global model")

        self.wall_steps += s_t
        sk = self.config.sketch if queries else None
        up, down = communication_bytes(self.d, len(clients), len(queries), sk)
        train_loss, _ = evaluate(self.model_spec, w_next, self.train_data)
        eval_loss, eval_acc = evaluate(self.model_spec, w_next, self.eval_data)
        rec = RoundRecord(
            round=t,
            cohort=[c.k for c in clients],
            s_t=s_t,
            exact_var=var_t,
            theta=theta,
            train_loss=train_loss,
            eval_loss=eval_loss,
            eval_accuracy=eval_acc,
            bytes_up=up,
            bytes_down=down,
            wall_steps=self.wall_steps,
            queries=queries,
        )
        return w_next, var_t, rec

    # -- rounds ---------------------------------------------------------

    def run_round_fedopt(self, w_t: np.ndarray, cohort: Sequence[int], t: int):
        clients = self._start_clients(w_t, cohort, t)
        for c in clients:
            for _ in range(self.tau):
                self._local_step(c)
        w_next, _, rec = self._finish(w_t, clients, t, self.tau, math.nan, [])
        return w_next, rec

    def run_round_fdaopt(self, w_t: np.ndarray, cohort: Sequence[int], theta_t: float, t: int):
        """One variance-monitored round; returns ``(w_next, theta_next, record)``.

        With no violation before ``tau_tilde`` the round runs to the end and
        ``s_t = tau_tilde``.
        """
        clients = self._start_clients(w_t, cohort, t)
        q_steps = set(query_indices(self.query_every, self.tau_tilde))
        queries: list[tuple[int, float]] = []
        s_t = self.tau_tilde
        for i in range(1, self.tau_tilde + 1):
            for c in clients:
                self._local_step(c)
            if i in q_steps:
                states = [local_state(self.config.sketch, c.w - w_t) for c in clients]
                nu = float(self.estimator(aggregate(states)))
                queries.append((i, nu))
                if nu > theta_t:
                    s_t = i
                    break
        w_next, var_t, rec = self._finish(w_t, clients, t, s_t, theta_t, queries)
        if self.config.theta_override is not None:
            theta_next = self.config.theta_override
        else:
            theta_next = threshold_adjust(var_t, s_t, self.tau_tilde, self.config.theta_min)
        return w_next, theta_next, rec

    def run_round(self, t: int) -> RoundRecord:
        cohort = sample_cohort(self.fd.num_clients, self.config.cohort, t)
        if self.config.algorithm is Algorithm.FEDOPT:
            self.w, rec = self.run_round_fedopt(self.w, cohort, t)
        else:
            theta = self.theta if self.config.theta_override is None else self.config.theta_override
            self.w, self.theta, rec = self.run_round_fdaopt(self.w, cohort, theta, t)
        return rec

    def run(
        self, rounds: Optional[int] = None, stop: Optional[Callable[[RoundRecord], bool]] = None
    ) -> list[RoundRecord]:
        """Run ``rounds`` (default: config.rounds) rounds, or until ``stop(record)`` is true.

        A non-finite model ends the run early with a ``diverged`` record;
        earlier records are kept.
        """
        history: list[RoundRecord] = []
        T = self.config.rounds if rounds is None else rounds
        for t in range(T):
            try:
                rec = self.run_round(t)
            except NonFiniteError:
                history.append(_diverged_record(t, self.wall_steps))
                break
            history.append(rec)
            if stop is not None and stop(rec):
                break
        return history


def _diverged_record(t: int, wall_steps: int) -> RoundRecord:
    nan = math.nan
    return RoundRecord(t, [], 0, nan, nan, nan, nan, 0.0, 0, 0, wall_steps, status="diverged")


@dataclass
class TrainingResult:
    history: list[RoundRecord]
    w: np.ndarray
    simulator: Simulator


def run_training(
    config: EngineConfig,
    fd: FederatedDataset,
    model_spec: ModelSpec,
    eval_data: Optional[Dataset] = None,
    train_data: Optional[Dataset] = None,
    estimator: Optional[Estimator] = None,
    stop: Optional[Callable[[RoundRecord], bool]] = None,
) -> TrainingResult:
    sim = Simulator(config, fd, model_spec, eval_data=eval_data, train_data=train_data, estimator=estimator)
    history = sim.run(stop=stop)
    return TrainingResult(history, sim.w, sim)
