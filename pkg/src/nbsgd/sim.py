"""Discrete-event simulation of blocking and non-blocking parallel SGD.

Simulated time is virtual: each iteration draws mini-batch durations from a
:class:`~nbsgd.runtime.DelayModel`, decides how many mini-batches every worker
finishes before the barrier, and then applies the scheme's synchronization.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .optim import (
    SCALINGS,
    GradientAccumulator,
    Problem,
    accumulate,
    finalize_update,
    loss,
    sample_mean_gradient,
)
from .runtime import DelayModel, iterations_per_epoch
from .topology import MixingMatrix, Topology, metropolis_weights, sample_active_topology

SCHEMES = ("sync_centralized", "async_centralized", "ring_allreduce", "dpsgd", "matcha")
DIVERGENCE_LOSS = 1e12


class DivergenceError(RuntimeError):
    def __init__(self, message: str, record: "IterationRecord"):
        super().__init__(message)
        self.record = record


@dataclass(frozen=True)
class AlgorithmSpec:
    scheme: str = "dpsgd"
    mode: str = "nonblocking"
    N: int = 4
    B: int = 32
    eta: float = 0.1
    lr_decay_epochs: tuple[int, ...] = ()
    lr_decay_factor: float = 0.1
    scaling: str = "proportional"
    abandonment: str = "immediate"
    shuffle: bool = True
    budget_cb: float = 1.0
    comm_cost: float = 0.0
    # mix_then_step: mix neighbours' models, then apply the gradient taken at the
    # pre-mix local model. step_then_mix: local step first, then mix the results.
    dpsgd_order: str = "mix_then_step"

    def __post_init__(self):
        object.__setattr__(self, "lr_decay_epochs", tuple(int(e) for e in self.lr_decay_epochs))
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.mode not in ("blocking", "nonblocking"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.scheme == "async_centralized" and self.mode != "blocking":
            raise ValueError("async_centralized has no barrier and only supports mode=blocking")
        if self.N < 1 or self.B < 1:
            raise ValueError("N and B must be >= 1")
        if self.B % self.N:
            raise ValueError(f"batch size B={self.B} is not divisible by N={self.N}")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if not 0 < self.lr_decay_factor <= 1:
            raise ValueError("lr_decay_factor must lie in (0, 1]")
        if self.scaling not in SCALINGS:
            raise ValueError(f"unknown scaling {self.scaling!r}")
        if self.abandonment not in ("immediate", "finish_current"):
            raise ValueError(f"unknown abandonment {self.abandonment!r}")
        if not 0 < self.budget_cb <= 1:
            raise ValueError("budget_cb must lie in (0, 1]")
        if self.comm_cost < 0:
            raise ValueError("comm_cost must be nonnegative")
        if self.dpsgd_order not in ("mix_then_step", "step_then_mix"):
            raise ValueError(f"unknown dpsgd_order {self.dpsgd_order!r}")

    @property
    def b(self) -> int:
        return self.B // self.N

    def lr(self, epoch: int) -> float:
        passed = sum(1 for e in self.lr_decay_epochs if epoch >= e)
        return self.eta * self.lr_decay_factor**passed


@dataclass
class WorkerState:
    id: int
    params: np.ndarray
    shard: np.ndarray
    order: np.ndarray
    acc: GradientAccumulator
    cursor: int = 0
    local_clock: float = 0.0
    trained_count: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.trained_count is None:
            self.trained_count = np.zeros(len(self.shard), dtype=np.int64)

    def next_batch(self, B: int) -> np.ndarray:
        """Shard positions of the next B samples in scan order, wrapping at the end."""
        size = len(self.order)
        pos = self.order[(self.cursor + np.arange(B)) % size]
        self.cursor = (self.cursor + B) % size
        return pos


@dataclass
class IterationRecord:
    k: int
    sim_time: float
    per_worker_finished: list[int]
    abandoned_minibatches: int
    loss_global: float
    grad_norm_sq: float
    consensus_dist: float
    samples_processed: float
    staleness_max: int = 0

    def row(self) -> dict:
        return {
            "k": self.k,
            "sim_time": self.sim_time,
            "loss": self.loss_global,
            "grad_norm_sq": self.grad_norm_sq,
            "consensus_dist": self.consensus_dist,
            "samples_processed": self.samples_processed,
            "abandoned": self.abandoned_minibatches,
            "min_n": min(self.per_worker_finished),
            "max_n": max(self.per_worker_finished),
            "staleness_max": self.staleness_max,
        }


TRACE_COLUMNS = tuple(IterationRecord(0, 0.0, [0], 0, 0.0, 0.0, 0.0, 0.0).row())


@dataclass
class Cluster:
    """Everything one simulated run mutates."""

    problem: Problem
    spec: AlgorithmSpec
    delay: DelayModel
    workers: list[WorkerState]
    topology: Topology | None = None
    delay_rng: np.random.Generator = None
    topology_rng: np.random.Generator = None
    shuffle_rng: np.random.Generator = None
    sim_time: float = 0.0
    k: int = 0
    epoch: int = 0
    mixing: MixingMatrix | None = None

    @property
    def P(self) -> int:
        return len(self.workers)

    def stacked(self) -> np.ndarray:
        return np.stack([w.params for w in self.workers])

    def average_model(self) -> np.ndarray:
        return self.stacked().mean(axis=0)


def make_cluster(problem: Problem, spec: AlgorithmSpec, delay: DelayModel, P: int, *,
                 topology: Topology | None = None, init_seed: int = 0,
                 shuffle_seed: int = 0, topology_seed: int = 0,
                 init_scale: float = 0.01) -> Cluster:
    """Split the data into P equal contiguous shards and give every worker the same init."""
    if problem.m % P:
        raise ValueError(f"m={problem.m} samples cannot be split into {P} equal shards")
    if spec.B * P > problem.m:
        raise ValueError(f"B*P = {spec.B * P} exceeds the {problem.m} available samples")
    if spec.scheme in ("dpsgd", "matcha"):
        if topology is None:
            raise ValueError(f"scheme {spec.scheme} needs a topology")
        if topology.num_workers != P:
            raise ValueError(f"topology has {topology.num_workers} nodes for {P} workers")
    shuffle_rng = np.random.default_rng(shuffle_seed)
    x0 = init_scale * np.random.default_rng(init_seed).standard_normal(problem.d)
    size = problem.m // P
    workers = []
    for i in range(P):
        order = shuffle_rng.permutation(size) if spec.shuffle else np.arange(size)
        workers.append(WorkerState(
            id=i,
            params=x0.copy(),
            shard=np.arange(i * size, (i + 1) * size),
            order=order,
            acc=GradientAccumulator.empty(problem.d, spec.N),
        ))
    mixing = None
    if spec.scheme == "dpsgd":
        mixing = metropolis_weights(topology)
    return Cluster(problem, spec, delay, workers, topology,
                   delay_rng=np.random.default_rng(delay.seed),
                   topology_rng=np.random.default_rng(topology_seed),
                   shuffle_rng=shuffle_rng, mixing=mixing)


def compute_phase(durations: np.ndarray, mode: str,
                  abandonment: str = "immediate") -> tuple[np.ndarray, float]:
    """Finished mini-batch counts per worker and the compute-phase length.

    ``durations`` has shape (P, N). In non-blocking mode the first worker to
    finish all N mini-batches signals at t1. Under ``finish_current`` the
    mini-batch in flight at t1 (including one starting exactly at t1) still
    completes, while ``immediate`` discards it.
    """
    done = np.cumsum(durations, axis=1)
    P, N = done.shape
    if mode == "blocking":
        return np.full(P, N), float(done[:, -1].max())
    t1 = float(done[:, -1].min())
    n = (done <= t1).sum(axis=1)
    if abandonment == "immediate":
        return n, t1
    rows = np.arange(P)
    prev_end = np.where(n > 0, done[rows, np.maximum(n - 1, 0)], 0.0)
    n = n + ((n < N) & (prev_end <= t1))
    return n, float(done[rows, n - 1].max())


def _metrics(cluster: Cluster, X: np.ndarray, n: np.ndarray, phase_time: float,
             staleness: int = 0) -> IterationRecord:
    xbar = X.mean(axis=0)
    g = sample_mean_gradient(cluster.problem, xbar)
    rec = IterationRecord(
        k=cluster.k,
        sim_time=cluster.sim_time,
        per_worker_finished=[int(v) for v in n],
        abandoned_minibatches=int(np.sum(cluster.spec.N - n)) if cluster.spec.mode == "nonblocking" else 0,
        loss_global=loss(cluster.problem, xbar),
        grad_norm_sq=float(g @ g),
        consensus_dist=float(np.linalg.norm(X - xbar, axis=1).max()),
        samples_processed=float(np.sum(n) * cluster.spec.b),
        staleness_max=staleness,
    )
    if not np.all(np.isfinite(X)) or not np.isfinite(rec.loss_global) or rec.loss_global > DIVERGENCE_LOSS:
        raise DivergenceError(f"diverged at iteration {cluster.k}: loss={rec.loss_global!r}", rec)
    return rec


def _accumulate_worker(cluster: Cluster, w: WorkerState, n_done: int) -> None:
    spec = cluster.spec
    b = spec.b
    pos = w.next_batch(spec.B)
    w.acc = GradientAccumulator.empty(cluster.problem.d, spec.N)
    for j in range(n_done):
        mb = pos[j * b:(j + 1) * b]
        accumulate(w.acc, sample_mean_gradient(cluster.problem, w.params, w.shard[mb]))
        w.trained_count[mb] += 1


def _mixing_for_iteration(cluster: Cluster) -> MixingMatrix:
    if cluster.spec.scheme == "dpsgd":
        return cluster.mixing
    active = sample_active_topology(cluster.topology, cluster.spec.budget_cb, cluster.topology_rng)
    return metropolis_weights(active, allow_disconnected=True)


def _synchronize(cluster: Cluster) -> None:
    spec = cluster.spec
    eta = spec.lr(cluster.epoch)
    ws = cluster.workers

    def step(x_base, w):
        return finalize_update(x_base, w.acc, eta, spec.scaling)

    if spec.scheme in ("sync_centralized", "ring_allreduce"):
        # Server update averages the per-worker steps; ring all-reduce averages
        # locally updated models. With equal starting models both reduce to this.
        new = np.mean([step(w.params, w) for w in ws], axis=0)
        for w in ws:
            w.params = new.copy()
        return
    W = _mixing_for_iteration(cluster).weights
    X = cluster.stacked()
    if spec.dpsgd_order == "mix_then_step":
        half = W @ X
        new = [step(half[i], w) for i, w in enumerate(ws)]
    else:
        stepped = np.stack([step(w.params, w) for w in ws])
        new = list(W @ stepped)
    for w, x in zip(ws, new):
        w.params = np.asarray(x, dtype=float)


def _run_iteration(cluster: Cluster, mode: str) -> IterationRecord:
    spec = cluster.spec
    durations = cluster.delay.draw(cluster.delay_rng, cluster.P, spec.N)
    n, phase = compute_phase(durations, mode, spec.abandonment)
    for w, n_i in zip(cluster.workers, n):
        _accumulate_worker(cluster, w, int(n_i))
    _synchronize(cluster)
    cluster.sim_time += phase + spec.comm_cost
    for w in cluster.workers:
        w.local_clock = cluster.sim_time
    rec = _metrics(cluster, cluster.stacked(), n, phase)
    cluster.k += 1
    return rec


def run_iteration_nonblocking(cluster: Cluster) -> IterationRecord:
    return _run_iteration(cluster, "nonblocking")


def run_iteration_blocking(cluster: Cluster) -> IterationRecord:
    return _run_iteration(cluster, "blocking")


def run_iteration(cluster: Cluster) -> IterationRecord:
    return _run_iteration(cluster, cluster.spec.mode)


def end_of_epoch(cluster: Cluster) -> None:
    """Reset every worker's scan cursor, re-permuting the shard when shuffling."""
    for w in cluster.workers:
        if cluster.spec.shuffle:
            w.order = cluster.shuffle_rng.permutation(len(w.shard))
        w.cursor = 0
    cluster.epoch += 1


def run_async_centralized(cluster: Cluster, horizon: int) -> list[IterationRecord]:
    """Parameter server applying each pushed batch gradient as soon as it lands.

    Staleness is the number of server updates between a worker's pull and its
    push. Simultaneous pushes are applied in the order they were scheduled.
    """
    spec, P, N = cluster.spec, cluster.P, cluster.spec.N
    ipe = iterations_per_epoch(cluster.problem.m, P, spec.B)
    server = cluster.average_model()
    version = 0
    batches_done = [0] * P
    pulled_version = [0] * P
    queue: list[tuple[float, int, int]] = []
    seq = 0

    def schedule(i: int, start: float) -> None:
        nonlocal seq
        dur = float(cluster.delay.draw(cluster.delay_rng, P, N)[i].sum())
        heapq.heappush(queue, (start + dur, seq, i))
        seq += 1

    for w in cluster.workers:
        w.params = server.copy()
        schedule(w.id, cluster.sim_time)

    records = []
    while len(records) < horizon:
        t, _, i = heapq.heappop(queue)
        w = cluster.workers[i]
        _accumulate_worker(cluster, w, N)
        epoch = version // (P * ipe)
        server = finalize_update(server, w.acc, spec.lr(epoch), spec.scaling)
        staleness = version - pulled_version[i]
        version += 1
        cluster.sim_time = t
        w.local_clock = t
        w.params = server.copy()
        pulled_version[i] = version
        batches_done[i] += 1
        if batches_done[i] % ipe == 0:
            if spec.shuffle:
                w.order = cluster.shuffle_rng.permutation(len(w.shard))
            w.cursor = 0
        n = np.zeros(P, dtype=int)
        n[i] = N
        X = cluster.stacked()
        X[i] = server
        rec = _metrics(cluster, X, n, 0.0, staleness)
        rec.loss_global = loss(cluster.problem, server)
        g = sample_mean_gradient(cluster.problem, server)
        rec.grad_norm_sq = float(g @ g)
        records.append(rec)
        cluster.k += 1
        schedule(i, t)
    cluster.epoch = version // (P * ipe)
    return records

