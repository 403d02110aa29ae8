"""Build a simulated run from an :class:`ExperimentConfig`, execute it, export metrics."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, resolve
from .optim import Problem, load_problem_csv, loss, make_problem
from .runtime import DelayModel, iterations_per_epoch
from .sim import (
    TRACE_COLUMNS,
    AlgorithmSpec,
    Cluster,
    DivergenceError,
    IterationRecord,
    end_of_epoch,
    make_cluster,
    run_async_centralized,
    run_iteration,
)
from .topology import Topology, build_graph, load_edge_list

OUT_DIR_ENV = "NBSGD_OUT_DIR"


@dataclass
class RunResult:
    records: list[IterationRecord]
    initial_model: np.ndarray
    final_models: np.ndarray
    initial_loss: float
    cluster: Cluster
    diverged: bool = False

    @property
    def average_model(self) -> np.ndarray:
        return self.final_models.mean(axis=0)

    def summary(self) -> dict:
        ws = self.cluster.workers
        abandoned = [0] * len(ws)
        if self.cluster.spec.mode == "nonblocking":
            N = self.cluster.spec.N
            for r in self.records:
                for i, n in enumerate(r.per_worker_finished):
                    abandoned[i] += N - n
        last = self.records[-1] if self.records else None
        return {
            "iterations": len(self.records),
            "final_loss": last.loss_global if last else self.initial_loss,
            "final_grad_norm_sq": last.grad_norm_sq if last else None,
            "final_consensus_dist": last.consensus_dist if last else 0.0,
            "total_sim_time": last.sim_time if last else 0.0,
            "per_worker_abandoned": abandoned,
            "optimum_value": self.cluster.problem.optimum_value,
            "diverged": self.diverged,
        }


def build_problem(cfg: ExperimentConfig, base_dir: Path | None = None) -> Problem:
    p = cfg.problem
    if p.csv is not None:
        return load_problem_csv(resolve(p.csv, base_dir), p.kind, p.l2_reg)
    return make_problem(p.kind, p.m, p.d, l2_reg=p.l2_reg, noise=p.noise, seed=cfg.seeds.data)


def build_spec(cfg: ExperimentConfig) -> AlgorithmSpec:
    a = cfg.algorithm
    return AlgorithmSpec(
        scheme=a.scheme, mode=a.mode, N=a.N, B=a.B, eta=a.eta,
        lr_decay_epochs=tuple(a.lr_decay_epochs), lr_decay_factor=a.lr_decay_factor,
        scaling=a.scaling, abandonment=a.abandonment, shuffle=a.shuffle,
        budget_cb=a.budget_cb, comm_cost=a.comm_cost, dpsgd_order=a.dpsgd_order,
    )


def build_delay(cfg: ExperimentConfig) -> DelayModel:
    d = cfg.delay
    return DelayModel(kind=d.kind, rate=d.rate, base=d.base, shift=d.shift,
                      slowdown=d.slowdown, factors=tuple(d.factors), lo=d.lo, hi=d.hi,
                      granularity=d.granularity, seed=cfg.seeds.delays)


def build_topology(cfg: ExperimentConfig, base_dir: Path | None = None) -> Topology | None:
    if cfg.algorithm.scheme not in ("dpsgd", "matcha"):
        return None
    t = cfg.topology
    edges = None
    if t.kind == "edge_list":
        if t.edges_path is None:
            raise ValueError("topology.edges_path is required for edge_list topologies")
        edges = load_edge_list(resolve(t.edges_path, base_dir))
    return build_graph(t.kind, cfg.workers, p=t.p, seed=cfg.seeds.topology, edges=edges)


def prepare(cfg: ExperimentConfig, base_dir: Path | None = None) -> Cluster:
    problem = build_problem(cfg, base_dir)
    spec = build_spec(cfg)
    return make_cluster(problem, spec, build_delay(cfg), cfg.workers,
                        topology=build_topology(cfg, base_dir),
                        init_seed=cfg.seeds.init, shuffle_seed=cfg.seeds.shuffle,
                        topology_seed=cfg.seeds.topology)


def horizon(cfg: ExperimentConfig, cluster: Cluster) -> int:
    if cfg.iterations is not None:
        return cfg.iterations
    return cfg.epochs * iterations_per_epoch(cluster.problem.m, cluster.P, cluster.spec.B)


def run_experiment(cfg: ExperimentConfig, base_dir: Path | None = None, *,
                   raise_on_divergence: bool = True) -> RunResult:
    """Run K iterations with epoch boundaries and step lr decay.

    On divergence (non-finite or > 1e12 loss) raises :class:`DivergenceError`
    unless ``raise_on_divergence`` is False, in which case the trace stops at
    the diverging record and the result is flagged.
    """
    cluster = prepare(cfg, base_dir)
    K = horizon(cfg, cluster)
    x0 = cluster.workers[0].params.copy()  # every worker starts here
    result = RunResult([], x0, cluster.stacked(), loss(cluster.problem, x0), cluster)
    ipe = iterations_per_epoch(cluster.problem.m, cluster.P, cluster.spec.B)
    try:
        if cluster.spec.scheme == "async_centralized":
            result.records = run_async_centralized(cluster, K)
        else:
            for k in range(K):
                result.records.append(run_iteration(cluster))
                if (k + 1) % ipe == 0:
                    end_of_epoch(cluster)
    except DivergenceError as exc:
        result.records.append(exc.record)
        result.diverged = True
        if raise_on_divergence:
            exc.result = result
            raise
    result.final_models = cluster.stacked()
    return result


def out_dir(cfg: ExperimentConfig, base_dir: Path | None = None) -> Path:
    env = os.environ.get(OUT_DIR_ENV)
    if env:
        return Path(env)
    return resolve(cfg.output.dir, base_dir)


def fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def write_trace(records: list[IterationRecord], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for r in records:
            row = r.row()
            writer.writerow([fmt(row[c]) for c in TRACE_COLUMNS])


def write_summary(result: RunResult, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(result.summary(), indent=2, sort_keys=True) + "\n")


def write_outputs(result: RunResult, cfg: ExperimentConfig, base_dir: Path | None = None) -> tuple[Path, Path]:
    directory = out_dir(cfg, base_dir)
    trace = directory / f"{cfg.output.name}_trace.csv"
    summary = directory / f"{cfg.output.name}_summary.json"
    write_trace(result.records, trace)
    write_summary(result, summary)
    return trace, summary


def time_to_target(times, losses, target: float, start: tuple[float, float] | None = None) -> float | None:
    """First simulated time the loss reaches ``target``, linearly interpolated.

    ``start`` is an optional (time, loss) point preceding the trace.
    """
    t = list(times)
    f = list(losses)
    if start is not None:
        t.insert(0, start[0])
        f.insert(0, start[1])
    for i, (ti, fi) in enumerate(zip(t, f)):
        if fi <= target:
            if i == 0:
                return float(ti)
            t0, f0 = t[i - 1], f[i - 1]
            return float(t0 + (f0 - target) / (f0 - fi) * (ti - t0))
    return None
