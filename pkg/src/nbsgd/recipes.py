"""Desk-scale experiment recipes on synthetic problems.

The lr schedule mirrors the "decay by 10 at fixed epochs" pattern with the
decay points placed at fractions of the configured horizon.
"""

from __future__ import annotations

from .config import (
    AlgorithmConfig,
    DelayConfig,
    ExperimentConfig,
    OutputConfig,
    ProblemConfig,
    Seeds,
    TopologyConfig,
)
from .runtime import iterations_per_epoch

BASE_TOPOLOGY = TopologyConfig(kind="erdos_renyi", p=0.35)


def seeds(seed: int) -> Seeds:
    return Seeds(data=seed, delays=1000 + seed, topology=2000 + seed, init=3000 + seed,
                 shuffle=4000 + seed)


def decay_epochs(iterations: int, m: int, P: int, B: int, fractions) -> list[int]:
    epochs = iterations // iterations_per_epoch(m, P, B)
    return [max(1, int(epochs * f)) for f in fractions]


def convergence(iterations: int, seed: int = 0, *, mode: str = "nonblocking") -> ExperimentConfig:
    """Non-blocking D-PSGD on ridge least squares (d=20, m=2048, P=8) with four x10 decays."""
    m, P, B = 2048, 8, 32
    return ExperimentConfig(
        seeds=seeds(seed),
        problem=ProblemConfig(kind="least_squares", m=m, d=20, l2_reg=1e-3, noise=0.01),
        workers=P,
        algorithm=AlgorithmConfig(
            scheme="dpsgd", mode=mode, N=4, B=B, eta=0.1,
            lr_decay_epochs=decay_epochs(iterations, m, P, B, (0.4, 0.6, 0.8, 0.9)),
        ),
        delay=DelayConfig(kind="exponential", rate=1.0),
        topology=BASE_TOPOLOGY,
        iterations=iterations,
        output=OutputConfig(name=f"convergence_{mode}_K{iterations}_s{seed}"),
    )


def heterogeneous(mode: str, seed: int = 0, *, scaling: str = "none", scheme: str = "dpsgd",
                  iterations: int = 600) -> ExperimentConfig:
    """Per-iteration uniform(1, 2) slowdowns on a deterministic unit mini-batch time."""
    return ExperimentConfig(
        seeds=seeds(seed),
        problem=ProblemConfig(kind="least_squares", m=2048, d=20, l2_reg=1e-3, noise=0.1),
        workers=8,
        algorithm=AlgorithmConfig(scheme=scheme, mode=mode, N=4, B=32, eta=0.05, scaling=scaling,
                                  budget_cb=0.5 if scheme == "matcha" else 1.0),
        delay=DelayConfig(kind="deterministic", base=1.0, slowdown="resampled_uniform", lo=1.0, hi=2.0),
        topology=BASE_TOPOLOGY,
        iterations=iterations,
        output=OutputConfig(name=f"hetero_{scheme}_{mode}_{scaling}_s{seed}"),
    )


def exponential_batches(mode: str, iterations: int = 10_000, seed: int = 0, P: int = 8) -> ExperimentConfig:
    """Whole-batch times i.i.d. Exp(1), spread evenly over N=4 mini-batches."""
    return ExperimentConfig(
        seeds=seeds(seed),
        problem=ProblemConfig(kind="least_squares", m=32 * P, d=5, l2_reg=1e-3),
        workers=P,
        algorithm=AlgorithmConfig(scheme="dpsgd", mode=mode, N=4, B=32, eta=0.05),
        delay=DelayConfig(kind="exponential", rate=1.0, granularity="batch"),
        topology=BASE_TOPOLOGY,
        iterations=iterations,
        output=OutputConfig(name=f"expbatch_{mode}_s{seed}"),
    )


def shuffling(shuffle: bool, epochs: int = 50, seed: int = 0) -> ExperimentConfig:
    """Two workers; worker 1 is 10% slower and always abandons its last mini-batch."""
    return ExperimentConfig(
        seeds=seeds(seed),
        problem=ProblemConfig(kind="least_squares", m=256, d=5, l2_reg=1e-3),
        workers=2,
        algorithm=AlgorithmConfig(scheme="ring_allreduce", mode="nonblocking", N=4, B=32, eta=0.05,
                                  shuffle=shuffle),
        delay=DelayConfig(kind="deterministic", base=1.0, slowdown="fixed", factors=[1.0, 1.1]),
        topology=BASE_TOPOLOGY,
        epochs=epochs,
        output=OutputConfig(name=f"shuffle_{str(shuffle).lower()}"),
    )
