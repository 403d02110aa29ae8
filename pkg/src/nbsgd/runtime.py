"""Expected run-time, epoch-time and throughput under random compute delays.

Closed forms assume i.i.d. exponential whole-batch times per worker; the
Monte Carlo estimators work for any :class:`DelayModel`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

# Above this the alternating binomial sum is rejected (see expected_max_exp).
MAX_WORKERS = 60


class RangeError(ValueError):
    pass


@dataclass(frozen=True)
class DelayModel:
    """Per-mini-batch compute-time generator with per-worker slowdown.

    ``granularity="batch"`` draws one time per worker per iteration and spreads
    it evenly over the N mini-batches (constant speed within an iteration), so
    the whole-batch time follows ``kind``. ``"minibatch"`` draws every
    mini-batch independently.
    """

    kind: str = "exponential"
    rate: float = 1.0
    base: float = 1.0
    shift: float = 0.0
    slowdown: str = "none"
    factors: tuple[float, ...] = ()
    lo: float = 1.0
    hi: float = 2.0
    granularity: str = "minibatch"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("exponential", "deterministic", "shifted_exponential"):
            raise ValueError(f"unknown delay kind {self.kind!r}")
        if self.kind != "deterministic" and self.rate <= 0:
            raise ValueError("rate must be positive")
        if self.kind == "deterministic" and self.base <= 0:
            raise ValueError("deterministic base time must be positive")
        if self.shift < 0:
            raise ValueError("shift must be nonnegative")
        if self.slowdown not in ("none", "fixed", "resampled_uniform"):
            raise ValueError(f"unknown slowdown {self.slowdown!r}")
        if self.slowdown == "fixed":
            object.__setattr__(self, "factors", tuple(float(f) for f in self.factors))
            if not self.factors or min(self.factors) < 1:
                raise ValueError("fixed slowdown factors must be given and >= 1")
        if self.slowdown == "resampled_uniform" and not 1 <= self.lo <= self.hi:
            raise ValueError("resampled_uniform needs 1 <= lo <= hi")
        if self.granularity not in ("minibatch", "batch"):
            raise ValueError(f"unknown granularity {self.granularity!r}")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def _base_draw(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.kind == "deterministic":
            return np.full(shape, self.base)
        draw = rng.exponential(1.0 / self.rate, size=shape)
        if self.kind == "shifted_exponential":
            draw = draw + self.shift
        return draw

    def slowdowns(self, rng: np.random.Generator, P: int) -> np.ndarray:
        if self.slowdown == "none":
            return np.ones(P)
        if self.slowdown == "fixed":
            if len(self.factors) != P:
                raise ValueError(f"{len(self.factors)} slowdown factors for {P} workers")
            return np.asarray(self.factors)
        return rng.uniform(self.lo, self.hi, size=P)

    def draw(self, rng: np.random.Generator, P: int, N: int) -> np.ndarray:
        """Mini-batch durations for one iteration, shape ``(P, N)``."""
        if self.granularity == "batch":
            times = np.repeat(self._base_draw(rng, (P, 1)) / N, N, axis=1)
        else:
            times = self._base_draw(rng, (P, N))
        return times * self.slowdowns(rng, P)[:, None]


def harmonic_number(P: int) -> float:
    return float(sum(Fraction(1, k) for k in range(1, P + 1)))


def expected_min_exp(lam: float, P: int) -> float:
    """E[min of P i.i.d. Exp(lam)] = 1 / (lam P)."""
    _check(lam, P)
    return 1.0 / (lam * P)


def expected_max_exp(lam: float, P: int) -> float:
    """E[max of P i.i.d. Exp(lam)] via the alternating binomial series.

    The series cancels catastrophically in floating point (terms reach ~1e16
    for P = 60 while the sum is ~0.08), so it is summed exactly in rationals.
    """
    _check(lam, P)
    if P > MAX_WORKERS:
        raise RangeError(f"P={P} exceeds the alternating-sum cap of {MAX_WORKERS} workers")
    series = sum(Fraction(math.comb(P - 1, k) * (-1) ** k, (k + 1) ** 2) for k in range(P))
    return P * float(series) / lam


def iteration_time_ratio(lam: float, P: int) -> float:
    return expected_min_exp(lam, P) / expected_max_exp(lam, P)


def iterations_per_epoch(D: int, P: int, B: int) -> int:
    if B < 1 or P < 1:
        raise ValueError("P and B must be >= 1")
    if D < P * B:
        raise ValueError(f"dataset size D={D} is smaller than P*B={P * B}")
    return -(-D // (P * B))


def epoch_time(lam: float, P: int, D: int, B: int, variant: str) -> float:
    """Expected wall-clock time of one (pseudo) epoch of ceil(D / (P B)) iterations."""
    iters = iterations_per_epoch(D, P, B)
    if variant == "nonblocking":
        return iters * expected_min_exp(lam, P)
    if variant == "blocking":
        return iters * expected_max_exp(lam, P)
    raise ValueError(f"unknown variant {variant!r}")


def _check_times(times) -> np.ndarray:
    t = np.asarray(times, dtype=float).reshape(-1)
    if t.size == 0:
        raise ValueError("need at least one worker time")
    if np.any(t <= 0):
        raise ValueError("worker times must be positive")
    return np.sort(t)


def throughput_nonblocking(B: int, order_stat_times) -> float:
    """Samples per unit time summed over workers: ``sum_i B / X_(i)``."""
    return float(B * np.sum(1.0 / _check_times(order_stat_times)))


def throughput_blocking(B: int, order_stat_times) -> float:
    t = _check_times(order_stat_times)
    return float(t.size * B / t[-1])


def data_per_iteration(B: int, order_stat_times) -> float:
    """Fractional number of samples trained before the fastest worker finishes."""
    t = _check_times(order_stat_times)
    return throughput_nonblocking(B, t) * float(t[0])


def throughput_ratio(order_stat_times) -> float:
    """Non-blocking over blocking throughput, ``Y X_(P) / P``; always >= 1."""
    t = _check_times(order_stat_times)
    # each t_max / t_i rounds to >= 1, so the mean cannot dip below 1
    return float(np.mean(t[-1] / t))


def throughput_ratios(times: np.ndarray) -> np.ndarray:
    """Row-wise :func:`throughput_ratio` for a (trials, P) array of worker times."""
    t = np.asarray(times, dtype=float)
    if t.ndim != 2 or t.shape[1] == 0:
        raise ValueError("expected a (trials, P) array")
    if np.any(t <= 0):
        raise ValueError("worker times must be positive")
    return np.mean(t.max(axis=1, keepdims=True) / t, axis=1)


def _check(lam: float, P: int) -> None:
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if P < 1:
        raise ValueError("P must be >= 1")


def mc_min_max_exp(lam: float, P: int, trials: int, seed: int = 0,
                   chunk: int = 200_000) -> tuple[float, float]:
    """Sample means of the min and max of P i.i.d. Exp(lam) draws."""
    _check(lam, P)
    rng = np.random.default_rng(seed)
    total_min = total_max = 0.0
    done = 0
    while done < trials:
        n = min(chunk, trials - done)
        x = rng.exponential(1.0 / lam, size=(n, P))
        total_min += float(x.min(axis=1).sum())
        total_max += float(x.max(axis=1).sum())
        done += n
    return total_min / trials, total_max / trials


def mc_iteration_times(delay: DelayModel, P: int, N: int, trials: int,
                       seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Per-iteration compute-phase lengths (non-blocking, blocking) for any delay model.

    Non-blocking ends when the first worker finishes all N mini-batches,
    blocking when the last does.
    """
    rng = np.random.default_rng(seed)
    first = np.empty(trials)
    last = np.empty(trials)
    for k in range(trials):
        totals = delay.draw(rng, P, N).sum(axis=1)
        first[k] = totals.min()
        last[k] = totals.max()
    return first, last


@dataclass
class RuntimeSummary:
    expected_iter_nonblocking: float
    expected_iter_blocking: float
    iter_ratio: float
    epoch_nonblocking: float
    epoch_blocking: float
    throughput_ratio_samples: list[float] = field(default_factory=list)


def summarize(lam: float, P: int, D: int, B: int, *, samples: int = 0, seed: int = 0) -> RuntimeSummary:
    """Closed-form summary plus ``samples`` Monte Carlo throughput-ratio draws."""
    rng = np.random.default_rng(seed)
    ratios = [throughput_ratio(rng.exponential(1.0 / lam, size=P)) for _ in range(samples)]
    return RuntimeSummary(
        expected_iter_nonblocking=expected_min_exp(lam, P),
        expected_iter_blocking=expected_max_exp(lam, P),
        iter_ratio=iteration_time_ratio(lam, P),
        epoch_nonblocking=epoch_time(lam, P, D, B, "nonblocking"),
        epoch_blocking=epoch_time(lam, P, D, B, "blocking"),
        throughput_ratio_samples=ratios,
    )
