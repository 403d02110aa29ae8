"""Synthetic convex problems, gradient oracles and the accumulate/finalize update.

Every problem is a finite sum over ``m`` samples (rows of ``design``) plus an
optional ridge term ``l2_reg * ||x||^2 / 2``:

* ``least_squares``: ``1/2 (a.x - y)^2``
* ``logistic``: ``log(1 + exp(-y a.x))`` with labels ``y`` in {-1, +1}
* ``strongly_convex_quadratic``: ``1/2 x.(a a^T + I).x - y a.x``; strongly
  convex with modulus >= 1 even when ``l2_reg == 0``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

KINDS = ("least_squares", "logistic", "strongly_convex_quadratic")
SCALINGS = ("proportional", "literal_eq19", "none")


class ProtocolError(RuntimeError):
    """Raised when the accumulate/finalize protocol is used out of order."""


@dataclass(frozen=True, eq=False)
class Problem:
    kind: str
    design: np.ndarray
    targets: np.ndarray
    l2_reg: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}; expected one of {KINDS}")
        design = np.asarray(self.design, dtype=float)
        targets = np.asarray(self.targets, dtype=float).reshape(-1)
        if design.ndim != 2 or design.shape[0] < 1 or design.shape[1] < 1:
            raise ValueError(f"design must be a non-empty m x d matrix, got shape {design.shape}")
        if targets.shape[0] != design.shape[0]:
            raise ValueError(f"{targets.shape[0]} targets for {design.shape[0]} design rows")
        if self.l2_reg < 0:
            raise ValueError("l2_reg must be nonnegative")
        if self.kind == "logistic" and not np.all(np.isin(targets, (-1.0, 1.0))):
            raise ValueError("logistic targets must be -1 or +1")
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "targets", targets)

    @property
    def m(self) -> int:
        return self.design.shape[0]

    @property
    def d(self) -> int:
        return self.design.shape[1]

    @cached_property
    def lipschitz(self) -> float:
        """Smoothness constant of the full objective (top Hessian eigenvalue bound)."""
        a = self.design
        top = float(np.linalg.eigvalsh(a.T @ a / self.m)[-1])
        if self.kind == "logistic":
            top /= 4.0
        elif self.kind == "strongly_convex_quadratic":
            top += 1.0
        return top + self.l2_reg

    @cached_property
    def _optimum(self) -> tuple[np.ndarray, float]:
        return _solve_optimum(self)

    @property
    def optimum(self) -> np.ndarray:
        return self._optimum[0]

    @property
    def optimum_value(self) -> float:
        """f*: minimum of the full objective."""
        return self._optimum[1]


def make_problem(kind: str, m: int, d: int, *, l2_reg: float = 1e-3,
                 noise: float = 0.1, seed: int = 0) -> Problem:
    """Random Gaussian design with a planted solution."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((m, d))
    planted = rng.standard_normal(d)
    signal = a @ planted + noise * rng.standard_normal(m)
    if kind == "logistic":
        targets = np.where(signal >= 0, 1.0, -1.0)
    else:
        targets = signal
    return Problem(kind, a, targets, l2_reg)


def load_problem_csv(path: str | Path, kind: str, l2_reg: float = 1e-3) -> Problem:
    """Rows are ``feature_1,...,feature_d,target``; a non-numeric first row is a header."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                if lineno == 1 and not rows:
                    continue
                raise ValueError(f"{path}:{lineno}: non-numeric value in {row!r}") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    data = np.asarray(rows, dtype=float)
    if data.ndim != 2 or data.shape[1] < 2:
        raise ValueError(f"{path}: need at least one feature column and a target column")
    return Problem(kind, data[:, :-1], data[:, -1], l2_reg)


def _check_indices(problem: Problem, sample_set) -> np.ndarray:
    idx = np.asarray(sample_set, dtype=np.intp).reshape(-1)
    if idx.size == 0:
        raise ValueError("sample_set must be nonempty")
    if idx.min() < 0 or idx.max() >= problem.m:
        raise IndexError(f"sample index out of range [0, {problem.m})")
    return idx


def _all(problem: Problem, sample_set):
    if sample_set is None:
        return problem.design, problem.targets
    idx = _check_indices(problem, sample_set)
    return problem.design[idx], problem.targets[idx]


def loss(problem: Problem, x: np.ndarray, sample_set: Sequence[int] | None = None) -> float:
    """Mean per-sample loss over ``sample_set`` (all samples if None) plus the ridge term."""
    a, y = _all(problem, sample_set)
    z = a @ x
    if problem.kind == "least_squares":
        per = 0.5 * (z - y) ** 2
    elif problem.kind == "logistic":
        per = np.logaddexp(0.0, -y * z)
    else:
        per = 0.5 * z**2 + 0.5 * float(x @ x) - y * z
    return float(per.mean()) + 0.5 * problem.l2_reg * float(x @ x)


def sample_mean_gradient(problem: Problem, x: np.ndarray,
                         sample_set: Sequence[int] | None = None) -> np.ndarray:
    a, y = _all(problem, sample_set)
    z = a @ x
    if problem.kind == "least_squares":
        coef = z - y
        extra = 0.0
    elif problem.kind == "logistic":
        # d/dz log(1+exp(-yz)) = -y * sigmoid(-yz)
        coef = -y * _sigmoid(-y * z)
        extra = 0.0
    else:
        coef = z - y
        extra = 1.0
    return a.T @ coef / a.shape[0] + (problem.l2_reg + extra) * x


def _sigmoid(t):
    return np.exp(-np.logaddexp(0.0, -t))


def _solve_optimum(problem: Problem) -> tuple[np.ndarray, float]:
    a, y, m, d = problem.design, problem.targets, problem.m, problem.d
    if problem.kind == "logistic":
        x = np.zeros(d)
        for _ in range(100):
            g = sample_mean_gradient(problem, x)
            s = _sigmoid(a @ x * y)
            w = s * (1 - s)
            h = (a.T * w) @ a / m + problem.l2_reg * np.eye(d)
            step = np.linalg.lstsq(h, g, rcond=None)[0]
            x = x - step
            if np.linalg.norm(step) <= 1e-14 * max(1.0, np.linalg.norm(x)):
                break
    else:
        ridge = problem.l2_reg + (1.0 if problem.kind == "strongly_convex_quadratic" else 0.0)
        h = a.T @ a / m + ridge * np.eye(d)
        x = np.linalg.lstsq(h, a.T @ y / m, rcond=None)[0]
    return x, loss(problem, x)


@dataclass
class GradientAccumulator:
    """Running sum of mini-batch mean gradients, each pre-divided by ``total``."""

    total: int
    sum: np.ndarray
    finished: int = 0

    def __post_init__(self):
        if self.total < 1:
            raise ValueError("total must be >= 1")
        if not 0 <= self.finished <= self.total:
            raise ValueError("finished must lie in [0, total]")

    @classmethod
    def empty(cls, d: int, total: int) -> "GradientAccumulator":
        return cls(total=total, sum=np.zeros(d))


def accumulate(acc: GradientAccumulator, minibatch_mean_grad: np.ndarray) -> GradientAccumulator:
    if acc.finished >= acc.total:
        raise ProtocolError(f"accumulator already holds {acc.total} of {acc.total} mini-batches")
    acc.sum = acc.sum + np.asarray(minibatch_mean_grad, dtype=float) / acc.total
    acc.finished += 1
    return acc


def finalize_update(x_base: np.ndarray, acc: GradientAccumulator, eta: float,
                    scaling: str = "proportional") -> np.ndarray:
    """Apply the accumulated gradient to ``x_base``.

    ``acc.sum`` already carries one factor n/N relative to the mean gradient over
    finished mini-batches, so ``proportional`` applies the n/N learning-rate
    scaling exactly once, ``literal_eq19`` applies it twice and ``none`` undoes it.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    n, total = acc.finished, acc.total
    if n == 0:
        return np.array(x_base, dtype=float, copy=True)
    if scaling == "proportional":
        factor = 1.0
    elif scaling == "literal_eq19":
        factor = n / total
    elif scaling == "none":
        factor = total / n
    else:
        raise ValueError(f"unknown scaling {scaling!r}; expected one of {SCALINGS}")
    return x_base - eta * factor * acc.sum


@dataclass(frozen=True)
class ConvergenceConstants:
    lipschitz_L: float
    grad_deviation_zeta: float = 0.0
    grad_variance_sigma: float = 0.0
    grad_bound_psi: float = 0.0  # assumed 0 by the simplified bound; kept for completeness
    spectral_rho: float = 0.0

    def __post_init__(self):
        if self.lipschitz_L <= 0:
            raise ValueError("lipschitz_L must be positive")
        for name in ("grad_deviation_zeta", "grad_variance_sigma", "grad_bound_psi", "spectral_rho"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.spectral_rho >= 1:
            raise ValueError("spectral_rho must be < 1")


def convergence_bound(c: ConvergenceConstants, f0_minus_fstar: float, K: int, P: int) -> float:
    """Large-K bound on the running average of ``E||grad f(x_bar_k)||^2`` for
    non-blocking D-PSGD: ``16 gap L / K + (16 gap + 8 L) sigma / sqrt(K P)``."""
    if K < 1 or P < 1:
        raise ValueError("K and P must be >= 1")
    if f0_minus_fstar < 0:
        raise ValueError("f0_minus_fstar must be nonnegative")
    gap, L, sigma = f0_minus_fstar, c.lipschitz_L, c.grad_variance_sigma
    return 16.0 * gap * L / K + (16.0 * gap + 8.0 * L) * sigma / math.sqrt(K * P)
