"""Monte Carlo validation of the closed-form runtime results."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import runtime, topology

VALIDATE_WORKERS = (2, 4, 8, 10, 16)
MIN_TRIALS = 1000
REL_TOL = 0.01
# 8-node base graph used for the budget check
BASE_GRAPH = {"kind": "erdos_renyi", "P": 8, "p": 0.35}


@dataclass
class Check:
    name: str
    passed: bool
    observed: float
    expected: float
    deviation: float
    tolerance: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: observed={self.observed:.6g} expected={self.expected:.6g} "
                f"deviation={self.deviation:.3g} tolerance={self.tolerance:.3g}")


def _rel_check(name, observed, expected, tol) -> Check:
    dev = abs(observed - expected) / abs(expected)
    return Check(name, dev <= tol, observed, expected, dev, tol)


def _stat_tol(rel_std: float, trials: int) -> float:
    # 1% unless the sample is too small for 1% to be a 4-sigma band
    return max(REL_TOL, 4.0 * rel_std / math.sqrt(trials))


def harmonic_identity_checks() -> list[Check]:
    worst = 0.0
    worst_at = (1, 1.0)
    for lam in (0.5, 1.0, 2.0):
        for P in range(1, runtime.MAX_WORKERS + 1):
            expected = runtime.harmonic_number(P) / lam
            dev = abs(runtime.expected_max_exp(lam, P) - expected) / expected
            if dev > worst:
                worst, worst_at = dev, (P, lam)
    P, lam = worst_at
    expected = runtime.harmonic_number(P) / lam
    return [Check(f"alternating sum = H_P/lambda, P<=60 (worst P={P}, lambda={lam:g})",
                  worst <= 1e-9, runtime.expected_max_exp(lam, P), expected, worst, 1e-9)]


def order_statistic_checks(trials: int, seed: int, workers=VALIDATE_WORKERS, lam: float = 1.0) -> list[Check]:
    checks = []
    for P in workers:
        mc_min, mc_max = runtime.mc_min_max_exp(lam, P, trials, seed=seed + P)
        # min is Exp(lam P): relative std 1; max has variance sum 1/k^2
        max_rel_std = math.sqrt(sum(1.0 / k**2 for k in range(1, P + 1))) / runtime.harmonic_number(P)
        checks.append(_rel_check(f"E[min] P={P}", mc_min, runtime.expected_min_exp(lam, P),
                                 _stat_tol(1.0, trials)))
        checks.append(_rel_check(f"E[max] P={P}", mc_max, runtime.expected_max_exp(lam, P),
                                 _stat_tol(max_rel_std, trials)))
    return checks


def budget_check(trials: int, seed: int, budget_cb: float = 0.5) -> Check:
    base = topology.build_graph(BASE_GRAPH["kind"], BASE_GRAPH["P"], p=BASE_GRAPH["p"], seed=seed)
    rng = np.random.default_rng(seed)
    draws = min(trials, 10_000)
    fractions = np.empty(draws)
    for i in range(draws):
        active = topology.sample_active_topology(base, budget_cb, rng)
        fractions[i] = len(active.edges) / len(base.edges)
    mean = float(fractions.mean())
    tol = max(0.02, 4.0 * float(fractions.std()) / math.sqrt(draws))
    return Check(f"MATCHA active-edge fraction, c_b={budget_cb:g}", abs(mean - budget_cb) <= tol,
                 mean, budget_cb, abs(mean - budget_cb), tol)


def throughput_checks(trials: int, seed: int, workers=VALIDATE_WORKERS) -> list[Check]:
    rng = np.random.default_rng(seed)
    draws = min(trials, 100_000)
    checks = []
    for P in workers:
        ratios = runtime.throughput_ratios(rng.exponential(1.0, size=(draws, P)))
        lowest = float(ratios.min())
        checks.append(Check(f"throughput ratio >= 1, P={P}", lowest >= 1.0 - 1e-12,
                            lowest, 1.0, max(0.0, 1.0 - lowest), 1e-12))
    return checks


def run_checks(trials: int, seed: int = 0) -> list[Check]:
    if trials < MIN_TRIALS:
        raise ValueError(f"trials must be >= {MIN_TRIALS}, got {trials}")
    checks = harmonic_identity_checks()
    checks += order_statistic_checks(trials, seed)
    checks.append(budget_check(trials, seed))
    checks += throughput_checks(trials, seed)
    return checks
