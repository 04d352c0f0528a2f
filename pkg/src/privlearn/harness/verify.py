"""Property-verifier suites run by ``privlearn verify``."""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from ..core import (
    Database,
    PredicateSpec,
    enumerate_ball,
    enumerate_cube,
    min_count_for_threshold,
    rng_stream,
    subsample_verify,
)
from ..dp_oracle import OracleAnswer, OracleConfig, ThresholdOracle
from ..learners.ptf import damping_exponent, damping_poly, explicit_ptf
from .experiment import brute_force_answers


@dataclass
class SuiteResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def oracle_agreement(trials: int = 100_000, seed: int = 0, d: int = 8, databases: int = 10) -> SuiteResult:
    """Threshold oracle answers under injected noise bounded by tolerance / 3.

    Checks that a label always equals ``f^D_t(q)`` and that a rejection only
    happens when ``|f^D(q) - t| < tolerance``.
    """
    rng = rng_stream(seed, "verify")
    P = PredicateSpec.conjunction()
    cube = enumerate_cube(d)
    per_db = trials // databases
    violations = 0
    counts = {"one": 0, "zero": 0, "bottom": 0}
    for _ in range(databases):
        n = int(rng.integers(1, 64))
        D = Database(rng.integers(0, 2, (n, d), dtype=np.uint8))
        tol = float(rng.uniform(0.02, 0.3))
        exact = brute_force_answers(D, P, cube).numerators
        bound = tol / 3.0
        noise = lambda: float(rng.uniform(-bound, bound)) * (1 - 1e-12)  # noqa: E731
        oracle = ThresholdOracle(D, P, OracleConfig(tol, 2**d, 1.0, n), noise=noise)
        idx = rng.integers(0, 2**d, size=per_db)
        ts = rng.random(per_db)
        # Half of the thresholds land within the tolerance band of the true answer.
        near = rng.random(per_db) < 0.5
        ts[near] = np.clip(exact[idx[near]] / n + rng.uniform(-tol, tol, int(near.sum())), 0.0, 1 - 1e-9)
        for j, t in zip(idx, ts):
            ans = oracle.query(cube[j], float(t))
            f = Fraction(int(exact[j]), n)
            if ans is OracleAnswer.BOTTOM:
                counts["bottom"] += 1
                if abs(f - Fraction(float(t))) >= Fraction(tol):
                    violations += 1
            else:
                truth = int(exact[j] >= min_count_for_threshold(float(t), n))
                counts["one" if ans is OracleAnswer.ONE else "zero"] += 1
                if ans.value != truth:
                    violations += 1
    return SuiteResult("oracle_agreement", violations == 0, {"queries": per_db * databases, "violations": violations, **counts})


def damping_sweep(max_k: int = 64, epsilons=(0.1, 0.01)) -> SuiteResult:
    """``s(k) = 1``, ``|s(j)| <= eps`` below ``k`` and the exact degree, for every ``k``."""
    failures = []
    worst = 0.0
    for eps in epsilons:
        e = damping_exponent(eps)
        for k in range(1, max_k + 1):
            s = damping_poly(k, eps)
            r = math.isqrt(k - 1) + 1  # ceil(sqrt(k))
            if s.degree != r * e:
                failures.append({"k": k, "eps": eps, "reason": "degree", "degree": s.degree})
            if abs(float(s.exact(k)) - 1.0) > 1e-9:
                failures.append({"k": k, "eps": eps, "reason": "s(k)"})
            for j in range(k):
                v = abs(s.exact(j))
                worst = max(worst, float(v) / eps)
                if v > Fraction(eps):
                    failures.append({"k": k, "eps": eps, "reason": "damping", "j": j})
    return SuiteResult("damping_sweep", not failures, {"failures": failures[:10], "worst_ratio": worst})


def explicit_ptf_check(instances: int = 50, seed: int = 0) -> SuiteResult:
    """The explicit PTF agrees with ``f^D_t`` on every query of weight at most ``k``."""
    rng = rng_stream(seed, "verify")
    P = PredicateSpec.conjunction()
    mismatches = 0
    checked = 0
    for _ in range(instances):
        d = int(rng.integers(2, 13))
        n = int(rng.integers(1, 51))
        k = int(rng.integers(1, min(4, d) + 1))
        t = float(rng.integers(1, 10)) / 10
        D = Database(rng.integers(0, 2, (n, d), dtype=np.uint8))
        Q = enumerate_ball(d, k)
        truth = (brute_force_answers(D, P, Q).numerators >= min_count_for_threshold(t, n)).astype(np.uint8)
        pred = explicit_ptf(D, t, k).predict(Q)
        mismatches += int((pred != truth).sum())
        checked += Q.shape[0]
    return SuiteResult("explicit_ptf", mismatches == 0, {"instances": instances, "points": checked, "mismatches": mismatches})


def subsample_check(trials: int = 100, seed: int = 0, threshold: float = 0.95) -> SuiteResult:
    """Random subsamples of size ``10 ln|Q| / alpha^2`` answer all of ``B_2`` over ``d = 8``."""
    rng = rng_stream(seed, "verify")
    d = 8
    D = Database(rng.integers(0, 2, (500, d), dtype=np.uint8))
    rep = subsample_verify(D, PredicateSpec.conjunction(), enumerate_ball(d, 2), 0.2, trials, rng)
    frac = rep.success_fraction
    return SuiteResult(
        "subsample",
        frac >= threshold,
        {"sample_size": rep.sample_size, "success_fraction": frac, "worst_error": max(rep.max_errors)},
    )


SUITES = {
    "oracle": oracle_agreement,
    "damping": damping_sweep,
    "explicit_ptf": explicit_ptf_check,
    "subsample": subsample_check,
}


def run_suites(names=None, seed: int = 0, threads: int = 1) -> list[SuiteResult]:
    names = list(SUITES) if not names else list(names)
    for name in names:
        if name not in SUITES:
            raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")

    def run(name):
        fn = SUITES[name]
        start = time.perf_counter()
        res = fn(seed=seed) if "seed" in fn.__code__.co_varnames else fn()
        res.seconds = time.perf_counter() - start
        return res

    if threads <= 1:
        return [run(n) for n in names]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, names))
