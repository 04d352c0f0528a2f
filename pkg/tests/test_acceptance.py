"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the collected lines are
also repeated in the terminal summary (see ``conftest.py``).
"""
from __future__ import annotations

import dataclasses
import math
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from scipy.linalg import hadamard

from privlearn.core import (
    Database,
    ParameterProfile,
    PredicateSpec,
    ReleaseParams,
    derive_params,
    enumerate_cube,
    rng_stream,
)
from privlearn.distributions import UniformBk
from privlearn.dp_oracle import BudgetExceeded, OracleConfig, ThresholdOracle
from privlearn.harness.config import load_config
from privlearn.harness.experiment import dp_ratio_smoke, run_experiment
from privlearn.harness.verify import damping_sweep, explicit_ptf_check, oracle_agreement, subsample_check
from privlearn.learners import FourierLearner, PTFLearner
from privlearn.learners.fourier import characters, parity_correlations
from privlearn.learners.ptf import explicit_ptf
from privlearn.reduction import aggregate, priv_learn, run_rounds

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
CONJ = PredicateSpec.conjunction()
RESULTS: list[str] = []


def report(num: int, passed: bool, detail: str) -> None:
    line = f"{'PASS' if passed else 'FAIL'} criterion {num}: {detail}"
    RESULTS.append(line)
    print(line)


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


def test_criterion_01_oracle_agreement():
    with Timer() as tm:
        res = oracle_agreement(trials=100_000, seed=0)
    ok = res.passed and res.details["queries"] >= 100_000 and tm.seconds < 10
    report(1, ok, f"{res.details['violations']} violations over {res.details['queries']} queries in {tm.seconds:.1f}s")
    assert ok


def test_criterion_02_budget_and_distinctness():
    rp = ReleaseParams(alpha=0.3, beta=0.2, gamma=0.2, epsilon=1.0)
    prof = ParameterProfile.desk(c_biter=0.2, c_degree_sparse=0.45)
    d = 6
    G = UniformBk(d, 2)

    ptf = PTFLearner(d, prof, sparsity=2, c_samples=1e-9)
    dp = derive_params(rp, G.support_size, ptf.budget, ptf.budget_mode, prof)
    D = Database(rng_stream(0, "data").integers(0, 2, (dp.min_db_size, d)))
    _, tr = priv_learn(D, CONJ, G, rp, ptf, prof, seed=0)
    sampling_ok = tr.privacy["distinct_count"] <= 2 * dp.b_iter and dp.b_total == 2 * dp.b_iter

    four = FourierLearner(d, c_samples=1e-5, max_rounds=50)
    dp2 = derive_params(rp, G.support_size, four.budget, four.budget_mode, prof)
    D2 = Database(rng_stream(1, "data").integers(0, 2, (dp2.min_db_size, d)))
    _, tr2 = priv_learn(D2, CONJ, G, rp, four, prof, seed=1)
    eval_ok = tr2.privacy["distinct_count"] <= 2 * dp2.k * dp2.b_iter and dp2.b_total == 2 * dp2.k * dp2.b_iter

    broken = dataclasses.replace(dp, b_total=3)
    oracle = ThresholdOracle(D, CONJ, OracleConfig(dp.oracle_tolerance, 3, rp.epsilon, D.n), rng=np.random.default_rng(0))
    try:
        run_rounds(oracle, G, rp, broken, ptf, seed=0)
        fault_ok = False
    except BudgetExceeded:
        fault_ok = True

    ok = sampling_ok and eval_ok and fault_ok
    report(
        2,
        ok,
        f"sampling-only {tr.privacy['distinct_count']} <= {2 * dp.b_iter}, "
        f"evaluation {tr2.privacy['distinct_count']} <= {2 * dp2.k * dp2.b_iter}, fault injection raised={fault_ok}",
    )
    assert ok


def test_criterion_03_laplace_ratio():
    n = 100
    D = Database(np.zeros((n, 4), dtype=np.uint8))
    D2 = D.replace(0, [1, 1, 1, 1])
    q = [1, 1, 0, 0]  # answers 0 and 1/n
    with Timer() as tm:
        rep = dp_ratio_smoke(D, D2, q, 1_000_000, 1.0, b=1, rng=np.random.default_rng(0))
    ok = rep.passed and rep.bound == pytest.approx(math.e) and tm.seconds < 60
    report(3, ok, f"max ratio {rep.max_ratio:.4f} vs bound {rep.bound:.4f} x 1.05 on {rep.bins_used} bins, {tm.seconds:.1f}s")
    assert ok


def test_criterion_04_damping_sweep():
    with Timer() as tm:
        res = damping_sweep(64, (0.1, 0.01))
    ok = res.passed and tm.seconds < 5
    report(4, ok, f"k <= 64, eps in {{0.1, 0.01}}: worst |s(j)|/eps = {res.details['worst_ratio']:.3f}, {tm.seconds:.2f}s")
    assert ok


def test_criterion_05_explicit_ptf():
    with Timer() as tm:
        res = explicit_ptf_check(50, seed=0)
    ok = res.passed and tm.seconds < 60
    report(5, ok, f"{res.details['mismatches']} mismatches over {res.details['points']} points, {tm.seconds:.1f}s")
    assert ok


def test_criterion_06_lp_consistency_and_pac():
    d, gamma_p = 10, 0.05
    rp = ReleaseParams(alpha=0.15, beta=0.1, gamma=0.1, epsilon=1.0)
    prof = ParameterProfile.desk(c_degree_sparse=0.45)
    G = UniformBk(d, 3)
    learner = PTFLearner(d, prof, sparsity=3, c_samples=1.0)
    dp = derive_params(rp, G.support_size, learner.budget, learner.budget_mode, prof)
    m = learner.budget(dp.n_prime, gamma_p, dp.beta_prime)
    Q = G.support()
    good, realizable = 0, True
    with Timer() as tm:
        for seed in range(20):
            rng = np.random.default_rng(seed)
            D = Database(rng.integers(0, 2, (50, d)))
            t = float(rng.integers(1, 10)) / 10
            truth = explicit_ptf(D, t, 3).predict(Q)
            X = G.sample_many(rng, m)
            y = explicit_ptf(D, t, 3).predict(X)
            h = learner.train(dp.n_prime, t, gamma_p, dp.beta_prime, X, y, rng=rng)
            realizable &= bool(np.array_equal(h.predict(X), y))
            good += np.mean(h.predict(Q) != truth) <= gamma_p
    ok = realizable and good >= 18 and tm.seconds < 300
    report(6, ok, f"zero training error={realizable}, {good}/20 seeds with error <= {gamma_p} at m={m}, {tm.seconds:.1f}s")
    assert ok


def _end_to_end(name: str, seeds=range(10)):
    base = load_config(CONFIGS / name, env={})
    masses = []
    with Timer() as tm:
        for s in seeds:
            res = run_experiment(dataclasses.replace(base, seed=s, output_dir=None))
            assert res.report.mode == "exhaustive"
            masses.append(res.report.bad_mass)
    return base, masses, tm.seconds


def test_criterion_07_conjunction_release():
    cfg, masses, secs = _end_to_end("conjunctions.yaml")
    assert cfg.d == 10 and cfg.sparsity == 3 and cfg.database["n"] == 50_000
    good = sum(m <= cfg.release.gamma for m in masses)
    ok = good >= 8 and secs < 600
    report(7, ok, f"{good}/10 seeds with bad mass <= {cfg.release.gamma} (worst {max(masses):.4f}), {secs:.1f}s")
    assert ok


def test_criterion_08_parity_release():
    cfg, masses, secs = _end_to_end("parity.yaml")
    assert cfg.d == 12 and cfg.database["n"] == 50_000
    good = sum(m <= cfg.release.gamma for m in masses)
    ok = good >= 8 and secs < 900
    report(8, ok, f"{good}/10 seeds with bad mass <= {cfg.release.gamma} (worst {max(masses):.4f}), {secs:.1f}s")
    assert ok


def test_criterion_09_one_flip_aggregation():
    # Within the cell [i/(k+1), (i+1)/(k+1)) the exact vector has i ones; the
    # worst deviation over the cell sits at its endpoints, checked exactly.
    violations = cases = 0
    for k in range(1, 41):
        step = Fraction(1, k + 1)
        for i in range(k + 1):
            exact = np.array([1] * i + [0] * (k - i))
            for flip in range(-1, k):
                preds = exact.copy()
                if flip >= 0:
                    preds[flip] ^= 1
                agg = Fraction(int(preds.sum()), k + 1)
                assert float(agg) == pytest.approx(aggregate(preds))
                hi = min((i + 1) * step, Fraction(1))
                worst = max(abs(agg - i * step), abs(agg - hi))
                violations += worst > 2 * step
                cases += 1
    ok = violations == 0
    report(9, ok, f"{violations} violations over {cases} hypothesis vectors, k <= 40")
    assert ok


def test_criterion_10_subsampling():
    with Timer() as tm:
        res = subsample_check(100, seed=0, threshold=0.95)
    ok = res.passed and tm.seconds < 30
    report(10, ok, f"success fraction {res.details['success_fraction']:.2f} >= 0.95 at size {res.details['sample_size']}, {tm.seconds:.1f}s")
    assert ok


def test_criterion_11_walsh_hadamard():
    worst = 0.0
    for d in range(1, 11):
        rng = np.random.default_rng(100 + d)
        Q = enumerate_cube(d)
        for _ in range(3):
            table = rng.normal(size=2**d)
            coeffs = hadamard(2**d) @ table / 2**d
            corr = parity_correlations(Q, table, np.ones(2**d), characters(d))
            worst = max(worst, float(np.max(np.abs(corr - coeffs))))
    ok = worst < 1e-9
    report(11, ok, f"max deviation {worst:.2e} over d = 1..10")
    assert ok
