from __future__ import annotations

import itertools
import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from privlearn.core import (
    BudgetMode,
    Database,
    DatabaseLoadError,
    DimensionError,
    InsufficientDatabaseError,
    ParameterOverflowError,
    ParameterProfile,
    PredicateSpec,
    ReleaseParams,
    adjacent,
    ball_size,
    check_db_size,
    counting_query,
    counting_query_exact,
    derive_params,
    enumerate_ball,
    enumerate_cube,
    eval_general_conjunction,
    eval_predicate,
    general_to_monotone,
    min_count_for_threshold,
    rng_stream,
    subsample_verify,
    threshold_query,
)

CONJ = PredicateSpec.conjunction()
PAR = PredicateSpec.parity()


def const_budget(b):
    return lambda n, g, beta: b


# --------------------------------------------------------------------------
# Predicates


@pytest.mark.parametrize(
    "P, q, u, expected",
    [
        (CONJ, (1, 0), (1, 1), 1),
        (CONJ, (1, 1), (1, 0), 0),
        (PAR, (1, 1), (1, 0), 1),
    ],
)
def test_eval_predicate_examples(P, q, u, expected):
    assert eval_predicate(P, q, u) == expected


def test_eval_predicate_length_mismatch():
    with pytest.raises(DimensionError):
        eval_predicate(CONJ, (1, 0), (1, 0, 1))


def test_custom_predicate_is_used():
    P = PredicateSpec.custom(lambda q, u: int(q[0] == u[0]), "first_equal")
    assert eval_predicate(P, (1, 0), (1, 1)) == 1
    assert eval_predicate(P, (0, 0), (1, 1)) == 0
    assert P.label == "first_equal"


def test_conjunction_two_forms_agree_exhaustively():
    d = 4
    cube = enumerate_cube(d)
    for q in cube:
        for u in cube:
            and_form = int(all(u[i] for i in range(d) if q[i]))
            or_form = 1 - int(any(q[i] for i in range(d) if not u[i]))
            got = eval_predicate(CONJ, q, u)
            assert got == and_form == or_form


# --------------------------------------------------------------------------
# Counting and threshold queries


def test_counting_query_examples():
    D = Database([(1, 1), (1, 0), (0, 0)])
    assert counting_query_exact(D, CONJ, (1, 0)) == Fraction(2, 3)
    assert counting_query(D, CONJ, (0, 0)) == 1.0
    assert counting_query(Database([(1, 1)]), PAR, (1, 1)) == 0.0


def test_threshold_query_examples():
    D = Database([(1, 1), (1, 0), (0, 0)])  # f(q=(1,0)) = 2/3
    assert threshold_query(D, CONJ, (1, 0), 0.5) == 1
    assert threshold_query(D, CONJ, (1, 0), 2 / 3) == 1
    assert threshold_query(Database([(0, 0)]), CONJ, (1, 0), 0.1) == 0


def test_min_count_for_threshold_resists_float_error():
    # 0.3 * 10 is 3.0000000000000004 in floating point.
    assert min_count_for_threshold(0.3, 10) == 3
    assert min_count_for_threshold(2 / 3, 3) == 2
    assert min_count_for_threshold(0.0, 7) == 0


items = st.lists(st.lists(st.integers(0, 1), min_size=4, max_size=4), min_size=1, max_size=12)
queries = st.lists(st.integers(0, 1), min_size=4, max_size=4)


@settings(max_examples=60, deadline=None)
@given(items, queries, st.randoms(use_true_random=False))
def test_counting_query_permutation_invariant_and_on_grid(rows, q, rnd):
    D = Database(rows)
    shuffled = list(rows)
    rnd.shuffle(shuffled)
    for P in (CONJ, PAR):
        a = counting_query_exact(D, P, q)
        assert a == counting_query_exact(Database(shuffled), P, q)
        assert 0 <= a <= 1 and (a * D.n).denominator == 1


@settings(max_examples=60, deadline=None)
@given(items, queries, st.floats(0, 0.999), st.floats(0, 0.999))
def test_threshold_query_non_increasing_in_t(rows, q, t1, t2):
    D = Database(rows)
    lo, hi = sorted((t1, t2))
    assert threshold_query(D, CONJ, q, lo) >= threshold_query(D, CONJ, q, hi)


# --------------------------------------------------------------------------
# Database


def test_database_validation_and_adjacency():
    with pytest.raises(ValueError):
        Database([(0, 2)])
    with pytest.raises(ValueError):
        Database(np.zeros((0, 3)))
    D = Database([(0, 0), (1, 1)])
    assert adjacent(D, D)
    assert adjacent(D, D.replace(0, (1, 0)))
    assert not adjacent(D, D.replace(0, (1, 0)).replace(1, (0, 0)))
    assert not adjacent(D, Database([(0, 0)]))
    with pytest.raises(ValueError):
        D.items[0, 0] = 1


def test_csv_round_trip_and_header(tmp_path):
    D = Database([(1, 0, 1), (0, 0, 0), (1, 1, 1)])
    path = tmp_path / "db.csv"
    D.to_csv(path)
    assert Database.from_csv(path, 3) == D
    raw = tmp_path / "raw.csv"
    raw.write_text("1,0\n0,1\n")
    assert Database.from_csv(raw).n == 2


def test_csv_errors_report_rows(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,0\n1,x\n")
    with pytest.raises(DatabaseLoadError) as err:
        Database.from_csv(bad)
    assert err.value.row == 3
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("1,0\n1,0,1\n")
    with pytest.raises(DatabaseLoadError) as err:
        Database.from_csv(ragged)
    assert err.value.row == 2
    with pytest.raises(DatabaseLoadError):
        Database.from_csv(ragged, d=3)


# --------------------------------------------------------------------------
# Enumeration


def test_ball_enumeration_order_and_size():
    B = enumerate_ball(4, 2)
    assert B.shape == (ball_size(4, 2), 4) == (11, 4)
    weights = B.sum(axis=1)
    assert list(weights) == sorted(weights)
    assert len({r.tobytes() for r in B}) == 11
    assert ball_size(10, 3) == 176


def test_cube_rows_are_binary_expansions():
    C = enumerate_cube(3)
    assert [int("".join(map(str, r)), 2) for r in C] == list(range(8))


def test_rng_streams_are_independent_and_replayable():
    a = rng_stream(7, "oracle").random(3)
    assert np.array_equal(a, rng_stream(7, "oracle").random(3))
    assert not np.array_equal(a, rng_stream(7, "sampling").random(3))


# --------------------------------------------------------------------------
# Parameter derivation


def test_release_params_validation():
    with pytest.raises(ValueError):
        ReleaseParams(alpha=0, beta=0.1, gamma=0.1, epsilon=1)
    with pytest.raises(ValueError):
        ReleaseParams(alpha=0.1, beta=0.1, gamma=1.0, epsilon=1)
    with pytest.raises(ValueError):
        ReleaseParams(alpha=0.1, beta=0.1, gamma=0.1, epsilon=0)


def test_k_and_learner_parameters():
    rp = ReleaseParams(alpha=0.1, beta=0.18, gamma=0.3, epsilon=1.0)
    dp = derive_params(rp, 1024, const_budget(1), BudgetMode.SAMPLING_ONLY, ParameterProfile.desk())
    assert dp.k == 30
    assert dp.gamma_prime == pytest.approx(0.01)
    assert dp.beta_prime == pytest.approx(0.001)
    assert dp.thresholds[0] == pytest.approx(1 / 31) and len(dp.thresholds) == 30
    assert np.allclose(np.diff(dp.thresholds), 1 / 31)
    assert dp.oracle_tolerance == pytest.approx(0.1 / 7)


def test_k_is_not_inflated_by_float_division():
    rp = ReleaseParams(alpha=0.15, beta=0.1, gamma=0.1, epsilon=1.0)
    dp = derive_params(rp, 176, const_budget(1), BudgetMode.SAMPLING_ONLY, ParameterProfile.desk())
    assert dp.k == 20  # 3 / 0.15 evaluates to 20.000000000000004


# 4410 * ln(1024) * 100 recomputed at 50 digits is 3056779.15..., so the ceiling is 3,056,780.
THEORY_NPRIME_1024 = 3_056_780


def test_theory_n_prime_pinned_against_high_precision():
    mpmath.mp.dps = 50
    exact = mpmath.mpf(4410) * mpmath.log(1024) / mpmath.mpf("0.1") ** 2
    assert int(mpmath.ceil(exact)) == THEORY_NPRIME_1024
    rp = ReleaseParams(alpha=0.1, beta=0.1, gamma=0.1, epsilon=1.0)
    dp = derive_params(rp, 1024, const_budget(1), BudgetMode.SAMPLING_ONLY, ParameterProfile.theory())
    assert dp.n_prime == THEORY_NPRIME_1024


def test_budget_modes():
    rp = ReleaseParams(alpha=0.5, beta=0.5, gamma=0.5, epsilon=1.0)
    prof = ParameterProfile.desk()
    s = derive_params(rp, 2, const_budget(1), BudgetMode.SAMPLING_ONLY, prof)
    e = derive_params(rp, 2, const_budget(1), BudgetMode.EVALUATION_QUERIES, prof)
    assert s.b_total == 2 * s.b_iter
    assert e.b_total == 2 * e.k * e.b_iter


# alpha = beta = gamma = 0.5, eps = 1, |Q| = 2, b_base = 1, Desk multipliers 1:
# k = 6, beta' = 1/72, b_iter = ceil(2 ln 72) = 9, b_total = 18,
# min_db = ceil(18 ln(360) / 0.5) = ceil(211.90...) = 212.
DESK_TINY = {"k": 6, "b_iter": 9, "b_total": 18, "min_db_size": 212}


def test_desk_min_db_size_pinned():
    mpmath.mp.dps = 30
    b_iter = int(mpmath.ceil(mpmath.log(72) / mpmath.mpf("0.5")))
    min_db = int(mpmath.ceil(2 * b_iter * mpmath.log(10 * 2 * b_iter / mpmath.mpf("0.5")) / mpmath.mpf("0.5")))
    assert (b_iter, min_db) == (DESK_TINY["b_iter"], DESK_TINY["min_db_size"])
    rp = ReleaseParams(alpha=0.5, beta=0.5, gamma=0.5, epsilon=1.0)
    dp = derive_params(rp, 2, const_budget(1), BudgetMode.SAMPLING_ONLY, ParameterProfile.desk())
    assert {k: getattr(dp, k) for k in DESK_TINY} == DESK_TINY


def test_check_db_size_boundary():
    rp = ReleaseParams(alpha=0.5, beta=0.5, gamma=0.5, epsilon=1.0)
    dp = derive_params(rp, 2, const_budget(1), BudgetMode.SAMPLING_ONLY, ParameterProfile.desk())
    check_db_size(Database(np.zeros((dp.min_db_size, 2), dtype=np.uint8)), dp)
    with pytest.raises(InsufficientDatabaseError) as err:
        check_db_size(Database(np.zeros((dp.min_db_size - 1, 2), dtype=np.uint8)), dp)
    assert err.value.min_db_size == dp.min_db_size


def test_parameter_overflow_is_reported():
    rp = ReleaseParams(alpha=0.01, beta=0.01, gamma=0.01, epsilon=1e-6)
    with pytest.raises(ParameterOverflowError):
        derive_params(rp, 2**40, const_budget(10**17), BudgetMode.EVALUATION_QUERIES, ParameterProfile.theory())


@settings(max_examples=80, deadline=None)
@given(
    st.floats(0.05, 0.9),
    st.floats(0.05, 0.9),
    st.floats(0.05, 0.9),
    st.floats(0.05, 0.9),
    st.sampled_from(["alpha", "beta", "gamma"]),
)
def test_derive_params_monotone(alpha, beta, gamma, shrink, which):
    prof = ParameterProfile.desk()
    budget = lambda n, g, b: math.ceil(math.log(1 / b) / g)  # noqa: E731
    base = ReleaseParams(alpha, beta, gamma, 1.0)
    smaller = ReleaseParams(**{**base.__dict__, which: getattr(base, which) * shrink})
    a = derive_params(base, 100, budget, BudgetMode.SAMPLING_ONLY, prof)
    b = derive_params(smaller, 100, budget, BudgetMode.SAMPLING_ONLY, prof)
    assert b.k >= a.k and b.b_iter >= a.b_iter and b.min_db_size >= a.min_db_size


def test_profile_dicts():
    assert ParameterProfile.from_dict({"name": "theory"}) == ParameterProfile.theory()
    p = ParameterProfile.from_dict({"name": "desk", "c_biter": 0.5})
    assert p.c_biter == 0.5 and p.c_nprime == 1.0
    with pytest.raises(ValueError):
        ParameterProfile.from_dict({"name": "theory", "c_biter": 2})
    with pytest.raises(ValueError):
        ParameterProfile.desk(c_biter=0)


# --------------------------------------------------------------------------
# Subsampling and general conjunctions


def test_subsample_identical_items_always_succeed():
    D = Database(np.tile([1, 0, 1, 1], (30, 1)))
    rep = subsample_verify(D, CONJ, enumerate_ball(4, 2), 0.2, 20, np.random.default_rng(0))
    assert rep.success_fraction == 1.0 and max(rep.max_errors) == 0.0


def test_general_to_monotone_example():
    D2, _ = general_to_monotone(Database([(1, 0)]), [])
    assert D2.items.tolist() == [[1, 0, 0, 1]]
    _, Q = general_to_monotone(Database([(1, 0)]), [(1, 0)])
    assert Q.tolist() == [[1, 0, 0, 0]]


def test_general_to_monotone_preserves_answers_exhaustively():
    d = 3
    literals = list(itertools.product((-1, 0, 1), repeat=d))
    for u_bits in enumerate_cube(d):
        D = Database([u_bits])
        D2, Q2 = general_to_monotone(D, literals)
        for g, q2 in zip(literals, Q2):
            assert eval_general_conjunction(g, u_bits) == eval_predicate(CONJ, q2, D2.items[0])
    rng = np.random.default_rng(1)
    d = 6
    D = Database(rng.integers(0, 2, (25, d)))
    gs = rng.integers(-1, 2, (200, d))
    D2, Q2 = general_to_monotone(D, gs)
    for g, q2 in zip(gs, Q2):
        direct = Fraction(sum(eval_general_conjunction(g, u) for u in D.items), D.n)
        assert direct == counting_query_exact(D2, CONJ, q2)
