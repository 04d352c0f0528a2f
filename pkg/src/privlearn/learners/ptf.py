"""Polynomial threshold functions for thresholded sums of conjunctions.

Contains the Chebyshev damping polynomial, the explicit low-degree PTF for
``f^D_t`` over sparse queries (used as a representability witness, never on
the release path), degree schedules, monomial features and an LP learner.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

import numpy as np
from scipy.optimize import linprog

from ..core import (
    Database,
    ParameterProfile,
    as_bit_matrix,
    min_count_for_threshold,
)
from ..reduction import Learner, LearnerCapability, LearnerError, register_hypothesis

DEFAULT_MAX_FEATURES = 20_000


class FeatureOverflowError(ValueError):
    pass


class LPSolverError(LearnerError):
    pass


# --------------------------------------------------------------------------
# Univariate polynomials with exact rational coefficients


@dataclass(frozen=True)
class UnivariatePoly:
    """``sum_m numerators[m] * x**m / denominator`` with integer numerators."""

    numerators: tuple[int, ...]
    denominator: int = 1

    def __post_init__(self):
        nums = list(self.numerators)
        while len(nums) > 1 and nums[-1] == 0:
            nums.pop()
        if self.denominator <= 0:
            raise ValueError("denominator must be positive")
        object.__setattr__(self, "numerators", tuple(int(c) for c in nums) or (0,))

    @property
    def degree(self) -> int:
        return 0 if self.numerators == (0,) else len(self.numerators) - 1

    @property
    def coefficients(self) -> list[float]:
        """Ascending-degree coefficients as floats."""
        return [float(Fraction(c, self.denominator)) for c in self.numerators]

    def exact(self, x) -> Fraction:
        x = Fraction(x)
        acc = Fraction(0)
        for c in reversed(self.numerators):
            acc = acc * x + c
        return acc / self.denominator

    def __call__(self, x: float) -> float:
        acc = 0.0
        for c in reversed(self.coefficients):
            acc = acc * x + c
        return acc


def _poly_mul(a: list[int], b: list[int]) -> list[int]:
    out = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] += x * y
    return out


def _poly_pow(a: list[int], e: int) -> list[int]:
    out = [1]
    base = list(a)
    while e:
        if e & 1:
            out = _poly_mul(out, base)
        e >>= 1
        if e:
            base = _poly_mul(base, base)
    return out


def _cheb_coeffs(r: int) -> list[int]:
    prev, cur = [1], [0, 1]
    if r == 0:
        return prev
    for _ in range(r - 1):
        nxt = [0] + [2 * c for c in cur]
        for i, c in enumerate(prev):
            nxt[i] -= c
        prev, cur = cur, nxt
    return cur


def chebyshev(r: int) -> UnivariatePoly:
    """Chebyshev polynomial of the first kind, from C_{r+1} = 2x C_r - C_{r-1}."""
    if r < 0:
        raise ValueError("degree must be non-negative")
    return UnivariatePoly(tuple(_cheb_coeffs(r)))


def damping_exponent(eps: float) -> int:
    """ceil(log2(1 / eps)), computed without floating-point logs."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    e = 0
    while 2.0**-e > eps:
        e += 1
    return e


def damping_poly(k: int, eps: float) -> UnivariatePoly:
    """Polynomial ``s`` with ``s(k) = 1`` and ``|s(j)| <= eps`` for integers ``0 <= j < k``.

    ``s(j) = (C_r(j (k+1) / k^2) / C_r((k+1)/k)) ** e`` with ``r = ceil(sqrt k)``
    and ``e = ceil(log2(1/eps))``, kept exact: substituting ``x = j (k+1)/k^2``
    into ``C_r`` and clearing denominators leaves integer coefficients in ``j``.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    r = math.isqrt(k)
    if r * r < k:
        r += 1
    e = damping_exponent(eps)
    c = _cheb_coeffs(r)
    inner = [cm * (k + 1) ** m * k ** (2 * (r - m)) for m, cm in enumerate(c)]
    norm = sum(cm * (k + 1) ** m * k ** (r - m) for m, cm in enumerate(c))
    return UnivariatePoly(tuple(_poly_pow(inner, e)), (k**r * norm) ** e)


# --------------------------------------------------------------------------
# PTF hypotheses and features


def monomials(d: int, degree: int) -> list[tuple[int, ...]]:
    """Subsets of ``range(d)`` of size <= degree, by size then lexicographically."""
    out: list[tuple[int, ...]] = []
    for j in range(min(degree, d) + 1):
        out.extend(combinations(range(d), j))
    return out


def feature_count(d: int, degree: int) -> int:
    return sum(math.comb(d, j) for j in range(min(degree, d) + 1))


def expand_features(queries, degree: int, max_features: int = DEFAULT_MAX_FEATURES) -> np.ndarray:
    """Monomial features ``prod_{i in S} q_i`` for every ``|S| <= degree``.

    Column order follows :func:`monomials`; column 0 is the constant monomial.
    """
    Q = as_bit_matrix(queries)
    d = Q.shape[1]
    if degree > d:
        raise ValueError(f"degree {degree} exceeds dimension {d}")
    count = feature_count(d, degree)
    if count > max_features:
        raise FeatureOverflowError(f"{count} monomials at degree {degree} exceed the cap of {max_features}")
    return _monomial_values(Q, monomials(d, degree))


def _monomial_values(Q: np.ndarray, terms) -> np.ndarray:
    out = np.empty((Q.shape[0], len(terms)), dtype=float)
    Qb = Q.astype(bool)
    for col, S in enumerate(terms):
        out[:, col] = Qb[:, list(S)].all(axis=1) if S else 1.0
    return out


@register_hypothesis("ptf")
class PTFHypothesis:
    """Predicts 1 iff ``sum coeff * prod_{i in S} q_i >= threshold``."""

    def __init__(self, d: int, degree: int, terms: dict, threshold: float = 0.0, info: dict | None = None):
        self.d = d
        self.degree = degree
        self.terms = {tuple(sorted(S)): float(c) for S, c in terms.items() if c != 0}
        self.threshold = float(threshold)
        self.info = info or {}

    def value(self, queries) -> np.ndarray:
        Q = as_bit_matrix(queries, self.d)
        if not self.terms:
            return np.zeros(Q.shape[0])
        keys = list(self.terms)
        coeffs = np.array([self.terms[S] for S in keys])
        return _monomial_values(Q, keys) @ coeffs

    def predict(self, queries) -> np.ndarray:
        return (self.value(queries) >= self.threshold).astype(np.uint8)

    def to_dict(self) -> dict:
        return {
            "type": "ptf",
            "d": self.d,
            "degree": self.degree,
            "terms": [[list(S), c] for S, c in sorted(self.terms.items(), key=lambda kv: (len(kv[0]), kv[0]))],
            "threshold": self.threshold,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PTFHypothesis":
        terms = {tuple(S): c for S, c in data["terms"]}
        return cls(data["d"], data["degree"], terms, data["threshold"])


# --------------------------------------------------------------------------
# Explicit construction


def explicit_ptf(D: Database, t: float, k: int) -> PTFHypothesis:
    """PTF that agrees with ``f^D_t`` on every query of weight at most ``k``.

    Sums ``A_u(q) = s(k - sum_{i: u_i = 0} q_i)`` over the items, with the
    damping polynomial at ``eps = 1/(3n)``, against threshold
    ``ceil(t n) - 1/2``.  Reads the database directly: a test witness only.
    """
    n = D.n
    s = damping_poly(k, Fraction(1, 3 * n))
    # g(S) = s(k - S); its m-th forward difference at 0 is the coefficient of
    # every size-m monomial over the item's zero coordinates.  Monomials larger
    # than k vanish on weight-<=k queries, so they are dropped.
    g = [s.exact(k - j) for j in range(k + 1)]
    top = min(k, s.degree)
    diff = [sum((-1) ** (m - j) * math.comb(m, j) * g[j] for j in range(m + 1)) for m in range(top + 1)]
    uniq, counts = D.histogram
    terms: dict[tuple[int, ...], Fraction] = {}
    for u, cnt in zip(uniq, counts):
        zeros = np.flatnonzero(u == 0).tolist()
        for m in range(min(top, len(zeros)) + 1):
            if diff[m] == 0:
                continue
            contrib = diff[m] * int(cnt)
            for S in combinations(zeros, m):
                terms[S] = terms.get(S, Fraction(0)) + contrib
    theta = min_count_for_threshold(t, n) - 0.5
    return PTFHypothesis(D.d, top, {S: float(c) for S, c in terms.items()}, theta, info={"witness": True})


# --------------------------------------------------------------------------
# Degree schedules


def _snap_ceil(x: float) -> int:
    nearest = round(x)
    if abs(x - nearest) <= 1e-9 * max(1.0, abs(x)):
        return int(nearest)
    return math.ceil(x)


@dataclass(frozen=True)
class DegreeSchedule:
    kind: str  # "sparse" (weight <= k queries) or "full"
    k: int | None = None
    c: float = 1.0

    @classmethod
    def sparse(cls, k: int, c: float = 1.0) -> "DegreeSchedule":
        return cls("sparse", k, c)

    @classmethod
    def full(cls, c: float = 1.0) -> "DegreeSchedule":
        return cls("full", None, c)


def degree_schedule(sched: DegreeSchedule, n: float, d: int) -> int:
    if n < 2:
        raise ValueError("n must be at least 2")
    ln_n = math.log(n)
    if sched.kind == "sparse":
        raw = sched.c * math.sqrt(sched.k * ln_n)
    elif sched.kind == "full":
        raw = sched.c * d ** (1 / 3) * ln_n ** (2 / 3)
    else:
        raise ValueError(f"unknown schedule kind {sched.kind!r}")
    return min(max(_snap_ceil(raw), 1), d)


# --------------------------------------------------------------------------
# LP learner


def _solve(c, A_ub, b_ub):
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=(0, None), method="highs")
    if res.status == 0:
        return res.x
    if res.status == 2:
        return None
    raise LPSolverError(f"LP solver failed: {res.message}")


def lp_learn(
    queries,
    labels,
    degree: int,
    max_degree: int | None = None,
    max_features: int = DEFAULT_MAX_FEATURES,
    hinge_l1: float = 1e-4,
) -> PTFHypothesis:
    """Fit a PTF by linear programming.

    Finds the least-L1 coefficient vector with unit margin on every sample
    (``c . phi(q) >= 1`` for label 1, ``<= -1`` for label 0), raising the
    degree up to ``max_degree`` while infeasible.  If no degree works, the
    degree-``degree`` minimiser of total hinge violation is returned with
    ``info["status"] == "imperfect"``.
    """
    Q = as_bit_matrix(queries)
    y = np.asarray(labels).astype(int)
    if Q.shape[0] == 0 or Q.shape[0] != y.shape[0]:
        raise ValueError("need at least one labelled sample")
    d = Q.shape[1]
    max_degree = d if max_degree is None else min(max_degree, d)
    degree = min(degree, d)
    # Merge repeated points; conflicting labels keep both rows (never separable).
    rows, inverse = np.unique(np.column_stack([Q, y]), axis=0, return_inverse=True)
    mult = np.bincount(inverse.ravel(), minlength=rows.shape[0]).astype(float)
    Qu, yu = rows[:, :d].astype(np.uint8), rows[:, d]
    sgn = np.where(yu == 1, 1.0, -1.0)
    for a in range(degree, max(degree, max_degree) + 1):
        Phi = expand_features(Qu, a, max_features)
        F = Phi.shape[1]
        M = sgn[:, None] * Phi
        x = _solve(np.ones(2 * F), np.hstack([-M, M]), -np.ones(len(yu)))
        if x is not None:
            coef = x[:F] - x[F:]
            return _hypothesis(d, a, coef, {"status": "feasible", "degree": a, "samples": int(Q.shape[0])})
    Phi = expand_features(Qu, degree, max_features)
    F = Phi.shape[1]
    M = sgn[:, None] * Phi
    m = len(yu)
    cost = np.concatenate([np.full(2 * F, hinge_l1), mult])
    A = np.hstack([-M, M, -np.eye(m)])
    x = _solve(cost, A, -np.ones(m))
    if x is None:
        raise LPSolverError("hinge-loss LP reported infeasible")
    coef = x[:F] - x[F : 2 * F]
    h = _hypothesis(d, degree, coef, {"status": "imperfect", "degree": degree, "samples": int(Q.shape[0])})
    h.info["train_error"] = float(np.dot(mult, h.predict(Qu) != yu) / mult.sum())
    return h


def _hypothesis(d: int, degree: int, coef: np.ndarray, info: dict) -> PTFHypothesis:
    terms = {S: c for S, c in zip(monomials(d, degree), coef) if abs(c) > 1e-12}
    return PTFHypothesis(d, degree, terms, 0.0, info)


class PTFLearner(Learner):
    """Distribution-free LP learner; needs labelled samples only.

    ``sparsity`` selects the weight-<=k degree schedule, ``None`` the
    full-cube one.  ``c_samples`` scales the per-feature sample count.
    """

    capability = LearnerCapability.SAMPLING_ONLY

    def __init__(
        self,
        d: int,
        profile: ParameterProfile,
        sparsity: int | None = None,
        c_samples: float = 1.0,
        max_degree: int | None = None,
        max_features: int = DEFAULT_MAX_FEATURES,
    ):
        self.d = d
        self.profile = profile
        self.sparsity = sparsity
        self.c_samples = c_samples
        self.max_degree = max_degree
        self.max_features = max_features
        if sparsity is None:
            self.schedule = DegreeSchedule.full(profile.c_degree_full)
        else:
            self.schedule = DegreeSchedule.sparse(sparsity, profile.c_degree_sparse)

    def degree(self, n: int) -> int:
        return degree_schedule(self.schedule, max(n, 2), self.d)

    def budget(self, n, gamma, beta):
        per_feature = math.ceil(self.c_samples * math.log(1.0 / beta) / gamma)
        return feature_count(self.d, self.degree(n)) * max(per_feature, 1)

    def train(self, n, t, gamma, beta, queries, labels, evaluate=None, rng=None):
        return lp_learn(queries, labels, self.degree(n), self.max_degree, self.max_features)

    def describe(self):
        return {
            **super().describe(),
            "schedule": self.schedule.kind,
            "sparsity": self.sparsity,
            "c_samples": self.c_samples,
            "max_degree": self.max_degree,
        }
