"""Majority-of-parities learner: exhaustive low-weight parity search plus smooth boosting."""
from __future__ import annotations

import math

import numpy as np

from ..core import as_bit_matrix, as_bits, enumerate_ball
from ..reduction import Learner, LearnerCapability, LearnerError, register_hypothesis


def parity_eval(a, q) -> int:
    a = np.asarray(a)
    q = np.asarray(q)
    if a.shape != q.shape:
        raise ValueError("parity index and query lengths differ")
    return -1 if int(np.dot(a.astype(np.int64), q.astype(np.int64))) & 1 else 1


def characters(d: int, max_weight: int | None = None) -> np.ndarray:
    """Parity indices of weight <= max_weight in lexicographic order (all-zeros first)."""
    w = d if max_weight is None else max_weight
    if not 0 <= w <= d:
        raise ValueError("max_weight must lie in [0, d]")
    A = enumerate_ball(d, w)
    order = np.lexsort(A.T[::-1])
    return A[order]


def character_table(queries, chars: np.ndarray) -> np.ndarray:
    """``T[j, c] = chi_{chars[c]}(queries[j])`` in the +-1 convention."""
    Q = as_bit_matrix(queries).astype(np.int32)
    par = (Q @ chars.T.astype(np.int32)) & 1
    return (1 - 2 * par).astype(np.int8)


def parity_correlations(queries, labels_pm, weights, chars: np.ndarray, table: np.ndarray | None = None) -> np.ndarray:
    """``sum_j w_j y_j chi_a(q_j) / sum_j w_j`` for every character ``a``."""
    w = np.asarray(weights, dtype=float)
    if (w < 0).any():
        raise ValueError("weights must be non-negative")
    total = w.sum()
    if total <= 0:
        raise ValueError("all weights are zero")
    if table is None:
        table = character_table(queries, chars)
    return ((w * np.asarray(labels_pm, dtype=float)) @ table) / total


def weak_parity_learner(queries, labels_pm, weights, max_weight: int, table=None, chars=None):
    """Best-correlated parity of weight <= max_weight; ties go to the lexicographically smallest."""
    Q = as_bit_matrix(queries)
    if chars is None:
        chars = characters(Q.shape[1], max_weight)
    corr = parity_correlations(Q, labels_pm, weights, chars, table)
    mag = np.abs(corr)
    best = int(np.flatnonzero(mag >= mag.max() - 1e-12)[0])
    return chars[best].copy(), float(corr[best])


@register_hypothesis("parity_majority")
class ParityMajorityHypothesis:
    """Unweighted vote of signed parities; predicts 1 when the vote is >= 0."""

    def __init__(self, d: int, stages: list[tuple[np.ndarray, int]], info: dict | None = None):
        if not stages:
            raise ValueError("need at least one stage")
        self.d = d
        self.stages = [(as_bits(a, d), int(s)) for a, s in stages]
        self.info = info or {}

    def votes(self, queries) -> np.ndarray:
        Q = as_bit_matrix(queries, self.d)
        A = np.array([a for a, _ in self.stages], dtype=np.uint8)
        signs = np.array([s for _, s in self.stages], dtype=np.int64)
        return character_table(Q, A).astype(np.int64) @ signs

    def predict(self, queries) -> np.ndarray:
        return (self.votes(queries) >= 0).astype(np.uint8)

    def to_dict(self) -> dict:
        return {
            "type": "parity_majority",
            "d": self.d,
            "stages": [[a.tolist(), s] for a, s in self.stages],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ParityMajorityHypothesis":
        return cls(data["d"], [(np.array(a, dtype=np.uint8), s) for a, s in data["stages"]])


class SmoothnessViolation(AssertionError):
    pass


def smooth_boost(
    queries,
    labels,
    gamma: float,
    beta: float,
    mu_max: float,
    max_weight: int | None = None,
    evaluate=None,
    advantage_floor: float = 0.01,
    round_cap_const: float = 4.0,
    max_rounds: int | None = 10_000,
    step: float = 0.2,
) -> ParityMajorityHypothesis:
    """Boost exhaustive parity search into a majority of parities.

    The per-sample measure is 1 on points the current vote gets wrong (or
    ties) and ``(1 - step) ** (margin / 2)`` elsewhere, as in smooth boosting.
    The round distribution therefore has density at most ``1 / mass``
    relative to the base; the loop stops before that could exceed ``mu_max``,
    once the weighted training error is at most ``gamma / 2``, or at the round
    cap ``ceil(round_cap_const / (gamma * a_min^2))`` where ``a_min`` is the
    smallest advantage used so far.

    With ``evaluate``, the base weights of the distinct sample points are the
    masses returned by the restricted evaluation callback; it is only ever
    called on sampled points.
    """
    if mu_max < 1:
        raise ValueError("mu_max must be at least 1")
    Q = as_bit_matrix(queries)
    y = np.asarray(labels).astype(int)
    if Q.shape[0] == 0:
        raise LearnerError("no training samples")
    d = Q.shape[1]
    w_max = d if max_weight is None else max_weight
    pts, inverse, mult = np.unique(Q, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    # Labels come from a deterministic oracle, so repeated points agree; keep the first.
    lab = np.zeros(pts.shape[0], dtype=int)
    lab[inverse[::-1]] = y[::-1]
    if evaluate is not None:
        base = np.zeros(pts.shape[0])
        for j, q in enumerate(pts):
            m, _ = evaluate(q)
            base[j] = m
        if base.sum() <= 0:
            raise LearnerError("evaluation callback returned zero mass for every sample")
    else:
        base = mult.astype(float)
    base = base / base.sum()
    s = 2 * lab - 1
    chars = characters(d, w_max)
    table = character_table(pts, chars)
    margin = np.zeros(pts.shape[0])
    stages: list[tuple[np.ndarray, int]] = []
    a_min = 1.0
    stop = "round_cap"
    rounds = 0
    err = 1.0
    max_density = 0.0
    while True:
        cap = math.ceil(round_cap_const / (gamma * a_min**2))
        if max_rounds is not None:
            cap = min(cap, max_rounds)
        if rounds >= cap:
            break
        M = np.where(margin <= 0, 1.0, (1.0 - step) ** (margin / 2.0))
        mass = float(base @ M)
        if mass * mu_max < 1.0:
            stop = "smoothness"
            break
        dist = base * M / mass
        density = M / mass
        if density.max() > mu_max * (1 + 1e-9):
            raise SmoothnessViolation(f"density {density.max()} exceeds {mu_max}")
        max_density = max(max_density, float(density.max()))
        a, corr = weak_parity_learner(pts, s, dist, w_max, table=table, chars=chars)
        if abs(corr) < advantage_floor:
            if not stages:
                raise LearnerError(f"no parity has advantage above {advantage_floor}")
            stop = "no_advantage"
            break
        sign = 1 if corr >= 0 else -1
        stages.append((a, sign))
        a_min = min(a_min, abs(corr))
        idx = int(np.flatnonzero((chars == a).all(axis=1))[0])
        margin += s * sign * table[:, idx]
        rounds += 1
        wrong = (margin < 0) | ((margin == 0) & (s < 0))
        err = float(base @ wrong)
        if err <= gamma / 2:
            stop = "target"
            break
    info = {
        "rounds": rounds,
        "stop": stop,
        "train_error": err,
        "min_advantage": a_min,
        "max_density": max_density,
        "samples": int(Q.shape[0]),
    }
    return ParityMajorityHypothesis(d, stages, info)


class FourierLearner(Learner):
    """Smooth-boosted parity learner for thresholds over uniform-like query distributions."""

    capability = LearnerCapability.NEEDS_RESTRICTED_EVALUATION

    def __init__(
        self,
        d: int,
        max_weight: int | None = None,
        c_samples: float = 1.0,
        advantage_floor: float = 0.01,
        round_cap_const: float = 4.0,
        max_rounds: int | None = 10_000,
        step: float = 0.2,
        mu_max: float | None = None,
    ):
        self.d = d
        self.max_weight = d if max_weight is None else max_weight
        self.c_samples = c_samples
        self.advantage_floor = advantage_floor
        self.round_cap_const = round_cap_const
        self.max_rounds = max_rounds
        self.step = step
        self.mu_max = mu_max

    def rounds_cap(self, gamma: float) -> int:
        cap = math.ceil(self.round_cap_const / (gamma * self.advantage_floor**2))
        return cap if self.max_rounds is None else min(cap, self.max_rounds)

    def budget(self, n, gamma, beta):
        return max(1, math.ceil(self.c_samples * self.rounds_cap(gamma) * math.ceil(math.log(1.0 / beta) / gamma)))

    def train(self, n, t, gamma, beta, queries, labels, evaluate=None, rng=None):
        mu = self.mu_max if self.mu_max is not None else max(1.0, 2.0 / gamma)
        return smooth_boost(
            queries,
            labels,
            gamma,
            beta,
            mu,
            self.max_weight,
            evaluate=evaluate,
            advantage_floor=self.advantage_floor,
            round_cap_const=self.round_cap_const,
            max_rounds=self.max_rounds,
            step=self.step,
        )

    def describe(self):
        return {
            **super().describe(),
            "max_weight": self.max_weight,
            "c_samples": self.c_samples,
            "advantage_floor": self.advantage_floor,
            "max_rounds": self.max_rounds,
            "step": self.step,
        }
