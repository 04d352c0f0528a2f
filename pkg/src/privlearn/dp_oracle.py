"""Budgeted threshold oracle: the only path from the private database to a release.

Each distinct query description ``q`` gets one Laplace draw ``N_q``; the noisy
answer ``A_q = f^D(q) + N_q`` is cached and reused for every threshold ``q``
is later paired with.  Distinct queries beyond the budget are refused.
"""
from __future__ import annotations

import enum
import math
import threading
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .core import Database, DimensionError, PredicateSpec, as_bits


class OracleAnswer(enum.Enum):
    ZERO = 0
    ONE = 1
    BOTTOM = "bottom"
    BUDGET_EXCEEDED = "budget_exceeded"

    @property
    def is_label(self) -> bool:
        return self in (OracleAnswer.ZERO, OracleAnswer.ONE)


class BudgetExceeded(RuntimeError):
    """Raised by callers that treat a refused oracle query as fatal."""


def laplace_from_uniform(u, scale: float):
    """Inverse CDF of the zero-mean Laplace distribution; ``u`` in (0, 1).

    Equal to ``-scale * sign(u - 1/2) * ln(1 - 2|u - 1/2|)``, evaluated
    branchwise so that ``u - 1/2`` never cancels in the tails.
    """
    u = np.asarray(u, dtype=float)
    lo = np.minimum(u, 1.0 - u)
    with np.errstate(divide="ignore"):
        mag = -scale * np.log(2.0 * lo)
    out = np.where(u < 0.5, -mag, mag)
    return float(out) if out.ndim == 0 else out


def laplace_sample(scale: float, rng: np.random.Generator) -> float:
    if not scale > 0:
        raise ValueError(f"Laplace scale must be positive, got {scale}")
    u = rng.random()
    while u == 0.0:
        u = rng.random()
    return laplace_from_uniform(u, scale)


def laplace_samples(scale: float, rng: np.random.Generator, size: int) -> np.ndarray:
    """Vectorised :func:`laplace_sample`; consumes the generator identically."""
    if not scale > 0:
        raise ValueError(f"Laplace scale must be positive, got {scale}")
    u = rng.random(size)
    zero = u == 0.0
    while zero.any():
        u[zero] = rng.random(int(zero.sum()))
        zero = u == 0.0
    return laplace_from_uniform(u, scale)


@dataclass(frozen=True)
class OracleConfig:
    tolerance: float
    budget: int
    epsilon: float
    n: int

    def __post_init__(self):
        if not 0 < self.tolerance < 1:
            raise ValueError("tolerance must lie in (0, 1)")
        if self.budget < 1:
            raise ValueError("budget must be a positive integer")
        if not self.epsilon > 0 or self.n < 1:
            raise ValueError("epsilon and n must be positive")

    @property
    def scale(self) -> float:
        return self.budget / (self.epsilon * self.n)


@dataclass(frozen=True)
class PrivacyReport:
    distinct_count: int
    budget: int
    laplace_scale: float
    epsilon: float
    exhausted: bool

    def to_dict(self) -> dict:
        return asdict(self)


class ThresholdOracle:
    """Answers ``(q, t)`` with 1, 0 or bottom from a cached noisy count.

    ``noise`` overrides the Laplace draw (called with no arguments once per
    distinct query); tests use it to inject deterministic noise.
    """

    def __init__(
        self,
        database: Database,
        predicate: PredicateSpec,
        config: OracleConfig,
        rng: np.random.Generator | None = None,
        noise: Callable[[], float] | None = None,
    ):
        if config.n != database.n:
            raise ValueError("oracle config n does not match the database size")
        if rng is None and noise is None:
            raise ValueError("either rng or noise must be supplied")
        self._db = database
        self._predicate = predicate
        self.config = config
        self._rng = rng
        self._noise_fn = noise
        self._answers: dict[bytes, float] = {}
        self._noise: dict[bytes, float] = {}
        self._exhausted = False
        self._lock = threading.Lock()

    @property
    def d(self) -> int:
        return self._db.d

    @property
    def distinct_count(self) -> int:
        return len(self._answers)

    @property
    def exhausted(self) -> bool:
        return self._exhausted

    def has_seen(self, q) -> bool:
        """Whether ``q`` already holds a cached answer (depends only on past queries)."""
        return as_bits(q, self.d).tobytes() in self._answers

    def noise_of(self, q) -> float | None:
        """The Laplace draw used for ``q`` (test instrumentation)."""
        return self._noise.get(as_bits(q, self.d).tobytes())

    def noisy_answer(self, q) -> float | None:
        return self._answers.get(as_bits(q, self.d).tobytes())

    def _draw(self) -> float:
        if self._noise_fn is not None:
            return float(self._noise_fn())
        return laplace_sample(self.config.scale, self._rng)

    def query(self, q, t: float) -> OracleAnswer:
        if not 0 <= t < 1:
            raise ValueError(f"threshold must lie in [0, 1), got {t}")
        q = np.asarray(q)
        if q.ndim != 1 or q.shape[0] != self.d:
            raise DimensionError(f"query length {q.shape} does not match dimension {self.d}")
        key = q.astype(np.uint8).tobytes()
        with self._lock:
            if self._exhausted:
                return OracleAnswer.BUDGET_EXCEEDED
            a = self._answers.get(key)
            if a is None:
                if len(self._answers) >= self.config.budget:
                    self._exhausted = True
                    return OracleAnswer.BUDGET_EXCEEDED
                exact = int(self._db.answer_numerators(self._predicate, q[None, :])[0]) / self._db.n
                noise = self._draw()
                a = exact + noise
                self._noise[key] = noise
                self._answers[key] = a
        margin = 2.0 * self.config.tolerance / 3.0
        if a >= t + margin:
            return OracleAnswer.ONE
        if a <= t - margin:
            return OracleAnswer.ZERO
        return OracleAnswer.BOTTOM

    def privacy_report(self) -> PrivacyReport:
        return PrivacyReport(
            distinct_count=self.distinct_count,
            budget=self.config.budget,
            laplace_scale=self.config.scale,
            epsilon=self.config.epsilon,
            exhausted=self._exhausted,
        )


def privacy_report(oracle: ThresholdOracle) -> PrivacyReport:
    return oracle.privacy_report()


def laplace_tail(scale: float, x: float) -> float:
    """P(|N| > x) for N ~ Lap(scale)."""
    return math.exp(-x / scale)
