"""Private release by learning one threshold function per grid point.

The driver samples ``b_iter`` queries once, asks the threshold oracle about
every sample at each threshold ``t_i = i / (k + 1)``, trains the learner on the
non-rejected answers and finally averages the ``k`` boolean hypotheses.
"""
from __future__ import annotations

import enum
import json
import time
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Protocol

import numpy as np

from .core import (
    BudgetMode,
    Database,
    DerivedParams,
    ParameterProfile,
    PredicateSpec,
    ReleaseParams,
    as_bit_matrix,
    as_bits,
    check_db_size,
    derive_params,
    rng_stream,
)
from .distributions import Capability, CapabilityError, QueryDistribution
from .dp_oracle import BudgetExceeded, OracleAnswer, OracleConfig, PrivacyReport, ThresholdOracle

SYNOPSIS_FORMAT = "privlearn.synopsis"
SYNOPSIS_VERSION = 1


class LearnerCapability(str, enum.Enum):
    SAMPLING_ONLY = "sampling_only"
    NEEDS_RESTRICTED_EVALUATION = "needs_restricted_evaluation"


class LearnerError(RuntimeError):
    """The learner could not produce a hypothesis (a confidence failure)."""


class EvaluationAllowanceExceeded(RuntimeError):
    pass


class Hypothesis(Protocol):
    def predict(self, queries) -> np.ndarray: ...

    def to_dict(self) -> dict: ...


_HYPOTHESIS_TYPES: dict[str, Callable[[dict], Any]] = {}


def register_hypothesis(tag: str):
    def deco(cls):
        cls.type_tag = tag
        _HYPOTHESIS_TYPES[tag] = cls.from_dict
        return cls

    return deco


def hypothesis_from_dict(data: dict):
    try:
        loader = _HYPOTHESIS_TYPES[data["type"]]
    except KeyError:
        raise ValueError(f"unknown hypothesis type {data.get('type')!r}") from None
    return loader(data)


EvalCallback = Callable[[np.ndarray], "tuple[float, int | None]"]


class Learner(ABC):
    """A non-private learner for n-thresholds, used as a black box."""

    capability: LearnerCapability = LearnerCapability.SAMPLING_ONLY

    @abstractmethod
    def budget(self, n: int, gamma: float, beta: float) -> int:
        """Number of labelled examples (and evaluation queries) needed."""

    @abstractmethod
    def train(
        self,
        n: int,
        t: float,
        gamma: float,
        beta: float,
        queries: np.ndarray,
        labels: np.ndarray,
        evaluate: EvalCallback | None = None,
        rng: np.random.Generator | None = None,
    ) -> Hypothesis:
        """Fit a hypothesis to 0/1 ``labels`` of the rows of ``queries``."""

    @property
    def budget_mode(self) -> BudgetMode:
        if self.capability is LearnerCapability.SAMPLING_ONLY:
            return BudgetMode.SAMPLING_ONLY
        return BudgetMode.EVALUATION_QUERIES

    def describe(self) -> dict:
        return {"name": type(self).__name__, "capability": self.capability.value}


# --------------------------------------------------------------------------
# Synopsis


def aggregate(predictions) -> np.ndarray | float:
    """Count of thresholds reported as cleared, divided by ``k + 1``.

    ``predictions`` has shape ``(k,)`` for one query or ``(k, m)`` for many.
    """
    p = np.asarray(predictions)
    k = p.shape[0]
    if k < 1:
        raise ValueError("need at least one hypothesis")
    out = p.sum(axis=0) / (k + 1)
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class Synopsis:
    variant: str
    k: int
    value: float | None = None
    hypotheses: list = field(default_factory=list)

    @classmethod
    def constant(cls, value: float, k: int) -> "Synopsis":
        return cls("constant", k, value=float(value))

    @classmethod
    def aggregated(cls, hypotheses: list) -> "Synopsis":
        return cls("aggregated", len(hypotheses), hypotheses=list(hypotheses))

    @property
    def spacing(self) -> float:
        return 1.0 / (self.k + 1)

    def evaluate_many(self, queries) -> np.ndarray:
        Q = as_bit_matrix(queries)
        if self.variant == "constant":
            return np.full(Q.shape[0], self.value, dtype=float)
        preds = np.array([np.asarray(h.predict(Q), dtype=np.int64) for h in self.hypotheses])
        return np.asarray(aggregate(preds), dtype=float)

    def evaluate(self, q) -> float:
        return float(self.evaluate_many(np.asarray(q)[None, :])[0])

    def to_dict(self) -> dict:
        out = {
            "format": SYNOPSIS_FORMAT,
            "version": SYNOPSIS_VERSION,
            "variant": self.variant,
            "k": self.k,
            "spacing": self.spacing,
        }
        if self.variant == "constant":
            out["value"] = self.value
        else:
            out["hypotheses"] = [h.to_dict() for h in self.hypotheses]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Synopsis":
        if data.get("format") != SYNOPSIS_FORMAT:
            raise ValueError("not a synopsis file")
        if data.get("version") != SYNOPSIS_VERSION:
            raise ValueError(f"unsupported synopsis version {data.get('version')!r}")
        if data["variant"] == "constant":
            return cls.constant(data["value"], data["k"])
        if data["variant"] == "aggregated":
            hyps = [hypothesis_from_dict(h) for h in data["hypotheses"]]
            if len(hyps) != data["k"]:
                raise ValueError("hypothesis count does not match k")
            return cls.aggregated(hyps)
        raise ValueError(f"unknown synopsis variant {data['variant']!r}")

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "Synopsis":
        return cls.from_dict(json.loads(Path(path).read_text()))


def evaluate_synopsis(S: Synopsis, q) -> float:
    return S.evaluate(q)


# --------------------------------------------------------------------------
# Transcript


@dataclass
class IterationRecord:
    index: int
    threshold: float
    accepted: int
    accepted_fraction: float
    outcome: str
    eval_queries: int = 0
    fresh_eval_queries: int = 0
    learner: dict = field(default_factory=dict)


@dataclass
class RunTranscript:
    seed: int
    derived: dict
    learner: dict
    iterations: list[IterationRecord] = field(default_factory=list)
    privacy: dict = field(default_factory=dict)
    outcome: str = ""
    wall_clock: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))


# --------------------------------------------------------------------------
# Evaluation queries


class EvaluationContext:
    """Restricted evaluation access for the learner at one threshold.

    Answers ``(G[q] * b_iter / |B_i|, label)`` or ``(0, None)`` when the
    oracle rejects ``q``.  Queries on points the oracle has not seen before
    are limited to ``allowance`` per threshold so the run stays in budget.
    """

    def __init__(
        self,
        oracle: ThresholdOracle,
        G: QueryDistribution,
        t: float,
        b_iter: int,
        accepted: int,
        allowance: int,
    ):
        if G.capability is not Capability.SAMPLING_AND_EVALUATION:
            raise CapabilityError("evaluation queries need a distribution with evaluation access")
        self._oracle = oracle
        self._G = G
        self.t = t
        self.scale = b_iter / accepted
        self.allowance = allowance
        self.calls = 0
        self.fresh = 0

    def __call__(self, q) -> tuple[float, int | None]:
        return answer_eval_query(self, q)


def answer_eval_query(ctx: EvaluationContext, q) -> tuple[float, int | None]:
    q = as_bits(q, ctx._oracle.d)
    if not ctx._oracle.has_seen(q):
        if ctx.fresh >= ctx.allowance:
            raise EvaluationAllowanceExceeded(f"learner exceeded {ctx.allowance} fresh evaluation queries")
        ctx.fresh += 1
    ctx.calls += 1
    ans = ctx._oracle.query(q, ctx.t)
    if ans is OracleAnswer.BUDGET_EXCEEDED:
        raise BudgetExceeded("threshold oracle budget exhausted during an evaluation query")
    if ans is OracleAnswer.BOTTOM:
        return 0.0, None
    return ctx._G.mass(q) * ctx.scale, ans.value


# --------------------------------------------------------------------------
# Driver


def priv_learn(
    D: Database,
    P: PredicateSpec,
    G: QueryDistribution,
    rp: ReleaseParams,
    learner: Learner,
    profile: ParameterProfile,
    seed: int,
    query_space_size: int | None = None,
    oracle_noise: Callable[[], float] | None = None,
) -> tuple[Synopsis, RunTranscript]:
    """Release a synopsis of ``f^D`` under ``rp.epsilon``-differential privacy.

    Raises ``InsufficientDatabaseError`` before touching the data when ``D``
    is smaller than the derived minimum, and ``BudgetExceeded`` if the oracle
    ever refuses a query (a parameter-derivation bug, never a data condition).
    """
    if G.d != D.d:
        raise ValueError(f"distribution dimension {G.d} does not match database dimension {D.d}")
    if query_space_size is None:
        query_space_size = G.support_size
    dp = derive_params(rp, query_space_size, learner.budget, learner.budget_mode, profile)
    check_db_size(D, dp)
    oracle = ThresholdOracle(
        D,
        P,
        OracleConfig(tolerance=dp.oracle_tolerance, budget=dp.b_total, epsilon=rp.epsilon, n=D.n),
        rng=rng_stream(seed, "oracle"),
        noise=oracle_noise,
    )
    return run_rounds(oracle, G, rp, dp, learner, seed)


def run_rounds(
    oracle: ThresholdOracle,
    G: QueryDistribution,
    rp: ReleaseParams,
    dp: DerivedParams,
    learner: Learner,
    seed: int,
) -> tuple[Synopsis, RunTranscript]:
    """The learning loop; sees the data only through ``oracle``."""
    start = time.perf_counter()
    transcript = RunTranscript(seed=seed, derived=dp.to_dict(), learner=learner.describe())
    samples = G.sample_many(rng_stream(seed, "sampling"), dp.b_iter)
    learner_rng = rng_stream(seed, "learner")
    needs_eval = learner.capability is LearnerCapability.NEEDS_RESTRICTED_EVALUATION
    hypotheses = []
    synopsis = None
    for i, t in enumerate(dp.thresholds, start=1):
        answers = [oracle.query(q, t) for q in samples]
        if any(a is OracleAnswer.BUDGET_EXCEEDED for a in answers):
            raise BudgetExceeded(f"oracle budget {dp.b_total} exhausted at threshold {i}")
        accepted = np.array([a.is_label for a in answers])
        n_acc = int(accepted.sum())
        frac = n_acc / dp.b_iter
        record = IterationRecord(index=i, threshold=t, accepted=n_acc, accepted_fraction=frac, outcome="")
        transcript.iterations.append(record)
        if frac < rp.gamma / 2:
            record.outcome = "early_stop"
            synopsis = Synopsis.constant(t, dp.k)
            break
        labels = np.array([a.value for a, ok in zip(answers, accepted) if ok], dtype=np.uint8)
        ctx = None
        if needs_eval:
            ctx = EvaluationContext(oracle, G, t, dp.b_iter, n_acc, allowance=dp.b_base)
        h = learner.train(
            dp.n_prime,
            t,
            dp.gamma_prime,
            dp.beta_prime,
            samples[accepted],
            labels,
            evaluate=ctx,
            rng=learner_rng,
        )
        if oracle.exhausted:
            raise BudgetExceeded(f"oracle budget {dp.b_total} exhausted while training at threshold {i}")
        record.outcome = "trained"
        record.learner = dict(getattr(h, "info", {}) or {})
        if ctx is not None:
            record.eval_queries = ctx.calls
            record.fresh_eval_queries = ctx.fresh
        hypotheses.append(h)
    if synopsis is None:
        synopsis = Synopsis.aggregated(hypotheses)
    transcript.outcome = synopsis.variant
    transcript.privacy = oracle.privacy_report().to_dict()
    transcript.wall_clock = time.perf_counter() - start
    return synopsis, transcript
