"""Synthetic data, brute-force answers, accuracy scoring and run orchestration."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from ..core import (
    Database,
    PredicateKind,
    PredicateSpec,
    adjacent,
    as_bit_matrix,
    derive_params,
    rng_stream,
)
from ..distributions import (
    MAX_ENUMERATION,
    QueryDistribution,
    SamplingOnlyView,
    distribution_from_dict,
)
from ..dp_oracle import laplace_samples
from ..learners import FourierLearner, PTFLearner
from ..reduction import Learner, RunTranscript, Synopsis, priv_learn
from .config import ExperimentConfig

# --------------------------------------------------------------------------
# Database generators


@dataclass(frozen=True)
class BernoulliIID:
    p: float = 0.5


@dataclass(frozen=True)
class Clustered:
    centers: tuple
    flip_prob: float = 0.1


@dataclass(frozen=True)
class FromFile:
    path: str


def gen_database(spec, n: int | None, d: int, rng: np.random.Generator) -> Database:
    if isinstance(spec, FromFile):
        D = Database.from_csv(spec.path, d)
        if n is not None and D.n != n:
            raise ValueError(f"{spec.path}: expected {n} rows, found {D.n}")
        return D
    if n is None or n < 1:
        raise ValueError("n must be at least 1")
    if isinstance(spec, BernoulliIID):
        if not 0 <= spec.p <= 1:
            raise ValueError("p must lie in [0, 1]")
        return Database((rng.random((n, d)) < spec.p).astype(np.uint8))
    if isinstance(spec, Clustered):
        C = as_bit_matrix(spec.centers, d)
        if not 0 <= spec.flip_prob <= 1:
            raise ValueError("flip_prob must lie in [0, 1]")
        which = rng.integers(0, C.shape[0], size=n)
        flips = (rng.random((n, d)) < spec.flip_prob).astype(np.uint8)
        return Database(C[which] ^ flips)
    raise TypeError(f"unknown database spec {spec!r}")


def database_spec(cfg: ExperimentConfig):
    db = cfg.database
    if db["kind"] == "bernoulli":
        return BernoulliIID(float(db["p"]))
    if db["kind"] == "clustered":
        return Clustered(tuple(map(tuple, db["centers"])), float(db["flip_prob"]))
    return FromFile(str(cfg.resolve(db["path"])))


def build_database(cfg: ExperimentConfig) -> Database:
    return gen_database(database_spec(cfg), cfg.database.get("n"), cfg.d, rng_stream(cfg.seed, "data"))


# --------------------------------------------------------------------------
# Brute-force answers (independent of the core predicate code path)


@dataclass
class AnswerTable:
    queries: np.ndarray
    numerators: np.ndarray
    n: int

    @property
    def values(self) -> np.ndarray:
        return self.numerators / self.n

    def fraction(self, i: int) -> Fraction:
        return Fraction(int(self.numerators[i]), self.n)


def _pack(bits: np.ndarray) -> np.ndarray:
    weights = np.left_shift(np.uint64(1), np.arange(bits.shape[1], dtype=np.uint64))
    return (bits.astype(np.uint64) * weights).sum(axis=1, dtype=np.uint64)


def brute_force_answers(D: Database, P: PredicateSpec, queries, limit: int = MAX_ENUMERATION, chunk: int = 512) -> AnswerTable:
    """Exact ``f^D(q)`` for every row of ``queries``.

    Conjunctions use the complement form (``q`` fails on ``u`` iff some
    required coordinate of ``u`` is 0); parities use popcounts of packed
    integers; custom predicates are evaluated item by item.
    """
    Q = as_bit_matrix(queries, D.d)
    if Q.shape[0] > limit:
        raise ValueError(f"{Q.shape[0]} queries exceed the enumeration limit {limit}")
    U, counts = D.histogram
    num = np.zeros(Q.shape[0], dtype=np.int64)
    if P.kind is PredicateKind.CUSTOM:
        for a, q in enumerate(Q):
            num[a] = sum(int(c) for u, c in zip(U, counts) if P.custom_eval(q, u))
        return AnswerTable(Q, num, D.n)
    if D.d > 63:
        raise ValueError("brute-force packing supports d <= 63")
    pu = _pack(U)
    zeros = _pack(1 - U)
    for s in range(0, Q.shape[0], chunk):
        pq = _pack(Q[s : s + chunk])[:, None]
        if P.kind is PredicateKind.MONOTONE_CONJUNCTION:
            hit = (pq & zeros[None, :]) == 0
        else:
            hit = (np.bitwise_count(pq & pu[None, :]) & 1) == 1
        num[s : s + chunk] = hit.astype(np.int64) @ counts
    return AnswerTable(Q, num, D.n)


# --------------------------------------------------------------------------
# Accuracy


@dataclass
class AccuracyReport:
    mode: str
    num_queries: int
    alpha: float
    gamma: float
    bad_mass: float
    max_error: float
    mean_error: float
    quantiles: dict
    passed: bool
    synopsis_variant: str
    privacy: dict = field(default_factory=dict)
    derived: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.bad_mass <= 1.0 + 1e-12:
            raise ValueError("bad_mass must lie in [0, 1]")
        self.bad_mass = min(self.bad_mass, 1.0)

    def to_dict(self, include_timings: bool = False) -> dict:
        out = asdict(self)
        if not include_timings:
            out.pop("timings")
        return out


def _masses(G: QueryDistribution, points: np.ndarray) -> np.ndarray:
    inner = G._inner if isinstance(G, SamplingOnlyView) else G
    return np.array([inner._mass(p) for p in points], dtype=float)


def evaluation_set(G: QueryDistribution, samples: int, rng: np.random.Generator) -> tuple[str, np.ndarray, np.ndarray]:
    """``(mode, queries, weights)``; exhaustive whenever the support fits."""
    if G.support_size <= MAX_ENUMERATION:
        pts = G.support()
        w = _masses(G, pts)
        return "exhaustive", pts, w / w.sum()
    pts = G.sample_many(rng, samples)
    return "sampled", pts, np.full(samples, 1.0 / samples)


def score(
    S: Synopsis,
    table: AnswerTable,
    weights: np.ndarray,
    alpha: float,
    gamma: float,
    mode: str = "exhaustive",
) -> tuple[AccuracyReport, np.ndarray, np.ndarray]:
    released = S.evaluate_many(table.queries)
    err = np.abs(released - table.values)
    bad = float(np.dot(weights, err > alpha))
    qs = {str(p): float(np.quantile(err, p)) for p in (0.5, 0.9, 0.99, 1.0)}
    report = AccuracyReport(
        mode=mode,
        num_queries=int(table.queries.shape[0]),
        alpha=alpha,
        gamma=gamma,
        bad_mass=bad,
        max_error=float(err.max()),
        mean_error=float(np.dot(weights, err)),
        quantiles=qs,
        passed=bad <= gamma,
        synopsis_variant=S.variant,
    )
    return report, released, err


def write_error_table(path: str | Path, table: AnswerTable, released: np.ndarray, err: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["query", "exact", "released", "error"])
        for q, num, r, e in zip(table.queries, table.numerators, released, err):
            w.writerow(["".join(map(str, q.tolist())), f"{int(num)}/{table.n}", repr(float(r)), repr(float(e))])


# --------------------------------------------------------------------------
# Orchestration


def build_learner(cfg: ExperimentConfig) -> Learner:
    opts = cfg.learner
    if cfg.learner_kind == "ptf":
        return PTFLearner(
            cfg.d,
            cfg.profile,
            sparsity=cfg.sparsity,
            c_samples=float(opts.get("c_samples", 1.0)),
            max_degree=opts.get("max_degree"),
        )
    kwargs = {k: opts[k] for k in ("max_weight", "max_rounds", "advantage_floor", "step") if k in opts}
    return FourierLearner(cfg.d, c_samples=float(opts.get("c_samples", 1.0)), **kwargs)


def build_distribution(cfg: ExperimentConfig) -> QueryDistribution:
    return distribution_from_dict(cfg.distribution, cfg.d)


def derived_params(cfg: ExperimentConfig):
    G = build_distribution(cfg)
    learner = build_learner(cfg)
    return derive_params(cfg.release, G.support_size, learner.budget, learner.budget_mode, cfg.profile)


@dataclass
class ExperimentResult:
    report: AccuracyReport
    synopsis: Synopsis
    transcript: RunTranscript


def _dump(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")


def run_experiment(cfg: ExperimentConfig, output_dir: str | Path | None = None) -> ExperimentResult:
    """Release, score against brute force and (optionally) write artifacts.

    Artifacts: ``synopsis.json``, ``transcript.json``, ``report.json`` (no
    timings, so identical seeds give identical bytes) and ``errors.csv``.
    """
    timings = {}
    t0 = time.perf_counter()
    D = build_database(cfg)
    G = build_distribution(cfg)
    P = cfg.predicate_spec
    learner = build_learner(cfg)
    timings["data"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    S, transcript = priv_learn(D, P, G, cfg.release, learner, cfg.profile, cfg.seed)
    timings["release"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    mode, pts, weights = evaluation_set(G, cfg.eval_samples, rng_stream(cfg.seed, "evaluation"))
    table = brute_force_answers(D, P, pts)
    report, released, err = score(S, table, weights, cfg.release.alpha, cfg.release.gamma, mode)
    report.privacy = transcript.privacy
    report.derived = transcript.derived
    timings["evaluation"] = time.perf_counter() - t0
    report.timings = timings

    out = output_dir if output_dir is not None else cfg.output_dir
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        S.save(out / "synopsis.json")
        _dump(out / "transcript.json", {**transcript.to_dict(), "timings": timings, "config": cfg.to_dict()})
        _dump(out / "report.json", {**report.to_dict(), "config": cfg.to_dict()})
        write_error_table(out / "errors.csv", table, released, err)
    return ExperimentResult(report, S, transcript)


def rescore(cfg: ExperimentConfig, S: Synopsis, D: Database | None = None) -> tuple[AccuracyReport, AnswerTable, np.ndarray, np.ndarray]:
    """Score a saved synopsis against a database (regenerated from ``cfg`` by default)."""
    D = build_database(cfg) if D is None else D
    G = build_distribution(cfg)
    mode, pts, weights = evaluation_set(G, cfg.eval_samples, rng_stream(cfg.seed, "evaluation"))
    table = brute_force_answers(D, cfg.predicate_spec, pts)
    report, released, err = score(S, table, weights, cfg.release.alpha, cfg.release.gamma, mode)
    return report, table, released, err


# --------------------------------------------------------------------------
# Laplace ratio smoke test


@dataclass
class RatioReport:
    max_ratio: float
    bound: float
    tolerance: float
    bins_used: int
    trials: int
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def dp_ratio_smoke(
    D: Database,
    D_adjacent: Database,
    q,
    trials: int,
    epsilon: float,
    b: int = 1,
    predicate: PredicateSpec | None = None,
    rng: np.random.Generator | None = None,
    bins: int = 20,
    min_mass: float = 1e-3,
    tolerance: float = 0.05,
) -> RatioReport:
    """Histogram the noisy answer ``A_q`` under two adjacent databases.

    Bins are equal-mass under the pooled samples.  The ratio of bin
    probabilities is compared with ``exp(eps * n * |f^D(q) - f^D'(q)| / b)``.
    """
    if not adjacent(D, D_adjacent):
        raise ValueError("databases are not adjacent")
    if trials < 100_000:
        raise ValueError("dp_ratio_smoke needs at least 1e5 trials")
    P = predicate or PredicateSpec.conjunction()
    rng = rng or np.random.default_rng(0)
    q = as_bit_matrix(q, D.d)
    f1 = brute_force_answers(D, P, q).values[0]
    f2 = brute_force_answers(D_adjacent, P, q).values[0]
    scale = b / (epsilon * D.n)
    a1 = f1 + laplace_samples(scale, rng, trials)
    a2 = f2 + laplace_samples(scale, rng, trials)
    edges = np.quantile(np.concatenate([a1, a2]), np.linspace(0, 1, bins + 1))
    edges[0], edges[-1] = -np.inf, np.inf
    h1 = np.histogram(a1, edges)[0] / trials
    h2 = np.histogram(a2, edges)[0] / trials
    keep = (h1 >= min_mass) & (h2 >= min_mass)
    ratios = np.maximum(h1[keep] / h2[keep], h2[keep] / h1[keep])
    bound = math.exp(epsilon * D.n * abs(f1 - f2) / b)
    max_ratio = float(ratios.max()) if ratios.size else 1.0
    return RatioReport(max_ratio, bound, tolerance, int(keep.sum()), trials, max_ratio <= bound * (1 + tolerance))
