"""Experiment configuration: a nested YAML document validated up front.

Schema (all keys optional unless marked)::

    predicate: conjunction | parity          # required
    d: 10                                    # required
    sparsity: 3                              # weight bound k for sparse conjunctions
    database:
      kind: bernoulli | clustered | file     # default bernoulli
      n: 50000                               # required unless kind == file
      p: 0.5                                 # bernoulli
      centers: [[0, 1, ...], ...]            # clustered
      flip_prob: 0.1                         # clustered
      path: data.csv                         # file
    release: {alpha: 0.15, beta: 0.1, gamma: 0.1, epsilon: 1.0}
    learner:
      kind: ptf | fourier                    # default ptf for conjunctions, fourier for parity
      c_samples: 1.0
      max_degree: null                       # ptf
      max_weight: null                       # fourier
      max_rounds: 10000                      # fourier
      advantage_floor: 0.01                  # fourier
    profile: {name: desk, c_biter: 0.075}    # or {name: theory}
    distribution: {kind: uniform_bk, k: 3, sampling_only: false}
    evaluation: {samples: 10000}             # used when the query space is too big to enumerate
    seed: 0
    output_dir: runs/example

``PRIVLEARN_OUTPUT_DIR`` overrides ``output_dir`` and ``PRIVLEARN_THREADS``
sets the worker count used by the verifier suites.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..core import ParameterProfile, PredicateSpec, ReleaseParams

ENV_OUTPUT_DIR = "PRIVLEARN_OUTPUT_DIR"
ENV_THREADS = "PRIVLEARN_THREADS"


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists ``(field, message)`` pairs."""

    def __init__(self, problems: list[tuple[str, str]]):
        self.problems = problems
        super().__init__("; ".join(f"{f}: {m}" for f, m in problems))


@dataclass
class ExperimentConfig:
    predicate: str
    d: int
    release: ReleaseParams
    profile: ParameterProfile
    database: dict = field(default_factory=dict)
    learner: dict = field(default_factory=dict)
    distribution: dict = field(default_factory=dict)
    sparsity: int | None = None
    seed: int = 0
    output_dir: Path | None = None
    eval_samples: int = 10_000
    base_dir: Path = field(default_factory=Path.cwd)

    @property
    def predicate_spec(self) -> PredicateSpec:
        return PredicateSpec.conjunction() if self.predicate == "conjunction" else PredicateSpec.parity()

    @property
    def learner_kind(self) -> str:
        return self.learner.get("kind") or ("fourier" if self.predicate == "parity" else "ptf")

    def resolve(self, path: str | Path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def to_dict(self) -> dict:
        return {
            "predicate": self.predicate,
            "d": self.d,
            "sparsity": self.sparsity,
            "database": self.database,
            "release": {
                "alpha": self.release.alpha,
                "beta": self.release.beta,
                "gamma": self.release.gamma,
                "epsilon": self.release.epsilon,
            },
            "learner": {**self.learner, "kind": self.learner_kind},
            "profile": self.profile.to_dict(),
            "distribution": self.distribution,
            "evaluation": {"samples": self.eval_samples},
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, raw: dict, base_dir: str | Path | None = None, env: dict | None = None) -> "ExperimentConfig":
        env = os.environ if env is None else env
        problems: list[tuple[str, str]] = []
        if not isinstance(raw, dict):
            raise ConfigError([("<root>", "config must be a mapping")])
        known = {"predicate", "d", "sparsity", "database", "release", "learner", "profile",
                 "distribution", "evaluation", "seed", "output_dir"}
        for key in raw:
            if key not in known:
                problems.append((str(key), "unknown key"))

        predicate = raw.get("predicate")
        if predicate not in ("conjunction", "parity"):
            problems.append(("predicate", "must be 'conjunction' or 'parity'"))

        d = raw.get("d")
        if not isinstance(d, int) or isinstance(d, bool) or d < 1:
            problems.append(("d", "must be a positive integer"))
            d = None

        sparsity = raw.get("sparsity")
        if sparsity is not None and (not isinstance(sparsity, int) or sparsity < 0 or (d and sparsity > d)):
            problems.append(("sparsity", "must be an integer in [0, d]"))

        rel = raw.get("release") or {}
        release = None
        try:
            release = ReleaseParams(
                alpha=float(rel.get("alpha", 0.15)),
                beta=float(rel.get("beta", 0.1)),
                gamma=float(rel.get("gamma", 0.1)),
                epsilon=float(rel.get("epsilon", 1.0)),
            )
        except (TypeError, ValueError) as exc:
            problems.append(("release", str(exc)))

        profile = None
        try:
            profile = ParameterProfile.from_dict(raw.get("profile") or {"name": "desk"})
        except (TypeError, ValueError) as exc:
            problems.append(("profile", str(exc)))

        db = dict(raw.get("database") or {})
        kind = db.setdefault("kind", "bernoulli")
        if kind not in ("bernoulli", "clustered", "file"):
            problems.append(("database.kind", "must be bernoulli, clustered or file"))
        if kind == "file":
            if "path" not in db:
                problems.append(("database.path", "required for file databases"))
        else:
            n = db.get("n")
            if not isinstance(n, int) or n < 1:
                problems.append(("database.n", "must be a positive integer"))
        if kind == "bernoulli":
            p = db.setdefault("p", 0.5)
            if not isinstance(p, (int, float)) or not 0 <= p <= 1:
                problems.append(("database.p", "must lie in [0, 1]"))
        if kind == "clustered":
            centers = db.get("centers")
            if not centers or not all(isinstance(c, list) and len(c) == d and set(c) <= {0, 1} for c in centers):
                problems.append(("database.centers", "must be a non-empty list of length-d bit lists"))
            fp = db.setdefault("flip_prob", 0.1)
            if not isinstance(fp, (int, float)) or not 0 <= fp <= 1:
                problems.append(("database.flip_prob", "must lie in [0, 1]"))

        learner = dict(raw.get("learner") or {})
        lk = learner.get("kind")
        if lk is not None and lk not in ("ptf", "fourier"):
            problems.append(("learner.kind", "must be 'ptf' or 'fourier'"))
        allowed = {"kind", "c_samples", "max_degree", "max_weight", "max_rounds", "advantage_floor", "step"}
        for key in learner:
            if key not in allowed:
                problems.append((f"learner.{key}", "unknown key"))

        dist = dict(raw.get("distribution") or {})
        if not dist:
            dist = {"kind": "uniform_bk", "k": sparsity} if sparsity is not None else {"kind": "uniform_cube"}
        if dist.get("kind") not in ("uniform_cube", "uniform_bk", "explicit"):
            problems.append(("distribution.kind", "must be uniform_cube, uniform_bk or explicit"))
        if dist.get("kind") == "uniform_bk" and not isinstance(dist.get("k"), int):
            problems.append(("distribution.k", "uniform_bk needs an integer k"))
        if dist.get("kind") == "explicit" and "path" not in dist:
            problems.append(("distribution.path", "explicit distributions need a CSV path"))

        seed = raw.get("seed", 0)
        if not isinstance(seed, int) or seed < 0:
            problems.append(("seed", "must be a non-negative integer"))

        ev = raw.get("evaluation") or {}
        eval_samples = ev.get("samples", 10_000)
        if not isinstance(eval_samples, int) or eval_samples < 1:
            problems.append(("evaluation.samples", "must be a positive integer"))

        out = env.get(ENV_OUTPUT_DIR) or raw.get("output_dir")
        if problems:
            raise ConfigError(problems)
        base = Path(base_dir) if base_dir is not None else Path.cwd()
        if dist.get("kind") == "explicit":
            dist["path"] = str((base / dist["path"]) if not Path(dist["path"]).is_absolute() else dist["path"])
        return cls(
            predicate=predicate,
            d=d,
            release=release,
            profile=profile,
            database=db,
            learner=learner,
            distribution=dist,
            sparsity=sparsity,
            seed=seed,
            output_dir=Path(out) if out else None,
            eval_samples=eval_samples,
            base_dir=base,
        )


def load_config(path: str | Path, env: dict | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError([("<file>", f"YAML parse error: {exc}")]) from exc
    return ExperimentConfig.from_dict(raw, base_dir=path.parent, env=env)


def thread_count(env: dict | None = None) -> int:
    env = os.environ if env is None else env
    raw = env.get(ENV_THREADS)
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError([(ENV_THREADS, f"must be a positive integer, got {raw!r}")]) from None
    if value < 1:
        raise ConfigError([(ENV_THREADS, "must be a positive integer")])
    return value
