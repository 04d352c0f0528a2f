"""Domain types, predicate evaluation, counting queries and parameter derivation.

Items and query descriptions are 0/1 vectors of a common dimension ``d``.  A
batch of them is an ``(m, d)`` ``uint8`` array; a single one is a length-``d``
array (or anything ``np.asarray`` accepts).
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from itertools import combinations
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

# Derived integers must fit a signed 64-bit word.
INT_LIMIT = 2**63 - 1

STREAMS = {"data": 0, "oracle": 1, "sampling": 2, "learner": 3, "evaluation": 4, "verify": 5}


class DimensionError(ValueError):
    pass


class ParameterOverflowError(OverflowError):
    def __init__(self, field_name: str, value):
        super().__init__(f"derived parameter {field_name!r} overflows ({value!r})")
        self.field = field_name
        self.value = value


class InsufficientDatabaseError(ValueError):
    def __init__(self, n: int, min_db_size: int):
        super().__init__(f"database has n={n} items but at least {min_db_size} are required")
        self.n = n
        self.min_db_size = min_db_size


class DatabaseLoadError(ValueError):
    def __init__(self, message: str, row: int | None = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named sub-stream of a run seed."""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(STREAMS[name],))
    return np.random.default_rng(seq)


def as_bits(x, d: int | None = None) -> np.ndarray:
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise DimensionError(f"expected a bit vector, got shape {arr.shape}")
    if d is not None and arr.shape[0] != d:
        raise DimensionError(f"expected length {d}, got {arr.shape[0]}")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError("bit vector entries must be 0 or 1")
    return arr.astype(np.uint8)


def as_bit_matrix(x, d: int | None = None) -> np.ndarray:
    arr = np.asarray(x)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise DimensionError(f"expected an (m, d) bit matrix, got shape {arr.shape}")
    if d is not None and arr.shape[1] != d:
        raise DimensionError(f"expected dimension {d}, got {arr.shape[1]}")
    return arr.astype(np.uint8, copy=False)


def hamming_weight(q) -> int:
    return int(np.asarray(q).sum())


def ball_size(d: int, k: int) -> int:
    """|B_k|: number of points of {0,1}^d with Hamming weight at most k."""
    return sum(math.comb(d, j) for j in range(min(k, d) + 1))


def enumerate_ball(d: int, k: int) -> np.ndarray:
    """All points of weight <= k, ordered by weight then lexicographically by support."""
    rows = []
    for j in range(min(k, d) + 1):
        for idx in combinations(range(d), j):
            row = np.zeros(d, dtype=np.uint8)
            row[list(idx)] = 1
            rows.append(row)
    return np.array(rows, dtype=np.uint8).reshape(-1, d)


def enumerate_cube(d: int) -> np.ndarray:
    """All 2^d points; row r holds the binary digits of r, most significant first."""
    r = np.arange(2**d, dtype=np.int64)[:, None]
    shifts = np.arange(d - 1, -1, -1, dtype=np.int64)[None, :]
    return ((r >> shifts) & 1).astype(np.uint8)


# --------------------------------------------------------------------------
# Predicates


class PredicateKind(str, enum.Enum):
    MONOTONE_CONJUNCTION = "conjunction"
    PARITY = "parity"
    CUSTOM = "custom"


@dataclass(frozen=True)
class PredicateSpec:
    kind: PredicateKind
    custom_eval: Callable[[np.ndarray, np.ndarray], int] | None = None
    name: str | None = None

    def __post_init__(self):
        if self.kind is PredicateKind.CUSTOM and self.custom_eval is None:
            raise ValueError("custom predicate requires custom_eval")

    @classmethod
    def conjunction(cls) -> "PredicateSpec":
        return cls(PredicateKind.MONOTONE_CONJUNCTION)

    @classmethod
    def parity(cls) -> "PredicateSpec":
        return cls(PredicateKind.PARITY)

    @classmethod
    def custom(cls, fn: Callable[[np.ndarray, np.ndarray], int], name: str | None = None) -> "PredicateSpec":
        return cls(PredicateKind.CUSTOM, fn, name or getattr(fn, "__name__", "custom"))

    @property
    def label(self) -> str:
        return self.name if self.kind is PredicateKind.CUSTOM else self.kind.value


def eval_predicate(P: PredicateSpec, q, u) -> int:
    q = np.asarray(q)
    u = np.asarray(u)
    if q.shape != u.shape or q.ndim != 1:
        raise DimensionError(f"query length {q.shape} does not match item length {u.shape}")
    if P.kind is PredicateKind.MONOTONE_CONJUNCTION:
        return int(not np.any((q == 1) & (u == 0)))
    if P.kind is PredicateKind.PARITY:
        return int(np.sum(q[u == 1]) % 2)
    return 1 if P.custom_eval(q, u) else 0


def predicate_matrix(P: PredicateSpec, queries, items) -> np.ndarray:
    """``M[a, b] = P(queries[a], items[b])`` as a uint8 array."""
    Q = as_bit_matrix(queries)
    U = as_bit_matrix(items)
    if Q.shape[1] != U.shape[1]:
        raise DimensionError(f"query dimension {Q.shape[1]} does not match item dimension {U.shape[1]}")
    if P.kind is PredicateKind.MONOTONE_CONJUNCTION:
        violated = Q.astype(np.int32) @ (1 - U.astype(np.int32)).T
        return (violated == 0).astype(np.uint8)
    if P.kind is PredicateKind.PARITY:
        return ((Q.astype(np.int32) @ U.astype(np.int32).T) & 1).astype(np.uint8)
    out = np.empty((Q.shape[0], U.shape[0]), dtype=np.uint8)
    for a, q in enumerate(Q):
        for b, u in enumerate(U):
            out[a, b] = 1 if P.custom_eval(q, u) else 0
    return out


# --------------------------------------------------------------------------
# Database


class Database:
    """Immutable ordered multiset of ``n`` items from {0,1}^d."""

    def __init__(self, items):
        arr = np.array(items, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"database must be a non-empty (n, d) array, got shape {arr.shape}")
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("database entries must be 0 or 1")
        arr = arr.astype(np.uint8)
        arr.flags.writeable = False
        self._items = arr
        uniq, counts = np.unique(arr, axis=0, return_counts=True)
        uniq.flags.writeable = False
        counts.flags.writeable = False
        self._unique = uniq
        self._counts = counts.astype(np.int64)

    @property
    def items(self) -> np.ndarray:
        return self._items

    @property
    def n(self) -> int:
        return self._items.shape[0]

    @property
    def d(self) -> int:
        return self._items.shape[1]

    @property
    def histogram(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct items and their multiplicities."""
        return self._unique, self._counts

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other) -> bool:
        return isinstance(other, Database) and np.array_equal(self._items, other._items)

    def __hash__(self):
        return hash(self._items.tobytes())

    def __repr__(self) -> str:
        return f"Database(n={self.n}, d={self.d})"

    def answer_numerators(self, P: PredicateSpec, queries) -> np.ndarray:
        """Exact counts ``sum_u P(q, u)`` for each query row."""
        M = predicate_matrix(P, as_bit_matrix(queries, self.d), self._unique)
        return M.astype(np.int64) @ self._counts

    def replace(self, index: int, item) -> "Database":
        arr = self._items.copy()
        arr[index] = as_bits(item, self.d)
        return Database(arr)

    @classmethod
    def from_csv(cls, path: str | Path, d: int | None = None) -> "Database":
        return cls(load_bit_csv(path, d))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{i + 1}" for i in range(self.d)])
            writer.writerows(self._items.tolist())


def adjacent(D: Database, D2: Database) -> bool:
    """Same size and differing in at most one position."""
    if D.n != D2.n or D.d != D2.d:
        return False
    return int(np.any(D.items != D2.items, axis=1).sum()) <= 1


def load_bit_csv(path: str | Path, d: int | None = None, extra_columns: int = 0) -> np.ndarray:
    """Read rows of 0/1 tokens; the first row is skipped if it is not all bits.

    With ``extra_columns`` > 0 the trailing columns are returned unparsed as
    part of a tuple ``(bits, extras)``.
    """
    bits_rows: list[list[int]] = []
    extras: list[list[str]] = []
    width = None
    with open(path, newline="") as fh:
        for row_no, raw in enumerate(csv.reader(fh), start=1):
            row = [tok.strip() for tok in raw]
            if not row or all(tok == "" for tok in row):
                continue
            body = row[: len(row) - extra_columns] if extra_columns else row
            if row_no == 1 and not all(tok in ("0", "1") for tok in body):
                continue  # header
            for tok in body:
                if tok not in ("0", "1"):
                    raise DatabaseLoadError(f"non-bit token {tok!r}", row_no)
            if width is None:
                width = len(body)
                if d is not None and width != d:
                    raise DatabaseLoadError(f"expected {d} columns, found {width}", row_no)
            elif len(body) != width:
                raise DatabaseLoadError(f"expected {width} columns, found {len(body)}", row_no)
            bits_rows.append([int(tok) for tok in body])
            if extra_columns:
                extras.append(row[len(row) - extra_columns:])
    if not bits_rows:
        raise DatabaseLoadError(f"{path}: no data rows")
    arr = np.array(bits_rows, dtype=np.uint8)
    return (arr, extras) if extra_columns else arr


# --------------------------------------------------------------------------
# Counting queries


def counting_query(D: Database, P: PredicateSpec, q) -> float:
    q = np.asarray(q)
    if q.ndim != 1 or q.shape[0] != D.d:
        raise DimensionError(f"query length {q.shape} does not match dimension {D.d}")
    return int(D.answer_numerators(P, q[None, :])[0]) / D.n


def counting_query_exact(D: Database, P: PredicateSpec, q) -> Fraction:
    return Fraction(int(D.answer_numerators(P, np.asarray(q)[None, :])[0]), D.n)


def counting_queries(D: Database, P: PredicateSpec, queries) -> np.ndarray:
    return D.answer_numerators(P, queries) / D.n


def threshold_query(D: Database, P: PredicateSpec, q, t: float) -> int:
    return int(counting_query(D, P, q) >= t)


def min_count_for_threshold(t: float, n: int) -> int:
    """Smallest integer j with ``j / n >= t`` under the float comparison used above."""
    j = max(0, math.ceil(t * n))
    while j > 0 and (j - 1) / n >= t:
        j -= 1
    while j / n < t:
        j += 1
    return j


# --------------------------------------------------------------------------
# Parameters


@dataclass(frozen=True)
class ReleaseParams:
    alpha: float
    beta: float
    gamma: float
    epsilon: float

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


class BudgetMode(str, enum.Enum):
    EVALUATION_QUERIES = "evaluation_queries"
    SAMPLING_ONLY = "sampling_only"


@dataclass(frozen=True)
class ParameterProfile:
    """Multipliers for the unoptimised constants in the parameter formulas.

    ``theory()`` holds the published constants; ``desk(...)`` defaults every
    multiplier to 1 and takes overrides so desk-scale runs stay feasible.
    """

    name: str
    c_nprime: float
    c_biter: float
    c_dbsize: float
    c_degree_sparse: float = 1.0
    c_degree_full: float = 1.0

    def __post_init__(self):
        for f in ("c_nprime", "c_biter", "c_dbsize", "c_degree_sparse", "c_degree_full"):
            if not getattr(self, f) > 0:
                raise ValueError(f"profile multiplier {f} must be positive")

    @classmethod
    def theory(cls) -> "ParameterProfile":
        return cls("theory", c_nprime=4410.0, c_biter=100.0, c_dbsize=210.0)

    @classmethod
    def desk(cls, **overrides) -> "ParameterProfile":
        values = dict(c_nprime=1.0, c_biter=1.0, c_dbsize=1.0, c_degree_sparse=1.0, c_degree_full=1.0)
        values.update(overrides)
        return cls("desk", **values)

    @classmethod
    def from_dict(cls, data: dict) -> "ParameterProfile":
        data = dict(data)
        name = data.pop("name", "desk")
        if name == "theory":
            if data:
                raise ValueError("the theory profile does not accept overrides")
            return cls.theory()
        if name != "desk":
            raise ValueError(f"unknown profile {name!r}")
        return cls.desk(**{k: float(v) for k, v in data.items()})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DerivedParams:
    k: int
    thresholds: tuple[float, ...]
    n_prime: int
    gamma_prime: float
    beta_prime: float
    b_base: int
    b_iter: int
    b_total: int
    min_db_size: int
    budget_mode: BudgetMode
    query_space_size: int
    profile: str = "desk"
    oracle_tolerance: float = field(default=0.0)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["thresholds"] = list(self.thresholds)
        out["budget_mode"] = self.budget_mode.value
        return out


def _ceil(value: float, field_name: str) -> int:
    # Snap values within float noise of an integer so e.g. 3/0.15 gives 20, not 21.
    if not math.isfinite(value):
        raise ParameterOverflowError(field_name, value)
    nearest = round(value)
    if abs(value - nearest) <= 1e-9 * max(1.0, abs(value)):
        out = int(nearest)
    else:
        out = math.ceil(value)
    if out > INT_LIMIT:
        raise ParameterOverflowError(field_name, out)
    return out


def derive_params(
    rp: ReleaseParams,
    query_space_size: int,
    learner_budget_fn: Callable[[int, float, float], int],
    budget_mode: BudgetMode,
    profile: ParameterProfile,
) -> DerivedParams:
    if query_space_size < 2:
        raise ValueError("query_space_size must be at least 2")
    k = _ceil(3.0 / rp.alpha, "k")
    gamma_p = rp.gamma / k
    beta_p = rp.beta / (6 * k)
    n_prime = _ceil(profile.c_nprime * math.log(query_space_size) / rp.alpha**2, "n_prime")
    b_base = int(learner_budget_fn(n_prime, gamma_p, beta_p))
    if b_base > INT_LIMIT:
        raise ParameterOverflowError("b_base", b_base)
    if b_base < 1:
        raise ValueError(f"learner budget must be positive, got {b_base}")
    b_iter = _ceil(profile.c_biter * b_base * math.log(1.0 / beta_p) / rp.gamma, "b_iter")
    if budget_mode is BudgetMode.EVALUATION_QUERIES:
        b_total = 2 * k * b_iter
    else:
        b_total = 2 * b_iter
    if b_total > INT_LIMIT:
        raise ParameterOverflowError("b_total", b_total)
    min_db = _ceil(
        profile.c_dbsize * b_total * math.log(10.0 * b_total / rp.beta) / (rp.epsilon * rp.alpha),
        "min_db_size",
    )
    return DerivedParams(
        k=k,
        thresholds=tuple(i / (k + 1) for i in range(1, k + 1)),
        n_prime=n_prime,
        gamma_prime=gamma_p,
        beta_prime=beta_p,
        b_base=b_base,
        b_iter=b_iter,
        b_total=b_total,
        min_db_size=min_db,
        budget_mode=budget_mode,
        query_space_size=int(query_space_size),
        profile=profile.name,
        oracle_tolerance=rp.alpha / 7.0,
    )


def check_db_size(D: Database, dp: DerivedParams) -> None:
    if D.n < dp.min_db_size:
        raise InsufficientDatabaseError(D.n, dp.min_db_size)


# --------------------------------------------------------------------------
# Subsampling verifier and domain transforms


@dataclass
class SubsampleReport:
    sample_size: int
    trials: int
    successes: int
    max_errors: list[float]

    @property
    def success_fraction(self) -> float:
        return self.successes / self.trials


def subsample_verify(
    D: Database,
    P: PredicateSpec,
    queries,
    alpha: float,
    trials: int,
    rng: np.random.Generator,
) -> SubsampleReport:
    """Empirically check that a random subsample of size 10 ln|Q| / alpha^2
    answers every query in ``queries`` to within ``alpha``."""
    Q = as_bit_matrix(queries, D.d)
    if Q.shape[0] == 0:
        raise ValueError("query set is empty")
    size = max(1, math.ceil(10 * math.log(Q.shape[0]) / alpha**2))
    exact = counting_queries(D, P, Q)
    member = predicate_matrix(P, Q, D.items)  # (|Q|, n)
    errors = []
    for _ in range(trials):
        idx = rng.integers(0, D.n, size=size)
        approx = member[:, idx].sum(axis=1) / size
        errors.append(float(np.max(np.abs(approx - exact))))
    successes = sum(e < alpha for e in errors)
    return SubsampleReport(size, trials, successes, errors)


def general_to_monotone(D: Database, queries: Iterable[Sequence[int]]) -> tuple[Database, np.ndarray]:
    """Map general conjunctions over {0,1}^d to monotone ones over {0,1}^(2d).

    A general conjunction is a length-d vector of literals: +1 requires
    ``x_i = 1``, -1 requires ``x_i = 0`` and 0 leaves ``x_i`` free.  Each item
    ``u`` becomes ``u`` followed by its complement.
    """
    U = D.items
    doubled = Database(np.concatenate([U, 1 - U], axis=1))
    out = []
    for g in queries:
        g = np.asarray(g)
        if g.shape != (D.d,):
            raise DimensionError(f"query length {g.shape} does not match dimension {D.d}")
        out.append(np.concatenate([(g == 1), (g == -1)]).astype(np.uint8))
    return doubled, np.array(out, dtype=np.uint8).reshape(-1, 2 * D.d)


def eval_general_conjunction(g, u) -> int:
    g = np.asarray(g)
    u = np.asarray(u)
    return int(np.all(u[g == 1] == 1) and np.all(u[g == -1] == 0))
