"""Query distributions with sampling and (optionally) evaluation access."""
from __future__ import annotations

import enum
import math
from pathlib import Path

import numpy as np

from .core import as_bits, ball_size, enumerate_ball, enumerate_cube, load_bit_csv

# Enumeration guard for test-side utilities.
MAX_ENUMERATION = 10**6


class Capability(str, enum.Enum):
    SAMPLING_ONLY = "sampling_only"
    SAMPLING_AND_EVALUATION = "sampling_and_evaluation"


class CapabilityError(RuntimeError):
    pass


class SupportTooLarge(ValueError):
    pass


class QueryDistribution:
    d: int
    capability: Capability = Capability.SAMPLING_AND_EVALUATION

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.sample_many(rng, 1)[0]

    def sample_many(self, rng: np.random.Generator, m: int) -> np.ndarray:
        raise NotImplementedError

    def mass(self, q) -> float:
        if self.capability is not Capability.SAMPLING_AND_EVALUATION:
            raise CapabilityError(f"{type(self).__name__} only provides sampling access")
        return self._mass(as_bits(q, self.d))

    def masses(self, queries) -> np.ndarray:
        return np.array([self.mass(q) for q in queries], dtype=float)

    def _mass(self, q: np.ndarray) -> float:
        raise NotImplementedError

    @property
    def support_size(self) -> int:
        raise NotImplementedError

    def support(self, limit: int = MAX_ENUMERATION) -> np.ndarray:
        """Every point of positive mass; a test-side utility."""
        if self.support_size > limit:
            raise SupportTooLarge(f"support of size {self.support_size} exceeds {limit}")
        return self._support()

    def _support(self) -> np.ndarray:
        raise NotImplementedError

    def sampling_only(self) -> "SamplingOnlyView":
        return SamplingOnlyView(self)

    def describe(self) -> dict:
        raise NotImplementedError


class UniformFullCube(QueryDistribution):
    def __init__(self, d: int):
        if d < 1:
            raise ValueError("dimension must be positive")
        self.d = d

    def sample_many(self, rng, m):
        return rng.integers(0, 2, size=(m, self.d), dtype=np.uint8)

    def _mass(self, q):
        return 2.0**-self.d

    @property
    def support_size(self):
        return 2**self.d

    def _support(self):
        return enumerate_cube(self.d)

    def describe(self):
        return {"kind": "uniform_cube", "d": self.d}


class UniformBk(QueryDistribution):
    """Uniform over points of Hamming weight at most ``k``."""

    def __init__(self, d: int, k: int):
        if d < 1 or not 0 <= k <= d:
            raise ValueError("need d >= 1 and 0 <= k <= d")
        self.d = d
        self.k = k
        self._size = ball_size(d, k)
        self._class_probs = np.array([math.comb(d, j) for j in range(k + 1)], dtype=float) / self._size

    def sample_many(self, rng, m):
        weights = rng.choice(self.k + 1, size=m, p=self._class_probs)
        # A uniform j-subset is the first j columns of a random permutation.
        ranks = np.argsort(rng.random((m, self.d)), axis=1).argsort(axis=1)
        return (ranks < weights[:, None]).astype(np.uint8)

    def _mass(self, q):
        return 1.0 / self._size if int(q.sum()) <= self.k else 0.0

    @property
    def support_size(self):
        return self._size

    def _support(self):
        return enumerate_ball(self.d, self.k)

    def describe(self):
        return {"kind": "uniform_bk", "d": self.d, "k": self.k}


class ExplicitWeighted(QueryDistribution):
    """Finite table of query masses; draws use Vose's alias method."""

    def __init__(self, points, weights, tol: float = 2.0**-30):
        pts = np.asarray(points, dtype=np.uint8)
        w = np.asarray(weights, dtype=float)
        if pts.ndim != 2 or pts.shape[0] != w.shape[0] or pts.shape[0] == 0:
            raise ValueError("points must be (m, d) with one weight per point")
        if (w < 0).any():
            raise ValueError("weights must be non-negative")
        if abs(w.sum() - 1.0) > tol:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        self.d = pts.shape[1]
        self._table: dict[bytes, float] = {}
        for p, x in zip(pts, w):
            key = p.tobytes()
            self._table[key] = self._table.get(key, 0.0) + float(x)
        self._points = pts
        self._weights = w
        self._prob, self._alias = _alias_table(w)

    def sample_many(self, rng, m):
        col = rng.integers(0, len(self._prob), size=m)
        coin = rng.random(m)
        idx = np.where(coin < self._prob[col], col, self._alias[col])
        return self._points[idx].copy()

    def _mass(self, q):
        return self._table.get(q.tobytes(), 0.0)

    @property
    def support_size(self):
        return sum(1 for v in self._table.values() if v > 0)

    def _support(self):
        keep = {}
        for p, w in zip(self._points, self._weights):
            if w > 0:
                keep.setdefault(p.tobytes(), p)
        return np.array(list(keep.values()), dtype=np.uint8).reshape(-1, self.d)

    def describe(self):
        return {"kind": "explicit", "d": self.d, "points": int(self._points.shape[0])}

    @classmethod
    def from_csv(cls, path: str | Path, d: int | None = None) -> "ExplicitWeighted":
        bits, extras = load_bit_csv(path, d, extra_columns=1)
        weights = np.array([float(e[0]) for e in extras])
        return cls(bits, weights)


def _alias_table(w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m = len(w)
    scaled = w * m / w.sum()
    prob = np.zeros(m)
    alias = np.arange(m)
    small = [i for i in range(m) if scaled[i] < 1.0]
    large = [i for i in range(m) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        g = large.pop()
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] = scaled[g] + scaled[s] - 1.0
        (small if scaled[g] < 1.0 else large).append(g)
    for i in large + small:
        prob[i] = 1.0
    return prob, alias


class SamplingOnlyView(QueryDistribution):
    """Wraps a distribution and hides its evaluation access."""

    capability = Capability.SAMPLING_ONLY

    def __init__(self, inner: QueryDistribution):
        self._inner = inner
        self.d = inner.d

    def sample_many(self, rng, m):
        return self._inner.sample_many(rng, m)

    @property
    def support_size(self):
        return self._inner.support_size

    def _support(self):
        return self._inner._support()

    def describe(self):
        return {**self._inner.describe(), "capability": self.capability.value}


def _full_masses(G: QueryDistribution, points: np.ndarray) -> np.ndarray:
    inner = G._inner if isinstance(G, SamplingOnlyView) else G
    return np.array([inner._mass(p) for p in points], dtype=float)


def smoothness_wrt(G_prime: QueryDistribution, G: QueryDistribution) -> float:
    """Least ``mu`` with ``G'[q] <= mu * G[q]`` for all q; ``inf`` if unbounded."""
    pts = G_prime.support()
    num = _full_masses(G_prime, pts)
    den = _full_masses(G, pts)
    pos = num > 0
    if np.any(den[pos] == 0):
        return math.inf
    if not pos.any():
        return 0.0
    return float(np.max(num[pos] / den[pos]))


def distribution_from_dict(spec: dict, d: int) -> QueryDistribution:
    kind = spec.get("kind", "uniform_cube")
    if kind == "uniform_cube":
        G: QueryDistribution = UniformFullCube(d)
    elif kind == "uniform_bk":
        G = UniformBk(d, int(spec["k"]))
    elif kind == "explicit":
        G = ExplicitWeighted.from_csv(spec["path"], d)
    else:
        raise ValueError(f"unknown distribution kind {kind!r}")
    if spec.get("sampling_only"):
        G = G.sampling_only()
    return G
