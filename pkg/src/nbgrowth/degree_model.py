"""Degree distributions, their branching constants, and concrete degree sequences."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

NORMALIZATION_TOL = 1e-12


class DistributionError(ValueError):
    """Raised for invalid degree distributions or unrealizable sequences."""


@dataclass(frozen=True)
class DegreeDistribution:
    """Probability vector on the degrees ``support_min..support_max``.

    ``probs[i]`` is the probability of degree ``support_min + i``.  A
    degenerate (regular) law has ``support_min == support_max``.
    """

    support_min: int
    support_max: int
    probs: tuple[float, ...]

    def __post_init__(self):
        if self.support_min < 2:
            raise DistributionError(f"minimum degree must be >= 2, got {self.support_min}")
        if self.support_max < self.support_min:
            raise DistributionError("support_max < support_min")
        if len(self.probs) != self.support_max - self.support_min + 1:
            raise DistributionError("probs length does not match the support")
        if any(p < 0 or not math.isfinite(p) for p in self.probs):
            raise DistributionError("probabilities must be finite and non-negative")
        total = math.fsum(self.probs)
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise DistributionError(f"probabilities sum to {total!r}, not 1")
        a, _ = derived_constants(self)
        if not a > 1.0:
            raise DistributionError(f"offspring mean a = {a!r} must exceed 1")

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, float], normalize: bool = False) -> "DegreeDistribution":
        items = {int(k): float(v) for k, v in mapping.items()}
        if not items:
            raise DistributionError("empty distribution")
        lo, hi = min(items), max(items)
        probs = [items.get(k, 0.0) for k in range(lo, hi + 1)]
        if normalize:
            total = math.fsum(probs)
            if total <= 0:
                raise DistributionError("probabilities sum to zero")
            probs = [p / total for p in probs]
        # trim zero-probability ends so the support is tight
        while len(probs) > 1 and probs[-1] == 0.0:
            probs.pop()
            hi -= 1
        while len(probs) > 1 and probs[0] == 0.0:
            probs.pop(0)
            lo += 1
        return cls(lo, hi, tuple(probs))

    @classmethod
    def regular(cls, d: int) -> "DegreeDistribution":
        return cls(d, d, (1.0,))

    @property
    def degrees(self) -> np.ndarray:
        return np.arange(self.support_min, self.support_max + 1)

    @property
    def prob_array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)

    def as_dict(self) -> dict[int, float]:
        return {int(k): p for k, p in zip(self.degrees, self.probs) if p > 0}

    def __str__(self) -> str:
        return ",".join(f"{k}:{p:.12g}" for k, p in self.as_dict().items())


@dataclass(frozen=True)
class OffspringLaw:
    """Size-biased, shifted law on ``support_min..support_max`` (children below the root)."""

    support_min: int
    probs: tuple[float, ...]

    @property
    def values(self) -> np.ndarray:
        return np.arange(self.support_min, self.support_min + len(self.probs))

    @property
    def prob_array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)

    @property
    def support_max(self) -> int:
        return self.support_min + len(self.probs) - 1

    def mean(self) -> float:
        return math.fsum(k * p for k, p in zip(self.values, self.probs))

    def variance(self) -> float:
        m = self.mean()
        return math.fsum((k - m) ** 2 * p for k, p in zip(self.values, self.probs))

    def as_dict(self) -> dict[int, float]:
        return {int(k): p for k, p in zip(self.values, self.probs)}


@dataclass(frozen=True)
class DegreeSequence:
    """Vertex counts per degree, ``counts[k]`` vertices of degree ``k``."""

    counts: Mapping[int, int]
    n: int = field(init=False)

    def __post_init__(self):
        clean = {int(k): int(v) for k, v in sorted(self.counts.items()) if int(v) != 0}
        if any(v < 0 for v in clean.values()):
            raise DistributionError("negative vertex count")
        if any(k < 0 for k in clean):
            raise DistributionError("negative degree")
        object.__setattr__(self, "counts", clean)
        object.__setattr__(self, "n", sum(clean.values()))
        if self.half_edge_count % 2:
            raise DistributionError(f"degree sum {self.half_edge_count} is odd")

    @classmethod
    def from_degrees(cls, degrees) -> "DegreeSequence":
        counts: dict[int, int] = {}
        for d in degrees:
            counts[int(d)] = counts.get(int(d), 0) + 1
        return cls(counts)

    @property
    def half_edge_count(self) -> int:
        return sum(k * v for k, v in self.counts.items())

    def degree_list(self) -> np.ndarray:
        """Per-vertex degrees, vertices ordered by ascending degree."""
        if not self.counts:
            return np.zeros(0, dtype=np.int64)
        return np.repeat(
            np.fromiter(self.counts.keys(), dtype=np.int64),
            np.fromiter(self.counts.values(), dtype=np.int64),
        )


def derived_constants(dist: DegreeDistribution) -> tuple[float, float]:
    """Return ``(a, b)``: the offspring mean E P(P-1)/E P and the degree mean E P."""
    ks = range(dist.support_min, dist.support_max + 1)
    b = math.fsum(k * p for k, p in zip(ks, dist.probs))
    a = math.fsum(k * (k - 1) * p for k, p in zip(ks, dist.probs)) / b
    return a, b


def offspring_distribution(dist: DegreeDistribution) -> OffspringLaw:
    """P̄(k) = (k+1) P(k+1) / E P, supported on ``k_min-1..k_max-1``."""
    _, b = derived_constants(dist)
    ks = range(dist.support_min, dist.support_max + 1)
    probs = tuple(k * p / b for k, p in zip(ks, dist.probs))
    return OffspringLaw(dist.support_min - 1, probs)


def solve_two_point(r: int, alpha: float) -> DegreeDistribution:
    """Distribution on {2, 2r} whose offspring mean equals ``alpha``.

    With q = P(2r) the offspring mean is (2(1-q) + 2r(2r-1)q) / (2(1-q) + 2rq),
    which is increasing in q and linear-fractional, giving the closed form
    q = (alpha - 1) / ((r - 1)(2r + 1 - alpha)).
    """
    if r < 2:
        raise DistributionError(f"r must be >= 2, got {r}")
    if not 1.0 < alpha < 2 * r - 1:
        raise DistributionError(f"alpha must lie in (1, {2 * r - 1}), got {alpha!r}")
    q = (alpha - 1.0) / ((r - 1) * (2 * r + 1 - alpha))
    q = min(max(q, 0.0), 1.0)
    return DegreeDistribution.from_mapping({2: 1.0 - q, 2 * r: q})


def realize_sequence(dist: DegreeDistribution, n: int) -> DegreeSequence:
    """Integer vertex counts close to ``n * P`` with an even degree sum.

    Starts from the floors, hands the remaining vertices one at a time to the
    positive-probability classes from the largest degree down, then fixes an
    odd degree sum by moving one vertex from an odd-degree class to an
    even-degree class.  Every count ends within ``k_max`` of ``n * P(k)``.
    """
    if n < dist.support_max + 1:
        raise DistributionError(f"n = {n} must be at least k_max + 1 = {dist.support_max + 1}")
    degrees = [int(k) for k in dist.degrees]
    probs = dist.probs
    counts = {k: math.floor(p * n) for k, p in zip(degrees, probs)}
    deficit = n - sum(counts.values())
    positive = [k for k, p in zip(degrees, probs) if p > 0][::-1]
    i = 0
    while deficit > 0:
        counts[positive[i % len(positive)]] += 1
        deficit -= 1
        i += 1

    if sum(k * c for k, c in counts.items()) % 2:
        prob = dict(zip(degrees, probs))
        odd_src = [k for k in degrees if k % 2 and counts[k] > 0]
        even_dst = [k for k in degrees if k % 2 == 0]
        if not odd_src or not even_dst:
            raise DistributionError(
                f"cannot make the degree sum even: n = {n}, support {degrees[0]}..{degrees[-1]}"
            )
        src = max(odd_src, key=lambda k: (counts[k] - prob[k] * n, k))
        dst = min(even_dst, key=lambda k: (prob[k] == 0, counts[k] - prob[k] * n, -k))
        counts[src] -= 1
        counts[dst] += 1
    return DegreeSequence(counts)


def erdos_gallai_check(seq: DegreeSequence | list[int] | np.ndarray) -> bool:
    """True iff a simple graph with these degrees exists."""
    if isinstance(seq, DegreeSequence):
        degrees = seq.degree_list()
    else:
        degrees = np.asarray(seq, dtype=np.int64)
    asc = np.sort(degrees)
    n = len(asc)
    if n == 0:
        return True
    if asc[0] < 0 or asc.sum() % 2:
        return False
    d = asc[::-1]
    prefix = np.concatenate([[0], np.cumsum(d)])
    k = np.arange(1, n + 1)
    # number of entries >= k; beyond index max(k, c_k) every entry is < k
    at_least_k = n - np.searchsorted(asc, k, side="left")
    m = np.maximum(k, at_least_k)
    rhs = k * (k - 1) + k * (m - k) + (prefix[n] - prefix[m])
    return bool(np.all(prefix[1:] <= rhs))


def parse_distribution(text: str) -> DegreeDistribution:
    """Parse a literal like ``"2:0.6667,4:0.3333"``; probabilities are renormalized."""
    mapping: dict[int, float] = {}
    try:
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            k, p = part.split(":")
            mapping[int(k)] = mapping.get(int(k), 0.0) + float(p)
    except ValueError as exc:
        raise DistributionError(f"bad distribution literal {text!r}") from exc
    return DegreeDistribution.from_mapping(mapping, normalize=True)
