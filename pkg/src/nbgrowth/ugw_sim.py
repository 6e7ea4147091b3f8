"""Unimodular Galton-Watson trees: generation sizes, martingale checks, and the Q_ell functional.

The root has a number of children drawn from the root law (the degree law P
by default); every other vertex has children drawn from the size-biased
shifted law P̄(k) = (k+1) P(k+1) / E P, whose mean is ``a``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Optional, Sequence, Union

import numpy as np

from .degree_model import DegreeDistribution, derived_constants, offspring_distribution

RootLaw = Union[str, int]
BRUTE_FORCE_MAX_ELL = 4


class StatisticsError(ValueError):
    pass


def _root_law(dist: DegreeDistribution, root_law: RootLaw) -> tuple[np.ndarray, np.ndarray]:
    if root_law == "P":
        return dist.degrees, dist.prob_array
    if root_law in ("Pbar", "P̄"):
        off = offspring_distribution(dist)
        return off.values, off.prob_array
    if isinstance(root_law, (int, np.integer)):
        k = int(root_law)
        if k < dist.support_min:
            raise ValueError(f"fixed root degree {k} is below k_min = {dist.support_min}")
        return np.array([k]), np.array([1.0])
    raise ValueError(f"unknown root law {root_law!r}")


@dataclass
class GWTrajectory:
    """Generation sizes ``z[0..t]``; ``children[d]`` lists child counts of depth-``d`` nodes in BFS order."""

    z: np.ndarray
    children: Optional[list[np.ndarray]] = None

    @property
    def depth(self) -> int:
        return len(self.z) - 1


def trajectory_bounds(dist: DegreeDistribution, t: int, root_law: RootLaw = "P") -> tuple[int, int]:
    """Deterministic range of Z_t: root children in [r_lo, r_hi], later ones in [k_min-1, k_max-1]."""
    values, probs = _root_law(dist, root_law)
    support = values[probs > 0]
    r_lo, r_hi = int(support.min()), int(support.max())
    if t == 0:
        return 1, 1
    return r_lo * (dist.support_min - 1) ** (t - 1), r_hi * (dist.support_max - 1) ** (t - 1)


def simulate_tree(dist: DegreeDistribution, depth: int, rng: np.random.Generator,
                  root_law: RootLaw = "P") -> GWTrajectory:
    """Sample the first ``depth`` generations, keeping per-node child counts."""
    root_values, root_probs = _root_law(dist, root_law)
    off = offspring_distribution(dist)
    values, probs = off.values, off.prob_array
    children = [rng.choice(root_values, size=1, p=root_probs)]
    z = [1, int(children[0].sum())]
    for _ in range(1, depth):
        c = rng.choice(values, size=z[-1], p=probs)
        children.append(c)
        z.append(int(c.sum()))
    return GWTrajectory(np.array(z[: depth + 1], dtype=np.int64), children[:depth])


def simulate_Z_batch(dist: DegreeDistribution, t_max: int, n_runs: int, seed=None,
                     root_law: RootLaw = "P") -> np.ndarray:
    """``(n_runs, t_max+1)`` generation sizes; each generation is one multinomial draw per run."""
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    rng = np.random.default_rng(seed)
    root_values, root_probs = _root_law(dist, root_law)
    off = offspring_distribution(dist)
    Z = np.empty((n_runs, t_max + 1), dtype=np.int64)
    Z[:, 0] = 1
    Z[:, 1] = rng.choice(root_values, size=n_runs, p=root_probs)
    for t in range(1, t_max):
        counts = rng.multinomial(Z[:, t], off.prob_array)
        Z[:, t + 1] = counts @ off.values
    return Z


def simulate_Z(dist: DegreeDistribution, t_max: int, seed=None, root_law: RootLaw = "P",
               keep_tree: bool = False) -> GWTrajectory:
    """One trajectory; with ``keep_tree`` the per-node child counts are sampled and kept."""
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    if keep_tree:
        return simulate_tree(dist, t_max, np.random.default_rng(seed), root_law)
    return GWTrajectory(simulate_Z_batch(dist, t_max, 1, seed, root_law)[0])


@dataclass
class SlopeEstimate:
    slope: float
    stderr: float
    ci_low: float
    ci_high: float

    def contains(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high


@dataclass
class MartingaleReport:
    a: float
    per_t: dict[int, SlopeEstimate]
    pooled: SlopeEstimate
    level: float

    @property
    def passed(self) -> bool:
        return self.pooled.contains(self.a)


def _origin_slope(x: np.ndarray, y: np.ndarray, z: float) -> SlopeEstimate:
    x = x.astype(float)
    y = y.astype(float)
    sxx = float(np.dot(x, x))
    slope = float(np.dot(x, y)) / sxx
    resid = y - slope * x
    # heteroscedasticity-robust: Var(Z_{t+1} | Z_t) grows with Z_t
    se = math.sqrt(float(np.dot(x * x, resid * resid))) / sxx
    return SlopeEstimate(slope, se, slope - z * se, slope + z * se)


def martingale_residuals(Z: np.ndarray, dist: DegreeDistribution, level: float = 0.99,
                         min_runs: int = 1000) -> MartingaleReport:
    """Regress Z_{t+1} on Z_t through the origin for t >= 1 (Z_1 follows the root law).

    Under the martingale property E[Z_{t+1} | Z_t] = a Z_t, so each slope
    estimates ``a``.  Pooled over all t, with normal-approximation intervals
    using heteroscedasticity-robust standard errors.
    """
    Z = np.asarray(Z)
    if Z.ndim != 2 or Z.shape[0] < min_runs:
        raise StatisticsError(f"need at least {min_runs} trajectories, got {Z.shape[0] if Z.ndim == 2 else 0}")
    if Z.shape[1] < 3:
        raise StatisticsError("need trajectories of length >= 3")
    a, _ = derived_constants(dist)
    z = NormalDist().inv_cdf(0.5 + level / 2)
    per_t = {t: _origin_slope(Z[:, t], Z[:, t + 1], z) for t in range(1, Z.shape[1] - 1)}
    xs = Z[:, 1:-1].ravel()
    ys = Z[:, 2:].ravel()
    return MartingaleReport(a, per_t, _origin_slope(xs, ys, z), level)


def shuffled_control(Z: np.ndarray, seed=None) -> np.ndarray:
    """Negative control: permute each generation across runs, destroying the Z_t -> Z_{t+1} link."""
    rng = np.random.default_rng(seed)
    out = Z.copy()
    for t in range(2, Z.shape[1]):
        out[:, t] = rng.permutation(Z[:, t])
    return out


@dataclass
class TailBoundReport:
    s_values: list[float]
    rates: list[float]
    n_runs: int
    k_range: int

    @property
    def monotone(self) -> bool:
        return all(b <= a for a, b in zip(self.rates, self.rates[1:]))


def exceedance_rate(Z: np.ndarray, a: float, s: float) -> float:
    """Fraction of runs with Z_k > a^k s for some k >= 1."""
    k = np.arange(1, Z.shape[1])
    return float(np.mean(np.any(Z[:, 1:] > s * a ** k, axis=1)))


def tail_bound_check(dist: DegreeDistribution, s: Union[float, Sequence[float]], k_range: int,
                     n_runs: int, seed=None) -> TailBoundReport:
    """Empirical P(exists k <= k_range: Z_k > a^k s) for each s; s must be >= k_max + 1."""
    s_values = sorted([float(s)] if np.isscalar(s) else [float(v) for v in s])
    if s_values[0] < dist.support_max + 1:
        raise ValueError(f"s must be >= k_max + 1 = {dist.support_max + 1}")
    a, _ = derived_constants(dist)
    Z = simulate_Z_batch(dist, k_range, n_runs, seed)
    return TailBoundReport(s_values, [exceedance_rate(Z, a, v) for v in s_values], n_runs, k_range)


def growth_concentration_rates(Z: np.ndarray, a: float, C_values: Sequence[float], n: float) -> list[float]:
    """For each C, the fraction of runs where some s < t has
    |a^(s-t) Z_t - Z_s| > C (s+1) a^(s/2) (log n)^C."""
    T = Z.shape[1] - 1
    Zf = Z.astype(float)
    worst = np.zeros((Z.shape[0], len(C_values)), dtype=bool)
    for s in range(1, T):
        for t in range(s + 1, T + 1):
            dev = np.abs(a ** (s - t) * Zf[:, t] - Zf[:, s])
            for j, C in enumerate(C_values):
                worst[:, j] |= dev > C * (s + 1) * a ** (s / 2) * math.log(n) ** C
    return [float(r) for r in worst.mean(axis=0)]


def descendant_counts(children: list[np.ndarray]) -> list[np.ndarray]:
    """``D[d][v, j]`` = number of descendants of depth-``d`` node ``v`` exactly ``j`` generations below.

    Children of consecutive parents are contiguous in BFS order, so each
    level is a segmented sum of the level below.
    """
    H = len(children)
    leaves = int(children[-1].sum())
    D: list[np.ndarray] = [np.ones((leaves, 1), dtype=np.int64)]
    for d in range(H - 1, -1, -1):
        counts = children[d]
        below = D[0]
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        width = H - d + 1
        cur = np.zeros((len(counts), width), dtype=np.int64)
        cur[:, 0] = 1
        has_kids = counts > 0
        if below.shape[0]:
            cur[has_kids, 1:] = np.add.reduceat(below, starts[has_kids], axis=0)
        D.insert(0, cur)
    return D


def q_from_descendants(D: list[np.ndarray], ell: int) -> int:
    """Q_ell = sum over t < ell, v at depth t, ordered pairs w != u of children of v,
    of Z^(w)_{ell-t-1} Z^(u)_{t+1}.

    The ordered-pair sum is (sum_w Z^(w)_{ell-t-1})(sum_u Z^(u)_{t+1}) minus the
    diagonal, and the child sums are descendant counts of v itself.
    """
    if 2 * ell > len(D) - 1:
        raise ValueError(f"tree depth {len(D) - 1} is too shallow for ell = {ell}")
    total = 0
    for t in range(ell):
        Dv, Dw = D[t], D[t + 1]
        full = np.dot(Dv[:, ell - t], Dv[:, t + 2])
        diag = np.dot(Dw[:, ell - t - 1], Dw[:, t + 1])
        total += int(full) - int(diag)
    return total


def _explicit_tree(children: list[np.ndarray]) -> tuple[list[int], list[list[int]]]:
    parent = [-1]
    kids: list[list[int]] = [[]]
    level = [0]
    for counts in children:
        nxt = []
        for v, c in zip(level, counts):
            for _ in range(int(c)):
                u = len(parent)
                parent.append(v)
                kids.append([])
                kids[v].append(u)
                nxt.append(u)
        level = nxt
    return parent, kids


def q_bruteforce(children: list[np.ndarray], ell: int) -> int:
    """Count walks of 2 ell + 2 steps from the root whose only backtrack is v_{ell+1} = v_{ell-1}."""
    if 2 * ell > len(children):
        raise ValueError("tree too shallow")
    parent, kids = _explicit_tree(children)
    n_steps = 2 * ell + 2

    def neighbours(v: int) -> list[int]:
        return kids[v] + ([parent[v]] if parent[v] >= 0 else [])

    def count(prev: int, cur: int, step: int) -> int:
        if step == n_steps:
            return 1
        total = 0
        for nxt in neighbours(cur):
            backtrack = nxt == prev
            if backtrack != (step == ell):
                continue
            total += count(cur, nxt, step + 1)
        return total

    return count(-1, 0, 0)


@dataclass
class QSample:
    q: int
    trajectory: GWTrajectory
    q_bruteforce: Optional[int] = None


def simulate_Q(dist: DegreeDistribution, ell: int, seed=None, root_law: RootLaw = "P") -> QSample:
    """Sample a tree to depth 2 ell (deep enough for every counted walk) and compute Q_ell."""
    if ell < 1:
        raise ValueError("ell must be >= 1")
    traj = simulate_Z(dist, 2 * ell, seed, root_law, keep_tree=True)
    q = q_from_descendants(descendant_counts(traj.children), ell)
    brute = q_bruteforce(traj.children, ell) if ell <= BRUTE_FORCE_MAX_ELL else None
    return QSample(q, traj, brute)


@dataclass
class QStudyReport:
    ells: list[int]
    mean_ratio: list[float]
    stderr: list[float]
    zinf_mean: float
    normalized: list[float]
    moments: dict[int, list[float]]
    n_runs: int
    plateau_tol: float = 0.05
    moment_growth_limit: float = 2.0
    rows: list[dict] = field(default_factory=list)

    @property
    def relative_change(self) -> float:
        a, b = self.normalized[-2], self.normalized[-1]
        return abs(b - a) / abs(a)

    @property
    def plateau(self) -> bool:
        return self.relative_change < self.plateau_tol

    @property
    def moments_bounded(self) -> bool:
        return all(max(v) <= self.moment_growth_limit * v[0] for v in self.moments.values())


def q_convergence_study(dist: DegreeDistribution, ell_max: int, n_runs: int, seed=None,
                        ell_min: int = 4, plateau_tol: float = 0.05) -> QStudyReport:
    """Track mean(Q_ell / a^(2 ell)) / mean(Z_T / a^T), T = ell_max + 4, across ell.

    One tree of depth 2 ell_max per run serves every ell.  A plateau (relative
    change below ``plateau_tol`` over the last two ell) is consistent with
    Q_ell / a^(2 ell) converging to a multiple of the martingale limit.  Also
    reports E Q^p / a^(2 ell p) for p = 1, 2, which should stay bounded.
    """
    if ell_max < 4:
        raise ValueError("ell_max must be >= 4")
    ell_min = min(ell_min, ell_max - 1)
    a, _ = derived_constants(dist)
    ells = list(range(ell_min, ell_max + 1))
    T = ell_max + 4
    depth = max(2 * ell_max, T)
    seqs = np.random.SeedSequence(seed).spawn(n_runs)
    qs = np.empty((n_runs, len(ells)))
    zinf = np.empty(n_runs)
    for i, ss in enumerate(seqs):
        traj = simulate_tree(dist, depth, np.random.default_rng(ss))
        D = descendant_counts(traj.children)
        for j, ell in enumerate(ells):
            qs[i, j] = q_from_descendants(D, ell) / a ** (2 * ell)
        zinf[i] = traj.z[T] / a ** T
    mean_ratio = qs.mean(axis=0)
    stderr = qs.std(axis=0, ddof=1) / math.sqrt(n_runs) if n_runs > 1 else np.zeros(len(ells))
    zbar = float(zinf.mean())
    normalized = [float(m / zbar) for m in mean_ratio]
    moments = {p: [float(np.mean(qs[:, j] ** p)) for j in range(len(ells))] for p in (1, 2)}
    rows = [
        {"ell": ell, "estimate": float(mean_ratio[j]), "stderr": float(stderr[j]),
         "normalized": normalized[j], "n_runs": n_runs}
        for j, ell in enumerate(ells)
    ]
    return QStudyReport(ells, [float(v) for v in mean_ratio], [float(v) for v in stderr], zbar,
                        normalized, moments, n_runs, plateau_tol, rows=rows)
