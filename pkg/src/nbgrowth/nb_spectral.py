"""Non-backtracking operator on directed edges, its Perron eigenvalue, and walk counts.

Directed edges are indexed by half-edges: half-edge ``h`` at vertex ``u``
stands for the directed edge leaving ``u`` through ``h`` and entering the
vertex of ``partner[h]``.  The reversal of ``h`` is ``partner[h]``, and the
successors of ``h`` are the half-edges at its head other than ``partner[h]``.
For simple graphs this is the usual ``(u, v) -> (v, w), w != u`` rule; for
multigraphs it is the half-edge product of the matching and the
"same vertex, different slot" matrix.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .config_sampler import MultiGraph

DEFAULT_WINDOW = 32


class OperatorError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    """Power iteration did not settle; ``estimate`` holds the last value."""

    def __init__(self, message: str, estimate: float, iterations: int, residual: float):
        super().__init__(message)
        self.estimate = estimate
        self.iterations = iterations
        self.residual = residual


@dataclass(frozen=True, eq=False)
class NBOperator:
    """Implicit non-backtracking matrix of a multigraph (rows and columns are half-edges)."""

    graph: MultiGraph

    def __post_init__(self):
        if self.graph.n and int(self.graph.degrees.min()) < 2:
            raise OperatorError("non-backtracking operator needs minimum degree >= 2")

    @property
    def dim(self) -> int:
        return self.graph.n_half_edges

    @property
    def partner(self) -> np.ndarray:
        return self.graph.partner

    @property
    def tail(self) -> np.ndarray:
        return self.graph.vertex_of

    @property
    def head(self) -> np.ndarray:
        return self.graph.vertex_of[self.graph.partner]

    def reverse(self, x: np.ndarray) -> np.ndarray:
        """Relabel a vector by edge reversal: ``out[e] = x[e^{-1}]``."""
        return x[self.partner]

    def _vertex_sums(self, x: np.ndarray) -> np.ndarray:
        return np.bincount(self.tail, weights=x, minlength=self.graph.n)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """(B x)[e] = sum of x over the half-edges at head(e) except the reversal of e."""
        return self._vertex_sums(x)[self.head] - x[self.partner]

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        """(B* y)[f] = sum of y over the edges entering tail(f) except the reversal of f."""
        return self._vertex_sums(y[self.partner])[self.tail] - y[self.partner]

    def successors(self, e: int) -> list[int]:
        back = int(self.partner[e])
        w = int(self.graph.vertex_of[back])
        return [f for f in self.graph.half_edges(w) if f != back]

    def row_sums(self) -> np.ndarray:
        return self.graph.degrees[self.head] - 1

    def to_sparse(self) -> sp.csr_matrix:
        rows, cols = [], []
        for e in range(self.dim):
            for f in self.successors(e):
                rows.append(e)
                cols.append(f)
        data = np.ones(len(rows), dtype=float)
        return sp.csr_matrix((data, (rows, cols)), shape=(self.dim, self.dim))

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def offspring_mean(self) -> float:
        d = self.graph.degrees
        return float((d * (d - 1)).sum() / d.sum()) if d.sum() else 0.0


def build_nb_operator(g: MultiGraph) -> NBOperator:
    return NBOperator(g)


@dataclass(frozen=True)
class EdgeVectors:
    chi: np.ndarray
    psi: np.ndarray
    psi_tilde: np.ndarray


def edge_vectors(op: NBOperator) -> EdgeVectors:
    """All-ones ``chi``; ``psi[e] = deg(head e) - 1``; ``psi_tilde[e] = deg(tail e) - 1``."""
    d = op.graph.degrees.astype(float)
    return EdgeVectors(
        chi=np.ones(op.dim),
        psi=d[op.head] - 1.0,
        psi_tilde=d[op.tail] - 1.0,
    )


@dataclass
class SpectralResult:
    lambda1: float
    iterations: int
    residual: float
    vector: Optional[np.ndarray] = None
    n: int = 0
    m: int = 0
    seed: Optional[int] = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("vector")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def default_max_iter(op: NBOperator) -> int:
    a = op.offspring_mean()
    if a <= 1.0 or op.dim < 2:
        return 500
    return max(500, math.ceil(10 * math.log(op.dim) / math.log(a)))


def power_iterate(op: NBOperator, tol: float = 1e-10, max_iter: Optional[int] = None,
                  seed=None, window: int = DEFAULT_WINDOW, shift: float = 1.0,
                  keep_vector: bool = False) -> SpectralResult:
    """Perron eigenvalue of ``op`` by power iteration on ``B + shift*I``.

    The iterate stays non-negative and is normalised in the 1-norm, so each
    growth factor equals ``<psi_tilde + shift, x>``; with constant column sums
    (regular graphs, cycles) it is exact from the first step.  The estimate is
    the geometric mean of the growth factors over the last ``window`` steps,
    minus the shift.  The shift makes ``B + shift*I`` primitive, so periodic
    graphs (bipartite, cycles) converge too.  Converged once the last
    ``window`` estimates agree to relative ``tol`` and the relative residual
    ``|Bx - lambda x| / (lambda |x|)`` is below ``tol``.

    With ``seed=None`` the start is the all-ones vector, which is already the
    Perron vector of a regular graph; otherwise it is uniform on [0.5, 1.5].
    """
    n = op.dim
    if n == 0:
        return SpectralResult(0.0, 0, 0.0, n=op.graph.n, m=op.graph.m, seed=seed)
    if max_iter is None:
        max_iter = default_max_iter(op)
    x = np.ones(n) if seed is None else np.random.default_rng(seed).uniform(0.5, 1.5, n)
    x /= x.sum()
    log_growth: list[float] = []
    estimates: list[float] = []
    estimate = float("nan")
    residual = float("inf")
    bx = op.matvec(x)
    for it in range(1, max_iter + 1):
        y = bx + shift * x
        g = y.sum()
        log_growth.append(math.log(g))
        x = y / g
        bx = op.matvec(x)
        w = min(window, len(log_growth))
        estimate = math.exp(math.fsum(log_growth[-w:]) / w) - shift
        estimates.append(estimate)
        if len(estimates) >= window:
            recent = estimates[-window:]
            scale = max(abs(estimate), 1.0)
            spread = (max(recent) - min(recent)) / scale
            if spread < tol:
                residual = float(np.linalg.norm(bx - estimate * x) / (scale * np.linalg.norm(x)))
                if residual < tol:
                    return SpectralResult(estimate, it, residual, x if keep_vector else None,
                                          n=op.graph.n, m=op.graph.m, seed=seed)
    scale = max(abs(estimate), 1.0)
    residual = float(np.linalg.norm(bx - estimate * x) / (scale * np.linalg.norm(x)))
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} steps (estimate {estimate!r}, residual {residual:.3g})",
        estimate, max_iter, residual,
    )


def ihara_bass_oracle(g: MultiGraph) -> float:
    """Perron eigenvalue of the non-backtracking matrix via the Ihara-Bass identity.

    det(I - uB) = (1 - u^2)^(|E|-|V|) det(I - uA + u^2 (D - I)), so the
    non-backtracking spectrum is ±1 (each |E|-|V| times) together with the
    eigenvalues of the 2|V| x 2|V| companion matrix [[A, I - D], [I, 0]].
    Works per connected component: a forest component contributes 0 and a
    unicyclic one exactly 1.  Otherwise the Perron value is the largest real
    companion eigenvalue, a simple root of det(x^2 I - x A + D - I), polished
    by bisection on its sign change.
    """
    if g.n > 2000:
        raise OperatorError("dense oracle is limited to 2000 vertices")
    best = 0.0
    for comp in g.connected_components():
        sub = g.subgraph(comp)
        cycle_rank = sub.m - sub.n + 1
        if cycle_rank <= 0:
            lam = 0.0
        elif cycle_rank == 1:
            lam = 1.0
        else:
            lam = _companion_perron(sub)
        best = max(best, lam)
    return best


def _companion_perron(g: MultiGraph) -> float:
    n = g.n
    A = g.adjacency().toarray().astype(float)
    deg = g.degrees.astype(float)
    I = np.eye(n)
    K = np.block([[A, I - np.diag(deg)], [I, np.zeros((n, n))]])
    eig = np.linalg.eigvals(K)
    rho = float(np.max(np.abs(eig)))
    real = eig[np.abs(eig.imag) <= 1e-6 * max(1.0, rho)].real
    if len(real) == 0:
        raise OperatorError("no real eigenvalue found")
    lam = float(real.max())
    if abs(lam - rho) > 1e-6 * max(1.0, rho):
        raise OperatorError(f"largest real eigenvalue {lam} differs from spectral radius {rho}")
    return _polish_root(A, deg, lam)


def _polish_root(A: np.ndarray, deg: np.ndarray, lam: float) -> float:
    """Refine a simple root of f(x) = det(x^2 I - x A + D - I) by bisection."""
    n = len(deg)

    def f(x: float) -> float:
        M = x * x * np.eye(n) - x * A + np.diag(deg - 1.0)
        sign, _ = np.linalg.slogdet(M)
        return float(sign)

    lo, hi = lam * (1 - 1e-9), lam * (1 + 1e-9)
    flo, fhi = f(lo), f(hi)
    if flo == 0 or fhi == 0 or flo == fhi:
        raise OperatorError(f"could not bracket the Perron root near {lam!r}")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0:
            return mid
        if fm == flo:
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def walk_counts(op: NBOperator, t_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(S, T)`` with ``S[t] = B^t chi`` and ``T[t] = (B*)^t psi_tilde`` for ``t = 0..t_max``.

    ``S[t][e]`` is the number of length-``t`` non-backtracking continuations of
    ``e``.  Since ``psi_tilde = B* chi`` and ``B* = J B J`` for the reversal
    ``J``, ``T[t][e] = S[t+1][e^{-1}]``.  Counts are exact integers while they
    fit in int64.
    """
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    vec = edge_vectors(op)
    S = np.empty((t_max + 1, op.dim), dtype=np.int64)
    T = np.empty((t_max + 1, op.dim), dtype=np.int64)
    s = np.ones(op.dim, dtype=np.int64)
    tt = vec.psi_tilde.astype(np.int64)
    S[0], T[0] = s, tt
    for t in range(1, t_max + 1):
        s = _int_matvec(op, s)
        tt = _int_rmatvec(op, tt)
        S[t], T[t] = s, tt
    return S, T


def _int_matvec(op: NBOperator, x: np.ndarray) -> np.ndarray:
    sums = np.zeros(op.graph.n, dtype=np.int64)
    np.add.at(sums, op.tail, x)
    return sums[op.head] - x[op.partner]


def _int_rmatvec(op: NBOperator, y: np.ndarray) -> np.ndarray:
    yr = y[op.partner]
    sums = np.zeros(op.graph.n, dtype=np.int64)
    np.add.at(sums, op.tail, yr)
    return sums[op.tail] - yr


@dataclass(frozen=True)
class NormRatioDiagnostics:
    ell: int
    ratio: float
    cosine: float


def prop51_diagnostics(op: NBOperator, ell: int) -> NormRatioDiagnostics:
    """Norm ratio |B^l (B*)^l psi~| / |(B*)^l psi~| and the cosine between the two vectors.

    Uses repeated (transpose) matvecs with rescaling, never forming B^l.
    """
    if ell < 0:
        raise ValueError("ell must be >= 0")
    v = edge_vectors(op).psi_tilde.copy()
    for _ in range(ell):
        v = op.rmatvec(v)
        v /= np.linalg.norm(v)
    u = v.copy()
    log_norm = 0.0
    for _ in range(ell):
        u = op.matvec(u)
        nu = np.linalg.norm(u)
        log_norm += math.log(nu)
        u /= nu
    # u is unit-norm; B^l v = e^{log_norm} u with |v| = 1
    ratio = math.exp(log_norm)
    cosine = abs(float(np.dot(u, v))) / (np.linalg.norm(u) * np.linalg.norm(v))
    return NormRatioDiagnostics(ell, ratio, cosine)


def log_ball_sizes(op: NBOperator, depth: int) -> np.ndarray:
    """log of chi^T B^t chi (total non-backtracking walks of length t), t = 0..depth."""
    x = np.ones(op.dim)
    out = np.empty(depth + 1)
    log_scale = 0.0
    out[0] = math.log(op.dim) if op.dim else float("-inf")
    for t in range(1, depth + 1):
        x = op.matvec(x)
        total = x.sum()
        out[t] = log_scale + math.log(total)
        log_scale = out[t]
        x /= total
    return out


def growth_rate_estimate(op: NBOperator, depth: int) -> float:
    """Growth rate of the universal cover from ball counts: exp of the least-squares slope of
    log(total walks of length t) over the upper half of ``t = 0..depth``."""
    if depth < 2:
        raise ValueError("depth must be >= 2")
    logs = log_ball_sizes(op, depth)
    ts = np.arange(depth // 2, depth + 1)
    slope = np.polyfit(ts, logs[ts], 1)[0]
    return float(math.exp(slope))
