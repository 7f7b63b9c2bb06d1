"""High-spin clusters and the branching process that dominates them.

Under a product draw of the half-tilted single-site measure, the set of
vertices whose spin clears a compounding walk threshold forms a random
cluster.  Revealing that cluster edge by edge never tests an edge twice,
so the number of children found at each vertex is stochastically below
an explicit offspring law parametrized by one number

    b = inf_x prod_y (1 - p_xy),

where p_xy is the single-edge pass probability.  The total progeny of
that law then bounds the cluster size.  This module computes the edge
probabilities, the offspring law, its exact total-progeny distribution
(via the cycle identity P[T = n] = (k/n) P[S_n = n - k]), the cluster
itself, and Monte Carlo harnesses for the domination check.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .graphs import InteractionGraph, Region
from . import measures as ms

__all__ = [
    "EdgeProbabilities",
    "OffspringLaw",
    "ProgenyDistribution",
    "ClusterResult",
    "DominationReport",
    "p_matrix",
    "progeny_pmf",
    "build_cluster",
    "simulate_exploration",
    "simulate_total_progeny",
    "branching_domination_check",
]


# ---------------------------------------------------------------------------
# edge pass probabilities


@dataclass
class EdgeProbabilities:
    """p_xy = half-tilted tail mass above C f(J_xy), on the J support."""

    graph: InteractionGraph
    C: float
    a: float
    n: float
    indptr: np.ndarray
    indices: np.ndarray
    p: np.ndarray                 # aligned with indices
    no_child: np.ndarray          # prod_y (1 - p_xy) per vertex
    b: float

    def edge_p(self, x: int, y: int) -> float:
        lo, hi = self.indptr[x], self.indptr[x + 1]
        seg = self.indices[lo:hi]
        hit = np.flatnonzero(seg == y)
        if len(hit) == 0:
            return 0.0
        return float(self.p[lo + hit[0]])


def p_matrix(graph: InteractionGraph, measure: ms.SingleSiteMeasure,
             a: float, n: float, C: float) -> EdgeProbabilities:
    """Single-edge pass probabilities and their no-child product.

    The pass event compares |spin| against C f(J) under the measure
    tilted by exp((a/2) |u|**n), normalized.
    """
    if C <= 0:
        raise ContractError("C must be positive")
    half = ms.tilt(measure, 0.5 * a, n)
    indptr, indices, data = graph.coupling_rows()
    thresholds = np.zeros(len(data))
    nz = data != 0.0
    if np.any(nz):
        thresholds[nz] = C * np.asarray(graph.kernel(data[nz]), dtype=float)
    p = np.zeros(len(data))
    cache: dict[float, float] = {}
    for i, t in enumerate(thresholds):
        if not nz[i]:
            continue
        t = float(t)
        if t not in cache:
            cache[t] = ms.quadrature_eval(half, "tail_mass", t)
        p[i] = cache[t]
    no_child = np.ones(graph.n)
    for x in range(graph.n):
        seg = p[indptr[x]:indptr[x + 1]]
        if seg.size:
            no_child[x] = float(np.prod(1.0 - seg))
    b = float(no_child.min()) if graph.n else 1.0
    return EdgeProbabilities(graph, C, a, n, indptr, indices, p,
                             no_child, b)


# ---------------------------------------------------------------------------
# offspring law


class OffspringLaw:
    """Offspring distribution with no-child mass b in [1/2, 1):

        P[X = 0] = b
        P[X = 1] = (1 - b)(2b - 1) / b
        P[X = k] = (1 - b)**k          for k >= 2

    The three pieces sum to one exactly; the geometric tail makes the
    law dominate any sum of independent Bernoullis whose no-success
    probability is at least b.
    """

    def __init__(self, b: float):
        if not 0.5 <= b <= 1.0:
            raise ContractError("offspring parameter must lie in [1/2, 1]")
        self.b = float(b)
        self.q = 1.0 - self.b

    def pmf(self, k):
        k = np.asarray(k)
        b, q = self.b, self.q
        p1 = q * (2.0 * b - 1.0) / b
        out = np.where(k == 0, b,
                       np.where(k == 1, p1, q ** np.maximum(k, 1)))
        out = np.where(k < 0, 0.0, out)
        if out.ndim == 0:
            return float(out)
        return out

    def pmf_array(self, n_max: int) -> np.ndarray:
        return self.pmf(np.arange(n_max + 1)).astype(float)

    def tail(self, k: int) -> float:
        """P[X > k], from the closed geometric sum (no cancellation)."""
        if k < 0:
            return 1.0
        if k == 0:
            return self.q
        if self.q == 0.0:
            return 0.0
        return self.q ** (k + 1) / self.b

    def mean(self) -> float:
        return self.q * (1.0 - self.b + self.b * self.b) / (self.b * self.b)

    def exp_moment(self, theta: float) -> float:
        """E[exp(theta X)]; infinite when exp(theta) (1-b) >= 1."""
        z = math.exp(theta) * self.q
        if z >= 1.0:
            return math.inf
        return (self.b + math.exp(theta) * self.pmf(1)
                + z * z / (1.0 - z))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Exact inverse-CDF draws; the geometric branch is closed-form."""
        u = rng.random(size)
        out = np.zeros(size, dtype=np.int64)
        p1 = self.pmf(1)
        one = (u >= self.b) & (u < self.b + p1)
        out[one] = 1
        rest = u >= self.b + p1
        if np.any(rest):
            if self.q == 0.0:
                raise ContractError("impossible branch: q = 0")
            # find least k with 1 - q^(k+1)/b >= u
            k = np.ceil(np.log((1.0 - u[rest]) * self.b)
                        / math.log(self.q)) - 1.0
            out[rest] = np.maximum(k.astype(np.int64), 2)
        return out


# ---------------------------------------------------------------------------
# total progeny


@dataclass
class ProgenyDistribution:
    """P[T = n] for the total progeny of ``ancestors`` independent roots."""

    ancestors: int
    n_max: int
    pmf: np.ndarray               # index n = 0 .. n_max
    offspring_mean: float

    def tail(self, k: int) -> float:
        """P[T >= k]; the mass beyond n_max is included (complement)."""
        if k <= self.ancestors:
            return 1.0
        if k > self.n_max:
            return float(max(0.0, 1.0 - self.pmf.sum()))
        return float(max(0.0, 1.0 - self.pmf[:k].sum()))

    @property
    def covered_mass(self) -> float:
        return float(self.pmf.sum())


def progeny_pmf(law, n_max: int, ancestors: int = 1) -> ProgenyDistribution:
    """Exact total-progeny law up to n_max by iterated convolution.

    Uses the cycle identity P[T = n] = (k/n) P[X_1 + ... + X_n = n - k]
    for k ancestors.  Truncating the running convolution at index n - k
    is exact: reaching a sum of n - k never uses larger offspring values.
    """
    if ancestors < 0:
        raise ContractError("ancestors must be >= 0")
    if isinstance(law, OffspringLaw):
        off = law.pmf_array(n_max)
        mean = law.mean()
    else:
        off = np.asarray(law, dtype=float)
        if off.ndim != 1 or len(off) == 0 or np.any(off < 0):
            raise ContractError("offspring pmf must be a nonnegative vector")
        if abs(off.sum() - 1.0) > 1e-12:
            raise ContractError("offspring pmf must sum to 1")
        mean = float(np.sum(np.arange(len(off)) * off))
        if len(off) < n_max + 1:
            off = np.concatenate([off, np.zeros(n_max + 1 - len(off))])
        off = off[:n_max + 1]
    pmf = np.zeros(n_max + 1)
    k = ancestors
    if k == 0:
        if n_max >= 0:
            pmf[0] = 1.0
        return ProgenyDistribution(0, n_max, pmf, mean)
    cur = np.zeros(n_max + 1)
    cur[0] = 1.0                      # pmf of the empty sum S_0
    for n in range(1, n_max + 1):
        cur = np.convolve(cur, off)[:n_max + 1]
        if n >= k:
            pmf[n] = (k / n) * cur[n - k]
    return ProgenyDistribution(k, n_max, pmf, mean)


def simulate_total_progeny(law: OffspringLaw, ancestors: int,
                           n_samples: int, rng: np.random.Generator,
                           cap: int = 10 ** 6) -> np.ndarray:
    """Generation-synchronous simulation of the total progeny.

    All replicas advance one generation per pass; per-replica offspring
    sums use a single flat draw split by reduceat.  Replicas whose total
    hits ``cap`` are frozen there and reported as censored values.
    """
    total = np.full(n_samples, ancestors, dtype=np.int64)
    alive = np.full(n_samples, ancestors, dtype=np.int64)
    while True:
        act = np.flatnonzero((alive > 0) & (total < cap))
        if len(act) == 0:
            break
        counts = alive[act]
        draws = law.sample(rng, int(counts.sum()))
        bounds = np.concatenate([[0], np.cumsum(counts)[:-1]])
        children = np.add.reduceat(draws, bounds)
        alive[act] = children
        total[act] = np.minimum(total[act] + children, cap)
    return total


# ---------------------------------------------------------------------------
# cluster construction


@dataclass
class ClusterResult:
    """Walk-threshold cluster of one spin configuration."""

    vertices: set
    seeds: set
    tau: dict                     # vertex -> least log(threshold / C) passed
    generation: dict              # vertex -> least walk length that reached it
    size: int


def build_cluster(graph: InteractionGraph, phi, C: float, n: float,
                  region_prime, seed_log_A=None, lam: float | None = None,
                  region: Region | None = None,
                  max_steps: int | None = None) -> ClusterResult:
    """All vertices reachable by walks whose spins clear the thresholds.

    Walks start anywhere in ``region_prime`` with initial log threshold
    log A(start) (zero unless ``seed_log_A`` supplies a profile); each
    step compounds the threshold:

        tau' = (n - 1) tau + log f(J)          tails steeper than square
        tau' = tau + log(lam) + log f(J)       quadratic tails

    A start vertex itself joins only by clearing its own seed threshold.
    Every vertex along a walk must clear the threshold at its step, so a
    search keeping the least tau per vertex is exact: lower tau is always
    more permissive, and the step map is monotone in tau.  When
    ``max_steps`` bounds the walk length the state is (vertex, length)
    instead, since a longer low-tau walk no longer dominates a shorter
    high-tau one.
    """
    if C <= 0:
        raise ContractError("C must be positive")
    if n == 2:
        if lam is None or lam < 1.0:
            raise ContractError("quadratic variant needs lam >= 1")
    elif n < 2:
        raise ContractError("n >= 2 required")
    indptr, indices, data = graph.coupling_rows()
    logf = graph.kernel
    logC = math.log(C)
    phi_arr = np.asarray(phi, dtype=float)
    if phi_arr.shape != (graph.n,):
        raise ContractError("phi must assign a spin to every stored vertex")
    in_region = np.ones(graph.n, dtype=bool) if region is None \
        else region.mask

    def log_excess(v):
        av = abs(phi_arr[v])
        return math.log(av) - logC if av > 0 else -math.inf

    def get_log_A(v):
        if seed_log_A is None:
            return 0.0
        if hasattr(seed_log_A, "log_value"):
            return float(seed_log_A.log_value(v))
        return float(seed_log_A[v])

    starts = [int(v) for v in
              (region_prime.vertices if isinstance(region_prime, Region)
               else region_prime)]
    members: set[int] = set()
    seeds: set[int] = set()
    best_tau: dict = {}           # vertex or (vertex, gen) -> least tau
    reach_tau: dict[int, float] = {}
    reach_gen: dict[int, int] = {}

    def state(v, gen):
        return v if max_steps is None else (v, gen)

    heap = []
    for s in starts:
        if not in_region[s]:
            raise ContractError("start vertex outside the spin region")
        t0 = get_log_A(s)
        if log_excess(s) >= t0:
            members.add(s)
            seeds.add(s)
        # expansion from a start does not require the seed event itself
        k = state(s, 0)
        if t0 < best_tau.get(k, math.inf):
            best_tau[k] = t0
            heapq.heappush(heap, (t0, 0, s))
        if t0 < reach_tau.get(s, math.inf):
            reach_tau[s] = t0
            reach_gen[s] = 0
    while heap:
        tau, gen, x = heapq.heappop(heap)
        if tau > best_tau.get(state(x, gen), math.inf):
            continue
        if max_steps is not None and gen >= max_steps:
            continue
        for idx in range(indptr[x], indptr[x + 1]):
            y = int(indices[idx])
            j = data[idx]
            if j == 0.0 or not in_region[y]:
                continue
            lf = float(logf.log(j))
            if n > 2:
                tau2 = (n - 1.0) * tau + lf
            else:
                tau2 = tau + math.log(lam) + lf
            if log_excess(y) >= tau2:
                members.add(y)
                if tau2 < reach_tau.get(y, math.inf):
                    reach_tau[y] = tau2
                    reach_gen[y] = gen + 1
                k = state(y, gen + 1)
                if tau2 < best_tau.get(k, math.inf) - 1e-15:
                    best_tau[k] = tau2
                    heapq.heappush(heap, (tau2, gen + 1, y))
    tau_out = {v: reach_tau[v] for v in members}
    gen_out = {v: reach_gen.get(v, 0) for v in members}
    return ClusterResult(members, seeds, tau_out, gen_out, len(members))


def simulate_exploration(graph: InteractionGraph,
                         measure: ms.SingleSiteMeasure, a: float, n: float,
                         C: float, region_prime, n_samples: int,
                         rng: np.random.Generator,
                         lam: float | None = None,
                         seed_log_A=None) -> np.ndarray:
    """Cluster sizes under independent half-tilted spins."""
    half = ms.tilt(measure, 0.5 * a, n)
    sizes = np.zeros(n_samples, dtype=np.int64)
    for i in range(n_samples):
        phi = ms.draw(half, rng, graph.n)
        res = build_cluster(graph, phi, C, n, region_prime,
                            seed_log_A=seed_log_A, lam=lam)
        sizes[i] = res.size
    return sizes


# ---------------------------------------------------------------------------
# domination check


@dataclass
class DominationReport:
    n_samples: int
    ancestors: int
    b: float
    epsilon: float                # one-sided DKW margin
    max_excess: float             # worst emp_tail - bound_tail - eps
    worst_k: int
    dominated: bool
    emp_tails: np.ndarray
    bound_tails: np.ndarray
    ks: np.ndarray


def branching_domination_check(sizes: np.ndarray, law: OffspringLaw,
                               ancestors: int, alpha: float = 0.01,
                               n_max: int | None = None
                               ) -> DominationReport:
    """One-sided comparison of empirical cluster-size tails against the
    total-progeny tails, with a Dvoretzky-Kiefer-Wolfowitz margin."""
    sizes = np.asarray(sizes)
    N = len(sizes)
    if N == 0:
        raise ContractError("no samples")
    if n_max is None:
        n_max = int(max(sizes.max() + 5, 4 * ancestors + 5))
    dist = progeny_pmf(law, n_max, ancestors)
    eps = math.sqrt(math.log(1.0 / alpha) / (2.0 * N))
    ks = np.arange(1, int(sizes.max()) + 2)
    emp = np.array([(sizes >= k).mean() for k in ks])
    bound = np.array([dist.tail(int(k)) for k in ks])
    excess = emp - bound - eps
    worst = int(np.argmax(excess))
    return DominationReport(
        n_samples=N, ancestors=ancestors, b=law.b, epsilon=eps,
        max_excess=float(excess[worst]), worst_k=int(ks[worst]),
        dominated=bool(np.all(excess <= 0)), emp_tails=emp,
        bound_tails=bound, ks=ks)
