"""Small statistics helpers shared by the sampler and the experiments.

Batch means for correlated chains, distribution-free band widths, an
exact two-site reference law by tensor quadrature, and binned total
variation with lumped tails.  Serialization helpers keep every float at
17 significant digits so reports round-trip bit-exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import ContractError

__all__ = [
    "BatchStats",
    "batch_means",
    "batch_quantile_se",
    "dkw_epsilon",
    "one_sided_dkw",
    "ks_statistic",
    "ks_critical",
    "TwoSiteReference",
    "two_site_reference",
    "tv_binned",
    "fmt17",
    "canonical_json",
]


# ---------------------------------------------------------------------------
# batch means


@dataclass
class BatchStats:
    n: int
    mean: float
    variance: float
    se_mean: float             # from batch-mean scatter; honest under
    iact: float                # autocorrelation, unlike s / sqrt(n)
    ess: float
    n_batches: int


def batch_means(x, n_batches: int = 32) -> BatchStats:
    """Mean with an autocorrelation-aware standard error.

    Splits the series into equal batches (dropping a remainder at the
    front), so the batch means are nearly independent once batches are
    longer than the correlation time.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 2 * n_batches:
        raise ContractError(f"need at least {2 * n_batches} points")
    B = n // n_batches
    trimmed = x[n - B * n_batches:]
    m = trimmed.reshape(n_batches, B).mean(axis=1)
    mean = float(trimmed.mean())
    s2 = float(trimmed.var(ddof=1))
    var_bm = float(m.var(ddof=1))
    se = math.sqrt(var_bm / n_batches)
    if s2 > 0:
        iact = max(1.0, B * var_bm / s2)
    else:
        iact = 1.0
    ess = min(float(len(trimmed)), len(trimmed) / iact)
    return BatchStats(n=len(trimmed), mean=mean, variance=s2, se_mean=se,
                      iact=iact, ess=ess, n_batches=n_batches)


def batch_quantile_se(x, q: float, n_batches: int = 32
                      ) -> tuple[float, float]:
    """(quantile estimate, its batch-means standard error)."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 2 * n_batches:
        raise ContractError(f"need at least {2 * n_batches} points")
    B = n // n_batches
    trimmed = x[n - B * n_batches:]
    per = np.quantile(trimmed.reshape(n_batches, B), q, axis=1)
    return (float(np.quantile(trimmed, q)),
            float(per.std(ddof=1) / math.sqrt(n_batches)))


# ---------------------------------------------------------------------------
# distribution-free bands


def dkw_epsilon(n: int, alpha: float) -> float:
    """Two-sided Dvoretzky-Kiefer-Wolfowitz band half-width."""
    if n <= 0 or not 0 < alpha < 1:
        raise ContractError("need n > 0 and alpha in (0, 1)")
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * n))


def one_sided_dkw(n: int, alpha: float) -> float:
    if n <= 0 or not 0 < alpha < 1:
        raise ContractError("need n > 0 and alpha in (0, 1)")
    return math.sqrt(math.log(1.0 / alpha) / (2.0 * n))


def ks_statistic(sample, cdf) -> float:
    """sup_u |F_emp(u) - F(u)| against a callable reference cdf."""
    xs = np.sort(np.asarray(sample, dtype=float))
    n = len(xs)
    if n == 0:
        raise ContractError("empty sample")
    ref = np.array([cdf(u) for u in xs])
    hi = np.arange(1, n + 1) / n - ref
    lo = ref - np.arange(0, n) / n
    return float(max(hi.max(), lo.max()))


def ks_critical(n: int, alpha: float) -> float:
    """Asymptotic one-sample Kolmogorov-Smirnov critical value.

    sqrt(-log(alpha/2) / 2) / sqrt(n); at alpha = 0.001 the numerator is
    1.9494, the familiar 99.9 percent point.
    """
    if n <= 0 or not 0 < alpha < 1:
        raise ContractError("need n > 0 and alpha in (0, 1)")
    return math.sqrt(-math.log(alpha / 2.0) / 2.0) / math.sqrt(n)


# ---------------------------------------------------------------------------
# exact two-site law


@dataclass
class TwoSiteReference:
    """Joint law on two coupled sites, evaluated by tensor quadrature.

    density(u, v) proportional to
        exp(ld_u(u) + ld_v(v) + w u v + h_u u + h_v v)
    """

    us: np.ndarray
    vs: np.ndarray
    joint: np.ndarray            # normalized cell-weighted density grid
    w_u: np.ndarray              # Simpson weights, grid spacing included
    w_v: np.ndarray

    def marginal_u(self) -> np.ndarray:
        return self.joint @ self.w_v

    def marginal_v(self) -> np.ndarray:
        return self.w_u @ self.joint

    def _cum(self, grid, dens):
        h = grid[1] - grid[0]
        c = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) * h / 2)])
        return c / c[-1]

    def cdf_u(self, x) -> float:
        c = self._cum(self.us, self.marginal_u())
        return float(np.interp(x, self.us, c, left=0.0, right=1.0))

    def cdf_v(self, x) -> float:
        c = self._cum(self.vs, self.marginal_v())
        return float(np.interp(x, self.vs, c, left=0.0, right=1.0))

    def moment(self, p: int, q: int) -> float:
        gu = self.us ** p
        gv = self.vs ** q
        return float((gu * self.w_u) @ self.joint @ (gv * self.w_v))

    def correlation(self) -> float:
        m10, m01 = self.moment(1, 0), self.moment(0, 1)
        m11 = self.moment(1, 1)
        v0 = self.moment(2, 0) - m10 * m10
        v1 = self.moment(0, 2) - m01 * m01
        return (m11 - m10 * m01) / math.sqrt(v0 * v1)


def _simpson_weights(m: int, h: float) -> np.ndarray:
    if m % 2 == 0:
        raise ContractError("Simpson weights need an odd point count")
    w = np.ones(m)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


def two_site_reference(measure_u, measure_v, w: float, h_u: float = 0.0,
                       h_v: float = 0.0, points: int = 2049,
                       pad: float = 6.0) -> TwoSiteReference:
    """Exact (to quadrature) joint law of two coupled unbounded spins."""
    tu = measure_u.table()
    tv = measure_v.table()
    lo_u, hi_u = tu.u_lo - pad, tu.u_hi + pad
    lo_v, hi_v = tv.u_lo - pad, tv.u_hi + pad
    if measure_u.shifted:
        lo_u = measure_u.support_min
    if measure_v.shifted:
        lo_v = measure_v.support_min
    us = np.linspace(lo_u, hi_u, points)
    vs = np.linspace(lo_v, hi_v, points)
    ld_u = measure_u.log_density(us) + h_u * us
    ld_v = measure_v.log_density(vs) + h_v * vs
    logj = ld_u[:, None] + ld_v[None, :] + w * np.outer(us, vs)
    peak = float(logj.max())
    joint = np.exp(logj - peak)
    w_us = _simpson_weights(points, us[1] - us[0])
    w_vs = _simpson_weights(points, vs[1] - vs[0])
    total = float(w_us @ joint @ w_vs)
    if total <= 0 or not math.isfinite(total):
        raise ContractError("two-site quadrature grid is degenerate")
    edges = [joint[-1, :].max(), joint[:, -1].max()]
    if not measure_u.shifted:            # shifted supports peak at the edge
        edges.append(joint[0, :].max())
    if not measure_v.shifted:
        edges.append(joint[:, 0].max())
    if max(edges) > 1e-10 * joint.max():
        raise ContractError("two-site window does not contain the mass; "
                            "increase pad")
    return TwoSiteReference(us, vs, joint / total, w_us, w_vs)


# ---------------------------------------------------------------------------
# binned total variation


def tv_binned(x, y, lo: float, hi: float, bins: int = 64) -> float:
    """Total variation between two samples on a compactified line.

    Interior bins partition [lo, hi]; everything below lo or above hi is
    lumped into two tail buckets, so heavy tails cannot starve the
    estimate.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) == 0 or len(y) == 0:
        raise ContractError("empty sample")
    edges = np.concatenate([[-np.inf], np.linspace(lo, hi, bins + 1),
                            [np.inf]])
    px, _ = np.histogram(x, edges)
    py, _ = np.histogram(y, edges)
    return float(0.5 * np.abs(px / len(x) - py / len(y)).sum())


# ---------------------------------------------------------------------------
# serialization


def fmt17(x: float) -> float:
    """Round-trip float through its 17-significant-digit decimal form."""
    return float(format(float(x), ".17g"))


def _walk(obj):
    if isinstance(obj, dict):
        return {str(k): _walk(v) for k, v in sorted(obj.items(),
                                                    key=lambda kv: str(kv[0]))}
    if isinstance(obj, (list, tuple)):
        return [_walk(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_walk(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return fmt17(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def canonical_json(obj) -> str:
    """Deterministic JSON: sorted keys, 17-digit floats, no whitespace
    drift; identical inputs serialize to identical bytes."""
    return json.dumps(_walk(obj), sort_keys=True, indent=2)
