"""Single-site measures with super-Gaussian tails.

A measure is stored as a log-density that is a signed combination of
|u|**p terms (plus an optional shift-truncation to a half line, plus the
purely atomic kind).  Tail bookkeeping on those terms decides exactly
which exponential tilts keep the measure normalizable; quadrature against
the log-density provides normalizations, moments, CDFs and quantiles; an
equal-mass inverse-CDF table provides draws that are monotone in the
underlying uniform variate, which the coupling machinery relies on.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, interpolate, optimize

from .errors import ContractError, QuadratureError, SchemaError

__all__ = [
    "SingleSiteMeasure",
    "QuadratureTable",
    "make_measure",
    "check_super_gaussian",
    "tilt",
    "shift_truncate",
    "quadrature_eval",
    "draw",
    "default_alpha0",
    "truncated_log_mass",
]

LOG_DROP = 40.0          # window cut: log-density falls this far below peak
TABLE_POINTS = 4096      # equal-mass inverse-CDF resolution
GRID_POINTS = 32769      # dense grid for cumulative mass (2**15 + 1)
DEFAULT_TOL = 1e-10


def _merge_terms(terms):
    """Combine (power, coeff) pairs, summing coefficients of equal powers."""
    acc: dict[float, float] = {}
    for p, c in terms:
        p = float(p)
        acc[p] = acc.get(p, 0.0) + float(c)
    return tuple(sorted((p, c) for p, c in acc.items() if c != 0.0))


class SingleSiteMeasure:
    """Reference measure for one spin.

    Continuous kinds keep ``terms``: the log-density is
    sum(c * |u|**p for (p, c) in terms), optionally precomposed with a
    shift to the half line [B, inf).  The atomic kind keeps explicit
    (location, mass) pairs.
    """

    def __init__(self, kind, terms=(), atoms=(), shift=0.0, shifted=False,
                 label=""):
        self.kind = kind
        self.terms = _merge_terms(terms)
        self.atoms = tuple((float(l), float(m)) for l, m in atoms)
        self.shift = float(shift)
        self.shifted = bool(shifted)
        self.label = label
        self._table: QuadratureTable | None = None
        self._draw_interp = None
        if kind != "atomic":
            if not self.terms:
                raise ContractError("continuous measure with empty potential")
            p, c = self.terms[-1]
            if c >= 0:
                raise ContractError(
                    "leading log-density term must be negative for the "
                    "measure to be normalizable")
            if p <= 0:
                raise ContractError("leading tail power must be positive")
        else:
            if not self.atoms:
                raise ContractError("atomic measure with no atoms")
            if any(m <= 0 for _, m in self.atoms):
                raise ContractError("atom masses must be positive")

    # -- structure -------------------------------------------------------

    @property
    def is_atomic(self):
        return self.kind == "atomic"

    @property
    def tail_exponent(self) -> float:
        """Leading power of the log-density (the measure's own n)."""
        if self.is_atomic:
            raise ContractError("atomic measures have no tail exponent")
        return self.terms[-1][0]

    @property
    def tail_coefficient(self) -> float:
        """Magnitude of the leading (negative) log-density coefficient."""
        return -self.terms[-1][1]

    @property
    def support_min(self) -> float:
        return self.shift if self.shifted else -math.inf

    def is_even(self) -> bool:
        if self.shifted:
            return False
        if self.is_atomic:
            locs = sorted(l for l, _ in self.atoms)
            masses = {l: m for l, m in self.atoms}
            return all(-l in masses and masses[-l] == masses[l] for l in locs)
        return True   # log-density depends on |u| only

    def log_density(self, u):
        """Unnormalized log-density; -inf off the support."""
        u = np.asarray(u, dtype=float)
        if self.shifted:
            v = u - self.shift
            out = np.full(u.shape, -np.inf)
            ok = v >= 0.0
            out[ok] = self._base_log_density(v[ok])
        else:
            out = self._base_log_density(np.abs(u))
        if out.ndim == 0:
            return float(out)
        return out

    def _base_log_density(self, absu):
        out = np.zeros_like(absu)
        for p, c in self.terms:
            out += c * absu ** p
        return out

    # -- spec round trip -------------------------------------------------

    def to_spec(self) -> dict:
        if self.is_atomic:
            return {"kind": "atomic",
                    "atoms": [[l, m] for l, m in self.atoms]}
        spec: dict = {"kind": "potential_terms",
                      "coefficients": {repr(p): -c for p, c in self.terms}}
        if self.shifted:
            spec["shift"] = self.shift
        return spec

    def key(self) -> str:
        """Canonical identity string (used by sampler table caches)."""
        return json.dumps(self.to_spec(), sort_keys=True)

    def __repr__(self):
        if self.label:
            return f"SingleSiteMeasure({self.label})"
        return f"SingleSiteMeasure({self.key()})"

    # -- quadrature-backed queries (exact sums for atomic measures) --------

    def table(self) -> "QuadratureTable":
        if self._table is None:
            self._table = QuadratureTable(self)
        return self._table

    def normalization(self) -> float:
        return quadrature_eval(self, "normalization")

    def log_normalization(self) -> float:
        return quadrature_eval(self, "log_normalization")

    def moment(self, k: int) -> float:
        return quadrature_eval(self, "moment", k)

    def mean(self) -> float:
        return self.moment(1)

    def variance(self) -> float:
        m1 = self.moment(1)
        return self.moment(2) - m1 * m1

    def cdf(self, u) -> float:
        return quadrature_eval(self, "cdf", u)

    def quantile(self, q) -> float:
        return quadrature_eval(self, "quantile", q)

    def tail_mass(self, threshold: float) -> float:
        """Normalized mass of {|u| >= threshold}."""
        return quadrature_eval(self, "tail_mass", threshold)

    def log_tail_mass(self, threshold: float) -> float:
        return quadrature_eval(self, "log_tail_mass", threshold)

    def interval_mass(self, lo: float, hi: float) -> float:
        return quadrature_eval(self, "interval_mass", lo, hi)


# ---------------------------------------------------------------------------
# quadrature table


class QuadratureTable:
    """Dense cumulative-mass table for one continuous measure.

    The window spans the region where the log-density is within LOG_DROP
    of its peak.  Cumulative masses come from composite Simpson panels on
    a 2**15+1 grid; the invariant checked at build time is that the table
    total agrees with an independent adaptive normalization to ``tol``.
    """

    def __init__(self, measure: SingleSiteMeasure, tol: float = DEFAULT_TOL):
        if measure.is_atomic:
            raise ContractError("atomic measures need no quadrature table")
        self.measure = measure
        self.tol = tol
        self.u_lo, self.u_hi, self.log_peak = _window(measure)
        # grid with midpoints: even indices anchor the cumulative sums
        self.grid = np.linspace(self.u_lo, self.u_hi, GRID_POINTS)
        w = np.exp(measure.log_density(self.grid) - self.log_peak)
        h = self.grid[2] - self.grid[0]
        panels = (h / 6.0) * (w[0:-1:2] + 4.0 * w[1::2] + w[2::2])
        self.anchors = self.grid[0::2]
        self.cum = np.concatenate([[0.0], np.cumsum(panels)])
        self.scaled_total = float(self.cum[-1])
        # independent normalization by adaptive panel refinement
        val, err = integrate.quad(
            lambda u: math.exp(measure.log_density(u) - self.log_peak),
            self.u_lo, self.u_hi, epsabs=1e-14, epsrel=1e-12, limit=400)
        if not math.isfinite(val) or val <= 0:
            raise QuadratureError("normalization integral failed", err)
        rel = abs(self.scaled_total - val) / val
        if rel > max(tol, 50.0 * err / val):
            raise QuadratureError(
                f"table total disagrees with independent normalization "
                f"(relative {rel:.3e})", rel)
        self._norm_scaled = val
        self._moments: dict[int, float] = {}
        self.log_total = self.log_peak + math.log(val)
        self.total = math.exp(self.log_total) if self.log_total < 709 else math.inf

    def moment(self, k: int) -> float:
        if k not in self._moments:
            if k % 2 == 1 and self.measure.is_even():
                self._moments[k] = 0.0
                return 0.0
            f = self.measure.log_density
            val, _ = integrate.quad(
                lambda u: u ** k * math.exp(f(u) - self.log_peak),
                self.u_lo, self.u_hi, epsabs=1e-14, epsrel=1e-12, limit=400)
            self._moments[k] = val / self._norm_scaled
        return self._moments[k]

    # cumulative mass from the left window edge, in units of the total
    def _cdf_scaled(self, u):
        u = np.asarray(u, dtype=float)
        c = np.interp(u, self.anchors, self.cum,
                      left=0.0, right=self.scaled_total)
        return c / self.scaled_total

    def cdf(self, u) -> float:
        """Cumulative mass, exact to quadrature precision.

        Reads the stored cumulative at the nearest anchor below u, then
        integrates the remainder locally (the anchors alone would leave
        linear-interpolation error around 1e-8)."""
        scalar = np.isscalar(u) or np.asarray(u).ndim == 0
        us = np.atleast_1d(np.asarray(u, dtype=float))
        f = self.measure.log_density
        out = np.empty(len(us))
        for i, x in enumerate(us):
            if x <= self.u_lo:
                out[i] = 0.0
                continue
            if x >= self.u_hi:
                out[i] = 1.0
                continue
            k = int(np.searchsorted(self.anchors, x, side="right")) - 1
            a = float(self.anchors[k])
            val, _ = integrate.quad(
                lambda t: math.exp(f(t) - self.log_peak), a, x,
                epsabs=1e-15, epsrel=1e-11, limit=100)
            out[i] = (self.cum[k] + val) / self.scaled_total
        if scalar:
            return float(out[0])
        return out

    def quantile(self, q: float) -> float:
        if not 0.0 < q < 1.0:
            raise ContractError("quantile level must be in (0, 1)")
        target = q * self.scaled_total
        k = int(np.searchsorted(self.cum, target))
        k = min(max(k, 1), len(self.cum) - 1)
        lo, hi = self.anchors[k - 1], self.anchors[k]
        base = self.cum[k - 1]
        f = self.measure.log_density

        def g(u):
            val, _ = integrate.quad(
                lambda t: math.exp(f(t) - self.log_peak), lo, u,
                epsabs=1e-15, epsrel=1e-10, limit=100)
            return base + val - target

        if g(hi) < 0:
            return float(hi)
        if g(lo) > 0:
            return float(lo)
        return float(optimize.brentq(g, lo, hi, xtol=1e-13))

    def interval_mass(self, a: float, b: float) -> float:
        """Normalized mass of [a, b], integrated directly (no subtraction
        of near-equal cumulatives)."""
        if b <= a:
            return 0.0
        a = max(a, self.u_lo)
        b = min(b, self.u_hi)
        if b <= a:
            return 0.0
        val, _ = integrate.quad(
            lambda t: math.exp(self.measure.log_density(t) - self.log_peak),
            a, b, epsabs=1e-15, epsrel=1e-12, limit=200)
        return val / math.exp(self.log_total - self.log_peak)

    def log_tail_mass(self, threshold: float) -> float:
        """log of the normalized mass of {|u| >= threshold}.

        Integrates outward from the threshold in a locally shifted log
        frame, so masses far below float-subtraction resolution are still
        relatively accurate.
        """
        m = self.measure
        pieces = []
        sides = [(threshold, 1.0)]
        if not m.shifted:
            sides.append((-threshold, -1.0))
        for start, sgn in sides:
            if m.shifted and start < m.support_min:
                start = m.support_min
            ref = m.log_density(start)
            if not math.isfinite(ref):
                continue
            # step outward until the density has dropped LOG_DROP below ref
            width = 1.0
            while (m.log_density(start + sgn * width) > ref - LOG_DROP
                   and width < 1e12):
                width *= 2.0
            a, b = (start, start + width) if sgn > 0 else (start - width, start)
            val, _ = integrate.quad(
                lambda t: math.exp(m.log_density(t) - ref), a, b,
                epsabs=1e-300, epsrel=1e-10, limit=200)
            if val > 0:
                pieces.append(ref + math.log(val))
        if not pieces:
            return -math.inf
        top = max(pieces)
        s = sum(math.exp(p - top) for p in pieces)
        return top + math.log(s) - self.log_total

    def tail_mass(self, threshold: float) -> float:
        lt = self.log_tail_mass(threshold)
        return math.exp(lt) if lt > -745 else 0.0

    def draw_table(self):
        """Equal-mass quantile grid with a monotone cubic interpolant."""
        levels = np.linspace(0.0, 1.0, TABLE_POINTS + 1)
        targets = levels * self.scaled_total
        u = np.interp(targets, self.cum, self.anchors)
        if not np.all(np.diff(u) > 0):
            raise QuadratureError("draw table quantiles not strictly "
                                  "increasing; widen the window")
        return interpolate.PchipInterpolator(levels, u, extrapolate=False)


def _window(measure: SingleSiteMeasure):
    """Locate the density peak and the LOG_DROP cut points around it.

    Returns (u_lo, u_hi, log_peak).  For measures that are even in |u| the
    window is symmetric; for shift-truncated measures it starts at the
    support edge.
    """
    f = measure.log_density
    lo_edge = measure.support_min if measure.shifted else 0.0
    width = 1.0
    while width < 1e13:
        xs = lo_edge + np.linspace(0.0, width, 4097)
        vals = f(xs)
        if vals[-1] <= vals.max() - LOG_DROP:
            break
        width *= 2.0
    else:
        raise QuadratureError("density window not found")
    i = int(np.argmax(vals))
    if 0 < i < len(xs) - 1 and vals[i - 1] < vals[i] and vals[i + 1] < vals[i]:
        res = optimize.minimize_scalar(
            lambda u: -f(u), bracket=(xs[i - 1], xs[i], xs[i + 1]))
        peak_u, peak = float(res.x), float(-res.fun)
    else:
        peak_u, peak = float(xs[i]), float(vals[i])
    hi = _cut_right(f, peak_u, peak)
    if measure.shifted:
        return lo_edge, hi, peak
    return -hi, hi, peak


def _cut_right(f, peak_u, peak):
    target = peak - LOG_DROP
    width = 1.0
    while f(peak_u + width) > target:
        width *= 2.0
        if width > 1e14:
            raise QuadratureError("right cut point not found")
    return float(optimize.brentq(lambda u: f(u) - target,
                                 peak_u, peak_u + width, xtol=1e-12))


# ---------------------------------------------------------------------------
# constructors and operations


def make_measure(spec) -> SingleSiteMeasure:
    """Build a measure from a specification dict.

    Kinds: ``poly_potential`` (coefficients {power: coeff} of an even
    polynomial potential, degree >= 4, positive leading), ``pure_tail``
    (a_tilde |u|**n with n > 2), ``gaussian`` (a u**2), ``atomic``
    (atoms [[location, mass], ...]), ``potential_terms`` (round-trip form:
    raw potential coefficients, any positive powers).  Optional
    ``tilt: {b, n}`` multiplies by exp(b |u|**n); optional ``shift: B``
    truncate-shifts the result to [B, inf).
    """
    if isinstance(spec, SingleSiteMeasure):
        return spec
    if not isinstance(spec, dict) or "kind" not in spec:
        raise SchemaError("measure spec must be a dict with a 'kind'")
    kind = spec["kind"]
    extra = set(spec) - {"kind", "coefficients", "a_tilde", "n", "a",
                         "atoms", "tilt", "shift", "label"}
    if extra:
        raise SchemaError(f"unknown measure spec fields: {sorted(extra)}")

    if kind == "atomic":
        m = SingleSiteMeasure("atomic", atoms=spec["atoms"])
    elif kind == "gaussian":
        a = float(spec["a"])
        if a <= 0:
            raise SchemaError("gaussian requires a > 0")
        m = SingleSiteMeasure("gaussian", terms=[(2.0, -a)])
    elif kind == "pure_tail":
        at, n = float(spec["a_tilde"]), float(spec["n"])
        if at <= 0 or n <= 2:
            raise SchemaError("pure_tail requires a_tilde > 0 and n > 2")
        m = SingleSiteMeasure("pure_tail", terms=[(n, -at)])
    elif kind == "poly_potential":
        coeffs = {float(p): float(c)
                  for p, c in dict(spec["coefficients"]).items()}
        if not coeffs:
            raise SchemaError("poly_potential requires coefficients")
        for p in coeffs:
            if p != int(p) or int(p) % 2 != 0 or p < 2:
                raise SchemaError("poly_potential powers must be even "
                                  "integers >= 2")
        deg = max(coeffs)
        if deg < 4:
            raise SchemaError("poly_potential degree must be >= 4")
        if coeffs[deg] <= 0:
            raise SchemaError("poly_potential leading coefficient must be "
                              "positive")
        m = SingleSiteMeasure("poly_potential",
                              terms=[(p, -c) for p, c in coeffs.items()])
    elif kind == "potential_terms":
        coeffs = {float(p): float(c)
                  for p, c in dict(spec["coefficients"]).items()}
        m = SingleSiteMeasure("potential_terms",
                              terms=[(p, -c) for p, c in coeffs.items()])
    else:
        raise SchemaError(f"unknown measure kind {kind!r}")

    if spec.get("tilt"):
        t = spec["tilt"]
        m = tilt(m, float(t["b"]), float(t["n"]))
    if "shift" in spec and spec["shift"] is not None:
        m = _shifted(m, float(spec["shift"]))
    if "label" in spec:
        m.label = spec["label"]
    return m


def check_super_gaussian(measure: SingleSiteMeasure, a: float, n: float
                         ) -> bool:
    """Decide analytically whether int exp(a |u|**n) d(measure) is finite.

    Tail bookkeeping on the signed |u|**p terms: after adding (n, a) the
    combined leading term must be negative.  Exact cancellations recurse
    to the next power; a fully cancelled log-density means infinite mass.
    Atomic measures accept every tilt.
    """
    if measure.is_atomic:
        return True
    if n <= 0:
        raise ContractError("tilt exponent must be positive")
    merged = _merge_terms(list(measure.terms) + [(float(n), float(a))])
    if not merged:
        return False
    p, c = merged[-1]
    return c < 0.0


def tilt(measure: SingleSiteMeasure, b: float, n: float) -> SingleSiteMeasure:
    """Multiply the measure by exp(b |u|**n) (unnormalized).

    Requires n >= 2 and, for b > 0, that the result stays normalizable.
    """
    if n < 2:
        raise ContractError("tilt exponent must satisfy n >= 2")
    if measure.shifted:
        raise ContractError("tilt the measure before shift-truncating it")
    if measure.is_atomic:
        atoms = [(l, m * math.exp(b * abs(l) ** n)) for l, m in measure.atoms]
        return SingleSiteMeasure("atomic", atoms=atoms)
    if b > 0 and not check_super_gaussian(measure, b, n):
        raise ContractError(
            f"tilt (b={b}, n={n}) destroys normalizability")
    return SingleSiteMeasure(measure.kind,
                             terms=list(measure.terms) + [(float(n), float(b))])


def _shifted(measure: SingleSiteMeasure, B: float) -> SingleSiteMeasure:
    """Truncate to [0, inf) and translate by B: density(u) = base(u - B)."""
    if measure.is_atomic:
        raise ContractError("cannot shift-truncate an atomic measure")
    if measure.shifted:
        raise ContractError("measure is already shift-truncated")
    if B < 0:
        raise ContractError("shift must be >= 0")
    return SingleSiteMeasure(measure.kind, terms=measure.terms,
                             shift=B, shifted=True)


def shift_truncate(measure: SingleSiteMeasure, a: float, B: float,
                   n: float | None = None) -> SingleSiteMeasure:
    """Tilt by exp(a |u|**n), then truncate-shift to [B, inf).

    This is the boundary-site construction used by the plus-measure
    experiments.  The tilt exponent defaults to the measure's own tail
    exponent; the quadratic-framework constructions pass n = 2 explicitly
    even when the base tail is steeper.
    """
    if n is None:
        n = measure.tail_exponent
    return _shifted(tilt(measure, a, n), B)


def quadrature_eval(measure: SingleSiteMeasure, query: str, *args) -> float:
    """Uniform entry point for the quadrature queries.

    Queries: normalization; log_normalization; moment k; cdf u;
    quantile q; tail_mass threshold; log_tail_mass threshold;
    interval_mass lo hi.
    """
    if measure.is_atomic:
        return _atomic_eval(measure, query, *args)
    t = measure.table()
    if query == "normalization":
        return t.total
    if query == "log_normalization":
        return t.log_total
    if query == "moment":
        return t.moment(int(args[0]))
    if query == "cdf":
        return t.cdf(float(args[0]))
    if query == "quantile":
        return t.quantile(float(args[0]))
    if query == "tail_mass":
        return t.tail_mass(float(args[0]))
    if query == "log_tail_mass":
        return t.log_tail_mass(float(args[0]))
    if query == "interval_mass":
        return t.interval_mass(float(args[0]), float(args[1]))
    raise ContractError(f"unknown quadrature query {query!r}")


def _atomic_eval(measure, query, *args):
    locs = np.array([l for l, _ in measure.atoms])
    mass = np.array([m for _, m in measure.atoms])
    order = np.argsort(locs)
    locs, mass = locs[order], mass[order]
    total = mass.sum()
    if query in ("normalization",):
        return float(total)
    if query == "log_normalization":
        return float(np.log(total))
    if query == "moment":
        k = int(args[0])
        return float(np.sum(mass * locs ** k) / total)
    if query == "cdf":
        return float(mass[locs <= float(args[0])].sum() / total)
    if query == "quantile":
        q = float(args[0])
        cum = np.cumsum(mass) / total
        return float(locs[np.searchsorted(cum, q)])
    if query == "tail_mass":
        return float(mass[np.abs(locs) >= float(args[0])].sum() / total)
    if query == "log_tail_mass":
        tm = mass[np.abs(locs) >= float(args[0])].sum() / total
        return float(np.log(tm)) if tm > 0 else -math.inf
    if query == "interval_mass":
        lo, hi = float(args[0]), float(args[1])
        return float(mass[(locs >= lo) & (locs <= hi)].sum() / total)
    raise ContractError(f"unknown quadrature query {query!r}")


def moment(measure: SingleSiteMeasure, k: int) -> float:
    return quadrature_eval(measure, "moment", k)


def draw(measure: SingleSiteMeasure, rng: np.random.Generator,
         size: int | None = None):
    """Inverse-CDF draws, monotone and a.e. strictly increasing in the
    underlying uniform variate."""
    u = rng.random(size)
    if measure.is_atomic:
        locs = np.array([l for l, _ in measure.atoms])
        mass = np.array([m for _, m in measure.atoms])
        order = np.argsort(locs)
        locs, mass = locs[order], mass[order]
        cum = np.cumsum(mass) / mass.sum()
        idx = np.searchsorted(cum, u, side="left")
        out = locs[np.minimum(idx, len(locs) - 1)]
        return float(out) if size is None else out
    if measure._draw_interp is None:
        measure._draw_interp = measure.table().draw_table()
    out = measure._draw_interp(u)
    return float(out) if size is None else np.asarray(out, dtype=float)


def default_alpha0(measure: SingleSiteMeasure, grid_step: float = 0.25,
                   grid_max: float = 64.0) -> float:
    """Smallest alpha0 >= 1 on a coarse grid with positive central mass."""
    alpha = 1.0
    while alpha <= grid_max:
        if quadrature_eval(measure, "interval_mass", -alpha, alpha) > 0.0:
            return alpha
        alpha += grid_step
    raise ContractError("no alpha0 <= grid_max carries positive mass")


def truncated_log_mass(measure: SingleSiteMeasure, R: float) -> float:
    """log of the unnormalized mass of [-R, R].

    Used to demonstrate divergence under inadmissible tilts: when
    check_super_gaussian fails, this grows without bound as R doubles.
    """
    if measure.is_atomic:
        raise ContractError("atomic measures are always finite")
    f = measure.log_density
    lo = max(-R, measure.support_min)
    xs = np.linspace(lo, R, 20001)
    vals = f(xs)
    peak = float(np.max(vals))
    w = np.exp(vals - peak)
    h = xs[1] - xs[0]
    total = h * (w.sum() - 0.5 * (w[0] + w[-1]))
    return peak + math.log(total)
