"""Growth functionals of boundary data and their regularity constants.

Two functionals measure how much a boundary field can push into a region.
Both are defined as the smallest value >= 1 such that every walk through
the region satisfies a compounding bound; here they are computed in the
log domain as walk suprema.

For tail exponent n > 2 a step multiplies the log value by 1/(n-1) (a
contraction), so a damped value iteration converges geometrically.  For
n = 2 the step subtracts log(lambda) + log f per edge, a longest-walk
problem with non-positive weights solved by Bellman-Ford rounds.

Nearest-neighbour couplings admit closed forms in terms of induced-graph
distances, kept as an independent oracle for the general solvers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, OverflowBudgetError
from .graphs import InteractionGraph, Region, ball_size
from . import measures as ms

__all__ = [
    "BoundaryField",
    "GrowthProfile",
    "XiReport",
    "RegularityConstants",
    "compute_A_tilde",
    "compute_A",
    "closed_form_nn",
    "xi_membership",
    "regularity_constants",
    "domination_shift",
    "uniform_domination_shift",
    "walk_comparison_gap",
]

LOG_FLOAT_MAX = math.log(np.finfo(float).max)   # about 709.78
VALUE_TOL = 1e-12
MAX_ITERS = 1_000_000


# ---------------------------------------------------------------------------
# boundary fields


class BoundaryField:
    """A field on the stored vertices, evaluated in the log domain.

    Families (all magnitudes keyed by hop distance d from the origin):

    zero                        identically zero
    constant                    K
    exponential                 C_xi * lam**d
    double_exponential          K**((n-1)**d), optionally capped
    super_double_exponential    K**((n-1)**((1+eps) d)), optionally capped
    kernel_growth               M_xi * f(d**(-r)) for a kernel f
    xi_plus                     sqrt(log |B_d(o)|)  (ball sizes of the graph)
    table                       explicit {vertex: value}

    ``sign_mode``: "plus", "minus", "alternating" (by distance parity) or
    "antisymmetric" (sign of the first coordinate; zero on the hyperplane).
    ``support``: "all" or "positive_axis" (first coordinate > 0).
    """

    def __init__(self, graph: InteractionGraph, family: str,
                 K: float | None = None, n: float | None = None,
                 epsilon: float = 0.0, C_xi: float | None = None,
                 lam: float | None = None, M_xi: float | None = None,
                 r: float | None = None, kernel=None, cap: float | None = None,
                 values: dict | None = None, sign_mode: str = "plus",
                 support: str = "all"):
        self.graph = graph
        self.family = family
        self.K, self.n, self.epsilon = K, n, epsilon
        self.C_xi, self.lam, self.M_xi, self.r = C_xi, lam, M_xi, r
        self.kernel = kernel
        self.cap = cap
        self.sign_mode = sign_mode
        self.support = support
        self._values = dict(values) if values else None
        self._dist = graph.lattice_distances()[graph.origin]
        if family not in ("zero", "constant", "exponential",
                          "double_exponential", "super_double_exponential",
                          "kernel_growth", "xi_plus", "table"):
            raise ContractError(f"unknown boundary family {family!r}")
        if family == "table" and self._values is None:
            raise ContractError("table family requires explicit values")

    # -- magnitude ---------------------------------------------------------

    def log_abs(self, z: int) -> float:
        """log |xi_z|; -inf where the field vanishes."""
        if not self._supported(z):
            return -math.inf
        d = self._dist[z]
        if not math.isfinite(d):
            return -math.inf
        fam = self.family
        if fam == "zero":
            return -math.inf
        if fam == "table":
            v = self._values.get(int(z), 0.0)
            return math.log(abs(v)) if v != 0.0 else -math.inf
        if fam == "constant":
            out = math.log(abs(self.K))
        elif fam == "exponential":
            out = math.log(self.C_xi) + d * math.log(self.lam)
        elif fam == "double_exponential":
            growth = (self.n - 1.0) ** d
            out = growth * math.log(self.K)
        elif fam == "super_double_exponential":
            growth = (self.n - 1.0) ** ((1.0 + self.epsilon) * d)
            out = growth * math.log(self.K)
        elif fam == "kernel_growth":
            t = max(float(d), 1.0) ** (-self.r)
            out = math.log(self.M_xi) + self.kernel.log(t)
        elif fam == "xi_plus":
            size, _ = ball_size(self.graph, self.graph.origin, int(d))
            out = 0.5 * math.log(math.log(max(size, 2)))
        else:  # pragma: no cover
            raise ContractError(fam)
        if self.cap is not None:
            out = min(out, math.log(self.cap))
        return out

    def sign(self, z: int) -> float:
        if self.sign_mode == "plus":
            return 1.0
        if self.sign_mode == "minus":
            return -1.0
        d = self._dist[z]
        if self.sign_mode == "alternating":
            return -1.0 if int(d) % 2 else 1.0
        if self.sign_mode == "antisymmetric":
            c = self._first_coord(z)
            return float(np.sign(c))
        raise ContractError(f"unknown sign mode {self.sign_mode!r}")

    def value(self, z: int) -> float:
        la = self.log_abs(z)
        if la == -math.inf:
            return 0.0
        if la > LOG_FLOAT_MAX:
            raise OverflowBudgetError(
                f"boundary value at vertex {z} exceeds the float budget "
                f"(log |xi| = {la:.3e})")
        return self.sign(z) * math.exp(la)

    def max_log_abs(self, vertices) -> float:
        return max((self.log_abs(int(z)) for z in vertices),
                   default=-math.inf)

    # -- helpers -----------------------------------------------------------

    def _first_coord(self, z: int) -> float:
        if self.graph.coords is None:
            raise ContractError("graph has no coordinates for "
                                "sign/support modes that need them")
        return float(np.asarray(self.graph.coords[z]).ravel()[0])

    def _supported(self, z: int) -> bool:
        if self.support == "all":
            return True
        if self.support == "positive_axis":
            return self._first_coord(z) > 0
        raise ContractError(f"unknown support mode {self.support!r}")


def _field_log_abs(xi, z: int) -> float:
    """log |xi_z| for a BoundaryField, mapping, array or callable."""
    if hasattr(xi, "log_abs"):
        return xi.log_abs(z)
    if callable(xi):
        v = float(xi(z))
    elif hasattr(xi, "get"):
        v = float(xi.get(int(z), 0.0))
    else:
        v = float(xi[z])
    return math.log(abs(v)) if v != 0.0 else -math.inf


def _field_sign(xi, z: int) -> float:
    if hasattr(xi, "sign") and hasattr(xi, "log_abs"):
        return xi.sign(z)
    if callable(xi):
        v = float(xi(z))
    elif hasattr(xi, "get"):
        v = float(xi.get(int(z), 0.0))
    else:
        v = float(xi[z])
    return math.copysign(1.0, v) if v != 0.0 else 0.0


# ---------------------------------------------------------------------------
# growth profiles


@dataclass
class GrowthProfile:
    """log-domain values of a growth functional over a region."""

    variant: str                 # "interior" (boundary data) or "edge" (field)
    region: Region
    log_values: np.ndarray       # aligned with region.vertices, >= 0
    C: float
    n: float
    lam: float | None
    residual: float
    iterations: int
    diverged: bool
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._index = {int(v): i for i, v in enumerate(self.region.vertices)}

    def log_value(self, x: int) -> float:
        return float(self.log_values[self._index[int(x)]])

    def value(self, x: int) -> float:
        lv = self.log_value(x)
        if lv > LOG_FLOAT_MAX:
            raise OverflowBudgetError(f"profile value at {x} overflows")
        return math.exp(lv)

    def as_dict(self) -> dict:
        return {int(v): float(lv)
                for v, lv in zip(self.region.vertices, self.log_values)}


def _solver_arrays(graph: InteractionGraph, region: Region):
    """Split coupling rows into interior-interior and interior-exterior."""
    rv = region.vertices
    pos = -np.ones(graph.n, dtype=np.int64)
    pos[rv] = np.arange(len(rv))
    indptr, indices, data = graph.coupling_rows()
    src, dst, logf = [], [], []           # directed interior edges u -> y
    ext = [[] for _ in rv]                # per region vertex: (z, logf, J)
    logf_fn = graph.kernel.log
    for i, y in enumerate(rv):
        nb = indices[indptr[y]:indptr[y + 1]]
        jv = data[indptr[y]:indptr[y + 1]]
        for z, j in zip(nb, jv):
            if j == 0.0:
                continue
            lf = float(logf_fn(j))
            if pos[z] >= 0:
                src.append(pos[z])
                dst.append(i)
                logf.append(lf)
            else:
                ext[i].append((int(z), lf, float(j)))
    return (np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64),
            np.array(logf, dtype=float), ext, pos)


def _iterate(base: np.ndarray, src, dst, logf, n: float,
             lam: float | None, region_size: int):
    """Walk supremum by damped value iteration (n > 2) or Bellman rounds."""
    V = base.copy()
    if n > 2:
        damp = 1.0 / (n - 1.0)
        for it in range(1, MAX_ITERS + 1):
            cand = (V[src] - logf) * damp
            Vn = base.copy()
            np.maximum.at(Vn, dst, np.maximum(cand, Vn[dst]))
            resid = float(np.max(np.abs(Vn - V))) if len(V) else 0.0
            V = Vn
            if resid <= VALUE_TOL:
                return V, resid, it
        raise ContractError("value iteration failed to contract")
    # n == 2: subtract log(lam) + log f per step; weights are <= 0 when
    # lam >= 1, so |R| rounds reach the fixed point exactly
    step = math.log(lam)
    for it in range(1, region_size + 2):
        cand = V[src] - logf - step
        Vn = base.copy()
        np.maximum.at(Vn, dst, np.maximum(cand, Vn[dst]))
        resid = float(np.max(np.abs(Vn - V))) if len(V) else 0.0
        V = Vn
        if resid == 0.0:
            return V, resid, it
    raise ContractError("longest-walk rounds failed to settle; "
                        "is lambda >= 1?")


def _check_variant_args(n: float, lam: float | None):
    if n > 2:
        return None
    if n == 2:
        if lam is None or lam < 1.0:
            raise ContractError("the n = 2 variant requires lam >= 1")
        return float(lam)
    raise ContractError("tail exponent must satisfy n >= 2")


def compute_A_tilde(graph: InteractionGraph, region: Region, xi,
                    C: float, n: float, lam: float | None = None
                    ) -> GrowthProfile:
    """Growth functional of the raw boundary field over a region.

    log A~(x) is the supremum over walks from x (intermediate vertices in
    the region, endpoint anywhere stored) of the discounted endpoint
    reward log+(|xi_z| / C) minus accumulated kernel costs.
    """
    if C <= 0:
        raise ContractError("C must be positive")
    lam = _check_variant_args(n, lam)
    rv = region.vertices
    src, dst, logf, ext, pos = _solver_arrays(graph, region)
    logC = math.log(C)

    def clipped(z):
        return max(0.0, _field_log_abs(xi, z) - logC)

    base = np.array([clipped(int(y)) for y in rv], dtype=float)
    for i, terms in enumerate(ext):
        for z, lf, _ in terms:
            if n > 2:
                cand = (clipped(z) - lf) / (n - 1.0)
            else:
                cand = clipped(z) - lf - math.log(lam)
            if cand > base[i]:
                base[i] = cand

    V, resid, iters = _iterate(base, src, dst, logf, n, lam, len(rv))
    diverged = _shell_sensitivity(graph, region, ext, V, src, dst,
                                  logf, n, lam, clipped)
    return GrowthProfile("edge", region, V, C, n, lam, resid, iters, diverged)


def compute_A(graph: InteractionGraph, region: Region, xi,
              C: float, n: float, lam: float | None = None) -> GrowthProfile:
    """Growth functional of the exterior field over a region.

    Same walk supremum as the raw-field functional, but the only rewards
    sit at region vertices carrying exterior coupling weight
    S_y = sum(|J_{y,z}| f(J_{y,z}), z outside), with terminal value
    log+(|h_y| / (C S_y)) discounted once more (exponent m+1).
    """
    if C <= 0:
        raise ContractError("C must be positive")
    lam = _check_variant_args(n, lam)
    rv = region.vertices
    src, dst, logf, ext, pos = _solver_arrays(graph, region)
    logC = math.log(C)

    base = np.zeros(len(rv), dtype=float)
    for i, terms in enumerate(ext):
        if not terms:
            continue
        S = sum(abs(j) * math.exp(lf) for _, lf, j in terms)
        log_h = _signed_logsum(
            [( _field_log_abs(xi, z) + math.log(abs(j)),
               math.copysign(1.0, j) * _field_sign(xi, z))
             for z, lf, j in terms])
        if log_h == -math.inf or S == 0.0:
            continue
        if n > 2:
            t = max(0.0, log_h - logC - math.log(S)) / (n - 1.0)
        else:
            t = max(0.0, log_h - logC - math.log(S) - math.log(lam))
        base[i] = t

    V, resid, iters = _iterate(base, src, dst, logf, n, lam, len(rv))
    return GrowthProfile("interior", region, V, C, n, lam, resid, iters,
                         False)


def _signed_logsum(terms) -> float:
    """log |sum s_k exp(m_k)| for (m_k, s_k) pairs; -inf on cancellation."""
    terms = [(m, s) for m, s in terms if m > -math.inf and s != 0.0]
    if not terms:
        return -math.inf
    top = max(m for m, _ in terms)
    acc = sum(s * math.exp(m - top) for m, s in terms)
    if acc == 0.0:
        return -math.inf
    return top + math.log(abs(acc))


def _shell_sensitivity(graph, region, ext, V, src, dst, logf, n, lam,
                       clipped) -> bool:
    """Re-solve without truncation-shell rewards; True if the answer moves."""
    shell = graph.truncation_boundary
    if not shell:
        return False
    touched = False
    base2 = np.array([0.0] * len(region.vertices))
    rv = region.vertices
    for i, y in enumerate(rv):
        b = clipped(int(y)) if int(y) not in shell else 0.0
        if int(y) in shell and clipped(int(y)) > 0:
            touched = True
        for z, lf, _ in ext[i]:
            if z in shell:
                if clipped(z) > 0:
                    touched = True
                continue
            if n > 2:
                cand = (clipped(z) - lf) / (n - 1.0)
            else:
                cand = clipped(z) - lf - math.log(lam)
            b = max(b, cand)
        base2[i] = b
    if not touched:
        return False
    V2, _, _ = _iterate(base2, src, dst, logf, n, lam, len(rv))
    gap = float(np.max(np.abs(V - V2))) if len(V) else 0.0
    return gap > 1e-9 * max(1.0, float(np.max(np.abs(V))))


# ---------------------------------------------------------------------------
# nearest-neighbour closed forms


def closed_form_nn(graph: InteractionGraph, region: Region, xi,
                   C: float, n: float, lam: float | None = None
                   ) -> tuple[GrowthProfile, GrowthProfile]:
    """Distance-based closed forms for unit nearest-neighbour couplings.

    Returns (interior-field profile, raw-field profile).  Requires the
    couplings to be nearest-neighbour with J = 1 on edges and a kernel
    with f(1) = 1, so the kernel factors drop out.
    """
    if graph.interaction_kind != "nearest_neighbour":
        raise ContractError("closed forms require nearest-neighbour "
                            "couplings")
    if abs(float(graph.kernel(1.0)) - 1.0) > 1e-15:
        raise ContractError("closed forms require f(1) = 1")
    _, _, data = graph.coupling_rows()
    if data.size and not np.allclose(np.abs(data), 1.0):
        raise ContractError("closed forms require unit couplings")
    lam = _check_variant_args(n, lam)
    rv = region.vertices
    logC = math.log(C)
    mask = region.mask

    d_R = graph.induced_distances(rv)           # (|R|, |R|)
    pos = {int(v): i for i, v in enumerate(rv)}

    # interior-field functional: rewards on the interior boundary
    logA = np.zeros(len(rv))
    for y in region.interior_boundary():
        iy = pos[int(y)]
        nb = graph.neighbours(int(y))
        outside = [int(z) for z in nb if not mask[z]]
        if not outside:
            continue
        log_h = _signed_logsum(
            [(_field_log_abs(xi, z) + math.log(abs(graph.coupling(y, z))),
              math.copysign(1.0, graph.coupling(y, z)) * _field_sign(xi, z))
             for z in outside])
        if log_h == -math.inf:
            continue
        inner = log_h - logC - math.log(len(outside))
        dists = d_R[:, iy]
        ok = np.isfinite(dists)
        if n > 2:
            vals = inner * (n - 1.0) ** (-(dists[ok] + 1.0))
        else:
            vals = inner - (dists[ok] + 1.0) * math.log(lam)
        np.maximum.at(logA, np.flatnonzero(ok), vals)

    # raw-field functional: rewards at every stored vertex
    logAt = np.zeros(len(rv))
    for z in range(graph.n):
        lz = _field_log_abs(xi, z) - logC
        if lz == -math.inf:
            continue
        if mask[z]:
            dists = d_R[:, pos[int(z)]]
        else:
            nb = [pos[int(y)] for y in graph.neighbours(z) if mask[y]]
            if not nb:
                continue
            dists = np.min(d_R[:, nb], axis=1) + 1.0
        ok = np.isfinite(dists)
        if n > 2:
            vals = lz * (n - 1.0) ** (-dists[ok])
        else:
            vals = lz - dists[ok] * math.log(lam)
        np.maximum.at(logAt, np.flatnonzero(ok), vals)

    pa = GrowthProfile("interior", region, np.maximum(logA, 0.0), C, n, lam,
                       0.0, 0, False)
    pt = GrowthProfile("edge", region, np.maximum(logAt, 0.0), C, n, lam,
                       0.0, 0, False)
    return pa, pt


# ---------------------------------------------------------------------------
# membership of the admissible boundary classes


@dataclass
class XiReport:
    """Shell-wise growth certificates for a boundary field."""

    variant: str                    # "compounding" (n > 2) or "geometric"
    shells: np.ndarray              # hop distances from the origin
    shell_log_certificates: np.ndarray
    log_certificate: float          # sup over shells
    in_xi: bool
    saturated: bool


def xi_membership(graph: InteractionGraph, xi, n: float | None = None,
                  lam: float | None = None) -> XiReport:
    """Classify a field against the admissible growth class.

    For n > 2 the certificate per vertex is log|xi_z| / (n-1)**d(o,z); for
    the geometric class it is log|xi_z| - d log(lam).  The verdict takes
    the finite truncation at face value: membership holds when the shell
    certificates do not increase over the outer half of the stored shells.
    """
    if (n is None) == (lam is None):
        raise ContractError("pass exactly one of n (> 2) or lam (n = 2)")
    d = graph.lattice_distances()[graph.origin]
    finite = np.isfinite(d)
    shells = np.unique(d[finite]).astype(int)
    certs = np.full(len(shells), -math.inf)
    for k, sh in enumerate(shells):
        for z in np.flatnonzero(finite & (d == sh)):
            la = _field_log_abs(xi, int(z))
            if la == -math.inf:
                continue
            if n is not None:
                c = la / (n - 1.0) ** sh
            else:
                c = la - sh * math.log(lam)
            certs[k] = max(certs[k], c)
    overall = float(np.max(certs)) if len(certs) else -math.inf
    half = len(shells) // 2
    outer = certs[half:]
    outer = outer[np.isfinite(outer)]
    in_xi = bool(len(outer) == 0 or np.all(np.diff(outer) <= 1e-12))
    saturated = bool(graph.truncation_boundary)
    return XiReport("compounding" if n is not None else "geometric",
                    shells, certs, max(overall, 0.0), in_xi, saturated)


# ---------------------------------------------------------------------------
# constants for the regularity bound


@dataclass
class RegularityConstants:
    """Everything the regularity change-of-measure bound needs."""

    C: float
    C_tilde: float
    alpha0: float
    alpha1: float
    alpha2: float
    alpha3: float
    K: float
    b: float
    a: float
    n: float
    M_f: float
    beta: float
    lam_max: float | None        # n = 2 only
    log_Z_a: float
    log_Z_a2: float
    growth_steps: int


def regularity_constants(measure: ms.SingleSiteMeasure,
                         graph: InteractionGraph, beta: float, a: float,
                         n: float, alpha0: float | None = None,
                         b_target: float = 0.5,
                         alpha2_override: float | None = None,
                         growth_factor: float = 1.25,
                         max_growth_steps: int = 400
                         ) -> RegularityConstants:
    """Assemble the threshold C and the bound constant from the inputs.

    The floor on C comes from the edge-removal inequalities; above the
    floor, C grows geometrically until the per-vertex no-child probability
    b and the exponential moment condition of the counting argument both
    certify (skipped when beta = 0, where the couplings do not act).
    """
    from . import exploration as ex

    if beta < 0 or a <= 0:
        raise ContractError("beta >= 0 and a > 0 required")
    if not ms.check_super_gaussian(measure, a, n):
        raise ContractError("measure does not integrate exp(a|u|**n)")
    if graph.J is None:
        raise ContractError("graph has no interactions installed")

    f = graph.kernel
    indptr, indices, data = graph.coupling_rows()
    rows = np.zeros(graph.n)
    for x in range(graph.n):
        seg = data[indptr[x]:indptr[x + 1]]
        if seg.size:
            rows[x] = float(np.sum(np.abs(seg) * f(seg)))
    M_f = float(rows.max()) if graph.n else 0.0
    if M_f <= 0:
        raise ContractError("M_f must be positive")

    if alpha0 is None:
        alpha0 = ms.default_alpha0(measure)
    if alpha0 < 1:
        raise ContractError("alpha0 must be >= 1")

    lam_max = None
    if n > 2:
        if beta > 0:
            floor = alpha0 + (4.0 * M_f * beta / a) ** (1.0 / (n - 2.0))
        else:
            floor = alpha0
    elif n == 2:
        if beta > 0 and a < 4.0 * beta * M_f:
            raise ContractError("the n = 2 bound needs a >= 4 beta M_f")
        floor = alpha0
        lam_max = a / (4.0 * beta * M_f) if beta > 0 else math.inf
    else:
        raise ContractError("n >= 2 required")

    C = float(floor)
    steps = 0
    b = _certify_b(measure, graph, a, n, C, ex)
    if beta > 0:
        while steps < max_growth_steps and not _counting_ok(b, measure, a, n,
                                                            alpha0, b_target):
            C *= growth_factor
            steps += 1
            b = _certify_b(measure, graph, a, n, C, ex)
        if steps >= max_growth_steps:
            raise ContractError("could not certify the branching bound; "
                                "b stalled below target")

    alpha1 = 2.0 * beta * C * C if n > 2 else a * C * C / (2.0 * M_f)

    rho_a = ms.tilt(measure, a, n)
    log_Z_a = rho_a.log_normalization()
    central = ms.quadrature_eval(rho_a, "interval_mass", -alpha0, alpha0)
    if central <= 0:
        raise ContractError("alpha0 interval carries no mass")
    log_central = math.log(central) + log_Z_a
    K = max(0.0, a * alpha0 ** n - log_central)

    alpha3 = math.exp(K) / b
    alpha2 = alpha2_override if alpha2_override is not None \
        else alpha3 * (alpha3 + 1.0)
    rho_a2 = ms.tilt(measure, 0.5 * a, n)
    log_Z_a2 = rho_a2.log_normalization()
    C_tilde = math.log(alpha2) + log_Z_a2 + alpha1 * M_f
    return RegularityConstants(C=C, C_tilde=C_tilde, alpha0=alpha0,
                               alpha1=alpha1, alpha2=alpha2, alpha3=alpha3,
                               K=K, b=b, a=a, n=n, M_f=M_f, beta=beta,
                               lam_max=lam_max, log_Z_a=log_Z_a,
                               log_Z_a2=log_Z_a2, growth_steps=steps)


def _certify_b(measure, graph, a, n, C, ex) -> float:
    pm = ex.p_matrix(graph, measure, a, n, C)
    return pm.b


def _counting_ok(b, measure, a, n, alpha0, b_target) -> bool:
    """b >= target plus the exponential moment condition of the counting
    argument: E[exp(theta X)] < exp(theta / 4), theta = 2 log(2 alpha3)."""
    if b < max(b_target, 0.5) or b >= 1.0:
        return b >= 1.0
    rho_a = ms.tilt(measure, a, n)
    central = ms.quadrature_eval(rho_a, "interval_mass", -alpha0, alpha0)
    if central <= 0:
        return False
    log_central = math.log(central) + rho_a.log_normalization()
    K = max(0.0, a * alpha0 ** n - log_central)
    alpha3 = math.exp(K) / b
    theta = 2.0 * math.log(2.0 * alpha3)
    if theta <= 0:
        return True
    q = 1.0 - b
    if q * math.exp(theta) >= 1.0:
        return False
    p1 = 1.0 - b - q * q / b
    e_theta = b + math.exp(theta) * p1 + \
        (q * math.exp(theta)) ** 2 / (1.0 - q * math.exp(theta))
    return e_theta < math.exp(theta / 4.0)


# ---------------------------------------------------------------------------
# domination shifts


def domination_shift(constants: RegularityConstants, A_value: float) -> float:
    """Per-vertex shift making the half-line measure dominate the bound:
    B_x = sqrt((2/a)(C~ A_x**2 + log Z_a - log Z_{a/2}))."""
    inner = constants.C_tilde * A_value ** 2 + constants.log_Z_a \
        - constants.log_Z_a2
    if inner < 0:
        raise ContractError("negative shift argument; constants inconsistent")
    return math.sqrt(2.0 * inner / constants.a)


def uniform_domination_shift(constants: RegularityConstants) -> float:
    """Region-uniform shift: B = sqrt((2/a)(2 C~ + log Z_a - log Z_{a/2}))."""
    inner = 2.0 * constants.C_tilde + constants.log_Z_a - constants.log_Z_a2
    if inner < 0:
        raise ContractError("negative shift argument; constants inconsistent")
    return math.sqrt(2.0 * inner / constants.a)


# ---------------------------------------------------------------------------
# walk comparison (used by the property fuzz)


def walk_comparison_gap(profile: GrowthProfile, graph: InteractionGraph,
                        walk) -> float:
    """Slack of the walk-comparison inequality along one walk.

    Returns rhs - lhs in the log domain, where
    lhs = log value at the walk end and
    rhs = compounded log value at the walk start plus kernel costs.
    Negative values (beyond float noise) would violate the inequality.
    """
    walk = [int(v) for v in walk]
    if len(walk) < 1:
        raise ContractError("walk must contain at least one vertex")
    n, lam = profile.n, profile.lam
    k = len(walk) - 1
    start = profile.log_value(walk[0])
    end = profile.log_value(walk[-1])
    cost = 0.0
    if n > 2:
        rhs = start * (n - 1.0) ** k
        for i in range(1, k + 1):
            j = graph.coupling(walk[i - 1], walk[i])
            if j == 0.0:
                raise ContractError("walk uses a missing coupling")
            rhs += graph.kernel.log(j) * (n - 1.0) ** (k - i)
    else:
        rhs = start + k * math.log(lam)
        for i in range(1, k + 1):
            j = graph.coupling(walk[i - 1], walk[i])
            if j == 0.0:
                raise ContractError("walk uses a missing coupling")
            rhs += graph.kernel.log(j)
    return rhs - end
