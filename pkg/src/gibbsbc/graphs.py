"""Finite graph truncations, coupling matrices and kernel functions.

Everything downstream works on a stored finite truncation of a (possibly
infinite) interaction graph.  A truncation keeps an explicit list of
vertices whose neighbourhood may be incomplete (the truncation boundary),
and every operation that sums over the complement of a region reports how
much of its answer came from that outermost shell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import ContractError

__all__ = [
    "KernelFunction",
    "InteractionGraph",
    "Region",
    "ValidationReport",
    "HFieldReport",
    "build_graph",
    "make_interactions",
    "validate_interactions",
    "ball_size",
    "h_field",
]


# ---------------------------------------------------------------------------
# kernel functions


class KernelFunction:
    """Even weight function f with f(t) >= 1, used to price coupling edges.

    Families
    --------
    unit        f == 1.  Convenient for nearest-neighbour couplings where
                only f(1) is ever evaluated; its small-t tail bound fails
                (see ``tail_ok``), which ``validate_interactions`` reports
                honestly.
    log_sqrt    f(t) = sqrt(log(1/|t|)) for 0 < |t| < 1/e, else 1.
    power       f(t) = |t|**(-alpha) for 0 < |t| < 1, else 1.
    custom      wraps a user callable together with a declared domain
                parameter ``delta_f``.
    """

    def __init__(self, family: str, alpha: float | None = None,
                 fn=None, delta_f: float | None = None):
        if family not in ("unit", "log_sqrt", "power", "custom"):
            raise ContractError(f"unknown kernel family {family!r}")
        if family == "power":
            if alpha is None or alpha <= 0:
                raise ContractError("power kernel requires alpha > 0")
        if family == "custom" and fn is None:
            raise ContractError("custom kernel requires a callable")
        self.family = family
        self.alpha = alpha
        self._fn = fn
        self.delta_f = delta_f if delta_f is not None else math.exp(-1.0)

    def __call__(self, t):
        t = np.abs(np.asarray(t, dtype=float))
        if np.any(t == 0.0):
            raise ContractError("kernel evaluated at a zero coupling")
        if self.family == "unit":
            out = np.ones_like(t)
        elif self.family == "log_sqrt":
            small = t < math.exp(-1.0)
            out = np.ones_like(t)
            out[small] = np.sqrt(np.log(1.0 / t[small]))
        elif self.family == "power":
            small = t < 1.0
            out = np.ones_like(t)
            out[small] = t[small] ** (-self.alpha)
        else:
            out = np.asarray(self._fn(t), dtype=float)
        if out.ndim == 0:
            return float(out)
        return out

    def log(self, t):
        """log f(t), stable for very small couplings."""
        t = np.abs(np.asarray(t, dtype=float))
        if np.any(t == 0.0):
            raise ContractError("kernel evaluated at a zero coupling")
        if self.family == "unit":
            out = np.zeros_like(t)
        elif self.family == "log_sqrt":
            small = t < math.exp(-1.0)
            out = np.zeros_like(t)
            out[small] = 0.5 * np.log(np.log(1.0 / t[small]))
        elif self.family == "power":
            small = t < 1.0
            out = np.zeros_like(t)
            out[small] = -self.alpha * np.log(t[small])
        else:
            out = np.log(np.asarray(self._fn(t), dtype=float))
        if out.ndim == 0:
            return float(out)
        return out

    def tail_ok(self, n: float, points: int = 1000) -> bool:
        """Grid check of f(t) >= log(1/t)**(1/n) on (0, delta_f).

        Uses ``points`` log-spaced abscissae down to 1e-12.  This is the
        small-coupling admissibility requirement; the unit family fails it
        by design and is only safe when couplings are bounded away from 0.
        """
        hi = self.delta_f * (1.0 - 1e-12)
        ts = np.exp(np.linspace(math.log(1e-12), math.log(hi), points))
        lhs = self.log(ts)
        rhs = (1.0 / n) * np.log(np.log(1.0 / ts))
        return bool(np.all(lhs >= rhs - 1e-12))

    def doubling_ok(self, r: float, c: float, points: int = 1000) -> bool:
        """Grid check of f(2**r * t) >= c * f(t) for t in (0, 2**(-r))."""
        hi = 2.0 ** (-r) * (1.0 - 1e-12)
        ts = np.exp(np.linspace(math.log(1e-12), math.log(hi), points))
        lhs = self.log((2.0 ** r) * ts)
        rhs = math.log(c) + self.log(ts)
        return bool(np.all(lhs >= rhs - 1e-12))

    def __repr__(self):
        if self.family == "power":
            return f"KernelFunction(power, alpha={self.alpha})"
        return f"KernelFunction({self.family})"


# ---------------------------------------------------------------------------
# graph truncation


class InteractionGraph:
    """A finite truncation of an interaction graph.

    Vertices are integers 0..N-1.  ``coords`` holds an optional embedding
    used by the builders (lattice coordinates, tree addresses).  Couplings
    live in a symmetric sparse matrix installed by ``make_interactions``;
    adjacency for distance purposes is the support of the couplings when
    present, else the builder's edge set.
    """

    def __init__(self, n_vertices: int, edges: np.ndarray, origin: int,
                 coords=None, truncation_boundary=None, name: str = ""):
        self.n = int(n_vertices)
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= self.n):
            raise ContractError("edge endpoint out of range")
        self.edges = edges
        self.origin = int(origin)
        self.coords = coords
        self.truncation_boundary = frozenset(
            int(v) for v in (truncation_boundary or ()))
        self.name = name or "graph"
        self.J: sparse.csr_matrix | None = None
        self.kernel: KernelFunction | None = None
        self.interaction_kind: str | None = None
        self._adj = self._build_adjacency(edges)
        self._dist_cache: np.ndarray | None = None
        self._lat_dist_cache: np.ndarray | None = None

    def _build_adjacency(self, edges) -> sparse.csr_matrix:
        if len(edges) == 0:
            return sparse.csr_matrix((self.n, self.n))
        data = np.ones(len(edges))
        m = sparse.coo_matrix((data, (edges[:, 0], edges[:, 1])),
                              shape=(self.n, self.n))
        m = m + m.T
        m.data[:] = 1.0
        return m.tocsr()

    @property
    def adjacency(self) -> sparse.csr_matrix:
        """0/1 adjacency; support of J once interactions are installed."""
        if self.J is not None:
            a = self.J.copy()
            a.data = np.ones_like(a.data)
            return a
        return self._adj

    def coupling_rows(self):
        """(indptr, indices, data) of the installed coupling matrix."""
        if self.J is None:
            raise ContractError("no interactions installed; "
                                "call make_interactions first")
        return self.J.indptr, self.J.indices, self.J.data

    def neighbours(self, x: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[x]:a.indptr[x + 1]]

    def coupling(self, x: int, y: int) -> float:
        if self.J is None:
            raise ContractError("no interactions installed")
        return float(self.J[x, y])

    def distances(self) -> np.ndarray:
        """All-pairs hop distances on the stored truncation (inf if cut)."""
        if self._dist_cache is None:
            self._dist_cache = csgraph.shortest_path(
                self.adjacency, method="D", unweighted=True)
        return self._dist_cache

    def distance(self, x: int, y: int) -> float:
        return float(self.distances()[x, y])

    def lattice_distances(self) -> np.ndarray:
        """Hop distances in the builder's edge set, ignoring couplings.

        Long-range couplings make the support graph nearly complete; shell
        structure and growth-by-distance fields refer to this underlying
        geometry instead.
        """
        if self._lat_dist_cache is None:
            if len(self.edges):
                self._lat_dist_cache = csgraph.shortest_path(
                    self._adj, method="D", unweighted=True)
            else:
                self._lat_dist_cache = self.distances()
        return self._lat_dist_cache

    def induced_distances(self, vertices: np.ndarray,
                          sources: np.ndarray | None = None) -> np.ndarray:
        """Hop distances within the subgraph induced by ``vertices``.

        Returns an array of shape (len(sources), len(vertices)); inf where
        the induced subgraph disconnects the pair.
        """
        vertices = np.asarray(vertices, dtype=np.int64)
        sub = self.adjacency[vertices][:, vertices]
        if sources is None:
            src = np.arange(len(vertices))
        else:
            lookup = {int(v): i for i, v in enumerate(vertices)}
            src = np.array([lookup[int(s)] for s in sources], dtype=np.int64)
        return csgraph.shortest_path(sub, method="D", unweighted=True,
                                     indices=src)

    def __repr__(self):
        kind = self.interaction_kind or "no couplings"
        return (f"InteractionGraph({self.name}, n={self.n}, "
                f"origin={self.origin}, {kind})")


@dataclass(frozen=True)
class Region:
    """A sub-volume of the stored truncation, kept as a sorted id array."""

    graph: InteractionGraph
    vertices: np.ndarray

    def __post_init__(self):
        v = np.unique(np.asarray(self.vertices, dtype=np.int64))
        if v.size and (v.min() < 0 or v.max() >= self.graph.n):
            raise ContractError("region vertex outside the stored graph")
        object.__setattr__(self, "vertices", v)

    def __len__(self):
        return len(self.vertices)

    def __contains__(self, x):
        return bool(self.mask[int(x)])

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.graph.n, dtype=bool)
        m[self.vertices] = True
        return m

    def complement(self) -> np.ndarray:
        """Stored vertices outside the region."""
        return np.flatnonzero(~self.mask)

    def interior_boundary(self) -> np.ndarray:
        """Vertices of the region with at least one stored neighbour outside."""
        mask = self.mask
        out = []
        for x in self.vertices:
            nb = self.graph.neighbours(int(x))
            if nb.size and np.any(~mask[nb]):
                out.append(int(x))
        return np.array(sorted(out), dtype=np.int64)

    def exterior_neighbours(self) -> np.ndarray:
        """Stored vertices outside the region adjacent to it."""
        mask = self.mask
        out = set()
        for x in self.vertices:
            for y in self.graph.neighbours(int(x)):
                if not mask[y]:
                    out.add(int(y))
        return np.array(sorted(out), dtype=np.int64)


# ---------------------------------------------------------------------------
# builders


def _path_graph(length: int) -> InteractionGraph:
    if length < 1:
        raise ContractError("path length must be >= 1")
    edges = np.array([(i, i + 1) for i in range(length - 1)],
                     dtype=np.int64).reshape(-1, 2)
    coords = np.arange(length)[:, None] - (length - 1) // 2
    boundary = {0, length - 1} if length > 1 else {0}
    return InteractionGraph(length, edges, origin=(length - 1) // 2,
                            coords=coords, truncation_boundary=boundary,
                            name=f"path:{length}")


def _box_graph(dim: int, side: int) -> InteractionGraph:
    if dim < 1 or side < 1:
        raise ContractError("box requires dim >= 1 and side >= 1")
    shape = (side,) * dim
    n = side ** dim
    idx = np.arange(n).reshape(shape)
    edges = []
    for axis in range(dim):
        a = np.moveaxis(idx, axis, 0)
        edges.append(np.stack([a[:-1].ravel(), a[1:].ravel()], axis=1))
    edges = np.concatenate(edges) if edges else np.empty((0, 2), np.int64)
    coords = np.stack(np.unravel_index(np.arange(n), shape), axis=1)
    coords = coords - (side - 1) // 2
    centre = int(np.ravel_multi_index(((side - 1) // 2,) * dim, shape))
    on_face = np.any((coords == coords.min(0)) | (coords == coords.max(0)),
                     axis=1)
    return InteractionGraph(n, edges, origin=centre, coords=coords,
                            truncation_boundary=set(np.flatnonzero(on_face)),
                            name=f"box:{dim}d{side}")


def _tree_graph(branching: int, depth: int) -> InteractionGraph:
    """Rooted tree: the root has ``branching`` children, every other
    internal vertex has branching - 1, so all internal degrees equal."""
    if branching < 2 or depth < 0:
        raise ContractError("tree requires branching >= 2 and depth >= 0")
    edges = []
    levels = [[0]]
    nxt = 1
    for d in range(depth):
        level = []
        for parent in levels[-1]:
            k = branching if d == 0 else branching - 1
            for _ in range(k):
                edges.append((parent, nxt))
                level.append(nxt)
                nxt += 1
        levels.append(level)
    return InteractionGraph(nxt, np.array(edges, dtype=np.int64).reshape(-1, 2),
                            origin=0,
                            truncation_boundary=set(levels[-1]),
                            name=f"tree:{branching},{depth}")


def _edge_list_graph(path: str | None, text: str | None = None
                     ) -> InteractionGraph:
    """Read `vertex_id vertex_id J_value` lines; '#' starts a comment."""
    if text is None:
        with open(path) as fh:
            text = fh.read()
    else:
        path = path or "<inline>"
    pairs, js = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ContractError(
                f"{path}:{lineno}: expected 'u v J', got {raw!r}")
        u, v, j = int(parts[0]), int(parts[1]), float(parts[2])
        if u == v:
            raise ContractError(f"{path}:{lineno}: self-coupling")
        pairs.append((u, v))
        js.append(j)
    if not pairs:
        raise ContractError(f"{path}: no edges")
    pairs = np.array(pairs, dtype=np.int64)
    n = int(pairs.max()) + 1
    g = InteractionGraph(n, pairs, origin=0, name=f"edge_list:{path}")
    data = np.asarray(js, dtype=float)
    m = sparse.coo_matrix((data, (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    mT = sparse.coo_matrix((data, (pairs[:, 1], pairs[:, 0])), shape=(n, n))
    g.J = (m + mT).tocsr()
    g.kernel = KernelFunction("log_sqrt")
    g.interaction_kind = "edge_list"
    return g


def build_graph(spec) -> InteractionGraph:
    """Build a stored truncation from a builder spec.

    Accepts either a dict like ``{"builder": "path", "L": 9}`` or a compact
    string: ``path:9``, ``box:2x5``, ``tree:3,4``, ``edge_list:file.txt``.
    """
    if isinstance(spec, str):
        kind, _, rest = spec.partition(":")
        if kind == "path":
            return _path_graph(int(rest))
        if kind == "box":
            d, _, s = rest.replace(",", "x").partition("x")
            return _box_graph(int(d), int(s))
        if kind == "tree":
            b, _, d = rest.partition(",")
            return _tree_graph(int(b), int(d))
        if kind == "edge_list":
            return _edge_list_graph(rest)
        raise ContractError(f"unknown graph spec {spec!r}")
    kind = spec["builder"]
    if kind == "path":
        return _path_graph(int(spec["L"]))
    if kind == "box":
        return _box_graph(int(spec.get("dim", 2)), int(spec["L"]))
    if kind == "regular_tree":
        return _tree_graph(int(spec["branching"]), int(spec["depth"]))
    if kind == "edge_list":
        return _edge_list_graph(spec["path"])
    if kind == "edge_list_text":
        return _edge_list_graph(None, text=spec["text"])
    raise ContractError(f"unknown builder {kind!r}")


def make_interactions(graph: InteractionGraph, kind: str,
                      kernel: KernelFunction | None = None,
                      r: float | None = None,
                      cutoff: int | None = None,
                      scale: float = 1.0) -> InteractionGraph:
    """Install a symmetric coupling matrix on the stored truncation.

    nearest_neighbour : J = scale on builder edges.
    long_range        : J = scale * d(x,y)**(-r) for all stored pairs with
                        hop distance 1 <= d <= cutoff.

    The kernel defaults to log_sqrt, whose value at |t| = 1 is 1, so the
    nearest-neighbour closed forms apply unchanged.
    """
    if kind == "nearest_neighbour":
        e = graph.edges
        data = np.full(len(e), float(scale))
        m = sparse.coo_matrix((data, (e[:, 0], e[:, 1])),
                              shape=(graph.n, graph.n))
        graph.J = (m + m.T).tocsr()
    elif kind == "long_range":
        if r is None or cutoff is None:
            raise ContractError("long_range requires r and cutoff")
        d = graph.distances()
        xs, ys = np.nonzero((d >= 1) & (d <= cutoff))
        keep = xs < ys
        xs, ys = xs[keep], ys[keep]
        data = scale * d[xs, ys] ** (-float(r))
        m = sparse.coo_matrix((data, (xs, ys)), shape=(graph.n, graph.n))
        graph.J = (m + m.T).tocsr()
        graph._dist_cache = None
    else:
        raise ContractError(f"unknown interaction kind {kind!r}")
    graph.kernel = kernel if kernel is not None else KernelFunction("log_sqrt")
    graph.interaction_kind = kind
    return graph


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    """Outcome of the admissibility checks on a stored truncation."""

    c1_symmetric: bool
    max_asymmetry: float
    M_f: float
    c2_ok: bool
    kernel_tail_ok: bool
    connected: bool
    decay_ok: bool | None = None
    doubling_ok: bool | None = None
    notes: list = field(default_factory=list)

    @property
    def admissible(self) -> bool:
        return self.c1_symmetric and self.c2_ok and self.kernel_tail_ok


def validate_interactions(graph: InteractionGraph, n: float,
                          reasonable: tuple[float, float] | None = None
                          ) -> ValidationReport:
    """Check symmetry, the weighted row-sum bound and kernel admissibility.

    ``M_f`` is certified over the stored truncation only; rows on the
    truncation boundary may be missing exterior terms, which is recorded
    as a note rather than silently ignored.

    ``reasonable=(r, c)`` additionally checks |J| <= d(x,y)**(-r) on all
    stored pairs, the kernel doubling bound f(2**r t) >= c f(t), and
    J-connectivity of the truncation.
    """
    if graph.J is None:
        raise ContractError("no interactions installed")
    J = graph.J
    asym = abs(J - J.T)
    max_asym = float(asym.max()) if asym.nnz else 0.0
    c1 = max_asym <= 1e-12

    f = graph.kernel
    rows = np.zeros(graph.n)
    indptr, indices, data = graph.coupling_rows()
    for x in range(graph.n):
        seg = data[indptr[x]:indptr[x + 1]]
        if seg.size:
            rows[x] = np.sum(np.abs(seg) * f(seg))
    M_f = float(rows.max()) if graph.n else 0.0
    c2 = math.isfinite(M_f)

    tail = f.tail_ok(n)
    ncomp, _ = csgraph.connected_components(graph.adjacency, directed=False)
    connected = ncomp == 1

    report = ValidationReport(c1_symmetric=c1, max_asymmetry=max_asym,
                              M_f=M_f, c2_ok=c2, kernel_tail_ok=tail,
                              connected=connected)
    if graph.truncation_boundary:
        report.notes.append(
            "M_f certified on the stored truncation; boundary rows may be "
            "missing exterior terms")
    if not tail and f.family == "unit":
        report.notes.append(
            "unit kernel fails the small-coupling tail bound; safe only "
            "when couplings are bounded away from zero")
    if reasonable is not None:
        r, c = reasonable
        if not 0 < c < 1:
            raise ContractError("reasonable pair requires 0 < c < 1")
        d = graph.distances()
        xs, ys = J.nonzero()
        jvals = np.abs(np.asarray(J[xs, ys]).ravel())
        decay = bool(np.all(jvals <= d[xs, ys] ** (-r) + 1e-12))
        report.decay_ok = decay and connected
        report.doubling_ok = f.doubling_ok(r, c)
    return report


# ---------------------------------------------------------------------------
# balls and exterior fields


def ball_size(graph: InteractionGraph, centre: int, radius: int
              ) -> tuple[int, bool]:
    """Number of stored vertices within hop distance ``radius`` of centre.

    The flag is True when the ball touches the truncation boundary (so the
    true infinite-graph ball may be larger than the stored one).
    """
    if radius < 0:
        raise ContractError("radius must be >= 0")
    d = graph.lattice_distances()[centre]
    inside = d <= radius
    saturated = any(bool(inside[v]) for v in graph.truncation_boundary)
    if not graph.truncation_boundary and radius > np.max(d[np.isfinite(d)]):
        saturated = True
    return int(np.count_nonzero(inside)), saturated


def _xi_value(xi, vertex: int) -> float:
    if hasattr(xi, "value"):
        return float(xi.value(vertex))
    if callable(xi):
        return float(xi(vertex))
    return float(xi[vertex])


@dataclass
class HFieldReport:
    """Exterior field at one vertex plus truncation accounting."""

    value: float
    abs_total: float
    shell_fraction: float
    truncation_warning: bool
    divergence_flag: bool


def h_field(graph: InteractionGraph, region: Region, xi, x: int,
            return_report: bool = False):
    """Exterior field sum(J_{x,z} xi_z) over stored z outside the region.

    The report carries the fraction of the |J xi| mass contributed by the
    truncation shell (warning above 1e-10) and a divergence heuristic:
    per-distance partial |J xi| sums still growing at the shell.
    """
    if x not in region:
        raise ContractError("h_field evaluated outside the region")
    indptr, indices, data = graph.coupling_rows()
    nb = indices[indptr[x]:indptr[x + 1]]
    jv = data[indptr[x]:indptr[x + 1]]
    mask = region.mask
    val = 0.0
    abs_terms = []      # (|J xi|, on_shell, lattice distance from origin)
    dist = graph.lattice_distances()[graph.origin]
    for y, j in zip(nb, jv):
        if mask[y]:
            continue
        xv = _xi_value(xi, int(y))
        val += j * xv
        abs_terms.append((abs(j * xv), int(y) in graph.truncation_boundary,
                          dist[y]))
    abs_total = sum(t[0] for t in abs_terms)
    shell = sum(t[0] for t in abs_terms if t[1])
    frac = shell / abs_total if abs_total > 0 else 0.0
    divergence = False
    if abs_terms:
        by_d: dict[float, float] = {}
        for a, _, dd in abs_terms:
            by_d[dd] = by_d.get(dd, 0.0) + a
        ds = sorted(by_d)
        if len(ds) >= 3:
            tail3 = [by_d[dd] for dd in ds[-3:]]
            divergence = tail3[0] <= tail3[1] <= tail3[2] and tail3[2] > 0
    if not math.isfinite(val):
        divergence = True
    report = HFieldReport(value=val, abs_total=abs_total, shell_fraction=frac,
                          truncation_warning=frac > 1e-10,
                          divergence_flag=divergence)
    if return_report:
        return report
    return val
