"""Shared plumbing for the experiment harness.

Configs are JSON key-value files validated against per-experiment
schemas.  Reports are canonical JSON (sorted keys, 17-digit floats) so
a (config, seed) pair reproduces bit-for-bit; CSV tables carry the
per-volume observables.  Worker count is capped by GIBBS_THREADS;
replica cells are seeded by spawning one child sequence per sorted
cell id, so results do not depend on execution order.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, SchemaError
from .. import graphs as gr
from .. import measures as ms
from .. import boundary as bd
from .. import stats as stt

PKG_VERSION = "0.1.0"


# ---------------------------------------------------------------------------
# schema validation


def check_fields(section: dict, name: str, required: dict,
                 optional: dict = ()):
    """required/optional map field -> type or tuple of types."""
    if not isinstance(section, dict):
        raise SchemaError(f"{name} must be a mapping")
    optional = dict(optional) if optional else {}
    unknown = set(section) - set(required) - set(optional)
    if unknown:
        raise SchemaError(f"{name}: unknown fields {sorted(unknown)}")
    for k, t in required.items():
        if k not in section:
            raise SchemaError(f"{name}: missing field {k!r}")
        if not isinstance(section[k], t):
            raise SchemaError(f"{name}.{k}: expected {t}, "
                              f"got {type(section[k]).__name__}")
    for k, t in optional.items():
        if k in section and not isinstance(section[k], t):
            raise SchemaError(f"{name}.{k}: expected {t}, "
                              f"got {type(section[k]).__name__}")


REAL = (int, float)

MC_SCHEMA = {"sweeps": int, "burn": int, "thin": int, "replicas": int}


def check_mc(mc: dict):
    check_fields(mc, "mc", MC_SCHEMA)
    if mc["sweeps"] <= mc["burn"]:
        raise SchemaError("mc.sweeps must exceed mc.burn")
    if mc["thin"] < 1 or mc["replicas"] < 1:
        raise SchemaError("mc.thin and mc.replicas must be >= 1")


def load_config(path: str) -> dict:
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as e:
            raise SchemaError(f"config {path}: {e}") from None
    if not isinstance(cfg, dict) or "experiment" not in cfg:
        raise SchemaError(f"config {path}: needs an 'experiment' field")
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(
        stt.canonical_json(cfg).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# spec builders


def build_graph_spec(spec: dict) -> gr.InteractionGraph:
    check_fields(spec, "graph",
                 {"builder": str},
                 {"L": int, "dim": int, "branching": int, "depth": int,
                  "path": str, "text": str, "interactions": dict})
    inter = spec.get("interactions")
    g_spec = {k: v for k, v in spec.items() if k != "interactions"}
    g = gr.build_graph(g_spec)
    if inter is not None:
        check_fields(inter, "graph.interactions", {"kind": str},
                     {"scale": REAL, "r": REAL, "cutoff": int,
                      "kernel": dict})
        kern = None
        if "kernel" in inter:
            kspec = inter["kernel"]
            check_fields(kspec, "graph.interactions.kernel",
                         {"family": str}, {"alpha": REAL})
            kern = gr.KernelFunction(kspec["family"],
                                     alpha=kspec.get("alpha"))
        gr.make_interactions(g, inter["kind"], kernel=kern,
                             r=inter.get("r"), cutoff=inter.get("cutoff"),
                             scale=inter.get("scale", 1.0))
    else:
        gr.make_interactions(g, "nearest_neighbour")
    return g


def build_boundary_spec(graph: gr.InteractionGraph, spec: dict
                        ) -> bd.BoundaryField:
    check_fields(spec, "boundary", {"family": str},
                 {"K": REAL, "n": REAL, "epsilon": REAL, "C_xi": REAL,
                  "lam": REAL, "M_xi": REAL, "r": REAL, "cap_log": REAL,
                  "sign": str, "support": str, "values": dict})
    kw = {}
    for k in ("K", "n", "epsilon", "C_xi", "lam", "M_xi", "r"):
        if k in spec:
            kw[k] = float(spec[k])
    if "values" in spec:
        kw["values"] = {int(a): float(b) for a, b in spec["values"].items()}
    if "cap_log" in spec:
        # the field object stores the cap as a value, configs give its log
        kw["cap"] = math.exp(float(spec["cap_log"]))
    if "sign" in spec:
        kw["sign_mode"] = spec["sign"]
    if "support" in spec:
        kw["support"] = spec["support"]
    return bd.BoundaryField(graph, spec["family"], **kw)


def centered_volumes(graph: gr.InteractionGraph, radii) -> list[gr.Region]:
    """Nested balls around the origin in the builder metric."""
    radii = [int(r) for r in radii]
    if any(r2 <= r1 for r1, r2 in zip(radii, radii[1:])):
        raise SchemaError("volume radii must be strictly increasing")
    dist = graph.lattice_distances()[graph.origin]
    out = []
    for r in radii:
        verts = np.flatnonzero(dist <= r)
        if len(verts) == graph.n:
            raise SchemaError(f"volume radius {r} fills the stored "
                              "truncation; enlarge the graph")
        out.append(gr.Region(graph, verts))
    return out


# ---------------------------------------------------------------------------
# verdicts and reports


@dataclass
class Verdict:
    name: str
    passed: bool
    tolerance: str                # human-readable rule it was judged by
    details: dict = field(default_factory=dict)

    def as_dict(self):
        return {"name": self.name, "passed": bool(self.passed),
                "tolerance": self.tolerance, "details": self.details}


def assemble_report(cfg: dict, verdicts: list[Verdict],
                    observables, notes=()) -> dict:
    return {
        "experiment": cfg["experiment"],
        "label": cfg.get("label", ""),
        "provenance": {
            "config_hash": config_hash(cfg),
            "seed": cfg.get("seed"),
            "package": PKG_VERSION,
            "numpy": np.__version__,
        },
        "thresholds": cfg.get("thresholds", {}),
        "notes": list(notes),
        "observables": observables,
        "verdicts": [v.as_dict() for v in verdicts],
        "passed": all(v.passed for v in verdicts),
    }


def write_report(report: dict, path: str | None):
    text = stt.canonical_json(report)
    if path:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text


def write_csv(rows: list[dict], path: str | None) -> str:
    """Rows share a key set; columns come out sorted for determinism."""
    if not rows:
        return ""
    cols = sorted({k for row in rows for k in row})
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols)
    w.writeheader()
    for row in rows:
        w.writerow({k: _csv_cell(row.get(k)) for k in cols})
    text = buf.getvalue()
    if path:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "w") as fh:
            fh.write(text)
    return text


def _csv_cell(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return v


# ---------------------------------------------------------------------------
# parallel cells


def n_workers() -> int:
    raw = os.environ.get("GIBBS_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ContractError(f"GIBBS_THREADS={raw!r} is not an integer")


def map_cells(fn, args_list):
    """Run fn over argument tuples; order of results follows args_list
    regardless of how many workers execute them."""
    w = min(n_workers(), len(args_list)) if args_list else 1
    if w <= 1:
        return [fn(*a) for a in args_list]
    with ProcessPoolExecutor(max_workers=w) as pool:
        futs = [pool.submit(fn, *a) for a in args_list]
        return [f.result() for f in futs]


def spawn_rngs(seed: int, count: int) -> list[np.random.Generator]:
    seq = np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.PCG64(c))
            for c in seq.spawn(count)]


def pooled_mean_se(means, ses):
    """Combine replica means: scatter between replicas plus their own
    uncertainty, whichever is larger dominates."""
    means = np.asarray(means, dtype=float)
    ses = np.asarray(ses, dtype=float)
    r = len(means)
    m = float(means.mean())
    within = float(np.sqrt(np.sum(ses ** 2)) / r)
    between = float(means.std(ddof=1) / np.sqrt(r)) if r > 1 else 0.0
    return m, max(within, between)
