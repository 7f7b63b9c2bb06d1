"""Command-line harness.

Subcommands:

  analyze-bc    growth profiles of a boundary field over a region
  sample        one heat-bath chain, summary stats per recorded site
  explore       threshold-cluster sizes under independent tilted spins
  progeny       exact total-progeny pmf of the dominating branching law
  experiment    run one named experiment config, write report + tables
  run-all       run every config in a manifest, write a summary

Reports are canonical JSON, tables CSV.  GIBBS_THREADS caps the worker
count for replica cells; a single chain stays sequential regardless.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import boundary as bd
from . import exploration as ex
from . import graphs as gr
from . import measures as ms
from . import sampler as sp
from . import stats as stt
from .errors import ContractError, QuadratureError, SchemaError
from .experiments import common as cm
from .experiments import runner


# ---------------------------------------------------------------------------
# small argument parsers shared by the non-config subcommands


def _graph_arg(text: str) -> gr.InteractionGraph:
    """Builtin spec string or an edge-list file path."""
    if os.path.exists(text):
        g = gr.build_graph({"builder": "edge_list", "path": text})
    elif ":" in text:
        g = gr.build_graph(text)
    else:
        raise SchemaError(f"graph {text!r}: not a file and not a "
                          "builtin spec like path:9, box:2x5, tree:3,4")
    gr.make_interactions(g, "nearest_neighbour")
    return g


def _graph_from_cfg(spec) -> gr.InteractionGraph:
    if isinstance(spec, dict):
        return cm.build_graph_spec(spec)
    if isinstance(spec, str):
        g = gr.build_graph(spec)
        gr.make_interactions(g, "nearest_neighbour")
        return g
    raise SchemaError("graph must be a builder object or a spec string")


def _region_arg(graph: gr.InteractionGraph, text: str) -> gr.Region:
    kind, _, rest = text.partition(":")
    if kind == "ball" and rest:
        return cm.centered_volumes(graph, [int(rest)])[0]
    if kind == "vertices" and rest:
        return gr.Region(graph, sorted(int(t) for t in rest.split(",")))
    raise SchemaError(f"region {text!r}: expected ball:R or "
                      "vertices:v1,v2,...")


def _field_arg(graph: gr.InteractionGraph, text: str) -> bd.BoundaryField:
    fam, _, rest = text.partition(":")
    spec = {"family": fam}
    for item in filter(None, rest.split(",")):
        k, eq, v = item.partition("=")
        if not eq:
            raise SchemaError(f"field parameter {item!r}: expected k=v")
        spec[k] = v if k in ("sign", "support") else float(v)
    return cm.build_boundary_spec(graph, spec)


def _region_from_cfg(graph: gr.InteractionGraph, spec) -> gr.Region:
    if isinstance(spec, dict) and "radius" in spec:
        return cm.centered_volumes(graph, [int(spec["radius"])])[0]
    if isinstance(spec, dict) and "vertices" in spec:
        return gr.Region(graph, sorted(int(v) for v in spec["vertices"]))
    raise SchemaError("region must give a radius or a vertex list")


def _load_json(path: str) -> dict:
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as e:
            raise SchemaError(f"{path}: {e}") from None


# ---------------------------------------------------------------------------
# subcommand bodies


def _cmd_analyze_bc(args) -> int:
    g = _graph_arg(args.graph)
    region = _region_arg(g, args.region)
    xi = _field_arg(g, args.xi)
    prof_a = bd.compute_A(g, region, xi, args.C, args.n, lam=args.lam)
    prof_t = bd.compute_A_tilde(g, region, xi, args.C, args.n,
                                lam=args.lam)
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["vertex", "logA", "logAtilde"])
        for i, v in enumerate(region.vertices):
            w.writerow([int(v), format(prof_a.log_values[i], ".17g"),
                        format(prof_t.log_values[i], ".17g")])
    flags = []
    if prof_a.diverged or prof_t.diverged:
        flags.append("shell-sensitive: profile values move with the "
                     "stored truncation, treat as a lower estimate")
    print(f"wrote {args.out} ({len(region.vertices)} vertices)"
          + ("".join("; " + f for f in flags)))
    return 0


def _cmd_sample(args) -> int:
    cfg = _load_json(args.config)
    cm.check_fields(cfg, "config",
                    {"graph": (dict, str), "measure": dict,
                     "beta": cm.REAL, "region": dict},
                    {"boundary": dict, "record": list, "thin": int})
    g = _graph_from_cfg(cfg["graph"])
    region = _region_from_cfg(g, cfg["region"])
    measure = ms.make_measure(cfg["measure"])
    xi = None
    if "boundary" in cfg:
        xi = cm.build_boundary_spec(g, cfg["boundary"])
    record = sorted(int(v) for v in cfg.get("record", [g.origin]))
    thin = int(cfg.get("thin", 1))
    model = sp.make_model(g, measure, float(cfg["beta"]), region=region,
                          boundary=xi)
    rng = np.random.Generator(np.random.PCG64(args.seed))
    res = sp.run_chain(model, sweeps=args.sweeps, rng=rng,
                       record_sites=record, burn=args.burn_in, thin=thin)
    obs = {}
    for i, v in enumerate(record):
        xs = res.samples[:, i]
        st = stt.batch_means(xs)
        counts, edges = np.histogram(xs, bins="auto")
        obs[f"site_{v}"] = {
            "mean": st.mean, "stderr": st.se_mean, "ess": st.ess,
            "histogram": {"edges": [float(e) for e in edges],
                          "counts": [int(c) for c in counts]}}
    report = {
        "config": cfg, "seed": args.seed, "sweeps": args.sweeps,
        "burn_in": args.burn_in, "observables": obs,
    }
    cm.write_report(report, args.out)
    print(f"wrote {args.out} ({len(record)} observables, "
          f"{res.samples.shape[0]} kept sweeps)")
    return 0


def _cmd_explore(args) -> int:
    cfg = _load_json(args.config)
    cm.check_fields(cfg, "config",
                    {"graph": (dict, str), "measure": dict,
                     "budget": dict, "C": cm.REAL, "seed": int},
                    {"region_prime": dict, "lambda": cm.REAL})
    cm.check_fields(cfg["budget"], "budget", {"a": cm.REAL, "n": cm.REAL})
    g = _graph_from_cfg(cfg["graph"])
    a, n = float(cfg["budget"]["a"]), float(cfg["budget"]["n"])
    lam = cfg.get("lambda")
    if "region_prime" in cfg:
        rp = [int(v) for v in
              _region_from_cfg(g, cfg["region_prime"]).vertices]
    else:
        rp = [int(g.origin)]
    measure = ms.make_measure(cfg["measure"])
    half = ms.tilt(measure, 0.5 * a, n)
    rng = np.random.Generator(np.random.PCG64(int(cfg["seed"])))
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "cluster_size", "generations"])
        for k in range(args.runs):
            phi = ms.draw(half, rng, g.n)
            res = ex.build_cluster(g, phi, float(cfg["C"]), n, rp,
                                   lam=lam)
            gens = max(res.generation.values(), default=-1) + 1
            w.writerow([k, res.size, gens])
    print(f"wrote {args.out} ({args.runs} runs)")
    return 0


def _cmd_progeny(args) -> int:
    law = ex.OffspringLaw(args.b)
    dist = ex.progeny_pmf(law, args.nmax, ancestors=args.k)
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "pmf"])
        for n_val in range(args.nmax + 1):
            w.writerow([n_val, format(dist.pmf[n_val], ".17g")])
    covered = float(dist.pmf.sum())
    print(f"wrote {args.out} (mass covered up to n={args.nmax}: "
          f"{covered:.12f})")
    return 0


def _cmd_experiment(args) -> int:
    cfg = cm.load_config(args.config)
    if cfg["experiment"] != args.name:
        raise SchemaError(
            f"config declares experiment {cfg['experiment']!r}, "
            f"command asked for {args.name!r}")
    report = runner.run_experiment(cfg)
    out_dir = args.out or os.path.join(
        os.path.dirname(os.path.abspath(args.config)), "reports")
    stem = os.path.splitext(os.path.basename(args.config))[0]
    written = runner.save_outputs(report, out_dir, stem)
    for v in report["verdicts"]:
        print(f"{'PASS' if v['passed'] else 'FAIL'} {v['name']}: "
              f"{v['tolerance']}")
    for note in report["notes"]:
        print(f"note: {note}")
    for path in written:
        print(f"wrote {path}")
    return 0 if report["passed"] else 1


def _cmd_run_all(args) -> int:
    return runner.run_all(args.manifest, out_dir=args.out)


# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="gibbsbc",
        description="Finite-volume spin systems with unbounded spins: "
                    "boundary growth profiles, heat-bath sampling, "
                    "exploration bounds, and the experiment suite.")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("analyze-bc",
                       help="growth profiles of a boundary field")
    q.add_argument("--graph", required=True,
                   help="builtin spec (path:9, box:2x5, tree:3,4) or an "
                        "edge-list file")
    q.add_argument("--region", required=True,
                   help="ball:R or vertices:v1,v2,...")
    q.add_argument("--xi", required=True,
                   help="field spec, family:k=v,... e.g. "
                        "double_exponential:K=1.5,n=4")
    q.add_argument("--C", type=float, required=True)
    q.add_argument("--n", type=float, required=True)
    q.add_argument("--lambda", dest="lam", type=float, default=None)
    q.add_argument("--out", required=True)
    q.set_defaults(fn=_cmd_analyze_bc)

    q = sub.add_parser("sample", help="run one heat-bath chain")
    q.add_argument("--config", required=True)
    q.add_argument("--seed", type=int, required=True)
    q.add_argument("--sweeps", type=int, required=True)
    q.add_argument("--burn-in", type=int, required=True)
    q.add_argument("--out", required=True)
    q.set_defaults(fn=_cmd_sample)

    q = sub.add_parser("explore",
                       help="threshold-cluster sizes over tilted draws")
    q.add_argument("--config", required=True)
    q.add_argument("--runs", type=int, required=True)
    q.add_argument("--out", required=True)
    q.set_defaults(fn=_cmd_explore)

    q = sub.add_parser("progeny",
                       help="exact total-progeny pmf of the branching law")
    q.add_argument("--b", type=float, required=True,
                   help="no-child mass, in [1/2, 1]")
    q.add_argument("--k", type=int, required=True,
                   help="number of ancestors")
    q.add_argument("--nmax", type=int, required=True)
    q.add_argument("--out", required=True)
    q.set_defaults(fn=_cmd_progeny)

    q = sub.add_parser("experiment", help="run one experiment config")
    q.add_argument("name", choices=sorted(runner.REGISTRY))
    q.add_argument("--config", required=True)
    q.add_argument("--out", default=None,
                   help="output directory (default: reports/ next to "
                        "the config)")
    q.set_defaults(fn=_cmd_experiment)

    q = sub.add_parser("run-all", help="run every config in a manifest")
    q.add_argument("--manifest", required=True)
    q.add_argument("--out", default=None)
    q.set_defaults(fn=_cmd_run_all)

    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (SchemaError, ContractError, QuadratureError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
