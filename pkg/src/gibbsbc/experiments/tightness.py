"""Volume scan of origin quantiles under a fixed boundary family.

For each volume in the schedule the chain runs with spins outside the
volume frozen at the boundary field values, and the 0.9/0.99 quantiles
and mean of |phi_o| are recorded with replica-pooled standard errors.
The two verdict rules:

  tight-consistent : across the last three volumes, each quantile
                     drifts by less than ``se_stable`` pooled SEs.
  diverging        : the 0.99 quantile increases strictly along the
                     whole schedule and the total climb exceeds
                     ``se_diverge`` pooled SEs.

A scan can satisfy neither rule (reported as inconclusive); shipped
configs are sized so the intended side is clear.
"""

from __future__ import annotations

import numpy as np

from . import common as cm
from .. import boundary as bd
from .. import sampler as sp
from .. import stats as stt
from .. import measures as ms

QUANTILES = (0.9, 0.99)


def _scan_cell(cfg: dict, radius: int, seed_child):
    """One (volume, replica) cell: returns per-quantile (est, se)."""
    g = cm.build_graph_spec(cfg["graph"])
    xi = cm.build_boundary_spec(g, cfg["boundary"])
    vol = cm.centered_volumes(g, [radius])[0]
    measure = ms.make_measure(cfg["measure"])
    model = sp.make_model(g, measure, cfg["beta"], region=vol, boundary=xi)
    rng = np.random.Generator(np.random.PCG64(seed_child))
    mc = cfg["mc"]
    res = sp.run_chain(model, sweeps=mc["sweeps"], rng=rng,
                       record_sites=[g.origin], burn=mc["burn"],
                       thin=mc["thin"])
    xs = np.abs(res.samples[:, 0])
    out = {}
    for q in QUANTILES:
        est, se = stt.batch_quantile_se(xs, q)
        out[q] = (est, se)
    mstats = stt.batch_means(xs)
    out["mean"] = (mstats.mean, mstats.se_mean)
    return out


def run(cfg: dict) -> dict:
    cm.check_fields(cfg, "config",
                    {"experiment": str, "graph": dict, "measure": dict,
                     "beta": cm.REAL, "boundary": dict, "volumes": dict,
                     "mc": dict, "seed": int},
                    {"label": str, "thresholds": dict, "out": dict,
                     "expect": str})
    cm.check_fields(cfg["volumes"], "volumes", {"radii": list})
    cm.check_mc(cfg["mc"])
    th = cfg.get("thresholds", {})
    se_stable = float(th.get("se_stable", 2.0))
    se_diverge = float(th.get("se_diverge", 5.0))

    radii = [int(r) for r in cfg["volumes"]["radii"]]
    reps = cfg["mc"]["replicas"]
    seq = np.random.SeedSequence(cfg["seed"])
    children = seq.spawn(len(radii) * reps)
    args = []
    for i, r in enumerate(radii):
        for k in range(reps):
            args.append((cfg, r, children[i * reps + k]))
    cells = cm.map_cells(_scan_cell, args)

    rows = []
    series = {q: [] for q in QUANTILES}
    for i, r in enumerate(radii):
        chunk = cells[i * reps:(i + 1) * reps]
        row = {"radius": r}
        for q in QUANTILES:
            est, se = cm.pooled_mean_se([c[q][0] for c in chunk],
                                        [c[q][1] for c in chunk])
            row[f"q{int(q * 100)}"] = est
            row[f"q{int(q * 100)}_se"] = se
            series[q].append((est, se))
        est, se = cm.pooled_mean_se([c["mean"][0] for c in chunk],
                                    [c["mean"][1] for c in chunk])
        row["mean_abs"] = est
        row["mean_abs_se"] = se
        rows.append(row)

    verdicts = []
    for q in QUANTILES:
        ests = np.array([e for e, _ in series[q]])
        ses = np.array([s for _, s in series[q]])
        tail = ests[-3:] if len(ests) >= 3 else ests
        tail_se = float(np.sqrt(np.mean(ses[-3:] ** 2))) \
            if len(ests) >= 3 else float(np.sqrt(np.mean(ses ** 2)))
        drift = float(tail.max() - tail.min())
        stable = drift < se_stable * tail_se
        growing = bool(np.all(np.diff(ests) > 0))
        pooled = float(np.sqrt(np.mean(ses ** 2)))
        climb = float(ests[-1] - ests[0])
        diverging = growing and climb > se_diverge * pooled
        label = "tight-consistent" if stable else (
            "diverging" if diverging else "inconclusive")
        verdicts.append(cm.Verdict(
            name=f"q{int(q * 100)}_trend",
            passed=(label == cfg.get("expect", label)) if "expect" in cfg
            else (stable or diverging),
            tolerance=(f"stable if last-3 drift < {se_stable} pooled SE; "
                       f"diverging if monotone climb > {se_diverge} "
                       "pooled SE"),
            details={"drift_last3": drift, "drift_se": tail_se,
                     "climb": climb, "climb_se": pooled,
                     "classification": label}))

    obs = {"volumes": rows}
    tail_n = cfg["measure"].get("n")
    if tail_n is not None and tail_n > 2:
        g = cm.build_graph_spec(cfg["graph"])
        xi = cm.build_boundary_spec(g, cfg["boundary"])
        cert = bd.xi_membership(g, xi, n=float(tail_n))
        obs["field_class"] = {"in_xi": cert.in_xi,
                              "log_certificate": cert.log_certificate,
                              "truncation_saturated": cert.saturated}
    notes = []
    if cfg["beta"] == 0:
        notes.append("beta = 0: origin marginal is the bare site measure "
                     "for every volume, so any drift is pure MC noise")
    return cm.assemble_report(cfg, verdicts, obs, notes=notes)
