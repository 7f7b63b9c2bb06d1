"""Susceptibility scan used to place production coupling strengths.

Free-boundary chains on a fixed ball estimate chi(beta) = <S^2>/N for
the block sum S, plus the integrated autocorrelation time of S.  The
scan locates the steepest rise of log chi over the beta grid; the
shipped betas listed in the config must sit at or below 60% of that
location.  When the steepest rise lands on the final grid point the
located value is only a lower bound for the true knee, which keeps the
60% rule conservative; the report notes it.

This is a calibration aid, not a claim about phase structure: on small
balls there is no sharp transition to find, only the point where error
bars stop being honest at desk budgets.
"""

from __future__ import annotations

import numpy as np

from . import common as cm
from .. import sampler as sp
from .. import stats as stt
from .. import measures as ms

FRACTION = 0.6


def _chi_cell(cfg: dict, beta: float, seed_child):
    g = cm.build_graph_spec(cfg["graph"])
    vol = cm.centered_volumes(g, [int(cfg["radius"])])[0]
    measure = ms.make_measure(cfg["measure"])
    model = sp.make_model(g, measure, beta, region=vol)
    rng = np.random.Generator(np.random.PCG64(seed_child))
    mc = cfg["mc"]
    res = sp.run_chain(model, sweeps=mc["sweeps"], rng=rng,
                       record_sites=list(vol.vertices), burn=mc["burn"],
                       thin=mc["thin"])
    S = res.samples.sum(axis=1)
    st = stt.batch_means(S)
    n_sites = len(vol.vertices)
    chi = float(np.mean(S ** 2)) / n_sites
    # crude delta-method error on <S^2> under autocorrelation
    se = float(np.std(S ** 2) / np.sqrt(max(st.ess, 2.0))) / n_sites
    return {"chi": chi, "chi_se": se, "iact": st.iact, "ess": st.ess}


def run(cfg: dict) -> dict:
    cm.check_fields(cfg, "config",
                    {"experiment": str, "graph": dict, "measure": dict,
                     "betas": list, "radius": int, "mc": dict,
                     "seed": int},
                    {"label": str, "shipped_betas": list, "out": dict})
    cm.check_mc(cfg["mc"])
    betas = [float(b) for b in cfg["betas"]]
    if len(betas) < 3 or any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        raise cm.SchemaError("betas must be at least 3 increasing values")
    reps = cfg["mc"]["replicas"]
    seq = np.random.SeedSequence(cfg["seed"])
    children = seq.spawn(len(betas) * reps)
    args = []
    for i, b in enumerate(betas):
        for k in range(reps):
            args.append((cfg, b, children[i * reps + k]))
    cells = cm.map_cells(_chi_cell, args)

    rows = []
    for i, b in enumerate(betas):
        chunk = cells[i * reps:(i + 1) * reps]
        chi, se = cm.pooled_mean_se([c["chi"] for c in chunk],
                                    [c["chi_se"] for c in chunk])
        rows.append({"beta": b, "chi": chi, "chi_se": se,
                     "iact": float(np.mean([c["iact"] for c in chunk]))})

    log_chi = np.log([r["chi"] for r in rows])
    slopes = np.diff(log_chi) / np.diff(np.array(betas))
    knee_idx = int(np.argmax(slopes)) + 1
    beta_star = betas[knee_idx]
    notes = []
    if knee_idx == len(betas) - 1:
        notes.append("steepest rise sits on the last grid point; the "
                     "located knee is a lower bound")

    verdicts = []
    shipped = [float(b) for b in cfg.get("shipped_betas", [])]
    if shipped:
        limit = FRACTION * beta_star
        bad = [b for b in shipped if b > limit]
        verdicts.append(cm.Verdict(
            name="shipped_betas_below_knee",
            passed=(not bad),
            tolerance=f"every shipped beta <= {FRACTION} * located knee "
                      f"({limit:.4g})",
            details={"beta_star": beta_star, "limit": limit,
                     "shipped": shipped, "over": bad}))
    return cm.assemble_report(
        cfg, verdicts,
        {"scan": rows, "beta_star": beta_star,
         "slopes": [float(s) for s in slopes]},
        notes=notes)
