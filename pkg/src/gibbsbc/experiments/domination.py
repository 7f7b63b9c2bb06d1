"""Stochastic-order checks between chains with comparable inputs.

Four check types, each a list entry under ``checks``:

  xi_pathwise   coupled chains sharing site uniforms for boundary fields
                ordered pointwise; passes iff zero pathwise violations.
  xi_equal      two independent chains with the same field; empirical
                CDFs must agree within a two-sided band.  Sanity floor
                for the one-sided checks.
  j_tail        independent chains whose couplings differ by a factor
                >= 1, non-negative field; the stronger-coupling tail
                P[phi_o >= u] must not fall below the weaker one by more
                than the one-sided band anywhere on the grid.  The sign
                structure behind this comparison is distributional, not
                pathwise, so no coupling is attempted.
  zeta_product  chain marginals on a window versus the shifted
                truncated product measure with per-site shifts from the
                quadratic-framework constants; empirical upper
                quantiles must sit below the product quantiles.

Bands use effective sample sizes from batch means, not raw counts;
autocorrelated chains would otherwise overclaim resolution.
"""

from __future__ import annotations

import math

import numpy as np

from . import common as cm
from .. import boundary as bd
from .. import graphs as gr
from .. import sampler as sp
from .. import stats as stt
from .. import measures as ms


def _chain_samples(graph, measure, beta, region, xi, mc, seed_child,
                   sites):
    model = sp.make_model(graph, measure, beta, region=region, boundary=xi)
    rng = np.random.Generator(np.random.PCG64(seed_child))
    res = sp.run_chain(model, sweeps=mc["sweeps"], rng=rng,
                       record_sites=sites, burn=mc["burn"],
                       thin=mc["thin"])
    return res.samples


def _ess(xs: np.ndarray) -> float:
    return stt.batch_means(xs).ess


def _require_nonneg(graph, region, xi):
    outside = sorted(set(range(graph.n)) - set(int(v)
                                               for v in region.vertices))
    for z in outside:
        if xi.value(int(z)) < 0.0:
            raise cm.SchemaError(
                "coupling-monotonicity tail check needs a non-negative "
                f"field; vertex {z} carries {xi.value(int(z)):.3g}")


def _scaled_graph_spec(gspec: dict, factor: float) -> dict:
    out = dict(gspec)
    inter = dict(out.get("interactions",
                         {"kind": "nearest_neighbour", "scale": 1.0}))
    inter["scale"] = float(inter.get("scale", 1.0)) * factor
    out["interactions"] = inter
    return out


def _check_xi_pathwise(cfg, spec, seed_child):
    g = cm.build_graph_spec(cfg["graph"])
    lo = cm.build_boundary_spec(g, spec["xi_lo"])
    hi = cm.build_boundary_spec(g, spec["xi_hi"])
    vol = cm.centered_volumes(g, [int(cfg["radius"])])[0]
    measure = ms.make_measure(cfg["measure"])
    m_lo = sp.make_model(g, measure, cfg["beta"], region=vol, boundary=lo)
    m_hi = sp.make_model(g, measure, cfg["beta"], region=vol, boundary=hi)
    rng = np.random.Generator(np.random.PCG64(seed_child))
    mc = cfg["mc"]
    res = sp.coupled_run(m_lo, m_hi, sweeps=mc["sweeps"], rng=rng,
                         burn=mc["burn"])
    return cm.Verdict(
        name=spec.get("name", "xi_pathwise"),
        passed=(res.violations == 0),
        tolerance="exactly zero pathwise order violations",
        details={"violations": res.violations,
                 "comparisons": res.comparisons,
                 "max_violation": res.max_violation})


def _check_xi_equal(cfg, spec, seed_child):
    g = cm.build_graph_spec(cfg["graph"])
    xi = cm.build_boundary_spec(g, spec["xi"])
    vol = cm.centered_volumes(g, [int(cfg["radius"])])[0]
    measure = ms.make_measure(cfg["measure"])
    mc = cfg["mc"]
    seqs = seed_child.spawn(2)
    a = _chain_samples(g, measure, cfg["beta"], vol, xi, mc, seqs[0],
                       [g.origin])[:, 0]
    b = _chain_samples(g, measure, cfg["beta"], vol, xi, mc, seqs[1],
                       [g.origin])[:, 0]
    alpha = float(spec.get("alpha", 0.01))
    band = stt.dkw_epsilon(int(_ess(a)), alpha / 2) + \
        stt.dkw_epsilon(int(_ess(b)), alpha / 2)
    grid = np.quantile(np.concatenate([a, b]),
                       np.linspace(0.02, 0.98, 49))
    fa = np.searchsorted(np.sort(a), grid, side="right") / len(a)
    fb = np.searchsorted(np.sort(b), grid, side="right") / len(b)
    gap = float(np.max(np.abs(fa - fb)))
    return cm.Verdict(
        name=spec.get("name", "xi_equal"),
        passed=bool(gap <= band),
        tolerance=f"two-sided CDF agreement within {band:.4f} "
                  f"(DKW at alpha={alpha})",
        details={"max_cdf_gap": gap, "band": band})


def _check_j_tail(cfg, spec, seed_child):
    factor = float(spec["scale_hi"])
    if factor < 1.0:
        raise cm.SchemaError("scale_hi must be >= 1")
    g_lo = cm.build_graph_spec(cfg["graph"])
    g_hi = cm.build_graph_spec(_scaled_graph_spec(cfg["graph"], factor))
    xi_lo = cm.build_boundary_spec(g_lo, spec["xi"])
    xi_hi = cm.build_boundary_spec(g_hi, spec["xi"])
    vol_lo = cm.centered_volumes(g_lo, [int(cfg["radius"])])[0]
    vol_hi = cm.centered_volumes(g_hi, [int(cfg["radius"])])[0]
    _require_nonneg(g_lo, vol_lo, xi_lo)
    measure = ms.make_measure(cfg["measure"])
    mc = cfg["mc"]
    seqs = seed_child.spawn(2)
    lo = _chain_samples(g_lo, measure, cfg["beta"], vol_lo, xi_lo, mc,
                        seqs[0], [g_lo.origin])[:, 0]
    hi = _chain_samples(g_hi, measure, cfg["beta"], vol_hi, xi_hi, mc,
                        seqs[1], [g_hi.origin])[:, 0]
    alpha = float(spec.get("alpha", 0.01))
    band = stt.one_sided_dkw(int(_ess(lo)), alpha / 2) + \
        stt.one_sided_dkw(int(_ess(hi)), alpha / 2)
    grid = np.quantile(np.concatenate([lo, hi]),
                       np.linspace(0.02, 0.98, 49))
    tail_lo = 1.0 - np.searchsorted(np.sort(lo), grid,
                                    side="right") / len(lo)
    tail_hi = 1.0 - np.searchsorted(np.sort(hi), grid,
                                    side="right") / len(hi)
    deficit = float(np.max(tail_lo - tail_hi))
    return cm.Verdict(
        name=spec.get("name", f"j_tail_x{factor:g}"),
        passed=bool(deficit <= band),
        tolerance=(f"stronger-coupling tail never below the weaker by "
                   f"more than {band:.4f} (one-sided DKW, "
                   f"alpha={alpha})"),
        details={"max_tail_deficit": deficit, "band": band,
                 "scale_factor": factor})


def _check_zeta_product(cfg, spec, seed_child):
    cm.check_fields(spec["budget"], "checks[].budget",
                    {"a": cm.REAL, "n": cm.REAL})
    if float(spec["budget"]["n"]) != 2.0:
        raise cm.SchemaError(
            "the shifted-product comparison lives in the quadratic "
            "framework; budget n must be 2")
    g = cm.build_graph_spec(cfg["graph"])
    xi = cm.build_boundary_spec(g, spec["xi"])
    vol = cm.centered_volumes(g, [int(cfg["radius"])])[0]
    measure = ms.make_measure(cfg["measure"])
    a = float(spec["budget"]["a"])
    rc = bd.regularity_constants(measure, g, float(cfg["beta"]), a, 2.0)
    prof = bd.compute_A(g, vol, xi, rc.C, 2.0, lam=rc.lam_max)
    window = cm.centered_volumes(g, [int(spec.get("window_radius", 0))])[0] \
        if int(spec.get("window_radius", 0)) > 0 else None
    sites = list(window.vertices) if window is not None else [g.origin]
    mc = cfg["mc"]
    samples = _chain_samples(g, measure, cfg["beta"], vol, xi, mc,
                             seed_child, sites)
    levels = [float(p) for p in spec.get("levels", [0.9, 0.99])]
    se_rule = float(spec.get("se_rule", 3.0))
    rows, worst = [], 0
    for k, x in enumerate(sites):
        B_x = bd.domination_shift(rc, prof.value(int(x)))
        zeta = ms.shift_truncate(measure, a / 2.0, B_x, n=2.0)
        xs = samples[:, k]
        for p in levels:
            emp, se = stt.batch_quantile_se(xs, p)
            ref = zeta.quantile(p)
            ok = emp <= ref + se_rule * se
            worst += 0 if ok else 1
            rows.append({"site": int(x), "level": p, "empirical": emp,
                         "se": se, "product_quantile": ref, "B_x": B_x,
                         "within": bool(ok)})
    return cm.Verdict(
        name=spec.get("name", "zeta_product"),
        passed=(worst == 0),
        tolerance=(f"empirical upper quantiles <= shifted-product "
                   f"quantiles + {se_rule} SE"),
        details={"comparisons": rows, "violations": worst})


_CHECKS = {"xi_pathwise": (_check_xi_pathwise,
                           {"xi_lo": dict, "xi_hi": dict}),
           "xi_equal": (_check_xi_equal, {"xi": dict}),
           "j_tail": (_check_j_tail, {"scale_hi": cm.REAL, "xi": dict}),
           "zeta_product": (_check_zeta_product,
                            {"xi": dict, "budget": dict})}


def run(cfg: dict) -> dict:
    cm.check_fields(cfg, "config",
                    {"experiment": str, "graph": dict, "measure": dict,
                     "beta": cm.REAL, "radius": int, "checks": list,
                     "mc": dict, "seed": int},
                    {"label": str, "out": dict})
    cm.check_mc(cfg["mc"])
    if not cfg["checks"]:
        raise cm.SchemaError("checks list is empty")
    specs = []
    for spec in cfg["checks"]:
        if not isinstance(spec, dict) or "type" not in spec:
            raise cm.SchemaError("each check needs a 'type' field")
        kind = spec["type"]
        if kind not in _CHECKS:
            raise cm.SchemaError(f"unknown check type {kind!r}")
        fn, req = _CHECKS[kind]
        cm.check_fields(spec, f"checks[{kind}]",
                        dict(req, type=str),
                        {"name": str, "alpha": cm.REAL, "levels": list,
                         "se_rule": cm.REAL, "window_radius": int})
        specs.append((fn, spec))
    seq = np.random.SeedSequence(cfg["seed"])
    children = seq.spawn(len(specs))
    verdicts = [fn(cfg, spec, child)
                for (fn, spec), child in zip(specs, children)]
    return cm.assemble_report(cfg, verdicts, {
        "checks": [v.name for v in verdicts]})
