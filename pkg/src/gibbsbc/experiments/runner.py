"""Experiment dispatch, report output, and the manifest runner."""

from __future__ import annotations

import json
import os
import traceback

from . import common as cm
from . import tightness, cascade, regularity, domination, plus_measure, \
    pseudo_critical
from .. import stats as stt

REGISTRY = {
    "tightness": tightness.run,
    "cascade": cascade.run,
    "regularity": regularity.run,
    "domination": domination.run,
    "plus_measure": plus_measure.run,
    "pseudo_critical": pseudo_critical.run,
}


def run_experiment(cfg: dict) -> dict:
    if not isinstance(cfg, dict) or "experiment" not in cfg:
        raise cm.SchemaError("config must be an object with an "
                             "'experiment' field")
    name = cfg["experiment"]
    if name not in REGISTRY:
        raise cm.SchemaError(
            f"unknown experiment {name!r}; known: {sorted(REGISTRY)}")
    return REGISTRY[name](cfg)


def save_outputs(report: dict, out_dir: str, stem: str) -> list[str]:
    """Write the JSON report plus one CSV per tabular observable."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    path = os.path.join(out_dir, f"{stem}.json")
    cm.write_report(report, path)
    written.append(path)
    for key, val in report.get("observables", {}).items():
        if (isinstance(val, list) and val
                and all(isinstance(r, dict) for r in val)):
            cpath = os.path.join(out_dir, f"{stem}_{key}.csv")
            cm.write_csv(val, cpath)
            written.append(cpath)
    return written


def run_all(manifest_path: str, out_dir: str | None = None) -> int:
    """Run every config in the manifest; 0 exit iff all verdicts pass."""
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    cm.check_fields(manifest, "manifest", {"configs": list},
                    {"out_dir": str})
    base = os.path.dirname(os.path.abspath(manifest_path))
    out_dir = out_dir or manifest.get("out_dir") or os.path.join(
        base, "reports")
    summary, ok = [], True
    for rel in manifest["configs"]:
        cpath = rel if os.path.isabs(rel) else os.path.join(base, rel)
        stem = os.path.splitext(os.path.basename(cpath))[0]
        row = {"config": rel, "experiment": None, "status": None,
               "detail": ""}
        try:
            cfg = cm.load_config(cpath)
            row["experiment"] = cfg.get("experiment")
            report = run_experiment(cfg)
            save_outputs(report, out_dir, stem)
            row["status"] = "pass" if report["passed"] else "fail"
            if not report["passed"]:
                failing = [v["name"] for v in report["verdicts"]
                           if not v["passed"]]
                row["detail"] = "failed: " + ", ".join(failing)
                ok = False
        except Exception as exc:  # noqa: BLE001 - isolation is the point
            row["status"] = "error"
            row["detail"] = f"{type(exc).__name__}: {exc}"
            row["trace"] = traceback.format_exc(limit=4)
            ok = False
        summary.append(row)
    os.makedirs(out_dir, exist_ok=True)
    spath = os.path.join(out_dir, "summary.json")
    with open(spath, "w") as fh:
        fh.write(stt.canonical_json({"manifest": manifest_path,
                                     "results": summary,
                                     "all_passed": ok}))
    return 0 if ok else 1
