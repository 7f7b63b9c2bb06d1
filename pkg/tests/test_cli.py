"""End-to-end runs of every subcommand against temp files."""

import csv
import json
import math

import pytest

from gibbsbc.cli import main


def run_cli(*argv):
    return main([str(a) for a in argv])


class TestAnalyzeBc:
    def test_profile_csv_columns(self, tmp_path):
        out = tmp_path / "prof.csv"
        rc = run_cli("analyze-bc", "--graph", "path:9",
                     "--region", "ball:2",
                     "--xi", "double_exponential:K=1.5,n=4",
                     "--C", "1.0", "--n", "4", "--out", out)
        assert rc == 0
        rows = list(csv.DictReader(open(out)))
        assert list(rows[0]) == ["vertex", "logA", "logAtilde"]
        assert len(rows) == 5
        # the raw-field profile can only exceed the exterior-sum one
        for r in rows:
            assert float(r["logAtilde"]) >= float(r["logA"]) - 1e-9

    def test_quadratic_needs_lambda(self, tmp_path):
        rc = run_cli("analyze-bc", "--graph", "path:9",
                     "--region", "ball:2",
                     "--xi", "constant:K=1", "--C", "1.0", "--n", "2",
                     "--out", tmp_path / "p.csv")
        assert rc == 2

    def test_vertex_list_region(self, tmp_path):
        out = tmp_path / "prof.csv"
        rc = run_cli("analyze-bc", "--graph", "path:9",
                     "--region", "vertices:3,4,5",
                     "--xi", "constant:K=2.0",
                     "--C", "1.0", "--n", "3", "--out", out)
        assert rc == 0
        rows = list(csv.DictReader(open(out)))
        assert [int(r["vertex"]) for r in rows] == [3, 4, 5]

    def test_bad_region_spec(self, tmp_path):
        rc = run_cli("analyze-bc", "--graph", "path:9",
                     "--region", "blob:2", "--xi", "constant:K=1",
                     "--C", "1.0", "--n", "4",
                     "--out", tmp_path / "p.csv")
        assert rc == 2


class TestSample:
    def test_stats_json_shape(self, tmp_path):
        cfg = {"graph": "path:9",
               "measure": {"kind": "gaussian", "a": 0.5},
               "beta": 0.4, "region": {"radius": 2},
               "boundary": {"family": "constant", "K": 1.0},
               "record": [3, 4]}
        cfg_path = tmp_path / "chain.json"
        cfg_path.write_text(json.dumps(cfg))
        out = tmp_path / "stats.json"
        rc = run_cli("sample", "--config", cfg_path, "--seed", 7,
                     "--sweeps", 300, "--burn-in", 50, "--out", out)
        assert rc == 0
        stats = json.load(open(out))["observables"]
        assert set(stats) == {"site_3", "site_4"}
        for rec in stats.values():
            assert set(rec) == {"mean", "stderr", "ess", "histogram"}
            h = rec["histogram"]
            assert len(h["edges"]) == len(h["counts"]) + 1
            assert sum(h["counts"]) == 250

    def test_missing_config_file(self, tmp_path):
        rc = run_cli("sample", "--config", tmp_path / "none.json",
                     "--seed", 1, "--sweeps", 10, "--burn-in", 2,
                     "--out", tmp_path / "s.json")
        assert rc == 2


class TestExplore:
    def test_cluster_csv(self, tmp_path):
        cfg = {"graph": "box:2x7",
               "measure": {"kind": "pure_tail", "a_tilde": 1.0, "n": 4},
               "budget": {"a": 1.0, "n": 4}, "C": 1.0, "seed": 5,
               "region_prime": {"radius": 1}}
        cfg_path = tmp_path / "ex.json"
        cfg_path.write_text(json.dumps(cfg))
        out = tmp_path / "runs.csv"
        rc = run_cli("explore", "--config", cfg_path, "--runs", 40,
                     "--out", out)
        assert rc == 0
        rows = list(csv.DictReader(open(out)))
        assert list(rows[0]) == ["run", "cluster_size", "generations"]
        assert len(rows) == 40
        for r in rows:
            size, gens = int(r["cluster_size"]), int(r["generations"])
            assert size >= 0 and gens >= 0
            assert (size == 0) == (gens == 0)


class TestProgeny:
    def test_pmf_matches_closed_form_head(self, tmp_path):
        out = tmp_path / "pmf.csv"
        rc = run_cli("progeny", "--b", 0.7, "--k", 1, "--nmax", 6,
                     "--out", out)
        assert rc == 0
        rows = {int(r["n"]): float(r["pmf"])
                for r in csv.DictReader(open(out))}
        assert rows[0] == 0.0
        assert rows[1] == pytest.approx(0.7, rel=1e-15)
        b = 0.7
        p1 = (1 - b) * (2 * b - 1) / b
        assert rows[2] == pytest.approx(b * p1, rel=1e-12)

    def test_b_range_enforced(self, tmp_path):
        rc = run_cli("progeny", "--b", 0.2, "--k", 1, "--nmax", 5,
                     "--out", tmp_path / "p.csv")
        assert rc == 2


class TestExperimentCommand:
    def tiny_cfg(self, tmp_path):
        cfg = {"experiment": "tightness",
               "graph": {"builder": "path", "L": 13},
               "measure": {"kind": "pure_tail", "a_tilde": 1.0, "n": 4},
               "beta": 0.5,
               "boundary": {"family": "constant", "K": 1.0},
               "volumes": {"radii": [1, 2, 3]},
               "mc": {"sweeps": 120, "burn": 20, "thin": 1,
                      "replicas": 2},
               "seed": 4242}
        path = tmp_path / "tiny.json"
        path.write_text(json.dumps(cfg))
        return path

    def test_writes_report_next_to_config(self, tmp_path):
        cfg_path = self.tiny_cfg(tmp_path)
        rc = run_cli("experiment", "tightness", "--config", cfg_path,
                     "--out", tmp_path / "reports")
        report = json.load(open(tmp_path / "reports" / "tiny.json"))
        assert (rc == 0) == report["passed"]
        assert report["experiment"] == "tightness"

    def test_name_mismatch_rejected(self, tmp_path):
        cfg_path = self.tiny_cfg(tmp_path)
        rc = run_cli("experiment", "cascade", "--config", cfg_path,
                     "--out", tmp_path / "reports")
        assert rc == 2


class TestRunAll:
    def test_manifest_roundtrip(self, tmp_path):
        cfg = {"experiment": "pseudo_critical",
               "graph": {"builder": "path", "L": 9},
               "measure": {"kind": "gaussian", "a": 1.0},
               "radius": 2,
               "betas": [0.1, 0.2, 0.3, 0.4],
               "shipped_betas": [0.1],
               "mc": {"sweeps": 100, "burn": 20, "thin": 1,
                      "replicas": 1},
               "seed": 3}
        (tmp_path / "scan.json").write_text(json.dumps(cfg))
        (tmp_path / "manifest.json").write_text(
            json.dumps({"configs": ["scan.json"]}))
        rc = run_cli("run-all", "--manifest", tmp_path / "manifest.json",
                     "--out", tmp_path / "reports")
        summary = json.load(open(tmp_path / "reports" / "summary.json"))
        assert {r["status"] for r in summary["results"]} <= \
            {"pass", "fail"}
        assert (rc == 0) == summary["all_passed"]


class TestShippedConfigs:
    def test_all_parse_and_dispatch(self):
        import os
        from gibbsbc.experiments import common as cm, runner
        base = os.path.join(os.path.dirname(__file__), "..", "configs")
        manifest = json.load(open(os.path.join(base, "manifest.json")))
        for name in manifest["configs"]:
            cfg = cm.load_config(os.path.join(base, name))
            assert cfg["experiment"] in runner.REGISTRY
