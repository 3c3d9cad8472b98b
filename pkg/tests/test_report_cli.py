from __future__ import annotations

import json
import subprocess
import sys
import threading
from http.server import ThreadingHTTPServer
from pathlib import Path

import jsonschema
import pytest

from crossaudit.cli import main
from crossaudit.errors import ConfigError
from crossaudit.report import load_config, run_pipeline

from .conftest import FIXTURES
from .test_ingest import _StubHandler

CONFIG = FIXTURES / "config.json"
CONFIG_MINIMAL = FIXTURES / "config_minimal.json"
GOLDEN = FIXTURES / "golden"


def load_schema() -> dict:
    from importlib.resources import files

    return json.loads(
        (files("crossaudit") / "schemas" / "report.schema.json").read_text()
    )


class TestLoadConfig:
    def test_full_fixture_config(self, tmp_path):
        config = load_config(CONFIG, output_dir_override=str(tmp_path / "o"))
        assert config.cutoff_m == 500.0
        assert config.radii_m[0] == 1.0 and config.radii_m[-1] == 500.0
        assert config.focus_category.name == "HWC"
        assert config.regions_path and config.regions_path.is_absolute()

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_config("/nonexistent/config.json")

    def test_needs_endpoint_or_snapshots(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"output_dir": "out"}))
        with pytest.raises(ConfigError):
            load_config(path)

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(
            json.dumps(
                {"output_dir": "out", "snapshot_paths": ["x.json"], "typo_key": 1}
            )
        )
        with pytest.raises(ConfigError):
            load_config(path)

    def test_radii_beyond_cutoff_rejected(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(
            json.dumps(
                {
                    "output_dir": "out",
                    "snapshot_paths": ["x.json"],
                    "cutoff_m": 100,
                    "radii_m": [50, 150],
                }
            )
        )
        with pytest.raises(ConfigError):
            load_config(path)

    def test_env_endpoint_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CROSSAUDIT_OVERPASS_ENDPOINT", "http://example.test")
        path = tmp_path / "c.json"
        path.write_text(
            json.dumps({"output_dir": "out", "overpass_endpoint": "http://config.test"})
        )
        config = load_config(path)
        assert config.overpass_endpoint == "http://example.test"


class TestMinimalRun:
    def test_sections_marked_skipped(self, tmp_path):
        config = load_config(CONFIG_MINIMAL, output_dir_override=str(tmp_path))
        report = run_pipeline(config)
        assert report.sections["matching"] == {
            "skipped": "no references_path configured"
        }
        assert report.sections["fitting"] == {
            "skipped": "no region carries census data"
        }
        assert report.sections["text"] == {"skipped": "no text inputs configured"}
        assert "counts" in report.sections
        assert report.sections["quality"]["age"]["groups"]
        assert "skipped_sections" in report.diagnostics


@pytest.fixture(scope="module")
def report(tmp_path_factory):
    out = tmp_path_factory.mktemp("full_run")
    config = load_config(CONFIG, output_dir_override=str(out))
    return run_pipeline(config)


class TestFullRun:
    def test_counts_hand_verified(self, report):
        counts = report.sections["counts"]
        hwc = counts["per_category"]["HWC"]
        # 41 in-region + 2 outside nodes, plus one way and one relation
        assert hwc == {
            "elements": 45,
            "nodes": 43,
            "non_node_share": pytest.approx(2 / 45),
        }

    def test_contamination_dual_tag(self, report):
        matrix = report.sections["contamination"]["matrix"]
        # a single dual MMC+SMY node over two members each
        assert matrix["MMC"]["SMY"] == 0.5
        assert matrix["SMY"]["MMC"] == 0.5
        assert matrix["MMC"]["MMC"] is None

    def test_matching_counts(self, report):
        matching = report.sections["matching"]
        assert matching["n_references"] == 27
        assert matching["skipped_no_location"] == 1
        assert matching["excluded_classification"] == 2
        assert sum(matching["bins"]["shares"]) == pytest.approx(1.0, abs=1e-12)

    def test_fit_present_and_sane(self, report):
        fit = report.sections["fitting"]["fit"]
        assert fit["converged"] is True
        # fixture densities were drawn around a midpoint near 45
        assert 35.0 <= fit["x0"] <= 55.0
        assert fit["a"] >= 0.0

    def test_text_anomalies_counted(self, report):
        inscription = report.sections["text"]["keys"]["inscription"]
        assert inscription["overlong_excluded"] == 1
        assert inscription["suffix_key_elements"] == 1
        assert inscription["length"]["overlong_count"] == 1

    def test_comparison_section(self, report):
        comparison = report.sections["comparison"]
        assert comparison["label"] == "post_box"
        assert comparison["n_nodes"] == 15

    def test_diagnostics_collect_all_anomalies(self, report):
        diag = report.diagnostics
        assert diag["rejects"]["osm_elements"] == 1
        assert diag["rejects"]["census_rows"] == 1
        assert diag["duplicate_elements"] == 1
        assert diag["late_timestamps"] == 1
        assert diag["unassigned_focus_nodes"] == 2

    def test_report_validates_against_schema(self, report):
        doc = json.loads(report.to_json())
        jsonschema.validate(doc, load_schema())


class TestCliGolden:
    def test_report_matches_golden_byte_for_byte(self, tmp_path):
        code = main(
            ["report", "--config", str(CONFIG), "--out", str(tmp_path / "out")]
        )
        assert code == 4  # fixture deliberately contains rejectable records
        got = (tmp_path / "out" / "report.json").read_bytes()
        assert got == (GOLDEN / "report.json").read_bytes()

    @pytest.mark.parametrize(
        "name", ["matches.csv", "match_bins.csv", "contamination_matrix.csv"]
    )
    def test_csv_matches_golden(self, tmp_path, name):
        main(["report", "--config", str(CONFIG), "--out", str(tmp_path / "out")])
        assert (tmp_path / "out" / name).read_bytes() == (GOLDEN / name).read_bytes()

    def test_two_runs_byte_identical(self, tmp_path):
        main(["report", "--config", str(CONFIG), "--out", str(tmp_path / "a")])
        main(["report", "--config", str(CONFIG), "--out", str(tmp_path / "b")])
        assert (tmp_path / "a" / "report.json").read_bytes() == (
            tmp_path / "b" / "report.json"
        ).read_bytes()
        assert (tmp_path / "a" / "diagnostics.json").read_bytes() == (
            tmp_path / "b" / "diagnostics.json"
        ).read_bytes()

    def test_minimal_exit_code_partial(self, tmp_path):
        code = main(
            ["report", "--config", str(CONFIG_MINIMAL), "--out", str(tmp_path / "o")]
        )
        assert code == 4

    def test_clean_run_exits_zero(self, tmp_path):
        # complete, anomaly-free inputs: every section computes, so the
        # diagnostics stay empty and the exit code is 0
        snapshot = {
            "osm3s": {"timestamp_osm_base": "2023-05-23T00:00:00Z"},
            "elements": [
                {
                    "type": "node",
                    "id": i,
                    "lat": 48.1 + i * 0.01,
                    "lon": 11.5,
                    "timestamp": "2020-01-01T00:00:00Z",
                    "version": 1,
                    "user": "a",
                    "uid": 1,
                    "tags": {"historic": "wayside_cross", "name": "Wegkreuz"},
                }
                for i in range(1, 4)
            ],
        }
        (tmp_path / "snap.json").write_text(json.dumps(snapshot))
        region = {
            "type": "FeatureCollection",
            "features": [
                {
                    "type": "Feature",
                    "properties": {
                        "region_id": "R1",
                        "name": "Testgau",
                        "level": "county",
                        "area_km2": 100.0,
                        "catholic_share": 0.5,
                        "protestant_share": 0.2,
                    },
                    "geometry": {
                        "type": "Polygon",
                        "coordinates": [[[11, 48], [12, 48], [12, 49], [11, 49], [11, 48]]],
                    },
                }
            ],
        }
        (tmp_path / "regions.geojson").write_text(json.dumps(region))
        refs = {
            "type": "FeatureCollection",
            "features": [
                {
                    "type": "Feature",
                    "properties": {"ref_id": "A", "classification": "clearly_cross"},
                    "geometry": {"type": "Point", "coordinates": [11.5, 48.11]},
                },
                {
                    "type": "Feature",
                    "properties": {"ref_id": "B", "classification": "clearly_cross"},
                    "geometry": {"type": "Point", "coordinates": [11.5, 48.12]},
                },
            ],
        }
        (tmp_path / "refs.geojson").write_text(json.dumps(refs))
        (tmp_path / "lexicon.csv").write_text("kreuze;Kreuz\n")
        config = {
            "output_dir": "out",
            "snapshot_paths": ["snap.json"],
            "regions_path": "regions.geojson",
            "references_path": "refs.geojson",
            "lexicon_path": "lexicon.csv",
            "field_density": {"d_lo": 0.01, "d_hi": 0.05, "area_km2": 100.0},
        }
        (tmp_path / "c.json").write_text(json.dumps(config))
        code = main(["report", "--config", str(tmp_path / "c.json")])
        assert code == 0
        doc = json.loads((tmp_path / "out" / "report.json").read_text())
        assert doc["diagnostics"] == {}

    def test_config_error_exit(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"output_dir": "out"}))
        assert main(["report", "--config", str(tmp_path / "c.json")]) == 1

    def test_missing_config_exit(self):
        assert main(["report", "--config", "/nope/missing.json"]) == 1

    def test_parse_error_exit(self, tmp_path):
        (tmp_path / "broken.json").write_text("{not json")
        config = {"output_dir": "out", "snapshot_paths": ["broken.json"]}
        (tmp_path / "c.json").write_text(json.dumps(config))
        assert main(["report", "--config", str(tmp_path / "c.json")]) == 2

    def test_missing_snapshot_exit(self, tmp_path):
        config = {"output_dir": "out", "snapshot_paths": ["absent.json"]}
        (tmp_path / "c.json").write_text(json.dumps(config))
        assert main(["report", "--config", str(tmp_path / "c.json")]) == 2


class TestSubcommands:
    def test_analyze_writes_section_file(self, tmp_path):
        code = main(
            ["analyze", "--config", str(CONFIG), "--out", str(tmp_path / "out")]
        )
        assert code == 4
        doc = json.loads((tmp_path / "out" / "quality.json").read_text())
        assert "counts" in doc and "contamination" in doc and "quality" in doc
        assert (tmp_path / "out" / "age_stats.csv").exists()

    def test_match_subcommand(self, tmp_path):
        main(["match", "--config", str(CONFIG), "--out", str(tmp_path / "out")])
        doc = json.loads((tmp_path / "out" / "matching.json").read_text())
        assert doc["matching"]["n_references"] == 27
        assert (tmp_path / "out" / "matches.csv").exists()

    def test_fit_subcommand(self, tmp_path):
        main(["fit", "--config", str(CONFIG), "--out", str(tmp_path / "out")])
        doc = json.loads((tmp_path / "out" / "fitting.json").read_text())
        assert doc["fitting"]["fit"]["converged"] is True

    def test_estimate_subcommand(self, tmp_path):
        main(["estimate", "--config", str(CONFIG), "--out", str(tmp_path / "out")])
        doc = json.loads((tmp_path / "out" / "estimates.json").read_text())
        assert "total" in doc["estimates"]["efficiency"]

    def test_text_subcommand(self, tmp_path):
        main(["text", "--config", str(CONFIG), "--out", str(tmp_path / "out")])
        doc = json.loads((tmp_path / "out" / "text.json").read_text())
        assert "inscription" in doc["text"]["keys"]

    def test_console_entry_point(self, tmp_path):
        result = subprocess.run(
            [
                sys.executable,
                "-m",
                "crossaudit.cli",
                "report",
                "--config",
                str(CONFIG),
                "--out",
                str(tmp_path / "out"),
            ],
            capture_output=True,
            text=True,
        )
        assert result.returncode == 4
        assert (tmp_path / "out" / "report.json").exists()


class TestFetchCli:
    @pytest.fixture
    def stub_server(self):
        server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        _StubHandler.statuses = []
        _StubHandler.requests_seen = 0
        yield f"http://127.0.0.1:{server.server_port}"
        server.shutdown()

    def test_fetch_writes_snapshots(self, tmp_path, stub_server):
        config = {
            "output_dir": "out",
            "overpass_endpoint": stub_server,
            "fetch_area_code": "DE-BY",
            "categories": ["HWC", "SMY"],
        }
        (tmp_path / "c.json").write_text(json.dumps(config))
        code = main(["fetch", "--config", str(tmp_path / "c.json")])
        assert code == 0
        assert (tmp_path / "out" / "snapshot_hwc.json").exists()
        assert (tmp_path / "out" / "snapshot_smy.json").exists()
        assert _StubHandler.requests_seen == 2

    def test_fetch_without_area_code(self, tmp_path, stub_server):
        config = {"output_dir": "out", "overpass_endpoint": stub_server}
        (tmp_path / "c.json").write_text(json.dumps(config))
        assert main(["fetch", "--config", str(tmp_path / "c.json")]) == 1

    def test_fetch_network_error_exit(self, tmp_path):
        import socket

        probe = socket.socket()
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
        probe.close()
        config = {
            "output_dir": "out",
            "overpass_endpoint": f"http://127.0.0.1:{port}",
            "fetch_area_code": "DE-BY",
            "retries": 0,
        }
        (tmp_path / "c.json").write_text(json.dumps(config))
        assert main(["fetch", "--config", str(tmp_path / "c.json")]) == 3
