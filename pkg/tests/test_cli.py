import csv
import filecmp
import json
from pathlib import Path

import pytest

from homedetect.cli import EXIT_INPUT, EXIT_OK, EXIT_USAGE, RunConfig, load_home_table, main


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synthrun")
    rc = main(["synth", "--out-dir", str(out), "--agents", "12", "--nights", "6", "--seed", "11"])
    assert rc == EXIT_OK
    return out


def test_synth_outputs(synth_dir):
    for name in ("trace.csv", "truth.csv", "landuse.geojson", "zones.geojson", "synth_manifest.json"):
        assert (synth_dir / name).exists()
    manifest = json.loads((synth_dir / "synth_manifest.json").read_text())
    assert manifest["n_agents"] == 12
    assert manifest["n_pings"] > 0


def test_synth_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        rc = main(["synth", "--out-dir", str(d), "--agents", "5", "--nights", "3", "--seed", "2"])
        assert rc == EXIT_OK
    assert filecmp.cmp(a / "trace.csv", b / "trace.csv", shallow=False)
    assert filecmp.cmp(a / "truth.csv", b / "truth.csv", shallow=False)


def test_detect_writes_tables_and_manifest(synth_dir, tmp_path):
    out = tmp_path / "det"
    rc = main(["detect", "--trace", str(synth_dir / "trace.csv"), "--out-dir", str(out)])
    assert rc == EXIT_OK
    for alg in ("a1", "a2", "a3", "a4", "a5"):
        table = load_home_table(out / f"homes_{alg}.csv")
        assert len(table) == 12
        assert all(h.algorithm == alg for h in table.values())
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["n_users"] == 12
    assert manifest["rows_skipped"] == 0
    assert "threads" not in manifest["config"]
    assert manifest["config_hash"]


def test_detect_algorithm_subset(synth_dir, tmp_path):
    out = tmp_path / "subset"
    rc = main(
        ["detect", "--trace", str(synth_dir / "trace.csv"), "--out-dir", str(out), "--algorithms", "a2,a4"]
    )
    assert rc == EXIT_OK
    assert sorted(p.name for p in out.glob("homes_*.csv")) == ["homes_a2.csv", "homes_a4.csv"]


def test_detect_survives_corrupt_rows(synth_dir, tmp_path):
    mangled = tmp_path / "mangled.csv"
    rows = (synth_dir / "trace.csv").read_text().splitlines()
    rows.insert(len(rows) // 2, "garbage,row")
    rows.insert(2, "u0,xx,yy,zz,5")
    mangled.write_text("\n".join(rows) + "\n")
    out = tmp_path / "det"
    rc = main(["detect", "--trace", str(mangled), "--out-dir", str(out)])
    assert rc == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["rows_skipped"] == 2


def test_detect_missing_input_exits_2(tmp_path):
    rc = main(["detect", "--trace", str(tmp_path / "nope.csv"), "--out-dir", str(tmp_path / "o")])
    assert rc == EXIT_INPUT


def test_usage_error_exits_1():
    with pytest.raises(SystemExit) as exc:
        main(["definitely-not-a-command"])
    assert exc.value.code == EXIT_USAGE


def test_bad_night_window_flag_exits_1(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["detect", "--trace", "x.csv", "--night-window", "late-early"])
    assert exc.value.code == EXIT_USAGE


def test_internal_error_exits_3(synth_dir, tmp_path, monkeypatch):
    import homedetect.cli as cli_mod

    monkeypatch.setattr(cli_mod, "cmd_detect", lambda cfg: (_ for _ in ()).throw(RuntimeError("boom")))
    rc = main(["detect", "--trace", str(synth_dir / "trace.csv"), "--out-dir", str(tmp_path)])
    assert rc == 3


def test_detect_removes_partial_outputs_on_write_failure(synth_dir, tmp_path, monkeypatch):
    import homedetect.cli as cli_mod

    def boom(path, doc):
        raise OSError("disk full")

    monkeypatch.setattr(cli_mod, "_write_json", boom)
    out = tmp_path / "partial"
    rc = main(["detect", "--trace", str(synth_dir / "trace.csv"), "--out-dir", str(out)])
    assert rc == EXIT_INPUT
    assert list(out.glob("homes_*.csv")) == []


def test_evaluate_full_metrics(synth_dir, tmp_path):
    out = tmp_path / "ev"
    rc = main(["detect", "--trace", str(synth_dir / "trace.csv"), "--out-dir", str(out)])
    assert rc == EXIT_OK
    rc = main(
        [
            "evaluate",
            "--trace", str(synth_dir / "trace.csv"),
            "--out-dir", str(out),
            "--landuse", str(synth_dir / "landuse.geojson"),
        ]
    )
    assert rc == EXIT_OK
    report = json.loads((out / "metrics.json").read_text())
    assert report["n_common_users"] == 12
    assert 0.0 < report["baseline_m1"] < 1.0
    for alg, entry in report["algorithms"].items():
        for key in ("m1", "m2", "m3", "m_bar"):
            assert 0.0 <= entry[key] <= 1.0
        assert len(entry["rho"]) == 11
        assert report["baseline_m1"] < entry["m1"]
    with open(out / "metrics_radar.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["algorithm", "m1", "m2", "m3", "m_bar"]
    assert len(rows) == 6


def test_evaluate_m2_m3_only_needs_no_landuse(synth_dir, tmp_path):
    out = tmp_path / "ev23"
    main(["detect", "--trace", str(synth_dir / "trace.csv"), "--out-dir", str(out)])
    rc = main(
        ["evaluate", "--trace", str(synth_dir / "trace.csv"), "--out-dir", str(out), "--metrics", "m2,m3"]
    )
    assert rc == EXIT_OK
    report = json.loads((out / "metrics.json").read_text())
    assert report["baseline_m1"] is None
    assert report["algorithms"]["a4"]["m1"] is None
    assert report["algorithms"]["a4"]["m2"] is not None


def test_evaluate_m1_without_landuse_exits_2(synth_dir, tmp_path):
    out = tmp_path / "ev1"
    main(["detect", "--trace", str(synth_dir / "trace.csv"), "--out-dir", str(out)])
    rc = main(["evaluate", "--trace", str(synth_dir / "trace.csv"), "--out-dir", str(out)])
    assert rc == EXIT_INPUT


def test_evaluate_missing_home_tables_exits_2(synth_dir, tmp_path):
    rc = main(
        [
            "evaluate",
            "--trace", str(synth_dir / "trace.csv"),
            "--out-dir", str(tmp_path / "empty"),
            "--metrics", "m2",
        ]
    )
    assert rc == EXIT_INPUT


def test_sensitivity_rows(synth_dir, tmp_path):
    out = tmp_path / "sens"
    main(["detect", "--trace", str(synth_dir / "trace.csv"), "--out-dir", str(out)])
    rc = main(
        [
            "sensitivity",
            "--trace", str(synth_dir / "trace.csv"),
            "--out-dir", str(out),
            "--landuse", str(synth_dir / "landuse.geojson"),
            "--thresholds", "0,5,10,1000",
        ]
    )
    assert rc == EXIT_OK
    with open(out / "sensitivity.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:2] == ["algorithm", "threshold"]
    body = rows[1:]
    assert len(body) == 5 * 4  # five algorithms x four thresholds
    first = body[0]
    assert float(first[1]) == 0.0 and int(first[6]) == 12 and float(first[7]) == 0.0
    # a threshold above every user's quality must yield an absent row
    last = body[3]
    assert float(last[1]) == 1000.0 and int(last[6]) == 0 and last[2] == ""


def test_sensitivity_threshold_zero_matches_evaluate(synth_dir, tmp_path):
    out = tmp_path / "match"
    main(["detect", "--trace", str(synth_dir / "trace.csv"), "--out-dir", str(out)])
    landuse = str(synth_dir / "landuse.geojson")
    main(["evaluate", "--trace", str(synth_dir / "trace.csv"), "--out-dir", str(out), "--landuse", landuse])
    main(
        [
            "sensitivity",
            "--trace", str(synth_dir / "trace.csv"),
            "--out-dir", str(out),
            "--landuse", landuse,
            "--thresholds", "0",
        ]
    )
    report = json.loads((out / "metrics.json").read_text())
    with open(out / "sensitivity.csv") as fh:
        body = list(csv.reader(fh))[1:]
    for row in body:
        alg = row[0]
        assert float(row[2]) == report["algorithms"][alg]["m1"]
        assert float(row[3]) == report["algorithms"][alg]["m2"]
        assert float(row[4]) == report["algorithms"][alg]["m3"]
        assert float(row[5]) == report["algorithms"][alg]["m_bar"]


def test_apps_pipeline(synth_dir, tmp_path):
    pre_dir = tmp_path / "pre"
    main(["detect", "--trace", str(synth_dir / "trace.csv"), "--out-dir", str(pre_dir)])
    out = tmp_path / "apps"
    zones = str(synth_dir / "zones.geojson")
    homes = str(pre_dir / "homes_a4.csv")
    rc = main(["apps", "evac", "--pre", homes, "--post", homes, "--zones", zones,
               "--threshold-m", "1000", "--out-dir", str(out)])
    assert rc == EXIT_OK
    summary = json.loads((out / "evac_summary.json").read_text())
    assert summary["fraction_evacuated"] == 0.0
    with open(out / "evac_zones.csv") as fh:
        zrows = list(csv.reader(fh))[1:]
    assert all(float(r[3]) == 0.0 for r in zrows)

    rc = main(["apps", "consistency", "--a", homes, "--b", homes, "--zones", zones, "--out-dir", str(out)])
    assert rc == EXIT_OK
    cons = json.loads((out / "consistency.json").read_text())
    assert cons["fraction_same_zone"] == 1.0

    rc = main(["apps", "income", "--a", homes, "--b", homes, "--zones", zones, "--out-dir", str(out)])
    assert rc == EXIT_OK
    inc = json.loads((out / "income_summary.json").read_text())
    assert inc["off_diagonal_fraction"] == 0.0
    with open(out / "income_transitions.csv") as fh:
        irows = list(csv.reader(fh))[1:]
    assert len(irows) == 9


def test_config_file_with_overrides(synth_dir, tmp_path):
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps({"trace_path": str(synth_dir / "trace.csv"), "seed": 4}))
    out = tmp_path / "cfgout"
    rc = main(["detect", "--config", str(cfg_path), "--out-dir", str(out), "--algorithms", "a1"])
    assert rc == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 4
    assert manifest["config"]["algorithms"] == ["a1"]


def test_config_rejects_unknown_keys(tmp_path):
    cfg_path = tmp_path / "bad.json"
    cfg_path.write_text(json.dumps({"not_a_key": 1}))
    rc = main(["detect", "--config", str(cfg_path)])
    assert rc == EXIT_INPUT


def test_night_window_flag_parses(synth_dir, tmp_path):
    out = tmp_path / "nw"
    rc = main(
        [
            "detect",
            "--trace", str(synth_dir / "trace.csv"),
            "--out-dir", str(out),
            "--night-window", "21:30-04:00",
            "--algorithms", "a1",
        ]
    )
    assert rc == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["night_start_hour"] == 21.5
    assert manifest["config"]["night_end_hour"] == 4.0


def test_run_config_digest_ignores_threads_and_outdir():
    a = RunConfig(threads=1, out_dir="x", seed=3)
    b = RunConfig(threads=8, out_dir="y", seed=3)
    assert a.digest() == b.digest()
    assert a.digest() != RunConfig(seed=4).digest()
