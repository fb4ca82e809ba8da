import json

import numpy as np
import pytest

from pingerloc import read_recording, scenario_to_dict
from pingerloc.cli import EXIT_CONFIG, EXIT_NO_PING, EXIT_OK, main
from conftest import fast_scenario
from pingerloc import MultiChannelRecording, Vec3, write_recording


@pytest.fixture()
def scenario_path(tmp_path):
    scenario = fast_scenario(Vec3(10.0, 5.0, -2.0))
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(scenario_to_dict(scenario)))
    return path


def test_simulate_writes_readable_recording(scenario_path, tmp_path):
    out = tmp_path / "rec.oogw"
    assert main(["simulate", "--config", str(scenario_path), "--out", str(out)]) == EXIT_OK
    rec = read_recording(out)
    assert rec.channel_count == 8
    assert rec.sample_rate == 500_000.0


def test_localize_stream_and_determinism(scenario_path, tmp_path):
    out1, out2 = tmp_path / "r1.ndjson", tmp_path / "r2.ndjson"
    assert main(["localize", "--config", str(scenario_path), "--out", str(out1)]) == EXIT_OK
    assert main(["localize", "--config", str(scenario_path), "--out", str(out2)]) == EXIT_OK
    assert out1.read_bytes() == out2.read_bytes()
    lines = out1.read_text().strip().splitlines()
    assert len(lines) == 1
    doc = json.loads(lines[0])
    assert doc["converged"] is True
    assert 0.0 <= doc["azimuth"] < 360.0
    assert "timing" not in doc


def test_localize_from_recording_matches_render(scenario_path, tmp_path):
    rec_path = tmp_path / "rec.oogw"
    main(["simulate", "--config", str(scenario_path), "--out", str(rec_path)])
    from_render = tmp_path / "a.ndjson"
    from_file = tmp_path / "b.ndjson"
    main(["localize", "--config", str(scenario_path), "--out", str(from_render)])
    main(["localize", "--config", str(scenario_path), "--recording", str(rec_path),
          "--out", str(from_file)])
    assert from_render.read_bytes() == from_file.read_bytes()


def test_localize_timing_flag_adds_key(scenario_path, tmp_path, capsys):
    assert main(["localize", "--config", str(scenario_path), "--timing"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out.strip().splitlines()[0])
    assert "timing" in doc


def test_localize_debug_window(scenario_path, capsys):
    assert main(["localize", "--config", str(scenario_path), "--debug-window"]) == EXIT_OK
    err = capsys.readouterr().err
    assert "variance_scores" in err


def test_missing_pinger_field_is_config_error(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text(json.dumps({"sound_speed": 1480.0}))
    assert main(["localize", "--config", str(path)]) == EXIT_CONFIG
    assert "pinger" in capsys.readouterr().err


def test_no_ping_exit_code(scenario_path, tmp_path, capsys):
    silent = MultiChannelRecording(sample_rate=500_000.0,
                                   channels=np.zeros((8, 25_000), dtype=np.float32))
    rec_path = tmp_path / "silent.oogw"
    write_recording(silent, rec_path)
    code = main(["localize", "--config", str(scenario_path),
                 "--recording", str(rec_path)])
    assert code == EXIT_NO_PING
    assert "no ping" in capsys.readouterr().err


def test_validate_ok_and_violations(scenario_path, tmp_path, capsys):
    assert main(["validate", "--config", str(scenario_path)]) == EXIT_OK
    assert "array ok" in capsys.readouterr().out

    doc = json.loads(scenario_path.read_text())
    for point in doc["array"]["coarse"]:
        point["x"] = abs(point["x"]) + 0.1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    assert main(["validate", "--config", str(bad)]) == EXIT_CONFIG
    assert "does not span x-axis" in capsys.readouterr().out


def test_montecarlo_csv_and_summary(tmp_path, capsys):
    cfg = tmp_path / "eval.json"
    cfg.write_text(json.dumps({"ranges": [10.0], "snr_db": [None], "trials": 2, "seed": 5}))
    out = tmp_path / "mc.csv"
    assert main(["montecarlo", "--config", str(cfg), "--out", str(out), "--json"]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["trials"] == 2
    assert summary["success_fraction"] == 1.0
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 1 + 2 + 1


def test_montecarlo_determinism(tmp_path):
    cfg = tmp_path / "eval.json"
    cfg.write_text(json.dumps({"ranges": [8.0], "snr_db": [15.0], "trials": 2, "seed": 9}))
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["montecarlo", "--config", str(cfg), "--out", str(out1)]) == EXIT_OK
    assert main(["montecarlo", "--config", str(cfg), "--out", str(out2)]) == EXIT_OK
    assert out1.read_bytes() == out2.read_bytes()


def test_seed_override_changes_output(scenario_path, tmp_path):
    noisy = json.loads(scenario_path.read_text())
    noisy["noise"] = {"white_sigma": 0.02}
    noisy_path = tmp_path / "noisy.json"
    noisy_path.write_text(json.dumps(noisy))
    a, b = tmp_path / "sa.oogw", tmp_path / "sb.oogw"
    main(["simulate", "--config", str(noisy_path), "--out", str(a), "--seed", "1"])
    main(["simulate", "--config", str(noisy_path), "--out", str(b), "--seed", "2"])
    assert a.read_bytes() != b.read_bytes()
