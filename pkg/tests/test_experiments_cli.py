import csv
import json
import math
import subprocess
import sys

import pytest

from risopt.cli import build_parser, config_from_args, main
from risopt.errors import ConfigError
from risopt.experiments import (
    ExperimentConfig,
    config_hash,
    derive_seed,
    interferer_angles,
    load_config,
    run,
    run_angle_sweep,
    run_beampattern,
    run_calibrate,
    run_convergence,
)

# coarse spacing keeps the surface at 32 elements
FAST = dict(dx=(2.0,), max_iterations=4, trials=4, csi_realizations=2, calibration_configs=4)


def fast_config(tmp_path, experiment, **kw):
    base = dict(FAST, out=str(tmp_path / "out"), cache_dir=str(tmp_path / "cache"))
    return ExperimentConfig(experiment=experiment, **{**base, **kw})


def read_csv(path):
    lines = path.read_text().splitlines()
    header = [ln[2:] for ln in lines if ln.startswith("# ")]
    rows = list(csv.DictReader(ln for ln in lines if not ln.startswith("#")))
    return header, rows


# -- configuration ------------------------------------------------------------

def test_caption_grid_starts_at_intended_angle():
    grid = interferer_angles("caption")
    assert len(grid) == 12
    assert grid[0] == pytest.approx(math.pi / 8)
    assert grid[4] == pytest.approx(math.pi / 4)
    assert grid[-1] == pytest.approx(math.pi / 8 + 11 * math.pi / 32)


def test_body_grid():
    grid = interferer_angles("body")
    assert len(grid) == 15
    assert grid[3] == pytest.approx(math.pi / 8)
    assert grid[7] == pytest.approx(math.pi / 4)
    with pytest.raises(ConfigError):
        interferer_angles("other")


@pytest.mark.parametrize("bad", [
    dict(variants=()), dict(variants=("OPT-XYZ",)), dict(dx=(0.0,)), dict(sigma=(-1.0,)),
    dict(experiment="other"), dict(preset="other"), dict(trials=0), dict(epsilon=-1.0),
    dict(snr_reference="other"), dict(interferer_grid="other"), dict(probe_step_deg=1.0),
])
def test_invalid_configs_rejected(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig(**bad)


def test_config_roundtrip_and_unknown_keys(tmp_path):
    cfg = ExperimentConfig(dx=(0.25,), sigma=(0.5, 1.0), interferer_angles=(0.5,))
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert load_config(path) == cfg
    path.write_text(json.dumps({"bogus": 1}))
    with pytest.raises(ConfigError):
        load_config(path)
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(path)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_explicit_angles_override_grid():
    assert ExperimentConfig(interferer_angles=(0.1, 0.2)).angles() == [0.1, 0.2]
    assert len(ExperimentConfig(interferer_grid="body").angles()) == 15


def test_derived_seeds_are_stable_and_distinct():
    assert derive_seed(0, "a", 0.5) == derive_seed(0, "a", 0.5)
    seeds = {derive_seed(0, "a", 0.5), derive_seed(1, "a", 0.5), derive_seed(0, "b", 0.5),
             derive_seed(0, "a", 0.25)}
    assert len(seeds) == 4
    assert all(0 <= s < 2 ** 32 for s in seeds)
    assert config_hash({"x": 1, "y": 2}) == config_hash({"y": 2, "x": 1})


def test_unwritable_output_rejected(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(ConfigError):
        run(fast_config(tmp_path, "calibrate", out=str(blocker / "sub")))


# -- runners ------------------------------------------------------------------

def test_convergence_outputs_and_bit_identical_rerun(tmp_path):
    cfg = fast_config(tmp_path, "convergence", sigma=(0.0, 1.0))
    summary = run_convergence(cfg)
    assert [(s["dx"], s["sigma"]) for s in summary] == [(2.0, 0.0), (2.0, 1.0)]
    trace = tmp_path / "out" / "convergence_dx2_sigma0.csv"
    header, rows = read_csv(trace)
    assert header[0].startswith("scenario_hash=") and header[1].startswith("seed=")
    assert json.loads(header[3][len("config="):])["dx"] == [2.0]
    assert list(rows[0]) == ["iteration", "rate_bound"]
    rates = [float(r["rate_bound"]) for r in rows]
    assert rates == sorted(rates)
    assert rates[-1] == pytest.approx(summary[0]["final_rate_bound"])
    first = {p.name: p.read_bytes() for p in (tmp_path / "out").iterdir()}
    run_convergence(cfg)
    assert {p.name: p.read_bytes() for p in (tmp_path / "out").iterdir()} == first


def test_angle_sweep_outputs(tmp_path):
    cfg = fast_config(tmp_path, "angle-sweep", sigma=(0.5,), interferer_angles=(math.pi / 4,))
    results = run_angle_sweep(cfg)
    points = results[(2.0, 0.5)]
    assert [p.variant for p in points] == ["OPT-NoCSI", "CT-NoCSI", "OPT-CSI"]
    assert [p.n_samples for p in points] == [4, 4, 2]
    assert all(p.mean_rate >= 0 and p.interferer_index == 1 for p in points)
    _, rows = read_csv(tmp_path / "out" / "sweep_sigma0p5_dx2.csv")
    assert list(rows[0]) == ["interferer_index", "interferer_angle", "variant", "mean_rate",
                             "stderr", "rate_bound", "n_samples"]
    assert float(rows[0]["mean_rate"]) == points[0].mean_rate


def test_beampattern_outputs(tmp_path):
    cfg = fast_config(tmp_path, "beampattern", sigma=(0.5,), variants=("OPT-NoCSI", "CT-NoCSI"))
    results = run_beampattern(cfg)
    assert {r.variant for r in results} == {"OPT-NoCSI", "CT-NoCSI"}
    r = results[0]
    assert r.angles_deg[0] == 0.0 and r.angles_deg[-1] == 90.0
    assert len(r.angles_deg) == 181
    assert r.null_depth_db >= r.peak_db - r.level_at_interferer_db - 1e-9
    _, rows = read_csv(tmp_path / "out" / "beam_sigma0p5_dx2_OPT-NoCSI.csv")
    assert len(rows) == 181
    _, summary = read_csv(tmp_path / "out" / "beam_summary.csv")
    assert len(summary) == 2
    with pytest.raises(ConfigError):
        run_beampattern(cfg.replace(variants=("OPT-CSI",)))


def test_calibrate_outputs(tmp_path):
    rows = run_calibrate(fast_config(tmp_path, "calibrate"))
    assert rows[0]["noise_var"] > 0
    _, csv_rows = read_csv(tmp_path / "out" / "calibration.csv")
    assert float(csv_rows[0]["noise_var"]) == rows[0]["noise_var"]


# -- command line -------------------------------------------------------------

def test_flags_override_scenario_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"trials": 7, "seed": 3, "dx": [0.25]}))
    args = build_parser().parse_args(["angle-sweep", "--scenario", str(path), "--seed", "5",
                                      "--sigma", "0.5,1", "--interferer-angles", "pi/8,3pi/8"])
    cfg = config_from_args(args)
    assert (cfg.experiment, cfg.trials, cfg.seed, cfg.dx) == ("angle-sweep", 7, 5, (0.25,))
    assert cfg.sigma == (0.5, 1.0)
    assert cfg.interferer_angles == pytest.approx((math.pi / 8, 3 * math.pi / 8))


def test_cli_success_prints_json(tmp_path, capsys):
    scenario = tmp_path / "cfg.json"
    scenario.write_text(json.dumps({"calibration_configs": 3}))
    code = main(["calibrate", "--scenario", str(scenario), "--dx", "2",
                 "--out", str(tmp_path / "o"), "--cache-dir", str(tmp_path / "c")])
    assert code == 0
    line = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert line["status"] == "ok" and line["result"][0]["noise_var"] > 0


def test_cli_config_error_is_machine_readable(tmp_path, capsys):
    code = main(["convergence", "--dx", "-1", "--out", str(tmp_path)])
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err == {"status": "error", "type": "ConfigError", "message": err["message"]}


def test_cli_usage_error_exits_nonzero():
    proc = subprocess.run([sys.executable, "-m", "risopt.cli", "angle-sweep", "--variants", "XX"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    err = json.loads(proc.stderr.strip().splitlines()[-1])
    assert err["status"] == "error" and err["type"] == "UsageError"
