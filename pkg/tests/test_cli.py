import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from svpcnet.cli import EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from svpcnet.energies import EnergyModel
from svpcnet.nn import load_checkpoint, predict

SMALL = {
    "lattice": {"count": 9, "spacing": "uniform", "lo": -1, "hi": 1},
    "network": {"hidden": [4, 4]},
    "train": {"max_epochs": 3, "batch_size": 16},
    "eval": {"grid": {"n": 6}, "cross_sections": {"samples": 11}},
}


def _config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture
def ksd_run(tmp_path):
    cfg = _config(tmp_path, SMALL)
    assert main(["gen-data", "--config", cfg, "--out", str(tmp_path / "data"), "-q"]) == EXIT_OK
    assert main(["train", "--config", cfg, "--data", str(tmp_path / "data"), "--out", str(tmp_path / "net"),
                 "-q"]) == EXIT_OK
    return tmp_path, cfg


def test_ksd_pipeline(ksd_run):
    tmp, cfg = ksd_run
    assert {p.name for p in (tmp / "data").iterdir()} >= {"train.csv", "validation.csv", "dataset.json",
                                                         "resolved_config.json"}
    ckpt = tmp / "net" / "checkpoint_00.json"
    assert ckpt.exists() and (tmp / "net" / "history_00.csv").exists()
    q = tmp / "q.csv"
    q.write_text("nu_1,nu_2\n0.5,0.25\n-1,0\n")
    assert main(["predict", "--config", cfg, "--model", str(ckpt), "--queries", str(q), "--out",
                 str(tmp / "pred.csv"), "-q"]) == EXIT_OK
    rows = _rows(tmp / "pred.csv")
    assert rows[0] == ["nu_1", "nu_2", "value"] and len(rows) == 3
    params = load_checkpoint(ckpt)["params"]
    expect = predict(params, np.array([[0.5, 0.25], [-1.0, 0.0]]))
    np.testing.assert_array_equal([float(r[2]) for r in rows[1:]], expect)
    assert main(["eval", "--config", cfg, "--model", str(ckpt), "--out", str(tmp / "eval"), "-q"]) == EXIT_OK
    errs = _rows(tmp / "eval" / "errors.csv")
    assert errs[0][0] == "mean_error" and len(errs) == 2
    assert (tmp / "eval" / "cross_network_t0_000.csv").exists()
    assert main(["cross-section", "--config", cfg, "--out", str(tmp / "cs"), "-q"]) == EXIT_OK
    assert len(_rows(tmp / "cs" / "cross_analytic_tt_000.csv")) == 12


def test_usage_errors_exit_one(tmp_path, capsys):
    bad = _config(tmp_path, {"lattice": {"cnt": 9}})
    assert main(["gen-data", "--config", bad, "--out", str(tmp_path / "o")]) == EXIT_USAGE
    assert "lattice.cnt" in capsys.readouterr().err
    assert main(["gen-data", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == EXIT_USAGE
    (tmp_path / "broken.json").write_text('{"model": \n  {"kind": }')
    assert main(["gen-data", "--config", str(tmp_path / "broken.json"), "--out", str(tmp_path)]) == EXIT_USAGE
    assert "broken.json:2:" in capsys.readouterr().err
    assert main(["train", "--config", _config(tmp_path, SMALL), "--data", str(tmp_path / "nope"),
                 "--out", str(tmp_path / "o")]) == EXIT_USAGE
    assert main(["predict", "--model", str(tmp_path / "none.json"), "--queries", "x", "--out", "y"]) == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == EXIT_USAGE


def test_entry_point_exit_code(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "svpcnet.cli", "gen-data", "--config",
                           _config(tmp_path, {"bogus": 1}), "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == EXIT_USAGE and proc.stdout == ""
    assert "bogus" in proc.stderr


def test_infeasible_query_exits_two(tmp_path):
    cfg = _config(tmp_path, {**SMALL, "envelope": {"queries": [[0.5, 0.5], [2.0, 0.0]]}})
    assert main(["polyconvexify", "--config", cfg, "--out", str(tmp_path / "o"), "-q"]) == EXIT_NUMERIC
    rows = _rows(tmp_path / "o" / "field_000.csv")
    assert [r[-1] for r in rows[1:]] == ["optimal", "infeasible"]
    index = json.loads((tmp_path / "o" / "fields.json").read_text())
    assert index[0]["n_infeasible"] == 1


def test_damage_predict_adds_shift_and_clamps(tmp_path):
    cfg = {**SMALL, "model": {"kind": "stvk_damage"}, "dataset": {"parameters": [[0.0], [2.0], [4.0]]},
           "lattice": {"count": 5, "spacing": "uniform", "lo": -1, "hi": 1},
           "predict": {"nu_k": [1.2, 0.9], "alpha_k": 6.0}}
    path = _config(tmp_path, cfg)
    assert main(["gen-data", "--config", path, "--out", str(tmp_path / "d"), "-q"]) == EXIT_OK
    assert main(["train", "--config", path, "--data", str(tmp_path / "d"), "--out", str(tmp_path / "n"),
                 "-q"]) == EXIT_OK
    q = tmp_path / "q.csv"
    q.write_text("nu_1,nu_2\n0.3,-0.2\n")
    ckpt = tmp_path / "n" / "checkpoint_00.json"
    assert main(["predict", "--config", path, "--model", str(ckpt), "--queries", str(q), "--out",
                 str(tmp_path / "p.csv"), "-q"]) == EXIT_OK
    header, row = _rows(tmp_path / "p.csv")
    assert header == ["nu_1", "nu_2", "zeta_1", "value", "shift"]
    shift = float(EnergyModel("stvk_damage").shift(np.array([1.2, 0.9]), 6.0))
    net = predict(load_checkpoint(ckpt)["params"], np.array([[0.3, -0.2]]), np.array([[4.0]]))[0]
    assert float(row[2]) == 4.0
    assert float(row[4]) == shift
    assert float(row[3]) == net + shift


def test_ensemble_training(tmp_path):
    cfg = _config(tmp_path, {**SMALL, "train": {"max_epochs": 1, "ensemble_size": 10}})
    main(["gen-data", "--config", cfg, "--out", str(tmp_path / "d"), "-q"])
    assert main(["train", "--config", cfg, "--data", str(tmp_path / "d"), "--out", str(tmp_path / "n"),
                 "-q"]) == EXIT_OK
    ckpts = sorted((tmp_path / "n").glob("checkpoint_*.json"))
    assert len(ckpts) == 10
    report = json.loads((tmp_path / "n" / "train_report.json").read_text())
    assert report["n_realizations"] == 10
    assert [r["seed"] for r in report["realizations"]] == list(range(10))
    assert set(report["std"]) == set(report["mean"])
    q = tmp_path / "q.csv"
    q.write_text("nu_1,nu_2\n0.1,0.2\n")
    assert main(["predict", "--config", cfg, "--model", *map(str, ckpts), "--queries", str(q), "--out",
                 str(tmp_path / "p.csv"), "-q"]) == EXIT_OK
    assert _rows(tmp_path / "p.csv")[0][-1] == "std"


def test_field_has_one_row_per_lattice_point(tmp_path):
    cfg = _config(tmp_path, {"lattice": {"count": 65, "spacing": "uniform", "lo": -1, "hi": 1}})
    assert main(["polyconvexify", "--config", cfg, "--out", str(tmp_path / "o"), "-q"]) == EXIT_OK
    rows = _rows(tmp_path / "o" / "field_000.csv")
    assert len(rows) - 1 == 65 * 65
    assert all(r[-1] == "optimal" for r in rows[1:])


def test_envelope_cache_is_reused(tmp_path, capsys):
    cache = tmp_path / "cache"
    cfg = _config(tmp_path, {**SMALL, "model": {"kind": "stvk_damage"}, "dataset": {"parameters": [[1.0]]},
                             "envelope": {"cache_dir": str(cache)}})
    assert main(["polyconvexify", "--config", cfg, "--out", str(tmp_path / "a")]) == EXIT_OK
    files = list(cache.glob("envelope-*.csv"))
    assert len(files) == 1
    stamp = files[0].stat().st_mtime_ns
    capsys.readouterr()
    assert main(["gen-data", "--config", cfg, "--out", str(tmp_path / "d")]) == EXIT_OK
    assert "reusing cached envelope" in capsys.readouterr().err
    assert files[0].stat().st_mtime_ns == stamp
    assert (tmp_path / "a" / "field_000.csv").read_bytes() == files[0].read_bytes()


def test_runs_are_byte_identical(tmp_path):
    cfg = _config(tmp_path, SMALL)
    for run in ("r1", "r2"):
        main(["gen-data", "--config", cfg, "--out", str(tmp_path / run / "d"), "-q"])
        main(["train", "--config", cfg, "--data", str(tmp_path / run / "d"), "--out", str(tmp_path / run / "n"),
              "-q"])
    for rel in ("d/train.csv", "d/validation.csv", "d/dataset.json", "n/checkpoint_00.json",
                "n/history_00.csv", "n/resolved_config.json"):
        assert (tmp_path / "r1" / rel).read_bytes() == (tmp_path / "r2" / rel).read_bytes(), rel


def test_seed_flag_changes_split(tmp_path):
    cfg = _config(tmp_path, SMALL)
    main(["gen-data", "--config", cfg, "--out", str(tmp_path / "a"), "-q"])
    main(["gen-data", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "7", "-q"])
    assert (tmp_path / "a" / "train.csv").read_bytes() != (tmp_path / "b" / "train.csv").read_bytes()
    resolved = json.loads((tmp_path / "b" / "resolved_config.json").read_text())
    assert resolved["config"]["dataset"]["validation"]["seed"] == 7
