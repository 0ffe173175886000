import csv
import json

import numpy as np
import pytest

from relikit.cli import main
from relikit.data import RatingsTable, write_csv
from relikit.sim import simulate_dataset, table1_hyper

FAST = ["--niters", "100", "--nwarmup", "100", "--seed", "3"]


def _csv(tmp_path, Y, name="data.csv"):
    path = tmp_path / name
    write_csv(RatingsTable.from_array(np.asarray(Y)), path)
    return str(path)


@pytest.fixture(scope="module")
def gait_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "gait.csv"
    write_csv(simulate_dataset("FN", table1_hyper("gait", "FN"), (12, 3, 2), seed=1), path)
    return str(path)


@pytest.fixture(scope="module")
def fit_dir(gait_csv, tmp_path_factory):
    out = tmp_path_factory.mktemp("fit") / "bfn"
    code = main(["fit", "--model", "bfn", "--cov-R", "common", "--cov-T", "common", gait_csv, "-o", str(out), *FAST])
    assert code == 0
    return out


def test_fit_requires_model(gait_csv, tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["fit", gait_csv, "-o", str(tmp_path / "x")])
    assert exc.value.code == 1
    assert "--model" in capsys.readouterr().err


def test_print_config_defaults(capsys):
    assert main(["fit", "--model", "bin", "--print-config", "--seed", "1"]) == 0
    cfg = json.loads(capsys.readouterr().out)
    s = cfg["sampler"]
    assert (s["niters"], s["nwarmup"], s["nchains"]) == (2000, 200, 2)
    pr = cfg["model"]
    assert (pr["gamma_a"], pr["gamma_b"], pr["beta_a"], pr["beta_b"]) == (3.0, 1.5, 5.0, 5.0)
    assert main(["print-config"]) == 0
    assert json.loads(capsys.readouterr().out)["sampler"]["niters"] == 2000


def test_fit_outputs(fit_dir):
    for name in ("draws.csv", "diagnostics.json", "summary.csv", "table1.csv", "kappa.json", "loo.json",
                 "manifest.json"):
        assert (fit_dir / name).exists(), name
    with open(fit_dir / "table1.csv") as fh:
        labels = [r[0] for r in csv.reader(fh)][1:]
    assert "rho^R" in labels and "rho^T" in labels and "LOOIC" in labels
    manifest = json.loads((fit_dir / "manifest.json").read_text())
    assert manifest["command"] == "fit" and manifest["seed"] == 3
    assert len(manifest["inputs"]) == 1
    assert list(fit_dir.glob("manifest*")) == [fit_dir / "manifest.json"]


def test_fit_rerun_is_byte_identical(gait_csv, fit_dir, tmp_path):
    out = tmp_path / "again"
    assert main(["fit", "--model", "bfn", gait_csv, "-o", str(out), *FAST]) == 0
    for f in fit_dir.iterdir():
        if f.name != "manifest.json":
            assert f.read_bytes() == (out / f.name).read_bytes(), f.name
    a = json.loads((fit_dir / "manifest.json").read_text())
    b = json.loads((out / "manifest.json").read_text())
    assert a["config"] == b["config"] and a["seed"] == b["seed"]
    assert list(a["inputs"].values()) == list(b["inputs"].values())


def test_fit_bad_input_exit_code(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("subject,rater,time,y\n1,1,1,2\n")
    assert main(["fit", "--model", "bin", str(bad), "-o", str(tmp_path / "o"), *FAST]) == 1


def test_fit_sampler_failure_exit_code(gait_csv, tmp_path, monkeypatch):
    from relikit import cli
    from relikit.errors import AllDivergent

    def boom(*a, **k):
        raise AllDivergent("every warmup transition diverged")

    monkeypatch.setattr(cli, "sample", boom)
    assert main(["fit", "--model", "bin", gait_csv, "-o", str(tmp_path / "o"), *FAST]) == 2


def test_seed_drawn_and_recorded(gait_csv, tmp_path):
    out = tmp_path / "k"
    assert main(["kappa", gait_csv, "-o", str(out), "--seed", "9"]) == 0
    assert json.loads((out / "manifest.json").read_text())["seed"] == 9
    sim_out = tmp_path / "s"
    assert main(["simulate", "--model", "bin", "-o", str(sim_out)]) == 0
    assert isinstance(json.loads((sim_out / "manifest.json").read_text())["seed"], int)


# -- kappa ------------------------------------------------------------------------


def test_kappa_perfect(tmp_path, capsys):
    Y = np.repeat(np.array([1, 0, 1, 0, 1])[:, None, None], 3, axis=1)
    assert main(["kappa", _csv(tmp_path, Y), "--mode", "interrater"]) == 0
    assert json.loads(capsys.readouterr().out)["kappa"] == pytest.approx(1.0)


def test_kappa_chance(tmp_path, capsys):
    Y = np.array([[1, 1], [1, 0], [0, 1], [0, 0]])[:, :, None]
    assert main(["kappa", _csv(tmp_path, Y), "--mode", "interrater", "--method", "cohen"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert (out["p_o"], out["p_c"], out["kappa"]) == (0.5, 0.5, 0.0)


def test_kappa_degenerate(tmp_path):
    Y = np.ones((3, 2, 1), int)
    assert main(["kappa", _csv(tmp_path, Y), "--mode", "interrater", "--method", "cohen"]) == 2


# -- loo --------------------------------------------------------------------------


def _loo(capsys, *pairs):
    args = ["loo"]
    for p in pairs:
        args += ["--looic", p]
    assert main(args) == 0
    return json.loads(capsys.readouterr().out)


def test_loo_selection_examples(capsys):
    assert _loo(capsys, "bin=720.89", "bpn=720.44", "bfn=741.02")["selected"] == "BPN"
    assert _loo(capsys, "bin=396.54", "bpn=398.81", "bfn=318.02")["selected"] == "BFN"
    assert _loo(capsys, "bin=500", "bpn=500")["selected"] == "BIN"


def test_loo_on_draws_file(fit_dir, gait_csv, capsys):
    assert main(["loo", str(fit_dir / "draws.csv"), gait_csv, "--model", "bfn", "--looic", "bin=1e9"]) == 0
    out = json.loads(capsys.readouterr().out)
    saved = json.loads((fit_dir / "loo.json").read_text())
    assert out["loo"]["looic"] == pytest.approx(saved["looic"], rel=1e-12)
    assert out["selected"] == "BFN"


def test_loo_usage_errors(capsys):
    assert main(["loo"]) == 1
    assert main(["loo", "--looic", "bin"]) == 1


# -- simulate / study / report ---------------------------------------------------------


def test_simulate_writes_data_and_truth(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--model", "bpn", "--reference", "radiograph", "--seed", "4",
                 "--true-kappa-reps", "20", "-o", str(out)]) == 0
    truth = json.loads((out / "truth.json").read_text())
    assert truth["design"]["n_obs"] == 35 * 7 * 2
    assert set(truth["true_kappa"]) == {"inter", "intra", "reps"}
    again = tmp_path / "sim2"
    main(["simulate", "--model", "bpn", "--reference", "radiograph", "--seed", "4", "--true-kappa-reps", "20",
          "-o", str(again)])
    assert (out / "data.csv").read_bytes() == (again / "data.csv").read_bytes()
    assert (out / "truth.json").read_bytes() == (again / "truth.json").read_bytes()


def test_study_paper_scale_flag(tmp_path, capsys):
    assert main(["study", "--paper-scale", "--print-config", "--seed", "1", "-o", str(tmp_path / "p")]) == 0
    cfg = json.loads(capsys.readouterr().out)
    assert len(cfg["scenarios"]) == 6
    assert all((s["n_replicates"], s["true_kappa_reps"]) == (148, 10000) for s in cfg["scenarios"])
    assert main(["study", "--print-config", "--seed", "1", "-o", str(tmp_path / "d")]) == 0
    cfg = json.loads(capsys.readouterr().out)
    assert all((s["n_replicates"], s["true_kappa_reps"]) == (30, 2000) for s in cfg["scenarios"])


def _study_config(tmp_path):
    path = tmp_path / "scenarios.json"
    path.write_text(json.dumps({"scenarios": [
        {"reference": "custom", "sim_kind": "IN", "dims": [8, 3, 2], "n_replicates": 2, "true_kappa_reps": 20,
         "hyper": {"sigma_u": 0.91, "sigma_v": [0.79], "sigma_w": [0.79]}, "ppk_draws": 50},
    ]}))
    return str(path)


def test_study_emits_tables_and_resumes(tmp_path, capsys):
    cfg = _study_config(tmp_path)
    out = tmp_path / "study"
    args = ["study", "--config", cfg, "-o", str(out), "--seed", "5", "--niters", "60", "--nwarmup", "60"]
    assert main(args) == 0
    with open(out / "selection.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1
    assert sum(float(rows[0][k]) for k in ("BIN", "BPN", "BFN")) == pytest.approx(1.0)
    first = (out / "study.json").read_bytes()
    kappa_csv = (out / "kappa.csv").read_bytes()

    # drop the last replicate as if the run had been killed, then resume without --seed
    lines = (out / "replicates.jsonl").read_text().splitlines()
    (out / "replicates.jsonl").write_text(lines[0] + "\n")
    capsys.readouterr()
    assert main(["study", "--config", cfg, "-o", str(out), "--niters", "60", "--nwarmup", "60"]) == 0
    assert "replicate 1" in capsys.readouterr().err
    assert (out / "study.json").read_bytes() == first
    assert (out / "kappa.csv").read_bytes() == kappa_csv

    # a different configuration may not reuse the directory
    assert main(["study", "--config", cfg, "-o", str(out), "--seed", "6", "--niters", "60", "--nwarmup", "60"]) == 1

    assert main(["report", str(out)]) == 0
    assert "Selection proportions" in capsys.readouterr().out


def test_report_on_fit(fit_dir, capsys):
    assert main(["report", str(fit_dir)]) == 0
    text = capsys.readouterr().out
    assert "LOOIC" in text and "Conger kappa" in text


def test_report_empty_dir(tmp_path):
    assert main(["report", str(tmp_path)]) == 1


def test_threads_env(gait_csv, tmp_path, monkeypatch):
    monkeypatch.setenv("RELIKIT_THREADS", "nope")
    assert main(["fit", "--model", "bin", gait_csv, "-o", str(tmp_path / "o"), *FAST]) == 1
