import json
import subprocess
import sys

import pytest

from nsbandit import cli
from nsbandit.dataio import read_results


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


BASE = ["tune", "--seed", "5", "--budget", "400"]


def test_twelve_rows(capsys):
    code, out, _ = run(BASE + ["--strategy", "uniform,sh,sr", "--trials", "4",
                               "--workers", "1"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("# ")
    assert lines[1] == "trial,strategy,budget,winner,test_loss,pulls,loss_observations,wall_ms"
    assert len(lines) == 2 + 12


def test_manifest_embeds_config_and_seed(tmp_path, capsys):
    path = tmp_path / "out.csv"
    assert run(BASE + ["--out", str(path)], capsys)[0] == 0
    records, meta = read_results(path)
    assert meta["config"]["seed"] == 5 and meta["config"]["budget"] == 400
    assert meta["config"]["hyperparams"][0]["name"] == "lambda"
    assert all(r.pulls <= 400 for r in records)


def test_rerun_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    argv = BASE + ["--trials", "3", "--format", "json", "--strategy", "sh,sr"]
    run(argv + ["--out", str(a), "--workers", "1"], capsys)
    run(argv + ["--out", str(b), "--workers", "2"], capsys)
    assert a.read_bytes() == b.read_bytes()


def test_infeasible_budget_exit_code(capsys):
    code, _, err = run(["tune", "--seed", "1", "--budget", "5"], capsys)
    assert code == cli.EXIT_INFEASIBLE
    assert "minimal feasible budget is 10" in err


def test_seed_is_mandatory(capsys):
    code, _, err = run(["tune", "--budget", "100"], capsys)
    assert code == cli.EXIT_USAGE and "--seed" in err


def test_unknown_strategy(capsys):
    assert run(BASE + ["--strategy", "sh,bogus"], capsys)[0] == cli.EXIT_USAGE


def test_doubling_rows(capsys):
    code, out, _ = run(["tune", "--seed", "2", "--doublings", "3", "--strategy", "sh"], capsys)
    rows = out.splitlines()[2:]
    assert code == 0
    assert [int(r.split(",")[2]) for r in rows] == [40, 80, 160]
    assert [int(r.split(",")[-3]) for r in rows] == [40, 120, 280]


def test_warm_start_uses_fewer_pulls(capsys):
    argv = ["tune", "--seed", "2", "--doublings", "3", "--strategy", "sh"]
    cold = run(argv, capsys)[1].splitlines()[-1]
    warm = run(argv + ["--warm-start"], capsys)[1].splitlines()[-1]
    assert int(warm.split(",")[-3]) < int(cold.split(",")[-3])


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "exp.ini"
    cfg.write_text("[tune]\nseed = 3\nbudget = 200\nstrategy = sr\ntrials = 2\n"
                   "[hyperparams]\nlambda = 1e-4 1e-1 log 4\n")
    code, out, _ = run(["tune", "--config", str(cfg)], capsys)
    assert code == 0
    rows = out.splitlines()[2:]
    assert len(rows) == 2 and all(",sr,200," in r for r in rows)
    meta = json.loads(out.splitlines()[0][2:])
    assert meta["config"]["hyperparams"][0]["samples"] == 4
    code, out, _ = run(["tune", "--config", str(cfg), "--budget", "300"], capsys)
    assert all(",sr,300," in r for r in out.splitlines()[2:])


def test_bad_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[tune]\nbudgett = 3\n")
    assert run(["tune", "--config", str(cfg)], capsys)[0] == cli.EXIT_USAGE


@pytest.mark.parametrize("learner,extra", [("pegasos", ["--samples", "3"]),
                                           ("matcomp", ["--samples", "2"])])
def test_other_learners(learner, extra, capsys):
    code, out, _ = run(["tune", "--seed", "1", "--budget", "200", "--learner", learner,
                        "--strategy", "uniform,sh"] + extra, capsys)
    assert code == 0 and len(out.splitlines()) == 4


def test_dense_data_file(tmp_path, capsys):
    data = tmp_path / "d.csv"
    assert run(["synth", "regression", "--examples", "200", "--dims", "5", "--out", str(data)],
               capsys)[0] == 0
    assert sum(1 for line in data.read_text().splitlines() if not line.startswith("#")) == 200
    code, out, _ = run(BASE + ["--data", str(data)], capsys)
    assert code == 0
    assert run(BASE + ["--data", str(tmp_path / "nope.csv")], capsys)[0] == cli.EXIT_USAGE


def test_verify_report(tmp_path, capsys):
    path = tmp_path / "report.json"
    code, _, _ = run(["verify", "--theorem", "t3", "--instances", "3", "--out", str(path)], capsys)
    report = json.loads(path.read_text())
    assert code == 0 and report["counterexamples"] == 0
    runs = {r["budget"]: r["success"] for r in report["suites"]["t3"]["notes"]["anchor"]["runs"]}
    assert runs[6] is False and runs[8] is True


def test_verify_counterexample_exit_code(monkeypatch, capsys):
    monkeypatch.setattr(cli, "run_suites", lambda *a: {"counterexamples": 1})
    assert run(["verify", "--theorem", "t1"], capsys)[0] == cli.EXIT_COUNTEREXAMPLE


def test_verify_unknown_selector(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["verify", "--theorem", "t9"])
    assert info.value.code == cli.EXIT_USAGE


def test_synth_adversarial(tmp_path, capsys):
    out = tmp_path / "adv"
    code, _, _ = run(["synth", "adversarial", "--n", "3", "--out", str(out)], capsys)
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    # nu = (0, 1/3, 2/3), 1/t <= 1/6 first at t = 6, boundary 3 * 6
    assert manifest["boundary_budget"] == 18
    assert manifest["files"] == ["arm0.csv", "arm1.csv", "arm2.csv"]
    lines = (out / "arm1.csv").read_text().splitlines()
    assert lines[0].startswith("# ") and float(lines[1]) == pytest.approx(1 / 3 - 1)


def test_synth_missing_params():
    with pytest.raises(SystemExit) as info:
        cli.main(["synth", "regression", "--out", "x.csv"])
    assert info.value.code == cli.EXIT_USAGE


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "nsbandit", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "nsbandit" in proc.stdout
