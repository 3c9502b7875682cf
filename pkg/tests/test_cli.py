import csv
import json
import shutil

import numpy as np
import pytest

from famsec import cli
from famsec.delivery import enumerate_configs, fixture_path, load_config, load_sweep
from famsec.surrogate import GaussianProcessSurrogate


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def workdir(tmp_path):
    for name in ("corridor.json", "blocked.json", "risky.json", "sweep_small.json"):
        shutil.copy(fixture_path(name), tmp_path / name)
    return tmp_path


class TestSolve:
    def test_corridor_closed_form(self, capsys, workdir):
        cfg = load_config(workdir / "corridor.json")
        g = cfg.discount
        expected = sum(cfg.step_cost * g**k for k in range(4)) + g**3 * cfg.r_goal
        code, out, _ = run(capsys, "solve", "--config", workdir / "corridor.json")
        data = json.loads(out)
        assert code == 0 and data["converged"] is True
        assert data["start_value"] == pytest.approx(expected, abs=1e-8)

    def test_zero_budget(self, capsys, workdir):
        code, out, _ = run(capsys, "solve", "--config", workdir / "corridor.json", "--budget", 0)
        data = json.loads(out)
        assert code == 0 and data["converged"] is False and data["start_value"] == 0.0
        assert data["residual"] == "inf"

    def test_out_file(self, capsys, workdir):
        out_path = workdir / "solve.json"
        code, out, _ = run(capsys, "solve", "--config", workdir / "corridor.json", "--out", out_path)
        assert code == 0 and out_path.read_text() == out


class TestInputErrors:
    def test_malformed_json(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"width": 5,, }')
        code, _, err = run(capsys, "assess", "--config", bad, "--seed", 1)
        assert code == 2 and "line 1" in err

    def test_invalid_field_named(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"slip": 0.9}))
        code, _, err = run(capsys, "assess", "--config", bad, "--seed", 1)
        assert code == 2 and "field: slip" in err

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "solve", "--config", tmp_path / "nope.json")
        assert code == 2 and "no such file" in err

    def test_negative_budget(self, capsys, workdir):
        code, _, _ = run(capsys, "solve", "--config", workdir / "corridor.json", "--budget", -1)
        assert code == 2

    def test_seed_required(self, workdir):
        with pytest.raises(SystemExit):
            cli.main(["assess", "--config", str(workdir / "corridor.json")])


class TestAssess:
    def test_guaranteed_capture(self, capsys, workdir):
        code, out, _ = run(capsys, "assess", "--config", workdir / "blocked.json", "--seed", 3, "--rollouts", 200)
        data = json.loads(out)
        assert code == 0 and data["outcome"]["x_o"] == -1.0
        assert data["likert_outcome"] == "very low" and data["task_id"] == "blocked"

    def test_repeat_identical_bytes(self, capsys, workdir):
        args = ("assess", "--config", workdir / "risky.json", "--seed", 9, "--rollouts", 300)
        _, a, _ = run(capsys, *args)
        _, b, _ = run(capsys, *args)
        assert a == b

    def test_seed_changes_samples(self, capsys, workdir):
        base = ("assess", "--config", workdir / "risky.json", "--rollouts", 300, "--seed")
        _, a, _ = run(capsys, *base, 1)
        _, b, _ = run(capsys, *base, 2)
        assert json.loads(a)["outcome"]["summary"] != json.loads(b)["outcome"]["summary"]

    def test_flags_reach_report(self, capsys, workdir):
        code, out, _ = run(
            capsys, "assess", "--config", workdir / "risky.json", "--seed", 1, "--rollouts", 100,
            "--rbar", 5, "--alpha", 2, "--moment-order", 2, "--budget", 3, "--bins", 7,
        )
        data = json.loads(out)
        assert code == 0
        assert data["outcome"]["params"]["r_bar"] == 5.0
        assert data["outcome"]["params"]["alpha"] == 2.0
        assert data["outcome"]["params"]["moment_order"] == 2
        assert data["provenance"]["solver"] == "candidate(budget=3)"
        assert len(data["histogram"]["counts"]) == 7

    def test_inputs_not_mutated(self, capsys, workdir):
        before = {p.name: p.read_bytes() for p in workdir.iterdir()}
        run(capsys, "assess", "--config", workdir / "risky.json", "--seed", 1, "--rollouts", 50,
            "--out", workdir / "out.json")
        after = {p.name: p.read_bytes() for p in workdir.iterdir() if p.name != "out.json"}
        assert after == before


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    code = cli.main(["train", "--sweep", str(fixture_path("sweep_small.json")), "--seed", "4",
                     "--rollouts", "300", "--out", str(out)])
    assert code == 0
    return out


class TestTrainAndSweep:
    def test_train_outputs(self, trained):
        lines = (trained / "training.csv").read_text().splitlines()
        assert lines[0] == "feature_0,feature_1,feature_2,feature_3,feature_4,merit_mean,merit_sd,n_samples,seed"
        assert len(lines) == 7
        GaussianProcessSurrogate.load(trained / "surrogate.json")

    def test_quality_block_with_surrogate(self, capsys, trained, tmp_path):
        cfg = enumerate_configs(load_sweep(fixture_path("sweep_small.json")))[2]
        path = tmp_path / "task.json"
        path.write_text(json.dumps(cfg.to_dict()))
        code, out, _ = run(capsys, "assess", "--config", path, "--seed", 77, "--rollouts", 300,
                           "--surrogate", trained / "surrogate.json")
        data = json.loads(out)
        assert code == 0
        assert 0.5 <= data["solver_quality"]["x_q"] <= 1.5
        assert len(data["provenance"]["surrogate_sha256"]) == 64

    def test_no_quality_block_without_surrogate(self, capsys, workdir):
        _, out, _ = run(capsys, "assess", "--config", workdir / "corridor.json", "--seed", 1, "--rollouts", 20)
        assert "solver_quality" not in json.loads(out)

    def test_sweep(self, capsys, workdir, trained):
        out = workdir / "sweep_out"
        code, _, _ = run(capsys, "sweep", "--sweep", workdir / "sweep_small.json", "--seed", 2, "--rollouts", 100,
                         "--surrogate", trained / "surrogate.json", "--out", out)
        assert code == 0
        assert sorted(p.name for p in (out / "reports").iterdir()) == [f"task_{i:03d}.json" for i in range(6)]
        with open(out / "summary.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == cli.SUMMARY_HEADER
        assert rows[0] == ["task_id", "p_pursue", "slip", "goal_distance", "pursuer_distance",
                           "capture_penalty", "x_o", "x_q"]
        assert len(rows) == 7
        rep = json.loads((out / "reports" / "task_004.json").read_text())
        assert float(rows[5][6]) == rep["outcome"]["x_o"]
        assert float(rows[5][7]) == rep["solver_quality"]["x_q"]

    def test_sweep_thread_invariance(self, capsys, workdir, monkeypatch):
        outs = []
        for threads in ("1", "4"):
            monkeypatch.setenv("FAMSEC_THREADS", threads)
            out = workdir / f"s{threads}"
            run(capsys, "sweep", "--sweep", workdir / "sweep_small.json", "--seed", 2, "--rollouts", 100,
                "--out", out)
            outs.append({p.name: p.read_bytes() for p in sorted((out / "reports").iterdir())})
            outs[-1]["summary"] = (out / "summary.csv").read_bytes()
        assert outs[0] == outs[1]


def test_numerical_failure_exit_code(capsys, trained, workdir, monkeypatch):
    def flat(self, X, return_std=False):
        n = np.asarray(X).shape[0]
        return (np.zeros(n), np.zeros(n)) if return_std else np.zeros(n)

    monkeypatch.setattr(GaussianProcessSurrogate, "predict", flat)
    code, _, err = run(capsys, "assess", "--config", workdir / "corridor.json", "--seed", 1, "--rollouts", 20,
                       "--surrogate", trained / "surrogate.json")
    assert code == 3 and "noise" in err
