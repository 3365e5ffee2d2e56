import csv
import hashlib
import json
from pathlib import Path

import pytest

from planrl import cli
from planrl.checks import CheckResult
from planrl.envsim.tasks import generate_maze_tasks, save_tasks


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture()
def workdir(tmp_path):
    save_tasks(generate_maze_tasks(2, 61), tmp_path / "train.json")
    save_tasks(generate_maze_tasks(3, 62), tmp_path / "heldout.json")
    config = {
        "seed": 5,
        "tasks": ["train.json"],
        "output_dir": "run",
        "schedule": {"epochs_per_stage": [1, 2, 1], "groups_per_step": 2},
        "grpo": {"group_size": 2, "learning_rate": 1.0, "plan_candidates": 1},
        "judge": {"backend": "mock"},
    }
    (tmp_path / "cfg.json").write_text(json.dumps(config))
    return tmp_path


@pytest.fixture()
def trained(workdir):
    assert run("--workdir", workdir, "train", "--config", "cfg.json") == 0
    return workdir


def test_train_writes_artifacts(trained, capsys):
    out = trained / "run"
    names = sorted(p.name for p in out.iterdir())
    assert names == ["ckpt_1_stage1.json", "ckpt_2_stage2.json", "ckpt_3_stage3.json", "ckpt_init.json",
                     "metrics.csv", "report.json", "trajectories.jsonl"]
    report = json.loads((out / "report.json").read_text())
    assert report["seed"] == 5 and not report["halted"]


def test_train_is_deterministic(trained):
    first = (trained / "run" / "metrics.csv").read_bytes()
    assert run("--workdir", trained, "train", "--config", "cfg.json", "--out", "again") == 0
    assert (trained / "again" / "metrics.csv").read_bytes() == first


def test_missing_task_file_exit_2(workdir, capsys):
    (workdir / "train.json").unlink()
    assert run("--workdir", workdir, "train", "--config", "cfg.json") == 2
    assert str(workdir / "train.json") in capsys.readouterr().err


def test_missing_config_exit_2(workdir, capsys):
    assert run("--workdir", workdir, "train", "--config", "nope.json") == 2
    assert "nope.json" in capsys.readouterr().err


def test_unknown_setting_exit_2(workdir):
    cfg = json.loads((workdir / "cfg.json").read_text())
    cfg["grpo"]["learning_rat"] = 1
    (workdir / "cfg.json").write_text(json.dumps(cfg))
    assert run("--workdir", workdir, "train", "--config", "cfg.json") == 2


def test_invalid_schedule_exit_2(workdir):
    cfg = json.loads((workdir / "cfg.json").read_text())
    cfg["schedule"]["epochs_per_stage"] = [1, 0, 1]
    (workdir / "cfg.json").write_text(json.dumps(cfg))
    assert run("--workdir", workdir, "train", "--config", "cfg.json") == 2


def test_sanity_halt_exit_3(workdir):
    cfg = json.loads((workdir / "cfg.json").read_text())
    cfg["schedule"]["sanity_floor"] = 1.5
    (workdir / "cfg.json").write_text(json.dumps(cfg))
    assert run("--workdir", workdir, "train", "--config", "cfg.json") == 3


def test_internal_error_exit_1(workdir, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("kaput")

    monkeypatch.setattr(cli, "run_curriculum", boom)
    assert run("--workdir", workdir, "train", "--config", "cfg.json") == 1


def test_bad_subcommand_exit_2():
    with pytest.raises(SystemExit) as e:
        run("frobnicate")
    assert e.value.code == 2


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_eval_is_read_only_and_reports_both_modes(trained, capsys):
    ckpt = trained / "run" / "ckpt_3_stage3.json"
    before = _digest(ckpt)
    assert run("--workdir", trained, "eval", "--ckpt", "run/ckpt_3_stage3.json", "--tasks", "heldout.json",
               "--mode", "both", "--config", "cfg.json", "--out", "eval.json") == 0
    assert _digest(ckpt) == before
    rep = json.loads((trained / "eval.json").read_text())
    assert set(rep["reports"]) == {"adaplan", "react"}
    assert rep["config_hash"] == json.loads(ckpt.read_text())["config_hash"] and rep["seed"] == 5
    for r in rep["reports"].values():
        assert 0 <= r["score"] <= 100 and r["n_tasks"] == 3


def test_eval_hash_mismatch_refused_then_overridden(trained):
    cfg = json.loads((trained / "cfg.json").read_text())
    cfg["grpo"]["learning_rate"] = 2.0
    (trained / "other.json").write_text(json.dumps(cfg))
    args = ["--workdir", trained, "eval", "--ckpt", "run/ckpt_init.json", "--tasks", "heldout.json",
            "--config", "other.json"]
    assert run(*args) == 2
    assert run(*args, "--allow-hash-mismatch") == 0


def test_eval_oracle_is_perfect(workdir, capsys):
    assert run("--workdir", workdir, "eval", "--ckpt", "oracle", "--tasks", "heldout.json") == 0
    assert "success 1.000" in capsys.readouterr().out


def test_eval_empty_task_set(workdir):
    (workdir / "empty.json").write_text("[]")
    assert run("--workdir", workdir, "eval", "--ckpt", "oracle", "--tasks", "empty.json") == 2


def test_eval_missing_checkpoint(workdir):
    assert run("--workdir", workdir, "eval", "--ckpt", "nope.json", "--tasks", "heldout.json") == 2


def test_curves(trained):
    assert run("--workdir", trained, "curves", "run", "--svg") == 0
    rows = list(csv.DictReader((trained / "run" / "curves.csv").open()))
    points = [r for r in rows if r["kind"] == "point"]
    marks = [r for r in rows if r["kind"] == "boundary"]
    assert len(points) == 4
    assert [(int(m["step"]), int(m["stage"])) for m in marks] == [(0, 1), (1, 2), (3, 3)]
    assert [int(m["epoch"]) for m in marks[1:]] == [1, 3]
    for r in points:
        for key in ("planner_quality", "executor_adherence", "e2e"):
            assert 0.0 <= float(r[key]) <= 1.0
        assert r["seed"] == "5"
    assert (trained / "run" / "curves.svg").read_text().startswith("<svg")


def test_curves_truncated_run(trained):
    metrics = trained / "run" / "metrics.csv"
    lines = metrics.read_text().splitlines()
    metrics.write_text("\n".join(lines[:3]) + "\n")
    assert run("--workdir", trained, "curves", "run") == 0
    rows = list(csv.DictReader((trained / "run" / "curves.csv").open()))
    assert sum(r["kind"] == "point" for r in rows) == 2


def test_curves_missing_metrics(tmp_path):
    assert run("--workdir", tmp_path, "curves", "nowhere") == 2


def test_check_pass_and_fail(monkeypatch, capsys):
    assert run("check", "advantage", "--seed", "0") == 0
    assert "PASS advantage" in capsys.readouterr().out
    monkeypatch.setitem(cli.SUITES, "advantage", lambda rng: CheckResult("advantage", 1, ["group 0: bad"]))
    assert run("check", "advantage") == 4
    out = capsys.readouterr().out
    assert "FAIL advantage" in out and "group 0: bad" in out


def test_gen_tasks_bundled_sets(tmp_path):
    assert run("--workdir", tmp_path, "gen-tasks", "--out", "t") == 0
    names = sorted(p.name for p in (tmp_path / "t").iterdir())
    assert names == ["maze_heldout.json", "maze_train.json", "textcraft.json", "wordle_train.json"]
    bundled = Path(cli.__file__).parent / "data" / "tasks"
    for n in names:
        assert (tmp_path / "t" / n).read_bytes() == (bundled / n).read_bytes()


def test_gen_tasks_custom(tmp_path):
    assert run("--workdir", tmp_path, "gen-tasks", "--env", "wordle", "--n", "4", "--seed", "3") == 0
    assert len(json.loads((tmp_path / "tasks" / "wordle_4_seed3.json").read_text())) == 4


def test_bundled_quickstart_config_resolves(tmp_path):
    path = cli.resolve_config_path("quickstart.json", tmp_path)
    rc = cli.load_run_config(path, tmp_path)
    assert rc.grpo.group_size == 8 and rc.schedule.epochs_per_stage == (1, 2, 1)
    assert len(rc.task_files) == 2 and rc.output_dir == tmp_path / "runs" / "quickstart"


def test_config_hash_tracks_task_contents(workdir):
    rc = cli.load_run_config(workdir / "cfg.json", workdir)
    h = rc.hash()
    save_tasks(generate_maze_tasks(2, 99), workdir / "train.json")
    assert cli.load_run_config(workdir / "cfg.json", workdir).hash() != h


def test_http_judge_needs_url(workdir):
    with pytest.raises(cli.ConfigError):
        cli.build_scorer({"backend": "http", "model": "m"})
    with pytest.raises(cli.ConfigError):
        cli.build_scorer({"backend": "oracle-llm"})
