"""End-to-end command line behavior: artifacts, exit codes, re-derivability."""

import csv
import json
import re
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from crllk.cli import main

FAST = [
    "--set", "env.horizon=12",
    "--set", "workers=2",
    "--set", "episodes_per_worker=1",
    "--set", "net.hidden=[8,8]",
]

STATS_KEYS = [
    "iter", "J_R", "J_clane", "J_ccoll", "J_cswt",
    "lambda1", "lambda2", "lambda3", "policy_loss", "value_loss", "wall_ms",
]


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("runs")
    rc = main(["train", "--iterations", "3", "--out", str(out), *FAST])
    assert rc == 0
    run_dir = out / "crllk_discrete_small_loop_s0"
    rc = main(["eval", "--run", str(run_dir), "--episodes", "3", "--seeds", "2"])
    assert rc == 0
    return run_dir


def read_rows(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ------------------------------------------------------------------- train


def test_train_artifacts(trained_run):
    assert (trained_run / "config.json").exists()
    lines = (trained_run / "stats.jsonl").read_text().splitlines()
    assert len(lines) == 3
    for i, line in enumerate(lines):
        row = json.loads(line)
        assert list(row.keys()) == STATS_KEYS
        assert row["iter"] == i
        assert row["wall_ms"] is None
    timing = (trained_run / "timing.jsonl").read_text().splitlines()
    assert len(timing) == 3
    assert all(json.loads(t)["wall_ms"] > 0 for t in timing)
    assert (trained_run / "ckpt_000000.json").exists()
    assert (trained_run / "ckpt_000003.json").exists()
    assert (trained_run / "final_params.json").exists()


def test_train_stats_rederivable_from_episode_log(trained_run):
    rows = read_rows(trained_run / "train_episodes.csv")
    assert len(rows) == 3 * 2  # iterations x (workers * episodes_per_worker)
    stats = [json.loads(l) for l in (trained_run / "stats.jsonl").read_text().splitlines()]
    for s in stats:
        mine = [r for r in rows if int(r["iter"]) == s["iter"]]
        assert s["J_R"] == pytest.approx(
            np.mean([float(r["sum_reward"]) for r in mine]), rel=1e-12
        )
        assert s["J_clane"] == pytest.approx(
            np.mean([float(r["mean_cost_lane"]) for r in mine]), rel=1e-12
        )
        assert s["J_ccoll"] == pytest.approx(
            np.mean([float(r["sum_cost_coll"]) for r in mine]), rel=1e-12
        )


def test_train_zero_iterations_writes_initial_checkpoint_only(tmp_path):
    rc = main(["train", "--iterations", "0", "--out", str(tmp_path), *FAST])
    assert rc == 0
    run_dir = tmp_path / "crllk_discrete_small_loop_s0"
    assert (run_dir / "ckpt_000000.json").exists()
    assert (run_dir / "final_params.json").exists()
    assert (run_dir / "stats.jsonl").read_text() == ""
    ck = json.loads((run_dir / "final_params.json").read_text())
    assert ck["iteration"] == 0


def test_train_repeat_is_byte_identical(tmp_path):
    args = ["train", "--iterations", "3", *FAST]
    rc = main([*args, "--out", str(tmp_path / "a")])
    rc2 = main([*args, "--out", str(tmp_path / "b")])
    assert rc == 0 and rc2 == 0
    a = (tmp_path / "a" / "crllk_discrete_small_loop_s0" / "stats.jsonl").read_bytes()
    b = (tmp_path / "b" / "crllk_discrete_small_loop_s0" / "stats.jsonl").read_bytes()
    assert a == b
    assert len(a) > 0


def test_train_invalid_settings_exit_2(tmp_path, capsys):
    assert main(["train", "--set", "nosuch=1", "--out", str(tmp_path)]) == 2
    assert "unknown config key" in capsys.readouterr().err
    assert main(["train", "--mode", "dqn", "--out", str(tmp_path)]) == 2
    assert main(["train", "--set", "iterations=-2", "--out", str(tmp_path)]) == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_numeric_abort_exit_3(tmp_path, capsys):
    rc = main(
        ["train", "--iterations", "5", "--out", str(tmp_path), *FAST,
         "--set", "eta3=1e300", "--set", "eta4=1e300"]
    )
    assert rc == 3
    err = capsys.readouterr().err
    assert "last_good.json" in err
    run_dir = tmp_path / "crllk_discrete_small_loop_s0"
    assert (run_dir / "last_good.json").exists()
    assert (run_dir / "error.json").exists()
    assert not (run_dir / "final_params.json").exists()
    ck = json.loads((run_dir / "last_good.json").read_text())
    assert all(np.isfinite(np.asarray(w)).all() for w in ck["policy"]["weights"])


def test_out_env_var_wins(tmp_path, monkeypatch):
    env_root = tmp_path / "env_root"
    monkeypatch.setenv("CRLLK_OUT", str(env_root))
    rc = main(["train", "--iterations", "1", "--out", str(tmp_path / "flag_root"), *FAST])
    assert rc == 0
    assert (env_root / "crllk_discrete_small_loop_s0" / "stats.jsonl").exists()
    assert not (tmp_path / "flag_root").exists()


# -------------------------------------------------------------------- eval


def test_eval_artifacts_and_rederivation(trained_run, capsys):
    payload = json.loads((trained_run / "eval.json").read_text())
    assert payload["track"] == "small_loop"
    assert payload["mode"] == "crllk_discrete"
    assert payload["eval_episodes"] == 3 and payload["eval_seeds"] == 2
    assert payload["stochastic"] is False
    rows = read_rows(trained_run / "eval_episodes.csv")
    assert len(rows) == 6
    for name, col in (("J_R", "J_R"), ("J_clane", "J_clane"), ("J_ccoll", "J_ccoll")):
        per_seed = [
            float(np.mean([float(r[col]) for r in rows if int(r["seed_index"]) == s]))
            for s in (0, 1)
        ]
        assert payload["metrics"][name]["per_seed"] == pytest.approx(per_seed, rel=1e-12)
        assert payload["metrics"][name]["mean"] == pytest.approx(
            float(np.mean(per_seed)), rel=1e-12
        )
    hist = payload["action_hist"]
    assert hist["kind"] == "discrete"
    assert sum(hist["counts"]) == sum(int(r["steps"]) for r in rows)


def test_eval_prints_units_conversion(trained_run, capsys):
    rc = main(["eval", "--run", str(trained_run), "--episodes", "2", "--seeds", "1"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "greedy" in out
    assert "decimeters" in out and " m)" in out


def test_eval_stochastic_flag_recorded(trained_run, tmp_path):
    rc = main(
        ["eval", "--run", str(trained_run), "--episodes", "2", "--seeds", "1",
         "--stochastic", "--out", str(tmp_path)]
    )
    assert rc == 0
    payload = json.loads((tmp_path / "eval.json").read_text())
    assert payload["stochastic"] is True


def test_eval_usage_errors(trained_run, tmp_path, capsys):
    assert main(["eval", "--checkpoint", str(trained_run / "final_params.json")]) == 2
    assert main(["eval", "--run", str(tmp_path / "missing")]) == 2
    # a config whose mode needs a different policy head is refused
    rc = main(
        ["eval", "--run", str(trained_run), "--set", "mode=crllk_continuous",
         "--out", str(tmp_path)]
    )
    assert rc == 2
    assert "head" in capsys.readouterr().err


# ----------------------------------------------------------------- compare


def test_compare_self_ties_go_to_first(trained_run, tmp_path, capsys):
    a = tmp_path / "arm_a"
    b = tmp_path / "arm_b"
    shutil.copytree(trained_run, a)
    shutil.copytree(trained_run, b)
    rc = main(["compare", str(b), str(a), "--out", str(tmp_path)])
    assert rc == 0
    result = json.loads((tmp_path / "compare.json").read_text())
    assert result["runs"] == ["arm_b", "arm_a"]
    assert all(result["best"][m] == "arm_b" for m in result["best"])  # tie -> first
    rows = read_rows(tmp_path / "compare.csv")
    assert [r["metric"] for r in rows] == ["J_clane", "J_ccoll", "J_cswt", "J_R"]
    for r in rows:
        assert float(r["arm_a"]) == float(r["arm_b"])
        assert r["best"] == "arm_b"
    out = capsys.readouterr().out
    assert "track: small_loop" in out


def test_compare_guards(trained_run, tmp_path, capsys):
    assert main(["compare", str(trained_run)]) == 2
    bare = tmp_path / "bare"
    shutil.copytree(trained_run, bare)
    (bare / "eval.json").unlink()
    rc = main(["compare", str(trained_run), str(bare), "--out", str(tmp_path)])
    assert rc == 2
    assert "crllk eval" in capsys.readouterr().err
    other = tmp_path / "other_track"
    shutil.copytree(trained_run, other)
    cfg = json.loads((other / "config.json").read_text())
    cfg["track"] = "zig_zag"
    (other / "config.json").write_text(json.dumps(cfg))
    rc = main(["compare", str(trained_run), str(other), "--out", str(tmp_path)])
    assert rc == 2
    assert "across tracks" in capsys.readouterr().err


# ------------------------------------------------------------------ curves


def _polyline_points(svg_text: str) -> int:
    m = re.search(r'polyline[^/]*points="([^"]+)"', svg_text)
    assert m, "no polyline in SVG"
    return len(m.group(1).split())


def test_curves_artifacts(trained_run, capsys):
    rc = main(["curves", str(trained_run)])
    assert rc == 0
    out_dir = trained_run / "curves"
    for key in ("lambda1", "J_clane", "J_R"):
        rows = read_rows(out_dir / f"{key}.csv")
        assert len(rows) == 3  # one per iteration
        svg = (out_dir / f"{key}.svg").read_text()
        assert _polyline_points(svg) == 3
    # histogram artifacts come from the stored evaluation
    hist_rows = read_rows(out_dir / "action_hist.csv")
    assert [r["action"] for r in hist_rows] == ["turn_left", "turn_right", "go_straight"]
    payload = json.loads((trained_run / "eval.json").read_text())
    assert [int(r["count"]) for r in hist_rows] == payload["action_hist"]["counts"]
    assert (out_dir / "action_hist.svg").exists()
    listed = capsys.readouterr().out.splitlines()
    assert str(out_dir / "lambda1.csv") in listed


def test_curves_lambda_constant_for_fixed_mode(tmp_path):
    rc = main(
        ["train", "--iterations", "2", "--mode", "fixed_discrete", "--out", str(tmp_path), *FAST]
    )
    assert rc == 0
    run_dir = tmp_path / "fixed_discrete_small_loop_s0"
    rc = main(["eval", "--run", str(run_dir), "--episodes", "1", "--seeds", "1"])
    assert rc == 0
    rc = main(["curves", str(run_dir)])
    assert rc == 0
    rows = read_rows(run_dir / "curves" / "lambda1.csv")
    assert [float(r["lambda1"]) for r in rows] == [1.0, 1.0]


def test_curves_requires_stats(tmp_path, capsys):
    empty = tmp_path / "no_stats"
    empty.mkdir()
    assert main(["curves", str(empty)]) == 2
    assert "stats.jsonl" in capsys.readouterr().err


# ------------------------------------------------------------------ tracks


def test_tracks_list(capsys):
    assert main(["tracks", "list"]) == 0
    out = capsys.readouterr().out
    for name in ("small_loop", "zig_zag", "obstacle_loop"):
        assert name in out
    line = next(l for l in out.splitlines() if l.startswith("small_loop"))
    assert "4.869" in line


def test_tracks_show_round_trips(capsys, tmp_path):
    assert main(["tracks", "show", "small_loop"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert len(data["segments"]) == 8
    assert data["closed"] is True
    # the printed JSON is itself a loadable track file
    path = tmp_path / "dumped.json"
    path.write_text(json.dumps(data))
    assert main(["tracks", "show", str(path)]) == 0
    assert main(["tracks", "show", "no_such_track"]) == 2


# -------------------------------------------------------------- entry point


def test_module_entry_point_smoke():
    proc = subprocess.run(
        [sys.executable, "-m", "crllk.cli", "tracks", "list"],
        capture_output=True,
        text=True,
        timeout=60,
    )
    assert proc.returncode == 0
    assert "small_loop" in proc.stdout
