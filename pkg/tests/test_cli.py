"""
End-to-end tests of the command line: exit codes, printed results and the
run directory layout.
"""

import csv
import os

import pytest

import ltlrl_cli

FAST_TRAIN = ["train.episodes=64", "train.horizon=20", "train.batch_size=16", "train.estimate_samples=4"]


# ======================== Helpers ========================

def run(capsys, *argv):
    code = ltlrl_cli.main(list(argv))
    return code, capsys.readouterr().out


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.reader(f))


# ======================== Oracles ========================

class TestOracle:
    def test_chain(self, capsys):
        code, out = run(capsys, "oracle", "chain", "--zeta", "0.5", "0.9", "--n-trunc", "2000")
        assert code == 0
        assert "zeta 0.5:" in out and "closed form 0.693147" in out
        assert "closed form 0.255843" in out

    def test_chain_with_accepting_states_from_three(self, capsys):
        code, out = run(capsys, "oracle", "chain", "--zeta", "0.5", "--n-trunc", "2000", "--first-accepting", "3")
        assert code == 0
        assert "closed form 0.386294" in out

    def test_hoeffding(self, capsys):
        code, out = run(capsys, "oracle", "hoeffding", "--n", "50000", "--h", "49485", "--eps", "0.0147")
        assert code == 0
        assert "Probability in [0.9750, 1.0] with confidence 1 - 4.12e-10" in out

    def test_hoeffding_rejects_a_large_epsilon(self, capsys):
        code, _ = run(capsys, "oracle", "hoeffding", "--n", "10", "--h", "1", "--eps", "0.5")
        assert code == 2

    def test_reach_and_buchi(self, capsys, repo_root):
        mdp = os.path.join(repo_root, "docs", "examples", "reach_fixture.mdp")
        code, out = run(capsys, "oracle", "reach", "--mdp", mdp, "--zeta", "0.99")
        assert code == 0
        assert "reach value (zeta 0.99) at initial state 0: 0.700000" in out
        code, out = run(capsys, "oracle", "buchi", "--mdp", mdp)
        assert code == 0
        assert "Büchi value at initial state 0: 0.700000" in out

    def test_squeeze(self, capsys):
        code, out = run(capsys, "oracle", "squeeze", "--count", "5", "--states", "4", "--actions", "2", "--tolerance", "0.05")
        assert code == 0
        assert "order violations 0, monotonicity violations 0" in out

    def test_oracle_takes_no_overrides(self):
        with pytest.raises(SystemExit) as info:
            ltlrl_cli.main(["oracle", "hoeffding", "--n", "1", "--h", "1", "--eps", "0", "seed=3"])
        assert info.value.code == 2


# ======================== Translate ========================

class TestTranslate:
    def test_builtin_automata_pass(self, capsys, config_path):
        for name in ("fixture.yaml", "cartpole.yaml", "boat.yaml"):
            code, out = run(capsys, "translate", config_path(name), "--lassos", "300")
            assert code == 0, name
            assert "automaton agreement: PASS" in out

    def test_wrong_automaton_fails(self, capsys, config_path, repo_root):
        universal = os.path.join(repo_root, "docs", "examples", "universal.ldba")
        code, out = run(capsys, "translate", config_path("fixture.yaml"), "--lassos", "300", f"spec.automaton={universal}")
        assert code == 1
        assert "automaton agreement: FAIL" in out

    def test_syntax_error(self, capsys, config_path):
        code, out = run(capsys, "translate", config_path("fixture.yaml"), "--formula", "t U")
        assert code == 2
        assert "LtlSyntaxError" in out

    def test_unknown_proposition(self, capsys, config_path):
        code, _ = run(capsys, "translate", config_path("fixture.yaml"), "--formula", "<>z")
        assert code == 2


# ======================== Runs ========================

class TestRuns:
    def test_train_writes_the_run_directory(self, capsys, config_path, tmp_path):
        out_dir = tmp_path / "fixture"
        code, out = run(capsys, "train", config_path("fixture.yaml"), "--out", str(out_dir), *FAST_TRAIN)
        assert code == 0
        assert "Stage 0 (zeta 0.9)" in out
        for name in ("config.yaml", "metrics.csv", "stages.csv", "stage_0/actor.safetensors", "stage_0/critic.safetensors"):
            assert (out_dir / name).exists(), name
        metrics = read_rows(out_dir / "metrics.csv")
        assert metrics[0] == ["stage", "phase", "episode", "return_mean", "actor_loss", "critic_loss", "estimate"]
        assert [row[2] for row in metrics[1:]] == ["16", "32", "48", "64"]

    def test_same_seed_same_metrics(self, capsys, config_path, tmp_path):
        for name in ("first", "second"):
            assert run(capsys, "train", config_path("fixture.yaml"), "--out", str(tmp_path / name), *FAST_TRAIN)[0] == 0
        assert read_rows(tmp_path / "first" / "metrics.csv") == read_rows(tmp_path / "second" / "metrics.csv")

    def test_guided_train_cartpole(self, capsys, config_path, tmp_path):
        out_dir = tmp_path / "cartpole"
        overrides = ["train.episodes=48", "train.horizon=10", "train.batch_size=8", "train.estimate_samples=4"]
        code, out = run(capsys, "guided-train", config_path("cartpole.yaml"), "--out", str(out_dir), *overrides)
        assert code == 0
        for stage in range(3):
            assert (out_dir / f"stage_{stage}" / "actor.safetensors").exists()
            assert f"Stage {stage} (zeta 0.999)" in out
        stages = read_rows(out_dir / "stages.csv")
        assert stages[0] == ["stage", "radius", "zeta", "episodes", "estimate", "probe_0"]
        assert [row[3] for row in stages[1:]] == ["16", "16", "16"]

    def test_evaluate_untrained_and_trained(self, capsys, config_path, tmp_path):
        out_dir = str(tmp_path / "fixture")
        evaluation = ["eval.trajectories=200", "eval.horizon=10"]
        code, out = run(capsys, "evaluate", config_path("fixture.yaml"), "--out", out_dir, *evaluation)
        assert code == 0
        assert "Satisfied:" in out
        assert "Probability in [" in out
        header, row = read_rows(os.path.join(out_dir, "summary.csv"))
        assert row[0] == "200"
        assert "fail:<>t" in header
        assert len(read_rows(os.path.join(out_dir, "trajectories.csv"))) == 1 + 100 * 10

        assert run(capsys, "train", config_path("fixture.yaml"), "--out", out_dir, *FAST_TRAIN)[0] == 0
        code, out = run(capsys, "evaluate", config_path("fixture.yaml"), "--out", out_dir, *evaluation)
        assert code == 0
        assert "No checkpoint found" not in out


# ======================== Errors ========================

class TestErrors:
    def test_unknown_key(self, capsys, config_path, tmp_path):
        code, out = run(capsys, "train", config_path("fixture.yaml"), "--out", str(tmp_path), "train.no_such_key=1")
        assert code == 2
        assert "ConfigError" in out

    def test_mistyped_value(self, capsys, config_path, tmp_path):
        code, _ = run(capsys, "train", config_path("fixture.yaml"), "--out", str(tmp_path), "train.episodes=many")
        assert code == 2

    def test_missing_config(self, capsys, tmp_path):
        code, _ = run(capsys, "train", str(tmp_path / "missing.yaml"))
        assert code == 2

    def test_no_command(self, capsys):
        with pytest.raises(SystemExit) as info:
            ltlrl_cli.main([])
        assert info.value.code == 2
        assert "usage" in capsys.readouterr().out
