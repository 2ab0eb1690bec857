import json
from pathlib import Path

import pytest
import yaml
from click.testing import CliRunner

from nestflow.backends import (
    BackendRequest,
    ChatTurn,
    RemoteBackend,
    ResponseCache,
    ScriptedBackend,
    cached_complete,
)
from nestflow.cli import load_backend_profile, main
from nestflow.errors import ConfigError

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"
PROFILES = FIXTURES / "profiles.yaml"
PROBLEMS = FIXTURES / "problems"


@pytest.fixture
def runner():
    return CliRunner()


def write_profiles(tmp_path, profiles):
    path = tmp_path / "profiles.yaml"
    path.write_text(yaml.safe_dump({"profiles": profiles}), encoding="utf-8")
    return path


class TestLoadBackendProfile:
    def test_scripted_rules_profile(self):
        backend, cache, model = load_backend_profile(PROFILES, "scripted")
        assert isinstance(backend, ScriptedBackend)
        assert cache is None
        assert model == "scripted"

    def test_scripted_responses_profile(self, tmp_path):
        path = write_profiles(tmp_path, {
            "canned": {"kind": "scripted", "responses": ["hello"]}})
        backend, cache, model = load_backend_profile(path, "canned")
        assert isinstance(backend, ScriptedBackend)
        assert model == "default"

    def test_remote_profile(self, tmp_path):
        path = write_profiles(tmp_path, {
            "api": {"kind": "remote", "model": "m", "endpoint": "https://x/v1",
                    "api_key_env": "X_KEY", "cache_dir": "cache"}})
        backend, cache, model = load_backend_profile(path, "api")
        assert isinstance(backend, RemoteBackend)
        assert cache is not None and model == "m"

    def test_errors(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read profiles file"):
            load_backend_profile(tmp_path / "none.yaml", "scripted")
        with pytest.raises(ConfigError, match="no profile 'missing'"):
            load_backend_profile(PROFILES, "missing")
        path = write_profiles(tmp_path, {"odd": {"kind": "telepathic"}})
        with pytest.raises(ConfigError, match="unknown kind 'telepathic'"):
            load_backend_profile(path, "odd")
        path = write_profiles(tmp_path, {"bare": {"kind": "scripted"}})
        with pytest.raises(ConfigError, match="needs rules_file or responses"):
            load_backend_profile(path, "bare")
        path = write_profiles(tmp_path, {"half": {"kind": "remote",
                                                  "api_key_env": "K"}})
        with pytest.raises(ConfigError, match="needs 'endpoint'"):
            load_backend_profile(path, "half")


class TestCmdRun:
    def run_args(self, problem, variant, **extra):
        args = ["run", "--problem", str(PROBLEMS / f"{problem}.yaml"),
                "--variant", variant, "--profiles", str(PROFILES),
                "--wall-time", "2.0"]
        for key, value in extra.items():
            args += [f"--{key.replace('_', '-')}", str(value)]
        return args

    def test_solved_problem_exits_zero(self, runner):
        result = runner.invoke(main, self.run_args("cf-echo-101", "Code"))
        assert result.exit_code == 0, result.output
        assert "problem: cf-echo-101" in result.output
        assert "rounds_used: 1" in result.output
        assert "program:" in result.output
        assert "solved: true" in result.output

    def test_unsolved_problem_exits_one(self, runner):
        result = runner.invoke(main, self.run_args("cf-pairsum-202", "Code"))
        assert result.exit_code == 1, result.output
        assert "solved: false" in result.output

    def test_out_dir_writes_trace(self, runner, tmp_path):
        result = runner.invoke(main, self.run_args("cf-echo-101", "Code",
                                                   out=tmp_path / "one"))
        assert result.exit_code == 0, result.output
        assert (tmp_path / "one" / "cf-echo-101" / "Code" / "trace.log").exists()
        assert "program:" in result.output

    def test_unknown_variant_is_usage_error(self, runner):
        result = runner.invoke(main, self.run_args("cf-echo-101", "Cod"))
        assert result.exit_code == 2
        assert "error:" in result.stderr
        assert "did you mean 'Code'" in result.stderr

    def test_missing_problem_file_is_usage_error(self, runner):
        result = runner.invoke(main, ["run", "--problem", "no-such.yaml",
                                      "--variant", "Code"])
        assert result.exit_code == 2

    def test_missing_credential_is_environment_error(self, runner, tmp_path,
                                                     monkeypatch):
        monkeypatch.delenv("MISSING_KEY", raising=False)
        profiles = write_profiles(tmp_path, {
            "api": {"kind": "remote", "endpoint": "https://localhost/v1",
                    "api_key_env": "MISSING_KEY"}})
        result = runner.invoke(main, ["run", "--problem",
                                      str(PROBLEMS / "cf-echo-101.yaml"),
                                      "--variant", "Code",
                                      "--profiles", str(profiles),
                                      "--backend-profile", "api"])
        assert result.exit_code == 3
        assert "error:" in result.stderr

    def test_interactive_plan_reads_stdin(self, runner, tmp_path):
        profiles = write_profiles(tmp_path, {
            "canned": {"kind": "scripted",
                       "responses": ["```python\nprint(int(input()))\n```"]}})
        result = runner.invoke(
            main,
            ["run", "--problem", str(PROBLEMS / "cf-echo-101.yaml"),
             "--variant", "Plan_Oracle-Code", "--profiles", str(profiles),
             "--backend-profile", "canned", "--interactive-plan",
             "--wall-time", "2.0"],
            input="echo the number back\nEOF\n")
        assert result.exit_code == 0, result.output
        assert "Enter the conceptual solution" in result.output
        assert "solved: true" in result.output


@pytest.fixture(scope="module")
def eval_dir(tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("eval")
    runner = CliRunner()
    result = runner.invoke(main, [
        "eval", "--dataset", str(PROBLEMS / "cf-echo-101.yaml"),
        "--variants", "Code,Code_Reflection", "--profiles", str(PROFILES),
        "--out", str(out_dir), "--wall-time", "2.0"])
    assert result.exit_code == 0, result.output
    return out_dir, result


class TestCmdEval:
    def test_grid_summary_and_reports(self, eval_dir):
        out_dir, result = eval_dir
        assert "2 records (2 new runs)" in result.output
        assert (out_dir / "records.jsonl").as_posix() in result.output
        assert "Flow" in result.output
        for name in ("records.jsonl", "run_meta.json", "results_table.txt",
                     "results_table.csv", "temporal_series.csv"):
            assert (out_dir / name).exists()

    def test_records_are_jsonl(self, eval_dir):
        out_dir, _ = eval_dir
        lines = (out_dir / "records.jsonl").read_text(encoding="utf-8").splitlines()
        assert len(lines) == 2
        assert {json.loads(line)["variant"] for line in lines} == {
            "Code", "Code_Reflection"}

    def test_resume_runs_nothing(self, runner, eval_dir):
        out_dir, _ = eval_dir
        result = runner.invoke(main, [
            "eval", "--dataset", str(PROBLEMS / "cf-echo-101.yaml"),
            "--variants", "Code,Code_Reflection", "--profiles", str(PROFILES),
            "--out", str(out_dir), "--wall-time", "2.0"])
        assert result.exit_code == 0, result.output
        assert "2 records (0 new runs)" in result.output

    def test_bad_cutoff_is_usage_error(self, runner, tmp_path):
        result = runner.invoke(main, [
            "eval", "--dataset", str(PROBLEMS / "cf-echo-101.yaml"),
            "--profiles", str(PROFILES), "--out", str(tmp_path),
            "--cutoff", "whenever"])
        assert result.exit_code == 2
        assert "error:" in result.stderr

    def test_unknown_variant_is_usage_error(self, runner, tmp_path):
        result = runner.invoke(main, [
            "eval", "--dataset", str(PROBLEMS / "cf-echo-101.yaml"),
            "--variants", "Code,Nope", "--profiles", str(PROFILES),
            "--out", str(tmp_path)])
        assert result.exit_code == 2


class TestCmdReport:
    def test_regenerates_table(self, runner, eval_dir):
        out_dir, _ = eval_dir
        before = (out_dir / "results_table.txt").read_bytes()
        result = runner.invoke(main, ["report", "--run-dir", str(out_dir)])
        assert result.exit_code == 0, result.output
        assert "Flow" in result.output
        assert (out_dir / "results_table.txt").read_bytes() == before

    def test_incomplete_dir_is_usage_error(self, runner, tmp_path):
        result = runner.invoke(main, ["report", "--run-dir", str(tmp_path)])
        assert result.exit_code == 2
        assert "run directory is incomplete" in result.stderr


class TestCmdReplay:
    def test_identical_replay_exits_zero(self, runner, eval_dir):
        out_dir, _ = eval_dir
        result = runner.invoke(main, [
            "replay", "--run-dir", str(out_dir),
            "--problem-id", "cf-echo-101", "--variant", "Code_Reflection"])
        assert result.exit_code == 0, result.output
        assert "replay identical:" in result.output

    def test_missing_trace_is_usage_error(self, runner, eval_dir):
        out_dir, _ = eval_dir
        result = runner.invoke(main, [
            "replay", "--run-dir", str(out_dir),
            "--problem-id", "cf-echo-101", "--variant", "Code_Debug"])
        assert result.exit_code == 2
        assert "no trace at" in result.stderr


class TestCmdCache:
    def test_stats_and_clear(self, runner, tmp_path):
        cache_dir = tmp_path / "cache"
        cache = ResponseCache(cache_dir)
        request = BackendRequest(model="m", turns=[ChatTurn("user", "hi")])
        cached_complete(ScriptedBackend(responses=["yo"]), request, cache)

        result = runner.invoke(main, ["cache", "stats", "--cache-dir", str(cache_dir)])
        assert result.exit_code == 0
        assert "entries: 1" in result.output

        result = runner.invoke(main, ["cache", "clear", "--cache-dir", str(cache_dir)])
        assert result.exit_code == 0
        assert "removed: 1" in result.output

        result = runner.invoke(main, ["cache", "stats", "--cache-dir", str(cache_dir)])
        assert "entries: 0" in result.output
        assert "bytes: 0" in result.output
