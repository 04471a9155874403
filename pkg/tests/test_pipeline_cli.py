import json

import pytest
from click.testing import CliRunner

from timewarp.cli import main
from timewarp.errors import ConfigError, StageDependencyMissing
from timewarp.ioutil import read_jsonl, write_jsonl
from timewarp.pipeline import STAGES, Pipeline, RunConfig


def _write_config(tmp_path, corpus_path, out_dir, extra=""):
    cfg = tmp_path / "run.toml"
    cfg.write_text(
        f"""
[corpus]
path = "{corpus_path}"
format = "canonical-jsonl"

[run]
output_dir = "{out_dir}"
seed = 7
dry_run = true

[backend]
kind = "mock"
{extra}
""",
        "utf-8",
    )
    return cfg


@pytest.fixture()
def config_path(tmp_path, fixture_corpus_path):
    return _write_config(tmp_path, fixture_corpus_path, tmp_path / "out")


class TestRunConfig:
    def test_parses_sections(self, config_path, fixture_corpus_path):
        cfg = RunConfig.from_toml(config_path)
        assert cfg.corpus_path == str(fixture_corpus_path)
        assert cfg.seed == 7
        assert cfg.dry_run is True
        assert cfg.backend_kind == "mock"
        assert cfg.max_s == 105.0
        assert cfg.shuffle_fraction == 0.522

    def test_overrides_win(self, config_path):
        cfg = RunConfig.from_toml(config_path, seed=99, output_dir="elsewhere")
        assert cfg.seed == 99
        assert cfg.output_dir == "elsewhere"

    def test_none_overrides_ignored(self, config_path):
        assert RunConfig.from_toml(config_path, seed=None).seed == 7

    def test_missing_corpus_path(self, tmp_path):
        bad = tmp_path / "bad.toml"
        bad.write_text("[run]\nseed = 1\n", "utf-8")
        with pytest.raises(ConfigError):
            RunConfig.from_toml(bad)

    def test_malformed_toml(self, tmp_path):
        bad = tmp_path / "bad.toml"
        bad.write_text("[corpus\npath=", "utf-8")
        with pytest.raises(ConfigError):
            RunConfig.from_toml(bad)

    def test_unknown_backend_rejected(self, config_path):
        cfg = RunConfig.from_toml(config_path)
        cfg.backend_kind = "telepathy"
        with pytest.raises(ConfigError):
            Pipeline(cfg)

    def test_http_backend_requires_endpoint(self, config_path):
        cfg = RunConfig.from_toml(config_path)
        cfg.backend_kind = "http_openai_compatible"
        with pytest.raises(ConfigError):
            Pipeline(cfg)


class TestPipeline:
    def test_full_run_then_skip(self, config_path, tmp_path):
        pipe = Pipeline(RunConfig.from_toml(config_path))
        first = pipe.run_all()
        assert set(first) == set(STAGES)
        assert all(status == "ok" for status in first.values())
        again = Pipeline(RunConfig.from_toml(config_path)).run_all()
        assert all(status == "skipped (up-to-date)" for status in again.values())

    def test_manifest_records_every_stage(self, config_path, tmp_path):
        pipe = Pipeline(RunConfig.from_toml(config_path))
        pipe.run_all()
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text("utf-8"))
        assert set(manifest["stages"]) == set(STAGES)
        for entry in manifest["stages"].values():
            assert "wall_time_s" in entry
            assert "config_digest" in entry
            for digest in entry["outputs"].values():
                assert digest and len(digest) == 64

    def test_deleted_output_regenerates(self, config_path, tmp_path):
        pipe = Pipeline(RunConfig.from_toml(config_path))
        pipe.run_all()
        (tmp_path / "out" / "clips.jsonl").unlink()
        pipe2 = Pipeline(RunConfig.from_toml(config_path))
        assert pipe2.run_stage("trim") == "ok"
        assert pipe2.run_stage("permute") == "skipped (up-to-date)"  # same bytes came back

    def test_edited_input_invalidates_downstream(self, config_path, tmp_path):
        pipe = Pipeline(RunConfig.from_toml(config_path))
        pipe.run_all()
        clips_path = tmp_path / "out" / "clips.jsonl"
        rows = read_jsonl(clips_path)
        write_jsonl(clips_path, rows[:-1])
        pipe2 = Pipeline(RunConfig.from_toml(config_path))
        assert pipe2.run_stage("permute") == "ok"

    def test_config_change_invalidates(self, config_path, tmp_path):
        pipe = Pipeline(RunConfig.from_toml(config_path))
        pipe.run_all()
        pipe2 = Pipeline(RunConfig.from_toml(config_path, seed=8))
        assert pipe2.run_stage("permute") == "ok"

    def test_missing_dependency_names_producer(self, config_path):
        pipe = Pipeline(RunConfig.from_toml(config_path))
        with pytest.raises(StageDependencyMissing) as exc:
            pipe.run_stage("to-kto")
        assert "gen-explicit" in str(exc.value)

    def test_kto_is_four_per_pair(self, config_path, tmp_path):
        Pipeline(RunConfig.from_toml(config_path)).run_all()
        out = tmp_path / "out"
        n_dpo = len(read_jsonl(out / "dpo_explicit.jsonl"))
        n_kto = len(read_jsonl(out / "kto.jsonl"))
        assert n_dpo > 0
        assert n_kto == 4 * n_dpo

    def test_report_figures_written(self, config_path, tmp_path):
        Pipeline(RunConfig.from_toml(config_path)).run_all()
        out = tmp_path / "out"
        for name in ("stats.png", "difficulty.png", "score_mcqa.png", "probe_grades.png"):
            data = (out / name).read_bytes()
            assert data[:8] == b"\x89PNG\r\n\x1a\n"
        assert (out / "stats.txt").read_text("utf-8")


class TestCli:
    def test_stage_subcommands_exist(self):
        runner = CliRunner()
        result = runner.invoke(main, ["--help"])
        for stage in STAGES:
            assert stage in result.output
        assert "run-all" in result.output

    def test_run_all_and_resume(self, config_path):
        runner = CliRunner()
        first = runner.invoke(main, ["run-all", "--config", str(config_path)])
        assert first.exit_code == 0, first.output
        assert first.output.count(": ok") == len(STAGES)
        second = runner.invoke(main, ["run-all", "--config", str(config_path)])
        assert second.exit_code == 0
        assert second.output.count("skipped (up-to-date)") == len(STAGES)

    def test_single_stage_invocation(self, config_path):
        runner = CliRunner()
        result = runner.invoke(main, ["ingest", "--config", str(config_path)])
        assert result.exit_code == 0
        assert "ingest: ok" in result.output

    def test_missing_dependency_exits_3(self, config_path):
        runner = CliRunner()
        result = runner.invoke(main, ["merge", "--config", str(config_path)])
        assert result.exit_code == 3
        assert "gen-explicit" in result.output

    def test_config_error_exits_2(self, tmp_path):
        bad = tmp_path / "bad.toml"
        bad.write_text("[run]\nseed = 1\n", "utf-8")
        runner = CliRunner()
        result = runner.invoke(main, ["ingest", "--config", str(bad)])
        assert result.exit_code == 2
        assert "config error" in result.output

    def test_bad_corpus_path_exits_3(self, tmp_path):
        cfg = _write_config(tmp_path, tmp_path / "missing.jsonl", tmp_path / "out")
        runner = CliRunner()
        result = runner.invoke(main, ["ingest", "--config", str(cfg)])
        assert result.exit_code == 3

    def test_verify_loss_batch_mode(self, tmp_path):
        batch = tmp_path / "batch.jsonl"
        write_jsonl(batch, [{"lw_t": -1.0, "ll_t": -1.0, "lw_r": -1.0, "ll_r": -1.0, "lambda": 1.0}])
        runner = CliRunner()
        result = runner.invoke(main, ["verify-loss", "--batch", str(batch)])
        assert result.exit_code == 0
        payload = json.loads(result.output)
        assert payload["loss"] == pytest.approx(0.6931471805599453)
        assert payload["grads"][0]["logp_w_theta"] == pytest.approx(-0.5)

    def test_verify_loss_requires_config_or_batch(self):
        runner = CliRunner()
        result = runner.invoke(main, ["verify-loss"])
        assert result.exit_code == 2

    def test_output_dir_override(self, config_path, tmp_path):
        runner = CliRunner()
        alt = tmp_path / "alt_out"
        result = runner.invoke(
            main, ["ingest", "--config", str(config_path), "--output-dir", str(alt)]
        )
        assert result.exit_code == 0
        assert (alt / "corpus.jsonl").exists()
