import json
import os

import numpy as np
import pytest

from polaron1d import cli, runner
from polaron1d.config import validate_config
from polaron1d.errors import ConfigurationError

MINIMAL = """
[system]
n_bath = 100
"""

EFFPOT_FAST = """
[system]
n_bath = 100
g_bb = 0.5
g_bi_final = 0.25
[time]
dt = 0.05
t_max = 60
record_every = 1
[solver]
tier = effpot
[solver.effpot]
source = tf
n_eig = 40
[output]
directory = {outdir}
"""


class TestValidateConfig:
    def test_minimal_defaults(self):
        cfg = validate_config(MINIMAL)
        assert cfg.n_points == 450
        assert cfg.x_max == 40.0
        assert cfg.dt == 5e-4
        assert cfg.t_max == 100.0
        assert cfg.tier == "meanfield"
        assert cfg.alpha == pytest.approx(1 / np.sqrt(2))

    def test_unnormalized_weights_rejected(self):
        text = MINIMAL + "alpha = 0.8\nbeta = 0.8\n"
        with pytest.raises(ConfigurationError, match="alpha"):
            validate_config(text)

    def test_negative_coupling_rejected(self):
        with pytest.raises(ConfigurationError, match="g_bb"):
            validate_config("[system]\ng_bb = -0.5\n")

    def test_errors_are_collected_with_lines(self):
        text = "\n".join(
            [
                "[system]",
                "g_bb = -1",
                "bogus = 3",
                "[grid]",
                "n_points = banana",
            ]
        )
        with pytest.raises(ConfigurationError) as err:
            validate_config(text)
        messages = err.value.errors
        assert any("line 3" in m for m in messages)
        assert any("line 5" in m for m in messages)
        assert any("g_bb" in m for m in messages)
        assert len(messages) >= 3

    def test_unknown_section(self):
        with pytest.raises(ConfigurationError, match="unknown section"):
            validate_config("[nope]\nx = 1\n")

    def test_duplicate_key(self):
        with pytest.raises(ConfigurationError, match="duplicate"):
            validate_config("[system]\ng_bb = 0.5\ng_bb = 0.6\n")

    def test_output_dir_env_override(self, monkeypatch):
        monkeypatch.setenv("OUTPUT_DIR", "/tmp/envdir")
        cfg = validate_config(MINIMAL)
        assert cfg.directory == "/tmp/envdir"

    def test_comments_and_blank_lines(self):
        cfg = validate_config("# comment\n\n[system]\nn_bath = 7  # inline\n")
        assert cfg.n_bath == 7


class TestCsvRoundTrip:
    def test_full_precision(self, tmp_path):
        path = str(tmp_path / "series.csv")
        values = np.array([1.0 / 3.0, np.pi, 1e-17, 123456.789012345678])
        runner._write_csv(path, ["a"], [values])
        _, data = runner.read_csv(path)
        assert np.array_equal(data[:, 0], values)


class TestRunnerPipelines:
    def test_effpot_quench_outputs(self, tmp_path):
        outdir = str(tmp_path / "run")
        cfg = validate_config(EFFPOT_FAST.format(outdir=outdir))
        summary = runner.run_quench(cfg)
        for name in ("contrast.csv", "spectrum.csv", "densities.csv",
                     "energies.csv", "summary.json", "manifest.json"):
            assert os.path.exists(os.path.join(outdir, name)), name
        tallest = max(summary["peaks"], key=lambda p: p["height"])
        assert tallest["omega"] == pytest.approx(4.435, rel=0.05)
        manifest = json.load(open(os.path.join(outdir, "manifest.json")))
        assert manifest["status"] == "ok"
        assert set(manifest["outputs"]) == {
            "contrast.csv", "spectrum.csv", "densities.csv", "energies.csv",
            "summary.json",
        }

    def test_determinism_across_reruns(self, tmp_path):
        out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
        cfg1 = validate_config(EFFPOT_FAST.format(outdir=out1))
        cfg2 = validate_config(EFFPOT_FAST.format(outdir=out2))
        runner.run_quench(cfg1)
        runner.run_quench(cfg2)
        m1 = json.load(open(os.path.join(out1, "manifest.json")))["outputs"]
        m2 = json.load(open(os.path.join(out2, "manifest.json")))["outputs"]
        assert m1 == m2

    def test_ed_quench_small(self, tmp_path):
        outdir = str(tmp_path / "ed")
        cfg = validate_config(
            "\n".join(
                [
                    "[system]",
                    "n_bath = 2",
                    "g_bb = 0.5",
                    "g_bi_final = 1.0",
                    "[time]",
                    "dt = 0.1",
                    "t_max = 10",
                    "record_every = 5",
                    "[solver]",
                    "tier = ed",
                    "[solver.ed]",
                    "n_modes = 6",
                    f"[output]",
                    f"directory = {outdir}",
                ]
            )
        )
        summary = runner.run_quench(cfg)
        assert summary["min_contrast"] <= 1.0 + 1e-12
        assert os.path.exists(os.path.join(outdir, "entropy.csv"))
        assert summary["norm_drift"] < 1e-9

    def test_meanfield_quench_unquenched_contrast(self, tmp_path):
        outdir = str(tmp_path / "mf")
        cfg = validate_config(
            "\n".join(
                [
                    "[system]",
                    "n_bath = 100",
                    "g_bb = 0.5",
                    "g_bi_final = 0.0",
                    "[time]",
                    "dt = 5e-4",
                    "t_max = 2",
                    "record_every = 400",
                    "[solver]",
                    "tier = meanfield",
                    "[output]",
                    f"directory = {outdir}",
                ]
            )
        )
        summary = runner.run_quench(cfg)
        header, data = runner.read_csv(os.path.join(outdir, "contrast.csv"))
        abs_col = data[:, header.index("abs_s")]
        assert np.max(np.abs(abs_col - 1.0)) < 1e-8
        assert summary["norm_drift"] < 1e-10
        assert os.path.exists(os.path.join(outdir, "energies.csv"))

    def test_ed_quench_default_scale(self, tmp_path):
        outdir = str(tmp_path / "ed4")
        cfg = validate_config(
            "\n".join(
                [
                    "[system]",
                    "n_bath = 4",
                    "g_bb = 0.5",
                    "g_bi_final = 1.0",
                    "[time]",
                    "dt = 0.1",
                    "t_max = 10",
                    "record_every = 2",
                    "[solver]",
                    "tier = ed",
                    "[solver.ed]",
                    "n_modes = 10",
                    "[output]",
                    f"directory = {outdir}",
                ]
            )
        )
        summary = runner.run_quench(cfg)
        header, data = runner.read_csv(os.path.join(outdir, "contrast.csv"))
        assert np.max(data[:, header.index("abs_s")]) <= 1.0 + 1e-10
        assert summary["energy_drift"] < 1e-8

    def test_breathing_effpot(self, tmp_path):
        outdir = str(tmp_path / "br")
        cfg = validate_config(
            "\n".join(
                [
                    "[system]",
                    "n_bath = 100",
                    "g_bb = 0.5",
                    "g_bi_final = 0.0",
                    "omega_i_initial = 0.95",
                    "omega_i_final = 1.0",
                    "[time]",
                    "dt = 0.02",
                    "t_max = 60",
                    "[solver]",
                    "tier = effpot",
                    "[solver.effpot]",
                    "source = tf",
                    "[output]",
                    f"directory = {outdir}",
                ]
            )
        )
        payload = runner.run_breathing(cfg)
        assert payload["omega_br"] == pytest.approx(2.0, rel=0.01)
        assert os.path.exists(os.path.join(outdir, "variance.csv"))
        assert os.path.exists(os.path.join(outdir, "omega_br.json"))

    def test_relax_pipeline(self, tmp_path):
        outdir = str(tmp_path / "rx")
        cfg = validate_config(
            "[system]\nn_bath = 100\ng_bb = 0.5\n"
            f"[output]\ndirectory = {outdir}\n"
        )
        summary = runner.run_relax(cfg)
        assert summary["virial_relative"] < 1e-5
        assert summary["mu_bath"] == pytest.approx(summary["tf_mu"], rel=0.02)
        for name in ("densities.csv", "energies.csv", "summary.json", "manifest.json"):
            assert os.path.exists(os.path.join(outdir, name)), name

    def test_breathing_meanfield_tier(self, tmp_path):
        outdir = str(tmp_path / "brmf")
        cfg = validate_config(
            "\n".join(
                [
                    "[system]",
                    "n_bath = 100",
                    "g_bb = 0.5",
                    "g_bi_final = 0.0",
                    "omega_i_initial = 0.95",
                    "omega_i_final = 1.0",
                    "[time]",
                    "dt = 5e-4",
                    "t_max = 16",
                    "record_every = 40",
                    "[solver]",
                    "tier = meanfield",
                    "[output]",
                    f"directory = {outdir}",
                ]
            )
        )
        payload = runner.run_breathing(cfg)
        assert payload["omega_br"] == pytest.approx(2.0, rel=0.02)

    def test_breathing_requires_frequency_change(self, tmp_path):
        cfg = validate_config(MINIMAL + f"[output]\ndirectory = {tmp_path}/x\n")
        with pytest.raises(ConfigurationError):
            runner.run_breathing(cfg)

    def test_sweep_requires_values(self, tmp_path):
        cfg = validate_config(MINIMAL + f"[output]\ndirectory = {tmp_path}/s\n")
        with pytest.raises(ConfigurationError, match="value"):
            runner.run_sweep(cfg, parameter="g_bi_final", values=[])

    def test_sweep_parallel_jobs(self, tmp_path):
        outdir = str(tmp_path / "swp")
        cfg = validate_config(
            EFFPOT_FAST.format(outdir=outdir)
            + "[sweep]\nparameter = g_bi_final\nvalues = 0.2, 0.3\n"
        )
        agg, results = runner.run_sweep(cfg, jobs=2)
        assert not agg["failures"]
        _, data = runner.read_csv(os.path.join(outdir, "aggregate.csv"))
        assert data.shape[0] == 2
        assert np.all(data[:, 1] == 1.0)

    def test_sweep_identical_values_identical_checksums(self, tmp_path):
        outdir = str(tmp_path / "sw")
        cfg = validate_config(
            EFFPOT_FAST.format(outdir=outdir)
            + "[sweep]\nparameter = g_bi_final\nvalues = 0.25, 0.25\n"
        )
        agg, results = runner.run_sweep(cfg)
        assert not agg["failures"]
        m0 = json.load(open(os.path.join(outdir, "g_bi_final_000", "manifest.json")))
        m1 = json.load(open(os.path.join(outdir, "g_bi_final_001", "manifest.json")))
        assert m0["outputs"] == m1["outputs"]

    def test_effpot_file_density_source(self, tmp_path):
        from polaron1d import meanfield as mf

        profile = mf.thomas_fermi(mf.MeanFieldSystem(n_bath=100, g_bb=0.5, g_bi=0.0))
        xs = np.linspace(-8.0, 8.0, 600)
        sample = tmp_path / "bath_density.txt"
        np.savetxt(sample, np.column_stack([xs, profile.density_values(xs)]))
        outdir = str(tmp_path / "filerun")
        cfg = validate_config(EFFPOT_FAST.format(outdir=outdir))
        cfg.source = str(sample)
        summary = runner.run_quench(cfg)
        assert summary["source"] == "externally-supplied"
        tallest = max(summary["peaks"], key=lambda p: p["height"])
        assert tallest["omega"] == pytest.approx(4.435, rel=0.05)

    def test_analyze_round_trip(self, tmp_path):
        outdir = str(tmp_path / "run")
        cfg = validate_config(EFFPOT_FAST.format(outdir=outdir))
        summary = runner.run_quench(cfg)
        outdir2 = str(tmp_path / "re")
        cfg2 = validate_config(EFFPOT_FAST.format(outdir=outdir2))
        re_summary = runner.run_analyze(os.path.join(outdir, "contrast.csv"), cfg2)
        a = max(summary["peaks"], key=lambda p: p["height"])["omega"]
        b = max(re_summary["peaks"], key=lambda p: p["height"])["omega"]
        assert a == pytest.approx(b, abs=1e-12)

    def test_failed_run_writes_failed_manifest(self, tmp_path):
        outdir = str(tmp_path / "fail")
        cfg = validate_config(EFFPOT_FAST.format(outdir=outdir))
        cfg.source = str(tmp_path / "missing.txt")
        with pytest.raises(Exception):
            runner.run_quench(cfg)
        manifest = json.load(open(os.path.join(outdir, "manifest.json")))
        assert manifest["status"] == "failed"


class TestCli:
    def _write_cfg(self, tmp_path, text):
        path = tmp_path / "exp.cfg"
        path.write_text(text)
        return str(path)

    def test_validate_command(self, tmp_path, capsys):
        path = self._write_cfg(tmp_path, MINIMAL)
        code = cli.main(["validate", "--config", path])
        assert code == 0
        echoed = json.loads(capsys.readouterr().out)
        assert echoed["n_points"] == 450

    def test_bad_config_exit_code(self, tmp_path, capsys):
        path = self._write_cfg(tmp_path, "[system]\ng_bb = -2\n")
        assert cli.main(["validate", "--config", path]) == 2
        assert "g_bb" in capsys.readouterr().err

    def test_missing_file_exit_code(self, capsys):
        assert cli.main(["validate", "--config", "/nonexistent.cfg"]) == 2

    def test_quench_and_analyze_commands(self, tmp_path, capsys):
        outdir = str(tmp_path / "out")
        path = self._write_cfg(tmp_path, EFFPOT_FAST.format(outdir=outdir))
        assert cli.main(["quench", "--config", path]) == 0
        contrast = os.path.join(outdir, "contrast.csv")
        outdir2 = str(tmp_path / "re")
        assert cli.main(["analyze", "--config", path, "--output", outdir2, contrast]) == 0
        assert os.path.exists(os.path.join(outdir2, "summary.json"))

    def test_tier_override(self, tmp_path):
        outdir = str(tmp_path / "out")
        path = self._write_cfg(
            tmp_path,
            EFFPOT_FAST.format(outdir=outdir).replace("tier = effpot", "tier = meanfield"),
        )
        cfg_text = open(path).read()
        assert "meanfield" in cfg_text
        code = cli.main(["validate", "--config", path, "--tier", "effpot"])
        assert code == 0
