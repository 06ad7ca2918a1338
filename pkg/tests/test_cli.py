"""Config parsing, presets, output writing and manifests."""
import math

import numpy as np
import pytest

from jctrap.cli import (
    PRESET_NAMES,
    main,
    parse_alpha_token,
    parse_config,
    parse_kv_file,
    preset,
)
from jctrap.dynamics import CouplingParams, critical_spread, trapping_time
from jctrap.errors import ConfigError
from jctrap.fock import coherent_state

G1 = CouplingParams(1.0)


class TestAlphaTokens:
    def test_plain_number(self):
        assert parse_alpha_token("3") == 3.0

    def test_sqrt_expression(self):
        assert parse_alpha_token("sqrt21") == math.sqrt(21.0)

    def test_bad_tokens(self):
        with pytest.raises(ConfigError):
            parse_alpha_token("sqrt-x")
        with pytest.raises(ConfigError):
            parse_alpha_token("threeish")


class TestPresets:
    def test_names(self):
        assert PRESET_NAMES == (
            "fig1a", "fig1b", "fig1c", "fig1d", "fig2a", "fig2b", "fig3ab", "fig3cd", "fig4",
        )

    def test_fig2a_values(self):
        parsed = preset("fig2a")
        cfg = parsed.run
        assert cfg.scheme.kind == "elastic"
        assert cfg.trap_target == 20
        assert cfg.initial_field.alpha == 3.0
        assert cfg.timing.tau_bar == trapping_time(20, 1, G1)
        assert cfg.timing.spread == pytest.approx(critical_spread(20, G1) / 10.0)
        assert cfg.n_atoms == 2000

    def test_fig1c_values(self):
        parsed = preset("fig1c")
        cfg = parsed.classical
        assert cfg.epsilon0 == 6.0
        assert cfg.timing.tau_bar == pytest.approx(2.0 * math.pi / math.sqrt(199.0))
        assert cfg.timing.spread == 0.0
        assert cfg.n_steps == 10_000

    def test_fig1b_one_percent_spread(self):
        cfg = preset("fig1b").run
        assert cfg.scheme.kind == "nsm"
        assert cfg.trap_target == 138
        assert cfg.timing.spread == pytest.approx(0.01 * cfg.timing.tau_bar)

    def test_fig4_values(self):
        cfg = preset("fig4").run
        assert cfg.scheme.kind == "superposition"
        assert cfg.trap_target == 21
        assert cfg.initial_field.alpha == math.sqrt(21.0)
        assert cfg.timing.spread == pytest.approx(2.0 * critical_spread(21, G1))
        assert cfg.n_atoms == 2000
        assert cfg.mode == "postselect"

    def test_unknown_preset_lists_names(self):
        with pytest.raises(ConfigError, match="fig1a.*fig4"):
            preset("fig9")


class TestParseConfig:
    def test_flag_scenario_matches_fig4_preset(self):
        parsed = parse_config(
            overrides={
                "command": "run",
                "scheme": "superposition",
                "trap": "21",
                "alpha": "sqrt21",
                "spread_mult": "2",
                "atoms": "2000",
                "seed": "7",
            }
        )
        assert parsed.tokens == preset("fig4").tokens
        assert parsed.run == preset("fig4").run

    def test_missing_trap_named(self):
        with pytest.raises(ConfigError, match="trap"):
            parse_config(
                overrides={"command": "run", "scheme": "elastic", "atoms": "10", "alpha": "3"}
            )

    def test_missing_initial_field_named(self):
        with pytest.raises(ConfigError, match="alpha/fock"):
            parse_config(
                overrides={"command": "run", "scheme": "elastic", "trap": "20", "atoms": "10"}
            )

    def test_roundtrip_through_file(self, tmp_path):
        parsed = preset("fig2a")
        path = tmp_path / "fig2a.cfg"
        path.write_text(
            "".join(f"{k} = {v}\n" for k, v in parsed.tokens.items()), encoding="utf-8"
        )
        again = parse_config(path=path)
        assert again.tokens == parsed.tokens
        assert again.run == parsed.run

    def test_flags_override_file(self, tmp_path):
        path = tmp_path / "base.cfg"
        path.write_text("command = run\nscheme = elastic\ntrap = 20\natoms = 50\nalpha = 3\n")
        parsed = parse_config(path=path, overrides={"atoms": "7", "seed": "5"})
        assert parsed.run.n_atoms == 7
        assert parsed.run.seed.master_seed == 5

    def test_command_mismatch_rejected(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("command = classical\nepsilon0 = 6\nsteps = 10\ntau_bar_in_inv_g = 0.5\n")
        with pytest.raises(ConfigError, match="command"):
            parse_config(path=path, command="run")

    def test_kv_parse_errors(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("just some words\n")
        with pytest.raises(ConfigError):
            parse_kv_file(path)


class TestCliEndToEnd:
    def run_small(self, tmp_path, extra=(), out="out"):
        out_dir = tmp_path / out
        code = main(
            [
                "run",
                "--scheme", "elastic",
                "--trap", "20",
                "--alpha", "3",
                "--atoms", "40",
                "--seed", "5",
                "--out-dir", str(out_dir),
                *extra,
            ]
        )
        return code, out_dir

    def test_run_writes_outputs_and_manifest(self, tmp_path):
        code, out_dir = self.run_small(tmp_path)
        assert code == 0
        assert (out_dir / "trajectory.csv").exists()
        assert (out_dir / "distribution.csv").exists()
        manifest = (out_dir / "manifest.txt").read_text()
        assert "[config]" in manifest and "[outputs]" in manifest
        assert "terminated_early = none" in manifest
        lines = (out_dir / "trajectory.csv").read_text().strip().splitlines()
        assert len(lines) == 41

    def test_same_seed_byte_identical_outputs(self, tmp_path):
        _, out_a = self.run_small(tmp_path, out="a")
        _, out_b = self.run_small(tmp_path, out="b")
        for name in ("trajectory.csv", "distribution.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
        digests_a = [l for l in (out_a / "manifest.txt").read_text().splitlines() if "sha256" in l]
        digests_b = [l for l in (out_b / "manifest.txt").read_text().splitlines() if "sha256" in l]
        assert digests_a == digests_b

    def test_manifest_reproduces_config(self, tmp_path):
        _, out_dir = self.run_small(tmp_path)
        parsed = parse_config(path=out_dir / "manifest.txt", command="run")
        assert parsed.run.n_atoms == 40
        assert parsed.run.seed.master_seed == 5
        rerun_dir = tmp_path / "rerun"
        code = main(
            ["run", "--config", str(out_dir / "manifest.txt"), "--out-dir", str(rerun_dir)]
        )
        assert code == 0
        assert (rerun_dir / "trajectory.csv").read_bytes() == (
            out_dir / "trajectory.csv"
        ).read_bytes()

    def test_zero_atom_run_emits_initial_distribution(self, tmp_path):
        code, out_dir = self.run_small(tmp_path, extra=["--atoms", "0"])
        assert code == 0
        lines = (out_dir / "distribution.csv").read_text().strip().splitlines()[1:]
        values = np.array([float(line.split(",")[1]) for line in lines])
        state, _ = coherent_state(3.0, len(values) - 1)
        assert np.array_equal(values, state.probabilities())

    def test_early_termination_exit_code(self, tmp_path):
        out_dir = tmp_path / "stuck"
        code = main(
            [
                "run",
                "--scheme", "inelastic",
                "--trap", "20",
                "--fock", "20",
                "--atoms", "5",
                "--out-dir", str(out_dir),
            ]
        )
        assert code == 2
        manifest = (out_dir / "manifest.txt").read_text()
        assert "terminated_early = impossible post-selection" in manifest

    def test_config_error_exit_code(self, tmp_path):
        code = main(
            ["run", "--scheme", "elastic", "--atoms", "5", "--alpha", "3",
             "--out-dir", str(tmp_path / "x")]
        )
        assert code == 1

    def test_classical_subcommand(self, tmp_path):
        out_dir = tmp_path / "cl"
        code = main(
            [
                "classical",
                "--preset", "fig1c",
                "--steps", "50",
                "--out-dir", str(out_dir),
            ]
        )
        assert code == 0
        lines = (out_dir / "classical.csv").read_text().strip().splitlines()
        assert len(lines) == 52
        assert float(lines[1].split(",")[3]) == 9.0

    def test_sweep_subcommand(self, tmp_path):
        out_dir = tmp_path / "sw"
        code = main(
            [
                "sweep",
                "--scheme", "elastic",
                "--trap", "20",
                "--alpha", "3",
                "--atoms", "30",
                "--spread-mults", "0,0.1",
                "--ensemble", "2",
                "--seed", "3",
                "--out-dir", str(out_dir),
            ]
        )
        assert code == 0
        lines = (out_dir / "sweep.csv").read_text().strip().splitlines()
        assert lines[0] == "multiplier,cell,final_P_nt,cum_P,converged"
        assert len(lines) == 5

    def test_preset_subcommand_prints_config(self, capsys):
        assert main(["preset", "fig4"]) == 0
        out = capsys.readouterr().out
        assert "scheme = superposition" in out
        assert "trap = 21" in out
        assert main(["preset", "--list"]) == 0
        assert "fig1a" in capsys.readouterr().out

    def test_preset_wrong_command_rejected(self, tmp_path):
        code = main(
            ["run", "--preset", "fig1c", "--out-dir", str(tmp_path / "x")]
        )
        assert code == 1

    def test_fig4_preset_produces_trap_fock_state(self, tmp_path):
        out_dir = tmp_path / "fig4"
        assert main(["run", "--preset", "fig4", "--out-dir", str(out_dir)]) == 0
        lines = (out_dir / "distribution.csv").read_text().strip().splitlines()[1:]
        dist = np.array([float(line.split(",")[1]) for line in lines])
        assert dist[21] > 0.99

    def test_run_from_printed_preset_config(self, tmp_path, capsys):
        assert main(["preset", "fig2a"]) == 0
        text = capsys.readouterr().out
        cfg_path = tmp_path / "fig2a.cfg"
        cfg_path.write_text(text, encoding="utf-8")
        out_dir = tmp_path / "out"
        code = main(
            ["run", "--config", str(cfg_path), "--atoms", "10", "--out-dir", str(out_dir)]
        )
        assert code == 0
