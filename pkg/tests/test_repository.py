#!/usr/bin/env python3
from __future__ import annotations

import zipfile

import numpy as np
import pytest

from swirl_lab.common.utils import CheckpointError, checksum, ConfigError, json_dumps, json_loads, \
    SwirlIOError
from swirl_lab.constants import *
from swirl_lab.repository import apply_overrides, emit_config, parse_config, Repository
from swirl_lab.repository.dao import CheckpointHeader, DiagnosticsRecord, FailureRecord, Mode, PhaseSpec, \
    SimConfig, SnapshotHeader, TerminationReason

CONFIG = SimConfig(case=4, mode=Mode.NavierStokes, nu=1e-3, n1=64, n2=48, snapshot_times=(1e-6, 2.5e-6),
                   period2_start=10, period3_start=20, debug=True)


def diagnostics_record(step: int) -> DiagnosticsRecord:
    values = {name: 0.1 * (k + 1) + step for k, name in enumerate(DiagnosticsRecord.columns())}
    values["step"] = step
    return DiagnosticsRecord(**values)


def fields(rng, n1=64, n2=48):
    return [rng.normal(size=(n2 + 1, n1 + 1)) for _ in range(3)]


def checkpoint_header(step=7):
    return CheckpointHeader(config=CONFIG, step=step, t=1.0 / 3.0, bkm=0.125, w_max=17.5,
                            r_spec=PhaseSpec((0.01, 0.02), (0.4, 0.8)), z_spec=PhaseSpec((0.1,), (0.6,), 0.2))


class TestConfigText:
    def test_round_trip(self):
        assert parse_config(emit_config(CONFIG)) == CONFIG
        assert parse_config(emit_config(CONFIG, full=True)) == CONFIG
        assert parse_config(emit_config(SimConfig(), full=True)) == SimConfig()

    def test_empty_text_gives_defaults(self):
        assert parse_config("") == SimConfig()
        assert parse_config("n1=512\ncase=4") == SimConfig(n1=512, case=4)

    def test_defaults_are_omitted(self):
        assert emit_config(SimConfig()) == ""
        assert emit_config(SimConfig(n1=64)) == "n1=64\n"

    def test_comments_and_blank_lines(self):
        config = parse_config("# desk run\n\ncase = 2\nn1=64   # coarse\nmode=euler\nsnapshot_times=1e-6, 2e-6\n")

        assert config.case == 2
        assert config.n1 == 64
        assert config.snapshot_times == (1e-6, 2e-6)

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="line 2: unknown key 'bogus'"):
            parse_config("case=1\nbogus=3\n")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="line 3: duplicate key 'n1'"):
            parse_config("n1=64\n\nn1=128\n")

    def test_missing_separator(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config("n1 64\n")

    @pytest.mark.parametrize("text", ["n1=16", "case=5", "nu=-1", "debug=maybe", "n1=many", "mode=viscous",
                                      "transition_fraction=0.5", "period2_start=20\nperiod3_start=10"])
    def test_invalid_values(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_overrides(self):
        config = apply_overrides(SimConfig(), {"n1": "64", "debug": True, "snapshot_times": "1e-6,2e-6",
                                               "period2_start": "none"})

        assert config == SimConfig(n1=64, debug=True, snapshot_times=(1e-6, 2e-6))

    def test_unknown_override(self):
        with pytest.raises(ConfigError, match="unknown key 'grid'"):
            apply_overrides(SimConfig(), {"grid": 64})

    def test_period_starts_scale_with_resolution(self):
        assert SimConfig(n1=512).period_starts == (15000, 20000)
        assert CONFIG.period_starts == (10, 20)
        assert CONFIG.period_at(9) == 1 and CONFIG.period_at(10) == 2 and CONFIG.period_at(25) == 3

    def test_effective_viscosity(self):
        assert SimConfig(n1=64).nu_effective == 1.0 / 4096
        assert SimConfig(n1=64, numerical_viscosity=False).nu_effective == 0.0
        assert CONFIG.nu_effective == 1e-3


class TestRunFiles:
    def test_output_root_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path))
        Repository().set_output_dir("runs/a")

        assert Repository().get_output_dir() == tmp_path / "runs" / "a"
        assert (tmp_path / "runs" / "a").is_dir()

    def test_output_dir_over_a_file(self, tmp_path):
        (tmp_path / "taken").write_text("")

        with pytest.raises(SwirlIOError):
            Repository().set_output_dir(tmp_path / "taken")

    def test_config_file(self, output_dir):
        Repository().save_config(CONFIG)

        assert (output_dir / CONFIG_FILE).read_text() == emit_config(CONFIG)
        assert Repository().load_run_config() == CONFIG

    def test_missing_config(self, output_dir):
        with pytest.raises(ConfigError):
            Repository().load_config(output_dir / "absent.txt")

    def test_diagnostics_round_trip(self, output_dir):
        repository = Repository()
        repository.write_diagnostics([diagnostics_record(0), diagnostics_record(1)])
        repository.write_diagnostics([diagnostics_record(2)], append=True)

        lines = (output_dir / DIAGNOSTICS_FILE).read_text().splitlines()
        assert lines[0] == ",".join(DiagnosticsRecord.columns())
        assert len(lines) == 4
        assert repository.load_diagnostics() == [diagnostics_record(k) for k in range(3)]
        assert repository.load_diagnostics(output_dir) == repository.load_diagnostics(output_dir / DIAGNOSTICS_FILE)

    def test_diagnostics_rewrite(self, output_dir):
        Repository().write_diagnostics([diagnostics_record(0), diagnostics_record(1)])
        Repository().write_diagnostics([diagnostics_record(5)])

        assert Repository().load_diagnostics() == [diagnostics_record(5)]

    def test_missing_diagnostics(self, output_dir):
        with pytest.raises(SwirlIOError):
            Repository().load_diagnostics(output_dir / "nowhere")

    def test_table(self, output_dir):
        Repository().write_table("fits.csv", ("quantity", "T_est"), [("u1_max^-1", 0.1), ("R^2", 2.5e-3)])

        assert (output_dir / "fits.csv").read_text() == "quantity,T_est\nu1_max^-1,0.1\nR^2,0.0025\n"

    def test_arrays(self, output_dir, rng):
        data = rng.normal(size=(5, 4))
        Repository().save_arrays("full.npz", u1=data)

        with np.load(output_dir / "full.npz") as archive:
            np.testing.assert_array_equal(archive["u1"], data)

    def test_failure_record(self, output_dir):
        Repository().save_failure(FailureRecord("BlowUpError", "dt underflow", 12, 0.5, "checkpoints/x.zip"))

        failure = json_loads((output_dir / FAILURE_FILE).read_text())
        assert failure == {"error": "BlowUpError", "message": "dt underflow", "step": 12, "t": 0.5,
                           "checkpoint": "checkpoints/x.zip"}


class TestSnapshots:
    def test_round_trip(self, output_dir, rng):
        header = SnapshotHeader(n1=64, n2=48, t=0.1 + 0.2, step=3, case=2, r_spec=PhaseSpec((0.01,), (0.5,)),
                                z_spec=PhaseSpec())
        data = fields(rng)

        path = Repository().save_snapshot("snap-000003.zip", header, data)
        loaded_header, loaded = Repository().load_snapshot(path)

        assert path == output_dir / SNAPSHOTS_DIR / "snap-000003.zip"
        assert loaded_header == header
        for a, b in zip(loaded, data):
            np.testing.assert_array_equal(a, b)
        assert Repository().list_snapshots() == [path]

    def test_missing_snapshot(self, output_dir):
        with pytest.raises(SwirlIOError):
            Repository().load_snapshot(output_dir / "missing.zip")

    def test_no_snapshots(self, output_dir):
        assert Repository().list_snapshots() == []


class TestCheckpoints:
    def test_round_trip(self, output_dir, rng):
        data = fields(rng)

        path = Repository().save_checkpoint(checkpoint_header(), data)
        header, loaded = Repository().load_checkpoint(path)

        assert path.name == "checkpoint-000000007.zip"
        assert header.copy(checksum="") == checkpoint_header()
        assert header.checksum
        assert header.t == 1.0 / 3.0
        for a, b in zip(loaded, data):
            np.testing.assert_array_equal(a, b)

    def test_latest(self, output_dir, rng):
        for step in (9, 120, 30):
            Repository().save_checkpoint(checkpoint_header(step), fields(rng))

        assert Repository().latest_checkpoint().name == "checkpoint-000000120.zip"

    def test_no_checkpoint(self, output_dir):
        with pytest.raises(CheckpointError):
            Repository().latest_checkpoint()

    @staticmethod
    def rewrite(path, header=None, payload=None):
        with zipfile.ZipFile(path) as archive:
            text = archive.read(HEADER_JSON_MEMBER).decode()
            data = archive.read(FIELDS_MEMBER)
        with zipfile.ZipFile(path, "w") as archive:
            archive.writestr(HEADER_JSON_MEMBER, header(text) if header else text)
            archive.writestr(FIELDS_MEMBER, payload(data) if payload else data)

    def test_tampered_fields(self, output_dir, rng):
        path = Repository().save_checkpoint(checkpoint_header(), fields(rng))
        self.rewrite(path, payload=lambda data: data[:-8] + bytes(8))

        with pytest.raises(CheckpointError, match="checksum"):
            Repository().load_checkpoint(path)

    def test_unsupported_version(self, output_dir, rng):
        path = Repository().save_checkpoint(checkpoint_header(), fields(rng))

        def bump_version(text):
            raw = json_loads(text)
            raw["version"] = CHECKPOINT_VERSION + 1
            return json_dumps(raw)

        self.rewrite(path, header=bump_version)

        with pytest.raises(CheckpointError, match="version"):
            Repository().load_checkpoint(path)

    def test_not_a_checkpoint(self, output_dir):
        path = output_dir / "checkpoint-000000001.zip"
        path.write_text("plain text")

        with pytest.raises(CheckpointError):
            Repository().load_checkpoint(path)


class TestManifest:
    def test_files_and_checksums(self, output_dir):
        repository = Repository()
        repository.begin("run", CONFIG)
        repository.save_config(CONFIG)
        repository.write_table("growth.csv", ("t",), [(0.5,)])

        repository.finish(TerminationReason.MaxSteps, 5, ["remesh skipped at step 3"])
        manifest = repository.load_manifest()

        assert manifest.command == "run"
        assert manifest.version == VERSION
        assert manifest.termination == "max_steps"
        assert manifest.steps == 5
        assert manifest.config == CONFIG
        assert manifest.notes == ["remesh skipped at step 3"]
        assert manifest.files == {CONFIG_FILE: checksum(output_dir / CONFIG_FILE),
                                  "growth.csv": checksum(output_dir / "growth.csv")}
        assert manifest.started and manifest.finished

    def test_missing_manifest(self, output_dir):
        with pytest.raises(SwirlIOError):
            Repository().load_manifest()
