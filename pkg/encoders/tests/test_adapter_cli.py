"""The adapter contract end to end: subprocess in, validated manifest out.

Every test here drives the command line the same way the pipeline does,
either through the pipeline's own external-encoder runner or with a bare
subprocess, and checks what landed on disk.
"""

import subprocess
import sys

import numpy as np
import pytest

from mmehr.manifests import (
    AdapterFailure,
    CoverageGap,
    EncoderSpec,
    read_manifest,
    run_external_encoder,
)

from ehr_encoders import dataio

WINDOW = 24.0


def adapter_command(*extra: str) -> tuple:
    return (sys.executable, "-m", "ehr_encoders.cli", *extra)


def evented_stays(master_dir) -> set:
    ts = dataio.read_timeseries(master_dir, window_hours=WINDOW)
    return {sid for sid in ts.stay_ids if ts.events[sid]}


class TestGruAdapter:
    def test_pipeline_invocation_accepts_the_manifest(self, master_dir, tmp_path):
        spec = EncoderSpec(
            name="gru-small",
            modality="timeseries",
            dimension=32,
            kind="external",
            command=adapter_command(
                "--encoder", "gru", "--hidden-size", "32", "--epochs", "2", "--seed", "5"
            ),
        )
        result = run_external_encoder(spec, master_dir, tmp_path, WINDOW)
        assert result.manifest.modality == "timeseries"
        assert result.manifest.dimension == 32
        assert set(result.manifest.ids) == evented_stays(master_dir)

    def test_default_hidden_size_gives_dimension_1024(self, tiny_master_dir, tmp_path):
        spec = EncoderSpec(
            name="gru",
            modality="timeseries",
            dimension=1024,
            kind="external",
            command=adapter_command("--encoder", "gru", "--epochs", "1"),
        )
        result = run_external_encoder(spec, tiny_master_dir, tmp_path, WINDOW)
        assert result.manifest.dimension == 1024
        assert set(result.manifest.ids) == evented_stays(tiny_master_dir)

    def test_checkpoint_is_saved_beside_the_manifest(self, master_dir, tmp_path):
        proc = subprocess.run(
            adapter_command(
                "--encoder", "gru", "--hidden-size", "16", "--epochs", "1",
                "--input", str(master_dir), "--output", str(tmp_path),
                "--window-hours", str(WINDOW),
            ),
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / "gru_checkpoint.pt").is_file()
        assert (tmp_path / "manifest.json").is_file()

    def test_same_seed_reruns_write_identical_files(self, master_dir, tmp_path):
        outs = [tmp_path / "a", tmp_path / "b"]
        for out in outs:
            proc = subprocess.run(
                adapter_command(
                    "--encoder", "gru", "--hidden-size", "16", "--epochs", "1",
                    "--seed", "9", "--input", str(master_dir), "--output", str(out),
                    "--window-hours", str(WINDOW),
                ),
                capture_output=True,
                text=True,
            )
            assert proc.returncode == 0, proc.stderr
        for name in ("manifest.json", "ids.csv", "vectors.bin"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()

    def test_stays_outside_coverage_are_reported_as_a_gap(self, master_dir, tmp_path):
        bogus = 10**9
        expected = sorted(evented_stays(master_dir)) + [bogus]
        spec = EncoderSpec(
            name="gru-small",
            modality="timeseries",
            dimension=16,
            kind="external",
            command=adapter_command(
                "--encoder", "gru", "--hidden-size", "16", "--epochs", "1"
            ),
        )
        with pytest.warns(CoverageGap):
            result = run_external_encoder(
                spec, master_dir, tmp_path, WINDOW, expected_ids=expected
            )
        assert result.missing_ids == [bogus]


class TestPretrainedAdapters:
    @pytest.mark.parametrize(
        "encoder,modality,dimension",
        [("radbert", "text", 768), ("cxr-foundation", "image", 1376)],
    )
    def test_dimension_contract(self, master_dir, tmp_path, encoder, modality, dimension):
        spec = EncoderSpec(
            name=encoder,
            modality=modality,
            dimension=dimension,
            kind="external",
            command=adapter_command("--encoder", encoder),
        )
        result = run_external_encoder(spec, master_dir, tmp_path, WINDOW)
        assert result.manifest.modality == modality
        assert result.manifest.dimension == dimension
        assert len(result.manifest.ids) > 0

    def test_constant_encoder_covers_every_stay_with_one_row(self, master_dir, tmp_path):
        proc = subprocess.run(
            adapter_command(
                "--encoder", "constant", "--input", str(master_dir),
                "--output", str(tmp_path), "--window-hours", str(WINDOW),
            ),
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        manifest = read_manifest(tmp_path)
        ts = dataio.read_timeseries(master_dir)
        assert manifest.ids == sorted(ts.stay_ids)
        assert np.all(manifest.vectors == manifest.vectors[0])

    def test_declared_dimension_mismatch_is_an_adapter_failure(self, master_dir, tmp_path):
        spec = EncoderSpec(
            name="radbert",
            modality="text",
            dimension=64,
            kind="external",
            command=adapter_command("--encoder", "radbert"),
        )
        with pytest.raises(AdapterFailure):
            run_external_encoder(spec, master_dir, tmp_path, WINDOW)


class TestFailureModes:
    def test_missing_input_dir_exits_nonzero(self, tmp_path):
        proc = subprocess.run(
            adapter_command(
                "--encoder", "radbert", "--input", str(tmp_path / "nope"),
                "--output", str(tmp_path / "out"), "--window-hours", "24.0",
            ),
            capture_output=True,
            text=True,
        )
        assert proc.returncode != 0
        assert "missing table" in proc.stderr

    def test_master_without_any_events_exits_nonzero(self, tmp_path):
        master = tmp_path / "master"
        master.mkdir()
        (master / "stays.csv").write_text(
            "stay_id,hadm_id,subject_id,intime,outtime,age_years,gender,race,"
            "admittime,dischtime,deathtime,hospital_expire_flag\n"
            "1,2,3,0.0,48.0,60.0,F,White,-4.0,52.0,,0\n",
            encoding="utf-8",
        )
        (master / "variables.csv").write_text("index,variable_id\n", encoding="utf-8")
        (master / "events.bin").write_bytes(b"")
        proc = subprocess.run(
            adapter_command(
                "--encoder", "gru", "--hidden-size", "8", "--input", str(master),
                "--output", str(tmp_path / "out"), "--window-hours", "24.0",
            ),
            capture_output=True,
            text=True,
        )
        assert proc.returncode != 0
        assert "label" in proc.stderr or "events" in proc.stderr

    def test_help_exits_zero(self):
        proc = subprocess.run(
            adapter_command("--help"), capture_output=True, text=True
        )
        assert proc.returncode == 0
        assert "--window-hours" in proc.stdout
