"""Shared fixtures: a small master-dataset directory to encode.

These tests are the one place the two packages meet. The package under
test only ever reads and writes files; the pipeline package is imported
here to generate a realistic master directory and to validate what the
encoders wrote back.
"""

import json
from pathlib import Path

import pytest

from mmehr.config import load_config
from mmehr.pipeline import Pipeline

from ehr_encoders import dataio

WINDOW_HOURS = 24.0


@pytest.fixture(scope="session")
def master_dir(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("encoder_master")
    cfg = {
        "paths": {"input_dir": str(root / "input"), "work_dir": str(root / "work")},
        "synth": {"n_patients": 25, "seed": 13},
        "split": {"seed": 3},
        "evaluation": {"seed": 4},
    }
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(cfg), encoding="utf-8")
    pipe = Pipeline(load_config(cfg_path))
    pipe.run_synth()
    pipe.run_ingest()
    return pipe.work_dir / "master"


@pytest.fixture(scope="session")
def tiny_master_dir(tmp_path_factory) -> Path:
    """A handful of stays, for the tests that train at full width."""
    root = tmp_path_factory.mktemp("encoder_master_tiny")
    cfg = {
        "paths": {"input_dir": str(root / "input"), "work_dir": str(root / "work")},
        "synth": {"n_patients": 6, "seed": 17},
        "split": {"seed": 3},
        "evaluation": {"seed": 4},
    }
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(cfg), encoding="utf-8")
    pipe = Pipeline(load_config(cfg_path))
    pipe.run_synth()
    pipe.run_ingest()
    return pipe.work_dir / "master"


@pytest.fixture(scope="session")
def timeseries(master_dir) -> dataio.MasterTimeseries:
    return dataio.read_timeseries(master_dir, window_hours=WINDOW_HOURS)


@pytest.fixture(scope="session")
def sequences(timeseries) -> dict:
    return dataio.build_sequences(timeseries)
