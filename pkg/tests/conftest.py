import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mmehr import ingest
from mmehr.synth import SynthConfig, generate

from helpers import build_master_from_sources


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory):
    """Small synthetic source directory shared across test modules."""
    out = tmp_path_factory.mktemp("synth_src")
    generate(SynthConfig(n_patients=60, seed=123), out)
    return out


@pytest.fixture(scope="session")
def master(synth_dir):
    return build_master_from_sources(synth_dir)


@pytest.fixture(scope="session")
def master_dir(master, tmp_path_factory):
    out = tmp_path_factory.mktemp("master")
    ingest.write_master(master, out)
    return out
