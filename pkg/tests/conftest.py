import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from smokeynet.preprocess import DESK  # noqa: E402
from smokeynet.synthetic import SyntheticSpec, generate_synthetic_corpus  # noqa: E402


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)
    yield


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """4 desk-size fires x 7 frames, split 2/1/1."""
    root = tmp_path_factory.mktemp("corpus")
    spec = SyntheticSpec(num_fires=4, frames_per_fire=7, geometry=DESK, seed=3)
    return generate_synthetic_corpus(spec, root)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
