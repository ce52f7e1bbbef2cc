import json
from pathlib import Path

import numpy as np
import pytest

from awrascle.cli import main
from awrascle.models import make_power_law
from awrascle.torus import Grid

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=[(2, 32), (3, 16)], ids=["d2", "d3"])
def grid(request):
    return Grid(*request.param)


@pytest.fixture
def grid2():
    return Grid(2, 32)


@pytest.fixture
def small_h_model():
    return make_power_law(2.0, d=2, h={"direction": [0.01, 0.005], "exponent": 1.0})


def write_config(path, doc) -> str:
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture(scope="session")
def built_bundle(tmp_path_factory):
    """Two-mode-transfer bundle at d=2, n=32, n_t=33 (shared by CLI tests)."""
    root = tmp_path_factory.mktemp("bundle")
    cfg = write_config(root / "run.json", {
        "grid": {"d": 2, "n": 32},
        "time": {"T": 1.0, "n_t": 33},
        "data": {"scenario": "two-mode-transfer"},
    })
    out = root / "b"
    assert main(["build", "--config", cfg, "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="session")
def admissible_bundle(tmp_path_factory):
    root = tmp_path_factory.mktemp("adm")
    cfg = write_config(root / "run.json", {
        "grid": {"d": 2, "n": 32},
        "time": {"T": 1.0, "n_t": 17},
        "data": {"scenario": "static-admissible"},
        "schedule": {"mode": "admissible", "lambda0": 2.0},
    })
    out = root / "b"
    assert main(["build", "--config", cfg, "--out", str(out)]) == 0
    return out
