import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from poselift.camera import CameraParams, project
from poselift.core import default_topology
from poselift.dictionary import build_dictionary
from poselift.limits import LimitsModel
from poselift.synthetic import synthetic_corpus

# name -> (passed, detail), filled in by tests/test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def topo():
    return default_topology()


@pytest.fixture(scope="session")
def corpus():
    return synthetic_corpus(n_frames=120, seed=0)


@pytest.fixture(scope="session")
def dictionary(corpus):
    return build_dictionary(corpus, bases_per_group=6)


@pytest.fixture(scope="session")
def permissive(topo):
    return LimitsModel.permissive(topo)


def random_camera(rng) -> CameraParams:
    R = Rotation.random(random_state=int(rng.integers(1 << 31))).as_matrix()
    return CameraParams(rng.uniform(0.5, 2.0), R)


def in_span_frame(d, rng, max_active=3):
    """(3D pose, 2D projection, camera) for mean + B w with <= max_active columns."""
    k = rng.integers(1, max_active + 1)
    idx = rng.choice(d.n_bases, k, replace=False)
    w = rng.uniform(-1, 1, k)
    X = (d.mean + d.basis[:, idx] @ w).reshape(-1, 3)
    cam = random_camera(rng)
    return X, project(X, cam), cam


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
