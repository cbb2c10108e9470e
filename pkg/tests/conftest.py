import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from cornerpose.geometry import BoxCorners3D, CameraIntrinsics, Pose


@pytest.fixture
def K():
    return CameraIntrinsics(500.0, 500.0, 320.0, 240.0, 640, 480)


@pytest.fixture
def box():
    return BoxCorners3D.from_bounds([-0.05, -0.07, -0.04], [0.05, 0.07, 0.04])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_pose(rng, depth=(0.5, 3.0), spread=0.15):
    """Haar-random rotation (scipy) and a translation in front of the camera."""
    R = Rotation.random(random_state=rng).as_matrix()
    z = rng.uniform(*depth)
    t = [rng.uniform(-spread, spread) * z, rng.uniform(-spread, spread) * z, z]
    return Pose.from_matrix(R, t)


_ACCEPTANCE = pytest.StashKey[dict]()
_ACCEPTANCE_NAMES = {
    1: "pnp round trip",
    2: "pnp under noise",
    3: "metric oracles",
    4: "symmetry",
    5: "segmentation post-processing",
    6: "renderer",
    7: "refinement",
    8: "end to end",
    9: "determinism",
}


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}


@pytest.fixture
def acceptance(request):
    """Record ``(criterion, ok, detail)`` for the end-of-run summary."""
    store = request.config.stash[_ACCEPTANCE]

    def record(n, ok, detail):
        store[n] = (bool(ok), detail)
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash[_ACCEPTANCE]
    if not store:
        return
    terminalreporter.write_sep("=", "acceptance")
    for n, name in _ACCEPTANCE_NAMES.items():
        ok, detail = store.get(n, (False, "not run or errored"))
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n}. {name}: {detail}")
