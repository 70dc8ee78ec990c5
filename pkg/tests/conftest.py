import numpy as np
import pytest

from recam import CameraIntrinsics, DepthMap, Frame


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def cam64():
    return CameraIntrinsics(fx=100.0, fy=100.0, cx=32.0, cy=32.0, width=64, height=64)


@pytest.fixture
def random_frame(rng):
    return Frame(rng.uniform(0.0, 1.0, size=(64, 64, 3)))


@pytest.fixture
def flat_depth():
    return DepthMap.from_values(np.full((64, 64), 3.0))
