import numpy as np
import pytest
from hypothesis import settings

from locbench.geometry import Pose
from locbench.trajectory import Trajectory

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def random_pose(rng, scale=5.0) -> Pose:
    q = rng.normal(size=4)
    return Pose(q / np.linalg.norm(q), rng.uniform(-scale, scale, 3))


def wiggly_trajectory(n=200, dt=0.1, seed=0) -> Trajectory:
    """Smooth 3D trajectory with rotation about all axes."""
    t = np.arange(n) * dt
    poses = [Pose.from_rpy(0.3 * np.sin(0.7 * s), 0.2 * np.cos(0.5 * s), 0.4 * s,
                           (np.cos(0.3 * s) * 4, np.sin(0.4 * s) * 3, 0.5 * np.sin(0.2 * s)))
             for s in t]
    return Trajectory(t + seed, poses)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
