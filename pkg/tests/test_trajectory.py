import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from locbench.errors import FormatError, OutOfRangeError
from locbench.geometry import Pose
from locbench.trajectory import Trajectory, associate_stamps

from conftest import wiggly_trajectory


def circle(n=2000, r=1.0):
    t = np.linspace(0, 1, n + 1)
    ang = 2 * np.pi * t
    return Trajectory(t, [Pose.from_yaw(a + math.pi / 2, (r * math.cos(a), r * math.sin(a), 0))
                          for a in ang])


def test_associate_example():
    pairs = associate_stamps(np.array([0.0, 0.5, 1.0]), np.array([0.01, 0.98]), 0.05)
    assert pairs == [(0, 0), (2, 1)]


def test_associate_greedy_unique():
    pairs = associate_stamps(np.array([0.0, 0.02]), np.array([0.01]), 0.05)
    assert len(pairs) == 1


def test_circle_arc_length():
    assert circle().arc_length() == pytest.approx(2 * math.pi, abs=1e-3)


def test_arc_length_partial():
    tr = Trajectory([0, 1, 2], [Pose(trans=(0, 0, 0)), Pose(trans=(1, 0, 0)), Pose(trans=(1, 2, 0))])
    assert tr.arc_length(0.5, 1.5) == pytest.approx(1.5)
    assert tr.distance_at(2.0) == pytest.approx(3.0)


def test_sample_at_exact_stamp_returns_stored_pose():
    tr = wiggly_trajectory(20)
    assert tr.sample_at(tr.stamps[7]) is tr.poses[7]
    with pytest.raises(OutOfRangeError):
        tr.sample_at(tr.end + 1.0)


def test_rejects_bad_stamps():
    with pytest.raises(FormatError):
        Trajectory([0, 0], [Pose(), Pose()])
    with pytest.raises(FormatError):
        Trajectory([], [])


def test_shift_time():
    tr = wiggly_trajectory(10)
    sh = tr.shift_time(2.5)
    np.testing.assert_allclose(sh.stamps, tr.stamps + 2.5)
    assert sh.sample_at(3.0).isclose(tr.sample_at(0.5), atol=1e-12)


stamp_lists = st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=40, unique=True)


@given(stamp_lists, stamp_lists, st.floats(0.001, 1.0))
def test_association_properties(a, b, max_dt):
    a, b = np.sort(a), np.sort(b)
    pairs = associate_stamps(a, b, max_dt)
    ia = [i for i, _ in pairs]
    ib = [j for _, j in pairs]
    assert len(set(ia)) == len(ia) and len(set(ib)) == len(ib)
    assert all(abs(a[i] - b[j]) <= max_dt for i, j in pairs)
    assert ia == sorted(ia)


@given(stamp_lists, stamp_lists)
def test_association_symmetric(a, b):
    a, b = np.sort(a), np.sort(b)
    ab = associate_stamps(a, b, 0.5)
    ba = associate_stamps(b, a, 0.5)
    assert sorted(ab) == sorted((i, j) for j, i in ba)


@given(st.floats(0, 19.9), st.floats(0, 19.9))
def test_arc_length_additive(t0, t1):
    tr = wiggly_trajectory(200)
    lo, hi = sorted((t0, t1))
    mid = 0.5 * (lo + hi)
    assert tr.arc_length(lo, hi) == pytest.approx(tr.arc_length(lo, mid) + tr.arc_length(mid, hi),
                                                  abs=1e-9)
