"""Timestamped pose sequences with SE(3)-interpolated lookup."""

from __future__ import annotations

import bisect
from typing import Sequence

import numpy as np

from .errors import FormatError, InputError, OutOfRangeError
from .geometry import Pose, interpolate

# stored-timestamp match tolerance for sample_at
STAMP_TOL = 1e-9
DEFAULT_MAX_DT = 0.05


class Trajectory:
    """Strictly time-ordered poses ``T_{world, body}(t)``.

    Args:
        stamps: timestamps in seconds, strictly increasing.
        poses: one :class:`Pose` per timestamp.
        frame_world: label of the fixed frame, e.g. ``"W_L"`` or ``"G"``.
        frame_body: label of the moving frame, e.g. ``"C"``.
    """

    def __init__(self, stamps: Sequence[float], poses: Sequence[Pose],
                 frame_world: str = "W", frame_body: str = "C"):
        stamps = np.array(stamps, dtype=float).reshape(-1)
        poses = tuple(poses)
        if len(stamps) != len(poses):
            raise InputError(f"{len(stamps)} timestamps for {len(poses)} poses")
        if len(stamps) == 0:
            raise FormatError("trajectory needs at least one sample")
        if not np.all(np.isfinite(stamps)):
            raise FormatError("non-finite timestamp")
        bad = np.nonzero(np.diff(stamps) <= 0)[0]
        if bad.size:
            i = int(bad[0]) + 1
            raise FormatError(f"timestamps not strictly increasing at sample {i} "
                              f"({stamps[i - 1]!r} -> {stamps[i]!r})")
        stamps.setflags(write=False)
        self.stamps = stamps
        self.poses = poses
        self.frame_world = frame_world
        self.frame_body = frame_body
        self._positions = None
        self._cumdist = None

    def __len__(self):
        return len(self.poses)

    def __iter__(self):
        return iter(zip(self.stamps.tolist(), self.poses))

    def __repr__(self):
        return (f"Trajectory({self.frame_world}->{self.frame_body}, n={len(self)}, "
                f"t=[{self.start}, {self.end}])")

    @property
    def start(self) -> float:
        return float(self.stamps[0])

    @property
    def end(self) -> float:
        return float(self.stamps[-1])

    @property
    def positions(self) -> np.ndarray:
        if self._positions is None:
            p = np.array([pose.trans for pose in self.poses])
            p.setflags(write=False)
            self._positions = p
        return self._positions

    @property
    def cumulative_distance(self) -> np.ndarray:
        """Chord-sum distance from the first sample to each sample."""
        if self._cumdist is None:
            steps = np.linalg.norm(np.diff(self.positions, axis=0), axis=1)
            c = np.concatenate([[0.0], np.cumsum(steps)])
            c.setflags(write=False)
            self._cumdist = c
        return self._cumdist

    def _check_range(self, t):
        if t < self.start or t > self.end:
            raise OutOfRangeError(t, self.start, self.end)

    def sample_at(self, t: float) -> Pose:
        """Pose at ``t``; stored poses are returned as-is, others interpolated."""
        t = float(t)
        self._check_range(t)
        i = bisect.bisect_left(self.stamps, t)
        # a stored stamp within STAMP_TOL wins over interpolation
        for j in (i - 1, i):
            if 0 <= j < len(self) and abs(self.stamps[j] - t) <= STAMP_TOL:
                return self.poses[j]
        return interpolate(self.poses[i - 1], self.poses[i],
                           self.stamps[i - 1], self.stamps[i], t)

    def position_at(self, t: float) -> np.ndarray:
        return self.sample_at(t).trans

    def distance_at(self, t: float) -> float:
        """Arc length from the first sample to time ``t``."""
        t = float(t)
        self._check_range(t)
        i = bisect.bisect_right(self.stamps, t) - 1
        c = self.cumulative_distance
        if i >= len(self) - 1 or self.stamps[i] == t:
            return float(c[i])
        p = self.position_at(t)
        return float(c[i] + np.linalg.norm(p - self.positions[i]))

    def arc_length(self, t0: float | None = None, t1: float | None = None) -> float:
        """Traveled distance between ``t0`` and ``t1`` (defaults: full span)."""
        t0 = self.start if t0 is None else float(t0)
        t1 = self.end if t1 is None else float(t1)
        if t0 > t1:
            raise InputError(f"arc_length needs t0 <= t1, got {t0!r} > {t1!r}")
        self._check_range(t0)
        self._check_range(t1)
        if t0 == t1:
            return 0.0
        i0 = bisect.bisect_right(self.stamps, t0)
        i1 = bisect.bisect_left(self.stamps, t1)
        p0 = self.position_at(t0)
        p1 = self.position_at(t1)
        if i0 > i1 - 1:
            return float(np.linalg.norm(p1 - p0))
        c = self.cumulative_distance
        total = np.linalg.norm(self.positions[i0] - p0)
        total += c[i1 - 1] - c[i0]
        total += np.linalg.norm(p1 - self.positions[i1 - 1])
        return float(total)

    def shift_time(self, delta: float) -> "Trajectory":
        return Trajectory(self.stamps + float(delta), self.poses,
                          self.frame_world, self.frame_body)

    def with_poses(self, poses: Sequence[Pose], frame_world=None, frame_body=None) -> "Trajectory":
        return Trajectory(self.stamps, poses,
                          self.frame_world if frame_world is None else frame_world,
                          self.frame_body if frame_body is None else frame_body)


def sample_at(traj: Trajectory, t: float) -> Pose:
    return traj.sample_at(t)


def arc_length(traj: Trajectory, t0: float, t1: float) -> float:
    return traj.arc_length(t0, t1)


def shift_time(traj: Trajectory, delta: float) -> Trajectory:
    return traj.shift_time(delta)


def associate_stamps(a: np.ndarray, b: np.ndarray, max_dt: float = DEFAULT_MAX_DT) -> list[tuple[int, int]]:
    """Greedy one-to-one nearest-timestamp matching.

    Candidate pairs with ``|ta - tb| <= max_dt`` are accepted in order of
    increasing ``|ta - tb|``; each index is used at most once.  The result is
    sorted by ``a`` index (and hence by time).
    """
    if max_dt < 0:
        raise InputError(f"max_dt must be >= 0, got {max_dt!r}")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    lo = np.searchsorted(b, a - max_dt, side="left")
    hi = np.searchsorted(b, a + max_dt, side="right")
    cand = []
    for i in range(len(a)):
        for j in range(lo[i], hi[i]):
            dt = abs(a[i] - b[j])
            if dt <= max_dt:
                # symmetric key: identical ordering when a and b are swapped
                cand.append((dt, a[i] + b[j], i, j))
    cand.sort(key=lambda c: (c[0], c[1]))
    used_a, used_b = set(), set()
    pairs = []
    for _, _, i, j in cand:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        pairs.append((i, int(j)))
    pairs.sort()
    return pairs


def associate(a: Trajectory, b: Trajectory, max_dt: float = DEFAULT_MAX_DT) -> list[tuple[int, int]]:
    return associate_stamps(a.stamps, b.stamps, max_dt)
