"""Rigid-body transforms on SE(3) and the planar projection/lifting helpers.

Conventions:
    ``T_YX`` maps point coordinates expressed in {X} to {Y}:
    ``p_Y = R_YX p_X + t_YX``.  Rotations are stored as Hamilton unit
    quaternions ``(w, x, y, z)`` with ``w >= 0``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError, OutOfRangeError

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
_NORM_TOL = 1e-12
_SLERP_DOT_LIMIT = 1.0 - 1e-9
_GIMBAL_PITCH = math.radians(89.0)


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.remainder(float(theta), TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    return a


def quat_multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Shepperd's method; returns a unit quaternion with w >= 0."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    return _canonical(np.array(q))


def _canonical(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = math.sqrt(float(q @ q))
    if n == 0.0 or not math.isfinite(n):
        raise InputError(f"invalid quaternion {q.tolist()}")
    if abs(n - 1.0) > _NORM_TOL:
        q = q / n
    if q[0] < 0.0:
        q = -q
    return q


@dataclass(frozen=True, eq=False)
class PlanarPose:
    """Planar pose ``[x, y, theta]`` with theta kept in (-pi, pi]."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    def __iter__(self):
        return iter((self.x, self.y, self.theta))

    def __eq__(self, other):
        if not isinstance(other, PlanarPose):
            return NotImplemented
        return (self.x, self.y, self.theta) == (other.x, other.y, other.theta)

    def __hash__(self):
        return hash((self.x, self.y, self.theta))


class Pose:
    """Rigid transform ``T_YX`` stored as unit quaternion plus translation.

    Instances are immutable; the quaternion and translation arrays are
    read-only views.
    """

    __slots__ = ("_q", "_t", "_R", "_yaw")

    def __init__(self, quat=(1.0, 0.0, 0.0, 0.0), trans=(0.0, 0.0, 0.0)):
        q = _canonical(np.array(quat, dtype=float).reshape(4))
        t = np.array(trans, dtype=float).reshape(3)
        if not np.all(np.isfinite(t)):
            raise InputError(f"invalid translation {t.tolist()}")
        q.setflags(write=False)
        t.setflags(write=False)
        self._q = q
        self._t = t
        self._R = None
        # exact yaw for poses built from planar coordinates
        self._yaw = None

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_xyzw(cls, qx, qy, qz, qw, trans=(0.0, 0.0, 0.0)) -> "Pose":
        return cls((qw, qx, qy, qz), trans)

    @classmethod
    def from_matrix(cls, R, trans=(0.0, 0.0, 0.0)) -> "Pose":
        return cls(matrix_to_quat(R), trans)

    @classmethod
    def from_homogeneous(cls, T) -> "Pose":
        T = np.asarray(T, dtype=float)
        return cls.from_matrix(T[:3, :3], T[:3, 3])

    @classmethod
    def from_axis_angle(cls, axis, angle, trans=(0.0, 0.0, 0.0)) -> "Pose":
        axis = np.asarray(axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
        h = 0.5 * angle
        return cls(np.concatenate([[math.cos(h)], math.sin(h) * axis]), trans)

    @classmethod
    def from_yaw(cls, yaw, trans=(0.0, 0.0, 0.0)) -> "Pose":
        h = 0.5 * yaw
        return cls((math.cos(h), 0.0, 0.0, math.sin(h)), trans)

    @classmethod
    def from_rpy(cls, roll, pitch, yaw, trans=(0.0, 0.0, 0.0)) -> "Pose":
        """Build from Z-Y-X Euler angles: ``R = Rz(yaw) Ry(pitch) Rx(roll)``."""
        qz = np.array([math.cos(yaw / 2), 0.0, 0.0, math.sin(yaw / 2)])
        qy = np.array([math.cos(pitch / 2), 0.0, math.sin(pitch / 2), 0.0])
        qx = np.array([math.cos(roll / 2), math.sin(roll / 2), 0.0, 0.0])
        return cls(quat_multiply(quat_multiply(qz, qy), qx), trans)

    @property
    def quat(self) -> np.ndarray:
        """Quaternion ``(w, x, y, z)``."""
        return self._q

    @property
    def xyzw(self) -> tuple:
        w, x, y, z = self._q
        return (float(x), float(y), float(z), float(w))

    @property
    def trans(self) -> np.ndarray:
        return self._t

    @property
    def rotation_matrix(self) -> np.ndarray:
        if self._R is None:
            R = quat_to_matrix(self._q)
            R.setflags(write=False)
            self._R = R
        return self._R

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation_matrix
        T[:3, 3] = self._t
        return T

    @property
    def angle(self) -> float:
        """Rotation angle in [0, pi]."""
        w = abs(float(self._q[0]))
        v = float(np.linalg.norm(self._q[1:]))
        return 2.0 * math.atan2(v, w)

    def apply(self, p) -> np.ndarray:
        return self.rotation_matrix @ np.asarray(p, dtype=float) + self._t

    def __matmul__(self, other: "Pose") -> "Pose":
        return compose(self, other)

    def __repr__(self):
        return f"Pose(quat={self._q.tolist()}, trans={self._t.tolist()})"

    def isclose(self, other: "Pose", atol: float = 1e-12) -> bool:
        """True when translations and rotations agree within ``atol`` (meters, radians)."""
        dt = float(np.max(np.abs(self._t - other._t)))
        return dt <= atol and rotation_distance(self, other) <= atol


def rotation_distance(a: Pose, b: Pose) -> float:
    """Angle of the rotation taking ``a``'s orientation to ``b``'s."""
    wa, va = float(a.quat[0]), a.quat[1:]
    wb, vb = float(b.quat[0]), b.quat[1:]
    w = min(abs(float(a.quat @ b.quat)), 1.0)
    # vector part of conj(a) * b, grouped so that a == b cancels exactly;
    # the half-angle sine avoids acos precision loss near 0
    v = (wa * vb - wb * va) - np.cross(va, vb)
    return 2.0 * math.atan2(float(np.linalg.norm(v)), w)


def compose(a: Pose, b: Pose) -> Pose:
    """Return ``a * b``: apply ``b`` first, then ``a``."""
    q = quat_multiply(a.quat, b.quat)
    t = a.rotation_matrix @ b.trans + a.trans
    return Pose(q, t)


def inverse(a: Pose) -> Pose:
    q = a.quat * np.array([1.0, -1.0, -1.0, -1.0])
    t = -(a.rotation_matrix.T @ a.trans)
    return Pose(q, t)


def yaw_of(pose: Pose) -> float:
    """Z-Y-X Euler yaw, ``atan2(R10, R00)``, wrapped to (-pi, pi]."""
    if pose._yaw is not None:
        return pose._yaw
    R = pose.rotation_matrix
    return wrap_angle(math.atan2(R[1, 0], R[0, 0]))


def project_planar(T: Pose) -> PlanarPose:
    """Projection ``[x, y, theta]`` of a (nearly) planar transform.

    Large pitch is logged as a data-quality warning; the yaw is still
    returned.
    """
    R = T.rotation_matrix
    pitch = math.asin(max(-1.0, min(1.0, -R[2, 0])))
    if abs(pitch) > _GIMBAL_PITCH:
        log.warning("project_planar: pitch %.2f deg near gimbal lock", math.degrees(pitch))
    return PlanarPose(T.trans[0], T.trans[1], yaw_of(T))


def lift_planar(p: PlanarPose) -> Pose:
    """Pure-yaw transform with zero z translation."""
    pose = Pose.from_yaw(p.theta, (p.x, p.y, 0.0))
    pose._yaw = p.theta
    return pose


def slerp(q0: np.ndarray, q1: np.ndarray, s: float) -> np.ndarray:
    """Spherical linear interpolation along the shorter arc."""
    d = float(q0 @ q1)
    if d < 0.0:
        q1 = -q1
        d = -d
    if d > _SLERP_DOT_LIMIT:
        q = (1.0 - s) * q0 + s * q1
        return q / np.linalg.norm(q)
    omega = math.acos(d)
    so = math.sin(omega)
    return (math.sin((1.0 - s) * omega) / so) * q0 + (math.sin(s * omega) / so) * q1


def interpolate(a: Pose, b: Pose, t_a: float, t_b: float, t: float) -> Pose:
    """Pose at time ``t`` between ``a`` (at ``t_a``) and ``b`` (at ``t_b``).

    Rotation by SLERP on the shorter arc, translation linear.
    """
    if not t_a < t_b:
        raise InputError(f"interpolate needs t_a < t_b, got {t_a!r}, {t_b!r}")
    if t < t_a or t > t_b:
        raise OutOfRangeError(t, t_a, t_b)
    if t == t_a:
        return a
    if t == t_b:
        return b
    s = (t - t_a) / (t_b - t_a)
    q = slerp(a.quat, b.quat, s)
    trans = (1.0 - s) * a.trans + s * b.trans
    return Pose(q, trans)


def angular_rate_norm(a: Pose, b: Pose, dt: float) -> float:
    """Magnitude of the mean angular rate taking ``a`` to ``b`` over ``dt`` seconds."""
    if not dt > 0:
        raise InputError(f"dt must be positive, got {dt!r}")
    return rotation_distance(a, b) / dt
