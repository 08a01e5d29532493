"""Differential-drive wheel odometry.

Integrates cumulative encoder ticks into planar vehicle poses, lifts them to
SE(3) camera-frame trajectories, and propagates planar pose covariance with
the slip-proportional wheel noise model ``Sigma_w = diag(k_r |ds_r|, k_l |ds_l|)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import CalibrationError, InputError, OutOfRangeError
from .geometry import (Pose, PlanarPose, compose, inverse, lift_planar, wrap_angle,
                       yaw_of)
from .trajectory import Trajectory

log = logging.getLogger(__name__)

DEFAULT_SLIP_COEFF = 0.01
_PSD_FLOOR_TOL = 1e-10


@dataclass(frozen=True)
class EncoderSample:
    timestamp: float
    left: int
    right: int


class EncoderLog(Sequence):
    """Immutable encoder log; a sequence of :class:`EncoderSample` backed by arrays."""

    def __init__(self, samples: Iterable[EncoderSample]):
        samples = tuple(samples)
        self._samples = samples
        t = np.array([s.timestamp for s in samples], dtype=float)
        if np.any(np.diff(t) <= 0):
            raise InputError("encoder timestamps must be strictly increasing")
        self.t = t
        self.left = np.array([s.left for s in samples], dtype=float)
        self.right = np.array([s.right for s in samples], dtype=float)
        for a in (self.t, self.left, self.right):
            a.setflags(write=False)

    def __getitem__(self, i):
        return self._samples[i]

    def __len__(self):
        return len(self._samples)

    def __repr__(self):
        if not self._samples:
            return "EncoderLog([])"
        return f"EncoderLog(n={len(self)}, t=[{self.t[0]}, {self.t[-1]}])"


def as_encoder_log(log_: Iterable[EncoderSample]) -> EncoderLog:
    return log_ if isinstance(log_, EncoderLog) else EncoderLog(log_)


@dataclass(frozen=True)
class DiffDriveParams:
    """Differential-drive constants.

    ``slip_coeff_*`` is the wheel-travel variance growth in m^2 per meter
    traveled (``k`` in ``Sigma_w = diag(k_r |ds_r|, k_l |ds_l|)``).
    """

    meters_per_tick_left: float
    meters_per_tick_right: float
    wheel_base: float
    slip_coeff_left: float = DEFAULT_SLIP_COEFF
    slip_coeff_right: float = DEFAULT_SLIP_COEFF

    def __post_init__(self):
        if not (self.meters_per_tick_left > 0 and self.meters_per_tick_right > 0):
            raise CalibrationError("meters_per_tick must be positive on both wheels")
        if not self.wheel_base > 0:
            raise CalibrationError("wheel_base must be positive")
        if self.slip_coeff_left < 0 or self.slip_coeff_right < 0:
            raise CalibrationError("slip coefficients must be non-negative")


@dataclass(frozen=True, eq=False)
class PlanarBelief:
    pose: PlanarPose
    cov: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))


def _yaw_only_residual(pose: Pose) -> float:
    """Magnitude of the roll/pitch part of ``pose``'s rotation."""
    return abs(float(pose.quat[1])) + abs(float(pose.quat[2]))


@dataclass(frozen=True, eq=False)
class CalibrationSet:
    """Extrinsics and wheel model for one robot.

    ``T_CCp`` places the pseudo-camera frame {Cp} (origin at the camera,
    orientation of the vehicle frame) in the camera frame.  When omitted it
    is derived from ``T_VC``; when given it must be consistent with it.
    """

    T_VC: Pose
    diffdrive: DiffDriveParams | None = None
    T_CCp: Pose | None = None

    def __post_init__(self):
        derived = Pose(inverse(self.T_VC).quat)
        if self.T_CCp is None:
            object.__setattr__(self, "T_CCp", derived)
            return
        if float(np.max(np.abs(self.T_CCp.trans))) > 1e-9:
            raise CalibrationError("T_CCp must have zero translation (Cp shares C's origin)")
        # V <- Cp must be a pure yaw, i.e. Cp is gravity-aligned like V
        T_VCp = compose(self.T_VC, self.T_CCp)
        if _yaw_only_residual(T_VCp) > 1e-6:
            raise CalibrationError("T_CCp inconsistent with T_VC: pseudo-camera frame "
                                   "is not aligned with the vehicle's z axis")

    @property
    def T_VCp(self) -> Pose:
        return compose(self.T_VC, self.T_CCp)

    @property
    def mount_yaw(self) -> float:
        """Fixed yaw of {Cp} relative to {V} (zero for the canonical derivation)."""
        return yaw_of(self.T_VCp)


def step(pose: PlanarPose, ds_left: float, ds_right: float, params: DiffDriveParams) -> PlanarPose:
    """Advance a planar pose by one pair of wheel arc increments (midpoint heading)."""
    ds = 0.5 * (ds_right + ds_left)
    dth = (ds_right - ds_left) / params.wheel_base
    phi = pose.theta + 0.5 * dth
    return PlanarPose(pose.x + ds * math.cos(phi), pose.y + ds * math.sin(phi),
                      pose.theta + dth)


def step_jacobians(pose: PlanarPose, ds_left: float, ds_right: float,
                   params: DiffDriveParams) -> tuple[np.ndarray, np.ndarray]:
    """Jacobians of :func:`step` w.r.t. the pose and w.r.t. ``(ds_right, ds_left)``."""
    b = params.wheel_base
    ds = 0.5 * (ds_right + ds_left)
    phi = pose.theta + 0.5 * (ds_right - ds_left) / b
    c, s = math.cos(phi), math.sin(phi)
    F_p = np.array([[1.0, 0.0, -ds * s],
                    [0.0, 1.0, ds * c],
                    [0.0, 0.0, 1.0]])
    F_w = np.array([[0.5 * c - ds * s / (2 * b), 0.5 * c + ds * s / (2 * b)],
                    [0.5 * s + ds * c / (2 * b), 0.5 * s - ds * c / (2 * b)],
                    [1.0 / b, -1.0 / b]])
    return F_p, F_w


def _make_psd(cov: np.ndarray) -> np.ndarray:
    cov = 0.5 * (cov + cov.T)
    w, V = np.linalg.eigh(cov)
    if w[0] < 0.0:
        if w[0] < -_PSD_FLOOR_TOL:
            log.debug("covariance eigenvalue %.3e floored at 0", w[0])
        w = np.maximum(w, 0.0)
        cov = (V * w) @ V.T
        cov = 0.5 * (cov + cov.T)
    return cov


def propagate_covariance(belief: PlanarBelief, ds_left: float, ds_right: float,
                         params: DiffDriveParams) -> PlanarBelief:
    F_p, F_w = step_jacobians(belief.pose, ds_left, ds_right, params)
    Q = np.diag([params.slip_coeff_right * abs(ds_right),
                 params.slip_coeff_left * abs(ds_left)])
    cov = F_p @ belief.cov @ F_p.T + F_w @ Q @ F_w.T
    return PlanarBelief(step(belief.pose, ds_left, ds_right, params), _make_psd(cov))


def _checked_log(log_: Iterable[EncoderSample]) -> EncoderLog:
    log_ = as_encoder_log(log_)
    if len(log_) < 2:
        raise InputError(f"encoder log needs at least 2 samples, got {len(log_)}")
    return log_


def _increments(log_: EncoderLog, t0: float, t1: float, params: DiffDriveParams, extra=()):
    """Timeline and wheel arc increments over [t0, t1].

    Ticks are linearly apportioned in time between encoder samples.
    Returns ``(times, ds_left, ds_right)`` where the increments lead up to
    ``times[1:]``.
    """
    t, left, right = log_.t, log_.left, log_.right
    for q in (t0, t1):
        if q < t[0] or q > t[-1]:
            raise OutOfRangeError(q, float(t[0]), float(t[-1]))
    i0 = max(int(np.searchsorted(t, t0, side="right")) - 1, 0)
    i1 = min(int(np.searchsorted(t, t1, side="left")) + 1, len(t))
    t, left, right = t[i0:i1], left[i0:i1], right[i0:i1]
    inner = t[(t > t0) & (t < t1)]
    times = np.union1d(np.concatenate([[t0, t1], inner]), np.asarray(extra, dtype=float))
    L = np.interp(times, t, left) * params.meters_per_tick_left
    R = np.interp(times, t, right) * params.meters_per_tick_right
    return times, np.diff(L), np.diff(R)


def integrate(log_: Sequence[EncoderSample], params: DiffDriveParams,
              query_times: Sequence[float]) -> Trajectory:
    """Dead-reckoned vehicle poses ``T_{V(t0) V(t)}`` at ``query_times``.

    ``t0`` is the first query time, where the pose is the identity.
    """
    log_ = _checked_log(log_)
    q = np.asarray(query_times, dtype=float).reshape(-1)
    if q.size == 0:
        raise InputError("no query times")
    if np.any(np.diff(q) <= 0):
        raise InputError("query times must be strictly increasing")
    times, dl, dr = _increments(log_, float(q[0]), float(q[-1]), params, extra=q)
    want = set(np.searchsorted(times, q).tolist())
    pose = PlanarPose(0.0, 0.0, 0.0)
    poses = [lift_planar(pose)]
    for k in range(len(dl)):
        pose = step(pose, dl[k], dr[k], params)
        if k + 1 in want:
            poses.append(lift_planar(pose))
    return Trajectory(q, poses, frame_world="V(t0)", frame_body="V")


def to_camera_frame(traj_V: Trajectory, calib: CalibrationSet) -> Trajectory:
    """Map ``T_{V(t0)V(t)}`` to ``T_{C(t0)C(t)} = T_VC^-1 T_{V(t0)V(t)} T_VC``."""
    T_VC = calib.T_VC
    T_CV = inverse(T_VC)
    poses = [compose(compose(T_CV, p), T_VC) for p in traj_V.poses]
    return traj_V.with_poses(poses, frame_world="C(t0)", frame_body="C")


def _vehicle_to_pseudo_camera(rel: PlanarBelief, calib: CalibrationSet) -> np.ndarray:
    """Covariance of ``pi(T_{Cp(tj)Cp(tj1)})`` from that of the vehicle relative pose.

    ``T_{Cp(tj)Cp(tj1)} = T_VCp^-1 T_{V(tj)V(tj1)} T_VCp`` with ``T_VCp`` a
    yaw ``psi`` plus lever arm ``p``; first-order mapping of (x, y, theta).
    """
    T_VCp = calib.T_VCp
    p = T_VCp.trans
    psi = yaw_of(T_VCp)
    th = rel.pose.theta
    c, s = math.cos(th), math.sin(th)
    d_rot_p = np.array([-s * p[0] - c * p[1], c * p[0] - s * p[1]])
    cp, sp = math.cos(psi), math.sin(psi)
    Rm = np.array([[cp, sp], [-sp, cp]])
    J = np.eye(3)
    J[:2, :2] = Rm
    J[:2, 2] = Rm @ d_rot_p
    return _make_psd(J @ rel.cov @ J.T)


def relative_cov(log_: Sequence[EncoderSample], t_j: float, t_j1: float,
                 calib: CalibrationSet) -> np.ndarray:
    """Covariance of the planar relative odometry between ``t_j`` and ``t_j1``.

    Accumulated per encoder increment from zero covariance at ``t_j`` and
    expressed in the pseudo-camera frame at ``t_j``.
    """
    if calib.diffdrive is None:
        raise CalibrationError("calibration has no differential-drive parameters")
    if t_j > t_j1:
        raise InputError(f"relative_cov needs t_j <= t_j1, got {t_j!r} > {t_j1!r}")
    log_ = _checked_log(log_)
    if t_j == t_j1:
        t = log_.t
        if t_j < t[0] or t_j > t[-1]:
            raise OutOfRangeError(t_j, float(t[0]), float(t[-1]))
        return np.zeros((3, 3))
    params = calib.diffdrive
    _, dl, dr = _increments(log_, t_j, t_j1, params)
    belief = PlanarBelief(PlanarPose(0.0, 0.0, 0.0), np.zeros((3, 3)))
    for k in range(len(dl)):
        belief = propagate_covariance(belief, dl[k], dr[k], params)
    return _vehicle_to_pseudo_camera(belief, calib)


__all__ = [
    "EncoderSample", "EncoderLog", "as_encoder_log", "DiffDriveParams", "PlanarBelief", "CalibrationSet",
    "step", "step_jacobians", "propagate_covariance", "integrate",
    "to_camera_frame", "relative_cov", "wrap_angle",
]
