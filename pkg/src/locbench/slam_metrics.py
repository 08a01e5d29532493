"""Absolute trajectory error and relative pose error."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DegeneracyError, InputError, NoValidWindowsError
from .geometry import Pose, compose, inverse, rotation_distance
from .trajectory import DEFAULT_MAX_DT, Trajectory, associate

_RANK_TOL = 1e-10


class AlignMode(str, Enum):
    NONE = "none"
    SE3 = "se3"
    PLANAR = "planar"


@dataclass(frozen=True, eq=False)
class ErrorStats:
    """Summary statistics over per-sample errors (kept in ``errors``)."""

    rmse: float
    mean: float
    median: float
    max: float
    count: int
    errors: np.ndarray = field(repr=False)

    @classmethod
    def from_errors(cls, errors) -> "ErrorStats":
        e = np.array(errors, dtype=float).reshape(-1)
        if e.size == 0:
            raise InputError("no error samples")
        e.setflags(write=False)
        srt = np.sort(e)
        return cls(
            rmse=float(np.sqrt(np.mean(e * e))),
            mean=float(np.mean(e)),
            median=float(srt[(len(srt) - 1) // 2]),  # lower middle for even counts
            max=float(srt[-1]),
            count=int(e.size),
            errors=e,
        )

    def as_dict(self) -> dict:
        return {"rmse": self.rmse, "mean": self.mean, "median": self.median,
                "max": self.max, "count": self.count}


@dataclass(frozen=True)
class AlignmentResult:
    transform: Pose
    mode: AlignMode
    residual_rmse: float


def _kabsch(src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rotation R and translation t minimizing sum |dst - (R src + t)|^2 (no scale)."""
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    H = (dst - mu_d).T @ (src - mu_s) / len(src)
    U, S, Vt = np.linalg.svd(H)
    dim = src.shape[1]
    needed = dim - 1
    if S[0] <= 0 or (needed > 1 and S[needed - 1] <= _RANK_TOL * S[0]):
        raise DegeneracyError(f"degenerate point geometry for {dim}D alignment "
                              f"(singular values {S.tolist()})")
    D = np.eye(dim)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        D[-1, -1] = -1.0
    R = U @ D @ Vt
    t = mu_d - R @ mu_s
    return R, t


def align_positions(est: np.ndarray, ref: np.ndarray, mode: AlignMode | str = AlignMode.SE3) -> AlignmentResult:
    """Least-squares rigid transform ``S`` with ``ref ~ S(est)``."""
    mode = AlignMode(mode)
    est = np.asarray(est, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if est.shape != ref.shape or est.ndim != 2 or est.shape[1] != 3:
        raise InputError("alignment needs two (N, 3) position arrays of equal shape")
    if mode is AlignMode.NONE:
        S = Pose.identity()
    elif mode is AlignMode.SE3:
        if len(est) < 3:
            raise DegeneracyError("se3 alignment needs at least 3 non-collinear pairs")
        R, t = _kabsch(est, ref)
        S = Pose.from_matrix(R, t)
    else:
        if len(est) < 2:
            raise DegeneracyError("planar alignment needs at least 2 distinct pairs")
        R2, t2 = _kabsch(est[:, :2], ref[:, :2])
        yaw = math.atan2(R2[1, 0], R2[0, 0])
        S = Pose.from_yaw(yaw, (t2[0], t2[1], 0.0))
    res = _residual(est, ref, S)
    if mode is not AlignMode.NONE:
        # the fit only reaches the identity up to rounding; keep it exact when it is optimal
        res_id = _residual(est, ref, Pose.identity())
        if res_id <= res:
            S, res = Pose.identity(), res_id
    return AlignmentResult(transform=S, mode=mode, residual_rmse=res)


def _residual(est, ref, S: Pose) -> float:
    moved = est @ S.rotation_matrix.T + S.trans
    return float(np.sqrt(np.mean(np.sum((ref - moved) ** 2, axis=1))))


def align(est: Trajectory, ref: Trajectory, pairs, mode: AlignMode | str = AlignMode.SE3) -> AlignmentResult:
    """Align ``est`` onto ``ref`` using associated ``(index_est, index_ref)`` pairs."""
    pairs = list(pairs)
    ie = [i for i, _ in pairs]
    ir = [j for _, j in pairs]
    return align_positions(est.positions[ie], ref.positions[ir], mode)


def ate(est: Trajectory, ref: Trajectory, max_dt: float = DEFAULT_MAX_DT,
        mode: AlignMode | str = AlignMode.SE3) -> ErrorStats:
    """Translational error per associated pose after aligning ``est`` to ``ref``."""
    stats, _ = ate_with_alignment(est, ref, max_dt, mode)
    return stats


def ate_with_alignment(est: Trajectory, ref: Trajectory, max_dt: float = DEFAULT_MAX_DT,
                       mode: AlignMode | str = AlignMode.SE3):
    pairs = associate(est, ref, max_dt)
    if len(pairs) < 3:
        raise InputError(f"ATE needs at least 3 associated pairs, found {len(pairs)}")
    ie = [i for i, _ in pairs]
    ir = [j for _, j in pairs]
    pe = est.positions[ie]
    pr = ref.positions[ir]
    result = align_positions(pe, pr, mode)
    S = result.transform
    moved = pe @ S.rotation_matrix.T + S.trans
    errors = np.linalg.norm(pr - moved, axis=1)
    return ErrorStats.from_errors(errors), result


def relative_pose_errors(est: Trajectory, ref: Trajectory, delta: float,
                         max_dt: float = DEFAULT_MAX_DT) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-window ``(times, translation errors [m], rotation errors [deg])``.

    One window starts at every associated pair whose ``t + delta`` lies inside
    both trajectories; the window end poses are SE(3)-interpolated.
    """
    if not delta > 0:
        raise InputError(f"delta must be positive, got {delta!r}")
    pairs = associate(est, ref, max_dt)
    times, rte, rre = [], [], []
    for ie, ir in pairs:
        te = est.stamps[ie] + delta
        tr = ref.stamps[ir] + delta
        if te > est.end or tr > ref.end:
            continue
        P0, P1 = est.poses[ie], est.sample_at(te)
        Q0, Q1 = ref.poses[ir], ref.sample_at(tr)
        P = compose(inverse(P0), P1)
        Q = compose(inverse(Q0), Q1)
        # |t| of Q^-1 P equals |t_P - t_Q|; both forms are exactly 0 when P == Q
        times.append(float(ref.stamps[ir]))
        rte.append(float(np.linalg.norm(P.trans - Q.trans)))
        rre.append(math.degrees(rotation_distance(Q, P)))
    if not times:
        raise NoValidWindowsError(f"no RPE windows of {delta} s fit inside the associated span")
    return np.array(times), np.array(rte), np.array(rre)


def rpe(est: Trajectory, ref: Trajectory, delta: float = 2.0,
        max_dt: float = DEFAULT_MAX_DT) -> tuple[ErrorStats, ErrorStats]:
    """Relative translation error (m) and relative rotation error (deg) over ``delta`` seconds."""
    _, rte, rre = relative_pose_errors(est, ref, delta, max_dt)
    return ErrorStats.from_errors(rte), ErrorStats.from_errors(rre)
