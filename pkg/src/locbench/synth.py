"""Deterministic synthetic runs with known ground truth.

A scenario is a planar vehicle path made of straight, arc and pause
segments driven at constant speed.  From the analytic path we derive the
camera ground truth, cumulative encoder ticks (with optional slip noise),
a gyro stream on a shifted clock, and localization events with injected
false positives.

Randomness comes from one Philox (counter-based) generator per output
channel, all keyed by ``seed``; channel keys are fixed so a new channel never
changes the draws of an existing one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .geometry import PlanarPose, Pose, compose, inverse, lift_planar, project_planar
from .placerec import LocalizationEvent
from .timesync import GyroSample
from .trajectory import Trajectory
from .wheel_odometry import (DEFAULT_SLIP_COEFF, CalibrationSet, DiffDriveParams,
                             EncoderLog, EncoderSample, integrate, to_camera_frame)

# stream keys; append new channels, never renumber
CH_ENC_LEFT = 0
CH_ENC_RIGHT = 1
CH_GYRO = 2
CH_LOC_NOISE = 3
CH_FP_INDEX = 4
CH_FP_DIRECTION = 5

# camera looking forward along vehicle x: x_C = -y_V, y_C = -z_V, z_C = x_V
DEFAULT_R_VC = np.array([[0.0, 0.0, 1.0],
                         [-1.0, 0.0, 0.0],
                         [0.0, -1.0, 0.0]])
DEFAULT_T_VC = Pose.from_matrix(DEFAULT_R_VC, (0.2, 0.0, 0.3))


def rng_for(seed: int, channel: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & (2 ** 64 - 1), spawn_key=(channel,))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Segment:
    """One piece of a scenario path.

    ``straight``: ``length`` m.  ``arc``: ``radius`` m and signed ``angle`` rad
    (positive turns left).  ``pause``: ``duration`` s standing still.
    ``slalom``: ``cycles`` periods of a sinusoidal yaw rate with peak
    ``amplitude`` rad/s and ``period`` s; heading and yaw rate return to their
    entry values, so adjoining straights keep the yaw rate continuous.
    """

    kind: str
    length: float = 0.0
    radius: float = 0.0
    angle: float = 0.0
    duration: float = 0.0
    period: float = 0.0
    amplitude: float = 0.0
    cycles: int = 0

    @classmethod
    def straight(cls, length):
        return cls("straight", length=float(length))

    @classmethod
    def arc(cls, radius, angle):
        return cls("arc", radius=float(radius), angle=float(angle))

    @classmethod
    def pause(cls, duration):
        return cls("pause", duration=float(duration))

    @classmethod
    def slalom(cls, period, amplitude, cycles=1):
        return cls("slalom", period=float(period), amplitude=float(amplitude), cycles=int(cycles))

    def __post_init__(self):
        if self.kind not in ("straight", "arc", "pause", "slalom"):
            raise InputError(f"unknown segment kind {self.kind!r}")
        if min(self.length, self.duration, self.radius, self.period, self.cycles) < 0:
            raise InputError(f"negative length/radius/duration/period in {self}")
        if self.kind == "arc" and self.radius == 0 and self.angle != 0:
            raise InputError("arc with zero radius")
        if self.kind == "slalom" and self.cycles > 0 and self.period == 0:
            raise InputError("slalom with zero period")

    def duration_at(self, speed: float) -> float:
        if self.kind == "pause":
            return self.duration
        if self.kind == "slalom":
            return self.period * self.cycles
        return self.path_length / speed

    @property
    def path_length(self) -> float:
        """Length of straights and arcs; slalom length depends on speed."""
        if self.kind == "straight":
            return self.length
        if self.kind == "arc":
            return self.radius * abs(self.angle)
        return 0.0


def default_path() -> tuple[Segment, ...]:
    """About 40 m of driving with a continuous, non-constant yaw rate and one stop."""
    return (
        Segment.straight(3.0), Segment.slalom(4.0, 0.6, 2), Segment.straight(2.0),
        Segment.slalom(2.5, 0.9, 3), Segment.pause(1.0), Segment.slalom(6.0, 0.4, 1),
        Segment.straight(3.0), Segment.slalom(3.0, -0.7, 2), Segment.straight(2.0),
    )


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    seed: int = 0
    path: tuple[Segment, ...] = field(default_factory=default_path)
    speed: float = 1.0
    encoder_rate: float = 100.0
    gyro_rate: float = 200.0
    gyro_clock_offset: float = 0.0
    slip_std: float = 0.0
    loc_rate: float = 1.0
    loc_noise_cov: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    n_false_positives: int = 0
    false_positive_magnitude: float = 5.0
    truth_rate: float = 40.0
    meters_per_tick: float = 1e-4
    wheel_base: float = 0.5
    gyro_noise_std: float = 0.0
    T_VC: Pose = DEFAULT_T_VC
    map_offset: PlanarPose = PlanarPose(0.0, 0.0, 0.0)
    start_time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "path", tuple(self.path))
        cov = np.array(self.loc_noise_cov, dtype=float)
        if cov.shape == (3,):
            cov = np.diag(cov)
        if cov.shape != (3, 3) or np.max(np.abs(cov - cov.T)) > 1e-12 \
                or np.linalg.eigvalsh(cov)[0] < -1e-12:
            raise InputError("loc_noise_cov must be a symmetric PSD 3x3 matrix")
        cov.setflags(write=False)
        object.__setattr__(self, "loc_noise_cov", cov)
        for name in ("speed", "encoder_rate", "gyro_rate", "loc_rate", "truth_rate",
                     "meters_per_tick", "wheel_base"):
            if not getattr(self, name) > 0:
                raise InputError(f"{name} must be positive")
        for name in ("slip_std", "gyro_noise_std", "false_positive_magnitude"):
            if getattr(self, name) < 0:
                raise InputError(f"{name} must be non-negative")
        if self.n_false_positives < 0:
            raise InputError("n_false_positives must be non-negative")

    @property
    def calibration(self) -> CalibrationSet:
        k = self.slip_std ** 2 if self.slip_std > 0 else DEFAULT_SLIP_COEFF
        params = DiffDriveParams(self.meters_per_tick, self.meters_per_tick, self.wheel_base, k, k)
        return CalibrationSet(T_VC=self.T_VC, diffdrive=params)


@dataclass(frozen=True, eq=False)
class SyntheticRun:
    spec: ScenarioSpec
    truth: Trajectory
    encoder: EncoderLog
    gyro: list[GyroSample]
    events: list[LocalizationEvent]
    labels: list[bool]
    calib: CalibrationSet

    @property
    def n_false(self) -> int:
        return sum(1 for ok in self.labels if not ok)

    def odometry_reference(self, rate: float | None = None) -> Trajectory:
        """Wheel-odometry camera trajectory ``T_{C(t0) C(t)}`` from the encoder log."""
        t = self.encoder.t
        if rate is not None:
            t = t[0] + np.arange(0.0, t[-1] - t[0] + 1e-12, 1.0 / rate)
        traj = integrate(self.encoder, self.calib.diffdrive, t)
        return to_camera_frame(traj, self.calib)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)


class _Piece:
    """One segment placed in time and space; yaw rate ``w`` is constant except
    for slaloms."""

    def __init__(self, seg, speed, t0, x0, y0, th0):
        self.kind = seg.kind
        self.t0, self.x0, self.y0, self.th0 = t0, x0, y0, th0
        self.dur = seg.duration_at(speed)
        self.v = 0.0 if seg.kind == "pause" else speed
        self.w = 0.0
        if seg.kind == "arc" and seg.angle:
            self.w = math.copysign(speed / seg.radius, seg.angle)
        self.period = seg.period
        self.amp = seg.amplitude
        if self.kind == "slalom":
            self._cycle = self._slalom_partial(self.period)

    def heading(self, tau):
        if self.kind == "slalom":
            k = 2.0 * math.pi / self.period
            return self.th0 + self.amp / k * (1.0 - math.cos(k * tau))
        return self.th0 + self.w * tau

    def yaw_rate(self, tau):
        if self.kind == "slalom":
            return self.amp * math.sin(2.0 * math.pi * tau / self.period)
        return self.w

    def _slalom_partial(self, tau):
        if tau <= 0.0:
            return 0.0, 0.0
        u = 0.5 * tau * (_GL_X + 1.0)
        k = 2.0 * math.pi / self.period
        th = self.th0 + self.amp / k * (1.0 - np.cos(k * u))
        return (0.5 * tau * self.v * float(_GL_W @ np.cos(th)),
                0.5 * tau * self.v * float(_GL_W @ np.sin(th)))

    def position(self, tau):
        if self.kind == "slalom":
            n = math.floor(tau / self.period)
            dx, dy = self._slalom_partial(tau - n * self.period)
            return (self.x0 + n * self._cycle[0] + dx, self.y0 + n * self._cycle[1] + dy)
        if self.w == 0.0:
            return (self.x0 + self.v * tau * math.cos(self.th0),
                    self.y0 + self.v * tau * math.sin(self.th0))
        r = self.v / self.w
        th1 = self.th0 + self.w * tau
        return (self.x0 + r * (math.sin(th1) - math.sin(self.th0)),
                self.y0 - r * (math.cos(th1) - math.cos(self.th0)))


class _Path:
    """Analytic planar vehicle motion along a list of segments."""

    def __init__(self, segments, speed, wheel_base, t0):
        self.t0 = t0
        self.b = wheel_base
        self.pieces: list[_Piece] = []
        self._dist0 = []
        t, x, y, th, dist = t0, 0.0, 0.0, 0.0, 0.0
        for seg in segments:
            piece = _Piece(seg, speed, t, x, y, th)
            if piece.dur <= 0:
                continue
            self.pieces.append(piece)
            self._dist0.append(dist)
            x, y = piece.position(piece.dur)
            th = piece.heading(piece.dur)
            dist += piece.v * piece.dur
            t += piece.dur
        self.t_end = t
        self.length = dist
        self._stamps = np.array([p.t0 for p in self.pieces])

    def _piece(self, t):
        k = int(np.searchsorted(self._stamps, t, side="right")) - 1
        return max(0, min(k, len(self.pieces) - 1))

    def state(self, t):
        """``(x, y, heading, left wheel travel, right wheel travel)`` at ``t``."""
        k = self._piece(t)
        p = self.pieces[k]
        tau = t - p.t0
        x, y = p.position(tau)
        th = p.heading(tau)
        # headings are never wrapped, so this is the total turn since the start
        dist = self._dist0[k] + p.v * tau
        turn = th - self.pieces[0].th0
        return x, y, th, dist - 0.5 * self.b * turn, dist + 0.5 * self.b * turn

    def yaw_rate(self, t):
        p = self.pieces[self._piece(t)]
        return p.yaw_rate(t - p.t0)

    def mean_yaw_rate(self, t, period):
        """Average yaw rate over ``[t - period/2, t + period/2]`` (clipped to the run)."""
        a = max(self.t0, t - 0.5 * period)
        b = min(self.t_end, t + 0.5 * period)
        return (self.state(b)[2] - self.state(a)[2]) / (b - a)


def _uniform_times(t0, t1, rate):
    n = int(math.floor((t1 - t0) * rate + 1e-9))
    return t0 + np.arange(n + 1) / rate


def _pick_false_indices(n_events, n_fp, rng) -> list[int]:
    """Seeded interior, pairwise non-adjacent indices."""
    if n_fp == 0:
        return []
    if n_events < 3 or n_fp > (n_events - 1) // 2:
        raise InputError(f"cannot place {n_fp} isolated false positives among {n_events} events")
    chosen: set[int] = set()
    order = rng.permutation(np.arange(1, n_events - 1))
    for i in order.tolist():
        if i in chosen or (i - 1) in chosen or (i + 1) in chosen:
            continue
        chosen.add(i)
        if len(chosen) == n_fp:
            break
    if len(chosen) < n_fp:
        raise InputError(f"cannot place {n_fp} isolated false positives among {n_events} events")
    return sorted(chosen)


def _sqrt_psd(cov):
    w, V = np.linalg.eigh(cov)
    return V * np.sqrt(np.maximum(w, 0.0))


def perturb_planar(T_GCp: Pose, dx: float, dy: float, dtheta: float) -> Pose:
    """Add ``[dx, dy, dtheta]`` to the planar coordinates of a gravity-aligned pose, keeping z."""
    p = project_planar(T_GCp)
    q = lift_planar(PlanarPose(p.x + dx, p.y + dy, p.theta + dtheta))
    return Pose(q.quat, (q.trans[0], q.trans[1], T_GCp.trans[2]))


def generate(spec: ScenarioSpec) -> SyntheticRun:
    path = _Path(spec.path, spec.speed, spec.wheel_base, spec.start_time)
    if not path.pieces:
        raise InputError("scenario path has zero duration")
    if path.length == 0.0 and spec.loc_rate > 0:
        raise InputError("scenario path has zero length; localization events need motion")
    calib = spec.calibration
    T_VC = spec.T_VC
    T_CCp = calib.T_CCp
    T_GW = lift_planar(spec.map_offset)

    def camera_pose(t):
        x, y, th, _, _ = path.state(t)
        return compose(lift_planar(PlanarPose(x, y, th)), T_VC)

    t_truth = _uniform_times(path.t0, path.t_end, spec.truth_rate)
    if t_truth[-1] < path.t_end - 1e-9:
        t_truth = np.append(t_truth, path.t_end)
    truth = Trajectory(t_truth, [camera_pose(t) for t in t_truth], "W", "C")

    # encoder: cumulative wheel travel + random-walk slip, quantized to ticks
    t_enc = _uniform_times(path.t0, path.t_end, spec.encoder_rate)
    st = np.array([path.state(t)[3:] for t in t_enc])
    ticks = []
    for col, ch in ((0, CH_ENC_LEFT), (1, CH_ENC_RIGHT)):
        s = st[:, col]
        if spec.slip_std > 0:
            ds = np.diff(s)
            noise = rng_for(spec.seed, ch).standard_normal(len(ds)) * spec.slip_std * np.sqrt(np.abs(ds))
            s = s + np.concatenate([[0.0], np.cumsum(noise)])
        ticks.append(np.rint(s / spec.meters_per_tick).astype(np.int64))
    encoder = EncoderLog(EncoderSample(float(t), int(l), int(r))
                         for t, l, r in zip(t_enc, ticks[0], ticks[1]))

    t_gyro = _uniform_times(path.t0, path.t_end, spec.gyro_rate)
    g_rng = rng_for(spec.seed, CH_GYRO)
    # an integrating rate sensor reports the mean rate over its sample period
    wz = np.array([path.mean_yaw_rate(t, 1.0 / spec.gyro_rate) for t in t_gyro])
    rates = np.zeros((len(t_gyro), 3))
    rates[:, 2] = wz
    if spec.gyro_noise_std > 0:
        rates += g_rng.standard_normal(rates.shape) * spec.gyro_noise_std
    gyro = [GyroSample(float(t + spec.gyro_clock_offset), tuple(float(v) for v in r))
            for t, r in zip(t_gyro, rates)]

    t_loc = _uniform_times(path.t0, path.t_end, spec.loc_rate)
    n_ev = len(t_loc)
    noise = rng_for(spec.seed, CH_LOC_NOISE).standard_normal((n_ev, 3)) @ _sqrt_psd(spec.loc_noise_cov).T
    false_idx = set(_pick_false_indices(n_ev, spec.n_false_positives, rng_for(spec.seed, CH_FP_INDEX)))
    dirs = rng_for(spec.seed, CH_FP_DIRECTION).uniform(0.0, 2.0 * math.pi, n_ev)
    T_CpC = inverse(T_CCp)
    events, labels = [], []
    for i, t in enumerate(t_loc):
        T_GCp = compose(T_GW, compose(camera_pose(t), T_CCp))
        dx, dy, dth = noise[i]
        genuine = i not in false_idx
        if not genuine:
            dx += spec.false_positive_magnitude * math.cos(dirs[i])
            dy += spec.false_positive_magnitude * math.sin(dirs[i])
        T_GC = compose(perturb_planar(T_GCp, dx, dy, dth), T_CpC)
        events.append(LocalizationEvent(float(t), T_GC))
        labels.append(genuine)
    return SyntheticRun(spec, truth, encoder, gyro, events, labels, calib)


def oracle_false_positives(labels) -> float:
    """Label-aware gate count: half the consecutive pairs touching a false event."""
    labels = list(labels)
    bad = sum(1 for a, b in zip(labels[:-1], labels[1:]) if not (a and b))
    return 0.5 * bad
