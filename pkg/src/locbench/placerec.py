"""Metric place-recognition evaluation against a reference trajectory.

A pair of consecutive localizations is consistent when the relative motion
between their claimed map poses agrees with the reference relative motion,
judged by a Mahalanobis gate in pseudo-camera planar coordinates.  Half the
number of gate violations estimates the number of false positives; true
positives are then normalized by traveled distance and time, and their
regularity along the path is summarized by ``s_prf``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import DegeneracyError, InputError
from .geometry import PlanarPose, Pose, compose, inverse, project_planar, wrap_angle
from .trajectory import Trajectory
from .wheel_odometry import CalibrationSet, EncoderSample, as_encoder_log, relative_cov

# upper 0.025 critical value of chi-square with 3 degrees of freedom
CHI2_3_0025 = 9.3484
DEFAULT_LOC_COV = np.diag([0.1 ** 2, 0.1 ** 2, (5.0 * math.pi / 180.0) ** 2])
DEFAULT_ODOM_COV_FLOOR = np.diag([1e-4, 1e-4, 1e-6])
_MIN_EIG = 1e-12

TABLE_COLUMNS = ("#loc", "#outlier", "s_PRF", "L", "t_n", "N_tp/L", "N_tp/t_n")


class Attribution(str, Enum):
    """Which event of a gate-violating pair loses true-positive weight."""

    LATER = "later"
    BOTH = "both"


class TnMode(str, Enum):
    LAST_EVENT = "last_event"
    DURATION = "duration"


@dataclass(frozen=True)
class LocalizationEvent:
    """Claimed camera pose ``T_{G C(t)}`` in the map frame G."""

    timestamp: float
    pose: Pose


@dataclass(frozen=True, eq=False)
class PrEvalConfig:
    """Place-recognition evaluation settings.

    ``chi2_threshold`` is compared with the squared Mahalanobis distance,
    i.e. the gate is ``d > sqrt(chi2_threshold)``.
    ``odom_cov_floor`` replaces the relative-odometry covariance when no
    encoder log is supplied (reference trajectory used directly).
    """

    loc_cov: np.ndarray = field(default_factory=lambda: DEFAULT_LOC_COV.copy())
    chi2_threshold: float = CHI2_3_0025
    spatial_interval: float = 10.0
    sample_rate: float = 1.0
    odom_cov_floor: np.ndarray = field(default_factory=lambda: DEFAULT_ODOM_COV_FLOOR.copy())
    attribution: Attribution = Attribution.LATER
    t_n_mode: TnMode = TnMode.LAST_EVENT

    def __post_init__(self):
        for name in ("loc_cov", "odom_cov_floor"):
            m = np.array(getattr(self, name), dtype=float)
            if m.shape == (3,):
                m = np.diag(m)
            if m.shape != (3, 3):
                raise InputError(f"{name} must be 3x3 or a 3-vector diagonal")
            if np.max(np.abs(m - m.T)) > 1e-12:
                raise InputError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(m)[0] < -1e-12:
                raise InputError(f"{name} must be positive semi-definite")
            m.setflags(write=False)
            object.__setattr__(self, name, m)
        if not self.chi2_threshold > 0:
            raise InputError("chi2_threshold must be positive")
        if not self.spatial_interval > 0:
            raise InputError("spatial_interval must be positive")
        if not self.sample_rate > 0:
            raise InputError("sample_rate must be positive")
        object.__setattr__(self, "attribution", Attribution(self.attribution))
        object.__setattr__(self, "t_n_mode", TnMode(self.t_n_mode))

    @property
    def gate(self) -> float:
        """Mahalanobis distance above which a pair is inconsistent."""
        return math.sqrt(self.chi2_threshold)

    def with_(self, **kw) -> "PrEvalConfig":
        return replace(self, **kw)

    def as_dict(self) -> dict:
        return {
            "loc_cov": self.loc_cov.tolist(),
            "chi2_threshold": self.chi2_threshold,
            "spatial_interval_m": self.spatial_interval,
            "sample_rate_hz": self.sample_rate,
            "odom_cov_floor": self.odom_cov_floor.tolist(),
            "attribution": self.attribution.value,
            "t_n_mode": self.t_n_mode.value,
        }


@dataclass(frozen=True, eq=False)
class GateResult:
    n_fp: float
    flags: list[bool]
    distances: list[float]
    pair_times: list[tuple[float, float]]


@dataclass(frozen=True, eq=False)
class PrReport:
    n_loc: int
    n_outlier: float
    s_prf: float
    L: float
    t_n: float
    rate_per_meter: float
    rate_per_second: float
    per_interval_counts: list[float]
    flags: list[bool] = field(default_factory=list)
    distances: list[float] = field(default_factory=list)
    t_n_duration: float = 0.0

    @property
    def n_tp(self) -> float:
        return self.n_loc - self.n_outlier

    def table_row(self) -> dict:
        """One row with exactly the localization-statistics table columns."""
        return dict(zip(TABLE_COLUMNS, (
            self.n_loc, self.n_outlier, self.s_prf, self.L, self.t_n,
            self.rate_per_meter, self.rate_per_second,
        )))


def _relative_planar(a: Pose, b: Pose, T_CCp: Pose) -> np.ndarray:
    """``pi((a T_CCp)^-1 (b T_CCp))`` as an array."""
    return project_planar(compose(inverse(compose(a, T_CCp)), compose(b, T_CCp))).as_array()


def delta_motion(e_j: LocalizationEvent, e_j1: LocalizationEvent, ref: Trajectory,
                 T_CCp: Pose) -> PlanarPose:
    """Difference between claimed and reference relative motion, ``[dx, dy, dtheta]``."""
    claimed = _relative_planar(e_j.pose, e_j1.pose, T_CCp)
    reference = _relative_planar(ref.sample_at(e_j.timestamp), ref.sample_at(e_j1.timestamp), T_CCp)
    d = claimed - reference
    return PlanarPose(d[0], d[1], wrap_angle(d[2]))


def delta_cov(rel_odom_cov, config: PrEvalConfig) -> np.ndarray:
    """Covariance of the motion difference: twice the localization covariance plus odometry."""
    return 2.0 * config.loc_cov + np.asarray(rel_odom_cov, dtype=float)


def mahalanobis(dT, cov) -> float:
    d = np.asarray(dT.as_array() if isinstance(dT, PlanarPose) else dT, dtype=float)
    cov = np.asarray(cov, dtype=float)
    cov = 0.5 * (cov + cov.T)
    w, V = np.linalg.eigh(cov)
    if w[0] <= _MIN_EIG:
        raise DegeneracyError(f"covariance not invertible (min eigenvalue {w[0]:.3e})")
    z = V.T @ d
    return float(math.sqrt(float(np.sum(z * z / w))))


def _odometry_cov(encoder_log, calib: CalibrationSet, t_j: float, t_j1: float,
                  config: PrEvalConfig) -> np.ndarray:
    if encoder_log is None:
        return config.odom_cov_floor
    return relative_cov(encoder_log, t_j, t_j1, calib)


def gate_pairs(events: Sequence[LocalizationEvent], ref: Trajectory,
               encoder_log: Sequence[EncoderSample] | None, calib: CalibrationSet,
               config: PrEvalConfig) -> GateResult:
    """Mahalanobis test on every consecutive pair of localizations."""
    events = list(events)
    if len(events) < 2:
        return GateResult(0.0, [], [], [])
    if encoder_log is not None:
        encoder_log = as_encoder_log(encoder_log)
    flags, dists, times = [], [], []
    gate = config.gate
    for a, b in zip(events[:-1], events[1:]):
        if not b.timestamp > a.timestamp:
            raise InputError("localization timestamps must be strictly increasing")
        dT = delta_motion(a, b, ref, calib.T_CCp)
        cov = delta_cov(_odometry_cov(encoder_log, calib, a.timestamp, b.timestamp, config), config)
        d = mahalanobis(dT, cov)
        dists.append(d)
        flags.append(d > gate)
        times.append((a.timestamp, b.timestamp))
    return GateResult(0.5 * sum(flags), flags, dists, times)


def count_false_positives(events, ref, encoder_log, calib, config) -> tuple[float, list[bool]]:
    """Half the number of gate-violating consecutive pairs, and the per-pair flags."""
    g = gate_pairs(events, ref, encoder_log, calib, config)
    return g.n_fp, g.flags


def interval_counts(event_distances, L: float, delta: float, weights=None) -> np.ndarray:
    """Counts ``l_i`` over ``m = ceil(L / delta)`` contiguous intervals.

    A distance equal to ``L`` falls into the last interval.
    """
    if not L > 0:
        raise InputError(f"traveled distance must be positive, got {L!r}")
    if not delta > 0:
        raise InputError(f"interval length must be positive, got {delta!r}")
    m = int(math.ceil(L / delta))
    d = np.asarray(event_distances, dtype=float).reshape(-1)
    if np.any(d < 0) or np.any(d > L):
        raise InputError("event distances must lie in [0, L]")
    w = np.ones(len(d)) if weights is None else np.asarray(weights, dtype=float)
    idx = np.minimum(np.floor(d / delta).astype(int), m - 1)
    return np.bincount(idx, weights=w, minlength=m).astype(float)


def s_prf_from_counts(counts) -> float:
    """Normalized standard deviation of per-interval counts; 0 if there are none."""
    l = np.asarray(counts, dtype=float)
    m = len(l)
    n_tp = float(l.sum())
    if m == 0 or n_tp <= 0:
        return 0.0
    # s^2 = m * sum(l^2) / N_tp^2 - 1; counts are multiples of 0.25, so the
    # sums are exact and the closed forms (e.g. sqrt(m - 1)) come out exactly
    s2 = m * float(np.sum(l * l)) / (n_tp * n_tp) - 1.0
    return float(math.sqrt(max(s2, 0.0)))


def s_prf(event_distances, L: float, delta: float, weights=None) -> float:
    """Regularity of true-positive localizations along the path (0 = perfectly regular)."""
    return s_prf_from_counts(interval_counts(event_distances, L, delta, weights))


def true_positive_weights(n_events: int, flags: Sequence[bool],
                          attribution: Attribution | str = Attribution.LATER) -> np.ndarray:
    """Per-event true-positive weight after discounting flagged pairs.

    Each flagged pair carries half a false positive.  ``later`` takes it from
    the pair's later event, ``both`` splits it evenly between the two events.
    The weights therefore sum to ``n_events - n_fp``.
    """
    attribution = Attribution(attribution)
    w = np.ones(n_events)
    for j, bad in enumerate(flags):
        if not bad:
            continue
        if attribution is Attribution.LATER:
            w[j + 1] -= 0.5
        else:
            w[j] -= 0.25
            w[j + 1] -= 0.25
    return w


def evaluate(events: Sequence[LocalizationEvent], ref: Trajectory,
             encoder_log: Sequence[EncoderSample] | None, calib: CalibrationSet,
             config: PrEvalConfig | None = None) -> PrReport:
    """Full localization statistics for one session."""
    config = config or PrEvalConfig()
    events = list(events)
    L = ref.arc_length()
    duration = ref.end - ref.start
    if not events:
        m = int(math.ceil(L / config.spatial_interval)) if L > 0 else 0
        # no last event to measure from; fall back to the session duration
        return PrReport(0, 0.0, 0.0, L, duration, 0.0, 0.0, [0.0] * m, t_n_duration=duration)
    gate = gate_pairs(events, ref, encoder_log, calib, config)
    n_loc = len(events)
    n_fp = gate.n_fp
    n_tp = n_loc - n_fp
    if config.t_n_mode is TnMode.LAST_EVENT:
        t_n = events[-1].timestamp - ref.start
    else:
        t_n = duration
    weights = true_positive_weights(n_loc, gate.flags, config.attribution)
    if L > 0:
        dist = [ref.distance_at(e.timestamp) for e in events]
        counts = interval_counts(dist, L, config.spatial_interval, weights)
        s = s_prf_from_counts(counts)
    else:
        counts = np.zeros(0)
        s = 0.0
    return PrReport(
        n_loc=n_loc,
        n_outlier=n_fp,
        s_prf=s,
        L=L,
        t_n=t_n,
        rate_per_meter=n_tp / L if L > 0 else 0.0,
        rate_per_second=n_tp / t_n if t_n > 0 else 0.0,
        per_interval_counts=counts.tolist(),
        flags=gate.flags,
        distances=gate.distances,
        t_n_duration=duration,
    )
