"""Clock-offset estimation from angular-rate norms, and Allan deviation.

Offset convention: an instant stamped ``t`` on the trajectory clock is
stamped ``t + offset`` on the gyro clock, so ``traj.shift_time(offset)``
brings the trajectory onto the gyro clock.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateSignalError, InputError
from .geometry import angular_rate_norm
from .trajectory import Trajectory

DEFAULT_SEARCH_WINDOW = 2.0
DEFAULT_GRID_STEP = 0.01
DEFAULT_REFINE_STEP = 0.001
_FLAT_VARIANCE = 1e-12
_MIN_GRID_SAMPLES = 20


@dataclass(frozen=True)
class GyroSample:
    timestamp: float
    rate: tuple[float, float, float]


@dataclass(frozen=True)
class OffsetEstimate:
    offset: float
    peak_correlation: float
    grid_step: float


def slerp_rate_profile(traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """Knot times and the constant angular-rate norm of each SLERP segment."""
    if len(traj) < 2:
        raise InputError("angular rates need at least 2 trajectory samples")
    st = traj.stamps
    rates = np.array([angular_rate_norm(traj.poses[j], traj.poses[j + 1], st[j + 1] - st[j])
                      for j in range(len(traj) - 1)])
    return st, rates


def trajectory_rate_norms(traj: Trajectory, times, h: float, profile=None) -> np.ndarray:
    """Angular-rate norm of the SLERP curve through ``traj``, averaged over
    ``[t - h/2, t + h/2]`` (clipped to the trajectory span) for each ``t``."""
    st, rates = slerp_rate_profile(traj) if profile is None else profile
    cum = np.concatenate([[0.0], np.cumsum(rates * np.diff(st))])
    times = np.asarray(times, dtype=float)
    a = np.clip(times - 0.5 * h, st[0], st[-1])
    b = np.clip(times + 0.5 * h, st[0], st[-1])
    return (np.interp(b, st, cum) - np.interp(a, st, cum)) / (b - a)


def _gyro_arrays(gyro: Sequence[GyroSample]):
    if len(gyro) < 2:
        raise InputError("gyro stream needs at least 2 samples")
    t = np.array([g.timestamp for g in gyro], dtype=float)
    if np.any(np.diff(t) <= 0):
        raise InputError("gyro timestamps must be strictly increasing")
    w = np.linalg.norm(np.array([g.rate for g in gyro], dtype=float), axis=1)
    return t, w


def _ncc(x: np.ndarray, y: np.ndarray) -> float:
    x = x - x.mean()
    y = y - y.mean()
    den = math.sqrt(float(x @ x) * float(y @ y))
    if den == 0.0:
        return 0.0
    return max(-1.0, min(1.0, float(x @ y) / den))


def estimate_time_offset(traj: Trajectory, gyro: Sequence[GyroSample],
                         search_window: float = DEFAULT_SEARCH_WINDOW,
                         grid_step: float = DEFAULT_GRID_STEP,
                         refine_step: float = DEFAULT_REFINE_STEP) -> OffsetEstimate:
    """Estimate the gyro-minus-trajectory clock offset.

    Both angular-rate norm signals are resampled on a uniform grid (period
    ``grid_step``) and compared by zero-mean normalized cross-correlation for
    candidate offsets in ``[-search_window, search_window]``.  Every candidate
    uses the same grid, restricted to where both signals exist for all
    candidates (no padding).  Around the coarse peak both signals are
    resampled at ``refine_step``, searched within one coarse step, and the
    best candidate is refined by a parabola through its neighbours.

    Raises:
        InputError: bad step sizes or too little overlap.
        DegenerateSignalError: a resampled signal is flat.
    """
    if not grid_step > 0 or not refine_step > 0:
        raise InputError("grid_step and refine_step must be positive")
    if search_window < 0:
        raise InputError("search_window must be >= 0")
    gt, gw = _gyro_arrays(gyro)
    overlap = min(traj.end, gt[-1]) - max(traj.start, gt[0])
    if overlap < 2.0 * search_window or len(traj) < 2:
        raise InputError(f"trajectory/gyro overlap {overlap:.3f} s shorter than "
                         f"twice the search window ({2 * search_window:.3f} s)")
    lo = max(traj.start, gt[0] + search_window)
    hi = min(traj.end, gt[-1] - search_window)
    n = int(math.floor((hi - lo) / grid_step + 1e-9)) + 1
    if hi <= lo or n < _MIN_GRID_SAMPLES:
        raise InputError("not enough common samples for correlation "
                         f"(window {search_window} s, step {grid_step} s)")
    profile = slerp_rate_profile(traj)
    grid = lo + grid_step * np.arange(n)
    x = trajectory_rate_norms(traj, grid, grid_step, profile)
    if np.var(x) < _FLAT_VARIANCE:
        raise DegenerateSignalError("trajectory angular-rate norm is flat; correlation undefined")
    if np.var(np.interp(grid, gt, gw)) < _FLAT_VARIANCE:
        raise DegenerateSignalError("gyro angular-rate norm is flat; correlation undefined")

    k = int(math.floor(search_window / grid_step + 1e-9))
    coarse = grid_step * np.arange(-k, k + 1)
    cvals = np.array([_ncc(x, np.interp(grid + c, gt, gw)) for c in coarse])
    best = float(coarse[int(np.argmax(cvals))])

    # refine on a grid at the finer resolution around the coarse peak
    nf = int(math.floor((hi - lo) / refine_step + 1e-9)) + 1
    fgrid = lo + refine_step * np.arange(nf)
    xf = trajectory_rate_norms(traj, fgrid, refine_step, profile)
    m = int(math.ceil(grid_step / refine_step))
    fine = best + refine_step * np.arange(-m, m + 1)
    fine = fine[np.abs(fine) <= search_window + 1e-12]
    fvals = np.array([_ncc(xf, np.interp(fgrid + c, gt, gw)) for c in fine])
    i = int(np.argmax(fvals))
    offset, peak = float(fine[i]), float(fvals[i])
    if 0 < i < len(fine) - 1:
        y0, y1, y2 = fvals[i - 1], fvals[i], fvals[i + 1]
        den = y0 - 2.0 * y1 + y2
        if den < 0:
            d = 0.5 * (y0 - y2) / den
            offset += d * refine_step
            peak = float(min(1.0, y1 - 0.25 * (y0 - y2) * d))
    return OffsetEstimate(offset=offset, peak_correlation=peak, grid_step=refine_step)


def allan_deviation(samples: Sequence[float], rate: float,
                    cluster_times: Sequence[float]) -> list[tuple[float, float]]:
    """Overlapping Allan deviation of a rate signal.

    For cluster size ``m = tau * rate`` the variance is half the mean squared
    difference of adjacent (overlapping) cluster averages,
    ``ybar[k+m] - ybar[k]`` for every ``k`` where both clusters fit.

    Raises:
        InputError: ``rate <= 0``, ``tau`` not a positive multiple of the
            sample period, or fewer than 9 clusters for some ``tau``.
    """
    if not rate > 0:
        raise InputError(f"rate must be positive, got {rate!r}")
    y = np.asarray(samples, dtype=float).reshape(-1)
    n = len(y)
    if n == 0:
        raise InputError("no samples")
    # offset removal keeps the running sum well conditioned and a constant exactly flat
    csum = np.concatenate([[0.0], np.cumsum(y - y[0])])
    out = []
    for tau in cluster_times:
        m = int(round(tau * rate))
        if m < 1:
            raise InputError(f"tau {tau!r} shorter than one sample period")
        if 9 * m > n:
            raise InputError(f"record of {n} samples too short for tau {tau!r} "
                             "(needs at least 9 clusters)")
        means = (csum[m:] - csum[:-m]) / m
        d = means[m:] - means[:-m]
        out.append((m / rate, float(math.sqrt(0.5 * float(np.mean(d * d))))))
    return out
