"""Plain-text file formats.

Trajectory / localization files
    one pose per line, ``timestamp tx ty tz qx qy qz qw``; ``#`` starts a
    comment.  Quaternions within 1e-3 of unit norm are renormalized, others
    rejected.
Encoder logs
    CSV ``timestamp,left_ticks,right_ticks`` with an optional header line.
Gyro logs
    ``timestamp wx wy wz`` (rad/s).
Calibration and scenario files
    flat ``key = value`` text, units in the key names; unknown keys are
    rejected.

Writers emit floats with ``repr`` so a written file parses back to the same
values and re-serializes byte-identically.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .errors import FormatError, InputError, ParseError
from .geometry import PlanarPose, Pose
from .placerec import LocalizationEvent
from .synth import ScenarioSpec, Segment, SyntheticRun
from .timesync import GyroSample
from .trajectory import Trajectory
from .wheel_odometry import (DEFAULT_SLIP_COEFF, CalibrationSet, DiffDriveParams,
                             EncoderLog, EncoderSample)

QUAT_NORM_TOL = 1e-3


def _fmt(x) -> str:
    return repr(float(x))


def _data_lines(path):
    """Yield ``(line_number, stripped_text)`` for non-blank, non-comment lines."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield no, line


def _floats(fields, path, no, n):
    if len(fields) != n:
        raise ParseError(f"expected {n} fields, found {len(fields)}", path, no)
    try:
        vals = [float(f) for f in fields]
    except ValueError as exc:
        raise ParseError(f"not a number: {exc}", path, no) from None
    if not all(math.isfinite(v) for v in vals):
        raise ParseError("non-finite value", path, no)
    return vals


def _pose_from_fields(vals, path, no) -> Pose:
    tx, ty, tz, qx, qy, qz, qw = vals
    n = math.sqrt(qx * qx + qy * qy + qz * qz + qw * qw)
    if abs(n - 1.0) > QUAT_NORM_TOL:
        raise ParseError(f"quaternion norm {n:.6g} outside [1-1e-3, 1+1e-3]", path, no)
    return Pose((qw, qx, qy, qz), (tx, ty, tz))


def _read_stamped_poses(path):
    stamps, poses, lines = [], [], []
    for no, line in _data_lines(path):
        vals = _floats(line.split(), path, no, 8)
        if stamps and not vals[0] > stamps[-1]:
            raise FormatError(f"timestamp {vals[0]!r} not after previous {stamps[-1]!r}", path, no)
        stamps.append(vals[0])
        poses.append(_pose_from_fields(vals[1:], path, no))
        lines.append(no)
    if not stamps:
        raise FormatError("no poses in file", path)
    return stamps, poses


def parse_trajectory(path, frame_world: str = "W", frame_body: str = "C") -> Trajectory:
    stamps, poses = _read_stamped_poses(path)
    return Trajectory(stamps, poses, frame_world, frame_body)


def parse_localizations(path) -> list[LocalizationEvent]:
    stamps, poses = _read_stamped_poses(path)
    return [LocalizationEvent(t, p) for t, p in zip(stamps, poses)]


def format_pose_line(t: float, pose: Pose) -> str:
    qx, qy, qz, qw = pose.xyzw
    vals = [t, *pose.trans.tolist(), qx, qy, qz, qw]
    return " ".join(_fmt(v) for v in vals)


def format_trajectory(traj: Trajectory) -> str:
    return "".join(format_pose_line(t, p) + "\n" for t, p in traj)


def format_localizations(events: Sequence[LocalizationEvent]) -> str:
    return "".join(format_pose_line(e.timestamp, e.pose) + "\n" for e in events)


def write_trajectory(path, traj: Trajectory) -> None:
    Path(path).write_text(format_trajectory(traj), encoding="utf-8")


def write_localizations(path, events: Sequence[LocalizationEvent]) -> None:
    Path(path).write_text(format_localizations(events), encoding="utf-8")


def parse_encoder_log(path) -> EncoderLog:
    samples: list[EncoderSample] = []
    first = True
    for no, line in _data_lines(path):
        fields = [f.strip() for f in line.split(",")]
        if first:
            first = False
            try:
                float(fields[0])
            except ValueError:
                continue  # header
        if len(fields) != 3:
            raise ParseError(f"expected 3 comma-separated fields, found {len(fields)}", path, no)
        try:
            t = float(fields[0])
        except ValueError:
            raise ParseError(f"bad timestamp {fields[0]!r}", path, no) from None
        try:
            left, right = int(fields[1]), int(fields[2])
        except ValueError:
            raise ParseError(f"tick counts must be integers, got {fields[1]!r}, {fields[2]!r}",
                             path, no) from None
        if samples and not t > samples[-1].timestamp:
            kind = "duplicate" if t == samples[-1].timestamp else "decreasing"
            raise FormatError(f"{kind} timestamp {t!r}", path, no)
        samples.append(EncoderSample(t, left, right))
    if not samples:
        raise FormatError("no encoder samples in file", path)
    return EncoderLog(samples)


def format_encoder_log(log_: Iterable[EncoderSample]) -> str:
    out = ["timestamp,left_ticks,right_ticks\n"]
    out += [f"{_fmt(s.timestamp)},{int(s.left)},{int(s.right)}\n" for s in log_]
    return "".join(out)


def parse_gyro(path) -> list[GyroSample]:
    out: list[GyroSample] = []
    for no, line in _data_lines(path):
        t, wx, wy, wz = _floats(line.split(), path, no, 4)
        if out and not t > out[-1].timestamp:
            raise FormatError(f"timestamp {t!r} not after previous", path, no)
        out.append(GyroSample(t, (wx, wy, wz)))
    if not out:
        raise FormatError("no gyro samples in file", path)
    return out


def format_gyro(samples: Iterable[GyroSample]) -> str:
    return "".join(" ".join(_fmt(v) for v in (g.timestamp, *g.rate)) + "\n" for g in samples)


# ---------------------------------------------------------------- key = value

def parse_key_values(path) -> list[tuple[int, str, str]]:
    out = []
    for no, line in _data_lines(path):
        if "=" not in line:
            raise ParseError("expected 'key = value'", path, no)
        key, value = (s.strip() for s in line.split("=", 1))
        out.append((no, key, value))
    return out


def _vec(value, n, path, no):
    return _floats(value.replace(",", " ").split(), path, no, n)


def _pose_keys(kv: dict, prefix: str, path):
    t = kv.pop(f"{prefix}_translation_m", None)
    q = kv.pop(f"{prefix}_quaternion_xyzw", None)
    if t is None and q is None:
        return None
    trans = _vec(t[1], 3, path, t[0]) if t else [0.0, 0.0, 0.0]
    if q:
        qx, qy, qz, qw = _vec(q[1], 4, path, q[0])
        return _pose_from_fields([*trans, qx, qy, qz, qw], path, q[0])
    return Pose((1.0, 0.0, 0.0, 0.0), trans)


CALIB_KEYS = {
    "meters_per_tick_left_m", "meters_per_tick_right_m", "wheel_base_m",
    "slip_coeff_left_m", "slip_coeff_right_m",
    "T_VC_translation_m", "T_VC_quaternion_xyzw",
    "T_CCp_translation_m", "T_CCp_quaternion_xyzw",
}


def _collect(path, allowed, repeatable=()):
    kv, repeated = {}, {k: [] for k in repeatable}
    for no, key, value in parse_key_values(path):
        if key in repeated:
            repeated[key].append((no, value))
            continue
        if key not in allowed:
            raise ParseError(f"unknown key {key!r}", path, no)
        if key in kv:
            raise ParseError(f"duplicate key {key!r}", path, no)
        kv[key] = (no, value)
    return kv, repeated


def _scalar(kv, key, path, default=None, cast=float):
    if key not in kv:
        if default is None:
            raise FormatError(f"missing key {key!r}", path)
        return default
    no, value = kv.pop(key)
    try:
        return cast(value)
    except ValueError:
        raise ParseError(f"bad value for {key!r}: {value!r}", path, no) from None


def parse_calibration(path) -> CalibrationSet:
    from .errors import CalibrationError

    kv, _ = _collect(path, CALIB_KEYS)
    T_VC = _pose_keys(kv, "T_VC", path) or Pose.identity()
    T_CCp = _pose_keys(kv, "T_CCp", path)
    wheel = [k for k in ("meters_per_tick_left_m", "meters_per_tick_right_m", "wheel_base_m")
             if k in kv]
    params = None
    if wheel:
        if len(wheel) != 3:
            raise FormatError("wheel parameters need meters_per_tick_left_m, "
                              "meters_per_tick_right_m and wheel_base_m", path)
        try:
            params = DiffDriveParams(
                _scalar(kv, "meters_per_tick_left_m", path),
                _scalar(kv, "meters_per_tick_right_m", path),
                _scalar(kv, "wheel_base_m", path),
                _scalar(kv, "slip_coeff_left_m", path, DEFAULT_SLIP_COEFF),
                _scalar(kv, "slip_coeff_right_m", path, DEFAULT_SLIP_COEFF),
            )
        except CalibrationError as exc:
            raise CalibrationError(f"{path}: {exc}") from None
    try:
        return CalibrationSet(T_VC=T_VC, diffdrive=params, T_CCp=T_CCp)
    except CalibrationError as exc:
        raise CalibrationError(f"{path}: {exc}") from None


def _pose_value_lines(prefix: str, pose: Pose) -> list[str]:
    qx, qy, qz, qw = pose.xyzw
    return [f"{prefix}_translation_m = " + " ".join(_fmt(v) for v in pose.trans),
            f"{prefix}_quaternion_xyzw = " + " ".join(_fmt(v) for v in (qx, qy, qz, qw))]


def format_calibration(calib: CalibrationSet) -> str:
    lines = _pose_value_lines("T_VC", calib.T_VC) + _pose_value_lines("T_CCp", calib.T_CCp)
    p = calib.diffdrive
    if p is not None:
        lines += [
            f"meters_per_tick_left_m = {_fmt(p.meters_per_tick_left)}",
            f"meters_per_tick_right_m = {_fmt(p.meters_per_tick_right)}",
            f"wheel_base_m = {_fmt(p.wheel_base)}",
            f"slip_coeff_left_m = {_fmt(p.slip_coeff_left)}",
            f"slip_coeff_right_m = {_fmt(p.slip_coeff_right)}",
        ]
    return "\n".join(lines) + "\n"


SCENARIO_KEYS = {
    "seed", "speed_mps", "encoder_rate_hz", "gyro_rate_hz", "gyro_clock_offset_s",
    "slip_std_per_m", "loc_rate_hz", "loc_noise_cov", "n_false_positives",
    "false_positive_magnitude_m", "truth_rate_hz", "meters_per_tick_m", "wheel_base_m",
    "gyro_noise_std_radps", "start_time_s", "map_offset_xy_yaw",
    "T_VC_translation_m", "T_VC_quaternion_xyzw",
}

_SCENARIO_SCALARS = {
    "speed_mps": "speed", "encoder_rate_hz": "encoder_rate", "gyro_rate_hz": "gyro_rate",
    "gyro_clock_offset_s": "gyro_clock_offset", "slip_std_per_m": "slip_std",
    "loc_rate_hz": "loc_rate", "false_positive_magnitude_m": "false_positive_magnitude",
    "truth_rate_hz": "truth_rate", "meters_per_tick_m": "meters_per_tick",
    "wheel_base_m": "wheel_base", "gyro_noise_std_radps": "gyro_noise_std",
    "start_time_s": "start_time",
}


def _parse_segment(value, path, no) -> Segment:
    parts = value.split()
    kind, args = parts[0], parts[1:]
    shapes = {"straight": 1, "pause": 1, "arc": 2, "slalom": 3}
    if kind not in shapes:
        raise ParseError(f"unknown segment kind {kind!r}", path, no)
    vals = _floats(args, path, no, shapes[kind])
    if kind == "straight":
        return Segment.straight(vals[0])
    if kind == "pause":
        return Segment.pause(vals[0])
    if kind == "arc":
        return Segment.arc(vals[0], math.radians(vals[1]))
    if vals[2] != int(vals[2]):
        raise ParseError("slalom cycles must be an integer", path, no)
    return Segment.slalom(vals[0], vals[1], int(vals[2]))


def parse_scenario(path) -> ScenarioSpec:
    """Scenario file; ``segment`` lines (in order) define the path:
    ``straight <m>``, ``arc <radius m> <angle deg>``, ``pause <s>``,
    ``slalom <period s> <peak yaw rate rad/s> <cycles>``."""
    kv, rep = _collect(path, SCENARIO_KEYS, repeatable=("segment",))
    kw = {}
    if "seed" in kv:
        kw["seed"] = _scalar(kv, "seed", path, cast=int)
    if "n_false_positives" in kv:
        kw["n_false_positives"] = _scalar(kv, "n_false_positives", path, cast=int)
    for key, name in _SCENARIO_SCALARS.items():
        if key in kv:
            kw[name] = _scalar(kv, key, path)
    if "loc_noise_cov" in kv:
        no, value = kv.pop("loc_noise_cov")
        vals = value.replace(",", " ").split()
        if len(vals) == 3:
            kw["loc_noise_cov"] = np.diag(_floats(vals, path, no, 3))
        else:
            kw["loc_noise_cov"] = np.array(_floats(vals, path, no, 9)).reshape(3, 3)
    if "map_offset_xy_yaw" in kv:
        no, value = kv.pop("map_offset_xy_yaw")
        kw["map_offset"] = PlanarPose(*_vec(value, 3, path, no))
    T_VC = _pose_keys(kv, "T_VC", path)
    if T_VC is not None:
        kw["T_VC"] = T_VC
    if rep["segment"]:
        kw["path"] = tuple(_parse_segment(v, path, no) for no, v in rep["segment"])
    try:
        return ScenarioSpec(**kw)
    except InputError as exc:
        raise InputError(f"{path}: {exc}") from None


def format_labels(run: SyntheticRun) -> str:
    out = ["timestamp,genuine\n"]
    out += [f"{_fmt(e.timestamp)},{int(ok)}\n" for e, ok in zip(run.events, run.labels)]
    return "".join(out)


def parse_labels(path) -> list[bool]:
    labels = []
    for no, line in _data_lines(path):
        fields = line.split(",")
        if fields[0] == "timestamp":
            continue
        if len(fields) != 2 or fields[1].strip() not in ("0", "1"):
            raise ParseError("expected 'timestamp,0|1'", path, no)
        labels.append(fields[1].strip() == "1")
    return labels


# ---------------------------------------------------------------- reports

def _plain(obj):
    """Convert numpy scalars/arrays and tuples into JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def report_document(command: str, config: dict, results: dict, samples: dict | None = None) -> dict:
    """Canonical report body: no wall-clock data, fixed key order."""
    return _plain({
        "tool": "locbench",
        "version": __version__,
        "command": command,
        "config": config,
        "results": results,
        "samples": samples or {},
    })


def dump_report(doc: dict) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def format_csv(columns: dict) -> str:
    """Per-sample columns (equal lengths) as CSV text."""
    names = list(columns)
    n = len(next(iter(columns.values()))) if columns else 0
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for i in range(n):
        row = []
        for name in names:
            v = columns[name][i]
            row.append(_fmt(v) if isinstance(v, (float, np.floating)) else int(v)
                       if isinstance(v, (bool, np.bool_, int, np.integer)) else v)
        w.writerow(row)
    return buf.getvalue()
