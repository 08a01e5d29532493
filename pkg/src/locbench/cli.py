"""Command-line entry point: ``locbench <command> [options]``.

Exit codes: 0 success, 1 bad input, 2 numerical failure.  Errors are reported
as one JSON line on stderr.
"""

from __future__ import annotations

import argparse
import json
import shlex
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io as lio
from .errors import InputError, LocbenchError, NumericalError
from .placerec import CHI2_3_0025, DEFAULT_LOC_COV, TABLE_COLUMNS, PrEvalConfig, evaluate
from .slam_metrics import ate_with_alignment, relative_pose_errors, ErrorStats
from .synth import generate
from .timesync import (DEFAULT_GRID_STEP, DEFAULT_REFINE_STEP, DEFAULT_SEARCH_WINDOW,
                       estimate_time_offset)
from .trajectory import DEFAULT_MAX_DT, associate
from .wheel_odometry import integrate, to_camera_frame

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(f"usage: {message}")


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise InputError(f"{what}: expected numbers, got {text!r}") from None


def _cov_arg(text: str) -> np.ndarray:
    vals = _floats(text, "--loc-cov")
    if len(vals) == 3:
        return np.diag(vals)
    if len(vals) == 9:
        return np.array(vals).reshape(3, 3)
    raise InputError("--loc-cov takes 3 diagonal entries or 9 row-major entries")


def _common(p):
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.add_argument("--csv", help="write per-sample values to this CSV file")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="locbench", description="Trajectory and place-recognition evaluation.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ate", help="absolute trajectory error")
    p.add_argument("--ref", required=True)
    p.add_argument("--est", required=True)
    p.add_argument("--max-dt", type=float, default=DEFAULT_MAX_DT)
    p.add_argument("--align", choices=("none", "se3", "planar"), default="se3")
    _common(p)

    p = sub.add_parser("rpe", help="relative pose error")
    p.add_argument("--ref", required=True)
    p.add_argument("--est", required=True)
    p.add_argument("--delta", type=float, default=2.0, help="window length in seconds")
    p.add_argument("--max-dt", type=float, default=DEFAULT_MAX_DT)
    p.add_argument("--align", choices=("none", "se3", "planar"), default="none",
                   help="accepted for symmetry with ate; RPE does not depend on it")
    _common(p)

    p = sub.add_parser("pr-eval", help="place-recognition localization statistics")
    p.add_argument("--ref", help="reference camera trajectory; defaults to wheel odometry")
    p.add_argument("--events", required=True)
    p.add_argument("--encoder")
    p.add_argument("--calib", required=True)
    p.add_argument("--delta-m", type=float, default=10.0, help="spatial interval for s_PRF")
    p.add_argument("--chi2", type=float, default=CHI2_3_0025,
                   help="threshold on the squared Mahalanobis distance")
    p.add_argument("--loc-cov", type=_cov_arg, default=DEFAULT_LOC_COV,
                   help="3 diagonal or 9 row-major entries")
    p.add_argument("--attribution", choices=("later", "both"), default="later")
    p.add_argument("--t-n", dest="t_n", choices=("last_event", "duration"), default="last_event")
    _common(p)

    p = sub.add_parser("sync", help="trajectory/gyro clock offset")
    p.add_argument("--traj", required=True)
    p.add_argument("--gyro", required=True)
    p.add_argument("--window", type=float, default=DEFAULT_SEARCH_WINDOW)
    p.add_argument("--step", type=float, default=DEFAULT_GRID_STEP)
    p.add_argument("--refine-step", type=float, default=DEFAULT_REFINE_STEP)
    _common(p)

    p = sub.add_parser("odom", help="dead-reckon wheel odometry")
    p.add_argument("--encoder", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--query", required=True, help="rate in Hz, or a file of query times")
    p.add_argument("--frame", choices=("vehicle", "camera"), default="camera")
    p.add_argument("--traj-out", help="write the trajectory in the pose-line format")
    _common(p)

    p = sub.add_parser("synth", help="generate a synthetic session")
    p.add_argument("--spec", help="scenario file; defaults apply when omitted")
    p.add_argument("--out-dir", required=True)
    _common(p)

    p = sub.add_parser("batch", help="run independent commands concurrently")
    p.add_argument("jobs_file", help="one command line per line")
    p.add_argument("--jobs", type=int, default=4)
    _common(p)
    return ap


def _config(args, skip=("command", "out", "csv", "func")) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in skip:
            continue
        out[k] = v.tolist() if isinstance(v, np.ndarray) else v
    return out


def cmd_ate(args):
    ref = lio.parse_trajectory(args.ref)
    est = lio.parse_trajectory(args.est)
    stats, res = ate_with_alignment(est, ref, args.max_dt, args.align)
    pairs = associate(est, ref, args.max_dt)
    t = [float(ref.stamps[j]) for _, j in pairs]
    S = res.transform
    results = {"ate": stats.as_dict(),
               "alignment": {"mode": res.mode.value, "translation": S.trans,
                             "quaternion_xyzw": S.xyzw}}
    return results, {"timestamp": t, "ate_m": stats.errors}


def cmd_rpe(args):
    ref = lio.parse_trajectory(args.ref)
    est = lio.parse_trajectory(args.est)
    t, rte, rre = relative_pose_errors(est, ref, args.delta, args.max_dt)
    results = {"rte_m": ErrorStats.from_errors(rte).as_dict(),
               "rre_deg": ErrorStats.from_errors(rre).as_dict()}
    return results, {"timestamp": t, "rte_m": rte, "rre_deg": rre}


def cmd_pr_eval(args):
    calib = lio.parse_calibration(args.calib)
    events = lio.parse_localizations(args.events)
    log_ = lio.parse_encoder_log(args.encoder) if args.encoder else None
    if args.ref:
        ref = lio.parse_trajectory(args.ref)
    elif log_ is not None:
        if calib.diffdrive is None:
            raise InputError("pr-eval without --ref needs wheel parameters in --calib")
        ref = to_camera_frame(integrate(log_, calib.diffdrive, log_.t), calib)
    else:
        raise InputError("pr-eval needs --ref or --encoder")
    config = PrEvalConfig(loc_cov=args.loc_cov, chi2_threshold=args.chi2,
                          spatial_interval=args.delta_m, attribution=args.attribution,
                          t_n_mode=args.t_n)
    rep = evaluate(events, ref, log_, calib, config)
    row = rep.table_row()
    assert tuple(row) == TABLE_COLUMNS
    results = {"table": row, "n_tp": rep.n_tp,
               "interval_counts": rep.per_interval_counts,
               "t_n_duration": rep.t_n_duration}
    ts = [e.timestamp for e in events]
    samples = {"pair_start": ts[:-1], "pair_end": ts[1:],
               "mahalanobis": rep.distances, "inconsistent": rep.flags}
    return results, samples, {"effective": config.as_dict()}


def cmd_sync(args):
    traj = lio.parse_trajectory(args.traj)
    gyro = lio.parse_gyro(args.gyro)
    est = estimate_time_offset(traj, gyro, args.window, args.step, args.refine_step)
    results = {"offset_s": est.offset, "peak_correlation": est.peak_correlation,
               "resolution_s": est.grid_step}
    return results, {}


def _query_times(text: str, log_) -> np.ndarray:
    try:
        rate = float(text)
    except ValueError:
        return np.array([v for _, line in lio._data_lines(text)
                         for v in _floats(line, text)])
    if not rate > 0:
        raise InputError("--query rate must be positive")
    t0, t1 = float(log_.t[0]), float(log_.t[-1])
    n = int(np.floor((t1 - t0) * rate + 1e-9)) + 1
    return t0 + np.arange(n) / rate


def cmd_odom(args):
    log_ = lio.parse_encoder_log(args.encoder)
    calib = lio.parse_calibration(args.calib)
    if calib.diffdrive is None:
        raise InputError("odom needs wheel parameters in --calib")
    q = _query_times(args.query, log_)
    traj = integrate(log_, calib.diffdrive, q)
    if args.frame == "camera":
        traj = to_camera_frame(traj, calib)
    if args.traj_out:
        lio.write_trajectory(args.traj_out, traj)
    p = traj.positions
    results = {"n_poses": len(traj), "frame": f"{traj.frame_world}->{traj.frame_body}",
               "path_length_m": traj.arc_length(),
               "final_translation": p[-1], "final_quaternion_xyzw": traj.poses[-1].xyzw}
    return results, {"timestamp": traj.stamps, "x": p[:, 0], "y": p[:, 1], "z": p[:, 2]}


def cmd_synth(args):
    spec = lio.parse_scenario(args.spec) if args.spec else lio.ScenarioSpec()
    run = generate(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "truth.txt": lio.format_trajectory(run.truth),
        "odometry.txt": lio.format_trajectory(run.odometry_reference()),
        "encoder.csv": lio.format_encoder_log(run.encoder),
        "gyro.txt": lio.format_gyro(run.gyro),
        "events.txt": lio.format_localizations(run.events),
        "labels.csv": lio.format_labels(run),
        "calib.txt": lio.format_calibration(run.calib),
    }
    for name, text in files.items():
        (out / name).write_text(text, encoding="utf-8")
    results = {"files": sorted(files), "n_events": len(run.events),
               "n_false": run.n_false, "duration_s": run.truth.end - run.truth.start,
               "path_length_m": run.truth.arc_length()}
    return results, {}


def _run_one(argv) -> tuple[int, str, str]:
    """Run one command; returns ``(exit code, report text, error line)``."""
    try:
        args = build_parser().parse_args(argv)
        if args.command == "batch":
            return EXIT_OK, _batch(args), ""
        handler = HANDLERS[args.command]
        out = handler(args)
        results, samples = out[0], out[1]
        config = _config(args)
        if len(out) > 2:
            config.update(out[2])
        doc = lio.report_document(args.command, config, results, samples)
        text = lio.dump_report(doc)
        if args.csv:
            Path(args.csv).write_text(lio.format_csv(samples), encoding="utf-8")
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
            text = ""
        return EXIT_OK, text, ""
    except InputError as exc:
        return EXIT_INPUT, "", _error_line(exc, "input")
    except NumericalError as exc:
        return EXIT_NUMERIC, "", _error_line(exc, "numerical")
    except LocbenchError as exc:
        return EXIT_INPUT, "", _error_line(exc, "input")
    except OSError as exc:
        return EXIT_INPUT, "", _error_line(exc, "input")
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0), "", ""


def _error_line(exc, kind) -> str:
    msg = " ".join(str(exc).split())
    return json.dumps({"error": type(exc).__name__, "kind": kind, "message": msg}) + "\n"


def _batch(args) -> str:
    lines = [(no, line) for no, line in lio._data_lines(args.jobs_file)]
    jobs = [shlex.split(line) for _, line in lines]
    if any(j and j[0] == "batch" for j in jobs):
        raise InputError("batch jobs cannot be nested")
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        outcomes = list(pool.map(_run_one, jobs))
    entries = []
    for argv, (code, text, err) in zip(jobs, outcomes):
        entry = {"argv": argv, "exit_code": code}
        if text:
            entry["report"] = json.loads(text)
        if err:
            entry["error"] = json.loads(err)
        entries.append(entry)
    doc = lio.report_document("batch", {"jobs_file": args.jobs_file}, {"runs": entries})
    return lio.dump_report(doc)


HANDLERS = {
    "ate": cmd_ate, "rpe": cmd_rpe, "pr-eval": cmd_pr_eval, "sync": cmd_sync,
    "odom": cmd_odom, "synth": cmd_synth,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    code, text, err = _run_one(argv)
    if text:
        sys.stdout.write(text)
    if err:
        sys.stderr.write(err)
    return code


if __name__ == "__main__":
    sys.exit(main())
