import math
import tempfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from locbench import io as lio
from locbench.errors import CalibrationError, FormatError, ParseError
from locbench.geometry import Pose
from locbench.synth import ScenarioSpec, generate
from locbench.trajectory import Trajectory


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_identity_line(tmp_path):
    tr = lio.parse_trajectory(write(tmp_path, "t.txt", "0.0 0 0 0 0 0 0 1\n"))
    assert len(tr) == 1 and tr.poses[0].isclose(Pose.identity(), atol=0)


def test_comments_only_is_empty(tmp_path):
    with pytest.raises(FormatError):
        lio.parse_trajectory(write(tmp_path, "t.txt", "# nothing\n\n# here\n"))


def test_bad_quaternion_norm(tmp_path):
    with pytest.raises(ParseError) as e:
        lio.parse_trajectory(write(tmp_path, "t.txt", "# c\n0 0 0 0 0 0 0 1\n1 0 0 0 0 0 0 0.9\n"))
    assert e.value.line == 3


def test_near_unit_quaternion_renormalized(tmp_path):
    tr = lio.parse_trajectory(write(tmp_path, "t.txt", "0 0 0 0 0 0 0 1.0005\n"))
    assert np.linalg.norm(tr.poses[0].quat) == pytest.approx(1.0, abs=1e-15)


def test_non_increasing_stamps(tmp_path):
    with pytest.raises(FormatError) as e:
        lio.parse_trajectory(write(tmp_path, "t.txt", "1 0 0 0 0 0 0 1\n1 0 0 0 0 0 0 1\n"))
    assert e.value.line == 2


def test_malformed_line(tmp_path):
    with pytest.raises(ParseError) as e:
        lio.parse_trajectory(write(tmp_path, "t.txt", "0 0 0 0 0 0 0 1\n1 0 0 x 0 0 0 1\n"))
    assert e.value.line == 2


def test_encoder_examples(tmp_path):
    assert len(lio.parse_encoder_log(write(tmp_path, "e.csv", "0.0,0,0\n0.1,10,10\n"))) == 2
    log = lio.parse_encoder_log(write(tmp_path, "e.csv", "timestamp,left,right\n0.0,0,0\n0.1,10,12\n"))
    assert log[1].right == 12
    with pytest.raises(ParseError):
        lio.parse_encoder_log(write(tmp_path, "e.csv", "0.0,0,0\n0.1,3.5,4\n"))
    with pytest.raises(FormatError):
        lio.parse_encoder_log(write(tmp_path, "e.csv", "0.0,0,0\n0.0,1,1\n"))


def test_localizations_mirror_trajectory(tmp_path):
    ev = lio.parse_localizations(write(tmp_path, "l.txt", "0.0 0 0 0 0 0 0 1\n"))
    assert ev[0].timestamp == 0.0
    with pytest.raises(FormatError):
        lio.parse_localizations(write(tmp_path, "l.txt", "# x\n"))
    with pytest.raises(ParseError):
        lio.parse_localizations(write(tmp_path, "l.txt", "0 0 0 0 0 0 0 0.9\n"))


def test_calibration_roundtrip(tmp_path):
    run = generate(ScenarioSpec())
    p = write(tmp_path, "c.txt", lio.format_calibration(run.calib))
    c = lio.parse_calibration(p)
    assert c.T_VC.isclose(run.calib.T_VC, atol=0)
    assert c.diffdrive == run.calib.diffdrive
    assert lio.format_calibration(c) == p.read_text()


def test_calibration_unknown_key(tmp_path):
    with pytest.raises(ParseError):
        lio.parse_calibration(write(tmp_path, "c.txt", "wheelbase_m = 0.5\n"))
    with pytest.raises(CalibrationError):
        lio.parse_calibration(write(tmp_path, "c.txt", "meters_per_tick_left_m = 1e-3\n"
                                    "meters_per_tick_right_m = 1e-3\nwheel_base_m = -1\n"))


def test_scenario_file(tmp_path):
    spec = lio.parse_scenario(write(tmp_path, "s.txt", "\n".join([
        "seed = 9", "speed_mps = 0.5", "n_false_positives = 2", "loc_noise_cov = 0.01 0.01 0.001",
        "segment = straight 3", "segment = arc 2 90", "segment = pause 1",
        "segment = slalom 4 0.5 2", ""])))
    assert spec.seed == 9 and spec.speed == 0.5 and len(spec.path) == 4
    assert spec.path[1].angle == pytest.approx(math.pi / 2)
    with pytest.raises(ParseError):
        lio.parse_scenario(write(tmp_path, "s.txt", "speed = 1\n"))
    with pytest.raises(ParseError):
        lio.parse_scenario(write(tmp_path, "s.txt", "segment = loop 3\n"))


def test_synthetic_files_roundtrip(tmp_path):
    run = generate(ScenarioSpec(seed=1, n_false_positives=2, loc_noise_cov=np.diag([1e-3, 1e-3, 1e-4])))
    texts = {
        "truth.txt": (lio.format_trajectory(run.truth), lio.parse_trajectory, lio.format_trajectory),
        "events.txt": (lio.format_localizations(run.events), lio.parse_localizations,
                       lio.format_localizations),
        "enc.csv": (lio.format_encoder_log(run.encoder), lio.parse_encoder_log, lio.format_encoder_log),
        "gyro.txt": (lio.format_gyro(run.gyro), lio.parse_gyro, lio.format_gyro),
    }
    for name, (text, parse, fmt) in texts.items():
        p = write(tmp_path, name, text)
        assert fmt(parse(p)) == text, name
    assert lio.parse_labels(write(tmp_path, "l.csv", lio.format_labels(run))) == run.labels


unit = st.floats(-1, 1, allow_nan=False)
coord = st.floats(-1e3, 1e3, allow_nan=False)


@given(st.lists(st.tuples(unit, unit, unit, unit, coord, coord, coord), min_size=1, max_size=10)
       .filter(lambda rows: all(sum(v * v for v in r[:4]) > 0.1 for r in rows)))
def test_write_parse_write_identical(rows):
    poses = [Pose(np.array(r[:4]) / np.linalg.norm(r[:4]), r[4:]) for r in rows]
    tr = Trajectory(np.arange(len(poses)) * 0.1, poses)
    text = lio.format_trajectory(tr)
    with tempfile.TemporaryDirectory() as d:
        p = Path(d) / "t.txt"
        p.write_text(text)
        tr2 = lio.parse_trajectory(p)
    assert lio.format_trajectory(tr2) == text
    for a, b in zip(tr.poses, tr2.poses):
        assert a.isclose(b, atol=0)


def test_report_is_plain_json():
    doc = lio.report_document("x", {"a": np.float64(1.5)}, {"b": np.array([1, 2])},
                              {"c": [np.bool_(True)]})
    text = lio.dump_report(doc)
    assert '"a": 1.5' in text and "NaN" not in text
    assert list(doc) == ["tool", "version", "command", "config", "results", "samples"]
