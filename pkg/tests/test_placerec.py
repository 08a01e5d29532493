import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial.distance import mahalanobis as scipy_mahalanobis
from scipy.stats import chi2

from locbench.errors import DegeneracyError, InputError
from locbench.geometry import PlanarPose, Pose, compose, lift_planar
from locbench.placerec import (CHI2_3_0025, TABLE_COLUMNS, LocalizationEvent, PrEvalConfig,
                               count_false_positives, evaluate, gate_pairs, interval_counts,
                               mahalanobis, s_prf, true_positive_weights)
from locbench.synth import generate
from locbench.trajectory import Trajectory
from locbench.wheel_odometry import CalibrationSet

from scenarios import gate_calibration_spec

CALIB = CalibrationSet(Pose.identity())


def straight_ref(n=21, speed=1.0):
    t = np.arange(n, dtype=float)
    return Trajectory(t, [Pose(trans=(speed * s, 0, 0)) for s in t])


def events_on(ref, offsets=None):
    offsets = offsets or {}
    out = []
    for t, p in ref:
        d = offsets.get(int(t), (0, 0))
        out.append(LocalizationEvent(t, Pose(p.quat, p.trans + [d[0], d[1], 0])))
    return out


def test_chi2_quantile():
    assert CHI2_3_0025 == pytest.approx(chi2.ppf(0.975, 3), abs=1e-4)


def test_mahalanobis_example():
    assert mahalanobis(PlanarPose(2, 1, 0), np.diag([4, 1, 1])) == pytest.approx(math.sqrt(2))


def test_mahalanobis_singular():
    with pytest.raises(DegeneracyError):
        mahalanobis([1, 0, 0], np.diag([1, 1, 0]))


@given(st.integers(0, 10 ** 6))
def test_mahalanobis_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(3, 3))
    cov = A @ A.T + 0.1 * np.eye(3)
    d = rng.normal(size=3)
    ours = mahalanobis(d, cov)
    assert ours == pytest.approx(scipy_mahalanobis(d, np.zeros(3), np.linalg.inv(cov)), rel=1e-9)


def test_single_outlier_counts_one():
    ref = straight_ref()
    n_fp, flags = count_false_positives(events_on(ref, {10: (5.0, 0.0)}), ref, None, CALIB,
                                        PrEvalConfig())
    assert n_fp == 1.0
    assert [i for i, f in enumerate(flags) if f] == [9, 10]


def test_edge_outlier_counts_half():
    ref = straight_ref()
    n_fp, _ = count_false_positives(events_on(ref, {20: (5.0, 0.0)}), ref, None, CALIB,
                                    PrEvalConfig())
    assert n_fp == 0.5


def test_fewer_than_two_events():
    ref = straight_ref()
    assert gate_pairs(events_on(ref)[:1], ref, None, CALIB, PrEvalConfig()).n_fp == 0.0


def test_s_prf_closed_forms():
    assert s_prf([5.0] * 7, 100.0, 10.0) == pytest.approx(3.0, abs=0.0)
    assert s_prf(np.arange(0.5, 100, 1.0), 100.0, 10.0) <= 0.05
    assert s_prf([], 100.0, 10.0) == 0.0


def test_distance_at_L_goes_to_last_bin():
    assert interval_counts([100.0], 100.0, 10.0).tolist() == [0.0] * 9 + [1.0]
    with pytest.raises(InputError):
        interval_counts([101.0], 100.0, 10.0)


@given(st.lists(st.booleans(), min_size=1, max_size=60), st.sampled_from(["later", "both"]))
def test_weights_sum_to_true_positives(flags, mode):
    n = len(flags) + 1
    w = true_positive_weights(n, flags, mode)
    assert w.sum() == pytest.approx(n - 0.5 * sum(flags))
    assert np.all(w >= 0)


@given(st.lists(st.floats(0, 50), min_size=1, max_size=80), st.floats(0.5, 20))
def test_s_prf_nonnegative_and_counts_conserved(dist, delta):
    c = interval_counts(dist, 50.0, delta)
    assert c.sum() == len(dist)
    assert len(c) == math.ceil(50.0 / delta)
    assert s_prf(dist, 50.0, delta) >= 0


def test_report_columns_and_half_counts():
    ref = straight_ref()
    rep = evaluate(events_on(ref, {20: (5.0, 0.0)}), ref, None, CALIB)
    row = rep.table_row()
    assert tuple(row) == TABLE_COLUMNS
    assert row["#outlier"] == 2.5 - 2.0
    assert row["#loc"] == 21
    assert row["t_n"] == 20.0
    assert row["N_tp/L"] == pytest.approx(20.5 / 20.0)


def test_empty_events_row():
    rep = evaluate([], straight_ref(), None, CALIB)
    assert (rep.n_loc, rep.n_outlier, rep.s_prf) == (0, 0.0, 0.0)


def test_config_validation():
    with pytest.raises(InputError):
        PrEvalConfig(loc_cov=np.diag([-1.0, 1, 1]))
    with pytest.raises(InputError):
        PrEvalConfig(chi2_threshold=0)
    assert PrEvalConfig().gate == pytest.approx(math.sqrt(CHI2_3_0025))


def test_rotation_invariant_gate():
    # the same motion seen in a rotated map frame gives the same distances
    ref = straight_ref()
    ev = events_on(ref, {7: (0.2, 0.1)})
    T = lift_planar(PlanarPose(3.0, -1.0, 0.8))
    ev2 = [LocalizationEvent(e.timestamp, compose(T, e.pose)) for e in ev]
    d1 = gate_pairs(ev, ref, None, CALIB, PrEvalConfig()).distances
    d2 = gate_pairs(ev2, ref, None, CALIB, PrEvalConfig()).distances
    np.testing.assert_allclose(d1, d2, atol=1e-9)


def test_gate_calibration_rate():
    run = generate(gate_calibration_spec())
    cfg = PrEvalConfig(odom_cov_floor=np.zeros((3, 3)))
    g = gate_pairs(run.events, run.truth, None, run.calib, cfg)
    assert len(g.flags) >= 2000
    assert 0.01 <= np.mean(g.flags) <= 0.04


@given(st.lists(st.floats(0, 50), min_size=1, max_size=80))
def test_s_prf_matches_direct_formula(dist):
    c = interval_counts(dist, 50.0, 7.0)
    direct = len(c) / c.sum() * np.std(c)
    assert s_prf(dist, 50.0, 7.0) == pytest.approx(direct, abs=1e-9)
