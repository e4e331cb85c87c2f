from __future__ import annotations

from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq
from scipy.stats import norm

from isacsim import builtin_params
from isacsim.distributions import dual_slope_eval
from isacsim.metrics import PdpMatrix
from isacsim.tracking import (
    Detection,
    Track,
    TrackingConfig,
    TrackingInputError,
    detect,
    estimate_noise_floor,
    evaluate_recovery,
    match_step,
    mcd,
    mcd_matrix,
    peak_indices,
    track,
    tracks_from_jsonl,
    tracks_to_jsonl,
)

FLOOR = -90.0


def _det(delay, amp, k=0):
    return Detection(k, delay, amp, 20 * np.log10(amp))


def injected_path(snapshots=50, bins=100, delay_bin=40, dropout=()):
    values = np.full((snapshots, bins), FLOOR, dtype=np.float32)
    for k in range(snapshots):
        if k not in dropout:
            values[k, delay_bin] = FLOOR + 20.0
    return PdpMatrix(values, 0.01, 1.0, "front")


def test_noise_floor_constant():
    assert estimate_noise_floor(np.full((4, 10), -90.0)) == -90.0
    with pytest.raises(TrackingInputError):
        estimate_noise_floor(np.zeros((0, 3)))


def test_noise_floor_of_clutter_law():
    p = builtin_params("front")
    tau = np.arange(600.0)
    mean = dual_slope_eval(tau, p.clutter_decay)
    sd = p.fading_std
    rng = np.random.default_rng(5)
    values = mean + sd * rng.standard_normal((400, 600))
    # analytic median of the per-bin Normal mixture
    med = brentq(lambda x: norm.cdf((x - mean) / sd).mean() - 0.5, -120, 0)
    assert abs(estimate_noise_floor(values) - med) < 1.0

    boosted = values.copy()
    mask = rng.random(values.shape) < 0.01
    boosted[mask] += 30.0
    assert abs(estimate_noise_floor(boosted) - estimate_noise_floor(values)) < 0.5


def test_detect_examples():
    row = np.full(40, FLOOR)
    assert detect(row, FLOOR) == []
    row[12] = FLOOR + 10
    dets = detect(row, FLOOR, snapshot=3)
    assert [(d.snapshot, d.delay) for d in dets] == [(3, 12.0)]
    row[14] = FLOOR + 10
    assert [d.delay for d in detect(row, FLOOR)] == [12.0, 14.0]
    with pytest.raises(TrackingInputError):
        detect([1.0, 2.0], FLOOR)


def test_peak_plateau_reports_left_bin():
    row = np.array([0.0, 5.0, 5.0, 5.0, 0.0, 3.0, 4.0])
    assert peak_indices(row, 1.0).tolist() == [1, 6]
    assert peak_indices(row, 4.5).tolist() == [1]


def test_mcd_worked_example():
    a, b = _det(10.0, 1.0), _det(20.0, 0.5)
    c = _det(12.0, 0.9, 1)
    tau_std = np.std([10.0, 20.0, 12.0], ddof=1)
    assert tau_std == pytest.approx(5.2915, abs=1e-4)
    expected = 0.5 * (1 / 0.9) * (tau_std / 100.0) * 2.0
    got = mcd(a, c, [a, b, c])
    assert got == pytest.approx(expected, rel=1e-12)
    assert abs(got - 0.05879) < 1e-5
    m = mcd_matrix([10.0, 20.0], [1.0, 0.5], [12.0], [0.9])
    assert m[0, 0] == pytest.approx(got, rel=1e-12)


def test_mcd_equal_delays_is_zero():
    a, b = _det(30.0, 1.0), _det(30.0, 0.1, 1)
    assert mcd(a, b, [a, b, _det(50.0, 0.4)]) == 0.0


@settings(max_examples=100, deadline=None)
@given(
    delays=st.lists(st.floats(0, 600), min_size=3, max_size=8),
    amps=st.lists(st.floats(1e-4, 1.0), min_size=8, max_size=8),
    scale=st.floats(1e-3, 1e3),
)
def test_mcd_amplitude_scale_invariance(delays, amps, scale):
    n = len(delays) // 2 + 1
    di, dj = delays[:n], delays[n:] or delays[:1]
    ai, aj = np.array(amps[:len(di)]), np.array(amps[len(di):len(di) + len(dj)])
    base = mcd_matrix(di, ai, dj, aj)
    scaled = mcd_matrix(di, ai * scale, dj, aj * scale)
    np.testing.assert_allclose(scaled, base, rtol=1e-9, atol=1e-300)


def test_match_identical_snapshots():
    dets = [_det(10.0, 1.0), _det(35.0, 0.3), _det(80.0, 0.6)]
    pairs = match_step(dets, dets, 0.3)
    assert pairs == [(0, 0), (1, 1), (2, 2)]


def test_match_rejects_far_pair():
    # two detections far apart with a weak successor push the MCD past 0.3
    a, b = _det(0.0, 1.0), _det(100.0, 0.01, 1)
    assert mcd(a, b, [a, b]) > 0.3
    assert match_step([a], [b], 0.3) == []


def test_match_worked_example():
    pairs = match_step([_det(10.0, 1.0), _det(20.0, 0.5)], [_det(12.0, 0.9, 1)], 0.3)
    assert pairs == [(0, 0)]


def test_single_path_one_track():
    tracks = track(injected_path())
    assert len(tracks) == 1
    t = tracks[0]
    assert t.birth_snapshot == 0 and t.span == 50 and len(t.detections) == 50
    assert {d.delay for d in t.detections} == {40.0}


def test_dropout_handover_one_track():
    tracks = track(injected_path(dropout=(20, 21, 22)))
    assert len(tracks) == 1
    assert len(tracks[0].detections) == 47 and tracks[0].span == 50


def test_long_dropout_is_not_bridged():
    tracks = track(injected_path(dropout=tuple(range(20, 30))))
    assert len(tracks) == 2


def test_handover_respects_delay_gap():
    pdp = injected_path(dropout=(20, 21))
    pdp.values[22:, 40] = FLOOR
    pdp.values[22:, 60] = FLOOR + 20
    assert len(track(pdp)) == 2


def test_short_tracks_filtered():
    pdp = injected_path(snapshots=6, dropout=(3, 4, 5))
    assert track(pdp) == []


def test_track_input_errors():
    with pytest.raises(TrackingInputError):
        track(PdpMatrix(np.zeros((1, 10)), 0.01, 1.0, "front"))
    with pytest.raises(TrackingInputError):
        track(PdpMatrix(np.zeros((5, 2)), 0.01, 1.0, "front"))
    with pytest.raises(ValueError):
        TrackingConfig(match_threshold=0)


def test_jsonl_round_trip():
    tracks = track(injected_path(dropout=(20, 21, 22)))
    again = tracks_from_jsonl(tracks_to_jsonl(tracks))
    assert [t.id for t in again] == [t.id for t in tracks]
    for a, b in zip(again, tracks):
        assert [(d.snapshot, d.delay) for d in a.detections] == [(d.snapshot, d.delay) for d in b.detections]
        assert [d.power for d in a.detections] == pytest.approx([d.power for d in b.detections], abs=1e-6)


def _random_pdp(seed, rows=30, cols=40):
    rng = np.random.default_rng(seed)
    # quarter-dB grid keeps dB shifts exact in float32
    v = np.round(rng.normal(-70, 6, size=(rows, cols)) * 4) / 4
    for b in rng.integers(0, cols, size=3):
        v[:, b] += 25.0
    return PdpMatrix(v.astype(np.float32), 0.01, 1.0, "front")


def _signature(tracks):
    return sorted(tuple((d.snapshot, d.delay) for d in t.detections) for t in tracks)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), shift=st.sampled_from([-16.0, -4.0, 2.0, 8.0]))
def test_tracks_invariant_to_power_offset(seed, shift):
    pdp = _random_pdp(seed)
    moved = PdpMatrix(pdp.values + np.float32(shift), 0.01, 1.0, "front")
    assert _signature(track(moved)) == _signature(track(pdp))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), lo=st.integers(1, 6), extra=st.integers(0, 6))
def test_filter_threshold_monotone(seed, lo, extra):
    pdp = _random_pdp(seed)
    covered = lambda f: {(d.snapshot, d.delay)
                         for t in track(pdp, TrackingConfig(filter_threshold=f)) for d in t.detections}
    assert covered(lo + extra) <= covered(lo)


def _fake_truth(paths):
    return SimpleNamespace(delay_resolution=1.0, paths=[SimpleNamespace(birth_snapshot=b, delays=np.asarray(d, float),
                                                                        powers=np.asarray(pw, float))
                                                        for b, d, pw in paths])


def test_recovery_scoring_bases():
    # path lives 20 snapshots, visible for the last 10 only
    gt = _fake_truth([(0, [40.0] * 20, [-100.0] * 10 + [-70.0] * 10)])
    t = Track(0, [Detection(k, 41.0, 1e-3, -60.0) for k in range(10, 20)])
    vis = evaluate_recovery([t], gt, FLOOR, basis="visible")
    life = evaluate_recovery([t], gt, FLOOR, basis="lifetime")
    assert vis.eligible == life.eligible == 1
    assert vis.overlaps == [1.0] and vis.rate == 1.0
    assert life.overlaps == [0.5] and life.rate == 0.0
    far = Track(1, [Detection(k, 45.0, 1e-3, -60.0) for k in range(10, 20)])
    assert evaluate_recovery([far], gt, FLOOR, basis="visible").recovered == 0
    with pytest.raises(ValueError):
        evaluate_recovery([t], gt, FLOOR, basis="span")


def test_recovery_skips_invisible_paths():
    gt = _fake_truth([(0, [40.0] * 20, [-100.0] * 20), (0, [10.0] * 6, [-70.0, -70, -70, -100, -70, -70])])
    res = evaluate_recovery([], gt, FLOOR)
    assert res.eligible == 0 and np.isnan(res.rate)
