"""Event generation: sampling, timestamps, determinism, stream invariants."""

import dataclasses
import hashlib
import warnings

import numpy as np
import pytest

import dcqe
from dcqe import events
from dcqe.amplitudes import TimingModel
from dcqe.apparatus import (
    IDLER_DETECTORS,
    SPEED_OF_LIGHT,
    DetectorId,
    SlitLabel,
)
from dcqe.events import CapacityExceeded


def _one_hot_distribution(dist, detector, x_index):
    """Copy of a JointDistribution with all mass on one cell."""
    cells = np.zeros_like(dist.cell_probabilities)
    cells[dist.cell_index(detector, x_index)] = 1.0
    return dataclasses.replace(dist, cell_probabilities=cells)


# ---------------------------------------------------------------------------
# sample_outcome


def test_sample_outcome_one_hot(default_cfg, default_timing):
    dist = dcqe.JointDistribution.build(default_cfg, default_timing)
    forced = _one_hot_distribution(dist, DetectorId.D2, 17)
    rng = np.random.default_rng(0)
    for _ in range(25):
        x, det = dcqe.sample_outcome(forced, rng)
        assert det is DetectorId.D2
        assert x == float(dist.x[17])


def test_sample_outcome_reproducible(default_cfg, default_timing):
    dist = dcqe.JointDistribution.build(default_cfg, default_timing)
    seq_a = [dcqe.sample_outcome(dist, rng) for rng in [np.random.default_rng(5)]][0]
    seq_b = [dcqe.sample_outcome(dist, rng) for rng in [np.random.default_rng(5)]][0]
    assert seq_a == seq_b
    rng = np.random.default_rng(9)
    draws = {dcqe.sample_outcome(dist, rng) for _ in range(40)}
    assert len(draws) > 10  # the generator advances between draws


# ---------------------------------------------------------------------------
# assign_timestamps


def test_assign_timestamps_exact_flight_times(default_cfg):
    """With sigma_t=0 the timestamps are pure geometry."""
    rng = np.random.default_rng(1)
    # D4 is reachable from slit A only, so the tag is forced
    ev = dcqe.assign_timestamps(
        default_cfg, (5e-4, DetectorId.D4), t_emit=2.0, rng=rng, sigma_t=0.0
    )
    assert ev.branch_tag is SlitLabel.A
    # x right under slit A: the signal flight is exactly L0/c
    assert ev.t_d0 == 2.0 + default_cfg.L0 / SPEED_OF_LIGHT
    assert ev.t_idler == 2.0 + 3.0 / SPEED_OF_LIGHT


def test_assign_timestamps_tagger_tags(default_cfg):
    rng = np.random.default_rng(2)
    for _ in range(50):
        ev = dcqe.assign_timestamps(
            default_cfg, (1e-3, DetectorId.D3), 0.0, rng, sigma_t=0.0
        )
        assert ev.branch_tag is SlitLabel.B
        ev = dcqe.assign_timestamps(
            default_cfg, (1e-3, DetectorId.D4), 0.0, rng, sigma_t=0.0
        )
        assert ev.branch_tag is SlitLabel.A


def test_assign_timestamps_eraser_tag_is_a_coin(default_cfg):
    """On the eraser ports both branch weights are 1/2 at any x."""
    rng = np.random.default_rng(3)
    n = 400
    tags = [
        dcqe.assign_timestamps(
            default_cfg, (7e-4, DetectorId.D1), 0.0, rng, sigma_t=0.0
        ).branch_tag
        for _ in range(n)
    ]
    n_b = sum(tag is SlitLabel.B for tag in tags)
    # 4 sigma of Binomial(400, 1/2)
    assert abs(n_b - n / 2) < 4 * np.sqrt(n * 0.25)


# ---------------------------------------------------------------------------
# emission times


def test_emission_times_statistics(default_cfg):
    t = events.emission_times(default_cfg, 200_000, seed=77)
    assert t.shape == (200_000,)
    assert np.all(np.diff(t) > 0)
    gaps = np.diff(t)
    mean_gap = 1.0 / default_cfg.pair_rate
    assert gaps.mean() == pytest.approx(mean_gap, rel=0.02)
    assert t[0] > 0


def test_emission_times_empty(default_cfg):
    t = events.emission_times(default_cfg, 0, seed=1)
    assert t.shape == (0,)


# ---------------------------------------------------------------------------
# run_simulation


def test_run_capacity_guard(default_cfg):
    tiny = dataclasses.replace(default_cfg, max_events=10)
    with pytest.raises(CapacityExceeded):
        dcqe.run_simulation(tiny, 11, seed=1)
    # the cap itself is allowed
    streams = dcqe.run_simulation(tiny, 10, seed=1)
    assert streams.n_pairs == 10


def test_run_zero_events(default_cfg):
    streams = dcqe.run_simulation(default_cfg, 0, seed=1)
    assert streams.n_pairs == 0
    assert streams.d0_t.shape == (0,)
    assert streams.idler_t.shape == (0,)


def test_streams_are_sorted(small_run):
    assert np.all(np.diff(small_run.d0_t) >= 0)
    assert np.all(np.diff(small_run.idler_t) >= 0)
    assert small_run.d0_pair.shape == (small_run.n_pairs,)
    assert small_run.idler_pair.shape == (small_run.n_pairs,)


def test_detector_shares(small_run):
    counts = small_run.detector_counts()
    n = small_run.n_pairs
    sigma = np.sqrt(n * 0.25 * 0.75)
    for det in IDLER_DETECTORS:
        assert abs(counts[det] - n / 4) < 4 * sigma


def test_same_seed_same_streams(default_cfg, tmp_path):
    a = dcqe.run_simulation(default_cfg, 5_000, seed=99)
    b = dcqe.run_simulation(default_cfg, 5_000, seed=99)
    np.testing.assert_array_equal(a.d0_t, b.d0_t)
    np.testing.assert_array_equal(a.d0_x, b.d0_x)
    np.testing.assert_array_equal(a.idler_t, b.idler_t)
    np.testing.assert_array_equal(a.idler_det, b.idler_det)
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    a.to_csv(pa)
    b.to_csv(pb)
    assert pa.read_bytes() == pb.read_bytes()


def test_different_seed_differs(default_cfg):
    a = dcqe.run_simulation(default_cfg, 1_000, seed=1)
    b = dcqe.run_simulation(default_cfg, 1_000, seed=2)
    assert not np.array_equal(a.d0_t, b.d0_t)


@pytest.mark.parametrize("workers", [2, 5])
def test_worker_count_invariance(default_cfg, workers):
    base = dcqe.run_simulation(default_cfg, 4_000, seed=31)
    split = dcqe.run_simulation(default_cfg, 4_000, seed=31, workers=workers)
    np.testing.assert_array_equal(base.d0_t, split.d0_t)
    np.testing.assert_array_equal(base.idler_t, split.idler_t)
    np.testing.assert_array_equal(base.branch_tags, split.branch_tags)


def test_csv_schema(default_cfg, tmp_path):
    n = 50
    streams = dcqe.run_simulation(default_cfg, n, seed=8)
    path = tmp_path / "events.csv"
    streams.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "pair_id,channel,t,x"
    assert len(lines) == 2 * n + 1
    d0_rows = [l for l in lines[1:] if l.split(",")[1] == "D0"]
    idler_rows = [l for l in lines[1:] if l.split(",")[1] != "D0"]
    assert len(d0_rows) == n
    assert len(idler_rows) == n
    for row in idler_rows:
        assert row.endswith(",")  # x column empty on idler rows
    for row in d0_rows:
        assert row.split(",")[3] != ""
    # timestamps appear in non-decreasing order in the merged table
    ts = [float(l.split(",")[2]) for l in lines[1:]]
    assert ts == sorted(ts)


def test_csv_debug_column(default_cfg, tmp_path):
    streams = dcqe.run_simulation(default_cfg, 20, seed=8)
    plain = tmp_path / "plain.csv"
    tagged = tmp_path / "tagged.csv"
    streams.to_csv(plain)
    streams.to_csv(tagged, debug=True)
    assert plain.read_text().splitlines()[0] == "pair_id,channel,t,x"
    lines = tagged.read_text().splitlines()
    assert lines[0] == "pair_id,channel,t,x,branch_tag"
    assert all(l.split(",")[4] in ("A", "B") for l in lines[1:])


def test_timestamp_mixture_tracks_overlap(default_cfg):
    """The semiclassical tags must reproduce the analytic overlap.

    Shrink the grid to 8 coarse bins, make the envelope dominate
    (5 fs, no jitter), and estimate gamma per bin from the spread of
    tagged D0 arrival means: gamma_hat = exp(-mean_gap^2 / (8 sigma^2)).
    """
    cfg = dataclasses.replace(
        default_cfg,
        x_bins=8,
        envelope_width=5e-15,
        detector_jitter=0.0,
    )
    timing = TimingModel.from_config(cfg)
    n = 200_000
    streams = dcqe.run_simulation(cfg, n, seed=13)
    flight = streams.d0_t[np.argsort(streams.d0_pair)] - streams.emission_times
    tags = streams.branch_tags
    x_by_pair = streams.d0_x[np.argsort(streams.d0_pair)]
    for x_c in cfg.x_centers[cfg.x_centers > 0][:3]:
        sel = np.abs(x_by_pair - x_c) < 1e-9
        if sel.sum() < 500:
            continue
        t_a = flight[sel & (tags == 0)].mean()
        t_b = flight[sel & (tags == 1)].mean()
        gamma_hat = np.exp(-((t_b - t_a) ** 2) / (8 * timing.sigma_eff**2))
        expect = dcqe.temporal_overlap(
            dcqe.arrival_time_delta(cfg, float(x_c)).exact, timing
        )
        assert gamma_hat == pytest.approx(expect, abs=0.05)


def test_ordering_warning_when_jitter_swamps_slack(default_cfg):
    """A nanosecond envelope lets D0 clicks spill past the choice horizon."""
    sloppy = dataclasses.replace(default_cfg, envelope_width=5e-9)
    with pytest.warns(RuntimeWarning):
        streams = dcqe.run_simulation(sloppy, 20_000, seed=5)
    frac = dcqe.delayed_choice_audit(streams, sloppy)
    # slack is 5 ns = 1 sigma of the combined spread, so some crossings
    assert 0.75 < frac < 0.95


def test_no_warning_at_default_timing(default_cfg):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        dcqe.run_simulation(default_cfg, 2_000, seed=6)
