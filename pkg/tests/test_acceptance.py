"""Acceptance battery: the nine release criteria, one test each.

Run `pytest tests/test_acceptance.py -v -s` to get one PASS/FAIL line per
criterion.  The two full-scale runs (a million pairs each) are shared
module fixtures; the whole battery targets well under the stated runtime
budgets on a laptop.
"""

import dataclasses
import hashlib
import time
from types import SimpleNamespace

import numpy as np
import pytest

import dcqe
from dcqe.amplitudes import (
    CONJUGATE,
    HADAMARD,
    TimingModel,
    random_unitary_convention,
)
from dcqe.analysis import pooled_chi_square
from dcqe.apparatus import IDLER_DETECTORS, SPEED_OF_LIGHT, DetectorId
from dcqe.cli import main as cli_main
from dcqe.events import EventStreams

N_FULL = 1_000_000
SEED = 20260821


def _report(num: int, desc: str, ok: bool, detail: str = "") -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {num}: {desc}"
    if detail:
        line += f" [{detail}]"
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def kim_run(default_cfg):
    """Full-scale run on the default bench: generate, match, fit."""
    started = time.perf_counter()
    streams = dcqe.run_simulation(default_cfg, N_FULL, seed=SEED)
    matched = dcqe.match_coincidences(
        streams, default_cfg.coincidence_window, dcqe.nominal_offsets(default_cfg)
    )
    hists = dcqe.fit_fringes(dcqe.build_fringes(matched, default_cfg), default_cfg)
    elapsed = time.perf_counter() - started
    return SimpleNamespace(
        streams=streams, matched=matched, hists=hists, elapsed=elapsed
    )


@pytest.fixture(scope="module")
def full_sweep(default_cfg):
    """Ten-point timing-spread sweep at full scale."""
    started = time.perf_counter()
    sweep = dcqe.sweep_timing(default_cfg, N_FULL, seed=SEED, n_points=10)
    elapsed = time.perf_counter() - started
    return SimpleNamespace(sweep=sweep, elapsed=elapsed)


def test_criterion_1_conditional_fringes(kim_run):
    """Eraser ports show fringes, tagger ports do not, anti-phased."""
    fits = {det: kim_run.hists[det].fit for det in IDLER_DETECTORS}
    v = {det: fits[det].visibility for det in IDLER_DETECTORS}
    dphi = dcqe.wrapped_phase_difference(
        fits[DetectorId.D1].phase, fits[DetectorId.D2].phase
    )
    ok = (
        v[DetectorId.D1] >= 0.95
        and v[DetectorId.D2] >= 0.95
        and v[DetectorId.D3] <= 0.05
        and v[DetectorId.D4] <= 0.05
        and abs(dphi - np.pi) <= 0.05
        and kim_run.elapsed <= 60.0
    )
    _report(
        1,
        "V(D1,D2) >= 0.95, V(D3,D4) <= 0.05, phases pi apart, under 60 s",
        ok,
        f"V={v[DetectorId.D1]:.4f}/{v[DetectorId.D2]:.4f}/"
        f"{v[DetectorId.D3]:.4f}/{v[DetectorId.D4]:.4f}, "
        f"dphi={dphi:.4f}, {kim_run.elapsed:.1f} s",
    )


def test_criterion_2_choice_ordering(default_cfg, kim_run):
    """Every signal click lands before any idler could reach its detector."""
    fraction = dcqe.delayed_choice_audit(kim_run.streams, default_cfg)
    ok = fraction == 1.0
    _report(2, "audit fraction exactly 1.0 at full scale", ok, f"fraction={fraction!r}")


def test_criterion_3_no_signaling(default_cfg, full_sweep):
    """The unconditioned screen pattern never shows fringes."""
    sweep = full_sweep.sweep
    max_marginal = float(sweep.v_marginal.max())
    xs = default_cfg.x_centers
    base = dcqe.marginal_probability(default_cfg, xs)
    worst = 0.0
    for conv in (HADAMARD, CONJUGATE, random_unitary_convention(seed=2026)):
        other = dcqe.marginal_probability(default_cfg, xs, convention=conv)
        worst = max(worst, float(np.abs(other - base).max()))
    ok = max_marginal <= 0.02 and worst <= 1e-12
    _report(
        3,
        "marginal visibility <= 0.02 on the sweep grid; analytic marginal "
        "invariant across splitter phase conventions",
        ok,
        f"max fitted V={max_marginal:.5f}, max convention deviation={worst:.2e}",
    )


def test_criterion_4_visibility_tracks_overlap(full_sweep):
    """Fringes recover as the timing spread grows past the path delay."""
    sweep = full_sweep.sweep
    v1 = sweep.visibility[DetectorId.D1]
    v3_max = float(sweep.visibility[DetectorId.D3].max())
    ok = (
        v1[0] <= 0.1
        and v1[-1] >= 0.9
        and sweep.spearman_d1 >= 0.95
        and v3_max <= 0.05
        and full_sweep.elapsed <= 600.0
    )
    _report(
        4,
        "V(D1) rises 0.1 -> 0.9 across the spread sweep, monotone, D3 flat, "
        "under 600 s",
        ok,
        f"endpoints {v1[0]:.4f}/{v1[-1]:.4f}, spearman={sweep.spearman_d1:.3f}, "
        f"max V(D3)={v3_max:.4f}, {full_sweep.elapsed:.1f} s",
    )


def test_criterion_5_duality_invariant(default_cfg):
    """V^2 + D^2 = 1 for the quantum measure; timing bound never exceeds it."""
    timing = TimingModel.from_sigma_eff(1e-12)
    dts = np.linspace(0.0, 10e-12, 100)
    worst_identity = 0.0
    worst_bound = 0.0
    tv_ordered = True
    for dt in dts:
        v = dcqe.temporal_overlap(float(dt), timing)
        d = dcqe.timing_distinguishability(float(dt), timing)
        worst_identity = max(worst_identity, abs(v**2 + d.quantum**2 - 1.0))
        worst_bound = max(worst_bound, v**2 + d.tv**2 - 1.0)
        tv_ordered = tv_ordered and d.tv <= d.quantum + 1e-12
    # the same identity through the fringe-side quantity: a bench with a
    # two-sigma arm delay must sit exactly on the duality circle
    sigma = 2e-9
    segs = dict(default_cfg.idler_segment_lengths)
    for det in (DetectorId.D1, DetectorId.D2):
        key = (dcqe.SlitLabel.B, det)
        segs[key] = segs[key] + 2.0 * sigma * SPEED_OF_LIGHT
    delayed = dataclasses.replace(default_cfg, idler_segment_lengths=segs)
    t2 = TimingModel.from_sigma_eff(sigma)
    v_ref = dcqe.analytic_visibility(delayed, DetectorId.D1, t2)
    d_ref = dcqe.timing_distinguishability(
        dcqe.branch_time_delta(delayed, dcqe.reference_position(delayed), DetectorId.D1),
        t2,
    ).quantum
    circle = abs(v_ref**2 + d_ref**2 - 1.0)
    ok = (
        worst_identity <= 1e-9
        and worst_bound <= 1e-9
        and tv_ordered
        and circle <= 1e-6
    )
    _report(
        5,
        "V^2 + Dq^2 = 1 on a 100-point grid, V^2 + Dtv^2 <= 1, Dtv <= Dq",
        ok,
        f"max identity residual={worst_identity:.2e}, "
        f"max bound excess={worst_bound:.2e}, fringe-side residual={circle:.2e}",
    )


def test_criterion_6_sampler_matches_analytic_law(default_cfg):
    """Chi-square of the sampled (x, detector) table against the joint law."""
    dist = dcqe.JointDistribution.build(default_cfg)
    n_x = dist.n_x
    pvalues = []
    for seed in (101, 202, 303):
        streams = dcqe.run_simulation(default_cfg, N_FULL, seed=seed)
        x_by_pair = streams.d0_x[np.argsort(streams.d0_pair)]
        det_by_pair = streams.idler_det[np.argsort(streams.idler_pair)]
        x_idx = np.searchsorted(dist.x, x_by_pair)
        cells = det_by_pair.astype(np.int64) * n_x + x_idx
        observed = np.bincount(cells, minlength=len(IDLER_DETECTORS) * n_x)
        expected = dist.cell_probabilities * streams.n_pairs
        pvalues.append(pooled_chi_square(observed, expected).pvalue)
    n_ok = sum(p > 0.001 for p in pvalues)
    ok = n_ok >= 2
    _report(
        6,
        "joint-law chi-square p > 0.001 on at least two of three seeds",
        ok,
        "p=" + "/".join(f"{p:.3f}" for p in pvalues),
    )


def test_criterion_7_coincidence_machinery(kim_run):
    """Accidental rate, greedy-vs-brute agreement, and pairing purity."""
    zero_offsets = {det: 0.0 for det in IDLER_DETECTORS}

    def _hand_streams(d0_t, idler_t, idler_det):
        nd, ni = len(d0_t), len(idler_t)
        n = max(nd, ni)
        return EventStreams(
            n_pairs=n,
            emission_times=np.zeros(n),
            branch_tags=np.zeros(n, dtype=np.int8),
            d0_pair=np.arange(nd),
            d0_x=np.zeros(nd),
            d0_t=np.asarray(d0_t, dtype=float),
            idler_pair=np.arange(ni) + 1_000_000,
            idler_det=np.asarray(idler_det, dtype=np.int8),
            idler_t=np.asarray(idler_t, dtype=float),
        )

    # accidentals: two independent kilohertz streams over 1000 s
    rng = np.random.default_rng(31337)
    rate, duration, window = 1e3, 1e3, 1e-6
    d0 = np.sort(rng.uniform(0, duration, size=rng.poisson(rate * duration)))
    idler = np.sort(rng.uniform(0, duration, size=rng.poisson(rate * duration)))
    acc = dcqe.match_coincidences(
        _hand_streams(d0, idler, np.zeros(idler.shape[0])), window, zero_offsets
    )
    expected = 2 * rate * rate * window * duration
    acc_ok = abs(len(acc) - expected) < 5 * np.sqrt(expected)

    # greedy equals the brute-force optimum on unambiguous fixtures
    agree = True
    for seed in range(10):
        r = np.random.default_rng(seed)
        n = int(r.integers(5, 20))
        base = np.cumsum(r.exponential(1e-3, size=n))
        jitter = r.uniform(-0.4e-9, 0.4e-9, size=n)
        streams = _hand_streams(base, base + jitter, r.integers(0, 4, size=n))
        greedy = dcqe.match_coincidences(streams, 1e-9, zero_offsets)
        brute = dcqe.exhaustive_match(streams, 1e-9, zero_offsets)
        agree = agree and (
            sorted(zip(greedy.d0_index, greedy.idler_index)) == sorted(brute)
        )

    purity = kim_run.matched.purity()
    ok = acc_ok and agree and purity >= 0.999
    _report(
        7,
        "accidental count within 5 sigma of 2*R0*R1*W*T; greedy matches the "
        "brute-force oracle; purity >= 0.999",
        ok,
        f"accidentals {len(acc)} vs {expected:.0f}, agree={agree}, "
        f"purity={purity:.6f}",
    )


def test_criterion_8_byte_determinism(tmp_path):
    """Identical CSV bytes for repeated runs, at any worker count."""
    n = 200_000

    def _digests(out, workers):
        args = ["--events", str(n), "--seed", "777", "--out", str(out),
                "--workers", str(workers)]
        assert cli_main(["simulate", *args]) == 0
        assert cli_main(["coincide", *args]) == 0
        assert cli_main(["fringes", *args, "--no-figures"]) == 0
        names = ("events.csv", "coincidences.csv", "fringes.csv",
                 "visibility.csv", "marginal.csv", "plot_series.csv")
        return {
            name: hashlib.sha256((out / name).read_bytes()).hexdigest()
            for name in names
        }

    first = _digests(tmp_path / "run1", workers=1)
    second = _digests(tmp_path / "run2", workers=1)
    split = _digests(tmp_path / "run4", workers=4)
    ok = first == second == split
    _report(
        8,
        "CSV outputs byte-identical across repeats and worker counts",
        ok,
        f"{len(first)} files compared",
    )


def test_criterion_9_reference_self_checks(tmp_path):
    """Every frozen reference number recomputes both ways."""
    checks = dcqe.run_oracle_checks()
    failed = [c.name for c in checks if not c.passed]
    rc = cli_main(["oracle-check", "--out", str(tmp_path)])
    ok = not failed and rc == 0
    _report(
        9,
        "oracle-check recomputes every reference value and exits zero",
        ok,
        f"{len(checks) - len(failed)}/{len(checks)} checks, exit code {rc}",
    )
