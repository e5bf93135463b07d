"""Coincidence matching between the D0 stream and the idler stream.

The matcher mirrors what counting electronics do: for each D0 click, in
time order, look for idler clicks whose arrival lag (minus the nominal
per-detector cable/path offset) falls inside the accept window, take the
best-aligned unused one, and consume it.  One greedy forward pass, each
click used at most once, fully deterministic including ties.

Matched records keep the originating pair ids when the streams carry them,
so simulations can grade the matcher (true-pair purity) without changing
its behaviour.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .apparatus import (
    IDLER_DETECTORS,
    SPEED_OF_LIGHT,
    ApparatusConfig,
    DetectorId,
    idler_path_delay,
    reachable_slits,
)
from .events import EventStreams


class UnsortedStream(ValueError):
    """Matcher input must be time-sorted; refuse to guess otherwise."""


class CoincidenceRecord(NamedTuple):
    """One matched (D0, idler) click pair."""

    d0_index: int
    idler_index: int
    d0_t: float
    x: float
    idler_det: DetectorId
    idler_t: float
    dt: float          # raw lag idler_t - d0_t, before offset subtraction
    true_pair: bool


@dataclass
class Coincidences:
    """Column-stored matched pairs, ordered by D0 timestamp."""

    window: float
    offsets: dict[DetectorId, float]
    d0_index: np.ndarray
    idler_index: np.ndarray
    d0_t: np.ndarray
    x: np.ndarray
    idler_det: np.ndarray      # int8 index into IDLER_DETECTORS
    idler_t: np.ndarray
    dt: np.ndarray
    true_pair: np.ndarray      # bool; all-True trivially if ids were absent

    def __len__(self) -> int:
        return int(self.d0_index.shape[0])

    def __iter__(self) -> Iterator[CoincidenceRecord]:
        for i in range(len(self)):
            yield CoincidenceRecord(
                d0_index=int(self.d0_index[i]),
                idler_index=int(self.idler_index[i]),
                d0_t=float(self.d0_t[i]),
                x=float(self.x[i]),
                idler_det=IDLER_DETECTORS[int(self.idler_det[i])],
                idler_t=float(self.idler_t[i]),
                dt=float(self.dt[i]),
                true_pair=bool(self.true_pair[i]),
            )

    def purity(self) -> float:
        """Fraction of matches joining clicks of the same emitted pair."""
        if len(self) == 0:
            return float("nan")
        return float(self.true_pair.mean())

    def to_csv(self, path: str | Path, include_true_pair: bool = True) -> None:
        header = "d0_t,x,idler_det,idler_t,dt"
        if include_true_pair:
            header += ",true_pair"
        lines = [header]
        for i in range(len(self)):
            row = [
                repr(float(self.d0_t[i])),
                repr(float(self.x[i])),
                IDLER_DETECTORS[int(self.idler_det[i])].value,
                repr(float(self.idler_t[i])),
                repr(float(self.dt[i])),
            ]
            if include_true_pair:
                row.append("1" if self.true_pair[i] else "0")
            lines.append(",".join(row))
        Path(path).write_text("\n".join(lines) + "\n")


def nominal_offsets(config: ApparatusConfig) -> dict[DetectorId, float]:
    """Expected idler-minus-D0 lag per detector, averaged over its routes.

    idler flight time minus the axial signal flight time L0/c; for D1/D2
    the mean over the two reachable slits.  These are the offsets the
    matcher subtracts before applying the window.
    """
    signal_delay = config.L0 / SPEED_OF_LIGHT
    out: dict[DetectorId, float] = {}
    for det in IDLER_DETECTORS:
        delays = [idler_path_delay(config, slit, det) for slit in reachable_slits(det)]
        out[det] = float(np.mean(delays)) - signal_delay
    return out


def _check_sorted(name: str, t: np.ndarray) -> None:
    if t.shape[0] > 1 and np.any(np.diff(t) < 0):
        raise UnsortedStream(f"{name} stream is not sorted by timestamp")


def match_coincidences(
    streams: EventStreams,
    window: float,
    offsets: dict[DetectorId, float],
) -> Coincidences:
    """Greedy forward matching of D0 clicks against idler clicks.

    For each D0 click (ascending time), accept the unused idler click
    minimizing |lag - offset(det)| among those within `window` of its
    detector's offset; ties go to the earlier idler click.  Every click
    is consumed by at most one record.
    """
    if window <= 0:
        raise ValueError(f"window must be positive, got {window!r}")
    _check_sorted("D0", streams.d0_t)
    _check_sorted("idler", streams.idler_t)

    off_by_code = np.array([offsets[det] for det in IDLER_DETECTORS])
    lo_bound = float(off_by_code.min()) - window
    hi_bound = float(off_by_code.max()) + window

    t0 = streams.d0_t.tolist()
    ti = streams.idler_t.tolist()
    det_codes = streams.idler_det.tolist()
    offs = off_by_code.tolist()
    n_idler = len(ti)
    used = bytearray(n_idler)

    rows: list[tuple[int, int]] = []
    lo = 0
    for i, base in enumerate(t0):
        while lo < n_idler and ti[lo] < base + lo_bound:
            lo += 1
        j = lo
        best_j = -1
        best_score = window
        while j < n_idler and ti[j] <= base + hi_bound:
            if not used[j]:
                score = abs(ti[j] - base - offs[det_codes[j]])
                if score <= best_score and (best_j < 0 or score < best_score):
                    best_score = score
                    best_j = j
            j += 1
        if best_j >= 0:
            used[best_j] = 1
            rows.append((i, best_j))

    if rows:
        d0_idx = np.array([r[0] for r in rows], dtype=np.int64)
        id_idx = np.array([r[1] for r in rows], dtype=np.int64)
    else:
        d0_idx = np.zeros(0, dtype=np.int64)
        id_idx = np.zeros(0, dtype=np.int64)

    return Coincidences(
        window=window,
        offsets=dict(offsets),
        d0_index=d0_idx,
        idler_index=id_idx,
        d0_t=streams.d0_t[d0_idx],
        x=streams.d0_x[d0_idx],
        idler_det=streams.idler_det[id_idx],
        idler_t=streams.idler_t[id_idx],
        dt=streams.idler_t[id_idx] - streams.d0_t[d0_idx],
        true_pair=streams.d0_pair[d0_idx] == streams.idler_pair[id_idx],
    )


def exhaustive_match(
    streams: EventStreams,
    window: float,
    offsets: dict[DetectorId, float],
) -> list[tuple[int, int]]:
    """Globally optimal matching by exhaustive search (validation only).

    Maximizes the number of matched pairs, then minimizes the summed
    |lag - offset| score, then takes the lexicographically smallest
    assignment.  Exponential in the worst case; intended for the small
    fixtures used to grade the greedy matcher.
    """
    _check_sorted("D0", streams.d0_t)
    _check_sorted("idler", streams.idler_t)
    off_by_code = [offsets[det] for det in IDLER_DETECTORS]

    candidates: list[list[tuple[int, float]]] = []
    for i in range(streams.d0_t.shape[0]):
        base = float(streams.d0_t[i])
        row = []
        for j in range(streams.idler_t.shape[0]):
            score = abs(
                float(streams.idler_t[j]) - base
                - off_by_code[int(streams.idler_det[j])]
            )
            if score <= window:
                row.append((j, score))
        candidates.append(row)

    n0 = len(candidates)
    best: tuple[int, float, tuple] | None = None

    def consider(rows: list[tuple[int, int]], total: float) -> None:
        nonlocal best
        key = (-len(rows), total, tuple(rows))
        if best is None or key < best:
            best = key

    def dfs(i: int, used: set[int], rows: list[tuple[int, int]], total: float) -> None:
        if i == n0:
            consider(rows, total)
            return
        for j, score in candidates[i]:
            if j not in used:
                used.add(j)
                rows.append((i, j))
                dfs(i + 1, used, rows, total + score)
                rows.pop()
                used.remove(j)
        dfs(i + 1, used, rows, total)

    dfs(0, set(), [], 0.0)
    assert best is not None
    return list(best[2])


@dataclass
class FringeHistogram:
    """Per-detector histogram of coincident D0 positions, plus an optional fit."""

    detector: DetectorId
    bin_edges: np.ndarray
    counts: np.ndarray
    fit: object | None = field(default=None)  # analysis.VisibilityEstimate

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def build_fringes(
    coincidences: Coincidences, config: ApparatusConfig
) -> dict[DetectorId, FringeHistogram]:
    """Histogram coincident D0 positions on the configured grid, per detector."""
    edges = config.x_edges
    out: dict[DetectorId, FringeHistogram] = {}
    for code, det in enumerate(IDLER_DETECTORS):
        xs = coincidences.x[coincidences.idler_det == code]
        counts, _ = np.histogram(xs, bins=edges)
        out[det] = FringeHistogram(detector=det, bin_edges=edges, counts=counts.astype(np.int64))
    return out


def histograms_to_csv(hists: dict[DetectorId, FringeHistogram], path: str | Path) -> None:
    """Write fringe histograms in the detector,bin_lo,bin_hi,count schema."""
    lines = ["detector,bin_lo,bin_hi,count"]
    for det in IDLER_DETECTORS:
        hist = hists.get(det)
        if hist is None:
            continue
        for lo, hi, c in zip(hist.bin_edges[:-1], hist.bin_edges[1:], hist.counts):
            lines.append(f"{det.value},{repr(float(lo))},{repr(float(hi))},{int(c)}")
    Path(path).write_text("\n".join(lines) + "\n")
