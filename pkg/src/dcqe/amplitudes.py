"""Route amplitudes, temporal overlap, and joint detection probabilities.

The model assigns each biphoton two interfering branches, one per slit.
For a D0 position x and an idler detector `det`, the branch amplitudes are

    a = psi_A(x) * alpha(A, det),     b = psi_B(x) * alpha(B, det)

where psi_s is the transverse signal amplitude from slit s and alpha(s, det)
collects the splitter/mirror factors along the idler route.  The joint
detection density is

    p(x, det)  proportional to  |a|^2 + |b|^2 + 2*gamma(dt) * Re(a * conj(b))

with gamma the Gaussian temporal-overlap factor evaluated at the total
branch arrival-time difference dt (signal geometry plus idler path
imbalance).  gamma multiplies only the cross term: timing information can
erase interference but never moves single-branch intensity.

Splitter phase conventions are explicit and swappable so that tests can
verify convention independence of every observable (the D0 marginal in
particular), not just the default choice of i-on-reflection.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy.special import erf

from .apparatus import (
    IDLER_DETECTORS,
    SPEED_OF_LIGHT,
    ApparatusConfig,
    DetectorId,
    SlitLabel,
    arrival_time_delta,
    idler_path_delay,
    is_reachable,
    path_length_difference,
    signal_path_length,
)


@dataclass(frozen=True)
class TimingModel:
    """Gaussian timing budget: biphoton envelope plus detector jitter.

    The effective spread sigma_eff = sqrt(tau^2 + jitter^2) controls both
    the timestamp noise applied to generated events and the analytic
    overlap factor, keeping the two layers mutually consistent.
    """

    envelope_width: float          # tau > 0, s
    detector_jitter: float = 0.0   # >= 0, s

    def __post_init__(self) -> None:
        if not self.envelope_width > 0:
            raise ValueError(f"envelope_width must be > 0, got {self.envelope_width!r}")
        if self.detector_jitter < 0:
            raise ValueError(f"detector_jitter must be >= 0, got {self.detector_jitter!r}")

    @cached_property
    def sigma_eff(self) -> float:
        return float(np.hypot(self.envelope_width, self.detector_jitter))

    @classmethod
    def from_config(cls, config: ApparatusConfig) -> "TimingModel":
        return cls(config.envelope_width, config.detector_jitter)

    @classmethod
    def from_sigma_eff(cls, sigma_eff: float) -> "TimingModel":
        """A jitter-free model with the requested effective spread (for sweeps)."""
        return cls(envelope_width=sigma_eff, detector_jitter=0.0)


def _as_matrix(entries) -> np.ndarray:
    m = np.asarray(entries, dtype=complex)
    if m.shape != (2, 2):
        raise ValueError(f"splitter matrix must be 2x2, got shape {m.shape}")
    return m


@dataclass(frozen=True)
class PhaseConvention:
    """Phase bookkeeping for the idler splitter network.

    `tap` is the splitter in each arm that diverts idlers to the
    which-path detector (input on port 0; column 0 is the only one used:
    [0,0] continues toward the recombiner, [1,0] exits to D3/D4).
    `recombiner` mixes the two continuing arms into D1/D2
    (amp[detector_port, arm_port], arm 0 = from slit A).
    `mirror_phase` is the unimodular factor per folding mirror.

    Any unitary recombiner keeps the D0 marginal convention-free; the
    familiar D1/D2 anti-phased fringe pair additionally needs 50-50
    moduli, which the default i-on-reflection choice provides.
    """

    tap: tuple = (
        (1 / np.sqrt(2), 1j / np.sqrt(2)),
        (1j / np.sqrt(2), 1 / np.sqrt(2)),
    )
    recombiner: tuple = (
        (1 / np.sqrt(2), 1j / np.sqrt(2)),
        (1j / np.sqrt(2), 1 / np.sqrt(2)),
    )
    mirror_phase: complex = -1.0 + 0.0j

    def __post_init__(self) -> None:
        for name in ("tap", "recombiner"):
            m = _as_matrix(getattr(self, name))
            if not np.allclose(m.conj().T @ m, np.eye(2), atol=1e-12):
                raise ValueError(f"{name} matrix is not unitary")
        if not np.isclose(abs(complex(self.mirror_phase)), 1.0, atol=1e-12):
            raise ValueError("mirror_phase must be unimodular")

    @cached_property
    def route_amplitudes(self) -> dict[tuple[SlitLabel, DetectorId], complex]:
        """Splitter-chain amplitude for every reachable (slit, detector) route."""
        tap = _as_matrix(self.tap)
        rec = _as_matrix(self.recombiner)
        m = complex(self.mirror_phase)
        go_on, tapped = tap[0, 0], tap[1, 0]
        return {
            (SlitLabel.A, DetectorId.D4): complex(tapped),
            (SlitLabel.B, DetectorId.D3): complex(tapped),
            (SlitLabel.A, DetectorId.D1): complex(go_on * m * rec[0, 0]),
            (SlitLabel.A, DetectorId.D2): complex(go_on * m * rec[1, 0]),
            (SlitLabel.B, DetectorId.D1): complex(go_on * m * rec[0, 1]),
            (SlitLabel.B, DetectorId.D2): complex(go_on * m * rec[1, 1]),
        }


I_ON_REFLECTION = PhaseConvention()

#: Real Hadamard recombination (sign flip on one output instead of i phases).
HADAMARD = PhaseConvention(
    tap=((1 / np.sqrt(2), 1 / np.sqrt(2)), (1 / np.sqrt(2), -1 / np.sqrt(2))),
    recombiner=((1 / np.sqrt(2), 1 / np.sqrt(2)), (1 / np.sqrt(2), -1 / np.sqrt(2))),
    mirror_phase=1.0,
)

#: Complex conjugate of the default (reflection picks up -i).
CONJUGATE = PhaseConvention(
    tap=((1 / np.sqrt(2), -1j / np.sqrt(2)), (-1j / np.sqrt(2), 1 / np.sqrt(2))),
    recombiner=((1 / np.sqrt(2), -1j / np.sqrt(2)), (-1j / np.sqrt(2), 1 / np.sqrt(2))),
    mirror_phase=-1.0,
)


def random_unitary_convention(seed: int) -> PhaseConvention:
    """A convention with Haar-random unitary tap and recombiner (test aid)."""
    rng = np.random.default_rng(seed)

    def haar2() -> tuple:
        z = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        q, r = np.linalg.qr(z)
        q = q * (np.diag(r) / np.abs(np.diag(r)))
        return tuple(tuple(row) for row in q)

    phase = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi))
    return PhaseConvention(tap=haar2(), recombiner=haar2(), mirror_phase=complex(phase))


# ---------------------------------------------------------------------------
# Branch amplitudes
# ---------------------------------------------------------------------------

def slit_amplitude(config: ApparatusConfig, slit: SlitLabel, x):
    """Transverse signal amplitude from one slit at D0 position x.

    exp(i*k*r_slit(x)) / sqrt(n_open), times the aperture envelope
    sinc(slit_width * x / (wavelength * L0)) when a slit width is set.
    A closed slit contributes exactly zero.  Scalar in, scalar out.
    """
    x_arr = np.asarray(x, dtype=float)
    if slit not in config.open_slits:
        out = np.zeros(x_arr.shape, dtype=complex)
        return complex(out) if out.ndim == 0 else out
    k = 2.0 * np.pi / config.wavelength
    r = signal_path_length(config, slit, x_arr)
    amp = np.exp(1j * k * np.asarray(r)) / np.sqrt(len(config.open_slits))
    if config.slit_width is not None:
        amp = amp * np.sinc(config.slit_width * x_arr / (config.wavelength * config.L0))
    return complex(amp) if amp.ndim == 0 else amp


def idler_amplitude(
    config: ApparatusConfig,
    slit: SlitLabel,
    detector: DetectorId,
    convention: PhaseConvention = I_ON_REFLECTION,
) -> complex:
    """Idler route amplitude including the propagation phase along the route.

    Exactly zero for unreachable routes.  The propagation phase
    exp(i*k*length) drops out of every |.|^2 and cross term with itself,
    but is kept so the amplitude is the honest route factor.
    """
    chain = convention.route_amplitudes.get((slit, detector))
    if chain is None:
        return 0.0 + 0.0j
    length = config.LA if slit is SlitLabel.A else config.LB
    length += config.idler_segment_lengths[(slit, detector)]
    k = 2.0 * np.pi / config.wavelength
    return chain * complex(np.exp(1j * k * length))


def temporal_overlap(dt, timing: TimingModel):
    """Gaussian overlap gamma = exp(-dt^2 / (8 sigma_eff^2)), in [0, 1].

    This is the overlap integral of two unit-normalized Gaussian arrival
    envelopes of width sigma_eff whose centres differ by dt.
    """
    dt_arr = np.asarray(dt, dtype=float)
    g = np.exp(-(dt_arr ** 2) / (8.0 * timing.sigma_eff ** 2))
    return float(g) if g.ndim == 0 else g


def branch_time_delta(config: ApparatusConfig, x, detector: DetectorId):
    """Total branch arrival-time difference (B minus A) for a joint outcome.

    Signal-side geometric difference plus the idler path imbalance of the
    two routes into `detector`.  For the single-route detectors D3/D4 the
    idler term is omitted (there is no second branch to compare against).
    """
    delta = arrival_time_delta(config, x).exact
    slits = [s for s in (SlitLabel.A, SlitLabel.B) if is_reachable(s, detector)]
    if len(slits) == 2:
        delay_a = idler_path_delay(config, SlitLabel.A, detector)
        delay_b = idler_path_delay(config, SlitLabel.B, detector)
        delta = delta + (delay_b - delay_a)
    return delta


def _branch_pair(config, x_arr, detector, convention):
    a = slit_amplitude(config, SlitLabel.A, x_arr) * idler_amplitude(
        config, SlitLabel.A, detector, convention
    )
    b = slit_amplitude(config, SlitLabel.B, x_arr) * idler_amplitude(
        config, SlitLabel.B, detector, convention
    )
    return np.asarray(a, dtype=complex), np.asarray(b, dtype=complex)


def _joint_density_raw(config, x_arr, detector, timing, convention):
    a, b = _branch_pair(config, x_arr, detector, convention)
    gamma = temporal_overlap(branch_time_delta(config, x_arr, detector), timing)
    return (
        np.abs(a) ** 2
        + np.abs(b) ** 2
        + 2.0 * np.asarray(gamma) * (a * np.conj(b)).real
    )


def grid_normalization(
    config: ApparatusConfig,
    timing: TimingModel,
    convention: PhaseConvention = I_ON_REFLECTION,
) -> float:
    """Trapezoid-rule integral of the raw joint density over the configured grid."""
    x = config.x_centers
    total = 0.0
    for det in IDLER_DETECTORS:
        total += np.trapezoid(_joint_density_raw(config, x, det, timing, convention), x)
    return float(total)


def joint_probability(
    config: ApparatusConfig,
    x,
    detector: DetectorId,
    timing: TimingModel | None = None,
    convention: PhaseConvention = I_ON_REFLECTION,
    normalization: float | None = None,
):
    """Joint detection density p(x, detector), unit total over the grid.

    Pass a precomputed `normalization` (from `grid_normalization`) to
    avoid recomputing it in a loop, or 1.0 for the raw unnormalized
    density.  Scalar x in, scalar out.
    """
    if timing is None:
        timing = TimingModel.from_config(config)
    if normalization is None:
        normalization = grid_normalization(config, timing, convention)
    x_arr = np.asarray(x, dtype=float)
    dens = _joint_density_raw(config, x_arr, detector, timing, convention) / normalization
    return float(dens) if dens.ndim == 0 else dens


def marginal_probability(
    config: ApparatusConfig,
    x,
    timing: TimingModel | None = None,
    convention: PhaseConvention = I_ON_REFLECTION,
    normalization: float | None = None,
):
    """D0 marginal density: the joint summed over all four idler detectors."""
    if timing is None:
        timing = TimingModel.from_config(config)
    if normalization is None:
        normalization = grid_normalization(config, timing, convention)
    x_arr = np.asarray(x, dtype=float)
    dens = sum(
        _joint_density_raw(config, x_arr, det, timing, convention)
        for det in IDLER_DETECTORS
    ) / normalization
    return float(dens) if np.ndim(dens) == 0 else dens


class Distinguishability(NamedTuple):
    """Which-path knowledge carried by arrival timing at separation dt."""

    tv: float       # total-variation distance of the two arrival-time laws
    quantum: float  # sqrt(1 - gamma^2), saturates the duality relation


def timing_distinguishability(dt, timing: TimingModel):
    """Distinguishability of the two branch arrival-time distributions.

    tv = erf(|dt| / (2*sqrt(2)*sigma_eff)) is what an ideal classifier of
    single timestamps achieves; quantum = sqrt(1 - gamma^2) is the wave
    bound, so tv <= quantum with equality only at dt = 0.
    """
    dt_arr = np.asarray(dt, dtype=float)
    s = timing.sigma_eff
    tv = erf(np.abs(dt_arr) / (2.0 * np.sqrt(2.0) * s))
    # 1 - gamma^2 via expm1 to keep precision at small dt.
    quantum = np.sqrt(-np.expm1(-(dt_arr ** 2) / (4.0 * s ** 2)))
    if dt_arr.ndim == 0:
        return Distinguishability(float(tv), float(quantum))
    return Distinguishability(tv, quantum)


def reference_position(config: ApparatusConfig) -> float:
    """Grid point where the fringe cross term is largest, used by sweeps.

    Restricted to the central fringe period (and the central aperture
    lobe when a slit width is set) so the chosen point carries a strong,
    envelope-unattenuated oscillation.  Ties resolve to the smallest |x|,
    then to the positive side, making the choice deterministic.
    """
    x = config.x_centers
    k = 2.0 * np.pi / config.wavelength
    half_width = config.fringe_period
    if config.slit_width is not None:
        half_width = min(half_width, config.wavelength * config.L0 / config.slit_width)
    mask = np.abs(x) <= half_width
    if not mask.any():
        mask = np.ones_like(x, dtype=bool)
    candidates = x[mask]
    score = np.abs(np.sin(k * path_length_difference(config, candidates)))
    best = score.max()
    tied = candidates[score >= best - 1e-12]
    tied = tied[np.abs(tied) <= np.abs(tied).min() + 1e-15]
    return float(tied.max())


def analytic_visibility(
    config: ApparatusConfig,
    detector: DetectorId,
    timing: TimingModel | None = None,
    x_ref: float | None = None,
    convention: PhaseConvention = I_ON_REFLECTION,
) -> float:
    """Closed-form fringe visibility at one detector.

    V = 2*|a|*|b|*gamma / (|a|^2 + |b|^2) with the branch moduli taken at
    x_ref and gamma at the total branch time difference there.  Yields 0
    for single-route detectors and for single-slit running, and gamma
    itself for balanced branches.
    """
    if timing is None:
        timing = TimingModel.from_config(config)
    if x_ref is None:
        x_ref = reference_position(config)
    a, b = _branch_pair(config, np.asarray(x_ref, dtype=float), detector, convention)
    a2 = float(np.abs(a) ** 2)
    b2 = float(np.abs(b) ** 2)
    if a2 + b2 == 0.0:
        return 0.0
    gamma = float(temporal_overlap(branch_time_delta(config, x_ref, detector), timing))
    return 2.0 * np.sqrt(a2 * b2) * gamma / (a2 + b2)


def fringe_contrast_scan(
    config: ApparatusConfig,
    detector: DetectorId,
    timing: TimingModel | None = None,
    x_center: float | None = None,
    n: int = 16385,
    convention: PhaseConvention = I_ON_REFLECTION,
) -> float:
    """Numeric (max - min)/(max + min) over one fringe period around x_center.

    Independent of the closed form in `analytic_visibility`; kept as a
    cross-check oracle.  Uses a dense scan so discretization error stays
    well below the comparison tolerances.
    """
    if timing is None:
        timing = TimingModel.from_config(config)
    if x_center is None:
        x_center = reference_position(config)
    half = 0.5 * config.fringe_period
    x = np.linspace(x_center - half, x_center + half, n)
    dens = _joint_density_raw(config, x, detector, timing, convention)
    hi, lo = float(dens.max()), float(dens.min())
    if hi + lo == 0.0:
        return 0.0
    return (hi - lo) / (hi + lo)


@dataclass(frozen=True)
class JointDistribution:
    """The joint law tabulated on the configured (x bin centre, detector) grid.

    `density` rows follow IDLER_DETECTORS order and integrate (trapezoid
    over x, summed over detectors) to one.  `cell_probabilities` is the
    discrete per-cell law used for sampling and chi-square comparisons,
    flattened detector-major, renormalized to sum exactly to one.
    """

    x: np.ndarray                  # bin centres, shape (nx,)
    density: np.ndarray            # shape (4, nx), trapezoid-normalized
    cell_probabilities: np.ndarray  # shape (4*nx,), sums to 1

    @classmethod
    def build(
        cls,
        config: ApparatusConfig,
        timing: TimingModel | None = None,
        convention: PhaseConvention = I_ON_REFLECTION,
    ) -> "JointDistribution":
        if timing is None:
            timing = TimingModel.from_config(config)
        x = config.x_centers
        raw = np.stack(
            [_joint_density_raw(config, x, det, timing, convention) for det in IDLER_DETECTORS]
        )
        norm = sum(np.trapezoid(row, x) for row in raw)
        density = raw / norm
        h = float(x[1] - x[0])
        cells = (density * h).ravel()
        cells = cells / cells.sum()
        return cls(x=x, density=density, cell_probabilities=cells)

    @property
    def n_x(self) -> int:
        return self.x.shape[0]

    def detector_totals(self) -> dict[DetectorId, float]:
        """Per-detector share of all joint detections (cell-law sums)."""
        per_det = self.cell_probabilities.reshape(len(IDLER_DETECTORS), self.n_x).sum(axis=1)
        return {det: float(p) for det, p in zip(IDLER_DETECTORS, per_det)}

    def total_probability(self) -> float:
        """Trapezoid integral of the density; unity up to float rounding."""
        return float(sum(np.trapezoid(row, self.x) for row in self.density))

    def cell_index(self, detector: DetectorId, x_index: int) -> int:
        return IDLER_DETECTORS.index(detector) * self.n_x + x_index
