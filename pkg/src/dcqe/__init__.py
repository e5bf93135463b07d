"""Delayed-choice eraser bench simulator.

A double slit feeds a scanning signal detector D0; the entangled idler of
each pair rides a longer splitter network into four fixed detectors whose
identity either erases (D1, D2) or reveals (D3, D4) the slit of origin.
The package computes the joint detection law analytically, generates
seeded timestamped event streams consistent with it, matches coincidences
the way counting electronics would, and quantifies fringe visibility and
which-path information in the sorted subensembles.
"""

from ._version import __version__
from .amplitudes import (
    CONJUGATE,
    HADAMARD,
    I_ON_REFLECTION,
    Distinguishability,
    JointDistribution,
    PhaseConvention,
    TimingModel,
    analytic_visibility,
    branch_time_delta,
    fringe_contrast_scan,
    idler_amplitude,
    joint_probability,
    marginal_probability,
    random_unitary_convention,
    reference_position,
    slit_amplitude,
    temporal_overlap,
    timing_distinguishability,
)
from .analysis import (
    InsufficientData,
    OracleCheck,
    ScenarioReport,
    StopwatchAngles,
    SweepResult,
    UnknownScenario,
    VisibilityEstimate,
    delayed_choice_audit,
    estimate_visibility,
    fit_fringe,
    fit_fringes,
    marginal_histogram,
    run_oracle_checks,
    run_scenario,
    stopwatch_angles,
    sweep_timing,
    wrapped_phase_difference,
    write_manifest,
)
from .apparatus import (
    IDLER_DETECTORS,
    SPEED_OF_LIGHT,
    ApparatusConfig,
    ArrivalTimeDelta,
    ConfigError,
    DelayedChoiceOrderViolated,
    DetectorId,
    NegativeParameter,
    SlitLabel,
    UnknownConfigKey,
    UnreachableDetector,
    arrival_time_delta,
    config_from_dict,
    default_config,
    idler_path_delay,
    idler_path_length,
    is_reachable,
    load_config,
    signal_path_length,
    validate_config,
)
from .coincidence import (
    CoincidenceRecord,
    Coincidences,
    FringeHistogram,
    UnsortedStream,
    build_fringes,
    exhaustive_match,
    histograms_to_csv,
    match_coincidences,
    nominal_offsets,
)
from .events import (
    BiphotonEvent,
    CapacityExceeded,
    EventStreams,
    assign_timestamps,
    emission_times,
    run_simulation,
    sample_outcome,
)

__all__ = [name for name in dir() if not name.startswith("_")]
