"""Bench geometry and configuration for the delayed-choice eraser simulator.

The apparatus: a double slit (A above the axis, B below) sends the signal
photon of each down-converted pair to a scanning detector D0 a distance L0
away, while the idler photon travels a strictly longer path (LA or LB,
depending on the slit of origin) into a beam-splitter network terminating
in four fixed detectors:

    D1, D2  -- reachable from both slits (which-path label erased)
    D3      -- reachable only from slit B
    D4      -- reachable only from slit A

Everything downstream (amplitudes, event generation, coincidence matching)
derives from the single validated `ApparatusConfig`.  All lengths are in
metres, times in seconds, rates in Hz.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from enum import Enum
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

#: Exact by SI definition, m/s.
SPEED_OF_LIGHT = 299_792_458.0


class SlitLabel(str, Enum):
    A = "A"
    B = "B"


class DetectorId(str, Enum):
    D0 = "D0"
    D1 = "D1"
    D2 = "D2"
    D3 = "D3"
    D4 = "D4"


#: Idler-side detectors, in canonical order (D0 sees only signal photons).
IDLER_DETECTORS: tuple[DetectorId, ...] = (
    DetectorId.D1,
    DetectorId.D2,
    DetectorId.D3,
    DetectorId.D4,
)

#: The fixed optical topology: which (slit, idler detector) routes exist.
#: D1 and D2 sit behind the recombining splitter; D3 and D4 sit on the
#: reflected-only arms, so each is tied to a single slit.
REACHABLE_ROUTES: frozenset[tuple[SlitLabel, DetectorId]] = frozenset(
    {
        (SlitLabel.A, DetectorId.D1),
        (SlitLabel.A, DetectorId.D2),
        (SlitLabel.A, DetectorId.D4),
        (SlitLabel.B, DetectorId.D1),
        (SlitLabel.B, DetectorId.D2),
        (SlitLabel.B, DetectorId.D3),
    }
)


def is_reachable(slit: SlitLabel, detector: DetectorId) -> bool:
    """True if an idler from `slit` can physically arrive at `detector`."""
    return (slit, detector) in REACHABLE_ROUTES


class ConfigError(ValueError):
    """Base class for configuration rejections."""


class NegativeParameter(ConfigError):
    """A physical parameter that must be positive (or non-negative) is not."""


class DelayedChoiceOrderViolated(ConfigError):
    """Idler paths must be strictly longer than the signal path L0."""


class UnreachableDetector(ConfigError):
    """Idler segment map disagrees with the fixed optical topology."""


class UnknownConfigKey(ConfigError):
    """Config source contains a key the schema does not define."""


class ArrivalTimeDelta(NamedTuple):
    """Signal arrival-time difference between slit branches at one x.

    `exact` is the value used throughout the model; `far_field` is the
    small-angle approximation x*d/(L0*c), carried along purely as a
    diagnostic of how far the geometry is from the far-field regime.
    """

    exact: float
    far_field: float


@dataclass(frozen=True)
class ApparatusConfig:
    """Full parameter set of one bench arrangement.

    Use `load_config` / `validate_config` rather than constructing
    directly; geometry helpers below assume a validated instance.
    """

    wavelength: float            # signal wavelength, m
    slit_separation: float       # centre-to-centre slit distance d, m
    L0: float                    # slit plane -> D0 plane distance, m
    LA: float                    # slit A -> splitter network entry, m
    LB: float                    # slit B -> splitter network entry, m
    #: Extra path from the network entry to each reachable detector, m.
    #: Keyed (slit, detector); zero-length segments are allowed.
    idler_segment_lengths: dict[tuple[SlitLabel, DetectorId], float]
    envelope_width: float        # biphoton coherence time tau, s
    detector_jitter: float       # per-detector Gaussian timing jitter, s
    coincidence_window: float    # half-width W of the accept window, s
    pair_rate: float             # mean pair emission rate, Hz
    x_range: tuple[float, float]  # D0 scan range, m
    x_bins: int                  # number of D0 histogram bins (>= 8)
    slit_width: float | None = None   # aperture width for the sinc envelope, m
    open_slits: tuple[SlitLabel, ...] = (SlitLabel.A, SlitLabel.B)
    max_events: int = 50_000_000  # hard cap for one generation call

    @cached_property
    def fringe_period(self) -> float:
        """Far-field fringe period at the D0 plane: wavelength * L0 / d."""
        return self.wavelength * self.L0 / self.slit_separation

    @cached_property
    def x_edges(self) -> np.ndarray:
        lo, hi = self.x_range
        return np.linspace(lo, hi, self.x_bins + 1)

    @cached_property
    def x_centers(self) -> np.ndarray:
        edges = self.x_edges
        return 0.5 * (edges[:-1] + edges[1:])

    def slit_offset(self, slit: SlitLabel) -> float:
        """Transverse centre of a slit: A at +d/2, B at -d/2."""
        half = 0.5 * self.slit_separation
        return half if slit is SlitLabel.A else -half

    def to_json_dict(self) -> dict:
        """Plain-JSON form, inverse of `load_config` on a dict."""
        segments: dict[str, dict[str, float]] = {}
        for (slit, det), extra in sorted(
            self.idler_segment_lengths.items(),
            key=lambda item: (item[0][0].value, item[0][1].value),
        ):
            segments.setdefault(slit.value, {})[det.value] = extra
        out = {
            "wavelength": self.wavelength,
            "slit_separation": self.slit_separation,
            "L0": self.L0,
            "LA": self.LA,
            "LB": self.LB,
            "idler_segment_lengths": segments,
            "envelope_width": self.envelope_width,
            "detector_jitter": self.detector_jitter,
            "coincidence_window": self.coincidence_window,
            "pair_rate": self.pair_rate,
            "x_range": list(self.x_range),
            "x_bins": self.x_bins,
            "max_events": self.max_events,
        }
        if self.slit_width is not None:
            out["slit_width"] = self.slit_width
        if self.open_slits != (SlitLabel.A, SlitLabel.B):
            out["open_slits"] = [slit.value for slit in self.open_slits]
        return out


_SCHEMA_KEYS = {f.name for f in fields(ApparatusConfig)}


def _require_positive(name: str, value: float) -> None:
    if not (isinstance(value, (int, float)) and np.isfinite(value) and value > 0):
        raise NegativeParameter(f"{name} must be a positive finite number, got {value!r}")


def validate_config(config: ApparatusConfig) -> ApparatusConfig:
    """Check every structural invariant; return the config unchanged.

    Raises the most specific `ConfigError` subclass for the first
    violation found.  Geometry helpers assume their input passed here.
    """
    for name in ("wavelength", "slit_separation", "L0", "LA", "LB",
                 "envelope_width", "coincidence_window", "pair_rate"):
        _require_positive(name, getattr(config, name))
    jitter = config.detector_jitter
    if not (isinstance(jitter, (int, float)) and np.isfinite(jitter) and jitter >= 0):
        raise NegativeParameter(f"detector_jitter must be >= 0, got {jitter!r}")
    if config.slit_width is not None:
        _require_positive("slit_width", config.slit_width)
        if config.slit_width >= config.slit_separation:
            raise ConfigError("slit_width must be smaller than slit_separation")

    if not (config.LA > config.L0 and config.LB > config.L0):
        raise DelayedChoiceOrderViolated(
            "idler arms must exceed the signal arm: "
            f"L0={config.L0}, LA={config.LA}, LB={config.LB}"
        )

    seen = set(config.idler_segment_lengths)
    for route in seen:
        if route not in REACHABLE_ROUTES:
            slit, det = route
            raise UnreachableDetector(
                f"segment configured for unreachable route ({slit.value}, {det.value})"
            )
    missing = REACHABLE_ROUTES - seen
    if missing:
        slit, det = sorted(missing, key=lambda r: (r[0].value, r[1].value))[0]
        raise UnreachableDetector(
            f"missing idler segment for reachable route ({slit.value}, {det.value})"
        )
    for route, extra in config.idler_segment_lengths.items():
        if not (isinstance(extra, (int, float)) and np.isfinite(extra) and extra >= 0):
            raise NegativeParameter(
                f"idler segment for {route[0].value}->{route[1].value} must be >= 0"
            )
    # Delayed-choice ordering holds route by route, segments included.
    for (slit, det) in REACHABLE_ROUTES:
        total = idler_path_length(config, slit, det)
        if not total > config.L0:
            raise DelayedChoiceOrderViolated(
                f"idler path {slit.value}->{det.value} ({total} m) not longer than L0"
            )

    lo, hi = config.x_range
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
        raise ConfigError(f"x_range must be an increasing pair, got {config.x_range!r}")
    if not (isinstance(config.x_bins, int) and config.x_bins >= 8):
        raise ConfigError(f"x_bins must be an integer >= 8, got {config.x_bins!r}")
    if not config.open_slits or any(s not in (SlitLabel.A, SlitLabel.B) for s in config.open_slits):
        raise ConfigError(f"open_slits must be a non-empty subset of A/B, got {config.open_slits!r}")
    if len(set(config.open_slits)) != len(config.open_slits):
        raise ConfigError("open_slits contains duplicates")
    if not (isinstance(config.max_events, int) and config.max_events > 0):
        raise NegativeParameter(f"max_events must be a positive integer, got {config.max_events!r}")
    return config


def _segments_from_json(raw: object) -> dict[tuple[SlitLabel, DetectorId], float]:
    if not isinstance(raw, dict):
        raise ConfigError("idler_segment_lengths must be a mapping slit -> {detector: length}")
    out: dict[tuple[SlitLabel, DetectorId], float] = {}
    for slit_name, per_det in raw.items():
        try:
            slit = SlitLabel(slit_name)
        except ValueError:
            raise UnknownConfigKey(f"unknown slit label {slit_name!r} in idler_segment_lengths")
        if not isinstance(per_det, dict):
            raise ConfigError(f"idler_segment_lengths[{slit_name!r}] must be a mapping")
        for det_name, extra in per_det.items():
            try:
                det = DetectorId(det_name)
            except ValueError:
                raise UnknownConfigKey(f"unknown detector {det_name!r} in idler_segment_lengths")
            if det not in IDLER_DETECTORS:
                raise UnreachableDetector(f"{det_name} is not an idler detector")
            out[(slit, det)] = float(extra)
    return out


def config_from_dict(raw: dict) -> ApparatusConfig:
    """Build and validate a config from a plain-JSON dictionary."""
    unknown = set(raw) - _SCHEMA_KEYS
    if unknown:
        raise UnknownConfigKey(f"unknown config keys: {sorted(unknown)}")
    missing = _SCHEMA_KEYS - set(raw) - {"slit_width", "open_slits", "max_events"}
    if missing:
        raise ConfigError(f"missing config keys: {sorted(missing)}")
    kwargs: dict = {}
    for key, value in raw.items():
        if key == "idler_segment_lengths":
            kwargs[key] = _segments_from_json(value)
        elif key == "x_range":
            if not (isinstance(value, (list, tuple)) and len(value) == 2):
                raise ConfigError("x_range must be [lo, hi]")
            kwargs[key] = (float(value[0]), float(value[1]))
        elif key == "open_slits":
            try:
                kwargs[key] = tuple(SlitLabel(s) for s in value)
            except ValueError:
                raise ConfigError(f"open_slits entries must be 'A' or 'B', got {value!r}")
        elif key in ("x_bins", "max_events"):
            kwargs[key] = int(value)
        elif key == "slit_width":
            kwargs[key] = None if value is None else float(value)
        else:
            kwargs[key] = float(value)
    return validate_config(ApparatusConfig(**kwargs))


def load_config(source: str | Path | dict | None = None) -> ApparatusConfig:
    """Load a validated config from a JSON file, a dict, or the packaged defaults."""
    if source is None:
        text = resources.files("dcqe").joinpath("default_config.json").read_text()
        return config_from_dict(json.loads(text))
    if isinstance(source, dict):
        return config_from_dict(source)
    return config_from_dict(json.loads(Path(source).read_text()))


def default_config() -> ApparatusConfig:
    return load_config(None)


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

def signal_path_length(config: ApparatusConfig, slit: SlitLabel, x):
    """Slit-centre to D0-position distance: sqrt(L0^2 + (x - x_slit)^2).

    Accepts a scalar or an array of x positions and returns the same shape.
    """
    offset = config.slit_offset(slit)
    x = np.asarray(x, dtype=float)
    r = np.hypot(config.L0, x - offset)
    return float(r) if r.ndim == 0 else r


def path_length_difference(config: ApparatusConfig, x):
    """Signal path difference r_B(x) - r_A(x), cancellation-free.

    Direct subtraction of the two nearly equal lengths would forfeit ten
    digits; the identity r_B - r_A = (r_B^2 - r_A^2)/(r_B + r_A) =
    2*x*d/(r_A + r_B) keeps full precision at every x.
    """
    r_a = signal_path_length(config, SlitLabel.A, x)
    r_b = signal_path_length(config, SlitLabel.B, x)
    x_arr = np.asarray(x, dtype=float)
    diff = 2.0 * x_arr * config.slit_separation / (np.asarray(r_a) + np.asarray(r_b))
    return float(diff) if diff.ndim == 0 else diff


def arrival_time_delta(config: ApparatusConfig, x) -> ArrivalTimeDelta:
    """Signal arrival-time difference (slit B minus slit A) at position x.

    Positive where the B path is longer, i.e. for x > 0.  The companion
    far-field value x*d/(L0*c) is returned for diagnostics only; the
    exact value feeds the temporal-overlap factor everywhere.
    """
    exact = path_length_difference(config, x) / SPEED_OF_LIGHT
    x_arr = np.asarray(x, dtype=float)
    far = x_arr * config.slit_separation / (config.L0 * SPEED_OF_LIGHT)
    far = float(far) if far.ndim == 0 else far
    return ArrivalTimeDelta(exact=exact, far_field=far)


def idler_path_length(config: ApparatusConfig, slit: SlitLabel, detector: DetectorId) -> float | None:
    """Total slit -> idler-detector length, or None for a route that does not exist."""
    if not is_reachable(slit, detector):
        return None
    base = config.LA if slit is SlitLabel.A else config.LB
    return base + config.idler_segment_lengths[(slit, detector)]


def idler_path_delay(config: ApparatusConfig, slit: SlitLabel, detector: DetectorId) -> float | None:
    """Idler flight time slit -> detector, or None for an unreachable route."""
    length = idler_path_length(config, slit, detector)
    if length is None:
        return None
    return length / SPEED_OF_LIGHT


def reachable_slits(detector: DetectorId) -> tuple[SlitLabel, ...]:
    """Slits with a route into `detector`, in (A, B) order."""
    return tuple(s for s in (SlitLabel.A, SlitLabel.B) if is_reachable(s, detector))


def iter_routes(config: ApparatusConfig) -> Iterator[tuple[SlitLabel, DetectorId]]:
    """All reachable (slit, detector) routes whose slit is open, canonical order."""
    for det in IDLER_DETECTORS:
        for slit in reachable_slits(det):
            if slit in config.open_slits:
                yield (slit, det)
