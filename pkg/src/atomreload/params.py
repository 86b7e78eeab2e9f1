"""Scenario configuration: defaults, JSON ingestion and validation.

Every physical quantity carries its unit in the field name. Each nested
section is a frozen dataclass, so a validated ``SimConfig`` can be shared
freely between concurrent runs.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any


class ConfigError(ValueError):
    """Malformed configuration document (bad JSON, unknown key, wrong type)."""


class ValidationError(ValueError):
    """Configuration parsed but violates a physical invariant."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__("; ".join(str(v) for v in report.violations))


@dataclass(frozen=True)
class PhaseTimings:
    """Fixed per-cycle phase durations in ms.

    ``settle_ms`` is inferred (not read off the timing diagram) so that the
    typical image-to-image time comes out near 300 ms.
    """

    mot_load_ms: float = 80.0
    transport_ms: float = 100.0
    tweezer_ramp_ms: float = 2.0
    galvo_translate_ms: float = 10.0
    settle_ms: float = 19.0
    handoff_ms: float = 1.0
    doppler_ms: float = 2.0
    rsc_total_ms: float = 8.0
    rearrange_fixed_overhead_ms: float = 75.0


@dataclass(frozen=True)
class ImagingParams:
    signal_mean: float = 50.0
    background_mean: float = 5.0
    # sqrt(2) excess noise on Poisson(50)
    signal_width: float = 10.0
    # calibrated: balanced-threshold overlap infidelity of 5e-4
    background_width: float = 3.6755
    threshold: float = 17.0944
    duration_ms: float = 7.0
    loss_per_image: float = 2e-3
    vacuum_fraction_of_loss: float = 0.3
    spin_flip_probability: float = 4e-3
    mode: str = "occupancy"


@dataclass(frozen=True)
class ThermalParams:
    doppler_floor_temperature_uK: float = 10.0
    rsc_floor_nbar_xy: float = 0.08
    rsc_floor_nbar_z: float = 0.12
    rsc_iterations: int = 20
    # fraction of the excess above the floor removed per RSC iteration
    rsc_efficiency: float = 0.6
    heating_time_constant_ms: float = 190.0
    post_image_temperature_uK: float = 20.0
    trap_freq_xy_kHz: float = 160.0
    trap_freq_z_kHz: float = 50.0


@dataclass(frozen=True)
class LossParams:
    handoff_loss_459: float = 0.0006
    handoff_loss_423: float = 0.0015
    handoff_depth_threshold: float = 0.75
    # thermal spill-over allowed at the threshold depth: the plateau's own uncertainty
    handoff_onset_loss: float = 0.0001
    misaligned_handoff_loss_max: float = 0.02
    proximity_distance_um: float = 1.6
    rearr_depth_nominal_uK: float = 150.0
    target_depth_nominal_uK: float = 50.0
    rearr_depth_fraction: float = 1.0
    target_depth_fraction: float = 1.0
    reservoir_depth_uK: float = 250.0
    # 783.8 nm / sqrt(2): site period of the self-crossed XY standing wave
    lattice_period_um: float = 0.5542
    # typical drift of the target arrays between hourly realignments
    alignment_drift_um: float = 0.10
    # escape barrier during lattice->tweezer transfer, as a fraction of the
    # nominal tweezer depth; see losses.calibrate_handoff_barrier
    handoff_barrier_fraction: float = 0.863545
    pickup_depth_scale: float = 0.35
    pickup_exponent: float = 4.0
    disturbance_coefficient: float = 0.06
    magic_sensitivity_per_nm: float = 0.007


@dataclass(frozen=True)
class PlannerParams:
    policy: str = "optimal"
    speed_um_per_ms: float = 75.0
    pickup_ramp_ms: float = 1.0
    release_ramp_ms: float = 1.0


@dataclass(frozen=True)
class OpticsParams:
    polarizability_MHz_per_mW_um2: float = 0.79
    polarizability_ratio: float = 1.4
    tweezer_waist_um: float = 0.7
    tweezer_count: int = 1225
    impedance_match: float = 0.96
    xy_fsr_MHz: float = 890.38
    xy_linewidth_kHz: float = 307.0
    xy_waist_um: float = 268.0
    xy_interference_factor: float = 16.0
    z_fsr_MHz: float = 1345.13
    z_linewidth_kHz: float = 448.0
    z_waist_um: float = 183.0
    z_interference_factor: float = 4.0
    z_crossing_angle_deg: float = 15.0
    array_side_um: float = 115.0


@dataclass(frozen=True)
class SimConfig:
    reservoir_sites: int = 105
    reservoir_columns: int = 3
    target_rows: int = 35
    target_cols: int = 35
    target_spacing_um: float = 3.3
    reservoir_offset_um: float = 3.3
    lac_fill_probability: float = 0.5
    mot_load_rate_per_s: float = 1.5e6
    # atoms that must arrive to saturate the reservoir: 1.5e6/s * 80 ms * 0.7
    reservoir_saturation_atoms: float = 84000.0
    transport_survival: float = 0.7
    vacuum_lifetime_s: float = 30.0
    rng_seed: int = 0
    timings: PhaseTimings = field(default_factory=PhaseTimings)
    imaging: ImagingParams = field(default_factory=ImagingParams)
    thermal: ThermalParams = field(default_factory=ThermalParams)
    losses: LossParams = field(default_factory=LossParams)
    planner: PlannerParams = field(default_factory=PlannerParams)
    optics: OpticsParams = field(default_factory=OpticsParams)

    @property
    def target_sites(self) -> int:
        return self.target_rows * self.target_cols

    @property
    def mot_saturation_time_ms(self) -> float:
        """MOT time needed to saturate the reservoir at the configured rate."""
        return 1e3 * self.reservoir_saturation_atoms / (
            self.mot_load_rate_per_s * self.transport_survival)

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)


def default_paper_config() -> SimConfig:
    return SimConfig()


# ---------------------------------------------------------------- validation

@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def __str__(self):
        return f"{self.path}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    def __bool__(self):
        # truthy when there is something to report
        return bool(self.violations)

    def __len__(self):
        return len(self.violations)

    @property
    def ok(self) -> bool:
        return not self.violations


_PROBABILITIES = {
    "lac_fill_probability", "transport_survival",
    "imaging.loss_per_image", "imaging.vacuum_fraction_of_loss",
    "imaging.spin_flip_probability",
    "losses.handoff_loss_459", "losses.handoff_loss_423",
    "losses.misaligned_handoff_loss_max", "losses.handoff_onset_loss",
    "thermal.rsc_efficiency",
}
_NONNEGATIVE = {
    "timings.*", "losses.rearr_depth_fraction", "losses.target_depth_fraction",
    "losses.alignment_drift_um", "losses.disturbance_coefficient",
    "losses.magic_sensitivity_per_nm", "rng_seed", "imaging.background_mean",
}
_CHOICES = {
    "imaging.mode": ("occupancy", "spin_selective"),
    "planner.policy": ("optimal", "greedy"),
}


def _flatten(obj, prefix=""):
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        path = f"{prefix}{f.name}"
        if dataclasses.is_dataclass(value):
            yield from _flatten(value, path + ".")
        else:
            yield path, value


_INTEGERS = {path for path, value in _flatten(SimConfig()) if isinstance(value, int)}


def validate(config: SimConfig) -> ValidationReport:
    """Check every invariant; the report is empty iff the config is runnable."""
    out = []
    for path, value in _flatten(config):
        section = path.split(".")[0]
        if path in _CHOICES:
            if value not in _CHOICES[path]:
                out.append(Violation(path, f"must be one of {_CHOICES[path]}, got {value!r}"))
            continue
        if path == "vacuum_lifetime_s" and value == math.inf:
            continue  # no background-gas loss at all
        if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
            out.append(Violation(path, f"must be a finite number, got {value!r}"))
            continue
        if path in _PROBABILITIES:
            if not 0.0 <= value <= 1.0:
                out.append(Violation(path, f"probability must lie in [0, 1], got {value}"))
        elif path in _NONNEGATIVE or f"{section}.*" in _NONNEGATIVE:
            if value < 0:
                out.append(Violation(path, f"must be >= 0, got {value}"))
        elif value <= 0:
            out.append(Violation(path, f"must be > 0, got {value}"))

    th = config.thermal
    for name in ("rsc_floor_nbar_xy", "rsc_floor_nbar_z"):
        if getattr(th, name) >= 1:
            out.append(Violation(f"thermal.{name}", "RSC floor must be below one quantum"))
    if not 0 < config.losses.handoff_depth_threshold <= 1:
        out.append(Violation("losses.handoff_depth_threshold", "must lie in (0, 1]"))
    if not 0 < config.optics.z_crossing_angle_deg < 90:
        out.append(Violation("optics.z_crossing_angle_deg", "must lie in (0, 90)"))
    if not 0 < config.optics.impedance_match <= 1:
        out.append(Violation("optics.impedance_match", "must lie in (0, 1]"))
    im = config.imaging
    if im.signal_mean <= im.background_mean:
        out.append(Violation("imaging.signal_mean", "must exceed imaging.background_mean"))
    for path, value in _flatten(config):
        if path in _INTEGERS and isinstance(value, float) and not value.is_integer():
            out.append(Violation(path, "must be an integer"))
    return ValidationReport(tuple(out))


# ------------------------------------------------------------- serialization

def config_to_dict(config: SimConfig) -> dict[str, Any]:
    return dataclasses.asdict(config)


def dumps_config(config: SimConfig) -> str:
    """Canonical JSON text (sorted keys) used for files and hashing."""
    return json.dumps(config_to_dict(config), sort_keys=True, indent=2) + "\n"


def config_hash(config: SimConfig) -> str:
    canonical = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _build(cls, data: dict, prefix: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix.rstrip('.') or '<root>'}: expected an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        path = f"{prefix}{key}"
        if key not in known:
            raise ConfigError(f"{path}: unknown key")
        default = known[key].default
        if known[key].default_factory is not dataclasses.MISSING:
            default = known[key].default_factory()
        if dataclasses.is_dataclass(default):
            kwargs[key] = _build(type(default), value, path + ".")
            continue
        if isinstance(default, str):
            if not isinstance(value, str):
                raise ConfigError(f"{path}: expected a string")
        elif isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        elif isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ConfigError(f"{path}: expected an integer, got {value!r}")
            value = int(value)
        else:
            value = float(value)
        kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> SimConfig:
    config = _build(SimConfig, data, "")
    report = validate(config)
    if report:
        raise ValidationError(report)
    return config


def load_config(text: str) -> SimConfig:
    """Parse a JSON scenario; omitted keys take their defaults."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from None
    return config_from_dict(data)


def override(config: SimConfig, dotted_key: str, value) -> SimConfig:
    """Return a validated copy with one (possibly nested) key replaced."""
    data = config_to_dict(config)
    node = data
    parts = dotted_key.split(".")
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            raise ConfigError(f"{dotted_key}: unknown key")
        node = node[part]
    if parts[-1] not in node:
        raise ConfigError(f"{dotted_key}: unknown key")
    node[parts[-1]] = value
    return config_from_dict(data)
