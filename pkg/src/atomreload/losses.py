"""Per-mechanism loss models, the lattice alignment scan and the per-cycle loss budget.

Probabilities are per atom. A "handoff pair" is one tweezer->lattice transfer
followed by one lattice->tweezer transfer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import optimize

from .thermal import ThermalState, apply_cooling, apply_heating


class ScanFitError(RuntimeError):
    """Survival modulation is not resolved above the shot noise."""


@dataclass(frozen=True)
class AlignmentState:
    offset_x: float = 0.0
    offset_y: float = 0.0
    lattice_period: float = 0.5542

    def __post_init__(self):
        if self.lattice_period <= 0:
            raise ValueError("lattice period must be > 0")


def vacuum_survival(dwell_ms: float, lifetime_s: float) -> float:
    if dwell_ms < 0 or lifetime_s <= 0:
        raise ValueError("need dwell >= 0 and lifetime > 0")
    if math.isinf(lifetime_s):
        return 1.0
    return math.exp(-dwell_ms / (1e3 * lifetime_s))


def misalignment_fraction(alignment: AlignmentState) -> float:
    """Raised-cosine misalignment: 0 when centred on a lattice site, 1 halfway between."""
    p = alignment.lattice_period
    cx = math.cos(math.pi * alignment.offset_x / p)
    cy = math.cos(math.pi * alignment.offset_y / p)
    return 1.0 - (cx * cy) ** 2


def thermal_retention(barrier_uK: float, temperature_uK: float) -> float:
    """P(E < U) for a 3D harmonic Boltzmann distribution (truncated Boltzmann)."""
    if barrier_uK <= 0:
        return 0.0
    if temperature_uK <= 0:
        return 1.0
    eta = barrier_uK / temperature_uK
    return -math.expm1(-eta) - math.exp(-eta) * (eta + 0.5 * eta * eta)


def plateau_loss(wavelength: int, params) -> float:
    if wavelength == 459:
        return params.handoff_loss_459
    if wavelength == 423:
        return params.handoff_loss_423
    raise ValueError(f"unknown tweezer wavelength {wavelength}")


def handoff_legs(depth_fraction: float, wavelength: int, state: ThermalState,
                 alignment: AlignmentState, params) -> tuple[float, float]:
    """Survival of the (tweezer->lattice, lattice->tweezer) legs of one handoff pair.

    The plateau loss is split evenly between legs. Excess loss from
    misalignment is charged to the transfer into the lattice, thermal
    spill-over of a shallow trap to the transfer back into the tweezer.
    """
    if depth_fraction < 0:
        raise ValueError("depth fraction must be >= 0")
    base = math.sqrt(1.0 - plateau_loss(wavelength, params))
    excess = (params.misaligned_handoff_loss_max - plateau_loss(wavelength, params))
    mis = max(excess, 0.0) * misalignment_fraction(alignment)
    to_lattice = base * (1.0 - mis)
    barrier = params.handoff_barrier_fraction * params.target_depth_nominal_uK * depth_fraction
    to_tweezer = base * thermal_retention(barrier, state.mean_temperature)
    return to_lattice, to_tweezer


def handoff_survival(depth_fraction: float, wavelength: int, state: ThermalState,
                     alignment: AlignmentState, params) -> float:
    a, b = handoff_legs(depth_fraction, wavelength, state, alignment, params)
    return a * b


def calibrate_handoff_barrier(thermal_params, loss_params) -> float:
    """Barrier fraction at which thermal spill-over at the depth threshold equals the onset loss.

    Above the threshold the handoff loss then stays within the plateau's
    uncertainty; below it thermal loss quickly dominates.
    """
    T = ThermalState.rsc_floor(thermal_params).mean_temperature
    target = loss_params.handoff_onset_loss
    eta = optimize.brentq(lambda e: (1.0 - thermal_retention(e, 1.0)) - target, 1e-3, 200.0,
                          xtol=1e-12)
    return eta * T / (loss_params.target_depth_nominal_uK * loss_params.handoff_depth_threshold)


def rearrangement_tweezer_response(depth_fraction: float, params) -> tuple[float, float]:
    """(pickup success, disturbance probability per close pass) at a given depth.

    Shallow tweezers fail to pick atoms up; deep ones kick atoms out of
    neighbouring target sites as they pass.
    """
    if depth_fraction < 0:
        raise ValueError("depth fraction must be >= 0")
    pickup = -math.expm1(-(depth_fraction / params.pickup_depth_scale) ** params.pickup_exponent)
    disturb = min(1.0, params.disturbance_coefficient * max(0.0, depth_fraction - 1.0) ** 2)
    return pickup, disturb


# ------------------------------------------------------------- alignment scan

class ScanResult(NamedTuple):
    offsets_um: np.ndarray
    survival: np.ndarray
    optimum_um: float
    amplitude: float
    amplitude_stderr: float
    period_um: float


def harmonic_fit(x, y, period):
    """Least-squares y = a + b cos(kx) + c sin(kx); returns coefficients and covariance."""
    k = 2 * math.pi / period
    A = np.column_stack([np.ones_like(x), np.cos(k * x), np.sin(k * x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    dof = max(len(x) - 3, 1)
    resid = y - A @ coef
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(A.T @ A)
    return coef, cov


def alignment_scan(offsets_um, n_handoffs: int, rng: np.random.Generator, config,
                   true_optimum_um: float = 0.0, n_atoms: int = 1225,
                   wavelength: int = 459) -> ScanResult:
    """Simulate survival after ``n_handoffs`` pairs at each offset and fit the optimum."""
    x = np.asarray(offsets_um, dtype=float)
    period = config.losses.lattice_period_um
    if x.size < 4 or x.max() - x.min() < period:
        raise ValueError("offsets must span at least one lattice period")
    state = ThermalState.rsc_floor(config.thermal)
    surv = np.empty_like(x)
    for i, dx in enumerate(x):
        al = AlignmentState(dx - true_optimum_um, 0.0, period)
        p = handoff_survival(1.0, wavelength, state, al, config.losses) ** n_handoffs
        surv[i] = rng.binomial(n_atoms, p) / n_atoms
    coef, cov = harmonic_fit(x, surv, period)
    amp = math.hypot(coef[1], coef[2])
    # delta-method error of the amplitude
    g = np.array([0.0, coef[1], coef[2]]) / max(amp, 1e-300)
    amp_se = math.sqrt(max(float(g @ cov @ g), 0.0))
    if amp <= 3 * amp_se:
        raise ScanFitError(f"modulation amplitude {amp:.3g} not resolved (stderr {amp_se:.3g})")
    phase = math.atan2(coef[2], coef[1])
    opt = phase * period / (2 * math.pi)
    # report the maximum nearest the centre of the scan
    centre = 0.5 * (x.min() + x.max())
    opt += period * round((centre - opt) / period)
    return ScanResult(x, surv, float(opt), amp, amp_se, period)


# ---------------------------------------------------------------- budget

class BudgetRow(NamedTuple):
    mechanism: str
    probability: float
    dominant: bool


def budget_report(config) -> list[BudgetRow]:
    """Expected per-cycle loss probability of a target atom, by mechanism."""
    from .protocol import expected_cycle_timing

    lp, im = config.losses, config.imaging
    timing = expected_cycle_timing(config)
    lifetime = config.vacuum_lifetime_s
    vac = 1.0 - vacuum_survival(timing.vacuum_exposed_ms, lifetime)
    rows = {
        "vacuum": vac,
        "imaging_vacuum": im.loss_per_image * im.vacuum_fraction_of_loss,
        "imaging_raman": im.loss_per_image * (1.0 - im.vacuum_fraction_of_loss),
    }
    handoff = handoff_loss_per_target_atom(config)
    rows["handoff"] = handoff
    _, disturb = rearrangement_tweezer_response(lp.rearr_depth_fraction, lp)
    rows["disturbance"] = disturb * timing.close_passes_per_atom
    # a false-empty call puts a second atom on the site and both are lost
    fp, fn = _imaging_error_rates(im)
    rows["collision"] = fn
    if im.mode == "spin_selective":
        rows["spin_flip"] = im.spin_flip_probability
    top = max(rows, key=rows.get)
    return [BudgetRow(k, float(v), k == top) for k, v in rows.items()]


def _imaging_error_rates(im):
    from .imaging import error_rates
    return error_rates(im)


def target_handoff_state(thermal_params) -> ThermalState:
    """Thermal state at the lattice->tweezer transfer of a regular cycle."""
    s = ThermalState.at_temperature(thermal_params.post_image_temperature_uK,
                                    thermal_params.trap_freq_xy_kHz, thermal_params.trap_freq_z_kHz)
    s = apply_cooling(s, "doppler", thermal_params)
    s = apply_cooling(s, "rsc", thermal_params)
    return s


def handoff_loss_per_target_atom(config, handoff_ms: float | None = None) -> float:
    """Mean handoff-pair loss over the two wavelength zones of the target array."""
    lp = config.losses
    dwell = config.timings.handoff_ms if handoff_ms is None else handoff_ms
    state = apply_heating(target_handoff_state(config.thermal), dwell,
                          config.thermal.heating_time_constant_ms)
    al = AlignmentState(lp.alignment_drift_um, 0.0, lp.lattice_period_um)
    cols = config.target_cols
    n459 = (cols + 1) // 2
    s459 = handoff_survival(lp.target_depth_fraction, 459, state, al, lp)
    s423 = handoff_survival(lp.target_depth_fraction, 423, state, al, lp)
    return 1.0 - (n459 * s459 + (cols - n459) * s423) / cols


def budget_rows_text(rows) -> str:
    w = max(len(r.mechanism) for r in rows)
    lines = [f"{'mechanism':<{w}}  probability"]
    for r in rows:
        lines.append(f"{r.mechanism:<{w}}  {r.probability:.6f}{'  <- dominant' if r.dominant else ''}")
    lines.append(f"{'total':<{w}}  {sum(r.probability for r in rows):.6f}")
    return "\n".join(lines) + "\n"
