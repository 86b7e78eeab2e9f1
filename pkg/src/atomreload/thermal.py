"""Motional occupation bookkeeping: Doppler floor, sideband cooling, lattice heating.

Everything is a rate-equation / mean-occupation model. Temperatures are in
uK, trap frequencies in kHz, times in ms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

# h / k_B in uK per kHz
UK_PER_KHZ = 0.04799243073

AXES = ("x", "y", "z")


def nbar_from_temperature(temperature_uK: float, freq_kHz: float) -> float:
    """Bose-Einstein mean occupation of a harmonic mode."""
    if temperature_uK < 0 or freq_kHz <= 0:
        raise ValueError("need T >= 0 and f > 0")
    if temperature_uK == 0:
        return 0.0
    x = UK_PER_KHZ * freq_kHz / temperature_uK
    if x > 700.0:
        return math.exp(-x)  # deep quantum limit; expm1 would overflow
    return 1.0 / math.expm1(x)


def temperature_from_nbar(nbar: float, freq_kHz: float) -> float:
    if nbar < 0 or freq_kHz <= 0:
        raise ValueError("need nbar >= 0 and f > 0")
    if nbar == 0:
        return 0.0
    return UK_PER_KHZ * freq_kHz / math.log1p(1.0 / nbar)


def sideband_asymmetry(nbar: float) -> float:
    """Red/blue sideband amplitude ratio for a thermal state."""
    if nbar < 0:
        raise ValueError("nbar must be >= 0")
    return nbar / (nbar + 1.0)


def nbar_from_sideband_asymmetry(ratio: float) -> float:
    if not 0 <= ratio < 1:
        raise ValueError("sideband ratio must lie in [0, 1)")
    return ratio / (1.0 - ratio)


@dataclass(frozen=True)
class ThermalState:
    nbar_x: float
    nbar_y: float
    nbar_z: float
    trap_freq_x: float = 160.0
    trap_freq_y: float = 160.0
    trap_freq_z: float = 50.0

    def __post_init__(self):
        for ax in AXES:
            if getattr(self, f"nbar_{ax}") < 0:
                raise ValueError("nbar must be >= 0")
            if getattr(self, f"trap_freq_{ax}") <= 0:
                raise ValueError("trap frequencies must be > 0")

    @classmethod
    def at_temperature(cls, temperature_uK, freq_xy_kHz=160.0, freq_z_kHz=50.0):
        return cls(nbar_from_temperature(temperature_uK, freq_xy_kHz),
                   nbar_from_temperature(temperature_uK, freq_xy_kHz),
                   nbar_from_temperature(temperature_uK, freq_z_kHz),
                   freq_xy_kHz, freq_xy_kHz, freq_z_kHz)

    @classmethod
    def rsc_floor(cls, params):
        return cls(params.rsc_floor_nbar_xy, params.rsc_floor_nbar_xy, params.rsc_floor_nbar_z,
                   params.trap_freq_xy_kHz, params.trap_freq_xy_kHz, params.trap_freq_z_kHz)

    def temperatures(self) -> tuple[float, float, float]:
        return tuple(temperature_from_nbar(getattr(self, f"nbar_{ax}"),
                                           getattr(self, f"trap_freq_{ax}")) for ax in AXES)

    @property
    def mean_temperature(self) -> float:
        return sum(self.temperatures()) / 3.0


def apply_cooling(state: ThermalState, stage: str, params) -> ThermalState:
    """Doppler: clamp to the Doppler-limited occupation. RSC: relax toward the floors."""
    if stage == "doppler":
        T = params.doppler_floor_temperature_uK
        return replace(state, **{
            f"nbar_{ax}": min(getattr(state, f"nbar_{ax}"),
                              nbar_from_temperature(T, getattr(state, f"trap_freq_{ax}")))
            for ax in AXES})
    if stage == "rsc":
        keep = (1.0 - params.rsc_efficiency) ** params.rsc_iterations
        floors = {"x": params.rsc_floor_nbar_xy, "y": params.rsc_floor_nbar_xy,
                  "z": params.rsc_floor_nbar_z}
        new = {}
        for ax in AXES:
            n = getattr(state, f"nbar_{ax}")
            # never heats an atom that is already below the floor
            new[f"nbar_{ax}"] = n if n <= floors[ax] else floors[ax] + (n - floors[ax]) * keep
        return replace(state, **new)
    raise ValueError(f"unknown cooling stage {stage!r}")


def apply_heating(state: ThermalState, dwell_ms: float, tau_heat_ms: float) -> ThermalState:
    """Exponential (parametric) growth of nbar, same time constant on every axis."""
    if dwell_ms < 0:
        raise ValueError("dwell must be >= 0")
    g = math.exp(dwell_ms / tau_heat_ms)
    return replace(state, **{f"nbar_{ax}": getattr(state, f"nbar_{ax}") * g for ax in AXES})
