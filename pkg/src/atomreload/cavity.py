"""Cavity-enhanced lattice and tweezer optics.

Units: frequencies in MHz (FSR) and kHz (linewidth), lengths in um, powers
in mW, polarizability in MHz per (mW/um^2). Trap depths per unit power come
out in MHz/mW.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

# k_B / h, MHz per uK. The only place depth units are converted.
MHZ_PER_UK = 0.020836619


def uK_to_MHz(depth_uK):
    return depth_uK * MHZ_PER_UK


def MHz_to_uK(depth_MHz):
    return depth_MHz / MHZ_PER_UK


def _positive(**values):
    for name, v in values.items():
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")


def finesse_from_linewidth(fsr_MHz: float, linewidth_kHz: float) -> float:
    _positive(fsr_MHz=fsr_MHz, linewidth_kHz=linewidth_kHz)
    return fsr_MHz * 1e3 / linewidth_kHz


def photon_lifetime_ns(linewidth_kHz: float) -> float:
    """Intracavity photon lifetime 1/(2 pi linewidth)."""
    _positive(linewidth_kHz=linewidth_kHz)
    return 1e9 / (2 * math.pi * linewidth_kHz * 1e3)


@dataclass(frozen=True)
class CavitySpec:
    """One buildup cavity.

    ``impedance_match`` may be given directly or derived from mirror
    transmissions with :meth:`from_mirrors`; when the mirror fields are
    present they must reproduce it.
    """

    finesse: float
    fsr_MHz: float
    linewidth_kHz: float
    waist_um: float
    interference_factor: float
    impedance_match: float
    input_transmission: float | None = None
    total_transmission: float | None = None
    total_loss: float | None = None
    finesse_tolerance: float = 0.05

    def __post_init__(self):
        _positive(finesse=self.finesse, waist_um=self.waist_um,
                  interference_factor=self.interference_factor)
        if not 0 < self.impedance_match <= 1:
            raise ValueError(f"impedance match must lie in (0, 1], got {self.impedance_match}")
        mirrors = (self.input_transmission, self.total_transmission, self.total_loss)
        if all(m is not None for m in mirrors):
            eps = self.input_transmission / (self.total_loss + self.total_transmission)
            if not math.isclose(eps, self.impedance_match, rel_tol=1e-9):
                raise ValueError("impedance_match inconsistent with mirror transmissions")
        implied = finesse_from_linewidth(self.fsr_MHz, self.linewidth_kHz)
        if abs(implied - self.finesse) > self.finesse_tolerance * self.finesse:
            raise ValueError(
                f"finesse {self.finesse} inconsistent with FSR/linewidth = {implied:.1f}")

    @classmethod
    def from_linewidth(cls, fsr_MHz, linewidth_kHz, waist_um, interference_factor,
                       impedance_match):
        return cls(finesse_from_linewidth(fsr_MHz, linewidth_kHz), fsr_MHz, linewidth_kHz,
                   waist_um, interference_factor, impedance_match)

    @classmethod
    def from_mirrors(cls, fsr_MHz, linewidth_kHz, waist_um, interference_factor,
                     input_transmission, total_transmission, total_loss):
        eps = input_transmission / (total_loss + total_transmission)
        return cls(finesse_from_linewidth(fsr_MHz, linewidth_kHz), fsr_MHz, linewidth_kHz,
                   waist_um, interference_factor, eps, input_transmission,
                   total_transmission, total_loss)


@dataclass(frozen=True)
class OpticalParams:
    polarizability: float  # MHz per (mW/um^2)
    tweezer_waist_um: float
    tweezer_count: int
    laser_power_mW: float = 1.0

    def __post_init__(self):
        _positive(polarizability=self.polarizability, tweezer_waist_um=self.tweezer_waist_um)
        if self.tweezer_count < 1:
            raise ValueError("tweezer_count must be >= 1")


def buildup_factor(spec: CavitySpec) -> float:
    return 2 * spec.finesse * spec.impedance_match / math.pi


def lattice_depth_per_power(spec: CavitySpec, polarizability: float) -> float:
    """Depth of the deepest lattice sites per mW delivered to the cavity."""
    _positive(polarizability=polarizability)
    return (2 * polarizability * buildup_factor(spec) * spec.interference_factor
            / (math.pi * spec.waist_um ** 2))


def tweezer_depth_per_power(params: OpticalParams) -> float:
    """Per-trap depth per mW of total power split over N Gaussian tweezers."""
    return 2 * params.polarizability / (
        math.pi * params.tweezer_waist_um ** 2 * params.tweezer_count)


def power_advantage(lattice: float, tweezer: float) -> float:
    _positive(lattice=lattice, tweezer=tweezer)
    return lattice / tweezer


def cavities_from_optics(optics) -> tuple[CavitySpec, CavitySpec]:
    """(XY, Z) cavities built from an ``OpticsParams`` section."""
    xy = CavitySpec.from_linewidth(optics.xy_fsr_MHz, optics.xy_linewidth_kHz,
                                   optics.xy_waist_um, optics.xy_interference_factor,
                                   optics.impedance_match)
    z = CavitySpec.from_linewidth(optics.z_fsr_MHz, optics.z_linewidth_kHz,
                                  optics.z_waist_um, optics.z_interference_factor,
                                  optics.impedance_match)
    return xy, z


def optics_table(optics) -> list[tuple[str, float, str]]:
    """Derived optics quantities as (name, value, unit) rows."""
    xy, z = cavities_from_optics(optics)
    tw = OpticalParams(optics.polarizability_MHz_per_mW_um2, optics.tweezer_waist_um,
                       optics.tweezer_count)
    ul_xy = lattice_depth_per_power(xy, optics.polarizability_MHz_per_mW_um2)
    ul_z = lattice_depth_per_power(z, optics.polarizability_MHz_per_mW_um2)
    ut = tweezer_depth_per_power(tw)
    return [
        ("xy_finesse", xy.finesse, ""),
        ("z_finesse", z.finesse, ""),
        ("xy_photon_lifetime", photon_lifetime_ns(xy.linewidth_kHz), "ns"),
        ("z_photon_lifetime", photon_lifetime_ns(z.linewidth_kHz), "ns"),
        ("xy_buildup_factor", buildup_factor(xy), ""),
        ("z_buildup_factor", buildup_factor(z), ""),
        ("xy_lattice_depth_per_power", ul_xy, "MHz/mW"),
        ("z_lattice_depth_per_power", ul_z, "MHz/mW"),
        ("tweezer_depth_per_power", ut, "MHz/mW"),
        ("xy_power_advantage", power_advantage(ul_xy, ut), ""),
        ("z_power_advantage", power_advantage(ul_z, ut), ""),
    ]


# ---------------------------------------------------------------- homogeneity

@dataclass(frozen=True)
class LatticeGeometry:
    xy_waist_um: float
    z_waist_um: float
    z_crossing_angle_deg: float
    array_halfwidth_um: float
    site_spacing_um: float

    def __post_init__(self):
        _positive(xy_waist_um=self.xy_waist_um, z_waist_um=self.z_waist_um,
                  site_spacing_um=self.site_spacing_um)
        if not 0 < self.z_crossing_angle_deg < 90:
            raise ValueError("z crossing angle must lie in (0, 90) degrees")


@dataclass
class HomogeneityMap:
    """Relative lattice depth per site (1 at the mode centre) for each cavity."""

    x_um: np.ndarray
    y_um: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    xy: np.ndarray
    z: np.ndarray
    flags: list[str] = field(default_factory=list)

    def profile(self, cavity: str) -> np.ndarray:
        return {"xy": self.xy, "z": self.z}[cavity]

    def row_means(self, cavity: str) -> np.ndarray:
        v = self.profile(cavity)
        return np.array([v[self.rows == r].mean() for r in np.unique(self.rows)])

    def col_means(self, cavity: str) -> np.ndarray:
        v = self.profile(cavity)
        return np.array([v[self.cols == c].mean() for c in np.unique(self.cols)])

    def peak_deviation(self, cavity: str) -> float:
        return float(1.0 - self.profile(cavity).min())


def xy_relative_depth(x, y, waist):
    # product of the field envelopes of the two crossing passes (along x and along y)
    return np.exp(-(np.square(x) + np.square(y)) / waist ** 2)


def z_relative_depth(x, y, waist, crossing_angle_deg):
    # Both Z passes travel in the x-z plane at +/- angle to the array plane.
    # A site at (x, y, 0) sits y**2 + (x sin a)**2 from either beam axis; the
    # interference depth goes as the product of the two field envelopes.
    s = math.sin(math.radians(crossing_angle_deg))
    r2 = np.square(y) + np.square(x * s)
    return np.exp(-2 * r2 / waist ** 2)


def square_positions(side_um: float, spacing_um: float) -> np.ndarray:
    """Site positions (centred) of a square array spanning ``side_um``."""
    n = int(round(side_um / spacing_um)) + 1
    coords = (np.arange(n) - (n - 1) / 2) * (side_um / (n - 1))
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def homogeneity_map(geom: LatticeGeometry, positions) -> HomogeneityMap:
    """Per-site relative depth of both lattices, modes centred on the array.

    ``positions`` is an (N, 2) array in um; it is recentred on its bounding box.
    """
    pos = np.asarray(positions, dtype=float)
    centre = (pos.min(axis=0) + pos.max(axis=0)) / 2
    x = pos[:, 0] - centre[0]
    y = pos[:, 1] - centre[1]
    a = geom.site_spacing_um
    cols = np.round((pos[:, 0] - pos[:, 0].min()) / a).astype(int)
    rows = np.round((pos[:, 1] - pos[:, 1].min()) / a).astype(int)
    xy = xy_relative_depth(x, y, geom.xy_waist_um)
    z = z_relative_depth(x, y, geom.z_waist_um, geom.z_crossing_angle_deg)
    flags = []
    halfwidth = max(np.abs(x).max(), np.abs(y).max(), geom.array_halfwidth_um)
    if halfwidth >= min(geom.xy_waist_um, geom.z_waist_um):
        flags.append("array half-width reaches the mode waist")
    if min(xy.min(), z.min()) < 0.5:
        flags.append("relative depth below 0.5 somewhere on the array")
    for f in flags:
        warnings.warn(f, stacklevel=2)
    return HomogeneityMap(x, y, rows, cols, xy, z, flags)


def light_shift_map(hmap: HomogeneityMap, peak_depth_uK: float, polarizability_ratio: float,
                    cavity: str = "xy") -> np.ndarray:
    """Differential light shift (MHz) of a transition across the array.

    The shift is (ratio - 1) times the local ground-state depth.
    """
    if not polarizability_ratio > 0:
        raise ValueError("polarizability ratio must be positive")
    local = peak_depth_uK * hmap.profile(cavity)
    return (polarizability_ratio - 1.0) * uK_to_MHz(local)


def geometry_from_optics(optics, spacing_um: float) -> LatticeGeometry:
    return LatticeGeometry(optics.xy_waist_um, optics.z_waist_um, optics.z_crossing_angle_deg,
                           optics.array_side_um / 2, spacing_um)
