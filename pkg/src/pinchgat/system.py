"""Physical model of a waveguide-fed pinching-antenna downlink.

A single dielectric waveguide of half-length D runs along the x axis at
height H. Each of the N pinching antennas radiates from a point
psi_n = [x_n, 0, H]; the feed sits at [-D, 0, H]. Users lie on the ground
plane (z = 0). All quantities are SI unless noted.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from typing import NamedTuple

import numpy as np

SPEED_OF_LIGHT = 2.99792458e8  # m/s


class ConfigError(ValueError):
    """Configuration admits no feasible antenna placement."""


def dbm_to_watts(dbm: float) -> float:
    """Convert a power level from dBm to watts."""
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class SystemConfig:
    """All physical and problem constants of one system instance.

    Attributes:
        n_antennas: number of pinching antennas N on the waveguide.
        n_users: number of single-antenna users M.
        half_range: L; user coordinates are drawn from [-L, L] per axis.
        waveguide_half_length: D; antenna x-coordinates lie in [-D, D].
        height: H; waveguide (and antenna) height above the user plane.
        carrier_freq: f_c in Hz.
        refractive_index: effective refractive index of the waveguide.
        noise_power: per-user noise power in watts (shared by all users).
        power_budget: total transmit power budget P_max in watts.
        guard_distance: minimum inter-antenna spacing to avoid coupling.
        static_power: constant circuit power P_C in watts.
        slot_length: TDMA slot length tau (normalized to 1).
    """

    n_antennas: int
    n_users: int
    half_range: float
    waveguide_half_length: float
    height: float
    carrier_freq: float
    refractive_index: float
    noise_power: float
    power_budget: float
    guard_distance: float
    static_power: float
    slot_length: float = 1.0

    def __post_init__(self):
        if self.n_antennas < 1 or self.n_users < 1:
            raise ConfigError("need at least one antenna and one user")
        positive = (
            "half_range", "waveguide_half_length", "height", "carrier_freq",
            "refractive_index", "noise_power", "power_budget", "guard_distance",
            "static_power", "slot_length",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.placement_budget <= 0:
            raise ConfigError(
                "guard_distance too large: 2*D - (N-1)*guard must be positive"
            )

    @property
    def feed_point(self) -> np.ndarray:
        """Waveguide feed coordinate [-D, 0, H]."""
        return np.array([-self.waveguide_half_length, 0.0, self.height])

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def guided_wavelength(self) -> float:
        return SPEED_OF_LIGHT / (self.carrier_freq * self.refractive_index)

    @property
    def path_gain(self) -> float:
        """Free-space gain constant c^2 / (4 pi f_c)^2 in m^2."""
        return (SPEED_OF_LIGHT / (4.0 * math.pi * self.carrier_freq)) ** 2

    @property
    def placement_budget(self) -> float:
        """Total allocatable inter-antenna slack 2D - (N-1)*guard."""
        return (
            2.0 * self.waveguide_half_length
            - (self.n_antennas - 1) * self.guard_distance
        )

    def to_json(self) -> str:
        return json.dumps({f.name: getattr(self, f.name) for f in fields(self)},
                          indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SystemConfig":
        raw = json.loads(text)
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)


class DerivedConstants(NamedTuple):
    wavelength: float
    guided_wavelength: float
    path_gain: float
    placement_budget: float


def derived_constants(cfg: SystemConfig) -> DerivedConstants:
    """Wavelengths, free-space gain constant, and placement budget."""
    budget = cfg.placement_budget
    if budget <= 0:
        raise ConfigError("placement budget is not positive")
    return DerivedConstants(cfg.wavelength, cfg.guided_wavelength,
                            cfg.path_gain, budget)


def default_config(n_antennas: int = 4, n_users: int = 2,
                   half_range: float = 100.0) -> SystemConfig:
    """Standard simulation constants: 6 GHz carrier, 30 dBm budget, -90 dBm
    noise, half-wavelength guard distance, waveguide spanning the user range.
    """
    wavelength = SPEED_OF_LIGHT / 6e9
    return SystemConfig(
        n_antennas=n_antennas,
        n_users=n_users,
        half_range=half_range,
        waveguide_half_length=half_range,
        height=5.0,
        carrier_freq=6e9,
        refractive_index=1.4,
        noise_power=dbm_to_watts(-90.0),
        power_budget=dbm_to_watts(30.0),
        guard_distance=wavelength / 2.0,
        static_power=0.5,
        slot_length=1.0,
    )


@dataclass(frozen=True)
class UserLayout:
    """User positions, one row [x, y, 0] per user."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError("positions must be an (M, 3) array")
        if np.any(pos[:, 2] != 0.0):
            raise ValueError("users must lie on the ground plane z = 0")
        object.__setattr__(self, "positions", pos)

    @classmethod
    def from_xy(cls, xy: np.ndarray) -> "UserLayout":
        xy = np.asarray(xy, dtype=np.float64)
        return cls(np.column_stack([xy[:, 0], xy[:, 1], np.zeros(len(xy))]))

    @property
    def n_users(self) -> int:
        return self.positions.shape[0]

    def check_bounds(self, cfg: SystemConfig) -> bool:
        l = cfg.half_range
        return bool(np.all(np.abs(self.positions[:, :2]) <= l))


@dataclass(frozen=True)
class AntennaPlacement:
    """Antenna x-coordinates; the full position of antenna n is [x_n, 0, H]."""

    x_coords: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x_coords, dtype=np.float64)
        if x.ndim != 1 or x.size < 1:
            raise ValueError("x_coords must be a nonempty 1-D array")
        object.__setattr__(self, "x_coords", x)

    @property
    def n_antennas(self) -> int:
        return self.x_coords.size


@dataclass(frozen=True)
class PowerAllocation:
    """Per-antenna transmit powers in watts."""

    powers: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.powers, dtype=np.float64)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("powers must be a nonempty 1-D array")
        object.__setattr__(self, "powers", p)

    @property
    def total(self) -> float:
        return float(np.sum(self.powers))


@dataclass(frozen=True)
class Solution:
    """A joint placement and power decision."""

    placement: AntennaPlacement
    power: PowerAllocation

    def __post_init__(self):
        if self.placement.n_antennas != self.power.powers.size:
            raise ValueError("placement and power must cover the same antennas")


def antenna_positions(cfg: SystemConfig, placement: AntennaPlacement) -> np.ndarray:
    """Full 3-D antenna coordinates, shape (N, 3)."""
    x = placement.x_coords
    out = np.zeros((x.size, 3))
    out[:, 0] = x
    out[:, 2] = cfg.height
    return out


def in_waveguide_phase(cfg: SystemConfig, x_n) -> np.ndarray | float:
    """Phase accumulated from the feed point to an antenna at x_n.

    Equals 2*pi*(x_n + D) / guided_wavelength; the feed shares y = 0, z = H.
    """
    x = np.asarray(x_n, dtype=np.float64)
    d = cfg.waveguide_half_length
    if np.any(np.abs(x) > d * (1 + 1e-12)):
        raise ValueError("antenna coordinate outside the waveguide")
    phase = 2.0 * math.pi * (x + d) / cfg.guided_wavelength
    return float(phase) if np.isscalar(x_n) else phase


def channel_coefficient(cfg: SystemConfig, u: np.ndarray, x_n: float) -> complex:
    """Free-space channel from the antenna at x_n to a user at u."""
    psi = np.array([x_n, 0.0, cfg.height])
    dist = float(np.linalg.norm(np.asarray(u, dtype=np.float64) - psi))
    amp = math.sqrt(cfg.path_gain) / dist
    phase = 2.0 * math.pi * dist / cfg.wavelength
    return amp * complex(math.cos(phase), -math.sin(phase))


def user_rate(cfg: SystemConfig, u: np.ndarray, sol: Solution) -> float:
    """Achievable rate in bit/s/Hz for one user under TDMA (no interference).

    Combines the free-space phase with the in-waveguide phase of each
    antenna and sums the amplitude-weighted contributions coherently.
    """
    x = sol.placement.x_coords
    p = sol.power.powers
    psi = antenna_positions(cfg, sol.placement)
    dist = np.linalg.norm(np.asarray(u, dtype=np.float64)[None, :] - psi, axis=1)
    amp = np.sqrt(p) * math.sqrt(cfg.path_gain) / dist
    phase = 2.0 * math.pi * dist / cfg.wavelength + in_waveguide_phase(cfg, x)
    signal = np.sum(amp * np.exp(-1j * phase))
    snr = abs(signal) ** 2 / cfg.noise_power
    return float(np.log2(1.0 + snr))


def energy_efficiency(cfg: SystemConfig, layout: UserLayout, sol: Solution) -> float:
    """Sum rate weighted by the slot length, per watt of consumed power."""
    denom = sol.power.total + cfg.static_power
    if denom == 0.0:
        raise ZeroDivisionError("zero transmit power with zero static power")
    rates = sum(user_rate(cfg, u, sol) for u in layout.positions)
    return cfg.slot_length * rates / denom


@dataclass(frozen=True)
class Violation:
    name: str
    magnitude: float


@dataclass(frozen=True)
class FeasibilityReport:
    ok: bool
    violations: tuple[Violation, ...]

    def __bool__(self) -> bool:
        return self.ok


def check_feasible(cfg: SystemConfig, sol: Solution,
                   tol: float = 0.0) -> FeasibilityReport:
    """Report every constraint violation of a solution beyond tol.

    Checks the power budget, power nonnegativity, inter-antenna spacing,
    and the waveguide extent. Boundary-tight solutions pass at tol = 0.
    """
    x = sol.placement.x_coords
    p = sol.power.powers
    violations: list[Violation] = []

    excess = float(np.sum(p)) - cfg.power_budget
    if excess > tol:
        violations.append(Violation("power_budget", excess))
    neg = -float(np.min(p))
    if neg > tol:
        violations.append(Violation("power_nonnegative", neg))
    if x.size >= 2:
        gap_short = cfg.guard_distance - float(np.min(np.diff(x)))
        if gap_short > tol:
            violations.append(Violation("antenna_spacing", gap_short))
    out = float(np.max(np.abs(x))) - cfg.waveguide_half_length
    if out > tol:
        violations.append(Violation("waveguide_extent", out))

    return FeasibilityReport(ok=not violations, violations=tuple(violations))
