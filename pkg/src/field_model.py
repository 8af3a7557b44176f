"""Magnetostatics of chip wires.

Each wire is an infinitely long, zero-thickness strip along the trap axis (z)
lying in a plane of constant y. Fields are evaluated in the transverse (x, y)
plane with closed-form Biot-Savart integrals. SI units throughout.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy import constants

from src.errors import ConfigurationError, DomainError

logger = logging.getLogger(__name__)

MU0 = constants.mu_0
_ON_PLANE = 1e-12


@dataclass(frozen=True)
class Vec3:
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.x, self.y, self.z)):
            raise ConfigurationError(f"Non-finite vector component: {self}")

    def __add__(self, other: Vec3) -> Vec3:
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: Vec3) -> Vec3:
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __neg__(self) -> Vec3:
        return Vec3(-self.x, -self.y, -self.z)

    def scaled(self, factor: float) -> Vec3:
        return Vec3(self.x * factor, self.y * factor, self.z * factor)

    def dot(self, other: Vec3) -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @classmethod
    def from_array(cls, values) -> Vec3:
        x, y, z = (float(v) for v in values)
        return cls(x, y, z)


ZERO = Vec3()


class WireKind(str, Enum):
    DC = "dc"
    RF = "rf"


@dataclass(frozen=True)
class StripWire:
    """Strip centred at (x, y), current flowing along +z.

    For RF wires ``current`` is the amplitude of the oscillating current and
    its sign sets the relative drive phase (0 or π) between RF wires.
    """

    x: float
    y: float
    width: float
    current: float
    kind: WireKind = WireKind.DC
    frequency: float = 0.0  # rad/s, RF only

    def __post_init__(self):
        if not self.width > 0:
            raise ConfigurationError(f"Wire width must be > 0, got {self.width}")
        if not math.isfinite(self.current):
            raise ConfigurationError(f"Wire current must be finite, got {self.current}")
        if self.kind is WireKind.RF and not self.frequency > 0:
            raise ConfigurationError(f"RF wire frequency must be > 0, got {self.frequency}")

    @property
    def edges(self) -> tuple[float, float]:
        half = 0.5 * self.width
        return self.x - half, self.x + half


@dataclass(frozen=True)
class ChipLayout:
    wires: tuple[StripWire, ...] = ()
    bias: Vec3 = ZERO
    ioffe: float = 1e-4  # T, along z
    gravity: bool = False
    gravity_direction: Vec3 = field(default_factory=lambda: Vec3(0.0, -1.0, 0.0))

    def __post_init__(self):
        object.__setattr__(self, "wires", tuple(self.wires))
        if not self.ioffe > 0:
            raise ConfigurationError(f"Ioffe field must be > 0, got {self.ioffe}")
        if self.gravity and self.gravity_direction.norm() == 0:
            raise ConfigurationError("Gravity direction must be a nonzero vector")

    @property
    def dc_wires(self) -> tuple[StripWire, ...]:
        return tuple(w for w in self.wires if w.kind is WireKind.DC)

    @property
    def rf_wires(self) -> tuple[StripWire, ...]:
        return tuple(w for w in self.wires if w.kind is WireKind.RF)

    def with_rf(self, amplitude: float, frequency: float) -> ChipLayout:
        """Drive every RF wire at ``amplitude`` (sign of its nominal current kept)."""
        wires = tuple(
            replace(w, current=math.copysign(amplitude, w.current) if w.current else amplitude, frequency=frequency)
            if w.kind is WireKind.RF else w
            for w in self.wires
        )
        return replace(self, wires=wires)

    def with_dc_scale(self, factor: float) -> ChipLayout:
        wires = tuple(replace(w, current=w.current * factor) if w.kind is WireKind.DC else w for w in self.wires)
        return replace(self, wires=wires)

    def shifted_dc(self, dx: float) -> ChipLayout:
        """Displace every d.c. wire along x, keeping bias fixed."""
        wires = tuple(replace(w, x=w.x + dx) if w.kind is WireKind.DC else w for w in self.wires)
        return replace(self, wires=wires)


# ── Closed-form strip fields ────────────────────────────────────────────────


def strip_field_xy(wire: StripWire, x, y) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (Bx, By) of one strip at points (x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    a, b = wire.edges
    dy = y - wire.y
    on_strip = (np.abs(dy) < _ON_PLANE) & (x >= a) & (x <= b)
    if np.any(on_strip):
        raise DomainError(f"Field evaluated on the conductor of wire at x={wire.x:.3e} m, y={wire.y:.3e} m")
    if wire.current == 0:
        return np.zeros(np.broadcast(x, y).shape), np.zeros(np.broadcast(x, y).shape)
    k = MU0 * wire.current / wire.width
    bx = -k / (2 * np.pi) * (np.arctan2(dy, x - b) - np.arctan2(dy, x - a))
    by = k / (4 * np.pi) * np.log(((x - a) ** 2 + dy**2) / ((x - b) ** 2 + dy**2))
    return bx, by


def strip_field(wire: StripWire, point: Vec3) -> Vec3:
    bx, by = strip_field_xy(wire, point.x, point.y)
    return Vec3(float(bx), float(by), 0.0)


def _sum_fields(wires, x, y) -> tuple[np.ndarray, np.ndarray]:
    shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
    bx = np.zeros(shape)
    by = np.zeros(shape)
    for wire in wires:
        wx, wy = strip_field_xy(wire, x, y)
        bx = bx + wx
        by = by + wy
    return bx, by


def static_field_xy(layout: ChipLayout, x, y) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    bx, by = _sum_fields(layout.dc_wires, x, y)
    bz = np.full(bx.shape, layout.bias.z + layout.ioffe)
    return bx + layout.bias.x, by + layout.bias.y, bz


def static_field(layout: ChipLayout, point: Vec3) -> Vec3:
    bx, by, bz = static_field_xy(layout, point.x, point.y)
    return Vec3(float(bx), float(by), float(bz))


def rf_field_xy(layout: ChipLayout, x, y) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if not layout.rf_wires:
        raise ConfigurationError("Layout has no RF wire")
    bx, by = _sum_fields(layout.rf_wires, x, y)
    return bx, by, np.zeros(bx.shape)


def rf_field_vector(layout: ChipLayout, point: Vec3) -> Vec3:
    bx, by, bz = rf_field_xy(layout, point.x, point.y)
    return Vec3(float(bx), float(by), float(bz))


# ── Trap design helpers ─────────────────────────────────────────────────────


def bias_for_trap(layout: ChipLayout, point: Vec3) -> Vec3:
    """Uniform transverse bias cancelling the d.c. wire field at ``point``."""
    bx, by = _sum_fields(layout.dc_wires, point.x, point.y)
    return Vec3(-float(bx), -float(by), 0.0)


def gradient_at(layout: ChipLayout, point: Vec3, step: float = 1e-8) -> float:
    """Transverse field gradient (T/m) of the quadrupole at ``point``."""
    xs = np.array([point.x + step, point.x - step, point.x, point.x])
    ys = np.array([point.y, point.y, point.y + step, point.y - step])
    bx, by = _sum_fields(layout.dc_wires, xs, ys)
    jac = np.array([
        [(bx[0] - bx[1]) / (2 * step), (bx[2] - bx[3]) / (2 * step)],
        [(by[0] - by[1]) / (2 * step), (by[2] - by[3]) / (2 * step)],
    ])
    return float(np.linalg.norm(jac) / math.sqrt(2.0))


def current_for_gradient(layout: ChipLayout, point: Vec3, target: float) -> ChipLayout:
    """Rescale d.c. currents so the trap at ``point`` has gradient ``target``.

    The bias is recomputed so the trap stays at ``point``.
    """
    current = gradient_at(layout, point)
    if current == 0:
        raise ConfigurationError("Layout has no d.c. gradient to rescale")
    scaled = layout.with_dc_scale(target / current)
    scaled = replace(scaled, bias=Vec3(0.0, 0.0, layout.bias.z) + bias_for_trap(scaled, point))
    logger.debug("Gradient %.3f T/m -> %.3f T/m (scale %.4f)", current, target, target / current)
    return scaled


def field_grid_rows(layout: ChipLayout, xs, ys) -> list[tuple[float, float, float, float, float]]:
    """(x, y, Bx, By, Bz) rows of the static field for CSV export."""
    gx, gy = np.meshgrid(np.asarray(xs, float), np.asarray(ys, float), indexing="ij")
    bx, by, bz = static_field_xy(layout, gx, gy)
    return [
        (float(a), float(b), float(c), float(d), float(e))
        for a, b, c, d, e in zip(gx.ravel(), gy.ravel(), bx.ravel(), by.ravel(), bz.ravel())
    ]
