"""RF-dressed adiabatic potentials and double-well geometry.

V_eff = m_F · sqrt((μ_B g_F |B_dc| − ħω_RF)² + (μ_B g_F B_RF⊥ / 2)²),
optionally plus a uniform gravitational term. Maps are sampled on (x, y)
grids; ``locate_wells`` turns a map into minima, separation, barrier,
trap frequencies and imbalance.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import constants, ndimage
from scipy.interpolate import CubicSpline, RectBivariateSpline

from src.config import WELL_PROMINENCE_FRACTION
from src.errors import ConfigurationError, DegenerateFieldError, GridTooSmallError
from src.field_model import ChipLayout, Vec3, rf_field_xy, static_field_xy
from src.ramp import RampSchedule

logger = logging.getLogger(__name__)

MU_B = constants.physical_constants["Bohr magneton"][0]
HBAR = constants.hbar


@dataclass(frozen=True)
class AtomSpecies:
    name: str
    mass: float
    m_f: float
    g_f: float
    scattering_length: float

    def __post_init__(self):
        if not self.mass > 0:
            raise ConfigurationError(f"Species mass must be > 0, got {self.mass}")
        if not self.m_f * self.g_f > 0:
            raise ConfigurationError(f"{self.name}: m_F·g_F must be > 0 (low-field seeker)")
        if self.scattering_length < 0:
            raise ConfigurationError(f"{self.name}: scattering length must be >= 0")


RB87 = AtomSpecies(
    name="Rb87",
    mass=86.909180527 * constants.atomic_mass,
    m_f=2.0,
    g_f=0.5,
    scattering_length=5.24e-9,
)

SPECIES = {RB87.name: RB87}


@dataclass(frozen=True)
class RfSetting:
    frequency: float  # rad/s
    amplitude: float  # A

    def __post_init__(self):
        if not self.frequency > 0:
            raise ConfigurationError(f"RF frequency must be > 0, got {self.frequency}")
        if not self.amplitude >= 0:
            raise ConfigurationError(f"RF amplitude must be >= 0, got {self.amplitude}")


@dataclass(frozen=True)
class GridSpec:
    center_x: float
    center_y: float
    half_width_x: float
    half_width_y: float
    nx: int
    ny: int = 1

    def __post_init__(self):
        if self.nx < 3:
            raise ConfigurationError(f"Grid needs nx >= 3, got {self.nx}")
        if self.ny != 1 and self.ny < 4:
            raise ConfigurationError(f"Grid needs ny == 1 or ny >= 4, got {self.ny}")
        if not self.half_width_x > 0 or (self.ny > 1 and not self.half_width_y > 0):
            raise ConfigurationError("Grid half-widths must be > 0")

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        xs = self.center_x + np.linspace(-self.half_width_x, self.half_width_x, self.nx)
        if self.ny == 1:
            return xs, np.array([self.center_y])
        ys = self.center_y + np.linspace(-self.half_width_y, self.half_width_y, self.ny)
        return xs, ys


@dataclass(frozen=True)
class PotentialMap:
    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray  # shape (len(xs), len(ys)), joules
    species: AtomSpecies | None = None
    rf: RfSetting | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.xs), len(self.ys)):
            raise ConfigurationError(f"Map shape {values.shape} does not match axes")
        if not np.all(np.isfinite(values)):
            raise ConfigurationError("Potential map contains non-finite samples")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_profile(cls, xs, values, species: AtomSpecies | None = None, y: float = 0.0) -> PotentialMap:
        """1D map along x (a single row at ``y``)."""
        return cls(xs=np.asarray(xs, float), ys=np.array([y]), values=np.asarray(values, float)[:, None], species=species)

    @property
    def is_1d(self) -> bool:
        return len(self.ys) == 1

    @property
    def spacing(self) -> tuple[float, float]:
        hx = float(self.xs[1] - self.xs[0])
        hy = 0.0 if self.is_1d else float(self.ys[1] - self.ys[0])
        return hx, hy

    def line_cut(self, origin: tuple[float, float], direction: tuple[float, float], s) -> np.ndarray:
        """Potential along origin + s·direction (direction normalized here)."""
        s = np.asarray(s, dtype=float)
        ux, uy = direction
        norm = math.hypot(ux, uy)
        if norm == 0:
            raise ConfigurationError("Cut direction must be nonzero")
        ux, uy = ux / norm, uy / norm
        px = origin[0] + s * ux
        py = origin[1] + s * uy
        tol = 1e-9 * (self.xs[-1] - self.xs[0])
        if px.min() < self.xs[0] - tol or px.max() > self.xs[-1] + tol:
            raise GridTooSmallError(
                f"Cut spans x ∈ [{px.min():.3e}, {px.max():.3e}] m beyond map [{self.xs[0]:.3e}, {self.xs[-1]:.3e}] m"
            )
        if self.is_1d:
            if abs(uy) > 1e-12:
                raise ConfigurationError("A 1D map can only be cut along x")
            return CubicSpline(self.xs, self.values[:, 0])(px)
        if py.min() < self.ys[0] - tol or py.max() > self.ys[-1] + tol:
            raise GridTooSmallError("Cut leaves the map along y")
        spline = RectBivariateSpline(self.xs, self.ys, self.values, kx=3, ky=3)
        return spline.ev(px, py)

    def csv_rows(self) -> list[tuple[float, float, float]]:
        gx, gy = np.meshgrid(self.xs, self.ys, indexing="ij")
        return [(float(a), float(b), float(c)) for a, b, c in zip(gx.ravel(), gy.ravel(), self.values.ravel())]


@dataclass(frozen=True)
class DoubleWellGeometry:
    """Minima are ordered left → right along the splitting axis."""

    minima: tuple[tuple[float, float], ...]
    minimum_values: tuple[float, ...]
    separation: float
    barrier: float
    omega_x: tuple[float, ...]
    omega_y: tuple[float, ...]
    imbalance: float
    saddle: tuple[float, float] | None = None
    saddle_value: float | None = None

    @property
    def is_split(self) -> bool:
        return self.separation > 0

    @property
    def midpoint(self) -> tuple[float, float]:
        xs = [m[0] for m in self.minima]
        ys = [m[1] for m in self.minima]
        return sum(xs) / len(xs), sum(ys) / len(ys)

    @property
    def axis(self) -> tuple[float, float]:
        """Unit vector from the left to the right minimum (x̂ when unsplit)."""
        if not self.is_split:
            return 1.0, 0.0
        (x1, y1), (x2, y2) = self.minima
        return (x2 - x1) / self.separation, (y2 - y1) / self.separation

    @property
    def lowest(self) -> float:
        return min(self.minimum_values)


@dataclass(frozen=True)
class SplittingCurve:
    points: tuple[tuple[RfSetting, DoubleWellGeometry], ...]
    monotone: bool

    @property
    def separations(self) -> np.ndarray:
        return np.array([g.separation for _, g in self.points])


# ── Dressed potential ──────────────────────────────────────────────────────


def perpendicular_rf(b_dc: Vec3, b_rf: Vec3) -> float:
    norm = b_dc.norm()
    if norm == 0:
        raise DegenerateFieldError("Static field is zero; no quantization axis")
    unit = b_dc.scaled(1.0 / norm)
    return (b_rf - unit.scaled(b_rf.dot(unit))).norm()


def larmor_frequency(species: AtomSpecies, b: float) -> float:
    """Larmor frequency in Hz for a field magnitude ``b`` (T)."""
    return MU_B * species.g_f * b / constants.h


def potential_xy(layout: ChipLayout, species: AtomSpecies, rf: RfSetting, x, y) -> np.ndarray:
    """Vectorized dressed potential (J) at points (x, y)."""
    driven = layout.with_rf(rf.amplitude, rf.frequency)
    bx, by, bz = static_field_xy(driven, x, y)
    b2 = bx * bx + by * by + bz * bz
    if np.any(b2 == 0):
        raise DegenerateFieldError("Static field vanishes inside the evaluation region")
    rx, ry, rz = rf_field_xy(driven, x, y)
    proj = (rx * bx + ry * by + rz * bz) / b2
    perp = np.sqrt((rx - proj * bx) ** 2 + (ry - proj * by) ** 2 + (rz - proj * bz) ** 2)
    mu = MU_B * species.g_f
    detuning = mu * np.sqrt(b2) - HBAR * rf.frequency
    v = species.m_f * np.sqrt(detuning**2 + (0.5 * mu * perp) ** 2)
    if layout.gravity:
        g_hat = layout.gravity_direction.scaled(1.0 / layout.gravity_direction.norm())
        v = v - species.mass * constants.g * (g_hat.x * np.asarray(x) + g_hat.y * np.asarray(y))
    return v


def effective_potential(layout: ChipLayout, species: AtomSpecies, rf: RfSetting, point: Vec3) -> float:
    return float(potential_xy(layout, species, rf, point.x, point.y))


def map_potential(layout: ChipLayout, species: AtomSpecies, rf: RfSetting, grid: GridSpec) -> PotentialMap:
    xs, ys = grid.axes()
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    values = potential_xy(layout, species, rf, gx, gy)
    return PotentialMap(xs=xs, ys=ys, values=values, species=species, rf=rf)


# ── Well location ──────────────────────────────────────────────────────────


def _parabola(fm: float, f0: float, fp: float) -> tuple[float, float]:
    """Vertex offset (in grid steps) and value of the 3-point parabola."""
    curv = fm - 2.0 * f0 + fp
    if curv == 0:
        return 0.0, f0
    return 0.5 * (fm - fp) / curv, f0 - (fp - fm) ** 2 / (8.0 * curv)


def _refine_minimum(pmap: PotentialMap, i: int, j: int) -> tuple[float, float, float, float, float]:
    v = pmap.values
    hx, hy = pmap.spacing
    mass = pmap.species.mass if pmap.species else 1.0

    off_x, val_x = _parabola(v[i - 1, j], v[i, j], v[i + 1, j])
    curv_x = (v[i - 1, j] - 2 * v[i, j] + v[i + 1, j]) / hx**2
    x = pmap.xs[i] + off_x * hx
    value = val_x
    wx = math.sqrt(curv_x / mass) if curv_x > 0 else 0.0

    y, wy = float(pmap.ys[j]), 0.0
    if not pmap.is_1d:
        off_y, val_y = _parabola(v[i, j - 1], v[i, j], v[i, j + 1])
        curv_y = (v[i, j - 1] - 2 * v[i, j] + v[i, j + 1]) / hy**2
        y = pmap.ys[j] + off_y * hy
        value += val_y - v[i, j]
        wy = math.sqrt(curv_y / mass) if curv_y > 0 else 0.0
    return float(x), float(y), float(value), wx, wy


def _valley_floor(pmap: PotentialMap, axis: int, k: int) -> float:
    """Lowest value across the map at index ``k`` of the splitting axis."""
    v = pmap.values
    line = v[k, :] if axis == 0 else v[:, k]
    if line.size == 1:
        return float(line[0])
    m = int(np.argmin(line))
    if 0 < m < line.size - 1:
        return _parabola(line[m - 1], line[m], line[m + 1])[1]
    return float(line[m])


def _saddle(pmap: PotentialMap, a: tuple[int, int], b: tuple[int, int], axis: int) -> tuple[tuple[float, float], float]:
    lo, hi = sorted((a[axis], b[axis]))
    floor = np.array([_valley_floor(pmap, axis, k) for k in range(lo, hi + 1)])
    m = int(np.argmax(floor))
    value, offset = float(floor[m]), 0.0
    if 0 < m < floor.size - 1:
        offset, value = _parabola(floor[m - 1], floor[m], floor[m + 1])
    hx, hy = pmap.spacing
    k = lo + m
    if axis == 0:
        other = float(pmap.ys[int(np.argmin(pmap.values[k, :]))])
        return (float(pmap.xs[k] + offset * hx), other), value
    other = float(pmap.xs[int(np.argmin(pmap.values[:, k]))])
    return (other, float(pmap.ys[k] + offset * hy)), value


_EIGHT = np.ones((3, 3), dtype=bool)


def _prominent(v: np.ndarray, candidates: list[tuple[float, int, int]], threshold: float) -> list[tuple[float, int, int]]:
    """Drop minima that join a deeper minimum below ``threshold`` above them."""
    kept = candidates[:1]
    for k, (value, i, j) in enumerate(candidates[1:], start=1):
        labels, _ = ndimage.label(v <= value + threshold, structure=_EIGHT)
        basin = labels[i, j]
        if any(labels[di, dj] == basin for _, di, dj in candidates[:k]):
            continue
        kept.append((value, i, j))
    return kept


def locate_wells(pmap: PotentialMap, min_prominence: float | None = None) -> DoubleWellGeometry:
    """Minima, separation, barrier, trap frequencies and imbalance of a map.

    Local minima rising less than ``min_prominence`` (J) before reaching a
    deeper minimum are discarded; the default is WELL_PROMINENCE_FRACTION of
    the map's value range.
    """
    v = pmap.values
    nx, ny = v.shape
    local = v == ndimage.minimum_filter(v, size=3, mode="nearest")
    labels, count = ndimage.label(local, structure=_EIGHT)

    candidates: list[tuple[float, int, int]] = []
    for lab in range(1, count + 1):
        idx = np.argwhere(labels == lab)
        best = idx[int(np.argmin(v[idx[:, 0], idx[:, 1]]))]
        candidates.append((float(v[best[0], best[1]]), int(best[0]), int(best[1])))
    if not candidates:
        raise GridTooSmallError("No minimum on the grid")

    candidates.sort()
    if min_prominence is None:
        min_prominence = WELL_PROMINENCE_FRACTION * float(v.max() - v.min())
    if len(candidates) > 1 and min_prominence > 0:
        found = len(candidates)
        candidates = _prominent(v, candidates, min_prominence)
        if found != len(candidates):
            logger.debug("Discarded %d shallow local minima", found - len(candidates))

    for _, i, j in candidates:
        if i in (0, nx - 1) or (ny > 1 and j in (0, ny - 1)):
            raise GridTooSmallError(
                f"Potential minimum on the grid boundary at x={pmap.xs[i]:.3e} m, y={pmap.ys[j]:.3e} m"
            )
    if len(candidates) > 2:
        logger.debug("Found %d local minima; keeping the two deepest", len(candidates))
    wells = candidates[:2]

    if len(wells) == 1:
        _, i, j = wells[0]
        x, y, value, wx, wy = _refine_minimum(pmap, i, j)
        return DoubleWellGeometry(
            minima=((x, y),), minimum_values=(value,), separation=0.0, barrier=0.0,
            omega_x=(wx,), omega_y=(wy,), imbalance=0.0,
        )

    (_, i1, j1), (_, i2, j2) = wells
    axis = 0 if abs(i2 - i1) >= abs(j2 - j1) else 1
    ordered = sorted([(i1, j1), (i2, j2)], key=lambda ij: ij[axis])
    refined = [_refine_minimum(pmap, i, j) for i, j in ordered]
    (xl, yl, vl, wxl, wyl), (xr, yr, vr, wxr, wyr) = refined
    saddle, saddle_value = _saddle(pmap, ordered[0], ordered[1], axis)
    lowest = min(vl, vr)
    return DoubleWellGeometry(
        minima=((xl, yl), (xr, yr)),
        minimum_values=(vl, vr),
        separation=math.hypot(xr - xl, yr - yl),
        barrier=max(0.0, saddle_value - lowest),
        omega_x=(wxl, wxr),
        omega_y=(wyl, wyr),
        imbalance=vr - vl,
        saddle=saddle,
        saddle_value=saddle_value,
    )


# ── Splitting curves ───────────────────────────────────────────────────────


def splitting_curve(
    layout: ChipLayout,
    species: AtomSpecies,
    ramp: RampSchedule,
    grid: GridSpec,
    workers: int = 1,
    min_prominence: float | None = None,
) -> SplittingCurve:
    """Double-well geometry at every RF node of ``ramp``."""
    if not ramp.settings:
        raise ConfigurationError("Splitting curve needs a ramp with RF settings")
    if not ramp.is_monotone():
        raise ConfigurationError("Ramp RF parameters must be monotone")

    def one(rf: RfSetting) -> tuple[RfSetting, DoubleWellGeometry]:
        return rf, locate_wells(map_potential(layout, species, rf, grid), min_prominence)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        points = tuple(pool.map(one, ramp.settings))

    seps = np.array([g.separation for _, g in points])
    first, last = ramp.settings[0], ramp.settings[-1]
    if last.amplitude != first.amplitude:
        increasing = last.amplitude > first.amplitude
    else:
        increasing = last.frequency >= first.frequency
    steps = np.diff(seps) if increasing else -np.diff(seps)
    tol = 1e-3 * grid.half_width_x * 2 / (grid.nx - 1)
    monotone = bool(np.all(steps >= -tol))
    if not monotone:
        logger.warning("Splitting curve is not monotone (largest step back %.3e m)", -steps.min())
    logger.info(
        "Splitting curve: %d points, d from %.2f to %.2f um",
        len(points), seps[0] * 1e6, seps[-1] * 1e6,
    )
    return SplittingCurve(points=points, monotone=monotone)
