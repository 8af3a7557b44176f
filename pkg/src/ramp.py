"""Time-dependent splitting ramps.

A ramp is a list of strictly increasing times, each carrying an RF setting
and optionally a potential snapshot already sampled on the solver grid.
Between nodes both are interpolated linearly; outside they are clamped.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from src.errors import ConfigurationError

if TYPE_CHECKING:
    from src.dressed_potential import RfSetting, SplittingCurve

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RampSchedule:
    times: tuple[float, ...]
    settings: tuple[RfSetting, ...] = ()
    snapshots: tuple[np.ndarray, ...] = field(default=(), repr=False)

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "settings", tuple(self.settings))
        object.__setattr__(self, "snapshots", tuple(np.asarray(s, dtype=float) for s in self.snapshots))
        if not times:
            raise ConfigurationError("Ramp needs at least one time node")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigurationError("Ramp times must be strictly increasing")
        for name, seq in (("settings", self.settings), ("snapshots", self.snapshots)):
            if seq and len(seq) != len(times):
                raise ConfigurationError(f"Ramp has {len(times)} times but {len(seq)} {name}")
        if self.snapshots and len({s.shape for s in self.snapshots}) != 1:
            raise ConfigurationError("Ramp snapshots must share one grid")

    @property
    def start(self) -> float:
        return self.times[0]

    @property
    def end(self) -> float:
        return self.times[-1]

    @property
    def duration(self) -> float:
        return self.end - self.start

    def _bracket(self, t: float) -> tuple[int, int, float]:
        times = self.times
        if t <= times[0]:
            return 0, 0, 0.0
        if t >= times[-1]:
            n = len(times) - 1
            return n, n, 0.0
        hi = int(np.searchsorted(times, t, side="right"))
        lo = hi - 1
        return lo, hi, (t - times[lo]) / (times[hi] - times[lo])

    def setting_at(self, t: float) -> RfSetting:
        from src.dressed_potential import RfSetting

        if not self.settings:
            raise ConfigurationError("Ramp carries no RF settings")
        lo, hi, w = self._bracket(t)
        a, b = self.settings[lo], self.settings[hi]
        return RfSetting(
            frequency=(1 - w) * a.frequency + w * b.frequency,
            amplitude=(1 - w) * a.amplitude + w * b.amplitude,
        )

    def snapshot_at(self, t: float) -> np.ndarray:
        if not self.snapshots:
            raise ConfigurationError("Ramp carries no potential snapshots")
        lo, hi, w = self._bracket(t)
        if w == 0.0:
            return self.snapshots[lo]
        return (1 - w) * self.snapshots[lo] + w * self.snapshots[hi]

    def with_snapshots(self, snapshots) -> RampSchedule:
        return RampSchedule(times=self.times, settings=self.settings, snapshots=tuple(snapshots))

    def until(self, t: float) -> RampSchedule:
        """The ramp cut off at ``t``, ending on an interpolated node."""
        if t <= self.start:
            raise ConfigurationError(f"Cannot cut the ramp at {t} s, before its start")
        if t >= self.end:
            return self
        keep = [k for k, s in enumerate(self.times) if s < t]
        settings = tuple(self.settings[k] for k in keep) + (self.setting_at(t),) if self.settings else ()
        snapshots = tuple(self.snapshots[k] for k in keep) + (self.snapshot_at(t),) if self.snapshots else ()
        return RampSchedule(times=tuple(self.times[k] for k in keep) + (t,), settings=settings, snapshots=snapshots)

    def is_monotone(self) -> bool:
        """True when amplitude and frequency each never change direction."""
        if len(self.settings) < 2:
            return True
        for values in (
            np.array([s.amplitude for s in self.settings]),
            np.array([s.frequency for s in self.settings]),
        ):
            steps = np.diff(values)
            if np.any(steps > 0) and np.any(steps < 0):
                return False
        return True


def linear_ramp(start: RfSetting, end: RfSetting, duration: float, points: int) -> RampSchedule:
    """Evenly spaced nodes from ``start`` to ``end``."""
    from src.dressed_potential import RfSetting

    if points < 1:
        raise ConfigurationError(f"Ramp needs at least one point, got {points}")
    if points == 1:
        return RampSchedule(times=(0.0,), settings=(start,))
    if not duration > 0:
        raise ConfigurationError(f"Ramp duration must be > 0, got {duration}")
    fractions = np.linspace(0.0, 1.0, points)
    settings = tuple(
        RfSetting(
            frequency=start.frequency + f * (end.frequency - start.frequency),
            amplitude=start.amplitude + f * (end.amplitude - start.amplitude),
        )
        for f in fractions
    )
    return RampSchedule(times=tuple(fractions * duration), settings=settings)


def ramp_for_speed(curve: SplittingCurve, speed: float, onset_time: float) -> RampSchedule:
    """Ramp whose well separation grows linearly at ``speed`` once split.

    The single-well part of ``curve`` (d = 0) is traversed linearly in
    ``onset_time``; after that node times follow t = onset + (d - d_first)/speed.
    """
    if not speed > 0:
        raise ConfigurationError(f"Splitting speed must be > 0, got {speed}")
    settings = [rf for rf, _ in curve.points]
    seps = np.array([g.separation for _, g in curve.points])
    split = np.flatnonzero(seps > 0)
    if split.size == 0:
        raise ConfigurationError("Splitting curve never splits; cannot build a speed ramp")
    first = int(split[0])

    times: list[float] = []
    nodes = []
    for k in range(first):
        times.append(onset_time * k / max(first, 1))
        nodes.append(settings[k])
    last_d = -np.inf
    for k in range(first, len(settings)):
        if seps[k] <= last_d:
            logger.debug("Dropping non-increasing separation node %d (d=%.3e m)", k, seps[k])
            continue
        times.append(onset_time + (seps[k] - seps[first]) / speed)
        nodes.append(settings[k])
        last_d = seps[k]
    return RampSchedule(times=tuple(times), settings=tuple(nodes))
