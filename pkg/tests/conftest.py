"""Shared chip layouts and species for the potential and solver tests."""

import pytest

from src.dressed_potential import RB87
from src.field_model import ChipLayout, StripWire, Vec3, WireKind, bias_for_trap
from src.units import angular

UM = 1e-6
TRAP = Vec3(0.0, 80 * UM, 0.0)


def _with_auto_bias(wires, ioffe=1e-4) -> ChipLayout:
    layout = ChipLayout(wires=tuple(wires), ioffe=ioffe)
    return ChipLayout(wires=layout.wires, bias=bias_for_trap(layout, TRAP), ioffe=ioffe)


def build_nominal_layout() -> ChipLayout:
    """d.c. wire beside the trap, RF wire directly underneath."""
    return _with_auto_bias([
        StripWire(x=-80 * UM, y=0.0, width=50 * UM, current=1.0),
        StripWire(x=0.0, y=0.0, width=10 * UM, current=0.06, kind=WireKind.RF, frequency=angular(500e3)),
    ])


def build_symmetric_layout() -> ChipLayout:
    """d.c. wire underneath, two antiphase RF wires mirrored about x = 0."""
    return _with_auto_bias([
        StripWire(x=0.0, y=0.0, width=50 * UM, current=1.0),
        StripWire(x=-40 * UM, y=0.0, width=10 * UM, current=0.08, kind=WireKind.RF, frequency=angular(500e3)),
        StripWire(x=40 * UM, y=0.0, width=10 * UM, current=-0.08, kind=WireKind.RF, frequency=angular(500e3)),
    ])


@pytest.fixture
def nominal_layout():
    return build_nominal_layout()


@pytest.fixture
def symmetric_layout():
    return build_symmetric_layout()


@pytest.fixture
def rb87():
    return RB87
