"""Exception hierarchy shared by all modules.

ValidationError subclasses map to CLI exit code 1, NumericalError
subclasses to exit code 2.
"""

from __future__ import annotations


class SimulationError(Exception):
    """Base class for every error raised by the toolkit."""


class ValidationError(SimulationError):
    """Input or configuration is invalid."""


class ConfigurationError(ValidationError):
    """Chip layout, scenario file or unit string cannot be used."""


class NumericalError(SimulationError):
    """A computation could not produce a trustworthy result."""


class DomainError(NumericalError):
    """Field evaluated on a conductor."""


class DegenerateFieldError(NumericalError):
    """Static field vanishes; the adiabatic approximation has no quantization axis."""


class GridTooSmallError(NumericalError):
    """Extremum sits on the grid boundary or the grid does not cover the request."""


class ConvergenceError(NumericalError):
    def __init__(self, message: str, *, last_energy: float, iterations: int):
        super().__init__(f"{message} (iterations={iterations}, last_energy={last_energy:.6e})")
        self.last_energy = last_energy
        self.iterations = iterations


class StepSizeError(NumericalError):
    """Time step does not resolve the potential or kinetic energy scale."""


class AliasingError(NumericalError):
    """Wavefunction reached the edge of the periodic window."""


class TwoModeRegimeError(NumericalError):
    """Potential has no double-well structure to map onto two modes."""


class NoFringeError(NumericalError):
    """Profile spectrum has no significant fringe peak."""


class FitError(NumericalError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class CalibrationError(NumericalError):
    """A calibration target cannot be reached with the given parameters."""
