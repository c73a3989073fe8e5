"""Canonical units, physical constants, and the photon-count trace container.

Unit conventions used throughout the package:

* rates and angular frequencies: rad/ns, displayed as "2 pi x f MHz"
  (a rate quoted as f MHz corresponds to 2*pi*f*1e-3 rad/ns)
* time: ns
* energy: meV
* temperature: K
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi

# value quoted as "f MHz" -> rad/ns
_MHZ_TO_RAD_NS = TWO_PI * 1e-3


class NvphononError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(NvphononError):
    """A value violates a physical or structural precondition."""


@dataclass(frozen=True)
class Constants:
    """Physical constants in canonical units.

    hbar is in meV ns, kb in meV/K. alpha is the dimensionless integral
    coefficient of the two-phonon (Raman) mixing rate for a linear
    spectral density in each phonon branch.
    """

    hbar: float = 6.582119569e-4
    kb: float = 8.617333262e-2
    alpha: float = 25.9


CONSTANTS = Constants()


def _require_finite(name, value):
    if not math.isfinite(value):
        raise ValidationError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class AngularRate:
    """A rate or angular frequency in rad/ns.

    Physical rates (radiative decay, mixing, crossing) are nonnegative.
    Quantities extracted by a fit may legitimately come out negative
    (e.g. an additional-decoherence sample consistent with zero); those
    carry fitted=True.
    """

    value: float
    fitted: bool = False

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))
        _require_finite("AngularRate", self.value)
        if not self.fitted and self.value < 0.0:
            raise ValidationError(
                f"physical rate must be >= 0, got {self.value} rad/ns "
                "(use fitted=True for signed fit outputs)"
            )

    @classmethod
    def from_linear_mhz(cls, mhz, fitted=False):
        return cls(float(mhz) * _MHZ_TO_RAD_NS, fitted=fitted)

    @property
    def linear_mhz(self):
        """The rate expressed as f in '2 pi x f MHz'."""
        return self.value / _MHZ_TO_RAD_NS

    def __float__(self):
        return self.value


def rate_from_linear_mhz(mhz, fitted=False):
    """Build an AngularRate from a frequency quoted in MHz (as 2 pi x f)."""
    return AngularRate.from_linear_mhz(mhz, fitted=fitted)


def rate_value(rate):
    """Accept an AngularRate or a bare float in rad/ns and return the float."""
    if isinstance(rate, AngularRate):
        return rate.value
    value = float(rate)
    _require_finite("rate", value)
    return value


@dataclass(frozen=True)
class EnergyMeV:
    """An energy in meV. Phonon energies and splittings are nonnegative."""

    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))
        _require_finite("EnergyMeV", self.value)
        if self.value < 0.0:
            raise ValidationError(f"energy must be >= 0 meV, got {self.value}")

    @classmethod
    def from_ghz(cls, ghz):
        """Convert a frequency in GHz to an energy via E = hbar * (2 pi f)."""
        return cls(CONSTANTS.hbar * TWO_PI * float(ghz))

    @property
    def ghz(self):
        return self.value / (CONSTANTS.hbar * TWO_PI)

    def __float__(self):
        return self.value


def energy_value(energy):
    """Accept an EnergyMeV or a bare float in meV and return the float."""
    if isinstance(energy, EnergyMeV):
        return energy.value
    value = float(energy)
    _require_finite("energy", value)
    if value < 0.0:
        raise ValidationError(f"energy must be >= 0 meV, got {value}")
    return value


@dataclass(frozen=True)
class TemperatureK:
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))
        _require_finite("TemperatureK", self.value)
        if self.value < 0.0:
            raise ValidationError(f"temperature must be >= 0 K, got {self.value}")

    def __float__(self):
        return self.value


def temperature_value(temperature):
    if isinstance(temperature, TemperatureK):
        return temperature.value
    value = float(temperature)
    _require_finite("temperature", value)
    if value < 0.0:
        raise ValidationError(f"temperature must be >= 0 K, got {value}")
    return value


def thermal_energy(temperature):
    """kB * T as an EnergyMeV."""
    return EnergyMeV(CONSTANTS.kb * temperature_value(temperature))


def _read_only(arr):
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeTrace:
    """A sampled time trace: photon counts per bin or normalized intensity.

    Parameters
    ----------
    times : array
        Sample times in ns (bin centers for histogrammed counts),
        strictly increasing.
    values : array
        Counts (nonnegative integers before background subtraction) or
        intensity samples.
    uncertainty : array, optional
        One-sigma uncertainty per sample.
    temperature : float, optional
        Sample temperature in K.
    channel : str, optional
        Polarization channel label (e.g. "x" or "y").
    background_subtracted : bool
        Whether a background trace has already been subtracted.
    clamped_bins : int
        Number of bins clamped to zero during background subtraction.
    """

    times: np.ndarray
    values: np.ndarray
    uncertainty: np.ndarray | None = None
    temperature: float | None = None
    channel: str | None = None
    background_subtracted: bool = False
    clamped_bins: int = 0

    def __post_init__(self):
        times = _read_only(np.asarray(self.times, dtype=float))
        values = np.asarray(self.values)
        if times.ndim != 1 or values.ndim != 1 or len(times) != len(values):
            raise ValidationError("times and values must be 1-d arrays of equal length")
        if len(times) == 0:
            raise ValidationError("empty trace")
        if not np.all(np.isfinite(times)):
            raise ValidationError("trace times must be finite")
        if not np.all(np.diff(times) > 0):
            raise ValidationError("trace times must be strictly increasing")
        if not np.all(np.isfinite(np.asarray(values, dtype=float))):
            raise ValidationError("trace values must be finite")
        if np.issubdtype(values.dtype, np.integer) and not self.background_subtracted:
            if np.any(values < 0):
                raise ValidationError("count traces must be >= 0 before subtraction")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", _read_only(values))
        if self.uncertainty is not None:
            sigma = _read_only(np.asarray(self.uncertainty, dtype=float))
            if sigma.shape != times.shape:
                raise ValidationError("uncertainty must match times in length")
            if not np.all(np.isfinite(sigma)) or np.any(sigma < 0):
                raise ValidationError("uncertainty must be finite and >= 0")
            object.__setattr__(self, "uncertainty", sigma)

    def __len__(self):
        return len(self.times)

    def window(self, start, length):
        """Return the sub-trace with start <= t <= start + length."""
        if length <= 0:
            raise ValidationError("window length must be > 0")
        mask = (self.times >= start) & (self.times <= start + length)
        if not np.any(mask):
            raise ValidationError("window selects no samples")
        sigma = self.uncertainty[mask] if self.uncertainty is not None else None
        return TimeTrace(
            self.times[mask],
            self.values[mask],
            uncertainty=sigma,
            temperature=self.temperature,
            channel=self.channel,
            background_subtracted=self.background_subtracted,
            clamped_bins=self.clamped_bins,
        )
