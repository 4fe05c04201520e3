"""Steering-vector algebra for a half-wavelength uniform linear array.

All public functions take angles in degrees. Derivatives are taken with
respect to radians.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

__all__ = [
    "UlaConfig",
    "AngularGrid",
    "DictionaryKind",
    "Dictionary",
    "steering",
    "steering_derivative",
    "augmented_steering_b",
    "augmented_steering_c",
    "build_dictionary",
    "default_grid",
]


@dataclass(frozen=True)
class UlaConfig:
    """ULA with ``num_sensors`` elements, the first ``num_calibrated`` of
    which have a known unit response."""

    num_sensors: int = 16
    num_calibrated: int = 8

    def __post_init__(self):
        if not 2 <= self.num_calibrated <= self.num_sensors:
            raise DomainError(
                f"need 2 <= num_calibrated <= num_sensors, got "
                f"M={self.num_sensors}, M_c={self.num_calibrated}")


def _check_angles(theta_deg):
    theta = np.asarray(theta_deg, dtype=float)
    if np.any(~np.isfinite(theta)) or np.any(theta <= -90.0) or np.any(theta > 90.0):
        raise DomainError(f"angles must lie in (-90, 90] degrees, got {theta_deg!r}")
    return theta


@dataclass(frozen=True)
class AngularGrid:
    """Uniform grid of angles (degrees) on (-90, 90]."""

    angles: np.ndarray
    resolution: float

    def __post_init__(self):
        angles = np.asarray(self.angles, dtype=float)
        if angles.ndim != 1 or angles.size == 0:
            raise DomainError("grid must be a nonempty 1-d sequence of angles")
        _check_angles(angles)
        if angles.size > 1:
            steps = np.diff(angles)
            if np.any(np.abs(steps - self.resolution) > 1e-12):
                raise DomainError("grid spacing must equal the resolution")
        angles.setflags(write=False)
        object.__setattr__(self, "angles", angles)

    @classmethod
    def uniform(cls, resolution=0.5, start=None, stop=90.0):
        """Grid ``start, start + resolution, ..., stop``.

        ``start`` defaults to the first grid point above -90 degrees.
        """
        if resolution <= 0:
            raise DomainError("resolution must be positive")
        if start is None:
            n = int(np.floor(180.0 / resolution + 1e-9))
            start = stop - (n - 1) * resolution
            if start <= -90.0:
                n -= 1
                start = stop - (n - 1) * resolution
        n = int(round((stop - start) / resolution)) + 1
        angles = start + resolution * np.arange(n)
        # snap accumulated rounding to the nominal lattice
        angles = np.round(angles / resolution) * resolution
        return cls(angles, float(resolution))

    def __len__(self):
        return self.angles.size

    def index_of(self, theta_deg):
        """Index of the grid angle nearest to ``theta_deg``."""
        return int(np.argmin(np.abs(self.angles - theta_deg)))


def default_grid(resolution=0.5):
    return AngularGrid.uniform(resolution)


def steering(theta_deg, M):
    """Steering vector ``exp(-j m pi sin(theta))``, ``m = 0..M-1``.

    If ``theta_deg`` is an array of K angles, returns an ``(M, K)`` matrix.
    """
    theta = np.deg2rad(_check_angles(theta_deg))
    if M < 1:
        raise DomainError("M must be at least 1")
    m = np.arange(M)
    if theta.ndim == 0:
        return np.exp(-1j * np.pi * m * np.sin(theta))
    return np.exp(-1j * np.pi * np.outer(m, np.sin(theta)))


def steering_derivative(theta_deg, M):
    """Derivative of :func:`steering` with respect to theta in radians."""
    theta = np.deg2rad(_check_angles(theta_deg))
    if M < 1:
        raise DomainError("M must be at least 1")
    m = np.arange(M)
    if theta.ndim == 0:
        return -1j * np.pi * m * np.cos(theta) * np.exp(-1j * np.pi * m * np.sin(theta))
    phase = np.outer(m, np.sin(theta))
    return -1j * np.pi * np.outer(m, np.cos(theta)) * np.exp(-1j * np.pi * phase)


def _augmented(theta_deg, n):
    theta = np.deg2rad(_check_angles(theta_deg))
    if n < 2:
        raise DomainError("augmented steering needs at least 2 sensors")
    lag = (n - 1) - np.arange(2 * n - 1)
    if theta.ndim == 0:
        return np.exp(1j * np.pi * lag * np.sin(theta))
    return np.exp(1j * np.pi * np.outer(lag, np.sin(theta)))


def augmented_steering_b(theta_deg, M_c):
    """Conjugate-symmetric steering vector of the calibrated subarray.

    Element ``i`` is ``exp(j (M_c - 1 - i) pi sin(theta))`` for
    ``i = 0..2M_c-2``; the centre element is 1.
    """
    return _augmented(theta_deg, M_c)


def augmented_steering_c(theta_deg, M):
    """Full-aperture counterpart of :func:`augmented_steering_b`."""
    return _augmented(theta_deg, M)


class DictionaryKind(enum.Enum):
    STAGE1 = "stage1_augmented"
    STAGE2 = "stage2_augmented"


@dataclass(frozen=True)
class Dictionary:
    columns: np.ndarray
    kind: DictionaryKind
    grid: AngularGrid = field(repr=False)

    @property
    def shape(self):
        return self.columns.shape


def build_dictionary(grid, kind, config):
    """Stack augmented steering vectors of every grid angle as columns."""
    if grid is None or len(grid) == 0:
        raise DomainError("dictionary needs a nonempty grid")
    kind = DictionaryKind(kind)
    n = config.num_calibrated if kind is DictionaryKind.STAGE1 else config.num_sensors
    cols = _augmented(grid.angles, n)
    cols.setflags(write=False)
    return Dictionary(cols, kind, grid)
