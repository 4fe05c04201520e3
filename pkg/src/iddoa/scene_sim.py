"""Exact-model snapshot simulator for incoherently distributed sources.

Every path of every source is steered with the exact steering vector at its
perturbed angle; the first-order manifold approximation is never used here.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .array_model import UlaConfig, _check_angles
from .errors import DomainError

__all__ = [
    "DeviationLaw",
    "SourceTruth",
    "GainPhaseTruth",
    "SceneTruth",
    "SnapshotMatrix",
    "draw_gain_phase",
    "generate_snapshots",
    "complex_gaussian",
]

# bound on elements evaluated per chunk in generate_snapshots
_CHUNK_ELEMENTS = 1 << 22


class DeviationLaw(enum.Enum):
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class SourceTruth:
    theta_deg: float
    spread_deg: float = 0.0
    power: float = 1.0
    num_paths: int = 10
    deviation_law: DeviationLaw = DeviationLaw.GAUSSIAN

    def __post_init__(self):
        _check_angles(self.theta_deg)
        if self.spread_deg < 0:
            raise DomainError("spread_deg must be >= 0")
        if not self.power > 0:
            raise DomainError("power must be > 0")
        if self.num_paths < 1:
            raise DomainError("num_paths must be >= 1")
        object.__setattr__(self, "deviation_law", DeviationLaw(self.deviation_law))


@dataclass(frozen=True)
class GainPhaseTruth:
    g: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.g, dtype=complex).copy()
        if g.ndim != 1:
            raise DomainError("gain-phase vector must be 1-d")
        if np.any(np.abs(g) <= 0):
            raise DomainError("every gain must have nonzero modulus")
        g.setflags(write=False)
        object.__setattr__(self, "g", g)

    @classmethod
    def identity(cls, M):
        return cls(np.ones(M, dtype=complex))

    @property
    def gain(self):
        return np.abs(self.g)

    @property
    def phase(self):
        return np.angle(self.g)


@dataclass(frozen=True)
class SceneTruth:
    ula: UlaConfig
    sources: Sequence[SourceTruth]
    gain_phase: GainPhaseTruth = None
    noise_var: float = 1.0

    def __post_init__(self):
        sources = tuple(self.sources)
        if not sources:
            raise DomainError("scene needs at least one source")
        thetas = [s.theta_deg for s in sources]
        if len(set(thetas)) != len(thetas):
            raise DomainError("source angles must be pairwise distinct")
        if self.noise_var < 0:
            raise DomainError("noise_var must be >= 0")
        gp = self.gain_phase
        if gp is None:
            gp = GainPhaseTruth.identity(self.ula.num_sensors)
        if gp.g.size != self.ula.num_sensors:
            raise DomainError("gain-phase vector length must equal num_sensors")
        if np.any(gp.g[: self.ula.num_calibrated] != 1):
            raise DomainError("calibrated sensors must have unit gain-phase")
        object.__setattr__(self, "sources", sources)
        object.__setattr__(self, "gain_phase", gp)

    @property
    def thetas(self):
        return np.array([s.theta_deg for s in self.sources])

    @property
    def powers(self):
        return np.array([s.power for s in self.sources])


@dataclass(frozen=True)
class SnapshotMatrix:
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        if data.ndim != 2 or data.shape[1] < 1:
            raise DomainError("snapshot matrix must be M x N with N >= 1")
        object.__setattr__(self, "data", data)

    @property
    def num_sensors(self):
        return self.data.shape[0]

    @property
    def num_snapshots(self):
        return self.data.shape[1]


def complex_gaussian(rng, shape, var=1.0):
    """Circular complex Gaussian samples with variance ``var``."""
    scale = np.sqrt(np.asarray(var, dtype=float) / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def draw_gain_phase(sigma_rho, sigma_phi_deg, config, seed=None):
    """Draw gains ``1 + sqrt(12) sigma_rho eta`` and phases
    ``sqrt(12) sigma_phi mu`` with ``eta, mu ~ U[-0.5, 0.5]`` for the
    uncalibrated sensors. Calibrated sensors get exactly 1.
    """
    if sigma_rho < 0 or sigma_phi_deg < 0:
        raise DomainError("uncertainty standard deviations must be >= 0")
    if sigma_rho >= 1.0 / np.sqrt(3.0):
        raise DomainError("sigma_rho >= 1/sqrt(3) allows non-positive gains")
    rng = np.random.default_rng(seed)
    n_unc = config.num_sensors - config.num_calibrated
    eta = rng.uniform(-0.5, 0.5, n_unc)
    mu = rng.uniform(-0.5, 0.5, n_unc)
    rho = 1.0 + np.sqrt(12.0) * sigma_rho * eta
    phi = np.sqrt(12.0) * np.deg2rad(sigma_phi_deg) * mu
    g = np.ones(config.num_sensors, dtype=complex)
    g[config.num_calibrated:] = rho * np.exp(1j * phi)
    return GainPhaseTruth(g)


def _deviations(rng, source, shape):
    if source.spread_deg == 0:
        return np.zeros(shape)
    if source.deviation_law is DeviationLaw.GAUSSIAN:
        return source.spread_deg * rng.standard_normal(shape)
    half = np.sqrt(3.0) * source.spread_deg
    return rng.uniform(-half, half, shape)


def generate_snapshots(scene, N, seed=None):
    """Simulate ``N`` snapshots of the exact multipath array model.

    Per snapshot and source, the source symbol (variance ``power``) is
    spread over ``num_paths`` paths with i.i.d. complex Gaussian gains of
    variance ``1/num_paths`` and i.i.d. angular deviations of standard
    deviation ``spread_deg``.
    """
    if N < 1:
        raise DomainError("N must be >= 1")
    rng = np.random.default_rng(seed)
    M = scene.ula.num_sensors
    m = np.arange(M)[:, None]
    z = np.zeros((M, N), dtype=complex)
    for src in scene.sources:
        L = src.num_paths
        s = complex_gaussian(rng, N, src.power)
        gamma = complex_gaussian(rng, (L, N), 1.0 / L)
        dev = _deviations(rng, src, (L, N))
        amp = gamma * s  # (L, N)
        if src.spread_deg == 0:
            a = np.exp(-1j * np.pi * m * np.sin(np.deg2rad(src.theta_deg)))
            z += a * amp.sum(axis=0)
            continue
        sin_t = np.sin(np.deg2rad(src.theta_deg + dev))  # (L, N)
        step = max(1, _CHUNK_ELEMENTS // (M * L))
        for lo in range(0, N, step):
            hi = min(N, lo + step)
            phase = np.exp(-1j * np.pi * m[:, :, None] * sin_t[None, :, lo:hi])
            z[:, lo:hi] += np.einsum("mln,ln->mn", phase, amp[:, lo:hi])
    z *= scene.gain_phase.g[:, None]
    z += complex_gaussian(rng, (M, N), scene.noise_var)
    return SnapshotMatrix(z)
