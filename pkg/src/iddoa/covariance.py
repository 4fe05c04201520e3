"""Sample covariance and the covariance vectors used by both stages."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGainError, DomainError

__all__ = [
    "CovarianceProducts",
    "sample_covariance",
    "estimate_noise_variance",
    "extract_rc",
    "augment_r1",
    "extract_r2",
    "compensate",
    "augment_r4",
    "conjugate_augment",
]


@dataclass(frozen=True)
class CovarianceProducts:
    R: np.ndarray = field(repr=False)
    noise_var: float
    r_c: np.ndarray
    r_1: np.ndarray
    r_2: np.ndarray

    @classmethod
    def from_covariance(cls, R, config, noise_var):
        r_c = extract_rc(R, config, noise_var)
        return cls(R, float(noise_var), r_c, augment_r1(r_c), extract_r2(R, noise_var))


def sample_covariance(Z):
    """``(1/N) Z Z^H``, symmetrized to be exactly Hermitian."""
    data = getattr(Z, "data", Z)
    data = np.asarray(data, dtype=complex)
    R = data @ data.conj().T / data.shape[1]
    return (R + R.conj().T) / 2


def estimate_noise_variance(R, K_max):
    """Mean of the ``M - K_max`` smallest eigenvalues of ``R``."""
    M = R.shape[0]
    if not 1 <= K_max < M:
        raise DomainError(f"K_max must satisfy 1 <= K_max < M={M}, got {K_max}")
    eig = np.linalg.eigvalsh(R)  # ascending
    return max(float(np.mean(eig[: M - K_max])), 0.0)


def extract_rc(R, config, noise_var):
    """First ``M_c`` entries of the first column of ``R``, noise removed
    from the diagonal entry."""
    if noise_var < 0:
        raise DomainError("noise_var must be >= 0")
    r_c = np.array(R[: config.num_calibrated, 0], dtype=complex)
    r_c[0] -= noise_var
    return r_c


def conjugate_augment(r):
    """``[flip(conj(r)), r[1:]]``: a length ``2n - 1`` vector that is
    conjugate-symmetric about ``r[0]``."""
    r = np.asarray(r, dtype=complex)
    if r.ndim != 1 or r.size < 2:
        raise DomainError("augmentation needs a vector of length >= 2")
    return np.concatenate([np.conj(r[::-1]), r[1:]])


def augment_r1(r_c):
    return conjugate_augment(r_c)


def augment_r4(r_3):
    return conjugate_augment(r_3)


def extract_r2(R, noise_var):
    """Full first column of ``R`` with the noise removed from element 0."""
    if noise_var < 0:
        raise DomainError("noise_var must be >= 0")
    r_2 = np.array(R[:, 0], dtype=complex)
    r_2[0] -= noise_var
    return r_2


def compensate(r_2, g_hat):
    """Undo the per-sensor gain-phase: ``r_2 / g_hat`` elementwise.

    For a diagonal uncertainty matrix the weighted least-squares inverse
    reduces to this elementwise division.
    """
    g_hat = np.asarray(g_hat, dtype=complex)
    r_2 = np.asarray(r_2, dtype=complex)
    if g_hat.shape != r_2.shape:
        raise DomainError("r_2 and g_hat must have equal length")
    small = np.flatnonzero(np.abs(g_hat) < 1e-9)
    if small.size:
        raise DegenerateGainError(f"gain estimate of sensor {small[0]} is ~0")
    return r_2 / g_hat
