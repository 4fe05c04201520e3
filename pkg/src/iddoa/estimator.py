"""Two-stage DOA estimation: coarse angles from the calibrated subarray,
gain-phase estimation and compensation, then a sparse total least-squares
refinement over the full aperture."""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .array_model import (
    AngularGrid,
    DictionaryKind,
    UlaConfig,
    augmented_steering_b,
    build_dictionary,
    steering,
)
from .covariance import (
    CovarianceProducts,
    augment_r4,
    compensate,
    estimate_noise_variance,
    sample_covariance,
)
from .errors import DegenerateGainError, DoaError, DomainError, IllConditionedError, StageError
from .sparse_opt import lambda_max, select_lambda_lcurve, stls_alternating

__all__ = [
    "Stage",
    "SparseSpectrum",
    "EstimatorConfig",
    "EstimationResult",
    "extract_peaks",
    "stage1_estimate",
    "refine_power",
    "estimate_gain_phase",
    "stage2_estimate",
    "two_stage_pipeline",
]


class Stage(enum.IntEnum):
    ONE = 1
    TWO = 2


@dataclass(frozen=True)
class SparseSpectrum:
    grid: AngularGrid = field(repr=False)
    values: np.ndarray = field(repr=False)
    stage: Stage

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.grid),):
            raise DomainError("spectrum length must equal grid length")
        if np.any(values < 0):
            raise DomainError("spectrum values must be nonnegative")
        object.__setattr__(self, "values", values)

    def normalized(self):
        peak = self.values.max()
        return self.values / peak if peak > 0 else self.values.copy()


@dataclass(frozen=True)
class EstimatorConfig:
    """Knobs of the two-stage estimator.

    ``num_sources=None`` switches peak extraction to threshold mode.
    ``noise_var=None`` estimates the noise floor from the eigenvalues of the
    sample covariance, using ``k_max`` (default ``2K``, or ``M // 2`` when
    ``K`` is unknown) as the signal-subspace bound. ``lambda_factors`` are
    multiples of the zero-solution penalty used as the L-curve grid.
    ``stage2_lambda_scaled=True`` divides the stage-2 L-curve penalty by
    ``1 + ||p||^2`` (see :func:`stage2_estimate`).
    """

    ula: UlaConfig = UlaConfig()
    grid_resolution: float = 0.5
    num_sources: Optional[int] = None
    rel_threshold: float = 0.05
    noise_var: Optional[float] = None
    k_max: Optional[int] = None
    lambda_factors: Optional[Sequence[float]] = None
    epsilon: float = 1e-6
    max_iter: int = 30
    lasso_tol: float = 1e-8
    lasso_max_iter: int = 5000
    stls_lasso_tol: float = 1e-12
    stage2_lambda_scaled: bool = False

    def resolved_k_max(self):
        M = self.ula.num_sensors
        if self.k_max is not None:
            k = self.k_max
        elif self.num_sources is not None:
            k = 2 * self.num_sources
        else:
            k = M // 2
        return int(min(max(k, 1), M - 1))


@dataclass
class EstimationResult:
    stage1_doas_deg: np.ndarray
    stage2_doas_deg: np.ndarray
    gain_phase_est: np.ndarray
    power_est: np.ndarray
    spectra: dict
    diagnostics: dict = field(default_factory=dict)

    @property
    def stage1_resolved(self):
        return bool(self.diagnostics.get("stage1_resolved", False))

    @property
    def stage2_resolved(self):
        return bool(self.diagnostics.get("stage2_resolved", False))


def extract_peaks(spectrum, K=None, rel_threshold=0.05):
    """Locate the peaks of a sparse spectrum.

    Peaks are strict local maxima; a flat top counts once, at its leftmost
    index. With ``K`` given the ``K`` largest peaks are kept (ties go to the
    leftmost), otherwise every peak of at least ``rel_threshold`` times the
    spectrum maximum.

    Returns
    -------
    doas : ndarray
        Peak angles in degrees, ascending.
    resolved : bool
        False when the spectrum is all zero or fewer than ``K`` peaks exist.
    """
    if not 0 < rel_threshold < 1:
        raise DomainError("rel_threshold must lie in (0, 1)")
    v = spectrum.values
    angles = spectrum.grid.angles
    if v.size == 0 or not np.any(v > 0):
        return np.empty(0), False

    # collapse runs of equal values, then compare each run with its neighbours
    starts = np.flatnonzero(np.r_[True, v[1:] != v[:-1]])
    run_vals = v[starts]
    left = np.r_[-np.inf, run_vals[:-1]]
    right = np.r_[run_vals[1:], -np.inf]
    is_peak = (run_vals > left) & (run_vals > right) & (run_vals > 0)
    peaks = starts[is_peak]

    if K is not None:
        order = np.lexsort((peaks, -v[peaks]))
        chosen = peaks[order[:K]]
        resolved = chosen.size >= K
    else:
        chosen = peaks[v[peaks] >= rel_threshold * v.max()]
        resolved = chosen.size > 0
    return np.sort(angles[chosen]), bool(resolved)


def _lambda_grid(D, y, config):
    if config.lambda_factors is None:
        return None
    lam0 = lambda_max(D, y) or 1.0
    return lam0 * np.asarray(config.lambda_factors, dtype=float)


def stage1_estimate(products, dict_phi, K=None, config=EstimatorConfig()):
    """Sparse spectrum and coarse DOAs from the augmented calibrated vector.

    Returns ``(spectrum, doas, info)``; ``info`` carries the chosen penalty,
    solver statistics and the ``resolved`` flag.
    """
    if dict_phi.kind is not DictionaryKind.STAGE1:
        raise DomainError("stage one needs a stage-1 augmented dictionary")
    y = products.r_1
    lc = select_lambda_lcurve(dict_phi, y, _lambda_grid(dict_phi, y, config),
                              tol=config.lasso_tol, max_iter=config.lasso_max_iter)
    spectrum = SparseSpectrum(dict_phi.grid, lc.solution.coeffs, Stage.ONE)
    doas, resolved = extract_peaks(spectrum, K, config.rel_threshold)
    info = {
        "lambda": lc.lam,
        "lcurve_degenerate": lc.degenerate,
        "iterations": lc.solution.iterations,
        "converged": lc.solution.converged,
        "resolved": resolved,
    }
    return spectrum, doas, info


def refine_power(r_1, doas_deg, M_c):
    """Least-squares source powers ``(B^H B)^{-1} B^H r_1`` at the given
    angles. Returns ``(p_hat, imag_residue)``."""
    doas = np.atleast_1d(np.asarray(doas_deg, dtype=float))
    if doas.size < 1:
        raise DomainError("need at least one DOA to refine powers")
    B = augmented_steering_b(doas, M_c)
    gram = B.conj().T @ B
    if np.linalg.cond(gram) > 1e12:
        raise IllConditionedError("estimated DOAs are nearly coincident")
    p = np.linalg.solve(gram, B.conj().T @ np.asarray(r_1, dtype=complex))
    return p.real.copy(), float(np.max(np.abs(p.imag)))


def estimate_gain_phase(r_2, doas_deg, p_hat, config):
    """Gain-phase of each uncalibrated sensor as the ratio of the observed
    first covariance column to the modelled response ``A p_hat``.

    Nonpositive powers are clamped to 1e-12 for the model response.
    Returns ``(g_hat, clamped)``.
    """
    M, M_c = config.num_sensors, config.num_calibrated
    p = np.asarray(p_hat, dtype=float)
    clamped = bool(np.any(p < 1e-12))
    p = np.maximum(p, 1e-12)
    v = steering(np.atleast_1d(doas_deg), M) @ p
    g = np.ones(M, dtype=complex)
    tail = v[M_c:]
    small = np.flatnonzero(np.abs(tail) < 1e-9)
    if small.size:
        raise DegenerateGainError(
            f"model response of sensor {M_c + small[0]} is ~0; cannot estimate its gain")
    g[M_c:] = np.asarray(r_2)[M_c:] / tail
    return g, clamped


def stage2_estimate(r_4, dict_psi, lam=None, stage1_spectrum=None, K=None,
                    config=EstimatorConfig()):
    """Refined spectrum from the compensated full-aperture vector.

    ``lam=None`` selects the penalty by the L-curve on ``(psi, r_4)`` with
    no perturbation. With ``config.stage2_lambda_scaled`` the chosen penalty
    is further divided by ``1 + ||p||^2`` at the L-curve solution: that is
    the factor by which minimizing out the perturbation shrinks the squared
    residual, so the scaled penalty keeps the data/sparsity balance the
    L-curve picked. It is less sparse, trading fewer merged peaks for
    larger errors on hard trials.

    Returns ``(spectrum, doas, info)``.
    """
    if dict_psi.kind is not DictionaryKind.STAGE2:
        raise DomainError("stage two needs a stage-2 augmented dictionary")
    lam_lcurve = None
    if lam is None:
        lc = select_lambda_lcurve(dict_psi, r_4, _lambda_grid(dict_psi, r_4, config),
                                  tol=config.lasso_tol, max_iter=config.lasso_max_iter)
        p_lc = lc.solution.coeffs
        lam_lcurve, degenerate = lc.lam, lc.degenerate
        lam = lc.lam / (1.0 + p_lc @ p_lc) if config.stage2_lambda_scaled else lc.lam
    else:
        degenerate = False
    p_init = None if stage1_spectrum is None else stage1_spectrum.values
    sol = stls_alternating(dict_psi, r_4, lam, epsilon=config.epsilon,
                           max_iter=config.max_iter, p_init=p_init,
                           lasso_tol=config.stls_lasso_tol, lasso_max_iter=config.lasso_max_iter)
    spectrum = SparseSpectrum(dict_psi.grid, sol.coeffs, Stage.TWO)
    doas, resolved = extract_peaks(spectrum, K, config.rel_threshold)
    info = {
        "lambda": lam,
        "lambda_lcurve": lam_lcurve,
        "lcurve_degenerate": degenerate,
        "iterations": sol.iterations,
        "converged": sol.converged,
        "objective_trace": sol.objective_trace,
        "resolved": resolved,
        "solution": sol,
    }
    return spectrum, doas, info


def _dictionaries(config):
    grid = AngularGrid.uniform(config.grid_resolution)
    return (build_dictionary(grid, DictionaryKind.STAGE1, config.ula),
            build_dictionary(grid, DictionaryKind.STAGE2, config.ula))


_DICT_CACHE = {}


def _cached_dictionaries(config):
    key = (config.ula, config.grid_resolution)
    if key not in _DICT_CACHE:
        _DICT_CACHE[key] = _dictionaries(config)
    return _DICT_CACHE[key]


def _run(stage, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except DoaError as exc:
        raise StageError(stage, exc) from exc


def two_stage_pipeline(Z, config=EstimatorConfig(), stages=2):
    """Run the estimator on a snapshot matrix.

    ``stages=1`` stops after the coarse estimate. Errors raised inside a
    stage are re-raised as :class:`StageError` carrying the stage name.
    """
    t0 = time.perf_counter()
    data = np.asarray(getattr(Z, "data", Z))
    ula = config.ula
    if data.ndim != 2 or data.shape[0] != ula.num_sensors:
        raise StageError("input", DomainError(
            f"snapshot rows ({data.shape[0]}) must equal num_sensors ({ula.num_sensors})"))
    K = config.num_sources
    phi, psi = _cached_dictionaries(config)
    diag = {}

    R = sample_covariance(data)
    if config.noise_var is None:
        noise_var = _run("noise", estimate_noise_variance, R, config.resolved_k_max())
    else:
        noise_var = float(config.noise_var)
    diag["noise_var"] = noise_var
    products = _run("covariance", CovarianceProducts.from_covariance, R, ula, noise_var)

    spec1, doas1, info1 = _run("stage1", stage1_estimate, products, phi, K, config)
    diag["stage1"] = info1
    diag["stage1_resolved"] = info1["resolved"]
    diag["time_stage1"] = time.perf_counter() - t0
    spectra = {"stage1": spec1}
    empty = np.empty(0)

    if stages == 1 or doas1.size == 0:
        diag["stage2_resolved"] = False
        diag["stage2"] = {"skipped": "not requested" if stages == 1 else "no stage-1 peaks"}
        return EstimationResult(doas1, empty, np.ones(ula.num_sensors, complex), empty,
                                spectra, diag)

    p_hat, imag = _run("refine_power", refine_power, products.r_1, doas1, ula.num_calibrated)
    diag["power_imag_residue"] = imag
    g_hat, clamped = _run("gain_phase", estimate_gain_phase, products.r_2, doas1, p_hat, ula)
    diag["power_clamped"] = clamped
    r_3 = _run("compensate", compensate, products.r_2, g_hat)
    r_4 = augment_r4(r_3)

    spec2, doas2, info2 = _run("stage2", stage2_estimate, r_4, psi, None, spec1, K, config)
    diag["stage2"] = info2
    diag["stage2_resolved"] = info2["resolved"]
    diag["converged"] = info2["converged"]
    spectra["stage2"] = spec2
    diag["r_4"] = r_4
    diag["time_total"] = time.perf_counter() - t0
    return EstimationResult(doas1, doas2, g_hat, p_hat, spectra, diag)
