"""Two-stage sparse DOA estimation for incoherently distributed sources
observed by a partly calibrated uniform linear array."""

from .array_model import (
    AngularGrid,
    Dictionary,
    DictionaryKind,
    UlaConfig,
    augmented_steering_b,
    augmented_steering_c,
    build_dictionary,
    default_grid,
    steering,
    steering_derivative,
)
from .scene_sim import (
    DeviationLaw,
    GainPhaseTruth,
    SceneTruth,
    SnapshotMatrix,
    SourceTruth,
    draw_gain_phase,
    generate_snapshots,
)
from .covariance import (
    CovarianceProducts,
    augment_r1,
    augment_r4,
    compensate,
    estimate_noise_variance,
    extract_r2,
    extract_rc,
    sample_covariance,
)
from .sparse_opt import (
    LassoSolution,
    StlsSolution,
    nonneg_lasso,
    select_lambda_lcurve,
    stls_alternating,
)
from .estimator import (
    EstimationResult,
    EstimatorConfig,
    SparseSpectrum,
    estimate_gain_phase,
    extract_peaks,
    refine_power,
    stage1_estimate,
    stage2_estimate,
    two_stage_pipeline,
)
from .harness import (
    ExperimentConfig,
    RmseTable,
    emit_results,
    load_experiment_config,
    rmse,
    run_monte_carlo,
)

__version__ = "0.1.0"
