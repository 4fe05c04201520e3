"""Monte Carlo experiments: configuration files, seeded trials, RMSE tables
and CSV/JSON export."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import yaml

from .array_model import UlaConfig
from .errors import ConfigError, DoaError, DomainError
from .estimator import EstimatorConfig, SparseSpectrum, two_stage_pipeline
from .scene_sim import DeviationLaw, SceneTruth, SourceTruth, draw_gain_phase, generate_snapshots

__all__ = [
    "SWEEP_VARIABLES",
    "ESTIMATORS",
    "SourceSpec",
    "ExperimentConfig",
    "RmseRow",
    "RmseTable",
    "rmse",
    "trial_seeds",
    "build_scene",
    "run_trial",
    "run_monte_carlo",
    "emit_results",
    "load_experiment_config",
    "parse_experiment_config",
]

SWEEP_VARIABLES = ("snr_db", "num_snapshots", "spread_deg")
ESTIMATORS = ("stage1", "stage2")
CSV_COLUMNS = ("estimator", "sweep_var", "sweep_value", "rmse_deg", "failure_rate", "trials_used")


def _fmt(x):
    """Fixed 6-significant-digit formatting used by every emitted number."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.6g}"


@dataclass(frozen=True)
class SourceSpec:
    theta_deg: float
    spread_deg: float = 1.5
    power: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    """Scene template, sweep axis and solver settings of one experiment.

    Defaults describe a 16-sensor array with 8 calibrated sensors,
    0.1 gain and 40 degree phase errors, 200 snapshots and 300 trials.
    """

    sources: tuple
    ula: UlaConfig = UlaConfig(16, 8)
    snr_db: float = 0.0
    num_snapshots: int = 200
    num_paths: int = 10
    deviation_law: str = "gaussian"
    sigma_rho: float = 0.1
    sigma_phi_deg: float = 40.0
    sweep_variable: str = "snr_db"
    sweep_values: tuple = ()
    trials: int = 300
    seed: int = 0
    grid_resolution: float = 0.5
    estimators: tuple = ESTIMATORS
    known_num_sources: bool = True
    noise_var: Optional[float] = None
    k_max: Optional[int] = None
    lambda_factors: Optional[tuple] = None
    epsilon: float = 1e-6
    max_iter: int = 30
    lasso_tol: float = 1e-8
    lasso_max_iter: int = 5000
    stls_lasso_tol: float = 1e-12
    rel_threshold: float = 0.05
    stage2_lambda_scaled: bool = False

    def __post_init__(self):
        if not self.sweep_values:
            default = {"snr_db": self.snr_db, "num_snapshots": self.num_snapshots}
            value = default.get(self.sweep_variable, self.sources[0].spread_deg if self.sources else 0.0)
            object.__setattr__(self, "sweep_values", (value,))
        self.validate()

    def validate(self):
        problems = []
        if not self.sources:
            problems.append("scene.sources: at least one source is required")
        thetas = [s.theta_deg for s in self.sources]
        if len(set(thetas)) != len(thetas):
            problems.append("scene.sources: angles must be distinct")
        for i, s in enumerate(self.sources):
            if not -90 < s.theta_deg <= 90:
                problems.append(f"scene.sources[{i}].theta_deg: must lie in (-90, 90]")
            if s.spread_deg < 0:
                problems.append(f"scene.sources[{i}].spread_deg: must be >= 0")
            if not s.power > 0:
                problems.append(f"scene.sources[{i}].power: must be > 0")
        if self.trials < 1:
            problems.append("run.trials: must be >= 1")
        if self.sweep_variable not in SWEEP_VARIABLES:
            problems.append(f"sweep.variable: must be one of {', '.join(SWEEP_VARIABLES)}")
        vals = list(self.sweep_values)
        if vals != sorted(vals):
            problems.append("sweep.values: must be sorted ascending")
        if self.sweep_variable == "num_snapshots" and any(int(v) != v or v < 1 for v in vals):
            problems.append("sweep.values: snapshot counts must be positive integers")
        if self.sweep_variable == "spread_deg" and any(v < 0 for v in vals):
            problems.append("sweep.values: spreads must be >= 0")
        if self.num_snapshots < 1:
            problems.append("scene.num_snapshots: must be >= 1")
        if self.num_paths < 1:
            problems.append("scene.num_paths: must be >= 1")
        if self.deviation_law not in {d.value for d in DeviationLaw}:
            problems.append("scene.deviation_law: must be 'gaussian' or 'uniform'")
        if not 0 <= self.sigma_rho < 1 / math.sqrt(3):
            problems.append("scene.sigma_rho: must lie in [0, 1/sqrt(3))")
        if self.sigma_phi_deg < 0:
            problems.append("scene.sigma_phi_deg: must be >= 0")
        if self.grid_resolution <= 0:
            problems.append("grid.resolution_deg: must be > 0")
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad or not self.estimators:
            problems.append(f"run.estimators: choose from {', '.join(ESTIMATORS)}")
        if self.lambda_factors is not None:
            lf = list(self.lambda_factors)
            if len(lf) < 3 or any(v <= 0 for v in lf) or lf != sorted(set(lf)):
                problems.append("solver.lambda_factors: need >= 3 positive ascending values")
        if problems:
            raise ConfigError("invalid experiment config:\n  " + "\n  ".join(problems))

    @property
    def num_sources(self):
        return len(self.sources)

    def estimator_config(self):
        return EstimatorConfig(
            ula=self.ula,
            grid_resolution=self.grid_resolution,
            num_sources=self.num_sources if self.known_num_sources else None,
            rel_threshold=self.rel_threshold,
            noise_var=None if self.noise_var is None else float(self.noise_var),
            k_max=self.k_max,
            lambda_factors=self.lambda_factors,
            epsilon=self.epsilon,
            max_iter=self.max_iter,
            lasso_tol=self.lasso_tol,
            lasso_max_iter=self.lasso_max_iter,
            stls_lasso_tol=self.stls_lasso_tol,
            stage2_lambda_scaled=self.stage2_lambda_scaled,
        )


def build_scene(config, sweep_value, gain_phase):
    """Scene and snapshot count at one point of the sweep."""
    snr_db, n_snap = config.snr_db, config.num_snapshots
    spreads = [s.spread_deg for s in config.sources]
    if config.sweep_variable == "snr_db":
        snr_db = float(sweep_value)
    elif config.sweep_variable == "num_snapshots":
        n_snap = int(sweep_value)
    else:
        spreads = [float(sweep_value)] * len(spreads)
    # SNR is per-source power over noise power; sources share one power
    power = config.sources[0].power
    sources = [SourceTruth(s.theta_deg, sp, s.power, config.num_paths, config.deviation_law)
               for s, sp in zip(config.sources, spreads)]
    scene = SceneTruth(config.ula, sources, gain_phase, power * 10.0 ** (-snr_db / 10.0))
    return scene, n_snap


def trial_seeds(base_seed, sweep_index, trial):
    """Independent (gain-phase, snapshot) seeds of one trial, derived from
    the base seed and the trial coordinates only."""
    ss = np.random.SeedSequence(entropy=int(base_seed), spawn_key=(int(sweep_index), int(trial)))
    return ss.spawn(2)


def rmse(estimated, truth):
    """Root mean square error (degrees) after sorting both lists."""
    est = np.sort(np.asarray(estimated, dtype=float))
    tru = np.sort(np.asarray(truth, dtype=float))
    if est.shape != tru.shape:
        raise DomainError(
            f"cannot pair {est.size} estimates with {tru.size} true angles; "
            "flag the trial as a resolution failure instead")
    return float(np.sqrt(np.mean((est - tru) ** 2)))


def run_trial(config, sweep_index, trial):
    """One Monte Carlo trial.

    Returns ``{estimator: (squared_error or None, runtime_s)}``; ``None``
    marks a trial that failed to produce ``K`` peaks or raised.
    """
    gp_seed, snap_seed = trial_seeds(config.seed, sweep_index, trial)
    gain_phase = draw_gain_phase(config.sigma_rho, config.sigma_phi_deg, config.ula, gp_seed)
    scene, n_snap = build_scene(config, config.sweep_values[sweep_index], gain_phase)
    Z = generate_snapshots(scene, n_snap, snap_seed)
    truth = np.sort(scene.thetas)
    K = truth.size
    stages = 2 if "stage2" in config.estimators else 1
    out = {}
    try:
        result = two_stage_pipeline(Z, config.estimator_config(), stages=stages)
    except DoaError:
        return {name: (None, 0.0) for name in config.estimators}
    diag = result.diagnostics
    doas = {"stage1": result.stage1_doas_deg, "stage2": result.stage2_doas_deg}
    times = {"stage1": diag.get("time_stage1", 0.0), "stage2": diag.get("time_total", 0.0)}
    for name in config.estimators:
        d = doas[name]
        err = rmse(d, truth) ** 2 if d.size == K else None
        out[name] = (err, float(times[name]))
    return out


@dataclass(frozen=True)
class RmseRow:
    estimator: str
    sweep_var: str
    sweep_value: float
    rmse_deg: float
    failure_rate: float
    trials_used: int
    # wall-clock seconds per trial; excluded from comparisons and from the
    # emitted files, which must not depend on machine load
    mean_runtime: float = field(default=float("nan"), compare=False)


@dataclass
class RmseTable:
    rows: list = field(default_factory=list)

    def get(self, estimator, sweep_value):
        for r in self.rows:
            if r.estimator == estimator and r.sweep_value == sweep_value:
                return r
        raise KeyError((estimator, sweep_value))

    def column(self, estimator, attr="rmse_deg"):
        return np.array([getattr(r, attr) for r in self.rows if r.estimator == estimator])


def _run_task(args):
    config, si, t = args
    return (si, t), run_trial(config, si, t)


def run_monte_carlo(config, threads=1):
    """Run every (sweep value, trial) pair and aggregate an RMSE table.

    Trials are seeded from their coordinates and aggregated in sorted
    order, so the table does not depend on ``threads``.
    """
    config.validate()
    tasks = [(config, si, t) for si in range(len(config.sweep_values)) for t in range(config.trials)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = dict(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * threads))))
    else:
        results = dict(map(_run_task, tasks))

    table = RmseTable()
    for name in config.estimators:
        for si, value in enumerate(config.sweep_values):
            errs, times = [], []
            for t in range(config.trials):
                err, rt = results[(si, t)][name]
                times.append(rt)
                if err is not None:
                    errs.append(err)
            used = len(errs)
            table.rows.append(RmseRow(
                estimator=name,
                sweep_var=config.sweep_variable,
                sweep_value=value,
                rmse_deg=float(np.sqrt(np.mean(errs))) if used else float("nan"),
                failure_rate=(config.trials - used) / config.trials,
                trials_used=used,
                mean_runtime=float(np.mean(times)),
            ))
    return table


def _spectra_columns(obj):
    if isinstance(obj, SparseSpectrum):
        return obj.grid.angles, {"normalized_value": obj.normalized()}
    spectra = dict(obj)
    first = next(iter(spectra.values()))
    for s in spectra.values():
        if not np.array_equal(s.grid.angles, first.grid.angles):
            raise DomainError("spectra must share one grid to be written together")
    return first.grid.angles, {k: s.normalized() for k, s in spectra.items()}


def _render(obj, fmt):
    if fmt not in ("csv", "json"):
        raise DomainError(f"unknown output format {fmt!r}")
    buf = io.StringIO()
    if isinstance(obj, RmseTable):
        if fmt == "csv":
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in obj.rows:
                w.writerow([r.estimator, r.sweep_var, _fmt(r.sweep_value), _fmt(r.rmse_deg),
                            _fmt(r.failure_rate), _fmt(r.trials_used)])
        else:
            rows = [{c: getattr(r, c) for c in CSV_COLUMNS} for r in obj.rows]
            for row in rows:
                for k in ("sweep_value", "rmse_deg", "failure_rate"):
                    v = float(row[k])
                    row[k] = None if math.isnan(v) else float(_fmt(v))
            json.dump({"rows": rows}, buf, indent=2)
            buf.write("\n")
        return buf.getvalue()

    angles, cols = _spectra_columns(obj)
    if fmt == "csv":
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["angle_deg", *cols])
        for i, a in enumerate(angles):
            w.writerow([_fmt(a), *(_fmt(v[i]) for v in cols.values())])
    else:
        payload = {"angle_deg": [float(_fmt(a)) for a in angles],
                   **{k: [float(_fmt(x)) for x in v] for k, v in cols.items()}}
        json.dump(payload, buf)
        buf.write("\n")
    return buf.getvalue()


def emit_results(obj, path, fmt="csv"):
    """Write an :class:`RmseTable`, a :class:`SparseSpectrum` or a mapping of
    named spectra to ``path``. Spectra are normalized to a peak of 1."""
    text = _render(obj, fmt)
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write results to {os.fspath(path)}: {exc.strerror}") from exc
    return path


# -- configuration files ----------------------------------------------------

_SCHEMA = {
    "array": {"num_sensors": int, "num_calibrated": int},
    "scene": {"sources": list, "snr_db": float, "num_snapshots": int, "num_paths": int,
              "deviation_law": str, "sigma_rho": float, "sigma_phi_deg": float},
    "sweep": {"variable": str, "values": list},
    "run": {"trials": int, "seed": int, "estimators": list},
    "grid": {"resolution_deg": float},
    "solver": {"lambda_factors": list, "epsilon": float, "max_iter": int, "lasso_tol": float,
               "lasso_max_iter": int, "stls_lasso_tol": float, "k_max": int,
               "noise_var": float, "known_num_sources": bool, "rel_threshold": float,
               "stage2_lambda_scaled": bool},
}
_SOURCE_KEYS = {"theta_deg", "spread_deg", "power"}


def _line_index(node, path=(), out=None):
    """Map key paths of a composed YAML tree to 1-based line numbers."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            p = path + (k.value,)
            out[p] = k.start_mark.line + 1
            _line_index(v, p, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            p = path + (i,)
            out[p] = v.start_mark.line + 1
            _line_index(v, p, out)
    return out


def _coerce(value, kind, where):
    if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if kind in (str, list, bool) and isinstance(value, kind):
        return value
    if kind is float and value is None:
        return None
    raise ConfigError(f"{where}: expected {kind.__name__}, got {value!r}")


def parse_experiment_config(text, source="<config>"):
    """Parse and validate YAML text into an :class:`ExperimentConfig`."""
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark is not None else source
        raise ConfigError(f"{where}: cannot parse config: {getattr(exc, 'problem', exc)}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    lines = _line_index(root) if root is not None else {}

    def at(*path):
        line = lines.get(tuple(path))
        return f"{source}:{line} ({'.'.join(map(str, path))})" if line else f"{source} ({'.'.join(map(str, path))})"

    flat = {}
    for section, body in data.items():
        if section not in _SCHEMA:
            raise ConfigError(f"{at(section)}: unknown key {section!r}")
        if not isinstance(body, dict):
            raise ConfigError(f"{at(section)}: section must be a mapping")
        for key, value in body.items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{at(section, key)}: unknown key {key!r}")
            flat[(section, key)] = _coerce(value, _SCHEMA[section][key], at(section, key))

    if ("scene", "sources") not in flat:
        raise ConfigError(f"{source}: scene.sources is required")
    sources = []
    for i, entry in enumerate(flat[("scene", "sources")]):
        if not isinstance(entry, dict):
            raise ConfigError(f"{at('scene', 'sources', i)}: each source must be a mapping")
        for key in entry:
            if key not in _SOURCE_KEYS:
                raise ConfigError(f"{at('scene', 'sources', i, key)}: unknown key {key!r}")
        if "theta_deg" not in entry:
            raise ConfigError(f"{at('scene', 'sources', i)}: theta_deg is required")
        kw = {k: _coerce(v, float, at("scene", "sources", i, k)) for k, v in entry.items()}
        sources.append(SourceSpec(**kw))
    if len({s.power for s in sources}) > 1:
        raise ConfigError(f"{at('scene', 'sources')}: sources must share one power (SNR is per source)")

    kwargs = {"sources": tuple(sources)}
    M = flat.get(("array", "num_sensors"), 16)
    Mc = flat.get(("array", "num_calibrated"), 8)
    try:
        kwargs["ula"] = UlaConfig(M, Mc)
    except DomainError as exc:
        raise ConfigError(f"{at('array')}: {exc}") from exc

    simple = {
        ("scene", "snr_db"): "snr_db", ("scene", "num_snapshots"): "num_snapshots",
        ("scene", "num_paths"): "num_paths", ("scene", "deviation_law"): "deviation_law",
        ("scene", "sigma_rho"): "sigma_rho", ("scene", "sigma_phi_deg"): "sigma_phi_deg",
        ("sweep", "variable"): "sweep_variable", ("run", "trials"): "trials",
        ("run", "seed"): "seed", ("grid", "resolution_deg"): "grid_resolution",
        ("solver", "epsilon"): "epsilon", ("solver", "max_iter"): "max_iter",
        ("solver", "lasso_tol"): "lasso_tol", ("solver", "lasso_max_iter"): "lasso_max_iter",
        ("solver", "stls_lasso_tol"): "stls_lasso_tol", ("solver", "k_max"): "k_max",
        ("solver", "noise_var"): "noise_var", ("solver", "known_num_sources"): "known_num_sources",
        ("solver", "rel_threshold"): "rel_threshold",
        ("solver", "stage2_lambda_scaled"): "stage2_lambda_scaled",
    }
    for key, name in simple.items():
        if key in flat:
            kwargs[name] = flat[key]
    if ("sweep", "values") in flat:
        vals = flat[("sweep", "values")]
        if not vals:
            raise ConfigError(f"{at('sweep', 'values')}: sweep values must be nonempty")
        kwargs["sweep_values"] = tuple(_coerce(v, float, at("sweep", "values", i)) for i, v in enumerate(vals))
        if kwargs.get("sweep_variable") == "num_snapshots":
            kwargs["sweep_values"] = tuple(int(v) if float(v).is_integer() else v for v in kwargs["sweep_values"])
    if ("run", "estimators") in flat:
        kwargs["estimators"] = tuple(str(e).lower() for e in flat[("run", "estimators")])
    if ("solver", "lambda_factors") in flat:
        kwargs["lambda_factors"] = tuple(
            _coerce(v, float, at("solver", "lambda_factors", i))
            for i, v in enumerate(flat[("solver", "lambda_factors")]))
    if isinstance(kwargs.get("deviation_law"), str):
        kwargs["deviation_law"] = kwargs["deviation_law"].lower()
    return ExperimentConfig(**kwargs)


def load_experiment_config(path):
    """Read a YAML experiment file; see the README for the schema."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {os.fspath(path)}: {exc.strerror}") from exc
    return parse_experiment_config(text, source=os.fspath(path))


def with_overrides(config, **changes):
    """Copy of ``config`` with non-None fields replaced and re-validated."""
    changes = {k: v for k, v in changes.items() if v is not None}
    return replace(config, **changes) if changes else config
