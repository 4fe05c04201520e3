"""Command-line entry point: ``iddoa {simulate,estimate,sweep,spectrum}``.

Every subcommand reads a YAML experiment file (``--config``). Single-scene
commands use the first sweep value of the file. Failures exit nonzero and
print ``{"error": <category>, "message": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from .errors import DoaError, DomainError
from .estimator import two_stage_pipeline
from .harness import (
    _fmt,
    build_scene,
    emit_results,
    load_experiment_config,
    run_monte_carlo,
    trial_seeds,
    with_overrides,
)
from .scene_sim import draw_gain_phase, generate_snapshots

EXIT_CODES = {
    "config": 2,
    "domain": 3,
    "degenerate": 3,
    "ill_conditioned": 4,
    "numerical": 4,
    "stage": 5,
    "io": 6,
    "error": 1,
}


def _parser():
    p = argparse.ArgumentParser(prog="iddoa", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, fmt=("csv", "json")):
        sp.add_argument("--config", required=True, metavar="PATH", help="YAML experiment file")
        sp.add_argument("--out", required=True, metavar="PATH", help="output file")
        sp.add_argument("--format", choices=fmt, default=fmt[0])
        sp.add_argument("--seed", type=int, default=None, metavar="S", help="override run.seed")
        return sp

    s = common(sub.add_parser("simulate", help="draw one scene and write its snapshots"))
    s.add_argument("--snapshots", type=int, default=None, metavar="N")

    e = common(sub.add_parser("estimate", help="estimate DOAs of one scene"), fmt=("json", "csv"))
    e.add_argument("--snapshots", type=int, default=None, metavar="N")
    e.add_argument("--input", default=None, metavar="PATH",
                   help="snapshot CSV written by 'simulate' instead of a fresh draw")

    w = common(sub.add_parser("sweep", help="Monte Carlo RMSE table"))
    w.add_argument("--trials", type=int, default=None, metavar="N")
    w.add_argument("--threads", type=int, default=1, metavar="T",
                   help="worker processes; affects wall time only")

    sp = common(sub.add_parser("spectrum", help="normalized stage-1/stage-2 spectra of one scene"))
    sp.add_argument("--snapshots", type=int, default=None, metavar="N")
    sp.add_argument("--input", default=None, metavar="PATH")
    return p


def _single_scene(config, n_override=None):
    gp_seed, snap_seed = trial_seeds(config.seed, 0, 0)
    gain_phase = draw_gain_phase(config.sigma_rho, config.sigma_phi_deg, config.ula, gp_seed)
    scene, n_snap = build_scene(config, config.sweep_values[0], gain_phase)
    Z = generate_snapshots(scene, n_override or n_snap, snap_seed)
    return scene, Z


def write_snapshots(Z, path, fmt):
    data = np.asarray(getattr(Z, "data", Z))
    if fmt == "json":
        text = json.dumps({"real": [[float(_fmt(v)) for v in row] for row in data.real],
                           "imag": [[float(_fmt(v)) for v in row] for row in data.imag]}) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sensor", "snapshot", "real", "imag"])
        for m in range(data.shape[0]):
            for n in range(data.shape[1]):
                # repr keeps the round trip through 'estimate --input' exact
                w.writerow([m, n, repr(float(data[m, n].real)), repr(float(data[m, n].imag))])
        text = buf.getvalue()
    with open(path, "w", newline="") as fh:
        fh.write(text)


def read_snapshots(path, num_sensors):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != {"sensor", "snapshot", "real", "imag"}:
        raise DomainError(f"{path}: expected columns sensor,snapshot,real,imag")
    m = np.array([int(r["sensor"]) for r in rows])
    n = np.array([int(r["snapshot"]) for r in rows])
    if m.max() + 1 != num_sensors:
        raise DomainError(f"{path}: {m.max() + 1} sensors, config has {num_sensors}")
    Z = np.zeros((num_sensors, n.max() + 1), complex)
    Z[m, n] = [complex(float(r["real"]), float(r["imag"])) for r in rows]
    return Z


def _estimate(config, args):
    if args.input:
        Z = read_snapshots(args.input, config.ula.num_sensors)
        truth = None
    else:
        scene, Z = _single_scene(config, args.snapshots)
        truth = np.sort(scene.thetas)
    stages = 2 if "stage2" in config.estimators else 1
    return two_stage_pipeline(Z, config.estimator_config(), stages=stages), truth


def _to_list(x):
    return [float(_fmt(v)) for v in np.atleast_1d(x)]


def cmd_simulate(config, args):
    _, Z = _single_scene(config, args.snapshots)
    write_snapshots(Z, args.out, args.format)


def cmd_estimate(config, args):
    result, truth = _estimate(config, args)
    g = result.gain_phase_est
    payload = {
        "stage1_doas_deg": _to_list(result.stage1_doas_deg),
        "stage2_doas_deg": _to_list(result.stage2_doas_deg),
        "stage1_resolved": bool(result.stage1_resolved),
        "stage2_resolved": bool(result.stage2_resolved),
        "power_est": _to_list(result.power_est),
        "gain_est": _to_list(np.abs(g)),
        "phase_est_deg": _to_list(np.rad2deg(np.angle(g))),
        "converged": bool(result.diagnostics.get("converged", False)),
    }
    if truth is not None:
        payload["truth_deg"] = _to_list(truth)
    if args.format == "json":
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    else:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["estimator", "index", "doa_deg"])
            for name in ("stage1", "stage2"):
                for i, v in enumerate(payload[f"{name}_doas_deg"]):
                    w.writerow([name, i, _fmt(v)])


def cmd_sweep(config, args):
    config = with_overrides(config, trials=args.trials)
    if args.threads < 1:
        raise DomainError("--threads must be >= 1")
    table = run_monte_carlo(config, threads=args.threads)
    emit_results(table, args.out, args.format)
    for r in table.rows:
        print(f"{r.estimator:7s} {r.sweep_var}={_fmt(r.sweep_value):>6s}  rmse={_fmt(r.rmse_deg)}  "
              f"fail={_fmt(r.failure_rate)}  {r.mean_runtime:.2f}s/trial", file=sys.stderr)


def cmd_spectrum(config, args):
    result, _ = _estimate(config, args)
    emit_results(result.spectra, args.out, args.format)


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate,
            "sweep": cmd_sweep, "spectrum": cmd_spectrum}


def _fail(category, message):
    print(json.dumps({"error": category, "message": message}), file=sys.stderr)
    return EXIT_CODES.get(category, 1)


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        config = load_experiment_config(args.config)
        config = with_overrides(config, seed=args.seed)
        COMMANDS[args.command](config, args)
    except DoaError as exc:
        return _fail(exc.category, str(exc))
    except OSError as exc:
        msg = f"{exc.filename}: {exc.strerror}" if exc.filename else str(exc)
        return _fail("io", msg)
    return 0


if __name__ == "__main__":
    sys.exit(main())
