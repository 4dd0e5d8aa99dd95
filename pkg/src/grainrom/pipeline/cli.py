"""Command-line entry point: ``grainrom <command> ...``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings

import numpy as np

from ..errors import NumericalError, ValidationError
from ..trace import atomic_write
from .data import SCHEMA_VERSION, DatasetManifest, ingest

log = logging.getLogger("grainrom")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


def _thresholds(text: str) -> tuple:
    try:
        vals = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"thresholds must be comma-separated numbers, got {text!r}") from None
    if len(vals) != 3 or not all(0 < v <= 1 for v in vals):
        raise argparse.ArgumentTypeError("need three thresholds in (0, 1]")
    return vals


def _write_json(path, payload: dict) -> None:
    payload = {"schema_version": SCHEMA_VERSION, **payload}
    atomic_write(path, json.dumps(payload, indent=2) + "\n")


def cmd_simulate(args) -> int:
    from ..sph.config import load_scenario
    from .generate import simulate_scenario

    scenario = load_scenario(args.config)
    if args.seed is not None:
        from dataclasses import replace

        scenario = replace(scenario, seed=args.seed)
    out = args.out or scenario.output
    if not out:
        raise ValidationError("no output path: set 'output' in the scenario or pass --out")
    trace = simulate_scenario(scenario, backend=args.backend)
    trace.write_csv(out)
    log.info("wrote %s (%d samples)", out, len(trace))
    return EXIT_OK


def cmd_ingest(args) -> int:
    manifest = ingest(args.dir, args.n_theta)
    manifest.save(args.out)
    log.info("manifest with %d records -> %s", len(manifest.records), args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    from .model import train

    model = train(DatasetManifest.load(args.manifest), args.design, args.thresholds, per_behavior=args.per_behavior,
                  noise_variance=args.noise_variance, seed=args.seed or 0, threads=args.threads)
    model.save(args.out)
    return EXIT_OK


def cmd_predict(args) -> int:
    from .model import TrainedModel, predict

    pred = predict(TrainedModel.load(args.model), args.omega)
    pred.trace.metadata.update({
        "schema_version": SCHEMA_VERSION,
        "ci95_lower": {"fx": pred.lower[0].tolist(), "fz": pred.lower[1].tolist()},
        "ci95_upper": {"fx": pred.upper[0].tolist(), "fz": pred.upper[1].tolist()},
    })
    pred.trace.write_csv(args.out)
    return EXIT_OK


def cmd_crossval(args) -> int:
    from .model import crossval_loo

    report = crossval_loo(DatasetManifest.load(args.manifest), args.design, args.thresholds, threads=args.threads,
                          per_behavior=args.per_behavior, noise_variance=args.noise_variance, seed=args.seed or 0)
    _write_json(args.report, report.to_dict())
    for f in report.folds:
        log.info("omega=%g%s fx=%.4f fz=%.4f", f.omega, " (edge)" if f.edge else "", f.errors["fx"], f.errors["fz"])
    return EXIT_OK


def cmd_assimilate(args) -> int:
    from .assimilation import assimilate_scenario, read_observations
    from .model import TrainedModel

    out = assimilate_scenario(TrainedModel.load(args.model), args.omega, read_observations(args.obs),
                              n_particles=args.particles, seed=args.seed or 0, measurement_noise_std=args.noise_std)
    r = out.result
    out.updated.metadata.update({
        "schema_version": SCHEMA_VERSION,
        "posterior_mean": np.asarray(r.posterior_mean).tolist(),
        "posterior_var": np.asarray(r.posterior_cov_diag).tolist(),
        "ess_history": list(map(float, r.ess_history)),
        "resample_steps": list(map(int, r.resample_steps)),
        "measurement_noise_std": out.measurement_noise_std,
    })
    out.updated.write_csv(args.out)
    return EXIT_OK


def cmd_scaling(args) -> int:
    from .scaling import scaling_analysis

    report = scaling_analysis(DatasetManifest.load(args.manifest))
    _write_json(args.report, report.to_dict())
    for d in report.dispersion:
        log.info("omega=%g drag cv %.3f -> %.3f, lift cv %.3f -> %.3f", d["omega"], d["cv_drag_raw"],
                 d["cv_drag_scaled"], d["cv_lift_raw"], d["cv_lift_scaled"])
    return EXIT_OK


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # subcommands repeat the global flags without defaults, so "grainrom --seed 3 train ..." keeps the 3
    def d(value):
        return argparse.SUPPRESS if suppress else value

    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--seed", type=int, default=d(None), help="random seed")
    g.add_argument("--threads", type=int, default=d(1), help="worker threads for GP fits and folds")
    g.add_argument("--verbose", "-v", action="count", default=d(0))
    return g


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags(suppress=True)
    p = argparse.ArgumentParser(prog="grainrom", description=__doc__.splitlines()[0], parents=[_global_flags(False)])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="run one SPH scenario")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.add_argument("--backend", choices=("cython", "python"))
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("ingest", parents=[common], help="index trace CSVs into a manifest")
    s.add_argument("--dir", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--n-theta", type=int, default=128)
    s.set_defaults(func=cmd_ingest)

    def model_opts(s):
        s.add_argument("--manifest", required=True)
        s.add_argument("--design", required=True)
        s.add_argument("--thresholds", type=_thresholds, default=(0.95, 1.0, 0.95))
        s.add_argument("--per-behavior", action="store_true", help="decompose fx and fz separately")
        s.add_argument("--noise-variance", type=float, default=None, help="pin GP noise (default: fitted)")

    s = sub.add_parser("train", parents=[common], help="fit the reduced-order surrogate for one design")
    model_opts(s)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", parents=[common], help="predict a trace at a new speed")
    s.add_argument("--model", required=True)
    s.add_argument("--omega", type=float, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("crossval", parents=[common], help="leave-one-condition-out errors")
    model_opts(s)
    s.add_argument("--report", required=True)
    s.set_defaults(func=cmd_crossval)

    s = sub.add_parser("assimilate", parents=[common], help="update a prediction with sparse observations")
    s.add_argument("--model", required=True)
    s.add_argument("--omega", type=float, required=True)
    s.add_argument("--obs", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--particles", type=int, default=1000)
    s.add_argument("--noise-std", type=float, default=None)
    s.set_defaults(func=cmd_assimilate)

    s = sub.add_parser("scaling", parents=[common], help="cross-morphology peak-force scaling")
    s.add_argument("--manifest", required=True)
    s.add_argument("--report", required=True)
    s.set_defaults(func=cmd_scaling)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValidationError, ValueError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
