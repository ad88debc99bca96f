"""Command-line interface: ``circwalk simulate | fit | decode | explore``.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import explore as ex
from .config import ConfigError, RunConfig, load_config
from .em import fit
from .errors import DataError, NumericalError
from .filtering import posterior
from .inference import decode_states, infer
from .io import export_trajectory, ingest, write_json, write_rows, write_text
from .model import ModelSpec, Params, validate
from .simulate import simulate_trajectory

EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 2, 3, 4

log = logging.getLogger("circwalk")


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="circwalk", description="Multi-state circular-linear random walks.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def data_args(p):
        p.add_argument("--data", required=True, help="trajectory CSV")
        p.add_argument("--units", choices=("radians", "degrees"), default="radians")
        p.add_argument("--from-positions", action="store_true", help="derive y and d from easting/northing")

    p = sub.add_parser("simulate", help="simulate target-pursuit trajectories")
    p.add_argument("--config")
    p.add_argument("--reps", type=_positive_int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--jobs", type=_positive_int, default=1, help="parallel worker processes")

    p = sub.add_parser("fit", help="fit a model by EM and report standard errors")
    data_args(p)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=None)

    p = sub.add_parser("decode", help="smoothed state probabilities for fitted parameters")
    data_args(p)
    p.add_argument("--params", required=True, help="parameter JSON written by 'fit'")
    p.add_argument("--config")
    p.add_argument("--out", default=None)

    p = sub.add_parser("explore", help="distance mixture and turning-angle diagnostics")
    data_args(p)
    p.add_argument("--config", help="EM settings for the interaction fit")
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _out_dir(args, cfg: RunConfig) -> str:
    out = args.out if args.out is not None else cfg.output
    os.makedirs(out, exist_ok=True)
    return out


def _select_targets(cfg: RunConfig, traj):
    if cfg.targets is None:
        return traj
    missing = [t for t in cfg.targets if t not in traj.target_names]
    if missing:
        raise DataError(f"targets {missing} not found in the data (have {list(traj.target_names)})")
    idx = [traj.target_names.index(t) for t in cfg.targets]
    return type(traj)(traj.y, traj.d, traj.x[:, idx], traj.z[:, idx], tuple(cfg.targets))


def _simulate_one(job):
    config, spec, seed, path = job
    sim = simulate_trajectory(config, spec, np.random.default_rng(seed))
    export_trajectory(path, sim.trajectory, sim.states, sim.positions[:-1])
    return path, sim.length, sim.truncated


def cmd_simulate(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    seed = args.seed if args.seed is not None else cfg.seed
    seeds = np.random.SeedSequence(seed).spawn(args.reps)
    spec = ModelSpec(K=cfg.scenario.params.K, p=1)
    jobs = [(cfg.scenario, spec, s, os.path.join(out, f"sim_{i + 1:04d}.csv")) for i, s in enumerate(seeds)]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_simulate_one, jobs))
    else:
        results = [_simulate_one(j) for j in jobs]
    for path, length, truncated in results:
        print(f"{path}\tT={length}" + ("\ttruncated" if truncated else ""))
    return 0


def cmd_fit(args, cfg: RunConfig) -> int:
    data = ingest(args.data, args.units, args.from_positions)
    traj = _select_targets(cfg, data.trajectory)
    spec = cfg.spec(traj.p)
    problems = validate(spec, traj=traj)
    if problems:
        raise DataError("; ".join(problems))
    settings = cfg.em_settings()
    if args.seed is not None:
        settings = type(settings)(**{**settings.__dict__, "seed": args.seed})
    res = fit(spec, traj, settings)
    report = infer(res.params, spec, traj, res.loglik)
    out = _out_dir(args, cfg)
    text = report.to_text() + f"\nEM iterations {res.n_iters}  converged {res.converged}"
    kept = sum(r.kept for r in res.multistart_audit)
    text += f"\nmultistart: {kept} of {len(res.multistart_audit)} starts kept"
    write_text(os.path.join(out, "fit_report.txt"), text)
    write_json(os.path.join(out, "params.json"), res.params.to_dict())
    write_json(os.path.join(out, "fit_report.json"), {
        "spec": {"K": spec.K, "p": spec.p, "hidden": spec.hidden, "m": list(spec.m),
                 "fixed_n": None if spec.fixed_n is None else list(spec.fixed_n),
                 "targets": list(traj.target_names)},
        "settings": settings.__dict__,
        "params": res.params.to_dict(),
        "inference": report.to_dict(),
        "em": {"n_iters": res.n_iters, "converged": res.converged, "loglik_trace": res.trace, "notes": res.notes},
        "multistart_audit": [r.to_dict() for r in res.multistart_audit],
    })
    print(text)
    return 0


def cmd_decode(args, cfg: RunConfig) -> int:
    data = ingest(args.data, args.units, args.from_positions)
    traj = _select_targets(cfg, data.trajectory)
    try:
        with open(args.params) as fh:
            params = Params.from_dict(json.load(fh))
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot read parameters from {args.params}: {exc}") from exc
    kind = "semi-markov" if params.dwell_n is not None else "markov"
    spec = ModelSpec(K=params.K, p=traj.p, hidden=kind, m=cfg.m)
    problems = validate(spec, params, traj)
    if problems:
        raise DataError("; ".join(problems))
    probs, labels = decode_states(posterior(params, spec, traj))
    out = _out_dir(args, cfg)
    header = ["t"] + [f"p_state{k + 1}" for k in range(spec.K)] + ["state"]
    rows = [[t + 1, *probs[t], labels[t]] for t in range(traj.T)]
    path = os.path.join(out, "decoded.csv")
    write_rows(path, header, rows)
    print(path)
    return 0


def cmd_explore(args, cfg: RunConfig) -> int:
    data = ingest(args.data, args.units, args.from_positions)
    traj = data.trajectory
    out = _out_dir(args, cfg)
    d = traj.d[1:]
    summary = ex.distance_summary(d)
    write_rows(os.path.join(out, "distance_summary.csv"), list(summary), [list(summary.values())])
    mix = ex.fit_exp_mixture(d, ex.MixtureSettings(seed=args.seed))
    d_crit = ex.critical_distance(mix)
    write_rows(
        os.path.join(out, "distance_mixture.csv"),
        ["weight1", "rate1", "weight2", "rate2", "loglik", "critical_distance", "degenerate"],
        [[mix.weights[0], mix.rates[0], mix.weights[1], mix.rates[1], mix.loglik, d_crit, int(mix.degenerate)]],
    )
    rows = []
    for sub in ex.partition_diagnostics(traj, d_crit):
        if sub.empty:
            rows.append([sub.label, 0, "", "", "", ""])
            continue
        rows.append([sub.label, sub.count, sub.summary.mean_direction, sub.summary.resultant_length,
                     sub.kuiper_v, "" if sub.kuiper_p is None else sub.kuiper_p])
    write_rows(os.path.join(out, "turning_angles.csv"),
               ["subset", "count", "mean_direction", "resultant_length", "kuiper_v", "kuiper_p"], rows)
    if traj.p > 0:
        itraj = ex.interaction_trajectory(traj, d_crit)
        spec = ModelSpec(K=1, p=itraj.p)
        res = fit(spec, itraj, cfg.em_settings())
        report = infer(res.params, spec, itraj, res.loglik)
        lo, hi = report.wald_ci()
        write_rows(os.path.join(out, "interaction_fit.csv"), ["parameter", "estimate", "se", "ci_low", "ci_high"],
                   [[n, e, s, a, b] for n, e, s, a, b in zip(report.names, report.estimates, report.se, lo, hi)])
    print(f"critical distance {d_crit:.6g}; outputs in {out}")
    return 0


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "decode": cmd_decode, "explore": cmd_explore}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(getattr(args, "config", None))
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, ValueError) as exc:
        print(f"circwalk: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"circwalk: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"circwalk: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
