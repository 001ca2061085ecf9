"""Command-line entry point: ``robsurv {fit,simulate,replicate,summarize}``.

Exit codes: 0 success, 2 usage or validation error, 3 I/O error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .model import DataFormatError, Hyperparams, load_csv
from .numerics import DomainError, make_rng
from .posterior import (
    PosteriorDraws,
    UnsupportedOperationError,
    dic,
    outlier_probabilities,
    summarize,
    write_rows_csv,
)
from .sampler import MODELS, McmcConfig, run_chain
from .simulate import (
    METHOD_ORDER,
    SCENARIOS,
    ScenarioSpec,
    _truth_to_json,
    generate_scenario,
    run_experiment,
    write_experiment_tables,
)

logger = logging.getLogger("robsurv")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

# Documented defaults; a JSON --config overrides these and flags override both.
FIT_DEFAULTS = {
    "model": "rgg",
    "iters": 4000,
    "burnin": 2000,
    "thin": 1,
    "seed": 0,
    "grid_size": 100,
    "chains": 1,
    "intercept": True,
    "mean_parameterization": False,
    "dic_marginal": False,
    "probs": "0.025,0.5,0.975",
    "hyper": {},
}
REPLICATE_DEFAULTS = {
    "scenario": "GA",
    "omega": 0.0,
    "n": 200,
    "reps": 100,
    "methods": ",".join(METHOD_ORDER),
    "iters": 4000,
    "burnin": 2000,
    "seed": 0,
    "workers": 1,
}
SIMULATE_DEFAULTS = {"scenario": "GA", "omega": 0.0, "n": 200, "seed": 0, "rep": 0}


class UsageError(ValueError):
    pass


def _positive_int(s):
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {s!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _nonneg_int(s):
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {s!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _parse_probs(text):
    try:
        probs = [float(p) for p in str(text).split(",") if p.strip()]
    except ValueError:
        raise UsageError(f"--probs must be comma-separated numbers, got {text!r}") from None
    if not probs or any(not 0.0 <= p <= 1.0 for p in probs):
        raise UsageError("--probs values must lie in [0, 1]")
    return probs


def _parse_hyper(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--hyper expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = json.loads(v)
        except json.JSONDecodeError:
            raise UsageError(f"--hyper {k}: value is not a number or JSON list") from None
    return out


def _merge(defaults, config, args, keys):
    """Flags > config file > defaults; unknown config keys are rejected."""
    unknown = set(config) - set(defaults)
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    merged = dict(defaults)
    merged.update(config)
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            merged[k] = v
    return merged


def _load_config(path):
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    return cfg


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _write_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _environment():
    import scipy
    import sklearn

    return {
        "robsurv": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
    }


# ------------------------------------------------------------------ commands

def cmd_fit(args):
    cfg = _merge(FIT_DEFAULTS, _load_config(args.config), args,
                 ["model", "iters", "burnin", "thin", "seed", "grid_size", "chains",
                  "intercept", "mean_parameterization", "dic_marginal", "probs"])
    hyper_over = dict(cfg["hyper"])
    hyper_over.update(_parse_hyper(args.hyper))
    if cfg["model"] not in MODELS:
        raise UsageError(f"--model must be one of {sorted(MODELS)}")
    probs = _parse_probs(cfg["probs"])
    data = load_csv(args.data, add_intercept=cfg["intercept"])
    try:
        hyper = Hyperparams.from_dict(
            {**Hyperparams.default(data.p).to_dict(), **hyper_over}, p=data.p
        )
    except (TypeError, KeyError) as exc:
        raise UsageError(f"bad hyperparameters: {exc}") from None
    mcmc = McmcConfig(n_iter=cfg["iters"], burn_in=cfg["burnin"], thin=cfg["thin"],
                      seed=cfg["seed"], grid_size=cfg["grid_size"], model=cfg["model"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    chains = []
    for k in range(cfg["chains"]):
        logger.info("chain %d/%d: %s, %d iterations", k + 1, cfg["chains"], mcmc.model, mcmc.n_iter)
        chains.append(run_chain(data, hyper, replace(mcmc, stream_id=k)))
    draws = chains[0] if len(chains) == 1 else PosteriorDraws.concatenate(chains)
    draws.to_csv(out / "draws.csv")
    rows = summarize(draws, probs, include_lambda=False,
                     mean_parameterization=cfg["mean_parameterization"])
    write_rows_csv(rows, out / "summary.csv")
    obs = []
    p_out = outlier_probabilities(draws) if draws.robust else np.zeros(data.n)
    med = np.median(draws.log_lambda, axis=0)
    for i in range(data.n):
        obs.append({"observation": i, "time": data.y[i], "status": int(data.delta[i]),
                    "p_outlier": float(p_out[i]), "log_lambda_median": float(med[i]),
                    "lambda_median": float(np.exp(med[i]))})
    write_rows_csv(obs, out / "observations.csv")
    dic_value, p_d = dic(draws, data, marginal=cfg["dic_marginal"], c_dlh=hyper.c_dlh)
    manifest = {
        "command": "fit",
        "model": mcmc.model,
        "data": {"path": str(args.data), "sha256": _sha256(args.data), "n": data.n, "p": data.p,
                 "intercept_added": cfg["intercept"]},
        "mcmc": mcmc.to_dict(),
        "chains": cfg["chains"],
        "hyperparameters": hyper.to_dict(),
        "acceptance": draws.acceptance,
        "dic": {"value": dic_value, "p_d": p_d,
                "variant": "marginal" if cfg["dic_marginal"] and draws.robust else "conditional"},
        "chain_manifests": [c.manifest for c in chains],
        "environment": _environment(),
    }
    _write_json(manifest, out / "manifest.json")
    print(f"model {mcmc.model}: DIC {dic_value:.3f} (p_D {p_d:.3f}); acceptance {draws.acceptance}")
    print(f"wrote {out / 'draws.csv'}, summary.csv, observations.csv, manifest.json")
    return EXIT_OK


def cmd_simulate(args):
    cfg = _merge(SIMULATE_DEFAULTS, _load_config(args.config), args,
                 ["scenario", "omega", "n", "seed", "rep"])
    spec = ScenarioSpec(scenario=cfg["scenario"], n=cfg["n"], omega=cfg["omega"],
                        replications=1, seed=cfg["seed"])
    data, truth = generate_scenario(make_rng(spec.seed, (cfg["rep"], 0)), spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [{"time": data.y[i], "status": int(data.delta[i]),
             "x1": data.X[i, 1], "x2": data.X[i, 2]} for i in range(data.n)]
    write_rows_csv(rows, out / "scenario.csv", ["time", "status", "x1", "x2"])
    truth = _truth_to_json(truth)
    truth.update({"scenario": spec.scenario, "omega": spec.omega, "n": spec.n,
                  "seed": spec.seed, "rep": cfg["rep"], "version": __version__})
    _write_json(truth, out / "truth.json")
    print(f"wrote {out / 'scenario.csv'} (censoring rate {truth['censoring_rate']:.3f})")
    return EXIT_OK


def cmd_replicate(args):
    cfg = _merge(REPLICATE_DEFAULTS, _load_config(args.config), args,
                 ["scenario", "omega", "n", "reps", "methods", "iters", "burnin", "seed",
                  "workers"])
    methods = [m.strip().lower() for m in str(cfg["methods"]).split(",") if m.strip()]
    bad = [m for m in methods if m not in MODELS]
    if bad or not methods:
        raise UsageError(f"--methods must be a comma list from {sorted(MODELS)}")
    spec = ScenarioSpec(scenario=cfg["scenario"], n=cfg["n"], omega=cfg["omega"],
                        replications=cfg["reps"], seed=cfg["seed"])
    mcmc = McmcConfig(n_iter=cfg["iters"], burn_in=cfg["burnin"], seed=cfg["seed"])

    def progress(done, total):
        logger.info("replication %d/%d done", done, total)

    result = run_experiment(spec, methods, mcmc, workers=cfg["workers"], progress=progress)
    out = Path(args.out)
    p1, p2 = write_experiment_tables(result, out)
    manifest = {
        "command": "replicate",
        "spec": {k: getattr(spec, k) for k in spec.__dataclass_fields__},
        "methods": methods,
        "mcmc": mcmc.to_dict(),
        "failures": result.failures,
        "mean_censoring_rate": float(np.mean(result.censoring_rates)) if result.censoring_rates else None,
        "note": result.note,
        "environment": _environment(),
    }
    _write_json(manifest, out / "manifest.json")
    if result.note:
        print(result.note)
    print(f"wrote {p1} and {p2}")
    return EXIT_OK


def cmd_summarize(args):
    probs = _parse_probs(args.probs)
    draws = PosteriorDraws.from_csv(args.draws, model=args.model)
    rows = summarize(draws, probs, include_lambda=args.include_lambda,
                     mean_parameterization=args.mean_parameterization)
    if args.out:
        write_rows_csv(rows, args.out)
        print(f"wrote {args.out}")
    else:
        cols = list(rows[0])
        print(",".join(cols))
        for r in rows:
            print(",".join(repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in cols))
    return EXIT_OK


# -------------------------------------------------------------------- parser

def build_parser():
    p = argparse.ArgumentParser(prog="robsurv", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-q", "--quiet", action="store_true", help="only print warnings")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a model to a time,status,covariates CSV")
    f.add_argument("--data", required=True)
    f.add_argument("--out", required=True, help="output directory")
    f.add_argument("--model", choices=sorted(MODELS))
    f.add_argument("--iters", type=_positive_int)
    f.add_argument("--burnin", type=_nonneg_int)
    f.add_argument("--thin", type=_positive_int)
    f.add_argument("--seed", type=_nonneg_int)
    f.add_argument("--grid-size", dest="grid_size", type=_positive_int)
    f.add_argument("--chains", type=_positive_int)
    f.add_argument("--no-intercept", dest="intercept", action="store_const", const=False,
                   help="do not prepend a column of ones to the covariates")
    f.add_argument("--mean-parameterization", action="store_const", const=True,
                   help="report beta with the sign that lengthens survival")
    f.add_argument("--dic-marginal", action="store_const", const=True,
                   help="integrate lambda out in the DIC instead of conditioning on it")
    f.add_argument("--probs", help="comma-separated quantile levels")
    f.add_argument("--hyper", action="append", metavar="KEY=VALUE",
                   help="prior override, e.g. c_dlh=2 (repeatable)")
    f.add_argument("--config", help="JSON file of option defaults")
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="generate one scenario dataset")
    s.add_argument("--scenario", choices=sorted(SCENARIOS))
    s.add_argument("--omega", type=float)
    s.add_argument("--n", type=_positive_int)
    s.add_argument("--seed", type=_nonneg_int)
    s.add_argument("--rep", type=_nonneg_int, help="replication index (RNG stream)")
    s.add_argument("--out", default=".")
    s.add_argument("--config")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("replicate", help="run the MSE / coverage experiment")
    r.add_argument("--scenario", choices=sorted(SCENARIOS))
    r.add_argument("--omega", type=float)
    r.add_argument("--n", type=_positive_int)
    r.add_argument("--reps", type=_nonneg_int)
    r.add_argument("--methods", help=f"comma list from {','.join(METHOD_ORDER)}")
    r.add_argument("--iters", type=_positive_int)
    r.add_argument("--burnin", type=_nonneg_int)
    r.add_argument("--seed", type=_nonneg_int)
    r.add_argument("--workers", type=_positive_int)
    r.add_argument("--out", default=".")
    r.add_argument("--config")
    r.set_defaults(func=cmd_replicate)

    m = sub.add_parser("summarize", help="summarize a draws CSV")
    m.add_argument("draws")
    m.add_argument("--probs", default="0.025,0.5,0.975")
    m.add_argument("--model", choices=sorted(MODELS),
                   help="model variant (default: read from manifest.json beside the draws)")
    m.add_argument("--include-lambda", action="store_true")
    m.add_argument("--mean-parameterization", action="store_true")
    m.add_argument("--out", help="CSV path (default: print to stdout)")
    m.set_defaults(func=cmd_summarize)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, DataFormatError, DomainError, UnsupportedOperationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FloatingPointError, np.linalg.LinAlgError, OverflowError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
