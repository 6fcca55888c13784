"""Command-line interface: ``bridgegp {fit,predict,benchmark}``.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numeric failure.
"""
import argparse
import csv
import json
import os
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError, DimensionError, DomainError, NumericError
from .evaluation import ExperimentConfig, dumps_report, posterior_predict, replicate_experiment, summarize
from .gibbs import ChainTrace, GPModel, McmcConfig, PriorConfig, run_two_chains
from .gp_core import DEGREES, BasisSpec, Dataset

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
SEED_ENV = "BRIDGEGP_SEED"
MODEL_FILE = "model.json"
TRAIN_FILE = "train.csv"

FIT_DEFAULTS = {
    "variant": "sph",
    "q": 1.0,
    "basis": "linear",
    "burnin": 1600,
    "iters": 3000,
    "seed": 0,
    "jobs": 1,
    "check_every": 500,
    "rhat_threshold": 1.1,
    "thin": 5,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def read_csv(path, require_y=True):
    """Read ``x1..xd[,y]`` columns; returns ``(X, y or None, header)``."""
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(set(header)) != len(header):
            raise DataError(f"{path}: duplicate column names in header")
        has_y = bool(header) and header[-1] == "y"
        xcols = header[:-1] if has_y else header
        if require_y and not has_y:
            raise DataError(f"{path}: last column must be named 'y'")
        expected = [f"x{k + 1}" for k in range(len(xcols))]
        if xcols != expected or not xcols:
            raise DataError(f"{path}: feature columns must be named x1..xd, got {xcols}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric value") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    arr = np.array(rows)
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{path}: non-finite values")
    if has_y:
        return arr[:, :-1], arr[:, -1], header
    return arr, None, header


def write_csv(path, X, y=None):
    d = X.shape[1]
    header = [f"x{k + 1}" for k in range(d)] + (["y"] if y is not None else [])
    arr = X if y is None else np.column_stack([X, y])
    np.savetxt(path, arr, delimiter=",", header=",".join(header), comments="", fmt="%.17g")


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict) or any(isinstance(v, (dict, list)) for v in cfg.values()):
        raise ConfigurationError("config must be a single flat JSON object")
    return cfg


def resolve_settings(args, defaults, allowed):
    """Merge defaults < config file < command-line flags < ``BRIDGEGP_SEED``."""
    out = dict(defaults)
    cfg = _load_config(getattr(args, "config", None))
    unknown = set(cfg) - set(allowed)
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    out.update(cfg)
    for key in allowed:
        val = getattr(args, key, None)
        if val is not None:
            out[key] = val
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            out["seed"] = int(env)
        except ValueError:
            raise ConfigurationError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return out


def _add_common(p):
    p.add_argument("--variant", choices=("sph", "hmc"))
    p.add_argument("--q", type=float)
    p.add_argument("--basis", choices=DEGREES)
    p.add_argument("--burnin", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--config")
    p.add_argument("--out-dir", dest="out_dir", default=".")


def build_parser():
    parser = _Parser(prog="bridgegp", description="Bridge-regularized Bayesian GP regression.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    fit = sub.add_parser("fit", help="fit two chains to a training CSV")
    fit.add_argument("train", help="CSV with columns x1..xd,y")
    _add_common(fit)

    pred = sub.add_parser("predict", help="predict at query points from a fitted model directory")
    pred.add_argument("model_dir")
    pred.add_argument("query", help="CSV with columns x1..xd (a trailing y column is ignored)")
    pred.add_argument("--out", help="output CSV (default: <out-dir>/predictions.csv)")
    pred.add_argument("--thin", type=int)
    pred.add_argument("--out-dir", dest="out_dir", default=".")

    bench = sub.add_parser("benchmark", help="replicated benchmark experiment")
    bench.add_argument("name", choices=("borehole", "otl_circuit", "piston", "prespecified_gp"))
    bench.add_argument("--d-padded", dest="d_padded", type=int)
    bench.add_argument("--n", dest="n_train", type=int)
    bench.add_argument("--n-test", dest="n_test", type=int)
    bench.add_argument("--replicates", type=int)
    _add_common(bench)
    return parser


def _validate(s):
    if s["variant"] not in ("sph", "hmc"):
        raise ConfigurationError(f"variant must be sph or hmc, got {s['variant']!r}")
    if not 0 < float(s["q"]) <= 2:
        raise ConfigurationError(f"q must lie in (0, 2], got {s['q']}")
    if s.get("jobs", 1) < 1:
        raise ConfigurationError("jobs must be >= 1")


def cmd_fit(args):
    s = resolve_settings(args, FIT_DEFAULTS, list(FIT_DEFAULTS))
    _validate(s)
    X, y, _ = read_csv(args.train)
    data = Dataset(X, y)
    spec = BasisSpec(s["basis"], data.d)
    if spec.p > data.n:
        lower = [b for b in DEGREES if BasisSpec(b, data.d).p <= data.n]
        hint = f"; try --basis {lower[-1]}" if lower else ""
        raise ConfigurationError(f"basis {s['basis']!r} has p={spec.p} terms but only n={data.n} rows{hint}")
    model = GPModel(data.scale(), data.y, spec)
    mcmc = McmcConfig(
        burnin=s["burnin"], iters=s["iters"], check_every=s["check_every"], rhat_threshold=s["rhat_threshold"]
    )
    seeds = np.random.SeedSequence(s["seed"]).generate_state(2, dtype=np.uint32)
    result = run_two_chains(
        s["variant"], model, PriorConfig(q=s["q"]), mcmc, seeds=(int(seeds[0]), int(seeds[1])), jobs=s["jobs"]
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for k, tr in enumerate(result.traces, start=1):
        tr.to_csv(out / f"trace_chain{k}.csv")
        tr.to_binary(out / f"trace_chain{k}.bin")
    summary = summarize(result.traces).to_dict()
    summary.update({"converged_at": result.converged_at, "rhat": result.rhat, "degraded": result.degraded})
    (out / "summary.json").write_text(dumps_report(summary), encoding="utf-8")
    write_csv(out / TRAIN_FILE, data.X, data.y)
    meta = {
        "schema_version": 1,
        "settings": s,
        "d": data.d,
        "column_ranges": data.column_ranges.tolist(),
        "trace_columns": result.traces[0].columns,
        "n_chains": len(result.traces),
        "burnin_rows_dropped": True,
    }
    (out / MODEL_FILE).write_text(dumps_report(meta), encoding="utf-8")
    return EXIT_OK


def _load_model(model_dir):
    model_dir = Path(model_dir)
    try:
        meta = json.loads((model_dir / MODEL_FILE).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model artifacts in {model_dir}: {exc}") from exc
    X, y, _ = read_csv(model_dir / TRAIN_FILE)
    data = Dataset(X, y, np.array(meta["column_ranges"]))
    spec = BasisSpec(meta["settings"]["basis"], meta["d"])
    cols = meta["trace_columns"]
    traces = []
    for k in range(1, meta["n_chains"] + 1):
        vals = ChainTrace.read_binary(model_dir / f"trace_chain{k}.bin", len(cols))
        traces.append(ChainTrace(meta["settings"]["variant"], cols, vals, 0))
    return meta, data, spec, traces


def cmd_predict(args):
    meta, data, spec, traces = _load_model(args.model_dir)
    Xq, _, header = read_csv(args.query, require_y=False)
    if Xq.shape[1] != meta["d"]:
        raise DimensionError(f"query has {Xq.shape[1]} input columns; the model expects d={meta['d']}")
    thin = args.thin if args.thin is not None else meta["settings"].get("thin", 5)
    model = GPModel(data.scale(), data.y, spec)
    pred = posterior_predict(traces, model, data.scale(Xq), thin=thin)
    out = Path(args.out) if args.out else Path(args.out_dir) / "predictions.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    arr = np.column_stack([Xq, pred.mean, pred.variance])
    hdr = [f"x{k + 1}" for k in range(Xq.shape[1])] + ["mean", "variance"]
    np.savetxt(out, arr, delimiter=",", header=",".join(hdr), comments="", fmt="%.17g")
    return EXIT_OK


def cmd_benchmark(args):
    allowed = [f.name for f in fields(ExperimentConfig) if f.name != "benchmark"]
    defaults = {k: v for k, v in asdict(ExperimentConfig()).items() if k != "benchmark"}
    s = resolve_settings(args, defaults, allowed)
    _validate(s)
    cfg = ExperimentConfig(benchmark=args.name, **s)
    report = replicate_experiment(cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(dumps_report(report), encoding="utf-8")
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "predict": cmd_predict, "benchmark": cmd_benchmark}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required: fit, predict or benchmark")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"bridgegp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigurationError as exc:
        print(f"bridgegp: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DimensionError) as exc:
        print(f"bridgegp: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"bridgegp: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DomainError as exc:
        print(f"bridgegp: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
