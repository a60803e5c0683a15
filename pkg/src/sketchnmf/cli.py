"""Command-line driver: generate, compress, factorize, evaluate, bench.

Every subcommand reads one JSON config. A run directory looks like::

    <output_dir>/data/X.csv, U_true.csv, V_true.csv     (generate)
    <output_dir>/compressed/...                         (compress)
    <output_dir>/factors/U.csv, V.csv, trace.csv, run_manifest.json  (factorize)
    <output_dir>/metrics.json                           (evaluate)
    <output_dir>/bench.csv, bench/<run>/...             (bench)
"""
import argparse
import copy
import csv
import json
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import datagen, evaluation, sketching, solvers
from .errors import ConfigError, ParseError, SketchNMFError
from .objectives import FactorPair

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4

PROBLEMS = ("one_sided_orthogonal", "one_sided_ridge", "two_sided")
DEFAULT_LAMBDA = {"one_sided_orthogonal": 0.1, "one_sided_ridge": 0.1, "two_sided": 0.0}
FULL_LOG_BELOW = 10_000

SCHEMA = {
    "data": {"synthetic": {"m", "n", "r", "seed", "distribution", "noise"},
             "path": None, "format": None},
    "sketch": {"kind": None, "sides": None, "k": None, "seed": None, "variance": None},
    "problem": None,
    "params": {"lambda": None, "sigma": None, "lambda1": None, "lambda2": None,
               "sigma1": None, "sigma2": None},
    "solver": {"method": None, "rank": None, "max_iters": None, "rel_tol": None,
               "window": None, "target_objective": None, "step_alpha": None,
               "denom_guard": None, "seed": None, "init_scale": None},
    "eval": {"with_full_eval": None, "log_every": None},
    "output_dir": None,
    "bench": {"k": None, "lambda": None, "seeds": None, "workers": None},
}

DEFAULTS = {
    "sketch": {"kind": "gaussian_iid", "sides": "left", "k": 10, "seed": 0, "variance": None},
    "problem": "one_sided_ridge",
    "params": {},
    "solver": {"method": "mu", "rank": 10, "max_iters": 1000, "rel_tol": 0.0, "window": 10,
               "target_objective": None, "step_alpha": 1e-3, "denom_guard": 1e-12,
               "seed": 0, "init_scale": None},
    "eval": {"with_full_eval": False, "log_every": None},
    "output_dir": "run",
}


# -- config ---------------------------------------------------------------------

def _reject_unknown(cfg, schema, where):
    if not isinstance(cfg, dict):
        raise ConfigError(f"{where or 'config'} must be an object")
    for key, value in cfg.items():
        if key not in schema:
            raise ConfigError(f"unknown field {where}{key!r}")
        sub = schema[key]
        if isinstance(sub, dict):
            _reject_unknown(value, sub, f"{where}{key}.")
        elif isinstance(sub, set):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}{key} must be an object")
            extra = set(value) - sub
            if extra:
                raise ConfigError(f"unknown field {where}{key}.{sorted(extra)[0]!r}")


def validate_config(raw):
    """Check field names and compatibility, fill defaults; returns a new dict."""
    _reject_unknown(raw, SCHEMA, "")
    cfg = copy.deepcopy(DEFAULTS)
    for key, value in raw.items():
        if isinstance(value, dict) and isinstance(cfg.get(key), dict):
            cfg[key].update(value)
        else:
            cfg[key] = copy.deepcopy(value)
    data = cfg.get("data")
    if data is not None:
        if ("synthetic" in data) == ("path" in data):
            raise ConfigError("data needs exactly one of 'synthetic' or 'path'")
        if "path" in data:
            data.setdefault("format", "csv_dense")
            if data["format"] not in datagen.FORMATS:
                raise ConfigError(f"unknown data format {data['format']!r}")
    if cfg["problem"] not in PROBLEMS:
        raise ConfigError(f"unknown problem {cfg['problem']!r}")
    sk = cfg["sketch"]
    if sk["kind"] not in sketching.KINDS:
        raise ConfigError(f"unknown sketch kind {sk['kind']!r}")
    if sk["sides"] not in ("left", "both"):
        raise ConfigError("sketch.sides must be 'left' or 'both'")
    if cfg["problem"] == "two_sided" and sk["sides"] != "both":
        raise ConfigError("two_sided needs sketch.sides = 'both'")
    if cfg["problem"] != "two_sided" and sk["sides"] != "left":
        raise ConfigError(f"{cfg['problem']} needs sketch.sides = 'left'")
    if cfg["problem"] == "one_sided_orthogonal" and sk["kind"] == "gaussian_iid":
        raise ConfigError("one_sided_orthogonal needs an orthonormal_rows or rangefinder sketch")
    if cfg["solver"]["method"] not in ("mu", "pgd"):
        raise ConfigError(f"unknown solver method {cfg['solver']['method']!r}")
    two = cfg["problem"] == "two_sided"
    allowed = {"lambda1", "lambda2", "sigma1", "sigma2"} if two else {"lambda", "sigma"}
    bad = set(cfg["params"]) - allowed
    if bad:
        raise ConfigError(f"params.{sorted(bad)[0]} does not apply to {cfg['problem']}")
    return cfg


def load_config(path):
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return raw


def apply_overrides(cfg, seed=None, output=None, with_full_eval=False):
    cfg = copy.deepcopy(cfg)
    if seed is not None:
        syn = cfg.get("data", {}).get("synthetic")
        if syn is not None:
            syn["seed"] = seed
        cfg["sketch"]["seed"] = seed
        cfg["solver"]["seed"] = seed
    if output is not None:
        cfg["output_dir"] = str(output)
    if with_full_eval:
        cfg["eval"]["with_full_eval"] = True
    return cfg


# -- pipeline pieces ------------------------------------------------------------

def _synthetic_spec(syn):
    fields = {k: v for k, v in syn.items() if k != "noise"}
    return datagen.SyntheticSpec(**fields)


def resolve_data(cfg):
    """The full data matrix, plus ground truth when synthetic."""
    data = cfg.get("data")
    if data is None:
        raise ConfigError("this command needs a 'data' section")
    if "path" in data:
        return datagen.load_matrix(data["path"], data["format"]), None
    syn = data["synthetic"]
    X, truth = datagen.synthetic_lognormal(_synthetic_spec(syn))
    if syn.get("noise"):
        X = datagen.add_relative_noise(X, syn["noise"], syn.get("seed", 0))
    return X, truth


def _operator(X, kind, side, k, seed, variance):
    m, n = X.shape
    dim = m if side == "left" else n
    if kind == "gaussian_iid":
        return sketching.sample_gaussian_sketch(k, dim, seed, variance, side=side)
    if kind == "orthonormal_rows":
        return sketching.sample_orthonormal_sketch(k, dim, seed, side=side)
    return sketching.rangefinder_sketch(X, k, seed, side=side)


def compress(X, cfg):
    sk = cfg["sketch"]
    A = _operator(X, sk["kind"], "left", sk["k"], sk["seed"], sk["variance"])
    if sk["sides"] == "left":
        return sketching.compress_one_sided(X, A)
    B = _operator(X, sk["kind"], "right", sk["k"], sk["seed"], sk["variance"])
    return sketching.compress_two_sided(X, A, B)


def build_problem(record, cfg):
    problem, params, r = cfg["problem"], cfg["params"], cfg["solver"]["rank"]
    lam = DEFAULT_LAMBDA[problem]
    if problem == "two_sided":
        return solvers.build_problem_two_sided(
            record, r, params.get("lambda1", lam), params.get("lambda2", lam),
            params.get("sigma1"), params.get("sigma2"))
    builder = (solvers.build_problem_one_sided_orthogonal if problem == "one_sided_orthogonal"
               else solvers.build_problem_one_sided_ridge)
    return builder(record, r, params.get("lambda", lam), params.get("sigma"))


def _sigma_of(P):
    if "sigma" in P.params:
        return P.params["sigma"]
    return {"left": P.params["sigma1"], "right": P.params["sigma2"]}


def solver_config(cfg):
    s = cfg["solver"]
    log_every = cfg["eval"]["log_every"]
    if not log_every:
        log_every = 1 if s["max_iters"] < FULL_LOG_BELOW else 100
    return solvers.SolverConfig(
        max_iters=s["max_iters"], rel_tol=s["rel_tol"], window=s["window"],
        target_objective=s["target_objective"], step_alpha=s["step_alpha"],
        denom_guard=s["denom_guard"], seed=s["seed"], log_every=log_every)


def run_solver(record, cfg):
    """Build the problem, initialize and solve; touches nothing but the record."""
    P = build_problem(record, cfg)
    s = cfg["solver"]
    scale = s["init_scale"] or solvers.default_init_scale(record.row_sums, record.m, P.r)
    F0 = solvers.init_factors(record.m, record.n, P.r, s["seed"], scale)
    result = solvers.solve(P, F0, solver_config(cfg), method=s["method"], inplace=True)
    return P, result


def write_trace(path, trace):
    names = list(trace[0].terms) if trace else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "objective", *[f"term:{n}" for n in names], "wall_ms"])
        for e in trace:
            w.writerow([e.iteration, repr(e.objective), *[repr(e.terms[n]) for n in names],
                        f"{e.wall_ms:.3f}"])


def versions():
    return {"sketchnmf": __version__, "numpy": np.__version__,
            "python": platform.python_version()}


def _dump(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, default=float))


# -- subcommands ----------------------------------------------------------------

def cmd_generate(cfg):
    out = Path(cfg["output_dir"]) / "data"
    out.mkdir(parents=True, exist_ok=True)
    X, truth = resolve_data(cfg)
    fmt = cfg["data"].get("format", "csv_dense")
    datagen.save_matrix(out / ("X.csv" if fmt == "csv_dense" else "X.mtx"), X, fmt)
    if truth is not None:
        sketching.write_csv(out / "U_true.csv", truth.U)
        sketching.write_csv(out / "V_true.csv", truth.V)
    _dump(out / "manifest.json", {"config": cfg, "shape": list(X.shape), "versions": versions()})
    return EXIT_OK


def cmd_compress(cfg):
    X, _ = resolve_data(cfg)
    record = compress(X, cfg)
    P = build_problem(record, cfg)
    sketching.save_compressed(record, Path(cfg["output_dir"]) / "compressed",
                              sigma=_sigma_of(P),
                              extra={"problem": cfg["problem"], "params": P.params})
    return EXIT_OK


def cmd_factorize(cfg):
    out = Path(cfg["output_dir"])
    record, manifest = sketching.load_compressed(out / "compressed")
    P, result = run_solver(record, cfg)
    fdir = out / "factors"
    fdir.mkdir(parents=True, exist_ok=True)
    sketching.write_csv(fdir / "U.csv", result.factors.U)
    sketching.write_csv(fdir / "V.csv", result.factors.V)
    write_trace(fdir / "trace.csv", result.trace)
    run = {
        "config": cfg,
        "seeds": {"sketch": manifest["seed"], "init": cfg["solver"]["seed"]},
        "versions": versions(),
        "problem": P.name,
        "params": P.params,
        "sigma": _sigma_of(P),
        "stop_reason": result.stop_reason,
        "iterations": result.iterations,
        "final_objective": result.trace[-1].objective,
    }
    if cfg["eval"]["with_full_eval"]:
        X, _ = resolve_data(cfg)
        report = evaluation.metrics_report(
            X, result.factors, result.trace[-1].terms,
            record.A if hasattr(record, "A") else None,
            P.params["lambda"] if P.name == "one_sided_ridge" else None)
        (out / "metrics.json").write_text(report.to_json())
        run["metrics"] = json.loads(report.to_json())
    _dump(fdir / "run_manifest.json", run)
    return EXIT_DIVERGED if result.stop_reason == "diverged" else EXIT_OK


def cmd_evaluate(cfg):
    out = Path(cfg["output_dir"])
    X, _ = resolve_data(cfg)
    F = FactorPair(sketching.read_csv(out / "factors" / "U.csv"),
                   sketching.read_csv(out / "factors" / "V.csv"))
    run = json.loads((out / "factors" / "run_manifest.json").read_text())
    lam = run["params"].get("lambda") if run["problem"] == "one_sided_ridge" else None
    operator = None
    if (out / "compressed" / "manifest.json").exists():
        record, _ = sketching.load_compressed(out / "compressed")
        operator = getattr(record, "A", None)
    terms = {}
    trace_path = out / "factors" / "trace.csv"
    with open(trace_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows:
        terms = {k[5:]: float(v) for k, v in rows[-1].items() if k.startswith("term:")}
    report = evaluation.metrics_report(X, F, terms, operator, lam)
    (out / "metrics.json").write_text(report.to_json())
    return EXIT_OK


def _bench_one(job):
    cfg, X = job
    record = compress(X, cfg)
    P, result = run_solver(record, cfg)
    run_dir = Path(cfg["output_dir"])
    run_dir.mkdir(parents=True, exist_ok=True)
    sketching.write_csv(run_dir / "U.csv", result.factors.U)
    sketching.write_csv(run_dir / "V.csv", result.factors.V)
    write_trace(run_dir / "trace.csv", result.trace)
    F = result.factors
    return {
        "k": cfg["sketch"]["k"],
        "lambda": cfg["params"].get("lambda", cfg["params"].get("lambda1")),
        "seed": cfg["sketch"]["seed"],
        "iters": result.iterations,
        "relative_error": evaluation.relative_error(X, F),
        "cosine_similarity": evaluation.cosine_similarity(X, F),
        "stop_reason": result.stop_reason,
    }


def bench_jobs(cfg, X):
    bench = cfg.get("bench") or {}
    ks = bench.get("k") or [cfg["sketch"]["k"]]
    lams = bench.get("lambda") or [None]
    seeds = bench.get("seeds") or [cfg["sketch"]["seed"]]
    jobs = []
    for k in ks:
        for lam in lams:
            for seed in seeds:
                c = copy.deepcopy(cfg)
                c["sketch"]["k"] = k
                c["sketch"]["seed"] = seed
                c["solver"]["seed"] = seed
                if lam is not None:
                    if c["problem"] == "two_sided":
                        c["params"].update(lambda1=lam, lambda2=lam)
                    else:
                        c["params"]["lambda"] = lam
                c["params"].setdefault("lambda" if c["problem"] != "two_sided" else "lambda1",
                                       DEFAULT_LAMBDA[c["problem"]])
                c["output_dir"] = str(Path(cfg["output_dir"]) / "bench" / f"k{k}_lam{lam}_seed{seed}")
                jobs.append((c, X))
    return jobs


def cmd_bench(cfg):
    X, _ = resolve_data(cfg)
    jobs = bench_jobs(cfg, X)
    workers = (cfg.get("bench") or {}).get("workers") or 1
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_bench_one, jobs))
    else:
        rows = [_bench_one(job) for job in jobs]
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    fields = ["k", "lambda", "seed", "iters", "relative_error", "cosine_similarity"]
    with open(out / "bench.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)
    if any(r["stop_reason"] == "diverged" for r in rows):
        return EXIT_DIVERGED
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "compress": cmd_compress,
    "factorize": cmd_factorize,
    "evaluate": cmd_evaluate,
    "bench": cmd_bench,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sketchnmf", description="Nonnegative matrix factorization from compressed data.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--output", help="run directory (overrides output_dir)")
    parser.add_argument("--seed", type=int, help="seed for data, sketch and init (overrides config)")
    parser.add_argument("--with-full-eval", action="store_true",
                        help="allow factorize to read the full data for metrics")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be unsigned")
        cfg = validate_config(load_config(args.config))
        cfg = apply_overrides(cfg, args.seed, args.output, args.with_full_eval)
        return COMMANDS[args.command](cfg)
    except (ConfigError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ParseError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except FloatingPointError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except SketchNMFError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
