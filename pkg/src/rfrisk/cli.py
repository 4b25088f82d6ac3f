"""Config-driven command line entry point.

Usage::

    rfrisk --config run.json [--out result.csv] [--threads 4] [--tolerance 1e-12]

The config is one JSON document whose ``"command"`` field selects one of
``predict``, ``simulate``, ``sweep``, ``powerlaw``, ``estimate`` or
``check-limits``.  A positional command may be given instead of (or must
agree with) the config field.  Output is CSV (JSON for ``check-limits``);
every row carries the config hash and seed.
"""
import argparse
from concurrent.futures import ThreadPoolExecutor
import csv
import hashlib
import io
import json
import math
import os
import sys

import numpy as np

from . import estimation, limits, powerlaw, risk, simulator
from .eigensolver import DEFAULT_TOL
from .errors import ConfigError, DivergentSumError, NumericalError
from .spectrum import PowerlawTask, TaskEigenstructure, make_powerlaw_structure

COMMANDS = ("predict", "simulate", "sweep", "powerlaw", "estimate", "check-limits")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
PROVENANCE = ("config_hash", "seed")


def config_hash(cfg: dict) -> str:
    """First 16 hex digits of the sha256 of the canonical JSON form."""
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def fmt(x):
    """CSV cell text; floats use 17 significant digits so output round-trips."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    if x is None:
        return ""
    return str(x)


def write_csv(fh, header, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])


# --- config parsing -------------------------------------------------------

def _need(cfg, key, where="config"):
    if key not in cfg:
        raise ConfigError(f"{where} is missing required field {key!r}")
    return cfg[key]


def parse_grid(spec, name, integer=False):
    """A grid is a number, a list, or ``{"geomspace"|"linspace": [start, stop, num]}``."""
    if isinstance(spec, dict):
        if len(spec) != 1:
            raise ConfigError(f"grid {name!r}: give exactly one of geomspace/linspace")
        (kind, args), = spec.items()
        if kind not in ("geomspace", "linspace") or not isinstance(args, list) or len(args) != 3:
            raise ConfigError(f"grid {name!r}: expected {{'geomspace': [start, stop, num]}}")
        vals = getattr(np, kind)(float(args[0]), float(args[1]), int(args[2])).tolist()
    elif isinstance(spec, (list, tuple)):
        vals = list(spec)
    elif isinstance(spec, (int, float)) and not isinstance(spec, bool):
        vals = [spec]
    else:
        raise ConfigError(f"grid {name!r} must be a number, list or range object")
    if not vals:
        raise ConfigError(f"grid {name!r} is empty")
    try:
        vals = [float(v) for v in vals]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"grid {name!r} holds a non-number") from exc
    if integer:
        vals = [float(round(v)) if isinstance(spec, dict) else v for v in vals]
        if any(v != int(v) or v < 1 for v in vals):
            raise ConfigError(f"grid {name!r} must hold positive integers")
        vals = [int(v) for v in vals]
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigError(f"grid {name!r} must be strictly increasing")
    return vals


class TaskSpec:
    """Builds a TaskEigenstructure from a config block, with ``n``-dependent noise.

    ``{"type": "powerlaw", "alpha", "beta", "i0", "s_rel_sq" | "noise_var",
    "modes", "tail"}`` or ``{"type": "explicit", <TaskEigenstructure fields>}``.
    """

    def __init__(self, block, tail_default=True):
        if not isinstance(block, dict):
            raise ConfigError("task must be an object")
        kind = block.get("type", "powerlaw")
        self.task = None
        self.noise_var = float(block.get("noise_var", 0.0))
        if kind == "powerlaw":
            self.task = PowerlawTask.from_dict(
                {"alpha": _need(block, "alpha", "task"), "beta": _need(block, "beta", "task"),
                 "i0": block.get("i0", 1), "s_rel_sq": block.get("s_rel_sq", 0.0),
                 "head_overrides": block.get("head_overrides")})
            if self.task.s_rel_sq and "noise_var" in block:
                raise ConfigError("task: give s_rel_sq or noise_var, not both")
            modes = block.get("modes", 10000)
            if int(modes) != modes or modes < 1:
                raise ConfigError("task.modes must be a positive integer")
            self.base = make_powerlaw_structure(self.task, int(modes),
                                                tail=bool(block.get("tail", tail_default)))
            self.base = self.base.with_scale(float(block.get("scale", 1.0)))
        elif kind == "explicit":
            self.base = TaskEigenstructure.from_dict(block)
        else:
            raise ConfigError(f"unknown task type {kind!r}")

    def at(self, n) -> TaskEigenstructure:
        if self.task is not None and self.task.s_rel_sq:
            return self.base.with_noise(powerlaw.scaled_noise(self.task, n))
        if self.noise_var:
            return self.base.with_noise(self.noise_var)
        return self.base


def _pmap(fn, items, threads):
    # results keep grid order regardless of completion order
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _model(cfg):
    m = cfg.get("model", "rf")
    if m not in ("rf", "krr"):
        raise ConfigError(f"model must be 'rf' or 'krr', got {m!r}")
    return m


# --- commands ---------------------------------------------------------------

def cmd_predict(cfg, ctx):
    """Theory grid: one risk-schema row per ``(n, k, delta)`` point."""
    spec = TaskSpec(_need(cfg, "task"))
    model = _model(cfg)
    ns = parse_grid(_need(cfg, "n"), "n")
    ks = [math.inf] if model == "krr" else parse_grid(_need(cfg, "k"), "k")
    ds = parse_grid(_need(cfg, "delta"), "delta")
    points = [(n, k, d) for n in ns for k in ks for d in ds]

    def one(p):
        n, k, d = p
        ts = spec.at(n)
        try:
            rep = risk.krr_risk(ts, n, d, tol=ctx.tol) if model == "krr" else risk.rf_risk(ts, n, k, d, tol=ctx.tol)
        except (NumericalError, DivergentSumError) as exc:
            raise type(exc)(f"at n={n:g}, k={k:g}, delta={d:g}: {exc}") from exc
        return rep.csv_row()

    rows = _pmap(one, points, ctx.threads)
    return PROVENANCE + risk.CSV_COLUMNS, [(ctx.hash, ctx.seed) + r for r in rows]


def _sim_grid(cfg):
    spec = TaskSpec(_need(cfg, "task"), tail_default=False)
    model = _model(cfg)
    n = _need(cfg, "n")
    if isinstance(n, bool) or not isinstance(n, (int, float)) or int(n) != n or n < 1:
        raise ConfigError("n must be a single positive integer for simulation")
    n = int(n)
    ks = [None] if model == "krr" else parse_grid(_need(cfg, "k"), "k", integer=True)
    ds = parse_grid(_need(cfg, "delta"), "delta")
    trials = cfg.get("trials", 45)
    if isinstance(trials, bool) or int(trials) != trials or trials < 2:
        raise ConfigError("trials must be an integer >= 2")
    return spec, model, n, ks, ds, int(trials)


def _run_sim(cfg, ctx):
    spec, model, n, ks, ds, trials = _sim_grid(cfg)
    ts = spec.at(n)
    if model == "krr":
        out = simulator.simulate_krr_sweep(ts, n, ds, trials, ctx.seed, ctx.threads)
        res = {(None, d): out[d] for d in ds}
    else:
        res = simulator.simulate_rf_sweep(ts, n, ks, ds, trials, ctx.seed,
                                          bool(cfg.get("fix_dataset_across_k", True)), ctx.threads)
    return spec, model, n, ks, ds, res


SIM_COLUMNS = ("n", "k", "delta", "trials", "train_mean", "train_se", "test_mean", "test_se")


def cmd_simulate(cfg, ctx):
    """Monte Carlo grid; summary rows, or per-trial rows with ``"per_trial": true``."""
    _, _, n, ks, ds, res = _run_sim(cfg, ctx)
    if cfg.get("per_trial", False):
        header = PROVENANCE + ("n", "k", "delta", "trial", "train_mse", "test_mse")
        rows = []
        for k in ks:
            for d in ds:
                for r in res[(k, d)].csv_rows():
                    rows.append((ctx.hash, ctx.seed) + r[:3] + (r[3],) + r[5:])
        return header, rows
    rows = []
    for k in ks:
        for d in ds:
            r = res[(k, d)]
            rows.append((ctx.hash, ctx.seed, n, math.inf if k is None else k, d, r.trials,
                         r.train_mean, r.train_se, r.test_mean, r.test_se))
    return PROVENANCE + SIM_COLUMNS, rows


def cmd_sweep(cfg, ctx):
    """Simulation joined with theory; ``z`` columns are gaps in standard errors."""
    spec, model, n, ks, ds, res = _run_sim(cfg, ctx)
    ts = spec.at(n)
    header = PROVENANCE + SIM_COLUMNS + ("e_test", "e_train", "test_z", "train_z")
    rows = []
    for k in ks:
        for d in ds:
            r = res[(k, d)]
            rep = risk.krr_risk(ts, n, d, tol=ctx.tol) if k is None else risk.rf_risk(ts, n, k, d, tol=ctx.tol)
            tz = (r.test_mean - rep.e_test) / r.test_se if r.test_se > 0 else math.nan
            rz = (r.train_mean - rep.e_train) / r.train_se if r.train_se > 0 else math.nan
            rows.append((ctx.hash, ctx.seed, n, math.inf if k is None else k, d, r.trials,
                         r.train_mean, r.train_se, r.test_mean, r.test_se,
                         rep.e_test, rep.e_train, tz, rz))
    return header, rows


def cmd_powerlaw(cfg, ctx):
    """Ratio curves for each relative noise level, with the minimum marked.

    Every row repeats the optimal ratio, its branch and the interpolation
    threshold of the task so the file is self-describing.
    """
    alpha, beta = float(_need(cfg, "alpha")), float(_need(cfg, "beta"))
    noises = parse_grid(cfg.get("s_rel_sq", [0.0]), "s_rel_sq")
    n = float(_need(cfg, "n"))
    ratios = None if "ratios" not in cfg else parse_grid(cfg["ratios"], "ratios")
    threshold = powerlaw.interpolation_threshold(alpha, beta)
    header = PROVENANCE + ("alpha", "beta", "s_rel_sq", "n", "ratio", "e_test", "is_grid_min",
                           "ratio_star", "branch", "threshold")
    rows = []
    for s in noises:
        task = PowerlawTask(alpha, beta, s_rel_sq=s)
        curve = powerlaw.ratio_curve(task, n, ratios)
        opt = powerlaw.optimal_ratio(task)
        imin = int(np.argmin(curve.e_test))
        for i, (r, e) in enumerate(curve.rows()):
            rows.append((ctx.hash, ctx.seed, alpha, beta, s, n, r, e, i == imin,
                         opt.ratio_star, opt.branch.value, threshold))
    return header, rows


def cmd_estimate(cfg, ctx):
    """Proxy (and optionally direct) exponent fits from a kernel file."""
    try:
        ds = estimation.load_kernel_file(_need(cfg, "kernel"))
    except OSError as exc:
        raise ConfigError(f"cannot read kernel file: {exc}") from exc
    window = tuple(ctx.window or cfg.get("window", estimation.DEFAULT_WINDOW))
    if len(window) != 2:
        raise ConfigError("window must be [lo, hi]")
    kw = dict(subsample_seed=ctx.seed, reps=int(cfg.get("reps", estimation.DEFAULT_REPS)),
              window=window, loss=cfg.get("loss", "lsq"))
    sizes_a = None if "sizes" not in cfg else parse_grid(cfg["sizes"], "sizes", integer=True)
    sizes_b = None if "beta_sizes" not in cfg else parse_grid(cfg["beta_sizes"], "beta_sizes", integer=True)
    fits = [("proxy", "alpha", estimation.measure_alpha(ds, sizes_a, **kw)),
            ("proxy", "beta", estimation.measure_beta(ds, sizes_b, held_out=cfg.get("held_out"), **kw))]
    if cfg.get("direct", True):
        fa, fb = estimation.direct_exponents(ds, window=window, loss=kw["loss"])
        fits += [("direct", "alpha", fa), ("direct", "beta", fb)]
    header = PROVENANCE + ("method", "quantity", "exponent", "slope", "intercept",
                           "window_lo", "window_hi", "residual", "flags")
    rows = [(ctx.hash, ctx.seed, m, q, f.exponent, f.slope, f.intercept, f.window[0], f.window[1],
             f.residual, ";".join(f.flags)) for m, q, f in fits]
    return header, rows


def cmd_check_limits(cfg, ctx):
    """JSON list of limit comparisons; ``passed`` uses ``max_gap`` (default 1e-3)."""
    spec = TaskSpec(_need(cfg, "task"))
    n, k = float(_need(cfg, "n")), float(_need(cfg, "k"))
    max_gap = float(cfg.get("max_gap", 1e-3))
    out = []
    for r in limits.check_all_limits(spec.at(n), n, k, cfg.get("grid")):
        d = r.to_dict()
        d.update(config_hash=ctx.hash, seed=ctx.seed, passed=bool(r.relative_gap < max_gap))
        out.append(d)
    return out


HANDLERS = {"predict": cmd_predict, "simulate": cmd_simulate, "sweep": cmd_sweep,
            "powerlaw": cmd_powerlaw, "estimate": cmd_estimate, "check-limits": cmd_check_limits}


class _Context:
    def __init__(self, cfg, args):
        self.tol = args.tolerance if args.tolerance is not None else float(cfg.get("tolerance", DEFAULT_TOL))
        if not self.tol > 0:
            raise ConfigError("tolerance must be > 0")
        self.threads = args.threads
        if self.threads < 1:
            raise ConfigError("--threads must be >= 1")
        seed = cfg.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        self.seed = seed
        self.window = args.window
        eff = dict(cfg)
        if args.tolerance is not None:
            eff["tolerance"] = args.tolerance
        if args.window is not None:
            eff["window"] = list(args.window)
        self.hash = config_hash(eff)


def _window_arg(text):
    try:
        lo, hi = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected LO,HI") from None
    return (lo, hi)


def build_parser():
    p = argparse.ArgumentParser(prog="rfrisk", description=__doc__.split("\n")[0])
    p.add_argument("command", nargs="?", choices=COMMANDS,
                   help="command to run; defaults to the config's 'command' field")
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--threads", type=int, default=1, help="worker threads")
    p.add_argument("--tolerance", type=float, help="solver residual tolerance override")
    p.add_argument("--window", type=_window_arg, help="exponent fit window LO,HI as fractions")
    return p


def run(cfg: dict, args) -> str:
    """Execute a parsed config and return the output text."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    command = cfg.get("command", args.command)
    if command is None:
        raise ConfigError("no command given in config or on the command line")
    if args.command is not None and args.command != command:
        raise ConfigError(f"command {args.command!r} disagrees with config {command!r}")
    if command not in HANDLERS:
        raise ConfigError(f"unknown command {command!r}")
    ctx = _Context(cfg, args)
    result = HANDLERS[command](cfg, ctx)
    if command == "check-limits":
        return json.dumps(result, indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    write_csv(buf, *result)
    return buf.getvalue()


def _check_writable(path):
    target = path if os.path.exists(path) else (os.path.dirname(os.path.abspath(path)))
    if os.path.isdir(path) or not os.access(target, os.W_OK):
        raise ConfigError(f"output path not writable: {path}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load config {args.config}: {exc}") from exc
        out_path = args.out or (cfg.get("out") if isinstance(cfg, dict) else None)
        if out_path:
            _check_writable(out_path)
        text = run(cfg, args)
        if out_path:
            with open(out_path, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    except (ValueError, KeyError, TypeError) as exc:
        # ConfigError and InvalidArgumentError are ValueErrors; bad JSON values land here too
        print(f"rfrisk: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, DivergentSumError) as exc:
        print(f"rfrisk: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
