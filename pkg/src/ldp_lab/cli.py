"""Command-line entry point ``ldp-lab``.

Exit codes: 0 ok, 2 configuration error, 3 runtime error, 4 a bound check failed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import BoundReport, onebit_sketch_search, run_oracle_suite
from .config import PARAM_DEFAULTS, TOP_DEFAULTS, ConfigError, RunConfig, config_from_dict, emit_config, parse_config
from .harness import (ALGORITHMS, SWEEP_FIELDS, THRESHOLD_FIELDS, NotBracketable, SweepSpec, TrialOptions,
                      adaptive_w1_expectation, baseline_adaptive_w1, baseline_coupon_bandwidth,
                      coupon_expectation, csv_text, load_calibration, read_csv_rows, run_sweep, run_trial,
                      scaling_fit, threshold_row, threshold_users, user_scale)
from .maxsense import sketch_writer, write_counts_csv
from .model import ModelParams, sample_ground_truth, sample_population, validate_params, write_dataset
from .pairwise import write_matrix_csv
from .plot import loglog_svg
from .rng import substream

EXIT_CONFIG, EXIT_RUNTIME, EXIT_BOUNDS = 2, 3, 4
THREADS_ENV = "LDP_LAB_THREADS"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def resolve_threads(arg: int | None) -> int:
    if arg is not None:
        n = arg
    elif os.environ.get(THREADS_ENV):
        try:
            n = int(os.environ[THREADS_ENV])
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer") from None
    else:
        n = os.cpu_count() or 1
    if n < 1:
        raise ConfigError("thread count must be >= 1")
    return n


def provenance(cfg: RunConfig | dict, seed: int) -> list[str]:
    """Header lines: tool version, full config hash, master seed, resolved config."""
    d = cfg.to_dict() if isinstance(cfg, RunConfig) else cfg
    canon = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return [f"ldp-lab {__version__}", f"config_sha256 {hashlib.sha256(canon.encode()).hexdigest()}",
            f"seed {seed}", "config " + canon]


def load_run_config(args) -> RunConfig:
    """The config file (if any) with command-line overrides applied."""
    if args.config:
        base = json.loads(parse_config(args.config).to_json())
    else:
        base = {"params": {}}
    params = base["params"]
    for key in ("N", "U", "w", "epsilon", "theta"):
        v = getattr(args, key, None)
        if v is not None:
            params[key] = v
    if getattr(args, "b", None) is not None:
        params["b"] = [args.b]
        params["L"] = len(args.b)
        params["beta"] = [1.0 / len(args.b)] * len(args.b)
    for key in ("trials", "target", "engine", "mode", "algorithm"):
        v = getattr(args, key, None)
        if v is not None:
            base[key] = v
    if args.seed is not None:
        base["seed"] = args.seed
    cfg = config_from_dict(base)
    try:
        validate_params(cfg.model())
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid model parameters: {exc}") from exc
    if cfg.algorithm not in ALGORITHMS:
        raise ConfigError(f"key 'algorithm': unknown algorithm {cfg.algorithm!r}")
    if args.emit_config:
        emit_config(cfg, args.emit_config)
    return cfg


def _out_path(cfg: RunConfig, name) -> Path:
    p = Path(name)
    if not p.is_absolute():
        p = Path(cfg.out_dir) / p
    if not p.parent.exists():
        raise ConfigError(f"output directory {p.parent} does not exist")
    return p


def _write(path: Path | None, text: str):
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)


# -- subcommands -------------------------------------------------------------------------

def cmd_gen(args):
    cfg = load_run_config(args)
    p = cfg.model()
    out = _out_path(cfg, args.out)
    truth = sample_ground_truth(p, cfg.seed)
    pop = sample_population(p, truth, cfg.seed)
    write_dataset(out, p, truth, pop, cfg.seed, {"tool": f"ldp-lab/{__version__}", "config_sha256": cfg.hash()})
    return 0


def _cmd_trial(args, algorithm):
    args.algorithm = algorithm
    cfg = load_run_config(args)
    p = cfg.model()
    head = provenance(cfg, cfg.seed)
    capture = {}
    fh = None
    engine = cfg.engine
    if getattr(args, "dump_sketches", None):
        if algorithm != "maxsense":
            raise ConfigError("--dump-sketches is available for maxsense only")
        engine = "dense"
        fh = open(_out_path(cfg, args.dump_sketches), "w")
        fh.writelines(f"# {h}\n" for h in head)
        capture["sink"] = sketch_writer(fh)
    opts = TrialOptions(engine=engine, mode=cfg.mode, restarts=cfg.restarts, distortion=cfg.distortion)
    try:
        res = run_trial(algorithm, p, cfg.seed, opts, capture)
    finally:
        if fh is not None:
            fh.close()
    if getattr(args, "dump_counts", None):
        write_counts_csv(_out_path(cfg, args.dump_counts), capture["counts"], head)
    if getattr(args, "dump_matrix", None):
        write_matrix_csv(_out_path(cfg, args.dump_matrix), capture["matrix"], head)
    print(res.to_json())
    return 0


def cmd_sweep(args):
    cfg = load_run_config(args)
    if not cfg.grid:
        raise ConfigError("sweep grid is empty")
    spec = SweepSpec(cfg.algorithm, cfg.model(), cfg.grid, cfg.trials, cfg.seed, cfg.distortion, cfg.engine)
    try:
        list(spec.cells())
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rows = run_sweep(spec, resolve_threads(args.threads))
    _write(_out_path(cfg, args.out) if args.out else None, csv_text(SWEEP_FIELDS, rows, provenance(cfg, cfg.seed)))
    return 0


def default_u0(algorithm, p) -> int:
    """Threshold search start from the frozen pilot constants."""
    cal = load_calibration()
    if algorithm == "pairwise":
        return user_scale("pairwise", p, cal["pairwise"]["c_pilot"])
    return user_scale(algorithm, p, cal["scaling"]["U0_mult"])


def _threshold_job(job):
    algorithm, pdict, target, trials, U0, U_cap, seed0, opts = job
    p = ModelParams.from_dict(pdict)
    U0 = U0 if U0 is not None else default_u0(algorithm, p)
    res = threshold_users(algorithm, p, target, trials, U0, U_cap, seed0, opts)
    return threshold_row(algorithm, p, target, res)


def cmd_threshold(args):
    cfg = load_run_config(args)
    U0 = args.U0 if args.U0 is not None else cfg.U0
    opts = TrialOptions(engine=cfg.engine, mode=cfg.mode, restarts=cfg.restarts, distortion=cfg.distortion)
    if cfg.grid:
        spec = SweepSpec(cfg.algorithm, cfg.model(), cfg.grid, cfg.trials, cfg.seed, cfg.distortion, cfg.engine)
        try:
            cells = list(spec.cells())
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        cells = [cfg.model()]
    jobs = [(cfg.algorithm, p.to_dict(), cfg.target, cfg.trials, U0, cfg.U_cap, cfg.seed, opts) for p in cells]
    threads = min(resolve_threads(args.threads), len(jobs))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(_threshold_job, jobs))
    else:
        rows = [_threshold_job(j) for j in jobs]
    _write(_out_path(cfg, args.out) if args.out else None,
           csv_text(THRESHOLD_FIELDS, rows, provenance(cfg, cfg.seed)))
    return 0


def cmd_bounds(args):
    seed = args.seed if args.seed is not None else 0
    if args.max_n < 2:
        raise ConfigError("--max-n must be >= 2")
    if args.kernels < 1:
        raise ConfigError("--kernels must be >= 1")
    try:
        reports = run_oracle_suite(args.max_n, tuple(args.w), tuple(args.epsilon), args.kernels, seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    cfg_like = {"max_n": args.max_n, "w": args.w, "epsilon": args.epsilon, "kernels": args.kernels, "seed": seed}
    head = provenance(cfg_like, seed)
    text = csv_text(BoundReport.CSV_FIELDS, [r.csv_row() for r in reports], head)
    if args.out:
        Path(args.out).write_text(text)
    failed = 0
    cells = {}
    for r in reports:
        key = (r.N, r.w, r.epsilon)
        ok, n = cells.get(key, (0, 0))
        cells[key] = (ok + r.passed, n + 1)
        failed += not r.passed
    print(f"{'N':>3} {'w':>3} {'eps':>6} {'passed':>8} {'total':>6}  status")
    for (N, w, eps), (ok, n) in sorted(cells.items()):
        print(f"{N:>3} {w:>3} {eps:>6.3f} {ok:>8} {n:>6}  {'PASS' if ok == n else 'FAIL'}")
    for N in range(2, min(args.max_n, 5) + 1):
        mi, _ = onebit_sketch_search(N)
        ok = mi <= 1.0 / N + 1e-12
        failed += not ok
        print(f"one-bit N={N}: max MI {mi:.6f} <= 1/N = {1 / N:.6f}  {'PASS' if ok else 'FAIL'}")
    print(f"{'all checks passed' if not failed else f'{failed} check(s) FAILED'}")
    return EXIT_BOUNDS if failed else 0


def cmd_baseline(args):
    seed = args.seed if args.seed is not None else 0
    if any(n < 2 for n in args.N) and args.scheme == "coupon":
        raise ConfigError("coupon baseline needs N >= 2")
    if args.runs < 1:
        raise ConfigError("--runs must be >= 1")
    rows = []
    for N in args.N:
        counts = []
        for r in range(args.runs):
            rng = substream(seed, "baseline", args.scheme, N, r)
            truth = rng.integers(0, 2, size=N)
            if args.scheme == "adaptive":
                counts.append(baseline_adaptive_w1(truth, rng))
            else:
                counts.append(baseline_coupon_bandwidth(truth, rng))
        mean = float(np.mean(counts))
        if args.scheme == "adaptive":
            expect, scale = adaptive_w1_expectation(N), 2.0 * N * N
        else:
            expect, scale = coupon_expectation(N), N * math.log2(N) ** 2
        rows.append([args.scheme, N, args.runs, repr(mean), repr(float(expect)), repr(mean / scale)])
    cfg_like = {"scheme": args.scheme, "N": args.N, "runs": args.runs, "seed": seed}
    head = provenance(cfg_like, seed)
    text = csv_text(("scheme", "N", "runs", "mean_queries", "expected_queries", "normalized"), rows, head)
    _write(Path(args.out) if args.out else None, text)
    return 0


def cmd_plot(args):
    path = Path(args.input)
    if not path.exists():
        raise ConfigError(f"input {path} does not exist")
    rows = read_csv_rows(path)
    if not rows:
        raise ConfigError(f"{path} has no data rows")
    y = args.y or ("U_star" if "U_star" in rows[0] else "U")
    for col in (args.x, y):
        if col not in rows[0]:
            raise ConfigError(f"column {col!r} not in {path}")
    series = {}
    dropped = 0
    for r in rows:
        key = r.get(args.group, "all") if args.group else r.get("algorithm", "all")
        pt = (float(r[args.x]), float(r[y]))
        if pt[0] > 0 and pt[1] > 0:
            series.setdefault(key, []).append(pt)
        else:
            dropped += 1
    if dropped:
        print(f"ldp-lab: dropped {dropped} non-positive point(s) from the log-log plot", file=sys.stderr)
    if not series:
        raise ConfigError(f"no positive ({args.x}, {y}) points to plot")
    fits = {k: scaling_fit(v) for k, v in series.items() if len({x for x, _ in v}) >= 3}
    head = [ln[2:] for ln in path.read_text().splitlines() if ln.startswith("# ")]
    head = [f"ldp-lab {__version__}", f"source {path.name}"] + head
    svg = loglog_svg(series, args.x, y, args.title or f"{y} vs {args.x}", head, fits)
    Path(args.out).write_text(svg)
    for k, (s, _, r2) in fits.items():
        print(f"{k}: slope {s:.4f} R^2 {r2:.4f}")
    return 0


# -- parser ----------------------------------------------------------------------------------

def _model_flags(sp):
    sp.add_argument("--config", help="JSON run configuration (unknown keys are rejected)")
    sp.add_argument("--emit-config", metavar="PATH", help="write the resolved configuration as JSON")
    sp.add_argument("--N", type=int, help="number of items")
    sp.add_argument("--U", type=int, help=f"number of users (default {PARAM_DEFAULTS['U']})")
    sp.add_argument("--w", type=int, help="rated items per user")
    sp.add_argument("--epsilon", type=float, help=f"privacy level (default {PARAM_DEFAULTS['epsilon']})")
    sp.add_argument("--theta", type=float, help=f"MaxSense sensing weight (default {PARAM_DEFAULTS['theta']})")
    sp.add_argument("--b", type=float, nargs="+", help="affinities of the single user class, one per item class "
                    "(default 0.9 0.1)")
    sp.add_argument("--engine", choices=("dense", "marginal"),
                    help=f"MaxSense simulation engine (default {TOP_DEFAULTS['engine']})")
    sp.add_argument("--mode", choices=("random-global", "random-rated"),
                    help=f"Pairwise pair assignment (default {TOP_DEFAULTS['mode']})")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ldp-lab", description=__doc__.splitlines()[0],
                 epilog="Config defaults: " + json.dumps({**TOP_DEFAULTS, "params": PARAM_DEFAULTS}) +
                 f". Threads default to {THREADS_ENV} or the logical core count.")
    ap.add_argument("--version", action="version", version=f"ldp-lab {__version__}")
    ap.add_argument("--seed", type=int, help="master seed (overrides the config)")
    ap.add_argument("--threads", type=int, help=f"worker processes (env {THREADS_ENV}; default logical cores)")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (overrides the config)")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker processes")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _add = sub.add_parser

    def add_parser(name, **kw):
        return _add(name, parents=[common], **kw)

    sub.add_parser = add_parser

    sp = sub.add_parser("gen", help="write a synthetic dataset file")
    _model_flags(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen)

    for name, algo in (("pp", "pairwise"), ("maxsense", "maxsense"), ("mms", "multi-maxsense")):
        sp = sub.add_parser(name, help=f"run one {algo} trial and print the result as JSON")
        _model_flags(sp)
        if algo == "pairwise":
            sp.add_argument("--dump-matrix", metavar="PATH", help="write the i,j,count preference matrix")
        else:
            sp.add_argument("--dump-counts", metavar="PATH", help="write item,B_i counts")
        if algo == "maxsense":
            sp.add_argument("--dump-sketches", metavar="PATH", help="write user_id,S,hex(H) lines (dense engine)")
        sp.set_defaults(func=lambda a, algo=algo: _cmd_trial(a, algo))

    for name, func, helptext in (("sweep", cmd_sweep, "success rates over a parameter grid"),
                                 ("threshold", cmd_threshold, "smallest U reaching the target success rate")):
        sp = sub.add_parser(name, help=helptext)
        _model_flags(sp)
        sp.add_argument("--algorithm", choices=ALGORITHMS)
        sp.add_argument("--trials", type=int, help=f"trials per cell (default {TOP_DEFAULTS['trials']})")
        sp.add_argument("--target", type=float, help=f"target success rate (default {TOP_DEFAULTS['target']})")
        sp.add_argument("--out", help="CSV output path (default stdout)")
        if name == "threshold":
            sp.add_argument("--U0", type=int, help="first probe (default from the calibration file)")
        sp.set_defaults(func=func)

    sp = sub.add_parser("bounds", help="exact mutual-information oracle suite")
    sp.add_argument("--max-n", type=int, default=3)
    sp.add_argument("--w", type=int, nargs="+", default=[1, 2])
    sp.add_argument("--epsilon", type=float, nargs="+", default=[0.3, 0.7])
    sp.add_argument("--kernels", type=int, default=200, help="random kernels per cell")
    sp.add_argument("--out", help="CSV report path")
    sp.set_defaults(func=cmd_bounds)

    sp = sub.add_parser("baseline", help="non-private w=1 query baselines")
    sp.add_argument("--scheme", choices=("adaptive", "coupon"), required=True)
    sp.add_argument("--N", type=int, nargs="+", required=True)
    sp.add_argument("--runs", type=int, default=1000)
    sp.add_argument("--out", help="CSV output path (default stdout)")
    sp.set_defaults(func=cmd_baseline)

    sp = sub.add_parser("plot", help="log-log SVG of a sweep or threshold CSV with fitted slopes")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--x", default="N")
    sp.add_argument("--y", help="default U_star if present, else U")
    sp.add_argument("--group", help="column splitting the series (default algorithm)")
    sp.add_argument("--title")
    sp.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        return args.func(args)
    except ConfigError as exc:
        print(f"ldp-lab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NotBracketable as exc:
        print(f"ldp-lab: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (RuntimeError, ValueError, OSError, MemoryError) as exc:
        print(f"ldp-lab: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
