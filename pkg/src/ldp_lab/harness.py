"""Trials, success rates, user-count thresholds, scaling fits and the two
non-private baselines."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .clustering import match_labels
from .maxsense import (mms_questions, ms_cluster, recommended_users, simulate_maxsense, simulate_mms)
from .model import ModelParams, sample_ground_truth, validate_params
from .pairwise import pp_cluster, simulate_pairwise

ALGORITHMS = ("pairwise", "maxsense", "multi-maxsense")
WILSON_Z = 1.959963984540054
DEFAULT_U_CAP = 200_000_000

SWEEP_FIELDS = ("algorithm", "N", "U", "K", "L", "w", "epsilon", "theta", "Q", "trials",
                "successes", "mean_misclass", "ci_low", "ci_high", "seed0")
THRESHOLD_FIELDS = ("algorithm", "N", "w", "epsilon", "target", "U_star", "probes")


class NotBracketable(RuntimeError):
    pass


@dataclass
class TrialResult:
    algorithm: str
    params: dict
    U: int
    exact: bool
    misclass: float
    seed: int
    wall_time: float = field(default=0.0, compare=False)

    def to_json(self) -> str:
        d = {k: getattr(self, k) for k in ("algorithm", "params", "U", "exact", "misclass", "seed")}
        return json.dumps(d, sort_keys=True)


@dataclass
class TrialOptions:
    engine: str = "dense"           # maxsense engine
    mode: str = "random-global"     # pairwise pair assignment
    restarts: int = 10              # k-means restarts (pairwise)
    distortion: int = 0             # allowed misclassified items for success


def run_trial(algorithm: str, p: ModelParams, seed: int, opts: TrialOptions | None = None,
              capture: dict | None = None) -> TrialResult:
    """truth -> users -> sketches -> clustering -> label matching, all from ``seed``.

    ``capture`` (optional dict) receives the aggregate (``matrix`` or
    ``counts``); a ``sink`` entry in it is handed to the simulator.
    """
    opts = opts or TrialOptions()
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    validate_params(p)
    t0 = time.perf_counter()
    cap = capture if capture is not None else {}
    sink = cap.get("sink")
    truth = sample_ground_truth(p, seed)
    if algorithm == "pairwise":
        A = cap["matrix"] = simulate_pairwise(p, truth, seed, opts.mode, sink=sink)
        labels = pp_cluster(A, p.L, restarts=opts.restarts, seed=seed)
    elif algorithm == "maxsense":
        B = cap["counts"] = simulate_maxsense(p, truth, seed, opts.engine, sink=sink)
        labels = ms_cluster(B, p.L)
    else:
        B = cap["counts"] = simulate_mms(p, truth, seed)
        labels = ms_cluster(B, p.L)
    acc, _ = match_labels(labels, truth.item_class, p.L)
    wrong = int(round((1 - acc) * p.N))
    return TrialResult(algorithm, p.to_dict(), p.U, wrong <= opts.distortion, wrong / p.N, seed,
                       time.perf_counter() - t0)


def wilson_interval(successes: int, trials: int, z: float = WILSON_Z) -> tuple[float, float]:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    ph = successes / trials
    den = 1 + z * z / trials
    mid = (ph + z * z / (2 * trials)) / den
    half = z * math.sqrt(ph * (1 - ph) / trials + z * z / (4 * trials * trials)) / den
    return max(0.0, mid - half), min(1.0, mid + half)


@dataclass
class SuccessRate:
    successes: int
    trials: int
    mean_misclass: float
    ci_low: float
    ci_high: float
    results: list = field(default_factory=list, repr=False)

    @property
    def rate(self) -> float:
        return self.successes / self.trials


def _trial_job(args):
    algorithm, pdict, seed, opts = args
    return run_trial(algorithm, ModelParams.from_dict(pdict), seed, opts)


def success_rate(algorithm: str, p: ModelParams, trials: int = 20, seed0: int = 0,
                 opts: TrialOptions | None = None, threads: int = 1) -> SuccessRate:
    """Trials use seeds ``seed0 .. seed0 + trials - 1``; order never matters."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    jobs = [(algorithm, p.to_dict(), seed0 + t, opts) for t in range(trials)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_trial_job, jobs))
    else:
        results = [_trial_job(j) for j in jobs]
    s = sum(r.exact for r in results)
    lo, hi = wilson_interval(s, trials)
    return SuccessRate(s, trials, float(np.mean([r.misclass for r in results])), lo, hi, results)


def probe_passes(algorithm: str, p: ModelParams, trials: int, target: float, seed0: int = 0,
                 opts: TrialOptions | None = None) -> tuple[bool, int, int]:
    """Whether ``successes / trials >= target``, stopping once the answer is fixed.

    Returns ``(passed, successes, trials_run)``. Seeds are the same as in
    :func:`success_rate`, so the decision equals the full-run decision.
    """
    need = math.ceil(target * trials - 1e-12)
    s = 0
    for t in range(trials):
        s += run_trial(algorithm, p, seed0 + t, opts).exact
        if s >= need:
            return True, s, t + 1
        if s + (trials - t - 1) < need:
            return False, s, t + 1
    return s >= need, s, trials


@dataclass
class ThresholdResult:
    U_star: int
    probes: list      # (U, passed) in probe order


def threshold_users(algorithm: str, p: ModelParams | None, target: float = 0.9, trials: int = 20,
                    U0: int | None = None, U_cap: int = DEFAULT_U_CAP, seed0: int = 0,
                    opts: TrialOptions | None = None, success=None, rel_width: float = 0.1) -> ThresholdResult:
    """Smallest probed U whose success rate reaches ``target``.

    Doubles (or halves) from ``U0`` until a failing and a passing U bracket
    the threshold, then bisects geometrically until ``hi / lo <= 1 + rel_width``.
    ``success(U) -> bool`` replaces the simulation when given. Every probe
    reuses seeds ``seed0 ..`` so the success curve is comparable across U.
    """
    if not 0 < target < 1:
        raise ValueError("target must lie in (0, 1)")
    if success is None:
        if p is None:
            raise ValueError("need model params or a success function")

        def success(U):
            return probe_passes(algorithm, p.replace(U=int(U)), trials, target, seed0, opts)[0]

    probes = []

    def probe(U):
        ok = bool(success(int(U)))
        probes.append((int(U), ok))
        return ok

    U = int(U0 if U0 is not None else (p.N if p is not None else 1))
    U = max(1, U)
    if probe(U):
        hi, lo = U, None
        while U > 1:
            U = max(1, U // 2)
            if probe(U):
                hi = U
            else:
                lo = U
                break
        if lo is None:
            return ThresholdResult(hi, probes)
    else:
        lo, hi = U, None
        while hi is None:
            U *= 2
            if U > U_cap:
                raise NotBracketable(f"not bracketable: success rate below {target} up to U cap {U_cap}")
            if probe(U):
                hi = U
            else:
                lo = U
    while hi / lo > 1 + rel_width and hi - lo > 1:
        mid = int(round(math.sqrt(lo * hi)))
        mid = min(max(mid, lo + 1), hi - 1)
        if probe(mid):
            hi = mid
        else:
            lo = mid
    return ThresholdResult(min(u for u, ok in probes if ok), probes)


def scaling_fit(points) -> tuple[float, float, float]:
    """OLS of log2(U) on log2(x): returns (slope, intercept, R^2)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise ValueError("scaling_fit needs at least 3 (x, U) points")
    if np.any(pts <= 0):
        raise ValueError("scaling_fit needs positive values")
    x, y = np.log2(pts[:, 0]), np.log2(pts[:, 1])
    if np.ptp(x) == 0:
        raise ValueError("degenerate x values: all equal")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


# -- baselines ---------------------------------------------------------------------

def baseline_adaptive_w1(truth, rng: np.random.Generator, batch: int = 4096) -> int:
    """Queries "is (I, Z) = (i, b)?" with i uniform over still-unknown items and
    b a fair coin, each answered by a fresh w=1 user; a yes reveals Z_i.

    Simulated literally, a batch of users at a time.
    """
    truth = np.asarray(truth, dtype=np.int8)
    N = truth.size
    unknown = list(range(N))
    queries = 0
    while unknown:
        m = len(unknown)
        I = rng.integers(0, N, size=batch)
        asked = np.asarray(unknown)[rng.integers(0, m, size=batch)]
        b = rng.integers(0, 2, size=batch)
        yes = np.flatnonzero((I == asked) & (truth[I] == b))
        if yes.size == 0:
            queries += batch
            continue
        first = int(yes[0])
        queries += first + 1
        unknown.remove(int(asked[first]))
    return queries


def baseline_coupon_bandwidth(truth, rng: np.random.Generator, reveal_p: float | None = None,
                              batch: int = 8192) -> int:
    """Each w=1 user reveals (I, Z) with probability 1/log2 N, else a blank.

    Returns the number of users until every item has been revealed once.
    """
    truth = np.asarray(truth)
    N = truth.size
    if N < 2 and reveal_p is None:
        raise ValueError("coupon baseline needs N >= 2")
    r = 1.0 / math.log2(N) if reveal_p is None else reveal_p
    seen = np.zeros(N, dtype=bool)
    left = N
    queries = 0
    while True:
        I = rng.integers(0, N, size=batch)
        shown = rng.random(batch) < r
        pos = np.flatnonzero(shown)
        items = I[pos]
        _, first = np.unique(items, return_index=True)
        order = np.sort(first)
        fresh = order[~seen[items[order]]]
        if fresh.size >= left:
            queries += int(pos[fresh[left - 1]]) + 1
            return queries
        seen[items[fresh]] = True
        left -= fresh.size
        queries += batch


def adaptive_w1_expectation(N: int) -> float:
    """Exact mean query count: with m items known a query succeeds w.p. 1/(2N)."""
    return 2.0 * N * N


def coupon_expectation(N: int, reveal_p: float | None = None) -> float:
    """Exact mean users until all N items are revealed: (1/r) N H_N."""
    r = 1.0 / math.log2(N) if reveal_p is None else reveal_p
    return sum(N / (r * (N - m)) for m in range(N))


def markov_hitting_time(step_success) -> float:
    """Mean steps through states 0..n-1 where state m advances w.p. step_success[m]."""
    return float(sum(1.0 / s for s in step_success))


# -- sweeps --------------------------------------------------------------------------

@dataclass
class SweepSpec:
    algorithm: str
    base: ModelParams
    grid: dict                       # keys among N, w, epsilon, theta, U, U_mult
    trials: int = 20
    seed0: int = 0
    distortion: int = 0
    engine: str = "dense"

    def cells(self):
        if not self.grid or any(len(v) == 0 for v in self.grid.values()):
            raise ValueError("sweep grid is empty")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        bad = set(self.grid) - {"N", "w", "epsilon", "theta", "U", "U_mult"}
        if bad:
            raise ValueError(f"unknown sweep axis {sorted(bad)[0]!r}")
        keys = sorted(self.grid)
        for combo in np.array(np.meshgrid(*[np.arange(len(self.grid[k])) for k in keys],
                                          indexing="ij")).reshape(len(keys), -1).T:
            d = {k: self.grid[k][i] for k, i in zip(keys, combo)}
            mult = d.pop("U_mult", None)
            for k in ("N", "w", "U"):
                if k in d:
                    d[k] = int(d[k])
            p = self.base.replace(**d)
            if mult is not None:
                p = p.replace(U=user_scale(self.algorithm, p, float(mult)))
            yield p


def user_scale(algorithm: str, p: ModelParams, mult: float) -> int:
    """U for a multiplier: mult * N log2 N (pairwise) or mult * the MaxSense scale."""
    if algorithm == "pairwise":
        return int(math.ceil(mult * p.N * math.log2(p.N)))
    return recommended_users(p, mult)


def run_sweep(spec: SweepSpec, threads: int = 1) -> list[list]:
    rows = []
    opts = TrialOptions(engine=spec.engine, distortion=spec.distortion)
    for p in spec.cells():
        sr = success_rate(spec.algorithm, p, spec.trials, spec.seed0, opts, threads)
        Q = mms_questions(p.epsilon) if spec.algorithm == "multi-maxsense" else 1
        rows.append([spec.algorithm, p.N, p.U, p.K, p.L, p.w, repr(float(p.epsilon)), repr(float(p.theta)),
                     Q, sr.trials, sr.successes, repr(sr.mean_misclass), repr(sr.ci_low), repr(sr.ci_high),
                     spec.seed0])
    return rows


def csv_text(fields, rows, header_lines=()) -> str:
    buf = io.StringIO()
    for h in header_lines:
        buf.write(f"# {h}\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(fields)
    wr.writerows(rows)
    return buf.getvalue()


def read_csv_rows(path) -> list[dict]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    return list(csv.DictReader(lines))


def threshold_row(algorithm, p: ModelParams, target, res: ThresholdResult) -> list:
    probes = ";".join(f"{u}:{int(ok)}" for u, ok in res.probes)
    return [algorithm, p.N, p.w, repr(float(p.epsilon)), repr(float(target)), res.U_star, probes]


# -- calibration -----------------------------------------------------------------------

def load_calibration(path=None) -> dict:
    """Pilot-calibrated constants; the packaged file unless ``path`` is given."""
    if path is not None:
        return json.loads(Path(path).read_text())
    return json.loads(resources.files("ldp_lab").joinpath("calibration.json").read_text())
