"""Monte Carlo experiments: coverage, last-iterate, width tables, the
iterated-logarithm lower-bound statistic, and the cold-start PCA experiment.

Violation detection honors the time-uniform quantifier: every iterate in
[valid_from, horizon] is compared against the boundary, not just a grid; the
grid only selects which widths and loss quantiles are exported.

Replications are advanced in fixed-size blocks by the batched engines from
the algorithms module.  Block boundaries and per-replication seeds are
independent of the worker count, so reports are identical no matter how the
work is scheduled.
"""
from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Tuple

import numpy as np

from .algorithms import (
    PcaProblem,
    RmProblem,
    SgdProblem,
    pca_batch,
    ridge_batch,
    sgd_batch,
)
from .boundaries import (
    Boundary,
    StepSchedule,
    oja_boundary,
    rakhlin_fixed_horizon,
    ridge_boundary,
    sgd_boundary,
    sgd_last_iterate,
    two_phase_oja_schedule,
)
from .recursion import counterexample_process
from .seeding import make_generator, rep_seed
from .streams import SQRT3, LinearModelStream

__all__ = [
    "CoverageConfig",
    "CoverageReport",
    "ColdStartReport",
    "LilReport",
    "run_coverage",
    "run_last_iterate",
    "width_comparison",
    "run_lil",
    "run_lil_ensemble",
    "run_oja_cold_start",
    "run_counterexample",
    "mc_threshold",
    "write_report_json",
    "write_grid_csv",
]

_REP_BLOCK = 50


def mc_threshold(cost: float, delta: float, n_reps: int) -> float:
    """Acceptance threshold cost*delta + 3*sqrt(cost*delta/n_reps).

    The guarantee bounds the violation probability by cost*delta; the second
    term is a three-sigma Monte Carlo slack at n_reps replications.
    """
    return cost * delta + 3.0 * math.sqrt(cost * delta / n_reps)


# ---------------------------------------------------------------------------
# Configuration and reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoverageConfig:
    """Declarative coverage experiment.

    algorithm selects the runner ("sgd_sc", "krasulina", "oja", "ridge");
    problem holds its keyword parameters (see _build_setup).  boundary_scale
    multiplies the width (scale < 1 yields falsification runs that must
    produce violations, demonstrating the experiment has power).
    """

    algorithm: str
    problem: Mapping
    delta: float
    n_reps: int
    horizon: int
    seed_base: int
    record_grid: Tuple[int, ...] = ()
    boundary_scale: float = 1.0

    def __post_init__(self):
        if self.algorithm not in ("sgd_sc", "krasulina", "oja", "ridge"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.n_reps < 1 or self.horizon < 1:
            raise ValueError("n_reps and horizon must be at least 1")
        if self.boundary_scale <= 0:
            raise ValueError("boundary_scale must be positive")
        grid = tuple(int(t) for t in self.record_grid)
        if any(t < 0 or t > self.horizon for t in grid) or list(grid) != sorted(set(grid)):
            raise ValueError("record_grid must be strictly increasing within [0, horizon]")
        object.__setattr__(self, "record_grid", grid)


@dataclass(frozen=True)
class CoverageReport:
    violations: int
    first_violation_times: Tuple[int, ...]
    empirical_rate: float
    widths_at_grid: Tuple[float, ...]
    quantiles_at_grid: Mapping[int, Tuple[float, float, float]]
    wall_time: float
    n_reps: int
    delta: float
    confidence_cost: float
    threshold: float
    passed: bool

    def __post_init__(self):
        if not 0.0 <= self.empirical_rate <= 1.0:
            raise ValueError("empirical_rate must lie in [0, 1]")


@dataclass(frozen=True)
class ColdStartReport(CoverageReport):
    """Coverage report for the two-phase cold-start experiment, with the
    exploration-phase outcome attached."""

    split_t: int = 0
    hit_rate: float = 0.0
    hit_threshold: float = 0.0
    hit_passed: bool = False


@dataclass(frozen=True)
class LilReport:
    """Dyadic-block maxima of the statistic t*L_t/log log t for one path."""

    block_stats: Tuple[Tuple[int, int, float], ...]  # (block_start, block_end, max)
    running_max: Tuple[float, ...]
    l_const: float

    def __post_init__(self):
        rm = self.running_max
        if any(b < a for a, b in zip(rm, rm[1:])):
            raise ValueError("running_max must be nondecreasing")

    @property
    def final_max(self) -> float:
        return self.running_max[-1]


# ---------------------------------------------------------------------------
# Coverage
# ---------------------------------------------------------------------------


def _sgd_problem(spec: Mapping) -> SgdProblem:
    return SgdProblem(
        curvature=tuple(spec["curvature"]),
        x_star=tuple(spec["x_star"]),
        radius=float(spec["radius"]),
        b_noise=float(spec["b_noise"]),
    )


def _pca_problem(spec: Mapping) -> PcaProblem:
    rotation = spec.get("rotation")
    return PcaProblem(
        eigs=tuple(spec["eigs"]),
        rotation=None if rotation is None else tuple(tuple(r) for r in rotation),
    )


def _pca_v0(spec: Mapping, problem: PcaProblem, seed_base: int, rep: int) -> np.ndarray:
    """Per-replication initial direction: explicit vector, "uniform", or
    "warm" (v1 plus a perturbation of norm 0.3, so sin^2 <= 9/58 < 1/4)."""
    v0 = spec.get("v0", "warm")
    if isinstance(v0, (list, tuple)):
        return np.asarray(v0, dtype=float)
    rng = make_generator(np.random.SeedSequence(entropy=[int(seed_base), int(rep), 1]))
    u = rng.standard_normal(problem.dim)
    u /= np.linalg.norm(u)
    if v0 == "uniform":
        return u
    if v0 == "warm":
        v = problem.v_star + 0.3 * u
        return v / np.linalg.norm(v)
    raise ValueError(f"unknown v0 spec {v0!r}")


def _build_setup(config: CoverageConfig):
    """Resolve a config into (boundary, schedule, per-block runner)."""
    spec = config.problem
    if config.algorithm == "sgd_sc":
        problem = _sgd_problem(spec)
        boundary = sgd_boundary(problem.b, problem.lam, config.delta)
        x0 = np.asarray(spec["x0"], dtype=float)
        etas = boundary.schedule.etas(config.horizon)

        def run(rep_lo: int, rep_hi: int) -> np.ndarray:
            seeds = [rep_seed(config.seed_base, i) for i in range(rep_lo, rep_hi)]
            return sgd_batch(problem, etas, x0, seeds, record_channels=False)["loss_sc"]

        return boundary, run
    if config.algorithm in ("krasulina", "oja"):
        problem = _pca_problem(spec)
        boundary, _l_off = oja_boundary(problem.b, problem.rho, config.delta)
        etas = boundary.schedule.etas(config.horizon)
        normalize = bool(spec.get("normalize", config.algorithm == "oja"))

        def run(rep_lo: int, rep_hi: int) -> np.ndarray:
            seeds = [rep_seed(config.seed_base, i) for i in range(rep_lo, rep_hi)]
            v0 = np.stack(
                [
                    _pca_v0(spec, problem, config.seed_base, i)
                    for i in range(rep_lo, rep_hi)
                ]
            )
            return pca_batch(
                problem, etas, v0, seeds, config.algorithm, normalize, record_channels=False
            )["loss"]

        return boundary, run
    if config.algorithm == "ridge":
        stream = LinearModelStream(
            theta_star=tuple(spec["theta_star"]),
            x_radius=float(spec["x_radius"]),
            noise_radius=float(spec["noise_radius"]),
        )
        diam = float(spec["diam"])
        lambda_pen = float(spec.get("lambda_pen", 0.0))
        theta_norm = float(np.linalg.norm(stream.theta_star))
        boundary = ridge_boundary(
            stream.b, diam, lambda_pen, stream.lambda_min, theta_norm, config.delta
        )
        theta0 = np.asarray(spec["theta0"], dtype=float)
        etas = boundary.schedule.etas(config.horizon)
        penalty_in_gradient = bool(spec.get("penalty_in_gradient", True))

        def run(rep_lo: int, rep_hi: int) -> np.ndarray:
            seeds = [rep_seed(config.seed_base, i) for i in range(rep_lo, rep_hi)]
            return ridge_batch(
                stream, diam, lambda_pen, etas, theta0, seeds, penalty_in_gradient
            )["loss"]

        return boundary, run
    raise AssertionError("unreachable")


def _scan_block(losses: np.ndarray, widths: np.ndarray, valid_from: int, grid) -> tuple:
    """Violations and grid summaries for one block of trajectories."""
    over = losses[:, valid_from:] > widths[valid_from:]
    any_over = over.any(axis=1)
    firsts = [int(np.argmax(row) + valid_from) for row in over[any_over]]
    grid_losses = losses[:, list(grid)] if grid else np.empty((losses.shape[0], 0))
    return int(np.count_nonzero(any_over)), firsts, grid_losses


def run_coverage(config: CoverageConfig, threads: int = 0) -> CoverageReport:
    """Estimate the time-uniform violation probability of a boundary.

    A replication counts as a violation when its loss exceeds the (scaled)
    width at any iterate in [valid_from, horizon].  The report passes when
    the empirical rate is at most confidence_cost*delta plus three-sigma
    Monte Carlo slack.
    """
    start_time = time.perf_counter()
    boundary, run = _build_setup(config)
    t_all = np.arange(0, config.horizon + 1)
    widths = np.asarray(boundary.eval(t_all, config.delta)) * config.boundary_scale

    blocks = [
        (lo, min(lo + _REP_BLOCK, config.n_reps)) for lo in range(0, config.n_reps, _REP_BLOCK)
    ]

    def work(block):
        lo, hi = block
        losses = run(lo, hi)
        return _scan_block(losses, widths, boundary.valid_from, config.record_grid)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, blocks))
    else:
        results = [work(b) for b in blocks]

    violations = sum(r[0] for r in results)
    first_times = tuple(sorted(t for r in results for t in r[1]))
    grid_losses = (
        np.vstack([r[2] for r in results]) if config.record_grid else np.empty((config.n_reps, 0))
    )
    rate = violations / config.n_reps
    quantiles = {}
    for j, t in enumerate(config.record_grid):
        q = np.quantile(grid_losses[:, j], [0.5, 0.9, 0.99])
        quantiles[int(t)] = (float(q[0]), float(q[1]), float(q[2]))
    threshold = mc_threshold(boundary.confidence_cost, config.delta, config.n_reps)
    return CoverageReport(
        violations=violations,
        first_violation_times=first_times,
        empirical_rate=rate,
        widths_at_grid=tuple(float(widths[t]) for t in config.record_grid),
        quantiles_at_grid=quantiles,
        wall_time=time.perf_counter() - start_time,
        n_reps=config.n_reps,
        delta=config.delta,
        confidence_cost=boundary.confidence_cost,
        threshold=threshold,
        passed=rate <= threshold,
    )


# ---------------------------------------------------------------------------
# Last iterate and width comparison
# ---------------------------------------------------------------------------


def run_last_iterate(config: CoverageConfig, t_eval: int) -> Tuple[float, float]:
    """Exceedance rate of the fixed-t bound at t_eval for projected SGD.

    Uses the last-iterate schedule eta_t = 1/(lam*(t+3)).  Rerunning with a
    different delta reuses the same trajectories (seeds do not depend on
    delta), so exceedance is nonincreasing in delta.
    """
    if config.algorithm != "sgd_sc":
        raise ValueError("last-iterate experiment is defined for sgd_sc")
    if t_eval < 1 or t_eval > config.horizon:
        raise ValueError("need 1 <= t_eval <= horizon")
    problem = _sgd_problem(config.problem)
    bound = sgd_last_iterate(problem.b, problem.lam, config.delta, t_eval)
    schedule = StepSchedule.inverse_time(1.0 / problem.lam, 3.0)
    etas = schedule.etas(t_eval)
    x0 = np.asarray(config.problem["x0"], dtype=float)
    exceed = 0
    for lo in range(0, config.n_reps, _REP_BLOCK):
        hi = min(lo + _REP_BLOCK, config.n_reps)
        seeds = [rep_seed(config.seed_base, i) for i in range(lo, hi)]
        losses = sgd_batch(problem, etas, x0, seeds, record_channels=False)["loss_sc"]
        exceed += int(np.count_nonzero(losses[:, t_eval] > bound))
    return exceed / config.n_reps, bound


def width_comparison(b: float, lam: float, delta: float, horizons: Sequence[int]) -> list[dict]:
    """Tabulate the anytime width against the fixed-horizon baseline at t=T."""
    boundary = sgd_boundary(b, lam, delta)
    rows = []
    for t in horizons:
        anytime = float(boundary.eval(t, delta))
        fixed = rakhlin_fixed_horizon(b, lam, delta, t, t)
        rows.append({"t": int(t), "anytime": anytime, "fixed_horizon": fixed, "ratio": anytime / fixed})
    return rows


# ---------------------------------------------------------------------------
# Iterated-logarithm lower-bound statistic
# ---------------------------------------------------------------------------


def _lil_batch(
    problem: RmProblem, l1: float, n_blocks: int, seeds, x0: float
) -> tuple[np.ndarray, list]:
    """Dyadic-block maxima of t*L_t/log log t for a batch of trajectories."""
    horizon = 2 ** (n_blocks + 1)
    n = len(seeds)
    gens = [make_generator(s) for s in seeds]
    x = np.full(n, float(x0) + problem.theta)
    block_max = np.full((n_blocks, n), -np.inf)
    bounds = [(2**nb + 1, 2 ** (nb + 1)) for nb in range(1, n_blocks + 1)]

    chunk = 8192
    t = 0
    while t < horizon:
        size = min(chunk, horizon - t)
        xi = np.empty((size, n))
        for j, g in enumerate(gens):
            xi[:, j] = g.uniform(-SQRT3, SQRT3, size=size)
        for k in range(size):
            step_t = t + k + 1
            eta = l1 / step_t
            x = x - eta * (problem.m_func(x) + xi[k])
            if step_t >= 3:
                loglog = math.log(math.log(step_t))
                if loglog > 0.0:
                    dev = x - problem.theta
                    stat = step_t * dev * dev / loglog
                    nb = step_t.bit_length() - 1 if step_t & (step_t - 1) else step_t.bit_length() - 2
                    # block index: t in [2^nb+1, 2^(nb+1)] -> slot nb-1
                    np.maximum(block_max[nb - 1], stat, out=block_max[nb - 1])
        t += size
    return block_max, bounds


def run_lil_ensemble(
    problem: RmProblem,
    l1: float,
    l2: float,
    n_blocks: int,
    seeds,
    x0: float = 1.0,
) -> list[LilReport]:
    """LIL statistic for many seeds advanced in lock step.

    The steps use the lower envelope eta_t = l1/t; l_const is
    sqrt(l1)/(4*(1 + l2*log(8)*M'(theta))), the scale the running maximum
    should reach infinitely often in the limit.
    """
    if not 0 < l1 <= l2:
        raise ValueError("need 0 < l1 <= l2")
    if not 1 <= n_blocks <= 24:
        raise ValueError("n_blocks must lie in [1, 24]")
    l_const = math.sqrt(l1) / (4.0 * (1.0 + l2 * math.log(8.0) * problem.m_prime_at_root))
    block_max, bounds = _lil_batch(problem, l1, n_blocks, seeds, x0)
    reports = []
    for j in range(block_max.shape[1]):
        stats = tuple(
            (lo, hi, float(block_max[i, j])) for i, (lo, hi) in enumerate(bounds)
        )
        running = tuple(np.maximum.accumulate(block_max[:, j]).tolist())
        reports.append(LilReport(block_stats=stats, running_max=running, l_const=l_const))
    return reports


def run_lil(problem: RmProblem, l1: float, l2: float, n_blocks: int, seed, x0: float = 1.0) -> LilReport:
    """Single-trajectory LIL statistic (see run_lil_ensemble)."""
    return run_lil_ensemble(problem, l1, l2, n_blocks, [seed], x0)[0]


# ---------------------------------------------------------------------------
# Cold-start PCA
# ---------------------------------------------------------------------------


def run_oja_cold_start(
    problem: PcaProblem,
    delta: float,
    c_explore: float,
    c_stable: float,
    horizon: int,
    n_reps: int,
    seed_base: int,
    variant: str = "krasulina",
) -> ColdStartReport:
    """Two-phase experiment from uniform initialization.

    Phase 1 runs the constant exploration steps to the split point and
    records how often sin^2 <= 1/4 there (target: at least 1 - delta^3).
    Phase 2 continues with decaying steps and counts crossings of the
    anytime boundary re-anchored at the split.
    """
    start_time = time.perf_counter()
    schedule = two_phase_oja_schedule(problem.b, problem.rho, delta, c_explore, c_stable)
    split = schedule.h0_end
    total = split + horizon
    etas = schedule.etas(total)
    # The boundary formula is only defined for delta below exp(-2); when the
    # experiment's delta is larger, clip to that cap.  The clipped boundary is
    # wider only through its log(1/delta) factor, so the guarantee at the
    # original delta still holds and the pass threshold below stays valid.
    delta_b = min(delta, 0.999 * math.exp(-2.0))
    boundary, _l_off = oja_boundary(problem.b, problem.rho, delta_b)
    widths = np.asarray(boundary.eval(np.arange(0, horizon + 1), delta_b))

    hits = 0
    violations = 0
    first_times: list[int] = []
    for lo in range(0, n_reps, _REP_BLOCK):
        hi = min(lo + _REP_BLOCK, n_reps)
        seeds = [rep_seed(seed_base, i) for i in range(lo, hi)]
        v0 = np.stack(
            [_pca_v0({"v0": "uniform"}, problem, seed_base, i) for i in range(lo, hi)]
        )
        losses = pca_batch(
            problem, etas, v0, seeds, variant, normalize_each_step=True, record_channels=False
        )["loss"]
        hits += int(np.count_nonzero(losses[:, split] <= 0.25))
        over = losses[:, split:] > widths
        any_over = over.any(axis=1)
        violations += int(np.count_nonzero(any_over))
        first_times += [int(np.argmax(row)) for row in over[any_over]]

    hit_rate = hits / n_reps
    hit_threshold = 1.0 - delta**3
    rate = violations / n_reps
    threshold = mc_threshold(boundary.confidence_cost, delta, n_reps)
    return ColdStartReport(
        violations=violations,
        first_violation_times=tuple(sorted(first_times)),
        empirical_rate=rate,
        widths_at_grid=(),
        quantiles_at_grid={},
        wall_time=time.perf_counter() - start_time,
        n_reps=n_reps,
        delta=delta,
        confidence_cost=boundary.confidence_cost,
        threshold=min(threshold, 1.0),
        passed=rate <= min(threshold, 1.0),
        split_t=split,
        hit_rate=hit_rate,
        hit_threshold=hit_threshold,
        hit_passed=hit_rate >= hit_threshold - 3.0 * math.sqrt(delta**3 / n_reps),
    )


# ---------------------------------------------------------------------------
# Counterexample
# ---------------------------------------------------------------------------


def run_counterexample(p_one: float, n_reps: int, horizon: int, seed_base: int) -> dict:
    """Fraction of stuck-Bernoulli trajectories that converge to zero.

    The limit is zero exactly on the complement of the Bernoulli event, so
    the fraction estimates 1 - p_one.
    """
    zeros = 0
    for i in range(n_reps):
        trace = counterexample_process(p_one, horizon, rep_seed(seed_base, i))
        zeros += int(trace.losses[-1] == 0.0)
    fraction = zeros / n_reps
    expected = 1.0 - p_one
    sigma = math.sqrt(p_one * (1.0 - p_one) / n_reps)
    return {
        "fraction_zero": fraction,
        "expected": expected,
        "n_reps": n_reps,
        "three_sigma": 3.0 * sigma,
        "within_tolerance": abs(fraction - expected) <= max(3.0 * sigma, 0.01),
    }


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _report_dict(report) -> dict:
    from dataclasses import asdict

    d = asdict(report)
    d["quantiles_at_grid"] = {str(k): list(v) for k, v in d.get("quantiles_at_grid", {}).items()}
    wall = d.pop("wall_time", None)
    return d, wall


def write_report_json(report, path, extra: Optional[dict] = None) -> None:
    """Write a report as JSON with deterministic payload.

    Timing goes into the separate "timing" object so that the rest of the
    document is byte-identical across reruns and worker counts.
    """
    if hasattr(report, "__dataclass_fields__"):
        payload, wall = _report_dict(report)
    else:
        payload, wall = dict(report), None
        wall = payload.pop("wall_time", None)
    doc = {"report": payload}
    if extra:
        doc.update(extra)
    doc["timing"] = {"wall_time_s": wall}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def write_grid_csv(report: CoverageReport, grid: Sequence[int], path) -> None:
    """Per-grid widths and loss quantiles: columns t,width,q50,q90,q99."""
    import csv as _csv

    with open(path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["t", "width", "q50", "q90", "q99"])
        for t, w in zip(grid, report.widths_at_grid):
            q50, q90, q99 = report.quantiles_at_grid[int(t)]
            writer.writerow([int(t), f"{w:.17g}", f"{q50:.17g}", f"{q90:.17g}", f"{q99:.17g}"])
