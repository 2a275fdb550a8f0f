"""Replicated Monte Carlo experiments.

Replications are generated in fixed-size blocks.  Block ``b`` of stream
``s`` draws from ``SeedSequence(master_seed, spawn_key=(s, b))``, so the
values do not depend on how blocks are spread over workers; results are
concatenated in block order and reduced with exactly rounded sums.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import selection, testing
from .estimator import alternative_batch, estimate_batch, variance_of_u
from .lower_bounds import worst_case_theta
from .sequences import (ProblemInstance, check_membership, draw_noise,
                        observations_from_noise, quad_functional)

BLOCK_SIZE = 10_000


def block_rng(master_seed: int, stream: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=(int(stream), int(block))))


def replicate(fn: Callable[[np.random.Generator, int], np.ndarray], reps: int, master_seed: int,
              *, stream: int = 0, workers: int = 1, block_size: int = BLOCK_SIZE) -> np.ndarray:
    """Run ``fn(rng, n)`` over blocks covering ``reps`` replications, in block order.

    ``fn`` returns an array whose leading axis has length ``n``.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if not 0 <= int(master_seed) < 2**64:
        raise ValueError("master seed must be a 64-bit unsigned integer")
    sizes = [min(block_size, reps - start) for start in range(0, reps, block_size)]

    def run(b: int) -> np.ndarray:
        out = np.asarray(fn(block_rng(master_seed, stream, b), sizes[b]), dtype=float)
        if out.ndim == 0 or out.shape[0] != sizes[b]:
            raise RuntimeError("replication function returned the wrong number of values")
        return out

    if workers <= 1:
        parts = [run(b) for b in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    return np.concatenate(parts)


@dataclass(frozen=True)
class ExperimentReport:
    statistic_name: str
    mean: float
    variance: float
    std_error: float
    reps: int
    master_seed: int
    metadata: dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_values(cls, name: str, values: np.ndarray, master_seed: int, **metadata) -> "ExperimentReport":
        values = np.asarray(values, dtype=float)
        n = values.shape[0]
        if n < 2:
            raise ValueError("need at least two replications")
        mean = math.fsum(values) / n
        var = math.fsum((values - mean) ** 2) / (n - 1)
        return cls(name, mean, var, math.sqrt(var / n), n, int(master_seed),
                   {k: str(v) for k, v in metadata.items()})

    def as_record(self) -> dict:
        rec = {
            "statistic": self.statistic_name,
            "mean": self.mean,
            "variance": self.variance,
            "std_error": self.std_error,
            "reps": self.reps,
            "master_seed": self.master_seed,
        }
        rec.update(self.metadata)
        return rec


# -- risk ------------------------------------------------------------------

K_RULES = ("k_star", "k_sd", "k_gof")


def resolve_k(inst: ProblemInstance, k_rule: int | str) -> int:
    if isinstance(k_rule, (int, np.integer)) or (isinstance(k_rule, str) and k_rule.isdigit()):
        k = int(k_rule)
        if not 1 <= k <= inst.n_max:
            raise ValueError(f"fixed k must lie in 1..{inst.n_max}")
        return k
    if k_rule == "k_star":
        return selection.select_k_star(inst).k
    if k_rule == "k_sd":
        return selection.select_k_sd(inst).k
    if k_rule == "k_gof":
        return selection.select_k_gof(inst).k
    raise ValueError(f"unknown k rule {k_rule!r}; use an integer or one of {K_RULES}")


def run_risk_experiment(inst: ProblemInstance, k_rule: int | str, reps: int, seed: int = 0, *,
                        estimator: str = "cloned", workers: int = 1, stream: int = 0) -> ExperimentReport:
    """Monte Carlo mean squared error of the truncated estimator against the full-horizon Q(theta).

    ``estimator="alternative"`` uses the single-sample variant, whose target
    is the unweighted functional.
    """
    if reps < 2:
        raise ValueError("reps must be >= 2")
    m = check_membership(inst)
    if not m.ok:
        raise ValueError(f"instance outside the model classes: {m}")
    k = resolve_k(inst, k_rule)
    if estimator == "cloned":
        truth = quad_functional(inst.theta, inst.theta_ref, inst.omega_values, inst.n_max)
    elif estimator == "alternative":
        truth = quad_functional(inst.theta, inst.theta_ref, np.ones(inst.n_max), inst.n_max)
    else:
        raise ValueError("estimator must be 'cloned' or 'alternative'")

    def block(rng, n):
        x, y, yp, ym = observations_from_noise(inst, *draw_noise(rng, n, k), k)
        q = estimate_batch(inst, x, yp, ym, k) if estimator == "cloned" else alternative_batch(inst, x, y, k)
        return (q - truth) ** 2

    values = replicate(block, reps, seed, stream=stream, workers=workers)
    return ExperimentReport.from_values(
        "squared_error", values, seed, k=k, k_rule=k_rule, estimator=estimator, functional=repr(truth),
        eps=inst.eps, sigma=inst.sigma,
    )


# -- tests -----------------------------------------------------------------

@dataclass(frozen=True)
class PowerResult:
    test: str
    type1: float
    type2: float
    type1_se: float
    type2_se: float
    k: int
    phi2: float
    threshold: float
    separation_multiple: float
    separation: float
    alternative_index: int
    reps: int
    master_seed: int

    @property
    def total_error(self) -> float:
        return self.type1 + self.type2


def separated_alternative(inst: ProblemInstance, k: int, r: float) -> tuple[np.ndarray, int]:
    """theta_ref + r e_j at the largest j <= k that keeps theta in the ellipsoid.

    Among single-coordinate alternatives at l2 distance r this puts the
    signal where the statistic's noise is largest while staying in class.
    """
    for j in range(k, 0, -1):
        for sign in (1.0, -1.0):
            theta = np.array(inst.theta_ref, dtype=float)
            theta[j - 1] += sign * r
            if check_membership(inst.replace(theta=theta)).theta_in_class:
                return theta, j
    raise ValueError(f"no in-class alternative at distance {r:.4g} within the first {k} coordinates")


def _test_setup(inst: ProblemInstance, test: str, delta: float, c_multiplier: float):
    if test == "sd":
        testing.require_signal_detection(inst)
        k = selection.select_k_sd(inst).k
        thr = testing.sd_threshold(inst, k, delta, c_multiplier)

        def stat(i, x, y, yp, ym):
            return testing.sd_statistic_batch(i, x, k)
    elif test == "gof":
        k = selection.select_k_gof(inst).k
        testing.require_gof(inst, k)
        thr = testing.gof_threshold(inst, k, delta, c_multiplier)

        def stat(i, x, y, yp, ym):
            return testing.gof_statistic_batch(i, x, yp, ym, k)
    else:
        raise ValueError("test must be 'sd' or 'gof'")
    return k, thr, stat


def rejections(inst: ProblemInstance, test: str, delta: float, reps: int, seed: int, *,
               c_multiplier: float = 1.0, workers: int = 1, stream: int = 0):
    """Per-replication (statistic, threshold, reject) for data drawn from ``inst``."""
    k, thr, stat = _test_setup(inst, test, delta, c_multiplier)

    def block(rng, n):
        return stat(inst, *observations_from_noise(inst, *draw_noise(rng, n, k), k))

    stats = replicate(block, reps, seed, stream=stream, workers=workers)
    return stats, thr.threshold, testing.decide(stats, thr.threshold)


def run_power_experiment(inst: ProblemInstance, test: str, delta: float, separation_multiple: float,
                         reps: int, seed: int = 0, *, c_multiplier: float = 1.0,
                         workers: int = 1) -> PowerResult:
    """Empirical type I error at theta = theta_ref and type II error at distance C * phi."""
    null = inst.replace(theta=np.array(inst.theta_ref))
    k, thr, _ = _test_setup(null, test, delta, c_multiplier)
    r = separation_multiple * math.sqrt(thr.phi2)
    alt_theta, j = separated_alternative(null, k, r)
    alt = null.replace(theta=alt_theta)
    _, _, rej0 = rejections(null, test, delta, reps, seed, c_multiplier=c_multiplier, workers=workers, stream=0)
    _, _, rej1 = rejections(alt, test, delta, reps, seed, c_multiplier=c_multiplier, workers=workers, stream=1)
    t1 = float(np.count_nonzero(rej0)) / reps
    t2 = float(np.count_nonzero(~rej1)) / reps
    return PowerResult(test, t1, t2, math.sqrt(t1 * (1 - t1) / reps), math.sqrt(t2 * (1 - t2) / reps),
                       k, thr.phi2, thr.threshold, separation_multiple, r, j, reps, int(seed))


DEFAULT_SEPARATION_GRID = (1, 2, 4, 8, 16, 24, 32, 48, 64, 96, 128, 192, 256)


@dataclass(frozen=True)
class Calibration:
    separation_multiple: float | None
    results: tuple[PowerResult, ...]


def calibrate_separation(inst: ProblemInstance, test: str, delta: float, reps: int, seed: int = 0, *,
                         grid: Sequence[float] = DEFAULT_SEPARATION_GRID, c_multiplier: float = 1.0,
                         workers: int = 1) -> Calibration:
    """Smallest grid multiple whose empirical type II error is at most delta.

    Grid points whose alternative cannot be placed inside the ellipsoid stop
    the search.
    """
    results = []
    for mult in sorted(grid):
        try:
            res = run_power_experiment(inst, test, delta, mult, reps, seed,
                                       c_multiplier=c_multiplier, workers=workers)
        except ValueError:
            break
        results.append(res)
        if res.type2 <= delta:
            return Calibration(float(mult), tuple(results))
    return Calibration(None, tuple(results))


# -- moment identities ----------------------------------------------------

@dataclass(frozen=True)
class MomentCheck:
    name: str
    estimate: float
    std_error: float
    target: float
    relation: str  # "eq" for identities, "le" for upper bounds
    reps: int

    def holds(self, z: float = 4.0) -> bool:
        slack = z * self.std_error
        if self.relation == "eq":
            return abs(self.estimate - self.target) <= slack + 1e-12 * max(1.0, abs(self.target))
        return self.estimate <= self.target + slack

    def as_record(self) -> dict:
        return {"name": self.name, "estimate": self.estimate, "std_error": self.std_error,
                "target": self.target, "relation": self.relation, "reps": self.reps,
                "holds_4se": self.holds()}


def _mean_se(v: np.ndarray) -> tuple[float, float]:
    n = v.shape[0]
    mean = math.fsum(v) / n
    var = math.fsum((v - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def fourth_moment_stated(lam: float, sigma: float) -> float:
    """E[(lambda^2 - V)^4] with the coefficients as originally stated (196 on lambda^4 sigma^4)."""
    return 196 * lam**4 * sigma**4 + 1920 * lam**2 * sigma**6 + 960 * sigma**8


def fourth_moment_exact(lam: float, sigma: float) -> float:
    """E[(lambda^2 - V)^4] from the Gaussian moments of Y'' ~ N(lambda, 2 sigma^2)."""
    return 192 * lam**4 * sigma**4 + 1920 * lam**2 * sigma**6 + 960 * sigma**8


def _y_minus(inst: ProblemInstance, j: int, rng, n: int) -> np.ndarray:
    eta = rng.standard_normal(n)
    eta_t = rng.standard_normal(n)
    return inst.lam[j - 1] + inst.sigma * eta - inst.sigma * eta_t


def verify_moment_identities(inst: ProblemInstance, j: int, reps: int, seed: int = 0, *,
                             workers: int = 1) -> list[MomentCheck]:
    """Moments of V_j = Y''_j^2 - 2 sigma^2 against their closed forms and bounds."""
    if not 1 <= j <= inst.n_max:
        raise ValueError(f"j must lie in 1..{inst.n_max}")
    lam = float(inst.lam[j - 1])
    s = inst.sigma
    s2 = s * s
    ym = replicate(lambda rng, n: _y_minus(inst, j, rng, n), reps, seed, workers=workers)
    v = ym * ym - 2 * s2
    dev = lam * lam - v
    event = ym * ym >= 3 * s2
    if s == 0:
        event &= ym != 0
    inv = np.zeros(reps)
    np.divide(lam**4, v * v, out=inv, where=event)
    alpha_j = float(inst.alpha_values[j - 1])

    checks = []
    for name, vals, target, rel in (
        ("mean_v", v, lam * lam, "eq"),
        ("second_central", dev**2, 8 * s2**2 + 8 * s2 * lam * lam, "eq"),
        ("fourth_central", dev**4, fourth_moment_stated(lam, s), "eq"),
        ("fourth_central_exact", dev**4, fourth_moment_exact(lam, s), "eq"),
        ("inv_v2_on_event", inv, 168.0, "le"),
        ("event_complement", (~event).astype(float), 12 * inst.d**2 * min(1.0, s2 / alpha_j**2), "le"),
    ):
        mean, se = _mean_se(vals)
        checks.append(MomentCheck(name, mean, se, target, rel, reps))
    return checks


def verify_component_identities(inst: ProblemInstance, j: int, reps: int, seed: int = 0, *,
                                workers: int = 1) -> list[MomentCheck]:
    """Mean and variance of U_j and mean of V_j against their closed forms."""
    if not 1 <= j <= inst.n_max:
        raise ValueError(f"j must lie in 1..{inst.n_max}")
    i = j - 1

    def block(rng, n):
        xi, eta, eta_t = (rng.standard_normal(n) for _ in range(3))
        lam = inst.lam[i]
        x = lam * inst.theta[i] + inst.eps * xi
        y = lam + inst.sigma * eta
        yp, ym = y + inst.sigma * eta_t, y - inst.sigma * eta_t
        th0 = inst.theta_ref[i]
        u = (x - yp * th0) ** 2 - inst.eps**2 - 2 * th0**2 * inst.sigma**2
        v = ym * ym - 2 * inst.sigma**2
        return np.column_stack([u, v])

    both = replicate(block, reps, seed, workers=workers)
    u, vv = both[:, 0], both[:, 1]
    lam2 = float(inst.lam[i] ** 2)
    target_u = lam2 * float(inst.theta[i] - inst.theta_ref[i]) ** 2
    mu, se_u = _mean_se(u)
    dev2 = (u - mu) ** 2
    var_u = math.fsum(dev2) / (reps - 1)
    _, se_var = _mean_se(dev2)
    mv, se_v = _mean_se(vv)
    return [
        MomentCheck("mean_u", mu, se_u, target_u, "eq", reps),
        MomentCheck("var_u", var_u, se_var, variance_of_u(inst, j), "eq", reps),
        MomentCheck("mean_v", mv, se_v, lam2, "eq", reps),
    ]


# -- rate slopes -----------------------------------------------------------

@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r_squared: float


def fit_rate_slope(points: Sequence[tuple[float, float]]) -> SlopeFit:
    """Least squares fit of log(risk) on log(noise level)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise ValueError("need at least three (noise_level, risk) points")
    if np.any(pts <= 0) or not np.all(np.isfinite(pts)):
        raise ValueError("noise levels and risks must be positive and finite")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    design = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), *_ = np.linalg.lstsq(design, ly, rcond=None)
    resid = ly - (slope * lx + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return SlopeFit(float(slope), float(intercept), r2)


@dataclass(frozen=True)
class SlopeResult:
    points: tuple[tuple[float, float], ...]
    reports: tuple[ExperimentReport, ...]
    fit: SlopeFit


def run_slope_experiment(base: ProblemInstance, eps_grid: Sequence[float], reps: int, seed: int = 0, *,
                         k_rule: int | str = "k_star", workers: int = 1) -> SlopeResult:
    """Worst-case risk over an eps grid, with the truth set to the hypercube vertex at each eps."""
    points, reports = [], []
    for stream, eps in enumerate(eps_grid):
        at_eps = base.replace(eps=float(eps))
        inst = at_eps.replace(theta=worst_case_theta(at_eps))
        rep = run_risk_experiment(inst, k_rule, reps, seed, workers=workers, stream=stream)
        points.append((float(eps), rep.mean))
        reports.append(rep)
    return SlopeResult(tuple(points), tuple(reports), fit_rate_slope(points))
