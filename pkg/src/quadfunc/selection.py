"""Truncation-level selection by exact search, and closed-form rate tables."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .sequences import ProblemInstance, Regime


@dataclass(frozen=True)
class SelectionResult:
    k: int
    objective: float
    term_values: dict[str, float]


def _k_max(inst: ProblemInstance, k_max: int | None) -> int:
    k_max = inst.n_max if k_max is None else int(k_max)
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if k_max > inst.n_max:
        raise ValueError(f"k_max={k_max} exceeds n_max={inst.n_max}")
    return k_max


# objectives within this relative distance of the minimum count as ties, so
# that rounding noise in mathematically flat curves cannot move the choice
TIE_RTOL = 1e-12


def argmin_smallest(obj: np.ndarray) -> int:
    """0-based index of the smallest k whose objective ties the minimum."""
    best = obj.min()
    return int(np.flatnonzero(obj <= best + TIE_RTOL * abs(best))[0])


def _argmin(curves: dict[str, np.ndarray]) -> SelectionResult:
    stacked = np.vstack(list(curves.values()))
    obj = stacked.max(axis=0)
    i = argmin_smallest(obj)
    return SelectionResult(
        k=i + 1,
        objective=float(obj[i]),
        term_values={name: float(c[i]) for name, c in curves.items()},
    )


class _Profiles:
    """Prefix sums and running maxima of the weight combinations, indices 1..k_max."""

    def __init__(self, inst: ProblemInstance, k_max: int):
        a = inst.alpha_values[:k_max]
        g = inst.gamma_values[:k_max]
        w = inst.omega_values[:k_max]
        w4 = w**4
        a2 = a**-2.0
        self.a4_sum = np.cumsum(a2 * a2)
        self.w4a4_sum = np.cumsum(w4 * a2 * a2)
        self.w4a2g2_max = np.maximum.accumulate(w4 * a2 * g**-2.0)
        self.w4a2g4_max = np.maximum.accumulate(w4 * a2 * g**-4.0)
        self.w4a4g4_max = np.maximum.accumulate(w4 * a2 * a2 * g**-4.0)
        self.a2g2_max = np.maximum.accumulate(a2 * g**-2.0)
        self.bias = (w / g) ** 4
        self.g4 = g**-4.0
        self.g2 = g**-2.0
        self.w4a2g2 = w4 * a2 * g**-2.0
        self.a2 = a2


def eps_curves(inst: ProblemInstance, k_max: int | None = None) -> dict[str, np.ndarray]:
    pr = _Profiles(inst, _k_max(inst, k_max))
    e2 = inst.eps**2
    return {
        "eps4_sum": e2 * e2 * pr.w4a4_sum,
        "eps2_max": e2 * pr.w4a2g2_max,
        "bias": pr.bias,
    }


def sigma_curves(inst: ProblemInstance, k_max: int | None = None) -> dict[str, np.ndarray]:
    pr = _Profiles(inst, _k_max(inst, k_max))
    s2 = inst.sigma**2
    return {
        "sigma2_max": s2 * pr.w4a2g4_max,
        "sigma4_max": s2 * s2 * pr.w4a4g4_max,
        "bias": pr.bias,
    }


def select_k_epsilon(inst: ProblemInstance, k_max: int | None = None) -> SelectionResult:
    return _argmin(eps_curves(inst, k_max))


def select_k_sigma(inst: ProblemInstance, k_max: int | None = None) -> SelectionResult:
    return _argmin(sigma_curves(inst, k_max))


def select_k_star(inst: ProblemInstance, k_max: int | None = None) -> SelectionResult:
    """min(k_eps, k_sigma) with the five bound terms recorded at that k."""
    k_max = _k_max(inst, k_max)
    k = min(select_k_epsilon(inst, k_max).k, select_k_sigma(inst, k_max).k)
    ec = eps_curves(inst, k_max)
    sc = sigma_curves(inst, k_max)
    terms = {
        "eps4_sum": float(ec["eps4_sum"][k - 1]),
        "eps2_max": float(ec["eps2_max"][k - 1]),
        "bias": float(ec["bias"][k - 1]),
        "sigma2_max": float(sc["sigma2_max"][k - 1]),
        "sigma4_max": float(sc["sigma4_max"][k - 1]),
    }
    return SelectionResult(k=k, objective=max(terms.values()), term_values=terms)


def select_k_sd(inst: ProblemInstance, k_max: int | None = None) -> SelectionResult:
    pr = _Profiles(inst, _k_max(inst, k_max))
    e2 = inst.eps**2
    return _argmin({"eps4_sum": e2 * e2 * pr.a4_sum, "bias": pr.g4})


def select_k_gof(inst: ProblemInstance, k_max: int | None = None) -> SelectionResult:
    pr = _Profiles(inst, _k_max(inst, k_max))
    return _argmin({
        "eps2_sqrt_sum": inst.eps**2 * np.sqrt(pr.a4_sum),
        "sigma2_max": inst.sigma**2 * pr.a2g2_max,
        "bias": pr.g2,
    })


# -- truncation levels used by the lower-bound constructions --------------

def kappa_hypercube(inst: ProblemInstance, k_max: int | None = None) -> SelectionResult:
    pr = _Profiles(inst, _k_max(inst, k_max))
    e2 = inst.eps**2
    return _argmin({"eps4_sum": e2 * e2 * pr.w4a4_sum, "bias": pr.bias})


def kappa_eps_two_point(inst: ProblemInstance, k_max: int | None = None) -> SelectionResult:
    pr = _Profiles(inst, _k_max(inst, k_max))
    return _argmin({"eps2_term": inst.eps**2 * pr.w4a2g2, "bias": pr.bias})


def kappa_sigma_two_point(inst: ProblemInstance, k_max: int | None = None) -> SelectionResult:
    pr = _Profiles(inst, _k_max(inst, k_max))
    obj = pr.bias * np.maximum(inst.sigma**2 * pr.a2, 1.0)
    return _argmin({"objective": obj})


def balance_ratio(inst: ProblemInstance, k: int) -> float:
    """Realised ``nu`` of the eps-variance / squared-bias balance at ``k``.

    Ratio r = (eps^4 sum_{j<=k} w^4 a^-4) / (w_k^4 g_k^-4) and nu = max(r, 1/r),
    the smallest nu for which the two terms are nu-equivalent.
    """
    pr = _Profiles(inst, k)
    r = inst.eps**4 * pr.w4a4_sum[-1] / pr.bias[-1]
    return nu_from_ratio(r)


def nu_from_ratio(r: float) -> float:
    if r <= 0 or not math.isfinite(r):
        return math.inf
    return float(max(r, 1.0 / r))


# -- rate tables -----------------------------------------------------------

class RateRegime(str, Enum):
    MILD_SOBOLEV = "mild-sobolev"
    MILD_ANALYTIC = "mild-analytic"
    SEVERE_SOBOLEV = "severe-sobolev"
    SEVERE_ANALYTIC = "severe-analytic"


class Zone(str, Enum):
    NONPARAMETRIC = "nonparametric"
    MIXED = "mixed"
    PARAMETRIC = "parametric"


@dataclass(frozen=True)
class RatePrediction:
    """Exponents of the estimation rate in eps and sigma.

    With ``logarithmic`` set, the rate is |log eps|^-exponent_eps (and
    likewise in sigma); otherwise eps^exponent_eps.
    """

    regime: RateRegime
    exponent_eps: float
    exponent_sigma: float
    logarithmic: bool
    zone: Zone | None


def _check_pa(p: float, a: float):
    if not (p > 0 and a > 0):
        raise ValueError("p and a must be positive")


def mild_sobolev_zone(p: float, a: float) -> Zone:
    if p >= a + 0.25:
        return Zone.PARAMETRIC
    if 2 * p >= a:
        return Zone.MIXED
    return Zone.NONPARAMETRIC


def rate_prediction(regime: RateRegime | str, p: float, a: float) -> RatePrediction:
    regime = RateRegime(regime)
    _check_pa(p, a)
    if regime is RateRegime.MILD_SOBOLEV:
        return RatePrediction(regime, min(16 * p / (4 * a + 4 * p + 1), 2.0),
                              min(4 * p / a, 2.0), False, mild_sobolev_zone(p, a))
    if regime is RateRegime.MILD_ANALYTIC:
        return RatePrediction(regime, 2.0, 2.0, False, None)
    if regime is RateRegime.SEVERE_SOBOLEV:
        return RatePrediction(regime, 4 * p, 4 * p, True, None)
    return RatePrediction(regime, min(4 * p / (p + a), 2.0), min(4 * p / a, 2.0), False, None)


def _abs_log(x: float) -> float:
    return abs(math.log(x))


def _log_power(x: float, power: float) -> float:
    """|log x|^-power, with the x -> 0 limit 0; undefined at x = 1."""
    if x == 0:
        return 0.0
    if x == 1:
        raise ValueError("logarithmic rate is undefined at noise level 1")
    return _abs_log(x) ** (-power)


def _check_noise(eps: float, sigma: float):
    if not (0 <= eps <= 1 and 0 <= sigma <= 1):
        raise ValueError("eps and sigma must lie in [0, 1]")


def predicted_rate(regime: RateRegime | str, p: float, a: float, eps: float, sigma: float) -> float:
    """Table entry for the estimation rate with omega = 1 (natural logarithms)."""
    regime = RateRegime(regime)
    _check_pa(p, a)
    _check_noise(eps, sigma)
    if regime is RateRegime.MILD_SOBOLEV:
        return max(eps ** (16 * p / (4 * a + 4 * p + 1)), eps**2, sigma ** (4 * p / a), sigma**2)
    if regime is RateRegime.MILD_ANALYTIC:
        return max(eps**2, sigma**2)
    if regime is RateRegime.SEVERE_SOBOLEV:
        return max(_log_power(eps, 4 * p), _log_power(sigma, 4 * p))
    return max(eps ** (4 * p / (p + a)), eps**2, sigma ** (4 * p / a), sigma**2)


class TestingProblem(str, Enum):
    SD = "sd"
    GOF = "gof"


def predicted_testing_rate(problem: TestingProblem | str, regime: RateRegime | str,
                           p: float, a: float, eps: float, sigma: float = 0.0) -> float:
    """Separation-rate table entries (squared rates phi^2)."""
    problem = TestingProblem(problem)
    regime = RateRegime(regime)
    _check_pa(p, a)
    _check_noise(eps, sigma)

    if regime is RateRegime.MILD_SOBOLEV:
        eps_part = eps ** (8 * p / (4 * a + 4 * p + 1))
        sig_part = max(sigma**2, sigma ** (2 * p / a))
    elif regime is RateRegime.MILD_ANALYTIC:
        eps_part = 0.0 if eps == 0 else eps**2 * _abs_log(eps) ** (2 * a + 0.5)
        sig_part = sigma**2
    elif regime is RateRegime.SEVERE_SOBOLEV:
        eps_part = _log_power(eps, 2 * p)
        sig_part = _log_power(sigma, 2 * p)
    else:
        eps_part = eps ** (2 * p / (a + p))
        sig_part = max(sigma**2, sigma ** (2 * p / a))
    if problem is TestingProblem.SD:
        return eps_part
    return max(eps_part, sig_part)


def regime_of(inst: ProblemInstance) -> tuple[RateRegime, float, float] | None:
    """Table regime and (p, a) for closed-form alpha/gamma families with omega = 1, else None."""
    if inst.omega.regime is not Regime.CONSTANT:
        return None
    kinds = (inst.alpha.regime, inst.gamma.regime)
    table = {
        (Regime.POLYNOMIAL, Regime.POLYNOMIAL): RateRegime.MILD_SOBOLEV,
        (Regime.POLYNOMIAL, Regime.EXPONENTIAL): RateRegime.MILD_ANALYTIC,
        (Regime.EXPONENTIAL, Regime.POLYNOMIAL): RateRegime.SEVERE_SOBOLEV,
        (Regime.EXPONENTIAL, Regime.EXPONENTIAL): RateRegime.SEVERE_ANALYTIC,
    }
    if kinds not in table or inst.alpha.param <= 0 or inst.gamma.param <= 0:
        return None
    return table[kinds], inst.gamma.param, inst.alpha.param
