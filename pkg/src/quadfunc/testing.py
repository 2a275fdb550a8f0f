"""Signal detection and goodness-of-fit tests built on the quadratic estimators."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import selection
from .estimator import weighted_ratio_sum
from .sequences import ObservationSet, ProblemInstance


class PreconditionError(ValueError):
    """Raised when a test is applied outside the setting it is defined for."""


class SideConditionWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Threshold:
    phi2: float
    c_tilde: float
    threshold: float


@dataclass(frozen=True)
class TestOutcome:
    statistic: float
    threshold: float
    reject: bool
    k_used: int
    rate_value: float
    balance_ratio: float = math.nan


def decide(statistic, threshold: float):
    """Rejection rule: statistic >= threshold.

    A zero threshold only arises in the noiseless limit (phi^2 = 0); there the
    comparison is strict, so an exactly-zero statistic at the null is kept.
    """
    if threshold > 0:
        return statistic >= threshold
    return statistic > threshold


def _check_delta(delta: float):
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")


def _check_k(inst: ProblemInstance, k: int) -> int:
    k = int(k)
    if not 1 <= k <= inst.n_max:
        raise ValueError(f"k must lie in 1..{inst.n_max}")
    return k


def require_signal_detection(inst: ProblemInstance):
    if np.any(inst.theta_ref != 0):
        raise PreconditionError("signal detection requires theta_ref = 0")


def require_gof(inst: ProblemInstance, k: int):
    zero = np.flatnonzero(inst.theta_ref[:k] == 0)
    if zero.size:
        raise PreconditionError(
            f"goodness-of-fit testing needs every theta_ref_j != 0 for j <= {k}; "
            f"zero at j = {int(zero[0]) + 1}. Test those coordinates with the "
            "signal-detection statistic instead."
        )


# -- signal detection ------------------------------------------------------

def sd_statistic_batch(inst: ProblemInstance, x, k: int):
    k = _check_k(inst, k)
    a2 = inst.alpha_values[:k] ** -2.0
    terms = a2 * (x[..., :k] ** 2 - inst.eps**2)
    if terms.ndim == 1:
        return math.fsum(terms)
    return terms.sum(axis=-1)


def sd_statistic(inst: ProblemInstance, obs: ObservationSet, k: int) -> float:
    """sum_{j<=k} alpha_j^-2 (X_j^2 - eps^2); only X is used."""
    require_signal_detection(inst)
    return float(sd_statistic_batch(inst, obs.x, k))


def sd_c_tilde(delta: float, d: float) -> float:
    _check_delta(delta)
    return max(math.sqrt(8.0) / math.sqrt(delta), 32.0 * d * d / delta)


def sd_threshold(inst: ProblemInstance, k: int, delta: float, c_multiplier: float = 1.0) -> Threshold:
    k = _check_k(inst, k)
    phi2 = inst.eps**2 * math.sqrt(math.fsum(inst.alpha_values[:k] ** -4.0))
    c = sd_c_tilde(delta, inst.d) * c_multiplier
    return Threshold(phi2=phi2, c_tilde=c, threshold=c * phi2)


def _side_condition(gamma_k: float, phi2: float, nu: float | None, name: str):
    if nu is None:
        return
    if gamma_k**-2 > math.sqrt(nu) * phi2:
        warnings.warn(
            f"{name}: gamma_k^-2 = {gamma_k**-2:.4g} exceeds sqrt(nu) * phi^2 = "
            f"{math.sqrt(nu) * phi2:.4g} at nu = {nu}",
            SideConditionWarning, stacklevel=3,
        )


def sd_test(inst: ProblemInstance, obs: ObservationSet, delta: float,
            c_multiplier: float = 1.0, nu: float | None = None) -> TestOutcome:
    require_signal_detection(inst)
    sel = selection.select_k_sd(inst)
    thr = sd_threshold(inst, sel.k, delta, c_multiplier)
    _side_condition(inst.gamma_values[sel.k - 1], thr.phi2, nu, "signal detection")
    stat = sd_statistic(inst, obs, sel.k)
    return TestOutcome(stat, thr.threshold, bool(decide(stat, thr.threshold)), sel.k, thr.phi2,
                       selection.nu_from_ratio(sel.term_values["eps4_sum"] / sel.term_values["bias"]))


# -- goodness of fit -------------------------------------------------------

def gof_statistic_batch(inst: ProblemInstance, x, y_plus, y_minus, k: int):
    k = _check_k(inst, k)
    return weighted_ratio_sum(inst, x, y_plus, y_minus, k, np.ones(k))


def gof_statistic(inst: ProblemInstance, obs: ObservationSet, k: int) -> float:
    """The cloned-sample estimator with unit weights, truncated at ``k``."""
    k = _check_k(inst, k)
    require_gof(inst, k)
    return float(gof_statistic_batch(inst, obs.x, obs.y_plus, obs.y_minus, k))


def gof_c_tilde(delta: float, d: float, L: float) -> float:
    """Smallest constant meeting the type I condition C^2 >= 2 (672 d^4 + 2688 d^4 L^4) / delta."""
    _check_delta(delta)
    return math.sqrt(2.0 * (672.0 * d**4 + 2688.0 * d**4 * L**4) / delta)


def gof_phi2(inst: ProblemInstance, k: int) -> float:
    a = inst.alpha_values[:k]
    g = inst.gamma_values[:k]
    return max(
        inst.eps**2 * math.sqrt(math.fsum(a**-4.0)),
        inst.sigma**2 * float(np.max(a**-2.0 * g**-2.0)),
    )


def gof_threshold(inst: ProblemInstance, k: int, delta: float, c_multiplier: float = 1.0) -> Threshold:
    k = _check_k(inst, k)
    phi2 = gof_phi2(inst, k)
    c = gof_c_tilde(delta, inst.d, inst.L) * c_multiplier
    return Threshold(phi2=phi2, c_tilde=c, threshold=c * phi2)


def gof_test(inst: ProblemInstance, obs: ObservationSet, delta: float,
             c_multiplier: float = 1.0, nu: float | None = None) -> TestOutcome:
    sel = selection.select_k_gof(inst)
    require_gof(inst, sel.k)
    thr = gof_threshold(inst, sel.k, delta, c_multiplier)
    _side_condition(inst.gamma_values[sel.k - 1], thr.phi2, nu, "goodness-of-fit")
    stat = gof_statistic(inst, obs, sel.k)
    ratio = thr.phi2**2 / sel.term_values["bias"] ** 2
    return TestOutcome(stat, thr.threshold, bool(decide(stat, thr.threshold)), sel.k, thr.phi2,
                       selection.nu_from_ratio(ratio))
