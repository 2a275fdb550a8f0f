"""Truncated series estimators of the quadratic functional and their risk bound."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import astuple, dataclass, fields

import numpy as np

from .sequences import ObservationSet, ProblemInstance

# above this truncation level the scalar path uses exactly rounded summation
COMPENSATED_SUM_THRESHOLD = 1000


@dataclass(frozen=True)
class ComponentTriple:
    u: float
    v: float
    omega_event: bool


def component_arrays(inst: ProblemInstance, x, y_plus, y_minus, k: int | None = None):
    """Vectorised U_j, V_j and the stability event over the trailing axis.

    Works on single observation vectors and on (reps, k) batches alike.
    """
    k = k or np.shape(x)[-1]
    th0 = inst.theta_ref[:k]
    s2 = inst.sigma ** 2
    u = (x[..., :k] - y_plus[..., :k] * th0) ** 2 - inst.eps ** 2 - 2.0 * th0 ** 2 * s2
    ym = y_minus[..., :k]
    ym2 = ym * ym
    v = ym2 - 2.0 * s2
    event = ym2 >= 3.0 * s2
    return u, v, event


def components(inst: ProblemInstance, obs: ObservationSet, j: int) -> ComponentTriple:
    if not 1 <= j <= inst.n_max:
        raise ValueError(f"j must lie in 1..{inst.n_max}")
    i = j - 1
    u, v, ev = component_arrays(inst, obs.x[i:i + 1], obs.y_plus[i:i + 1], obs.y_minus[i:i + 1], 1)
    return ComponentTriple(u=float(u[0]), v=float(v[0]), omega_event=bool(ev[0]))


def _ratio_terms(u, v, event, sigma: float):
    """u/v on the stability event and exact zeros elsewhere.

    The division only happens where the event holds (and, for sigma = 0,
    where v != 0), so excluded coordinates never see a tiny denominator.
    """
    use = event if sigma > 0 else event & (v != 0)
    out = np.zeros(np.broadcast(u, v).shape)
    np.divide(u, v, out=out, where=use)
    return out


def _check_k(inst: ProblemInstance, k: int) -> int:
    k = int(k)
    if not 1 <= k <= inst.n_max:
        raise ValueError(f"truncation level k must lie in 1..{inst.n_max}, got {k}")
    return k


def _sum_last(terms: np.ndarray, k: int):
    if terms.ndim == 1:
        if k > COMPENSATED_SUM_THRESHOLD:
            return math.fsum(terms)
        acc = 0.0
        for t in terms:
            acc += t
        return acc
    return terms.sum(axis=-1)


def weighted_ratio_sum(inst: ProblemInstance, x, y_plus, y_minus, k: int, weights_sq):
    u, v, ev = component_arrays(inst, x, y_plus, y_minus, k)
    terms = weights_sq[:k] * _ratio_terms(u, v, ev, inst.sigma)
    return _sum_last(terms, k)


def estimate(inst: ProblemInstance, obs: ObservationSet, k: int) -> float:
    k = _check_k(inst, k)
    w2 = inst.omega_values ** 2
    return float(weighted_ratio_sum(inst, obs.x, obs.y_plus, obs.y_minus, k, w2))


def estimate_batch(inst: ProblemInstance, x, y_plus, y_minus, k: int) -> np.ndarray:
    """Row-wise estimator for (reps, >=k) observation arrays."""
    k = _check_k(inst, k)
    return weighted_ratio_sum(inst, x, y_plus, y_minus, k, inst.omega_values ** 2)


def alternative_batch(inst: ProblemInstance, x, y, k: int):
    k = _check_k(inst, k)
    x = x[..., :k]
    y = y[..., :k]
    th0 = inst.theta_ref[:k]
    s2 = inst.sigma ** 2
    y2 = y * y
    use = y2 >= 2.0 * s2
    if inst.sigma == 0:
        use = use & (y != 0)
    shape = np.broadcast(x, y).shape
    r1 = np.zeros(shape)
    np.divide(x * x - inst.eps ** 2, y2 - s2, out=r1, where=use)
    r2 = np.zeros(shape)
    np.divide(x, y, out=r2, where=use)
    terms = r1 - 2.0 * th0 * r2 + th0 * th0
    return _sum_last(terms, k)


def estimate_alternative(inst: ProblemInstance, obs: ObservationSet, k: int) -> float:
    """Single-sample estimator built from (X, Y) without cloning.

    Unweighted, as in its original definition: it targets the plain squared
    distance sum_{j<=k} (theta_j - theta_ref_j)^2.
    """
    return float(alternative_batch(inst, obs.x, obs.y, k))


@dataclass(frozen=True)
class RiskBoundBreakdown:
    k: int
    t_eps4: float
    t_sigma4_ref: float
    t_eps2_diff: float
    t_sigma2_ref_diff: float
    t_sigma4_gamma: float
    t_sigma2_gamma: float
    t_bias: float

    @property
    def terms(self) -> tuple[float, ...]:
        return astuple(self)[1:]

    @property
    def total(self) -> float:
        return math.fsum(self.terms)

    @staticmethod
    def csv_header() -> list[str]:
        return [f.name for f in fields(RiskBoundBreakdown)] + ["total"]

    def csv_row(self) -> list:
        return [self.k, *self.terms, self.total]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.csv_header())
        w.writerow([repr(v) if isinstance(v, float) else v for v in self.csv_row()])
        return buf.getvalue()


def risk_bound(inst: ProblemInstance, k: int, c_aux: float = 1.0) -> RiskBoundBreakdown:
    """Evaluate the seven-term mean squared error bound for truncation level ``k``.

    The four variance terms carry the explicit constants 672 d^4, 2688 d^4,
    672 d^2 and 1344 d^2.  The two gamma-weighted sigma terms inherit an
    unstated constant C(d) from the bound on E[(lambda^2/V - 1)^2 1_Omega];
    ``c_aux`` stands in for it (times the explicit 4 L^2 prefactor), and the
    sigma^2 term also carries the explicit 48 d^2 L^2 contribution of the
    event Omega^c.  The bias term uses the true tail of the instance.
    """
    k = _check_k(inst, k)
    if c_aux <= 0:
        raise ValueError("c_aux must be positive")
    d, L = inst.d, inst.L
    eps2, sig2 = inst.eps ** 2, inst.sigma ** 2
    a = inst.alpha_values
    g = inst.gamma_values
    w = inst.omega_values
    diff2 = (inst.theta - inst.theta_ref) ** 2
    th0 = inst.theta_ref[:k]

    w4 = w[:k] ** 4
    a2 = a[:k] ** -2.0
    a4 = a2 * a2
    g2 = g[:k] ** -2.0
    dk = diff2[:k]

    t_eps4 = 672 * d**4 * eps2**2 * math.fsum(w4 * a4)
    t_sigma4_ref = 2688 * d**4 * sig2**2 * math.fsum(w4 * a4 * th0**4)
    t_eps2_diff = 672 * d**2 * eps2 * math.fsum(w4 * a2 * dk)
    t_sigma2_ref_diff = 1344 * d**2 * sig2 * math.fsum(w4 * a2 * th0**2 * dk)
    t_sigma4_gamma = c_aux * 4 * L**2 * sig2**2 * math.fsum(w4 * a4 * g2 * dk)
    omega_c = np.minimum(1.0, sig2 * a2)
    t_sigma2_gamma = (
        c_aux * 4 * L**2 * sig2 * math.fsum(w4 * a2 * g2 * dk)
        + 48 * d**2 * L**2 * math.fsum(w4 * g2 * dk * omega_c)
    )
    tail = math.fsum(g[k:] ** 2 * diff2[k:])
    t_bias = float((w[k - 1] / g[k - 1]) ** 4 * tail**2)
    return RiskBoundBreakdown(
        k=k, t_eps4=t_eps4, t_sigma4_ref=t_sigma4_ref, t_eps2_diff=t_eps2_diff,
        t_sigma2_ref_diff=t_sigma2_ref_diff, t_sigma4_gamma=t_sigma4_gamma,
        t_sigma2_gamma=t_sigma2_gamma, t_bias=t_bias,
    )


def variance_of_u(inst: ProblemInstance, j: int) -> float:
    """Closed-form Var(U_j) = 2 s^2 + 4 s lambda^2 (theta - theta_ref)^2, s = eps^2 + 2 sigma^2 theta_ref^2."""
    i = j - 1
    s = inst.eps**2 + 2 * inst.sigma**2 * inst.theta_ref[i] ** 2
    return float(2 * s * s + 4 * s * inst.lam[i] ** 2 * (inst.theta[i] - inst.theta_ref[i]) ** 2)
