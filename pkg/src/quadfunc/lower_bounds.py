"""Lower-bound certificates: hypercube priors, two-point hypotheses and divergences.

Every construction here returns concrete hypotheses together with the
divergence between the induced laws of (X, Y) and the functional gap, so
that the reduction bounds can be evaluated numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import selection
from .sequences import ProblemInstance, check_membership, quad_functional

_LOG_MAX = math.log(np.finfo(float).max)


class Construction(str, Enum):
    EPS_A = "eps_a"
    EPS_B = "eps_b"
    SIGMA_A = "sigma_a"
    SIGMA_B = "sigma_b"
    GOF = "gof"


class BoundKind(str, Enum):
    HYPERCUBE = "hypercube"
    TWO_POINT = "two_point"
    TESTING_CHI2 = "testing_chi2"
    TESTING_KL = "testing_kl"


# the KL budget <= 1 is met with equality at the proofs' choice of zeta;
# shrinking zeta by one part in 10^12 keeps it true after rounding
_BUDGET_SHRINK = 1.0 - 1e-12


class MembershipError(ValueError):
    pass


# -- divergences -----------------------------------------------------------

def _log_cosh(x: np.ndarray) -> np.ndarray:
    x = np.abs(x)
    return x + np.log1p(np.exp(-2.0 * x)) - math.log(2.0)


def chi2_mixture_vs_null(lam, beta, eps: float, kappa: int | None = None) -> float:
    """Chi-square divergence of the symmetric sign mixture from the zero signal.

    Equals prod_{j<=kappa} cosh(lambda_j^2 beta_j^2 / eps^2) - 1, accumulated
    in log space.  Returns ``inf`` once the product leaves double range.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    lam = np.asarray(lam, dtype=float)
    beta = np.asarray(beta, dtype=float)
    kappa = len(beta) if kappa is None else int(kappa)
    arg = lam[:kappa] ** 2 * beta[:kappa] ** 2 / eps**2
    log_prod = math.fsum(_log_cosh(arg))
    if log_prod > _LOG_MAX:
        return math.inf
    return math.expm1(log_prod)


def kl_gaussian_products(mean1, mean2, var_per_coord) -> float:
    """KL divergence between two product Gaussians sharing coordinate variances."""
    m1 = np.asarray(mean1, dtype=float)
    m2 = np.asarray(mean2, dtype=float)
    var = np.broadcast_to(np.asarray(var_per_coord, dtype=float), m1.shape)
    if np.any(var <= 0):
        raise ValueError("variances must be strictly positive")
    return math.fsum((m1 - m2) ** 2 / (2.0 * var))


def kl_observation_laws(theta1, lam1, theta2, lam2, eps: float, sigma: float) -> float:
    """KL between the laws of (X, Y) under two (theta, lambda) hypotheses.

    A block with zero noise contributes 0 when the means agree and +inf otherwise.
    """
    total = 0.0
    for mean1, mean2, sd in (
        (np.multiply(lam1, theta1), np.multiply(lam2, theta2), eps),
        (np.asarray(lam1, float), np.asarray(lam2, float), sigma),
    ):
        if sd > 0:
            total += kl_gaussian_products(mean1, mean2, sd * sd)
        elif np.any(mean1 != mean2):
            return math.inf
    return total


# -- hypercube prior -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HypercubePrior:
    kappa: int
    magnitude_per_coord: np.ndarray
    psi: float
    chi2: float
    scale: float
    ellipsoid_sum: float

    def vertex(self, signs=None) -> np.ndarray:
        """theta for a sign vector in {-1, +1}^kappa (all +1 by default)."""
        if signs is None:
            return self.magnitude_per_coord.copy()
        signs = np.asarray(signs, dtype=float)
        if signs.shape != (self.kappa,) or np.any(np.abs(signs) != 1):
            raise ValueError(f"signs must be a +/-1 vector of length {self.kappa}")
        return signs * self.magnitude_per_coord


def build_hypercube_prior(inst: ProblemInstance, kappa: int, scale: float) -> HypercubePrior:
    """Uniform prior on the vertices theta_i = +/- scale * eps * w_i a_i^-2 / (sum w^4 a^-4)^(1/4)."""
    kappa = int(kappa)
    if not 1 <= kappa <= inst.n_max:
        raise ValueError(f"kappa must lie in 1..{inst.n_max}")
    if not scale > 0:
        raise ValueError("scale must be positive")
    a = inst.alpha_values[:kappa]
    w = inst.omega_values[:kappa]
    g = inst.gamma_values[:kappa]
    norm = math.fsum(w**4 * a**-4.0) ** 0.25
    beta = scale * inst.eps * w * a**-2.0 / norm
    ell = math.fsum((g * beta) ** 2)
    if ell > inst.L**2 * (1 + 1e-12):
        raise MembershipError(
            f"hypercube vertices leave the ellipsoid: sum gamma^2 theta^2 = {ell:.6g} > L^2 = {inst.L**2:.6g}"
        )
    q = quad_functional(beta, np.zeros(kappa), w, kappa)
    chi2 = chi2_mixture_vs_null(a, beta, inst.eps, kappa) if inst.eps > 0 else math.inf
    beta.setflags(write=False)
    return HypercubePrior(kappa=kappa, magnitude_per_coord=beta, psi=q / 2.0, chi2=chi2,
                          scale=scale, ellipsoid_sum=ell)


def worst_case_prior(inst: ProblemInstance, k_max: int | None = None) -> tuple[HypercubePrior, float]:
    """Hypercube prior at the balancing kappa with scale L * nu^(-1/4).

    ``nu`` is the realised balance ratio at kappa, returned alongside.
    """
    kappa = selection.kappa_hypercube(inst, k_max).k
    nu = selection.balance_ratio(inst, kappa)
    return build_hypercube_prior(inst, kappa, inst.L * nu**-0.25), nu


def worst_case_theta(inst: ProblemInstance, k_max: int | None = None) -> np.ndarray:
    prior, _ = worst_case_prior(inst, k_max)
    theta = np.zeros(inst.n_max)
    theta[: prior.kappa] = prior.vertex()
    return theta


# -- two-point constructions -----------------------------------------------

@dataclass(frozen=True, eq=False)
class HypothesisPair:
    construction: Construction
    theta_plus: np.ndarray
    theta_minus: np.ndarray
    lambda_plus: np.ndarray
    lambda_minus: np.ndarray
    q_plus: float
    q_minus: float
    kl: float
    kappa: int
    zeta: float
    nu: float

    @property
    def gap(self) -> float:
        return abs(self.q_plus - self.q_minus)

    def as_record(self) -> dict:
        return {
            "construction": self.construction.value,
            "kappa": self.kappa,
            "zeta": self.zeta,
            "nu": self.nu,
            "q_plus": self.q_plus,
            "q_minus": self.q_minus,
            "gap": self.gap,
            "kl": self.kl,
            "bound": lower_bound_value(
                BoundKind.TESTING_KL if self.construction is Construction.GOF else BoundKind.TWO_POINT,
                gap=self.gap, kl=self.kl,
            ),
        }


def _spike(n: int, j: int, value: float) -> np.ndarray:
    out = np.zeros(n)
    out[j - 1] = value
    return out


def _verify(inst: ProblemInstance, theta, lam, theta_ref=None):
    kw = {"theta": theta, "lam": lam}
    if theta_ref is not None:
        kw["theta_ref"] = theta_ref
    m = check_membership(inst.replace(**kw))
    if not (m.theta_in_class and m.lambda_in_class and (theta_ref is None or m.theta_ref_in_class)):
        raise MembershipError(f"hypothesis outside the classes: {m}")


def build_two_point(inst: ProblemInstance, construction: Construction | str,
                    k_max: int | None = None) -> HypothesisPair:
    """Build the hypothesis pair of the named construction from the instance constants.

    The estimation constructions use theta_ref = 0 and nuisance lambda = alpha;
    ``gof`` keeps the instance's theta_ref (all coordinates up to k_gof nonzero).
    """
    construction = Construction(construction)
    n = inst.n_max
    a = inst.alpha_values
    g = inst.gamma_values
    w = inst.omega_values
    L, d, eps, sigma = inst.L, inst.d, inst.eps, inst.sigma
    zeros = np.zeros(n)
    lam0 = a.copy()

    if construction is Construction.EPS_A:
        if not eps > 0:
            raise ValueError("eps_a needs eps > 0")
        kappa = selection.kappa_eps_two_point(inst, k_max).k
        nu = selection.nu_from_ratio(eps**2 * g[kappa - 1] ** 2 / a[kappa - 1] ** 2)
        zeta = min(0.5, math.sqrt(2.0) / (L * d * math.sqrt(nu))) * _BUDGET_SHRINK
        th = [_spike(n, kappa, L / 2 * (1 + t * zeta) / g[kappa - 1]) for t in (1, -1)]
        lams = [lam0, lam0]
    elif construction is Construction.EPS_B:
        if not eps > 0:
            raise ValueError("eps_b needs eps > 0")
        kappa, nu = 1, 1.0
        zeta = min(L / 2, 1 / (math.sqrt(2.0) * d)) * _BUDGET_SHRINK
        th = [_spike(n, 1, (1 + t * eps) * zeta) for t in (1, -1)]
        lams = [lam0, lam0]
    elif construction is Construction.SIGMA_A:
        if not sigma > 0:
            raise ValueError("sigma_a needs sigma > 0")
        kappa = selection.kappa_sigma_two_point(inst, k_max).k
        nu = selection.nu_from_ratio(sigma**2 / a[kappa - 1] ** 2)
        zeta = min(1 / math.sqrt(2.0 * nu), 1 - 1 / d) * _BUDGET_SHRINK
        th = [_spike(n, kappa, L / d * (1 + t * zeta) / g[kappa - 1]) for t in (1, -1)]
        lams = []
        for t in (1, -1):
            lam = lam0.copy()
            lam[kappa - 1] = (1 - t * zeta) * a[kappa - 1]
            lams.append(lam)
    elif construction is Construction.SIGMA_B:
        if not sigma > 0:
            raise ValueError("sigma_b needs sigma > 0")
        kappa, nu = 1, 1.0
        zeta = min(1 / math.sqrt(2.0), 1 - 1 / d) * _BUDGET_SHRINK
        th = [_spike(n, 1, (1 + t * sigma * zeta) * L / 2) for t in (1, -1)]
        lams = []
        for t in (1, -1):
            lam = lam0.copy()
            lam[0] = 1 - t * sigma * zeta
            lams.append(lam)
    else:
        return _build_gof(inst, k_max)

    for theta, lam in zip(th, lams):
        _verify(inst, theta, lam, zeros)
    kl = kl_observation_laws(th[0], lams[0], th[1], lams[1], eps, sigma)
    q = [quad_functional(theta, zeros, w, n) for theta in th]
    for arr in (*th, *lams):
        arr.setflags(write=False)
    return HypothesisPair(construction, th[0], th[1], lams[0], lams[1], q[0], q[1], kl,
                          kappa, zeta, nu)


def _build_gof(inst: ProblemInstance, k_max: int | None) -> HypothesisPair:
    """Null (theta_ref, lambda0) against a perturbed (theta1, lambda1) with identical X law.

    ``theta_plus``/``lambda_plus`` hold the null, ``theta_minus``/``lambda_minus``
    the alternative.
    """
    if not inst.sigma > 0:
        raise ValueError("gof construction needs sigma > 0")
    n = inst.n_max
    a = inst.alpha_values
    g = inst.gamma_values
    kgof = selection.select_k_gof(inst, k_max).k
    ag = a[:kgof] ** -2.0 * g[:kgof] ** -2.0
    kappa = int(np.argmax(ag)) + 1
    if inst.theta_ref[kappa - 1] == 0:
        raise ValueError(f"gof construction needs theta_ref_{kappa} != 0")
    s = inst.sigma / (a[kappa - 1] * g[kappa - 1])
    # keeps (1 -/+ c s) alpha inside [alpha/d, d alpha] and KL = 2 c^2 gamma^-2 <= 1
    c = min(1 / math.sqrt(2.0), 1 - 1 / inst.d) / max(1.0, s) * _BUDGET_SHRINK
    lam_null = a.copy()
    lam_alt = a.copy()
    lam_null[kappa - 1] = (1 - c * s) * a[kappa - 1]
    lam_alt[kappa - 1] = (1 + c * s) * a[kappa - 1]
    th_null = np.array(inst.theta_ref, dtype=float)
    th_alt = th_null.copy()
    th_alt[kappa - 1] = (1 - c * s) / (1 + c * s) * th_null[kappa - 1]
    _verify(inst, th_null, lam_null, th_null)
    _verify(inst, th_alt, lam_alt, th_null)
    kl = kl_observation_laws(th_null, lam_null, th_alt, lam_alt, inst.eps, inst.sigma)
    ones = np.ones(n)
    q_null = 0.0
    q_alt = quad_functional(th_alt, th_null, ones, n)
    for arr in (th_null, th_alt, lam_null, lam_alt):
        arr.setflags(write=False)
    return HypothesisPair(Construction.GOF, th_null, th_alt, lam_null, lam_alt, q_null, q_alt,
                          kl, kappa, c, 1.0)


# -- reduction bounds ------------------------------------------------------

def lower_bound_value(kind: BoundKind | str, *, beta: float | None = None, psi: float | None = None,
                      gap: float | None = None, chi2: float | None = None,
                      kl: float | None = None) -> float:
    """Closed-form reduction bounds.

    hypercube     probability bound (1/4) exp(-beta); times psi^2 when ``psi``
                  is given (mean squared error bound via Markov's inequality)
    two_point     gap^2 / 16
    testing_chi2  1 - sqrt(chi2)
    testing_kl    1 - sqrt(kl / 2)
    """
    kind = BoundKind(kind)
    if kind is BoundKind.HYPERCUBE:
        if beta is None or beta < 0:
            raise ValueError("hypercube bound needs beta >= 0")
        p = 0.25 * math.exp(-beta)
        return p if psi is None else psi * psi * p
    if kind is BoundKind.TWO_POINT:
        if gap is None:
            raise ValueError("two_point bound needs the functional gap")
        return gap * gap / 16.0
    if kind is BoundKind.TESTING_CHI2:
        if chi2 is None or chi2 < 0:
            raise ValueError("testing_chi2 bound needs chi2 >= 0")
        return 1.0 - math.sqrt(chi2)
    if kl is None or kl < 0:
        raise ValueError("testing_kl bound needs kl >= 0")
    return 1.0 - math.sqrt(kl / 2.0)
