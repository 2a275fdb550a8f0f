"""Sequence families, model instances and observation sampling.

The observation model is

    X_j = lambda_j * theta_j + eps * xi_j
    Y_j = lambda_j + sigma * eta_j

and the eigenvalue sample is cloned into two independent halves
Y'_j = Y_j + sigma * eta~_j, Y''_j = Y_j - sigma * eta~_j.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np

DEFAULT_N_MAX = 10_000

# relative slack for the class inequalities, so that boundary points
# built from floating-point arithmetic are not rejected by rounding
_CLASS_RTOL = 1e-12


class Role(str, Enum):
    ALPHA = "alpha"
    GAMMA = "gamma"
    OMEGA = "omega"


class Regime(str, Enum):
    POLYNOMIAL = "polynomial"
    EXPONENTIAL = "exponential"
    CONSTANT = "constant"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class SequenceFamily:
    """Closed-form weight sequence normalised to 1 at j = 1.

    ``param`` is the exponent ``a`` for alpha (decay) and ``p`` for gamma
    (growth).  For omega the polynomial/exponential parameter is used as a
    signed growth rate.
    """

    regime: Regime
    role: Role
    param: float = 0.0
    explicit: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "regime", Regime(self.regime))
        object.__setattr__(self, "role", Role(self.role))
        if self.regime is Regime.EXPLICIT:
            vals = tuple(float(v) for v in self.explicit)
            if not vals:
                raise ValueError("explicit family needs at least one value")
            if any(not (v > 0 and math.isfinite(v)) for v in vals):
                raise ValueError("explicit family values must be positive and finite")
            if vals[0] != 1.0:
                raise ValueError("explicit family must be normalised to 1 at j = 1")
            diffs = np.diff(vals)
            if self.role is Role.ALPHA and np.any(diffs > 0):
                raise ValueError("alpha family must be non-increasing")
            if self.role is Role.GAMMA and np.any(diffs < 0):
                raise ValueError("gamma family must be non-decreasing")
            object.__setattr__(self, "explicit", vals)
        elif self.regime in (Regime.POLYNOMIAL, Regime.EXPONENTIAL):
            if not math.isfinite(self.param):
                raise ValueError("family parameter must be finite")
            if self.role is not Role.OMEGA and self.param < 0:
                raise ValueError(f"{self.role.value} family parameter must be >= 0")

    @property
    def _sign(self) -> float:
        return -1.0 if self.role is Role.ALPHA else 1.0

    def values(self, n: int) -> np.ndarray:
        """Return the first ``n`` terms (indices 1..n) as a float array."""
        if n < 1:
            raise ValueError("n must be >= 1")
        j = np.arange(1, n + 1, dtype=float)
        # range failures are reported below with the offending index
        with np.errstate(over="ignore", under="ignore"):
            if self.regime is Regime.POLYNOMIAL:
                out = j ** (self._sign * self.param)
            elif self.regime is Regime.EXPONENTIAL:
                out = np.exp(self._sign * self.param * (j - 1.0))
            elif self.regime is Regime.CONSTANT:
                out = np.ones(n)
            else:
                if n > len(self.explicit):
                    raise ValueError(
                        f"explicit family has {len(self.explicit)} values, {n} requested"
                    )
                out = np.array(self.explicit[:n], dtype=float)
        if not np.all(np.isfinite(out)) or np.any(out <= 0):
            bad = int(np.flatnonzero(~np.isfinite(out) | (out <= 0))[0]) + 1
            raise ValueError(
                f"{self.role.value} family leaves the positive floating-point range at j = {bad}; "
                "use a smaller horizon"
            )
        return out


def eval_family(family: SequenceFamily, j: int) -> float:
    if j < 1:
        raise ValueError("index j must be >= 1")
    return float(family.values(j)[j - 1])


def polynomial(role: Role | str, exponent: float) -> SequenceFamily:
    return SequenceFamily(Regime.POLYNOMIAL, Role(role), float(exponent))


def exponential(role: Role | str, rate: float) -> SequenceFamily:
    return SequenceFamily(Regime.EXPONENTIAL, Role(role), float(rate))


def constant(role: Role | str) -> SequenceFamily:
    return SequenceFamily(Regime.CONSTANT, Role(role))


def explicit(role: Role | str, values: Sequence[float]) -> SequenceFamily:
    return SequenceFamily(Regime.EXPLICIT, Role(role), explicit=tuple(values))


def _frozen(a, n: int, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim != 1 or arr.shape[0] != n:
        raise ValueError(f"{name} must be a 1-d sequence of length {n}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Full model configuration, truncated at ``n_max`` coordinates.

    ``eps`` and ``sigma`` may be zero (degenerate, noiseless checks); the
    model's setting is the open interval (0, 1).
    """

    theta: np.ndarray
    theta_ref: np.ndarray
    lam: np.ndarray
    eps: float
    sigma: float
    L: float
    d: float
    alpha: SequenceFamily
    gamma: SequenceFamily
    omega: SequenceFamily = field(default_factory=lambda: constant(Role.OMEGA))
    n_max: int = 0

    def __post_init__(self):
        n = self.n_max or len(self.theta)
        object.__setattr__(self, "n_max", int(n))
        for name in ("theta", "theta_ref", "lam"):
            object.__setattr__(self, name, _frozen(getattr(self, name), n, name))
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError("eps must lie in [0, 1]")
        if not 0.0 <= self.sigma <= 1.0:
            raise ValueError("sigma must lie in [0, 1]")
        if not self.L > 0:
            raise ValueError("L must be > 0")
        if not self.d >= 1:
            raise ValueError("d must be >= 1")
        for name, role in (("alpha", Role.ALPHA), ("gamma", Role.GAMMA), ("omega", Role.OMEGA)):
            fam = getattr(self, name)
            if fam.role is not role:
                raise ValueError(f"{name} family has role {fam.role.value}")
        a, g, w = (self.alpha.values(n), self.gamma.values(n), self.omega.values(n))
        for arr in (a, g, w):
            arr.setflags(write=False)
        object.__setattr__(self, "_a", a)
        object.__setattr__(self, "_g", g)
        object.__setattr__(self, "_w", w)

    @property
    def alpha_values(self) -> np.ndarray:
        return self._a

    @property
    def gamma_values(self) -> np.ndarray:
        return self._g

    @property
    def omega_values(self) -> np.ndarray:
        return self._w

    def replace(self, **changes) -> "ProblemInstance":
        """Copy with changed fields; ``n_max`` follows the new sequences."""
        if "n_max" not in changes and "theta" in changes:
            changes["n_max"] = len(changes["theta"])
        return replace(self, **changes)

    @classmethod
    def build(
        cls,
        *,
        alpha: SequenceFamily,
        gamma: SequenceFamily,
        omega: SequenceFamily | None = None,
        eps: float,
        sigma: float,
        L: float = 1.0,
        d: float = 1.0,
        n_max: int = DEFAULT_N_MAX,
        theta=None,
        theta_ref=None,
        lam=None,
        lambda_signs: Sequence[float] | None = None,
    ) -> "ProblemInstance":
        """Convenience constructor: zero theta/theta_ref and lambda = alpha by default.

        ``theta``/``theta_ref`` may be shorter than ``n_max``; they are padded
        with zeros.  ``lambda_signs`` is repeated cyclically over j.
        """
        omega = omega if omega is not None else constant(Role.OMEGA)
        th = _padded(theta, n_max)
        th0 = _padded(theta_ref, n_max)
        if lam is None:
            lam = alpha.values(n_max).copy()
            if lambda_signs is not None:
                signs = np.resize(np.asarray(lambda_signs, dtype=float), n_max)
                if np.any(np.abs(signs) != 1):
                    raise ValueError("lambda sign mask entries must be +1 or -1")
                lam = lam * signs
        return cls(
            theta=th, theta_ref=th0, lam=lam, eps=float(eps), sigma=float(sigma),
            L=float(L), d=float(d), alpha=alpha, gamma=gamma, omega=omega, n_max=n_max,
        )


def _padded(values, n: int) -> np.ndarray:
    out = np.zeros(n)
    if values is None:
        return out
    arr = np.asarray(values, dtype=float).ravel()
    if arr.shape[0] > n:
        raise ValueError(f"sequence of length {arr.shape[0]} exceeds n_max={n}")
    out[: arr.shape[0]] = arr
    return out


@dataclass(frozen=True)
class Membership:
    theta_in_class: bool
    theta_ref_in_class: bool
    lambda_in_class: bool
    ellipsoid_sum: float
    ellipsoid_sum_ref: float

    @property
    def ok(self) -> bool:
        return self.theta_in_class and self.theta_ref_in_class and self.lambda_in_class


def ellipsoid_sum(theta: np.ndarray, gamma_values: np.ndarray) -> float:
    return math.fsum((gamma_values * theta) ** 2)


def check_membership(inst: ProblemInstance) -> Membership:
    g = inst.gamma_values
    bound = inst.L * inst.L * (1 + _CLASS_RTOL)
    s = ellipsoid_sum(inst.theta, g)
    s0 = ellipsoid_sum(inst.theta_ref, g)
    a = inst.alpha_values
    absl = np.abs(inst.lam)
    lam_ok = bool(
        np.all(absl >= a / inst.d * (1 - _CLASS_RTOL))
        and np.all(absl <= inst.d * a * (1 + _CLASS_RTOL))
    )
    return Membership(
        theta_in_class=s <= bound,
        theta_ref_in_class=s0 <= bound,
        lambda_in_class=lam_ok,
        ellipsoid_sum=s,
        ellipsoid_sum_ref=s0,
    )


@dataclass(frozen=True, eq=False)
class ObservationSet:
    x: np.ndarray
    y: np.ndarray
    y_plus: np.ndarray
    y_minus: np.ndarray
    seed: int

    def __len__(self) -> int:
        return self.x.shape[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["j", "x", "y", "y_plus", "y_minus"])
        for j in range(len(self)):
            w.writerow([j + 1, repr(float(self.x[j])), repr(float(self.y[j])),
                        repr(float(self.y_plus[j])), repr(float(self.y_minus[j]))])
        return buf.getvalue()


def draw_noise(rng: np.random.Generator, reps: int, n: int):
    """Standard normal noise (xi, eta, eta_tilde), each of shape (reps, n)."""
    xi = rng.standard_normal((reps, n))
    eta = rng.standard_normal((reps, n))
    eta_t = rng.standard_normal((reps, n))
    return xi, eta, eta_t


def observations_from_noise(inst: ProblemInstance, xi, eta, eta_t, n: int | None = None):
    """Build (x, y, y_plus, y_minus) from noise arrays over the first n coordinates.

    The returned y is the midpoint of the two clones, which agrees with
    lambda + sigma * eta up to one rounding and makes the cloning identity
    (y_plus + y_minus) / 2 == y hold bit for bit.
    """
    n = n or xi.shape[-1]
    lam = inst.lam[:n]
    x = lam * inst.theta[:n] + inst.eps * xi
    y = lam + inst.sigma * eta
    y_plus = y + inst.sigma * eta_t
    y_minus = y - inst.sigma * eta_t
    return x, (y_plus + y_minus) / 2, y_plus, y_minus


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return seed


def sample_observations(inst: ProblemInstance, seed: int) -> ObservationSet:
    seed = _check_seed(seed)
    rng = np.random.default_rng(seed)
    xi, eta, eta_t = draw_noise(rng, 1, inst.n_max)
    x, y, yp, ym = observations_from_noise(inst, xi[0], eta[0], eta_t[0])
    for arr in (x, y, yp, ym):
        arr.setflags(write=False)
    return ObservationSet(x=x, y=y, y_plus=yp, y_minus=ym, seed=seed)


def quad_functional(theta, theta_ref, omega: SequenceFamily | np.ndarray, horizon: int) -> float:
    """Weighted squared distance sum_{j<=horizon} omega_j^2 (theta_j - theta_ref_j)^2."""
    theta = np.asarray(theta, dtype=float)
    theta_ref = np.asarray(theta_ref, dtype=float)
    if horizon < 1 or theta.shape[0] < horizon or theta_ref.shape[0] < horizon:
        raise ValueError("sequences must cover the requested horizon")
    w = omega.values(horizon) if isinstance(omega, SequenceFamily) else np.asarray(omega)[:horizon]
    diff = theta[:horizon] - theta_ref[:horizon]
    return math.fsum((w * w) * (diff * diff))
