"""Plain-text run configuration.

Files use INI syntax with two sections::

    [instance]
    alpha = polynomial        ; polynomial | exponential | explicit
    a = 1
    gamma = polynomial        ; polynomial | exponential | explicit
    p = 1
    omega = constant          ; constant | polynomial | exponential
    omega_rate = 0
    eps = 0.01
    sigma = 0.01
    L = 1
    d = 1
    N_max = 10000
    theta = zero              ; see ThetaSpec
    theta_ref = zero
    lambda_signs = 1

    [run]
    seed = 0
    reps = 1000
    delta = 0.05
    workers = 1
    out = -
    format = csv

Every key is optional.  Explicit families take their values from
``alpha_values`` / ``gamma_values`` (comma or space separated).
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .sequences import (ProblemInstance, Regime, Role, SequenceFamily, constant, explicit, exponential,
                        polynomial)

INSTANCE_DEFAULTS = {
    "alpha": "polynomial",
    "a": "1",
    "alpha_values": "",
    "gamma": "polynomial",
    "p": "1",
    "gamma_values": "",
    "omega": "constant",
    "omega_rate": "0",
    "eps": "0.01",
    "sigma": "0.01",
    "L": "1",
    "d": "1",
    "N_max": "10000",
    "theta": "zero",
    "theta_ref": "zero",
    "lambda_signs": "1",
}

RUN_DEFAULTS = {
    "seed": "0",
    "reps": "1000",
    "delta": "0.05",
    "workers": "1",
    "out": "-",
    "format": "csv",
}

SECTIONS = {"instance": INSTANCE_DEFAULTS, "run": RUN_DEFAULTS}
_KEY_SECTION = {key.lower(): (sec, key) for sec, keys in SECTIONS.items() for key in keys}


class ConfigError(ValueError):
    """All problems found in a configuration, one message per entry."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class ThetaSpec:
    """Coefficient sequence description.

    ``zero``; ``spike:J:V`` (V at index J); ``poly:C:S`` (C j^-S);
    ``list:v1,v2,...`` (explicit prefix, zero afterwards); ``worst-case``
    (hypercube vertex of the configured instance, theta only).
    """

    kind: str
    params: tuple[float, ...] = ()

    def materialize(self, n: int) -> np.ndarray | None:
        """Coefficients over 1..n, or None for ``worst-case`` (resolved against an instance)."""
        j = np.arange(1, n + 1, dtype=float)
        if self.kind == "zero":
            return np.zeros(n)
        if self.kind == "spike":
            idx, val = int(self.params[0]), self.params[1]
            if idx > n:
                raise ValueError(f"spike index {idx} exceeds N_max={n}")
            out = np.zeros(n)
            out[idx - 1] = val
            return out
        if self.kind == "poly":
            c, s = self.params
            return c * j**-s
        if self.kind == "list":
            if len(self.params) > n:
                raise ValueError(f"list of {len(self.params)} values exceeds N_max={n}")
            out = np.zeros(n)
            out[: len(self.params)] = self.params
            return out
        return None

    def tail_bound(self, n: int) -> float:
        """Upper bound on sum_{j>n} theta_j^2 (zero for finitely supported specs)."""
        if self.kind != "poly":
            return 0.0
        c, s = self.params
        if 2 * s <= 1:
            return math.inf
        return c * c * n ** (1 - 2 * s) / (2 * s - 1)


_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"


def parse_theta_spec(text: str, *, allow_worst_case: bool = True) -> ThetaSpec:
    t = text.strip().lower()
    if t == "zero":
        return ThetaSpec("zero")
    if t == "worst-case":
        if not allow_worst_case:
            raise ValueError("worst-case is only available for theta")
        return ThetaSpec("worst-case")
    m = re.fullmatch(rf"spike:(\d+):({_NUM})", t)
    if m:
        if int(m.group(1)) < 1:
            raise ValueError("spike index must be >= 1")
        return ThetaSpec("spike", (float(m.group(1)), float(m.group(2))))
    m = re.fullmatch(rf"poly:({_NUM}):({_NUM})", t)
    if m:
        return ThetaSpec("poly", (float(m.group(1)), float(m.group(2))))
    if t.startswith("list:"):
        vals = _number_list(t[5:])
        if not vals:
            raise ValueError("list spec needs at least one value")
        return ThetaSpec("list", tuple(vals))
    raise ValueError(f"unrecognised sequence spec {text!r} (use zero, spike:J:V, poly:C:S, list:..., worst-case)")


def _number_list(text: str) -> list[float]:
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    out = []
    for p in parts:
        v = float(p)
        if not math.isfinite(v):
            raise ValueError(f"non-finite value {p!r}")
        out.append(v)
    return out


@dataclass(frozen=True)
class RunConfig:
    alpha: SequenceFamily
    gamma: SequenceFamily
    omega: SequenceFamily
    eps: float
    sigma: float
    L: float
    d: float
    n_max: int
    theta: ThetaSpec
    theta_ref: ThetaSpec
    lambda_signs: tuple[float, ...]
    seed: int
    reps: int
    delta: float
    workers: int
    out: str
    format: str
    raw: dict[str, str] = field(default_factory=dict, compare=False)

    def instance(self) -> ProblemInstance:
        """Build the problem instance; ``worst-case`` theta is resolved last."""
        from .lower_bounds import worst_case_theta

        th0 = self.theta_ref.materialize(self.n_max)
        th = self.theta.materialize(self.n_max)
        inst = ProblemInstance.build(
            alpha=self.alpha, gamma=self.gamma, omega=self.omega, eps=self.eps, sigma=self.sigma,
            L=self.L, d=self.d, n_max=self.n_max, theta=th, theta_ref=th0,
            lambda_signs=self.lambda_signs,
        )
        if th is None:
            inst = inst.replace(theta=worst_case_theta(inst))
        return inst

    def neglected_tail(self) -> float:
        """Bound on the part of Q(theta) beyond N_max (omega = 1 and theta_ref finitely supported)."""
        if self.theta.kind != "poly" and self.theta_ref.kind != "poly":
            return 0.0
        if self.theta_ref.kind == "poly" or self.omega.regime is not Regime.CONSTANT:
            return math.inf
        return self.theta.tail_bound(self.n_max)


def _family(kind: str, role: Role, param: float, values: str, errors: list[str]) -> SequenceFamily | None:
    try:
        if kind == "polynomial":
            return polynomial(role, param)
        if kind == "exponential":
            return exponential(role, param)
        if kind == "constant":
            return constant(role)
        if kind == "explicit" and role is not Role.OMEGA:
            return explicit(role, _number_list(values))
        errors.append(f"{role.value}: unknown family {kind!r}")
    except ValueError as exc:
        errors.append(f"{role.value}: {exc}")
    return None


def _read_ini(text: str) -> dict[str, str]:
    parser = configparser.ConfigParser(strict=True, interpolation=None,
                                       inline_comment_prefixes=(";", "#"))
    parser.optionxform = str  # keep key case for messages
    try:
        parser.read_string(text, source="<config>")
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError([f"syntax error at line {exc.lineno}: key outside a [section]"]) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError([f"syntax error at line {exc.lineno}: duplicate key {exc.option!r} "
                           f"in [{exc.section}]"]) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError([f"syntax error at line {exc.lineno}: duplicate section [{exc.section}]"]) from None
    except configparser.ParsingError as exc:
        raise ConfigError([f"syntax error at line {ln}: cannot parse {line.strip()!r}"
                           for ln, line in exc.errors]) from None

    errors, raw = [], {}
    for sec in parser.sections():
        if sec not in SECTIONS:
            errors.append(f"unknown section [{sec}]")
            continue
        for key, value in parser.items(sec):
            hit = _KEY_SECTION.get(key.lower())
            if hit is None or hit[0] != sec:
                errors.append(f"unknown key {key!r} in [{sec}]")
            else:
                raw[hit[1]] = value.strip()
    if errors:
        raise ConfigError(errors)
    return raw


def parse_config(text: str = "", overrides: dict[str, object] | None = None) -> RunConfig:
    """Parse and validate configuration text; ``overrides`` (e.g. CLI flags) take precedence.

    Raises ConfigError listing every syntax or semantic problem found.
    """
    raw = {**INSTANCE_DEFAULTS, **RUN_DEFAULTS, **_read_ini(text)}
    errors = []
    for key, value in (overrides or {}).items():
        hit = _KEY_SECTION.get(key.lower())
        if hit is None:
            errors.append(f"unknown override {key!r}")
        elif value is not None:
            raw[hit[1]] = str(value)

    def num(key, cast=float):
        try:
            v = cast(raw[key])
        except ValueError:
            errors.append(f"{key}: expected a {'integer' if cast is int else 'number'}, got {raw[key]!r}")
            return None
        if cast is float and not math.isfinite(v):
            errors.append(f"{key}: must be finite")
            return None
        return v

    a, p, omega_rate = num("a"), num("p"), num("omega_rate")
    eps, sigma, L, d = num("eps"), num("sigma"), num("L"), num("d")
    n_max, seed, reps, workers = num("N_max", int), num("seed", int), num("reps", int), num("workers", int)
    delta = num("delta")

    if eps is not None and not 0 < eps <= 1:
        errors.append("eps must lie in (0, 1]")
    if sigma is not None and not 0 <= sigma <= 1:
        errors.append("sigma must lie in [0, 1]")
    if L is not None and not L > 0:
        errors.append("L must be > 0")
    if d is not None and not d >= 1:
        errors.append("d must be ≥ 1")
    if n_max is not None and n_max < 1:
        errors.append("N_max must be ≥ 1")
    if seed is not None and not 0 <= seed < 2**64:
        errors.append("seed must be a 64-bit unsigned integer")
    if reps is not None and reps < 2:
        errors.append("reps must be ≥ 2")
    if workers is not None and workers < 1:
        errors.append("workers must be ≥ 1")
    if delta is not None and not 0 < delta < 1:
        errors.append("delta must lie in (0, 1)")
    if raw["format"] not in ("csv", "json"):
        errors.append("format must be csv or json")

    fams = {}
    for name, role, param in (("alpha", Role.ALPHA, a), ("gamma", Role.GAMMA, p), ("omega", Role.OMEGA, omega_rate)):
        if param is None:
            continue
        fams[name] = _family(raw[name].lower(), role, param, raw.get(f"{name}_values", ""), errors)

    specs = {}
    for key in ("theta", "theta_ref"):
        try:
            specs[key] = parse_theta_spec(raw[key], allow_worst_case=key == "theta")
        except ValueError as exc:
            errors.append(f"{key}: {exc}")
    try:
        signs = tuple(_number_list(raw["lambda_signs"]))
        if not signs or any(s not in (1.0, -1.0) for s in signs):
            errors.append("lambda_signs entries must be +1 or -1")
    except ValueError as exc:
        errors.append(f"lambda_signs: {exc}")
        signs = (1.0,)

    if errors:
        raise ConfigError(errors)

    cfg = RunConfig(
        alpha=fams["alpha"], gamma=fams["gamma"], omega=fams["omega"], eps=eps, sigma=sigma, L=L, d=d,
        n_max=n_max, theta=specs["theta"], theta_ref=specs["theta_ref"], lambda_signs=signs,
        seed=seed, reps=reps, delta=delta, workers=workers, out=raw["out"], format=raw["format"],
        raw=dict(raw),
    )
    _check_instance(cfg)
    return cfg


def _check_instance(cfg: RunConfig):
    """Semantic checks that need the materialised sequences."""
    from .sequences import check_membership

    errors = []
    try:
        inst = cfg.instance()
    except ValueError as exc:
        raise ConfigError([str(exc)]) from None
    ratio = inst.omega_values / inst.gamma_values
    if np.any(np.diff(ratio) > 1e-12 * ratio[:-1]):
        errors.append("omega / gamma must be non-increasing")
    m = check_membership(inst)
    if not m.theta_in_class:
        errors.append(f"theta outside the ellipsoid: sum gamma^2 theta^2 = {m.ellipsoid_sum:.6g} > L^2")
    if not m.theta_ref_in_class:
        errors.append(f"theta_ref outside the ellipsoid: sum gamma^2 theta_ref^2 = {m.ellipsoid_sum_ref:.6g} > L^2")
    if errors:
        raise ConfigError(errors)


def load_config(path: str | None, overrides: dict[str, object] | None = None) -> RunConfig:
    text = ""
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return parse_config(text, overrides)
