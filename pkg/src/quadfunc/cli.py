"""Command-line entry point.

Values are resolved in this order, later ones winning: built-in defaults,
the ``--config`` file, then command-line flags.  Exit status is 0 on
success and 2 on any validation or precondition failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict
from enum import Enum
from typing import Sequence

import numpy as np

from . import lower_bounds, montecarlo, selection, testing
from .config import ConfigError, RunConfig, load_config
from .estimator import estimate, estimate_alternative, risk_bound
from .sequences import quad_functional, sample_observations

EXIT_OK = 0
EXIT_INVALID = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


# -- output ------------------------------------------------------------------

def _plain(v):
    """Python scalar for numpy scalars and enums."""
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, Enum):
        return v.value
    return v


def _csv_cell(v):
    v = _plain(v)
    return repr(v) if isinstance(v, float) else v


def _json_cell(v):
    v = _plain(v)
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def render(records: list[dict], fmt: str) -> str:
    """CSV (header from the first record) or a JSON array of objects."""
    if fmt == "json":
        rows = [{k: _json_cell(v) for k, v in r.items()} for r in records]
        return json.dumps(rows, indent=2) + "\n"
    buf = io.StringIO()
    if records:
        w = csv.DictWriter(buf, fieldnames=list(records[0]), lineterminator="\n")
        w.writeheader()
        w.writerows({k: _csv_cell(v) for k, v in r.items()} for r in records)
    return buf.getvalue()


def _emit(records: list[dict], cfg: RunConfig):
    text = render(records, cfg.format)
    if cfg.out == "-":
        sys.stdout.write(text)
    else:
        with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


# -- subcommands -------------------------------------------------------------

def cmd_simulate(cfg: RunConfig, args) -> int:
    obs = sample_observations(cfg.instance(), cfg.seed)
    if cfg.format == "csv":
        text = obs.to_csv()
        if cfg.out == "-":
            sys.stdout.write(text)
        else:
            with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return EXIT_OK
    _emit([{"j": j + 1, "x": obs.x[j], "y": obs.y[j], "y_plus": obs.y_plus[j], "y_minus": obs.y_minus[j]}
           for j in range(len(obs))], cfg)
    return EXIT_OK


def cmd_estimate(cfg: RunConfig, args) -> int:
    inst = cfg.instance()
    k = montecarlo.resolve_k(inst, args.k)
    obs = sample_observations(inst, cfg.seed)
    if args.estimator == "alternative":
        value = estimate_alternative(inst, obs, k)
        truth = quad_functional(inst.theta, inst.theta_ref, [1.0] * inst.n_max, inst.n_max)
    else:
        value = estimate(inst, obs, k)
        truth = quad_functional(inst.theta, inst.theta_ref, inst.omega_values, inst.n_max)
    rec = {"k": k, "estimator": args.estimator, "estimate": value, "functional": truth,
           "neglected_tail": cfg.neglected_tail(), "seed": cfg.seed}
    rb = risk_bound(inst, k, args.c_aux)
    rec.update({name: val for name, val in zip(rb.csv_header()[1:], rb.csv_row()[1:])})
    _emit([rec], cfg)
    return EXIT_OK


def _grid(text: str | None, default: float) -> list[float]:
    if not text:
        return [default]
    return [float(v) for v in text.replace(",", " ").split()]


def cmd_select_k(cfg: RunConfig, args) -> int:
    base = cfg.instance()
    regime = selection.regime_of(base)
    rows = []
    for eps in _grid(args.eps_grid, cfg.eps):
        for sigma in _grid(args.sigma_grid, cfg.sigma):
            inst = base.replace(eps=eps, sigma=sigma)
            star = selection.select_k_star(inst)
            pred = math.nan
            if regime is not None:
                reg, p, a = regime
                pred = selection.predicted_rate(reg, p, a, eps, sigma)
            rows.append({
                "eps": eps, "sigma": sigma,
                "k_eps": selection.select_k_epsilon(inst).k,
                "k_sigma": selection.select_k_sigma(inst).k,
                "k_star": star.k,
                "k_sd": selection.select_k_sd(inst).k,
                "k_gof": selection.select_k_gof(inst).k,
                "objective": star.objective,
                "predicted_rate": pred,
            })
    _emit(rows, cfg)
    return EXIT_OK


def cmd_test(cfg: RunConfig, args) -> int:
    inst = cfg.instance()
    stats, thr, rej = montecarlo.rejections(inst, args.kind, cfg.delta, cfg.reps, cfg.seed,
                                            c_multiplier=args.c_multiplier, workers=cfg.workers)
    _emit([{"rep": i + 1, "statistic": float(s), "threshold": thr, "reject": int(r)}
           for i, (s, r) in enumerate(zip(stats, rej))], cfg)
    return EXIT_OK


def cmd_rates(args) -> int:
    if args.problem == "estimation":
        value = selection.predicted_rate(args.regime, args.p, args.a, args.eps, args.sigma)
    else:
        value = selection.predicted_testing_rate(args.problem, args.regime, args.p, args.a, args.eps, args.sigma)
    print(f"{value:.3e}")
    return EXIT_OK


def cmd_lower_bound(cfg: RunConfig, args) -> int:
    inst = cfg.instance()
    if args.construction == "hypercube":
        prior, nu = lower_bounds.worst_case_prior(inst)
        rec = {"construction": "hypercube", "kappa": prior.kappa, "scale": prior.scale, "nu": nu,
               "psi": prior.psi, "chi2": prior.chi2, "ellipsoid_sum": prior.ellipsoid_sum,
               "bound": lower_bounds.lower_bound_value("hypercube", beta=prior.chi2, psi=prior.psi)}
    else:
        rec = lower_bounds.build_two_point(inst, args.construction).as_record()
    _emit([rec], cfg)
    return EXIT_OK


def cmd_experiment(cfg: RunConfig, args) -> int:
    inst = cfg.instance()
    kind = args.kind
    if kind == "risk":
        rep = montecarlo.run_risk_experiment(inst, args.k, cfg.reps, cfg.seed, estimator=args.estimator,
                                             workers=cfg.workers)
        rec = rep.as_record()
        rec["neglected_tail"] = cfg.neglected_tail()
        _emit([rec], cfg)
    elif kind == "power":
        if args.multiple is not None:
            results = [montecarlo.run_power_experiment(inst, args.test, cfg.delta, args.multiple, cfg.reps,
                                                       cfg.seed, c_multiplier=args.c_multiplier,
                                                       workers=cfg.workers)]
            chosen = args.multiple if results[0].type2 <= cfg.delta else math.nan
        else:
            cal = montecarlo.calibrate_separation(inst, args.test, cfg.delta, cfg.reps, cfg.seed,
                                                  c_multiplier=args.c_multiplier, workers=cfg.workers)
            results = list(cal.results)
            chosen = math.nan if cal.separation_multiple is None else cal.separation_multiple
        rows = []
        for r in results:
            row = asdict(r)
            row["calibrated_multiple"] = chosen
            rows.append(row)
        _emit(rows, cfg)
    elif kind == "slope":
        grid = _grid(args.eps_grid, cfg.eps)
        res = montecarlo.run_slope_experiment(inst, grid, cfg.reps, cfg.seed, k_rule=args.k,
                                              workers=cfg.workers)
        regime = selection.regime_of(inst)
        predicted = math.nan
        if regime is not None:
            pred = selection.rate_prediction(*regime)
            if not pred.logarithmic:
                predicted = pred.exponent_eps
        rows = [{"eps": eps, "risk": risk, "std_error": rep.std_error, "k": rep.metadata["k"],
                 "slope": res.fit.slope, "intercept": res.fit.intercept, "r_squared": res.fit.r_squared,
                 "predicted_slope": predicted}
                for (eps, risk), rep in zip(res.points, res.reports)]
        _emit(rows, cfg)
    else:
        checks = montecarlo.verify_moment_identities(inst, args.j, cfg.reps, cfg.seed, workers=cfg.workers)
        checks += montecarlo.verify_component_identities(inst, args.j, cfg.reps, cfg.seed, workers=cfg.workers)
        _emit([c.as_record() for c in checks], cfg)
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------

_OVERRIDES = {
    "eps": float, "sigma": float, "L": float, "d": float, "n_max": int,
    "seed": int, "reps": int, "delta": float, "workers": int, "out": str, "format": str,
}
_OVERRIDE_KEYS = {"n_max": "N_max"}


def _common(p: argparse.ArgumentParser, *, with_config: bool = True):
    if with_config:
        p.add_argument("--config", help="INI configuration file")
        for name, typ in _OVERRIDES.items():
            flag = "--" + name.replace("_", "-")
            kw = {"choices": ["csv", "json"]} if name == "format" else {}
            p.add_argument(flag, dest=f"ov_{name}", type=typ, default=None, metavar=name.upper(),
                           help=f"override {_OVERRIDE_KEYS.get(name, name)}", **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="quadfunc", description="Quadratic functional estimation and testing "
                     "in Gaussian sequence models with noisy eigenvalues.",
                     epilog="Precedence: built-in defaults < --config file < command-line flags.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("simulate", help="draw one observation set (CSV j,x,y,y_plus,y_minus)")
    _common(p)

    p = sub.add_parser("estimate", help="estimate Q(theta) from one simulated sample")
    _common(p)
    p.add_argument("--k", default="k_star", help="truncation level or rule (k_star, k_sd, k_gof)")
    p.add_argument("--estimator", choices=["cloned", "alternative"], default="cloned")
    p.add_argument("--c-aux", type=float, default=1.0, help="constant in the two gamma-weighted sigma terms")

    p = sub.add_parser("select-k", help="truncation levels over an (eps, sigma) grid")
    _common(p)
    p.add_argument("--eps-grid", help="comma separated eps values (default: config eps)")
    p.add_argument("--sigma-grid", help="comma separated sigma values (default: config sigma)")

    p = sub.add_parser("test", help="replicated test decisions (CSV rep,statistic,threshold,reject)")
    p.add_argument("kind", choices=["sd", "gof"])
    _common(p)
    p.add_argument("--c-multiplier", type=float, default=1.0)

    p = sub.add_parser("rates", help="closed-form rate table entry")
    p.add_argument("--regime", required=True, choices=[r.value for r in selection.RateRegime])
    p.add_argument("--problem", default="estimation", choices=["estimation", "sd", "gof"])
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--sigma", type=float, default=0.0)

    p = sub.add_parser("lower-bound", help="lower-bound construction record")
    _common(p)
    p.add_argument("--construction", required=True,
                   choices=[c.value for c in lower_bounds.Construction] + ["hypercube"])

    p = sub.add_parser("experiment", help="Monte Carlo experiments")
    p.add_argument("kind", choices=["risk", "power", "slope", "moments"])
    _common(p)
    p.add_argument("--k", default="k_star", help="risk/slope: truncation level or rule")
    p.add_argument("--estimator", choices=["cloned", "alternative"], default="cloned")
    p.add_argument("--test", choices=["sd", "gof"], default="sd", help="power: which test")
    p.add_argument("--multiple", type=float, help="power: separation multiple (omit to calibrate)")
    p.add_argument("--c-multiplier", type=float, default=1.0)
    p.add_argument("--eps-grid", help="slope: comma separated eps values")
    p.add_argument("--j", type=int, default=1, help="moments: coordinate index")
    return parser


_COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "select-k": cmd_select_k,
    "test": cmd_test,
    "lower-bound": cmd_lower_bound,
    "experiment": cmd_experiment,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "rates":
            return cmd_rates(args)
        overrides = {_OVERRIDE_KEYS.get(n, n): getattr(args, f"ov_{n}") for n in _OVERRIDES}
        cfg = load_config(args.config, overrides)
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"quadfunc: {exc}", file=sys.stderr)
    except (testing.PreconditionError, ValueError, OSError) as exc:
        print(f"quadfunc: error: {exc}", file=sys.stderr)
    return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
