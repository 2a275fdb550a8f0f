import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadfunc import montecarlo as mc
from quadfunc.estimator import risk_bound
from quadfunc.lower_bounds import worst_case_theta
from tests.conftest import make_instance, unit_instance


def gof_instance(eps=1e-4, sigma=1e-4, n_max=2000):
    j = np.arange(1, n_max + 1)
    return make_instance(eps=eps, sigma=sigma, n_max=n_max, theta_ref=0.01 * j**-2.0)


class TestReplicate:
    def test_worker_count_does_not_change_values(self):
        def fn(rng, n):
            return rng.standard_normal(n)

        one = mc.replicate(fn, 25_001, 99, workers=1)
        many = mc.replicate(fn, 25_001, 99, workers=8)
        np.testing.assert_array_equal(one, many)

    def test_streams_differ(self):
        def fn(rng, n):
            return rng.standard_normal(n)

        a = mc.replicate(fn, 10, 1, stream=0)
        b = mc.replicate(fn, 10, 1, stream=1)
        assert not np.array_equal(a, b)

    def test_wrong_length_detected(self):
        with pytest.raises(RuntimeError):
            mc.replicate(lambda rng, n: np.zeros(n + 1), 5, 0)

    def test_seed_range(self):
        with pytest.raises(ValueError):
            mc.replicate(lambda rng, n: np.zeros(n), 5, 2**64)


class TestExperimentReport:
    @given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=200))
    def test_std_error_invariant(self, values):
        rep = mc.ExperimentReport.from_values("x", np.array(values), 0)
        assert rep.std_error == math.sqrt(rep.variance / rep.reps)
        assert rep.reps == len(values)

    def test_needs_two(self):
        with pytest.raises(ValueError):
            mc.ExperimentReport.from_values("x", np.array([1.0]), 0)


class TestRiskExperiment:
    def test_noiseless_exact(self):
        inst = make_instance(eps=0, sigma=0, n_max=30, theta=0.1 / np.arange(1, 31) ** 2)
        for est in ("cloned", "alternative"):
            rep = mc.run_risk_experiment(inst, 30, 50, seed=1, estimator=est)
            assert rep.mean == pytest.approx(0.0, abs=1e-30)

    def test_variance_of_single_component(self):
        inst = unit_instance(n_max=1, eps=1.0)
        rep = mc.run_risk_experiment(inst, 1, 10**6, seed=5)
        assert abs(rep.mean - 2.0) <= 4 * rep.std_error

    def test_bound_dominance_on_grid(self):
        for eps, sigma, c in [(0.1, 0.1, 0.3), (0.05, 0.01, 0.5), (0.02, 0.05, 0.1)]:
            j = np.arange(1, 501)
            inst = make_instance(eps=eps, sigma=sigma, n_max=500, theta=c * j**-2.0, theta_ref=0.05 * j**-2.0)
            rep = mc.run_risk_experiment(inst, "k_star", 10**4, seed=2)
            k = int(rep.metadata["k"])
            assert rep.mean <= risk_bound(inst, k, c_aux=1.0).total

    def test_rules(self, sobolev):
        assert mc.resolve_k(sobolev, 4) == 4
        assert mc.resolve_k(sobolev, "7") == 7
        with pytest.raises(ValueError):
            mc.resolve_k(sobolev, "k_best")
        with pytest.raises(ValueError):
            mc.run_risk_experiment(sobolev, 1, 1)

    def test_rejects_out_of_class(self):
        with pytest.raises(ValueError, match="outside"):
            mc.run_risk_experiment(make_instance(theta=[0, 2.0]), 1, 10)

    def test_reproducible_across_workers(self):
        inst = make_instance(eps=0.05, sigma=0.05, n_max=300, theta=[0.3, 0.1])
        a = mc.run_risk_experiment(inst, "k_star", 30_000, seed=7, workers=1)
        b = mc.run_risk_experiment(inst, "k_star", 30_000, seed=7, workers=8)
        assert a == b


class TestPowerExperiment:
    def test_sd_null_and_large_separation(self):
        inst = make_instance(eps=1e-4, sigma=1e-4, n_max=2000)
        res = mc.run_power_experiment(inst, "sd", 0.05, 40, 5000, seed=1)
        assert res.type1 <= 0.05
        assert res.type2 < 0.01

    def test_gof_large_separation(self):
        res = mc.run_power_experiment(gof_instance(), "gof", 0.05, 40, 5000, seed=2)
        assert res.type1 <= 0.05
        assert res.type2 < 0.01

    def test_noiseless_null(self):
        inst = make_instance(eps=0, sigma=0, n_max=50)
        res = mc.run_power_experiment(inst, "sd", 0.05, 1.0, 100, seed=0)
        assert res.type1 == 0.0

    def test_alternative_in_class(self):
        inst = make_instance(eps=1e-4, n_max=500)
        theta, j = mc.separated_alternative(inst, 50, 0.3)
        assert np.linalg.norm(theta) == pytest.approx(0.3)
        assert j == 3
        with pytest.raises(ValueError):
            mc.separated_alternative(inst, 50, 5.0)

    def test_calibration_reports_multiple(self):
        inst = make_instance(eps=1e-4, sigma=1e-4, n_max=2000)
        cal = mc.calibrate_separation(inst, "sd", 0.05, 2000, seed=3)
        assert cal.separation_multiple is not None
        assert cal.results[-1].type2 <= 0.05
        assert all(r.type2 > 0.05 for r in cal.results[:-1])


class TestMomentIdentities:
    def test_noiseless(self):
        inst = unit_instance(n_max=1)
        checks = {c.name: c for c in mc.verify_moment_identities(inst, 1, 100, seed=0)}
        for name in ("second_central", "fourth_central", "fourth_central_exact"):
            assert checks[name].estimate == 0.0
        assert checks["mean_v"].estimate == 1.0

    def test_targets_at_half(self):
        inst = unit_instance(n_max=1, sigma=0.5)
        checks = {c.name: c for c in mc.verify_moment_identities(inst, 1, 2000, seed=0)}
        assert checks["second_central"].target == 2.5
        assert checks["fourth_central"].target == 46.0
        assert checks["fourth_central_exact"].target == 45.75

    def test_fourth_moment_closed_form(self):
        # E[(lam^2 - V)^4] with Y'' = lam + s Z, s^2 = 2 sigma^2, from Gaussian moments of Z
        lam, sigma = 1.3, 0.4
        s = math.sqrt(2) * sigma
        # lam^2 - V = -(2 lam s Z + s^2 (Z^2 - 1))
        moments = {0: 1, 1: 0, 2: 1, 3: 0, 4: 3, 5: 0, 6: 15, 7: 0, 8: 105}
        a, b = 2 * lam * s, s * s
        poly = np.polynomial.Polynomial([-b, a, b]) ** 4
        expected = sum(c * moments[i] for i, c in enumerate(poly.coef))
        assert mc.fourth_moment_exact(lam, sigma) == pytest.approx(expected, rel=1e-12)
        assert mc.fourth_moment_stated(lam, sigma) - expected == pytest.approx(4 * lam**4 * sigma**4, rel=1e-9)

    def test_component_identities(self):
        inst = make_instance(eps=0.2, sigma=0.3, n_max=3, theta=[0.5, 0.2], theta_ref=[0.1, 0.3])
        for c in mc.verify_component_identities(inst, 2, 2 * 10**5, seed=4):
            assert c.holds(), c


class TestSlope:
    def test_exact_power_law(self):
        eps = np.geomspace(1e-3, 0.1, 6)
        fit = mc.fit_rate_slope(list(zip(eps, 3 * eps**1.778)))
        assert fit.slope == pytest.approx(1.778, rel=1e-10)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_constant(self):
        fit = mc.fit_rate_slope([(0.1, 2.0), (0.01, 2.0), (0.001, 2.0)])
        assert fit.slope == pytest.approx(0.0, abs=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            mc.fit_rate_slope([(0.1, 1.0), (0.2, 2.0)])
        with pytest.raises(ValueError):
            mc.fit_rate_slope([(0.1, 1.0), (0.2, 0.0), (0.3, 1.0)])

    def test_uses_worst_case_truth(self):
        base = make_instance(eps=0.1, sigma=1e-9, n_max=500)
        res = mc.run_slope_experiment(base, [0.1, 0.05, 0.025], 200, seed=1)
        assert len(res.points) == 3
        th = worst_case_theta(base.replace(eps=0.05))
        assert res.reports[1].metadata["functional"] == repr(float(np.sum(th**2)))


class TestStandardErrorHonesty:
    def test_coverage(self):
        inst = make_instance(eps=0.3, sigma=0.2, n_max=2, theta=[0.4], theta_ref=[0.4])
        hits = 0
        for r in range(100):
            c = {x.name: x for x in mc.verify_component_identities(inst, 1, 2000, seed=1000 + r)}["mean_u"]
            hits += abs(c.estimate - c.target) <= 4 * c.std_error
        assert hits >= 99
