import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadfunc.estimator import (COMPENSATED_SUM_THRESHOLD, RiskBoundBreakdown, alternative_batch,
                                component_arrays, components, estimate, estimate_alternative,
                                estimate_batch, risk_bound, variance_of_u)
from quadfunc.sequences import (ObservationSet, draw_noise, observations_from_noise, quad_functional,
                                sample_observations)
from tests.conftest import make_instance, unit_instance


def _obs(x, y, yp, ym):
    return ObservationSet(np.asarray(x, float), np.asarray(y, float), np.asarray(yp, float),
                          np.asarray(ym, float), 0)


def _batch(inst, reps, k, seed):
    rng = np.random.default_rng(seed)
    return observations_from_noise(inst, *draw_noise(rng, reps, k), k)


def _within(values, target, z=4.0):
    n = values.shape[0]
    se = values.std(ddof=1) / math.sqrt(n)
    return abs(values.mean() - target) <= z * se


class TestComponents:
    def test_noiseless(self):
        inst = unit_instance(n_max=3, theta=[0.5, -0.2, 0.0], theta_ref=[0.1, 0.1, 0.1])
        obs = sample_observations(inst, 4)
        for j, diff in enumerate([0.4, -0.3, -0.1], start=1):
            c = components(inst, obs, j)
            assert c.u == pytest.approx(diff**2, abs=1e-15)
            assert c.v == 1.0
            assert c.omega_event

    def test_event_definition(self):
        inst = unit_instance(n_max=3, sigma=0.5)
        ym = np.array([0.9, math.sqrt(3 * 0.25), 0.8])
        obs = _obs(np.zeros(3), np.ones(3), np.ones(3), ym)
        events = [components(inst, obs, j).omega_event for j in (1, 2, 3)]
        assert events == [bool(y * y >= 3 * 0.25) for y in ym]

    def test_sigma_zero_event_true(self):
        inst = unit_instance(n_max=1)
        obs = _obs([0.1], [0.3], [0.3], [-0.3])
        assert components(inst, obs, 1).omega_event

    def test_index_range(self, sobolev):
        obs = sample_observations(sobolev, 0)
        with pytest.raises(ValueError):
            components(sobolev, obs, 0)
        with pytest.raises(ValueError):
            components(sobolev, obs, sobolev.n_max + 1)

    def test_u_unbiased(self):
        inst = make_instance(eps=0.3, sigma=0.4, n_max=3, theta=[0.4, 0.1, -0.2],
                             theta_ref=[0.2, -0.1, 0.05])
        x, _, yp, ym = _batch(inst, 10**5, 3, 1)
        u, v, _ = component_arrays(inst, x, yp, ym, 3)
        for j in range(3):
            assert _within(u[:, j], inst.lam[j] ** 2 * (inst.theta[j] - inst.theta_ref[j]) ** 2)
            assert _within(v[:, j], inst.lam[j] ** 2)

    def test_u_variance_unit_case(self):
        inst = unit_instance(n_max=1, eps=1.0)
        x, _, yp, ym = _batch(inst, 2 * 10**5, 1, 2)
        u, _, _ = component_arrays(inst, x, yp, ym, 1)
        dev2 = (u[:, 0] - u[:, 0].mean()) ** 2
        assert variance_of_u(inst, 1) == 2.0
        assert _within(dev2, 2.0)

    def test_u_independent_of_inverse_v(self):
        inst = make_instance(eps=0.3, sigma=0.5, n_max=1, theta=[0.4], theta_ref=[0.3])
        n = 10**5
        x, _, yp, ym = _batch(inst, n, 1, 3)
        u, v, ev = component_arrays(inst, x, yp, ym, 1)
        w = np.zeros(n)
        np.divide(1.0, v[:, 0], out=w, where=ev[:, 0])
        for other in (ev[:, 0].astype(float), w):
            assert abs(np.corrcoef(u[:, 0], other)[0, 1]) < 4 / math.sqrt(n)


class TestEstimate:
    def test_noiseless_full_horizon(self):
        inst = make_instance(eps=0, sigma=0, n_max=50, theta=0.1 / np.arange(1, 51) ** 2,
                             theta_ref=0.01 / np.arange(1, 51) ** 2)
        obs = sample_observations(inst, 9)
        expected = quad_functional(inst.theta, inst.theta_ref, inst.omega_values, 50)
        assert estimate(inst, obs, 50) == pytest.approx(expected, rel=1e-13)

    def test_k_one_matches_component(self, sobolev):
        inst = sobolev.replace(theta=np.r_[0.5, np.zeros(sobolev.n_max - 1)])
        obs = sample_observations(inst, 5)
        c = components(inst, obs, 1)
        expected = c.u / c.v if c.omega_event else 0.0
        assert estimate(inst, obs, 1) == expected

    def test_k_bounds(self, sobolev):
        obs = sample_observations(sobolev, 0)
        for k in (0, sobolev.n_max + 1):
            with pytest.raises(ValueError):
                estimate(sobolev, obs, k)

    def test_excluded_terms_contribute_zero(self):
        inst = unit_instance(n_max=2, eps=0.1, sigma=0.5)
        obs = _obs([0.3, 0.7], [1, 1], [1, 1], [1e-300, 2.0])
        u, v, _ = component_arrays(inst, obs.x, obs.y_plus, obs.y_minus, 2)
        with np.errstate(divide="raise", invalid="raise", over="raise"):
            value = estimate(inst, obs, 2)
        assert value == u[1] / v[1]

    def test_sigma_zero_skips_exact_zero(self):
        inst = unit_instance(n_max=2, eps=0.1)
        obs = _obs([0.3, 0.7], [0, 1], [0, 1], [0.0, 1.0])
        with np.errstate(divide="raise", invalid="raise", over="raise"):
            value = estimate(inst, obs, 2)
        assert value == pytest.approx(0.7**2 - 0.01)

    def test_null_mean_zero(self):
        th0 = 0.05 / np.arange(1, 21) ** 2
        inst = make_instance(eps=0.1, sigma=0.05, n_max=20, theta=th0, theta_ref=th0)
        x, _, yp, ym = _batch(inst, 10**5, 10, 6)
        assert _within(estimate_batch(inst, x, yp, ym, 10), 0.0)

    def test_batch_matches_scalar(self, sobolev):
        inst = sobolev.replace(theta=0.2 / np.arange(1, sobolev.n_max + 1) ** 2)
        obs = sample_observations(inst, 11)
        batch = estimate_batch(inst, obs.x[None, :], obs.y_plus[None, :], obs.y_minus[None, :], 40)
        assert batch[0] == pytest.approx(estimate(inst, obs, 40), rel=1e-12)

    def test_compensated_summation_above_threshold(self):
        k = COMPENSATED_SUM_THRESHOLD + 200
        inst = unit_instance(n_max=k, theta=np.full(k, 0.01))
        obs = sample_observations(inst, 0)
        assert estimate(inst, obs, k) == math.fsum([0.01**2] * k)


class TestAlternativeEstimator:
    def test_noiseless(self):
        th = np.array([0.3, -0.2, 0.1])
        th0 = np.array([0.1, 0.1, -0.05])
        inst = make_instance(eps=0, sigma=0, n_max=3, theta=th, theta_ref=th0)
        obs = sample_observations(inst, 1)
        assert estimate_alternative(inst, obs, 3) == pytest.approx(float(((th - th0) ** 2).sum()), rel=1e-12)

    def test_zero_reference_reduces_to_ratio(self):
        inst = make_instance(eps=0.2, sigma=0.1, n_max=5, theta=[0.3, 0.1])
        obs = sample_observations(inst, 8)
        use = obs.y**2 >= 2 * 0.01
        expected = sum((obs.x[j] ** 2 - 0.04) / (obs.y[j] ** 2 - 0.01) for j in range(5) if use[j])
        assert estimate_alternative(inst, obs, 5) == pytest.approx(expected, rel=1e-12)

    def test_null_mean_small_sigma(self):
        th0 = np.array([0.3, 0.2, 0.1])
        inst = make_instance(eps=0.1, sigma=1e-3, n_max=3, theta=th0, theta_ref=th0)
        x, y, _, _ = _batch(inst, 10**5, 3, 12)
        assert _within(alternative_batch(inst, x, y, 3), 0.0)


class TestRiskBound:
    def test_null_difference_terms_vanish(self):
        th0 = 0.1 / np.arange(1, 51) ** 2
        inst = make_instance(eps=0.1, sigma=0.1, n_max=50, theta=th0, theta_ref=th0)
        rb = risk_bound(inst, 5)
        assert (rb.t_eps2_diff, rb.t_sigma2_ref_diff, rb.t_sigma4_gamma, rb.t_sigma2_gamma, rb.t_bias) == (0, 0, 0, 0, 0)
        assert rb.t_eps4 > 0 and rb.t_sigma4_ref > 0

    @pytest.mark.parametrize("d", [1.0, 2.0])
    def test_sigma_zero_single_term(self, d):
        eps, th1 = 0.1, 0.3
        inst = unit_instance(n_max=3, eps=eps, theta=[th1, 0.2, 0.1]).replace(d=d)
        rb = risk_bound(inst, 1)
        bias = (0.2**2 + 0.1**2) ** 2
        assert rb.total == pytest.approx(672 * d**4 * eps**4 + 672 * d**2 * eps**2 * th1**2 + bias, rel=1e-13)

    @settings(max_examples=40, deadline=None)
    @given(
        eps=st.floats(0, 1), sigma=st.floats(0, 1), k=st.integers(1, 30),
        c=st.floats(-0.3, 0.3), c0=st.floats(-0.3, 0.3), c_aux=st.floats(0.01, 10),
    )
    def test_terms_nonnegative_and_total(self, eps, sigma, k, c, c0, c_aux):
        j = np.arange(1, 31)
        inst = make_instance(eps=eps, sigma=sigma, n_max=30, theta=c / j**2, theta_ref=c0 / j**2)
        rb = risk_bound(inst, k, c_aux)
        assert all(t >= 0 for t in rb.terms)
        assert rb.total == math.fsum(rb.terms)
        assert len(rb.terms) == 7

    def test_k_range_and_c_aux(self, sobolev):
        with pytest.raises(ValueError):
            risk_bound(sobolev, sobolev.n_max + 1)
        with pytest.raises(ValueError):
            risk_bound(sobolev, 1, c_aux=0)

    def test_csv(self, sobolev):
        text = risk_bound(sobolev, 3).to_csv().splitlines()
        assert text[0] == ",".join(RiskBoundBreakdown.csv_header())
        assert text[0].startswith("k,t_eps4") and text[0].endswith(",total")
        assert len(text[1].split(",")) == 9
