import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from quadfunc.config import ConfigError, ThetaSpec, load_config, parse_config, parse_theta_spec
from quadfunc.lower_bounds import worst_case_theta
from quadfunc.sequences import Regime


class TestDefaults:
    def test_empty_text(self):
        cfg = parse_config("")
        assert (cfg.eps, cfg.sigma, cfg.L, cfg.d, cfg.n_max) == (0.01, 0.01, 1.0, 1.0, 10000)
        assert (cfg.seed, cfg.reps, cfg.delta, cfg.workers, cfg.out, cfg.format) == (0, 1000, 0.05, 1, "-", "csv")
        assert cfg.alpha.regime is Regime.POLYNOMIAL and cfg.alpha.param == 1.0
        assert cfg.omega.regime is Regime.CONSTANT
        inst = cfg.instance()
        assert np.all(inst.theta == 0) and np.all(inst.theta_ref == 0)

    def test_full_file(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text(
            "[instance]\n"
            "alpha = exponential   ; mildly ill-posed\n"
            "a = 0.5\n"
            "gamma = explicit\n"
            "gamma_values = 1, 2, 4\n"
            "eps = 0.1\n"
            "N_max = 3\n"
            "theta = list:0.5, 0.1\n"
            "lambda_signs = 1 -1\n"
            "[run]\n"
            "seed = 18446744073709551615\n"
            "format = json\n"
        )
        cfg = load_config(str(path))
        inst = cfg.instance()
        np.testing.assert_array_equal(inst.gamma_values, [1, 2, 4])
        np.testing.assert_array_equal(inst.theta, [0.5, 0.1, 0.0])
        np.testing.assert_allclose(inst.lam, [1, -math.exp(-0.5), math.exp(-1.0)], rtol=1e-15)
        assert cfg.seed == 2**64 - 1 and cfg.format == "json"


class TestErrors:
    def test_d_below_one(self):
        with pytest.raises(ConfigError) as err:
            parse_config("[instance]\nd = 0.5\n")
        assert "d must be ≥ 1" in err.value.errors

    def test_duplicate_key_has_line_number(self):
        with pytest.raises(ConfigError) as err:
            parse_config("[instance]\neps = 0.1\nsigma = 0.1\neps = 0.2\n")
        assert len(err.value.errors) == 1
        msg = err.value.errors[0]
        assert "line 4" in msg and "eps" in msg

    def test_key_outside_section(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config("eps = 0.1\n")

    def test_unparseable_line(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config("[instance]\nthis line has no equals sign\n")

    def test_all_errors_collected(self):
        text = "[instance]\neps = 2\nsigma = -1\nL = 0\nd = 0.5\n[run]\nreps = 1\nworkers = 0\nformat = xml\n"
        with pytest.raises(ConfigError) as err:
            parse_config(text)
        assert len(err.value.errors) == 7

    def test_unknown_key_and_section(self):
        with pytest.raises(ConfigError) as err:
            parse_config("[instance]\nepsilon = 0.1\n[extra]\nx = 1\n")
        joined = "\n".join(err.value.errors)
        assert "epsilon" in joined and "[extra]" in joined

    def test_non_numeric(self):
        with pytest.raises(ConfigError, match="eps: expected a number"):
            parse_config("[instance]\neps = small\n")

    def test_theta_outside_ellipsoid(self):
        with pytest.raises(ConfigError, match="theta outside the ellipsoid"):
            parse_config("[instance]\ntheta = spike:2:0.6\n")

    def test_omega_gamma_ratio_must_decrease(self):
        with pytest.raises(ConfigError, match="non-increasing"):
            parse_config("[instance]\nomega = polynomial\nomega_rate = 2\np = 1\nN_max = 5\n")

    def test_worst_case_not_for_reference(self):
        with pytest.raises(ConfigError, match="only available for theta"):
            parse_config("[instance]\ntheta_ref = worst-case\n")

    def test_bad_signs(self):
        with pytest.raises(ConfigError, match="lambda_signs"):
            parse_config("[instance]\nlambda_signs = 1 0.5\n")

    def test_seed_range(self):
        with pytest.raises(ConfigError, match="seed"):
            parse_config("[run]\nseed = 18446744073709551616\n")


class TestOverrides:
    def test_precedence(self):
        cfg = parse_config("[instance]\neps = 0.1\n", {"eps": 0.2, "sigma": None, "n_max": 50})
        assert cfg.eps == 0.2 and cfg.sigma == 0.01 and cfg.n_max == 50

    def test_unknown_override(self):
        with pytest.raises(ConfigError, match="unknown override"):
            parse_config("", {"epsilon": 1})


class TestThetaSpec:
    def test_grammar(self):
        assert parse_theta_spec("zero") == ThetaSpec("zero")
        assert parse_theta_spec("spike:3:-0.25") == ThetaSpec("spike", (3.0, -0.25))
        assert parse_theta_spec("POLY:0.1:1.5e0") == ThetaSpec("poly", (0.1, 1.5))
        assert parse_theta_spec("list:1 2,3") == ThetaSpec("list", (1.0, 2.0, 3.0))
        with pytest.raises(ValueError):
            parse_theta_spec("spike:0:1")
        with pytest.raises(ValueError):
            parse_theta_spec("gauss")

    def test_materialize(self):
        np.testing.assert_array_equal(parse_theta_spec("spike:2:0.5").materialize(3), [0, 0.5, 0])
        np.testing.assert_allclose(parse_theta_spec("poly:1:2").materialize(3), [1, 0.25, 1 / 9], rtol=1e-15)
        with pytest.raises(ValueError):
            parse_theta_spec("spike:5:1").materialize(3)
        with pytest.raises(ValueError):
            parse_theta_spec("list:1,2").materialize(1)

    @given(c=st.floats(1e-3, 10), s=st.floats(0.6, 4), n=st.integers(1, 200))
    def test_poly_tail_bound_dominates(self, c, s, n):
        spec = ThetaSpec("poly", (c, s))
        j = np.arange(n + 1, n + 200001, dtype=float)
        partial = float(np.sum((c * j**-s) ** 2))
        assert partial <= spec.tail_bound(n) * (1 + 1e-12)

    def test_divergent_tail(self):
        assert ThetaSpec("poly", (1.0, 0.5)).tail_bound(10) == math.inf
        assert ThetaSpec("list", (1.0,)).tail_bound(10) == 0.0

    def test_worst_case_resolved(self):
        cfg = parse_config("[instance]\ntheta = worst-case\neps = 0.05\nN_max = 200\n")
        inst = cfg.instance()
        np.testing.assert_array_equal(inst.theta, worst_case_theta(inst))

    def test_neglected_tail(self):
        cfg = parse_config("[instance]\ntheta = poly:0.1:2\nN_max = 100\n")
        assert cfg.neglected_tail() == pytest.approx(0.01 * 100.0**-3 / 3)
        assert parse_config("").neglected_tail() == 0.0
