import numpy as np
import pytest
from scipy import stats

from app.schemas.densities import MixtureSpec
from app.schemas.detection import Sample
from app.schemas.multivariate import RegressionData, VectorSample
from app.schemas.simulation import (
    AR1Mixture,
    BivariateMixture,
    DesignKind,
    GeneratorConfig,
    SwitchingMode,
    SwitchingRegression,
    VarianceMixture,
    mean_mixture,
    three_class,
)
from app.services.density_service import DensityService
from app.services.simulation_service import SimulationService
from app.utils.exceptions import ConfigurationError


class TestMeanMixture:
    def test_same_seed_same_sample(self):
        cfg = mean_mixture(0.1, 2.0, 500, seed=42)
        a = SimulationService.generate(cfg)
        b = SimulationService.generate(cfg)
        assert isinstance(a, Sample)
        assert np.array_equal(a.values, b.values)

    def test_different_seed_different_sample(self):
        a = SimulationService.generate(mean_mixture(0.1, 2.0, 500, seed=1))
        b = SimulationService.generate(mean_mixture(0.1, 2.0, 500, seed=2))
        assert not np.array_equal(a.values, b.values)

    def test_homogeneous_mean(self):
        s = SimulationService.generate(mean_mixture(0.0, 2.0, 1_000_000, seed=3))
        assert abs(s.values.mean()) < 0.004

    def test_contaminated_mean(self):
        s = SimulationService.generate(mean_mixture(0.1, 2.0, 1_000_000, seed=4))
        assert s.values.mean() == pytest.approx(0.2, abs=0.01)

    def test_matches_mixture_cdf(self):
        spec = MixtureSpec.binary(0.1, 2.0)
        s = SimulationService.generate(mean_mixture(0.1, 2.0, 100_000, seed=5))
        result = stats.kstest(s.values, lambda x: DensityService.mixture_cdf(spec, x))
        assert result.pvalue > 0.01

    def test_three_class_weights(self):
        s = SimulationService.generate(three_class(200_000, seed=6))
        # 0.55 * 1 + 0.3 * 3 + 0.15 * 7
        assert s.values.mean() == pytest.approx(2.5, abs=0.02)

    def test_null_model(self):
        cfg = mean_mixture(0.1, 2.0, 100, seed=7).null_model()
        assert cfg.eps == 0.0


class TestTrialStreams:
    def test_streams_reproducible(self):
        a = SimulationService.trial_rng(9, 3).random(5)
        b = SimulationService.trial_rng(9, 3).random(5)
        assert np.array_equal(a, b)

    def test_streams_independent(self):
        a = SimulationService.trial_rng(9, 3).random(5)
        b = SimulationService.trial_rng(9, 4).random(5)
        assert not np.array_equal(a, b)


class TestOtherScenarios:
    def test_variance_mixture(self):
        cfg = GeneratorConfig(scenario=VarianceMixture(mu=1.0, sigma=1.0, lam=3.0, eps=0.2), n=500_000, seed=1)
        s = SimulationService.generate(cfg)
        assert s.values.mean() == pytest.approx(1.0, abs=0.02)
        # 0.8 * 1 + 0.2 * 9
        assert s.values.var() == pytest.approx(2.6, rel=0.02)

    def test_bivariate_covariance(self):
        scenario = BivariateMixture()
        vs = SimulationService.generate(GeneratorConfig(scenario=scenario, n=1_000_000, seed=2))
        assert isinstance(vs, VectorSample)
        cov = np.cov(vs.rows, rowvar=False)
        assert np.allclose(cov, np.asarray(scenario.cov), rtol=0.05)

    def test_bivariate_rejects_bad_covariance(self):
        with pytest.raises(ValueError):
            BivariateMixture(cov=((1.0, 2.0), (2.0, 1.0)))

    def test_ar1_autocorrelation(self):
        cfg = GeneratorConfig(scenario=AR1Mixture(rho=0.5, mixture=MixtureSpec.binary(0.0, 2.0)), n=1_000_000, seed=3)
        x = SimulationService.generate(cfg).values
        lag1 = np.corrcoef(x[:-1], x[1:])[0, 1]
        assert lag1 == pytest.approx(0.5, abs=0.01)
        assert x.var() == pytest.approx(1.0, abs=0.01)

    def test_regression_per_observation(self):
        scenario = SwitchingRegression(eps=0.2, noise_sigma=1e-9)
        rd = SimulationService.generate(GeneratorConfig(scenario=scenario, n=2000, seed=4))
        assert isinstance(rd, RegressionData)
        assert np.array_equal(rd.X[:, 1], np.arange(1, 2001, dtype=float))
        regime0 = np.isclose(rd.Y, rd.X @ np.array(scenario.beta0), atol=1e-6)
        regime1 = np.isclose(rd.Y, rd.X @ np.array(scenario.beta1), atol=1e-6)
        assert np.all(regime0 | regime1)
        assert regime1.mean() == pytest.approx(0.2, abs=0.03)

    def test_regression_whole_sample(self):
        scenario = SwitchingRegression(eps=0.3, noise_sigma=1e-9, switching=SwitchingMode.WHOLE_SAMPLE)
        rd = SimulationService.generate(GeneratorConfig(scenario=scenario, n=200, seed=5))
        regime1 = np.isclose(rd.Y, rd.X @ np.array(scenario.beta1), atol=1e-6)
        assert regime1.all() or not regime1.any()

    def test_user_matrix_too_short(self):
        scenario = SwitchingRegression(design=DesignKind.USER_MATRIX, design_matrix=np.ones((10, 2)))
        with pytest.raises(ConfigurationError):
            SimulationService.generate(GeneratorConfig(scenario=scenario, n=20, seed=1))

    def test_trend_design_needs_two_coefficients(self):
        with pytest.raises(ValueError):
            SwitchingRegression(beta0=(1.0,), beta1=(2.0,))
