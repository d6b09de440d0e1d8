import logging
import math
from typing import Optional, Union

import numpy as np
from scipy import signal

from app.schemas.densities import MixtureSpec
from app.schemas.detection import Sample
from app.schemas.multivariate import RegressionData, VectorSample
from app.schemas.simulation import (
    AR1Mixture,
    BivariateMixture,
    DesignKind,
    GeneratorConfig,
    MeanMixture,
    MultiClass,
    SwitchingMode,
    SwitchingRegression,
    VarianceMixture,
)
from app.utils.exceptions import ConfigurationError

logger = logging.getLogger(__name__)

Generated = Union[Sample, VectorSample, RegressionData]


class SimulationService:
    """Seeded synthetic data for every scenario"""

    @staticmethod
    def trial_rng(seed: int, index: int) -> np.random.Generator:
        """Independent stream for trial `index` under the master seed"""
        return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))

    @staticmethod
    def generate(cfg: GeneratorConfig, rng: Optional[np.random.Generator] = None) -> Generated:
        rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        scenario, n = cfg.scenario, cfg.n
        if isinstance(scenario, (MeanMixture, MultiClass)):
            return Sample(values=_mixture_draws(scenario.mixture, rng, n, scenario.mixture.base.sample(rng, n)))
        if isinstance(scenario, VarianceMixture):
            return Sample(values=_variance_draws(scenario, rng, n))
        if isinstance(scenario, BivariateMixture):
            return VectorSample(rows=_bivariate_draws(scenario, rng, n))
        if isinstance(scenario, SwitchingRegression):
            return _regression_draws(scenario, rng, n)
        if isinstance(scenario, AR1Mixture):
            return Sample(values=_ar1_draws(scenario, rng, n))
        raise ConfigurationError(f"unsupported scenario {type(scenario).__name__}")


def _labels(weights, rng: np.random.Generator, n: int) -> np.ndarray:
    """Categorical labels, 0 for the base density"""
    edges = np.cumsum(weights)[:-1]
    return np.searchsorted(edges, rng.random(n), side="right")


def _mixture_draws(mixture: MixtureSpec, rng: np.random.Generator, n: int, noise: np.ndarray) -> np.ndarray:
    weights = [mixture.base_weight] + [c.weight for c in mixture.components]
    shifts = np.array([0.0] + [c.shift for c in mixture.components])
    return noise + shifts[_labels(weights, rng, n)]


def _variance_draws(scenario: VarianceMixture, rng: np.random.Generator, n: int) -> np.ndarray:
    z = rng.standard_normal(n)
    contaminated = rng.random(n) < scenario.eps
    return scenario.mu + np.where(contaminated, scenario.lam, scenario.sigma) * z


def _bivariate_draws(scenario: BivariateMixture, rng: np.random.Generator, n: int) -> np.ndarray:
    cov = np.asarray(scenario.cov, dtype=float)
    noise = rng.multivariate_normal(np.zeros(cov.shape[0]), cov, size=n, method="cholesky")
    switched = rng.random(n) < scenario.eps
    means = np.where(switched[:, None], np.asarray(scenario.mean1), np.asarray(scenario.mean0))
    return noise + means


def _design(scenario: SwitchingRegression, n: int) -> np.ndarray:
    if scenario.design == DesignKind.LINEAR_TREND:
        return np.column_stack([np.ones(n), np.arange(1, n + 1, dtype=float)])
    if scenario.design_matrix.shape[0] < n:
        raise ConfigurationError(
            "design matrix has fewer rows than requested observations",
            details={"rows": scenario.design_matrix.shape[0], "n": n},
        )
    return np.array(scenario.design_matrix[:n], dtype=float)


def _regression_draws(scenario: SwitchingRegression, rng: np.random.Generator, n: int) -> RegressionData:
    X = _design(scenario, n)
    beta0, beta1 = np.asarray(scenario.beta0), np.asarray(scenario.beta1)
    if scenario.switching == SwitchingMode.PER_OBSERVATION:
        switched = np.repeat((rng.random(n) < scenario.eps)[:, None], scenario.k, axis=1)
    elif scenario.switching == SwitchingMode.PER_COEFFICIENT:
        switched = rng.random((n, scenario.k)) < scenario.eps
    else:
        switched = np.full((n, scenario.k), rng.random() < scenario.eps)
    coefficients = np.where(switched, beta1, beta0)
    u = scenario.noise_sigma * rng.standard_normal(n)
    return RegressionData(X=X, Y=np.einsum("ij,ij->i", X, coefficients) + u)


def _ar1_draws(scenario: AR1Mixture, rng: np.random.Generator, n: int) -> np.ndarray:
    """x_t = rho x_{t-1} + sqrt(1 - rho^2) e_t started from the stationary law"""
    base = scenario.mixture.base
    e = rng.standard_normal(n)
    e[1:] *= math.sqrt(1.0 - scenario.rho ** 2)
    x = signal.lfilter([1.0], [1.0, -scenario.rho], e)
    noise = base.mean + base.shift + math.sqrt(base.variance) * x
    return _mixture_draws(scenario.mixture, rng, n, noise)
