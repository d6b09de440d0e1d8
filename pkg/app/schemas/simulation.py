import enum
from typing import Annotated, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import Field, field_validator, model_validator

from app.schemas.common import FloatArray, FrozenModel
from app.schemas.densities import Density1D, MixtureComponent, MixtureSpec


class DesignKind(str, enum.Enum):
    LINEAR_TREND = "linear_trend"
    USER_MATRIX = "user_matrix"


class SwitchingMode(str, enum.Enum):
    PER_OBSERVATION = "per_observation"
    PER_COEFFICIENT = "per_coefficient"
    WHOLE_SAMPLE = "whole_sample"


class MeanMixture(FrozenModel):
    kind: Literal["mean_mixture"] = "mean_mixture"
    mixture: MixtureSpec

    @property
    def eps(self) -> float:
        return 1.0 - self.mixture.base_weight

    def null(self) -> "MeanMixture":
        return MeanMixture(mixture=self.mixture.with_components(()))


class VarianceMixture(FrozenModel):
    """(1 - eps) N(mu, sigma^2) + eps N(mu, Lambda^2)"""
    kind: Literal["variance_mixture"] = "variance_mixture"
    mu: float = 0.0
    sigma: float = Field(default=1.0, gt=0)
    lam: float = Field(default=3.0, gt=0)
    eps: float = Field(default=0.0, ge=0, lt=0.5)

    def null(self) -> "VarianceMixture":
        return self.model_copy(update={"eps": 0.0})


class MultiClass(FrozenModel):
    kind: Literal["multi_class"] = "multi_class"
    mixture: MixtureSpec

    @field_validator("mixture")
    @classmethod
    def _check_classes(cls, value: MixtureSpec) -> MixtureSpec:
        if value.k < 2:
            raise ValueError("multi-class scenario needs at least two abnormal components")
        return value

    @property
    def eps(self) -> float:
        return 1.0 - self.mixture.base_weight

    def null(self) -> MeanMixture:
        return MeanMixture(mixture=self.mixture.with_components(()))


class BivariateMixture(FrozenModel):
    kind: Literal["bivariate_mixture"] = "bivariate_mixture"
    mean0: Tuple[float, ...] = (0.0, 0.0)
    mean1: Tuple[float, ...] = (0.0, 0.25)
    cov: Tuple[Tuple[float, ...], ...] = ((0.745, -0.07), (-0.07, 0.01))
    eps: float = Field(default=0.0, ge=0, lt=0.5)

    @model_validator(mode="after")
    def _check_cov(self) -> "BivariateMixture":
        cov = np.asarray(self.cov, dtype=float)
        k = len(self.mean0)
        if len(self.mean1) != k or cov.shape != (k, k):
            raise ValueError("means and covariance must share one dimension")
        if not np.allclose(cov, cov.T) or np.any(np.linalg.eigvalsh(cov) <= 0):
            raise ValueError("covariance must be symmetric positive definite")
        return self

    def null(self) -> "BivariateMixture":
        return self.model_copy(update={"eps": 0.0})


class SwitchingRegression(FrozenModel):
    """y_i = x_i' beta_(regime i) + sigma u_i"""
    kind: Literal["switching_regression"] = "switching_regression"
    beta0: Tuple[float, ...] = (1.0, 1.0)
    beta1: Tuple[float, ...] = (1.0, 2.0)
    eps: float = Field(default=0.0, ge=0, lt=0.5)
    noise_sigma: float = Field(default=1.0, gt=0)
    design: DesignKind = DesignKind.LINEAR_TREND
    design_matrix: Optional[FloatArray] = None
    switching: SwitchingMode = SwitchingMode.PER_OBSERVATION

    @model_validator(mode="after")
    def _check_design(self) -> "SwitchingRegression":
        if len(self.beta0) != len(self.beta1):
            raise ValueError("beta0 and beta1 must have the same length")
        if self.design == DesignKind.LINEAR_TREND and len(self.beta0) != 2:
            raise ValueError("the linear-trend design has two coefficients")
        if self.design == DesignKind.USER_MATRIX:
            if self.design_matrix is None or self.design_matrix.ndim != 2:
                raise ValueError("user-matrix design needs a two-dimensional matrix")
            if self.design_matrix.shape[1] != len(self.beta0):
                raise ValueError("design matrix columns must match the coefficient count")
        return self

    @property
    def k(self) -> int:
        return len(self.beta0)

    def null(self) -> "SwitchingRegression":
        return self.model_copy(update={"eps": 0.0})


class AR1Mixture(FrozenModel):
    """Mean mixture whose base noise follows a stationary AR(1) process"""
    kind: Literal["ar1_mixture"] = "ar1_mixture"
    rho: float = Field(gt=-1.0, lt=1.0)
    mixture: MixtureSpec

    @field_validator("mixture")
    @classmethod
    def _check_base(cls, value: MixtureSpec) -> MixtureSpec:
        if value.base.kind != "gaussian":
            raise ValueError("AR(1) noise needs a gaussian base density")
        return value

    @property
    def eps(self) -> float:
        return 1.0 - self.mixture.base_weight

    def null(self) -> "AR1Mixture":
        return self.model_copy(update={"mixture": self.mixture.with_components(())})


Scenario = Annotated[
    Union[MeanMixture, VarianceMixture, MultiClass, BivariateMixture, SwitchingRegression, AR1Mixture],
    Field(discriminator="kind"),
]


class GeneratorConfig(FrozenModel):
    """Scenario, sample size and seed of one synthetic data set"""
    scenario: Scenario
    n: int = Field(ge=2)
    seed: int = 0

    def null_model(self) -> "GeneratorConfig":
        return self.model_copy(update={"scenario": self.scenario.null()})

    def with_n(self, n: int) -> "GeneratorConfig":
        return self.model_copy(update={"n": n})

    def with_seed(self, seed: int) -> "GeneratorConfig":
        return self.model_copy(update={"seed": seed})

    @property
    def eps(self) -> float:
        return float(self.scenario.eps)


def mean_mixture(eps: float, h: float, n: int, seed: int = 0,
                 base: Optional[Density1D] = None) -> GeneratorConfig:
    return GeneratorConfig(scenario=MeanMixture(mixture=MixtureSpec.binary(eps, h, base)), n=n, seed=seed)


def three_class(n: int, seed: int = 0) -> GeneratorConfig:
    """0.55 N(1,1) + 0.3 N(3,1) + 0.15 N(7,1)"""
    mixture = MixtureSpec(
        base=Density1D.gaussian(mean=1.0),
        components=(MixtureComponent(weight=0.3, shift=2.0), MixtureComponent(weight=0.15, shift=6.0)),
    )
    return GeneratorConfig(scenario=MultiClass(mixture=mixture), n=n, seed=seed)
