from typing import List

import numpy as np
from pydantic import field_validator, model_validator

from app.schemas.common import FloatArray, FrozenModel, IndexArray
from app.schemas.detection import DetectionResult


class VectorSample(FrozenModel):
    """N observations of dimension k"""
    rows: FloatArray

    @field_validator("rows")
    @classmethod
    def _check_rows(cls, value: np.ndarray) -> np.ndarray:
        if value.ndim == 1:
            value = value.reshape(-1, 1)
            value.setflags(write=False)
        if value.ndim != 2 or value.shape[0] < 2 or value.shape[1] < 1:
            raise ValueError("vector sample must be an N x k array with N >= 2")
        if not np.all(np.isfinite(value)):
            raise ValueError("vector sample entries must be finite")
        return value

    @property
    def n(self) -> int:
        return int(self.rows.shape[0])

    @property
    def k(self) -> int:
        return int(self.rows.shape[1])


class RegressionData(FrozenModel):
    """Responses Y (N) and predictors X (N x k)"""
    X: FloatArray
    Y: FloatArray

    @model_validator(mode="after")
    def _check_shapes(self) -> "RegressionData":
        if self.X.ndim != 2 or self.Y.ndim != 1 or self.X.shape[0] != self.Y.shape[0]:
            raise ValueError("X must be N x k and Y must have N entries")
        if not self.X.shape[0] > self.X.shape[1]:
            raise ValueError("regression needs more observations than predictors")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.Y))):
            raise ValueError("regression data must be finite")
        return self

    @property
    def n(self) -> int:
        return int(self.X.shape[0])

    @property
    def k(self) -> int:
        return int(self.X.shape[1])


class CoefficientTrace(FrozenModel):
    """Sliding-window least-squares estimates, one row per window start"""
    window: int
    estimates: FloatArray
    flagged: IndexArray

    @property
    def length(self) -> int:
        return int(self.estimates.shape[0])

    def coefficient(self, j: int) -> np.ndarray:
        return self.estimates[:, j]


class CoefficientDetection(FrozenModel):
    """Detection on one coefficient trace"""
    coefficient: int
    result: DetectionResult
    eps_trace: float
    eps_observation: float
    abnormal_observations: IndexArray

    def record(self) -> dict:
        rec = self.result.record(include_profile=False)
        rec.update(
            coefficient=self.coefficient,
            eps_trace=self.eps_trace,
            eps_observation=self.eps_observation,
        )
        return rec


class RegressionDetection(FrozenModel):
    window: int
    coefficients: List[CoefficientDetection]

    def record(self) -> dict:
        return {"window": self.window, "coefficients": [c.record() for c in self.coefficients]}
