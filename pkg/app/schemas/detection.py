import enum
from typing import List, Optional

import numpy as np
from pydantic import Field, computed_field, field_validator, model_validator

from app.core.config import settings
from app.schemas.common import FloatArray, FrozenModel, IndexArray


class Decision(str, enum.Enum):
    ACCEPT_H0 = "AcceptH0"
    REJECT_H0 = "RejectH0"


class Sample(FrozenModel):
    """Ordered univariate observations x_1..x_N"""
    values: FloatArray

    @field_validator("values")
    @classmethod
    def _check_values(cls, value: np.ndarray) -> np.ndarray:
        if value.ndim != 1:
            raise ValueError("sample must be one-dimensional")
        if value.size < 2:
            raise ValueError("sample needs at least two observations")
        if not np.all(np.isfinite(value)):
            raise ValueError("sample values must be finite")
        return value

    @property
    def n(self) -> int:
        return int(self.values.size)

    def subset(self, idx: np.ndarray) -> "Sample":
        return Sample(values=self.values[idx])


class BandGrid(FrozenModel):
    """Discretized band half-widths b in [kappa, B]"""
    kappa: float = Field(gt=0)
    upper: float
    points: FloatArray

    @model_validator(mode="after")
    def _check_grid(self) -> "BandGrid":
        pts = self.points
        if not self.upper > self.kappa:
            raise ValueError("grid upper bound must exceed kappa")
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("grid needs at least two points")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("grid points must be strictly increasing")
        if pts[0] != self.kappa or pts[-1] != self.upper:
            raise ValueError("grid must start at kappa and end at B")
        return self

    @classmethod
    def geometric(cls, kappa: Optional[float] = None, upper: Optional[float] = None,
                  n_points: Optional[int] = None) -> "BandGrid":
        kappa = settings.grid_kappa if kappa is None else kappa
        upper = settings.grid_upper if upper is None else upper
        n_points = settings.grid_points if n_points is None else n_points
        if not 0 < kappa < upper:
            raise ValueError("grid requires 0 < kappa < B")
        pts = np.geomspace(kappa, upper, n_points)
        pts[0], pts[-1] = kappa, upper
        return cls(kappa=kappa, upper=upper, points=pts)

    @classmethod
    def linear(cls, kappa: float, upper: float, n_points: int) -> "BandGrid":
        pts = np.linspace(kappa, upper, n_points)
        pts[0], pts[-1] = kappa, upper
        return cls(kappa=kappa, upper=upper, points=pts)

    @property
    def size(self) -> int:
        return int(self.points.size)


class SplitOutcome(FrozenModel):
    """
    Ordinary / abnormal partition of the indices at one band. For vector
    samples `theta` is the norm of the mean vector and `theta_vector`
    holds the vector itself.
    """
    b: float
    theta: float
    ordinary_idx: IndexArray
    abnormal_idx: IndexArray
    theta_vector: Optional[FloatArray] = None

    @computed_field
    @property
    def n1(self) -> int:
        return int(self.ordinary_idx.size)

    @computed_field
    @property
    def n2(self) -> int:
        return int(self.abnormal_idx.size)


class DetectionResult(FrozenModel):
    """
    Profile of the decision statistic over the band grid.

    `psi` holds one value per grid point for scalar statistics and one row
    per grid point for the vector statistic; `magnitude` is |psi| or the
    Euclidean norm accordingly.
    """
    b_values: FloatArray
    psi: FloatArray
    j_stat: float
    b_star_n: float
    decision: Decision
    threshold_c: float
    split_at_bstar: SplitOutcome
    method: str = "symmetric"

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.psi) if self.psi.ndim == 1 else np.linalg.norm(self.psi, axis=1)

    @property
    def n(self) -> int:
        return self.split_at_bstar.n1 + self.split_at_bstar.n2

    @property
    def rejected(self) -> bool:
        return self.decision == Decision.REJECT_H0

    @computed_field
    @property
    def eps_nonparametric(self) -> float:
        """N2(b*_N) / N"""
        return self.split_at_bstar.n2 / self.n

    def record(self, include_profile: bool = True) -> dict:
        """Structured record for reports"""
        rec = {
            "method": self.method,
            "decision": self.decision.value,
            "j_stat": self.j_stat,
            "b_star_n": self.b_star_n,
            "threshold_c": self.threshold_c,
            "n1": self.split_at_bstar.n1,
            "n2": self.split_at_bstar.n2,
            "eps_nonparametric": self.eps_nonparametric,
        }
        if include_profile:
            rec["profile"] = [[float(b), float(m)] for b, m in zip(self.b_values, self.magnitude)]
        theta_vector = self.split_at_bstar.theta_vector
        if theta_vector is not None:
            rec["theta_vector"] = theta_vector.tolist()
            if self.split_at_bstar.n2:
                rec["h_vector_nonparametric"] = (theta_vector / self.eps_nonparametric).tolist()
        return rec


class EstimationResult(FrozenModel):
    """Nonparametric and consistent parameter estimates after a rejection"""
    b_star_n: float
    theta: float
    eps_nonpar: float
    h_nonpar: Optional[float] = None
    eps_hat: Optional[float] = None
    h_hat: Optional[float] = None
    solver_residual: Optional[float] = None
    multiple_roots: bool = False
    note: Optional[str] = None


class PhiSource(str, enum.Enum):
    CLOSED_FORM = "closed_form"
    CHI_SQUARE = "chi_square"
    NUMERIC = "numeric"


class AsymmetricBand(FrozenModel):
    """Band [-phi(b), b] for asymmetric ordinary densities"""
    b: float = Field(gt=0)
    phi_b: float
    source: PhiSource


class PeelingResult(FrozenModel):
    """Class partition found by repeated detection on the abnormal remainder"""
    classes: List[IndexArray]
    iterations: int
    per_iteration: List[DetectionResult]
    terminated: bool = True
    stop_reason: str = "accepted"

    def record(self) -> dict:
        return {
            "iterations": self.iterations,
            "terminated": self.terminated,
            "stop_reason": self.stop_reason,
            "class_sizes": [int(c.size) for c in self.classes],
            "per_iteration": [d.record(include_profile=False) for d in self.per_iteration],
        }
