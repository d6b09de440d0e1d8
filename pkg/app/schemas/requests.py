from typing import List, Optional

from pydantic import BaseModel, Field

from app.core.config import settings
from app.schemas.detection import BandGrid, PhiSource


class GridParams(BaseModel):
    """Band grid request schema"""
    kappa: float = Field(default=settings.grid_kappa, gt=0)
    upper: float = Field(default=settings.grid_upper, gt=0)
    points: int = Field(default=settings.grid_points, ge=2)

    def to_grid(self) -> BandGrid:
        return BandGrid.geometric(self.kappa, self.upper, self.points)


class DetectRequest(BaseModel):
    """Univariate detection request schema"""
    values: List[float]
    threshold_c: float
    grid: GridParams = GridParams()
    include_profile: bool = False


class VarianceDetectRequest(DetectRequest):
    phi_source: PhiSource = PhiSource.CLOSED_FORM


class MultivariateDetectRequest(BaseModel):
    rows: List[List[float]]
    threshold_c: float
    coordinates: Optional[List[int]] = None
    grid: GridParams = GridParams()
    include_profile: bool = False


class PeelRequest(BaseModel):
    """Peeling request; the threshold scales as C * sqrt(n_ref / n)"""
    values: List[float]
    threshold_c: float
    n_ref: Optional[int] = None
    max_iter: int = Field(default=settings.max_peel_iter, ge=1)
    min_size: int = Field(default=settings.min_subsample, ge=2)
    grid: GridParams = GridParams()


class EstimateRequest(DetectRequest):
    """Detection then estimation; a gaussian f0 enables the consistent estimate"""
    f0_mean: Optional[float] = None
    f0_variance: Optional[float] = Field(default=None, gt=0)
