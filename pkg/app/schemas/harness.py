from typing import List, Optional, Tuple

from pydantic import Field

from app.schemas.common import FrozenModel
from app.schemas.detection import PhiSource


class PipelineOptions(FrozenModel):
    """Detector settings that change the null distribution of the statistic"""
    window: Optional[int] = None
    coordinates: Optional[Tuple[int, ...]] = None
    phi_source: PhiSource = PhiSource.CLOSED_FORM


class CalibrationRecord(FrozenModel):
    """One persisted p-quantile of the maximal statistic under H0"""
    fingerprint: str
    scenario: str
    n: int
    p: float
    component: int = 0
    threshold: float
    trials: int
    seed: int
    software_version: str


class ExperimentReport(FrozenModel):
    scenario: str
    n: int
    trials: int
    threshold_c: float
    component: int = 0
    w1: Optional[float] = None
    w2: Optional[float] = None
    standard_error: float = 0.0
    rejections: int = 0
    eps_hat_mean: Optional[float] = None
    eps_hat_sd: Optional[float] = None
    h_hat_mean: Optional[float] = None
    h_hat_sd: Optional[float] = None
    eps_consistent_mean: Optional[float] = None
    eps_consistent_sd: Optional[float] = None
    wall_time: float = 0.0


class TableCell(FrozenModel):
    row: str
    n: int
    reference: Optional[float]
    reproduced: float
    delta: Optional[float]
    tolerance: float
    passed: Optional[bool]
    informational: bool = False


class TableReproduction(FrozenModel):
    table_id: int = Field(ge=1, le=10)
    title: str
    trials: int
    seed: int
    cells: List[TableCell]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.cells if c.passed is not None and not c.informational)
