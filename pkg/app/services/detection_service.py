import logging
import math
from typing import Callable

import numpy as np

from app.schemas.detection import BandGrid, Decision, DetectionResult, Sample, SplitOutcome
from app.utils.exceptions import ConfigurationError

logger = logging.getLogger(__name__)


class DetectionService:
    """
    Symmetric band-split detector.

    For each band half-width b the sample is split around its mean theta_N
    into ordinary (|x - theta_N| < b) and abnormal (|x - theta_N| >= b)
    observations and

        Psi_N(b) = (N2 * sum(ordinary) - N1 * sum(abnormal)) / N^2.

    H0 (no switches) is rejected when max_b |Psi_N(b)| exceeds C.
    """

    @staticmethod
    def sample_mean(s: Sample) -> float:
        return math.fsum(s.values) / s.n

    @staticmethod
    def split(s: Sample, b: float) -> SplitOutcome:
        if not b > 0:
            raise ConfigurationError("band half-width must be positive")
        theta = DetectionService.sample_mean(s)
        dist = np.abs(s.values - theta)
        return SplitOutcome(
            b=b,
            theta=theta,
            ordinary_idx=np.flatnonzero(dist < b),
            abnormal_idx=np.flatnonzero(dist >= b),
        )

    @staticmethod
    def psi_stat(s: Sample, b: float) -> float:
        part = DetectionService.split(s, b)
        n1, n2 = part.n1, part.n2
        ordinary = math.fsum(s.values[part.ordinary_idx])
        abnormal = math.fsum(s.values[part.abnormal_idx])
        return (n2 * ordinary - n1 * abnormal) / (s.n * s.n)

    @staticmethod
    def psi_stat_alternative(s: Sample, b: float) -> float:
        """(N * sum(ordinary) - N1 * sum(all)) / N^2"""
        part = DetectionService.split(s, b)
        ordinary = math.fsum(s.values[part.ordinary_idx])
        total = math.fsum(s.values)
        return (s.n * ordinary - part.n1 * total) / (s.n * s.n)

    @staticmethod
    def psi_profile(s: Sample, points) -> np.ndarray:
        """
        Psi_N over many bands at once. Psi_N(b) equals the sum of the centered
        ordinary observations divided by N, so one sort by distance and one
        prefix sum serve the whole grid.
        """
        points = np.asarray(points, dtype=float)
        theta = DetectionService.sample_mean(s)
        centered = s.values - theta
        dist = np.abs(centered)
        order = np.argsort(dist, kind="stable")
        prefix = compensated_prefix(centered[order])
        n1 = np.searchsorted(dist[order], points, side="left")
        return prefix[n1] / s.n

    @staticmethod
    def detect(s: Sample, grid: BandGrid, threshold_c: float) -> DetectionResult:
        _check_threshold(threshold_c)
        psi = DetectionService.psi_profile(s, grid.points)
        return build_result(grid.points, psi, threshold_c, lambda b: DetectionService.split(s, b))


def compensated_prefix(x: np.ndarray) -> np.ndarray:
    """
    Prefix sums along the first axis with a leading zero row. Each running
    sum carries the accumulated TwoSum rounding errors of the additions
    before it.
    """
    x = np.asarray(x, dtype=float)
    running = np.cumsum(x, axis=0)
    previous = np.concatenate([np.zeros_like(x[:1]), running[:-1]])
    virtual = running - previous
    error = (previous - (running - virtual)) + (x - virtual)
    return np.concatenate([np.zeros_like(x[:1]), running + np.cumsum(error, axis=0)])


def _check_threshold(threshold_c: float) -> None:
    if not threshold_c > 0:
        raise ConfigurationError("threshold must be positive", details={"threshold_c": threshold_c})


def build_result(
    b_values: np.ndarray,
    psi: np.ndarray,
    threshold_c: float,
    split_at: Callable[[float], SplitOutcome],
    method: str = "symmetric",
) -> DetectionResult:
    """Maximize the profile magnitude (first maximizer on ties) and decide"""
    magnitude = np.abs(psi) if psi.ndim == 1 else np.linalg.norm(psi, axis=1)
    idx = int(np.argmax(magnitude))
    j_stat = float(magnitude[idx])
    b_star = float(b_values[idx])
    decision = Decision.REJECT_H0 if j_stat > threshold_c else Decision.ACCEPT_H0
    logger.debug("%s detector: J=%.6g at b=%.6g, C=%.6g -> %s", method, j_stat, b_star, threshold_c, decision.value)
    return DetectionResult(
        b_values=b_values,
        psi=psi,
        j_stat=j_stat,
        b_star_n=b_star,
        decision=decision,
        threshold_c=threshold_c,
        split_at_bstar=split_at(b_star),
        method=method,
    )
