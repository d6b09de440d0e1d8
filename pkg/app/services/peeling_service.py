import logging
import math
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from app.core.config import settings
from app.schemas.detection import BandGrid, PeelingResult, Sample
from app.services.detection_service import DetectionService
from app.utils.exceptions import ConfigurationError

logger = logging.getLogger(__name__)

ThresholdFn = Callable[[int], float]


class PeelingService:
    """Multiple-switch classification by repeated binary detection"""

    @staticmethod
    def peel(
        s: Sample,
        grid: BandGrid,
        threshold_fn: ThresholdFn,
        max_iter: Optional[int] = None,
        min_size: Optional[int] = None,
    ) -> PeelingResult:
        """
        Detect on the working sample; on rejection the ordinary part at b*_N
        becomes the next class and detection restarts on the abnormal part.
        The working sample left when H0 is accepted is the last class.
        """
        max_iter = settings.max_peel_iter if max_iter is None else max_iter
        min_size = settings.min_subsample if min_size is None else min_size
        if max_iter < 1:
            raise ConfigurationError("max_iter must be at least 1", details={"max_iter": max_iter})

        working = np.arange(s.n)
        classes, per_iteration = [], []
        stop_reason = "max_iter"
        terminated = False
        for iteration in range(1, max_iter + 1):
            if working.size < max(min_size, 2):
                stop_reason = "min_subsample"
                break
            sub = s.subset(working)
            det = DetectionService.detect(sub, grid, threshold_fn(sub.n))
            per_iteration.append(det)
            logger.debug("peel iteration %d: n=%d %s", iteration, sub.n, det.decision.value)
            if not det.rejected:
                stop_reason, terminated = "accepted", True
                break
            split = det.split_at_bstar
            if split.n1 == 0 or split.n2 == 0:
                stop_reason = "empty_split"
                break
            classes.append(working[split.ordinary_idx])
            working = working[split.abnormal_idx]
        if working.size:
            classes.append(working)
        return PeelingResult(
            classes=classes,
            iterations=len(per_iteration),
            per_iteration=per_iteration,
            terminated=terminated,
            stop_reason=stop_reason,
        )

    @staticmethod
    def interpolate_threshold(points: Dict[int, float], n: int) -> Tuple[float, bool]:
        """
        Log-log linear interpolation of C over calibrated sizes.
        Returns (C, extrapolated); outside the calibrated range the end
        segment is extended.
        """
        if not points:
            raise ConfigurationError("no calibrated sizes to interpolate")
        sizes = np.array(sorted(points), dtype=float)
        values = np.array([points[int(k)] for k in sizes], dtype=float)
        if sizes.size == 1:
            return float(values[0]), n != int(sizes[0])
        extrapolated = not sizes[0] <= n <= sizes[-1]
        log_n, log_s, log_c = math.log(n), np.log(sizes), np.log(values)
        i = int(np.clip(np.searchsorted(log_s, log_n) - 1, 0, sizes.size - 2))
        slope = (log_c[i + 1] - log_c[i]) / (log_s[i + 1] - log_s[i])
        return float(math.exp(log_c[i] + slope * (log_n - log_s[i]))), extrapolated

    @staticmethod
    def threshold_function(points: Dict[int, float]) -> ThresholdFn:
        def fn(n: int) -> float:
            value, extrapolated = PeelingService.interpolate_threshold(points, n)
            if extrapolated:
                logger.info("threshold for n=%d extrapolated from calibrated sizes %s", n, sorted(points))
            return value

        return fn

    @staticmethod
    def sqrt_threshold(c_ref: float, n_ref: int) -> ThresholdFn:
        """C(n) = c_ref * sqrt(n_ref / n)"""
        if not c_ref > 0 or n_ref < 1:
            raise ConfigurationError(
                "reference threshold and size must be positive", details={"c_ref": c_ref, "n_ref": n_ref}
            )
        return lambda n: c_ref * math.sqrt(n_ref / n)
