import logging
import math
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from app.core.config import settings
from app.schemas.detection import BandGrid, DetectionResult, Sample, SplitOutcome
from app.schemas.multivariate import (
    CoefficientDetection,
    CoefficientTrace,
    RegressionData,
    RegressionDetection,
    VectorSample,
)
from app.services.detection_service import DetectionService, _check_threshold, build_result, compensated_prefix
from app.utils.exceptions import ConfigurationError, SingularDesignError

logger = logging.getLogger(__name__)


def default_window(k: int) -> int:
    return max(20, 5 * k)


class MultivariateService:
    """
    Vector detection with the normed statistic ||Psi_N(b)|| and switching
    regression detection on sliding-window coefficient traces.
    """

    @staticmethod
    def mean_vector(rows: np.ndarray) -> np.ndarray:
        return np.array([math.fsum(col) for col in rows.T]) / rows.shape[0]

    @staticmethod
    def select(vs: VectorSample, coordinates: Optional[Sequence[int]] = None) -> np.ndarray:
        if coordinates is None:
            return vs.rows
        coords = list(coordinates)
        if not coords or any(not 0 <= c < vs.k for c in coords):
            raise ConfigurationError(
                "coordinates out of range", details={"coordinates": coords, "dimension": vs.k}
            )
        return vs.rows[:, coords]

    @staticmethod
    def psi_vector_profile(rows: np.ndarray, points) -> np.ndarray:
        """Vector Psi_N(b) per grid point (one row each); ordinary when ||y - theta|| <= b"""
        points = np.asarray(points, dtype=float)
        n = rows.shape[0]
        centered = rows - MultivariateService.mean_vector(rows)
        dist = np.sqrt(np.einsum("ij,ij->i", centered, centered))
        order = np.argsort(dist, kind="stable")
        prefix = compensated_prefix(centered[order])
        n1 = np.searchsorted(dist[order], points, side="right")
        return prefix[n1] / n

    @staticmethod
    def split(rows: np.ndarray, b: float) -> SplitOutcome:
        theta = MultivariateService.mean_vector(rows)
        dist = np.linalg.norm(rows - theta, axis=1)
        return SplitOutcome(
            b=b,
            theta=float(np.linalg.norm(theta)),
            ordinary_idx=np.flatnonzero(dist <= b),
            abnormal_idx=np.flatnonzero(dist > b),
            theta_vector=theta,
        )

    @staticmethod
    def detect_multivariate(
        vs: VectorSample,
        grid: BandGrid,
        threshold_c: float,
        coordinates: Optional[Sequence[int]] = None,
    ) -> DetectionResult:
        _check_threshold(threshold_c)
        rows = MultivariateService.select(vs, coordinates)
        psi = MultivariateService.psi_vector_profile(rows, grid.points)
        return build_result(
            grid.points, psi, threshold_c, lambda b: MultivariateService.split(rows, b), method="multivariate"
        )

    @staticmethod
    def ols(rd: RegressionData) -> np.ndarray:
        """Least squares through a QR factorization; rejects ill-conditioned designs"""
        return _ols(rd.X, rd.Y)

    @staticmethod
    def coefficient_trace(rd: RegressionData, window: Optional[int] = None) -> CoefficientTrace:
        window = default_window(rd.k) if window is None else window
        if not rd.k < window <= rd.n:
            raise ConfigurationError(
                "window must exceed the number of predictors and not exceed N",
                details={"window": window, "k": rd.k, "n": rd.n},
            )
        length = rd.n - window + 1
        estimates = np.full((length, rd.k), np.nan)
        flagged = []
        for t in range(length):
            try:
                estimates[t] = _ols(rd.X[t:t + window], rd.Y[t:t + window])
            except SingularDesignError:
                flagged.append(t)
        if len(flagged) == length:
            raise SingularDesignError("every window design is rank-deficient", details={"window": window})
        if flagged:
            logger.info("%d of %d windows rank-deficient; interpolated", len(flagged), length)
            good = np.setdiff1d(np.arange(length), flagged)
            for j in range(rd.k):
                estimates[flagged, j] = np.interp(flagged, good, estimates[good, j])
        return CoefficientTrace(window=window, estimates=estimates, flagged=flagged)

    @staticmethod
    def detect_switching_regression(
        rd: RegressionData,
        grid: BandGrid,
        threshold_per_coef: Sequence[float],
        window: Optional[int] = None,
    ) -> RegressionDetection:
        """Symmetric detection on each coefficient trace with its own threshold"""
        if len(threshold_per_coef) != rd.k:
            raise ConfigurationError(
                "one threshold per coefficient is required",
                details={"thresholds": len(threshold_per_coef), "k": rd.k},
            )
        trace = MultivariateService.coefficient_trace(rd, window)
        detections = []
        for j, c in enumerate(threshold_per_coef):
            det = DetectionService.detect(Sample(values=trace.coefficient(j)), grid, c)
            abnormal_windows = np.zeros(trace.length, dtype=bool)
            abnormal_windows[det.split_at_bstar.abnormal_idx] = True
            observations = abnormal_observations(abnormal_windows, trace.window, rd.n)
            detections.append(
                CoefficientDetection(
                    coefficient=j,
                    result=det,
                    eps_trace=det.eps_nonparametric,
                    eps_observation=observations.size / rd.n,
                    abnormal_observations=observations,
                )
            )
        return RegressionDetection(window=trace.window, coefficients=detections)


def abnormal_observations(abnormal_windows: np.ndarray, window: int, n: int) -> np.ndarray:
    """Observations every covering window of which is abnormal"""
    length = abnormal_windows.size
    normal = np.concatenate([[0], np.cumsum(~abnormal_windows)])
    i = np.arange(n)
    first = np.maximum(0, i - window + 1)
    last = np.minimum(i, length - 1)
    return np.flatnonzero(normal[last + 1] - normal[first] == 0)


def _ols(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    q, r = np.linalg.qr(X, mode="reduced")
    diag = np.abs(np.diag(r))
    if diag.min() == 0 or np.linalg.cond(r) > settings.max_condition:
        raise SingularDesignError("design matrix is rank-deficient", details={"shape": list(X.shape)})
    return linalg.solve_triangular(r, q.T @ Y, lower=False)
