import logging
import math
from typing import List

import numpy as np
from scipy import optimize, special

from app.schemas.densities import Density1D
from app.schemas.detection import (
    AsymmetricBand,
    BandGrid,
    DetectionResult,
    PhiSource,
    Sample,
    SplitOutcome,
)
from app.services.density_service import DensityService
from app.services.detection_service import DetectionService, _check_threshold, build_result, compensated_prefix
from app.utils.exceptions import DegenerateSampleError, NoRootError, PreconditionError

logger = logging.getLogger(__name__)

MOMENT_TOL = 1e-10
PHI_SERIES_CUTOFF = 1e-3


class AsymmetricDetectionService:
    """
    Band-split detection for asymmetric ordinary densities. The band around
    the mean is [-phi(b), b] with phi(b) chosen so the ordinary band has zero
    first moment under f0.
    """

    @staticmethod
    def phi_closed_form(b):
        """1 - b / (e^b - 1), continuous at b = 0 with value 0"""
        b_arr = np.asarray(b, dtype=float)
        if np.any(b_arr < 0):
            raise ValueError("phi is defined for b >= 0")
        safe = np.where(b_arr > 0, b_arr, 1.0)
        out = np.where(b_arr > 0, 1.0 - safe / np.expm1(safe), 0.0)
        return float(out) if out.ndim == 0 else out

    @staticmethod
    def phi_chi_square(b):
        """
        Exact band for the centered chi-square(1) residual y/theta - 1:
        1 + W0(-(1 + b) e^{-(1 + b)}). Below PHI_SERIES_CUTOFF the argument
        sits on the branch point of W0, so the series b - 2b^2/3 + 4b^3/9
        is used instead; phi(0) = 0.
        """
        b_arr = np.asarray(b, dtype=float)
        if np.any(b_arr < 0):
            raise ValueError("phi is defined for b >= 0")
        small = b_arr < PHI_SERIES_CUTOFF
        safe = np.where(small, 1.0, b_arr)
        exact = 1.0 + np.real(special.lambertw(-(1.0 + safe) * np.exp(-(1.0 + safe)), 0))
        series = b_arr * (1.0 - b_arr * (2.0 / 3.0 - 4.0 * b_arr / 9.0))
        out = np.clip(np.where(small, series, exact), 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    @staticmethod
    def phi_numeric(f0: Density1D, b: float) -> float:
        """Root phi of int_{-phi}^{b} y f0(y) dy = 0"""
        if not b > 0:
            raise ValueError("band half-width must be positive")
        lo, hi = f0.support()
        if lo >= 0:
            raise NoRootError("f0 has no mass below zero", details={"b": b})
        upper = min(b, hi)
        points = f0.breakpoints()

        def moment(phi: float) -> float:
            if phi <= 0:
                a = 0.0
            else:
                a = -phi
            if not a < upper:
                return 0.0
            return DensityService.integrate(lambda t: t * float(f0.pdf(t)), a, upper, tol=MOMENT_TOL, points=points)

        phi_max = -lo
        m_top = moment(phi_max)
        if abs(m_top) <= MOMENT_TOL:
            return phi_max
        if m_top > 0:
            raise NoRootError(
                "band moment stays positive: no lower extent balances the upper band",
                details={"b": b, "moment_at_support_edge": m_top},
            )
        m_zero = moment(0.0)
        if m_zero <= 0:
            raise NoRootError("band moment is not positive at phi = 0", details={"b": b})
        return float(optimize.brentq(moment, 0.0, phi_max, xtol=1e-13, maxiter=200))

    @staticmethod
    def asymmetric_bands(f0: Density1D, grid: BandGrid) -> List[AsymmetricBand]:
        """Numeric band for every grid point that admits one"""
        bands = []
        for b in grid.points:
            try:
                phi = AsymmetricDetectionService.phi_numeric(f0, float(b))
            except NoRootError as exc:
                logger.debug("skipping b=%.6g: %s", b, exc.message)
                continue
            bands.append(AsymmetricBand(b=float(b), phi_b=phi, source=PhiSource.NUMERIC))
        return bands

    @staticmethod
    def detect_asymmetric(s: Sample, grid: BandGrid, f0: Density1D, threshold_c: float) -> DetectionResult:
        """
        y_i = x_i - theta_N; ordinary when -phi(b) <= y_i <= b, phi from the
        moment condition under f0.
        """
        _check_threshold(threshold_c)
        bands = AsymmetricDetectionService.asymmetric_bands(f0, grid)
        if not bands:
            raise NoRootError("no grid point admits an asymmetric band under f0")
        theta = DetectionService.sample_mean(s)
        y = s.values - theta
        b_values = np.array([band.b for band in bands])
        lower = np.array([-band.phi_b for band in bands])
        psi = interval_profile(y, lower, b_values)

        def split_at(b: float) -> SplitOutcome:
            band = next(x for x in bands if x.b == b)
            return interval_split(y, -band.phi_b, b, b, theta)

        return build_result(b_values, psi, threshold_c, split_at, method="asymmetric")

    @staticmethod
    def detect_variance_contamination(
        s: Sample,
        grid: BandGrid,
        threshold_c: float,
        phi_source: PhiSource = PhiSource.CLOSED_FORM,
    ) -> DetectionResult:
        """
        Squared residuals y_i = (x_i - mean)^2 with mean theta_N; ordinary when
        theta_N (1 - phi(b)) <= y_i <= theta_N (1 + b).
        """
        _check_threshold(threshold_c)
        if s.n < 3:
            raise PreconditionError("variance detection needs at least three observations")
        mu = DetectionService.sample_mean(s)
        y = (s.values - mu) ** 2
        theta = math.fsum(y) / s.n
        if theta == 0:
            raise DegenerateSampleError("constant sample: squared residuals are all zero")
        b_values = grid.points
        if phi_source == PhiSource.CHI_SQUARE:
            phi = AsymmetricDetectionService.phi_chi_square(b_values)
        else:
            phi = AsymmetricDetectionService.phi_closed_form(b_values)
        lower = theta * (1.0 - phi)
        upper = theta * (1.0 + b_values)
        psi = interval_profile(y, lower, upper)

        def split_at(b: float) -> SplitOutcome:
            i = int(np.searchsorted(b_values, b))
            return interval_split(y, lower[i], upper[i], b, theta)

        return build_result(b_values, psi, threshold_c, split_at, method="variance")


def interval_profile(values: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """
    (N * sum(ordinary) - N1 * sum(all)) / N^2 with ordinary = [lower, upper],
    per band; accumulated as the sum of centered ordinary values over N.
    """
    n = values.size
    order = np.argsort(values, kind="stable")
    ordered = values[order]
    prefix = compensated_prefix(ordered - math.fsum(values) / n)
    lo = np.searchsorted(ordered, lower, side="left")
    hi = np.maximum(np.searchsorted(ordered, upper, side="right"), lo)
    return (prefix[hi] - prefix[lo]) / n


def interval_split(values: np.ndarray, lower: float, upper: float, b: float, theta: float) -> SplitOutcome:
    inside = (values >= lower) & (values <= upper)
    return SplitOutcome(
        b=float(b),
        theta=theta,
        ordinary_idx=np.flatnonzero(inside),
        abnormal_idx=np.flatnonzero(~inside),
    )
