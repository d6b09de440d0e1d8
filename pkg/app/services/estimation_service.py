import logging
from typing import Optional, Tuple

import numpy as np
from scipy import optimize

from app.core.config import settings
from app.schemas.densities import Density1D
from app.schemas.detection import DetectionResult, EstimationResult
from app.utils.exceptions import (
    IllConditionedError,
    NoSolutionError,
    PreconditionError,
    SwitchDetectError,
)

logger = logging.getLogger(__name__)


class EstimationService:
    """Recovers (eps, h) of (1 - eps) f0(x) + eps f0(x - h) after a rejection"""

    @staticmethod
    def estimate_nonparametric(det: DetectionResult) -> Tuple[float, Optional[float]]:
        """eps_N = N2(b*_N) / N and h_N = theta_N / eps_N (None when N2 = 0)"""
        if not det.rejected:
            raise PreconditionError("parameters are only estimated after H0 is rejected")
        eps = det.eps_nonparametric
        if eps == 0:
            return 0.0, None
        return eps, det.split_at_bstar.theta / eps

    @staticmethod
    def estimate_consistent(
        theta: float,
        b_star_n: float,
        f0: Density1D,
        eps_reference: Optional[float] = None,
    ) -> Tuple[float, float, float, bool]:
        """
        Solve (1 - e)/e = [f0(theta - b - theta/e) - f0(theta + b - theta/e)]
                          / [f0(theta + b) - f0(theta - b)]
        for e in (eps_min, 1/2 - eps_min), with h = theta / e.

        Returns (eps_hat, h_hat, residual, multiple_roots). Among several
        roots the one closest to `eps_reference` (or the smallest) is kept.
        """
        if theta == 0:
            raise PreconditionError("theta_N = 0 forces the degenerate solution eps * h = 0")
        eps_min = settings.eps_min
        denominator = float(f0.pdf(theta + b_star_n) - f0.pdf(theta - b_star_n))
        if abs(denominator) < settings.ill_conditioned_floor:
            raise IllConditionedError(
                "f0(theta + b*) - f0(theta - b*) vanishes",
                details={"theta": theta, "b_star_n": b_star_n, "denominator": denominator},
            )

        def g(e):
            e = np.asarray(e, dtype=float)
            h = theta / e
            numerator = f0.pdf(theta - b_star_n - h) - f0.pdf(theta + b_star_n - h)
            return (1.0 - e) / e - numerator / denominator

        grid = np.linspace(eps_min, 0.5 - eps_min, settings.root_scan_points)
        values = g(grid)
        signs = np.sign(values)
        roots = []
        for i in np.flatnonzero(signs[:-1] * signs[1:] < 0):
            roots.append(optimize.bisect(lambda e: float(g(e)), grid[i], grid[i + 1],
                                         xtol=settings.root_xtol, maxiter=200))
        roots.extend(float(grid[i]) for i in np.flatnonzero(values == 0))
        if not roots:
            raise NoSolutionError(
                "estimation equation has no sign change on (0, 1/2)",
                details={"theta": theta, "b_star_n": b_star_n},
            )
        roots.sort()
        if eps_reference is not None:
            eps_hat = min(roots, key=lambda r: abs(r - eps_reference))
        else:
            eps_hat = roots[0]
        if len(roots) > 1:
            logger.debug("estimation equation has %d roots %s; kept %.6g", len(roots), roots, eps_hat)
        residual = abs(float(g(eps_hat)))
        return float(eps_hat), theta / eps_hat, residual, len(roots) > 1

    @staticmethod
    def estimate(det: DetectionResult, f0: Optional[Density1D] = None) -> EstimationResult:
        """
        Nonparametric pair always; the consistent pair when f0 is known and
        the equation is solvable.
        """
        eps_np, h_np = EstimationService.estimate_nonparametric(det)
        theta = det.split_at_bstar.theta
        base = dict(b_star_n=det.b_star_n, theta=theta, eps_nonpar=eps_np, h_nonpar=h_np)
        if f0 is None:
            return EstimationResult(**base, note="f0 unknown: nonparametric estimates only")
        try:
            eps_hat, h_hat, residual, multiple = EstimationService.estimate_consistent(
                theta, det.b_star_n, f0, eps_reference=eps_np
            )
        except SwitchDetectError as exc:
            logger.info("consistent estimation skipped: %s", exc.message)
            return EstimationResult(**base, note=exc.message)
        return EstimationResult(
            **base,
            eps_hat=eps_hat,
            h_hat=h_hat,
            solver_residual=residual,
            multiple_roots=multiple,
        )
