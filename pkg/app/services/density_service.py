import logging
import math
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, optimize

from app.core.config import settings
from app.schemas.densities import Density1D, MixtureSpec
from app.utils.exceptions import NoRootError, QuadratureError

logger = logging.getLogger(__name__)


class DensityService:
    """
    Numeric oracles for contamination mixtures: density evaluation,
    quadrature, the population statistic curve, its optimal band and the
    chi-square type distance between densities.
    All methods are pure functions of their arguments.
    """

    @staticmethod
    def mixture_pdf(spec: MixtureSpec, x):
        """(1 - sum eps_i) f0(x) + sum eps_i f0(x - h_i)"""
        out = spec.base_weight * spec.base.pdf(x)
        for c in spec.components:
            out = out + c.weight * spec.base.pdf(np.asarray(x, dtype=float) - c.shift)
        return out

    @staticmethod
    def mixture_cdf(spec: MixtureSpec, x):
        out = spec.base_weight * spec.base.cdf(x)
        for c in spec.components:
            out = out + c.weight * spec.base.cdf(np.asarray(x, dtype=float) - c.shift)
        return out

    @staticmethod
    def mixture_mean(spec: MixtureSpec) -> float:
        """E x = E_0 x + sum eps_i h_i"""
        return spec.base.expectation() + sum(c.weight * c.shift for c in spec.components)

    @staticmethod
    def integrate(
        f: Callable[[float], float],
        lo: float,
        hi: float,
        tol: Optional[float] = None,
        points: Sequence[float] = (),
    ) -> float:
        """
        Adaptive Gauss-Kronrod quadrature with absolute tolerance `tol`.
        Raises QuadratureError when the subdivision limit is hit before the
        tolerance is met.
        """
        if not lo < hi:
            raise ValueError("integration requires lo < hi")
        tol = settings.quad_tol if tol is None else tol
        inner = sorted(p for p in set(points) if lo < p < hi) or None
        result = integrate.quad(
            f, lo, hi, epsabs=tol, epsrel=0.0, limit=settings.quad_limit, points=inner, full_output=1
        )
        value, abserr = result[0], result[1]
        # a fourth element (the QUADPACK message) is only present when ier > 0
        if len(result) > 3 and abserr > tol:
            raise QuadratureError(
                "quadrature did not converge",
                details={"lo": lo, "hi": hi, "estimate": value, "abserr": abserr, "reason": str(result[3])[:200]},
            )
        return float(value)

    @staticmethod
    def psi_population(spec: MixtureSpec, b: float) -> float:
        """
        Psi(b) = r(b) - c d(b) with c the mixture mean,
        r(b) = int_{c-b}^{c+b} x f(x) dx and d(b) = int_{c-b}^{c+b} f(x) dx.
        """
        if not b > 0:
            raise ValueError("band half-width must be positive")
        r, d = DensityService.band_moments(spec, b)
        return r - DensityService.mixture_mean(spec) * d

    @staticmethod
    def band_moments(spec: MixtureSpec, b: float) -> Tuple[float, float]:
        """(r(b), d(b)) over the band around the mixture mean"""
        center = DensityService.mixture_mean(spec)
        lo_dom, hi_dom = spec.support()
        lo, hi = max(center - b, lo_dom), min(center + b, hi_dom)
        if not lo < hi:
            return 0.0, 0.0
        points = spec.breakpoints()
        pdf = lambda t: float(DensityService.mixture_pdf(spec, t))
        r = DensityService.integrate(lambda t: t * pdf(t), lo, hi, points=points)
        d = DensityService.integrate(pdf, lo, hi, points=points)
        return r, d

    @staticmethod
    def bstar_root(spec: MixtureSpec, search: Optional[Tuple[float, float]] = None) -> Tuple[float, bool]:
        """
        Root b* of f(c - b) = f(c + b), c the mixture mean.
        Returns (b*, unique). When g changes sign several times the smallest
        root is returned with unique=False.
        """
        center = DensityService.mixture_mean(spec)
        lo, hi = search or (1e-6, settings.grid_upper)

        def g(b):
            return DensityService.mixture_pdf(spec, center - b) - DensityService.mixture_pdf(spec, center + b)

        roots = _bracketed_roots(g, lo, hi)
        if not roots:
            raise NoRootError(
                "f(c - b) - f(c + b) does not change sign on the search interval",
                details={"search": [lo, hi], "center": center},
            )
        if len(roots) > 1:
            logger.debug("b* equation has %d roots; taking the smallest", len(roots))
        return roots[0], len(roots) == 1

    @staticmethod
    def j_epsilon(f0: Density1D, f1: Density1D, eps: float, tol: Optional[float] = None) -> float:
        """int (f0 - f1)^2 / f_eps over the truncated domain where f_eps > pdf_floor"""
        if not 0 < eps < 0.5:
            raise ValueError("eps must lie in (0, 1/2)")
        lo = min(f0.support()[0], f1.support()[0])
        hi = max(f0.support()[1], f1.support()[1])
        floor = settings.pdf_floor

        def integrand(t):
            a, c = float(f0.pdf(t)), float(f1.pdf(t))
            mix = (1.0 - eps) * a + eps * c
            if mix <= floor:
                return 0.0
            return (a - c) ** 2 / mix

        points = f0.breakpoints() + f1.breakpoints()
        return DensityService.integrate(integrand, lo, hi, tol=tol, points=points)

    @staticmethod
    def estimation_lower_bound(f0: Density1D, f1: Density1D, eps: float, n: int, delta: float) -> float:
        """exp(-n delta^2 J(eps)), the asymptotic floor on P{|eps_hat - eps| > delta}"""
        return math.exp(-n * delta * delta * DensityService.j_epsilon(f0, f1, eps))


def _bracketed_roots(g: Callable, lo: float, hi: float, scan_points: Optional[int] = None) -> list:
    """Scan g on a grid, then bisect every sign change"""
    n = scan_points or settings.root_scan_points
    grid = np.linspace(lo, hi, n)
    values = np.asarray(g(grid), dtype=float)
    nonzero = np.flatnonzero(values != 0.0)
    roots = []
    for i, j in zip(nonzero[:-1], nonzero[1:]):
        if np.sign(values[i]) == np.sign(values[j]):
            continue
        if j > i + 1:
            roots.append(float(grid[i + 1]))
            continue
        root = optimize.bisect(lambda t: float(g(t)), grid[i], grid[j], xtol=settings.root_xtol, maxiter=200)
        roots.append(float(root))
    return roots
