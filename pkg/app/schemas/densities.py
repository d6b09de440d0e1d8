import enum
import math
from typing import Callable, Optional, Tuple

import numpy as np
from pydantic import Field, field_validator, model_validator
from scipy import integrate, stats

from app.core.config import settings
from app.schemas.common import FloatArray, FrozenModel


class DensityKind(str, enum.Enum):
    """Supported univariate density families"""
    GAUSSIAN = "gaussian"
    TABULATED = "tabulated"
    CHI_SQUARE_RESIDUAL = "chi_square_residual"
    ANALYTIC = "analytic"


class Density1D(FrozenModel):
    """
    Univariate density f(x) >= 0 with a location shift.

    `chi_square_residual` is the law of y/theta - 1 for the squared residual
    y of a Gaussian observation (chi-square with one degree of freedom,
    centered). `analytic` wraps a user callable and cannot be sampled.
    """
    kind: DensityKind
    mean: float = 0.0
    variance: float = 1.0
    xs: Optional[FloatArray] = None
    fs: Optional[FloatArray] = None
    pdf_fn: Optional[Callable] = Field(default=None, exclude=True)
    lower: Optional[float] = None
    upper: Optional[float] = None
    breaks: Tuple[float, ...] = ()
    shift: float = 0.0

    @model_validator(mode="after")
    def _check_kind(self) -> "Density1D":
        if self.kind == DensityKind.GAUSSIAN and not self.variance > 0:
            raise ValueError("gaussian variance must be positive")
        if self.kind == DensityKind.TABULATED:
            if self.xs is None or self.fs is None or self.xs.shape != self.fs.shape or self.xs.size < 2:
                raise ValueError("tabulated density needs matching x and f(x) columns")
            if np.any(np.diff(self.xs) <= 0):
                raise ValueError("tabulated x must be strictly increasing")
            if np.any(self.fs < 0) or not np.all(np.isfinite(self.fs)):
                raise ValueError("tabulated f(x) must be finite and non-negative")
        if self.kind == DensityKind.ANALYTIC:
            if self.pdf_fn is None or self.lower is None or self.upper is None or not self.lower < self.upper:
                raise ValueError("analytic density needs a pdf and a support lower < upper")
        return self

    # constructors

    @classmethod
    def gaussian(cls, mean: float = 0.0, variance: float = 1.0) -> "Density1D":
        return cls(kind=DensityKind.GAUSSIAN, mean=mean, variance=variance)

    @classmethod
    def tabulated(cls, xs, fs) -> "Density1D":
        return cls(kind=DensityKind.TABULATED, xs=xs, fs=fs)

    @classmethod
    def chi_square_residual(cls) -> "Density1D":
        return cls(kind=DensityKind.CHI_SQUARE_RESIDUAL)

    @classmethod
    def analytic(cls, pdf: Callable, lower: float, upper: float, breaks: Tuple[float, ...] = ()) -> "Density1D":
        return cls(kind=DensityKind.ANALYTIC, pdf_fn=pdf, lower=lower, upper=upper, breaks=tuple(breaks))

    def shifted(self, h: float) -> "Density1D":
        """f(x - h)"""
        return self.model_copy(update={"shift": self.shift + h})

    # evaluation

    @property
    def sd(self) -> float:
        if self.kind == DensityKind.GAUSSIAN:
            return math.sqrt(self.variance)
        if self.kind == DensityKind.CHI_SQUARE_RESIDUAL:
            return math.sqrt(2.0)
        return math.sqrt(max(self.second_moment() - self.expectation() ** 2, 0.0))

    def pdf(self, x):
        z = np.asarray(x, dtype=float) - self.shift
        if self.kind == DensityKind.GAUSSIAN:
            return stats.norm.pdf(z, loc=self.mean, scale=math.sqrt(self.variance))
        if self.kind == DensityKind.CHI_SQUARE_RESIDUAL:
            return stats.chi2.pdf(z, df=1, loc=-1.0)
        if self.kind == DensityKind.TABULATED:
            return np.interp(z, self.xs, self.fs, left=0.0, right=0.0)
        return np.asarray(self.pdf_fn(z), dtype=float)

    def cdf(self, x):
        z = np.asarray(x, dtype=float) - self.shift
        if self.kind == DensityKind.GAUSSIAN:
            return stats.norm.cdf(z, loc=self.mean, scale=math.sqrt(self.variance))
        if self.kind == DensityKind.CHI_SQUARE_RESIDUAL:
            return stats.chi2.cdf(z, df=1, loc=-1.0)
        if self.kind == DensityKind.TABULATED:
            return np.interp(z, self.xs, self._tabulated_cdf(), left=0.0, right=1.0)
        raise NotImplementedError("cdf is not available for analytic densities")

    def support(self) -> Tuple[float, float]:
        """Truncated integration domain"""
        if self.kind == DensityKind.GAUSSIAN:
            half = settings.quad_tail_sigmas * math.sqrt(self.variance)
            lo, hi = self.mean - half, self.mean + half
        elif self.kind == DensityKind.CHI_SQUARE_RESIDUAL:
            lo, hi = -1.0, -1.0 + float(stats.chi2.isf(1e-16, df=1))
        elif self.kind == DensityKind.TABULATED:
            lo, hi = float(self.xs[0]), float(self.xs[-1])
        else:
            lo, hi = float(self.lower), float(self.upper)
        return lo + self.shift, hi + self.shift

    def breakpoints(self) -> Tuple[float, ...]:
        """Points where the density peaks or is not smooth"""
        if self.kind == DensityKind.GAUSSIAN:
            pts = (self.mean,)
        elif self.kind == DensityKind.CHI_SQUARE_RESIDUAL:
            pts = (-1.0,)
        else:
            pts = self.breaks
        return tuple(p + self.shift for p in pts)

    def expectation(self) -> float:
        if self.kind == DensityKind.GAUSSIAN:
            return self.mean + self.shift
        if self.kind == DensityKind.CHI_SQUARE_RESIDUAL:
            return self.shift
        if self.kind == DensityKind.TABULATED:
            return float(integrate.trapezoid(self.xs * self.fs, self.xs) / integrate.trapezoid(self.fs, self.xs)) + self.shift
        lo, hi = self.support()
        mass = integrate.quad(lambda t: float(self.pdf(t)), lo, hi, limit=settings.quad_limit)[0]
        first = integrate.quad(lambda t: t * float(self.pdf(t)), lo, hi, limit=settings.quad_limit)[0]
        return first / mass

    def second_moment(self) -> float:
        lo, hi = self.support()
        if self.kind == DensityKind.TABULATED:
            z = self.xs + self.shift
            return float(integrate.trapezoid(z * z * self.fs, z) / integrate.trapezoid(self.fs, z))
        return integrate.quad(lambda t: t * t * float(self.pdf(t)), lo, hi, limit=settings.quad_limit)[0]

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == DensityKind.GAUSSIAN:
            return rng.normal(self.mean, math.sqrt(self.variance), n) + self.shift
        if self.kind == DensityKind.CHI_SQUARE_RESIDUAL:
            return rng.chisquare(1.0, n) - 1.0 + self.shift
        if self.kind == DensityKind.TABULATED:
            return np.interp(rng.random(n), self._tabulated_cdf(), self.xs) + self.shift
        raise NotImplementedError("analytic densities cannot be sampled")

    def _tabulated_cdf(self) -> np.ndarray:
        steps = 0.5 * (self.fs[1:] + self.fs[:-1]) * np.diff(self.xs)
        cdf = np.concatenate([[0.0], np.cumsum(steps)])
        return cdf / cdf[-1]


class MixtureComponent(FrozenModel):
    weight: float = Field(ge=0.0, lt=1.0)
    shift: float


class MixtureSpec(FrozenModel):
    """
    (1 - sum eps_i) f0(x) + sum eps_i f0(x - h_i).
    Components are kept sorted by decreasing weight; k = 0 is the homogeneous
    hypothesis.
    """
    base: Density1D
    components: Tuple[MixtureComponent, ...] = ()

    @field_validator("components")
    @classmethod
    def _sort_components(cls, value):
        if sum(c.weight for c in value) >= 1.0:
            raise ValueError("mixture weights must sum to less than one")
        return tuple(sorted(value, key=lambda c: -c.weight))

    @classmethod
    def binary(cls, eps: float, h: float, base: Optional[Density1D] = None) -> "MixtureSpec":
        base = base or Density1D.gaussian()
        components = (MixtureComponent(weight=eps, shift=h),) if eps > 0 else ()
        return cls(base=base, components=components)

    @property
    def k(self) -> int:
        return len(self.components)

    @property
    def is_homogeneous(self) -> bool:
        return all(c.weight == 0 for c in self.components)

    @property
    def base_weight(self) -> float:
        return 1.0 - sum(c.weight for c in self.components)

    @property
    def eps(self) -> float:
        return self.components[0].weight if self.components else 0.0

    @property
    def h(self) -> float:
        return self.components[0].shift if self.components else 0.0

    def parts(self):
        """(weight, density) pairs including the base"""
        yield self.base_weight, self.base
        for c in self.components:
            yield c.weight, self.base.shifted(c.shift)

    def support(self) -> Tuple[float, float]:
        lows, highs = zip(*(d.support() for _, d in self.parts()))
        return min(lows), max(highs)

    def breakpoints(self) -> Tuple[float, ...]:
        return tuple(sorted({p for _, d in self.parts() for p in d.breakpoints()}))

    def with_components(self, components) -> "MixtureSpec":
        return MixtureSpec(base=self.base, components=tuple(components))
