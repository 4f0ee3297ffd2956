"""Prior densities on closed intervals, hazard transforms and quadrature.

Densities are immutable. Their methods (``pdf``, ``cdf``, ``ppf``,
``partial_mean``) extend the density by zero outside the support so that the
solver can evaluate expressions such as ``F(u + v - u_top)`` without clipping
at every call site. The module-level functions with the same names are the
checked public surface and raise on out-of-support arguments.
"""
from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from statistics import NormalDist
from typing import Callable, ClassVar, Sequence

from .errors import (
    DegenerateInput,
    Nonconvergent,
    OutOfRange,
    OutOfSupport,
    ZeroDensity,
)

DENSITY_FLOOR = 1e-12
REGULARITY_SLACK = 1e-7

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_STD_NORMAL = NormalDist()


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-9
    max_subdivisions: int = 60

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError(f"abs_tol must be positive, got {self.abs_tol}")
        if self.max_subdivisions < 1:
            raise ValueError(f"max_subdivisions must be >= 1, got {self.max_subdivisions}")


DEFAULT_QUADRATURE = QuadratureConfig()


@dataclass(frozen=True)
class DensitySpec:
    """Base class: a positive continuous density on ``[support_lo, support_hi]``."""

    support_lo: float
    support_hi: float

    kind: ClassVar[str] = "abstract"

    def __post_init__(self):
        lo, hi = float(self.support_lo), float(self.support_hi)
        if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
            raise ValueError(f"support must satisfy lo < hi, got [{lo}, {hi}]")
        object.__setattr__(self, "support_lo", lo)
        object.__setattr__(self, "support_hi", hi)

    def pdf(self, x: float) -> float:
        raise NotImplementedError

    def cdf(self, x: float) -> float:
        raise NotImplementedError

    def ppf(self, p: float) -> float:
        """Quantile function; ``p`` is clamped to [0, 1]."""
        raise NotImplementedError

    def partial_mean(self, x: float) -> float:
        """First partial moment ``int_lo^x t f(t) dt`` (clamped to the support)."""
        raise NotImplementedError

    def contains(self, x: float) -> bool:
        return self.support_lo <= x <= self.support_hi

    def to_string(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class Uniform(DensitySpec):
    kind: ClassVar[str] = "uniform"

    def pdf(self, x):
        if x < self.support_lo or x > self.support_hi:
            return 0.0
        return 1.0 / (self.support_hi - self.support_lo)

    def cdf(self, x):
        if x <= self.support_lo:
            return 0.0
        if x >= self.support_hi:
            return 1.0
        return (x - self.support_lo) / (self.support_hi - self.support_lo)

    def ppf(self, p):
        p = min(max(p, 0.0), 1.0)
        if p == 1.0:
            return self.support_hi
        return self.support_lo + p * (self.support_hi - self.support_lo)

    def partial_mean(self, x):
        lo, hi = self.support_lo, self.support_hi
        x = min(max(x, lo), hi)
        return (x * x - lo * lo) / (2.0 * (hi - lo))

    def to_string(self):
        return f"uniform:{self.support_lo:.12g},{self.support_hi:.12g}"


@dataclass(frozen=True)
class TruncatedGaussian(DensitySpec):
    """Normal(mu, sigma) restricted to the support and renormalized."""

    mu: float = 0.0
    sigma: float = 1.0
    _cdf_lo: float = field(init=False, repr=False, compare=False)
    _sf_lo: float = field(init=False, repr=False, compare=False)
    _sf_hi: float = field(init=False, repr=False, compare=False)
    _pdf_lo: float = field(init=False, repr=False, compare=False)
    _mass: float = field(init=False, repr=False, compare=False)

    kind: ClassVar[str] = "gauss"

    def __post_init__(self):
        super().__post_init__()
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        a = (self.support_lo - self.mu) / self.sigma
        b = (self.support_hi - self.mu) / self.sigma
        object.__setattr__(self, "_cdf_lo", _norm_cdf(a))
        object.__setattr__(self, "_sf_lo", _norm_sf(a))
        object.__setattr__(self, "_sf_hi", _norm_sf(b))
        object.__setattr__(self, "_pdf_lo", _norm_pdf(a))
        mass = self._head(b)
        # below this the tail values are subnormal and lose their significant digits
        if not mass > 1e-290:
            raise DegenerateInput(f"truncation interval carries too little normal mass ({mass:.3g})")
        object.__setattr__(self, "_mass", mass)

    def _head(self, z):
        """Normal mass between the lower edge and standardized point z."""
        # subtract lower-tail values unless the whole window sits above the mean,
        # so small masses are never the difference of two numbers near one
        if z <= 0 or self._sf_lo > 0.5:
            return _norm_cdf(z) - self._cdf_lo
        return self._sf_lo - _norm_sf(z)

    def pdf(self, x):
        if x < self.support_lo or x > self.support_hi:
            return 0.0
        z = (x - self.mu) / self.sigma
        return _INV_SQRT_2PI * math.exp(-0.5 * z * z) / (self.sigma * self._mass)

    def cdf(self, x):
        if x <= self.support_lo:
            return 0.0
        if x >= self.support_hi:
            return 1.0
        c = self._head((x - self.mu) / self.sigma) / self._mass
        return min(max(c, 0.0), 1.0)

    def ppf(self, p):
        p = min(max(p, 0.0), 1.0)
        if p == 0.0:
            return self.support_lo
        if p == 1.0:
            return self.support_hi
        lower = self._cdf_lo + p * self._mass
        if lower <= 0.5:
            z = _STD_NORMAL.inv_cdf(max(lower, 5e-324))
        else:
            # invert through the upper tail: sf(z) = (1 - p) mass + sf(b)
            z = -_STD_NORMAL.inv_cdf(max((1.0 - p) * self._mass + self._sf_hi, 5e-324))
        return min(max(self.mu + self.sigma * z, self.support_lo), self.support_hi)

    def partial_mean(self, x):
        if x <= self.support_lo:
            return 0.0
        x = min(x, self.support_hi)
        z = (x - self.mu) / self.sigma
        return (self.mu * self._head(z) - self.sigma * (_norm_pdf(z) - self._pdf_lo)) / self._mass

    def to_string(self):
        return (
            f"gauss:{self.support_lo:.12g},{self.support_hi:.12g},"
            f"{self.mu:.12g},{self.sigma:.12g}"
        )


@dataclass(frozen=True)
class Tabulated(DensitySpec):
    """Piecewise-linear density through ``(xs[i], ps[i])``, renormalized to unit mass.

    ``support_lo``/``support_hi`` are taken from the first and last abscissa;
    build instances with :meth:`from_points` or :func:`load_table`.
    """

    xs: tuple = ()
    ps: tuple = ()
    source: str | None = field(default=None, compare=False)
    _cum: tuple = field(init=False, repr=False, compare=False)
    _cum_mean: tuple = field(init=False, repr=False, compare=False)

    kind: ClassVar[str] = "table"

    def __post_init__(self):
        super().__post_init__()
        xs = tuple(float(x) for x in self.xs)
        ps = tuple(float(p) for p in self.ps)
        if len(xs) < 2 or len(xs) != len(ps):
            raise ValueError("a table needs at least two (x, pdf) rows of equal length")
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("table abscissae must be strictly increasing")
        if any(not (math.isfinite(p) and p > 0) for p in ps):
            raise ValueError("table ordinates must be positive and finite")
        if xs[0] != self.support_lo or xs[-1] != self.support_hi:
            raise ValueError("support must coincide with the first and last abscissa")
        total = sum(0.5 * (p0 + p1) * (x1 - x0) for x0, x1, p0, p1 in zip(xs, xs[1:], ps, ps[1:]))
        ps = tuple(p / total for p in ps)
        cum, cum_mean = [0.0], [0.0]
        for i in range(len(xs) - 1):
            h = xs[i + 1] - xs[i]
            cum.append(cum[-1] + self._cell_mass(i, h, ps, xs))
            cum_mean.append(cum_mean[-1] + self._cell_mean(i, h, ps, xs))
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ps", ps)
        object.__setattr__(self, "_cum", tuple(cum))
        object.__setattr__(self, "_cum_mean", tuple(cum_mean))

    @classmethod
    def from_points(cls, xs: Sequence[float], ps: Sequence[float], source: str | None = None):
        return cls(float(xs[0]), float(xs[-1]), tuple(xs), tuple(ps), source)

    @staticmethod
    def _slope(i, xs, ps):
        return (ps[i + 1] - ps[i]) / (xs[i + 1] - xs[i])

    @classmethod
    def _cell_mass(cls, i, h, ps, xs):
        return ps[i] * h + 0.5 * cls._slope(i, xs, ps) * h * h

    @classmethod
    def _cell_mean(cls, i, h, ps, xs):
        s = cls._slope(i, xs, ps)
        x0, p0 = xs[i], ps[i]
        return x0 * p0 * h + 0.5 * (x0 * s + p0) * h * h + s * h ** 3 / 3.0

    def _cell(self, x):
        return min(bisect.bisect_right(self.xs, x) - 1, len(self.xs) - 2)

    def pdf(self, x):
        if x < self.support_lo or x > self.support_hi:
            return 0.0
        i = self._cell(x)
        return self.ps[i] + self._slope(i, self.xs, self.ps) * (x - self.xs[i])

    def cdf(self, x):
        if x <= self.support_lo:
            return 0.0
        if x >= self.support_hi:
            return 1.0
        i = self._cell(x)
        c = self._cum[i] + self._cell_mass(i, x - self.xs[i], self.ps, self.xs)
        return min(max(c, 0.0), 1.0)

    def ppf(self, p):
        p = min(max(p, 0.0), 1.0)
        if p == 0.0:
            return self.support_lo
        if p == 1.0:
            return self.support_hi
        i = min(bisect.bisect_right(self._cum, p) - 1, len(self.xs) - 2)
        m = p - self._cum[i]
        p0, s = self.ps[i], self._slope(i, self.xs, self.ps)
        # stable root of s h^2 / 2 + p0 h - m = 0
        h = 2.0 * m / (p0 + math.sqrt(max(p0 * p0 + 2.0 * s * m, 0.0)))
        return min(self.xs[i] + h, self.xs[i + 1])

    def partial_mean(self, x):
        if x <= self.support_lo:
            return 0.0
        if x >= self.support_hi:
            return self._cum_mean[-1]
        i = self._cell(x)
        return self._cum_mean[i] + self._cell_mean(i, x - self.xs[i], self.ps, self.xs)

    def to_string(self):
        if self.source is None:
            raise ValueError("tabulated density has no source path to serialize")
        return f"table:{self.source}"


def _norm_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / _SQRT2)


def _norm_sf(z: float) -> float:
    return 0.5 * math.erfc(z / _SQRT2)


def _norm_pdf(z: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * z * z)


# ---------------------------------------------------------------------------
# checked operations


def _require_support(dist: DensitySpec, x: float) -> None:
    if not dist.contains(x):
        raise OutOfSupport(
            f"x={x!r} outside support [{dist.support_lo}, {dist.support_hi}]"
        )


def pdf(dist: DensitySpec, x: float) -> float:
    _require_support(dist, x)
    return dist.pdf(x)


def cdf(dist: DensitySpec, x: float) -> float:
    _require_support(dist, x)
    return dist.cdf(x)


def inverse_cdf(dist: DensitySpec, p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise OutOfRange(f"probability {p!r} outside [0, 1]")
    return dist.ppf(p)


def survival_mass_d(g: DensitySpec, u: float) -> float:
    """``d(u) = 1 - G(u) - u g(u)``: the per-type contribution to expected payments."""
    _require_support(g, u)
    return 1.0 - g.cdf(u) - u * g.pdf(u)


def hazard_residual_r(g: DensitySpec, u: float) -> float:
    """``r(u) = (1 - G(u)) / g(u) - u``, the virtual-value style residual."""
    _require_support(g, u)
    density = g.pdf(u)
    if density < DENSITY_FLOOR:
        raise ZeroDensity(f"g({u!r}) = {density!r} below floor {DENSITY_FLOOR}")
    return (1.0 - g.cdf(u)) / density - u


@dataclass(frozen=True)
class RegularityReport:
    ok: bool
    first_violation: tuple[float, float] | None = None

    def __bool__(self):
        return self.ok


def check_regularity(g: DensitySpec, n_grid: int = 200) -> RegularityReport:
    """Check that ``r`` is non-increasing on a uniform grid over the support.

    An increase of at most ``REGULARITY_SLACK`` between neighbours is tolerated.
    On failure the first offending pair ``(u_i, u_{i+1})`` is reported.
    """
    if n_grid < 2:
        raise ValueError("n_grid must be at least 2")
    lo, hi = g.support_lo, g.support_hi
    step = (hi - lo) / (n_grid - 1)
    prev_u, prev_r = None, None
    for i in range(n_grid):
        u = hi if i == n_grid - 1 else lo + i * step
        r = hazard_residual_r(g, u)
        if prev_r is not None and r > prev_r + REGULARITY_SLACK:
            return RegularityReport(False, (prev_u, u))
        prev_u, prev_r = u, r
    return RegularityReport(True)


# ---------------------------------------------------------------------------
# quadrature

_MIN_DEPTH = 3


def integrate(
    fn: Callable[[float], float],
    a: float,
    b: float,
    cfg: QuadratureConfig | None = None,
    breaks: Sequence[float] = (),
) -> float:
    """Adaptive Simpson quadrature of ``fn`` over ``[a, b]``.

    ``breaks`` lists points where ``fn`` has kinks or jumps; the interval is
    split there and the tolerance shared in proportion to piece length.
    ``max_subdivisions`` bounds the bisection depth of any panel.
    """
    cfg = cfg or DEFAULT_QUADRATURE
    if a > b:
        raise ValueError(f"integration bounds out of order: {a} > {b}")
    if a == b:
        return 0.0
    cuts = sorted({p for p in breaks if a < p < b})
    points = [a, *cuts, b]
    span = b - a
    total = 0.0
    for lo, hi in zip(points, points[1:]):
        total += _simpson_piece(fn, lo, hi, cfg.abs_tol * (hi - lo) / span, cfg.max_subdivisions)
    return total


def _simpson_piece(fn, a, b, tol, max_depth):
    fa, fb = fn(a), fn(b)
    m = 0.5 * (a + b)
    fm = fn(m)
    whole = (b - a) * (fa + 4.0 * fm + fb) / 6.0
    return _simpson_refine(fn, a, b, fa, fm, fb, whole, tol, 0, max_depth)


def _simpson_refine(fn, a, b, fa, fm, fb, whole, tol, depth, max_depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = fn(lm), fn(rm)
    left = (m - a) * (fa + 4.0 * flm + fm) / 6.0
    right = (b - m) * (fm + 4.0 * frm + fb) / 6.0
    delta = left + right - whole
    if depth >= _MIN_DEPTH and abs(delta) <= 15.0 * tol:
        return left + right + delta / 15.0
    if depth + 1 >= max_depth:
        if abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0
        raise Nonconvergent(
            f"adaptive Simpson hit depth {max_depth} on [{a}, {b}] (error estimate {abs(delta) / 15:.3g})"
        )
    half = 0.5 * tol
    return _simpson_refine(fn, a, m, fa, flm, fm, left, half, depth + 1, max_depth) + _simpson_refine(
        fn, m, b, fm, frm, fb, right, half, depth + 1, max_depth
    )


# ---------------------------------------------------------------------------
# string syntax


def parse_density(text: str, base_dir: str | Path | None = None) -> DensitySpec:
    """Parse ``uniform:lo,hi``, ``gauss:lo,hi,mu,sigma`` or ``table:path``."""
    kind, sep, rest = text.strip().partition(":")
    if not sep:
        raise ValueError(f"density spec {text!r} lacks a 'kind:' prefix")
    kind = kind.strip().lower()
    if kind == "table":
        path = Path(rest.strip())
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return load_table(path, source=rest.strip())
    try:
        nums = [float(tok) for tok in rest.split(",")]
    except ValueError as exc:
        raise ValueError(f"density spec {text!r}: {exc}") from None
    if kind == "uniform":
        if len(nums) != 2:
            raise ValueError(f"uniform expects 2 numbers, got {len(nums)}")
        return Uniform(*nums)
    if kind in ("gauss", "gaussian"):
        if len(nums) != 4:
            raise ValueError(f"gauss expects 4 numbers, got {len(nums)}")
        return TruncatedGaussian(*nums)
    raise ValueError(f"unknown density kind {kind!r}")


def load_table(path: str | Path, source: str | None = None) -> Tabulated:
    xs, ps = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != ["x", "pdf"]:
            raise ValueError(f"{path}: expected header 'x,pdf'")
        for row in reader:
            row = {k.strip(): v for k, v in row.items()}
            xs.append(float(row["x"]))
            ps.append(float(row["pdf"]))
    return Tabulated.from_points(xs, ps, source=str(path) if source is None else source)
