"""Box domains, grid functions and modulars by composite midpoint quadrature."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidParameter
from .expr import compile_expr
from .phi import PhiFunction

__all__ = [
    "Domain",
    "GridFunction",
    "ModularValue",
    "sample",
    "modular",
    "default_refinements",
    "read_csv",
]

DIVERGENCE_FACTOR = 1.05
CAUCHY_RTOL = 2e-3
SATURATION_RATIO = 0.9


@dataclass(frozen=True)
class Domain:
    """Open axis-aligned box in dimension 1 or 2 with a uniform cell grid."""

    bounds: tuple
    resolution: int = 1000

    def __post_init__(self):
        b = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if len(b) not in (1, 2):
            raise InvalidParameter("only dimensions 1 and 2 are supported")
        for lo, hi in b:
            if not lo < hi:
                raise InvalidParameter(f"empty interval ({lo}, {hi})")
        if int(self.resolution) < 2:
            raise InvalidParameter("resolution must be at least 2")
        object.__setattr__(self, "bounds", b)
        object.__setattr__(self, "resolution", int(self.resolution))

    @classmethod
    def interval(cls, lo: float, hi: float, resolution: int = 1000) -> "Domain":
        return cls(((lo, hi),), resolution)

    @property
    def dimension(self) -> int:
        return len(self.bounds)

    @property
    def measure(self) -> float:
        return float(np.prod([hi - lo for lo, hi in self.bounds]))

    def cell_widths(self, resolution: Optional[int] = None) -> np.ndarray:
        n = resolution or self.resolution
        return np.array([(hi - lo) / n for lo, hi in self.bounds])

    def cell_volume(self, resolution: Optional[int] = None) -> float:
        return float(np.prod(self.cell_widths(resolution)))

    def centers(self, resolution: Optional[int] = None) -> np.ndarray:
        """Cell centers: shape (n,) in 1-D, (n*n, 2) in 2-D (row-major)."""
        n = resolution or self.resolution
        axes = [lo + (hi - lo) * (np.arange(n) + 0.5) / n for lo, hi in self.bounds]
        if self.dimension == 1:
            return axes[0]
        gx, gy = np.meshgrid(*axes, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel()], axis=1)

    def _as_points(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return pts.reshape(-1, 1) if pts.ndim <= 1 else pts

    def contains(self, pts) -> np.ndarray:
        p = self._as_points(pts)
        inside = np.ones(p.shape[0], dtype=bool)
        for k, (lo, hi) in enumerate(self.bounds):
            inside &= (p[:, k] > lo) & (p[:, k] < hi)
        return inside

    def dist_to_boundary(self, pts) -> np.ndarray:
        """Distance to the complement of the box (0 outside)."""
        p = self._as_points(pts)
        d = np.full(p.shape[0], np.inf)
        for k, (lo, hi) in enumerate(self.bounds):
            d = np.minimum(d, np.minimum(p[:, k] - lo, hi - p[:, k]))
        return np.maximum(d, 0.0)

    def cell_index(self, pts) -> np.ndarray:
        """Flat index of the cell containing each point (-1 outside)."""
        p = self._as_points(pts)
        n = self.resolution
        idx = np.zeros(p.shape[0], dtype=np.int64)
        inside = self.contains(pts)
        for k, (lo, hi) in enumerate(self.bounds):
            i = np.floor((p[:, k] - lo) / (hi - lo) * n).astype(np.int64)
            i = np.clip(i, 0, n - 1)
            idx = idx * n + i
        return np.where(inside, idx, -1)

    def with_resolution(self, resolution: int) -> "Domain":
        return Domain(self.bounds, resolution)

    def describe(self) -> dict:
        return {"bounds": [list(b) for b in self.bounds], "resolution": self.resolution}


def default_refinements(domain: Domain) -> int:
    """Six doublings in 1-D; three in 2-D where every level costs 4x."""
    return 6 if domain.dimension == 1 else 3


def _union_box(a, b):
    if a is None or b is None:
        return None
    return tuple((min(x[0], y[0]), max(x[1], y[1])) for x, y in zip(a, b))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples at cell centers of ``domain`` plus an optional analytic closure.

    The closure (points -> values) is used for refined quadrature and for
    operators that need values off the grid.
    """

    domain: Domain
    samples: np.ndarray
    analytic: Optional[Callable] = None
    support_hint: Optional[tuple] = None
    notes: tuple = ()
    _levels: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        expected = self.domain.resolution ** self.domain.dimension
        if s.shape != (expected,):
            raise InvalidParameter(f"expected {expected} samples, got shape {s.shape}")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        if self.support_hint is not None:
            object.__setattr__(self, "support_hint",
                               tuple((float(lo), float(hi)) for lo, hi in self.support_hint))

    def __call__(self, pts) -> np.ndarray:
        """Values at arbitrary points: the closure if present, else the
        containing cell's sample; zero outside the domain."""
        pts = np.asarray(pts, dtype=float)
        inside = self.domain.contains(pts)
        if self.analytic is not None:
            with np.errstate(all="ignore"):
                vals = np.broadcast_to(np.asarray(self.analytic(pts), dtype=float),
                                       inside.shape)
            return np.where(inside, vals, 0.0)
        idx = self.domain.cell_index(pts)
        return np.where(idx >= 0, self.samples[np.maximum(idx, 0)], 0.0)

    def level(self, k: int):
        """(points, values, cell volume) on the grid refined k times."""
        if k == 0 and self.analytic is None:
            return self.domain.centers(), self.samples, self.domain.cell_volume()
        if self.analytic is None:
            raise ValueError("refinement needs an analytic closure")
        if k not in self._levels:
            res = self.domain.resolution * 2 ** k
            pts = self.domain.centers(res)
            vals = self(pts) if k else self.samples
            self._levels[k] = (pts, np.asarray(vals), self.domain.cell_volume(res))
        return self._levels[k]

    def max_level(self, refinements: int) -> int:
        return refinements if self.analytic is not None else 0

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.samples))) if self.samples.size else 0.0

    def is_zero(self, refinements: int = 0) -> bool:
        for k in range(self.max_level(refinements) + 1):
            if np.any(self.level(k)[1] != 0):
                return False
        return True

    # arithmetic -------------------------------------------------------------

    def _combine(self, other, op, support):
        if isinstance(other, GridFunction):
            if other.domain != self.domain:
                raise ValueError("grid functions live on different domains")
            samples = op(self.samples, other.samples)
            fa, fb = self.analytic, other.analytic
            analytic = (lambda p: op(fa(p), fb(p))) if fa and fb else None
            return GridFunction(self.domain, samples, analytic,
                                support(self.support_hint, other.support_hint))
        c = float(other)
        fa = self.analytic
        analytic = (lambda p: op(fa(p), c)) if fa else None
        return GridFunction(self.domain, op(self.samples, c), analytic, self.support_hint)

    def __add__(self, other):
        return self._combine(other, np.add, _union_box)

    def __sub__(self, other):
        return self._combine(other, np.subtract, _union_box)

    def __mul__(self, c):
        return self._combine(c, np.multiply, _union_box)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1.0 / float(c))

    def __neg__(self):
        return self * -1.0

    def abs(self) -> "GridFunction":
        fa = self.analytic
        return GridFunction(self.domain, np.abs(self.samples),
                            (lambda p: np.abs(fa(p))) if fa else None, self.support_hint)

    # io -----------------------------------------------------------------------

    def to_csv(self, path) -> None:
        pts = self.domain.centers()
        names = ["x"] if self.domain.dimension == 1 else ["x", "y"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names + ["value"])
            rows = pts.reshape(len(self.samples), -1)
            for p, v in zip(rows, self.samples):
                w.writerow([repr(float(c)) for c in p] + [repr(float(v))])


def read_csv(path) -> GridFunction:
    """Load a grid function written by :meth:`GridFunction.to_csv`.

    The domain is recovered from the uniform cell centers.
    """
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        data = np.array([[float(v) for v in row] for row in r])
    dim = len(header) - 1
    bounds = []
    for k in range(dim):
        c = np.unique(data[:, k])
        h = (c[-1] - c[0]) / (len(c) - 1)
        bounds.append((c[0] - h / 2, c[-1] + h / 2))
    res = len(np.unique(data[:, 0]))
    return GridFunction(Domain(tuple(bounds), res), data[:, -1])


def sample(expr, domain: Domain, support_hint=None, allow_nonfinite: bool = False) -> GridFunction:
    """Sample an expression string or callable at the cell centers."""
    if isinstance(expr, (str, int, float)):
        fn = compile_expr(expr)
    elif callable(expr):
        fn = expr
    else:
        raise TypeError(f"cannot sample {expr!r}")
    pts = domain.centers()
    with np.errstate(all="ignore"):
        vals = np.broadcast_to(np.asarray(fn(pts), dtype=float), (pts.shape[0],)).copy()
    bad = ~np.isfinite(vals)
    if bad.any() and not allow_nonfinite:
        k = int(np.flatnonzero(bad)[0])
        raise InvalidParameter("expression is not finite at a cell center",
                               pts[k] if pts.ndim == 1 else tuple(pts[k]))
    return GridFunction(domain, vals, fn, support_hint)


@dataclass(frozen=True)
class ModularValue:
    value: float
    divergent: bool
    refinement_trace: tuple
    lam: float
    converged: bool = True
    overflow_point: Optional[object] = None

    @property
    def finite_value(self) -> float:
        """The value, or +inf when divergence was detected."""
        return math.inf if self.divergent else self.value


def _detect_divergence(trace, factor):
    if len(trace) < 4:
        return False
    last = trace[-4:]
    return all(b > factor * a and b > 0 for a, b in zip(last[:-1], last[1:]))


def _unsaturated(trace, keep=SATURATION_RATIO):
    """Last three increments positive and not decaying geometrically."""
    if len(trace) < 4:
        return False
    inc = [b - a for a, b in zip(trace[-4:-1], trace[-3:])]
    return all(d > 0 for d in inc) and all(b >= keep * a for a, b in zip(inc, inc[1:]))


def modular(phi: PhiFunction, u: GridFunction, lam: float = 1.0,
            refinements: Optional[int] = None, *, factor: float = DIVERGENCE_FACTOR,
            cauchy_rtol: float = CAUCHY_RTOL) -> ModularValue:
    """∫_Ω M(x, |u(x)|/λ) dx by the composite midpoint rule.

    Analytic functions are re-sampled at ``refinements`` doublings of the
    base resolution; sample-only functions use the base level.  The result
    is divergent on overflow, when each of the last three refinements grew
    by more than ``factor``, or when the trace fails the Cauchy test while
    its last increments stay positive without geometric decay.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if refinements is None:
        refinements = default_refinements(u.domain)
    top = u.max_level(refinements)
    trace = []
    for k in range(top + 1):
        pts, vals, vol = u.level(k)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            m = np.broadcast_to(phi.evaluate(pts, np.abs(vals) / lam), vals.shape)
        bad = ~np.isfinite(m)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            pt = pts[i] if pts.ndim == 1 else tuple(pts[i])
            trace.append(math.inf)
            return ModularValue(math.inf, True, tuple(trace), lam, False, pt)
        trace.append(math.fsum(m) * vol)
    if len(trace) >= 2:
        converged = (abs(trace[-1] - trace[-2]) <= cauchy_rtol * max(abs(trace[-1]), 1e-300)
                     or trace[-1] == trace[-2])
    else:
        converged = True
    # an increasing, non-Cauchy trace whose increments do not shrink is divergent too
    divergent = _detect_divergence(trace, factor) or (not converged and _unsaturated(trace))
    return ModularValue(trace[-1], divergent, tuple(trace), lam,
                        converged and not divergent)
