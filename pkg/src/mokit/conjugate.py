"""Complementary function, generalized inverse and Young inequality.

All searches run elementwise over numpy arrays so that a whole grid of
(x, s) pairs is handled in one pass; the scalar helpers below wrap them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import OutOfRange, PhiOverflow, UnboundedConjugate
from .phi import PhiFunction

__all__ = [
    "ConjugateResult",
    "conjugate_values",
    "conjugate_eval",
    "conjugate_phi",
    "conjugate_density",
    "density_inverse_values",
    "inverse_eval",
    "inverse_values",
    "young_gap",
]

GOLDEN = (math.sqrt(5) - 1) / 2
SEARCH_TOL = 1e-10
GROWTH_CAP = 64          # doublings of the conjugate bracket (2^64 scale)
INVERSE_GROWTH_CAP = 1024
BISECT_TOL = 1e-13


@dataclass(frozen=True)
class ConjugateResult:
    value: float
    argmax_t: float
    search_interval: tuple
    iterations: int

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.value)


def _norm_points(x):
    x = np.asarray(x, dtype=float)
    return x.reshape(()) if x.ndim == 1 and x.size == 1 else x


def _take(x, idx):
    if x.ndim == 0 or (x.ndim == 2 and x.shape[0] == 1):
        return x
    return x[idx]


def conjugate_values(phi: PhiFunction, x, s, tol: float = SEARCH_TOL,
                     full: bool = False):
    """Vectorized sup_{t>=0} {s t - M(x, t)}.

    The bracket [lo, hi] starts at [0, 2] and doubles while the objective
    still increases at the right end; golden-section search then narrows it.
    Elements whose bracket never turns within ``GROWTH_CAP`` doublings get
    ``+inf``.  With ``full=True`` also returns argmax, bracket ends and
    per-element iteration counts.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    x = _norm_points(x)
    n = s.size
    if x.ndim == 1 and x.size != n:
        raise ValueError("x and s must have matching lengths")
    if x.ndim == 2 and x.shape[0] not in (1, n):
        raise ValueError("x and s must have matching lengths")

    bound = phi.bind(x)

    def f(t, idx=None):
        ss = s if idx is None else s[idx]
        with np.errstate(over="ignore", invalid="ignore"):
            m = np.broadcast_to(bound(t, idx), np.shape(t))
            val = ss * t - m
        return np.where(np.isnan(val), -np.inf, val)

    lo = np.zeros(n)
    mid = np.ones(n)
    hi = np.full(n, 2.0)
    fmid = f(mid)
    fhi = f(hi)
    growing = fhi > fmid
    iters = np.zeros(n, dtype=int)
    for _ in range(GROWTH_CAP):
        if not growing.any():
            break
        idx = np.flatnonzero(growing)
        lo[idx], mid[idx], fmid[idx] = mid[idx], hi[idx], fhi[idx]
        hi[idx] = 2 * hi[idx]
        fhi[idx] = f(hi[idx], idx)
        iters[idx] += 1
        growing[idx] = fhi[idx] > fmid[idx]
    unbounded = growing

    a, b = lo.copy(), hi.copy()
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    active = ~unbounded
    for _ in range(400):
        width = b - a
        done = width <= tol * (1 + np.abs(0.5 * (a + b)))
        active &= ~done
        if not active.any():
            break
        iters[active] += 1
        left = fc >= fd  # maximum in [a, d]
        na = np.where(left, a, c)
        nb = np.where(left, d, b)
        new = np.where(left, nb - GOLDEN * (nb - na), na + GOLDEN * (nb - na))
        fnew = f(new)
        nc = np.where(left, new, d)
        nfc = np.where(left, fnew, fd)
        nd = np.where(left, c, new)
        nfd = np.where(left, fc, fnew)
        a = np.where(active, na, a)
        b = np.where(active, nb, b)
        c = np.where(active, nc, c)
        d = np.where(active, nd, d)
        fc = np.where(active, nfc, fc)
        fd = np.where(active, nfd, fd)

    best_t = np.where(fc >= fd, c, d)
    best = np.maximum(fc, fd)
    fmid_final = np.where(fmid > best, fmid, best)
    best_t = np.where(fmid > best, mid, best_t)
    value = np.where(fmid_final > 0, fmid_final, 0.0)
    best_t = np.where(fmid_final > 0, best_t, 0.0)
    value = np.where(unbounded, np.inf, value)
    if full:
        return value, best_t, lo, hi, iters
    return value


def conjugate_eval(phi: PhiFunction, x, s: float) -> ConjugateResult:
    """Complementary function value at a single (x, s).

    Raises :class:`UnboundedConjugate` if the maximizer is not bracketed
    within the growth cap.
    """
    if s < 0:
        raise ValueError("s must be nonnegative")
    value, t, lo, hi, it = conjugate_values(phi, x, [s], full=True)
    if math.isinf(value[0]):
        raise UnboundedConjugate(f"sup_t (st - M(x,t)) not bracketed for s={s}")
    return ConjugateResult(float(value[0]), float(t[0]), (float(lo[0]), float(hi[0])),
                           int(it[0]))


def conjugate_phi(phi: PhiFunction) -> PhiFunction:
    """The complementary function as a (custom) Φ-function, evaluated on demand."""

    def mbar(x, s):
        s = np.asarray(s, dtype=float)
        shape = np.broadcast_shapes(s.shape, _leading_shape(x))
        sb = np.broadcast_to(s, shape).ravel()
        xb = _broadcast_points(x, shape)
        return conjugate_values(phi, xb, sb).reshape(shape)

    desc = {"expr": f"conjugate of {phi!r}"}
    return PhiFunction("custom", custom=mbar, params=desc)


def _leading_shape(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        return (x.shape[0],) if x.shape[0] != 1 else ()
    return x.shape


def _broadcast_points(x, shape):
    x = np.asarray(x, dtype=float)
    n = int(np.prod(shape)) if shape else 1
    if x.ndim == 2:
        return x if x.shape[0] == n else np.repeat(x, n, axis=0)
    return np.broadcast_to(x, shape).ravel()


def _bracket_and_bisect(g, target, n, cap, tol=BISECT_TOL):
    """For nondecreasing g, find the boundary of {v >= 0 : g(v) <= target}.

    Returns (lo, hi, unbracketed) with g(lo) <= target < g(hi)
    (comparison supplied through ``g`` returning a boolean 'above').
    """
    lo = np.zeros(n)
    hi = np.ones(n)
    above = g(hi, None)
    for _ in range(cap):
        if above.all():
            break
        idx = np.flatnonzero(~above)
        lo[idx] = hi[idx]
        hi[idx] = 2 * hi[idx]
        above[idx] = g(hi[idx], idx)
    unbracketed = ~above
    for _ in range(200):
        width = hi - lo
        active = (width > tol * hi) & ~unbracketed
        if not active.any():
            break
        idx = np.flatnonzero(active)
        m = 0.5 * (lo[idx] + hi[idx])
        up = g(m, idx)
        hi[idx] = np.where(up, m, hi[idx])
        lo[idx] = np.where(up, lo[idx], m)
    return lo, hi, unbracketed


def density_inverse_values(phi: PhiFunction, x, s) -> np.ndarray:
    """Vectorized a*(x, s) = sup{v : a(x, v) <= s}; +inf if never exceeded."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    x = _norm_points(x)

    def above(v, idx):
        xs = x if idx is None else _take(x, idx)
        ss = s if idx is None else s[idx]
        a = np.broadcast_to(phi.density(xs, v), np.shape(v))
        return np.where(np.isnan(a), True, a > ss)

    lo, hi, unb = _bracket_and_bisect(above, s, s.size, INVERSE_GROWTH_CAP)
    return np.where(unb, np.inf, lo)


def conjugate_density(phi: PhiFunction, x, s: float) -> float:
    """Generalized right inverse a*(x, s) of the density by bisection."""
    if s < 0:
        raise ValueError("s must be nonnegative")
    v = density_inverse_values(phi, x, [s])[0]
    if math.isinf(v) or math.isnan(v):
        raise PhiOverflow(f"a*(x, {s}) could not be bracketed")
    return float(v)


def inverse_values(phi: PhiFunction, x, t) -> np.ndarray:
    """Vectorized M^{-1}(x, t) = inf{s >= 0 : M(x, s) >= t}; nan if unbracketed."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    x = _norm_points(x)

    bound = phi.bind(x)

    def reaches(v, idx):
        tt = t if idx is None else t[idx]
        m = np.broadcast_to(bound(v, idx), np.shape(v))
        return m >= tt

    lo, hi, unb = _bracket_and_bisect(reaches, t, t.size, INVERSE_GROWTH_CAP)
    out = np.where(t <= 0, 0.0, hi)
    return np.where(unb | np.isinf(t), np.nan, out)


def inverse_eval(phi: PhiFunction, x, t: float) -> float:
    """Generalized inverse of M(x, ·); returns the left end of flat preimages."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    v = inverse_values(phi, x, [t])[0]
    if math.isnan(v):
        raise OutOfRange(f"M(x, s) >= {t} not reached within the growth cap")
    return float(v)


def young_gap(phi: PhiFunction, x, u, v):
    """M(x,u) + M̄(x,v) - u v, vectorized over matching arrays.

    Nonnegative by the Young inequality; zero when v = a(x,u).
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(u < 0) or np.any(v < 0):
        raise ValueError("u and v must be nonnegative")
    shape = np.broadcast_shapes(u.shape, v.shape, _leading_shape(x))
    ub = np.broadcast_to(u, shape).ravel()
    vb = np.broadcast_to(v, shape).ravel()
    xb = _broadcast_points(x, shape)
    m = np.broadcast_to(phi.evaluate(xb, ub), ub.shape)
    mbar = conjugate_values(phi, xb, vb)
    if not (np.all(np.isfinite(m)) and np.all(np.isfinite(mbar))):
        raise PhiOverflow("overflow in a Young-inequality term")
    gap = (m + mbar - ub * vb).reshape(shape)
    return float(gap) if gap.ndim == 0 else gap
