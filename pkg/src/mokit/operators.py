"""Translation, truncation against a compact exhaustion, and Friedrichs mollification."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .grid import Domain, GridFunction

__all__ = [
    "CompactExhaustion",
    "translate",
    "truncate",
    "mollifier_kernel",
    "mollify",
]

KERNEL_NODES = 64
_CHUNK = 1 << 21  # point-node pairs evaluated per batch


def _as_rows(pts):
    p = np.asarray(pts, dtype=float)
    return p.reshape(-1, 1) if p.ndim <= 1 else p


def _restore(pts, rows):
    return rows[:, 0] if np.asarray(pts).ndim <= 1 else rows


@dataclass(frozen=True)
class CompactExhaustion:
    """K_j = {x in Ω : |x| <= j, dist(x, Ω^c) >= 1/j}."""

    domain: Domain
    j: int

    def __post_init__(self):
        if self.j < 1:
            raise ValueError("j must be a positive integer")

    def __call__(self, pts) -> np.ndarray:
        rows = _as_rows(pts)
        norm = np.sqrt(np.sum(rows * rows, axis=1))
        return (self.domain.contains(pts) & (norm <= self.j)
                & (self.domain.dist_to_boundary(pts) >= 1.0 / self.j))


def _shift_box(box, h, domain):
    if box is None:
        return None
    out = []
    for (lo, hi), hk, (dlo, dhi) in zip(box, h, domain.bounds):
        out.append((max(lo - hk, dlo), min(hi - hk, dhi)))
    return tuple(out)


def translate(u: GridFunction, h) -> GridFunction:
    """τ_h u(x) = u(x + h) when x and x + h lie in Ω, else 0.

    Without an analytic closure the shift is rounded to whole cells and the
    rounding is recorded in ``notes``.
    """
    dom = u.domain
    h = np.atleast_1d(np.asarray(h, dtype=float))
    if h.shape != (dom.dimension,):
        raise ValueError(f"shift must have {dom.dimension} components")
    notes = []
    if u.support_hint is not None:
        gap = min(min(lo - dlo, dhi - hi)
                  for (lo, hi), (dlo, dhi) in zip(u.support_hint, dom.bounds))
        if np.linalg.norm(h) >= gap:
            notes.append("|h| >= dist(supp u, boundary): clipping regime")
    support = _shift_box(u.support_hint, h, dom)

    if u.analytic is not None:
        fa = u.analytic

        def shifted(pts):
            rows = _as_rows(pts) + h
            moved = _restore(pts, rows)
            with np.errstate(all="ignore"):
                vals = np.broadcast_to(np.asarray(fa(moved), dtype=float), (rows.shape[0],))
            return np.where(dom.contains(moved), vals, 0.0)

        pts = dom.centers()
        return GridFunction(dom, shifted(pts), shifted, support, tuple(notes))

    widths = dom.cell_widths()
    steps = np.rint(h / widths).astype(int)
    if not np.allclose(steps * widths, h, rtol=0, atol=1e-12 * max(1.0, np.abs(h).max())):
        notes.append(f"shift rounded to the grid: {list(steps * widths)}")
    n = dom.resolution
    grid = u.samples.reshape((n,) * dom.dimension)
    out = np.zeros_like(grid)
    src = []
    dst = []
    for k in range(dom.dimension):
        s = steps[k]
        if s >= 0:
            dst.append(slice(0, max(n - s, 0)))
            src.append(slice(min(s, n), n))
        else:
            dst.append(slice(min(-s, n), n))
            src.append(slice(0, max(n + s, 0)))
    out[tuple(dst)] = grid[tuple(src)]
    return GridFunction(dom, out.ravel(), None, support, tuple(notes))


def truncate(u: GridFunction, j: int) -> GridFunction:
    """u_j = T_j(u) χ_{K_j} with T_j(s) = max(-j, min(j, s))."""
    K = CompactExhaustion(u.domain, int(j))
    jj = float(j)

    def op(pts, vals):
        return np.clip(np.where(np.isnan(vals), 0.0, vals), -jj, jj) * K(pts)

    samples = op(u.domain.centers(), u.samples)
    analytic = None
    if u.analytic is not None:
        fa = u.analytic

        def analytic(pts):
            with np.errstate(all="ignore"):
                vals = np.broadcast_to(np.asarray(fa(pts), dtype=float),
                                       (_as_rows(pts).shape[0],))
            return op(pts, vals)

    support = tuple((max(lo, -jj), min(hi, jj)) for lo, hi in u.domain.bounds)
    if u.support_hint is not None:
        support = tuple((max(a, c), min(b, d))
                        for (a, b), (c, d) in zip(support, u.support_hint))
    return GridFunction(u.domain, samples, analytic, support)


@lru_cache(maxsize=8)
def mollifier_kernel(dim: int, nodes: int = KERNEL_NODES):
    """Quadrature nodes y in the unit ball and weights summing to one.

    Tensor midpoint rule on [-1, 1]^dim with the bump exp(-1/(1-|y|^2)),
    renormalized so the discrete kernel mass is exactly one.
    """
    axis = -1 + (np.arange(nodes) + 0.5) * 2.0 / nodes
    if dim == 1:
        y = axis[:, None]
    else:
        g = np.meshgrid(*([axis] * dim), indexing="ij")
        y = np.stack([a.ravel() for a in g], axis=1)
    r2 = np.sum(y * y, axis=1)
    keep = r2 < 1
    y, r2 = y[keep], r2[keep]
    w = np.exp(-1.0 / (1.0 - r2))
    w = w / w.sum()
    y.setflags(write=False)
    w.setflags(write=False)
    return y, w


def mollify(u: GridFunction, epsilon: float, nodes: int = KERNEL_NODES) -> GridFunction:
    """u_ε(x) = ∫_{B(0,1)} u(x - εy) J(y) dy by kernel quadrature.

    ``u`` is extended by zero outside Ω.  If ε is not below the distance of
    the support hint to the boundary the smooth-compact-support guarantee is
    flagged as void in ``notes``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    dom = u.domain
    y, w = mollifier_kernel(dom.dimension, nodes)
    eps = float(epsilon)
    notes = []
    if u.support_hint is None:
        notes.append("no support hint: compact-support guarantee not checked")
        support = None
    else:
        gap = min(min(lo - dlo, dhi - hi)
                  for (lo, hi), (dlo, dhi) in zip(u.support_hint, dom.bounds))
        if eps >= gap:
            notes.append("epsilon >= dist(supp u, boundary): C_0^inf guarantee void")
        support = tuple((max(lo - eps, dlo), min(hi + eps, dhi))
                        for (lo, hi), (dlo, dhi) in zip(u.support_hint, dom.bounds))

    def smoothed(pts):
        rows = _as_rows(pts)
        n = rows.shape[0]
        out = np.empty(n)
        step = max(1, _CHUNK // len(w))
        for a in range(0, n, step):
            blk = rows[a:a + step]
            q = blk[:, None, :] - eps * y[None, :, :]
            q = q.reshape(-1, dom.dimension)
            vals = u(q[:, 0] if dom.dimension == 1 else q).reshape(len(blk), len(w))
            out[a:a + step] = vals @ w
        return out

    samples = smoothed(dom.centers())
    analytic = smoothed if u.analytic is not None else None
    return GridFunction(dom, samples, analytic, support, tuple(notes))
