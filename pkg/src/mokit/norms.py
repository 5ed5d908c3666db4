"""Luxemburg norm, an Amemiya-type Orlicz-norm surrogate and norm inequalities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .conjugate import GOLDEN, conjugate_phi, density_inverse_values, inverse_values
from .errors import OutOfRange, SurrogateFailed
from .grid import GridFunction, default_refinements, modular
from .phi import PhiFunction, Probe, check_delta2

__all__ = [
    "NormResult",
    "luxemburg_norm",
    "amemiya_norm",
    "HolderReport",
    "holder_check",
    "CharBound",
    "char_indicator_bound",
    "DualReport",
    "young_witness",
    "dual_functional_norm",
    "pairing",
]

NORM_TOL = 1e-8
DELTA2_K = 1e6  # doubling constant assumed when reading a divergent modular
MAX_BISECT = 200
GROWTH_CAP = 1024


@dataclass(frozen=True)
class NormResult:
    value: float
    bracket: tuple
    iterations: int
    modular_at_value: float
    status: str  # converged | zero_function | no_finite_lambda

    @property
    def converged(self) -> bool:
        return self.status == "converged"


class _OutsideSpace(Exception):
    pass


def _doubling_on(phi: PhiFunction, domain) -> bool:
    """No Δ2 witness on a sample of the domain's cell centres."""
    pts = domain.centers()
    pts = pts[:: max(1, len(pts) // 64)]
    probe = Probe(pts, np.geomspace(1e-4, 1e4, 160))
    return check_delta2(phi, probe, assumed_k=DELTA2_K).status == "consistent"


def _rho(phi, u, refinements):
    state = {}

    def rho(lam):
        m = modular(phi, u, lam, refinements)
        if m.divergent:
            # under Δ2 a modular that diverges at one λ diverges at every λ
            if "delta2" not in state:
                state["delta2"] = _doubling_on(phi, u.domain)
            if state["delta2"]:
                raise _OutsideSpace(lam)
        return m.finite_value
    return rho


def luxemburg_norm(phi: PhiFunction, u: GridFunction, tol: float = NORM_TOL,
                   refinements: Optional[int] = None) -> NormResult:
    """inf{λ > 0 : ∫ M(x, |u|/λ) dx <= 1}.

    Brackets from λ = 1 by doubling/halving until the modular straddles 1,
    then bisects until the bracket is relatively narrower than ``tol``.
    The returned value is the upper bracket end, so the modular there is <= 1.
    A divergent modular under a Φ-function with no Δ2 witness means u lies
    outside the space, reported as ``no_finite_lambda``.
    """
    if refinements is None:
        refinements = default_refinements(u.domain)
    if u.is_zero(refinements):
        return NormResult(0.0, (0.0, 0.0), 0, 0.0, "zero_function")
    rho = _rho(phi, u, refinements)
    try:
        return _luxemburg_search(rho, tol)
    except _OutsideSpace as exc:
        lam = exc.args[0]
        return NormResult(math.inf, (lam, math.inf), 0, math.inf, "no_finite_lambda")


def _luxemburg_search(rho, tol):
    it = 0
    r1 = rho(1.0)
    if r1 <= 1:
        hi, rhi = 1.0, r1
        lo = 0.5
        rlo = rho(lo)
        while rlo <= 1:
            it += 1
            hi, rhi = lo, rlo
            lo *= 0.5
            if lo == 0.0:  # pragma: no cover - needs a non-Φ input
                return NormResult(0.0, (0.0, hi), it, rhi, "converged")
            rlo = rho(lo)
    else:
        lo, rlo = 1.0, r1
        hi = 2.0
        rhi = rho(hi)
        while rhi > 1:
            it += 1
            if it > GROWTH_CAP or math.isinf(hi * 2):
                return NormResult(math.inf, (lo, math.inf), it, math.inf, "no_finite_lambda")
            lo, rlo = hi, rhi
            hi *= 2
            rhi = rho(hi)
    n = 0
    while hi - lo > tol * hi and n < MAX_BISECT:
        n += 1
        mid = 0.5 * (lo + hi)
        r = rho(mid)
        if r <= 1:
            hi, rhi = mid, r
        else:
            lo, rlo = mid, r
    return NormResult(hi, (lo, hi), it + n, rhi, "converged")


def _golden_min(g, a, b, tol, max_iter=300):
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    gc, gd = g(c), g(d)
    n = 0
    while b - a > tol * (1 + abs(a) + abs(b)) and n < max_iter:
        n += 1
        if gc <= gd:
            b, d, gd = d, c, gc
            c = b - GOLDEN * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + GOLDEN * (b - a)
            gd = g(d)
    return (c, gc) if gc <= gd else (d, gd)


def amemiya_norm(phi: PhiFunction, u: GridFunction, tol: float = NORM_TOL,
                 refinements: Optional[int] = None, lux: Optional[NormResult] = None,
                 span: float = 40.0) -> float:
    """inf_{k>0} (1/k)(1 + ∫ M(x, k|u|) dx), searched over log(1/k).

    The minimizing 1/k lies in (0, 2‖u‖]; the search runs on
    [‖u‖ 2^-span, 2‖u‖] and fails if it ends at the lower edge.
    """
    if refinements is None:
        refinements = default_refinements(u.domain)
    lux = lux or luxemburg_norm(phi, u, refinements=refinements)
    if lux.status == "zero_function":
        return 0.0
    if not lux.converged:
        raise SurrogateFailed("Luxemburg norm did not converge")
    rho = _rho(phi, u, refinements)

    def g(log_lam):
        lam = math.exp(log_lam)
        return lam * (1.0 + rho(lam))

    a = math.log(lux.value) - span * math.log(2)
    b = math.log(2 * lux.value)
    t, val = _golden_min(g, a, b, tol)
    if t - a < 1e-6 * (b - a):
        raise SurrogateFailed("no interior minimum within the search span")
    return float(min(val, g(b)))


def _common_refinements(*fns, refinements=None):
    if refinements is None:
        refinements = min(default_refinements(f.domain) for f in fns)
    if any(f.analytic is None for f in fns):
        return 0
    return refinements


def pairing(u: GridFunction, v: GridFunction, refinements: int = 0,
            absolute: bool = False) -> float:
    """∫ u v dx (or ∫ |u v| dx) on the finest common level."""
    k = min(u.max_level(refinements), v.max_level(refinements))
    _, uv, vol = u.level(k)
    _, vv, _ = v.level(k)
    prod = uv * vv
    if absolute:
        prod = np.abs(prod)
    return math.fsum(prod) * vol


@dataclass
class HolderReport:
    pairing: float
    lux_u: NormResult
    lux_v: NormResult
    orlicz_u: float
    slack: float
    evaluable: bool = True
    note: str = ""


def holder_check(phi: PhiFunction, u: GridFunction, v: GridFunction,
                 tol: float = NORM_TOL, refinements: Optional[int] = None) -> HolderReport:
    """Check ∫|uv| <= ‖u‖_(M) ‖v‖_M̄ with the Amemiya surrogate for ‖u‖_(M)."""
    r = _common_refinements(u, v, refinements=refinements)
    pair = pairing(u, v, r, absolute=True)
    lux_u = luxemburg_norm(phi, u, tol, r)
    lux_v = luxemburg_norm(conjugate_phi(phi), v, tol, r)
    if lux_v.status == "no_finite_lambda" or lux_u.status == "no_finite_lambda":
        return HolderReport(pair, lux_u, lux_v, math.nan, math.nan, False,
                            "a norm is not finite (conjugate unbounded or u outside L_M)")
    try:
        orlicz = amemiya_norm(phi, u, tol, r, lux_u)
    except SurrogateFailed as exc:
        return HolderReport(pair, lux_u, lux_v, math.nan, math.nan, False, str(exc))
    return HolderReport(pair, lux_u, lux_v, orlicz, orlicz * lux_v.value - pair)


@dataclass
class CharBound:
    lux: float
    bound: float
    c1: object
    c2: float
    measure: float
    holds: bool
    note: str = "c1 is the maximizing point of a finite sample of E"


def _box_points(box, per_axis):
    axes = [lo + (hi - lo) * (np.arange(per_axis) + 0.5) / per_axis for lo, hi in box]
    if len(axes) == 1:
        return axes[0]
    g = np.meshgrid(*axes, indexing="ij")
    return np.stack([a.ravel() for a in g], axis=1)


def char_indicator_bound(phi: PhiFunction, E, domain, tol: float = NORM_TOL,
                         samples: int = 64, refinements: Optional[int] = None) -> CharBound:
    """‖χ_E‖ against 1 / M^{-1}(c1, c2/|E|) with c2 = 1/2.

    The scale s = M^{-1}(x0, 1/(2|E|)) is taken at the center x0 of E and
    c1 is the sample point of E where M(·, s) is largest.
    """
    from .grid import sample

    box = tuple((float(lo), float(hi)) for lo, hi in (E.bounds if hasattr(E, "bounds") else E))
    measure = float(np.prod([hi - lo for lo, hi in box]))
    if measure <= 0:
        raise ValueError("E must have positive measure")

    def chi(p):
        p2 = np.asarray(p, dtype=float)
        p2 = p2.reshape(-1, 1) if p2.ndim <= 1 else p2
        inside = np.ones(p2.shape[0], dtype=bool)
        for k, (lo, hi) in enumerate(box):
            inside &= (p2[:, k] > lo) & (p2[:, k] < hi)
        return inside.astype(float)

    u = sample(chi, domain, support_hint=box)
    lux = luxemburg_norm(phi, u, tol, refinements)
    c2 = 0.5
    target = c2 / measure
    center = np.array([0.5 * (lo + hi) for lo, hi in box])
    x0 = float(center[0]) if len(box) == 1 else center[None, :]
    s = inverse_values(phi, x0, [target])[0]
    if math.isnan(s):
        raise OutOfRange("M^{-1}(x0, 1/(2|E|)) not reachable")
    pts = _box_points(box, samples)
    vals = np.broadcast_to(phi.evaluate(pts, s), (pts.shape[0],))
    k = int(np.argmax(vals))
    c1 = pts[k] if pts.ndim == 1 else pts[k][None, :]
    inv = inverse_values(phi, c1, [target])[0]
    if math.isnan(inv) or inv <= 0:
        raise OutOfRange("M^{-1}(c1, c2/|E|) not reachable")
    bound = 1.0 / inv
    c1_out = float(c1) if np.ndim(c1) == 0 else tuple(float(v) for v in np.ravel(c1))
    return CharBound(lux.value, bound, c1_out, c2, measure, lux.value <= bound + tol)


def young_witness(phi: PhiFunction, v: GridFunction, lux_v: float) -> GridFunction:
    """u*(x) = a*(x, |v(x)|/‖v‖_M̄) sign v(x), the Young-equality partner of v."""

    def build(pts, vals):
        out = density_inverse_values(phi, pts, np.abs(vals) / lux_v)
        return np.where(np.isfinite(out), out, 0.0) * np.sign(vals)

    pts = v.domain.centers()
    samples = build(pts, v.samples)
    analytic = None
    if v.analytic is not None:
        def analytic(p):
            p = np.asarray(p, dtype=float)
            return build(p, v(p))
    return GridFunction(v.domain, samples, analytic, v.support_hint,
                        notes=("young-equality witness",))


@dataclass
class DualReport:
    lower_estimate: float
    lux_v: NormResult
    pairings: list = field(default_factory=list)
    witness_included: bool = False
    upper_holds: bool = True
    lower_holds: Optional[bool] = None
    delta: float = 0.05


def dual_functional_norm(phi: PhiFunction, v: GridFunction, candidates: Sequence[GridFunction],
                         delta: float = 0.05, tol: float = NORM_TOL,
                         include_witness: bool = True,
                         refinements: Optional[int] = None) -> DualReport:
    """Lower estimate of ‖L_v‖ = sup{|∫uv| : ‖u‖ <= 1} over candidate functions.

    Candidates with norm above one are rescaled onto the unit sphere. With
    ``include_witness`` the Young-equality witness of v is appended, which
    makes the estimate reach at least ‖v‖_M̄.
    """
    candidates = list(candidates)
    if not candidates and not include_witness:
        raise ValueError("candidate list is empty")
    r = _common_refinements(v, *candidates, refinements=refinements)
    mbar = conjugate_phi(phi)
    lux_v = luxemburg_norm(mbar, v, tol, r)
    if lux_v.status == "zero_function":
        pairs = [0.0] * len(candidates)
        return DualReport(0.0, lux_v, pairs, include_witness, True,
                          True if include_witness else None, delta)
    if include_witness and lux_v.converged:
        candidates.append(young_witness(phi, v, lux_v.value))
    pairs = []
    for u in candidates:
        lu = luxemburg_norm(phi, u, tol, r)
        scale = 1.0
        if lu.converged and lu.value > 1 + tol:
            scale = 1.0 / lu.value
        pairs.append(abs(pairing(u, v, r)) * scale)
    est = max(pairs)
    upper = est <= 2 * lux_v.value + tol if lux_v.converged else False
    lower = None
    if include_witness and lux_v.converged:
        lower = est >= (1 - delta) * lux_v.value
    return DualReport(est, lux_v, pairs, include_witness and lux_v.converged, upper, lower,
                      delta)
