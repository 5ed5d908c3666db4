"""Generalized Φ-functions M(x, s) and numeric checks of their defining properties.

The five builtin families are

====  ====================================
M1    |s|^p(x)
M2    |s|^p(x) log(e + |s|)
M3    ((1 + s^2)^(p(x)/2) - 1) / p(x)
M4    |s|^p + a(x) |s|^q,   1 < p < q, a >= 0
M5    exp(|s|^p(x)) - 1
====  ====================================

plus ``custom`` functions given as an expression in ``x, y, s`` or as a
Python callable.  Evaluation is vectorized; overflow is reported as
``+inf`` and never raised from the array-level API.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidParameter, PhiOverflow
from .expr import Expression, compile_expr

__all__ = [
    "FAMILIES",
    "PhiFunction",
    "make_phi",
    "eval_density",
    "Probe",
    "AxiomReport",
    "validate_axioms",
    "IntegrabilityVerdict",
    "check_local_integrability",
    "Delta2Verdict",
    "check_delta2",
]

FAMILIES = ("M1", "M2", "M3", "M4", "M5", "custom")

# relative finite-difference step for densities without a closed form
FD_STEP = 1e-6


def _scalarize(a):
    a = np.asarray(a, dtype=float)
    return float(a) if a.ndim == 0 else a


@dataclass(frozen=True, eq=False)
class PhiFunction:
    """A Φ-function M(x, s); call it as ``phi(x, s)``.

    ``x`` is a scalar or 1-d array of coordinates in dimension one, or an
    ``(n, d)`` array of points. ``s`` broadcasts against the points.
    """

    family: str
    exponent: Optional[Expression] = None
    p: Optional[float] = None
    q: Optional[float] = None
    weight: Optional[Expression] = None
    custom: Optional[Callable] = None
    custom_density: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    @property
    def density_available(self) -> bool:
        if self.family in ("M1", "M4"):
            return True
        return self.family == "custom" and self.custom_density is not None

    def _coefficients(self, x) -> dict:
        fam = self.family
        if fam == "M4":
            return {"a": self.weight(x)}
        if fam == "custom":
            return {"x": x}
        return {"p": self.exponent(x)}

    def _evaluate_with(self, c: dict, s) -> np.ndarray:
        s = np.abs(np.asarray(s, dtype=float))
        fam = self.family
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            if fam == "M4":
                out = s ** self.p + c["a"] * s ** self.q
                out = np.where(s == 0, 0.0, out)
            elif fam == "custom":
                out = np.asarray(self.custom(c["x"], s), dtype=float)
            else:
                p = c["p"]
                if fam == "M1":
                    out = s ** p
                elif fam == "M2":
                    out = s ** p * np.log(np.e + s)
                elif fam == "M3":
                    out = np.expm1(0.5 * p * np.log1p(s * s)) / p
                elif fam == "M5":
                    out = np.expm1(s ** p)
                else:  # pragma: no cover
                    raise ValueError(fam)
        out = np.asarray(out, dtype=float)
        return np.where(np.isnan(out) & np.isinf(s), np.inf, out)

    def evaluate(self, x, s) -> np.ndarray:
        return self._evaluate_with(self._coefficients(x), s)

    def bind(self, x) -> Callable:
        """s ↦ M(x, s) with the x-dependent coefficients evaluated once.

        The returned callable takes an optional index array selecting a
        subset of the points (for per-point arrays of ``x``).
        """
        c = {k: np.asarray(v) if k != "x" else v for k, v in self._coefficients(x).items()}
        per_point = np.asarray(x).ndim >= 1 and np.asarray(x).shape[0] > 1

        def m(s, idx=None):
            if idx is None or not per_point:
                return self._evaluate_with(c, s)
            sub = {k: (v[idx] if np.ndim(v) >= 1 and np.shape(v)[0] > 1 else v)
                   for k, v in c.items()}
            return self._evaluate_with(sub, s)
        return m

    def __call__(self, x, s):
        return _scalarize(self.evaluate(x, s))

    def density(self, x, s) -> np.ndarray:
        """a(x, s) as an array; +inf where the evaluation overflows."""
        s = np.abs(np.asarray(s, dtype=float))
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            if self.family == "M1":
                p = self.exponent(x)
                out = np.where(s == 0, 0.0, p * s ** (p - 1))
            elif self.family == "M4":
                a = self.weight(x)
                out = np.where(
                    s == 0, 0.0,
                    self.p * s ** (self.p - 1) + a * self.q * s ** (self.q - 1),
                )
            elif self.custom_density is not None:
                out = np.asarray(self.custom_density(x, s), dtype=float)
            else:
                out = self._fd_density(x, s)
        return np.asarray(out, dtype=float)

    def _fd_density(self, x, s):
        h = FD_STEP * np.maximum(1.0, s)
        central = s >= h
        lo = np.where(central, s - h, s)
        width = np.where(central, 2 * h, h)
        upper = self.evaluate(x, s + h)
        lower = self.evaluate(x, lo)
        out = (upper - lower) / width
        out = np.where(np.isinf(upper), np.inf, out)
        return np.where(s == 0, 0.0, out)

    def describe(self) -> dict:
        return {"family": self.family, **{k: v for k, v in sorted(self.params.items())}}

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in sorted(self.params.items()))
        return f"PhiFunction({self.family}{', ' if args else ''}{args})"


def _probe_points(bounds, per_axis=33):
    axes = [lo + (hi - lo) * (np.arange(per_axis) + 0.5) / per_axis for lo, hi in bounds]
    if len(axes) == 1:
        return axes[0]
    g = np.meshgrid(*axes, indexing="ij")
    return np.stack([a.ravel() for a in g], axis=1)


def _first_point(points, mask):
    idx = int(np.flatnonzero(mask)[0])
    pt = np.asarray(points)[idx]
    return float(pt) if np.ndim(pt) == 0 else tuple(float(v) for v in pt)


def make_phi(family: str, parameters: Optional[dict] = None, *, bounds=None,
             check: bool = True) -> PhiFunction:
    """Build a Φ-function of a builtin family or a custom one.

    ``parameters`` keys by family: ``p`` (expression, M1/M2/M3/M5); ``p``,
    ``q`` (numbers) and ``a`` (expression) for M4; ``expr`` (expression in
    ``x, y, s``) or ``eval``/``density`` callables for custom.  Exponent
    fields and weights are checked on a probe grid over ``bounds``
    (default: the unit interval, or the unit square if ``y`` appears).
    """
    params = dict(parameters or {})
    fam = family.strip()
    if fam.lower() in ("m1", "m2", "m3", "m4", "m5"):
        fam = fam.upper()
    if fam not in FAMILIES:
        raise InvalidParameter(f"unknown family {family!r}; expected one of {FAMILIES}")

    def probe(expr: Expression):
        b = bounds
        if b is None:
            b = ((0.0, 1.0), (0.0, 1.0)) if "y" in expr.source else ((0.0, 1.0),)
        pts = _probe_points(b)
        return pts, expr(pts)

    desc = {}
    if fam in ("M1", "M2", "M3", "M5"):
        if "p" not in params:
            raise InvalidParameter(f"family {fam} needs an exponent field 'p'")
        unknown = set(params) - {"p"}
        if unknown:
            raise InvalidParameter(f"unexpected parameters for {fam}: {sorted(unknown)}")
        expo = compile_expr(params["p"])
        desc["p"] = expo.source
        if check:
            pts, vals = probe(expo)
            bad = ~(np.isfinite(vals) & (vals > 1))
            if bad.any():
                raise InvalidParameter("exponent p(x) must be > 1 and finite",
                                       _first_point(pts, bad))
        return PhiFunction(fam, exponent=expo, params=desc)

    if fam == "M4":
        unknown = set(params) - {"p", "q", "a"}
        if unknown:
            raise InvalidParameter(f"unexpected parameters for M4: {sorted(unknown)}")
        try:
            p, q = float(params["p"]), float(params["q"])
        except KeyError as exc:
            raise InvalidParameter(f"family M4 needs {exc.args[0]!r}") from None
        if not 1 < p < q < math.inf:
            raise InvalidParameter(f"M4 needs 1 < p < q, got p={p}, q={q}")
        weight = compile_expr(params.get("a", "1"))
        desc.update(p=p, q=q, a=weight.source)
        if check:
            pts, vals = probe(weight)
            bad = ~(np.isfinite(vals) & (vals >= 0))
            if bad.any():
                raise InvalidParameter("weight a(x) must be finite and >= 0",
                                       _first_point(pts, bad))
        return PhiFunction("M4", p=p, q=q, weight=weight, params=desc)

    # custom
    unknown = set(params) - {"expr", "eval", "density", "label"}
    if unknown:
        raise InvalidParameter(f"unexpected parameters for custom: {sorted(unknown)}")
    if "expr" in params:
        e = compile_expr(params["expr"], ("x", "y", "s"))
        fn = lambda x, s: e(x, s)  # noqa: E731
        desc["expr"] = e.source
    elif "eval" in params:
        fn = params["eval"]
        desc["expr"] = params.get("label", getattr(fn, "__name__", "callable"))
    else:
        raise InvalidParameter("custom family needs 'expr' or 'eval'")
    dens = params.get("density")
    if isinstance(dens, str):
        de = compile_expr(dens, ("x", "y", "s"))
        dens = lambda x, s: de(x, s)  # noqa: E731
        desc["density"] = de.source
    return PhiFunction("custom", custom=fn, custom_density=dens, params=desc)


def eval_density(phi: PhiFunction, x, s):
    """Right derivative a(x, s) of M(x, ·).

    Uses the closed form for M1/M4 (and a supplied custom density);
    otherwise a central difference with step ``1e-6 * max(1, s)``, one-sided
    when the stencil would cross zero. Raises :class:`PhiOverflow` instead
    of returning an infinite value.
    """
    out = phi.density(x, s)
    if np.any(np.isinf(out)) or np.any(np.isnan(out)):
        raise PhiOverflow(f"density of {phi!r} overflows at s={s}")
    return _scalarize(out)


# ----------------------------------------------------------------------------
# axiom checks


@dataclass(frozen=True)
class Probe:
    """Finite probe grid: points ``xs`` and nonnegative values ``ss``."""

    xs: np.ndarray
    ss: np.ndarray

    @classmethod
    def default(cls, bounds=((0.0, 1.0),), n_x=5, s_max=100.0, n_s=40):
        xs = _probe_points(bounds, n_x)
        ss = np.concatenate([[0.0], np.geomspace(1e-3, s_max, n_s - 1)])
        return cls(xs, ss)

    def describe(self) -> dict:
        xs = np.asarray(self.xs)
        return {
            "n_points": int(xs.shape[0]) if xs.ndim else 1,
            "s_min": float(np.min(self.ss)),
            "s_max": float(np.max(self.ss)),
            "n_s": int(len(self.ss)),
        }

    def points(self):
        """Yield (point, point-array-for-broadcast) pairs."""
        xs = np.asarray(self.xs, dtype=float)
        if xs.ndim <= 1:
            for v in np.atleast_1d(xs):
                yield float(v), float(v)
        else:
            for row in xs:
                yield tuple(float(v) for v in row), row[None, :]


@dataclass
class AxiomReport:
    checked_points: int = 0
    convexity_violations: list = field(default_factory=list)
    monotonicity_violations: list = field(default_factory=list)
    zero_at_zero: bool = True
    superlinear_evidence: list = field(default_factory=list)
    sublinear_at_zero_evidence: list = field(default_factory=list)
    overflows: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return (self.zero_at_zero and not self.convexity_violations
                and not self.monotonicity_violations)


def validate_axioms(phi: PhiFunction, probe: Optional[Probe] = None,
                    tol: float = 1e-9) -> AxiomReport:
    """Check M(x,0)=0, monotonicity and midpoint convexity on a probe grid.

    Every pair of probe values is midpoint-tested. Overflowing evaluations
    are listed in ``overflows`` and excluded from the comparisons.
    """
    probe = probe or Probe.default()
    ss = np.unique(np.asarray(probe.ss, dtype=float))
    if len(ss) < 3 or ss[0] != 0.0:
        raise ValueError("probe needs at least 3 s-values including s=0")
    rep = AxiomReport()
    i, j = np.triu_indices(len(ss), k=1)
    mids = 0.5 * (ss[i] + ss[j])
    for label, xb in probe.points():
        vals = np.broadcast_to(phi.evaluate(xb, ss), ss.shape)
        mvals = np.broadcast_to(phi.evaluate(xb, mids), mids.shape)
        rep.checked_points += len(ss) + len(mids)
        if vals[0] != 0.0:
            rep.zero_at_zero = False
        finite = np.isfinite(vals)
        for k in np.flatnonzero(~finite):
            rep.overflows.append((label, float(ss[k])))
        # monotonicity on consecutive finite values
        fv, fs = vals[finite], ss[finite]
        drops = fv[:-1] - fv[1:]
        bad = drops > tol * (1 + np.abs(fv[:-1]))
        for k in np.flatnonzero(bad):
            rep.monotonicity_violations.append((label, float(fs[k]), float(fs[k + 1]),
                                                float(drops[k])))
        ok = finite[i] & finite[j] & np.isfinite(mvals)
        with np.errstate(invalid="ignore"):
            gap = mvals - 0.5 * (vals[i] + vals[j])
        bad = ok & (gap > tol * (1 + np.abs(vals[i]) + np.abs(vals[j])))
        for k in np.flatnonzero(bad):
            rep.convexity_violations.append((label, float(ss[i[k]]), float(ss[j[k]]),
                                             float(gap[k])))
        pos = np.flatnonzero(finite & (ss > 0))
        if len(pos):
            rep.superlinear_evidence.append((label, float(ss[pos[-1]]),
                                             float(vals[pos[-1]] / ss[pos[-1]])))
            rep.sublinear_at_zero_evidence.append((label, float(ss[pos[0]]),
                                                   float(vals[pos[0]] / ss[pos[0]])))
    return rep


# ----------------------------------------------------------------------------
# local integrability


@dataclass
class IntegrabilityVerdict:
    compact_set: tuple
    constant_c: float
    integral_estimates: list
    status: str
    overflow_point: Optional[tuple] = None


def _box(K):
    if hasattr(K, "bounds"):
        K = K.bounds
    K = tuple((float(lo), float(hi)) for lo, hi in K)
    for lo, hi in K:
        if not lo < hi:
            raise ValueError(f"empty box {K}")
    return K


def _midpoint_nodes(box, per_axis):
    axes = [lo + (hi - lo) * (np.arange(per_axis) + 0.5) / per_axis for lo, hi in box]
    vol = float(np.prod([(hi - lo) / per_axis for lo, hi in box]))
    if len(axes) == 1:
        return axes[0], vol
    g = np.meshgrid(*axes, indexing="ij")
    return np.stack([a.ravel() for a in g], axis=1), vol


def check_local_integrability(phi: PhiFunction, K, c: float, refinements: int = 4,
                              base: int = 64, rtol: float = 1e-3) -> IntegrabilityVerdict:
    """Estimate ∫_K M(x, c) dx by midpoint rules at doubling resolutions.

    ``finite`` when the last two estimates agree within ``rtol``.
    """
    if c <= 0:
        raise ValueError("c must be positive")
    box = _box(K)
    estimates = []
    for k in range(refinements + 1):
        pts, vol = _midpoint_nodes(box, base * 2 ** k)
        vals = np.broadcast_to(phi.evaluate(pts, c), (len(pts),))
        if not np.all(np.isfinite(vals)):
            bad = ~np.isfinite(vals)
            return IntegrabilityVerdict(box, c, estimates, "diverging",
                                        overflow_point=_first_point(pts, bad))
        estimates.append(math.fsum(vals) * vol)
    if len(estimates) >= 2:
        last, prev = estimates[-1], estimates[-2]
        finite = abs(last - prev) <= rtol * max(abs(last), 1e-300)
    else:
        finite = True
    return IntegrabilityVerdict(box, c, estimates, "finite" if finite else "diverging")


# ----------------------------------------------------------------------------
# Δ2 condition


@dataclass
class Delta2Verdict:
    status: str
    witness: Optional[tuple]
    probe_spec: dict
    assumed_k: float
    assumed_h_bound: float


def check_delta2(phi: PhiFunction, probe: Optional[Probe] = None, assumed_k: float = 16.0,
                 assumed_h_bound: float = 0.0, t_max: float = 100.0,
                 n_t: int = 400) -> Delta2Verdict:
    """Search the probe for (x, t) with M(x,2t) > k M(x,t) + h.

    ``consistent`` only means that no witness was found.  An overflowing
    M(x,2t) next to a finite M(x,t) counts as a witness.
    """
    if assumed_k < 1 or assumed_h_bound < 0:
        raise ValueError("need assumed_k >= 1 and assumed_h_bound >= 0")
    if probe is None:
        base = Probe.default()
        probe = Probe(base.xs, np.geomspace(1e-4, t_max, n_t))
    ts = np.sort(np.asarray(probe.ss, dtype=float))
    ts = ts[ts > 0]
    best = None
    for label, xb in probe.points():
        m1 = np.broadcast_to(phi.evaluate(xb, ts), ts.shape)
        m2 = np.broadcast_to(phi.evaluate(xb, 2 * ts), ts.shape)
        finite1 = np.isfinite(m1)
        with np.errstate(over="ignore", invalid="ignore"):
            bound = assumed_k * m1 * (1 + 1e-12) + assumed_h_bound
            viol = finite1 & (m2 > bound)
        if viol.any():
            k = int(np.flatnonzero(viol)[0])
            ratio = float(m2[k] / m1[k]) if np.isfinite(m2[k]) and m1[k] > 0 else math.inf
            cand = (label, float(ts[k]), ratio)
            if best is None or cand[1] < best[1]:
                best = cand
    spec = probe.describe()
    spec.update(t_min=float(ts[0]), t_max=float(ts[-1]))
    return Delta2Verdict("falsified" if best else "consistent", best, spec,
                         float(assumed_k), float(assumed_h_bound))
