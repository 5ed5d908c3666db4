"""Convergence experiments with explicit thresholds and pass/fail verdicts.

Every experiment returns an :class:`ExperimentReport` whose sweep is
ordered by the swept parameter.  Sweep points are evaluated through an
ordered map, optionally threaded (``MOKIT_THREADS``), so results never
depend on scheduling.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import SurrogateFailed
from .grid import Domain, GridFunction, modular, sample
from .norms import amemiya_norm, dual_functional_norm, luxemburg_norm
from .operators import mollify, translate, truncate
from .phi import PhiFunction, Probe, check_delta2, make_phi

__all__ = [
    "ExperimentReport",
    "JITTER",
    "run_translation_continuity",
    "run_kr_counterexample",
    "run_mollifier_convergence",
    "run_truncation_density",
    "run_modular_vs_norm_equivalence",
    "run_sandwich_and_duality_suite",
    "default_corpus",
]

JITTER = 0.05
SWEEP_THRESHOLD = 0.25
KR_TOL = 0.02
TRUNCATION_MODULAR_THRESHOLD = 0.25
TRUNCATION_NORM_FRACTION = 0.6
DELTA2_K = 1e6
SEPARATION_MODULAR = 1e-3
SEPARATION_NORM_FLOOR = 0.6
EVALUABLE_FRACTION = 0.9


def _threads() -> int:
    try:
        n = int(os.environ.get("MOKIT_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def _parallel(fn, items):
    items = list(items)
    n = min(_threads(), len(items))
    if n <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _clean(v):
    if isinstance(v, (np.floating, np.integer)):
        v = v.item()
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_clean(x) for x in v.tolist()]
    return v


@dataclass
class ExperimentReport:
    name: str
    phi_config: dict
    sweep: list
    verdict: str  # pass | fail | inconclusive
    thresholds: dict
    table_rows: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self, timestamp: Optional[str] = None) -> dict:
        d = {
            "name": self.name,
            "phi_config": self.phi_config,
            "sweep": self.sweep,
            "verdict": self.verdict,
            "thresholds": self.thresholds,
            "table_rows": self.table_rows,
            "notes": self.notes,
            "summary": self.summary,
        }
        if timestamp is not None:
            d["timestamp"] = timestamp
        return _clean(d)

    def to_json(self, timestamp: Optional[str] = None) -> str:
        return json.dumps(self.to_dict(timestamp), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        rows = _clean(self.table_rows)
        cols = []
        for r in rows:
            cols += [k for k in r if k not in cols]
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
        return buf.getvalue()

    def write(self, output_dir, timestamp: str) -> tuple:
        """Write ``<name>-<family>-<timestamp>.json`` and ``.csv``; return both paths."""
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = f"{self.name}-{self.phi_config.get('family', 'none')}-{timestamp}"
        jp, cp = out / f"{stem}.json", out / f"{stem}.csv"
        jp.write_text(self.to_json(timestamp))
        cp.write_text(self.to_csv())
        return jp, cp


def nonincreasing(values, jitter: float = JITTER, atol: float = 1e-12) -> bool:
    """Each value at most (1 + jitter) times its predecessor."""
    return all(b <= a * (1 + jitter) + atol for a, b in zip(values, values[1:]))


def _gap_to_boundary(u: GridFunction) -> float:
    if u.support_hint is None:
        return math.nan
    return min(min(lo - dlo, dhi - hi)
               for (lo, hi), (dlo, dhi) in zip(u.support_hint, u.domain.bounds))


def _norm_sweep(name, phi, u, params, make, threshold, refinements, param_name):
    """Shared driver for the translation and mollifier sweeps."""
    params = list(params)
    order = sorted(range(len(params)), key=lambda i: -abs(np.linalg.norm(params[i])))
    params = [params[i] for i in order]

    def measure(p):
        diff = make(p) - u
        return luxemburg_norm(phi, diff, refinements=refinements), diff.notes

    results = _parallel(measure, params)
    notes = []
    rows = []
    sweep = []
    for p, (res, dn) in zip(params, results):
        notes += [f"{param_name}={_clean(p)}: {n}" for n in dn]
        pv = _clean(p if np.ndim(p) == 0 else list(np.ravel(p)))
        rows.append({param_name: pv, "norm": res.value, "status": res.status,
                     "modular_at_value": res.modular_at_value})
        sweep.append([pv, res.value])
    values = [r.value for r, _ in results]
    thresholds = {"jitter": JITTER, "final_below": threshold}
    if any(r.status == "no_finite_lambda" for r, _ in results):
        verdict = "inconclusive"
    else:
        ok = nonincreasing(values) and values[-1] < threshold
        verdict = "pass" if ok else "fail"
    return ExperimentReport(name, phi.describe(), sweep, verdict, thresholds, rows, notes)


def run_translation_continuity(phi: PhiFunction, u: GridFunction, h_sequence: Sequence,
                               threshold: float = SWEEP_THRESHOLD,
                               refinements: Optional[int] = None) -> ExperimentReport:
    """‖τ_h u − u‖ along a shrinking h sweep (bounded, compactly supported u)."""
    gap = _gap_to_boundary(u)
    rep = _norm_sweep("translation", phi, u, h_sequence,
                      lambda h: translate(u, np.atleast_1d(h) if u.domain.dimension == 1
                                          else h),
                      threshold, refinements, "h")
    if u.support_hint is None:
        rep.notes.insert(0, "u has no support hint: boundedness/support precondition unchecked")
    elif max(float(np.linalg.norm(h)) for h in h_sequence) >= gap:
        rep.notes.insert(0, "max |h| >= dist(supp u, boundary): clipping regime")
    return rep


def run_mollifier_convergence(phi: PhiFunction, u: GridFunction, eps_sequence: Sequence,
                              threshold: float = SWEEP_THRESHOLD,
                              refinements: Optional[int] = None) -> ExperimentReport:
    """‖u_ε − u‖ along a shrinking ε sweep."""
    return _norm_sweep("mollifier", phi, u, eps_sequence, lambda e: mollify(u, float(e)),
                       threshold, refinements, "epsilon")


def kr_phi(r: float, s: float) -> PhiFunction:
    """Exponent r on [0, 1) and s on (-1, 0)."""
    return make_phi("M1", {"p": f"where(x >= 0, {float(r)!r}, {float(s)!r})"},
                    bounds=((-1.0, 1.0),), check=r > 1)


def run_kr_counterexample(r: float, s: float, h: float, resolution: int = 1000,
                          refinements: int = 6) -> ExperimentReport:
    """f(x) = x^{-1/s} on (0, 1) lies in L^{p(·)}(-1, 1) but τ_h f does not."""
    if not 1 <= r < s < math.inf:
        raise ValueError("need 1 <= r < s < inf")
    if not 0 <= h < 1:
        raise ValueError("need 0 <= h < 1")
    phi = kr_phi(r, s)
    dom = Domain.interval(-1.0, 1.0, resolution)
    expo = -1.0 / s

    def f(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(x > 0, np.abs(x) ** expo, 0.0)

    u = sample(f, dom, support_hint=((0.0, 1.0),))
    shifted = translate(u, h)
    exact = s / (s - r)
    mf, mt = _parallel(lambda g: modular(phi, g, 1.0, refinements), [u, shifted])
    rel = abs(mf.value - exact) / exact
    incr = [b - a for a, b in zip(mt.refinement_trace, mt.refinement_trace[1:])]
    rows = []
    for k in range(len(mf.refinement_trace)):
        rows.append({"level": k, "resolution": resolution * 2 ** k,
                     "modular_f": mf.refinement_trace[k],
                     "modular_shifted": mt.refinement_trace[k] if k < len(mt.refinement_trace)
                     else math.nan,
                     "increment": incr[k - 1] if 0 < k <= len(incr) else math.nan})
    thresholds = {"modular_f_rel_tol": KR_TOL, "divergence_factor": 1.05,
                  "refinement_doublings": refinements}
    notes = []
    f_ok = (not mf.divergent) and rel <= KR_TOL
    if h == 0:
        verdict = "inconclusive"
        notes.append("h = 0: tau_0 f = f, nothing to separate")
    else:
        verdict = "pass" if f_ok and mt.divergent else "fail"
    summary = {"modular_f": mf.value, "modular_f_exact": exact, "modular_f_rel_err": rel,
               "modular_f_pass": f_ok, "shifted_divergent": mt.divergent,
               "shifted_trace": list(mt.refinement_trace),
               "shifted_increments": incr}
    sweep = [[k, t] for k, t in enumerate(mt.refinement_trace)]
    return ExperimentReport("kr", phi.describe(), sweep, verdict, thresholds, rows,
                            notes, summary)


def _loglog_slope(xs, ys):
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    ok = (xs > 0) & (ys > 0)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(xs[ok]), np.log(ys[ok]), 1)[0])


def run_truncation_density(phi: PhiFunction, u: GridFunction, lam: float = 1.0,
                           j_sequence: Sequence[int] = (1, 2, 4, 8, 16),
                           modular_threshold: float = TRUNCATION_MODULAR_THRESHOLD,
                           norm_fraction: float = TRUNCATION_NORM_FRACTION,
                           delta2_k: float = DELTA2_K,
                           refinements: Optional[int] = None) -> ExperimentReport:
    """modular(u_j − u, 2λ) and, under Δ2, ‖u_j − u‖ along increasing j."""
    js = sorted(int(j) for j in j_sequence)
    thresholds = {"jitter": JITTER, "modular_final_below": modular_threshold,
                  "norm_final_below_fraction_of_norm_u": norm_fraction,
                  "delta2_assumed_k": delta2_k}
    base = modular(phi, u, lam, refinements)
    if base.divergent:
        return ExperimentReport("truncation", phi.describe(), [], "inconclusive", thresholds,
                                [], [f"modular(u, {lam}) diverges"])
    d2 = check_delta2(phi, Probe.default(bounds=u.domain.bounds), assumed_k=delta2_k)
    norm_mode = d2.status == "consistent"
    notes = []
    if not norm_mode:
        notes.append(f"norm sweep skipped: Δ2 falsified, witness {d2.witness}")

    def measure(j):
        diff = truncate(u, j) - u
        m = modular(phi, diff, 2 * lam, refinements)
        n = luxemburg_norm(phi, diff, refinements=refinements) if norm_mode else None
        return m, n

    results = _parallel(measure, js)
    rows, sweep = [], []
    mods, norms = [], []
    for j, (m, n) in zip(js, results):
        row = {"j": j, "modular": m.finite_value}
        if n is not None:
            row["norm"] = n.value
            norms.append(n.value)
        rows.append(row)
        mods.append(m.finite_value)
        sweep.append([j, m.finite_value])
    ok = nonincreasing(mods) and mods[-1] < modular_threshold
    summary = {"modular_loglog_slope": _loglog_slope(js, mods),
               "delta2": d2.status, "norm_mode": norm_mode}
    if norm_mode:
        norm_u = luxemburg_norm(phi, u, refinements=refinements)
        bound = norm_fraction * norm_u.value
        summary.update(norm_u=norm_u.value, norm_final_bound=bound)
        ok = ok and nonincreasing(norms) and norms[-1] < bound
    return ExperimentReport("truncation", phi.describe(), sweep, "pass" if ok else "fail",
                            thresholds, rows, notes, summary)


def run_modular_vs_norm_equivalence(mode: str, n_values: Optional[Sequence[int]] = None,
                                    refinements: Optional[int] = None) -> ExperimentReport:
    """Modular vs. norm convergence of a sequence u_n.

    ``delta2``: u_n = 1/n on (0, 1) under M1 with p(x) = 2 + 2x; both tend to 0.
    ``non_delta2``: u_n = √n χ_(0, e^{-2n}) under e^{s²} − 1 (a constructed
    example); the modular at λ = 2 tends to 0 while the norm stays near 1/√2.
    Each u_n lives on (0, 2e^{-2n}) with two cells so the support is exact;
    M(x, 0) = 0 makes this equal to the integral over (0, 1).
    """
    if mode == "delta2":
        ns = sorted(n_values or (1, 2, 4, 8, 16, 32))
        phi = make_phi("M1", {"p": "2 + 2*x"})
        dom = Domain.interval(0.0, 1.0, 1000)

        def measure(n):
            c = 1.0 / n
            u = GridFunction(dom, np.full(dom.resolution, c), lambda x: np.full(np.shape(x), c),
                             ((0.0, 1.0),))
            return modular(phi, u, 1.0, refinements).finite_value, \
                luxemburg_norm(phi, u, refinements=refinements).value

        res = _parallel(measure, ns)
        mods = [m for m, _ in res]
        norms = [v for _, v in res]
        thresholds = {"jitter": JITTER, "modular_final_below": SEPARATION_MODULAR,
                      "norm_final_below": 0.05}
        ok = (nonincreasing(mods) and nonincreasing(norms)
              and mods[-1] < SEPARATION_MODULAR and norms[-1] < 0.05)
        rows = [{"n": n, "modular_lambda_1": m, "norm": v} for n, (m, v) in zip(ns, res)]
        sweep = [[n, m, v] for n, (m, v) in zip(ns, res)]
        return ExperimentReport("separation-delta2", phi.describe(), sweep,
                                "pass" if ok else "fail", thresholds, rows)

    if mode != "non_delta2":
        raise ValueError("mode must be 'delta2' or 'non_delta2'")
    ns = sorted(n_values or (4, 6, 8, 10))
    phi = make_phi("M5", {"p": "2"})
    notes = ["constructed-example: separation sequence sqrt(n) chi_(0, exp(-2n))"]
    skipped = [n for n in ns if n <= 0]
    if skipped:
        notes.append(f"skipped degenerate indices {skipped}")
    ns = [n for n in ns if n > 0]

    def measure(n):
        a = math.exp(-2.0 * n)
        dom = Domain.interval(0.0, 2 * a, 2)
        u = GridFunction(dom, np.array([math.sqrt(n), 0.0]), None, ((0.0, a),))
        return modular(phi, u, 2.0).finite_value, luxemburg_norm(phi, u).value

    res = _parallel(measure, ns)
    rows = [{"n": n, "modular_lambda_2": m, "norm": v,
             "modular_exact": math.exp(-2.0 * n) * math.expm1(n / 4.0)}
            for n, (m, v) in zip(ns, res)]
    thresholds = {"modular_final_below": SEPARATION_MODULAR,
                  "norm_floor": SEPARATION_NORM_FLOOR}
    ok = bool(res) and res[-1][0] < SEPARATION_MODULAR and all(
        v >= SEPARATION_NORM_FLOOR for _, v in res)
    sweep = [[n, m, v] for n, (m, v) in zip(ns, res)]
    return ExperimentReport("separation-non_delta2", phi.describe(), sweep,
                            "pass" if ok else "fail", thresholds, rows, notes)


def default_corpus(domain: Optional[Domain] = None) -> list:
    """Constants, indicators, ramps and the zero function on (0, 1)."""
    dom = domain or Domain.interval(0.0, 1.0, 200)
    full = tuple(dom.bounds)
    specs = [
        ("const_0.5", "0.5", full), ("const_1", "1", full), ("const_3", "3", full),
        ("chi_(0,0.5)", "ind((x > 0) and (x < 0.5))", ((0.0, 0.5),)),
        ("chi_(0.3,0.6)", "ind((x > 0.3) and (x < 0.6))", ((0.3, 0.6),)),
        ("chi_(0.2,0.9)", "2*ind((x > 0.2) and (x < 0.9))", ((0.2, 0.9),)),
        ("ramp_x", "x", full), ("ramp_1-x", "1 - x", full), ("ramp_2x", "2*x", full),
        ("zero", "0", full),
    ]
    return [(name, sample(e, dom, support_hint=box)) for name, e, box in specs]


def run_sandwich_and_duality_suite(phi: PhiFunction, corpus: Optional[Sequence] = None,
                                   delta: float = 0.05, refinements: Optional[int] = 3,
                                   tol: float = 1e-6) -> ExperimentReport:
    """lux ≤ amemiya ≤ 2 lux and ‖v‖_M̄ ≲ ‖L_v‖ ≤ 2‖v‖_M̄ over a corpus.

    ``corpus`` is a list of (name, GridFunction).  Each entry is also its own
    dual-test density v; the other entries serve as candidate u.
    """
    corpus = list(corpus if corpus is not None else default_corpus())
    funcs = [g for _, g in corpus]

    def measure(i):
        name, u = corpus[i]
        row = {"name": name}
        lux = luxemburg_norm(phi, u, refinements=refinements)
        row["luxemburg"] = lux.value
        if lux.status == "zero_function":
            row.update(amemiya=0.0, sandwich=True, dual_estimate=0.0, conj_norm=0.0,
                       dual_upper=True, dual_lower=True, evaluable=True)
            return row
        if not lux.converged:
            row.update(evaluable=False, reason=lux.status)
            return row
        try:
            am = amemiya_norm(phi, u, refinements=refinements, lux=lux)
        except SurrogateFailed as exc:
            row.update(evaluable=False, reason=str(exc))
            return row
        row["amemiya"] = am
        row["ratio"] = am / lux.value
        row["sandwich"] = lux.value <= am + tol and am <= 2 * lux.value + tol
        others = [g for k, g in enumerate(funcs) if k != i]
        dual = dual_functional_norm(phi, u, others, delta=delta, refinements=refinements)
        if not dual.lux_v.converged:
            row.update(evaluable=False, reason=f"conjugate norm {dual.lux_v.status}")
            return row
        row.update(dual_estimate=dual.lower_estimate, conj_norm=dual.lux_v.value,
                   dual_upper=dual.upper_holds, dual_lower=bool(dual.lower_holds),
                   evaluable=True)
        return row

    rows = _parallel(measure, range(len(corpus)))
    evaluable = [r for r in rows if r["evaluable"]]
    frac = len(evaluable) / len(rows) if rows else 0.0
    all_ok = all(r["sandwich"] and r["dual_upper"] and r["dual_lower"] for r in evaluable)
    ratios = [r["ratio"] for r in evaluable if "ratio" in r]
    verdict = "pass" if frac >= EVALUABLE_FRACTION and all_ok else "fail"
    thresholds = {"sandwich_tol": tol, "dual_delta": delta,
                  "evaluable_fraction": EVALUABLE_FRACTION}
    sweep = [[r["name"], r.get("luxemburg"), r.get("amemiya")] for r in rows]
    summary = {"evaluable_fraction": frac, "max_amemiya_ratio": max(ratios, default=math.nan)}
    return ExperimentReport("sandwich", phi.describe(), sweep, verdict, thresholds, rows,
                            [], summary)
