"""Acceptance criteria, one test per criterion, each logging a PASS/FAIL line."""

import math

import numpy as np

from mokit.cli import main
from mokit.conjugate import conjugate_eval, conjugate_phi, conjugate_values, young_gap
from mokit.experiments import (
    default_corpus,
    run_kr_counterexample,
    run_modular_vs_norm_equivalence,
    run_mollifier_convergence,
    run_sandwich_and_duality_suite,
    run_translation_continuity,
    run_truncation_density,
)
from mokit.grid import Domain, GridFunction, modular, sample
from mokit.norms import holder_check, luxemburg_norm
from mokit.phi import check_delta2, make_phi

from conftest import indicator, record

UNIT = Domain.interval(0.0, 1.0, 1000)
SQUARE = make_phi("M1", {"p": "2"})
FAMILIES = [
    make_phi("M1", {"p": "2 + x"}),
    make_phi("M2", {"p": "1.5 + x"}),
    make_phi("M3", {"p": "3"}),
    make_phi("M4", {"p": 2, "q": 4, "a": "x"}),
]


def lp_cases():
    """(label, u, closed-form ‖u‖_p as a function of p) on (0, 1)."""
    cases = [(f"const {c}", sample(repr(c), UNIT), lambda p, c=c: c) for c in (0.5, 1.0, 3.0)]
    for lo, hi, c in ((0.0, 0.5, 1.0), (0.3, 0.6, 1.0), (0.25, 0.75, 2.0)):
        u = indicator(lo, hi, UNIT) * c
        cases.append((f"{c}*chi({lo},{hi})", u, lambda p, m=hi - lo, c=c: c * m ** (1 / p)))
    for a in (1.0, 2.0):
        cases.append((f"{a}*x", sample(f"{a}*x", UNIT),
                      lambda p, a=a: a * (1 / (p + 1)) ** (1 / p)))
    cases.append(("1-x", sample("1 - x", UNIT), lambda p: (1 / (p + 1)) ** (1 / p)))
    cases.append(("x^2", sample("x^2", UNIT), lambda p: (1 / (2 * p + 1)) ** (1 / p)))
    return cases


def test_luxemburg_norm_oracle():
    worst, n = 0.0, 0
    for p in (1.5, 2.0, 3.0):
        phi = make_phi("M1", {"p": repr(p)})
        for _, u, exact in lp_cases():
            r = luxemburg_norm(phi, u)
            worst = max(worst, abs(r.value - exact(p)) / exact(p))
            n += 1
    ok = worst <= 1e-6
    record("Luxemburg-norm oracle", ok, f"{n} cases, max rel err {worst:.3g} (tol 1e-6)")
    assert ok


def test_conjugate_oracle_and_biconjugation():
    worst = 0.0
    for p in (1.5, 2.0, 3.0):
        q = p / (p - 1)
        phi = make_phi("custom", {"expr": f"abs(s)^{p}/{p}"})
        for s in 10.0 ** np.arange(-3, 4):
            got = conjugate_eval(phi, 0.5, s).value
            worst = max(worst, abs(got - s ** q / q) / (s ** q / q))
    bi = 0.0
    xs = np.repeat(np.linspace(0.05, 0.95, 7), 15)
    ss = np.tile(np.linspace(0.0, 3.0, 15), 7)
    for phi in FAMILIES:
        twice = conjugate_values(conjugate_phi(phi), xs, ss)
        direct = phi.evaluate(xs, ss)
        bi = max(bi, float(np.max(np.abs(twice - direct) / np.maximum(1.0, direct))))
    ok = worst <= 1e-6 and bi <= 1e-5
    record("Conjugate oracle", ok,
           f"max rel err {worst:.3g} (tol 1e-6); biconjugation M1-M4 err {bi:.3g} (tol 1e-5)")
    assert ok


def test_young_and_holder_suites():
    rng = np.random.default_rng(20241015)
    min_gap = math.inf
    for phi in FAMILIES:
        x = rng.uniform(0, 1, 2500)
        u = rng.uniform(0, 10, 2500) * rng.uniform(0, 1, 2500)
        v = rng.uniform(0, 40, 2500) * rng.uniform(0, 1, 2500)
        min_gap = min(min_gap, float(np.min(young_gap(phi, x, u, v))))
    max_eq = 0.0
    for phi in FAMILIES:
        x = rng.uniform(0, 1, 250)
        u = rng.uniform(0, 3, 250)
        v = phi.density(x, u)
        max_eq = max(max_eq, float(np.max(np.abs(young_gap(phi, x, u, v)))))
    dom = Domain.interval(0.0, 1.0, 8)
    min_slack, skipped = math.inf, 0
    for i in range(1000):
        phi = FAMILIES[i % 4]
        u = GridFunction(dom, rng.normal(size=8) * rng.uniform(0.1, 5))
        v = GridFunction(dom, rng.normal(size=8) * rng.uniform(0.1, 5))
        rep = holder_check(phi, u, v)
        if not rep.evaluable:
            skipped += 1
            continue
        min_slack = min(min_slack, rep.slack)
    ok = min_gap >= -1e-9 and max_eq <= 1e-6 and min_slack >= -1e-8 and skipped == 0
    record("Young/Hoelder suites", ok,
           f"min gap {min_gap:.3g} over 1e4 triples; max equality gap {max_eq:.3g} over 1e3 "
           f"witnesses; min Hoelder slack {min_slack:.3g} over 1e3 pairs ({skipped} skipped)")
    assert ok


def _random_corpus(seed=0, count=4):
    rng = np.random.default_rng(seed)
    dom = Domain.interval(0.0, 1.0, 200)
    return [(f"random_{k}", GridFunction(dom, rng.normal(size=200) * rng.uniform(0.2, 3)))
            for k in range(count)]


def test_sandwich():
    corpus = default_corpus() + _random_corpus()
    phis = [SQUARE, make_phi("M1", {"p": "2 + x"}), make_phi("M4", {"p": 2, "q": 4, "a": "1"}),
            make_phi("M4", {"p": 2, "q": 4, "a": "x"})]
    worst_ratio, passed, frac = 0.0, True, 1.0
    for phi in phis:
        rep = run_sandwich_and_duality_suite(phi, corpus)
        passed = passed and rep.passed
        frac = min(frac, rep.summary["evaluable_fraction"])
        worst_ratio = max(worst_ratio, rep.summary["max_amemiya_ratio"])
        for row in rep.table_rows:
            if row.get("evaluable") and "amemiya" in row and row["luxemburg"] > 0:
                lux, am = row["luxemburg"], row["amemiya"]
                passed = passed and lux <= am + 1e-6 and am <= 2 * lux + 1e-6
    ok = passed and worst_ratio >= 1.3
    record("Sandwich", ok, f"{len(corpus)} functions x {len(phis)} phis, evaluable >= {frac:.2f}, "
                           f"max amemiya/luxemburg {worst_ratio:.4f} (need >= 1.3)")
    assert ok


def test_unit_ball_equivalence():
    lo, hi = math.inf, -math.inf
    for p in (1.5, 2.0, 3.0):
        phi = make_phi("M1", {"p": repr(p)})
        for _, u, _ in lp_cases():
            r = luxemburg_norm(phi, u)
            m = modular(phi, u / r.value, 1.0).value
            lo, hi = min(lo, m), max(hi, m)
    for phi in FAMILIES:
        r = luxemburg_norm(phi, sample("1 + sin(7*x)", UNIT))
        m = modular(phi, sample("1 + sin(7*x)", UNIT) / r.value, 1.0).value
        lo, hi = min(lo, m), max(hi, m)
    rng = np.random.default_rng(7)
    dom = Domain.interval(0.0, 1.0, 50)
    worst = 0.0
    for i in range(100):
        phi = FAMILIES[i % 4]
        u = GridFunction(dom, rng.normal(size=50) * rng.uniform(0.1, 4))
        m = modular(phi, u, 1.0).value
        if m > 1:
            u = u * (rng.uniform(0.3, 1.0) / m)
        assert modular(phi, u, 1.0).value <= 1.0
        worst = max(worst, luxemburg_norm(phi, u).value)
    ok = lo >= 1 - 1e-4 and hi <= 1 + 1e-8 and worst <= 1 + 1e-8
    record("Unit-ball equivalence", ok,
           f"modular(u/value) in [{lo:.10f}, {hi:.10f}]; max norm with modular <= 1: "
           f"{worst:.10f}")
    assert ok


def test_kr_counterexample():
    rep = run_kr_counterexample(2, 4, 0.1, refinements=6)
    inc = rep.summary["shifted_increments"][-3:]
    ok = (abs(rep.summary["modular_f"] - 2.0) <= 0.04 and rep.summary["shifted_divergent"]
          and all(d >= 0.15 for d in inc) and rep.passed)
    record("KR counterexample", ok,
           f"modular(f)={rep.summary['modular_f']:.6f}, shifted divergent="
           f"{rep.summary['shifted_divergent']}, last increments "
           + ", ".join(f"{d:.4f}" for d in inc))
    assert ok


def test_m_mean_continuity():
    chi = indicator(0.3, 0.6, UNIT)
    rep = run_translation_continuity(SQUARE, chi, (0.1, 0.05, 0.025))
    err = max(abs(v - math.sqrt(2 * h)) / math.sqrt(2 * h) for h, v in rep.sweep)
    var = run_translation_continuity(make_phi("M1", {"p": "2 + x"}), chi,
                                     (0.1, 0.05, 0.025, 0.0125))
    # M4 decays like h^{1/4} in the quartic part, so its sweep runs further down
    m4 = run_translation_continuity(make_phi("M4", {"p": 2, "q": 4, "a": "x"}), chi,
                                    (0.1, 0.05, 0.025, 0.0125, 0.00625, 0.003125))
    ok = err <= 0.05 and var.passed and m4.passed
    record("M-mean continuity", ok,
           f"p=2 max rel err vs (2h)^(1/2) {err:.3g}; p=2+x final {var.sweep[-1][1]:.4f} "
           f"({var.verdict}); M4 final {m4.sweep[-1][1]:.4f} at h={m4.sweep[-1][0]} "
           f"({m4.verdict})")
    assert ok


def test_mollifier_convergence():
    rep = run_mollifier_convergence(SQUARE, indicator(0.3, 0.7, UNIT), (0.1, 0.05, 0.025))
    values = [v for _, v in rep.sweep]
    bound = math.sqrt(4 * 0.025) * 1.1
    ok = all(a > b for a, b in zip(values, values[1:])) and values[-1] < bound
    record("Mollifier convergence", ok,
           "norms " + ", ".join(f"{v:.5f}" for v in values) + f"; bound {bound:.5f}")
    assert ok


def test_truncation_density():
    js = (2, 4, 8, 16)
    rep = run_truncation_density(SQUARE, sample("x^(-1/4)", UNIT), 1.0, js, refinements=6)
    mods = np.array([m for _, m in rep.sweep])
    slope = float(np.polyfit(np.log(js), np.log(mods), 1)[0])
    tail = 0.25 * 2 * np.array(js, dtype=float) ** -2.0
    c = float(np.exp(np.mean(np.log(mods / tail))))
    fit_err = float(np.max(np.abs(mods / (c * tail) - 1)))
    ok = abs(slope + 2) <= 0.2 and fit_err <= 0.1
    record("Truncation density", ok,
           f"log-log slope {slope:.3f} (need -2 +/- 0.2); max deviation from fitted "
           f"C*2j^-2/4 {fit_err:.3g} (need <= 0.1); modulars "
           + ", ".join(f"{m:.4g}" for m in mods))
    assert ok


def test_modular_norm_separation():
    non = run_modular_vs_norm_equivalence("non_delta2", (4, 6, 8, 10))
    last = non.table_rows[-1]
    norms = [r["norm"] for r in non.table_rows]
    d2 = run_modular_vs_norm_equivalence("delta2")
    ok = (last["n"] == 10 and last["modular_lambda_2"] < 1e-3 and min(norms) >= 0.6
          and d2.passed)
    record("Modular/norm separation", ok,
           f"non-delta2 modular(u_10, 2)={last['modular_lambda_2']:.3g}, min norm "
           f"{min(norms):.6f}; delta2 final modular {d2.sweep[-1][1]:.3g}, norm "
           f"{d2.sweep[-1][2]:.3g} ({d2.verdict})")
    assert ok


def test_delta2_checkers():
    m1 = check_delta2(make_phi("M1", {"p": "2 + 2*x"}), assumed_k=16)
    m4 = check_delta2(make_phi("M4", {"p": 2, "q": 4, "a": "1 + x"}), assumed_k=16)
    m5 = make_phi("M5", {"p": "2"})
    witnesses = []
    for k in (2.0, 16.0, 1e3, 1e6):
        for h in (0.0, 1.0, 1e6):
            v = check_delta2(m5, assumed_k=k, assumed_h_bound=h)
            witnesses.append((k, h, v.status, v.witness))
    ok = (m1.status == "consistent" and m4.status == "consistent"
          and all(s == "falsified" and w is not None for _, _, s, w in witnesses))
    k, h, _, w = witnesses[-1]
    record("Delta2 checkers", ok,
           f"M1 {m1.status}, M4 {m4.status}; M5 falsified for all {len(witnesses)} (k, h) "
           f"pairs, witness at k={k:g}, h={h:g}: x={w[0]}, t={w[1]:.6g}, "
           f"ratio={w[2]:.6g}")
    assert ok


CONFIG = """\
[phi]
family = M1
p = 2 + x

[domain]
bounds = 0, 1
resolution = 1000

[functions]
chi = ind((x > 0.3) and (x < 0.6))

[run]
seed = 3

[command.1]
op = norm
u = chi
amemiya = true

[command.2]
op = experiment
name = translation
u = chi
h = 0.1, 0.05, 0.025, 0.0125

[command.3]
op = experiment
name = kr

[command.4]
op = experiment
name = sandwich
refinements = 1
"""


def test_determinism(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text(CONFIG)
    codes = [main(["run", str(cfg), "--output-dir", str(tmp_path / d), "--timestamp", "PIN"])
             for d in ("a", "b")]
    capsys.readouterr()
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    same = names == sorted(p.name for p in (tmp_path / "b").iterdir()) and all(
        (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in names)
    ok = same and codes == [0, 0] and len(names) == 9
    record("Determinism", ok, f"{len(names)} artifacts byte-identical across two runs: {same}")
    assert ok
