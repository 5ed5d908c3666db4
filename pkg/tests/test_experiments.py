import csv
import io
import json
import math

import numpy as np
import pytest

from mokit.experiments import (
    ExperimentReport,
    default_corpus,
    nonincreasing,
    run_kr_counterexample,
    run_modular_vs_norm_equivalence,
    run_mollifier_convergence,
    run_sandwich_and_duality_suite,
    run_translation_continuity,
    run_truncation_density,
)
from mokit.grid import Domain, sample
from mokit.operators import mollify
from mokit.phi import make_phi

from conftest import indicator

SQUARE = make_phi("M1", {"p": "2"})
VARIABLE = make_phi("M1", {"p": "2 + x"})
M4_X = make_phi("M4", {"p": 2, "q": 4, "a": "x"})
H_SWEEP = (0.1, 0.05, 0.025, 0.0125)


@pytest.fixture(scope="module")
def d():
    return Domain.interval(0.0, 1.0, 1000)


def test_nonincreasing_allows_jitter():
    assert nonincreasing([1.0, 1.04, 0.5])
    assert not nonincreasing([1.0, 1.06])
    assert nonincreasing([0.0, 0.0])


# --------------------------------------------------------------------------- translation

def test_translation_constant_exponent_closed_form(d):
    rep = run_translation_continuity(SQUARE, indicator(0.3, 0.6, d), H_SWEEP, refinements=3)
    for h, value in rep.sweep:
        assert value == pytest.approx(math.sqrt(2 * h), rel=1e-6)
    assert rep.passed


def test_translation_variable_exponent_passes(d):
    rep = run_translation_continuity(VARIABLE, indicator(0.3, 0.6, d), H_SWEEP, refinements=3)
    values = [v for _, v in rep.sweep]
    assert all(a > b for a, b in zip(values, values[1:]))
    assert rep.passed
    assert rep.thresholds["final_below"] == 0.25


def test_translation_m4_decreases(d):
    rep = run_translation_continuity(M4_X, indicator(0.3, 0.6, d), H_SWEEP, refinements=3)
    values = [v for _, v in rep.sweep]
    assert all(a > b for a, b in zip(values, values[1:]))
    longer = run_translation_continuity(M4_X, indicator(0.3, 0.6, d),
                                        H_SWEEP + (0.00625, 0.003125), refinements=3)
    assert longer.passed


def test_translation_zero_shift(d):
    rep = run_translation_continuity(VARIABLE, indicator(0.3, 0.6, d), [0.0], refinements=1)
    assert rep.sweep == [[0.0, 0.0]]
    assert rep.table_rows[0]["status"] == "zero_function"


def test_translation_sweep_is_sorted_and_flags_clipping(d):
    rep = run_translation_continuity(SQUARE, indicator(0.3, 0.6, d), [0.05, 0.5, 0.1],
                                     refinements=1)
    assert [h for h, _ in rep.sweep] == [0.5, 0.1, 0.05]
    assert "clipping" in rep.notes[0]


# --------------------------------------------------------------------------- KR

def test_kr_counterexample():
    rep = run_kr_counterexample(2, 4, 0.1)
    assert rep.passed
    assert rep.summary["modular_f"] == pytest.approx(2.0, rel=0.02)
    assert rep.summary["shifted_divergent"]
    assert all(inc >= 0.15 for inc in rep.summary["shifted_increments"][-3:])


def test_kr_other_exponents():
    rep = run_kr_counterexample(1.5, 3, 0.2)
    assert rep.passed
    assert rep.summary["modular_f_exact"] == 2.0


def test_kr_zero_shift_is_finite_and_inconclusive():
    rep = run_kr_counterexample(2, 4, 0.0)
    assert not rep.summary["shifted_divergent"]
    assert rep.summary["modular_f_pass"]
    assert rep.verdict == "inconclusive"


@pytest.mark.parametrize("args", [(4, 2, 0.1), (0.5, 2, 0.1), (2, 4, 1.0), (2, 4, -0.1)])
def test_kr_rejects_bad_parameters(args):
    with pytest.raises(ValueError):
        run_kr_counterexample(*args)


# --------------------------------------------------------------------------- mollifier

def test_mollifier_sweep(d):
    rep = run_mollifier_convergence(SQUARE, indicator(0.3, 0.7, d), (0.1, 0.05, 0.025),
                                    refinements=2)
    values = [v for _, v in rep.sweep]
    assert all(a > b for a, b in zip(values, values[1:]))
    assert values[-1] < 0.3
    # band of width about 2ε per jump: the L² distance scales like ε^{1/2}
    assert values[1] / values[0] == pytest.approx(math.sqrt(0.5), rel=0.05)
    assert rep.passed


def test_mollifier_smooth_input_converges_immediately():
    d = Domain.interval(0.0, 1.0, 200)
    smooth = mollify(indicator(0.3, 0.7, d), 0.1, nodes=32)
    rep = run_mollifier_convergence(SQUARE, smooth, [0.002], refinements=1)
    assert rep.sweep[0][1] < 1e-2


def test_mollifier_zero_function(d):
    rep = run_mollifier_convergence(VARIABLE, sample("0", d, support_hint=((0.4, 0.6),)),
                                    (0.1, 0.05), refinements=1)
    assert [v for _, v in rep.sweep] == [0.0, 0.0]
    assert rep.passed


# --------------------------------------------------------------------------- truncation

def test_truncation_square_modular_decays(d):
    u = sample("x^(-1/4)", d)
    rep = run_truncation_density(SQUARE, u, 1.0, (1, 2, 4, 8, 16), refinements=6)
    mods = [m for _, m in rep.sweep]
    assert nonincreasing(mods)
    # the K_j mask removes (0, 1/j), so the decay is about j^{-1/2}
    assert mods[-1] < 0.3 * mods[0]
    assert rep.summary["norm_mode"]
    assert all("norm" in r for r in rep.table_rows)


def test_truncation_fixed_point():
    wide = Domain.interval(-3.0, 3.0, 600)
    u = sample("0.5*ind(abs(x) < 0.5)", wide, support_hint=((-0.5, 0.5),))
    rep = run_truncation_density(make_phi("M1", {"p": "2 + x^2"}), u, 1.0, (1, 2, 3),
                                 refinements=2)
    assert all(r["modular"] == 0.0 and r["norm"] == 0.0 for r in rep.table_rows)
    assert rep.passed


def test_truncation_non_delta2_skips_norm(d):
    u = sample("sqrt(log(1/x))", d)
    rep = run_truncation_density(make_phi("M5", {"p": "2"}), u, 2.0, (1, 2, 4, 8, 16),
                                 refinements=4)
    assert not rep.summary["norm_mode"]
    assert any("Δ2 falsified" in n for n in rep.notes)
    mods = [m for _, m in rep.sweep]
    assert nonincreasing(mods) and mods[-1] < mods[0]


def test_truncation_divergent_base_is_inconclusive(d):
    u = sample("1/x", d)
    rep = run_truncation_density(SQUARE, u, 1.0, (1, 2), refinements=6)
    assert rep.verdict == "inconclusive"


# --------------------------------------------------------------------------- separation

def test_separation_delta2():
    rep = run_modular_vs_norm_equivalence("delta2", refinements=1)
    assert rep.passed
    for n, m, v in rep.sweep:
        assert v == pytest.approx(1.0 / n, rel=1e-7)


def test_separation_non_delta2_matches_closed_form():
    rep = run_modular_vs_norm_equivalence("non_delta2")
    assert rep.passed
    assert "constructed-example" in rep.notes[0]
    for row in rep.table_rows:
        n = row["n"]
        assert row["modular_lambda_2"] == pytest.approx(row["modular_exact"], rel=1e-10)
        # e^{n/λ²} = 1 + e^{2n}
        exact = math.sqrt(n / math.log1p(math.exp(2 * n)))
        assert row["norm"] == pytest.approx(exact, rel=1e-7)
        assert row["norm"] >= 0.6


def test_separation_skips_degenerate_index():
    rep = run_modular_vs_norm_equivalence("non_delta2", (0, 4, 6))
    assert [r["n"] for r in rep.table_rows] == [4, 6]
    assert any("skipped" in n for n in rep.notes)
    with pytest.raises(ValueError):
        run_modular_vs_norm_equivalence("other")


# --------------------------------------------------------------------------- sandwich

def test_default_corpus_contents():
    names = [n for n, _ in default_corpus()]
    assert "zero" in names and any(n.startswith("chi") for n in names)
    assert any(n.startswith("ramp") for n in names)


def test_sandwich_square():
    rep = run_sandwich_and_duality_suite(SQUARE, refinements=2)
    assert rep.passed
    assert rep.summary["evaluable_fraction"] == 1.0
    by_name = {r["name"]: r for r in rep.table_rows}
    # ‖c‖ = c and the Amemiya norm of a constant under s² is 2c
    assert by_name["const_3"]["luxemburg"] == pytest.approx(3.0, rel=1e-7)
    assert by_name["const_3"]["amemiya"] == pytest.approx(6.0, rel=1e-6)
    assert by_name["zero"]["sandwich"]


def test_sandwich_m4_constant_weight():
    rep = run_sandwich_and_duality_suite(make_phi("M4", {"p": 2, "q": 4, "a": "1"}),
                                         refinements=2)
    assert rep.passed


# --------------------------------------------------------------------------- reports

def test_report_serialization(tmp_path):
    rep = ExperimentReport("demo", {"family": "M1"}, [[1, 0.5], [2, math.inf]], "pass",
                           {"t": 1}, [{"a": 1.0, "b": math.nan}, {"a": 0.1, "c": "x"}])
    data = json.loads(rep.to_json("T0"))
    assert data["timestamp"] == "T0"
    assert data["sweep"][1][1] == "inf"
    rows = list(csv.DictReader(io.StringIO(rep.to_csv())))
    assert [r["a"] for r in rows] == ["1.0", "0.1"]
    assert rows[1]["c"] == "x"
    jp, cp = rep.write(tmp_path, "T0")
    assert jp.name == "demo-M1-T0.json" and cp.name == "demo-M1-T0.csv"
    assert json.loads(jp.read_text()) == data


def test_reports_identical_across_thread_counts(monkeypatch, d):
    u = indicator(0.3, 0.6, d)
    monkeypatch.setenv("MOKIT_THREADS", "1")
    one = run_translation_continuity(VARIABLE, u, H_SWEEP, refinements=2).to_json("T")
    monkeypatch.setenv("MOKIT_THREADS", "4")
    four = run_translation_continuity(VARIABLE, u, H_SWEEP, refinements=2).to_json("T")
    assert one == four
    assert np.isfinite(json.loads(one)["sweep"][-1][1])
