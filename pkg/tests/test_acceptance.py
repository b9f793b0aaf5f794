"""
Acceptance suite. Each test covers one headline criterion and prints a single
PASS/FAIL line; the lines are repeated in the terminal summary.
"""

import time
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import EVIDENCE_EXPECTED, FIXTURES, criterion
from nimargin.estimand import AnalysisEvidence, classify_historical_estimand
from nimargin.evidence import STEP_CRITERIA, bundled_path, effects_for, ingest, select
from nimargin.meta import (HierarchicalModelSpec, TrialEffect, derive_m1,
                           fit_hierarchical, fixed_effect_mean, se_from_ci)
from nimargin.simulation import (Arm, IeModel, TrajectoryModel, run_grid,
                                 simulate_cohort)
from test_cli import SUBCOMMANDS, run_twice

# Published effects, their listed standard errors and 95% CIs, transcribed
# by hand: (trial, estimand, effect, listed SE, CI low, CI high).
PUBLISHED = [
    ("STEP 1", "treatment_policy", -12.44, 0.474499, -13.37, -11.51),
    ("STEP 1", "hypothetical", -14.4, 0.459192, -15.3, -13.5),
    ("STEP 2", "treatment_policy", -6.21, 0.545928, -7.28, -5.15),
    ("STEP 2", "hypothetical", -7.6, 0.510213, -8.6, -6.6),
    ("STEP 3", "treatment_policy", -10.3, 0.867363, -12.0, -8.6),
    ("STEP 3", "hypothetical", -12.7, 0.816342, -14.3, -11.0),
    ("STEP 5", "treatment_policy", -12.6, 0.969406, -14.5, -10.7),
    ("STEP 5", "hypothetical", -14.3, 0.918384, -16.1, -12.4),
    ("STEP 6", "treatment_policy", -11.1, 0.918384, -12.9, -9.2),
    ("STEP 6", "hypothetical", -11.35, 0.943895, -13.2, -9.5),
    ("STEP 8", "treatment_policy", -13.9, 1.428598, -16.7, -11.0),
    ("STEP 8", "hypothetical", -15.3, 1.326555, -17.9, -12.7),
    ("STEP 9", "treatment_policy", -10.5, 0.918384, -12.3, -8.6),
    ("STEP 9", "hypothetical", -12.1, 0.867363, -13.8, -10.5),
    ("STEP 10", "treatment_policy", -11.2, 0.918384, -13.0, -9.4),
    ("STEP 10", "hypothetical", -13.3, 0.969406, -15.2, -11.4),
]


def published_effects(estimand, drop=()):
    return [TrialEffect(t, e, y, s) for t, e, y, s, _, _ in PUBLISHED
            if e == estimand and t not in drop]


def close(value, target, tol):
    return abs(value - target) <= tol


def check_pooled(detail, key, post, mean, ci, tol_mean=0.3, tol_ci=0.5):
    detail[key] = f"{post.mu_mean:.3f} ({post.ci95[0]:.3f}, {post.ci95[1]:.3f})"
    assert close(post.mu_mean, mean, tol_mean), f"{key} mean {post.mu_mean} vs {mean}"
    assert close(post.ci95[0], ci[0], tol_ci), f"{key} lower {post.ci95[0]} vs {ci[0]}"
    assert close(post.ci95[1], ci[1], tol_ci), f"{key} upper {post.ci95[1]} vs {ci[1]}"


def test_meta_analysis_golden_numbers():
    with criterion("meta-analysis golden numbers") as d:
        t0 = time.perf_counter()
        tp = fit_hierarchical(published_effects("treatment_policy"))
        hyp = fit_hierarchical(published_effects("hypothetical"))
        elapsed = time.perf_counter() - t0
        check_pooled(d, "tp", tp, -10.9, (-13.0, -8.85))
        check_pooled(d, "hyp", hyp, -12.6, (-14.8, -10.3))
        d["runtime_s"] = f"{elapsed:.2f}"
        assert elapsed < 1.0, f"runtime {elapsed:.2f}s"


def test_sensitivity_without_step2():
    with criterion("sensitivity excluding STEP 2") as d:
        tp = fit_hierarchical(published_effects("treatment_policy", {"STEP 2"}))
        hyp = fit_hierarchical(published_effects("hypothetical", {"STEP 2"}))
        check_pooled(d, "tp", tp, -11.7, (-12.7, -10.5))
        check_pooled(d, "hyp", hyp, -13.4, (-14.6, -12.0))


def test_scale_derivation():
    with criterion("SCALE derivation") as d:
        recs = ingest(bundled_path("scale"))
        effects = effects_for(recs, "treatment_policy")
        assert [e.trial_id for e in effects] == [
            "SCALE Maintenance", "SCALE Obesity and Prediabetes", "SCALE Insulin"]
        for e in effects:
            assert e.s == se_from_ci(e.ci_lo, e.ci_hi)
        post = fit_hierarchical(effects)
        check_pooled(d, "tp", post, -5.04, (-6.87, -2.94))
        m1 = derive_m1(post).m1
        d["m1"] = f"{m1:.3f}"
        assert close(m1, 2.94, 0.5)


def test_m1_extraction_exact():
    with criterion("M1 extraction on published interval") as d:
        m1 = derive_m1((-13, -8.85)).m1
        d["m1"] = repr(m1)
        assert m1 == 8.85


def test_se_validation():
    with criterion("SE validation (16 rows)") as d:
        bad = []
        for trial, est, _, se, lo, hi in PUBLISHED:
            diff = abs(se_from_ci(lo, hi) - se)
            if diff > 1e-3:
                bad.append(f"{trial}/{est} off by {diff:.5f}")
        d["matching"] = f"{len(PUBLISHED) - len(bad)}/{len(PUBLISHED)}"
        assert not bad, ", ".join(bad)


def test_simulation_fidelity():
    with criterion("simulation fidelity (n=20000)") as d:
        t0 = time.perf_counter()
        grid = run_grid(n_per_arm=20_000, seed=42)
        elapsed = time.perf_counter() - t0
        d["runtime_s"] = f"{elapsed:.2f}"
        at0 = {s.arm: s.mean_week68_observed for s in grid.summaries if s.p0 == 0}
        d["ref0"] = f"{at0[Arm.REFERENCE]:.3f}"
        d["pla0"] = f"{at0[Arm.PLACEBO]:.3f}"
        assert close(at0[Arm.REFERENCE], -16.8, 0.25)
        assert close(at0[Arm.PLACEBO], -3.02, 0.25)

        placebo = [s.mean_week68_observed for s in grid.summaries if s.arm is Arm.PLACEBO]
        d["placebo_range"] = f"{max(placebo) - min(placebo):.3f}"
        assert max(placebo) - min(placebo) <= 0.3

        for (p_a, tp_a, _, se_a), (p_b, tp_b, _, _) in zip(grid.effects, grid.effects[1:]):
            assert abs(tp_b) <= abs(tp_a) + 2 * se_a, f"|effect| rises at p0={p_b}"

        _, tp0, hyp0, _ = grid.effects[0]
        assert tp0 == hyp0, "effects at p0=0 not bitwise equal"
        assert elapsed < 30, f"runtime {elapsed:.1f}s"


def test_closed_form_event_oracle():
    with criterion("closed-form IE oracle") as d:
        flat = TrajectoryModel(mean_placebo=(0.0,) * 12, mean_reference=(0.0,) * 12,
                               variance=1e-300)
        cohort = simulate_cohort(flat, Arm.REFERENCE, IeModel.from_p0(0.05),
                                 100_000, seed=42)
        assert max(abs(j.latent).max() for j in cohort[:100]) < 1e-100
        freq = sum(j.ie_visit_index is not None for j in cohort) / len(cohort)
        expected = 1 - 0.95 ** 11
        d["freq"] = f"{freq:.4f}"
        d["expected"] = f"{expected:.4f}"
        assert close(freq, expected, 0.01)


def test_fixed_effect_oracle():
    spec = HierarchicalModelSpec(tau_prior_scale=1e-6, mu_prior_sd=1e6)
    worst = [0.0]

    @settings(max_examples=100, deadline=None, database=None)
    @given(st.lists(st.tuples(st.floats(-30, 30), st.floats(0.05, 5)),
                    min_size=2, max_size=10))
    def prop(pairs):
        eff = [TrialEffect(f"T{i}", "x", y, s) for i, (y, s) in enumerate(pairs)]
        diff = abs(fit_hierarchical(eff, spec).mu_mean - fixed_effect_mean(eff))
        worst[0] = max(worst[0], diff)
        assert diff < 1e-3

    with criterion("fixed-effect oracle (100 cases)") as d:
        prop()
        d["max_abs_diff"] = f"{worst[0]:.2e}"


def test_selection_flow():
    with criterion("selection flow (12-trial catalogue)") as d:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            recs = ingest(bundled_path("step_catalogue"))
        assert len(recs) == 12
        report = select(recs, STEP_CRITERIA)
        d["included"] = len(report.included)
        assert report.included == ["STEP 1", "STEP 2", "STEP 3", "STEP 5", "STEP 6",
                                   "STEP 8", "STEP 9", "STEP 10"]
        assert {x.trial_id: x.reason_code for x in report.excluded} == {
            "STEP 0": "dosing", "STEP TEENS": "population",
            "STEP 4": "manual", "STEP 7": "endpoint_window"}


def test_classification_rules():
    import json
    with criterion("classification rules (7 fixtures)") as d:
        agree = []
        for name, expected in EVIDENCE_EXPECTED.items():
            ev = AnalysisEvidence.from_dict(
                json.loads((FIXTURES / "evidence" / name).read_text()))
            agree.append(classify_historical_estimand(ev)[0] is expected)
        d["agreement"] = f"{sum(agree)}/{len(agree)}"
        assert len(agree) == 7 and all(agree)


def test_cli_determinism(tmp_path):
    with criterion("CLI determinism (all subcommands)") as d:
        names = []
        for i, argv in enumerate(SUBCOMMANDS):
            first, second = run_twice(tmp_path / str(i), argv)
            assert first == second, f"{argv[0]} output differs between runs"
            names.append(argv[0])
        d["checked"] = ",".join(names + ["report"])
