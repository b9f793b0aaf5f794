import itertools
import json

import pytest
from hypothesis import given, strategies as st

from nimargin.estimand import (Alignment, AnalysisEvidence, Endpoint, Estimand,
                               IntercurrentEventSpec, PopulationTags, Strategy,
                               classify_historical_estimand, compare_estimands)
from nimargin.estimand import _FLAGS


def test_identity_is_exact(ni_estimand):
    report = compare_estimands(ni_estimand, ni_estimand)
    assert report.overall is Alignment.EXACT


def test_ni_trial_vs_step_primary(ni_estimand, step_primary):
    report = compare_estimands(ni_estimand, step_primary)
    aoi = report.per_intercurrent_event["Other anti-obesity intervention"]
    assert aoi.status is Alignment.DIFFERENT_STRATEGY
    assert (aoi.strategy_a, aoi.strategy_b) == (Strategy.HYPOTHETICAL,
                                                Strategy.TREATMENT_POLICY)
    disc = report.per_intercurrent_event["Treatment discontinuation"]
    assert disc.status is Alignment.SAME_STRATEGY
    assert report.per_attribute["endpoint"].status is Alignment.EXACT
    assert report.overall is Alignment.PARTIAL


def test_step_primary_vs_supplementary(step_primary, step_supplementary):
    report = compare_estimands(step_primary, step_supplementary)
    assert all(v.status is Alignment.DIFFERENT_STRATEGY
               for v in report.per_intercurrent_event.values())
    assert len(report.per_intercurrent_event) == 2
    assert report.overall is Alignment.PARTIAL


def test_text_comparison_folds_case_and_whitespace(ni_estimand):
    other = Estimand.from_dict({**ni_estimand.to_dict(),
                                "population": "  " + ni_estimand.population.upper()
                                .replace(" ", "   ")})
    assert compare_estimands(ni_estimand, other).overall is Alignment.EXACT


@pytest.mark.parametrize("change, expected", [
    ({"population_summary": "mean_ratio"}, Alignment.INCOMPATIBLE),
    ({"endpoint": {"measure": "Absolute change in body weight (kg)",
                   "baseline_week": 0, "assessment_week": 68}},
     Alignment.INCOMPATIBLE),
    ({"endpoint": {"measure": "Relative change in body weight (%)",
                   "baseline_week": 0, "assessment_week": 52}},
     Alignment.PARTIAL),
    ({"population": "Adolescents"}, Alignment.PARTIAL),
])
def test_overall_thresholds(ni_estimand, change, expected):
    other = Estimand.from_dict({**ni_estimand.to_dict(), **change})
    assert compare_estimands(ni_estimand, other).overall is expected
    assert compare_estimands(other, ni_estimand).overall is expected


def test_missing_event_in_other(ni_estimand):
    pre_e9 = Estimand.from_dict({**ni_estimand.to_dict(), "intercurrent_events": []})
    report = compare_estimands(ni_estimand, pre_e9)
    assert {v.status for v in report.per_intercurrent_event.values()} == \
        {Alignment.MISSING_IN_OTHER}
    assert report.overall is Alignment.PARTIAL


def test_invariants_rejected():
    with pytest.raises(ValueError):
        Endpoint("x", 10, 10)
    with pytest.raises(ValueError):
        Endpoint("x", -1, 10)
    with pytest.raises(ValueError):
        IntercurrentEventSpec(" ", Strategy.HYPOTHETICAL)
    with pytest.raises(ValueError):
        Estimand("p", "t", Endpoint("x", 0, 1), intercurrent_events=(
            IntercurrentEventSpec("A", Strategy.HYPOTHETICAL),
            IntercurrentEventSpec("a", Strategy.TREATMENT_POLICY)))


def test_json_round_trip(ni_estimand):
    text = ni_estimand.to_json()
    doc = json.loads(text)
    assert set(doc) == {"population", "treatment_conditions", "endpoint",
                        "population_summary", "intercurrent_events"}
    assert doc["intercurrent_events"][1]["strategy"] == "hypothetical"
    assert Estimand.from_json(text) == ni_estimand
    tagged = Estimand.from_dict({**doc, "population_tags": {"adults": True}})
    assert Estimand.from_json(tagged.to_json()) == tagged


_text = st.text(alphabet="abcdef XYZ", min_size=1, max_size=12).filter(str.strip)


@st.composite
def estimands(draw):
    base = draw(st.integers(0, 20))
    names = draw(st.lists(_text, max_size=4, unique_by=lambda s: " ".join(s.split()).casefold()))
    return Estimand(
        population=draw(_text),
        treatment_conditions=draw(_text),
        endpoint=Endpoint(draw(_text), base, base + draw(st.integers(1, 60))),
        population_summary=draw(st.sampled_from(["mean_difference", "mean_ratio", "odds"])),
        intercurrent_events=tuple(IntercurrentEventSpec(n, draw(st.sampled_from(Strategy)))
                                  for n in names),
        population_tags=draw(st.none() | st.builds(PopulationTags, adults=st.booleans())),
    )


@given(estimands())
def test_self_comparison_exact(e):
    assert compare_estimands(e, e).overall is Alignment.EXACT


@given(estimands(), estimands())
def test_comparison_symmetric(a, b):
    ab, ba = compare_estimands(a, b), compare_estimands(b, a)
    assert ab.overall is ba.overall
    assert {k: v.status for k, v in ab.per_attribute.items()} == \
        {k: v.status for k, v in ba.per_attribute.items()}
    assert [v.status for v in ab.per_intercurrent_event.values()] == \
        [v.status for v in ba.per_intercurrent_event.values()]


# -- classification -------------------------------------------------------------

def test_retrieved_data_locf_is_treatment_policy():
    ev = AnalysisEvidence(post_ie_data_included=True, post_ie_data_collected=True)
    assert classify_historical_estimand(ev)[0] is Strategy.TREATMENT_POLICY


def test_mmrm_on_treatment_is_hypothetical():
    ev = AnalysisEvidence(post_ie_data_included=False,
                          post_ie_data_modeled_as_missing=True,
                          restricted_to_pre_ie_data=False)
    assert classify_historical_estimand(ev)[0] is Strategy.HYPOTHETICAL


def test_per_protocol_is_non_causal():
    strategy, rationale = classify_historical_estimand(
        AnalysisEvidence(per_protocol_set=True))
    assert strategy is Strategy.NON_CAUSAL
    assert "per-protocol" in rationale


def test_no_evidence_is_unknown():
    assert classify_historical_estimand(AnalysisEvidence())[0] is Strategy.UNKNOWN


def test_no_post_ie_collection_notes_multiple_estimands():
    strategy, rationale = classify_historical_estimand(
        AnalysisEvidence(post_ie_data_collected=False))
    assert strategy is Strategy.UNKNOWN
    assert "multiple estimands" in rationale


def test_mutually_exclusive_shapes_rejected():
    with pytest.raises(ValueError):
        AnalysisEvidence(endpoint_modified_by_ie=True, restricted_to_pre_ie_data=True)


def test_all_flag_vectors():
    seen = set()
    n_valid = 0
    for values in itertools.product((True, False, None), repeat=len(_FLAGS)):
        kw = dict(zip(_FLAGS, values))
        try:
            ev = AnalysisEvidence(**kw)
        except ValueError:
            shapes = [kw["endpoint_modified_by_ie"], kw["restricted_to_pre_ie_data"],
                      kw["subpopulation_by_post_randomization"]]
            assert shapes.count(True) > 1
            continue
        n_valid += 1
        strategy, rationale = classify_historical_estimand(ev)
        assert isinstance(strategy, Strategy) and rationale
        assert classify_historical_estimand(ev) == (strategy, rationale)
        seen.add(strategy)
    assert n_valid == 3 ** 4 * (3 ** 3 - 7)
    assert seen == set(Strategy)


# each pair: (higher-priority rule flags, lower-priority rule flags, winner)
PRIORITY_PAIRS = [
    ({"per_protocol_set": True}, {"post_ie_data_included": True}, Strategy.NON_CAUSAL),
    ({"post_ie_data_included": True}, {"endpoint_modified_by_ie": True},
     Strategy.TREATMENT_POLICY),
    ({"endpoint_modified_by_ie": True}, {"post_ie_data_modeled_as_missing": True},
     Strategy.COMPOSITE),
    ({"restricted_to_pre_ie_data": True}, {"post_ie_data_collected": False},
     Strategy.WHILE_ALIVE),
    ({"subpopulation_by_post_randomization": True},
     {"post_ie_data_modeled_as_missing": True}, Strategy.PRINCIPAL_STRATUM),
    ({"post_ie_data_modeled_as_missing": True}, {"post_ie_data_collected": False},
     Strategy.HYPOTHETICAL),
    ({"post_ie_data_included": True}, {"post_ie_data_modeled_as_missing": True},
     Strategy.TREATMENT_POLICY),
]


@pytest.mark.parametrize("high, low, winner", PRIORITY_PAIRS)
def test_rule_priority(high, low, winner):
    assert classify_historical_estimand(AnalysisEvidence(**high, **low))[0] is winner


def test_while_alive_requires_no_modelling():
    ev = AnalysisEvidence(restricted_to_pre_ie_data=True,
                          post_ie_data_modeled_as_missing=True)
    assert classify_historical_estimand(ev)[0] is Strategy.HYPOTHETICAL


def test_evidence_dict_round_trip():
    ev = AnalysisEvidence(post_ie_data_included=True, per_protocol_set=False,
                          notes="retrieved data")
    d = ev.to_dict()
    assert d["post_ie_data_included"] == "yes" and d["per_protocol_set"] == "no"
    assert d["post_ie_data_collected"] == "unknown"
    assert AnalysisEvidence.from_dict(d) == ev
    assert AnalysisEvidence.from_dict({"post_ie_data_included": True}) == \
        AnalysisEvidence(post_ie_data_included=True)
    with pytest.raises(ValueError):
        AnalysisEvidence.from_dict({"post_ie_data_included": "maybe"})
    with pytest.raises(ValueError):
        AnalysisEvidence.from_dict({"typo_flag": "yes"})
