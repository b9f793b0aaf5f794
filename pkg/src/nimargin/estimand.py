"""
Estimands as five-attribute records, alignment checks between two estimands,
and the rule table that infers which estimand a historical analysis targeted.

The alignment verdict (``AlignmentReport.overall``) is a construct of this
package: differences in endpoint measure or population-level summary make two
estimands incompatible, while population, treatment-condition or
intercurrent-event strategy differences only make them partially aligned.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from typing import Any, Optional


class Strategy(enum.Enum):
    TREATMENT_POLICY = "treatment_policy"
    HYPOTHETICAL = "hypothetical"
    COMPOSITE = "composite"
    WHILE_ALIVE = "while_alive"
    PRINCIPAL_STRATUM = "principal_stratum"
    NON_CAUSAL = "non_causal"
    UNKNOWN = "unknown"


def _fold(text: str) -> str:
    """Case- and whitespace-folded form used for all text comparisons."""
    return re.sub(r"\s+", " ", text).strip().casefold()


@dataclass(frozen=True)
class IntercurrentEventSpec:
    name: str
    strategy: Strategy
    definition: str = ""

    def __post_init__(self):
        if not self.name.strip():
            raise ValueError("intercurrent event name must be non-empty")


@dataclass(frozen=True)
class PopulationTags:
    adults: Optional[bool] = None
    bmi_criterion: str = ""
    diabetes_share_pct: Optional[float] = None
    prediabetes_share_pct: Optional[float] = None
    female_pct: Optional[float] = None


@dataclass(frozen=True)
class Endpoint:
    measure: str
    baseline_week: int
    assessment_week: int

    def __post_init__(self):
        if not (self.assessment_week > self.baseline_week >= 0):
            raise ValueError(
                f"need assessment_week > baseline_week >= 0, got "
                f"{self.baseline_week} -> {self.assessment_week}")


MEAN_DIFFERENCE = "mean_difference"
MEAN_RATIO = "mean_ratio"


@dataclass(frozen=True)
class Estimand:
    """
    Population, treatment conditions, endpoint, population-level summary and
    the intercurrent events with their handling strategies.

    ``population_summary`` is ``"mean_difference"``, ``"mean_ratio"`` or any
    other free text.
    """
    population: str
    treatment_conditions: str
    endpoint: Endpoint
    population_summary: str = MEAN_DIFFERENCE
    intercurrent_events: tuple[IntercurrentEventSpec, ...] = ()
    population_tags: Optional[PopulationTags] = None

    def __post_init__(self):
        object.__setattr__(self, "intercurrent_events",
                           tuple(self.intercurrent_events))
        seen = set()
        for ie in self.intercurrent_events:
            key = _fold(ie.name)
            if key in seen:
                raise ValueError(f"duplicate intercurrent event {ie.name!r}")
            seen.add(key)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "population": self.population,
            "treatment_conditions": self.treatment_conditions,
            "endpoint": {
                "measure": self.endpoint.measure,
                "baseline_week": self.endpoint.baseline_week,
                "assessment_week": self.endpoint.assessment_week,
            },
            "population_summary": self.population_summary,
            "intercurrent_events": [
                {"name": ie.name, "definition": ie.definition,
                 "strategy": ie.strategy.value}
                for ie in self.intercurrent_events
            ],
        }
        if self.population_tags is not None:
            d["population_tags"] = dict(vars(self.population_tags))
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Estimand":
        ep = d["endpoint"]
        tags = d.get("population_tags")
        return cls(
            population=d["population"],
            treatment_conditions=d["treatment_conditions"],
            endpoint=Endpoint(ep["measure"], int(ep["baseline_week"]),
                              int(ep["assessment_week"])),
            population_summary=d.get("population_summary", MEAN_DIFFERENCE),
            intercurrent_events=tuple(
                IntercurrentEventSpec(ie["name"], Strategy(ie["strategy"]),
                                      ie.get("definition", ""))
                for ie in d.get("intercurrent_events", [])),
            population_tags=PopulationTags(**tags) if tags else None,
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "Estimand":
        return cls.from_dict(json.loads(text))


# -- alignment ---------------------------------------------------------------

class Alignment(enum.Enum):
    EXACT = "exact"
    PARTIAL = "partial"
    MISMATCH = "mismatch"
    INCOMPATIBLE = "incompatible"
    SAME_STRATEGY = "same_strategy"
    DIFFERENT_STRATEGY = "different_strategy"
    MISSING_IN_OTHER = "missing_in_other"


@dataclass(frozen=True)
class AttributeVerdict:
    status: Alignment
    detail: str = ""


@dataclass(frozen=True)
class EventVerdict:
    status: Alignment
    strategy_a: Optional[Strategy] = None
    strategy_b: Optional[Strategy] = None


@dataclass(frozen=True)
class AlignmentReport:
    per_attribute: dict[str, AttributeVerdict]
    per_intercurrent_event: dict[str, EventVerdict]
    overall: Alignment


def _compare_text(a: str, b: str, attr: str, hard: bool) -> AttributeVerdict:
    if _fold(a) == _fold(b):
        return AttributeVerdict(Alignment.EXACT)
    status = Alignment.MISMATCH if hard else Alignment.PARTIAL
    return AttributeVerdict(status, f"{attr} differs: {a!r} vs {b!r}")


def compare_estimands(a: Estimand, b: Estimand) -> AlignmentReport:
    """
    Attribute-by-attribute alignment of two estimands.

    Text attributes are compared after case/whitespace folding. Intercurrent
    events are matched by folded name over the union of both event lists.
    """
    per_attr = {
        "population": _compare_text(a.population, b.population,
                                    "population", hard=False),
        "treatment_conditions": _compare_text(
            a.treatment_conditions, b.treatment_conditions,
            "treatment conditions", hard=False),
        "population_summary": _compare_text(
            a.population_summary, b.population_summary,
            "population-level summary", hard=True),
    }
    if a.population_tags != b.population_tags and per_attr["population"].status is Alignment.EXACT:
        per_attr["population"] = AttributeVerdict(
            Alignment.PARTIAL, "population tags differ")

    measure = _compare_text(a.endpoint.measure, b.endpoint.measure,
                            "endpoint measure", hard=True)
    if measure.status is Alignment.MISMATCH:
        per_attr["endpoint"] = measure
    elif (a.endpoint.baseline_week, a.endpoint.assessment_week) != \
            (b.endpoint.baseline_week, b.endpoint.assessment_week):
        per_attr["endpoint"] = AttributeVerdict(
            Alignment.PARTIAL,
            f"timing differs: week {a.endpoint.baseline_week}->"
            f"{a.endpoint.assessment_week} vs week {b.endpoint.baseline_week}->"
            f"{b.endpoint.assessment_week}")
    else:
        per_attr["endpoint"] = AttributeVerdict(Alignment.EXACT)

    events_a = {_fold(ie.name): ie for ie in a.intercurrent_events}
    events_b = {_fold(ie.name): ie for ie in b.intercurrent_events}
    per_ie: dict[str, EventVerdict] = {}
    for key in sorted(events_a.keys() | events_b.keys()):
        ia, ib = events_a.get(key), events_b.get(key)
        label = (ia or ib).name
        if ia is None or ib is None:
            per_ie[label] = EventVerdict(
                Alignment.MISSING_IN_OTHER,
                ia.strategy if ia else None, ib.strategy if ib else None)
        elif ia.strategy is ib.strategy:
            per_ie[label] = EventVerdict(Alignment.SAME_STRATEGY,
                                         ia.strategy, ib.strategy)
        else:
            per_ie[label] = EventVerdict(Alignment.DIFFERENT_STRATEGY,
                                         ia.strategy, ib.strategy)

    if any(per_attr[k].status is Alignment.MISMATCH
           for k in ("endpoint", "population_summary")):
        overall = Alignment.INCOMPATIBLE
    elif all(v.status is Alignment.EXACT for v in per_attr.values()) and \
            all(v.status is Alignment.SAME_STRATEGY for v in per_ie.values()):
        overall = Alignment.EXACT
    else:
        overall = Alignment.PARTIAL
    return AlignmentReport(per_attr, per_ie, overall)


# -- retrospective classification --------------------------------------------

_FLAGS = (
    "post_ie_data_included",
    "post_ie_data_modeled_as_missing",
    "endpoint_modified_by_ie",
    "restricted_to_pre_ie_data",
    "subpopulation_by_post_randomization",
    "per_protocol_set",
    "post_ie_data_collected",
)

_SHAPES = ("endpoint_modified_by_ie", "restricted_to_pre_ie_data",
           "subpopulation_by_post_randomization")

_TRI_IN = {"yes": True, "no": False, "unknown": None,
           True: True, False: False, None: None}
_TRI_OUT = {True: "yes", False: "no", None: "unknown"}


@dataclass(frozen=True)
class AnalysisEvidence:
    """
    What manual review established about one historical analysis.

    Every flag is tri-state: ``True`` (yes), ``False`` (no) or ``None``
    (unknown).
    """
    post_ie_data_included: Optional[bool] = None
    post_ie_data_modeled_as_missing: Optional[bool] = None
    endpoint_modified_by_ie: Optional[bool] = None
    restricted_to_pre_ie_data: Optional[bool] = None
    subpopulation_by_post_randomization: Optional[bool] = None
    per_protocol_set: Optional[bool] = None
    post_ie_data_collected: Optional[bool] = None
    notes: str = ""

    def __post_init__(self):
        for name in _FLAGS:
            if getattr(self, name) not in (True, False, None):
                raise ValueError(f"{name} must be yes/no/unknown")
        shapes = [s for s in _SHAPES if getattr(self, s) is True]
        if len(shapes) > 1:
            raise ValueError(
                "mutually exclusive analysis shapes both set: "
                + ", ".join(shapes))

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {n: _TRI_OUT[getattr(self, n)] for n in _FLAGS}
        d["notes"] = self.notes
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AnalysisEvidence":
        unknown_keys = set(d) - set(_FLAGS) - {"notes"}
        if unknown_keys:
            raise ValueError(f"unknown evidence keys: {sorted(unknown_keys)}")
        kw: dict[str, Any] = {}
        for name in _FLAGS:
            raw = d.get(name)
            if isinstance(raw, str):
                raw = raw.strip().lower()
            if raw not in _TRI_IN:
                raise ValueError(f"{name}: expected yes/no/unknown, got {raw!r}")
            kw[name] = _TRI_IN[raw]
        return cls(notes=d.get("notes", ""), **kw)


def classify_historical_estimand(ev: AnalysisEvidence) -> tuple[Strategy, str]:
    """
    Infer the strategy a historical analysis implicitly targeted.

    Rules are applied in a fixed priority order; the first matching rule
    wins and is named in the returned rationale.

    1. per-protocol analysis set -> non-causal
    2. post-event data included in the analysis -> treatment policy
    3. endpoint modified to incorporate the event -> composite
    4. restricted to pre-event data, not modelled -> while alive
    5. restricted to a post-randomization subpopulation -> principal stratum
    6. post-event data treated as missing and modelled -> hypothetical
    7. post-event data not collected -> unknown (several estimands possible)
    8. otherwise -> unknown
    """
    if ev.per_protocol_set is True:
        return Strategy.NON_CAUSAL, (
            "rule 1 (per-protocol set): analysis does not align with a "
            "causal estimand")
    if ev.post_ie_data_included is True:
        return Strategy.TREATMENT_POLICY, (
            "rule 2 (post-event data included): closely aligned with a "
            "treatment policy estimand; check the missing-data handling")
    if ev.endpoint_modified_by_ie is True:
        return Strategy.COMPOSITE, (
            "rule 3 (endpoint incorporates the event): corresponds to a "
            "composite estimand")
    if ev.restricted_to_pre_ie_data is True and \
            ev.post_ie_data_modeled_as_missing is not True:
        return Strategy.WHILE_ALIVE, (
            "rule 4 (pre-event data only, no modelling or imputation): "
            "closely aligned with a while-alive estimand")
    if ev.subpopulation_by_post_randomization is True:
        return Strategy.PRINCIPAL_STRATUM, (
            "rule 5 (post-randomization subpopulation): may be closely "
            "related to a principal stratum estimand")
    if ev.post_ie_data_modeled_as_missing is True:
        return Strategy.HYPOTHETICAL, (
            "rule 6 (post-event data modelled as missing): aligned with a "
            "hypothetical estimand; identify the hypothetical scenario")
    if ev.post_ie_data_collected is False:
        return Strategy.UNKNOWN, (
            "rule 7 (no post-event data collected): might align with "
            "multiple estimands")
    return Strategy.UNKNOWN, "no rule matched: insufficient evidence"
