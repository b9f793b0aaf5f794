from contextlib import contextmanager
from pathlib import Path

import pytest

from nimargin.estimand import (Endpoint, Estimand, IntercurrentEventSpec,
                               PopulationTags, Strategy)

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"

_acceptance_lines: list[str] = []


def record_acceptance(name: str, passed: bool, detail: str = "") -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] {name}"
    if detail:
        line += f" :: {detail}"
    _acceptance_lines.append(line)
    print(line)


@contextmanager
def criterion(name: str):
    """Record PASS/FAIL for one acceptance criterion; details go in the yielded dict."""
    detail: dict = {}
    try:
        yield detail
    except BaseException as exc:
        msg = str(exc).strip().splitlines()[0] if str(exc).strip() else type(exc).__name__
        record_acceptance(name, False, "; ".join(
            [f"{k}={v}" for k, v in detail.items()] + [msg[:400]]))
        raise
    record_acceptance(name, True, "; ".join(f"{k}={v}" for k, v in detail.items()))


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


ADULT_POPULATION = ("Adult patients with a BMI >= 30 kg/m2 (or >= 27 kg/m2 if "
                    "patients had at least one weight-related co-existing condition)")
WEIGHT_ENDPOINT = Endpoint("Relative change in body weight (%)", 0, 68)


@pytest.fixture
def ni_estimand():
    """Estimand of the planned non-inferiority trial."""
    return Estimand(
        population=ADULT_POPULATION,
        treatment_conditions=(
            "New treatment versus once-weekly subcutaneous semaglutide (2.4 mg) "
            "both as adjunct to diet and exercise interventions regardless of "
            "discontinuation of treatment and as though other anti-obesity "
            "interventions were not available"),
        endpoint=WEIGHT_ENDPOINT,
        population_summary="mean_difference",
        intercurrent_events=(
            IntercurrentEventSpec("Treatment discontinuation",
                                  Strategy.TREATMENT_POLICY),
            IntercurrentEventSpec("Other anti-obesity intervention",
                                  Strategy.HYPOTHETICAL,
                                  "as though other anti-obesity interventions "
                                  "were not available"),
        ),
    )


@pytest.fixture
def step_primary():
    return Estimand(
        population=("Adult patients with a BMI >= 30 kg/m2 (or >= 27 kg/m2 if "
                    "patients had >= 1 weight-related co-existing condition)."),
        treatment_conditions=(
            "Once-weekly subcutaneous semaglutide (2.4 mg) versus placebo both "
            "as adjunct to diet and exercise interventions regardless of "
            "discontinuation of treatment and including the potential effect "
            "of other anti-obesity interventions."),
        endpoint=WEIGHT_ENDPOINT,
        population_summary="mean_difference",
        intercurrent_events=(
            IntercurrentEventSpec("Treatment discontinuation",
                                  Strategy.TREATMENT_POLICY),
            IntercurrentEventSpec("Other anti-obesity intervention",
                                  Strategy.TREATMENT_POLICY),
        ),
    )


@pytest.fixture
def step_supplementary(step_primary):
    return Estimand(
        population=step_primary.population,
        treatment_conditions=(
            "Once-weekly subcutaneous semaglutide (2.4 mg) versus placebo both "
            "as adjunct to diet and exercise interventions as though treatment "
            "was not discontinued and as though other anti-obesity medication "
            "was not available."),
        endpoint=WEIGHT_ENDPOINT,
        population_summary="mean_difference",
        intercurrent_events=(
            IntercurrentEventSpec("Treatment discontinuation",
                                  Strategy.HYPOTHETICAL,
                                  "as though treatment was not discontinued"),
            IntercurrentEventSpec("Other anti-obesity intervention",
                                  Strategy.HYPOTHETICAL),
        ),
    )


# evidence fixture -> expected strategy, one per classification rule
EVIDENCE_EXPECTED = {
    "maintenance_per_protocol.json": Strategy.NON_CAUSAL,
    "maintenance_retrieved_locf.json": Strategy.TREATMENT_POLICY,
    "responder_composite.json": Strategy.COMPOSITE,
    "on_treatment_average.json": Strategy.WHILE_ALIVE,
    "adherer_stratum.json": Strategy.PRINCIPAL_STRATUM,
    "insulin_mmrm.json": Strategy.HYPOTHETICAL,
    "withdrawal_at_discontinuation.json": Strategy.UNKNOWN,
}
