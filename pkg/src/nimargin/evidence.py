"""
Historical-trial records: CSV/JSON ingest and export, validation, and the
inclusion/exclusion flow used to pick trials for the meta-analysis.

One CSV row holds one (trial, estimand) effect; trial-level columns are
repeated on every row of the same trial. A row with an empty ``estimand``
declares a trial with no usable effect (it can still be screened).
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence, Union

from .estimand import PopulationTags, _fold
from .meta import TrialEffect, se_from_ci

REQUIRED_COLUMNS = (
    "trial_id", "program", "estimand", "effect", "se", "ci_lo", "ci_hi",
    "n_active", "n_control", "endpoint_week", "diabetes_pct",
    "prediabetes_pct", "female_pct", "manual_exclude_reason",
)
OPTIONAL_COLUMNS = ("agent", "dose", "frequency", "adults", "bmi_criterion",
                    "ie_counts")
COLUMNS = REQUIRED_COLUMNS + OPTIONAL_COLUMNS

UNKNOWN = "unknown"
SE_TOLERANCE = 0.01

BUNDLED = ("steps", "step_catalogue", "scale")


class ValidationError(ValueError):
    """Input data violate the record schema. ``problems`` lists each issue."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class SeConsistencyWarning(UserWarning):
    """A provided SE disagrees with the SE implied by the provided CI."""


@dataclass(frozen=True)
class Dosing:
    agent: str = ""
    dose: str = ""
    frequency: str = ""


IeCount = Union[tuple[int, int], str]


@dataclass(frozen=True)
class TrialRecord:
    trial_id: str
    program: str
    endpoint_week: int
    population: PopulationTags = PopulationTags()
    dosing: Dosing = Dosing()
    n_active: Optional[int] = None
    n_control: Optional[int] = None
    ie_counts: dict[str, IeCount] = field(default_factory=dict)
    effects: tuple[TrialEffect, ...] = ()
    manual_exclude_reason: str = ""

    def __post_init__(self):
        if not self.trial_id.strip():
            raise ValueError("trial_id must be non-empty")
        if self.endpoint_week <= 0:
            raise ValueError(f"{self.trial_id}: endpoint_week must be > 0")
        for n in (self.n_active, self.n_control):
            if n is not None and n < 0:
                raise ValueError(f"{self.trial_id}: negative arm size")
        object.__setattr__(self, "effects", tuple(self.effects))

    def effect(self, estimand: str) -> Optional[TrialEffect]:
        for e in self.effects:
            if e.estimand == estimand:
                return e
        return None


def bundled_path(name: str) -> Path:
    """Path of a dataset shipped with the package (``steps``, ``scale``, ...)."""
    if name not in BUNDLED:
        raise KeyError(f"no bundled dataset {name!r}; choose from {BUNDLED}")
    return Path(str(resources.files("nimargin") / "data" / f"{name}.csv"))


def effects_for(records: Iterable[TrialRecord], estimand: str,
                exclude: Iterable[str] = ()) -> list[TrialEffect]:
    skip = {_norm_id(t) for t in exclude}
    return [e for r in records if _norm_id(r.trial_id) not in skip
            for e in r.effects if e.estimand == estimand]


def _norm_id(trial_id: str) -> str:
    return "".join(trial_id.split()).casefold()


# -- parsing helpers ------------------------------------------------------------

def _opt_float(raw: str) -> Optional[float]:
    raw = raw.strip()
    return None if raw == "" else float(raw)


def _opt_int(raw: str) -> Optional[int]:
    raw = raw.strip()
    return None if raw == "" else int(raw)


def _opt_bool(raw: str) -> Optional[bool]:
    raw = raw.strip().lower()
    if raw == "":
        return None
    if raw in ("yes", "true", "1"):
        return True
    if raw in ("no", "false", "0"):
        return False
    raise ValueError(f"expected yes/no, got {raw!r}")


def _parse_ie_counts(raw: str) -> dict[str, IeCount]:
    out: dict[str, IeCount] = {}
    for part in filter(None, (p.strip() for p in raw.split(";"))):
        name, sep, value = part.rpartition("=")
        if not sep or not name.strip():
            raise ValueError(f"bad ie_counts entry {part!r}")
        value = value.strip()
        if value.lower() == UNKNOWN:
            out[name.strip()] = UNKNOWN
        else:
            a, c = value.split("/")
            out[name.strip()] = (int(a), int(c))
    return out


def _format_ie_counts(counts: dict[str, IeCount]) -> str:
    return ";".join(f"{k}={v if isinstance(v, str) else f'{v[0]}/{v[1]}'}"
                    for k, v in counts.items())


def _fmt(x: Any) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "yes" if x else "no"
    if isinstance(x, float):
        return repr(float(x))
    return str(x)


def _build_effect(trial_id: str, estimand: str, y: Optional[float],
                  se: Optional[float], lo: Optional[float], hi: Optional[float],
                  where: str) -> TrialEffect:
    if y is None:
        raise ValueError("effect is missing")
    if lo is not None or hi is not None:
        if lo is None or hi is None:
            raise ValueError("ci_lo and ci_hi must be given together")
        if not hi > lo:
            raise ValueError(f"ci_hi must exceed ci_lo, got ({lo}, {hi})")
        implied = se_from_ci(lo, hi)
        if se is None:
            se = implied
        elif abs(implied - se) > SE_TOLERANCE * se:
            warnings.warn(
                f"{where}: {trial_id}/{estimand} SE {se} differs from the "
                f"CI-implied SE {implied:.6f} by more than "
                f"{SE_TOLERANCE:.0%}", SeConsistencyWarning, stacklevel=3)
    if se is None:
        raise ValueError("need se or ci_lo/ci_hi")
    if not (math.isfinite(se) and se > 0):
        raise ValueError(f"se must be finite and positive, got {se}")
    return TrialEffect(trial_id, estimand, y, se, lo, hi)


def _trial_key(row: dict[str, str]) -> tuple:
    return tuple(row.get(c, "").strip() for c in COLUMNS
                 if c not in ("trial_id", "estimand", "effect", "se",
                              "ci_lo", "ci_hi"))


# -- ingest ---------------------------------------------------------------------

def ingest(path: Union[str, Path], format: Optional[str] = None) -> list[TrialRecord]:
    """
    Read and validate trial records from CSV or JSON.

    ``format`` defaults to the file suffix. Effects may carry an SE, a 95%
    CI, or both; a CI alone is converted to an SE. All problems are
    collected and raised together as a :class:`ValidationError`.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    text = path.read_text(encoding="utf-8")
    if fmt == "csv":
        return records_from_csv(text, str(path))
    if fmt == "json":
        return records_from_json(text, str(path))
    raise ValueError(f"unsupported format {fmt!r}")


def records_from_csv(text: str, source: str = "<csv>") -> list[TrialRecord]:
    if not text.strip():
        return []
    reader = csv.DictReader(io.StringIO(text))
    header = reader.fieldnames or []
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise ValidationError([f"{source}: missing column(s) {', '.join(missing)}"])

    problems: list[str] = []
    trials: dict[str, dict[str, Any]] = {}
    seen: set[tuple[str, str]] = set()
    for lineno, row in enumerate(reader, start=2):
        where = f"{source}:{lineno}"
        row = {k: (v or "") for k, v in row.items() if k is not None}
        tid = row["trial_id"].strip()
        if not tid:
            problems.append(f"{where}: empty trial_id")
            continue
        try:
            entry = trials.get(tid)
            if entry is None:
                entry = trials[tid] = {"row": row, "where": where, "effects": []}
            elif _trial_key(entry["row"]) != _trial_key(row):
                raise ValueError(
                    f"trial-level columns differ from {entry['where']}")
            est = row["estimand"].strip()
            if est:
                if (tid, est) in seen:
                    raise ValueError(f"duplicate (trial_id, estimand) ({tid}, {est})")
                seen.add((tid, est))
                entry["effects"].append(_build_effect(
                    tid, est, _opt_float(row["effect"]), _opt_float(row["se"]),
                    _opt_float(row["ci_lo"]), _opt_float(row["ci_hi"]), where))
            elif any(row[c].strip() for c in ("effect", "se", "ci_lo", "ci_hi")):
                raise ValueError("effect values given without an estimand label")
        except ValueError as exc:
            problems.append(f"{where}: {exc}")

    records = []
    for tid, entry in trials.items():
        row = entry["row"]
        try:
            records.append(TrialRecord(
                trial_id=tid,
                program=row["program"].strip(),
                endpoint_week=int(row["endpoint_week"]),
                population=PopulationTags(
                    adults=_opt_bool(row.get("adults", "")),
                    bmi_criterion=row.get("bmi_criterion", "").strip(),
                    diabetes_share_pct=_opt_float(row["diabetes_pct"]),
                    prediabetes_share_pct=_opt_float(row["prediabetes_pct"]),
                    female_pct=_opt_float(row["female_pct"])),
                dosing=Dosing(row.get("agent", "").strip(),
                              row.get("dose", "").strip(),
                              row.get("frequency", "").strip()),
                n_active=_opt_int(row["n_active"]),
                n_control=_opt_int(row["n_control"]),
                ie_counts=_parse_ie_counts(row.get("ie_counts", "")),
                effects=tuple(entry["effects"]),
                manual_exclude_reason=row["manual_exclude_reason"].strip(),
            ))
        except ValueError as exc:
            problems.append(f"{entry['where']}: {exc}")
    if problems:
        raise ValidationError(problems)
    return records


def records_from_json(text: str, source: str = "<json>") -> list[TrialRecord]:
    if not text.strip():
        return []
    data = json.loads(text)
    if isinstance(data, dict):
        data = data.get("trials", [])
    problems: list[str] = []
    records = []
    for i, d in enumerate(data):
        where = f"{source}[{i}]"
        try:
            tid = d["trial_id"]
            effects, seen = [], set()
            for e in d.get("effects", []):
                if e["estimand"] in seen:
                    raise ValueError(
                        f"duplicate (trial_id, estimand) ({tid}, {e['estimand']})")
                seen.add(e["estimand"])
                effects.append(_build_effect(
                    tid, e["estimand"], e.get("effect"), e.get("se"),
                    e.get("ci_lo"), e.get("ci_hi"), where))
            counts = {k: (UNKNOWN if isinstance(v, str) else (int(v[0]), int(v[1])))
                      for k, v in d.get("ie_counts", {}).items()}
            records.append(TrialRecord(
                trial_id=tid, program=d.get("program", ""),
                endpoint_week=int(d["endpoint_week"]),
                population=PopulationTags(**d.get("population", {})),
                dosing=Dosing(**d.get("dosing", {})),
                n_active=d.get("n_active"), n_control=d.get("n_control"),
                ie_counts=counts, effects=tuple(effects),
                manual_exclude_reason=d.get("manual_exclude_reason", "")))
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"{where}: {exc!s}")
    if problems:
        raise ValidationError(problems)
    return records


# -- export ---------------------------------------------------------------------

def records_to_csv(records: Sequence[TrialRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in records:
        trial = {
            "trial_id": r.trial_id, "program": r.program,
            "n_active": r.n_active, "n_control": r.n_control,
            "endpoint_week": r.endpoint_week,
            "diabetes_pct": r.population.diabetes_share_pct,
            "prediabetes_pct": r.population.prediabetes_share_pct,
            "female_pct": r.population.female_pct,
            "manual_exclude_reason": r.manual_exclude_reason,
            "agent": r.dosing.agent, "dose": r.dosing.dose,
            "frequency": r.dosing.frequency, "adults": r.population.adults,
            "bmi_criterion": r.population.bmi_criterion,
            "ie_counts": _format_ie_counts(r.ie_counts),
        }
        rows = [{"estimand": e.estimand, "effect": e.y, "se": e.s,
                 "ci_lo": e.ci_lo, "ci_hi": e.ci_hi} for e in r.effects] or [{}]
        for eff in rows:
            merged = {**trial, **eff}
            writer.writerow([_fmt(merged.get(c)) for c in COLUMNS])
    return buf.getvalue()


def records_to_json(records: Sequence[TrialRecord]) -> str:
    out = []
    for r in records:
        out.append({
            "trial_id": r.trial_id, "program": r.program,
            "endpoint_week": r.endpoint_week,
            "population": dict(vars(r.population)),
            "dosing": dict(vars(r.dosing)),
            "n_active": r.n_active, "n_control": r.n_control,
            "ie_counts": {k: (v if isinstance(v, str) else list(v))
                          for k, v in r.ie_counts.items()},
            "manual_exclude_reason": r.manual_exclude_reason,
            "effects": [{"estimand": e.estimand, "effect": e.y, "se": e.s,
                         "ci_lo": e.ci_lo, "ci_hi": e.ci_hi}
                        for e in r.effects],
        })
    return json.dumps({"trials": out}, indent=2, ensure_ascii=False) + "\n"


def export(records: Sequence[TrialRecord], path: Union[str, Path],
           format: Optional[str] = None) -> None:
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    text = records_to_csv(records) if fmt == "csv" else records_to_json(records)
    path.write_text(text, encoding="utf-8")


# -- selection ------------------------------------------------------------------

@dataclass(frozen=True)
class PopulationConstraint:
    require_adults: bool = False
    max_diabetes_pct: Optional[float] = None


@dataclass(frozen=True)
class SelectionCriteria:
    """
    ``None`` for either end of ``endpoint_week_range`` leaves it unbounded.
    Empty dosing fields match anything.
    """
    dosing: Optional[Dosing] = None
    endpoint_week_range: tuple[Optional[int], Optional[int]] = (None, None)
    population: Optional[PopulationConstraint] = None

    def __post_init__(self):
        lo, hi = self.endpoint_week_range
        if lo is not None and hi is not None and lo > hi:
            raise ValueError("endpoint window min exceeds max")

    def to_dict(self) -> dict:
        return {
            "dosing": dict(vars(self.dosing)) if self.dosing else None,
            "endpoint_week_range": list(self.endpoint_week_range),
            "population": dict(vars(self.population)) if self.population else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SelectionCriteria":
        rng = d.get("endpoint_week_range") or (None, None)
        return cls(
            dosing=Dosing(**d["dosing"]) if d.get("dosing") else None,
            endpoint_week_range=(rng[0], rng[1]),
            population=(PopulationConstraint(**d["population"])
                        if d.get("population") else None))


STEP_CRITERIA = SelectionCriteria(
    dosing=Dosing("semaglutide", "2.4 mg", "once weekly"),
    endpoint_week_range=(52, 68),
    population=PopulationConstraint(require_adults=True))

SCALE_CRITERIA = SelectionCriteria(
    dosing=Dosing("liraglutide", "3.0 mg", "once daily"),
    endpoint_week_range=(52, 68),
    population=PopulationConstraint(require_adults=True))

OPEN_CRITERIA = SelectionCriteria()

CRITERIA_PRESETS = {"step": STEP_CRITERIA, "scale": SCALE_CRITERIA,
                    "none": OPEN_CRITERIA}


@dataclass(frozen=True)
class Exclusion:
    trial_id: str
    reason_code: str
    reason_text: str


@dataclass(frozen=True)
class SelectionReport:
    included: list[str]
    excluded: list[Exclusion]

    def to_dict(self) -> dict:
        return {"included": list(self.included),
                "excluded": [dict(vars(x)) for x in self.excluded]}


def _failures(r: TrialRecord, c: SelectionCriteria) -> list[tuple[str, str]]:
    out = []
    if c.dosing is not None:
        bad = [f"{attr} {getattr(r.dosing, attr)!r} != {want!r}"
               for attr in ("agent", "dose", "frequency")
               if (want := getattr(c.dosing, attr))
               and _fold(getattr(r.dosing, attr)) != _fold(want)]
        if bad:
            out.append(("dosing", "dosing regimen: " + ", ".join(bad)))
    lo, hi = c.endpoint_week_range
    if (lo is not None and r.endpoint_week < lo) or \
            (hi is not None and r.endpoint_week > hi):
        out.append(("endpoint_window",
                    f"endpoint at week {r.endpoint_week} outside "
                    f"{lo if lo is not None else '-inf'}-"
                    f"{hi if hi is not None else 'inf'}"))
    if c.population is not None:
        p = c.population
        bad = []
        if p.require_adults and r.population.adults is not True:
            bad.append("population not restricted to adults")
        if p.max_diabetes_pct is not None and \
                (r.population.diabetes_share_pct or 0.0) > p.max_diabetes_pct:
            bad.append(f"diabetes share {r.population.diabetes_share_pct}% "
                       f"> {p.max_diabetes_pct}%")
        if bad:
            out.append(("population", "; ".join(bad)))
    if r.manual_exclude_reason:
        out.append(("manual", r.manual_exclude_reason))
    return out


def select(records: Sequence[TrialRecord],
           criteria: SelectionCriteria) -> SelectionReport:
    """
    Screen records against dosing, endpoint window and population, in that
    order, then honour manual exclusions. The first failure is the reason
    code; every failure is listed in the reason text.
    """
    included, excluded = [], []
    for r in records:
        fails = _failures(r, criteria)
        if fails:
            excluded.append(Exclusion(r.trial_id, fails[0][0],
                                      " | ".join(t for _, t in fails)))
        else:
            included.append(r.trial_id)
    return SelectionReport(included, excluded)
