"""
Command-line front end.

    nimargin simulate   event-probability grid simulation -> CSV + SVG
    nimargin meta       hierarchical meta-analysis of one estimand -> JSON (+ forest SVG)
    nimargin margin     M1 (and optionally M2) from a posterior or a fresh fit
    nimargin derive     select -> fit -> M1/M2 for every estimand -> JSON + forest SVG
    nimargin classify   retrospective estimand classification of an analysis
    nimargin select     inclusion/exclusion flow -> JSON
    nimargin report     human-readable summary of a derive JSON

Every run writes ``<subcommand>.manifest.json`` next to its outputs. Exit
codes: 0 ok, 2 usage, 3 data validation, 4 model error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import warnings
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .estimand import AnalysisEvidence, classify_historical_estimand
from .evidence import (BUNDLED, CRITERIA_PRESETS, SelectionCriteria,
                       ValidationError, bundled_path, effects_for, ingest,
                       select)
from .meta import (BenefitDirection, HierarchicalModelSpec, ModelError,
                   PosteriorSummary, derive_m1, fit_hierarchical,
                   leave_one_out)
from .simulation import DEFAULT_BETA1, DEFAULT_N_PER_ARM, DEFAULT_P0_GRID, run_grid
from .svg import forest_plot, grid_figure

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_MODEL = 0, 2, 3, 4


class UsageError(Exception):
    pass


# -- argument types -------------------------------------------------------------

def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {value}")
    return value


def _p0_list(text: str) -> list[float]:
    try:
        values = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))
    if not values:
        raise argparse.ArgumentTypeError("empty grid")
    for v in values:
        if not 0.0 <= v < 1.0:
            raise argparse.ArgumentTypeError(f"p0 must lie in [0, 1), got {v}")
    return values


def _retention(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"retention must lie in [0, 1], got {value}")
    return value


def _id_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


# -- io helpers -----------------------------------------------------------------

class _Run:
    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.out_dir = Path(args.out_dir)
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []

    def say(self, text: str) -> None:
        if not self.args.quiet:
            print(text)

    def warn(self, text: str) -> None:
        if not self.args.quiet:
            print(f"warning: {text}", file=sys.stderr)

    def out_path(self, name: str) -> Path:
        root = self.out_dir.resolve()
        path = (self.out_dir / name).resolve()
        if path != root and root not in path.parents:
            raise UsageError(f"output {name!r} would be written outside --out-dir")
        return path

    def write(self, name: str, text: str) -> Path:
        path = self.out_path(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="\n")
        self.outputs.append(name)
        return path

    def resolve_input(self, spec: str) -> Path:
        if spec.startswith("bundled:"):
            name = spec.split(":", 1)[1]
            if name not in BUNDLED:
                raise UsageError(f"unknown bundled dataset {name!r}; choose from "
                                 + ", ".join(BUNDLED))
            path = bundled_path(name)
        else:
            path = Path(spec)
            if not path.is_file():
                raise UsageError(f"input file not found: {spec}")
        self.inputs[spec] = hashlib.sha256(path.read_bytes()).hexdigest()
        return path

    def manifest(self) -> None:
        config = {k: v for k, v in sorted(vars(self.args).items())
                  if k not in ("func",)}
        doc = {"tool": "nimargin", "version": __version__,
               "subcommand": self.args.command, "config": config,
               "inputs": self.inputs, "outputs": self.outputs}
        self.write(f"{self.args.command}.manifest.json", _dumps(doc))


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def _load_records(run: _Run, spec: str) -> tuple[list, list[str]]:
    path = run.resolve_input(spec)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        records = ingest(path)
    notes = [str(w.message) for w in caught]
    for n in notes:
        run.warn(n)
    return records, notes


def _criteria(spec: str, records) -> SelectionCriteria:
    if spec == "auto":
        programs = {r.program.casefold() for r in records}
        if len(programs) == 1 and (p := programs.pop()) in CRITERIA_PRESETS:
            return CRITERIA_PRESETS[p]
        return CRITERIA_PRESETS["none"]
    if spec in CRITERIA_PRESETS:
        return CRITERIA_PRESETS[spec]
    path = Path(spec)
    if not path.is_file():
        raise UsageError(f"--criteria must be one of {sorted(CRITERIA_PRESETS)}, "
                         f"'auto', or a JSON file; got {spec!r}")
    return SelectionCriteria.from_dict(json.loads(path.read_text()))


def _model_spec(args) -> HierarchicalModelSpec:
    return HierarchicalModelSpec(tau_prior_scale=args.tau_scale,
                                 mu_prior_sd=args.mu_prior_sd)


def _spec_dict(spec: HierarchicalModelSpec) -> dict:
    return {"tau_prior_scale": spec.tau_prior_scale,
            "mu_prior_mean": spec.mu_prior_mean,
            "mu_prior_sd": spec.mu_prior_sd,
            "tau_grid_size": spec.tau_grid_size,
            "tau_grid_max": spec.grid_max}


def _fmt3(x: float) -> str:
    return f"{x:.3g}"


def _summary_line(post: PosteriorSummary) -> str:
    lo, hi = post.ci95
    return (f"{post.estimand}: pooled {_fmt3(post.mu_mean)} "
            f"({_fmt3(lo)}, {_fmt3(hi)}) from {post.n_trials} trials")


# -- subcommands ----------------------------------------------------------------

def cmd_simulate(run: _Run) -> int:
    a = run.args
    result = run_grid(beta1=a.beta1, p0_grid=a.p0_grid, n_per_arm=a.n_per_arm,
                      seed=a.seed, workers=a.workers)
    effects = {p0: (tp, hyp) for p0, tp, hyp, _ in result.effects}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["p0", "arm", "n", "mean_week68_observed", "mean_week68_latent",
                "ie_proportion", "effect_tp", "effect_hyp"])
    for s in result.summaries:
        tp, hyp = effects[s.p0] if s.arm.value == "reference" else ("", "")
        w.writerow([repr(s.p0), s.arm.value, s.n, repr(s.mean_week68_observed),
                    repr(s.mean_week68_latent), repr(s.ie_proportion),
                    repr(tp) if tp != "" else "", repr(hyp) if hyp != "" else ""])
    run.write(a.out_csv, buf.getvalue())
    run.write(a.out_svg, grid_figure(result.summaries))
    for p0, tp, hyp, se in result.effects:
        run.say(f"p0={p0:<5g} effect_tp={tp:8.3f} effect_hyp={hyp:8.3f} (se {se:.3f})")
    return EXIT_OK


def _fit_one(records, label, exclude, spec):
    effects = effects_for(records, label, exclude)
    if not effects:
        raise ValidationError([f"no trials carry estimand {label!r}"])
    return effects, fit_hierarchical(effects, spec)


def cmd_meta(run: _Run) -> int:
    a = run.args
    records, notes = _load_records(run, a.input)
    spec = _model_spec(a)
    effects, post = _fit_one(records, a.estimand, a.exclude, spec)
    doc = {"input": a.input, "estimand": a.estimand, "excluded": a.exclude,
           "model": _spec_dict(spec), "posterior": post.to_dict(),
           "warnings": notes}
    if a.loo:
        doc["leave_one_out"] = [{"excluded_trial": tid, "posterior": p.to_dict()}
                                for tid, p in leave_one_out(effects, spec)]
    run.write(a.out_json, _dumps(doc))
    if a.forest_svg:
        run.write(a.forest_svg, forest_plot([(a.estimand, effects, post)]))
    run.say(_summary_line(post))
    return EXIT_OK


def cmd_margin(run: _Run) -> int:
    a = run.args
    if a.posterior_json:
        path = run.resolve_input(a.posterior_json)
        doc = json.loads(path.read_text())
        post = PosteriorSummary.from_dict(doc.get("posterior", doc))
    elif a.input:
        records, _ = _load_records(run, a.input)
        _, post = _fit_one(records, a.estimand, a.exclude, _model_spec(a))
    else:
        raise UsageError("margin needs --posterior-json or --input")
    margin = derive_m1(post, BenefitDirection(a.direction))
    if a.retention is not None:
        margin = margin.with_retention(a.retention)
    run.write(a.out_json, _dumps({"posterior": post.to_dict(),
                                  "margin": margin.to_dict()}))
    line = f"M1 = {_fmt3(margin.m1)}"
    if margin.m2 is not None:
        line += f", M2 = {_fmt3(margin.m2)} (retention {a.retention:g})"
    run.say(line)
    return EXIT_OK


def cmd_derive(run: _Run) -> int:
    a = run.args
    records, notes = _load_records(run, a.input)
    criteria = _criteria(a.criteria, records)
    report = select(records, criteria)
    chosen = [r for r in records if r.trial_id in set(report.included)]
    labels = a.estimand or list(dict.fromkeys(
        e.estimand for r in chosen for e in r.effects))
    spec = _model_spec(a)
    direction = BenefitDirection(a.direction)

    results, groups, failures = [], [], []
    for label in labels:
        effects, post = _fit_one(chosen, label, a.exclude, spec)
        entry = {"estimand": label, "posterior": post.to_dict()}
        try:
            margin = derive_m1(post, direction)
            if a.retention is not None:
                margin = margin.with_retention(a.retention)
            entry["margin"] = margin.to_dict()
        except ModelError as exc:
            entry["margin"] = None
            entry["error"] = str(exc)
            failures.append(f"{label}: {exc}")
        if a.loo and len(effects) >= 2:
            entry["leave_one_out"] = [
                {"excluded_trial": tid, "posterior": p.to_dict()}
                for tid, p in leave_one_out(effects, spec)]
        results.append(entry)
        groups.append((label, effects, post))

    doc = {"input": a.input, "criteria": criteria.to_dict(),
           "selection": report.to_dict(), "excluded_by_user": a.exclude,
           "direction": direction.value, "retention": a.retention,
           "model": _spec_dict(spec), "estimands": results, "warnings": notes}
    run.write(a.out_json, _dumps(doc))
    if a.forest_svg:
        run.write(a.forest_svg, forest_plot(groups))

    run.say(f"selected {len(report.included)} of {len(records)} trials")
    for x in report.excluded:
        run.say(f"  excluded {x.trial_id} [{x.reason_code}]: {x.reason_text}")
    for entry, (_, _, post) in zip(results, groups):
        line = _summary_line(post)
        if entry.get("margin"):
            line += f"; M1 = {_fmt3(entry['margin']['m1'])}"
            if entry["margin"]["m2"] is not None:
                line += f", M2 = {_fmt3(entry['margin']['m2'])}"
        run.say(line)
    if failures:
        for f in failures:
            print(f"error: {f}", file=sys.stderr)
        return EXIT_MODEL
    return EXIT_OK


def cmd_classify(run: _Run) -> int:
    a = run.args
    path = run.resolve_input(a.evidence)
    text = path.read_text().strip()
    try:
        ev = AnalysisEvidence.from_dict(json.loads(text) if text else {})
    except ValueError as exc:
        raise ValidationError([f"{a.evidence}: {exc}"])
    strategy, rationale = classify_historical_estimand(ev)
    run.write(a.out_json, _dumps({"evidence": ev.to_dict(),
                                  "strategy": strategy.value,
                                  "rationale": rationale}))
    run.say(strategy.value)
    run.say(rationale)
    return EXIT_OK


def cmd_select(run: _Run) -> int:
    a = run.args
    records, notes = _load_records(run, a.input)
    criteria = _criteria(a.criteria, records)
    report = select(records, criteria)
    run.write(a.out_json, _dumps({"input": a.input, "criteria": criteria.to_dict(),
                                  **report.to_dict(), "warnings": notes}))
    run.say(f"included ({len(report.included)}): " + ", ".join(report.included))
    for x in report.excluded:
        run.say(f"excluded {x.trial_id} [{x.reason_code}]: {x.reason_text}")
    return EXIT_OK


def render_report(doc: dict) -> str:
    """Markdown summary of a derive document, numbers to 3 significant figures."""
    lines = ["# Non-inferiority margin derivation", "",
             f"Input: `{doc['input']}`", "", "## Trial selection", ""]
    sel = doc["selection"]
    lines.append(f"Included ({len(sel['included'])}): " + ", ".join(sel["included"]))
    lines.append("")
    for x in sel["excluded"]:
        lines.append(f"- excluded {x['trial_id']} ({x['reason_code']}): {x['reason_text']}")
    if doc.get("excluded_by_user"):
        lines.append(f"- removed on request: {', '.join(doc['excluded_by_user'])}")
    lines += ["", "## Pooled effects", "",
              "| Estimand | Pooled mean (95% CrI) | tau median | M1 | M2 |",
              "|---|---|---|---|---|"]
    for e in doc["estimands"]:
        p = e["posterior"]
        lo, hi = p["ci95"]
        m = e.get("margin") or {}
        m1 = _fmt3(m["m1"]) if m.get("m1") is not None else "undefined"
        m2 = _fmt3(m["m2"]) if m.get("m2") is not None else "-"
        lines.append(f"| {e['estimand']} | {_fmt3(p['mu_mean'])} "
                     f"({_fmt3(lo)}, {_fmt3(hi)}) | {_fmt3(p['tau_median'])} "
                     f"| {m1} | {m2} |")
    loo = [e for e in doc["estimands"] if e.get("leave_one_out")]
    if loo:
        lines += ["", "## Leave-one-out", ""]
        for e in loo:
            for item in e["leave_one_out"]:
                p = item["posterior"]
                lo, hi = p["ci95"]
                lines.append(f"- {e['estimand']} without {item['excluded_trial']}: "
                             f"{_fmt3(p['mu_mean'])} ({_fmt3(lo)}, {_fmt3(hi)})")
    if doc.get("warnings"):
        lines += ["", "## Data warnings", ""]
        lines += [f"- {w}" for w in doc["warnings"]]
    return "\n".join(lines) + "\n"


def cmd_report(run: _Run) -> int:
    a = run.args
    path = run.resolve_input(a.derive_json)
    doc = json.loads(path.read_text())
    text = render_report(doc)
    run.write(a.out_md, text)
    run.say(text.rstrip())
    return EXIT_OK


# -- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--out-dir", default=".")
    common.add_argument("--quiet", action="store_true")

    fit = argparse.ArgumentParser(add_help=False)
    fit.add_argument("--tau-scale", type=_positive_float, default=5.0,
                     help="half-normal scale of the heterogeneity prior")
    fit.add_argument("--mu-prior-sd", type=_positive_float, default=100.0)
    fit.add_argument("--exclude", type=_id_list, default=[],
                     help="comma-separated trial ids to leave out")

    parser = argparse.ArgumentParser(
        prog="nimargin",
        description="Estimand-aware non-inferiority margin tools")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common],
                       help="event-probability grid simulation")
    p.add_argument("--n-per-arm", type=_positive_int, default=DEFAULT_N_PER_ARM)
    p.add_argument("--p0-grid", type=_p0_list, default=list(DEFAULT_P0_GRID))
    p.add_argument("--beta1", type=float, default=DEFAULT_BETA1)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--out-csv", default="grid.csv")
    p.add_argument("--out-svg", default="figure1.svg")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("meta", parents=[common, fit],
                       help="meta-analysis of one estimand")
    p.add_argument("--input", required=True,
                   help="trials CSV/JSON or bundled:<name>")
    p.add_argument("--estimand", default="treatment_policy")
    p.add_argument("--loo", action="store_true")
    p.add_argument("--out-json", default="meta.json")
    p.add_argument("--forest-svg", default=None)
    p.set_defaults(func=cmd_meta)

    p = sub.add_parser("margin", parents=[common, fit], help="M1/M2 derivation")
    p.add_argument("--posterior-json")
    p.add_argument("--input")
    p.add_argument("--estimand", default="treatment_policy")
    p.add_argument("--direction", choices=["negative", "positive"], default="negative")
    p.add_argument("--retention", type=_retention)
    p.add_argument("--out-json", default="margin.json")
    p.set_defaults(func=cmd_margin)

    p = sub.add_parser("derive", parents=[common, fit],
                       help="selection, meta-analysis and margins")
    p.add_argument("--input", required=True)
    p.add_argument("--criteria", default="auto",
                   help="step | scale | none | auto | path to criteria JSON")
    p.add_argument("--estimand", action="append",
                   help="estimand label (repeatable; default: all)")
    p.add_argument("--direction", choices=["negative", "positive"], default="negative")
    p.add_argument("--retention", type=_retention)
    p.add_argument("--loo", action="store_true")
    p.add_argument("--out-json", default="derive.json")
    p.add_argument("--forest-svg", default="forest.svg")
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("classify", parents=[common],
                       help="infer the estimand of a historical analysis")
    p.add_argument("--evidence", required=True, help="analysis evidence JSON")
    p.add_argument("--out-json", default="classification.json")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("select", parents=[common], help="trial selection flow")
    p.add_argument("--input", required=True)
    p.add_argument("--criteria", default="auto")
    p.add_argument("--out-json", default="selection.json")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("report", parents=[common],
                       help="summarise a derive JSON")
    p.add_argument("--derive-json", required=True)
    p.add_argument("--out-md", default="report.md")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    run = _Run(args)
    try:
        code = args.func(run)
        run.manifest()
        return code
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        for problem in exc.problems:
            print(f"data error: {problem}", file=sys.stderr)
        return EXIT_DATA
    except ModelError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except json.JSONDecodeError as exc:
        print(f"data error: invalid JSON: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
