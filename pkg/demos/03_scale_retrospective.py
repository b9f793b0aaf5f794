# %% [markdown]
# # Retrospective margin from the SCALE trials
#
# These trials predate explicit estimands, so only confidence intervals are
# available. Standard errors are recovered from the intervals and the analyses
# are mapped to handling strategies from how post-event data were used.

# %%
import json
from pathlib import Path

from nimargin.estimand import AnalysisEvidence, classify_historical_estimand
from nimargin.evidence import SCALE_CRITERIA, bundled_path, effects_for, ingest, select
from nimargin.meta import ModelError, derive_m1, fit_hierarchical

records = ingest(bundled_path("scale"))
report = select(records, SCALE_CRITERIA)
print("included:", report.included)
print("excluded:", [(x.trial_id, x.reason_code) for x in report.excluded])

for r in records:
    for e in r.effects:
        print(f"{r.trial_id:<30} {e.estimand:<17} {e.y:6.2f}  se {e.s:.4f}")

# %% [markdown]
# ## What did each analysis estimate?

# %%
fixtures = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "evidence"
for name in ("maintenance_retrieved_locf.json", "insulin_mmrm.json",
             "maintenance_per_protocol.json", "withdrawal_at_discontinuation.json"):
    ev = AnalysisEvidence.from_dict(json.loads((fixtures / name).read_text()))
    strategy, why = classify_historical_estimand(ev)
    print(f"{name:<38} -> {strategy.value}\n    {why}")

# %% [markdown]
# ## Pooling

# %%
chosen = [r for r in records if r.trial_id in report.included]
post = fit_hierarchical(effects_for(chosen, "treatment_policy"))
print(f"treatment policy: {post.mu_mean:.3g} ({post.ci95[0]:.3g}, {post.ci95[1]:.3g})")
print(f"M1 = {derive_m1(post).m1:.3g}")

# Only one trial reports a hypothetical analysis, so tau is informed by its
# prior alone and the interval is wide.
try:
    hyp = fit_hierarchical(effects_for(chosen, "hypothetical"))
    print(f"hypothetical: M1 = {derive_m1(hyp).m1:.3g}")
except ModelError as exc:
    print("hypothetical:", exc)
