# %% [markdown]
# # Deriving M1 from the STEP programme
#
# Screen the twelve STEP trials, pool the eight that remain under each
# handling strategy, then read M1 off the credible interval.

# %%
import warnings

from nimargin.evidence import STEP_CRITERIA, bundled_path, effects_for, ingest, select
from nimargin.meta import derive_m1, fit_hierarchical, leave_one_out

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    catalogue = ingest(bundled_path("step_catalogue"))

report = select(catalogue, STEP_CRITERIA)
print("included:", ", ".join(report.included))
for x in report.excluded:
    print(f"excluded {x.trial_id:<10} [{x.reason_code}] {x.reason_text}")

# %%
chosen = [r for r in catalogue if r.trial_id in report.included]
for label in ("treatment_policy", "hypothetical"):
    post = fit_hierarchical(effects_for(chosen, label))
    lo, hi = post.ci95
    print(f"{label:>16}: {post.mu_mean:.3g} ({lo:.3g}, {hi:.3g}), "
          f"tau median {post.tau_median:.2f}, M1 = {derive_m1(post).m1:.3g}")

# %% [markdown]
# STEP 2 enrolled only people with type 2 diabetes and has the smallest
# effect. Dropping it moves both pooled estimates by almost a point.

# %%
for label in ("treatment_policy", "hypothetical"):
    loo = dict(leave_one_out(effects_for(chosen, label)))
    p = loo["STEP 2"]
    print(f"{label:>16} without STEP 2: {p.mu_mean:.3g} "
          f"({p.ci95[0]:.3g}, {p.ci95[1]:.3g})")

# %% [markdown]
# M2 is a clinical call. With half of M1 retained:

# %%
tp = derive_m1(fit_hierarchical(effects_for(chosen, "treatment_policy")))
print(f"M2 at 50% retention: {tp.with_retention(0.5).m2:.3g}")
