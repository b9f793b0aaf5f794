# %% [markdown]
# # Does the historical estimand match the new trial?

# %%
from nimargin.estimand import (Endpoint, Estimand, IntercurrentEventSpec,
                               Strategy, compare_estimands)

population = "Adults with BMI >= 30, or >= 27 with a weight-related comorbidity"
endpoint = Endpoint("Relative change in body weight (%)", 0, 68)

new_trial = Estimand(
    population, "New drug vs semaglutide 2.4 mg, adjunct to diet and exercise",
    endpoint,
    intercurrent_events=(
        IntercurrentEventSpec("Treatment discontinuation", Strategy.TREATMENT_POLICY),
        IntercurrentEventSpec("Other anti-obesity intervention", Strategy.HYPOTHETICAL),
    ))

step_primary = Estimand(
    population, "Semaglutide 2.4 mg vs placebo, adjunct to diet and exercise",
    endpoint,
    intercurrent_events=(
        IntercurrentEventSpec("Treatment discontinuation", Strategy.TREATMENT_POLICY),
        IntercurrentEventSpec("Other anti-obesity intervention", Strategy.TREATMENT_POLICY),
    ))

report = compare_estimands(new_trial, step_primary)
for attr, v in report.per_attribute.items():
    print(f"{attr:<22} {v.status.value}")
for name, v in report.per_intercurrent_event.items():
    print(f"{name:<34} {v.status.value} "
          f"({v.strategy_a and v.strategy_a.value} vs {v.strategy_b and v.strategy_b.value})")
print("overall:", report.overall.value)

# %% [markdown]
# Partial alignment: the trials agree on discontinuation, but the historical
# effect includes whatever benefit other anti-obesity treatment gave the
# placebo group. That biases the reference effect toward zero, so M1 taken
# from it is conservative.

# %%
print(new_trial.to_json())
