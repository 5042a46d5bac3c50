#!/usr/bin/env python3
"""End-to-end study on a synthetic cohort with a planted confounder.

A latent condition drives both prescriptions of a drug and an outcome, so
the drug-outcome pair signals strongly even though the drug causes
nothing. When the condition is documented (70% of carriers here), the
refiner finds its items in the pre-outcome history and marks the instance
expected; the flagged fraction should therefore approach the 0.7
documentation rate, and the adjusted risk drops accordingly.
"""

import math

from adrrefine import (
    CatalogItem,
    Item,
    ItemKind,
    MiningConstraints,
    PlantedConfounder,
    ScenarioConfig,
    SignalSpec,
    apply_prescription_exclusions,
    build_database,
    daily_rate_for_presence,
    expected_filter_rate,
    generate_store,
    mine_rules,
    parse_bnf,
    parse_read,
    refine,
)

SPAN = 1460  # four years of observation

# Background items are common so nearly everyone clears the mining
# activity floor; sparser catalogs make eligibility correlate with the
# planted condition and blur the drug's own rule toward the floor.
catalog = tuple(
    CatalogItem(code_type, code, daily_rate_for_presence(p, SPAN))
    for code_type, code, p in [
        ("BNF", "5.1.0.0", 0.50),  # the suspect drug: common background exposure
        ("READ", "C10..", 0.60),
        ("READ", "H33..", 0.55),
        ("BNF", "2.5.0.0", 0.60),
        ("READ", "J31..", 0.55),
        ("BNF", "3.4.0.0", 0.60),
        ("READ", "F11..", 0.55),
        ("READ", "M16..", 0.60),
    ]
)

config = ScenarioConfig(
    seed=11,
    patient_count=40_000,
    observation_days=SPAN,
    catalog=catalog,
    confounder=PlantedConfounder(
        antecedent=(("READ", "K55.."), ("BNF", "9.9.0.0")),
        outcome_code="N771.",
        doi_code="5.1.0.0",
        prevalence=0.06,
        recording_probability=0.7,
        activation_probability=0.08,
        doi_coprescription_probability=0.3,
    ),
)

print("generating cohort...")
store, truth = generate_store(config)
confounded_outcomes = sum(1 for r in truth if r.cause == "confounder")
print(f"  {store.patient_count} patients, {store.event_count} events, "
      f"{confounded_outcomes} confounder-caused outcomes")

print("mining outcome rules on whole histories...")
db = build_database(store, min_active_months=24)
rules = mine_rules(db, Item(ItemKind.READ, "N77.."), MiningConstraints())
print(f"  {db.m} baskets -> {len(rules)} rules for the outcome")

print("refining the drug-outcome signal...")
excluded = apply_prescription_exclusions(store)
spec = SignalSpec(doi=frozenset([parse_bnf("5.1.0.0")]), hoi=parse_read("N771."))
report = refine(spec, rules, excluded)

target = expected_filter_rate(config)
flagged = report.expected_count / report.instance_count
se = math.sqrt(target * (1 - target) / report.instance_count)
print(f"\ninstances:                 {report.instance_count}")
print(f"flagged as expected:       {report.expected_count} ({flagged:.2f})")
print(f"documentation rate target: {target:.2f} +/- {3 * se:.2f} (3 se)")
print(f"absolute risk:             {report.absolute_risk:.2e}")
print(f"confounding-adjusted risk: {report.adjusted_risk:.2e}")
assert abs(flagged - target) <= 3 * se, "flagged fraction should track documentation"
print("\nthe signal shrinks toward its undocumented remainder, as designed")
