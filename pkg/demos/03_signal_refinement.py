#!/usr/bin/env python3
"""Refining a drug-outcome signal against prior patient history.

A four-patient cohort shows the whole refinement idea in miniature: three
of the four signal instances are explainable by rules learned from the
wider population (their antecedents appear in the patient's history
before the outcome), so only one instance survives into the
confounding-adjusted risk.
"""

import datetime as dt

from adrrefine import (
    AssociationRule,
    EventRecord,
    EventStore,
    Item,
    ItemKind,
    PatientInfo,
    SignalInstance,
    SignalSpec,
    parse_bnf,
    parse_read,
    refine,
)

D = dt.date
START = D(1997, 1, 1)

# Patient histories: DRUG_X is the exposure under suspicion, OUT the
# outcome; DRUG_Y and COND are common alternative explanations.
DRUG_X, DRUG_Y = "1.1.0.0", "2.2.0.0"
OUT, COND = "H05..", "H03.."

histories = {
    "p1": [("BNF", DRUG_X, D(2003, 6, 5)), ("BNF", DRUG_Y, D(2003, 7, 6)),
           ("READ", OUT, D(2005, 8, 1))],
    "p2": [("READ", COND, D(1999, 1, 15)), ("BNF", DRUG_Y, D(1999, 1, 17)),
           ("BNF", DRUG_X, D(2001, 6, 28)), ("READ", OUT, D(2001, 8, 14))],
    "p3": [("BNF", DRUG_Y, D(2009, 11, 23)), ("READ", COND, D(2010, 3, 19)),
           ("BNF", DRUG_X, D(2010, 3, 21)), ("READ", OUT, D(2010, 3, 22))],
    "p4": [("BNF", DRUG_X, D(2011, 1, 1)), ("READ", OUT, D(2011, 1, 5))],
}
store = EventStore(
    patients={pid: PatientInfo(pid, "M", 1950, START) for pid in histories},
    events={
        pid: tuple(EventRecord(pid, date, ct, code) for ct, code, date in rows)
        for pid, rows in histories.items()
    },
    db_end_date=D(2012, 1, 1),
)

# Rules for the outcome, as mined from a much larger population.
consequent = Item(ItemKind.READ, OUT)
rules = [
    AssociationRule(frozenset([Item(ItemKind.BNF, DRUG_Y)]), consequent,
                    3.6e-5, 1.2e-3, 0.03, 1.4, 200.0),
    AssociationRule(frozenset([Item(ItemKind.READ, COND)]), consequent,
                    1.95e-5, 1.5e-3, 0.013, 1.5, 160.0),
    AssociationRule(frozenset([Item(ItemKind.READ, COND), Item(ItemKind.BNF, DRUG_Y)]),
                    consequent, 2e-5, 1e-3, 0.02, 1.3, 134.0),
]

spec = SignalSpec(doi=frozenset([parse_bnf(DRUG_X)]), hoi=parse_read(OUT))
instances = [
    SignalInstance("p1", D(2003, 6, 5), D(2005, 8, 1)),
    SignalInstance("p2", D(2001, 6, 28), D(2001, 8, 14)),
    SignalInstance("p3", D(2010, 3, 21), D(2010, 3, 22)),
    SignalInstance("p4", D(2011, 1, 1), D(2011, 1, 5)),
]

# Suppose 25 patients in the full population were exposed to DRUG_X.
report = refine(spec, rules, store, instances=instances, exposures=25)

print(f"signal: {DRUG_X} -> {OUT}, {report.instance_count} instances, "
      f"{report.exposure_count} exposed patients")
for a in report.assessments:
    verdict = "expected (alternative cause)" if a.expected else "unexplained"
    print(f"  {a.instance.patient_id}: {a.matched_rule_count} rule(s) matched, "
          f"max lift {a.max_lift:.1f} -> {verdict}")
print(f"\nabsolute risk:            {report.absolute_risk:.3f}")
print(f"confounding-adjusted risk: {report.adjusted_risk:.3f}")
assert report.adjusted_risk == 0.04
