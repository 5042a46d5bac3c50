#!/usr/bin/env python3
"""Clinical code hierarchies and item normalization.

Walks through the two code systems the library understands and shows how
raw codes become the canonical items that mining operates on.
"""

from adrrefine import (
    bnf_truncate,
    gender_item,
    normalize_item,
    parse_bnf,
    parse_read,
    read_level,
    read_parent,
    read_truncate,
)

# Diagnosis codes are five characters; trailing dots mark unused positions.
# More leading characters = a more specific condition.
code = parse_read("A11zz")
print(f"code {code} has level {read_level(code)}")
for k in range(4, 0, -1):
    print(f"  level {k} form: {read_truncate(code, k)}")
print(f"  direct parent: {read_parent(code)}")

# Drug codes are four dot-separated integers; trailing zeros are unused.
drug = parse_bnf("5.1.12.3")
print(f"\ndrug {drug}")
for k in (3, 2, 1):
    print(f"  level {k} form: {bnf_truncate(drug, k)}")

# Mining coarsens every event: diagnoses to level 3, drugs to level 2,
# plus a namespaced gender item. Equal items compare equal byte-wise.
print("\nnormalized items:")
for code_type, raw in [("READ", "A11zz"), ("READ", "A11.."), ("BNF", "5.1.12.3")]:
    item = normalize_item(code_type, raw)
    print(f"  {code_type} {raw:9} -> {item.token}")
print(f"  gender M       -> {gender_item('M').token}")

# Distinct raw codes that share an ancestor collapse to one item, which is
# what makes rare consequents minable at all.
assert normalize_item("READ", "A11zz") == normalize_item("READ", "A11z.")
print("\nA11zz and A11z. normalize to the same item")
