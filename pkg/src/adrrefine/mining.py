"""Association rule mining under left-support and confidence constraints.

Rules have an itemset antecedent and a single-item consequent. The
left-support constraint (on the antecedent alone) replaces the usual
rule-support constraint so that rules predicting rare consequents are
still discoverable. Growth is level-wise: an antecedent whose support
falls below the left-support floor is never extended, which is sound
because support is anti-monotone under supersets. Confidence is not
anti-monotone, so it filters at emission only.

All measures are derived from exact integer basket counts at the last
step; reports are bit-reproducible across runs and worker counts.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import groupby
from typing import Iterable, Sequence

import numpy as np

from .baskets import BasketDatabase
from .codes import Item, parse_item
from .errors import ConfigError, DomainError, ParseError

DEFAULT_MIN_LEFT_SUPPORT = 0.001
DEFAULT_MIN_CONFIDENCE = 0.01
DEFAULT_MAX_ANTECEDENT = 3

# Cap on the row block materialized per counting call, in bytes.
_BATCH_BYTES = 1 << 23


@dataclass(frozen=True)
class MiningConstraints:
    min_left_support: float = DEFAULT_MIN_LEFT_SUPPORT
    min_confidence: float = DEFAULT_MIN_CONFIDENCE
    max_antecedent: int = DEFAULT_MAX_ANTECEDENT

    def __post_init__(self):
        if not 0 < self.min_left_support <= 1:
            raise ConfigError(f"min_left_support must be in (0, 1]: {self.min_left_support}")
        if not 0 < self.min_confidence <= 1:
            raise ConfigError(f"min_confidence must be in (0, 1]: {self.min_confidence}")
        if self.max_antecedent < 1:
            raise ConfigError(f"max_antecedent must be >= 1: {self.max_antecedent}")


@dataclass(frozen=True)
class ContingencyTable:
    """2x2 observed/expected cell proportions for a rule, plus the basket
    count needed to put the statistic back on the count scale."""

    observed: tuple[float, float, float, float]
    expected: tuple[float, float, float, float]
    m: int

    @property
    def degenerate(self) -> bool:
        """True when a marginal support is 0 or 1, so association is undefined."""
        return any(e == 0.0 for e in self.expected)


@dataclass(frozen=True)
class AssociationRule:
    antecedent: frozenset[Item]
    consequent: Item
    support: float
    left_support: float
    confidence: float
    lift: float
    chi_squared: float

    def __post_init__(self):
        if not self.antecedent:
            raise DomainError("rule antecedent must not be empty")
        if self.consequent in self.antecedent:
            raise DomainError(f"consequent {self.consequent} also in antecedent")

    @property
    def antecedent_tokens(self) -> tuple[str, ...]:
        return tuple(sorted(it.token for it in self.antecedent))

    def sort_key(self) -> tuple:
        return (self.consequent.token, self.antecedent_tokens)


def build_contingency(supp_xy, supp_x, supp_y, m: int) -> ContingencyTable:
    """Observed and expected cell proportions for antecedent/consequent
    co-occurrence. Accepts floats or Fractions; Fractions keep the cells
    exact until the final float conversion."""
    if not (0 <= supp_xy <= supp_x <= 1 and supp_xy <= supp_y <= 1):
        raise DomainError(
            f"inconsistent supports: supp_xy={supp_xy}, supp_x={supp_x}, supp_y={supp_y}"
        )
    o4 = 1 - supp_x - supp_y + supp_xy
    if o4 < 0:
        raise DomainError(
            f"inconsistent supports: union exceeds 1 ({supp_x}, {supp_y}, {supp_xy})"
        )
    observed = (supp_xy, supp_x - supp_xy, supp_y - supp_xy, o4)
    expected = (
        supp_x * supp_y,
        supp_x * (1 - supp_y),
        supp_y * (1 - supp_x),
        1 - supp_x - supp_y + supp_x * supp_y,
    )
    return ContingencyTable(
        observed=tuple(float(v) for v in observed),
        expected=tuple(float(v) for v in expected),
        m=m,
    )


def chi_squared(table: ContingencyTable) -> float:
    """Count-scaled chi-squared: m * sum((O-E)^2 / E) over the four cells.

    The cells are proportions, so the plain sum would be the count-based
    statistic divided by m; multiplying by m restores the standard scale.
    Degenerate marginals yield 0.0 (check `table.degenerate`).
    """
    if table.degenerate:
        return 0.0
    total = 0.0
    for o, e in zip(table.observed, table.expected):
        total += (o - e) ** 2 / e
    return table.m * total


@dataclass(frozen=True)
class RuleMeasures:
    support: float
    left_support: float
    confidence: float
    lift: float
    chi_squared: float


def contingency_from_counts(
    count_xy: int, count_x: int, count_y: int, m: int
) -> ContingencyTable:
    """Contingency cells from integer counts.

    Every cell is one correctly-rounded division of exact integer
    products, so algebraically equal cells (observed == expected under
    independence) come out as identical floats and the chi-squared is
    exactly zero exactly when the lift is one.
    """
    count_xy, count_x, count_y, m = int(count_xy), int(count_x), int(count_y), int(m)
    mm = m * m
    observed = (
        count_xy / m,
        (count_x - count_xy) / m,
        (count_y - count_xy) / m,
        (m - count_x - count_y + count_xy) / m,
    )
    expected = (
        (count_x * count_y) / mm,
        (count_x * (m - count_y)) / mm,
        (count_y * (m - count_x)) / mm,
        ((m - count_x) * (m - count_y)) / mm,
    )
    return ContingencyTable(observed=observed, expected=expected, m=m)


def rule_measures(count_xy: int, count_x: int, count_y: int, m: int) -> RuleMeasures:
    """All five rule measures from exact basket counts."""
    if m <= 0:
        raise DomainError("basket count must be positive")
    if count_x <= 0 or count_y <= 0:
        raise DomainError("confidence and lift are undefined for empty marginals")
    if not 0 <= count_xy <= min(count_x, count_y) or max(count_x, count_y) > m:
        raise DomainError(
            f"inconsistent counts: xy={count_xy}, x={count_x}, y={count_y}, m={m}"
        )
    table = contingency_from_counts(count_xy, count_x, count_y, m)
    return RuleMeasures(
        support=count_xy / m,
        left_support=count_x / m,
        confidence=count_xy / count_x,
        lift=(count_xy * m) / (count_x * count_y),
        chi_squared=chi_squared(table),
    )


def supp(itemset: Iterable[Item], db: BasketDatabase) -> float:
    """Fraction of baskets containing `itemset`; 1.0 for the empty set."""
    return db.supp(itemset)


def min_count_for(threshold: float, m: int) -> int:
    """Smallest basket count c with c/m >= threshold."""
    c = max(1, math.ceil(threshold * m))
    while c > 1 and (c - 1) / m >= threshold:
        c -= 1
    while c / m < threshold:
        c += 1
    return c


# A base itemset is counted against extensions through one of two routes:
# dense bases stay as packed words (AND + popcount per extension row),
# sparse bases become tid arrays and extensions are gathered from the
# boolean membership matrix, costing one byte per covered basket instead
# of m/8 bytes. The cutoff is the density where both cost the same.
_SPARSE_DIVISOR = 8


@dataclass(frozen=True)
class _Base:
    packed: np.ndarray | None  # uint64 row when dense
    tids: np.ndarray | None  # basket ordinals when sparse
    count: int


def _and_words(words: np.ndarray, ids: Sequence[int]) -> np.ndarray:
    acc = words[ids[0]]
    for i in ids[1:]:
        acc = acc & words[i]
    return acc


def _make_base(db: BasketDatabase, ids: Sequence[int]) -> _Base:
    ordered = sorted(ids, key=lambda i: db.counts[i])
    smallest = int(db.counts[ordered[0]])
    if smallest * _SPARSE_DIVISOR < db.m:
        # Narrow the smallest item's tid list through the others.
        bools = db.bools
        tids = db.tid_lists[ordered[0]]
        for i in ordered[1:]:
            tids = tids[bools[i, tids] != 0]
        return _Base(None, tids, len(tids))
    packed = _and_words(db.words, ids)
    count = int(np.bitwise_count(packed).sum())
    if count * _SPARSE_DIVISOR < db.m:
        expanded = np.unpackbits(packed.view(np.uint8), count=db.m)
        return _Base(None, np.nonzero(expanded)[0], count)
    return _Base(packed, None, count)


def _count_over(db: BasketDatabase, base: _Base, ext_ids: Sequence[int]) -> np.ndarray:
    """count(base AND {e}) for each extension id."""
    n = len(ext_ids)
    if n == 0:
        return np.empty(0, dtype=np.int64)
    if base.tids is not None:
        if len(base.tids) == 0:
            return np.zeros(n, dtype=np.int64)
        sub = db.bools[np.ix_(np.asarray(ext_ids), base.tids)]
        return sub.sum(axis=1, dtype=np.int64)
    words = db.words
    out = np.empty(n, dtype=np.int64)
    chunk = max(1, _BATCH_BYTES // (words.shape[1] * 8))
    ids = np.asarray(ext_ids)
    for lo in range(0, n, chunk):
        block = ids[lo : lo + chunk]
        out[lo : lo + len(block)] = np.bitwise_count(words[block] & base.packed).sum(
            axis=1, dtype=np.int64
        )
    return out


def _resolve_workers(workers: int | None) -> int:
    if workers is None:
        return max(1, os.cpu_count() or 1)
    if workers < 1:
        raise ConfigError(f"workers must be >= 1: {workers}")
    return workers


def _run_jobs(jobs, fn, workers: int):
    """Run `fn` over jobs, threaded when workers > 1. Results come back in
    submission order, so the merged output never depends on scheduling."""
    if workers == 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def frequent_antecedents(
    db: BasketDatabase,
    min_count: int,
    max_size: int,
    exclude: Item | None = None,
    workers: int | None = None,
) -> dict[tuple[int, ...], int]:
    """Level-wise frequent itemsets as sorted item-id tuples -> basket count.

    Candidates at level k+1 join two frequent k-sets sharing a prefix and
    are pruned unless every k-subset is frequent.
    """
    workers = _resolve_workers(workers)
    db.bools  # materialize before any parallel counting
    exclude_id = db.item_ids.get(exclude) if exclude is not None else None

    freq: dict[tuple[int, ...], int] = {}
    current: list[tuple[int, ...]] = []
    for i in range(len(db.items)):
        if i == exclude_id:
            continue
        c = int(db.counts[i])
        if c >= min_count:
            freq[(i,)] = c
            current.append((i,))
    current.sort()

    size = 1
    while size < max_size and current:
        jobs: list[tuple[tuple[int, ...], int, np.ndarray]] = []
        # Join step: extend each k-set with the larger tails of its prefix
        # group, then prune candidates with an infrequent k-subset. The
        # pair->triple transition dominates, so its prune uses a boolean
        # adjacency row per leading item instead of generic tuple checks.
        pair_rows: dict[int, np.ndarray] = {}
        current_set: set[tuple[int, ...]] = set()
        if size == 2:
            n_items = len(db.items)
            for a, b in current:
                row = pair_rows.get(a)
                if row is None:
                    row = np.zeros(n_items, dtype=bool)
                    pair_rows[a] = row
                row[b] = True
        elif size >= 3:
            current_set = set(current)
        for prefix, group in groupby(current, key=lambda t: t[:-1]):
            tails = np.asarray([t[-1] for t in group])
            for idx in range(len(tails) - 1):
                la = int(tails[idx])
                exts = tails[idx + 1 :]
                if size == 2:
                    row = pair_rows.get(la)
                    exts = exts[row[exts]] if row is not None else exts[:0]
                elif size >= 3:
                    exts = np.asarray(
                        [
                            e
                            for e in exts
                            if all(
                                tuple(v for v in prefix + (la, int(e)) if v != drop)
                                in current_set
                                for drop in prefix
                            )
                        ],
                        dtype=tails.dtype,
                    )
                if len(exts):
                    jobs.append((prefix, la, exts))

        def count_job(job):
            prefix, la, exts = job
            return _count_over(db, _make_base(db, prefix + (la,)), exts)

        results = _run_jobs(jobs, count_job, workers)
        next_level: dict[tuple[int, ...], int] = {}
        for (prefix, la, exts), counts in zip(jobs, results):
            for j in np.nonzero(counts >= min_count)[0]:
                next_level[prefix + (la, int(exts[j]))] = int(counts[j])
        freq.update(next_level)
        current = sorted(next_level)
        size += 1
    return freq


def _co_counts(
    db: BasketDatabase,
    sets_sorted: list[tuple[int, ...]],
    target_id: int,
    workers: int,
) -> dict[tuple[int, ...], int]:
    """count(X union {target}) for every id-tuple X, grouped by shared prefix."""
    jobs = [
        (prefix, [t[-1] for t in group])
        for prefix, group in groupby(sets_sorted, key=lambda t: t[:-1])
    ]

    def count_job(job):
        prefix, tails = job
        return _count_over(db, _make_base(db, prefix + (target_id,)), tails)

    results = _run_jobs(jobs, count_job, workers)
    out: dict[tuple[int, ...], int] = {}
    for (prefix, tails), counts in zip(jobs, results):
        for tail, c in zip(tails, counts):
            out[prefix + (tail,)] = int(c)
    return out


def mine_rules(
    db: BasketDatabase,
    consequent: Item,
    constraints: MiningConstraints | None = None,
    workers: int | None = None,
) -> list[AssociationRule]:
    """All rules antecedent => {consequent} satisfying the constraints.

    Returns exactly the rules whose antecedent has at most
    `max_antecedent` items, excludes the consequent, meets the
    left-support floor, and whose confidence meets the floor. The list
    is sorted for reproducible output; treat it as a set.
    """
    constraints = constraints or MiningConstraints()
    workers = _resolve_workers(workers)
    consequent_id = db.item_ids.get(consequent)
    if consequent_id is None:
        raise DomainError(f"consequent does not appear in any basket: {consequent}")
    min_count = min_count_for(constraints.min_left_support, db.m)
    freq = frequent_antecedents(
        db, min_count, constraints.max_antecedent, exclude=consequent, workers=workers
    )
    xy = _co_counts(db, sorted(freq), consequent_id, workers)
    count_y = int(db.counts[consequent_id])

    rules = []
    for ids, count_x in freq.items():
        count_xy = xy[ids]
        if count_xy / count_x < constraints.min_confidence:
            continue
        measures = rule_measures(count_xy, count_x, count_y, db.m)
        rules.append(
            AssociationRule(
                antecedent=frozenset(db.items[i] for i in ids),
                consequent=consequent,
                support=measures.support,
                left_support=measures.left_support,
                confidence=measures.confidence,
                lift=measures.lift,
                chi_squared=measures.chi_squared,
            )
        )
    rules.sort(key=AssociationRule.sort_key)
    return rules


def mine_all_rules(
    db: BasketDatabase,
    constraints: MiningConstraints | None = None,
    workers: int | None = None,
) -> list[AssociationRule]:
    """Union of mine_rules over every item appearing in the corpus.

    Frequent antecedents are computed once; each is then counted against
    every other item as a candidate consequent in one vectorized pass.
    """
    constraints = constraints or MiningConstraints()
    workers = _resolve_workers(workers)
    min_count = min_count_for(constraints.min_left_support, db.m)
    freq = frequent_antecedents(
        db, min_count, constraints.max_antecedent, exclude=None, workers=workers
    )
    n_items = len(db.items)
    all_ids = list(range(n_items))
    sets_sorted = sorted(freq)
    jobs = [
        (prefix, [t[-1] for t in group])
        for prefix, group in groupby(sets_sorted, key=lambda t: t[:-1])
    ]

    def count_job(job):
        prefix, tails = job
        return [
            _count_over(db, _make_base(db, prefix + (tail,)), all_ids) for tail in tails
        ]

    results = _run_jobs(jobs, count_job, workers)
    rules = []
    for (prefix, tails), rows in zip(jobs, results):
        for tail, against_all in zip(tails, rows):
            ids = prefix + (tail,)
            count_x = freq[ids]
            member = set(ids)
            for cid in range(n_items):
                if cid in member:
                    continue
                count_xy = int(against_all[cid])
                if count_xy / count_x < constraints.min_confidence:
                    continue
                measures = rule_measures(count_xy, count_x, int(db.counts[cid]), db.m)
                rules.append(
                    AssociationRule(
                        antecedent=frozenset(db.items[i] for i in ids),
                        consequent=db.items[cid],
                        support=measures.support,
                        left_support=measures.left_support,
                        confidence=measures.confidence,
                        lift=measures.lift,
                        chi_squared=measures.chi_squared,
                    )
                )
    rules.sort(key=AssociationRule.sort_key)
    return rules


_CSV_HEADER = [
    "antecedent",
    "consequent",
    "left_support",
    "support",
    "confidence",
    "lift",
    "chi_squared",
]


def _fmt(value: float) -> str:
    return f"{value:.12g}"


def write_rules_csv(rules: Iterable[AssociationRule], path: str) -> None:
    ordered = sorted(rules, key=AssociationRule.sort_key)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_HEADER)
        for r in ordered:
            writer.writerow(
                [
                    "|".join(r.antecedent_tokens),
                    r.consequent.token,
                    _fmt(r.left_support),
                    _fmt(r.support),
                    _fmt(r.confidence),
                    _fmt(r.lift),
                    _fmt(r.chi_squared),
                ]
            )


def write_rules_json(rules: Iterable[AssociationRule], path: str) -> None:
    ordered = sorted(rules, key=AssociationRule.sort_key)
    payload = [
        {
            "antecedent": list(r.antecedent_tokens),
            "consequent": r.consequent.token,
            "left_support": r.left_support,
            "support": r.support,
            "confidence": r.confidence,
            "lift": r.lift,
            "chi_squared": r.chi_squared,
        }
        for r in ordered
    ]
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def _rule_from_fields(
    antecedent_tokens: Iterable[str], consequent_token: str, numbers: dict[str, float]
) -> AssociationRule:
    return AssociationRule(
        antecedent=frozenset(parse_item(t) for t in antecedent_tokens),
        consequent=parse_item(consequent_token),
        support=numbers["support"],
        left_support=numbers["left_support"],
        confidence=numbers["confidence"],
        lift=numbers["lift"],
        chi_squared=numbers["chi_squared"],
    )


def read_rules_csv(path: str) -> list[AssociationRule]:
    rules = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _CSV_HEADER:
            raise ParseError(f"expected header {','.join(_CSV_HEADER)}", source=path, line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(_CSV_HEADER):
                raise ParseError(
                    f"expected {len(_CSV_HEADER)} fields, got {len(row)}",
                    source=path,
                    line=lineno,
                )
            try:
                numbers = {
                    name: float(row[i])
                    for i, name in enumerate(_CSV_HEADER)
                    if i >= 2
                }
                rules.append(_rule_from_fields(row[0].split("|"), row[1], numbers))
            except (ValueError, ParseError) as exc:
                raise ParseError(str(exc), source=path, line=lineno) from None
    return rules


def read_rules_json(path: str) -> list[AssociationRule]:
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(str(exc), source=path) from None
    rules = []
    for obj in payload:
        try:
            numbers = {k: float(obj[k]) for k in _CSV_HEADER[2:]}
            rules.append(_rule_from_fields(obj["antecedent"], obj["consequent"], numbers))
        except (KeyError, TypeError, ValueError, ParseError) as exc:
            raise ParseError(f"bad rule object: {exc}", source=path) from None
    return rules
