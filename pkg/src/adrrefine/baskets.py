"""Per-patient item baskets and the mining corpus.

Each eligible patient contributes one deduplicated basket: their gender
item plus the normalized item of every retained event. The database
keeps, per item, a packed bitmap over basket ordinals; itemset counts
are bitwise AND + popcount, which is what makes level-wise mining cheap.

Whole-history baskets feed mining; time-restricted pre-outcome baskets
feed signal refinement. The asymmetry is deliberate: rules describe
lifetime co-occurrence, refinement asks what was known before an outcome.
"""

from __future__ import annotations

import datetime as dt
from typing import Iterable, Sequence

import numpy as np

from .codes import Item, gender_item, normalize_item
from .errors import DomainError
from .events import DEFAULT_MIN_ACTIVE_MONTHS, EventStore, eligible_patients

ItemSet = frozenset  # alias for readability; baskets are frozensets of Item


def build_basket(store: EventStore, patient_id: str) -> frozenset[Item]:
    """Whole-history basket: gender plus every normalized retained event."""
    patient = store.patients.get(patient_id)
    if patient is None:
        raise DomainError(f"unknown patient: {patient_id}")
    items = {gender_item(patient.gender)}
    for ev in store.patient_events(patient_id):
        items.add(normalize_item(ev.code_type, ev.code))
    return frozenset(items)


def pre_outcome_basket(
    store: EventStore,
    patient_id: str,
    cutoff_date: dt.date,
    include_same_day: bool = False,
) -> frozenset[Item]:
    """Basket of items recorded before `cutoff_date`.

    Events dated exactly on the cutoff are excluded by default: same-day
    entry order is not recorded, so a same-day item may be a consequence
    of the outcome rather than prior history. `include_same_day` keeps
    them instead.
    """
    patient = store.patients.get(patient_id)
    if patient is None:
        raise DomainError(f"unknown patient: {patient_id}")
    items = {gender_item(patient.gender)}
    for ev in store.patient_events(patient_id):
        if ev.date > cutoff_date:
            break
        if ev.date == cutoff_date and not include_same_day:
            continue
        items.add(normalize_item(ev.code_type, ev.code))
    return frozenset(items)


class BasketDatabase:
    """An immutable basket corpus with a per-item bitmap index.

    Basket ordinals follow store patient order, so rebuilding from the
    same store yields identical ordinals. Items are indexed in token
    order for deterministic ids.
    """

    def __init__(self, baskets: Sequence[tuple[str, frozenset[Item]]]):
        if not baskets:
            raise DomainError("basket database is empty; mining is undefined")
        self.baskets: tuple[tuple[str, frozenset[Item]], ...] = tuple(baskets)
        self.m: int = len(self.baskets)
        universe = set()
        for _, basket in self.baskets:
            universe.update(basket)
        self.items: tuple[Item, ...] = tuple(sorted(universe, key=lambda it: it.token))
        self.item_ids: dict[Item, int] = {it: i for i, it in enumerate(self.items)}

        # Rows are padded to whole 64-bit words so dense counting can run
        # over a uint64 view; the pad bits stay zero and never count.
        n_bytes = ((self.m + 63) // 64) * 8
        bits = np.zeros((len(self.items), n_bytes), dtype=np.uint8)
        row_members: list[list[int]] = [[] for _ in self.items]
        for ordinal, (_, basket) in enumerate(self.baskets):
            for item in basket:
                row_members[self.item_ids[item]].append(ordinal)
        mask = np.zeros(self.m, dtype=bool)
        for i, members in enumerate(row_members):
            mask[:] = False
            mask[members] = True
            bits[i, : (self.m + 7) // 8] = np.packbits(mask)
        self.bits: np.ndarray = bits
        self.words: np.ndarray = bits.view(np.uint64)
        self.counts: np.ndarray = np.array(
            [len(members) for members in row_members], dtype=np.int64
        )
        self._bools: np.ndarray | None = None
        self._tid_lists: list[np.ndarray] | None = None

    @property
    def bools(self) -> np.ndarray:
        """Per-item 0/1 membership matrix (n_items x m), built on first use.
        Costs one byte per basket-item cell; used for sparse counting."""
        if self._bools is None:
            self._bools = np.unpackbits(self.bits, axis=1, count=self.m)
        return self._bools

    @property
    def tid_lists(self) -> list[np.ndarray]:
        """Per-item sorted basket-ordinal arrays, built on first use."""
        if self._tid_lists is None:
            bools = self.bools
            self._tid_lists = [np.nonzero(bools[i])[0] for i in range(len(self.items))]
        return self._tid_lists

    def __contains__(self, item: Item) -> bool:
        return item in self.item_ids

    def item_count(self, item: Item) -> int:
        """Number of baskets containing a single item (0 if unknown)."""
        idx = self.item_ids.get(item)
        return 0 if idx is None else int(self.counts[idx])

    def count(self, itemset: Iterable[Item]) -> int:
        """Number of baskets containing every item of `itemset`."""
        ids = []
        for item in itemset:
            idx = self.item_ids.get(item)
            if idx is None:
                return 0
            ids.append(idx)
        if not ids:
            return self.m
        acc = self.bits[ids[0]]
        for idx in ids[1:]:
            acc = acc & self.bits[idx]
        return int(np.bitwise_count(acc).sum())

    def supp(self, itemset: Iterable[Item]) -> float:
        """Fraction of baskets containing `itemset` (1.0 for the empty set)."""
        return self.count(itemset) / self.m

    def ordinals(self, item: Item) -> np.ndarray:
        """Sorted basket ordinals containing `item`."""
        idx = self.item_ids.get(item)
        if idx is None:
            return np.empty(0, dtype=np.int64)
        expanded = np.unpackbits(self.bits[idx], count=self.m)
        return np.nonzero(expanded)[0].astype(np.int64)


def build_database(
    store: EventStore, min_active_months: int = DEFAULT_MIN_ACTIVE_MONTHS
) -> BasketDatabase:
    """One whole-history basket per eligible patient, in store order."""
    eligible = eligible_patients(store, min_active_months)
    baskets = [
        (pid, build_basket(store, pid)) for pid in store.patients if pid in eligible
    ]
    if not baskets:
        raise DomainError(
            f"no patients active for {min_active_months}+ months; nothing to mine"
        )
    return BasketDatabase(baskets)


def write_baskets(db: BasketDatabase, path: str) -> None:
    """Debug dump: one `patient_id,item1|item2|...` row per basket."""
    with open(path, "w") as fh:
        fh.write("patient_id,items\n")
        for pid, basket in db.baskets:
            tokens = "|".join(sorted(it.token for it in basket))
            fh.write(f"{pid},{tokens}\n")
