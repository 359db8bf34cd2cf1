"""Capacity-bounded dynamic negative bank with an overflow buffer and Flash merge.

Entries are ranked by ``delta`` (mean 1 + cos to the ID prototypes, smaller is
better separated). Ties in any ranking go to the smaller insertion index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import InvalidRho, NegStreamError, Rng, check_dims, cosines
from .inversion import separation_term
from .negatives import IdModel


@dataclass(frozen=True, eq=False)
class BankEntry:
    feature: np.ndarray
    delta: float
    origin: str
    insertion_index: int

    @property
    def rank_key(self) -> tuple[float, int]:
        return (self.delta, self.insertion_index)


@dataclass
class NegativeBank:
    capacity: int
    entries: list[BankEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def full(self) -> bool:
        return len(self.entries) >= self.capacity


@dataclass
class BufferState:
    capacity: int
    rho: float = 0.5
    entries: list[BankEntry] = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise InvalidRho(f"rho must lie in [0, 1], got {self.rho}")

    def __len__(self) -> int:
        return len(self.entries)


def id_separated_criterion(t_neg: np.ndarray, model: IdModel) -> bool:
    """True iff t_neg is strictly less aligned with every prototype than that class's own text feature."""
    t_neg = np.asarray(t_neg, dtype=np.float64)
    check_dims(model.prototypes, t_neg)
    # both sides use the same reduction so t_neg == t_{y_c} compares equal bit for bit
    cand = np.clip(np.sum(model.prototypes * t_neg[None, :], axis=1), -1.0, 1.0)
    ref = np.clip(np.sum(model.prototypes * model.class_text_features, axis=1), -1.0, 1.0)
    return bool(np.all(cand < ref))


def delta(t_neg: np.ndarray, model: IdModel) -> float:
    return separation_term(t_neg, model)


def make_entry(feature: np.ndarray, model: IdModel, origin: str, insertion_index: int) -> BankEntry:
    return BankEntry(np.asarray(feature, dtype=np.float64), delta(feature, model), origin, insertion_index)


def top_m(pool: list[BankEntry], m: int) -> tuple[list[BankEntry], list[BankEntry]]:
    """Split ``pool`` into the ``m`` smallest-delta entries and the rest, both in rank order."""
    ranked = sorted(pool, key=lambda e: e.rank_key)
    return ranked[:m], ranked[m:]


def flash(bank: NegativeBank, overflow_pool: list[BankEntry], rho: float, rng: Rng) -> NegativeBank:
    """Merge the best floor(rho * |pool|) pool entries into the bank, then keep a uniform M-subset.

    The merge is a set union keyed by insertion index: an overflow entry
    that is also a bank member is counted once.
    """
    if not 0.0 <= rho <= 1.0:
        raise InvalidRho(f"rho must lie in [0, 1], got {rho}")
    M = bank.capacity
    if len(bank) != M:
        raise NegStreamError(f"flash needs a full bank ({len(bank)} of {M})")
    k = math.floor(rho * len(overflow_pool))
    chosen, _ = top_m(overflow_pool, k)
    present = {e.insertion_index for e in bank.entries}
    merged = list(bank.entries) + [e for e in chosen if e.insertion_index not in present]
    picks = rng.sample_without_replacement(len(merged), M)
    kept = sorted((merged[i] for i in picks), key=lambda e: e.insertion_index)
    return NegativeBank(M, kept)


def update(
    bank: NegativeBank,
    buffer: BufferState | None,
    candidate: BankEntry,
    rng: Rng,
) -> tuple[NegativeBank, BufferState | None, bool]:
    """Insert an accepted candidate; returns (bank, buffer, bank_changed).

    ``buffer=None`` disables buffering: once the bank is full it simply keeps
    the top-M by delta and discards the overflow.
    """
    M = bank.capacity
    if len(bank) < M:
        return NegativeBank(M, bank.entries + [candidate]), buffer, True

    kept, (overflow,) = top_m(bank.entries + [candidate], M)
    kept_ids = {e.insertion_index for e in kept}
    # preserve insertion order in the bank
    top_bank = NegativeBank(M, [e for e in bank.entries + [candidate] if e.insertion_index in kept_ids])
    changed = overflow is not candidate

    if buffer is None:
        return top_bank, None, changed
    if len(buffer) < buffer.capacity:
        return top_bank, BufferState(buffer.capacity, buffer.rho, buffer.entries + [overflow]), changed

    new_bank = flash(bank, buffer.entries + [overflow], buffer.rho, rng)
    changed = [e.insertion_index for e in new_bank.entries] != [e.insertion_index for e in bank.entries]
    return new_bank, BufferState(buffer.capacity, buffer.rho, []), changed


def snapshot_features(bank: NegativeBank) -> list[np.ndarray]:
    return [e.feature for e in bank.entries]


def bank_matrix(bank: NegativeBank, dim: int) -> np.ndarray:
    if not bank.entries:
        return np.zeros((0, dim))
    return np.stack([e.feature for e in bank.entries])
