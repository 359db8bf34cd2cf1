"""Per-sample streaming pipeline: score, gate, invert, filter, update the bank, re-score."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np

from . import bank as bankmod
from .bank import BankEntry, BufferState, NegativeBank
from .core import NegStreamError, NonFiniteLoss, Rng
from .inversion import InversionConfig, TextEncoder, invert
from .negatives import IdModel, StaticNegatives, VocabularyEntry, build_id_model, mine_negatives
from .scoring import Grouping, ScoreConfig, group_score, make_grouping

log = logging.getLogger(__name__)


@dataclass
class EngineConfig:
    beta: float = 0.3
    score: ScoreConfig = field(default_factory=ScoreConfig)
    inversion: InversionConfig = field(default_factory=InversionConfig)
    L: int = 2000
    M: int = 2000
    rho: float = 0.5
    batch_size: int = 256
    use_buffer: bool = True
    dynamic: bool = True
    # "on_change": new permutation whenever the bank changes; "per_batch": also at every batch start
    repermute: Literal["on_change", "per_batch"] = "on_change"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise NegStreamError(f"beta must lie in [0, 1], got {self.beta}")
        if self.M < 1 or self.L < 1 or self.batch_size < 1:
            raise NegStreamError("L, M and batch_size must be positive")
        if self.repermute not in ("on_change", "per_batch"):
            raise NegStreamError(f"unknown repermute mode {self.repermute!r}")


@dataclass
class StreamResult:
    sample_id: str
    initial_score: float
    final_score: float
    potential_ood: bool
    bank_size_after: int
    truth: str | None = None
    accepted: bool = False


@dataclass
class EngineState:
    cfg: EngineConfig
    model: IdModel
    static: StaticNegatives
    bank: NegativeBank
    buffer: BufferState | None
    rng: Rng
    grouping: Grouping
    next_index: int = 0
    samples_seen: int = 0

    def __post_init__(self):
        self._static_feats = self.static.features
        self._negatives = None

    def negatives(self) -> np.ndarray:
        """Static negatives followed by bank features in insertion order."""
        if self._negatives is None:
            self._negatives = np.vstack([self._static_feats, bankmod.bank_matrix(self.bank, self.model.dim)])
        return self._negatives

    def refresh_grouping(self) -> None:
        self._negatives = None
        self.grouping = make_grouping(len(self.negatives()), self.cfg.score.G, self.rng)

    def score(self, v: np.ndarray) -> float:
        return group_score(v, self.model, self.negatives(), self.grouping, self.cfg.score)

    def to_dict(self) -> dict:
        def entry(e: BankEntry) -> dict:
            return {
                "feature": e.feature.tolist(),
                "delta": e.delta,
                "origin": e.origin,
                "insertion_index": e.insertion_index,
            }

        return {
            "bank": [entry(e) for e in self.bank.entries],
            "buffer": None if self.buffer is None else [entry(e) for e in self.buffer.entries],
            "rng": self.rng.get_state(),
            "grouping": {
                "permutation": self.grouping.permutation.tolist(),
                "boundaries": [list(b) for b in self.grouping.boundaries],
            },
            "next_index": self.next_index,
            "samples_seen": self.samples_seen,
        }

    def load_dynamic(self, d: dict) -> None:
        """Restore bank, buffer, RNG and grouping from ``to_dict`` output."""

        def entry(x: dict) -> BankEntry:
            return BankEntry(np.array(x["feature"], dtype=np.float64), float(x["delta"]), x["origin"], int(x["insertion_index"]))

        self.bank = NegativeBank(self.cfg.M, [entry(x) for x in d["bank"]])
        if len(self.bank) > self.cfg.M:
            raise NegStreamError(f"checkpoint bank holds {len(self.bank)} entries, capacity is {self.cfg.M}")
        if self.cfg.use_buffer:
            self.buffer = BufferState(self.cfg.M, self.cfg.rho, [entry(x) for x in (d["buffer"] or [])])
        self.rng = Rng.from_state(d["rng"])
        self._negatives = None
        self.grouping = Grouping(
            np.array(d["grouping"]["permutation"], dtype=np.int64),
            [tuple(b) for b in d["grouping"]["boundaries"]],
        )
        if self.grouping.n != len(self.negatives()):
            raise NegStreamError("checkpoint grouping does not match the negative set")
        self.next_index = int(d["next_index"])
        self.samples_seen = int(d["samples_seen"])


def setup(
    id_shots: Sequence[np.ndarray],
    class_text_features: np.ndarray,
    vocabulary: Sequence[VocabularyEntry],
    cfg: EngineConfig,
    class_names: Sequence[str] | None = None,
) -> EngineState:
    """Build prototypes, mine static negatives, start with an empty bank and buffer."""
    model = build_id_model(id_shots, class_text_features, class_names)
    static = mine_negatives(vocabulary, model, cfg.L)
    rng = Rng(cfg.seed)
    buffer = BufferState(cfg.M, cfg.rho) if cfg.use_buffer else None
    grouping = make_grouping(len(static), cfg.score.G, rng)
    return EngineState(cfg, model, static, NegativeBank(cfg.M), buffer, rng, grouping)


def process(
    state: EngineState,
    v: np.ndarray,
    encoder: TextEncoder,
    sample_id: str = "",
    truth: str | None = None,
) -> StreamResult:
    cfg = state.cfg
    if cfg.repermute == "per_batch" and state.samples_seen > 0 and state.samples_seen % cfg.batch_size == 0:
        state.refresh_grouping()
    state.samples_seen += 1

    initial = state.score(v)
    potential = cfg.dynamic and initial < cfg.beta
    accepted = False
    if potential:
        try:
            t_neg, _ = invert(v, encoder, state.model, cfg.inversion, state.static, state.rng)
        except NonFiniteLoss as exc:
            log.warning("inversion failed for sample %s: %s", sample_id, exc)
            t_neg = None
        if t_neg is not None and bankmod.id_separated_criterion(t_neg, state.model):
            accepted = True
            cand = bankmod.make_entry(t_neg, state.model, sample_id, state.next_index)
            state.next_index += 1
            state.bank, state.buffer, changed = bankmod.update(state.bank, state.buffer, cand, state.rng)
            if changed:
                state.refresh_grouping()
    final = state.score(v)
    return StreamResult(sample_id, initial, final, potential, len(state.bank), truth, accepted)


def run_stream(
    state: EngineState,
    stream: Iterable[Sequence],
    encoder: TextEncoder,
) -> list[StreamResult]:
    """Process ``(sample_id, vector, truth, ...)`` items strictly in order."""
    return [process(state, item[1], encoder, item[0], item[2]) for item in stream]
