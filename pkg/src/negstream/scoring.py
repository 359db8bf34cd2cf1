"""Closed-form OOD scores.

Every exp-sum ratio subtracts one global max logit from all terms before
exponentiating; with tau=0.01 logits reach +-100 and naive exp overflows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .core import EmptyGroup, NegStreamError, Rng, TooFewNegatives, check_dims
from .negatives import IdModel

ID = "ID"
OOD = "OOD"


@dataclass
class ScoreConfig:
    tau: float = 0.01
    G: int = 5
    # None means "use the number of ID classes"
    C_scale: float | None = None

    def __post_init__(self):
        if not self.tau > 0:
            raise NegStreamError(f"tau must be positive, got {self.tau}")
        if self.G < 1:
            raise NegStreamError(f"G must be >= 1, got {self.G}")
        if self.C_scale is not None and not self.C_scale > 0:
            raise NegStreamError(f"C_scale must be positive, got {self.C_scale}")

    def scale_for(self, model: IdModel) -> float:
        return float(model.n_classes if self.C_scale is None else self.C_scale)


@dataclass
class Grouping:
    permutation: np.ndarray
    boundaries: list[tuple[int, int]]

    @property
    def n(self) -> int:
        return len(self.permutation)

    @property
    def G(self) -> int:
        return len(self.boundaries)

    def groups(self) -> list[np.ndarray]:
        return [self.permutation[a:b] for a, b in self.boundaries]


def _logits(v: np.ndarray, feats: np.ndarray, tau: float) -> np.ndarray:
    feats = np.asarray(feats, dtype=np.float64)
    if feats.size == 0:
        return np.zeros(0)
    check_dims(feats, v)
    return (feats @ v) / tau


def zero_shot_probabilities(v: np.ndarray, model: IdModel, tau: float) -> np.ndarray:
    if not tau > 0:
        raise NegStreamError("tau must be positive")
    z = _logits(v, model.class_text_features, tau)
    e = np.exp(z - z.max())
    return e / e.sum()


def neglabel_score(v: np.ndarray, model: IdModel, negatives: np.ndarray, tau: float) -> float:
    """ID exp-mass over ID plus negative exp-mass, in one softmax denominator."""
    if not tau > 0:
        raise NegStreamError("tau must be positive")
    pos = _logits(v, model.class_text_features, tau)
    neg = _logits(v, negatives, tau) if len(negatives) else np.zeros(0)
    m = max(pos.max(), neg.max()) if neg.size else pos.max()
    P = np.exp(pos - m).sum()
    N = np.exp(neg - m).sum() if neg.size else 0.0
    return float(P / (P + N))


def make_grouping(n_negatives: int, G: int, rng: Rng) -> Grouping:
    """Random permutation cut into G contiguous slices; the first n mod G get one extra."""
    if G < 1 or n_negatives < G:
        raise TooFewNegatives(f"{n_negatives} negatives cannot fill {G} groups")
    perm = rng.permutation(n_negatives)
    base, extra = divmod(n_negatives, G)
    bounds = []
    start = 0
    for g in range(G):
        size = base + (1 if g < extra else 0)
        bounds.append((start, start + size))
        start += size
    return Grouping(perm, bounds)


def group_activations(
    v: np.ndarray,
    model: IdModel,
    negatives: np.ndarray,
    grouping: Grouping,
    cfg: ScoreConfig,
) -> tuple[float, np.ndarray, float]:
    """Return (P, A, m): positive mass and per-group normalized negative mass, both scaled by exp(-m)."""
    negatives = np.asarray(negatives, dtype=np.float64)
    if grouping.n != len(negatives):
        raise NegStreamError(f"grouping covers {grouping.n} negatives, got {len(negatives)}")
    pos = _logits(v, model.class_text_features, cfg.tau)
    neg = _logits(v, negatives, cfg.tau)
    m = max(pos.max(), neg.max()) if neg.size else pos.max()
    P = float(np.exp(pos - m).sum())
    eneg = np.exp(neg - m)
    scale = cfg.scale_for(model)
    A = np.empty(grouping.G)
    for g, (a, b) in enumerate(grouping.boundaries):
        if b <= a:
            raise EmptyGroup(f"group {g} is empty")
        # summed in ascending index order so within-group order is irrelevant
        idx = np.sort(grouping.permutation[a:b])
        A[g] = scale * (eneg[idx].sum() / (b - a))
    return P, A, m


def group_score(
    v: np.ndarray,
    model: IdModel,
    negatives: np.ndarray,
    grouping: Grouping,
    cfg: ScoreConfig,
) -> float:
    """Mean over groups of P / (P + A_g)."""
    P, A, _ = group_activations(v, model, negatives, grouping, cfg)
    return float(np.mean(P / (P + A)))


def classify(score: float, gamma: float) -> Literal["ID", "OOD"]:
    return ID if score >= gamma else OOD
