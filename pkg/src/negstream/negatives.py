"""Class prototypes from few-shot ID images and top-L static negative mining."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .core import (
    DimensionMismatch,
    EmptyClass,
    VocabularyTooSmall,
    check_dims,
    cosines,
    normalize,
    normalize_rows,
)


@dataclass
class IdModel:
    """ID class text features (C x d) and unit-norm image prototypes (C x d)."""

    class_text_features: np.ndarray
    prototypes: np.ndarray
    class_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.class_text_features = np.asarray(self.class_text_features, dtype=np.float64)
        self.prototypes = np.asarray(self.prototypes, dtype=np.float64)
        if self.class_text_features.ndim != 2 or self.class_text_features.shape[0] < 1:
            raise EmptyClass("IdModel needs at least one class")
        if self.class_text_features.shape != self.prototypes.shape:
            raise DimensionMismatch(
                f"text features {self.class_text_features.shape} vs prototypes {self.prototypes.shape}"
            )
        if not self.class_names:
            self.class_names = [f"class_{c}" for c in range(self.n_classes)]

    @property
    def n_classes(self) -> int:
        return self.class_text_features.shape[0]

    @property
    def dim(self) -> int:
        return self.class_text_features.shape[1]


@dataclass
class VocabularyEntry:
    token_id: str
    token_embedding: np.ndarray
    text_feature: np.ndarray


@dataclass
class StaticNegatives:
    entries: list[VocabularyEntry]
    distances: np.ndarray

    def __len__(self) -> int:
        return len(self.entries)

    @cached_property
    def features(self) -> np.ndarray:
        return np.stack([e.text_feature for e in self.entries])


def build_prototypes(shots: Sequence[Sequence[np.ndarray] | np.ndarray]) -> np.ndarray:
    """Per-class mean of the shot embeddings, re-normalized to unit norm."""
    protos = []
    dim = None
    for c, class_shots in enumerate(shots):
        arr = np.asarray(class_shots, dtype=np.float64)
        if arr.size == 0:
            raise EmptyClass(f"class {c} has no shots")
        arr = np.atleast_2d(arr)
        if dim is None:
            dim = arr.shape[1]
        elif arr.shape[1] != dim:
            raise DimensionMismatch(f"class {c} shots have dimension {arr.shape[1]}, expected {dim}")
        protos.append(normalize(arr.mean(axis=0)))
    if not protos:
        raise EmptyClass("no classes given")
    return np.stack(protos)


def build_id_model(shots, class_text_features, class_names=None) -> IdModel:
    feats = normalize_rows(np.asarray(class_text_features, dtype=np.float64))
    protos = build_prototypes(shots)
    return IdModel(feats, protos, list(class_names or []))


def negative_distance(candidate: VocabularyEntry | np.ndarray, model: IdModel) -> float:
    """Mean cosine distance of a candidate text feature to all class prototypes."""
    t = candidate.text_feature if isinstance(candidate, VocabularyEntry) else candidate
    check_dims(model.prototypes, np.asarray(t))
    return float(np.mean(1.0 - cosines(model.prototypes, t)))


def negative_distances(text_features: np.ndarray, model: IdModel) -> np.ndarray:
    check_dims(model.prototypes, text_features)
    sims = np.clip(np.asarray(text_features) @ model.prototypes.T, -1.0, 1.0)
    return np.mean(1.0 - sims, axis=1)


def mine_negatives(vocabulary: Sequence[VocabularyEntry], model: IdModel, L: int) -> StaticNegatives:
    """Keep the ``L`` entries farthest from the ID prototypes, sorted descending.

    Ties go to the entry that appears first in ``vocabulary``.
    """
    if L < 1 or len(vocabulary) < L:
        raise VocabularyTooSmall(f"need L={L} entries, vocabulary has {len(vocabulary)}")
    feats = np.stack([e.text_feature for e in vocabulary])
    dist = negative_distances(feats, model)
    # stable sort on -dist keeps vocabulary order among equal distances
    order = np.argsort(-dist, kind="stable")[:L]
    return StaticNegatives([vocabulary[i] for i in order], dist[order])
