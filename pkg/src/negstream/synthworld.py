"""Seeded synthetic embedding worlds standing in for CLIP features and OOD benchmarks.

ID classes and OOD clusters are unit directions in R^d; samples are
isotropic Gaussian perturbations of those directions, renormalized. Hard-ID
samples start from a point interpolated between a class mean and its nearest
OOD cluster mean. Vocabulary tokens are chosen so the synthetic encoder maps
each token embedding exactly onto the stored text feature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, NamedTuple, Sequence

import numpy as np

from .core import InfeasibleGeometry, InsufficientSamples, NegStreamError, Rng, normalize, normalize_rows
from .inversion import SyntheticEncoder
from .negatives import VocabularyEntry

ID = "ID"
OOD = "OOD"


@dataclass
class WorldSpec:
    d: int = 64
    k: int = 64
    C: int = 10
    n_ood_clusters: int = 4
    angular_margin: float = math.radians(70)
    # cos(sample, mean) is about 1 / sqrt(1 + 1 / noise_kappa)
    noise_kappa: float = 1.0
    # concentration of OOD clusters; None reuses noise_kappa
    ood_noise_kappa: float | None = None
    hard_id_fraction: float = 0.1
    vocab_size: int = 500
    seed: int = 0
    n_shots: int = 16
    n_id: int = 200
    n_ood_per_cluster: int = 200
    # cosine between a class text feature and its class mean
    text_alignment: float = 0.8
    # interpolation weight toward the nearest OOD mean for hard-ID samples
    hard_id_mix: float = 0.5
    # minimum pairwise angle among ID means and among OOD means
    mean_separation: float = math.radians(60)
    # fraction of vocabulary words drawn near ID class means (mined away later)
    vocab_id_fraction: float = 0.2
    # fraction of vocabulary words loosely related to OOD clusters, and their cosine to the cluster mean
    vocab_ood_fraction: float = 0.0
    vocab_ood_alignment: float = 0.5
    prefix_scale: float = 0.5
    # offsets along fixed image / text directions; 0 disables the modality gap
    image_gap: float = 0.0
    text_gap: float = 0.0

    def __post_init__(self):
        if self.d < 2 or self.k < 1 or self.C < 1 or self.n_ood_clusters < 1:
            raise NegStreamError("need d >= 2, k >= 1, C >= 1 and at least one OOD cluster")
        if not 0.0 <= self.hard_id_fraction <= 1.0:
            raise NegStreamError("hard_id_fraction must lie in [0, 1]")
        if not 0.0 < self.text_alignment <= 1.0 or self.noise_kappa <= 0:
            raise NegStreamError("text_alignment must lie in (0, 1] and noise_kappa be positive")


@dataclass
class SamplePools:
    id_vectors: np.ndarray
    id_labels: np.ndarray
    id_hard: np.ndarray
    ood_vectors: list[np.ndarray]

    @property
    def n_id(self) -> int:
        return len(self.id_vectors)


@dataclass
class World:
    spec: WorldSpec
    id_shots: list[np.ndarray]
    class_text_features: np.ndarray
    vocabulary: list[VocabularyEntry]
    encoder: SyntheticEncoder
    pools: SamplePools
    id_means: np.ndarray
    ood_means: np.ndarray


class StreamItem(NamedTuple):
    sample_id: str
    vector: np.ndarray
    truth: str
    phase: int


@dataclass
class StreamPlan:
    ordering: Literal["random", "forward", "reverse", "temporal_shift"] = "random"
    id_ood_ratio: tuple[int, int] = (200, 200)
    # OOD cluster indices per phase (temporal_shift); otherwise clusters used for all OOD draws
    phases: list[list[int]] | None = None


def _random_unit(rng: Rng, d: int, n: int) -> np.ndarray:
    return normalize_rows(rng.normal(1.0, (n, d)))


def _perturb(rng: Rng, centers: np.ndarray, kappa: float) -> np.ndarray:
    n, d = centers.shape
    noise = rng.normal(1.0 / math.sqrt(d), (n, d)) / math.sqrt(kappa)
    return normalize_rows(centers + noise)


def _tilt(rng: Rng, centers: np.ndarray, cos_target: float) -> np.ndarray:
    """Rotate each unit center to a random direction at exactly ``cos_target`` from it."""
    n, d = centers.shape
    g = rng.normal(1.0, (n, d))
    g -= np.sum(g * centers, axis=1, keepdims=True) * centers
    g = normalize_rows(g)
    s = math.sqrt(max(0.0, 1.0 - cos_target**2))
    return normalize_rows(cos_target * centers + s * g)


def _spread_directions(rng: Rng, d: int, n: int, min_angle: float, avoid: np.ndarray | None,
                       avoid_angle: float, tries: int = 20000, project=None) -> np.ndarray:
    """Rejection-sample ``n`` unit vectors pairwise >= min_angle apart and >= avoid_angle from ``avoid``."""
    cos_pair = math.cos(min_angle)
    cos_avoid = math.cos(avoid_angle)
    chosen: list[np.ndarray] = []
    batch = 512
    drawn = 0
    while len(chosen) < n and drawn < tries:
        cands = _random_unit(rng, d, batch)
        if project is not None:
            cands = project(cands)
        drawn += batch
        for c in cands:
            if avoid is not None and len(avoid) and np.max(avoid @ c) > cos_avoid + 1e-12:
                continue
            if chosen and np.max(np.stack(chosen) @ c) > cos_pair + 1e-12:
                continue
            chosen.append(c)
            if len(chosen) == n:
                break
    if len(chosen) < n:
        raise InfeasibleGeometry(
            f"could not place {n} directions in d={d} (pairwise >= {min_angle:.3f} rad, "
            f"margin >= {avoid_angle:.3f} rad) after {drawn} draws"
        )
    return np.stack(chosen)


def generate_world(spec: WorldSpec) -> World:
    rng = Rng(spec.seed)
    geo, enc_rng, smp, voc = rng.spawn(4)
    d = spec.d

    # Optional modality gap: images are offset along e_img, texts along e_txt, and the
    # encoder's range excludes e_img so no text feature can reach an image exactly.
    gapped = spec.image_gap > 0 or spec.text_gap > 0
    if gapped:
        if d < 4:
            raise InfeasibleGeometry("a modality gap needs d >= 4")
        basis, _ = np.linalg.qr(geo.normal(1.0, (d, d)))
        e_img, e_txt = basis[:, 0], basis[:, 1]
        sem_proj = np.eye(d) - np.outer(e_img, e_img) - np.outer(e_txt, e_txt)
    else:
        e_img = e_txt = np.zeros(d)
        sem_proj = np.eye(d)

    def semantic(x: np.ndarray) -> np.ndarray:
        return normalize_rows(x @ sem_proj)

    def as_image(x: np.ndarray) -> np.ndarray:
        return normalize_rows(x + spec.image_gap * e_img)

    def as_text(x: np.ndarray) -> np.ndarray:
        return normalize_rows(x + spec.text_gap * e_txt)

    id_means = _spread_directions(geo, d, spec.C, spec.mean_separation, None, 0.0, project=semantic)
    ood_means = _spread_directions(geo, d, spec.n_ood_clusters, spec.mean_separation, id_means,
                                   spec.angular_margin, project=semantic)
    class_text = as_text(semantic(_tilt(geo, id_means, spec.text_alignment)))

    q, r = np.linalg.qr(enc_rng.normal(1.0, (d, d)))
    q = q * np.sign(np.diag(r))
    W = q if spec.k == d else enc_rng.normal(1.0 / math.sqrt(spec.k), (d, spec.k))
    if gapped:
        W = W - np.outer(e_img, e_img @ W)
        b = spec.prefix_scale * e_txt
    else:
        b = enc_rng.normal(1.0, d)
        b = spec.prefix_scale * b / np.linalg.norm(b)
    encoder = SyntheticEncoder(W, b)

    def images(centers: np.ndarray, kappa: float) -> np.ndarray:
        return as_image(semantic(_perturb(smp, centers, kappa)))

    shots = [images(np.repeat(id_means[c][None], spec.n_shots, 0), spec.noise_kappa) for c in range(spec.C)]

    labels = smp.integers(0, spec.C, size=spec.n_id)
    hard = smp.uniform(size=spec.n_id) < spec.hard_id_fraction
    centers = id_means[labels].copy()
    if hard.any():
        nearest = np.argmax(id_means[labels[hard]] @ ood_means.T, axis=1)
        mix = (1 - spec.hard_id_mix) * centers[hard] + spec.hard_id_mix * ood_means[nearest]
        centers[hard] = normalize_rows(mix)
    id_vectors = images(centers, spec.noise_kappa)
    ood_kappa = spec.noise_kappa if spec.ood_noise_kappa is None else spec.ood_noise_kappa
    ood_vectors = [
        images(np.repeat(ood_means[j][None], spec.n_ood_per_cluster, 0), ood_kappa)
        for j in range(spec.n_ood_clusters)
    ]

    n_near = int(round(spec.vocab_id_fraction * spec.vocab_size))
    n_ood = int(round(spec.vocab_ood_fraction * spec.vocab_size))
    if n_near + n_ood > spec.vocab_size:
        raise NegStreamError("vocab_id_fraction + vocab_ood_fraction exceeds 1")
    near = _tilt(voc, id_means[voc.integers(0, spec.C, size=n_near)], 0.6) if n_near else np.zeros((0, d))
    related = (_tilt(voc, ood_means[voc.integers(0, spec.n_ood_clusters, size=n_ood)], spec.vocab_ood_alignment)
               if n_ood else np.zeros((0, d)))
    far = _random_unit(voc, d, spec.vocab_size - n_near - n_ood)
    feats = as_text(semantic(np.vstack([near, related, far])))
    feats = feats[voc.permutation(len(feats))]
    radii = voc.uniform(0.8, 1.2, size=len(feats))
    vocabulary = []
    for i, (t, rad) in enumerate(zip(feats, radii)):
        z = encoder.invert_feature(t, rad)
        vocabulary.append(VocabularyEntry(f"w{i:05d}", z, encoder.encode(z)))

    pools = SamplePools(id_vectors, labels, hard, ood_vectors)
    return World(spec, shots, class_text, vocabulary, encoder, pools, id_means, ood_means)


def build_stream(plan: StreamPlan, pools: SamplePools, rng: Rng) -> list[StreamItem]:
    """Order ID and OOD samples per ``plan``. Samples are drawn without replacement."""
    n_id, n_ood = plan.id_ood_ratio
    if n_id < 0 or n_ood < 0:
        raise NegStreamError("sample counts must be non-negative")
    n_clusters = len(pools.ood_vectors)
    if n_id > pools.n_id:
        raise InsufficientSamples(f"requested {n_id} ID samples, pool has {pools.n_id}")

    id_pick = rng.permutation(pools.n_id)[:n_id]
    id_items = [StreamItem(f"id-{i:05d}", pools.id_vectors[i], ID, 0) for i in id_pick]

    def draw_ood(clusters: Sequence[int], count: int, phase: int) -> list[StreamItem]:
        if not clusters:
            raise NegStreamError("a phase needs at least one OOD cluster")
        per = [count // len(clusters) + (1 if j < count % len(clusters) else 0) for j in range(len(clusters))]
        items = []
        for c, m in zip(clusters, per):
            pool = pools.ood_vectors[c]
            if m > len(pool):
                raise InsufficientSamples(f"requested {m} samples from OOD cluster {c}, pool has {len(pool)}")
            for i in rng.permutation(len(pool))[:m]:
                items.append(StreamItem(f"ood-c{c}-{i:05d}", pool[i], OOD, phase))
        return items

    if plan.ordering == "temporal_shift":
        phases = plan.phases or [[c] for c in range(n_clusters)]
        seen: set[int] = set()
        for ph in phases:
            if seen.intersection(ph):
                raise NegStreamError("temporal-shift phases must use disjoint OOD clusters")
            seen.update(ph)
        out: list[StreamItem] = []
        P = len(phases)
        id_split = [n_id // P + (1 if p < n_id % P else 0) for p in range(P)]
        ood_split = [n_ood // P + (1 if p < n_ood % P else 0) for p in range(P)]
        start = 0
        for p, clusters in enumerate(phases):
            chunk = [it._replace(phase=p) for it in id_items[start:start + id_split[p]]]
            start += id_split[p]
            chunk += draw_ood(clusters, ood_split[p], p)
            out += [chunk[i] for i in rng.permutation(len(chunk))]
        return out

    clusters = plan.phases[0] if plan.phases else list(range(n_clusters))
    ood_items = draw_ood(clusters, n_ood, 0)
    if plan.ordering == "forward":
        return id_items + ood_items
    if plan.ordering == "reverse":
        return ood_items + id_items
    if plan.ordering == "random":
        both = id_items + ood_items
        return [both[i] for i in rng.permutation(len(both))]
    raise NegStreamError(f"unknown ordering {plan.ordering!r}")
