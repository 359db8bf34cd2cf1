import math

import numpy as np
import pytest

from negstream.core import InfeasibleGeometry, InsufficientSamples, NegStreamError, Rng
from negstream.synthworld import StreamPlan, WorldSpec, build_stream, generate_world


def test_same_seed_same_world(small_world):
    again = generate_world(small_world.spec)
    np.testing.assert_array_equal(again.pools.id_vectors, small_world.pools.id_vectors)
    np.testing.assert_array_equal(again.encoder.projection, small_world.encoder.projection)
    assert [v.token_id for v in again.vocabulary] == [v.token_id for v in small_world.vocabulary]


@pytest.mark.parametrize("gap", [0.0, 1.0])
def test_encoder_vocabulary_consistency(gap):
    w = generate_world(WorldSpec(d=16, k=16, C=3, vocab_size=60, image_gap=gap, text_gap=gap, seed=3))
    for e in w.vocabulary:
        assert w.encoder.encode(e.token_embedding) @ e.text_feature > 1 - 1e-6


def test_token_dim_smaller_than_embedding_dim():
    w = generate_world(WorldSpec(d=16, k=24, C=3, vocab_size=30, seed=1))
    assert w.vocabulary[0].token_embedding.shape == (24,)


def test_everything_is_unit_norm(small_world):
    p = small_world.pools
    for arr in [p.id_vectors, *p.ood_vectors, small_world.class_text_features, *small_world.id_shots]:
        np.testing.assert_allclose(np.linalg.norm(arr, axis=1), 1.0, atol=1e-12)


def test_margins_respected():
    spec = WorldSpec(d=32, k=32, C=5, n_ood_clusters=3, angular_margin=math.radians(70), vocab_size=20, seed=4)
    w = generate_world(spec)
    assert np.max(w.id_means @ w.ood_means.T) <= math.cos(spec.angular_margin) + 1e-9
    sims = w.id_means @ w.id_means.T - 2 * np.eye(5)
    assert np.max(sims) <= math.cos(spec.mean_separation) + 1e-9


def test_packing_bound_in_two_dimensions():
    try:
        w = generate_world(WorldSpec(d=2, k=2, C=2, n_ood_clusters=1, angular_margin=math.pi / 2,
                                     mean_separation=0.3, vocab_size=5, seed=0))
        assert np.max(w.id_means @ w.ood_means.T) <= 1e-9
    except InfeasibleGeometry:
        pass
    with pytest.raises(InfeasibleGeometry):
        generate_world(WorldSpec(d=2, k=2, C=5, mean_separation=math.radians(80), vocab_size=5, seed=0))


def test_separation_audit_without_hard_samples():
    w = generate_world(WorldSpec(d=32, k=32, C=4, n_ood_clusters=2, angular_margin=math.radians(80),
                                 noise_kappa=40.0, hard_id_fraction=0.0, vocab_size=20, n_id=100,
                                 n_ood_per_cluster=50, seed=2))
    p = w.pools
    own = np.sum(p.id_vectors * w.id_means[p.id_labels], axis=1)
    ood_best = max(np.max(pool @ w.id_means.T) for pool in p.ood_vectors)
    assert own.min() > ood_best


def test_hard_fraction_is_respected():
    w = generate_world(WorldSpec(d=16, k=16, C=3, hard_id_fraction=0.5, n_id=400, vocab_size=10, seed=9))
    assert 0.4 < w.pools.id_hard.mean() < 0.6


def test_orderings(small_world):
    p = small_world.pools
    fwd = build_stream(StreamPlan("forward", (3, 2)), p, Rng(0))
    assert [it.truth for it in fwd] == ["ID", "ID", "ID", "OOD", "OOD"]
    rev = build_stream(StreamPlan("reverse", (3, 2)), p, Rng(0))
    assert [it.truth for it in rev] == ["OOD", "OOD", "ID", "ID", "ID"]
    rnd = build_stream(StreamPlan("random", (30, 30)), p, Rng(0))
    assert len(rnd) == 60 and sum(it.truth == "ID" for it in rnd) == 30
    assert len({it.sample_id for it in rnd}) == 60


def test_ratio_counts_are_exact(small_world):
    for n_id, n_ood in [(40, 40), (2, 80), (10, 0)]:
        s = build_stream(StreamPlan("random", (n_id, n_ood)), small_world.pools, Rng(1))
        assert sum(it.truth == "ID" for it in s) == n_id and sum(it.truth == "OOD" for it in s) == n_ood


def test_insufficient_samples(small_world):
    with pytest.raises(InsufficientSamples):
        build_stream(StreamPlan("random", (41, 0)), small_world.pools, Rng(0))
    with pytest.raises(InsufficientSamples):
        build_stream(StreamPlan("forward", (0, 81), [[0]]), small_world.pools, Rng(0))


def test_temporal_shift_partitions_clusters():
    w = generate_world(WorldSpec(d=16, k=16, C=3, n_ood_clusters=4, vocab_size=10, n_id=80,
                                 n_ood_per_cluster=30, seed=5))
    s = build_stream(StreamPlan("temporal_shift", (40, 100)), w.pools, Rng(0))
    phases = [it.phase for it in s]
    assert phases == sorted(phases) and set(phases) == {0, 1, 2, 3}
    seen = {}
    for it in s:
        if it.truth == "OOD":
            seen.setdefault(it.phase, set()).add(it.sample_id.split("-")[1])
    clusters = list(seen.values())
    assert all(len(c) == 1 for c in clusters)
    assert len(set().union(*clusters)) == 4
    with pytest.raises(NegStreamError):
        build_stream(StreamPlan("temporal_shift", (40, 100), [[0, 1], [1, 2]]), w.pools, Rng(0))


def test_stream_replay(small_world):
    a = build_stream(StreamPlan("random", (20, 20)), small_world.pools, Rng(4))
    b = build_stream(StreamPlan("random", (20, 20)), small_world.pools, Rng(4))
    assert [it.sample_id for it in a] == [it.sample_id for it in b]


def test_invalid_spec():
    with pytest.raises(NegStreamError):
        WorldSpec(hard_id_fraction=1.5)
    with pytest.raises(NegStreamError):
        WorldSpec(d=1)
